"""
Reading graphical elements out of an ALTO page
==============================================

"""

# ALTO is the layout XML that OCR pipelines emit alongside the scanned
# page. We only care about two things in it: where the pictures are, and
# what the text around them says.
from platesearch import build_context, extract_elements, parse_alto_page

PAGE = b"""<?xml version="1.0" encoding="UTF-8"?>
<alto xmlns="http://www.loc.gov/standards/alto/ns-v2#">
  <Description>
    <sourceImageInformation>
      <fileName>URN:NBN:no-nb_digibok_2016022448155_0042.jp2</fileName>
    </sourceImageInformation>
  </Description>
  <Layout>
    <Page WIDTH="1600" HEIGHT="2400">
      <PrintSpace HPOS="0" VPOS="0" WIDTH="1600" HEIGHT="2400">
        <TextBlock HPOS="120" VPOS="180" WIDTH="1300" HEIGHT="60">
          <TextLine HPOS="120" VPOS="180" WIDTH="1300" HEIGHT="48">
            <String CONTENT="Skibet" HPOS="120" VPOS="180" WIDTH="180" HEIGHT="40"/>
            <String CONTENT="under" HPOS="320" VPOS="180" WIDTH="150" HEIGHT="40"/>
            <String CONTENT="fulde" HPOS="490" VPOS="180" WIDTH="140" HEIGHT="40"/>
            <String CONTENT="seil" HPOS="650" VPOS="180" WIDTH="110" HEIGHT="40"/>
          </TextLine>
        </TextBlock>
        <Illustration HPOS="200" VPOS="300" WIDTH="1200" HEIGHT="900"/>
        <TextBlock HPOS="120" VPOS="1300" WIDTH="1300" HEIGHT="60">
          <TextLine HPOS="120" VPOS="1300" WIDTH="1300" HEIGHT="48">
            <String CONTENT="Fregatten" HPOS="120" VPOS="1300" WIDTH="220" HEIGHT="40"/>
            <String CONTENT="ved" HPOS="360" VPOS="1300" WIDTH="90" HEIGHT="40"/>
            <String CONTENT="Kristiansand" HPOS="470" VPOS="1300" WIDTH="300" HEIGHT="40"/>
          </TextLine>
        </TextBlock>
        <ComposedBlock HPOS="100" VPOS="1450" WIDTH="1400" HEIGHT="800">
          <GraphicalElement HPOS="150" VPOS="1500" WIDTH="640" HEIGHT="700"/>
          <GraphicalElement HPOS="850" VPOS="1500" WIDTH="600" HEIGHT="700"/>
        </ComposedBlock>
        <GraphicalElement HPOS="40" VPOS="2350" WIDTH="1520" HEIGHT="8"/>
      </PrintSpace>
    </Page>
  </Layout>
</alto>
"""

page = parse_alto_page(PAGE)
print(f"page {page.page_urn}")
print(f"  {page.page_width} x {page.page_height} px, {len(page.blocks)} blocks")
for block in page.blocks:
    print(f"  {block.kind.name:<10} at {block.box}")

# The thin rule at the bottom of the page came through as a
# GraphicalElement too. That is typical: printers' ornaments, rules and
# bleed-through all show up in the layout. Extraction keeps every
# graphic block and tags each one with an id built from the page URN
# and its pixel box, so the same region always gets the same id.
records = extract_elements(page)
print(f"\nextracted {len(records)} element records")
for rec in records:
    print(" ", rec.element_id)

# Each record also carries the text of the page it sat on. Downstream
# that text is what makes a picture findable by query words, since the
# pixels themselves carry no caption.
print("\ncontext text:", repr(records[0].context_text))
assert build_context(page) == records[0].context_text

# Ids are reversible, which the HTTP service relies on when it turns an
# element id back into a source-image link.
from platesearch import parse_element_id

urn, box = parse_element_id(records[0].element_id)
print(f"\nround trip: urn={urn}")
print(f"            box={box}")
assert urn == page.page_urn

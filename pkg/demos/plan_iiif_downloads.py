"""
From element records to IIIF image requests
===========================================

"""

from platesearch import (
    BoundingBox,
    GraphicalElementRecord,
    SizePolicy,
    aspect_ratio_ok,
    build_iiif_url,
    format_element_id,
    parse_iiif_url,
    plan_download,
)

# The library never downloads full page scans. IIIF image servers can
# crop and scale on their side, so each element becomes one request for
# exactly the region we want, already resized.

URN = "URN:NBN:no-nb_digibok_2010051903011_0157"


def record(left, top, width, height):
    box = BoundingBox(left, top, width, height)
    return GraphicalElementRecord(
        element_id=format_element_id(URN, box),
        page_urn=URN,
        box=box,
        context_text="",
    )


# A healthy illustration region. The planner anchors the longer side at
# the policy's max_side (512 by default) and scales the shorter side
# proportionally, rounding halves up.
req = plan_download(record(220, 340, 1200, 900))
print("region 1200x900 ->", req.size)
print(build_iiif_url(req))

# Portrait regions anchor on the height instead.
req = plan_download(record(220, 340, 600, 1500))
print("\nregion 600x1500 ->", req.size)

# A smaller thumbnail policy, for grid views.
req = plan_download(record(220, 340, 1200, 900), policy=SizePolicy(max_side=128))
print("thumbnail policy ->", req.size)

# Page furniture tends to be extremely elongated: separator rules,
# borders, marginal flourishes. Anything with an aspect ratio above 50
# is rejected before a single byte is fetched.
rule = record(40, 2350, 1520, 8)
print(f"\nrule 1520x8: aspect_ratio_ok={aspect_ratio_ok(rule.box)}")
print("plan_download ->", plan_download(rule))

# URLs parse back into structured requests, so a stored URL is as good
# as the request that produced it.
req = plan_download(record(220, 340, 1200, 900))
url = build_iiif_url(req)
parsed = parse_iiif_url(url)
assert parsed == req
print("\nparsed identifier:", parsed.identifier)
print("parsed region:    ", parsed.region)
print("parsed size:      ", parsed.size)

"""ALTO-XML layout parsing and graphical-element extraction.

Digitisation pipelines emit one ALTO-XML file per scanned page, describing
the page as a tree of layout blocks with pixel coordinates. This module
parses those files into :class:`AltoPage` trees and flattens them into
:class:`GraphicalElementRecord` rows carrying the page URN, the bounding
box, and the page's full text as search context.

Parsing is lenient: blocks with missing or degenerate coordinates are
skipped and tallied rather than failing the page, and unknown block tags
are counted as skipped. Only malformed XML raises.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator
from xml.etree import ElementTree

logger = logging.getLogger(__name__)

# Standard ALTO calls container blocks ComposedBlock; some producers use
# CompositeBlock. Both map to BlockKind.COMPOSITE_BLOCK.
_COMPOSITE_TAGS = {"ComposedBlock", "CompositeBlock"}


class AltoParseError(Exception):
    """Malformed XML. Carries a best-effort byte offset of the failure."""

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message)
        self.offset = offset


class BlockKind(Enum):
    TEXT_BLOCK = "TextBlock"
    ILLUSTRATION = "Illustration"
    GRAPHICAL_ELEMENT = "GraphicalElement"
    COMPOSITE_BLOCK = "CompositeBlock"


@dataclass(frozen=True)
class BoundingBox:
    """Pixel rectangle; width and height are at least 1."""

    left: int
    top: int
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.left < 0 or self.top < 0:
            raise ValueError(f"negative box origin ({self.left},{self.top})")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"degenerate box {self.width}x{self.height}")


@dataclass
class LayoutBlock:
    kind: BlockKind
    box: BoundingBox
    text: str | None = None
    children: list["LayoutBlock"] = field(default_factory=list)

    def __post_init__(self) -> None:
        if (self.text is not None) != (self.kind is BlockKind.TEXT_BLOCK):
            raise ValueError("text is present iff the block is a TextBlock")
        if self.children and self.kind is not BlockKind.COMPOSITE_BLOCK:
            raise ValueError("only CompositeBlocks may have children")


@dataclass
class AltoPage:
    page_urn: str
    page_width: int
    page_height: int
    blocks: list[LayoutBlock] = field(default_factory=list)
    # Lenient-parse tallies: blocks dropped for bad coordinates, unknown
    # tags skipped, and blocks whose box exceeds the page bounds.
    block_errors: int = 0
    skipped_unknown: int = 0
    out_of_bounds: int = 0


@dataclass(frozen=True)
class GraphicalElementRecord:
    """One extracted image region, identified by its page URN and box."""

    element_id: str
    page_urn: str
    box: BoundingBox
    context_text: str


def format_element_id(page_urn: str, box: BoundingBox) -> str:
    return f"{page_urn}:{box.left},{box.top},{box.width},{box.height}"


def parse_element_id(element_id: str) -> tuple[str, BoundingBox]:
    """Split an element id back into its (page_urn, box) parts.

    Inverse of :func:`format_element_id`; the URN itself may contain colons,
    so the box is taken from the final colon-separated field.
    """
    urn, _, coords = element_id.rpartition(":")
    parts = coords.split(",")
    if not urn or len(parts) != 4:
        raise ValueError(f"not a valid element id: {element_id!r}")
    try:
        left, top, width, height = (int(p) for p in parts)
    except ValueError as exc:
        raise ValueError(f"not a valid element id: {element_id!r}") from exc
    return urn, BoundingBox(left, top, width, height)


def _local_name(tag: str) -> str:
    # ElementTree keeps namespaces as "{uri}LocalName".
    return tag.rpartition("}")[2]


def _parse_error_offset(xml_bytes: bytes, exc: ElementTree.ParseError) -> int | None:
    position = getattr(exc, "position", None)
    if not position:
        return None
    line, column = position
    offset = 0
    for _ in range(line - 1):
        nl = xml_bytes.find(b"\n", offset)
        if nl < 0:
            return None
        offset = nl + 1
    return offset + column


def _block_box(elem: ElementTree.Element) -> BoundingBox:
    values = []
    for attr in ("HPOS", "VPOS", "WIDTH", "HEIGHT"):
        raw = elem.get(attr)
        if raw is None:
            raise ValueError(f"missing {attr}")
        values.append(int(float(raw)))
    return BoundingBox(*values)


def _text_block_content(elem: ElementTree.Element) -> str:
    parts = [
        s.get("CONTENT", "")
        for s in elem.iter()
        if _local_name(s.tag) == "String" and s.get("CONTENT")
    ]
    if parts:
        return " ".join(parts)
    return (elem.text or "").strip()


def _parse_block(elem: ElementTree.Element, page: AltoPage) -> LayoutBlock | None:
    name = _local_name(elem.tag)
    if name in _COMPOSITE_TAGS:
        kind = BlockKind.COMPOSITE_BLOCK
    else:
        try:
            kind = BlockKind(name)
        except ValueError:
            page.skipped_unknown += 1
            return None
    try:
        box = _block_box(elem)
    except ValueError as exc:
        logger.warning("skipping %s block: %s", name, exc)
        page.block_errors += 1
        return None

    if kind is BlockKind.TEXT_BLOCK:
        return LayoutBlock(kind=kind, box=box, text=_text_block_content(elem))
    if kind is BlockKind.COMPOSITE_BLOCK:
        children = []
        for child in elem:
            parsed = _parse_block(child, page)
            if parsed is not None:
                children.append(parsed)
        return LayoutBlock(kind=kind, box=box, children=children)
    return LayoutBlock(kind=kind, box=box)


def parse_alto_page(xml_bytes: bytes, fallback_urn: str = "") -> AltoPage:
    """Parse one ALTO-XML page into an :class:`AltoPage`.

    Blocks appear in document order; container blocks keep their children
    nested. ``fallback_urn`` names the page when the XML itself carries no
    source file name (the usual case when files are named after URNs).
    """
    try:
        root = ElementTree.fromstring(xml_bytes)
    except ElementTree.ParseError as exc:
        raise AltoParseError(str(exc), offset=_parse_error_offset(xml_bytes, exc)) from exc

    urn = fallback_urn
    for elem in root.iter():
        if _local_name(elem.tag) == "fileName" and elem.text:
            urn = Path(elem.text.strip()).stem
            break

    page_elem = None
    for elem in root.iter():
        if _local_name(elem.tag) == "Page":
            page_elem = elem
            break
    if page_elem is None and _local_name(root.tag) == "Page":
        page_elem = root
    if page_elem is None:
        raise AltoParseError("no Page element found")

    width = int(float(page_elem.get("WIDTH", "0")))
    height = int(float(page_elem.get("HEIGHT", "0")))
    page = AltoPage(page_urn=urn, page_width=width, page_height=height)

    known = {k.value for k in BlockKind} | _COMPOSITE_TAGS
    containers = {"PrintSpace", "TopMargin", "BottomMargin", "LeftMargin", "RightMargin"}

    def walk(elem: ElementTree.Element) -> None:
        for child in elem:
            name = _local_name(child.tag)
            if name in known:
                block = _parse_block(child, page)
                if block is not None:
                    page.blocks.append(block)
            elif name in containers:
                walk(child)
            # Other page furniture (Shape, styles when misplaced, ...) is not
            # a layout block and is ignored without a tally.

    walk(page_elem)

    if page.page_width <= 0 or page.page_height <= 0:
        right = max((b.box.left + b.box.width for b in page.blocks), default=1)
        bottom = max((b.box.top + b.box.height for b in page.blocks), default=1)
        page.page_width, page.page_height = right, bottom

    def flag_bounds(block: LayoutBlock) -> None:
        if (
            block.box.left + block.box.width > page.page_width
            or block.box.top + block.box.height > page.page_height
        ):
            page.out_of_bounds += 1
        for child in block.children:
            flag_bounds(child)

    for block in page.blocks:
        flag_bounds(block)
    return page


def build_context(page: AltoPage, element: LayoutBlock | None = None) -> str:
    """Full-page textual context: every TextBlock's content in document
    order, whitespace collapsed to single spaces."""
    del element  # context is page-scoped; the element only marks provenance
    parts: list[str] = []

    def collect(blocks: Iterable[LayoutBlock]) -> None:
        for block in blocks:
            if block.kind is BlockKind.TEXT_BLOCK and block.text:
                parts.append(block.text)
            collect(block.children)

    collect(page.blocks)
    return " ".join(" ".join(parts).split())


def extract_elements(page: AltoPage) -> list[GraphicalElementRecord]:
    """One record per graphical block on the page, composites flattened.

    Both Illustration and GraphicalElement blocks are emitted; some
    producers collapse the two kinds, others do not. Exact duplicates of
    (urn, box) are dropped so element ids stay unique.
    """
    context = build_context(page)
    records: list[GraphicalElementRecord] = []
    seen: set[str] = set()

    def visit(block: LayoutBlock) -> None:
        if block.kind in (BlockKind.GRAPHICAL_ELEMENT, BlockKind.ILLUSTRATION):
            element_id = format_element_id(page.page_urn, block.box)
            if element_id in seen:
                logger.warning("duplicate element %s dropped", element_id)
            else:
                seen.add(element_id)
                records.append(
                    GraphicalElementRecord(
                        element_id=element_id,
                        page_urn=page.page_urn,
                        box=block.box,
                        context_text=context,
                    )
                )
        for child in block.children:
            visit(child)

    for block in page.blocks:
        visit(block)
    return records


@dataclass
class IngestStats:
    pages: int = 0
    elements: int = 0
    parse_errors: int = 0
    block_errors: int = 0
    skipped_unknown: int = 0


def scan_alto_dir(
    root: Path, stats: IngestStats | None = None
) -> Iterator[GraphicalElementRecord]:
    """Walk a directory tree of per-page ``.xml`` files and yield records.

    File stems stand in for the page URN when the XML lacks one. Files that
    fail to parse are tallied and skipped.
    """
    stats = stats if stats is not None else IngestStats()
    for path in sorted(Path(root).rglob("*.xml")):
        try:
            page = parse_alto_page(path.read_bytes(), fallback_urn=path.stem)
        except AltoParseError as exc:
            logger.warning("failed to parse %s: %s", path, exc)
            stats.parse_errors += 1
            continue
        stats.pages += 1
        stats.block_errors += page.block_errors
        stats.skipped_unknown += page.skipped_unknown
        for record in extract_elements(page):
            stats.elements += 1
            yield record


def write_elements_jsonl(records: Iterable[GraphicalElementRecord], path: Path) -> int:
    """Write records as UTF-8 JSONL with LF line endings; returns the count."""
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            row = {
                "element_id": rec.element_id,
                "page_urn": rec.page_urn,
                "left": rec.box.left,
                "top": rec.box.top,
                "width": rec.box.width,
                "height": rec.box.height,
                "context_text": rec.context_text,
            }
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
            count += 1
    return count


def read_elements_jsonl(path: Path) -> list[GraphicalElementRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
                records.append(
                    GraphicalElementRecord(
                        element_id=row["element_id"],
                        page_urn=row["page_urn"],
                        box=BoundingBox(row["left"], row["top"], row["width"], row["height"]),
                        context_text=row.get("context_text", ""),
                    )
                )
            except (KeyError, ValueError, json.JSONDecodeError) as exc:
                raise ValueError(f"{path}:{line_no}: bad element row: {exc}") from exc
    return records

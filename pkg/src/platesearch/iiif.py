"""IIIF Image API URL building, region fetching, and the download cache.

URLs follow the Image API 2.0 path layout
``{scheme}{prefix}{identifier}/{region}/{size}/{rotation}/{filename}`` with
the identifier kept verbatim (URN colons are not percent-encoded, matching
the endpoints this library targets). Fetching applies a shared rate limit,
bounded retries with exponential backoff for timeouts, and a disk cache of
the raw JPEG payloads keyed by element id.
"""

from __future__ import annotations

import hashlib
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import requests

from .alto import BoundingBox, GraphicalElementRecord
from .raster import DecodeError, RasterImage, decode_image, round_half_up

logger = logging.getLogger(__name__)

# Layout-detection artefacts: sliver regions at least this elongated are
# discarded before download.
MAX_ASPECT_RATIO = 50.0


class TransportError(Exception):
    """HTTP-level failure; carries the response status code."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


@dataclass(frozen=True)
class IiifRequest:
    scheme: str
    prefix: str
    identifier: str
    region: BoundingBox
    size: tuple[int, int]
    rotation: int = 0
    filename: str = "default.jpg"

    def __post_init__(self) -> None:
        if self.size[0] < 1 or self.size[1] < 1:
            raise ValueError(f"size {self.size} must be at least 1x1")
        if not 0 <= self.rotation < 360:
            raise ValueError(f"rotation {self.rotation} outside [0, 360)")


def build_iiif_url(req: IiifRequest) -> str:
    r = req.region
    return (
        f"{req.scheme}{req.prefix}{req.identifier}"
        f"/{r.left},{r.top},{r.width},{r.height}"
        f"/{req.size[0]},{req.size[1]}"
        f"/{req.rotation}/{req.filename}"
    )


def parse_iiif_url(url: str) -> IiifRequest:
    """Inverse of :func:`build_iiif_url`.

    The identifier never contains a slash, so the final five path segments
    are unambiguous: identifier/region/size/rotation/filename.
    """
    head, sep, rest = url.partition("://")
    if not sep:
        raise ValueError(f"URL without scheme: {url!r}")
    scheme = head + sep
    segments = rest.split("/")
    if len(segments) < 5:
        raise ValueError(f"not an image request URL: {url!r}")
    prefix_parts, identifier, region_s, size_s, rotation_s, filename = (
        segments[:-5],
        segments[-5],
        segments[-4],
        segments[-3],
        segments[-2],
        segments[-1],
    )
    prefix = "".join(part + "/" for part in prefix_parts)
    try:
        left, top, width, height = (int(v) for v in region_s.split(","))
        out_w, out_h = (int(v) for v in size_s.split(","))
        rotation = int(rotation_s)
    except ValueError as exc:
        raise ValueError(f"bad region/size/rotation in {url!r}") from exc
    return IiifRequest(
        scheme=scheme,
        prefix=prefix,
        identifier=identifier,
        region=BoundingBox(left, top, width, height),
        size=(out_w, out_h),
        rotation=rotation,
        filename=filename,
    )


def aspect_ratio_ok(box: BoundingBox) -> bool:
    """True when the region is compact enough to be a real image,
    i.e. max(w,h)/min(w,h) stays below the discard threshold."""
    ratio = max(box.width, box.height) / min(box.width, box.height)
    return ratio < MAX_ASPECT_RATIO


@dataclass(frozen=True)
class SizePolicy:
    """Download geometry: scale so the longer side equals ``max_side``."""

    max_side: int = 512


def plan_download(
    record: GraphicalElementRecord,
    policy: SizePolicy = SizePolicy(),
    scheme: str = "https://",
    prefix: str = "www.nb.no/services/image/resolver/",
) -> IiifRequest | None:
    """Turn an element record into a download request, or None when the
    region fails the aspect-ratio filter.

    The requested size anchors the longer side at ``policy.max_side`` and
    scales the other proportionally, rounded to the nearest pixel (half up),
    never below 1.
    """
    box = record.box
    if not aspect_ratio_ok(box):
        ratio = max(box.width, box.height) / min(box.width, box.height)
        logger.info("discarding %s: aspect ratio %.2f", record.element_id, ratio)
        return None
    longer = max(box.width, box.height)
    factor = policy.max_side / longer
    if box.width >= box.height:
        size = (policy.max_side, max(1, round_half_up(box.height * factor)))
    else:
        size = (max(1, round_half_up(box.width * factor)), policy.max_side)
    return IiifRequest(
        scheme=scheme,
        prefix=prefix,
        identifier=record.page_urn,
        region=box,
        size=size,
    )


class RateLimiter:
    """Thread-safe limiter spacing acquisitions at ``rate`` per second."""

    def __init__(self, rate: float):
        if rate <= 0:
            raise ValueError("rate must be positive")
        self._interval = 1.0 / rate
        self._lock = threading.Lock()
        self._next_free = 0.0

    def acquire(self) -> None:
        with self._lock:
            now = time.monotonic()
            wait = self._next_free - now
            self._next_free = max(self._next_free, now) + self._interval
        if wait > 0:
            time.sleep(wait)


@dataclass
class FetchConfig:
    timeout_s: float = 30.0
    max_attempts: int = 3
    backoff_base_s: float = 0.5
    # Default 10 requests/second; pass None for unthrottled (fixture servers).
    rate_limiter: RateLimiter | None = field(default_factory=lambda: RateLimiter(10.0))
    # Injection point for tests; requests.get-compatible.
    http_get: Callable = requests.get


def fetch_bytes(url: str, config: FetchConfig) -> bytes:
    """GET a URL with rate limiting and bounded retries on timeouts.

    HTTP status >= 400 raises :class:`TransportError` immediately; timeouts
    and connection failures retry with exponential backoff up to
    ``max_attempts`` total tries.
    """
    last_exc: Exception | None = None
    for attempt in range(config.max_attempts):
        if config.rate_limiter is not None:
            config.rate_limiter.acquire()
        try:
            response = config.http_get(url, timeout=config.timeout_s)
        except (requests.Timeout, requests.ConnectionError) as exc:
            last_exc = exc
            if attempt + 1 < config.max_attempts:
                delay = config.backoff_base_s * (2**attempt)
                logger.warning("retrying %s after %.1fs: %s", url, delay, exc)
                time.sleep(delay)
            continue
        if response.status_code >= 400:
            raise TransportError(
                f"GET {url} returned {response.status_code}", status=response.status_code
            )
        return response.content
    raise TransportError(f"GET {url} failed after {config.max_attempts} attempts: {last_exc}")


def fetch_image(req: IiifRequest, config: FetchConfig | None = None) -> RasterImage:
    """Fetch and decode one image region."""
    payload = fetch_bytes(build_iiif_url(req), config if config is not None else FetchConfig())
    return decode_image(payload)


class ImageCache:
    """Disk cache of fetched JPEG payloads, keyed by element id."""

    def __init__(self, root: Path):
        self.root = Path(root)

    def path_for(self, element_id: str) -> Path:
        digest = hashlib.sha256(element_id.encode("utf-8")).hexdigest()
        return self.root / digest[:2] / f"{digest}.jpg"

    def has(self, element_id: str) -> bool:
        return self.path_for(element_id).exists()

    def get(self, element_id: str) -> bytes | None:
        path = self.path_for(element_id)
        if not path.exists():
            return None
        return path.read_bytes()

    def put(self, element_id: str, payload: bytes) -> Path:
        path = self.path_for(element_id)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(payload)
        return path


@dataclass
class FetchReport:
    total: int = 0
    fetched: int = 0
    cached: int = 0
    discarded: int = 0
    errors: int = 0
    error_ids: list[str] = field(default_factory=list)


def fetch_elements(
    records: Sequence[GraphicalElementRecord],
    cache: ImageCache,
    policy: SizePolicy = SizePolicy(),
    config: FetchConfig | None = None,
    scheme: str = "https://",
    prefix: str = "www.nb.no/services/image/resolver/",
    jobs: int = 4,
) -> FetchReport:
    """Plan and download every record's region into the cache.

    Elements failing the aspect-ratio filter are discarded (and logged with
    their ratio); warm cache entries are not re-fetched. The report counts
    always satisfy discarded + cached + fetched + errors == total.
    """
    if config is None:
        config = FetchConfig()
    report = FetchReport(total=len(records))
    to_fetch: list[tuple[GraphicalElementRecord, IiifRequest]] = []
    for record in records:
        req = plan_download(record, policy, scheme=scheme, prefix=prefix)
        if req is None:
            report.discarded += 1
        elif cache.has(record.element_id):
            report.cached += 1
        else:
            to_fetch.append((record, req))

    def download(item: tuple[GraphicalElementRecord, IiifRequest]) -> tuple[str, Exception | None]:
        record, req = item
        try:
            payload = fetch_bytes(build_iiif_url(req), config)
            decode_image(payload)  # reject undecodable payloads before caching
            cache.put(record.element_id, payload)
            return record.element_id, None
        except (TransportError, DecodeError) as exc:
            return record.element_id, exc

    if to_fetch:
        with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
            for element_id, exc in pool.map(download, to_fetch):
                if exc is None:
                    report.fetched += 1
                else:
                    logger.warning("fetch failed for %s: %s", element_id, exc)
                    report.errors += 1
                    report.error_ids.append(element_id)
    return report


def split_endpoint(endpoint: str) -> tuple[str, str]:
    """Split an endpoint URL like ``https://host/path/`` into the
    (scheme, prefix) pair used by :class:`IiifRequest`."""
    head, sep, rest = endpoint.partition("://")
    if not sep:
        raise ValueError(f"endpoint must include a scheme: {endpoint!r}")
    if not rest.endswith("/"):
        rest += "/"
    return head + sep, rest

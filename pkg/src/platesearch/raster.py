"""In-memory RGB raster images and codec helpers.

The rest of the library passes images around as :class:`RasterImage`, a thin
wrapper over a row-major ``(height, width, 3)`` uint8 numpy array. Decoding,
encoding, resizing and rotation go through Pillow; cropping and sampling
semantics live with the callers that define them.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError


class DecodeError(Exception):
    """Payload could not be decoded into an RGB image."""


@dataclass(frozen=True)
class RasterImage:
    """8-bit RGB image; ``pixels`` has shape (height, width, 3)."""

    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self) -> None:
        if self.pixels.shape != (self.height, self.width, 3):
            raise ValueError(
                f"pixel buffer shape {self.pixels.shape} does not match "
                f"{self.height}x{self.width}x3"
            )
        if self.pixels.dtype != np.uint8:
            raise ValueError(f"pixels must be uint8, got {self.pixels.dtype}")

    @classmethod
    def from_array(cls, pixels: np.ndarray) -> "RasterImage":
        arr = np.ascontiguousarray(pixels, dtype=np.uint8)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"expected (h, w, 3) array, got shape {arr.shape}")
        return cls(width=arr.shape[1], height=arr.shape[0], pixels=arr)

    @classmethod
    def filled(cls, width: int, height: int, rgb: tuple[int, int, int]) -> "RasterImage":
        arr = np.empty((height, width, 3), dtype=np.uint8)
        arr[:, :] = rgb
        return cls(width=width, height=height, pixels=arr)

    def to_pil(self) -> Image.Image:
        return Image.fromarray(self.pixels, mode="RGB")

    @classmethod
    def from_pil(cls, img: Image.Image) -> "RasterImage":
        if img.mode != "RGB":
            img = img.convert("RGB")
        return cls.from_array(np.asarray(img))


def decode_image(payload: bytes) -> RasterImage:
    """Decode an encoded image (JPEG, PNG, ...) into an RGB raster.

    Raises :class:`DecodeError` on undecodable or truncated payloads.
    """
    try:
        with Image.open(io.BytesIO(payload)) as img:
            img.load()
            return RasterImage.from_pil(img)
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise DecodeError(f"cannot decode image payload: {exc}") from exc


def encode_jpeg(img: RasterImage, quality: int = 90) -> bytes:
    buf = io.BytesIO()
    img.to_pil().save(buf, format="JPEG", quality=quality)
    return buf.getvalue()


def encode_png(img: RasterImage) -> bytes:
    buf = io.BytesIO()
    img.to_pil().save(buf, format="PNG")
    return buf.getvalue()


def resize_bilinear(img: RasterImage, width: int, height: int) -> RasterImage:
    """Bilinear resize; exact no-op when the target equals the source size."""
    if width < 1 or height < 1:
        raise ValueError(f"target size {width}x{height} must be at least 1x1")
    if (width, height) == (img.width, img.height):
        return img
    resized = img.to_pil().resize((width, height), Image.BILINEAR)
    return RasterImage.from_pil(resized)


def rotate_bilinear(
    img: RasterImage,
    degrees: float,
    fill: tuple[int, int, int] = (255, 255, 255),
) -> RasterImage:
    """Counterclockwise rotation with bilinear sampling, canvas expanded to
    hold the rotated extent and corners filled with ``fill``. Zero degrees
    is an exact no-op."""
    if degrees == 0.0:
        return img
    rotated = img.to_pil().rotate(
        degrees, resample=Image.BILINEAR, expand=True, fillcolor=fill
    )
    return RasterImage.from_pil(rotated)


def round_half_up(value: float) -> int:
    """Round to the nearest integer with halves going up (2.5 -> 3)."""
    return int(value + 0.5)

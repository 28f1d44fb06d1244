"""Image-space bookkeeping: square padding, normalized-to-pixel mapping,
and the crop/zoom path that turns a normalized box into a model-resolution
raster. All operations are deterministic and bit-exact for fixed inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .roi import RoiBox

DEFAULT_RESOLUTION = 336
DEFAULT_FILL = 0


@dataclass(frozen=True, eq=False)
class Raster:
    """8-bit row-major image; pixels has shape (height, width, channels)."""

    width: int
    height: int
    channels: int
    pixels: np.ndarray

    def __post_init__(self):
        if self.channels not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {self.channels}")
        if self.pixels.shape != (self.height, self.width, self.channels):
            raise ValueError(
                f"pixel buffer shape {self.pixels.shape} != "
                f"({self.height}, {self.width}, {self.channels})"
            )
        if self.pixels.dtype != np.uint8:
            raise ValueError(f"pixels must be uint8, got {self.pixels.dtype}")

    @classmethod
    def from_array(cls, pixels: np.ndarray) -> "Raster":
        pixels = np.asarray(pixels, dtype=np.uint8)
        if pixels.ndim == 2:
            pixels = pixels[:, :, None]
        h, w, c = pixels.shape
        return cls(width=w, height=h, channels=c, pixels=np.ascontiguousarray(pixels))


@dataclass(frozen=True)
class SquareTransform:
    """Records how an image was centered on a square canvas."""

    side: int
    offset_x: int
    offset_y: int
    fill: int


@dataclass(frozen=True)
class PixelRect:
    """Half-open pixel rectangle [x0, x1) x [y0, y1)."""

    x0: int
    x1: int
    y0: int
    y1: int


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def pad_to_square(img: Raster, fill: int = DEFAULT_FILL) -> tuple[Raster, SquareTransform]:
    """Center the image on a max(w, h) square canvas filled with `fill`."""
    side = max(img.width, img.height)
    off_x = (side - img.width) // 2
    off_y = (side - img.height) // 2
    if side == img.width == img.height:
        canvas = img.pixels
    else:
        canvas = np.full((side, side, img.channels), fill, dtype=np.uint8)
        canvas[off_y : off_y + img.height, off_x : off_x + img.width] = img.pixels
    t = SquareTransform(side=side, offset_x=off_x, offset_y=off_y, fill=fill)
    return Raster.from_array(canvas), t


def normalized_to_pixels(box: RoiBox, t: SquareTransform) -> PixelRect:
    """Map a normalized box onto the padded square, half-open pixel bounds.

    Each axis keeps at least 1 px: a collapsed bound is expanded upward,
    or shifted down when already at the canvas edge.
    """
    side = t.side
    x0, x1 = _axis_bounds(box.w0, box.w1, side)
    y0, y1 = _axis_bounds(box.h0, box.h1, side)
    return PixelRect(x0=x0, x1=x1, y0=y0, y1=y1)


def _axis_bounds(lo: float, hi: float, side: int) -> tuple[int, int]:
    a = _round_half_up(lo * side)
    b = _round_half_up(hi * side)
    if b <= a:
        b = a + 1
    if b > side:
        b = side
        a = side - 1
    return a, b


def bilinear_resize(img: Raster, out_width: int, out_height: int) -> Raster:
    """Resample with half-pixel-center bilinear interpolation.

    Identity when the output size equals the input size; values are
    rounded half-up back to uint8.
    """
    if out_width < 1 or out_height < 1:
        raise ValueError("output dimensions must be >= 1")
    src = img.pixels.astype(np.float64)
    sx = (np.arange(out_width) + 0.5) * (img.width / out_width) - 0.5
    sy = (np.arange(out_height) + 0.5) * (img.height / out_height) - 0.5
    sx = np.clip(sx, 0.0, img.width - 1.0)
    sy = np.clip(sy, 0.0, img.height - 1.0)
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    x1 = np.minimum(x0 + 1, img.width - 1)
    y1 = np.minimum(y0 + 1, img.height - 1)
    fx = (sx - x0)[None, :, None]
    fy = (sy - y0)[:, None, None]
    top = src[y0[:, None], x0[None, :]] * (1.0 - fx) + src[y0[:, None], x1[None, :]] * fx
    bottom = src[y1[:, None], x0[None, :]] * (1.0 - fx) + src[y1[:, None], x1[None, :]] * fx
    out = top * (1.0 - fy) + bottom * fy
    return Raster.from_array(np.floor(out + 0.5).astype(np.uint8))


def crop_roi(
    img: Raster,
    box: RoiBox,
    resolution: int = DEFAULT_RESOLUTION,
    fill: int = DEFAULT_FILL,
) -> Raster:
    """Extract the box from the padded-square image and zoom it to
    resolution x resolution: pad, crop, re-pad the crop, bilinear resize.
    """
    if resolution < 1:
        raise ValueError(f"resolution must be >= 1, got {resolution}")
    padded, t = pad_to_square(img, fill=fill)
    rect = normalized_to_pixels(box, t)
    crop = Raster.from_array(padded.pixels[rect.y0 : rect.y1, rect.x0 : rect.x1])
    crop_sq, _ = pad_to_square(crop, fill=fill)
    return bilinear_resize(crop_sq, resolution, resolution)


# --- raster file I/O ------------------------------------------------------
# PPM (P6) and PGM (P5) are written byte-for-byte reproducibly and used by
# the test fixtures; PNG goes through Pillow for real corpora.


def write_pnm(img: Raster, path: str | Path) -> None:
    magic = b"P6" if img.channels == 3 else b"P5"
    header = magic + b"\n%d %d\n255\n" % (img.width, img.height)
    Path(path).write_bytes(header + img.pixels.tobytes())


def read_pnm(path: str | Path) -> Raster:
    data = Path(path).read_bytes()
    magic, fields, offset = data[:2], [], 2
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"{path}: not a binary PGM/PPM file (magic {magic!r})")
    while len(fields) < 3:
        token, offset = _next_token(data, offset, path)
        fields.append(int(token))
    width, height, maxval = fields
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 supported, got {maxval}")
    channels = 3 if magic == b"P6" else 1
    expected = width * height * channels
    payload = data[offset : offset + expected]
    if len(payload) != expected:
        raise ValueError(f"{path}: truncated pixel data ({len(payload)} of {expected} bytes)")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels)
    return Raster(width=width, height=height, channels=channels, pixels=pixels.copy())


def _next_token(data: bytes, offset: int, path) -> tuple[bytes, int]:
    while offset < len(data):
        c = data[offset : offset + 1]
        if c == b"#":  # comment runs to end of line
            while offset < len(data) and data[offset : offset + 1] != b"\n":
                offset += 1
        elif c.isspace():
            offset += 1
        else:
            break
    start = offset
    while offset < len(data) and not data[offset : offset + 1].isspace():
        offset += 1
    if start == offset:
        raise ValueError(f"{path}: malformed PNM header")
    return data[start:offset], offset + 1


def read_image(path: str | Path) -> Raster:
    """Load a raster by extension: .ppm/.pgm bit-exact, .png via Pillow."""
    path = Path(path)
    if path.suffix.lower() in (".ppm", ".pgm"):
        return read_pnm(path)
    from PIL import Image

    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        return Raster.from_array(np.asarray(im))


def write_image(img: Raster, path: str | Path) -> None:
    path = Path(path)
    if path.suffix.lower() in (".ppm", ".pgm"):
        write_pnm(img, path)
        return
    from PIL import Image

    arr = img.pixels[:, :, 0] if img.channels == 1 else img.pixels
    Image.fromarray(arr).save(path)

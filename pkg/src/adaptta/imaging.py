"""Image values, PPM (P6) codec, and the deterministic geometry behind crop policies.

Everything here is a pure function over immutable values: images are frozen
dataclasses wrapping raw RGB bytes, and every transform returns a new image.
Resizing is bilinear with pixel-center sampling and half-to-even rounding so
results are bit-reproducible across runs and platforms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CHANNELS = 3

_WHITESPACE = b" \t\n\r\x0b\x0c"


class PpmError(ValueError):
    """Raised for malformed or unsupported PPM input."""


@dataclass(frozen=True)
class Image:
    """8-bit RGB raster, row-major interleaved samples."""

    width: int
    height: int
    data: bytes

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image dimensions must be positive, got {self.width}x{self.height}")
        expected = self.width * self.height * CHANNELS
        if len(self.data) != expected:
            raise ValueError(
                f"data length {len(self.data)} does not match "
                f"{self.width}x{self.height}x{CHANNELS} = {expected}"
            )

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "Image":
        """Build an image from an HxWx3 uint8 array."""
        if arr.ndim != 3 or arr.shape[2] != CHANNELS:
            raise ValueError(f"expected HxWx{CHANNELS} array, got shape {arr.shape}")
        if arr.dtype != np.uint8:
            raise ValueError(f"expected uint8 array, got {arr.dtype}")
        h, w = arr.shape[:2]
        return cls(width=w, height=h, data=np.ascontiguousarray(arr).tobytes())

    def to_array(self) -> np.ndarray:
        """Read-only HxWx3 uint8 view of the pixel data."""
        arr = np.frombuffer(self.data, dtype=np.uint8)
        return arr.reshape(self.height, self.width, CHANNELS)


@dataclass(frozen=True)
class ViewSpec:
    """One augmented view: a crop rectangle plus an optional horizontal flip."""

    crop_x: int
    crop_y: int
    crop_w: int
    crop_h: int
    hflip: bool = False

    def __post_init__(self) -> None:
        if self.crop_w < 1 or self.crop_h < 1:
            raise ValueError(f"crop size must be positive, got {self.crop_w}x{self.crop_h}")
        if self.crop_x < 0 or self.crop_y < 0:
            raise ValueError(f"crop offset must be non-negative, got ({self.crop_x},{self.crop_y})")


@dataclass(frozen=True)
class TransformPolicy:
    """Ordered set of views applied to a square source image.

    ``source_side`` is the size the source is normalized to before cropping;
    ``view_side`` is the size of each extracted view. The reserved names
    "5C" and "10C" carry structural guarantees checked at construction.
    """

    name: str
    views: tuple[ViewSpec, ...]
    source_side: int
    view_side: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "views", tuple(self.views))
        if not self.views:
            raise ValueError("policy must contain at least one view")
        if self.source_side < 1 or self.view_side < 1:
            raise ValueError("source_side and view_side must be positive")
        for v in self.views:
            if v.crop_x + v.crop_w > self.source_side or v.crop_y + v.crop_h > self.source_side:
                raise ValueError(f"view {v} exceeds {self.source_side}x{self.source_side} source")
        if self.name == "5C":
            if len(self.views) != 5 or any(v.hflip for v in self.views):
                raise ValueError('"5C" requires exactly 5 unflipped views')
        elif self.name == "10C":
            ok = len(self.views) == 10 and all(
                self.views[i + 5] == _flipped(self.views[i]) for i in range(5)
            ) and not any(v.hflip for v in self.views[:5])
            if not ok:
                raise ValueError('"10C" requires 5 unflipped views followed by their flips')

    @property
    def num_views(self) -> int:
        return len(self.views)

    @property
    def num_flips(self) -> int:
        return sum(1 for v in self.views if v.hflip)


def _flipped(spec: ViewSpec) -> ViewSpec:
    return ViewSpec(spec.crop_x, spec.crop_y, spec.crop_w, spec.crop_h, hflip=True)


def make_policy(name: str, source_side: int = 256, view_side: int = 224) -> TransformPolicy:
    """Build the "5C" or "10C" crop policy.

    View order is canonical: center, top-left, top-right, bottom-left,
    bottom-right, then (for "10C") the same five with a horizontal flip.
    The center crop equals the single-view baseline preprocessing, which is
    why it comes first.
    """
    if name not in ("5C", "10C"):
        raise ValueError(f"unknown policy {name!r} (expected '5C' or '10C')")
    if view_side > source_side:
        raise ValueError(f"view_side {view_side} exceeds source_side {source_side}")
    margin = source_side - view_side
    half = margin // 2
    offsets = [(half, half), (0, 0), (margin, 0), (0, margin), (margin, margin)]
    views = [ViewSpec(x, y, view_side, view_side) for x, y in offsets]
    if name == "10C":
        views += [_flipped(v) for v in views[:5]]
    return TransformPolicy(name=name, views=tuple(views), source_side=source_side, view_side=view_side)


# --- PPM (P6) codec ---------------------------------------------------------


def _next_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    """Scan the next header token, skipping whitespace and '#' comments."""
    n = len(buf)
    while pos < n:
        c = buf[pos : pos + 1]
        if c in _WHITESPACE:
            pos += 1
        elif c == b"#":
            while pos < n and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        else:
            break
    start = pos
    while pos < n and buf[pos : pos + 1] not in _WHITESPACE and buf[pos : pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise PpmError("malformed header: unexpected end of file")
    return buf[start:pos], pos


def _int_token(buf: bytes, pos: int, what: str) -> tuple[int, int]:
    token, pos = _next_token(buf, pos)
    if not token.isdigit():
        raise PpmError(f"malformed header: invalid {what} {token!r}")
    return int(token), pos


def decode_ppm(data: bytes) -> Image:
    """Decode a binary PPM (magic "P6", maxval 255) into an Image.

    Header comments are accepted; sample values are taken verbatim from the
    payload. Trailing bytes after the pixel data are ignored.
    """
    if data[:2] != b"P6":
        raise PpmError(f"unsupported magic {data[:2]!r} (expected b'P6')")
    if len(data) > 2 and data[2:3] not in _WHITESPACE and data[2:3] != b"#":
        raise PpmError(f"unsupported magic {data[:3]!r} (expected b'P6')")
    width, pos = _int_token(data, 2, "width")
    height, pos = _int_token(data, pos, "height")
    maxval, pos = _int_token(data, pos, "maxval")
    if width < 1 or height < 1:
        raise PpmError(f"malformed header: invalid dimensions {width}x{height}")
    if maxval != 255:
        raise PpmError(f"unsupported maxval {maxval} (only 255)")
    if pos >= len(data) or data[pos : pos + 1] not in _WHITESPACE:
        raise PpmError("malformed header: missing whitespace after maxval")
    pos += 1
    need = width * height * CHANNELS
    payload = data[pos : pos + need]
    if len(payload) < need:
        raise PpmError(f"truncated pixel data: expected {need} bytes, got {len(payload)}")
    return Image(width=width, height=height, data=payload)


def encode_ppm(img: Image) -> bytes:
    """Encode an Image as a canonical binary PPM: ``P6\\n<w> <h>\\n255\\n<data>``."""
    header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + img.data


# --- geometric transforms ---------------------------------------------------


def _axis_coords(dst: int, src: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pixel-center sample positions of one axis: low index, high index, weight."""
    pos = (np.arange(dst, dtype=np.float64) + 0.5) * (src / dst) - 0.5
    lo = np.floor(pos)
    t = pos - lo
    lo_i = np.clip(lo.astype(np.int64), 0, src - 1)
    hi_i = np.clip(lo.astype(np.int64) + 1, 0, src - 1)
    return lo_i, hi_i, t


def resize(img: Image, new_w: int, new_h: int) -> Image:
    """Bilinear resize with pixel-center sampling and half-to-even rounding.

    Border samples are edge-replicated. The interpolation is evaluated in
    float64 as ``(1-t)*a + t*b`` per axis, horizontally first, so the result
    is deterministic down to the byte.
    """
    if new_w < 1 or new_h < 1:
        raise ValueError(f"target dimensions must be positive, got {new_w}x{new_h}")
    if new_w == img.width and new_h == img.height:
        return img
    src = img.to_array().astype(np.float64)
    x0, x1, tx = _axis_coords(new_w, img.width)
    y0, y1, ty = _axis_coords(new_h, img.height)
    horiz = src[:, x0, :] * (1.0 - tx)[None, :, None] + src[:, x1, :] * tx[None, :, None]
    out = horiz[y0, :, :] * (1.0 - ty)[:, None, None] + horiz[y1, :, :] * ty[:, None, None]
    samples = np.clip(np.rint(out), 0.0, 255.0).astype(np.uint8)
    return Image.from_array(samples)


def resize_to_square(img: Image, side: int) -> Image:
    """Resize to ``side``x``side`` (anisotropic if the input is not square)."""
    return resize(img, side, side)


def crop(img: Image, spec: ViewSpec) -> Image:
    """Extract the view's rectangle; if ``hflip`` is set, reverse the columns."""
    if spec.crop_x + spec.crop_w > img.width or spec.crop_y + spec.crop_h > img.height:
        raise ValueError(
            f"crop {spec.crop_w}x{spec.crop_h}@({spec.crop_x},{spec.crop_y}) "
            f"out of bounds for {img.width}x{img.height} image"
        )
    arr = img.to_array()[
        spec.crop_y : spec.crop_y + spec.crop_h,
        spec.crop_x : spec.crop_x + spec.crop_w,
    ]
    if spec.hflip:
        arr = arr[:, ::-1]
    return Image.from_array(np.ascontiguousarray(arr))


def prepare_source(img: Image, side: int) -> Image:
    """Normalize an arbitrary image to the square ``side``x``side`` source.

    A ``side``x``side`` input passes through untouched. Otherwise the shorter
    side is resized to ``side`` (the longer side scales proportionally,
    rounded half-to-even) and the result is center-cropped to square.
    """
    if img.width == side and img.height == side:
        return img
    if img.width <= img.height:
        new_w = side
        new_h = max(side, round(img.height * side / img.width))
    else:
        new_h = side
        new_w = max(side, round(img.width * side / img.height))
    resized = resize(img, new_w, new_h)
    off_x = (new_w - side) // 2
    off_y = (new_h - side) // 2
    return crop(resized, ViewSpec(off_x, off_y, side, side))


def policy_views(img: Image, policy: TransformPolicy):
    """Lazily yield the policy's views of ``img`` in canonical order."""
    src = prepare_source(img, policy.source_side)
    for spec in policy.views:
        yield crop(src, spec)

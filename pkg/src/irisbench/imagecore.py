"""8-bit grayscale image container, PGM I/O, and the filtering primitives
used by segmentation and by the print-attack enhancement chains.

All operations are pure: they never mutate their input image and are safe
to call concurrently. Edge handling is clamp-to-border throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import PipelineError


class MalformedHeader(PipelineError):
    """PGM payload does not start with a valid binary (P5) header."""


class TruncatedData(PipelineError):
    """PGM pixel payload is shorter than width*height samples."""


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Immutable 8-bit luminance raster, row-major, 0 = black, 255 = white."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2:
            raise ValueError("pixels must be a 2-D (height x width) array")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        if px.dtype != np.uint8:
            raise ValueError(f"pixels must be uint8, got {px.dtype}")
        px = np.array(px, dtype=np.uint8, order="C")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @classmethod
    def from_float(cls, arr: np.ndarray) -> "GrayImage":
        """Round and clip a float array into a valid 8-bit image."""
        return cls(np.clip(np.rint(arr), 0, 255).astype(np.uint8))

    def __eq__(self, other) -> bool:
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(
            np.array_equal(self.pixels, other.pixels)
        )

    def __hash__(self):
        return hash((self.pixels.shape, self.pixels.tobytes()))


@dataclass(frozen=True)
class StructuringElement:
    """Flat morphology footprint, symmetric about its center."""

    shape: str = "disk"  # "disk" | "square"
    radius: int = 3

    def __post_init__(self):
        if self.shape not in ("disk", "square"):
            raise ValueError(f"unknown structuring element shape: {self.shape!r}")
        if self.radius < 1:
            raise ValueError("structuring element radius must be >= 1")

    def footprint(self) -> np.ndarray:
        """Boolean (2r+1) x (2r+1) footprint."""
        r = self.radius
        if self.shape == "square":
            return np.ones((2 * r + 1, 2 * r + 1), dtype=bool)
        d = np.arange(-r, r + 1)
        dy, dx = np.meshgrid(d, d, indexing="ij")
        return dy * dy + dx * dx <= r * r


# ---------------------------------------------------------------------------
# PGM (binary P5) I/O
# ---------------------------------------------------------------------------


def _next_token(data: bytes, pos: int) -> tuple[bytes, int]:
    """Read the next whitespace-delimited header token, skipping # comments."""
    n = len(data)
    while pos < n:
        c = data[pos : pos + 1]
        if c == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise MalformedHeader("unexpected end of PGM header")
    return data[start:pos], pos


def load_pgm(data: bytes) -> GrayImage:
    """Decode a binary PGM (magic P5) byte sequence.

    Images with maxval != 255 are linearly rescaled to [0, 255].
    Raises MalformedHeader for bad magic/dimensions, TruncatedData when the
    pixel payload is short.
    """
    if data[:2] != b"P5":
        raise MalformedHeader("not a binary PGM: magic is not P5")
    pos = 2
    try:
        fields = []
        for _ in range(3):
            tok, pos = _next_token(data, pos)
            fields.append(int(tok))
    except ValueError as exc:
        raise MalformedHeader(f"non-numeric PGM header field: {exc}") from None
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise MalformedHeader(f"bad PGM dimensions {width}x{height}")
    if not 1 <= maxval <= 65535:
        raise MalformedHeader(f"bad PGM maxval {maxval}")
    pos += 1  # single whitespace byte separates header from raster
    n = width * height
    if maxval > 255:
        raw = data[pos : pos + 2 * n]
        if len(raw) < 2 * n:
            raise TruncatedData(f"expected {2 * n} payload bytes, got {len(raw)}")
        samples = np.frombuffer(raw, dtype=">u2").astype(np.int64)
    else:
        raw = data[pos : pos + n]
        if len(raw) < n:
            raise TruncatedData(f"expected {n} payload bytes, got {len(raw)}")
        samples = np.frombuffer(raw, dtype=np.uint8).astype(np.int64)
    if maxval != 255:
        samples = (samples * 255 + maxval // 2) // maxval
    return GrayImage(samples.reshape(height, width).astype(np.uint8))


def save_pgm(img: GrayImage) -> bytes:
    """Encode as binary PGM. load_pgm(save_pgm(img)) == img, bit-exact."""
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + img.pixels.tobytes()


# ---------------------------------------------------------------------------
# Point and neighborhood filters
# ---------------------------------------------------------------------------


def histogram_equalize(img: GrayImage) -> GrayImage:
    """Global histogram equalization via CDF remapping.

    Level 0 stays pinned to black: lut(v) = floor(255*(cdf(v)-cdf(0)) / (N-cdf(0))).
    Single-level images are returned unchanged (the remap would divide by zero).
    """
    px = img.pixels
    hist = np.bincount(px.ravel(), minlength=256)
    if np.count_nonzero(hist) <= 1:
        return GrayImage(px)
    cdf = np.cumsum(hist, dtype=np.int64)
    base = int(cdf[0])
    lut = ((cdf - base) * 255 // (px.size - base)).astype(np.uint8)
    return GrayImage(lut[px])


def median_filter(img: GrayImage, radius: int) -> GrayImage:
    """Median over the (2r+1)^2 window, clamp-to-border sampling."""
    if radius < 1:
        raise ValueError("median filter radius must be >= 1")
    out = ndimage.median_filter(img.pixels, size=2 * radius + 1, mode="nearest")
    return GrayImage(out)


def morph(img: GrayImage, se: StructuringElement, op: str) -> GrayImage:
    """Flat grayscale morphology: erode | dilate | open | close.

    open = dilate(erode(img)), close = erode(dilate(img)); window min/max
    over the SE footprint with clamp-to-border sampling.
    """
    fp = se.footprint()
    px = img.pixels

    def _erode(a):
        return ndimage.grey_erosion(a, footprint=fp, mode="nearest")

    def _dilate(a):
        return ndimage.grey_dilation(a, footprint=fp, mode="nearest")

    if op == "erode":
        out = _erode(px)
    elif op == "dilate":
        out = _dilate(px)
    elif op == "open":
        out = _dilate(_erode(px))
    elif op == "close":
        out = _erode(_dilate(px))
    else:
        raise ValueError(f"unknown morphology op: {op!r}")
    return GrayImage(out)


def top_hat(img: GrayImage, se: StructuringElement) -> GrayImage:
    """White top-hat: img - open(img, se), saturating at 0."""
    opened = morph(img, se, "open").pixels.astype(np.int16)
    diff = img.pixels.astype(np.int16) - opened
    return GrayImage(np.clip(diff, 0, 255).astype(np.uint8))


def gaussian_blur(img: GrayImage, sigma: float) -> GrayImage:
    """Separable Gaussian convolution, kernel truncated at +-3 sigma and
    normalized to unit sum; clamp-to-border."""
    if sigma <= 0:
        raise ValueError("gaussian sigma must be > 0")
    out = ndimage.gaussian_filter(
        img.pixels.astype(np.float64), sigma=sigma, truncate=3.0, mode="nearest"
    )
    return GrayImage.from_float(out)


# ---------------------------------------------------------------------------
# Canny edge detection
# ---------------------------------------------------------------------------


def canny_edges(
    img: GrayImage, sigma: float = 2.0, low: float = 0.2, high: float = 0.5
) -> GrayImage:
    """Canny detector: Gaussian prefilter, Sobel gradient, non-maximum
    suppression, hysteresis. Thresholds are fractions of the max gradient
    magnitude; output pixels are 0 or 255 only.
    """
    if not (0 < low < high <= 1):
        raise ValueError("thresholds must satisfy 0 < low < high <= 1")
    sm = ndimage.gaussian_filter(
        img.pixels.astype(np.float64), sigma=sigma, truncate=3.0, mode="nearest"
    )
    gx = ndimage.sobel(sm, axis=1, mode="nearest")
    gy = ndimage.sobel(sm, axis=0, mode="nearest")
    mag = np.hypot(gx, gy)
    gmax = mag.max()
    if gmax == 0:
        return GrayImage(np.zeros_like(img.pixels))

    # Non-maximum suppression with gradient direction quantized to 4 sectors.
    # Keep a pixel when it is >= the neighbor behind and > the neighbor ahead,
    # so a 2-wide plateau thins to a single pixel.
    padded = np.pad(mag, 1, mode="edge")
    angle = np.mod(np.arctan2(gy, gx), np.pi)
    sector = np.floor((angle + np.pi / 8) / (np.pi / 4)).astype(np.int64) % 4
    offsets = {0: (0, 1), 1: (1, 1), 2: (1, 0), 3: (1, -1)}  # E, SE, S, SW
    keep = np.zeros_like(mag, dtype=bool)
    for s, (dy, dx) in offsets.items():
        ahead = padded[1 + dy : 1 + dy + mag.shape[0], 1 + dx : 1 + dx + mag.shape[1]]
        behind = padded[1 - dy : 1 - dy + mag.shape[0], 1 - dx : 1 - dx + mag.shape[1]]
        keep |= (sector == s) & (mag >= behind) & (mag > ahead)

    nms = np.where(keep, mag, 0.0)
    weak = nms >= low * gmax
    strong = nms >= high * gmax
    if not strong.any():
        return GrayImage(np.zeros_like(img.pixels))
    labels, _ = ndimage.label(weak, structure=np.ones((3, 3), dtype=int))
    good = np.unique(labels[strong])
    out = np.isin(labels, good[good > 0])
    return GrayImage(np.where(out, 255, 0).astype(np.uint8))

"""Rubber-sheet unwrapping of the segmented iris annulus into a fixed
R x A angular-radial sample grid referenced to the pupil center, with a
per-sample validity mask for eyelid occlusion and out-of-bounds reads.

Angle origin is the positive x axis, increasing toward positive y (downward
in image coordinates); sample j covers angle 2*pi*j/A.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PipelineError
from .imagecore import GrayImage
from .segmentation import SegmentationResult


class DegenerateGeometry(PipelineError):
    """Ray-circle intersection failed (pupil center outside the iris)."""


@dataclass(frozen=True, eq=False)
class NormalizedPattern:
    """Unwrapped iris pattern: samples[R, A] in [0, 255] and mask[R, A]
    (True = invalid/occluded sample)."""

    samples: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        m = np.asarray(self.mask, dtype=bool)
        if s.ndim != 2 or s.shape != m.shape:
            raise ValueError("samples and mask must share one R x A shape")
        valid = s[~m]
        if valid.size and (valid.min() < 0 or valid.max() > 255):
            raise ValueError("unmasked samples must lie in [0, 255]")
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "mask", m)

    @property
    def radial_res(self) -> int:
        return self.samples.shape[0]

    @property
    def angular_res(self) -> int:
        return self.samples.shape[1]


def boundary_distance(seg: SegmentationResult, theta: np.ndarray) -> np.ndarray:
    """Distance from the pupil center to the iris boundary along each angle.

    For offset centers this is the ray-circle intersection
    d = o.u + sqrt((o.u)^2 - |o|^2 + r^2) with o the center offset and u the
    ray direction.
    """
    ox = seg.iris.cx - seg.pupil.cx
    oy = seg.iris.cy - seg.pupil.cy
    ou = ox * np.cos(theta) + oy * np.sin(theta)
    disc = ou * ou - (ox * ox + oy * oy) + seg.iris.r**2
    if np.any(disc < 0):
        raise DegenerateGeometry("pupil reference point lies outside the iris circle")
    return ou + np.sqrt(disc)


def normalize(
    img: GrayImage, seg: SegmentationResult, radial_res: int = 20, angular_res: int = 240
) -> NormalizedPattern:
    """Sample the iris annulus on an R x A polar grid with bilinear
    interpolation.

    Radial sampling runs from pupil.r + 0.5 to the iris boundary - 0.5 along
    each ray. Samples are masked when they fall outside the image or inside
    an eyelid's occluded half-plane.
    """
    if radial_res < 2:
        raise ValueError("radial_res must be >= 2")
    if angular_res < 8:
        raise ValueError("angular_res must be >= 8")

    theta = 2.0 * np.pi * np.arange(angular_res) / angular_res
    d_outer = boundary_distance(seg, theta) - 0.5
    d_inner = np.full(angular_res, seg.pupil.r + 0.5)
    frac = np.linspace(0.0, 1.0, radial_res)[:, None]
    radii = d_inner[None, :] + frac * (d_outer - d_inner)[None, :]

    x = seg.pupil.cx + radii * np.cos(theta)[None, :]
    y = seg.pupil.cy + radii * np.sin(theta)[None, :]

    h, w = img.height, img.width
    in_bounds = (x >= 0) & (x <= w - 1) & (y >= 0) & (y <= h - 1)

    # Bilinear interpolation; anchor cells are clamped so the 2x2 neighborhood
    # never reads outside the raster even at the far border.
    x0 = np.clip(np.floor(x).astype(np.int64), 0, max(w - 2, 0))
    y0 = np.clip(np.floor(y).astype(np.int64), 0, max(h - 2, 0))
    x0c = np.clip(x0, 0, w - 1)
    y0c = np.clip(y0, 0, h - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    fx = np.clip(x - x0, 0.0, 1.0)
    fy = np.clip(y - y0, 0.0, 1.0)
    px = img.pixels.astype(np.float64)
    top = px[y0c, x0c] * (1 - fx) + px[y0c, x1c] * fx
    bot = px[y1c, x0c] * (1 - fx) + px[y1c, x1c] * fx
    samples = top * (1 - fy) + bot * fy

    mask = ~in_bounds
    for line in (seg.upper_eyelid, seg.lower_eyelid):
        if line is not None:
            mask |= line.occludes(x, y)
    samples = np.where(mask, 0.0, samples)
    return NormalizedPattern(samples=samples, mask=mask)


def pattern_to_pgm_arrays(pattern: NormalizedPattern) -> tuple[GrayImage, GrayImage]:
    """Debug export: (samples rounded to 8-bit, mask with white = occluded)."""
    img = GrayImage.from_float(pattern.samples)
    mask = GrayImage(np.where(pattern.mask, 255, 0).astype(np.uint8))
    return img, mask

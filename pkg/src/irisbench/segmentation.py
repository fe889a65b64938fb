"""Pupil/iris boundary localization via circular Hough transform and eyelid
line detection via linear Hough transform.

Accumulators use exact integer votes on a 1 px grid (cx, cy, r; theta at 1
degree, rho at 1 px) so detection is deterministic, with documented
tie-breaking: circles prefer smallest r, then cy, then cx; lines prefer
smallest theta, then rho.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import PipelineError
from .imagecore import GrayImage, canny_edges


class NoCircleFound(PipelineError):
    """No accumulator peak reached the minimum vote fraction."""


class NoLineFound(PipelineError):
    """No line accumulated the required votes inside the search region."""


class SegmentationFailure(PipelineError):
    """Eye could not be segmented; counted as 'not segmented' in evaluation."""


@dataclass(frozen=True)
class Circle:
    cx: int
    cy: int
    r: int

    def __post_init__(self):
        if self.r <= 0:
            raise ValueError("circle radius must be > 0")

    def contains_point(self, x: float, y: float) -> bool:
        """Strict interior test."""
        return (x - self.cx) ** 2 + (y - self.cy) ** 2 < self.r**2


@dataclass(frozen=True)
class EyelidLine:
    """Line a*x + b*y = c with a^2 + b^2 = 1; `side` names the occluded
    half-plane ("above" = smaller y for b > 0)."""

    a: float
    b: float
    c: float
    side: str  # "above" | "below"

    def __post_init__(self):
        if self.side not in ("above", "below"):
            raise ValueError(f"bad eyelid side: {self.side!r}")
        norm = np.hypot(self.a, self.b)
        if norm == 0:
            raise ValueError("line normal must be nonzero")
        if abs(norm - 1.0) > 1e-9:
            object.__setattr__(self, "a", self.a / norm)
            object.__setattr__(self, "b", self.b / norm)
            object.__setattr__(self, "c", self.c / norm)

    def occludes(self, x, y):
        """True where (x, y) lies in the occluded half-plane (boundary included)."""
        v = self.a * x + self.b * y - self.c
        return v <= 0 if self.side == "above" else v >= 0


@dataclass(frozen=True)
class SegmentationResult:
    pupil: Circle
    iris: Circle
    upper_eyelid: EyelidLine | None = None
    lower_eyelid: EyelidLine | None = None

    def __post_init__(self):
        d2 = (self.pupil.cx - self.iris.cx) ** 2 + (self.pupil.cy - self.iris.cy) ** 2
        if d2 >= self.iris.r**2:
            raise ValueError("pupil center must lie strictly inside the iris circle")
        if self.pupil.r >= self.iris.r:
            raise ValueError("pupil radius must be smaller than iris radius")


@dataclass(frozen=True)
class SegmentationConfig:
    canny_sigma: float = 2.0
    canny_low: float = 0.2
    canny_high: float = 0.5
    pupil_r_min: int = 20
    pupil_r_max: int = 70
    iris_r_min: int = 60
    iris_r_max: int = 150
    min_peak: float = 0.35
    min_line_frac: float = 0.5  # of eyelid search region width

    def __post_init__(self):
        if not (3 <= self.pupil_r_min < self.pupil_r_max):
            raise ValueError("need 3 <= pupil_r_min < pupil_r_max")
        if not (3 <= self.iris_r_min < self.iris_r_max):
            raise ValueError("need 3 <= iris_r_min < iris_r_max")
        if not (0 < self.min_peak <= 1):
            raise ValueError("min_peak must be in (0, 1]")
        if not (0 < self.canny_low < self.canny_high <= 1):
            raise ValueError("need 0 < canny_low < canny_high <= 1")


# ---------------------------------------------------------------------------
# Circle rasterization (shared by voting kernels, tests, and overlays)
# ---------------------------------------------------------------------------

_SHELL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def circle_shell(r: int) -> tuple[np.ndarray, np.ndarray]:
    """Integer offsets (dy, dx) whose rounded distance from the origin is r."""
    got = _SHELL_CACHE.get(r)
    if got is None:
        d = np.arange(-r, r + 1)
        dy, dx = np.meshgrid(d, d, indexing="ij")
        m = np.abs(np.hypot(dy, dx) - r) <= 0.5
        got = (dy[m].astype(np.int64), dx[m].astype(np.int64))
        _SHELL_CACHE[r] = got
    return got


def render_circle(shape: tuple[int, int], circle: Circle) -> np.ndarray:
    """Rasterize a circle perimeter into a boolean mask, clipped to shape."""
    h, w = shape
    dy, dx = circle_shell(circle.r)
    ys, xs = circle.cy + dy, circle.cx + dx
    keep = (ys >= 0) & (ys < h) & (xs >= 0) & (xs < w)
    mask = np.zeros(shape, dtype=bool)
    mask[ys[keep], xs[keep]] = True
    return mask


@njit(cache=True)
def _scatter_votes(base: np.ndarray, offsets: np.ndarray, acc: np.ndarray) -> None:
    for i in range(base.size):
        b = base[i]
        for k in range(offsets.size):
            acc[b + offsets[k]] += 1


def _edge_points(edges: GrayImage) -> tuple[np.ndarray, np.ndarray]:
    px = edges.pixels
    vals = np.unique(px)
    if not set(vals.tolist()) <= {0, 255}:
        raise ValueError("edge map must contain only {0, 255}")
    ys, xs = np.nonzero(px)
    return ys.astype(np.int64), xs.astype(np.int64)


def hough_circle(
    edges: GrayImage,
    r_min: int,
    r_max: int,
    min_peak: float = 0.35,
    center_within: Circle | None = None,
) -> tuple[Circle, float]:
    """Best circle over the (cx, cy, r) grid by vote fraction.

    peak_score is votes at the peak divided by the circumference pixel count
    of that radius. Centers may optionally be restricted to the strict
    interior of `center_within`.
    """
    if r_min < 3 or r_max <= r_min:
        raise ValueError("need 3 <= r_min < r_max")
    h, w = edges.height, edges.width
    ys, xs = _edge_points(edges)

    center_mask = None
    if center_within is not None:
        cy, cx = np.mgrid[0:h, 0:w]
        center_mask = (cx - center_within.cx) ** 2 + (
            cy - center_within.cy
        ) ** 2 < center_within.r**2

    best = None  # (votes, count, r, cy, cx)
    if ys.size:
        for r in range(r_min, r_max + 1):
            dy, dx = circle_shell(r)
            count = dy.size
            wp = w + 2 * r
            base = (ys + r) * wp + (xs + r)
            offsets = -dy * wp - dx
            acc = np.zeros((h + 2 * r) * wp, dtype=np.int64)
            _scatter_votes(base, offsets, acc)
            acc = acc.reshape(h + 2 * r, wp)[r : r + h, r : r + w]
            if center_mask is not None:
                acc = np.where(center_mask, acc, 0)
            flat = int(np.argmax(acc))
            votes = int(acc.flat[flat])
            if votes == 0:
                continue
            # strict improvement of the vote fraction, compared exactly
            if best is None or votes * best[1] > best[0] * count:
                best = (votes, count, r, flat // w, flat % w)

    if best is None:
        raise NoCircleFound("edge map has no circle votes")
    votes, count, r, cy, cx = best
    score = votes / count
    if score < min_peak:
        raise NoCircleFound(f"best circle score {score:.3f} below {min_peak}")
    return Circle(cx=cx, cy=cy, r=r), score


def hough_line(
    edges: GrayImage,
    region: tuple[int, int, int, int],
    side: str = "above",
    min_votes: float | None = None,
) -> tuple[EyelidLine, float]:
    """Strongest line in the (rho, theta) accumulator restricted to `region`
    (x0, y0, x1, y1; end-exclusive). Theta is discretized at 1 degree over
    [0, 180), rho at 1 px; coefficients are returned in image coordinates.
    """
    x0, y0, x1, y1 = region
    if not (0 <= x0 < x1 <= edges.width and 0 <= y0 < y1 <= edges.height):
        raise ValueError(f"region {region} outside image bounds")
    width = x1 - x0
    if min_votes is None:
        min_votes = 0.5 * width

    sub = edges.pixels[y0:y1, x0:x1]
    ys, xs = np.nonzero(sub)
    ys = ys + y0
    xs = xs + x0
    if ys.size == 0:
        raise NoLineFound("no edge pixels in region")

    thetas = np.deg2rad(np.arange(180))
    diag = int(np.ceil(np.hypot(edges.width, edges.height)))
    nrho = 2 * diag + 1
    acc = np.zeros((180, nrho), dtype=np.int64)
    cos_t, sin_t = np.cos(thetas), np.sin(thetas)
    for t in range(180):
        rho_idx = np.rint(xs * cos_t[t] + ys * sin_t[t]).astype(np.int64) + diag
        acc[t] = np.bincount(rho_idx, minlength=nrho)

    flat = int(np.argmax(acc))
    votes = int(acc.flat[flat])
    if votes < min_votes:
        raise NoLineFound(f"peak votes {votes} below {min_votes}")
    t, rho_idx = flat // nrho, flat % nrho
    rho = float(rho_idx - diag)
    line = EyelidLine(a=float(cos_t[t]), b=float(sin_t[t]), c=rho, side=side)
    return line, votes / width


def segment_eye(img: GrayImage, cfg: SegmentationConfig = SegmentationConfig()) -> SegmentationResult:
    """Full segmentation: Canny edges, iris circle, pupil circle constrained
    inside the iris, then optional eyelid lines above/below the pupil.

    Raises SegmentationFailure when either circle is missing or the
    pupil-inside-iris invariants cannot be met.
    """
    edges = canny_edges(img, cfg.canny_sigma, cfg.canny_low, cfg.canny_high)
    try:
        iris, _ = hough_circle(edges, cfg.iris_r_min, cfg.iris_r_max, cfg.min_peak)
    except NoCircleFound as exc:
        raise SegmentationFailure(f"iris: {exc}") from None
    try:
        pupil, _ = hough_circle(
            edges,
            cfg.pupil_r_min,
            cfg.pupil_r_max,
            cfg.min_peak,
            center_within=iris,
        )
    except NoCircleFound as exc:
        raise SegmentationFailure(f"pupil: {exc}") from None
    if pupil.r >= iris.r:
        raise SegmentationFailure("pupil radius not smaller than iris radius")

    # Eyelid lines are searched in the top and bottom thirds of the iris
    # bounding box; either may be absent (no occlusion from that lid).
    upper = lower = None
    x0 = max(0, iris.cx - iris.r)
    x1 = min(img.width, iris.cx + iris.r + 1)
    uy0 = max(0, iris.cy - iris.r)
    uy1 = max(uy0 + 1, min(img.height, iris.cy - iris.r // 3))
    ly1 = min(img.height, iris.cy + iris.r + 1)
    ly0 = min(ly1 - 1, max(0, iris.cy + iris.r // 3))
    if x1 - x0 >= 2:
        min_votes = cfg.min_line_frac * (x1 - x0)
        try:
            upper, _ = hough_line(edges, (x0, uy0, x1, uy1), "above", min_votes)
        except NoLineFound:
            pass
        try:
            lower, _ = hough_line(edges, (x0, ly0, x1, ly1), "below", min_votes)
        except NoLineFound:
            pass
    return SegmentationResult(pupil=pupil, iris=iris, upper_eyelid=upper, lower_eyelid=lower)


def draw_overlay(img: GrayImage, seg: SegmentationResult) -> GrayImage:
    """Debug image: detected circles and eyelid lines painted at 255."""
    out = img.pixels.copy()
    shape = out.shape
    out[render_circle(shape, seg.pupil)] = 255
    out[render_circle(shape, seg.iris)] = 255
    yy, xx = np.mgrid[0 : shape[0], 0 : shape[1]]
    for line in (seg.upper_eyelid, seg.lower_eyelid):
        if line is None:
            continue
        near = np.abs(line.a * xx + line.b * yy - line.c) <= 0.5
        out[near] = 255
    return GrayImage(out)

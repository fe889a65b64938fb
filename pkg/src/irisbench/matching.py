"""Noise-masked Hamming distance between iris templates, minimized over a
budget of circular angular shifts.

hd = |{j : bits differ, neither noise flag set}| / |{k : neither noise flag set}|

The implementation packs bits into bytes and counts with word popcounts;
results are bit-exact against a per-bit reference. Shift s rotates the
second template (bits and noise together) by 2*s bit columns, circularly.
Ties prefer the smallest |s|, negative first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoding import IrisTemplate
from .errors import PipelineError


class ShapeMismatch(PipelineError):
    """Templates have different shapes and cannot be compared."""


class AllBitsMasked(PipelineError):
    """Every compared bit is noise-masked; the comparison is undefined."""


@dataclass(frozen=True)
class MatchScore:
    hd: float
    best_shift: int
    effective_bits: int

    def __post_init__(self):
        if not (0.0 <= self.hd <= 1.0):
            raise ValueError("hd must lie in [0, 1]")
        if self.effective_bits < 1:
            raise ValueError("effective_bits must be >= 1")


def rotate_template(t: IrisTemplate, k: int) -> IrisTemplate:
    """Rotate by k angular positions (2k bit columns), noise included."""
    return IrisTemplate(
        bits=np.roll(t.bits, 2 * k, axis=1), noise=np.roll(t.noise, 2 * k, axis=1)
    )


def _check_shapes(x: IrisTemplate, y: IrisTemplate) -> None:
    if x.bits.shape != y.bits.shape:
        raise ShapeMismatch(f"template shapes differ: {x.bits.shape} vs {y.bits.shape}")


def _packed_counts(
    xb: np.ndarray, xn: np.ndarray, yb: np.ndarray, yn: np.ndarray, pad_bits: int
) -> tuple[np.ndarray, np.ndarray]:
    """(differing unmasked bits, unmasked bits) per row of packed byte
    matrices. Padding bits appear as usable after the mask inversion and are
    subtracted from the denominator."""
    diff = (xb ^ yb) & ~(xn | yn)
    usable = ~(xn | yn)
    diffs = np.bitwise_count(diff).sum(axis=-1, dtype=np.int64)
    denoms = np.bitwise_count(usable).sum(axis=-1, dtype=np.int64) - pad_bits
    return np.atleast_1d(diffs), np.atleast_1d(denoms)


def hamming_distance(x: IrisTemplate, y: IrisTemplate) -> tuple[float, int]:
    """Masked Hamming distance at zero shift; also returns the count of
    unmasked compared bits (the formula's denominator)."""
    _check_shapes(x, y)
    n = x.n_bits
    pad = (-n) % 8
    xb = np.packbits(x.bits.ravel())
    xn = np.packbits(x.noise.ravel())
    yb = np.packbits(y.bits.ravel())
    yn = np.packbits(y.noise.ravel())
    diffs, denoms = _packed_counts(xb, xn, yb, yn, pad)
    diff, denom = int(diffs[0]), int(denoms[0])
    if denom == 0:
        raise AllBitsMasked("no unmasked bits in common")
    return diff / denom, denom


def match_templates(
    x: IrisTemplate, y: IrisTemplate, shift_budget: int = 8
) -> MatchScore:
    """Minimum masked Hamming distance over shifts s in [-budget, +budget].

    Shifts rotate y and its noise mask together with circular wraparound.
    Raises AllBitsMasked only when every shift has a zero denominator.
    """
    _check_shapes(x, y)
    if shift_budget < 0:
        raise ValueError("shift_budget must be >= 0")
    order = [0]
    for k in range(1, shift_budget + 1):
        order.extend((-k, k))

    n = x.n_bits
    pad = (-n) % 8
    nshift = len(order)
    ncols = y.bits.shape[1]
    # windows into a doubled column axis realize every circular roll cheaply:
    # roll(bits, m, axis=1) == doubled[:, C-m : 2C-m]
    yb2 = np.concatenate([y.bits, y.bits], axis=1)
    yn2 = np.concatenate([y.noise, y.noise], axis=1)
    yb_stack = np.empty((nshift,) + y.bits.shape, dtype=bool)
    yn_stack = np.empty_like(yb_stack)
    for i, s in enumerate(order):
        m = (2 * s) % ncols
        yb_stack[i] = yb2[:, ncols - m : 2 * ncols - m]
        yn_stack[i] = yn2[:, ncols - m : 2 * ncols - m]

    xb = np.packbits(x.bits.ravel())[None, :]
    xn = np.packbits(x.noise.ravel())[None, :]
    yb = np.packbits(yb_stack.reshape(nshift, -1), axis=1)
    yn = np.packbits(yn_stack.reshape(nshift, -1), axis=1)
    diffs, denoms = _packed_counts(xb, xn, yb, yn, pad)

    best = None  # (diff, denom, shift)
    for i, s in enumerate(order):
        diff, denom = int(diffs[i]), int(denoms[i])
        if denom == 0:
            continue
        # exact fraction comparison: diff/denom < best_diff/best_denom
        if best is None or diff * best[1] < best[0] * denom:
            best = (diff, denom, s)
    if best is None:
        raise AllBitsMasked("all shifts fully masked")
    diff, denom, s = best
    return MatchScore(hd=diff / denom, best_shift=s, effective_bits=denom)

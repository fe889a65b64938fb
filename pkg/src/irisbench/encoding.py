"""1D Log-Gabor phase encoding of normalized iris patterns.

Each pattern row (a circular ring) is circularly convolved with a complex
Log-Gabor kernel and the response phase is quantized to a 2-bit grey code
per angular sample (Re bit then Im bit, column-interleaved). Samples that
were masked, or whose response amplitude falls below a floor, get both
template bits flagged in the noise mask.

Filtering is computed as an explicit circular convolution with a fixed
accumulation order, so circularly shifting a pattern's columns shifts the
template's bit columns exactly, bit for bit.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import PipelineError
from .normalization import NormalizedPattern


class AllMasked(PipelineError):
    """Every sample of the pattern is masked; nothing to encode."""


class TemplateFormatError(PipelineError):
    """Serialized template bytes do not match the documented layout."""


@dataclass(frozen=True)
class LogGaborParams:
    """Filter parameters: center wavelength (px), bandwidth ratio sigma/f0,
    and the response-amplitude floor below which phase bits are noise."""

    wavelength: float = 18.0
    sigma_over_f: float = 0.5
    min_amplitude: float = 1e-4

    def __post_init__(self):
        if self.wavelength < 3:
            raise ValueError("wavelength must be >= 3 px")
        if not (0 < self.sigma_over_f < 1):
            raise ValueError("sigma_over_f must be in (0, 1)")
        if self.min_amplitude < 0:
            raise ValueError("min_amplitude must be >= 0")


@dataclass(frozen=True, eq=False)
class IrisTemplate:
    """Binary template: bits[R, 2A] and noise[R, 2A] (True = noise bit).

    Bit columns hold column-interleaved (Re, Im) pairs, so angular sample j
    owns columns 2j and 2j+1. N is the total bit count R*2A.
    """

    bits: np.ndarray
    noise: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits, dtype=bool)
        n = np.asarray(self.noise, dtype=bool)
        if b.ndim != 2 or b.shape != n.shape:
            raise ValueError("bits and noise must share one R x 2A shape")
        if b.shape[1] % 2 != 0 or b.shape[1] < 2:
            raise ValueError("template must have an even number of bit columns")
        object.__setattr__(self, "bits", b)
        object.__setattr__(self, "noise", n)

    @property
    def rows(self) -> int:
        return self.bits.shape[0]

    @property
    def angular_res(self) -> int:
        return self.bits.shape[1] // 2

    @property
    def n_bits(self) -> int:
        return self.bits.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, IrisTemplate):
            return NotImplemented
        return (
            self.bits.shape == other.bits.shape
            and bool(np.array_equal(self.bits, other.bits))
            and bool(np.array_equal(self.noise, other.noise))
        )


_MAGIC = b"ITPL"
_VERSION = 1
_BITORDER_MSB_FIRST = 1
_HEADER = struct.Struct(">4sBBHH")


def save_template(t: IrisTemplate) -> bytes:
    """Packed layout: magic, version, bit-order tag, R, A (big endian),
    then bits row-major MSB-first, then noise likewise."""
    head = _HEADER.pack(_MAGIC, _VERSION, _BITORDER_MSB_FIRST, t.rows, t.angular_res)
    return (
        head
        + np.packbits(t.bits.ravel()).tobytes()
        + np.packbits(t.noise.ravel()).tobytes()
    )


def load_template(data: bytes) -> IrisTemplate:
    if len(data) < _HEADER.size:
        raise TemplateFormatError("template payload shorter than header")
    magic, version, order, rows, ang = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise TemplateFormatError("bad template magic")
    if version != _VERSION or order != _BITORDER_MSB_FIRST:
        raise TemplateFormatError(f"unsupported version/bit-order {version}/{order}")
    nbits = rows * 2 * ang
    nbytes = (nbits + 7) // 8
    body = data[_HEADER.size :]
    if len(body) < 2 * nbytes:
        raise TemplateFormatError("template payload truncated")
    bits = np.unpackbits(
        np.frombuffer(body[:nbytes], dtype=np.uint8), count=nbits
    ).astype(bool)
    noise = np.unpackbits(
        np.frombuffer(body[nbytes : 2 * nbytes], dtype=np.uint8), count=nbits
    ).astype(bool)
    return IrisTemplate(bits.reshape(rows, 2 * ang), noise.reshape(rows, 2 * ang))


# ---------------------------------------------------------------------------
# Filtering
# ---------------------------------------------------------------------------


@lru_cache(maxsize=32)
def _kernel_and_gather(length: int, wavelength: float, sigma_over_f: float):
    """Complex spatial kernel for the one-sided Log-Gabor transfer function
    G(f) = exp(-(ln(f/f0))^2 / (2 ln(sigma_over_f)^2)), G(0) = 0, plus the
    per-offset circular gather index table."""
    f = np.arange(length) / length
    gain = np.zeros(length)
    pos = np.arange(1, length // 2 + 1)
    f0 = 1.0 / wavelength
    gain[pos] = np.exp(-(np.log(f[pos] / f0) ** 2) / (2 * np.log(sigma_over_f) ** 2))
    kernel = np.fft.ifft(gain)
    idx = (np.arange(length)[None, :] - np.arange(length)[:, None]) % length
    kernel.setflags(write=False)
    idx.setflags(write=False)
    return kernel, idx


def _filter_rows(rows: np.ndarray, params: LogGaborParams) -> np.ndarray:
    """Circular convolution of every row with the Log-Gabor kernel.

    Accumulates strictly in kernel-offset order so that rolled inputs yield
    bitwise-rolled outputs (the shift-covariance contract of encode).
    """
    n = rows.shape[1]
    kernel, gather = _kernel_and_gather(n, params.wavelength, params.sigma_over_f)
    resp = np.zeros(rows.shape, dtype=np.complex128)
    for j in range(n):
        resp += kernel[j] * rows[:, gather[j]]
    return resp


def log_gabor_row(signal: np.ndarray, params: LogGaborParams = LogGaborParams()) -> np.ndarray:
    """Complex analytic response of one circular row signal."""
    sig = np.asarray(signal, dtype=np.float64)
    if sig.ndim != 1:
        raise ValueError("signal must be 1-D")
    if sig.size < 8 or sig.size % 2 != 0:
        raise ValueError("signal length must be even and >= 8")
    return _filter_rows(sig[None, :], params)[0]


def quantize_phase(responses: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Grey-coded phase quadrant bits (Re >= 0, Im >= 0)."""
    resp = np.asarray(responses)
    return resp.real >= 0.0, resp.imag >= 0.0


def encode(pattern: NormalizedPattern, params: LogGaborParams = LogGaborParams()) -> IrisTemplate:
    """Encode a normalized pattern into the 2-bit-per-sample template.

    Masked samples are replaced by their row's unmasked mean before
    filtering (so occlusions do not inject step edges); their bits, and any
    bits whose response amplitude is below min_amplitude, are noise-flagged.
    """
    if pattern.mask.all():
        raise AllMasked("cannot encode a fully masked pattern")
    if pattern.angular_res < 8 or pattern.angular_res % 2 != 0:
        raise ValueError("angular resolution must be even and >= 8")

    sig = pattern.samples / 255.0
    filled = sig.copy()
    for i in range(sig.shape[0]):
        row_mask = pattern.mask[i]
        if row_mask.all():
            filled[i] = 0.0
        elif row_mask.any():
            filled[i, row_mask] = sig[i, ~row_mask].mean()

    resp = _filter_rows(filled, params)
    re_bits, im_bits = quantize_phase(resp)
    noisy = pattern.mask | (np.abs(resp) < params.min_amplitude)

    rows, ang = sig.shape
    bits = np.empty((rows, 2 * ang), dtype=bool)
    noise = np.empty((rows, 2 * ang), dtype=bool)
    bits[:, 0::2] = re_bits
    bits[:, 1::2] = im_bits
    noise[:, 0::2] = noisy
    noise[:, 1::2] = noisy
    return IrisTemplate(bits=bits, noise=noise)

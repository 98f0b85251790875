"""
Zadoff-Chu sequence generation and correlation primitives.

All buffers are plain 1-D ``complex128`` numpy arrays. Correlations are
FFT-based; the linear variant zero-pads to the next power of two.
"""

from dataclasses import dataclass
from math import gcd

import numpy as np

from .errors import EvenLength, InvalidRoot, LagOutOfRange, LengthMismatch, ReferenceTooLong

#: Nominal sample rate of the soundings. Bookkeeping only.
SAMPLE_RATE_HZ = 25e6


@dataclass(frozen=True)
class ZcParams:
    """Root ``root``, length ``length`` and cyclic shift ``cyclic_shift``."""

    root: int
    length: int
    cyclic_shift: int = 0

    def __post_init__(self):
        if self.length < 1:
            raise InvalidRoot(f"length must be positive, got {self.length}")
        if not 0 < self.root < self.length or gcd(self.root, self.length) != 1:
            raise InvalidRoot(
                f"root {self.root} must lie in (0, {self.length}) and be coprime to it")
        if self.cyclic_shift < 0:
            raise InvalidRoot(f"cyclic shift must be non-negative, got {self.cyclic_shift}")


def as_iq(samples) -> np.ndarray:
    """Validate and convert ``samples`` to a finite, non-empty complex buffer."""
    x = np.asarray(samples, dtype=np.complex128)
    if x.ndim != 1 or x.size < 1:
        raise ValueError(f"IQ buffer must be 1-D and non-empty, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("IQ buffer contains NaN or Inf")
    return x


def zc_sequence(params: ZcParams) -> np.ndarray:
    """
    Generate the Zadoff-Chu sequence ``exp(-j*pi*u*n*(n+1+2q)/N)``.

    Parameters
    ----------
    params : ZcParams
        Root, odd length and cyclic shift.

    Returns
    -------
    np.ndarray
        Complex sequence of length ``params.length`` with unit magnitude.
    """
    N = params.length
    if N % 2 == 0:
        raise EvenLength(f"only odd lengths are supported, got {N}")
    n = np.arange(N, dtype=np.int64)
    # Reduce the phase numerator mod 2N in integers to keep the argument small.
    num = (params.root * n * (n + 1 + 2 * params.cyclic_shift)) % (2 * N)
    return np.exp(-1j * np.pi * num / N)


def periodic_autocorrelation(seq, lag: int) -> complex:
    """Return ``sum_n x[n] * conj(x[(n + lag) mod N])``."""
    x = as_iq(seq)
    if not 0 <= lag < x.size:
        raise LagOutOfRange(f"lag {lag} outside [0, {x.size})")
    return complex(np.sum(x * np.conj(np.roll(x, -lag))))


def circular_cross_correlate(a, b) -> np.ndarray:
    """
    Circular cross-correlation ``out[t] = sum_n a[n] * conj(b[(n - t) mod N])``.

    Computed as ``ifft(fft(a) * conj(fft(b)))`` at the native length.
    """
    a = as_iq(a)
    b = as_iq(b)
    if a.size != b.size:
        raise LengthMismatch(f"lengths differ: {a.size} vs {b.size}")
    return np.fft.ifft(np.fft.fft(a) * np.conj(np.fft.fft(b)))


def next_pow2(n: int) -> int:
    return 1 << max(0, int(n - 1).bit_length())


def linear_cross_correlate(received, reference) -> np.ndarray:
    """
    Valid-mode linear cross-correlation of ``received`` against ``reference``.

    ``out[t] = sum_n received[n + t] * conj(reference[n])`` for
    ``t = 0 .. len(received) - len(reference)``.
    """
    r = as_iq(received)
    x = as_iq(reference)
    if x.size > r.size:
        raise ReferenceTooLong(f"reference length {x.size} exceeds received length {r.size}")
    nfft = next_pow2(r.size)
    c = np.fft.ifft(np.fft.fft(r, nfft) * np.conj(np.fft.fft(x, nfft)))
    return c[: r.size - x.size + 1]

"""
Channel feature extraction.

Received buffer -> correlate against a transmitter's reference -> align on the
strongest tap and truncate -> FFT -> optional channel differencing -> moving
average -> split into I/Q planes -> scale each plane to [0, 1].
"""

import logging
import os
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .config import ChanestConfig
from .errors import AllZeroInput, BadConfig, BadFftSize, LengthMismatch, ZeroWindow
from .zc import linear_cross_correlate

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CirEstimate:
    taps: np.ndarray
    peak_to_mean: float


@dataclass
class ChannelFeature:
    """Normalized planes ``(n_planes, length)``; ``source`` is ``(tx, rx, test)``."""

    planes: np.ndarray
    source: Tuple[int, int, int]


def estimate_cir(received, reference) -> np.ndarray:
    """Cross-correlate against ``reference`` and scale by ``1/N`` (unit gain -> unit peak)."""
    ref = np.asarray(reference)
    return linear_cross_correlate(received, ref) / ref.size


def sync_truncate(corr, cir_length: int, eps: float = 1e-12, search_length: Optional[int] = None) -> CirEstimate:
    """
    Align on the correlation peak and keep ``cir_length`` taps.

    The window starts at the first index of maximum magnitude and is zero
    padded at the tail if it runs past the end of ``corr``. With
    ``search_length`` the peak is looked for only in ``corr[:search_length]``.
    """
    c = np.asarray(corr, dtype=np.complex128)
    if c.size == 0:
        raise ValueError("correlation is empty")
    mag = np.abs(c)
    k = int(np.argmax(mag[:search_length]))
    if mag[k] < eps:
        raise AllZeroInput(f"peak magnitude {mag[k]:.3g} below {eps:g}")
    taps = np.zeros(cir_length, dtype=np.complex128)
    seg = c[k:k + cir_length]
    taps[:seg.size] = seg
    return CirEstimate(taps=taps, peak_to_mean=float(mag[k] / mag.mean()))


def cir_to_tf(cir, fft_size: int) -> np.ndarray:
    """DFT of the tap vector zero-padded to ``fft_size``."""
    taps = cir.taps if isinstance(cir, CirEstimate) else np.asarray(cir)
    if fft_size < 1 or fft_size & (fft_size - 1) or fft_size < taps.size:
        raise BadFftSize(f"fft_size {fft_size} must be a power of two >= {taps.size}")
    return np.fft.fft(taps, fft_size)


def channel_difference(tf_a, tf_b, mode: str = "conj_product", delta: float = 1e-6) -> np.ndarray:
    """``tf_a * conj(tf_b)``, optionally divided by ``|tf_b|^2 + delta`` (``mode="ratio"``)."""
    a = np.asarray(tf_a)
    b = np.asarray(tf_b)
    if a.shape != b.shape:
        raise LengthMismatch(f"transfer functions differ in length: {a.shape} vs {b.shape}")
    out = a * np.conj(b)
    if mode == "ratio":
        out = out / (np.abs(b) ** 2 + delta)
    elif mode != "conj_product":
        raise BadConfig(f"unknown difference mode {mode!r}")
    return out


def moving_average(seq, window: int) -> np.ndarray:
    """Causal running mean over the last ``window`` samples (shorter at the start)."""
    if window < 1:
        raise ZeroWindow(f"window must be >= 1, got {window}")
    x = np.asarray(seq)
    if window == 1:
        return x.copy()
    counts = np.minimum(np.arange(1, x.size + 1), window)
    return np.convolve(x, np.ones(window))[:x.size] / counts


def normalize_unit_interval(values) -> np.ndarray:
    """Affine map onto [0, 1]; a constant input maps to zeros."""
    v = np.asarray(values, dtype=np.float64)
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.zeros_like(v)
    return (v - lo) / (hi - lo)


def n_planes(config: ChanestConfig) -> int:
    per_cf = 1 if config.magnitude_only else 2
    return per_cf * (2 if config.planes == "both" else 1)


def _split(x: np.ndarray, magnitude_only: bool) -> List[np.ndarray]:
    return [np.abs(x)] if magnitude_only else [x.real, x.imag]


def write_cf32(path, samples) -> None:
    """Write interleaved little-endian float32 I/Q."""
    x = np.asarray(samples, dtype=np.complex128)
    np.stack([x.real, x.imag], axis=-1).astype("<f4").tofile(path)


def read_cf32(path) -> np.ndarray:
    raw = np.fromfile(path, dtype="<f4")
    return (raw[0::2] + 1j * raw[1::2]).astype(np.complex128)


def extract_features(received, references: Sequence[np.ndarray], config: ChanestConfig = ChanestConfig(),
                     test_id: int = 0, dump_dir: Optional[str] = None
                     ) -> Tuple[List[ChannelFeature], List[Tuple[int, int]]]:
    """
    Run the full chain for every (reference, receiver) pair.

    Parameters
    ----------
    received : array_like
        Complex array ``(n_rx, n_samples)``.
    references : sequence of arrays or None
        One reference sequence per transmitter; must be pairwise distinct.
        ``None`` marks a transmitter that is not sounding and is left out.
    config : ChanestConfig
    test_id : int
        Recorded in each feature's ``source``.
    dump_dir : str, optional
        If given, intermediate stages are written there as ``.cf32`` files.

    Returns
    -------
    features : list of ChannelFeature
        Ordered by (tx, rx).
    skipped : list of (tx, rx)
        Pairs with no detectable sounding.
    """
    rx_bufs = np.atleast_2d(np.asarray(received))
    refs = [None if r is None else np.asarray(r) for r in references]
    present = [i for i, r in enumerate(refs) if r is not None]
    for i in present:
        for j in present:
            if j < i and refs[i].shape == refs[j].shape and np.array_equal(refs[i], refs[j]):
                raise BadConfig(f"references {j} and {i} are identical")

    def tf_of(tx, rx):
        corr = estimate_cir(rx_bufs[rx], refs[tx])
        # a periodic sounding peaks once per period; only take peaks whose window fits
        cir = sync_truncate(corr, config.cir_length, config.sync_eps,
                            search_length=max(1, corr.size - config.cir_length + 1))
        tf = cir_to_tf(cir, config.fft_size)
        if dump_dir is not None:
            stem = os.path.join(dump_dir, f"test{test_id}_tx{tx}_rx{rx}")
            write_cf32(stem + "_corr.cf32", corr)
            write_cf32(stem + "_cir.cf32", cir.taps)
            write_cf32(stem + "_tf.cf32", tf)
        return cir, tf

    tf_ref = None
    if config.difference != "off":
        try:
            tf_ref = tf_of(*config.difference_pair)[1]
        except AllZeroInput:
            log.warning("difference reference pair %s has no sounding", config.difference_pair)
            return [], [(tx, rx) for tx in present for rx in range(rx_bufs.shape[0])]

    features, skipped = [], []
    for tx in present:
        for rx in range(rx_bufs.shape[0]):
            try:
                cir, tf = tf_of(tx, rx)
            except AllZeroInput:
                skipped.append((tx, rx))
                continue
            if tf_ref is not None:
                tf = channel_difference(tf, tf_ref, config.difference, config.ratio_delta)
            tf = moving_average(tf, config.window)
            if dump_dir is not None:
                write_cf32(os.path.join(dump_dir, f"test{test_id}_tx{tx}_rx{rx}_smoothed.cf32"), tf)
            cir_padded = np.zeros(config.fft_size, dtype=np.complex128)
            cir_padded[:cir.taps.size] = cir.taps
            raw = []
            if config.planes in ("both", "cir"):
                raw += _split(cir_padded, config.magnitude_only)
            if config.planes in ("both", "tf"):
                raw += _split(tf, config.magnitude_only)
            planes = np.stack([normalize_unit_interval(p) for p in raw])
            features.append(ChannelFeature(planes=planes, source=(tx, rx, test_id)))
    if skipped:
        log.debug("test %d: skipped %d pairs with no sounding", test_id, len(skipped))
    return features, skipped

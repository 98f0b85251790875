"""
Synthetic 4x4 MIMO sounding environment.

Each transmit/receive pair gets a static tapped-delay-line channel drawn
from an exponential power-delay profile with a dominant first arrival. The
transmission plan mirrors the ten-test schedule: every transmitter sends a
wide-band sequence plus a narrow-band (Tx0, Tx2) or mid-band (Tx1, Tx3)
sequence; tests 0-1 are held out for evaluation.
"""

from dataclasses import dataclass
from math import ceil
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import N_RX, N_TX, ChannelConfig, PlanConfig, ZcConfig
from .errors import BadConfig, EmptyTaps, TestOutOfRange
from .seeding import STREAM_CHANNEL, STREAM_DRIFT, STREAM_NOISE, derive_seed, make_rng
from .zc import ZcParams, as_iq, zc_sequence

N_TESTS = 10
EVAL_TESTS = (0, 1)

TRAIN = "TRAIN"
EVAL = "EVAL"


@dataclass(frozen=True)
class ChannelTap:
    delay: int
    gain: complex


@dataclass(frozen=True)
class MimoChannel:
    """Static FIR tap lists indexed ``pairs[tx][rx]``."""

    pairs: Tuple[Tuple[Tuple[ChannelTap, ...], ...], ...]
    seed: int

    @property
    def max_delay(self) -> int:
        return max(t.delay for row in self.pairs for taps in row for t in taps)

    def impulse_response(self, tx: int, rx: int, length: Optional[int] = None) -> np.ndarray:
        taps = self.pairs[tx][rx]
        n = length if length is not None else taps[-1].delay + 1
        h = np.zeros(n, dtype=np.complex128)
        for t in taps:
            if t.delay < n:
                h[t.delay] += t.gain
        return h


def _check_channel_config(config: ChannelConfig) -> int:
    min_taps = config.min_taps if config.min_taps is not None else ceil(config.max_taps / 2)
    if (config.max_taps < 1 or config.max_delay_spread < config.max_taps
            or config.decay <= 0 or not 1 <= min_taps <= config.max_taps
            or not 0 < config.los_margin < 1 or config.drift_std < 0):
        raise BadConfig(f"invalid channel config: {config}")
    return min_taps


def _draw_pair(rng: np.random.Generator, config: ChannelConfig, min_taps: int) -> Tuple[ChannelTap, ...]:
    n_taps = int(rng.integers(min_taps, config.max_taps + 1))
    delays = np.sort(rng.choice(np.arange(1, config.max_delay_spread), size=n_taps - 1, replace=False))
    # line-of-sight arrival: unit magnitude, random phase, always strongest
    taps = [ChannelTap(0, complex(np.exp(2j * np.pi * rng.random())))]
    for d in delays:
        scale = np.sqrt(np.exp(-d / config.decay) / 2)
        g = complex(scale * rng.standard_normal() + 1j * scale * rng.standard_normal())
        if abs(g) > config.los_margin:
            g *= config.los_margin / abs(g)
        taps.append(ChannelTap(int(d), g))
    return tuple(taps)


def sample_mimo_channel(seed: int, config: ChannelConfig = ChannelConfig()) -> MimoChannel:
    """
    Draw a random static 4x4 multipath channel.

    Tap ``k`` has expected power ``exp(-delay_k / decay)``; the first tap sits at
    delay 0 with unit magnitude and every later tap is clipped below it. Should
    two pairs ever coincide, the draw is repeated with ``seed + 1``.
    """
    min_taps = _check_channel_config(config)
    while True:
        rng = make_rng(seed, STREAM_CHANNEL)
        pairs = tuple(
            tuple(_draw_pair(rng, config, min_taps) for _ in range(N_RX)) for _ in range(N_TX))
        flat = [taps for row in pairs for taps in row]
        if len(set(flat)) == len(flat):
            return MimoChannel(pairs=pairs, seed=seed)
        seed += 1


def apply_fir(signal, taps: Sequence[ChannelTap]) -> np.ndarray:
    """Tapped delay line: ``out[n] = sum_k gain_k * signal[n - delay_k]``, length ``len + max delay``."""
    if not taps:
        raise EmptyTaps("channel tap list is empty")
    x = as_iq(signal)
    max_delay = max(t.delay for t in taps)
    out = np.zeros(x.size + max_delay, dtype=np.complex128)
    for t in taps:
        out[t.delay:t.delay + x.size] += t.gain * x
    return out


def awgn(signal, snr_db: Optional[float], seed: int) -> np.ndarray:
    """Add circular complex Gaussian noise at ``snr_db`` relative to the mean signal power."""
    x = as_iq(signal)
    if snr_db is None:
        return x.copy()
    rng = make_rng(seed, STREAM_NOISE)
    noise_power = np.mean(np.abs(x) ** 2) / 10 ** (snr_db / 10)
    noise = rng.standard_normal(x.size) + 1j * rng.standard_normal(x.size)
    return x + np.sqrt(noise_power / 2) * noise


# --- transmission plan --------------------------------------------------------

@dataclass(frozen=True)
class SequenceSpec:
    band: str  # wide | mid | narrow
    root: int
    length: int

    @property
    def params(self) -> ZcParams:
        return ZcParams(self.root, self.length)


@dataclass(frozen=True)
class TestSpec:
    __test__ = False

    index: int
    role: str
    # active sequences per transmitter
    active: Tuple[Tuple[SequenceSpec, ...], ...]


@dataclass(frozen=True)
class TransmissionPlan:
    tests: Tuple[TestSpec, ...]
    # every sequence each transmitter may use, keyed by band
    sequences: Tuple[Dict[str, SequenceSpec], ...]

    def __post_init__(self):
        if len(self.tests) != N_TESTS:
            raise BadConfig(f"plan must have exactly {N_TESTS} tests, got {len(self.tests)}")
        seen = [(s.root, s.length) for seqs in self.sequences for s in seqs.values()]
        if len(set(seen)) != len(seen):
            raise BadConfig("ZC (root, length) pairs must be globally unique")
        for t in self.tests:
            if any(len(a) > 2 for a in t.active):
                raise BadConfig(f"test {t.index}: a transmitter has more than 2 sequences")

    @property
    def max_length(self) -> int:
        return max(s.length for seqs in self.sequences for s in seqs.values())

    def reference(self, tx: int, band: str = "wide") -> np.ndarray:
        return zc_sequence(self.sequences[tx][band].params)

    def references(self, band: str = "wide") -> List[np.ndarray]:
        return [self.reference(tx, band) for tx in range(N_TX)]

    def tests_with_role(self, role: str) -> List[int]:
        return [t.index for t in self.tests if t.role == role]


def default_plan(zc: ZcConfig = ZcConfig(), plan: PlanConfig = PlanConfig()) -> TransmissionPlan:
    """Ten-test schedule: wide+narrow for Tx0/Tx2, wide+mid for Tx1/Tx3, tests 0-1 EVAL."""
    sequences = []
    for tx in range(N_TX):
        seqs = {"wide": SequenceSpec("wide", zc.wide_roots[tx], zc.wide_length)}
        if tx % 2 == 0:
            seqs["narrow"] = SequenceSpec("narrow", zc.narrow_roots[tx // 2], zc.narrow_length)
        else:
            seqs["mid"] = SequenceSpec("mid", zc.mid_roots[tx // 2], zc.mid_length)
        sequences.append(seqs)
    for seqs in sequences:
        for s in seqs.values():
            ZcParams(s.root, s.length)

    tests = []
    for i in range(N_TESTS):
        override = plan.masks.get(str(i), {})
        active = []
        for tx in range(N_TX):
            bands = override.get(str(tx), list(sequences[tx]))
            unknown = set(bands) - set(sequences[tx])
            if unknown:
                raise BadConfig(f"plan.masks: Tx{tx} has no sequence for bands {sorted(unknown)}")
            active.append(tuple(sequences[tx][b] for b in bands))
        tests.append(TestSpec(i, EVAL if i in EVAL_TESTS else TRAIN, tuple(active)))
    return TransmissionPlan(tests=tuple(tests), sequences=tuple(sequences))


def _periodic(seq: np.ndarray, start: int, stop: int) -> np.ndarray:
    return seq[np.arange(start, stop) % seq.size]


def synthesize_received(plan: TransmissionPlan, test_index: int, channel: MimoChannel,
                        snr_db: Optional[float], seed: int, repeats: int,
                        drift_std: float = 0.0) -> np.ndarray:
    """
    Simulate the four time-aligned receiver buffers for one test.

    Transmitters send their active sequences simultaneously and continuously;
    each is repeated periodically. The capture window covers ``repeats``
    periods of the longest sequence and starts after the channel has reached
    steady state, so every full-period correlation window is exact.

    Returns
    -------
    np.ndarray
        Complex array of shape ``(4, repeats * plan.max_length)``.
    """
    if not 0 <= test_index < len(plan.tests):
        raise TestOutOfRange(f"test index {test_index} outside [0, {len(plan.tests)})")
    if repeats < 1:
        raise BadConfig(f"repeats must be >= 1, got {repeats}")
    test = plan.tests[test_index]
    n = repeats * plan.max_length
    lead = channel.max_delay

    drift_rng = make_rng(channel.seed, STREAM_DRIFT, test_index) if drift_std > 0 else None
    out = np.zeros((N_RX, n), dtype=np.complex128)
    for tx in range(N_TX):
        if not test.active[tx]:
            continue
        wave = np.zeros(n + lead, dtype=np.complex128)
        for spec in test.active[tx]:
            wave += _periodic(zc_sequence(spec.params), -lead, n)
        for rx in range(N_RX):
            taps = channel.pairs[tx][rx]
            if drift_rng is not None:
                pert = drift_rng.standard_normal((len(taps), 2)) @ np.array([1, 1j]) / np.sqrt(2)
                taps = [ChannelTap(t.delay, t.gain * (1 + drift_std * p)) for t, p in zip(taps, pert)]
            out[rx] += apply_fir(wave, taps)[lead:lead + n]
    if snr_db is not None:
        for rx in range(N_RX):
            out[rx] = awgn(out[rx], snr_db, derive_seed(seed, test_index, rx))
    return out

"""
Experiment configuration.

A config is a tree of frozen dataclasses. On disk it is a JSON document;
unknown keys are rejected so a typo never silently falls back to a default.
The canonical text (sorted keys, compact separators) is what gets hashed and
embedded in model files.
"""

import dataclasses
import hashlib
import json
import typing
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .errors import BadConfig

N_TX = 4
N_RX = 4
N_CLASSES = 4


@dataclass(frozen=True)
class ZcConfig:
    wide_length: int = 839
    mid_length: int = 211
    narrow_length: int = 113
    # one wide root per transmitter
    wide_roots: Tuple[int, ...] = (5, 7, 11, 13)
    # narrow-band roots for Tx0, Tx2 and mid-band roots for Tx1, Tx3
    narrow_roots: Tuple[int, ...] = (3, 7)
    mid_roots: Tuple[int, ...] = (3, 7)


@dataclass(frozen=True)
class ChannelConfig:
    max_taps: int = 8
    # None means ceil(max_taps / 2)
    min_taps: Optional[int] = None
    max_delay_spread: int = 64
    decay: float = 16.0
    # secondary taps are clipped to this fraction of the first tap magnitude
    los_margin: float = 0.9
    # per-test relative gain perturbation; 0 keeps the channel static
    drift_std: float = 0.0


@dataclass(frozen=True)
class PlanConfig:
    # {"<test>": {"<tx>": ["wide", "narrow"]}} overrides for individual tests
    masks: Dict[str, Dict[str, List[str]]] = field(default_factory=dict)


@dataclass(frozen=True)
class ChanestConfig:
    cir_length: int = 128
    fft_size: int = 256
    difference: str = "off"  # off | conj_product | ratio
    difference_pair: Tuple[int, int] = (0, 0)
    ratio_delta: float = 1e-6
    window: int = 4
    planes: str = "both"  # both | cir | tf
    magnitude_only: bool = False
    sync_eps: float = 1e-12
    reference_band: str = "wide"


@dataclass(frozen=True)
class DatasetConfig:
    snapshots_per_test: int = 8
    repeats: int = 4
    val_fraction: float = 0.3


@dataclass(frozen=True)
class DcnnConfig:
    conv_specs: Tuple[Tuple[int, int], ...] = ((16, 7), (32, 5), (64, 3), (64, 3))
    dense_width: int = 128
    n_classes: int = N_CLASSES
    selu_mode: str = "canonical"  # canonical | literal
    in_planes: int = 4
    in_length: int = 256


@dataclass(frozen=True)
class McmConfig:
    n_branches: int = 4
    conv_specs: Tuple[Tuple[int, int], ...] = ((16, 7), (32, 5), (64, 3), (64, 3))
    n_classes: int = N_CLASSES
    selu_mode: str = "canonical"
    in_planes: int = 4
    in_length: int = 256


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 514
    max_epochs: int = 200
    patience: int = 10
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.patience < 1 or self.max_epochs < 0:
            raise BadConfig("batch_size and patience must be >= 1, max_epochs >= 0")


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    snr_db: Optional[float] = 20.0
    zc: ZcConfig = field(default_factory=ZcConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    plan: PlanConfig = field(default_factory=PlanConfig)
    chanest: ChanestConfig = field(default_factory=ChanestConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    dcnn: DcnnConfig = field(default_factory=DcnnConfig)
    mcm: McmConfig = field(default_factory=McmConfig)
    train: TrainConfig = field(default_factory=TrainConfig)


def _convert(tp, value, path):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if dataclasses.is_dataclass(tp):
        return from_dict(tp, value, path)
    if origin is typing.Union:  # Optional[...]
        if value is None:
            return None
        inner = [a for a in args if a is not type(None)][0]
        return _convert(inner, value, path)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise BadConfig(f"{path}: expected a list, got {value!r}")
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_convert(args[0], v, f"{path}[{i}]") for i, v in enumerate(value))
        if len(value) != len(args):
            raise BadConfig(f"{path}: expected {len(args)} items, got {len(value)}")
        return tuple(_convert(a, v, f"{path}[{i}]") for i, (a, v) in enumerate(zip(args, value)))
    if origin in (dict, list):
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise BadConfig(f"{path}: expected a number, got {value!r}")
        return float(value)
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise BadConfig(f"{path}: expected an integer, got {value!r}")
        return value
    if tp is bool:
        if not isinstance(value, bool):
            raise BadConfig(f"{path}: expected true/false, got {value!r}")
        return value
    if tp is str:
        if not isinstance(value, str):
            raise BadConfig(f"{path}: expected a string, got {value!r}")
        return value
    return value


def from_dict(cls, data, path: str = "config"):
    """Build dataclass ``cls`` from a mapping, rejecting unknown keys."""
    if not isinstance(data, dict):
        raise BadConfig(f"{path}: expected an object, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise BadConfig(f"{path}: unknown keys {unknown}")
    kwargs = {k: _convert(hints[k], v, f"{path}.{k}") for k, v in data.items()}
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise BadConfig(f"{path}: {exc}") from exc


def to_dict(cfg) -> dict:
    return json.loads(canonical_text(cfg))


def canonical_text(cfg) -> str:
    return json.dumps(dataclasses.asdict(cfg), sort_keys=True, separators=(",", ":"))


def config_hash(cfg) -> str:
    return hashlib.sha256(canonical_text(cfg).encode("utf-8")).hexdigest()


def load_config(path) -> ExperimentConfig:
    """Read a JSON config file. Missing keys take their defaults."""
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise BadConfig(f"{path}: not valid JSON ({exc})") from exc
    cfg = from_dict(ExperimentConfig, data)
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    """Cross-field checks the individual dataclasses cannot do alone."""
    ch = cfg.channel
    if ch.max_taps < 1 or ch.max_delay_spread < ch.max_taps or ch.decay <= 0:
        raise BadConfig("channel: need max_taps >= 1, max_delay_spread >= max_taps, decay > 0")
    ce = cfg.chanest
    if ce.difference not in ("off", "conj_product", "ratio"):
        raise BadConfig(f"chanest.difference: unknown mode {ce.difference!r}")
    if ce.planes not in ("both", "cir", "tf"):
        raise BadConfig(f"chanest.planes: unknown mode {ce.planes!r}")
    if ce.fft_size & (ce.fft_size - 1) or ce.fft_size < ce.cir_length:
        raise BadConfig("chanest.fft_size must be a power of two >= cir_length")
    if len(cfg.zc.wide_roots) != N_TX or len(cfg.zc.narrow_roots) != 2 or len(cfg.zc.mid_roots) != 2:
        raise BadConfig("zc: need 4 wide roots, 2 narrow roots and 2 mid roots")
    if cfg.dataset.snapshots_per_test < 1 or cfg.dataset.repeats < 2:
        raise BadConfig("dataset: snapshots_per_test >= 1 and repeats >= 2 required")
    for name in ("dcnn", "mcm"):
        m = getattr(cfg, name)
        if len(m.conv_specs) != 4:
            raise BadConfig(f"{name}.conv_specs must list exactly 4 (filters, kernel) pairs")
        if m.selu_mode not in ("canonical", "literal"):
            raise BadConfig(f"{name}.selu_mode: unknown mode {m.selu_mode!r}")

"""
Labeled channel-feature datasets.

Examples are stored column-wise (one array per field) in generation order:
test, snapshot, transmitter reference, receiver. Evaluation examples come only
from the plan's EVAL tests; validation examples are drawn from the remaining
tests by a seeded shuffle.
"""

import logging
import struct
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from .chanest import ChannelFeature, extract_features
from .config import N_CLASSES, N_RX, ChanestConfig, DatasetConfig
from .errors import (BadMagic, EmptyDataset, SplitIntegrityError, TruncatedFile, UnknownSplit,
                     VersionMismatch)
from .seeding import STREAM_SPLIT, derive_seed, make_rng
from .simulator import EVAL, MimoChannel, TransmissionPlan, synthesize_received

log = logging.getLogger(__name__)

TRAIN_TAG, VAL_TAG, EVAL_TAG = 0, 1, 2
SPLITS = {"TRAIN": TRAIN_TAG, "VAL": VAL_TAG, "EVAL": EVAL_TAG}

MAGIC = b"EACF"
VERSION = 1
_HEADER = struct.Struct("<4sIIHHB3x")


@dataclass(frozen=True)
class LabeledExample:
    feature: ChannelFeature
    label: int
    rx_id: int
    test_id: int


@dataclass(eq=False)
class LabeledDataset:
    """
    Column-wise dataset.

    Attributes
    ----------
    features : np.ndarray
        float32 ``(n, n_planes, plane_length)``, values in [0, 1].
    labels, rx_ids, test_ids, split_tags : np.ndarray
        Per-example integer columns; ``split_tags`` uses 0=TRAIN, 1=VAL, 2=EVAL.
    eval_tests : tuple of int
        Test ids reserved for evaluation.
    """

    features: np.ndarray
    labels: np.ndarray
    rx_ids: np.ndarray
    test_ids: np.ndarray
    split_tags: np.ndarray
    n_classes: int = N_CLASSES
    eval_tests: tuple = (0, 1)

    def __len__(self):
        return self.labels.size

    @property
    def n_planes(self) -> int:
        return self.features.shape[1]

    @property
    def plane_length(self) -> int:
        return self.features.shape[2]

    def indices(self, split) -> np.ndarray:
        return np.flatnonzero(self.split_tags == split_tag(split))

    def example(self, i: int) -> LabeledExample:
        feat = ChannelFeature(self.features[i], (int(self.labels[i]), int(self.rx_ids[i]), int(self.test_ids[i])))
        return LabeledExample(feat, int(self.labels[i]), int(self.rx_ids[i]), int(self.test_ids[i]))

    def groups(self) -> np.ndarray:
        """
        Index groups ``(G, n_rx)``: one row per (test, snapshot, transmitter),
        receivers in order. Incomplete groups are dropped.
        """
        rows, current = [], []
        for i in range(len(self)):
            if current and (self.rx_ids[i] <= self.rx_ids[current[-1]]
                            or self.labels[i] != self.labels[current[0]]
                            or self.test_ids[i] != self.test_ids[current[0]]):
                rows.append(current)
                current = []
            current.append(i)
        if current:
            rows.append(current)
        full = [r for r in rows if len(r) == N_RX and list(self.rx_ids[r]) == list(range(N_RX))]
        return np.array(full, dtype=np.int64).reshape(-1, N_RX)

    def check_integrity(self) -> None:
        """Raise if any EVAL example shares a test with TRAIN/VAL, or tags are invalid."""
        if np.any(self.split_tags > EVAL_TAG):
            raise SplitIntegrityError("unknown split tag")
        is_eval_test = np.isin(self.test_ids, self.eval_tests)
        if np.any(is_eval_test != (self.split_tags == EVAL_TAG)):
            raise SplitIntegrityError("EVAL must hold exactly the evaluation tests")
        if np.any(self.features < 0) or np.any(self.features > 1):
            raise SplitIntegrityError("feature values outside [0, 1]")

    def equals(self, other: "LabeledDataset") -> bool:
        return (self.n_classes == other.n_classes
                and self.features.shape == other.features.shape
                and self.features.tobytes() == other.features.tobytes()
                and all(np.array_equal(getattr(self, k), getattr(other, k))
                        for k in ("labels", "rx_ids", "test_ids", "split_tags")))


def split_tag(split) -> int:
    if isinstance(split, str) and split.upper() in SPLITS:
        return SPLITS[split.upper()]
    if split in (TRAIN_TAG, VAL_TAG, EVAL_TAG) and not isinstance(split, bool):
        return int(split)
    raise UnknownSplit(f"unknown split {split!r}")


def build_dataset(plan: TransmissionPlan, channel: MimoChannel, config: DatasetConfig = DatasetConfig(),
                  chanest: ChanestConfig = ChanestConfig(), snr_db: Optional[float] = 20.0, seed: int = 0,
                  drift_std: float = 0.0) -> LabeledDataset:
    """
    Simulate every test ``snapshots_per_test`` times and extract labeled features.

    Each snapshot uses its own noise realization; the channel is shared.
    A transmitter contributes features for a test only when its reference band
    is active there.
    """
    if config.snapshots_per_test < 1:
        raise ValueError("snapshots_per_test must be >= 1")
    feats, labels, rx_ids, test_ids, group_ids = [], [], [], [], []
    n_skipped = 0
    group = 0
    for test in plan.tests:
        for snap in range(config.snapshots_per_test):
            received = synthesize_received(plan, test.index, channel, snr_db, derive_seed(seed, snap),
                                           config.repeats, drift_std)
            refs = [plan.reference(tx, chanest.reference_band)
                    if any(s.band == chanest.reference_band for s in test.active[tx]) else None
                    for tx in range(len(test.active))]
            out, skipped = extract_features(received, refs, chanest, test_id=test.index)
            n_skipped += len(skipped)
            for f in out:
                tx, rx, _ = f.source
                feats.append(f.planes.astype(np.float32))
                labels.append(tx)
                rx_ids.append(rx)
                test_ids.append(test.index)
                group_ids.append(group + tx)
            group += len(test.active)
    if not feats:
        raise EmptyDataset(f"no features extracted ({n_skipped} pairs without a sounding)")
    if n_skipped:
        log.info("skipped %d pairs without a detectable sounding", n_skipped)

    test_ids = np.array(test_ids, dtype=np.uint16)
    eval_tests = tuple(plan.tests_with_role(EVAL))
    tags = np.where(np.isin(test_ids, eval_tests), EVAL_TAG, TRAIN_TAG).astype(np.uint8)
    tags = _assign_val(tags, np.array(group_ids), config.val_fraction, seed)
    ds = LabeledDataset(features=np.stack(feats), labels=np.array(labels, dtype=np.uint8),
                        rx_ids=np.array(rx_ids, dtype=np.uint8), test_ids=test_ids, split_tags=tags,
                        eval_tests=eval_tests)
    ds.check_integrity()
    return ds


def n_train_examples(pool: int, val_fraction: float) -> int:
    return int(np.floor((1 - val_fraction) * pool + 0.5))


def _assign_val(tags, group_ids, val_fraction, seed):
    # Shuffle whole (test, snapshot, tx) groups so the receivers of one
    # emission stay together; at most one group straddles the cut.
    pool = np.flatnonzero(tags == TRAIN_TAG)
    n_val = pool.size - n_train_examples(pool.size, val_fraction)
    uniq = np.unique(group_ids[pool])
    order = make_rng(seed, STREAM_SPLIT).permutation(uniq)
    rank = np.empty(order.max() + 1, dtype=np.int64)
    rank[order] = np.arange(order.size)
    ordered = pool[np.lexsort((pool, rank[group_ids[pool]]))]
    tags = tags.copy()
    tags[ordered[:n_val]] = VAL_TAG
    return tags


def _record_dtype(n_planes, plane_length):
    return np.dtype([("label", "u1"), ("rx_id", "u1"), ("test_id", "<u2"), ("split", "u1"),
                     ("pad", "u1", (3,)), ("planes", "<f4", (n_planes, plane_length))])


def write_dataset(ds: LabeledDataset, path) -> None:
    """Write ``ds`` in the little-endian EACF format."""
    rec = np.zeros(len(ds), dtype=_record_dtype(ds.n_planes, ds.plane_length))
    rec["label"] = ds.labels
    rec["rx_id"] = ds.rx_ids
    rec["test_id"] = ds.test_ids
    rec["split"] = ds.split_tags
    rec["planes"] = ds.features
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, len(ds), ds.n_planes, ds.plane_length, ds.n_classes))
        fh.write(rec.tobytes())


def read_dataset(path, eval_tests=(0, 1)) -> LabeledDataset:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < 4 or head[:4] != MAGIC:
            raise BadMagic(f"{path}: not an EACF dataset")
        if len(head) < _HEADER.size:
            raise TruncatedFile(f"{path}: header truncated")
        _, version, n, n_planes, plane_length, n_classes = _HEADER.unpack(head)
        if version != VERSION:
            raise VersionMismatch(f"{path}: version {version}, expected {VERSION}")
        dtype = _record_dtype(n_planes, plane_length)
        body = fh.read()
    if len(body) != n * dtype.itemsize:
        raise TruncatedFile(f"{path}: expected {n * dtype.itemsize} payload bytes, found {len(body)}")
    rec = np.frombuffer(body, dtype=dtype)
    ds = LabeledDataset(features=rec["planes"].astype(np.float32), labels=rec["label"].copy(),
                        rx_ids=rec["rx_id"].copy(), test_ids=rec["test_id"].astype(np.uint16),
                        split_tags=rec["split"].copy(), n_classes=n_classes, eval_tests=tuple(eval_tests))
    ds.check_integrity()
    return ds


def batch_iterator(ds: LabeledDataset, split, batch_size: int, epoch_seed: int) -> Iterator[np.ndarray]:
    """Yield shuffled index batches covering ``split`` exactly once; the last may be short."""
    idx = ds.indices(split)
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    idx = idx[make_rng(epoch_seed).permutation(idx.size)]
    for start in range(0, idx.size, batch_size):
        yield idx[start:start + batch_size]

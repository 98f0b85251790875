"""
The two classifiers and their training loop.

DCNN: four conv+SeLU blocks without pooling, flatten, dense+tanh, dense head.
DCNN-MCM: one independent four-block conv branch per receiver, each ending in
global average pooling; the pooled vectors are concatenated into a dense head.
Both emit logits; ``predict_proba`` applies the softmax.
"""

import copy
import hashlib
import io
import json
import logging
import struct
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .config import DcnnConfig, McmConfig, TrainConfig, canonical_text, from_dict
from .dataset import EVAL_TAG, TRAIN_TAG, VAL_TAG, LabeledDataset, batch_iterator, split_tag
from .errors import ArchMismatch, BadConfig, BadMagic, EmptySplit, ShapeMismatch, TruncatedFile
from .nn import functional as F
from .nn.io import read_weights, write_weights
from .nn.layers import Conv1d, Dense, Flatten, GlobalAvgPool, Selu, Sequential, Tanh
from .nn.optim import AdamState, adam_step
from .seeding import STREAM_INIT, STREAM_TRAIN, derive_seed, make_rng

log = logging.getLogger(__name__)

ARCH_TAGS = {"dcnn": 1, "mcm": 2}
_EVAL_CHUNK = 256


def _selu_params(mode):
    return F.LITERAL_SELU if mode == "literal" else F.CANONICAL_SELU


def _conv_stack(in_planes, in_length, conv_specs, selu, rng):
    layers, channels, length = [], in_planes, in_length
    for filters, kernel in conv_specs:
        if kernel > length:
            raise BadConfig(f"kernel {kernel} exceeds sequence length {length} at this depth")
        layers += [Conv1d(channels, filters, kernel, rng), Selu(selu)]
        channels, length = filters, F.conv1d_out_length(length, kernel)
    return layers, channels, length


class Model:
    """Base for the classifiers: an ordered layer list plus forward/backward."""

    arch = "model"

    def __init__(self, config):
        self.config = config

    @property
    def params(self):
        return [p for layer in self.layers for p in layer.params]

    @property
    def grads(self):
        return [g for layer in self.layers for g in layer.grads]

    def astype(self, dtype):
        """Copy of the model with parameters cast to ``dtype``."""
        other = copy.deepcopy(self)
        for layer in other.layers:
            layer.astype(dtype)
        return other

    def predict_proba(self, x):
        return F.softmax(self.forward(x))

    def logits(self, x, chunk=_EVAL_CHUNK):
        """Forward pass in chunks; inputs carry a batch axis."""
        return np.concatenate([self.forward(x[i:i + chunk]) for i in range(0, len(x), chunk)])

    def weights_digest(self) -> str:
        h = hashlib.sha256()
        for p in self.params:
            h.update(np.ascontiguousarray(p).tobytes())
        return h.hexdigest()


class Dcnn(Model):
    arch = "dcnn"

    def __init__(self, config: DcnnConfig, seed: int = 0):
        super().__init__(config)
        rng = make_rng(seed, STREAM_INIT)
        conv, channels, length = _conv_stack(config.in_planes, config.in_length, config.conv_specs,
                                             _selu_params(config.selu_mode), rng)
        self.net = Sequential(conv + [
            Flatten(),
            Dense(channels * length, config.dense_width, rng),
            Tanh(),
            Dense(config.dense_width, config.n_classes, rng),
        ])

    @property
    def layers(self):
        return self.net.layers

    @property
    def input_shape(self):
        return (self.config.in_planes, self.config.in_length)

    def forward(self, x):
        return self.net.forward(x)

    def backward(self, grad):
        return self.net.backward(grad)


class Mcm(Model):
    arch = "mcm"

    def __init__(self, config: McmConfig, seed: int = 0):
        super().__init__(config)
        rng = make_rng(seed, STREAM_INIT)
        self.branches = []
        for _ in range(config.n_branches):
            conv, channels, _ = _conv_stack(config.in_planes, config.in_length, config.conv_specs,
                                            _selu_params(config.selu_mode), rng)
            self.branches.append(Sequential(conv + [GlobalAvgPool()]))
        self.pooled_width = config.n_branches * channels
        self.head = Dense(self.pooled_width, config.n_classes, rng)

    @property
    def layers(self):
        return [layer for b in self.branches for layer in b.layers] + [self.head]

    @property
    def input_shape(self):
        return (self.config.n_branches, self.config.in_planes, self.config.in_length)

    def pooled(self, x):
        return np.concatenate([b.forward(x[:, i]) for i, b in enumerate(self.branches)], axis=1)

    def forward(self, x):
        return self.head.forward(self.pooled(x))

    def backward(self, grad):
        g = self.head.backward(grad)
        parts = np.split(g, len(self.branches), axis=1)
        return np.stack([b.backward(p) for b, p in zip(self.branches, parts)], axis=1)


def build_dcnn(cfg: DcnnConfig = DcnnConfig(), seed: int = 0) -> Dcnn:
    if len(cfg.conv_specs) != 4:
        raise BadConfig("DCNN needs exactly 4 conv layers")
    return Dcnn(cfg, seed)


def build_dcnn_mcm(cfg: McmConfig = McmConfig(), seed: int = 0) -> Mcm:
    if len(cfg.conv_specs) != 4 or cfg.n_branches != 4:
        raise BadConfig("DCNN-MCM needs 4 branches of exactly 4 conv layers")
    return Mcm(cfg, seed)


def layer_counts(model: Model) -> dict:
    counts = {}
    for layer in model.layers:
        counts[layer.name] = counts.get(layer.name, 0) + 1
    return counts


# --- data views ---------------------------------------------------------------

@dataclass
class ModelData:
    """Inputs, labels and split tags as one model consumes them."""

    x: np.ndarray
    y: np.ndarray
    tags: np.ndarray
    # dataset example indices behind each row, (rows,) or (rows, n_rx)
    source: np.ndarray


def model_data(model: Model, ds: LabeledDataset) -> ModelData:
    """
    Arrange ``ds`` for ``model``: one example per row for the DCNN; one
    (test, snapshot, transmitter) group of four receivers per row for the MCM,
    tagged with the split of its first receiver.
    """
    feat_shape = (ds.n_planes, ds.plane_length)
    expected = tuple(model.input_shape[-2:])
    if feat_shape != expected:
        raise ShapeMismatch(f"dataset features {feat_shape} do not match model input {expected}")
    if model.arch == "mcm":
        groups = ds.groups()
        return ModelData(x=ds.features[groups], y=ds.labels[groups[:, 0]].astype(np.int64),
                         tags=ds.split_tags[groups[:, 0]], source=groups)
    idx = np.arange(len(ds))
    return ModelData(x=ds.features, y=ds.labels.astype(np.int64), tags=ds.split_tags, source=idx)


def _batches(ds, data, model, tag, batch_size, seed):
    if model.arch == "dcnn":
        yield from batch_iterator(ds, tag, batch_size, seed)
        return
    rows = np.flatnonzero(data.tags == tag)
    rows = rows[make_rng(seed).permutation(rows.size)]
    for start in range(0, rows.size, batch_size):
        yield rows[start:start + batch_size]


# --- training -----------------------------------------------------------------

@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


@dataclass
class TrainingHistory:
    records: List[EpochRecord] = field(default_factory=list)
    best_epoch: Optional[int] = None
    wall_time_s: float = 0.0

    def __len__(self):
        return len(self.records)

    def to_csv(self) -> str:
        lines = ["epoch,train_loss,train_acc,val_loss,val_acc"]
        for r in self.records:
            lines.append(f"{r.epoch},{r.train_loss:.8f},{r.train_acc:.6f},{r.val_loss:.8f},{r.val_acc:.6f}")
        return "\n".join(lines) + "\n"


def _loss_acc(model, x, y):
    logits = model.logits(x)
    loss, _ = F.softmax_cross_entropy(logits, y)
    return loss, float(np.mean(np.argmax(logits, axis=1) == y))


def train(model: Model, ds: LabeledDataset, tc: TrainConfig = TrainConfig(), labels=None) -> TrainingHistory:
    """
    Fit ``model`` on TRAIN with Adam, monitoring VAL after every epoch.

    Stops after ``tc.patience`` epochs without a new best validation accuracy
    and restores the weights of the best epoch (earliest on ties).

    Parameters
    ----------
    labels : np.ndarray, optional
        Replacement per-row labels (used by label-permutation controls).
    """
    history = TrainingHistory()
    if tc.max_epochs == 0:
        return history
    data = model_data(model, ds)
    y = data.y if labels is None else np.asarray(labels, dtype=np.int64)
    train_rows = np.flatnonzero(data.tags == TRAIN_TAG)
    val_rows = np.flatnonzero(data.tags == VAL_TAG)
    if train_rows.size == 0 or val_rows.size == 0:
        raise EmptySplit("TRAIN and VAL splits must both be non-empty")

    state = AdamState.for_params(model.params, lr=tc.lr, beta1=tc.beta1, beta2=tc.beta2, epsilon=tc.epsilon)
    best_acc, best_params, stale = -1.0, None, 0
    t0 = time.perf_counter()
    for epoch in range(1, tc.max_epochs + 1):
        total_loss = correct = seen = 0
        for rows in _batches(ds, data, model, TRAIN_TAG, tc.batch_size, derive_seed(tc.seed, STREAM_TRAIN, epoch)):
            logits = model.forward(data.x[rows])
            loss, grad = F.softmax_cross_entropy(logits, y[rows])
            model.backward(grad.astype(logits.dtype))
            adam_step(model.params, model.grads, state)
            total_loss += loss * rows.size
            correct += int(np.sum(np.argmax(logits, axis=1) == y[rows]))
            seen += rows.size
        val_loss, val_acc = _loss_acc(model, data.x[val_rows], y[val_rows])
        rec = EpochRecord(epoch, total_loss / seen, correct / seen, val_loss, val_acc)
        history.records.append(rec)
        log.info("epoch %d: train_loss=%.4f train_acc=%.3f val_loss=%.4f val_acc=%.3f",
                 epoch, rec.train_loss, rec.train_acc, val_loss, val_acc)
        if val_acc > best_acc:
            best_acc, stale = val_acc, 0
            history.best_epoch = epoch
            best_params = [p.copy() for p in model.params]
        else:
            stale += 1
            if stale >= tc.patience:
                break
    for p, b in zip(model.params, best_params):
        p[...] = b
    history.wall_time_s = time.perf_counter() - t0
    return history


# --- evaluation ---------------------------------------------------------------

@dataclass
class EvalReport:
    accuracy: float
    confusion: np.ndarray  # rows = true class, cols = predicted
    precision: np.ndarray
    recall: np.ndarray

    def confusion_csv(self) -> str:
        n = self.confusion.shape[0]
        names = [f"Tx{i}" for i in range(n)]
        lines = ["true\\pred," + ",".join(names)]
        for i in range(n):
            lines.append(names[i] + "," + ",".join(str(int(v)) for v in self.confusion[i]))
        return "\n".join(lines) + "\n"

    def summary_line(self) -> str:
        return f"accuracy={self.accuracy:.6f}"


def report_from_predictions(y_true, y_pred, n_classes: int = 4) -> EvalReport:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.size == 0:
        raise EmptySplit("nothing to evaluate")
    conf = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(conf, (y_true, y_pred), 1)
    diag = np.diag(conf).astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.nan_to_num(diag / conf.sum(axis=0))
        recall = np.nan_to_num(diag / conf.sum(axis=1))
    return EvalReport(accuracy=float(diag.sum() / conf.sum()), confusion=conf,
                      precision=precision, recall=recall)


def evaluate(model: Model, ds: LabeledDataset, split="EVAL") -> EvalReport:
    """Argmax predictions on ``split`` (ties go to the lowest class id)."""
    data = model_data(model, ds)
    rows = np.flatnonzero(data.tags == split_tag(split))
    if rows.size == 0:
        raise EmptySplit(f"split {split} is empty")
    probs = np.concatenate([model.predict_proba(data.x[rows[i:i + _EVAL_CHUNK]])
                            for i in range(0, rows.size, _EVAL_CHUNK)])
    return report_from_predictions(data.y[rows], np.argmax(probs, axis=1), ds.n_classes)


# --- persistence --------------------------------------------------------------

def save_model(model: Model, path) -> None:
    """Architecture tag, length-prefixed canonical config text, then the EAWT weights."""
    text = canonical_text(model.config).encode("utf-8")
    buf = io.BytesIO()
    buf.write(struct.pack("<BI", ARCH_TAGS[model.arch], len(text)))
    buf.write(text)
    write_weights(buf, model.params)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_model(path, arch: Optional[str] = None) -> Model:
    """
    Rebuild a model from ``path``.

    Raises ``ArchMismatch`` if ``arch`` is given and differs from the file,
    or if the stored tensors do not fit the stored architecture.
    """
    with open(path, "rb") as fh:
        head = fh.read(5)
        if len(head) < 5:
            raise TruncatedFile(f"{path}: header truncated")
        tag, n = struct.unpack("<BI", head)
        tags = {v: k for k, v in ARCH_TAGS.items()}
        if tag not in tags:
            raise BadMagic(f"{path}: unknown architecture tag {tag}")
        file_arch = tags[tag]
        if arch is not None and arch != file_arch:
            raise ArchMismatch(f"{path} holds a {file_arch} model, expected {arch}")
        text = fh.read(n)
        if len(text) != n:
            raise TruncatedFile(f"{path}: config text truncated")
        try:
            cfg_dict = json.loads(text.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise BadMagic(f"{path}: unreadable config header") from exc
        cfg_cls = DcnnConfig if file_arch == "dcnn" else McmConfig
        model = build_dcnn(from_dict(cfg_cls, cfg_dict)) if file_arch == "dcnn" \
            else build_dcnn_mcm(from_dict(cfg_cls, cfg_dict))
        tensors = read_weights(fh)
    load_weights(model, tensors)
    return model


def load_weights(model: Model, tensors) -> None:
    params = model.params
    if len(tensors) != len(params) or any(t.shape != p.shape for t, p in zip(tensors, params)):
        raise ArchMismatch("stored tensors do not match the model architecture")
    for p, t in zip(params, tensors):
        p[...] = t

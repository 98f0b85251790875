"""Pipeline stages shared by the CLI and the acceptance tests."""

import dataclasses
import hashlib
import json
import time

import numpy as np

from .config import ExperimentConfig, config_hash
from .dataset import SPLITS, LabeledDataset, build_dataset
from .models import build_dcnn, build_dcnn_mcm, evaluate, model_data, train
from .seeding import STREAM_CONTROL, STREAM_INIT, STREAM_TRAIN, derive_seed, make_rng
from .simulator import default_plan, sample_mimo_channel


def generate(cfg: ExperimentConfig) -> LabeledDataset:
    plan = default_plan(cfg.zc, cfg.plan)
    channel = sample_mimo_channel(cfg.seed, cfg.channel)
    return build_dataset(plan, channel, cfg.dataset, cfg.chanest, cfg.snr_db, cfg.seed,
                         drift_std=cfg.channel.drift_std)


def manifest(cfg: ExperimentConfig, ds: LabeledDataset, dataset_bytes: bytes = b"") -> dict:
    counts, tests = {}, {}
    for name, tag in SPLITS.items():
        sel = ds.split_tags == tag
        counts[name] = {f"Tx{c}": int(np.sum(ds.labels[sel] == c)) for c in range(ds.n_classes)}
        tests[name] = sorted(int(t) for t in np.unique(ds.test_ids[sel]))
    return {
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "snr_db": cfg.snr_db,
        "n_examples": len(ds),
        "n_planes": ds.n_planes,
        "plane_length": ds.plane_length,
        "counts": counts,
        "tests_per_split": tests,
        "dataset_sha256": hashlib.sha256(dataset_bytes).hexdigest() if dataset_bytes else None,
    }


def manifest_text(m: dict) -> str:
    return json.dumps(m, sort_keys=True, indent=2) + "\n"


def build_model(cfg: ExperimentConfig, arch: str):
    seed = derive_seed(cfg.seed, STREAM_INIT)
    return build_dcnn(cfg.dcnn, seed) if arch == "dcnn" else build_dcnn_mcm(cfg.mcm, seed)


def train_config(cfg: ExperimentConfig):
    return dataclasses.replace(cfg.train, seed=derive_seed(cfg.seed, STREAM_TRAIN, cfg.train.seed))


def permuted_labels(model, ds, seed: int) -> np.ndarray:
    """Row labels with TRAIN and VAL labels shuffled among themselves (chance control)."""
    data = model_data(model, ds)
    y = data.y.copy()
    pool = np.flatnonzero(data.tags != SPLITS["EVAL"])
    y[pool] = y[pool][make_rng(seed, STREAM_CONTROL).permutation(pool.size)]
    return y


def run_arch(cfg: ExperimentConfig, ds: LabeledDataset, arch: str, shuffle_labels: bool = False):
    """Train and evaluate one architecture; returns (model, history, report, wall seconds)."""
    t0 = time.perf_counter()
    model = build_model(cfg, arch)
    labels = permuted_labels(model, ds, cfg.seed) if shuffle_labels else None
    history = train(model, ds, train_config(cfg), labels=labels)
    report = evaluate(model, ds, "EVAL")
    return model, history, report, time.perf_counter() - t0

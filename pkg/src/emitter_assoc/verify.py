"""
Fast self-check suite behind ``emitter-assoc verify``.

Each check returns a short detail string or raises ``AssertionError``.
"""

import os
import tempfile

import numpy as np

from . import chanest, zc
from .config import ChannelConfig, DcnnConfig, McmConfig
from .dataset import LabeledDataset, read_dataset, write_dataset
from .models import build_dcnn, build_dcnn_mcm, load_model, save_model
from .nn import functional as F
from .nn.gradcheck import grad_check, relative_error
from .nn.optim import AdamState, adam_step
from .simulator import ChannelTap, apply_fir, sample_mimo_channel

GRAD_TOL = 1e-4
_SMALL_CONV = ((4, 3), (4, 3), (6, 3), (6, 3))


def _fd(f, x, eps=1e-6):
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = f()
        flat[i] = orig - eps
        down = f()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * eps)
    return g


def check_zc_constant_amplitude():
    worst = max(np.max(np.abs(np.abs(zc.zc_sequence(zc.ZcParams(u, n))) - 1))
                for n in (5, 31, 127, 839) for u in (1, 2, 3))
    assert worst < 1e-12, worst
    return f"max deviation {worst:.1e}"


def check_zc_cazac():
    worst = 0.0
    for n in (5, 31, 127):
        x = zc.zc_sequence(zc.ZcParams(1, n))
        for lag in range(1, n):
            worst = max(worst, abs(np.sum(x * np.conj(np.roll(x, -lag)))) / n)
    assert worst < 1e-9, worst
    return f"max sidelobe/N {worst:.1e}"


def check_zc_flat_cross():
    n = 31
    a, b = zc.zc_sequence(zc.ZcParams(1, n)), zc.zc_sequence(zc.ZcParams(2, n))
    dev = np.max(np.abs(np.abs(zc.circular_cross_correlate(a, b)) - np.sqrt(n)))
    assert dev < 1e-6, dev
    return f"max |c| - sqrt(N) {dev:.1e}"


def check_fft_correlation():
    rng = np.random.default_rng(1)
    r = rng.standard_normal(200) + 1j * rng.standard_normal(200)
    x = rng.standard_normal(37) + 1j * rng.standard_normal(37)
    direct = np.array([np.sum(r[t:t + x.size] * np.conj(x)) for t in range(r.size - x.size + 1)])
    err = np.max(np.abs(zc.linear_cross_correlate(r, x) - direct)) / np.max(np.abs(direct))
    assert err < 1e-7, err
    return f"relative error {err:.1e}"


def check_cir_recovery():
    ch = sample_mimo_channel(7, ChannelConfig())
    x = zc.zc_sequence(zc.ZcParams(5, 839))
    worst = 0.0
    for rx in range(4):
        taps = ch.pairs[0][rx]
        lead = taps[-1].delay
        wave = np.tile(x, 4)
        wave = np.concatenate([wave[-lead:], wave]) if lead else wave
        rx_buf = apply_fir(wave, taps)[lead:lead + 4 * x.size]
        corr = chanest.estimate_cir(rx_buf, x)
        est = chanest.sync_truncate(corr, 128, search_length=corr.size - 127)
        h = ch.impulse_response(0, rx, 128)
        worst = max(worst, np.max(np.abs(est.taps - h)))
    assert worst < 1e-6, worst
    return f"max tap error {worst:.1e}"


def check_parseval():
    rng = np.random.default_rng(2)
    cir = rng.standard_normal(128) + 1j * rng.standard_normal(128)
    tf = chanest.cir_to_tf(cir, 256)
    err = abs(np.sum(np.abs(cir) ** 2) - np.sum(np.abs(tf) ** 2) / 256) / np.sum(np.abs(cir) ** 2)
    assert err < 1e-9, err
    return f"relative error {err:.1e}"


def check_grad_conv1d():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((3, 17))
    w = rng.standard_normal((4, 3, 5))
    b = rng.standard_normal(4)
    up = rng.standard_normal((4, 13))
    gx, gw, gb = F.conv1d_backward(up, x, w)

    def f():
        return float(np.sum(F.conv1d_forward(x, w, b) * up))

    err = max(np.max(relative_error(gx, _fd(f, x))), np.max(relative_error(gw, _fd(f, w))),
              np.max(relative_error(gb, _fd(f, b))))
    assert err < GRAD_TOL, f"conv1d gradient error {err:.2e}"
    return f"max relative error {err:.1e}"


def check_grad_dense():
    rng = np.random.default_rng(4)
    x, w, b = rng.standard_normal(6), rng.standard_normal((3, 6)), rng.standard_normal(3)
    up = rng.standard_normal(3)
    gx, gw, gb = F.dense_backward(up, x, w)

    def f():
        return float(np.sum(F.dense_forward(x, w, b) * up))

    err = max(np.max(relative_error(gx, _fd(f, x))), np.max(relative_error(gw, _fd(f, w))),
              np.max(relative_error(gb, _fd(f, b))))
    assert err < GRAD_TOL, err
    return f"max relative error {err:.1e}"


def check_grad_activations():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((3, 9))
    up = rng.standard_normal((3, 9))
    worst = 0.0
    for fwd, grad in ((F.selu, F.selu_grad), (F.tanh, F.tanh_grad)):
        worst = max(worst, np.max(relative_error(grad(x) * up, _fd(lambda: float(np.sum(fwd(x) * up)), x))))
    gup = rng.standard_normal(3)
    ga = F.global_average_pool_backward(gup, 9)
    worst = max(worst, np.max(relative_error(ga, _fd(lambda: float(np.sum(F.global_average_pool(x) * gup)), x))))
    assert worst < GRAD_TOL, worst
    return f"max relative error {worst:.1e}"


def check_grad_softmax():
    rng = np.random.default_rng(6)
    z = rng.standard_normal(4)
    _, g = F.softmax_cross_entropy(z, 2)
    err = np.max(relative_error(g, _fd(lambda: F.softmax_cross_entropy(z, 2)[0], z)))
    assert err < 1e-6, err
    return f"max relative error {err:.1e}"


def check_grad_dcnn():
    cfg = DcnnConfig(conv_specs=_SMALL_CONV, dense_width=5, in_planes=4, in_length=16)
    x = np.random.default_rng(7).random((4, 16))
    err = grad_check(build_dcnn(cfg, seed=1), x, 1)
    assert err < GRAD_TOL, f"DCNN gradient error {err:.2e}"
    return f"max relative error {err:.1e}"


def check_grad_mcm():
    cfg = McmConfig(conv_specs=_SMALL_CONV, in_planes=4, in_length=12)
    x = np.random.default_rng(8).random((4, 4, 12))
    err = grad_check(build_dcnn_mcm(cfg, seed=1), x, 3)
    assert err < GRAD_TOL, f"DCNN-MCM gradient error {err:.2e}"
    return f"max relative error {err:.1e}"


def check_adam_first_step():
    p = [np.array([0.5])]
    adam_step(p, [np.array([3.0])], AdamState(lr=1e-3))
    step = abs(p[0][0] - 0.5)
    assert abs(step - 1e-3) / 1e-3 < 1e-6, step
    return f"step {step:.6g}"


def check_fir():
    out = apply_fir([1, 0, 0], [ChannelTap(0, 1), ChannelTap(2, 0.5j)])
    assert np.allclose(out[:3], [1, 0, 0.5j]), out
    return "impulse response matches"


def check_dataset_roundtrip():
    rng = np.random.default_rng(9)
    ds = LabeledDataset(features=rng.random((8, 4, 16)).astype(np.float32),
                        labels=np.arange(8, dtype=np.uint8) % 4, rx_ids=np.arange(8, dtype=np.uint8) // 2 % 4,
                        test_ids=np.array([0, 1, 2, 3, 4, 5, 6, 7], dtype=np.uint16),
                        split_tags=np.array([2, 2, 0, 0, 0, 1, 1, 0], dtype=np.uint8))
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "ds.eacf")
        write_dataset(ds, path)
        assert read_dataset(path).equals(ds)
    return "bit-exact"


def check_model_roundtrip():
    model = build_dcnn(DcnnConfig(conv_specs=_SMALL_CONV, dense_width=5, in_length=16), seed=2)
    x = np.random.default_rng(10).random((5, 4, 16)).astype(np.float32)
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "m.eawt")
        save_model(model, path)
        assert np.array_equal(load_model(path).forward(x), model.forward(x))
    return "identical logits"


CHECKS = [
    ("zc_constant_amplitude", check_zc_constant_amplitude),
    ("zc_cazac_autocorrelation", check_zc_cazac),
    ("zc_flat_cross_correlation", check_zc_flat_cross),
    ("fft_vs_direct_correlation", check_fft_correlation),
    ("fir_impulse_response", check_fir),
    ("cir_recovery", check_cir_recovery),
    ("parseval", check_parseval),
    ("grad_conv1d", check_grad_conv1d),
    ("grad_dense", check_grad_dense),
    ("grad_activations_pooling", check_grad_activations),
    ("grad_softmax_cross_entropy", check_grad_softmax),
    ("grad_dcnn", check_grad_dcnn),
    ("grad_dcnn_mcm", check_grad_mcm),
    ("adam_first_step", check_adam_first_step),
    ("dataset_roundtrip", check_dataset_roundtrip),
    ("model_roundtrip", check_model_roundtrip),
]


def run_checks(out=print):
    """Run every check, reporting one line each. Returns the names of failed checks."""
    failed = []
    for name, check in CHECKS:
        try:
            detail = check()
            out(f"PASS {name}: {detail}")
        except Exception as exc:  # noqa: BLE001 - any failure is reported, not raised
            failed.append(name)
            out(f"FAIL {name}: {type(exc).__name__}: {exc}")
    return failed

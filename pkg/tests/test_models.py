import dataclasses

import numpy as np
import pytest

from emitter_assoc.config import DcnnConfig, McmConfig, TrainConfig
from emitter_assoc.dataset import EVAL_TAG
from emitter_assoc.errors import ArchMismatch, BadConfig, BadMagic, EmptySplit, ShapeMismatch, TruncatedFile
from emitter_assoc.experiment import build_model, run_arch, train_config
from emitter_assoc.models import (build_dcnn, build_dcnn_mcm, evaluate, layer_counts, load_model,
                                  model_data, report_from_predictions, save_model, train)
from emitter_assoc.nn.gradcheck import grad_check


@pytest.fixture(scope="module")
def dcnn():
    return build_dcnn(DcnnConfig(), seed=0)


@pytest.fixture(scope="module")
def mcm():
    return build_dcnn_mcm(McmConfig(), seed=0)


class TestArchitecture:
    def test_dcnn_layers(self, dcnn):
        assert layer_counts(dcnn) == {"conv1d": 4, "selu": 4, "flatten": 1, "dense": 2, "tanh": 1}
        names = [l.name for l in dcnn.layers]
        assert names == ["conv1d", "selu"] * 4 + ["flatten", "dense", "tanh", "dense"]

    def test_no_pooling_in_dcnn(self, dcnn):
        assert "global_avg_pool" not in layer_counts(dcnn)

    def test_mcm_branches(self, mcm):
        assert len(mcm.branches) == 4
        assert mcm.pooled_width == 4 * 64
        assert mcm.head.weight.shape == (4, 256)
        for b in mcm.branches:
            assert [l.name for l in b.layers] == ["conv1d", "selu"] * 4 + ["global_avg_pool"]

    def test_mcm_branches_independent(self, mcm):
        w = [b.layers[0].weight for b in mcm.branches]
        assert not np.array_equal(w[0], w[1])

    @pytest.mark.parametrize("arch", ["dcnn", "mcm"])
    def test_softmax_head(self, dcnn, mcm, rng, arch):
        m = dcnn if arch == "dcnn" else mcm
        p = m.predict_proba(rng.random((5,) + m.input_shape).astype(np.float32))
        assert p.shape == (5, 4)
        assert np.all((p >= 0) & (p <= 1))
        assert np.max(np.abs(p.astype(np.float64).sum(axis=1) - 1)) < 1e-6
        p64 = m.astype(np.float64).predict_proba(rng.random((3,) + m.input_shape))
        assert np.max(np.abs(p64.sum(axis=1) - 1)) < 1e-9

    def test_same_seed_same_weights(self):
        assert build_dcnn(DcnnConfig(), 5).weights_digest() == build_dcnn(DcnnConfig(), 5).weights_digest()
        assert build_dcnn(DcnnConfig(), 5).weights_digest() != build_dcnn(DcnnConfig(), 6).weights_digest()

    def test_forward_pure(self, dcnn, rng):
        x = rng.random((2, 4, 256)).astype(np.float32)
        assert np.array_equal(dcnn.forward(x), dcnn.forward(x))

    def test_time_permutation_within_branch(self, mcm, rng):
        x = rng.random((1, 4, 4, 256))
        b = mcm.branches[2]
        # the branch output before pooling, permuted in time, pools to the same vector
        h = x[:, 2]
        for layer in b.layers[:-1]:
            h = layer.forward(h)
        perm = rng.permutation(h.shape[-1])
        pooled = b.layers[-1].forward(h)
        np.testing.assert_allclose(b.layers[-1].forward(h[..., perm]), pooled, rtol=1e-12)

    @pytest.mark.parametrize("specs", [((16, 7),) * 3, ((16, 7),) * 5])
    def test_needs_four_convs(self, specs):
        with pytest.raises(BadConfig):
            build_dcnn(DcnnConfig(conv_specs=specs))
        with pytest.raises(BadConfig):
            build_dcnn_mcm(McmConfig(conv_specs=specs))

    def test_kernel_too_large(self):
        with pytest.raises(BadConfig):
            build_dcnn(DcnnConfig(conv_specs=((4, 5),) * 4, in_length=16))


class TestFullGradients:
    # eps=1e-6: at 1e-5 a few pre-activations sit close enough to the SeLU kink
    # for the central difference to straddle it
    def test_dcnn(self, dcnn, rng):
        err = grad_check(dcnn, rng.random((4, 256)), 1, epsilon=1e-6, max_per_tensor=24, seed=1)
        assert err < 1e-4

    def test_mcm(self, mcm, rng):
        err = grad_check(mcm, rng.random((4, 4, 256)), 2, epsilon=1e-6, max_per_tensor=24, seed=1)
        assert err < 1e-4


class TestTrain:
    def test_loss_decreases(self, small_cfg, small_ds):
        model = build_model(small_cfg, "dcnn")
        h = train(model, small_ds, dataclasses.replace(train_config(small_cfg), max_epochs=6, patience=6))
        assert h.records[-1].train_loss < h.records[0].train_loss

    def test_max_epochs_zero(self, small_cfg, small_ds):
        model = build_model(small_cfg, "dcnn")
        digest = model.weights_digest()
        h = train(model, small_ds, dataclasses.replace(small_cfg.train, max_epochs=0))
        assert len(h) == 0 and model.weights_digest() == digest

    @pytest.mark.parametrize("arch", ["dcnn", "mcm"])
    def test_deterministic(self, small_cfg, small_ds, arch):
        digests = []
        for _ in range(2):
            model = build_model(small_cfg, arch)
            train(model, small_ds, train_config(small_cfg))
            digests.append(model.weights_digest())
        assert digests[0] == digests[1]

    def test_best_epoch_restored(self, small_cfg, small_ds):
        model = build_model(small_cfg, "dcnn")
        h = train(model, small_ds, dataclasses.replace(train_config(small_cfg), max_epochs=5, patience=5))
        accs = [r.val_acc for r in h.records]
        assert h.best_epoch == 1 + int(np.argmax(accs))
        val = evaluate(model, small_ds, "VAL")
        assert val.accuracy == pytest.approx(max(accs))

    def test_early_stop(self, small_cfg, small_ds):
        tc = dataclasses.replace(train_config(small_cfg), max_epochs=50, patience=1, lr=0.0)
        h = train(build_model(small_cfg, "dcnn"), small_ds, tc)
        # with a frozen model val accuracy never improves after epoch 1
        assert len(h) == 2 and h.best_epoch == 1

    def test_shape_mismatch(self, small_ds):
        with pytest.raises(ShapeMismatch):
            train(build_dcnn(DcnnConfig(), 0), small_ds, TrainConfig(max_epochs=1))

    def test_empty_split(self, small_cfg, small_ds):
        ds = dataclasses.replace(small_ds, split_tags=np.full_like(small_ds.split_tags, EVAL_TAG))
        with pytest.raises(EmptySplit):
            train(build_model(small_cfg, "dcnn"), ds, small_cfg.train)

    @pytest.mark.parametrize("kw", [{"batch_size": 0}, {"patience": 0}])
    def test_bad_train_config(self, kw):
        with pytest.raises(BadConfig):
            TrainConfig(**kw)

    def test_history_csv(self, small_cfg, small_ds):
        h = train(build_model(small_cfg, "mcm"), small_ds, train_config(small_cfg))
        lines = h.to_csv().splitlines()
        assert lines[0] == "epoch,train_loss,train_acc,val_loss,val_acc" and len(lines) == len(h) + 1


class TestEvaluate:
    def test_oracle(self):
        y = np.array([0, 1, 2, 3, 3, 1])
        r = report_from_predictions(y, y)
        assert r.accuracy == 1.0
        assert np.array_equal(r.confusion, np.diag(np.bincount(y, minlength=4)))

    def test_constant_predictor(self):
        y = np.array([0, 1, 1, 2, 1, 3, 1])
        r = report_from_predictions(y, np.ones_like(y))
        assert r.accuracy == pytest.approx(np.max(np.bincount(y)) / y.size)

    def test_row_sums_and_trace(self, rng):
        y, p = rng.integers(0, 4, 50), rng.integers(0, 4, 50)
        r = report_from_predictions(y, p)
        assert np.array_equal(r.confusion.sum(axis=1), np.bincount(y, minlength=4))
        assert r.confusion.sum() == 50 and r.accuracy == pytest.approx(np.trace(r.confusion) / 50)
        assert r.accuracy == pytest.approx(np.mean(y == p))

    def test_csv(self):
        r = report_from_predictions([0, 1], [0, 0])
        assert r.confusion_csv().splitlines() == ["true\\pred,Tx0,Tx1,Tx2,Tx3", "Tx0,1,0,0,0", "Tx1,1,0,0,0",
                                                  "Tx2,0,0,0,0", "Tx3,0,0,0,0"]
        assert r.summary_line() == "accuracy=0.500000"

    def test_empty(self):
        with pytest.raises(EmptySplit):
            report_from_predictions([], [])

    @pytest.mark.parametrize("arch", ["dcnn", "mcm"])
    def test_does_not_mutate(self, small_cfg, small_ds, arch):
        model = build_model(small_cfg, arch)
        digest = model.weights_digest()
        r = evaluate(model, small_ds, "EVAL")
        assert model.weights_digest() == digest
        n_eval = int(np.sum(model_data(model, small_ds).tags == EVAL_TAG))
        assert r.confusion.sum() == n_eval

    def test_mcm_rows_are_groups(self, small_cfg, small_ds):
        data = model_data(build_model(small_cfg, "mcm"), small_ds)
        assert data.x.shape[1:] == (4, 4, 64)
        assert np.all(small_ds.rx_ids[data.source] == np.arange(4))
        assert np.all(small_ds.labels[data.source] == data.y[:, None])


class TestPersistence:
    @pytest.mark.parametrize("arch", ["dcnn", "mcm"])
    def test_roundtrip_bit_exact(self, small_cfg, arch, tmp_path, rng):
        model = build_model(small_cfg, arch)
        save_model(model, tmp_path / "m.bin")
        back = load_model(tmp_path / "m.bin")
        x = rng.random((100,) + model.input_shape).astype(np.float32)
        assert back.arch == arch and back.config == model.config
        assert np.array_equal(back.forward(x), model.forward(x))

    def test_arch_mismatch(self, small_cfg, tmp_path):
        save_model(build_model(small_cfg, "dcnn"), tmp_path / "m.bin")
        with pytest.raises(ArchMismatch):
            load_model(tmp_path / "m.bin", arch="mcm")

    @pytest.mark.parametrize("cut", [3, 40, -8])
    def test_truncated(self, small_cfg, tmp_path, cut):
        p = tmp_path / "m.bin"
        save_model(build_model(small_cfg, "mcm"), p)
        p.write_bytes(p.read_bytes()[:cut])
        with pytest.raises((BadMagic, TruncatedFile)):
            load_model(p)

    def test_bad_tag(self, small_cfg, tmp_path):
        p = tmp_path / "m.bin"
        save_model(build_model(small_cfg, "dcnn"), p)
        p.write_bytes(b"\x07" + p.read_bytes()[1:])
        with pytest.raises(BadMagic):
            load_model(p)


def test_run_arch_reports(small_cfg, small_ds):
    model, history, report, wall = run_arch(small_cfg, small_ds, "dcnn")
    assert 0 <= report.accuracy <= 1 and wall > 0 and len(history) >= 1

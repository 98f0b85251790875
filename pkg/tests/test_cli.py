import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from emitter_assoc import cli
from emitter_assoc.config import DcnnConfig, config_hash, load_config, to_dict
from emitter_assoc.dataset import read_dataset
from emitter_assoc.models import build_dcnn, save_model
from conftest import small_config


def sha(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    cfg_path = d / "small.json"
    cfg_path.write_text(json.dumps(to_dict(small_config())))
    return d, str(cfg_path)


@pytest.fixture(scope="module")
def generated(work):
    d, cfg = work
    out = str(d / "ds.eacf")
    assert cli.main(["generate", "--config", cfg, "--out", out]) == 0
    return out


@pytest.fixture(scope="module")
def trained(work, generated):
    d, cfg = work
    out = str(d / "m.eawt")
    assert cli.main(["train", "--config", cfg, "--dataset", generated, "--arch", "dcnn", "--out", out]) == 0
    return out


class TestGenerate:
    def test_manifest(self, work, generated):
        _, cfg = work
        m = json.loads(open(generated + ".manifest.json").read())
        assert m["tests_per_split"]["EVAL"] == [0, 1]
        assert set(m["tests_per_split"]["TRAIN"]) <= set(range(2, 10))
        assert m["config_hash"] == config_hash(load_config(cfg))
        assert m["dataset_sha256"] == sha(generated)
        assert sum(sum(c.values()) for c in m["counts"].values()) == m["n_examples"] == 320

    def test_rerun_identical(self, work, generated):
        d, cfg = work
        out = str(d / "again.eacf")
        assert cli.main(["generate", "--config", cfg, "--out", out]) == 0
        assert sha(out) == sha(generated)
        a = json.loads(open(out + ".manifest.json").read())
        b = json.loads(open(generated + ".manifest.json").read())
        assert a == b

    def test_seed_override_changes_data(self, work, generated):
        d, cfg = work
        out = str(d / "seed9.eacf")
        assert cli.main(["generate", "--config", cfg, "--seed", "9", "--out", out]) == 0
        assert sha(out) != sha(generated)
        m = json.loads(open(out + ".manifest.json").read())
        assert m["seed"] == 9

    def test_snr_none(self, work):
        d, cfg = work
        out = str(d / "clean.eacf")
        assert cli.main(["generate", "--config", cfg, "--snr-db", "none", "--out", out]) == 0
        assert json.loads(open(out + ".manifest.json").read())["snr_db"] is None

    def test_missing_directory(self, work, capsys):
        d, cfg = work
        assert cli.main(["generate", "--config", cfg, "--out", str(d / "nope" / "x.eacf")]) == 3
        assert "does not exist" in capsys.readouterr().err

    def test_bad_config_key(self, work):
        d, _ = work
        bad = d / "bad.json"
        bad.write_text(json.dumps({"seed": 1, "bogus": 2}))
        assert cli.main(["generate", "--config", str(bad), "--out", str(d / "x.eacf")]) == 2

    def test_unparseable_config(self, work):
        d, _ = work
        bad = d / "bad2.json"
        bad.write_text("{not json")
        assert cli.main(["generate", "--config", str(bad), "--out", str(d / "x.eacf")]) == 2

    def test_missing_config(self, work):
        d, _ = work
        assert cli.main(["generate", "--config", str(d / "absent.json"), "--out", str(d / "x.eacf")]) == 2

    def test_bad_arguments(self):
        assert cli.main(["generate"]) == 2
        assert cli.main(["train", "--arch", "resnet", "--dataset", "a", "--out", "b"]) == 2


class TestTrainEval:
    def test_history(self, trained):
        lines = open(trained + ".history.csv").read().splitlines()
        assert lines[0] == "epoch,train_loss,train_acc,val_loss,val_acc" and len(lines) >= 2

    def test_train_rerun_identical(self, work, generated, trained):
        d, cfg = work
        out = str(d / "m2.eawt")
        assert cli.main(["train", "--config", cfg, "--dataset", generated, "--arch", "dcnn", "--out", out]) == 0
        assert sha(out) == sha(trained)

    def test_mcm_tag(self, work, generated):
        d, cfg = work
        out = str(d / "mcm.eawt")
        assert cli.main(["train", "--config", cfg, "--dataset", generated, "--arch", "mcm", "--out", out]) == 0
        assert open(out, "rb").read(1) == b"\x02"

    def test_eval_outputs(self, work, generated, trained, capsys):
        d, _ = work
        out = str(d / "conf.csv")
        assert cli.main(["eval", "--model", trained, "--dataset", generated, "--out", out]) == 0
        printed = capsys.readouterr().out.strip()
        rows = open(out).read().splitlines()
        assert rows[0] == "true\\pred,Tx0,Tx1,Tx2,Tx3" and [r.split(",")[0] for r in rows[1:]] == [
            "Tx0", "Tx1", "Tx2", "Tx3"]
        total = sum(int(v) for r in rows[1:] for v in r.split(",")[1:])
        ds = read_dataset(generated)
        assert total == len(ds.indices("EVAL"))
        summary = open(str(d / "conf.summary.txt")).read().strip()
        assert summary == printed and summary.startswith("accuracy=") and len(summary.split(".")[1]) == 6

    def test_eval_rerun_identical(self, work, generated, trained):
        d, _ = work
        a, b = str(d / "e1.csv"), str(d / "e2.csv")
        assert cli.main(["eval", "--model", trained, "--dataset", generated, "--out", a]) == 0
        assert cli.main(["eval", "--model", trained, "--dataset", generated, "--out", b]) == 0
        assert sha(a) == sha(b) and sha(str(d / "e1.summary.txt")) == sha(str(d / "e2.summary.txt"))

    def test_train_shape_mismatch(self, work, generated):
        d, _ = work
        # default config expects 256-sample planes; the small dataset has 64
        assert cli.main(["train", "--dataset", generated, "--arch", "dcnn", "--out", str(d / "x.eawt")]) == 4

    def test_eval_shape_mismatch(self, work, generated):
        d, _ = work
        save_model(build_dcnn(DcnnConfig(), 0), d / "big.eawt")
        assert cli.main(["eval", "--model", str(d / "big.eawt"), "--dataset", generated,
                         "--out", str(d / "x.csv")]) == 4

    def test_eval_arch_mismatch(self, work, generated, trained):
        d, _ = work
        assert cli.main(["eval", "--model", trained, "--dataset", generated, "--arch", "mcm",
                         "--out", str(d / "x.csv")]) == 4

    def test_missing_dataset(self, work):
        d, cfg = work
        assert cli.main(["train", "--config", cfg, "--dataset", str(d / "none.eacf"), "--arch", "dcnn",
                         "--out", str(d / "x.eawt")]) == 3

    def test_corrupt_dataset(self, work, generated, trained):
        d, _ = work
        bad = d / "corrupt.eacf"
        bad.write_bytes(b"JUNK" + open(generated, "rb").read()[4:])
        assert cli.main(["eval", "--model", trained, "--dataset", str(bad), "--out", str(d / "x.csv")]) == 3


class TestVerify:
    def test_pristine(self, capsys):
        assert cli.main(["verify"]) == 0
        lines = [l for l in capsys.readouterr().out.splitlines() if l.startswith(("PASS", "FAIL"))]
        assert len(lines) >= 10 and all(l.startswith("PASS") for l in lines)

    def test_injected_fault(self, capsys):
        assert cli.main(["verify", "--inject-fault", "conv_backward_sign"]) == 1
        failed = [l for l in capsys.readouterr().out.splitlines() if l.startswith("FAIL")]
        assert any("grad_conv1d" in l for l in failed)
        # the fault is cleared afterwards
        assert cli.main(["verify"]) == 0


def test_e2e_small(work, tmp_path):
    _, cfg = work
    out = tmp_path / "run"
    assert cli.main(["e2e", "--config", cfg, "--out", str(out)]) == 0
    rows = (out / "results.csv").read_text().splitlines()
    assert rows[0] == "arch,eval_accuracy,epochs,wall_time_s"
    assert [r.split(",")[0] for r in rows[1:]] == ["dcnn", "mcm"]
    for name in ("dataset.eacf", "dcnn.eawt", "mcm.eawt", "dcnn.confusion.csv", "mcm.history.csv"):
        assert (out / name).exists()


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "emitter_assoc", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "generate" in r.stdout and "verify" in r.stdout

import numpy as np
import pytest

from sotmlp import cli, dataset, netlist, network, trainer
from sotmlp.config import ConfigError, load_config


@pytest.fixture
def synth(tmp_path):
    """Tiny separable IDX dataset: bright top half = class 1."""
    rng = np.random.default_rng(0)

    def make(n):
        y = rng.integers(0, 2, n)
        img = rng.integers(0, 40, (n, 28, 28))
        img[y == 1, :14] += 200
        img[y == 0, 14:] += 200
        return img.astype(np.uint8), y.astype(np.uint8)

    d = tmp_path / "mnist"
    d.mkdir()
    for split, n in (("train", 300), ("test", 100)):
        img, lab = make(n)
        (d / dataset.MNIST_FILES[f"{split}_images"]).write_bytes(dataset.encode_idx_images(img))
        (d / dataset.MNIST_FILES[f"{split}_labels"]).write_bytes(dataset.encode_idx_labels(lab))
    return d


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture
def trained_run(synth, tmp_path):
    out = tmp_path / "run"
    common = ["--mnist-dir", synth, "--out", out, "--topology", "784,4,10"]
    assert run("train", *common, "--epochs", 2, "--lr", 1.0) == 0
    return common, out


def test_train_writes_artifacts(trained_run):
    _, out = trained_run
    for name in ("checkpoint.txt", "model.txt", "metrics.log", "config.ini"):
        assert (out / name).exists()
    assert len(trainer.read_metrics(out / "metrics.log")) == 2
    assert network.load_model(out / "model.txt") == network.load_model(out / "checkpoint.txt")
    cfg = load_config(out / "config.ini")
    assert cfg.train.epochs == 2 and cfg.model.topology == "784,4,10"


def test_eval_matches_metrics_log(trained_run, capsys):
    common, out = trained_run
    capsys.readouterr()
    assert run("eval", *common) == 0
    logged = trainer.read_metrics(out / "metrics.log")[-1].test_accuracy
    line = capsys.readouterr().out.strip()
    assert line.startswith(f"accuracy={logged!r} ")


def test_eval_analog_matches_ideal_labels(trained_run):
    common, out = trained_run
    assert run("eval", *common, "--mode", "analog") == 0
    assert run("eval", *common, "--mode", "ideal") == 0
    a = np.loadtxt(out / "predictions_analog.txt")
    b = np.loadtxt(out / "predictions_ideal.txt")
    np.testing.assert_array_equal(a, b)


def test_infer_and_export_and_report(trained_run, capsys, tmp_path):
    common, out = trained_run
    capsys.readouterr()
    assert run("infer", *common, "--index", 3, "--mode", "analog") == 0
    text = capsys.readouterr().out
    assert text.startswith("class=") and text.count("out[") == 10
    cir = tmp_path / "net.cir"
    assert run("export-netlist", *common, "--output", cir) == 0
    assert len(netlist.resistors(cir.read_text())) == 2 * (4 * 785 + 10 * 5)
    assert run("report", *common, "--checkpoint", out / "checkpoint.txt") == 0
    rep = (out / "report.txt").read_text()
    assert "inference 1 clock(s), programming 14 clocks" in rep


def test_infer_from_text_image(trained_run, tmp_path, capsys):
    common, _ = trained_run
    img = tmp_path / "img.txt"
    np.savetxt(img, np.full(784, 255.0))
    assert run("infer", *common, "--image", img) == 0
    np.savetxt(img, np.zeros(5))
    assert run("infer", *common, "--image", img) == 2


def test_exit_codes(synth, tmp_path):
    out = tmp_path / "x"
    assert run("eval", "--out", out) == 2  # no checkpoint
    assert run("train", "--mnist-dir", tmp_path / "nowhere", "--out", out) == 2
    assert run("train", "--config", tmp_path / "missing.ini") == 2
    assert run("train", "--set", "train.bogus=1") == 2
    assert run("train", "--set", "circuit.vdd=-1") == 2
    with pytest.raises(SystemExit) as exc:
        run("frobnicate")
    assert exc.value.code == 2


def test_internal_error_exit_code(trained_run, monkeypatch):
    common, _ = trained_run

    def broken(*a, **k):
        raise cli.crossbar.SignalingError("RWL: expected VDD, got GND")

    monkeypatch.setattr(cli.network, "forward", broken)
    assert run("eval", *common, "--mode", "analog") == 1


def test_config_file_and_overrides(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[train]\nepochs = 3\nlearning_rate = 0.5\n[circuit]\nlinearize_inputs = no\n")
    cfg = load_config(ini, ["train.epochs=7"])
    assert cfg.train.epochs == 7 and cfg.train.learning_rate == 0.5
    assert cfg.circuit.linearize_inputs is False
    ini.write_text("[nope]\nx = 1\n")
    with pytest.raises(ConfigError):
        load_config(ini)
    with pytest.raises(ConfigError):
        load_config(None, ["train.epochs=three"])
    with pytest.raises(ConfigError):
        load_config(None, ["epochs=3"])
    assert load_config(None).dump() == load_config(None).dump()


def test_help_lists_commands(capsys):
    with pytest.raises(SystemExit):
        cli.main(["--help"])
    text = capsys.readouterr().out
    for cmd in cli.COMMANDS:
        assert cmd in text

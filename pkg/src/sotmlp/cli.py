"""Command-line entry point: train, eval, infer, export-netlist, report.

Exit codes: 0 success, 2 missing files or invalid configuration/input,
1 internal invariant breach.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import analysis, bitcells, crossbar, dataset, netlist, network, trainer
from .config import ConfigError, RunConfig, load_config

log = logging.getLogger("sotmlp")

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE = 0, 1, 2


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _split(cfg: RunConfig, split: str):
    d = cfg.data
    images, labels = getattr(d, f"{split}_images"), getattr(d, f"{split}_labels")
    if images or labels:
        if not (images and labels):
            raise ConfigError(f"data.{split}_images and data.{split}_labels must be given together")
        x, y = dataset.load_split(images, labels)
    else:
        x, y = dataset.load_mnist(d.mnist_dir, split)
    limit = getattr(d, f"{split}_limit")
    if limit:
        x, y = x[:limit], y[:limit]
    return x, y


def build_analog(cfg: RunConfig, model: network.BinarizedModel) -> network.AnalogMlp:
    """Build, map and calibrate the crossbar network for ``model``."""
    c = cfg.circuit
    mlp = network.build(
        model.topology,
        geometry=cfg.geometry,
        params=cfg.material,
        vdd=c.vdd,
        vss=c.vss,
        variation_sigma=c.variation_sigma,
        seed=c.variation_seed,
    )
    if c.vtc_table:
        table = bitcells.load_vtc_table(c.vtc_table, c.vss, c.vdd)
        for array in mlp.arrays:
            for neuron in array.neurons:
                neuron.vtc = table
    network.map_model(mlp, model)
    network.calibrate(mlp, c.v_read, c.pre_activation_scale, c.linearize_inputs)
    return mlp


def cmd_train(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg)
    x_train, y_train = _split(cfg, "train")
    x_test, y_test = _split(cfg, "test")
    metrics_path = out / "metrics.log"
    metrics_path.write_text("")

    def on_epoch(m):
        with open(metrics_path, "a") as fh:
            fh.write(m.line() + "\n")
        print(m.line(), flush=True)

    result = trainer.train(cfg.topology, x_train, y_train, cfg.train_config, x_test, y_test, on_epoch=on_epoch)
    trainer.save_checkpoint(out / "checkpoint.txt", result.student, result.teacher, cfg.train.delta_b)
    network.save_model(result.student, out / "model.txt")
    (out / "config.ini").write_text(cfg.dump())
    print(f"best_test_accuracy={result.best_accuracy!r} checkpoint={out / 'checkpoint.txt'}")
    return EXIT_OK


def _checkpoint(args, cfg: RunConfig) -> Path:
    path = Path(args.checkpoint) if args.checkpoint else Path(cfg.output.dir) / "checkpoint.txt"
    if not path.exists():
        raise FileNotFoundError(f"checkpoint {path} not found")
    return path


def evaluate_model(cfg: RunConfig, model: network.BinarizedModel, x, y, mode: str):
    """(accuracy, predictions) in ideal or analog mode."""
    if mode == "ideal":
        pred = network.classify(network.ideal_forward(model, x))
    else:
        mlp = build_analog(cfg, model)
        outputs, clocks = network.forward(mlp, dataset.to_voltages(x, cfg.circuit.v_read))
        if clocks != len(x):
            raise AssertionError(f"{len(x)} images took {clocks} clocks")
        pred = network.classify(outputs)
    return float(np.mean(pred == y)), pred


def cmd_eval(cfg: RunConfig, args) -> int:
    model = network.load_model(_checkpoint(args, cfg))
    x, y = _split(cfg, "test")
    acc, pred = evaluate_model(cfg, model, x, y, args.mode)
    line = f"accuracy={acc!r} mode={args.mode} images={len(y)}"
    print(line)
    out = _out_dir(cfg)
    (out / f"eval_{args.mode}.txt").write_text(line + "\n")
    np.savetxt(out / f"predictions_{args.mode}.txt", pred, fmt="%d")
    return EXIT_OK


def _load_image(args, cfg: RunConfig) -> np.ndarray:
    if args.image:
        path = Path(args.image)
        if not path.exists():
            raise FileNotFoundError(f"image file {path} not found")
        raw = dataset.read_bytes(path)
        if raw[:4] == dataset.IMAGE_MAGIC.to_bytes(4, "big"):
            return dataset.normalize(dataset.parse_idx_images(raw))[args.index or 0]
        values = np.loadtxt(path, dtype=float).reshape(-1)
        if values.size != 784:
            raise ValueError(f"{path}: expected 784 pixel values, got {values.size}")
        return values / 255.0 if values.max() > 1.0 else values
    x, _ = _split(cfg, "test")
    index = args.index or 0
    if not 0 <= index < len(x):
        raise ValueError(f"image index {index} out of range (0..{len(x) - 1})")
    return x[index]


def cmd_infer(cfg: RunConfig, args) -> int:
    model = network.load_model(_checkpoint(args, cfg))
    pixels = _load_image(args, cfg)
    if args.mode == "ideal":
        outputs = network.ideal_forward(model, pixels)
        unit = ""
    else:
        mlp = build_analog(cfg, model)
        outputs, _ = network.forward(mlp, dataset.to_voltages(pixels, cfg.circuit.v_read))
        unit = " V"
    print(f"class={int(network.classify(outputs))}")
    for k, v in enumerate(outputs):
        print(f"out[{k}]={float(v)!r}{unit}")
    return EXIT_OK


def cmd_export_netlist(cfg: RunConfig, args) -> int:
    model = network.load_model(_checkpoint(args, cfg))
    mlp = build_analog(cfg, model)
    text = netlist.emit(mlp, seed=model.seed)
    path = Path(args.output) if args.output else _out_dir(cfg) / "network.cir"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    print(f"netlist={path} resistors={len(netlist.resistors(text))}")
    return EXIT_OK


def cmd_report(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg)
    rows = analysis.ratios_from_reference()
    ratio_text = analysis.format_ratio_table(rows, args.convention)
    if args.checkpoint:
        model = network.load_model(_checkpoint(args, cfg))
    else:
        model = network.random_model(cfg.topology, np.random.default_rng(cfg.train.rng_seed))
    mlp = build_analog(cfg, model)
    latency = analysis.latency_report(mlp)
    text = ratio_text + "\n" + latency.text()
    print(text, end="")
    (out / "report.txt").write_text(text)
    (out / "power_area.csv").write_text(analysis.ratio_csv(rows))
    (out / "latency.csv").write_text(latency.csv())
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "infer": cmd_infer,
    "export-netlist": cmd_export_netlist,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI-style run configuration")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="override a config key")
    common.add_argument("--mnist-dir", help="directory holding the four MNIST IDX files (.gz ok)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="training seed")
    common.add_argument("--topology", help="layer sizes, e.g. 784,16,10")
    common.add_argument("--variation-sigma", type=float, help="device resistance variation, percent")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="sotmlp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="train and write a checkpoint")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float, help="learning rate")
    p.add_argument("--batch-size", type=int)

    for name, helptext in (("eval", "test-set accuracy"), ("infer", "classify one image")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--checkpoint", help="checkpoint or model file (default: <out>/checkpoint.txt)")
        p.add_argument("--mode", choices=("ideal", "analog"), default="ideal")
        if name == "infer":
            p.add_argument("--index", type=int, help="test-set index, or index inside --image IDX file")
            p.add_argument("--image", help="IDX image file or text file of 784 pixel values")

    p = sub.add_parser("export-netlist", parents=[common], help="write a SPICE-style netlist")
    p.add_argument("--checkpoint")
    p.add_argument("--output", help="netlist path (default: <out>/network.cir)")

    p = sub.add_parser("report", parents=[common], help="power-area and latency tables")
    p.add_argument("--checkpoint", help="map this model instead of a random one")
    p.add_argument("--convention", choices=analysis.CONVENTIONS, default="multiply")
    return parser


def _overrides(args) -> list[str]:
    flags = {
        "mnist_dir": "data.mnist_dir",
        "out": "output.dir",
        "seed": "train.rng_seed",
        "topology": "model.topology",
        "variation_sigma": "circuit.variation_sigma",
        "epochs": "train.epochs",
        "lr": "train.learning_rate",
        "batch_size": "train.batch_size",
    }
    out = list(args.set)
    for attr, key in flags.items():
        value = getattr(args, attr, None)
        if value is not None:
            out.append(f"{key}={value}")
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        cfg = load_config(args.config, _overrides(args))
        return COMMANDS[args.command](cfg, args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (crossbar.SignalingError, crossbar.UnprogrammedError, crossbar.PhaseError, AssertionError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

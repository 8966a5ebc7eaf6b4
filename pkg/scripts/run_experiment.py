#!/usr/bin/env python3
"""Train the 784x16x10 binarized MLP, evaluate it ideally and on the
simulated crossbar network, and write the report tables.

    python scripts/run_experiment.py --out runs/mnist --seeds 0 1 2
"""

import argparse
import json
import time
from pathlib import Path

import numpy as np

from sotmlp import analysis, dataset, network, trainer


def run_seed(seed, args, data):
    x_train, y_train, x_test, y_test = data
    cfg = trainer.TrainConfig(learning_rate=args.lr, epochs=args.epochs, batch_size=args.batch_size, rng_seed=seed)
    start = time.perf_counter()
    result = trainer.train(network.MNIST_TOPOLOGY, x_train, y_train, cfg, x_test, y_test)
    train_s = time.perf_counter() - start

    mlp = network.build(network.MNIST_TOPOLOGY, variation_sigma=args.variation_sigma, seed=seed)
    network.map_model(mlp, result.student)
    network.calibrate(mlp)
    out, clocks = network.forward(mlp, dataset.to_voltages(x_test))
    analog_pred = network.classify(out)
    ideal_pred = network.classify(network.ideal_forward(result.student, x_test))

    seed_dir = args.out / f"seed{seed}"
    seed_dir.mkdir(parents=True, exist_ok=True)
    trainer.save_checkpoint(seed_dir / "checkpoint.txt", result.student, result.teacher)
    trainer.write_metrics(seed_dir / "metrics.log", result.history)
    return {
        "seed": seed,
        "accuracy_per_epoch": [h.test_accuracy for h in result.history],
        "best_accuracy": result.best_accuracy,
        "final_accuracy": result.history[-1].test_accuracy,
        "analog_accuracy": float(np.mean(analog_pred == y_test)),
        "label_agreement": float(np.mean(analog_pred == ideal_pred)),
        "inference_clocks": clocks,
        "train_seconds": round(train_s, 1),
    }, mlp


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--mnist-dir", default="data/mnist")
    ap.add_argument("--out", type=Path, default=Path("runs/experiment"))
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--epochs", type=int, default=10)
    ap.add_argument("--lr", type=float, default=trainer.TrainConfig.learning_rate)
    ap.add_argument("--batch-size", type=int, default=100)
    ap.add_argument("--variation-sigma", type=float, default=0.0, help="percent")
    args = ap.parse_args()

    data = dataset.load_mnist(args.mnist_dir, "train") + dataset.load_mnist(args.mnist_dir, "test")
    rows, mlp = [], None
    for seed in args.seeds:
        row, mlp = run_seed(seed, args, data)
        rows.append(row)
        print(
            f"seed {seed}: best {row['best_accuracy']:.4f} final {row['final_accuracy']:.4f} "
            f"analog {row['analog_accuracy']:.4f} agreement {row['label_agreement']:.4f} ({row['train_seconds']} s)",
            flush=True,
        )

    ratios = analysis.ratios_from_reference()
    report = analysis.format_ratio_table(ratios) + "\n" + analysis.latency_report(mlp).text()
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "report.txt").write_text(report)
    (args.out / "summary.json").write_text(json.dumps(rows, indent=2) + "\n")
    print(report, end="")


if __name__ == "__main__":
    main()

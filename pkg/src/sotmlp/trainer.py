"""Hardware-aware teacher-student training.

The teacher holds real-valued weights and biases clipped to [-1, 1]. The
student is the deterministic binarization of the teacher. Each mini-batch
runs forward and backward through the student parameters, and the gradients
update the teacher (straight-through estimator), followed by a clip.
Activations stay real-valued: o = sigmoid(-(W x + b)).
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .bitcells import sigmoid
from .network import (
    MODEL_HEADER,
    BinarizedModel,
    MlpTopology,
    model_from_block,
    read_blocks,
    write_block,
)

log = logging.getLogger(__name__)


class Mode(enum.Enum):
    REAL_VALUED = "real"
    BINARIZED = "binarized"


@dataclass
class TrainConfig:
    learning_rate: float = 5.0
    epochs: int = 10
    batch_size: int = 100
    rng_seed: int = 0
    delta_b: float = 0.0
    init_scale: float = 0.5

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not 0 < self.init_scale <= 1:
            raise ValueError("init_scale must be in (0, 1]")


@dataclass
class TeacherNetwork:
    weights: list  # per layer (m, n) float
    biases: list  # per layer (m,) float

    @classmethod
    def init(cls, topology: MlpTopology | Sequence[int], rng: np.random.Generator, scale: float = 0.5):
        if not isinstance(topology, MlpTopology):
            topology = MlpTopology(tuple(topology))
        weights, biases = [], []
        for n, m in topology.layer_shapes:
            weights.append(rng.uniform(-scale, scale, size=(m, n)))
            biases.append(rng.uniform(-scale, scale, size=m))
        return cls(weights, biases)

    @classmethod
    def zeros(cls, topology: MlpTopology | Sequence[int]):
        if not isinstance(topology, MlpTopology):
            topology = MlpTopology(tuple(topology))
        return cls([np.zeros((m, n)) for n, m in topology.layer_shapes], [np.zeros(m) for _, m in topology.layer_shapes])

    @property
    def topology(self) -> MlpTopology:
        return MlpTopology((self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights))

    def params(self) -> list:
        return list(self.weights) + list(self.biases)

    def copy(self) -> "TeacherNetwork":
        return TeacherNetwork([w.copy() for w in self.weights], [b.copy() for b in self.biases])


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    test_accuracy: float | None = None

    def line(self) -> str:
        acc = "nan" if self.test_accuracy is None else repr(self.test_accuracy)
        return f"epoch={self.epoch} train_loss={self.train_loss!r} test_accuracy={acc}"

    @classmethod
    def parse(cls, line: str) -> "EpochMetrics":
        kv = dict(tok.split("=", 1) for tok in line.split())
        acc = None if kv["test_accuracy"] == "nan" else float(kv["test_accuracy"])
        return cls(int(kv["epoch"]), float(kv["train_loss"]), acc)


def binarize(w_bar, delta_b: float = 0.0):
    """+1 where w_bar >= delta_b, else -1."""
    out = np.where(np.asarray(w_bar) >= delta_b, 1, -1)
    return out.astype(np.int8) if out.ndim else int(out)


def clip(w):
    out = np.clip(w, -1.0, 1.0)
    return float(out) if np.ndim(out) == 0 else out


def _layer_params(teacher: TeacherNetwork, mode: Mode, delta_b: float):
    if mode is Mode.REAL_VALUED:
        return teacher.weights, teacher.biases
    ws = [binarize(clip(w), delta_b).astype(float) for w in teacher.weights]
    bs = [binarize(clip(b), delta_b).astype(float) for b in teacher.biases]
    return ws, bs


def _forward(ws, bs, x):
    acts = [np.asarray(x, dtype=float)]
    for w, b in zip(ws, bs):
        if acts[-1].shape[-1] != w.shape[1]:
            raise ValueError(f"input width {acts[-1].shape[-1]} does not match layer width {w.shape[1]}")
        acts.append(sigmoid(-(acts[-1] @ w.T + b)))
    return acts


def forward_pass(teacher: TeacherNetwork, x, mode: Mode = Mode.REAL_VALUED, delta_b: float = 0.0) -> list:
    """Per-layer activations [x, o_1, ..., o_L]."""
    ws, bs = _layer_params(teacher, Mode(mode), delta_b)
    return _forward(ws, bs, x)


def mse_loss(outputs, targets) -> float:
    """Batch mean of 0.5 * sum of squared errors over the outputs."""
    diff = np.asarray(outputs) - np.asarray(targets)
    return float(0.5 * np.sum(diff * diff) / diff.shape[0])


def loss_and_gradients(teacher: TeacherNetwork, x, targets, mode: Mode = Mode.REAL_VALUED, delta_b: float = 0.0):
    """Loss and gradients w.r.t. the teacher parameters.

    In binarized mode gradients are taken w.r.t. the binarized parameters and
    passed straight through to the teacher where |w| <= 1.
    Returns (loss, weight_grads, bias_grads).
    """
    mode = Mode(mode)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    ws, bs = _layer_params(teacher, mode, delta_b)
    acts = _forward(ws, bs, x)
    n = x.shape[0]
    loss = mse_loss(acts[-1], targets)

    grad_out = (acts[-1] - targets) / n
    gw, gb = [None] * len(ws), [None] * len(ws)
    for k in range(len(ws) - 1, -1, -1):
        o = acts[k + 1]
        # d sigmoid(-y) / dy = -o (1 - o)
        dy = -grad_out * o * (1.0 - o)
        gw[k] = dy.T @ acts[k]
        gb[k] = dy.sum(axis=0)
        if k:
            grad_out = dy @ ws[k]
    if mode is Mode.BINARIZED:
        gw = [g * (np.abs(w) <= 1.0) for g, w in zip(gw, teacher.weights)]
        gb = [g * (np.abs(b) <= 1.0) for g, b in zip(gb, teacher.biases)]
    return loss, gw, gb


def one_hot(labels, n_classes: int = 10) -> np.ndarray:
    labels = np.asarray(labels)
    return np.eye(n_classes)[labels]


def train_epoch(
    teacher: TeacherNetwork,
    images,
    labels,
    config: TrainConfig,
    rng: np.random.Generator,
    mode: Mode = Mode.BINARIZED,
) -> tuple[TeacherNetwork, float]:
    """One pass of mini-batch SGD; returns (teacher, mean train loss)."""
    images = np.asarray(images, dtype=float)
    labels = np.asarray(labels)
    if len(images) == 0:
        raise ValueError("empty dataset")
    if len(images) != len(labels):
        raise ValueError(f"{len(images)} images but {len(labels)} labels")
    n_classes = teacher.weights[-1].shape[0]
    order = rng.permutation(len(images))
    total, seen = 0.0, 0
    for start in range(0, len(images), config.batch_size):
        idx = order[start:start + config.batch_size]
        loss, gw, gb = loss_and_gradients(teacher, images[idx], one_hot(labels[idx], n_classes), mode, config.delta_b)
        for p, g in zip(teacher.weights + teacher.biases, gw + gb):
            p -= config.learning_rate * g
            np.clip(p, -1.0, 1.0, out=p)
        total += loss * len(idx)
        seen += len(idx)
    return teacher, total / seen


def extract_student(teacher: TeacherNetwork, delta_b: float = 0.0, seed=None, epoch=None) -> BinarizedModel:
    return BinarizedModel(
        [binarize(clip(w), delta_b) for w in teacher.weights],
        [binarize(clip(b), delta_b) for b in teacher.biases],
        seed=seed,
        epoch=epoch,
    )


def predict(model, images) -> np.ndarray:
    """Class predictions from a BinarizedModel or a TeacherNetwork (real-valued)."""
    if isinstance(model, BinarizedModel):
        ws = [w.astype(float) for w in model.weights]
        bs = [b.astype(float) for b in model.biases]
    else:
        ws, bs = model.weights, model.biases
    return np.argmax(_forward(ws, bs, images)[-1], axis=-1)


def evaluate(model, images, labels) -> float:
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise ValueError("empty test set")
    return float(np.mean(predict(model, images) == labels))


@dataclass
class TrainResult:
    teacher: TeacherNetwork
    student: BinarizedModel
    history: list = field(default_factory=list)

    @property
    def best_accuracy(self) -> float | None:
        accs = [h.test_accuracy for h in self.history if h.test_accuracy is not None]
        return max(accs) if accs else None


def train(
    topology: MlpTopology | Sequence[int],
    train_images,
    train_labels,
    config: TrainConfig,
    test_images=None,
    test_labels=None,
    on_epoch=None,
) -> TrainResult:
    """Full training run, deterministic for a given config and data order.

    ``on_epoch`` is called with each EpochMetrics as it is produced.
    """
    rng = np.random.default_rng(config.rng_seed)
    teacher = TeacherNetwork.init(topology, rng, config.init_scale)
    history = []
    for epoch in range(1, config.epochs + 1):
        teacher, loss = train_epoch(teacher, train_images, train_labels, config, rng)
        acc = None
        if test_images is not None:
            acc = evaluate(extract_student(teacher, config.delta_b), test_images, test_labels)
        metrics = EpochMetrics(epoch, loss, acc)
        log.info(metrics.line())
        history.append(metrics)
        if on_epoch is not None:
            on_epoch(metrics)
    student = extract_student(teacher, config.delta_b, seed=config.rng_seed, epoch=config.epochs)
    return TrainResult(teacher, student, history)


# --- checkpoints -----------------------------------------------------------


def save_checkpoint(path, student: BinarizedModel, teacher: TeacherNetwork, delta_b: float = 0.0) -> None:
    with open(path, "w") as fh:
        fh.write(MODEL_HEADER + "\n")
        write_block(fh, "binarized", student.weights, student.biases, student.seed, student.epoch)
        write_block(fh, "teacher", teacher.weights, teacher.biases, student.seed, student.epoch, {"delta_b": delta_b})


def load_checkpoint(path) -> tuple[BinarizedModel, TeacherNetwork | None]:
    blocks = read_blocks(Path(path).read_text())
    if "binarized" not in blocks:
        raise ValueError(f"{path}: no binarized block")
    student = model_from_block(blocks["binarized"])
    teacher = None
    if "teacher" in blocks:
        t = blocks["teacher"]
        teacher = TeacherNetwork(t["weights"], t["biases"])
    return student, teacher


def write_metrics(path, history: Sequence[EpochMetrics]) -> None:
    Path(path).write_text("".join(h.line() + "\n" for h in history))


def read_metrics(path) -> list[EpochMetrics]:
    return [EpochMetrics.parse(ln) for ln in Path(path).read_text().splitlines() if ln.strip()]


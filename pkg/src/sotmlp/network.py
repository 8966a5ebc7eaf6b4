"""Concatenated crossbar arrays forming the analog MLP."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, TextIO

import numpy as np

from . import crossbar as xb
from .device import DeviceGeometry, MaterialParams


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class MlpTopology:
    layer_sizes: tuple

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2:
            raise TopologyError("topology needs at least an input and an output layer")
        if any(s < 1 for s in sizes):
            raise TopologyError(f"layer sizes must be >= 1, got {sizes}")
        object.__setattr__(self, "layer_sizes", sizes)

    @classmethod
    def parse(cls, text: str) -> "MlpTopology":
        return cls(tuple(int(t) for t in text.replace("x", ",").split(",") if t.strip()))

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        """(n_inputs, m_rows) per layer."""
        s = self.layer_sizes
        return list(zip(s[:-1], s[1:]))

    def __str__(self):
        return "x".join(map(str, self.layer_sizes))


MNIST_TOPOLOGY = MlpTopology((784, 16, 10))


@dataclass
class BinarizedModel:
    weights: list  # per layer (m, n) int8 in {-1, +1}
    biases: list  # per layer (m,) int8 in {-1, +1}
    seed: int | None = None
    epoch: int | None = None

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=np.int8) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.int8).reshape(-1) for b in self.biases]
        if len(self.weights) != len(self.biases) or not self.weights:
            raise TopologyError("need one bias vector per weight matrix")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise TopologyError(f"layer {k}: weight {w.shape} and bias {b.shape} disagree")
            if not (np.all(np.abs(w) == 1) and np.all(np.abs(b) == 1)):
                raise ValueError(f"layer {k}: entries must be exactly -1 or +1")
        for k in range(1, len(self.weights)):
            if self.weights[k].shape[1] != self.weights[k - 1].shape[0]:
                raise TopologyError(f"layer {k} input width does not match layer {k - 1} output")

    @property
    def topology(self) -> MlpTopology:
        return MlpTopology((self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights))

    def augmented(self, k: int) -> np.ndarray:
        """Layer k weights with the bias appended as the last column."""
        return np.concatenate([self.weights[k], self.biases[k][:, None]], axis=1)

    def __eq__(self, other):
        if not isinstance(other, BinarizedModel):
            return NotImplemented
        return (
            len(self.weights) == len(other.weights)
            and all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights))
            and all(np.array_equal(a, b) for a, b in zip(self.biases, other.biases))
        )


@dataclass
class AnalogMlp:
    topology: MlpTopology
    arrays: list
    calib: xb.CalibrationParams | None = None
    cycle_count: int = 0

    @property
    def programmed(self) -> bool:
        return all(a.programmed for a in self.arrays)


def build(
    topology: MlpTopology | Sequence[int],
    *,
    geometry: DeviceGeometry | None = None,
    params: MaterialParams | None = None,
    vdd: float = 0.8,
    vss: float = 0.0,
    variation_sigma: float = 0.0,
    seed: int | None = None,
) -> AnalogMlp:
    if not isinstance(topology, MlpTopology):
        topology = MlpTopology(tuple(topology))
    rng = np.random.default_rng(seed)
    arrays = [
        xb.CrossbarArray(
            n, m, geometry=geometry, params=params, vdd=vdd, vss=vss, variation_sigma=variation_sigma, rng=rng
        )
        for n, m in topology.layer_shapes
    ]
    return AnalogMlp(topology, arrays)


def map_model(mlp: AnalogMlp, model: BinarizedModel) -> tuple[AnalogMlp, int]:
    """Write a binarized model into the arrays; returns the clocks spent."""
    if model.topology != mlp.topology:
        raise TopologyError(f"model topology {model.topology} does not match network {mlp.topology}")
    before = sum(a.cycle_count for a in mlp.arrays)
    for k, array in enumerate(mlp.arrays):
        array.set_phase(xb.Phase.TRAINING)
        xb.program_array(array, model.augmented(k))
        array.set_phase(xb.Phase.INFERENCE)
    spent = sum(a.cycle_count for a in mlp.arrays) - before
    mlp.cycle_count += spent
    return mlp, spent


def calibrate(mlp: AnalogMlp, v_read: float = 0.1, pre_activation_scale: float = 0.01, linearize_inputs: bool = True):
    calib = None
    for array in mlp.arrays:
        calib = xb.calibrate(array, v_read, pre_activation_scale, linearize_inputs)
    mlp.calib = calib
    return calib


def extract_model(mlp: AnalogMlp) -> BinarizedModel:
    """Read the binarized model back out of the device states."""
    weights, biases = [], []
    for array in mlp.arrays:
        w = array.weights()
        weights.append(w[:, :-1])
        biases.append(w[:, -1])
    return BinarizedModel(weights, biases)


def rescale_between_layers(v_out, vdd: float, vss: float, v_read: float) -> np.ndarray:
    """Ideal affine level shifter from [vss, vdd] neuron outputs to [0, v_read]."""
    v = (np.asarray(v_out, dtype=float) - vss) / (vdd - vss) * v_read
    return np.clip(v, 0.0, v_read)


def forward(mlp: AnalogMlp, pixel_voltages):
    """Combinational pass through every layer.

    The whole chain settles within one clock, so a single input vector costs
    one clock no matter how many layers there are; a batch of N vectors costs
    N clocks. Returns (output voltages, clocks).
    """
    if mlp.calib is None:
        raise xb.UnprogrammedError("network has not been calibrated")
    if not mlp.programmed:
        raise xb.UnprogrammedError("network has unprogrammed arrays")
    v = np.asarray(pixel_voltages, dtype=float)
    single = v.ndim == 1
    v = np.atleast_2d(v)
    out = None
    for k, array in enumerate(mlp.arrays):
        if k:
            v = rescale_between_layers(out, array.vdd, array.vss, mlp.calib.v_read)
        out, _ = xb.infer(array, v, mlp.calib)
    clocks = v.shape[0]
    mlp.cycle_count += clocks
    return (out[0] if single else out), clocks


def ideal_forward(model: BinarizedModel, x) -> np.ndarray:
    """Composition of ideal_row_forward over the layers (activations in [0, 1])."""
    a = np.asarray(x, dtype=float)
    for k in range(len(model.weights)):
        a = xb.ideal_row_forward(model.augmented(k), a)
    return a


def outputs_to_activations(mlp: AnalogMlp, outputs) -> np.ndarray:
    last = mlp.arrays[-1]
    return (np.asarray(outputs, dtype=float) - last.vss) / (last.vdd - last.vss)


def classify(outputs) -> int | np.ndarray:
    """Index of the largest output; ties go to the lowest index."""
    return np.argmax(np.asarray(outputs), axis=-1)


# --- model files -----------------------------------------------------------
#
#   # sotmlp model file
#   begin binarized
#   topology 784 16 10
#   seed 0
#   epoch 10
#   weights 0 16 784
#   <16 lines of 784 tokens, +1 / -1>
#   bias 0 16
#   <one line of 16 tokens>
#   ...
#   end
#
# A teacher block has the same layout with ``begin teacher`` and real entries
# written with repr() so they parse back bit-exactly.

MODEL_HEADER = "# sotmlp model file"


def _fmt_binary(values) -> str:
    return " ".join("+1" if v > 0 else "-1" for v in values)


def _fmt_real(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def write_block(fh: TextIO, kind: str, weights, biases, seed=None, epoch=None, extra: dict | None = None):
    fmt = _fmt_binary if kind == "binarized" else _fmt_real
    sizes = [weights[0].shape[1]] + [w.shape[0] for w in weights]
    fh.write(f"begin {kind}\n")
    fh.write("topology " + " ".join(map(str, sizes)) + "\n")
    if seed is not None:
        fh.write(f"seed {seed}\n")
    if epoch is not None:
        fh.write(f"epoch {epoch}\n")
    for key, value in (extra or {}).items():
        fh.write(f"{key} {value!r}\n")
    for k, (w, b) in enumerate(zip(weights, biases)):
        fh.write(f"weights {k} {w.shape[0]} {w.shape[1]}\n")
        for row in w:
            fh.write(fmt(row) + "\n")
        fh.write(f"bias {k} {b.shape[0]}\n")
        fh.write(fmt(b) + "\n")
    fh.write("end\n")


def read_blocks(text: str) -> dict[str, dict]:
    """Parse every ``begin ... end`` block keyed by kind."""
    lines = iter(text.splitlines())
    blocks: dict[str, dict] = {}
    for line in lines:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        head = line.split()
        if head[0] != "begin" or len(head) != 2:
            raise ValueError(f"expected 'begin <kind>', got {line!r}")
        kind = head[1]
        conv = int if kind == "binarized" else float
        block: dict = {"weights": [], "biases": [], "meta": {}}
        for line in lines:
            parts = line.split()
            if not parts:
                continue
            key = parts[0]
            if key == "end":
                break
            if key == "topology":
                block["topology"] = MlpTopology(tuple(int(p) for p in parts[1:]))
            elif key == "weights":
                m, n = int(parts[2]), int(parts[3])
                rows = [[conv(t) for t in next(lines).split()] for _ in range(m)]
                w = np.array(rows, dtype=np.int8 if conv is int else float).reshape(m, n)
                block["weights"].append(w)
            elif key == "bias":
                m = int(parts[2])
                b = np.array([conv(t) for t in next(lines).split()], dtype=np.int8 if conv is int else float)
                if b.shape != (m,):
                    raise ValueError(f"bias {parts[1]}: expected {m} values, got {b.size}")
                block["biases"].append(b)
            elif key in ("seed", "epoch"):
                block["meta"][key] = int(parts[1])
            else:
                block["meta"][key] = " ".join(parts[1:])
        else:
            raise ValueError(f"unterminated {kind} block")
        blocks[kind] = block
    return blocks


def save_model(model: BinarizedModel, path) -> None:
    with open(path, "w") as fh:
        fh.write(MODEL_HEADER + "\n")
        write_block(fh, "binarized", model.weights, model.biases, model.seed, model.epoch)


def model_from_block(block: dict) -> BinarizedModel:
    model = BinarizedModel(block["weights"], block["biases"], block["meta"].get("seed"), block["meta"].get("epoch"))
    if "topology" in block and block["topology"] != model.topology:
        raise TopologyError("declared topology does not match matrices")
    return model


def load_model(path) -> BinarizedModel:
    """Load the binarized block from a model or checkpoint file."""
    blocks = read_blocks(Path(path).read_text())
    if "binarized" not in blocks:
        raise ValueError(f"{path}: no binarized block")
    return model_from_block(blocks["binarized"])


def random_model(topology: MlpTopology | Iterable[int], rng: np.random.Generator) -> BinarizedModel:
    if not isinstance(topology, MlpTopology):
        topology = MlpTopology(tuple(topology))
    weights = [rng.choice(np.array([-1, 1], dtype=np.int8), size=(m, n)) for n, m in topology.layer_shapes]
    biases = [rng.choice(np.array([-1, 1], dtype=np.int8), size=m) for _, m in topology.layer_shapes]
    return BinarizedModel(weights, biases)

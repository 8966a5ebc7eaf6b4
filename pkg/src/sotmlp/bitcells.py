"""Composite bitcells: the two-MRAM sigmoid neuron, the differential binary
synapse and the row differential amplifier."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .device import (
    MagState,
    SotMramCell,
    apply_write,
    conductance,
    polarity_for,
)


def sigmoid(z):
    """Numerically stable logistic function."""
    z = np.asarray(z, dtype=float)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


@dataclass(frozen=True)
class Parametric:
    gain_k: float = 100.0  # 1/V

    def __post_init__(self):
        if not self.gain_k > 0:
            raise ValueError("gain_k must be > 0")


@dataclass(frozen=True)
class Tabulated:
    v_in: tuple
    v_out: tuple

    def __post_init__(self):
        v_in = np.asarray(self.v_in, dtype=float)
        v_out = np.asarray(self.v_out, dtype=float)
        if v_in.ndim != 1 or v_in.shape != v_out.shape:
            raise ValueError("VTC table needs two equal-length columns")
        if len(v_in) < 2:
            raise ValueError("VTC table needs at least 2 samples")
        if not np.all(np.isfinite(v_in)) or not np.all(np.isfinite(v_out)):
            raise ValueError("VTC table contains non-finite values")
        if np.any(np.diff(v_in) <= 0):
            raise ValueError("VTC v_in column must be strictly increasing")
        if np.any(np.diff(v_out) > 0):
            raise ValueError("VTC v_out column must be non-increasing")


VtcModel = Union[Parametric, Tabulated]


@dataclass
class NeuronBitcell:
    mram1: SotMramCell = field(default_factory=lambda: SotMramCell(state=MagState.PARALLEL))
    mram2: SotMramCell = field(default_factory=lambda: SotMramCell(state=MagState.ANTIPARALLEL))
    vdd: float = 0.8
    vss: float = 0.0
    vtc: VtcModel = field(default_factory=Parametric)

    def __post_init__(self):
        if not self.vdd > self.vss:
            raise ValueError("vdd must exceed vss")
        if isinstance(self.vtc, Tabulated):
            _check_table_rails(self.vtc, self.vss, self.vdd)

    @property
    def bias(self) -> float:
        """Bias point b of the sigmoid(-x) transfer curve."""
        return (self.vdd - self.vss) / 2

    @property
    def gain_k(self) -> float | None:
        return self.vtc.gain_k if isinstance(self.vtc, Parametric) else None

    @property
    def programmed(self) -> bool:
        return self.mram1.state is MagState.PARALLEL and self.mram2.state is MagState.ANTIPARALLEL


def _check_table_rails(table: Tabulated, vss: float, vdd: float):
    v_out = np.asarray(table.v_out)
    if v_out.min() < vss or v_out.max() > vdd:
        raise ValueError(f"VTC v_out must lie within [{vss}, {vdd}]")


def neuron_transfer(neuron: NeuronBitcell, v_in):
    """Output voltage of the neuron for input voltage(s) ``v_in``.

    Parametric: vss + (vdd - vss) * sigmoid(k * (b - v_in)).
    Tabulated: piecewise-linear interpolation, held at the end values
    outside the table.
    """
    v_in = np.asarray(v_in, dtype=float)
    vtc = neuron.vtc
    if isinstance(vtc, Parametric):
        swing = neuron.vdd - neuron.vss
        return neuron.vss + swing * sigmoid(vtc.gain_k * (neuron.bias - v_in))
    return np.interp(v_in, np.asarray(vtc.v_in), np.asarray(vtc.v_out))


def program_neuron(neuron: NeuronBitcell) -> NeuronBitcell:
    # BL = VDD, SL = VSS during training sets mram1 -> P and mram2 -> AP.
    apply_write(neuron.mram1, polarity_for(MagState.PARALLEL))
    apply_write(neuron.mram2, polarity_for(MagState.ANTIPARALLEL))
    return neuron


@dataclass
class SynapseBitcell:
    mram_plus: SotMramCell = field(default_factory=lambda: SotMramCell(state=MagState.PARALLEL))
    mram_minus: SotMramCell = field(default_factory=lambda: SotMramCell(state=MagState.ANTIPARALLEL))

    @property
    def weight(self) -> int:
        return states_to_weight(self.mram_plus.state, self.mram_minus.state)


class IllegalSynapseState(ValueError):
    """Both devices of a differential synapse hold the same state."""


def weight_to_states(w: int) -> tuple[MagState, MagState]:
    if w == 1 and not isinstance(w, bool):
        return MagState.PARALLEL, MagState.ANTIPARALLEL
    if w == -1:
        return MagState.ANTIPARALLEL, MagState.PARALLEL
    raise ValueError(f"binary weight must be -1 or +1, got {w!r}")


def states_to_weight(s1: MagState, s2: MagState) -> int:
    s1, s2 = MagState(s1), MagState(s2)
    if s1 is s2:
        raise IllegalSynapseState(f"synapse devices both {s1.short}: unprogrammed or corrupt")
    return 1 if s1 is MagState.PARALLEL else -1


def program_synapse(synapse: SynapseBitcell, w: int) -> SynapseBitcell:
    plus, minus = weight_to_states(w)
    apply_write(synapse.mram_plus, polarity_for(plus))
    apply_write(synapse.mram_minus, polarity_for(minus))
    return synapse


def synapse_currents(synapse: SynapseBitcell, v_in: float) -> tuple[float, float]:
    """Read currents (I+, I-) with each device biased at ``v_in``."""
    if v_in < 0:
        raise ValueError("read voltage must be non-negative")
    i_plus = v_in * conductance(synapse.mram_plus, v_in)
    i_minus = v_in * conductance(synapse.mram_minus, v_in)
    return float(i_plus), float(i_minus)


@dataclass
class DiffAmp:
    transimpedance_gain: float = 1e3  # V/A
    v_clamp_low: float = -0.4
    v_clamp_high: float = 0.4

    def __post_init__(self):
        if not self.transimpedance_gain > 0:
            raise ValueError("transimpedance_gain must be > 0")
        if not self.v_clamp_low < self.v_clamp_high:
            raise ValueError("v_clamp_low must be below v_clamp_high")


def diff_amp_out(amp: DiffAmp, i_plus, i_minus):
    raw = amp.transimpedance_gain * (np.asarray(i_plus, dtype=float) - np.asarray(i_minus, dtype=float))
    return np.clip(raw, amp.v_clamp_low, amp.v_clamp_high)


def load_vtc_table(path, vss: float = 0.0, vdd: float = 0.8) -> Tabulated:
    """Read a two-column (v_in, v_out) text file; '#' starts a comment.

    A single non-numeric header line is tolerated.
    """
    rows: list[tuple[float, float]] = []
    header_seen = False
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        try:
            values = [float(p) for p in parts]
        except ValueError:
            if rows or header_seen:
                raise ValueError(f"{path}:{lineno}: non-numeric row {raw!r}") from None
            header_seen = True
            continue
        if len(values) != 2:
            raise ValueError(f"{path}:{lineno}: expected 2 columns, got {len(values)}")
        rows.append((values[0], values[1]))
    if len(rows) < 2:
        raise ValueError(f"{path}: VTC table needs at least 2 samples, got {len(rows)}")
    v_in, v_out = zip(*rows)
    table = Tabulated(tuple(v_in), tuple(v_out))
    _check_table_rails(table, vss, vdd)
    return table


def sample_vtc(neuron: NeuronBitcell, v_in: Sequence[float]) -> Tabulated:
    """Tabulate a neuron's transfer curve, e.g. to round-trip through a file."""
    v_in = np.asarray(v_in, dtype=float)
    return Tabulated(tuple(v_in.tolist()), tuple(np.asarray(neuron_transfer(neuron, v_in)).tolist()))

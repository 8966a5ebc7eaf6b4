"""n-input x m-row SOT-MRAM perceptron subarray.

Training path: one write word line is raised per clock, and every synapse in
that row (plus its bias cell) is written in parallel through its column's
BL/SL pair. Inference path: all rows read at once; each row's differential
amplifier sums I+ - I- and drives the row's sigmoid neuron. One inference
costs one clock regardless of array size.

Synapse states are held in an int8 array of shape (m, cols, 2) where the last
axis is (plus device, minus device) and -1 marks an unwritten device. Column
``n_inputs`` is the bias column when ``bias=True``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .bitcells import (
    DiffAmp,
    NeuronBitcell,
    Parametric,
    SynapseBitcell,
    diff_amp_out,
    neuron_transfer,
    program_neuron,
    sigmoid,
    weight_to_states,
)
from .device import (
    DeviceGeometry,
    MagState,
    MaterialParams,
    SotMramCell,
    r_mtj,
    tmr,
)

UNWRITTEN = -1


class SignalingError(RuntimeError):
    """Internally generated control signals broke the signaling table."""


class PhaseError(RuntimeError):
    pass


class UnprogrammedError(RuntimeError):
    pass


class Phase(enum.Enum):
    IDLE = "idle"
    TRAINING = "training"
    INFERENCE = "inference"


class LineKind(enum.Enum):
    VDD = "VDD"
    GND = "GND"
    HIZ = "Hi-Z"
    VIN = "VIN"


class LineState(NamedTuple):
    kind: LineKind
    volts: float | None = None

    def __str__(self):
        if self.kind is LineKind.VIN:
            return f"VIN({self.volts:g})"
        return self.kind.value


VDD = LineState(LineKind.VDD)
GND = LineState(LineKind.GND)
HIZ = LineState(LineKind.HIZ)


def vin(volts: float) -> LineState:
    return LineState(LineKind.VIN, float(volts))


@dataclass
class ControlSignals:
    """Line states for one clock.

    BL/SL are per synapse column (the bias column included): a row write sets
    each column's pair independently. ``neuron_bl``/``neuron_sl`` are the
    lines feeding the neuron bitcells' write path.
    """

    wwl: list
    rwl: LineState
    bl: list
    sl: list
    inputs: list
    bias_in: LineState | None = None
    neuron_bl: LineState = HIZ
    neuron_sl: LineState = HIZ


@dataclass(frozen=True)
class Violation:
    line: str
    expected: str
    actual: str

    def __str__(self):
        return f"{self.line}: expected {self.expected}, got {self.actual}"


def validate_signals(
    signals: ControlSignals,
    phase: Phase,
    *,
    n_inputs: int | None = None,
    m_rows: int | None = None,
    weight_row: Sequence[int] | None = None,
    vdd: float = 0.8,
) -> list[Violation]:
    """Check ``signals`` against the signaling table for ``phase``.

    Returns the list of violations; an empty list means conformant. When
    ``weight_row`` is given during training each column's BL/SL pair must also
    encode that column's weight (+1: BL=VDD, SL=GND; -1: BL=GND, SL=VDD).
    """
    out: list[Violation] = []

    def expect(name, actual, expected):
        if actual != expected:
            out.append(Violation(name, str(expected), str(actual)))

    if m_rows is not None and len(signals.wwl) != m_rows:
        out.append(Violation("WWL", f"{m_rows} lines", f"{len(signals.wwl)} lines"))
    if n_inputs is not None and len(signals.inputs) != n_inputs:
        out.append(Violation("IN", f"{n_inputs} lines", f"{len(signals.inputs)} lines"))
    if len(signals.bl) != len(signals.sl):
        out.append(Violation("BL/SL", "equal column counts", f"{len(signals.bl)} vs {len(signals.sl)}"))

    if phase is Phase.TRAINING:
        high = [r for r, s in enumerate(signals.wwl) if s == VDD]
        if len(high) != 1:
            out.append(Violation("WWL", "exactly one row at VDD", f"{len(high)} rows at VDD"))
        for r, s in enumerate(signals.wwl):
            if s not in (VDD, GND):
                out.append(Violation(f"WWL[{r}]", "VDD or GND", str(s)))
        expect("RWL", signals.rwl, GND)
        if weight_row is not None and len(weight_row) != len(signals.bl):
            out.append(Violation("BL", f"{len(weight_row)} columns", f"{len(signals.bl)} columns"))
        for c, (bl, sl) in enumerate(zip(signals.bl, signals.sl)):
            if weight_row is not None and c < len(weight_row):
                want = (VDD, GND) if weight_row[c] == 1 else (GND, VDD)
                expect(f"BL[{c}]", bl, want[0])
                expect(f"SL[{c}]", sl, want[1])
            elif (bl, sl) not in ((VDD, GND), (GND, VDD)):
                out.append(Violation(f"BL/SL[{c}]", "complementary VDD/GND", f"{bl}/{sl}"))
        for i, s in enumerate(signals.inputs):
            expect(f"IN[{i}]", s, HIZ)
        if signals.bias_in is not None:
            expect("IN[bias]", signals.bias_in, HIZ)
        expect("BL[neuron]", signals.neuron_bl, VDD)
        expect("SL[neuron]", signals.neuron_sl, GND)
    elif phase is Phase.INFERENCE:
        for r, s in enumerate(signals.wwl):
            expect(f"WWL[{r}]", s, GND)
        expect("RWL", signals.rwl, VDD)
        for c, (bl, sl) in enumerate(zip(signals.bl, signals.sl)):
            expect(f"BL[{c}]", bl, HIZ)
            expect(f"SL[{c}]", sl, HIZ)
        lines = list(enumerate(signals.inputs))
        if signals.bias_in is not None:
            lines.append(("bias", signals.bias_in))
        for i, s in lines:
            if s.kind is not LineKind.VIN:
                out.append(Violation(f"IN[{i}]", f"VIN in [0, {vdd:g}]", str(s)))
            elif not (0.0 <= s.volts <= vdd):
                out.append(Violation(f"IN[{i}]", f"VIN in [0, {vdd:g}]", str(s)))
        expect("BL[neuron]", signals.neuron_bl, HIZ)
        expect("SL[neuron]", signals.neuron_sl, HIZ)
    else:
        out.append(Violation("phase", "training or inference", phase.value))
    return out


@dataclass
class CalibrationParams:
    v_read: float
    unit_conductance_delta: float
    pre_activation_scale: float  # amplifier volts per unit of pre-activation
    transimpedance_gain: float
    gain_k: float
    linearize_inputs: bool = True

    def __post_init__(self):
        if not self.v_read > 0:
            raise ValueError("v_read must be > 0")
        if not self.unit_conductance_delta > 0:
            raise ValueError("unit_conductance_delta must be > 0")

    @property
    def unit_current(self) -> float:
        """Row current produced by one +1 synapse driven at v_read."""
        return self.v_read * self.unit_conductance_delta


class CrossbarArray:
    def __init__(
        self,
        n_inputs: int,
        m_rows: int,
        *,
        geometry: DeviceGeometry | None = None,
        params: MaterialParams | None = None,
        vdd: float = 0.8,
        vss: float = 0.0,
        bias: bool = True,
        variation_sigma: float = 0.0,
        rng: np.random.Generator | None = None,
    ):
        if n_inputs < 1 or m_rows < 1:
            raise ValueError(f"array dimensions must be >= 1, got {n_inputs}x{m_rows}")
        self.n_inputs = int(n_inputs)
        self.m_rows = int(m_rows)
        self.geometry = geometry or DeviceGeometry()
        self.params = params or MaterialParams()
        self.vdd = float(vdd)
        self.vss = float(vss)
        self.bias = bool(bias)
        self.states = np.full((self.m_rows, self.n_cols, 2), UNWRITTEN, dtype=np.int8)
        self.variation = np.ones((self.m_rows, self.n_cols, 2))
        if variation_sigma:
            if rng is None:
                rng = np.random.default_rng()
            draw = 1.0 + (variation_sigma / 100.0) * rng.standard_normal(self.variation.shape)
            self.variation = np.clip(draw, 0.01, None)
        self.amps = [DiffAmp(v_clamp_low=-(vdd - vss) / 2, v_clamp_high=(vdd - vss) / 2) for _ in range(self.m_rows)]
        self.neurons = [
            NeuronBitcell(
                mram1=SotMramCell(self.geometry, self.params, MagState.ANTIPARALLEL),
                mram2=SotMramCell(self.geometry, self.params, MagState.PARALLEL),
                vdd=vdd,
                vss=vss,
            )
            for _ in range(self.m_rows)
        ]
        self.phase = Phase.IDLE
        self.cycle_count = 0
        self.calib: CalibrationParams | None = None
        self.last_signals: ControlSignals | None = None

    @property
    def n_cols(self) -> int:
        return self.n_inputs + (1 if self.bias else 0)

    @property
    def shape(self) -> tuple[int, int]:
        return self.n_inputs, self.m_rows

    def __repr__(self):
        return f"CrossbarArray({self.n_inputs}x{self.m_rows}, bias={self.bias}, phase={self.phase.value}, cycles={self.cycle_count})"

    def set_phase(self, phase: Phase):
        self.phase = Phase(phase)

    @property
    def programmed(self) -> bool:
        return bool(np.all(self.states != UNWRITTEN)) and all(n.programmed for n in self.neurons)

    def synapse(self, row: int, col: int) -> SynapseBitcell:
        """Detached SynapseBitcell snapshot of one grid position."""
        plus, minus = self.states[row, col]
        if plus == UNWRITTEN or minus == UNWRITTEN:
            raise UnprogrammedError(f"synapse ({row}, {col}) has not been written")
        return SynapseBitcell(
            SotMramCell(self.geometry, self.params, MagState(int(plus)), float(self.variation[row, col, 0])),
            SotMramCell(self.geometry, self.params, MagState(int(minus)), float(self.variation[row, col, 1])),
        )

    def weights(self) -> np.ndarray:
        """Weights read back from device states, shape (m, cols)."""
        if np.any(self.states == UNWRITTEN):
            raise UnprogrammedError("array has unwritten synapses")
        plus, minus = self.states[..., 0], self.states[..., 1]
        if np.any(plus == minus):
            r, c = np.argwhere(plus == minus)[0]
            raise UnprogrammedError(f"synapse ({r}, {c}) has equal device states")
        return np.where(plus == MagState.PARALLEL, 1, -1).astype(np.int8)


def _check_binary(values, what: str) -> np.ndarray:
    arr = np.asarray(values)
    if arr.size and not np.all((arr == 1) | (arr == -1)):
        raise ValueError(f"{what} must contain only -1/+1 entries")
    return arr.astype(np.int8)


def _training_signals(array: CrossbarArray, row: int, weight_row: np.ndarray) -> ControlSignals:
    # BL->SL current is +x for the plus device and -x for the minus device, so
    # BL=VDD/SL=GND writes (P, AP) = +1.
    bl = [VDD if w == 1 else GND for w in weight_row]
    sl = [GND if w == 1 else VDD for w in weight_row]
    return ControlSignals(
        wwl=[VDD if r == row else GND for r in range(array.m_rows)],
        rwl=GND,
        bl=bl,
        sl=sl,
        inputs=[HIZ] * array.n_inputs,
        bias_in=HIZ if array.bias else None,
        neuron_bl=VDD,
        neuron_sl=GND,
    )


def _inference_signals(array: CrossbarArray, applied: np.ndarray, v_bias_line: float | None) -> ControlSignals:
    return ControlSignals(
        wwl=[GND] * array.m_rows,
        rwl=VDD,
        bl=[HIZ] * array.n_cols,
        sl=[HIZ] * array.n_cols,
        inputs=[vin(v) for v in applied.tolist()],
        bias_in=vin(v_bias_line) if array.bias else None,
    )


def _commit_signals(array: CrossbarArray, signals: ControlSignals, phase: Phase, weight_row=None):
    violations = validate_signals(
        signals, phase, n_inputs=array.n_inputs, m_rows=array.m_rows, weight_row=weight_row, vdd=array.vdd
    )
    if violations:
        raise SignalingError("; ".join(map(str, violations)))
    array.last_signals = signals


def program_row(array: CrossbarArray, row_index: int, weight_row) -> CrossbarArray:
    """Write one row of synapses (bias cell last) in a single clock."""
    if array.phase is not Phase.TRAINING:
        raise PhaseError(f"program_row needs the training phase, array is {array.phase.value}")
    if not 0 <= row_index < array.m_rows:
        raise IndexError(f"row {row_index} out of range for {array.m_rows} rows")
    w = _check_binary(weight_row, "weight_row").reshape(-1)
    if w.shape != (array.n_cols,):
        raise ValueError(f"weight_row needs {array.n_cols} entries, got {w.size}")
    signals = _training_signals(array, row_index, w)
    _commit_signals(array, signals, Phase.TRAINING, weight_row=w)
    for col, weight in enumerate(w):
        array.states[row_index, col] = weight_to_states(int(weight))
    # Neuron write lines are tied to VDD/VSS for the whole training phase.
    for neuron in array.neurons:
        program_neuron(neuron)
    array.cycle_count += 1
    return array


def program_array(array: CrossbarArray, weights) -> CrossbarArray:
    """Program every row; costs exactly ``m_rows`` clocks."""
    w = _check_binary(weights, "weights")
    if w.shape != (array.m_rows, array.n_cols):
        raise ValueError(f"weights must be {array.m_rows}x{array.n_cols}, got {'x'.join(map(str, w.shape))}")
    if array.phase is not Phase.TRAINING:
        raise PhaseError(f"program_array needs the training phase, array is {array.phase.value}")
    for r in range(array.m_rows):
        program_row(array, r, w[r])
    return array


def _linear_shape(u, t: float, v0: float):
    """Differential current of a +1 cell at bias u, in units of 1/R_MTJ.

    G_P - G_AP(u) = (1/R_MTJ) * TMR(u) / (1 + TMR(u)), times u.
    """
    return u * t / (1.0 + t + (u / v0) ** 2)


def drive_inputs(v_nominal, calib: CalibrationParams, params: MaterialParams) -> np.ndarray:
    """Line voltages applied for nominal input voltages.

    With linearisation the driver pre-distorts each line so the cell's
    differential current is exactly proportional to v_nominal / v_read;
    otherwise the nominal voltage is applied unchanged.
    """
    v = np.asarray(v_nominal, dtype=float)
    if not calib.linearize_inputs:
        return v.copy()
    t = params.tmr0 / 100.0
    v0 = params.v0
    c = (v / calib.v_read) * _linear_shape(calib.v_read, t, v0)
    # smaller root of c*u^2/v0^2 - t*u + c*(1 + t) = 0, in cancellation-free form
    disc = np.sqrt(np.maximum(t * t - 4.0 * c * c * (1.0 + t) / (v0 * v0), 0.0))
    u = 2.0 * c * (1.0 + t) / (t + disc)
    # pin the endpoints so the bias line and full-scale pixels read exactly v_read
    return np.where(v == calib.v_read, calib.v_read, u)


def row_currents(array: CrossbarArray, applied: np.ndarray, bias_volts: float | None):
    """Summed (I+, I-) per row for applied line voltages, shape (N, m) each."""
    cols = applied
    if array.bias:
        cols = np.concatenate([applied, np.full((applied.shape[0], 1), bias_volts)], axis=1)
    g_p = 1.0 / r_mtj(array.geometry, array.params)
    g_ap = g_p / (1.0 + tmr(array.params, cols))
    totals = []
    for dev in (0, 1):
        is_ap = array.states[..., dev] == MagState.ANTIPARALLEL
        inv_mult = 1.0 / array.variation[..., dev]
        current = (cols * g_p) @ (np.where(is_ap, 0.0, inv_mult)).T
        current += (cols * g_ap) @ (np.where(is_ap, inv_mult, 0.0)).T
        totals.append(current)
    return totals[0], totals[1]


def infer(array: CrossbarArray, input_voltages, calib: CalibrationParams | None = None):
    """Single-clock parallel read of all rows.

    ``input_voltages`` has shape (n,) or (N, n); each vector is one inference
    and costs one clock. Returns (output voltages, clocks used).
    """
    if array.phase is not Phase.INFERENCE:
        raise PhaseError(f"infer needs the inference phase, array is {array.phase.value}")
    calib = calib or array.calib
    if calib is None:
        raise UnprogrammedError("array has not been calibrated")
    if not array.programmed:
        raise UnprogrammedError("array has unwritten synapses or neurons")
    v = np.asarray(input_voltages, dtype=float)
    single = v.ndim == 1
    v = np.atleast_2d(v)
    if v.shape[1] != array.n_inputs:
        raise ValueError(f"expected {array.n_inputs} inputs, got {v.shape[1]}")
    if not np.all(np.isfinite(v)) or v.min() < 0.0 or v.max() > calib.v_read:
        raise ValueError(f"input voltages must lie within [0, {calib.v_read:g}] V")

    applied = drive_inputs(v, calib, array.params)
    bias_volts = calib.v_read if array.bias else None
    for sample in applied:
        _commit_signals(array, _inference_signals(array, sample, bias_volts), Phase.INFERENCE)

    i_plus, i_minus = row_currents(array, applied, bias_volts)
    out = np.empty_like(i_plus)
    for r, (amp, neuron) in enumerate(zip(array.amps, array.neurons)):
        v_pre = diff_amp_out(amp, i_plus[:, r], i_minus[:, r])
        # amplifier output is referenced to the neuron bias point b
        out[:, r] = neuron_transfer(neuron, v_pre + neuron.bias)
    clocks = v.shape[0]
    array.cycle_count += clocks
    return (out[0] if single else out), clocks


def pre_activations(array: CrossbarArray, input_voltages, calib: CalibrationParams | None = None) -> np.ndarray:
    """Amplifier outputs in pre-activation units (no clock, diagnostic only)."""
    calib = calib or array.calib
    v = np.atleast_2d(np.asarray(input_voltages, dtype=float))
    applied = drive_inputs(v, calib, array.params)
    i_plus, i_minus = row_currents(array, applied, calib.v_read if array.bias else None)
    return (i_plus - i_minus) / calib.unit_current


def ideal_row_forward(weights, x) -> np.ndarray:
    """sigmoid(-(w.x + b)) per row; the last weight column is the bias.

    ``x`` may be a vector or a batch of row vectors.
    """
    w = np.asarray(weights, dtype=float)
    x = np.asarray(x, dtype=float)
    y = x @ w[:, :-1].T + w[:, -1]
    return sigmoid(-y)


def calibrate(
    array: CrossbarArray,
    v_read: float = 0.1,
    pre_activation_scale: float = 0.01,
    linearize_inputs: bool = True,
) -> CalibrationParams:
    """Choose amplifier gain and neuron slope for a unit pre-activation.

    One input at v_read through one +1 synapse gives the amplifier output
    ``pre_activation_scale`` volts, and the neuron slope is set so that this
    swing spans exactly one logistic unit.
    """
    if not v_read > 0:
        raise ValueError("v_read must be > 0")
    if not pre_activation_scale > 0:
        raise ValueError("pre_activation_scale must be > 0")
    if v_read > array.vdd:
        raise ValueError("v_read cannot exceed vdd")
    g_p = 1.0 / r_mtj(array.geometry, array.params)
    g_ap = g_p / (1.0 + float(tmr(array.params, v_read)))
    delta = g_p - g_ap
    if not delta > 0:
        raise ValueError("G_P equals G_AP at the read bias (tmr0 = 0); calibration impossible")
    t = array.params.tmr0 / 100.0
    if linearize_inputs and v_read >= array.params.v0 * math.sqrt(1.0 + t):
        raise ValueError("v_read beyond the peak of the cell's current curve; input linearisation impossible")
    gain = pre_activation_scale / (v_read * delta)
    k = 1.0 / pre_activation_scale
    calib = CalibrationParams(
        v_read=v_read,
        unit_conductance_delta=delta,
        pre_activation_scale=pre_activation_scale,
        transimpedance_gain=gain,
        gain_k=k,
        linearize_inputs=linearize_inputs,
    )
    apply_calibration(array, calib)
    return calib


def apply_calibration(array: CrossbarArray, calib: CalibrationParams) -> CrossbarArray:
    half = (array.vdd - array.vss) / 2
    for amp in array.amps:
        amp.transimpedance_gain = calib.transimpedance_gain
        amp.v_clamp_low, amp.v_clamp_high = -half, half
    for neuron in array.neurons:
        if isinstance(neuron.vtc, Parametric):
            neuron.vtc = Parametric(calib.gain_k)
    array.calib = calib
    return array


# --- snapshots -------------------------------------------------------------

_STATE_CHAR = {UNWRITTEN: "-", MagState.PARALLEL: "P", MagState.ANTIPARALLEL: "A"}
_CHAR_STATE = {v: k for k, v in _STATE_CHAR.items()}
SNAPSHOT_MAGIC = "# sotmlp crossbar snapshot v1"


def dump_snapshot(array: CrossbarArray) -> str:
    """Plain-text snapshot of every device state and the clock counter.

    Grid tokens are two characters per synapse (plus device, minus device):
    P = parallel, A = antiparallel, - = unwritten.
    """
    g, p = array.geometry, array.params
    lines = [
        SNAPSHOT_MAGIC,
        f"n_inputs {array.n_inputs}",
        f"m_rows {array.m_rows}",
        f"bias {int(array.bias)}",
        f"vdd {array.vdd!r}",
        f"vss {array.vss!r}",
        f"geometry {g.mtj_length!r} {g.mtj_width!r} {g.hm_length!r} {g.hm_width!r} {g.hm_thickness!r}",
        f"material {p.ra_product!r} {p.tmr0!r} {p.v0!r}",
        f"phase {array.phase.value}",
        f"cycle_count {array.cycle_count}",
        "neurons " + " ".join(
            _STATE_CHAR[int(n.mram1.state)] + _STATE_CHAR[int(n.mram2.state)] for n in array.neurons
        ),
    ]
    for r in range(array.m_rows):
        tokens = (_STATE_CHAR[int(a)] + _STATE_CHAR[int(b)] for a, b in array.states[r])
        lines.append(f"row {r} " + " ".join(tokens))
    if np.any(array.variation != 1.0):
        for r in range(array.m_rows):
            lines.append(f"variation {r} " + " ".join(repr(float(x)) for x in array.variation[r].ravel()))
    return "\n".join(lines) + "\n"


def load_snapshot(text: str) -> CrossbarArray:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != SNAPSHOT_MAGIC:
        raise ValueError("not a crossbar snapshot")
    fields: dict[str, list[str]] = {}
    rows: dict[int, list[str]] = {}
    variation: dict[int, list[float]] = {}
    for ln in lines[1:]:
        key, *rest = ln.split()
        if key == "row":
            rows[int(rest[0])] = rest[1:]
        elif key == "variation":
            variation[int(rest[0])] = [float(x) for x in rest[1:]]
        else:
            fields[key] = rest
    geometry = DeviceGeometry(*map(float, fields["geometry"]))
    params = MaterialParams(*map(float, fields["material"]))
    array = CrossbarArray(
        int(fields["n_inputs"][0]),
        int(fields["m_rows"][0]),
        geometry=geometry,
        params=params,
        vdd=float(fields["vdd"][0]),
        vss=float(fields["vss"][0]),
        bias=bool(int(fields["bias"][0])),
    )
    array.phase = Phase(fields["phase"][0])
    array.cycle_count = int(fields["cycle_count"][0])
    for neuron, tok in zip(array.neurons, fields.get("neurons", [])):
        for cell, ch in zip((neuron.mram1, neuron.mram2), tok):
            cell.state = MagState(_CHAR_STATE[ch])
    if sorted(rows) != list(range(array.m_rows)):
        raise ValueError("snapshot rows incomplete")
    for r, tokens in rows.items():
        if len(tokens) != array.n_cols:
            raise ValueError(f"row {r}: expected {array.n_cols} synapses, got {len(tokens)}")
        array.states[r] = [[_CHAR_STATE[t[0]], _CHAR_STATE[t[1]]] for t in tokens]
    for r, vals in variation.items():
        array.variation[r] = np.asarray(vals).reshape(array.n_cols, 2)
    return array

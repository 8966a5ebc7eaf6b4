"""SPICE-style netlist export of a programmed array or network.

Grammar (one element per line):

    * comment
    R<name> <node+> <node-> <ohms>
    V<name> <node+> 0 <volts>
    X<name> <pins...> <subckt>
    .end

Each MTJ becomes a resistor at its zero-bias resistance (variation factor
included), written with repr() so the value parses back exactly. Resistor
names encode position and state: R L<layer>_R<row>_C<col|B>_<PLUS|MINUS>_<P|AP>.
Amplifiers, neurons and inter-layer level shifters are subcircuit instances
whose bodies are left to the user.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from . import crossbar as xb
from .device import MagState, state_resistance

_RES_NAME = re.compile(r"^RL(\d+)_R(\d+)_C(\d+|B)_(PLUS|MINUS)_(P|AP)$")


def _layers(obj):
    if isinstance(obj, xb.CrossbarArray):
        return [obj], f"{obj.n_inputs}x{obj.m_rows} array"
    return list(obj.arrays), f"{obj.topology} MLP"


def emit(obj, *, seed: int | None = None, input_voltages=None, v_read: float | None = None) -> str:
    """Netlist text for a CrossbarArray or AnalogMlp.

    ``input_voltages`` sets the first-layer source values (default 0 V);
    bias lines are driven at ``v_read`` (default: the calibration's, else 0.1 V).
    """
    arrays, label = _layers(obj)
    for k, a in enumerate(arrays):
        if not a.programmed:
            raise xb.UnprogrammedError(f"layer {k} has unwritten devices")
    first = arrays[0]
    if v_read is None:
        calib = getattr(obj, "calib", None) or first.calib
        v_read = calib.v_read if calib is not None else 0.1
    g, p = first.geometry, first.params
    lines = [
        "* sotmlp netlist",
        f"* topology {label}; bias column {'yes' if first.bias else 'no'}",
        f"* seed {seed if seed is not None else 'none'}",
        f"* mtj {g.mtj_length!r} x {g.mtj_width!r} m; hm {g.hm_length!r} x {g.hm_width!r} x {g.hm_thickness!r} m",
        f"* ra_product {p.ra_product!r} ohm*m^2; tmr0 {p.tmr0!r} %; v0 {p.v0!r} V",
        "* resistor values are zero-bias MTJ resistances; bias dependence is left to the simulator",
    ]
    for k, a in enumerate(arrays):
        states = " ".join(f"R{r}={n.mram1.state.short}/{n.mram2.state.short}" for r, n in enumerate(a.neurons))
        lines.append(f"* neurons L{k}: {states}")
    lines.append(f"VDD vdd 0 {first.vdd!r}")
    lines.append(f"VSS vss 0 {first.vss!r}")

    if input_voltages is None:
        input_voltages = [0.0] * first.n_inputs
    input_voltages = [float(v) for v in input_voltages]
    if len(input_voltages) != first.n_inputs:
        raise ValueError(f"expected {first.n_inputs} input voltages, got {len(input_voltages)}")
    for c, v in enumerate(input_voltages):
        lines.append(f"VIN_C{c} in_L0_C{c} 0 {v!r}")

    for k, a in enumerate(arrays):
        if k:
            for c in range(a.n_inputs):
                lines.append(f"XLS_L{k}_C{c} out_L{k - 1}_R{c} in_L{k}_C{c} sot_levelshift")
        if a.bias:
            lines.append(f"VBIAS_L{k} bias_L{k} 0 {float(v_read)!r}")
        r0 = state_resistance(a.geometry, a.params, a.states, 0.0) * a.variation
        for r in range(a.m_rows):
            for c in range(a.n_cols):
                is_bias = a.bias and c == a.n_inputs
                node_in = f"bias_L{k}" if is_bias else f"in_L{k}_C{c}"
                col = "B" if is_bias else str(c)
                for dev, tag, node in ((0, "PLUS", f"ip_L{k}_R{r}"), (1, "MINUS", f"im_L{k}_R{r}")):
                    state = MagState(int(a.states[r, c, dev])).short
                    lines.append(f"RL{k}_R{r}_C{col}_{tag}_{state} {node_in} {node} {float(r0[r, c, dev])!r}")
        for r in range(a.m_rows):
            lines.append(f"XAMP_L{k}_R{r} ip_L{k}_R{r} im_L{k}_R{r} pre_L{k}_R{r} sot_diffamp")
            lines.append(f"XNEU_L{k}_R{r} pre_L{k}_R{r} out_L{k}_R{r} vdd vss sot_neuron")
    lines.append(".end")
    return "\n".join(lines) + "\n"


@dataclass
class Element:
    name: str
    nodes: tuple
    value: float | str


def parse(text: str) -> list[Element]:
    elements = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("*") or line == ".end":
            continue
        parts = line.split()
        kind = parts[0][0].upper()
        if kind in "RV":
            if len(parts) != 4:
                raise ValueError(f"malformed element line: {raw!r}")
            elements.append(Element(parts[0], tuple(parts[1:3]), float(parts[3])))
        elif kind == "X":
            elements.append(Element(parts[0], tuple(parts[1:-1]), parts[-1]))
        else:
            raise ValueError(f"unknown element {parts[0]!r}")
    return elements


def resistors(text: str) -> dict[str, float]:
    return {e.name: e.value for e in parse(text) if e.name.startswith("R")}


def recover_weights(text: str) -> list[np.ndarray]:
    """Per-layer (m, cols) weight matrices read from resistor names.

    The bias column, when present, is last.
    """
    found: dict[int, dict[tuple[int, int], dict[str, str]]] = {}
    for name in resistors(text):
        m = _RES_NAME.match(name)
        if not m:
            raise ValueError(f"unrecognised resistor name {name!r}")
        layer, row, col, dev, state = m.groups()
        found.setdefault(int(layer), {}).setdefault((int(row), col), {})[dev] = state
    layers = []
    for k in sorted(found):
        cells = found[k]
        rows = 1 + max(r for r, _ in cells)
        numeric = [int(c) for _, c in cells if c != "B"]
        has_bias = any(c == "B" for _, c in cells)
        n = 1 + max(numeric) if numeric else 0
        w = np.zeros((rows, n + has_bias), dtype=np.int8)
        for (r, c), devs in cells.items():
            col = n if c == "B" else int(c)
            if devs.get("PLUS") == devs.get("MINUS"):
                raise ValueError(f"layer {k} cell ({r}, {c}) devices not complementary")
            w[r, col] = 1 if devs["PLUS"] == "P" else -1
        layers.append(w)
    return layers

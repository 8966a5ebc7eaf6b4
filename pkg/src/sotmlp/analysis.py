"""General-scaling normalization, power-area products and the latency table."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from importlib import resources
from typing import Sequence

REFERENCE_VDD = 0.8
REFERENCE_NODE_NM = 14.0

CONVENTIONS = ("multiply", "divide")


@dataclass(frozen=True)
class NeuronDesignSpec:
    name: str
    power: float  # W, as reported
    area: float  # m^2, as reported
    vdd: float
    tech_node: float  # nm

    def __post_init__(self):
        for key in ("power", "area", "vdd", "tech_node"):
            if not getattr(self, key) > 0:
                raise ValueError(f"{self.name}: {key} must be > 0")


@dataclass(frozen=True)
class ArchLatencySpec:
    name: str
    frequency_range: tuple  # GHz (low, high)
    total_clocks_range: tuple  # (low, high)
    mac_domain: str = ""
    activation_domain: str = ""

    def __post_init__(self):
        lo, hi = self.frequency_range
        if not 0 < lo <= hi:
            raise ValueError(f"{self.name}: bad frequency range {self.frequency_range}")
        lo, hi = self.total_clocks_range
        if not 0 < lo <= hi:
            raise ValueError(f"{self.name}: bad clock range {self.total_clocks_range}")


def scale_factors(vdd: float, tech_node: float) -> tuple[float, float]:
    """Voltage factor U = 0.8 / vdd and dimension factor S = 14 / node."""
    if not (vdd > 0 and tech_node > 0):
        raise ValueError("vdd and tech_node must be > 0")
    return REFERENCE_VDD / vdd, REFERENCE_NODE_NM / tech_node


def normalize(spec: NeuronDesignSpec, convention: str = "multiply") -> tuple[float, float]:
    """Translate a design to 0.8 V / 14 nm.

    "multiply" scales power by U^2 and area by S^2, i.e. divides the reported
    values by 1/U^2 and 1/S^2. "divide" applies the reciprocal. Only ratios
    were reported, so neither direction can be checked against them.
    """
    u, s = scale_factors(spec.vdd, spec.tech_node)
    if convention == "multiply":
        return spec.power * u * u, spec.area * s * s
    if convention == "divide":
        return spec.power / (u * u), spec.area / (s * s)
    raise ValueError(f"convention must be one of {CONVENTIONS}, got {convention!r}")


def power_area_product(power_ratio: float, area_ratio: float) -> float:
    if not (power_ratio > 0 and area_ratio > 0):
        raise ValueError("ratios must be > 0")
    return power_ratio * area_ratio


def load_reference() -> dict:
    text = resources.files("sotmlp").joinpath("data/reference.json").read_text()
    return json.loads(text)


def proposed_neuron(reference: dict | None = None) -> NeuronDesignSpec:
    ref = (reference or load_reference())["proposed_neuron"]
    return NeuronDesignSpec(ref["name"], ref["power_w"], ref["area_m2"], ref["vdd"], ref["tech_node_nm"])


def reference_architectures(reference: dict | None = None) -> list[ArchLatencySpec]:
    ref = reference or load_reference()
    return [
        ArchLatencySpec(
            a["name"], tuple(a["frequency_ghz"]), tuple(a["total_clocks"]), a["mac"], a["activation"]
        )
        for a in ref["architectures"]
    ]


@dataclass
class RatioRow:
    name: str
    power_ratio: float
    area_ratio: float

    @property
    def pap(self) -> float:
        return power_area_product(self.power_ratio, self.area_ratio)


def ratios_from_reference(reference: dict | None = None) -> list[RatioRow]:
    ref = reference or load_reference()
    return [RatioRow(r["name"], r["power_ratio"], r["area_ratio"]) for r in ref["neuron_ratios"]]


def ratios_from_designs(
    designs: Sequence[NeuronDesignSpec], baseline: NeuronDesignSpec, convention: str = "multiply"
) -> list[RatioRow]:
    """Normalized power and area of each design relative to ``baseline``."""
    p0, a0 = normalize(baseline, convention)
    rows = []
    for d in designs:
        p, a = normalize(d, convention)
        rows.append(RatioRow(d.name, p / p0, a / a0))
    return rows


def format_ratio_table(rows: Sequence[RatioRow], convention: str = "multiply") -> str:
    lines = [
        f"# power/area normalized to {REFERENCE_VDD} V, {REFERENCE_NODE_NM:g} nm (convention: {convention};"
        " U^2 vs 1/U^2 direction cannot be checked against reported ratios)",
        f"{'design':<24} {'power':>8} {'area':>8} {'PAP':>8} {'PAP~':>6}",
    ]
    for r in rows:
        lines.append(
            f"{r.name:<24} {r.power_ratio:>7.2f}x {r.area_ratio:>7.2f}x {r.pap:>7.2f}x {round(r.pap):>5d}x"
        )
    return "\n".join(lines) + "\n"


def ratio_csv(rows: Sequence[RatioRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["design", "power_ratio", "area_ratio", "power_area_product", "pap_rounded"])
    for r in rows:
        w.writerow([r.name, repr(r.power_ratio), repr(r.area_ratio), repr(r.pap), round(r.pap)])
    return buf.getvalue()


@dataclass
class LatencyRow:
    name: str
    mac_domain: str
    activation_domain: str
    frequency_range: tuple
    total_clocks_range: tuple
    measured: bool


@dataclass
class LatencyReport:
    topology: str
    inference_clocks: int
    programming_clocks: int
    rows: list

    def text(self) -> str:
        lines = [
            f"# latency, {self.topology} binarized MLP",
            f"# this design: inference {self.inference_clocks} clock(s), programming {self.programming_clocks} clocks",
            "# reference rows are stored constants, not measurements",
            f"{'architecture':<20} {'MAC':<8} {'act.':<8} {'freq (GHz)':<12} {'total clocks':<14} source",
        ]
        for r in self.rows:
            lines.append(
                f"{r.name:<20} {r.mac_domain:<8} {r.activation_domain:<8} {_range(r.frequency_range, False):<12} "
                f"{_range(r.total_clocks_range, True):<14} {'measured' if r.measured else 'reference'}"
            )
        return "\n".join(lines) + "\n"

    def csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["architecture", "mac", "activation", "freq_ghz_low", "freq_ghz_high", "clocks_low", "clocks_high", "source"])
        for r in self.rows:
            w.writerow([
                r.name, r.mac_domain, r.activation_domain, r.frequency_range[0], r.frequency_range[1],
                _int_or_float(r.total_clocks_range[0]), _int_or_float(r.total_clocks_range[1]),
                "measured" if r.measured else "reference",
            ])
        return buf.getvalue()


def _int_or_float(x):
    return int(x) if float(x).is_integer() else x


def _pow10(x: float) -> str:
    e = len(str(int(x))) - 1
    return f"10^{e}" if int(x) == 10**e and e > 1 else str(int(x))


def _range(pair, clocks: bool) -> str:
    lo, hi = pair
    fmt = _pow10 if clocks else (lambda v: f"{v:g}")
    return fmt(lo) if lo == hi else f"{fmt(lo)}-{fmt(hi)}"


def programming_clocks(mlp) -> int:
    """Clocks to program every array: one per row."""
    return sum(a.m_rows for a in mlp.arrays)


def latency_report(mlp, reference_specs: Sequence[ArchLatencySpec] | None = None, inference_clocks: int | None = None) -> LatencyReport:
    """Clock counts of ``mlp`` beside the stored reference rows.

    ``inference_clocks`` defaults to a measured single forward pass through
    the (programmed, calibrated) network.
    """
    from .network import forward

    if reference_specs is None:
        reference_specs = reference_architectures()
    if inference_clocks is None:
        n = mlp.arrays[0].n_inputs
        _, inference_clocks = forward(mlp, [0.0] * n)
    freq = tuple(load_reference()["analog_frequency_ghz"])
    rows = [
        LatencyRow(s.name, s.mac_domain, s.activation_domain, s.frequency_range, s.total_clocks_range, False)
        for s in reference_specs
    ]
    rows.append(LatencyRow("This design", "analog", "analog", freq, (inference_clocks, inference_clocks), True))
    return LatencyReport(str(mlp.topology), inference_clocks, programming_clocks(mlp), rows)

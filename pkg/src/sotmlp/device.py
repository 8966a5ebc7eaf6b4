"""Compact model of a single SOT-MRAM device.

Resistance follows the angle-dependent MTJ expression with a bias-dependent
TMR ratio. Writes are modeled as instantaneous state changes selected by the
polarity of the charge current through the heavy-metal strip.

All quantities are SI: meters, ohms, volts, ohm*m^2 for the RA product.
The vectorised helpers accept numpy arrays wherever a float is accepted.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np


class MagState(enum.IntEnum):
    PARALLEL = 0
    ANTIPARALLEL = 1

    @property
    def theta(self) -> float:
        return 0.0 if self is MagState.PARALLEL else math.pi

    @property
    def short(self) -> str:
        return "P" if self is MagState.PARALLEL else "AP"


class WritePolarity(enum.Enum):
    POSITIVE_X = "+x"
    NEGATIVE_X = "-x"


@dataclass(frozen=True)
class DeviceGeometry:
    mtj_length: float = 50e-9
    mtj_width: float = 30e-9
    hm_length: float = 100e-9
    hm_width: float = 50e-9
    hm_thickness: float = 3e-9

    def __post_init__(self):
        for name in ("mtj_length", "mtj_width", "hm_length", "hm_width", "hm_thickness"):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError(f"{name} must be > 0, got {value!r}")


@dataclass(frozen=True)
class MaterialParams:
    ra_product: float = 10e-12  # ohm*m^2 (10 ohm*um^2)
    tmr0: float = 100.0  # percent
    v0: float = 0.65

    def __post_init__(self):
        if not self.ra_product > 0:
            raise ValueError(f"ra_product must be > 0, got {self.ra_product!r}")
        if not self.tmr0 >= 0:
            raise ValueError(f"tmr0 must be >= 0, got {self.tmr0!r}")
        if not self.v0 > 0:
            raise ValueError(f"v0 must be > 0, got {self.v0!r}")


@dataclass
class SotMramCell:
    """One SOT-MRAM device.

    ``variation`` is a multiplicative factor on the device resistance used by
    the optional device-variation hook; it is 1.0 for a nominal device.
    """

    geometry: DeviceGeometry = field(default_factory=DeviceGeometry)
    params: MaterialParams = field(default_factory=MaterialParams)
    state: MagState = MagState.PARALLEL
    variation: float = 1.0

    def __post_init__(self):
        self.state = MagState(self.state)


def mtj_area(geometry: DeviceGeometry) -> float:
    """Elliptical MTJ footprint in m^2."""
    return geometry.mtj_length * geometry.mtj_width * math.pi / 4


def r_mtj(geometry: DeviceGeometry, params: MaterialParams) -> float:
    """Parallel-state resistance RA / area."""
    return params.ra_product / mtj_area(geometry)


def tmr(params: MaterialParams, v_bias):
    return (params.tmr0 / 100.0) / (1.0 + (np.asarray(v_bias, dtype=float) / params.v0) ** 2)


def resistance_at_angle(cell: SotMramCell, theta, v_bias=0.0):
    ratio = tmr(cell.params, v_bias)
    r0 = r_mtj(cell.geometry, cell.params)
    r = 2.0 * r0 * (1.0 + ratio) / (2.0 + ratio * (1.0 + np.cos(theta)))
    return r * cell.variation


def resistance(cell: SotMramCell, v_bias=0.0):
    return resistance_at_angle(cell, cell.state.theta, v_bias)


def conductance(cell: SotMramCell, v_bias=0.0):
    return 1.0 / resistance(cell, v_bias)


def state_resistance(geometry: DeviceGeometry, params: MaterialParams, state, v_bias=0.0):
    """Vectorised resistance over arrays of states (0 = P, 1 = AP)."""
    r0 = r_mtj(geometry, params)
    state = np.asarray(state)
    return np.where(state == MagState.ANTIPARALLEL, r0 * (1.0 + tmr(params, v_bias)), r0)


def apply_write(cell: SotMramCell, polarity: WritePolarity) -> SotMramCell:
    """Switch the free layer with a heavy-metal charge current.

    Current along +x aligns the free layer with the pinned layer (P); current
    along -x produces AP. The write always completes.
    """
    if polarity is WritePolarity.POSITIVE_X:
        cell.state = MagState.PARALLEL
    elif polarity is WritePolarity.NEGATIVE_X:
        cell.state = MagState.ANTIPARALLEL
    else:
        raise ValueError(f"unknown write polarity {polarity!r}")
    return cell


def polarity_for(state: MagState) -> WritePolarity:
    return WritePolarity.POSITIVE_X if state is MagState.PARALLEL else WritePolarity.NEGATIVE_X

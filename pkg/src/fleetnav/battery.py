"""Battery bookkeeping: linear state-of-charge drain weighted by motion type.

The full electrochemical story is out of scope; the surrogate is a linear
constant-current drain calibrated so a full-speed straight drive lasts
exactly ``lifetime_s`` seconds. Turning drains 1.25x faster than driving
straight, mirroring the straight/turn ratio of the allocation energy model.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class BatteryParams:
    capacity_units: float = 100.0
    lifetime_s: float = 900.0       # full-speed straight drive to empty
    turn_multiplier: float = 1.25
    v_max: float = 1.0
    omega_max: float = 1.0

    @property
    def straight_rate(self) -> float:
        """Units drained per second at full forward speed."""
        return self.capacity_units / self.lifetime_s

    @property
    def turn_rate(self) -> float:
        return self.turn_multiplier * self.straight_rate


@dataclass(frozen=True)
class BatteryState:
    """Immutable charge record; ``consume`` returns the successor state."""

    params: BatteryParams = BatteryParams()
    drained_units: float = 0.0

    @property
    def capacity_units(self) -> float:
        return self.params.capacity_units

    @property
    def soc(self) -> float:
        """State of charge in percent, floored at 0."""
        cap = self.params.capacity_units
        return 100.0 * max(cap - self.drained_units, 0.0) / cap

    @property
    def depleted(self) -> bool:
        return self.drained_units >= self.params.capacity_units

    def remaining_energy_units(self) -> float:
        return max(self.params.capacity_units - self.drained_units, 0.0)

    def consume(self, v: float, omega: float, dt: float) -> "BatteryState":
        return consume(self, v, omega, dt)


def consume(state: BatteryState, v: float, omega: float, dt: float) -> BatteryState:
    """Drain for one step of commanded motion. Drain is additive over steps."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    p = state.params
    rate = p.straight_rate * abs(v) / p.v_max + p.turn_rate * abs(omega) / p.omega_max
    return replace(state, drained_units=state.drained_units + rate * dt)


def discharge_curve(
    duration_s: float, dt: float = 1.0, params: BatteryParams = BatteryParams()
) -> np.ndarray:
    """Sampled (t, soc) series for a constant full-rate discharge.

    soc falls linearly from 100 at t=0 to 0 at t=lifetime_s, then stays 0.
    """
    if duration_s <= 0:
        raise ValueError("duration must be positive")
    if dt <= 0:
        raise ValueError("dt must be positive")
    t = np.arange(0.0, duration_s + dt / 2, dt)
    soc = 100.0 * np.clip(1.0 - t / params.lifetime_s, 0.0, 1.0)
    return np.stack([t, soc], axis=1)


def write_discharge_csv(path, curve: np.ndarray) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("t", "soc"))
        for t, soc in curve:
            writer.writerow((str(float(t)), str(float(soc))))

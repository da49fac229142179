"""Simulation state and step rejection."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterator

from .fields import Field, Grid, ScalarField, VectorField

FIELD_NAMES = ("c_p", "c_m", "phi", "v", "n")


class StepRejected(RuntimeError):
    """Raised when a step leaves the admissible region; the driver retries with a smaller dt."""

    def __init__(self, reason: str, value: float) -> None:
        super().__init__(f"{reason} (value {value:.6g})")
        self.reason = reason
        self.value = value


@dataclass(frozen=True)
class State:
    """The evolved quintuple (c_p, c_m, Φ, v, n) at a given time."""

    c_p: ScalarField
    c_m: ScalarField
    phi: ScalarField
    v: VectorField
    n: VectorField
    time: float = 0.0

    @property
    def grid(self) -> Grid:
        return self.c_p.grid

    def updated(self, **changes: object) -> "State":
        return replace(self, **changes)

    def named_fields(self) -> Iterator[tuple[str, Field]]:
        for name in FIELD_NAMES:
            yield name, getattr(self, name)

    def midpoint(self, other: "State") -> "State":
        """Field-wise average of two states, used for midpoint quadrature in time."""

        return State(
            c_p=(self.c_p + other.c_p) * 0.5,
            c_m=(self.c_m + other.c_m) * 0.5,
            phi=(self.phi + other.phi) * 0.5,
            v=(self.v + other.v) * 0.5,
            n=(self.n + other.n) * 0.5,
            time=0.5 * (self.time + other.time),
        )

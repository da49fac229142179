"""Energy functional, energy budget, invariant monitors and weak-form residuals."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
import logging
import math
from typing import Iterator, Mapping, Sequence

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid

from .director import (
    DEFAULT_LAMBDA,
    ericksen_stress,
    lie_derivative,
    potential_gradient,
    potential_integral,
)
from .electrostatics import (
    PoissonSolveReport,
    apply_dielectric,
    electric_energy,
    electric_stress,
    electric_torque,
)
from .fields import (
    Grid,
    ScalarField,
    VectorField,
    divergence,
    dot,
    gradient,
    inner,
    integrate,
    l2_norm,
    laplacian,
    lp_norm,
    matvec,
    outer,
    spin,
    strain_rate,
    sup_norm,
)
from .flow import dissipation_density, exchange_power, kinetic_energy, leslie_stress
from .state import State
from .transport import (
    entropy_integral,
    species_dissipation,
    species_flux,
    species_masses,
    truncation_excess,
)

logger = logging.getLogger(__name__)

DIAGNOSTICS_COLUMNS = (
    "step",
    "time",
    "E",
    "kinetic",
    "elastic",
    "potential",
    "entropy_p",
    "entropy_m",
    "electric",
    "dissipation",
    "budget_residual",
    "mass_p",
    "mass_m",
    "min_cp",
    "max_cp",
    "min_cm",
    "max_cm",
    "phi_inf",
    "grad_phi_p",
    "lap_n_2",
    "sup_n",
    "v_2",
    "grad_v_2",
    "poisson_iters",
    "poisson_residual",
)

MASS_TOLERANCE = 1e-12
MINIMUM_TOLERANCE = 1e-8
MAXIMUM_TOLERANCE = 1e-6
MONITOR_FACTOR = 100.0


class InsufficientTrajectory(ValueError):
    """Raised when a weak-form check receives fewer than three states."""


class InvalidTestFunction(ValueError):
    """Raised when a momentum test function is not divergence-free."""


@dataclass(frozen=True)
class EnergyReport:
    kinetic: float
    elastic: float
    potential_F: float
    entropy_p: float
    entropy_m: float
    electric: float
    dissipation_rate: float = 0.0
    budget_residual: float = 0.0

    @property
    def total(self) -> float:
        return (
            self.kinetic
            + self.elastic
            + self.potential_F
            + self.entropy_p
            + self.entropy_m
            + self.electric
        )


def total_energy(
    state: State, epsilon: float, barrier_lambda: float = DEFAULT_LAMBDA
) -> EnergyReport:
    grad_n = gradient(state.n)
    return EnergyReport(
        kinetic=kinetic_energy(state.v),
        elastic=0.5 * inner(grad_n, grad_n),
        potential_F=potential_integral(state.n, barrier_lambda),
        entropy_p=entropy_integral(state.c_p),
        entropy_m=entropy_integral(state.c_m),
        electric=electric_energy(state.phi, state.n, epsilon),
    )


def total_dissipation(
    state: State,
    alpha: Sequence[float],
    epsilon: float,
    barrier_lambda: float = DEFAULT_LAMBDA,
) -> float:
    """Species dissipation of both ions plus the integrated Leslie dissipation form."""

    ndot = lie_derivative(state.n, state.v, state.phi, epsilon, barrier_lambda)
    viscous = integrate(dissipation_density(state.n, ndot, strain_rate(state.v), alpha))
    return (
        species_dissipation(state.c_p, state.phi, state.n, epsilon, +1)
        + species_dissipation(state.c_m, state.phi, state.n, epsilon, -1)
        + viscous
    )


def total_exchange(
    state: State,
    alpha: Sequence[float],
    epsilon: float,
    barrier_lambda: float = DEFAULT_LAMBDA,
) -> float:
    ndot = lie_derivative(state.n, state.v, state.phi, epsilon, barrier_lambda)
    density = exchange_power(state.n, ndot, strain_rate(state.v), spin(state.v), alpha)
    return integrate(density)


@dataclass(frozen=True)
class BudgetReport:
    delta_energy: float
    dissipated: float
    exchanged: float
    residual: float

    def __iter__(self) -> Iterator[float]:
        return iter((self.delta_energy, self.dissipated, self.residual))


def energy_budget(
    before: State,
    after: State,
    dt: float,
    alpha: Sequence[float],
    epsilon: float,
    barrier_lambda: float = DEFAULT_LAMBDA,
) -> BudgetReport:
    """ΔE + dt·(dissipation + exchange) at the midpoint state; O(dt²) per step."""

    delta = (
        total_energy(after, epsilon, barrier_lambda).total
        - total_energy(before, epsilon, barrier_lambda).total
    )
    midpoint = before.midpoint(after)
    dissipated = dt * total_dissipation(midpoint, alpha, epsilon, barrier_lambda)
    exchanged = dt * total_exchange(midpoint, alpha, epsilon, barrier_lambda)
    return BudgetReport(
        delta_energy=delta,
        dissipated=dissipated,
        exchanged=exchanged,
        residual=delta + dissipated + exchanged,
    )


@dataclass(frozen=True)
class MonitorRow:
    step: int
    time: float
    mass_p: float
    mass_m: float
    min_cp: float
    max_cp: float
    min_cm: float
    max_cm: float
    phi_inf: float
    grad_phi_p: float
    lap_n_2: float
    sup_n: float
    v_2: float
    grad_v_2: float
    poisson_iters: int
    poisson_residual: float
    violations: tuple[str, ...] = ()


def monitor_row(
    state: State,
    c_bar: float,
    barrier_lambda: float = DEFAULT_LAMBDA,
    grad_phi_exponent: float = 4.0,
    report: PoissonSolveReport | None = None,
    reference_masses: tuple[float, float] | None = None,
    step: int = 0,
) -> MonitorRow:
    """Assemble the invariant monitors of a state at ``step`` and flag broken tolerances."""

    mass_p, mass_m = species_masses(state.c_p, state.c_m)
    cp = state.c_p.physical
    cm = state.c_m.physical
    row = MonitorRow(
        step=step,
        time=state.time,
        mass_p=mass_p,
        mass_m=mass_m,
        min_cp=float(cp.min()),
        max_cp=float(cp.max()),
        min_cm=float(cm.min()),
        max_cm=float(cm.max()),
        phi_inf=sup_norm(state.phi),
        grad_phi_p=lp_norm(gradient(state.phi), grad_phi_exponent),
        lap_n_2=l2_norm(laplacian(state.n)),
        sup_n=sup_norm(state.n),
        v_2=l2_norm(state.v),
        grad_v_2=l2_norm(gradient(state.v)),
        poisson_iters=report.iterations if report else 0,
        poisson_residual=report.final_residual if report else 0.0,
    )
    violations = []
    if min(row.min_cp, row.min_cm) < -MINIMUM_TOLERANCE:
        violations.append("minimum principle")
    if max(row.max_cp, row.max_cm) > c_bar * (1.0 + MAXIMUM_TOLERANCE):
        violations.append("maximum principle")
    if row.sup_n > 1.0 + 10.0 * barrier_lambda:
        violations.append("barrier confinement")
    if reference_masses is not None:
        current_masses = (mass_p, mass_m)
        for name, current, initial in zip(("mass_p", "mass_m"), current_masses, reference_masses):
            if abs(current - initial) > MASS_TOLERANCE * max(1.0, abs(initial)):
                violations.append(f"{name} drift")
    if violations:
        logger.warning(
            "Monitor violations at step %d (t=%.6g): %s", step, state.time, ", ".join(violations)
        )
    return replace(row, violations=tuple(violations))


def diagnostics_record(energy: EnergyReport, monitors: MonitorRow) -> dict[str, float]:
    """One CSV row keyed and ordered by DIAGNOSTICS_COLUMNS."""

    values = {
        "E": energy.total,
        "kinetic": energy.kinetic,
        "elastic": energy.elastic,
        "potential": energy.potential_F,
        "entropy_p": energy.entropy_p,
        "entropy_m": energy.entropy_m,
        "electric": energy.electric,
        "dissipation": energy.dissipation_rate,
        "budget_residual": energy.budget_residual,
    }
    monitor_values = asdict(monitors)
    monitor_values.pop("violations")
    values.update(monitor_values)
    return {column: values[column] for column in DIAGNOSTICS_COLUMNS}


@dataclass
class EstimateLedger:
    """Running record of the a priori bounds along a trajectory."""

    v_l2_sup: float = 0.0
    grad_v_l2_squared_time: float = 0.0
    grad_n_l2_sup: float = 0.0
    grad_phi_l2_sup: float = 0.0
    phi_h1_sup: float = 0.0
    grad_c_l2_squared_time: float = 0.0
    phi_inf_sup: float = 0.0
    grad_phi_p_sup: float = 0.0
    lap_n_p0_time: float = 0.0
    barrier_force_p0_time: float = 0.0
    truncation_excess_sup: float = 0.0

    def update(
        self,
        state: State,
        dt: float,
        c_bar: float,
        barrier_lambda: float = DEFAULT_LAMBDA,
        grad_phi_exponent: float = 4.0,
        p0: float = 1.5,
    ) -> None:
        grad_phi = gradient(state.phi)
        grad_phi_l2 = l2_norm(grad_phi)
        self.v_l2_sup = max(self.v_l2_sup, l2_norm(state.v))
        self.grad_n_l2_sup = max(self.grad_n_l2_sup, l2_norm(gradient(state.n)))
        self.grad_phi_l2_sup = max(self.grad_phi_l2_sup, grad_phi_l2)
        self.phi_h1_sup = max(self.phi_h1_sup, math.hypot(l2_norm(state.phi), grad_phi_l2))
        self.phi_inf_sup = max(self.phi_inf_sup, sup_norm(state.phi))
        self.grad_phi_p_sup = max(self.grad_phi_p_sup, lp_norm(grad_phi, grad_phi_exponent))
        excess = truncation_excess(state.c_p, c_bar) + truncation_excess(state.c_m, c_bar)
        self.truncation_excess_sup = max(self.truncation_excess_sup, excess)
        if dt > 0.0:
            grad_v = l2_norm(gradient(state.v))
            grad_c = l2_norm(gradient(state.c_p)) ** 2 + l2_norm(gradient(state.c_m)) ** 2
            self.grad_v_l2_squared_time += dt * grad_v**2
            self.grad_c_l2_squared_time += dt * grad_c
            self.lap_n_p0_time += dt * lp_norm(laplacian(state.n), p0) ** p0
            force = potential_gradient(state.n, barrier_lambda)
            self.barrier_force_p0_time += dt * lp_norm(force, p0) ** p0

    def to_dict(self) -> dict[str, float]:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: Mapping[str, float]) -> "EstimateLedger":
        known = {f.name for f in fields(cls)}
        return cls(**{key: float(value) for key, value in values.items() if key in known})


def check_diagnostics(
    frame: pd.DataFrame,
    c_bar: float,
    barrier_lambda: float = DEFAULT_LAMBDA,
    dim: int = 2,
    h2_monitor: bool = False,
    factor: float = MONITOR_FACTOR,
) -> list[str]:
    """Re-verify the tolerance contracts on a diagnostics table."""

    if tuple(frame.columns) != DIAGNOSTICS_COLUMNS:
        return ["header does not match the diagnostics schema"]
    if frame.empty:
        return ["no diagnostics rows"]
    violations: list[str] = []
    numeric = frame.to_numpy(dtype=float)
    if not np.all(np.isfinite(numeric)):
        violations.append("non-finite entries")
    first = frame.iloc[0]
    for column in ("mass_p", "mass_m"):
        drift = (frame[column] - first[column]).abs().max()
        if drift > MASS_TOLERANCE * max(1.0, abs(first[column])):
            violations.append(f"{column} drifts by {drift:.3e}")
    lowest = min(frame["min_cp"].min(), frame["min_cm"].min())
    if lowest < -MINIMUM_TOLERANCE:
        violations.append(f"minimum principle: min c = {lowest:.3e}")
    highest = max(frame["max_cp"].max(), frame["max_cm"].max())
    if highest > c_bar * (1.0 + MAXIMUM_TOLERANCE):
        violations.append(f"maximum principle: max c = {highest:.6g}")
    sup_n = frame["sup_n"].max()
    if sup_n > 1.0 + 10.0 * barrier_lambda:
        violations.append(f"barrier confinement: sup|n| = {sup_n:.6g}")
    monitored = ["phi_inf", "grad_phi_p"] + (["lap_n_2"] if h2_monitor else [])
    for column in monitored:
        bound = factor * first[column] if first[column] > 0.0 else 1e-10
        peak = frame[column].max()
        if peak > bound:
            violations.append(f"{column} = {peak:.6g} exceeds {bound:.6g}")
    volume = (2.0 * math.pi) ** dim
    energy_floor = -2.0 * volume / math.e
    velocity_bound = factor * math.sqrt(2.0 * max(first["E"] - energy_floor, 0.0))
    if frame["v_2"].max() > velocity_bound:
        violations.append(f"v_2 exceeds {velocity_bound:.6g}")
    if frame["E"].min() < energy_floor:
        violations.append("energy below the entropy floor")
    return violations


# ---------------------------------------------------------------------------
# Weak-form residuals

SPATIAL_MODES = (
    ((1, 0), 0.0),
    ((0, 1), -0.5 * math.pi),
    ((1, 1), 0.0),
    ((1, -1), -0.5 * math.pi),
)
TEMPORAL_MODES = ("1", "t", "cos t")
WEAK_EQUATIONS = ("c_p", "c_m", "phi", "v", "n")


def _temporal(kind: str, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if kind == "1":
        return np.ones_like(t), np.zeros_like(t)
    if kind == "t":
        return t, np.ones_like(t)
    if kind == "cos t":
        return np.cos(t), -np.sin(t)
    raise ValueError(f"Unknown temporal mode {kind!r}.")


@dataclass(frozen=True)
class TestFunction:
    """ψ(x, t) = θ(t)·cos(k·x + phase); vector equations use a direction or a curl."""

    __test__ = False

    equation: str
    wavevector: tuple[int, ...]
    phase: float
    temporal: str
    direction: int = 0
    solenoidal: bool = True

    def profile(self, grid: Grid) -> ScalarField:
        k = tuple(self.wavevector) + (0,) * (grid.dim - len(self.wavevector))
        x = grid.coordinates()
        return ScalarField(grid, np.cos(sum(kj * xj for kj, xj in zip(k, x)) + self.phase))

    def spatial(self, grid: Grid) -> ScalarField | VectorField:
        psi = self.profile(grid)
        if self.equation == "v":
            g = gradient(psi).physical
            if not self.solenoidal:
                return VectorField(grid, g)
            components = [g[1], -g[0]] + [np.zeros(grid.shape)] * (grid.dim - 2)
            return VectorField.from_components(grid, components)
        if self.equation == "n":
            axis = self.direction % grid.dim
            components = [np.zeros(grid.shape)] * grid.dim
            components[axis] = psi.physical
            return VectorField.from_components(grid, components)
        return psi

    @property
    def label(self) -> str:
        return f"{self.equation}:k={self.wavevector},phase={self.phase:.4f},theta={self.temporal}"


@dataclass(frozen=True)
class TestBank:
    __test__ = False

    functions: tuple[TestFunction, ...] = field(default_factory=tuple)

    @classmethod
    def default(cls) -> "TestBank":
        return cls(
            tuple(
                TestFunction(equation, wavevector, phase, temporal, direction=index)
                for equation in WEAK_EQUATIONS
                for index, (wavevector, phase) in enumerate(SPATIAL_MODES)
                for temporal in TEMPORAL_MODES
            )
        )

    def validate(self, grid: Grid) -> None:
        for function in self.functions:
            if function.equation not in WEAK_EQUATIONS:
                raise InvalidTestFunction(f"Unknown equation {function.equation!r}.")
            if function.equation != "v":
                continue
            z = function.spatial(grid)
            div = l2_norm(divergence(z))
            if div > 1e-10 * max(1.0, l2_norm(z)):
                raise InvalidTestFunction(
                    f"Momentum test function {function.label} is not divergence-free."
                )


def _pairing(
    state: State,
    equation: str,
    test: ScalarField | VectorField,
    alpha: Sequence[float],
    epsilon: float,
    barrier_lambda: float,
) -> tuple[float, float]:
    """Return (∫u·w, spatial weak operator applied to w) for one state."""

    n, v, phi = state.n, state.v, state.phi
    if equation in ("c_p", "c_m"):
        c, sign = (state.c_p, +1) if equation == "c_p" else (state.c_m, -1)
        grad_w = gradient(test)
        flux = species_flux(c, phi, n, epsilon, sign)
        operator = inner(flux, grad_w) - inner(c, dot(v, grad_w))
        return inner(c, test), operator
    if equation == "phi":
        grad_w = gradient(test)
        operator = inner(apply_dielectric(gradient(phi), n, epsilon), grad_w) - inner(
            state.c_p - state.c_m, test
        )
        return 0.0, operator
    if equation == "v":
        grad_w = gradient(test)
        dv = strain_rate(v)
        ndot = lie_derivative(n, v, phi, epsilon, barrier_lambda)
        stress = (
            dv * alpha[3]
            + electric_stress(phi, n, epsilon)
            + leslie_stress(n, ndot, dv, alpha)
            - ericksen_stress(n)
            - outer(v, v)
        )
        return inner(v, test), inner(stress, grad_w)
    if equation == "n":
        transport = matvec(gradient(n), v) - matvec(spin(v), n) + matvec(strain_rate(v), n)
        source = electric_torque(phi, n, epsilon) - potential_gradient(n, barrier_lambda)
        operator = (
            inner(transport, test)
            + inner(gradient(n), gradient(test))
            - inner(source, test)
        )
        return inner(n, test), operator
    raise ValueError(f"Unknown equation {equation!r}.")


def weak_form_residual(
    trajectory: Sequence[State],
    alpha: Sequence[float],
    epsilon: float,
    barrier_lambda: float = DEFAULT_LAMBDA,
    test_bank: TestBank | None = None,
) -> pd.DataFrame:
    """Time-integrated weak residual of every equation against every test function.

    For θ(t)w(x) the evolution residual is
    [θ∫u·w] − ∫θ′∫u·w dt + ∫θ·a(u; w) dt, with a the spatial weak operator;
    the potential equation has no time-derivative part.
    """

    if len(trajectory) < 3:
        raise InsufficientTrajectory(f"Need at least 3 states, got {len(trajectory)}.")
    bank = test_bank or TestBank.default()
    grid = trajectory[0].grid
    bank.validate(grid)
    times = np.array([state.time for state in trajectory])
    rows = []
    for function in bank.functions:
        test = function.spatial(grid)
        pairs = np.array(
            [
                _pairing(state, function.equation, test, alpha, epsilon, barrier_lambda)
                for state in trajectory
            ]
        )
        theta, theta_dot = _temporal(function.temporal, times)
        operator_part = trapezoid(theta * pairs[:, 1], times)
        if function.equation == "phi":
            residual = operator_part
        else:
            boundary = theta[-1] * pairs[-1, 0] - theta[0] * pairs[0, 0]
            residual = boundary - trapezoid(theta_dot * pairs[:, 0], times) + operator_part
        rows.append(
            {
                "equation": function.equation,
                "wavevector": str(function.wavevector),
                "phase": function.phase,
                "temporal": function.temporal,
                "residual": abs(float(residual)),
            }
        )
    return pd.DataFrame(rows, columns=["equation", "wavevector", "phase", "temporal", "residual"])

"""Periodic grids, spectral fields and calculus operators on the flat torus."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, ClassVar, Sequence, TypeVar

import numpy as np
from scipy import fft

TWO_PI = 2.0 * np.pi

FieldT = TypeVar("FieldT", bound="Field")


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on the torus [0, 2π)^dim."""

    dim: int
    points_per_axis: int
    workers: int = field(default=1, compare=False)

    def __post_init__(self) -> None:
        if self.dim not in (2, 3):
            raise ValueError(f"Grid dimension must be 2 or 3, got {self.dim}.")
        n = self.points_per_axis
        if n < 8 or n & (n - 1):
            raise ValueError(
                f"points_per_axis must be a power of two and at least 8, got {n}."
            )

    @property
    def axis_length(self) -> float:
        return TWO_PI

    @property
    def spacing(self) -> float:
        return TWO_PI / self.points_per_axis

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_axis,) * self.dim

    @property
    def size(self) -> int:
        return self.points_per_axis**self.dim

    @property
    def volume(self) -> float:
        return TWO_PI**self.dim

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Integer wavenumbers in [-N/2, N/2) per axis, broadcastable over the grid."""

        k = fft.fftfreq(self.points_per_axis, d=1.0 / self.points_per_axis)
        return tuple(np.meshgrid(*([k] * self.dim), indexing="ij", sparse=True))

    @cached_property
    def derivative_wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Wavenumbers for odd derivatives; the Nyquist mode is dropped."""

        k = fft.fftfreq(self.points_per_axis, d=1.0 / self.points_per_axis)
        k[self.points_per_axis // 2] = 0.0
        return tuple(np.meshgrid(*([k] * self.dim), indexing="ij", sparse=True))

    @cached_property
    def k_squared(self) -> np.ndarray:
        """|k|² built from the derivative wavenumbers, so laplacian = divergence∘gradient."""

        return sum(kj**2 for kj in self.derivative_wavenumbers) + np.zeros(self.shape)

    @cached_property
    def resolved_mask(self) -> np.ndarray:
        """Modes with no Nyquist index on any axis; evolved fields live here."""

        nyquist = self.points_per_axis // 2
        mask = np.ones(self.shape, dtype=bool)
        for kj in self.wavenumbers:
            mask = mask & (np.abs(kj) != nyquist)
        return mask

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """2/3-rule mask: keep modes with every |k_j| <= N/3."""

        cutoff = self.points_per_axis / 3.0
        mask = np.ones(self.shape, dtype=bool)
        for kj in self.wavenumbers:
            mask = mask & (np.abs(kj) <= cutoff)
        return mask

    @cached_property
    def solvable_mask(self) -> np.ndarray:
        """Modes on which the discrete Laplacian is invertible."""

        return self.k_squared > 0.0

    def coordinates(self) -> tuple[np.ndarray, ...]:
        x = np.arange(self.points_per_axis) * self.spacing
        return tuple(np.meshgrid(*([x] * self.dim), indexing="ij"))


def _readonly(array: np.ndarray) -> np.ndarray:
    view = array.view()
    view.flags.writeable = False
    return view


class Field:
    """Real field on a Grid holding physical and/or spectral values.

    Exactly one representation is supplied at construction and recorded in
    ``current``; the other one is computed on first access and cached. The
    stored arrays are read-only views, so a field never changes after it has
    been built.
    """

    rank: ClassVar[int] = 0

    def __init__(
        self,
        grid: Grid,
        physical: np.ndarray | None = None,
        *,
        spectral: np.ndarray | None = None,
    ) -> None:
        if (physical is None) == (spectral is None):
            raise ValueError("Provide exactly one of physical or spectral values.")
        expected = self.component_shape(grid) + grid.shape
        data = physical if physical is not None else spectral
        if np.shape(data) != expected:
            raise ValueError(
                f"{type(self).__name__} expects shape {expected}, got {np.shape(data)}."
            )
        self.grid = grid
        self._physical: np.ndarray | None = None
        self._spectral: np.ndarray | None = None
        if physical is not None:
            self._physical = _readonly(np.asarray(physical, dtype=float))
            self.current = "physical"
        else:
            self._spectral = _readonly(np.asarray(spectral, dtype=complex))
            self.current = "spectral"

    @classmethod
    def component_shape(cls, grid: Grid) -> tuple[int, ...]:
        return (grid.dim,) * cls.rank

    @property
    def spatial_axes(self) -> tuple[int, ...]:
        return tuple(range(self.rank, self.rank + self.grid.dim))

    @property
    def physical(self) -> np.ndarray:
        if self._physical is None:
            values = fft.ifftn(
                self._spectral, axes=self.spatial_axes, workers=self.grid.workers
            ).real
            self._physical = _readonly(values)
        return self._physical

    @property
    def spectral(self) -> np.ndarray:
        if self._spectral is None:
            values = fft.fftn(
                self._physical, axes=self.spatial_axes, workers=self.grid.workers
            )
            self._spectral = _readonly(values)
        return self._spectral

    @classmethod
    def zeros(cls: type[FieldT], grid: Grid) -> FieldT:
        return cls(grid, np.zeros(cls.component_shape(grid) + grid.shape))

    def with_physical(self: FieldT, values: np.ndarray) -> FieldT:
        return type(self)(self.grid, values)

    def _check_grid(self, other: "Field") -> None:
        if other.grid != self.grid or other.rank != self.rank:
            raise ValueError("Fields live on different grids or have different ranks.")

    def __add__(self: FieldT, other: "Field | float") -> FieldT:
        if isinstance(other, Field):
            self._check_grid(other)
            return self.with_physical(self.physical + other.physical)
        return self.with_physical(self.physical + other)

    def __sub__(self: FieldT, other: "Field | float") -> FieldT:
        if isinstance(other, Field):
            self._check_grid(other)
            return self.with_physical(self.physical - other.physical)
        return self.with_physical(self.physical - other)

    def __neg__(self: FieldT) -> FieldT:
        return self.with_physical(-self.physical)

    def __mul__(self: FieldT, scale: float) -> FieldT:
        return self.with_physical(self.physical * scale)

    __rmul__ = __mul__

    def __truediv__(self: FieldT, scale: float) -> FieldT:
        return self.with_physical(self.physical / scale)

    def __repr__(self) -> str:
        return (
            f"{type(self).__name__}(dim={self.grid.dim}, "
            f"N={self.grid.points_per_axis}, current={self.current!r})"
        )


class ScalarField(Field):
    rank = 0

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(value)))

    @classmethod
    def from_function(
        cls, grid: Grid, function: Callable[..., np.ndarray]
    ) -> "ScalarField":
        return cls(grid, np.broadcast_to(function(*grid.coordinates()), grid.shape))


class VectorField(Field):
    rank = 1

    @classmethod
    def from_components(
        cls, grid: Grid, components: Sequence[np.ndarray | float]
    ) -> "VectorField":
        if len(components) != grid.dim:
            raise ValueError(f"Expected {grid.dim} components, got {len(components)}.")
        return cls(grid, np.stack([np.broadcast_to(c, grid.shape) for c in components]))

    @classmethod
    def uniform(cls, grid: Grid, vector: Sequence[float]) -> "VectorField":
        return cls.from_components(grid, [float(value) for value in vector])

    def component(self, index: int) -> ScalarField:
        return ScalarField(self.grid, self.physical[index])


class TensorField(Field):
    rank = 2

    def transpose(self) -> "TensorField":
        return TensorField(self.grid, np.swapaxes(self.physical, 0, 1))


_BY_RANK: dict[int, type[Field]] = {0: ScalarField, 1: VectorField, 2: TensorField}


def gradient(f: ScalarField | VectorField) -> VectorField | TensorField:
    """Spectral gradient; for a vector field entry (i, j) is ∂_j u_i."""

    if f.rank > 1:
        raise TypeError("gradient is defined for scalar and vector fields.")
    hat = f.spectral
    parts = [1j * kj * hat for kj in f.grid.derivative_wavenumbers]
    return _BY_RANK[f.rank + 1](f.grid, spectral=np.stack(parts, axis=f.rank))


def divergence(u: VectorField | TensorField) -> ScalarField | VectorField:
    """Spectral divergence contracting the last component index."""

    if u.rank < 1:
        raise TypeError("divergence is defined for vector and tensor fields.")
    hat = u.spectral
    axis = u.rank - 1
    total = sum(
        1j * kj * np.take(hat, j, axis=axis)
        for j, kj in enumerate(u.grid.derivative_wavenumbers)
    )
    return _BY_RANK[u.rank - 1](u.grid, spectral=total)


def laplacian(f: FieldT) -> FieldT:
    return type(f)(f.grid, spectral=-f.grid.k_squared * f.spectral)


def leray_project(u: VectorField) -> VectorField:
    """Orthogonal projection onto divergence-free fields; the mean is kept."""

    grid = u.grid
    hat = u.spectral
    k = grid.derivative_wavenumbers
    k2 = grid.k_squared
    inverse = np.divide(1.0, k2, out=np.zeros_like(k2), where=k2 > 0.0)
    k_dot_u = sum(kj * hat[j] for j, kj in enumerate(k))
    projected = np.stack([hat[j] - kj * k_dot_u * inverse for j, kj in enumerate(k)])
    return VectorField(grid, spectral=projected)


def dealias(f: FieldT) -> FieldT:
    return type(f)(f.grid, spectral=f.spectral * f.grid.dealias_mask)


def drop_nyquist(f: FieldT) -> FieldT:
    return type(f)(f.grid, spectral=f.spectral * f.grid.resolved_mask)


def integrate(f: ScalarField) -> float:
    """Trapezoid quadrature over the torus (exact for band-limited integrands)."""

    return float(np.mean(f.physical) * f.grid.volume)


def inner(a: Field, b: Field) -> float:
    """Discrete L² inner product, contracting all component indices."""

    a._check_grid(b)
    return float(np.sum(a.physical * b.physical) / a.grid.size * a.grid.volume)


def magnitude(f: Field) -> np.ndarray:
    """Pointwise Euclidean (Frobenius) magnitude."""

    if f.rank == 0:
        return np.abs(f.physical)
    values = f.physical.reshape((-1,) + f.grid.shape)
    return np.sqrt(np.sum(values**2, axis=0))


def l2_norm(f: Field) -> float:
    return float(np.sqrt(max(inner(f, f), 0.0)))


def lp_norm(f: Field, p: float) -> float:
    pointwise = magnitude(f)
    return float((np.mean(pointwise**p) * f.grid.volume) ** (1.0 / p))


def sup_norm(f: Field) -> float:
    return float(np.max(magnitude(f)))


def spectral_l2_squared(f: Field) -> float:
    """‖f‖² from the spectral coefficients (Parseval)."""

    grid = f.grid
    return float(np.sum(np.abs(f.spectral) ** 2) * grid.volume / grid.size**2)


def remove_mean(f: FieldT) -> FieldT:
    hat = np.array(f.spectral)
    hat[(Ellipsis,) + (0,) * f.grid.dim] = 0.0
    return type(f)(f.grid, spectral=hat)


def inverse_laplacian(f: FieldT) -> FieldT:
    """Δ⁻¹ on the invertible modes; constant and Nyquist modes map to zero."""

    grid = f.grid
    k2 = grid.k_squared
    inverse = np.divide(-1.0, k2, out=np.zeros_like(k2), where=k2 > 0.0)
    return type(f)(grid, spectral=f.spectral * inverse)


def velocity_gradient(v: VectorField) -> TensorField:
    return gradient(v)


def strain_rate(v: VectorField) -> TensorField:
    """D(v) = (∇v + ∇vᵗ)/2."""

    hat = velocity_gradient(v).spectral
    return TensorField(v.grid, spectral=0.5 * (hat + np.swapaxes(hat, 0, 1)))


def spin(v: VectorField) -> TensorField:
    """Ω(v) = (∇v − ∇vᵗ)/2."""

    hat = velocity_gradient(v).spectral
    return TensorField(v.grid, spectral=0.5 * (hat - np.swapaxes(hat, 0, 1)))


def dot(a: VectorField, b: VectorField) -> ScalarField:
    return ScalarField(a.grid, np.einsum("i...,i...->...", a.physical, b.physical))


def outer(a: VectorField, b: VectorField) -> TensorField:
    return TensorField(a.grid, np.einsum("i...,j...->ij...", a.physical, b.physical))


def matvec(t: TensorField, a: VectorField) -> VectorField:
    return VectorField(a.grid, np.einsum("ij...,j...->i...", t.physical, a.physical))


def scale(f: FieldT, weight: ScalarField) -> FieldT:
    """Pointwise product of any field with a scalar field."""

    return f.with_physical(f.physical * weight.physical)


def contract(a: TensorField, b: TensorField) -> ScalarField:
    """Pointwise double contraction a:b = a_ij b_ij."""

    return ScalarField(a.grid, np.einsum("ij...,ij...->...", a.physical, b.physical))

"""Tests for ion transport: fluxes, the IMEX species step, entropy and dissipation."""

import math

import numpy as np
import pytest

from conftest import rest_state
from nematic_electrolyte.fields import Grid, ScalarField, VectorField, gradient
from nematic_electrolyte.state import State, StepRejected
from nematic_electrolyte.transport import (
    SpeciesPair,
    entropy_density,
    entropy_integral,
    monotone_truncation,
    species_dissipation,
    species_flux,
    species_masses,
    step_species,
    truncation_excess,
)


def blob_state(grid, amplitude=0.3, epsilon_director=0.8):
    x1, x2 = grid.coordinates()
    bump = amplitude * np.cos(x1) * np.cos(x2)
    angle = 0.4 * np.sin(x2)
    n = VectorField.from_components(
        grid, [epsilon_director * np.cos(angle), epsilon_director * np.sin(angle)]
    )
    v = VectorField.from_components(grid, [0.2 * np.sin(x2), 0.1 * np.sin(x1)])
    return State(
        c_p=ScalarField(grid, 1.0 + bump),
        c_m=ScalarField(grid, 1.0 - bump),
        phi=ScalarField(grid, 0.2 * np.cos(x1) * np.cos(x2)),
        v=v,
        n=n,
    )


class TestSpeciesFlux:
    """Anisotropic Nernst–Planck flux."""

    def test_isotropic_flux_without_potential_is_the_gradient(self, grid):
        c = ScalarField.from_function(grid, lambda x1, x2: 1.0 + 0.5 * np.cos(x1 + x2))
        flux = species_flux(c, ScalarField.zeros(grid), VectorField.zeros(grid), 0.0, +1)
        np.testing.assert_allclose(flux.physical, gradient(c).physical, atol=1e-12)

    @pytest.mark.parametrize("sign", [+1, -1])
    def test_flux_matches_index_loop(self, grid, sign):
        x1, x2 = grid.coordinates()
        c = ScalarField(grid, 1.0 + 0.3 * np.cos(x1))
        phi = ScalarField(grid, 0.2 * np.sin(x2))
        n = VectorField.from_components(grid, [0.5 * np.cos(x2), 0.5 * np.sin(x1)])
        eps = 0.4
        g_c = gradient(c).physical
        g_phi = gradient(phi).physical
        base = g_c + sign * c.physical * g_phi
        nv = n.physical
        expected = np.zeros((2,) + grid.shape)
        for i in range(2):
            for j in range(2):
                expected[i] += ((1.0 if i == j else 0.0) + eps * nv[i] * nv[j]) * base[j]
        result = species_flux(c, phi, n, eps, sign).physical
        np.testing.assert_allclose(result, expected, atol=1e-12)


class TestStepSpecies:
    """Conservation, bounds and consistency of the species step."""

    def test_masses_are_conserved(self, grid):
        state = blob_state(grid)
        initial = species_masses(state.c_p, state.c_m)
        for _ in range(20):
            c_p, c_m = step_species(state, 1e-2, 0.3, c_bar=2.0)
            state = state.updated(c_p=c_p, c_m=c_m)
        current = species_masses(state.c_p, state.c_m)
        for before, after in zip(initial, current):
            assert abs(after - before) <= 1e-12 * abs(before)

    def test_bounds_are_kept(self, grid):
        state = blob_state(grid)
        for _ in range(20):
            c_p, c_m = step_species(state, 1e-2, 0.3, c_bar=2.0)
            state = state.updated(c_p=c_p, c_m=c_m)
        for c in (state.c_p, state.c_m):
            assert c.physical.min() >= -1e-8
            assert c.physical.max() <= 2.0

    def test_rest_state_is_unchanged(self, rest):
        c_p, c_m = step_species(rest, 1e-3, 0.1, c_bar=2.0)
        np.testing.assert_allclose(c_p.physical, 1.0, atol=1e-14)
        np.testing.assert_allclose(c_m.physical, 1.0, atol=1e-14)

    def test_pure_diffusion_is_backward_euler(self, grid):
        x1, _ = grid.coordinates()
        state = rest_state(grid).updated(c_p=ScalarField(grid, 1.0 + 0.1 * np.cos(x1)))
        dt = 0.05
        c_p, _ = step_species(state, dt, 0.0, c_bar=2.0)
        expected = 1.0 + 0.1 * np.cos(x1) / (1.0 + dt)
        np.testing.assert_allclose(c_p.physical, expected, atol=1e-12)

    def test_upper_bound_violation_rejects_the_step(self, grid):
        with pytest.raises(StepRejected, match="above c_bar"):
            step_species(blob_state(grid), 1e-3, 0.1, c_bar=1.2)

    def test_output_has_no_nyquist_content(self, grid):
        x1, _ = grid.coordinates()
        state = blob_state(grid)
        state = state.updated(c_p=state.c_p + ScalarField(grid, 0.01 * np.cos(16 * x1)))
        c_p, c_m = step_species(state, 1e-3, 0.3, c_bar=2.0)
        for c in (c_p, c_m):
            assert np.max(np.abs(c.spectral[~grid.resolved_mask])) == 0.0

    def test_first_order_in_time(self):
        grid = Grid(dim=2, points_per_axis=16)
        state = blob_state(grid)
        dt = 0.02

        def integrate(step_dt, count):
            current = state
            for _ in range(count):
                c_p, c_m = step_species(current, step_dt, 0.3, c_bar=10.0)
                current = current.updated(c_p=c_p, c_m=c_m)
            return current.c_p.physical

        reference = integrate(dt / 100, 100)
        coarse = np.max(np.abs(integrate(dt, 1) - reference))
        fine = np.max(np.abs(integrate(dt / 2, 2) - reference))
        assert 1.6 < coarse / fine < 2.5


class TestEntropyAndDissipation:
    """Entropy integrals, dissipation and truncation helpers."""

    def test_entropy_matches_refined_quadrature(self):
        def entropy_on(points):
            grid = Grid(dim=2, points_per_axis=points)
            c = ScalarField.from_function(grid, lambda x1, x2: 1.0 + 0.5 * np.cos(x1))
            return entropy_integral(c)

        assert abs(entropy_on(32) - entropy_on(128)) < 1e-10

    def test_entropy_vanishes_where_density_vanishes(self, grid):
        assert np.all(entropy_density(ScalarField.zeros(grid)) == 0.0)
        assert entropy_integral(ScalarField.constant(grid, 1.0)) == 0.0

    def test_dissipation_matches_pointwise_assembly(self, grid):
        state = blob_state(grid)
        eps = 0.3
        c = state.c_p.physical
        q = gradient(state.c_p).physical + c * gradient(state.phi).physical
        nv = state.n.physical
        n_q = np.sum(nv * q, axis=0)
        weighted = np.sum(q * q, axis=0) + eps * n_q**2
        expected = np.mean(weighted / c) * grid.volume
        result = species_dissipation(state.c_p, state.phi, state.n, eps, +1)
        assert abs(result - expected) <= 1e-8

    def test_dissipation_is_non_negative(self, grid):
        state = blob_state(grid)
        assert species_dissipation(state.c_m, state.phi, state.n, 0.5, -1) >= 0.0

    def test_monotone_truncation(self):
        r = np.linspace(-1.0, 5.0, 601)
        values = monotone_truncation(r, 2.0)
        assert np.all(values[r <= 2.0] == 0.0)
        assert math.isclose(float(monotone_truncation(3.0, 2.0)), 2.5)
        assert np.all(np.diff(values) >= 0.0)

    def test_truncation_excess(self, grid):
        assert truncation_excess(ScalarField.constant(grid, 1.5), 2.0) == 0.0
        excess = truncation_excess(ScalarField.constant(grid, 3.0), 2.0)
        assert math.isclose(excess, 0.5 * grid.volume)

    def test_species_pair_rejects_non_positive_bound(self, grid):
        ones = ScalarField.constant(grid, 1.0)
        with pytest.raises(ValueError):
            SpeciesPair(ones, ones, 0.0)
        pair = SpeciesPair(ones, ones, 2.0)
        assert pair.masses() == pytest.approx((grid.volume, grid.volume))

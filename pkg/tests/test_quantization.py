import logging
import math

import numpy as np
import pytest

from src.calculators.dual_solver import dual_gradient, dual_objective
from src.calculators.entropy_models import EntropyModel
from src.calculators.errors import InvalidArgumentError
from src.calculators.laguerre import cell_masses, voronoi_assign
from src.calculators.quantization import (
    QuantizationMethod,
    QuantizationOptions,
    initial_points,
    lloyd_step,
    quant_energy,
    quant_gradient,
    quant_masses,
    solve_quantization,
)
from src.data.setups import bump_domain, relative_sites
from src.measures.models import (
    DiscreteMeasure,
    Domain,
    GridDensity,
    gaussian_bump_density,
    total_mass,
    uniform_density,
)

W2 = EntropyModel.parse("w2")
SITES = np.array([[0.2, 0.3], [0.7, 0.25], [0.55, 0.8], [0.15, 0.75]])


def _left_strip(n=64):
    """Unit square with density 1 on x < 1/4 and 0 elsewhere."""
    g = uniform_density(Domain.square(1.0), n, n, 1.0)
    xs, _ = g.cell_centers()
    return g.with_values(np.where(xs < 0.25, 1.0, 0.0))


class TestEnergy:
    def test_w2_single_site(self, unit_uniform):
        energy = quant_energy(unit_uniform, [[0.5, 0.5]], W2)
        assert energy == pytest.approx(1.0 / 6.0, abs=1e-4)

    def test_bounded_by_total_mass(self, unit_uniform, unbalanced_model):
        energy = quant_energy(unit_uniform, SITES, unbalanced_model)
        assert 0.0 <= energy <= 1.0 + 1e-12

    def test_equals_dual_objective_at_zero_weights(self, unit_uniform, model):
        nu = DiscreteMeasure(SITES, np.full(4, 0.25), unit_uniform.domain)
        expected = dual_objective(unit_uniform, nu, model, np.zeros(4))
        energy = quant_energy(unit_uniform, SITES, model)
        assert energy == pytest.approx(expected, rel=1e-12)

    def test_wfr_far_density_costs_its_mass(self):
        g = _left_strip()
        wfr = EntropyModel.parse("wfr", 0.1)
        assert quant_energy(g, [[0.9, 0.5]], wfr) == pytest.approx(0.25, rel=1e-12)

    def test_permutation_invariant(self, unit_uniform, model):
        order = [2, 0, 3, 1]
        assert quant_energy(unit_uniform, SITES[order], model) == pytest.approx(
            quant_energy(unit_uniform, SITES, model), rel=1e-13
        )

    def test_rejects_points_outside(self, unit_uniform):
        with pytest.raises(InvalidArgumentError, match="outside"):
            quant_energy(unit_uniform, [[0.5, 1.5]], W2)


class TestMasses:
    def test_w2_masses_are_cell_masses(self, unit_uniform):
        t = voronoi_assign(unit_uniform, SITES)
        expected = cell_masses(unit_uniform, t).masses
        assert np.allclose(quant_masses(unit_uniform, SITES, W2), expected, rtol=1e-12)

    def test_wfr_isolated_site(self):
        g = uniform_density(Domain.square(1.0), 256, 256, 1.0)
        eps = 0.2
        masses = quant_masses(g, [[0.5, 0.5]], EntropyModel.parse("wfr", eps))
        expected = eps**2 * (math.pi**3 / 8 - math.pi / 2)
        assert expected == pytest.approx(0.0922, abs=1e-4)
        assert masses[0] == pytest.approx(expected, rel=1e-3)

    def test_dominated_by_cell_mass(self, unit_uniform, unbalanced_model):
        t = voronoi_assign(unit_uniform, SITES)
        cells = cell_masses(unit_uniform, t).masses
        masses = quant_masses(unit_uniform, SITES, unbalanced_model)
        assert np.all(masses >= 0.0)
        assert np.all(masses <= cells + 1e-15)

    def test_permutation_equivariant(self, unit_uniform, model):
        order = [3, 1, 0, 2]
        base = quant_masses(unit_uniform, SITES, model)
        permuted = quant_masses(unit_uniform, SITES[order], model)
        assert np.allclose(permuted, base[order], rtol=1e-12)


class TestGradient:
    def test_centred_single_site_is_stationary(self, unit_uniform, model):
        grad = quant_gradient(unit_uniform, [[0.5, 0.5]], model)
        assert np.allclose(grad, 0.0, atol=1e-10)

    def test_matches_finite_differences(self, unit_uniform, model):
        grad = quant_gradient(unit_uniform, SITES, model)
        h = 1e-6
        fd = np.empty_like(SITES)
        for i in range(SITES.shape[0]):
            for k in range(2):
                step = np.zeros_like(SITES)
                step[i, k] = h
                fd[i, k] = (
                    quant_energy(unit_uniform, SITES + step, model)
                    - quant_energy(unit_uniform, SITES - step, model)
                ) / (2 * h)
        assert np.allclose(fd, grad, atol=1e-3)


class TestLloydStep:
    def test_w2_single_site_moves_to_centroid(self, unit_uniform):
        step = lloyd_step(unit_uniform, [[0.3, 0.6]], W2)
        assert step.points[0] == pytest.approx([0.5, 0.5], abs=1e-12)
        assert not step.stalled.any()

    def test_energy_does_not_increase(self, unit_uniform, model):
        points = SITES.copy()
        energies = [quant_energy(unit_uniform, points, model)]
        for _ in range(5):
            points = lloyd_step(unit_uniform, points, model).points
            energies.append(quant_energy(unit_uniform, points, model))
        assert np.all(np.diff(energies) <= 1e-12)

    def test_site_without_reachable_mass_stays(self, caplog):
        g = _left_strip()
        wfr = EntropyModel.parse("wfr", 0.1)
        start = np.array([[0.1, 0.5], [0.9, 0.5]])
        with caplog.at_level(logging.WARNING, logger="src.calculators.quantization"):
            step = lloyd_step(g, start, wfr)
        assert step.stalled.tolist() == [False, True]
        assert step.points[1].tolist() == [0.9, 0.5]
        assert "without reachable mass" in caplog.text


class TestInitialPoints:
    def test_distinct_and_seeded(self, unit_uniform):
        first = initial_points(unit_uniform, 50, seed=3)
        assert np.unique(first, axis=0).shape == (50, 2)
        assert np.array_equal(first, initial_points(unit_uniform, 50, seed=3))
        assert not np.array_equal(first, initial_points(unit_uniform, 50, seed=4))

    def test_only_positive_density_cells(self):
        g = _left_strip(16)
        assert np.all(initial_points(g, 30, seed=1)[:, 0] < 0.25)

    def test_too_many_sites(self):
        g = uniform_density(Domain.square(1.0), 4, 4, 1.0)
        with pytest.raises(InvalidArgumentError, match="Invalid M"):
            initial_points(g, 17)
        with pytest.raises(InvalidArgumentError):
            initial_points(g, 0)


class TestSolveQuantization:
    def test_w2_single_site_lloyd(self, unit_uniform):
        state = solve_quantization(unit_uniform, 1, W2, start=[[0.3, 0.6]])
        assert state.converged
        assert state.points[0] == pytest.approx([0.5, 0.5], abs=1e-12)
        assert state.energy == pytest.approx(1.0 / 6.0, abs=1e-4)
        assert state.masses == pytest.approx([1.0])
        assert state.method is QuantizationMethod.LLOYD

    @pytest.mark.parametrize("method", ["lloyd", "bfgs"])
    def test_lowers_energy(self, unit_uniform, unbalanced_model, method):
        opts = QuantizationOptions(max_iter=50)
        state = solve_quantization(
            unit_uniform, 4, unbalanced_model, method, opts, start=SITES
        )
        start_energy = quant_energy(unit_uniform, SITES, unbalanced_model)
        assert state.energy_history[0] == pytest.approx(start_energy)
        assert state.energy <= state.energy_history[0] + 1e-12
        assert np.all(unit_uniform.domain.contains(state.points))
        assert state.masses.shape == (4,)

    def test_lloyd_history_monotone(self, unit_uniform):
        ghk = EntropyModel.parse("ghk", 0.3)
        opts = QuantizationOptions(max_iter=30, seed=2)
        state = solve_quantization(unit_uniform, 6, ghk, opts=opts)
        assert len(state.energy_history) == state.iterations + 1
        assert np.all(np.diff(state.energy_history) <= 1e-12)

    def test_zero_mass_site_reported(self):
        g = _left_strip()
        wfr = EntropyModel.parse("wfr", 0.1)
        opts = QuantizationOptions(max_iter=3)
        start = [[0.1, 0.5], [0.9, 0.5]]
        state = solve_quantization(g, 2, wfr, opts=opts, start=start)
        assert state.zero_mass_sites.tolist() == [1]
        assert state.stalled_sites.tolist() == [False, True]

    def test_bfgs_tolerates_coincident_sites(self, unit_uniform):
        start = [[0.3, 0.5], [0.3, 0.5]]
        opts = QuantizationOptions(max_iter=20)
        state = solve_quantization(unit_uniform, 2, W2, "bfgs", opts, start=start)
        single = quant_energy(unit_uniform, [[0.3, 0.5]], W2)
        assert state.energy_history[0] == pytest.approx(single, rel=1e-12)
        assert state.energy <= single + 1e-12
        assert state.masses.sum() == pytest.approx(1.0, rel=1e-12)
        with pytest.raises(InvalidArgumentError, match="pairwise distinct"):
            solve_quantization(unit_uniform, 2, W2, "lloyd", opts, start=start)

    def test_lloyd_monotone_on_bump(self, model):
        g = gaussian_bump_density(bump_domain(), 128, 128)
        opts = QuantizationOptions(max_iter=100, grad_tol=1e-14, seed=4)
        state = solve_quantization(g, 16, model, "lloyd", opts)
        assert np.all(np.diff(state.energy_history) <= 1e-9 * total_mass(g))
        if model.is_balanced:
            moved = lloyd_step(g, state.points, model).points - state.points
            assert np.max(np.hypot(*moved.T)) <= 2.0 * g.dx

    def test_deterministic_for_seed(self, unit_uniform):
        opts = QuantizationOptions(max_iter=10, seed=5)
        qr = EntropyModel.parse("qr", 0.25)
        first = solve_quantization(unit_uniform, 5, qr, "bfgs", opts)
        second = solve_quantization(unit_uniform, 5, qr, "bfgs", opts)
        assert np.array_equal(first.points, second.points)

    def test_rejects_bad_input(self, unit_uniform):
        empty = GridDensity.from_values(unit_uniform.domain, np.zeros((8, 8)))
        with pytest.raises(InvalidArgumentError, match="total mass"):
            solve_quantization(empty, 1, W2)
        with pytest.raises(InvalidArgumentError, match="method"):
            solve_quantization(unit_uniform, 1, W2, method="newton")
        with pytest.raises(InvalidArgumentError, match="start"):
            solve_quantization(unit_uniform, 2, W2, start=[[0.5, 0.5]])


def test_setup_sites_quantize_to_balanced_masses(unit_uniform):
    nu = relative_sites(unit_uniform.domain)
    masses = quant_masses(unit_uniform, nu.points, W2)
    assert masses.sum() == pytest.approx(1.0, rel=1e-12)


def test_converged_points_solve_the_transport_at_zero_weights(unit_uniform, model):
    opts = QuantizationOptions(max_iter=20)
    state = solve_quantization(unit_uniform, 4, model, opts=opts, start=SITES)
    nu = DiscreteMeasure(state.points, state.masses, unit_uniform.domain)
    tolerance = 5.0 * unit_uniform.dx * total_mass(unit_uniform)
    zero = np.zeros(4)
    assert np.max(np.abs(dual_gradient(unit_uniform, nu, model, zero))) <= tolerance
    g_zero = dual_objective(unit_uniform, nu, model, zero)
    assert abs(g_zero - state.energy) <= tolerance


@pytest.mark.slow
def test_wfr_regimes_ordered_by_scaled_count():
    g = uniform_density(Domain.square(1.0), 128, 128, 1.0)
    M = 256
    opts = QuantizationOptions(max_iter=30)
    energies = [
        solve_quantization(g, M, EntropyModel.parse("wfr", math.sqrt(s / M)), opts=opts)
        for s in (1e-3, 1.0, 1e3)
    ]
    values = [state.energy for state in energies]
    assert values[0] > values[1] > values[2]
    assert values[0] >= 0.95 * total_mass(g) * EntropyModel.parse("wfr").f_zero()

import logging
import math

import numpy as np
import pytest

from src.assessments.asymptotics import (
    HEXAGON_CONSTANT,
    b_conjugate,
    build_cell_table,
    cell_b,
    cell_b_prime,
    invert_b_prime,
    lattice_bounds,
    optimal_density,
    plateau_constants,
    triangular_lattice,
)
from src.calculators.entropy_models import EntropyModel
from src.calculators.errors import InvalidArgumentError, OutOfRangeError
from src.calculators.quantization import (
    QuantizationOptions,
    quant_energy,
    solve_quantization,
)
from src.data.setups import ASYMPTOTIC_P_VALUES, bump_domain
from src.measures.models import Domain, gaussian_bump_density, uniform_density

W2 = EntropyModel.parse("w2")
GHK = EntropyModel.parse("ghk")
WFR = EntropyModel.parse("wfr")
QR = EntropyModel.parse("qr")


@pytest.fixture(scope="module")
def wfr_table():
    return build_cell_table(WFR, z_min=1e-3, z_max=1e3, num_samples=200)


@pytest.fixture(scope="module")
def ghk_table():
    return build_cell_table(GHK, z_min=0.1, z_max=1e2, num_samples=120)


class TestCellProblem:
    @pytest.mark.parametrize("z", [0.25, 1.0, 4.0])
    def test_w2_closed_form(self, z):
        assert cell_b(W2, z) == pytest.approx(HEXAGON_CONSTANT / z, rel=1e-5)
        assert cell_b_prime(W2, z) == pytest.approx(-HEXAGON_CONSTANT / z**2, rel=1e-5)

    def test_hexagon_constant(self):
        assert HEXAGON_CONSTANT == pytest.approx(0.16037507, rel=1e-7)

    @pytest.mark.parametrize("m", [GHK, WFR, QR])
    @pytest.mark.parametrize("z", [0.5, 1.0, 2.0, 5.0])
    def test_derivative_matches_finite_difference(self, m, z):
        h = 1e-4
        fd = (cell_b(m, z * (1 + h)) - cell_b(m, z * (1 - h))) / (2 * z * h)
        assert cell_b_prime(m, z) == pytest.approx(fd, rel=1e-5, abs=1e-9)

    @pytest.mark.parametrize("m", [GHK, WFR, QR])
    def test_unbalanced_range(self, m):
        values = [cell_b(m, z) for z in (1e-3, 0.1, 1.0, 10.0)]
        assert all(0.0 <= v <= m.f_zero() for v in values)
        assert values == sorted(values, reverse=True)

    def test_ignores_length_scale(self):
        assert cell_b(EntropyModel.parse("ghk", 0.1), 2.0) == cell_b(GHK, 2.0)

    def test_rejects_nonpositive_density(self):
        with pytest.raises(InvalidArgumentError):
            cell_b(GHK, 0.0)


class TestPlateau:
    def test_wfr(self):
        z_plateau, slope = plateau_constants(WFR)
        expected = 1.0 / (2.0 * math.sqrt(3.0) * (math.pi / 2) ** 2)
        assert z_plateau == pytest.approx(expected)
        assert z_plateau == pytest.approx(0.117, abs=1e-3)
        assert slope == pytest.approx(-(math.pi**3 / 8 - math.pi / 2), rel=1e-10)

    def test_qr(self):
        z_plateau, slope = plateau_constants(QR)
        assert z_plateau == pytest.approx(1.0 / (4.0 * math.sqrt(3.0)))
        assert slope == pytest.approx(-2.0 * math.pi / 3.0, rel=1e-10)

    def test_ghk_has_no_plateau(self):
        assert plateau_constants(GHK) == (0.0, pytest.approx(-math.pi, rel=1e-10))

    @pytest.mark.parametrize("m", [WFR, QR])
    def test_derivative_flat_below_plateau(self, m):
        z_plateau, slope = plateau_constants(m)
        for z in (0.2 * z_plateau, 0.6 * z_plateau, z_plateau):
            assert cell_b_prime(m, z) == pytest.approx(slope, rel=1e-8)
            assert cell_b(m, z) == pytest.approx(1.0 + slope * z, rel=1e-10)
        assert cell_b_prime(m, 1.5 * z_plateau) > slope + 1e-6

    @pytest.mark.parametrize("m", [GHK, WFR, QR])
    def test_derivative_nondecreasing(self, m):
        values = [cell_b_prime(m, z) for z in np.geomspace(1e-2, 1e2, 30)]
        assert np.all(np.diff(values) >= -1e-10)
        assert values[-1] < 0.0


class TestInversion:
    @pytest.mark.parametrize("m", [GHK, WFR, QR])
    @pytest.mark.parametrize("z", [1.0, 0.5])
    def test_recovers_density(self, m, z):
        assert invert_b_prime(m, cell_b_prime(m, z)) == pytest.approx(z, rel=1e-6)

    def test_w2_closed_form(self):
        assert invert_b_prime(W2, -HEXAGON_CONSTANT / 4.0) == pytest.approx(2.0)

    @pytest.mark.parametrize("s", [0.0, 0.5, -3.0])
    def test_out_of_range(self, s):
        with pytest.raises(OutOfRangeError):
            invert_b_prime(WFR, s)


class TestCellTable:
    def test_monotone_and_convex(self, wfr_table):
        assert np.all(np.diff(wfr_table.b_values) <= 1e-12)
        assert np.all(np.diff(wfr_table.b_prime_values) >= -1e-10)
        assert wfr_table.z_min == pytest.approx(1e-3)
        assert wfr_table.z_max == pytest.approx(1e3)

    def test_extensions(self, wfr_table):
        z_plateau, slope = wfr_table.z_plateau, wfr_table.slope_plateau
        low = np.array([0.0, 1e-4, 0.5 * z_plateau])
        assert wfr_table.b(low) == pytest.approx(1.0 + slope * low, rel=1e-12)
        assert wfr_table.b_prime(low) == pytest.approx([slope] * 3)
        assert wfr_table.b([1e5])[0] == pytest.approx(HEXAGON_CONSTANT / 1e5)

    def test_interpolates_samples(self, wfr_table):
        z = np.array([0.3, 1.7, 12.0])
        exact = [cell_b(WFR, v) for v in z]
        assert wfr_table.b(z) == pytest.approx(exact, rel=1e-4)

    def test_invert_matches_bisection(self, ghk_table):
        slopes = np.array([cell_b_prime(GHK, z) for z in (0.2, 1.0, 5.0)])
        assert ghk_table.invert(slopes) == pytest.approx([0.2, 1.0, 5.0], rel=1e-3)

    def test_invert_clamps_below_range(self, ghk_table, caplog):
        s = 0.5 * (ghk_table.slope_plateau + ghk_table.b_prime_values[0])
        with caplog.at_level(logging.WARNING, logger="src.assessments.asymptotics"):
            z = ghk_table.invert([s])
        assert z.tolist() == [ghk_table.z_min]
        assert "clamped" in caplog.text

    def test_invert_uses_small_cell_limit_above_range(self, ghk_table):
        s = -1e-9
        expected = math.sqrt(HEXAGON_CONSTANT / 1e-9)
        assert ghk_table.invert([s])[0] == pytest.approx(expected)

    def test_invert_rejects_nonnegative(self, ghk_table):
        with pytest.raises(OutOfRangeError):
            ghk_table.invert([0.0])

    def test_rejects_empty_range(self):
        with pytest.raises(InvalidArgumentError):
            build_cell_table(GHK, z_min=1.0, z_max=1.0)


class TestConjugate:
    def test_regions(self, wfr_table):
        slope = wfr_table.slope_plateau
        values = b_conjugate(wfr_table, [slope - 1.0, slope, 0.0, 0.1])
        assert values.tolist() == [-1.0, -1.0, 0.0, math.inf]

    def test_identity_at_derivative(self, wfr_table):
        z = np.array([0.5, 1.0, 4.0])
        s = wfr_table.b_prime(z)
        expected = z * s - wfr_table.b(z)
        assert b_conjugate(wfr_table, s) == pytest.approx(expected, rel=1e-4, abs=1e-6)

    def test_fenchel_inequality(self, wfr_table):
        z = np.geomspace(1e-2, 1e2, 25)
        for t in (-2.0, -0.5, -0.05):
            lower = t * z - wfr_table.b(z)
            assert np.all(b_conjugate(wfr_table, [t])[0] >= lower - 1e-6)


class TestOptimalDensity:
    def test_w2_uniform(self, unit_uniform):
        result = optimal_density(unit_uniform, W2, 3.0)
        assert np.allclose(result.density.values, 3.0)
        assert result.energy == pytest.approx(HEXAGON_CONSTANT / 3.0, rel=1e-12)
        assert result.multiplier == pytest.approx(-HEXAGON_CONSTANT / 9.0)
        assert result.zero_fraction == 0.0

    @pytest.mark.parametrize("P", ASYMPTOTIC_P_VALUES[:-1:2])
    def test_wfr_bump_has_zero_region(self, wfr_table, P):
        g = gaussian_bump_density(bump_domain(), 96, 96)
        result = optimal_density(g, WFR, P, wfr_table)
        assert result.multiplier < 0.0
        assert result.zero_fraction >= 0.05
        assert g.cell_area * result.density.values.sum() == pytest.approx(P, rel=1e-4)

    def test_ghk_uniform_is_constant(self, ghk_table):
        g = uniform_density(Domain.square(2.0), 16, 16, 1.0)
        result = optimal_density(g, GHK, 8.0, ghk_table)
        assert np.allclose(result.density.values, 2.0, rtol=1e-6)
        assert result.energy == pytest.approx(4.0 * cell_b(GHK, 2.0), rel=1e-3)

    def test_energy_decreases_with_p(self, wfr_table):
        g = gaussian_bump_density(bump_domain(), 48, 48)
        energies = [
            optimal_density(g, WFR, P, wfr_table).energy for P in (0.28, 2.4, 24.0)
        ]
        assert energies[0] > energies[1] > energies[2]

    @pytest.mark.parametrize("P", [0.0, -1.0, math.nan])
    def test_rejects_bad_p(self, unit_uniform, P):
        with pytest.raises(OutOfRangeError):
            optimal_density(unit_uniform, WFR, P)


class TestLattice:
    def test_w2_single_point_bound(self):
        lower, extra = lattice_bounds(W2, 1.0, 1, 1.0)
        assert lower == pytest.approx(HEXAGON_CONSTANT, rel=1e-5)
        assert extra == math.inf

    def test_upper_extra_formula(self):
        _, extra = lattice_bounds(GHK, 4.0, 12, 0.3, perimeter=10.0)
        spacing_term = math.sqrt(32.0 / (3.0 * math.sqrt(3.0) * 12))
        assert extra == pytest.approx(10.0 * spacing_term)

    def test_single_point(self):
        assert triangular_lattice(Domain.square(1.0), 1).tolist() == [[0.25, 0.25]]

    def test_many_points(self):
        domain = Domain.square(1.0)
        points = triangular_lattice(domain, 400)
        assert points.shape == (400, 2)
        assert np.unique(points, axis=0).shape[0] == 400
        assert np.all(domain.contains(points))
        spacing = math.sqrt(2.0 / (math.sqrt(3.0) * 400))
        gaps = np.hypot(*(points[:, None, :] - points[None, :, :]).transpose(2, 0, 1))
        np.fill_diagonal(gaps, np.inf)
        on_lattice = np.isclose(gaps, spacing, rtol=1e-9).any(axis=1)
        assert on_lattice.sum() >= 300

    def test_lattice_energy_between_bounds(self):
        g = uniform_density(Domain.square(1.0), 256, 256, 1.0)
        m = EntropyModel.parse("ghk", 0.1)
        M = 100
        lower, extra = lattice_bounds(m, 1.0, M, 0.1)
        energy = quant_energy(g, triangular_lattice(g.domain, M), m)
        assert lower - 1e-3 <= energy <= lower + extra

    def test_wfr_disjoint_discs_attain_lower_bound(self):
        g = uniform_density(Domain.square(1.0), 256, 256, 1.0)
        m = EntropyModel.parse("wfr", 0.1)
        sites = [[0.25, 0.25], [0.75, 0.25], [0.25, 0.75], [0.75, 0.75]]
        lower, _ = lattice_bounds(m, 1.0, len(sites), 0.1)
        assert quant_energy(g, sites, m) == pytest.approx(lower, rel=1e-3)


@pytest.mark.slow
def test_wfr_zero_density_on_fine_bump(wfr_table):
    g = gaussian_bump_density(bump_domain(), 512, 512)
    P = ASYMPTOTIC_P_VALUES[-1]
    result = optimal_density(g, WFR, P, wfr_table)
    assert result.zero_fraction >= 0.05
    assert g.cell_area * result.density.values.sum() == pytest.approx(P, rel=1e-4)


@pytest.mark.slow
@pytest.mark.parametrize("M", [64, 256])
def test_w2_energies_sandwiched_by_hexagon_bound(M):
    g = uniform_density(Domain.square(1.0), 256, 256, 1.0)
    lower, _ = lattice_bounds(W2, 1.0, M, 1.0)
    assert lower == pytest.approx(HEXAGON_CONSTANT / M, rel=1e-5)
    lattice = triangular_lattice(g.domain, M)
    lattice_energy = quant_energy(g, lattice, W2)
    opts = QuantizationOptions(max_iter=50, grad_tol=1e-12)
    state = solve_quantization(g, M, W2, "lloyd", opts, start=lattice)
    slack = 1e-2 * lower
    assert lower - slack <= state.energy <= lattice_energy + 1e-12
    assert state.energy <= 1.25 * lower

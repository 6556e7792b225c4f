import math

import numpy as np
import pytest

from src.calculators.entropy_models import EntropyModel, ModelKind
from src.calculators.errors import InvalidArgumentError

W2 = EntropyModel.parse("w2")
GHK = EntropyModel.parse("ghk")
WFR = EntropyModel.parse("wfr")
QR = EntropyModel.parse("qr")


class TestConstruction:
    def test_parse_is_case_insensitive(self):
        assert EntropyModel.parse(" WFR ", 0.5) == EntropyModel(ModelKind.WFR, 0.5)

    def test_unknown_model(self):
        with pytest.raises(InvalidArgumentError, match="Invalid model"):
            EntropyModel.parse("kl")

    @pytest.mark.parametrize("eps", [0.0, -1.0, math.inf])
    def test_rejects_bad_epsilon(self, eps):
        with pytest.raises(InvalidArgumentError):
            EntropyModel(ModelKind.GHK, eps)


class TestPenalties:
    @pytest.mark.parametrize(
        "m, s, expected",
        [(GHK, 0.0, 1.0), (QR, 1.0, 0.0), (WFR, 2.0, 2.0 * math.log(2.0) - 1.0)],
    )
    def test_f_value(self, m, s, expected):
        assert m.f_value(s) == pytest.approx(expected, abs=1e-12)

    def test_f_value_balanced(self):
        assert W2.f_value(1.0) == 0.0
        assert W2.f_value(1.0 + 1e-10) == 0.0
        assert W2.f_value(1.1) == math.inf

    def test_f_value_rejects_negative(self):
        with pytest.raises(InvalidArgumentError):
            GHK.f_value(-0.1)

    def test_f_zero(self):
        assert W2.f_zero() == math.inf
        assert [m.f_zero() for m in (GHK, WFR, QR)] == [1.0, 1.0, 1.0]

    @pytest.mark.parametrize(
        "m, z, expected",
        [(GHK, 0.0, 0.0), (QR, -2.0, -1.0), (W2, 3.5, 3.5), (QR, -7.0, -1.0)],
    )
    def test_f_star(self, m, z, expected):
        assert m.f_star(z) == pytest.approx(expected)

    @pytest.mark.parametrize(
        "m, z, expected",
        [(WFR, 0.0, 1.0), (QR, -4.0, 0.0), (W2, -7.0, 1.0), (QR, -2.0, 0.0)],
    )
    def test_f_star_prime(self, m, z, expected):
        assert m.f_star_prime(z) == expected

    def test_conjugates_at_minus_infinity(self):
        assert W2.f_star(-math.inf) == -math.inf
        for m in (GHK, WFR, QR):
            assert m.f_star(-math.inf) == -m.f_zero()
            assert m.f_star_prime(-math.inf) == 0.0

    @pytest.mark.parametrize("m", [GHK, WFR, QR])
    def test_conjugate_limits(self, m):
        assert -m.f_zero() <= m.f_star(-1e6) <= -m.f_zero() + 1e-6
        assert m.f_star_prime(-1e6) <= 1e-6

    @pytest.mark.parametrize("m", [W2, GHK, WFR, QR])
    def test_star_vanishes_at_zero(self, m):
        assert m.f_star(0.0) == 0.0

    def test_array_input_keeps_shape(self):
        out = GHK.f_star(np.zeros((2, 3)))
        assert isinstance(out, np.ndarray)
        assert out.shape == (2, 3)


class TestFenchelYoung:
    @pytest.mark.parametrize("m", [GHK, WFR, QR])
    def test_inequality_on_lattice(self, m):
        s = np.linspace(0.0, 10.0, 41)[:, None]
        z = np.linspace(-10.0, 2.0, 49)[None, :]
        s_grid = np.broadcast_to(s, (41, 49))
        z_grid = np.broadcast_to(z, (41, 49))
        gap = m.f_value(s_grid) + m.f_star(z_grid) - s * z
        assert gap.min() >= -1e-12

    @pytest.mark.parametrize("m", [GHK, WFR, QR])
    def test_equality_at_derivative(self, m):
        z = np.linspace(-10.0, 2.0, 49)
        s = m.f_star_prime(z)
        assert np.allclose(m.f_value(s) + m.f_star(z), s * z, atol=1e-9)

    def test_balanced_equality(self):
        z = np.linspace(-10.0, 2.0, 13)
        assert np.allclose(W2.f_value(W2.f_star_prime(z)) + W2.f_star(z), z)


class TestDerivatives:
    @pytest.mark.parametrize("m", [W2, GHK, WFR, QR])
    def test_star_prime_matches_central_difference(self, m):
        h = 1e-5
        z = np.linspace(-10.0, 5.0, 61)
        z = z[np.abs(z + 2.0) > 1e-3] if m is QR else z
        fd = (np.asarray(m.f_star(z + h)) - np.asarray(m.f_star(z - h))) / (2.0 * h)
        exact = np.asarray(m.f_star_prime(z))
        active = exact > 1e-3
        assert np.allclose(fd[active], exact[active], rtol=1e-6)
        assert np.allclose(fd[~active], exact[~active], atol=1e-9)

    def test_qr_kink_one_sided(self):
        h = 1e-6
        right = (QR.f_star(-2.0 + h) - QR.f_star(-2.0)) / h
        left = (QR.f_star(-2.0) - QR.f_star(-2.0 - h)) / h
        assert left == 0.0
        assert right == pytest.approx(QR.f_star_prime(-2.0), abs=1e-6)


class TestCost:
    def test_examples(self):
        assert WFR.cost(math.pi / 3) == pytest.approx(2.0 * math.log(2.0), rel=1e-12)
        assert WFR.cost(2.0) == math.inf
        assert W2.cost(0.0) == 0.0

    def test_scaling(self):
        m = EntropyModel.parse("ghk", 0.5)
        assert m.cost(1.0) == pytest.approx(4.0)

    def test_cutoff_radius(self):
        assert WFR.cutoff_radius() == pytest.approx(math.pi / 2)
        scaled = EntropyModel.parse("wfr", 0.1)
        assert scaled.cutoff_radius() == pytest.approx(0.05 * math.pi)
        assert GHK.cutoff_radius() == math.inf

    def test_wfr_clamped_below_cutoff(self):
        near = math.pi / 2 - 1e-13
        assert math.isfinite(WFR.cost(near))
        assert WFR.cost(near) == WFR.cost(math.pi / 2 - 1e-12)
        assert WFR.cost(math.pi / 2) == math.inf

    @pytest.mark.parametrize("m", [W2, GHK, WFR, QR])
    def test_strictly_increasing(self, m):
        top = min(m.cutoff_radius(), 5.0) * (1 - 1e-3)
        values = np.asarray(m.cost(np.linspace(0.0, top, 200)))
        assert np.all(np.diff(values) > 0.0)


class TestKernel:
    @pytest.mark.parametrize(
        "m, s, expected",
        [(W2, 1.7, 2.0), (WFR, math.pi / 2, 0.0), (QR, 1.0, 1.0), (WFR, 0.0, 2.0)],
    )
    def test_examples(self, m, s, expected):
        assert m.r_kernel(s) == pytest.approx(expected, abs=1e-12)

    def test_wfr_vanishes_beyond_cutoff(self):
        assert WFR.r_kernel(2.0) == 0.0

    @pytest.mark.parametrize("m", [W2, GHK, WFR, QR])
    def test_consistent_with_profile(self, m):
        h = 1e-6
        top = min(m.cutoff_radius(), 3.0)
        s = np.linspace(0.05, top - 0.05, 40)
        if m is QR:
            s = s[np.abs(s - math.sqrt(2.0)) > 1e-2]
        upper = np.asarray(m.radial_profile(s + h))
        lower = np.asarray(m.radial_profile(s - h))
        fd = (upper - lower) / (2 * h)
        assert np.allclose(s * np.asarray(m.r_kernel(s)), fd, atol=1e-5)

    @pytest.mark.parametrize("m", [W2, GHK, WFR, QR])
    def test_nonincreasing_and_nonnegative(self, m):
        values = np.asarray(m.r_kernel(np.linspace(0.0, 4.0, 400)))
        assert values.min() >= 0.0
        assert np.all(np.diff(values) <= 1e-12)

    def test_profiles(self):
        t = np.array([0.3, 1.0])
        assert np.allclose(GHK.radial_profile(t), 1.0 - np.exp(-t * t))
        assert np.allclose(WFR.radial_profile(t), np.sin(t) ** 2)
        assert np.allclose(QR.radial_profile(t), t**2 - t**4 / 4)
        assert WFR.radial_profile(3.0) == 1.0
        assert QR.radial_profile(2.0) == 1.0

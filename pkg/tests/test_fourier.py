import math

import numpy as np
import pytest

from qsum.errors import GridMismatch, StripViolation, ValidationError
from qsum.fourier import (
    FourierFn,
    FourierSpace,
    SQRT2PI,
    convolve,
    enorm,
    inverse_fourier_eval,
    inverse_fourier_table,
    make_space,
    series_norm_1R,
    series_norm_sector,
)
from qsum.qcore import QParams
from qsum.series import TruncatedSeries


def gaussian_space(step, M=12.0, beta=1.0, mu=2.0):
    n = int(round(2 * M / step)) + 1
    if n % 2 == 0:
        n += 1
    return make_space(beta, mu, half_width=M, n_points=n)


def gaussian_fn(space):
    return FourierFn.from_callable(space, lambda m: np.exp(-(m ** 2) / 2.0))


class TestSpace:
    def test_default_policy(self):
        sp = make_space(beta=0.5, mu=2.0)
        assert sp.half_width == pytest.approx(80.0)
        assert sp.size >= 2001 and sp.size % 2 == 1
        assert math.exp(-sp.beta * sp.half_width) < 1e-10

    def test_rejects_uneven_grid(self):
        with pytest.raises(ValidationError):
            FourierSpace(np.array([-1.0, 0.0, 2.0]), 1.0, 2.0)

    def test_rejects_asymmetric_grid(self):
        with pytest.raises(ValidationError):
            FourierSpace(np.linspace(-1.0, 2.0, 7), 1.0, 2.0)

    def test_rejects_weak_certificate(self):
        with pytest.raises(ValidationError):
            make_space(beta=-1.0, mu=2.0)
        with pytest.raises(ValidationError):
            make_space(beta=1.0, mu=1.0)


class TestEnorm:
    def test_exact_on_saturating_profile(self):
        sp = make_space(1.0, 2.0, half_width=10.0, n_points=801)
        f = FourierFn.from_callable(
            sp, lambda m: np.exp(-np.abs(m)) / (1.0 + np.abs(m)) ** 2
        )
        assert enorm(f) == pytest.approx(1.0, rel=1e-12)


class TestConvolution:
    def test_gaussian_closed_form(self):
        # exact: (g * g)(m) = sqrt(pi) e^{-m^2/4}
        sp = gaussian_space(step=0.01)
        g = gaussian_fn(sp)
        got = convolve(g, g)
        idx = [np.argmin(np.abs(sp.m - m0)) for m0 in (0.0, 1.0, 2.0)]
        for i in idx:
            want = math.sqrt(math.pi) * math.exp(-sp.m[i] ** 2 / 4.0)
            assert abs(got.values[i] - want) < 1e-6

    def test_halving_step_cuts_error(self):
        # run in the aliasing regime where the trapezoid error is visible;
        # at fine steps the quadrature is exact to roundoff and the ratio
        # check would be vacuous
        errs = []
        for step in (1.2, 0.6):
            sp = gaussian_space(step=step)
            g = gaussian_fn(sp)
            got = convolve(g, g).values
            want = np.sqrt(np.pi) * np.exp(-sp.m ** 2 / 4.0)
            errs.append(float(np.max(np.abs(got - want))))
        assert errs[0] > 3.5 * errs[1]

    def test_commutes_when_tails_are_resolved(self, rng):
        # discrete commutativity holds up to the neglected grid-edge mass,
        # so the profiles must actually decay within the window
        sp = gaussian_space(step=0.05, M=12.0)
        a = FourierFn(sp, rng.standard_normal(sp.size) * np.exp(-sp.m ** 2 / 2.0))
        b = FourierFn(sp, rng.standard_normal(sp.size) * np.exp(-sp.m ** 2 / 2.0))
        np.testing.assert_allclose(
            convolve(a, b).values, convolve(b, a).values, atol=1e-12
        )

    def test_grid_mismatch(self):
        a = gaussian_fn(gaussian_space(step=0.5))
        b = gaussian_fn(gaussian_space(step=0.25))
        with pytest.raises(GridMismatch):
            convolve(a, b)


class TestInverseFourier:
    def test_gaussian_self_dual(self):
        sp = gaussian_space(step=0.01)
        g = gaussian_fn(sp)
        for x in (0.0, 0.7, -1.3, 2.5):
            got = inverse_fourier_eval(g, x, beta_prime=0.5)
            assert abs(got - math.exp(-x * x / 2.0)) < 1e-8

    def test_product_rule(self):
        sp = gaussian_space(step=0.01)
        g = gaussian_fn(sp)
        conv = convolve(g, g).with_values(convolve(g, g).values / SQRT2PI)
        pts = [0.0, 0.4, -0.9 + 0.2j, 1.5 - 0.3j, 0.3 + 0.1j]
        for z in pts:
            lhs = inverse_fourier_eval(g, z, 0.5) * inverse_fourier_eval(g, z, 0.5)
            rhs = inverse_fourier_eval(conv, z, 0.5)
            assert abs(lhs - rhs) < 1e-6

    def test_derivative_rule_vs_central_difference(self):
        sp = gaussian_space(step=0.01)
        g = gaussian_fn(sp)
        deriv = g.with_values(1j * sp.m * g.values)
        z0, h = 0.3 + 0.1j, 1e-4
        fd = (
            inverse_fourier_eval(g, z0 + h, 0.5) - inverse_fourier_eval(g, z0 - h, 0.5)
        ) / (2 * h)
        assert abs(inverse_fourier_eval(deriv, z0, 0.5) - fd) < 1e-5

    def test_strip_guard(self):
        sp = gaussian_space(step=0.1)
        g = gaussian_fn(sp)
        with pytest.raises(StripViolation):
            inverse_fourier_eval(g, 0.3 + 0.8j, beta_prime=0.5)
        with pytest.raises(StripViolation):
            inverse_fourier_eval(g, 0.0, beta_prime=1.5)  # >= beta

    def test_table_matches_pointwise(self, rng):
        sp = gaussian_space(step=0.05, M=8.0)
        rows = rng.standard_normal((3, sp.size)) * np.exp(-np.abs(sp.m))
        zs = [0.1, 0.2 + 0.1j]
        table = inverse_fourier_table(rows, sp, zs, beta_prime=0.5)
        for i in range(3):
            for jz, z in enumerate(zs):
                want = inverse_fourier_eval(FourierFn(sp, rows[i]), z, 0.5)
                assert table[i, jz] == pytest.approx(want, rel=1e-12)


class TestSeriesNorms:
    def test_norm_1R_geometric(self):
        sp = make_space(1.0, 2.0, half_width=5.0, n_points=101)
        coeffs = np.zeros((3, sp.size), dtype=complex)
        coeffs[:, 50] = [1.0, 2.0, 4.0]  # spike at m=0, weight there is 1
        w = TruncatedSeries(coeffs, space=sp)
        # sum_p a_p R^p with R = 1/2
        assert series_norm_1R(w, 0.5) == pytest.approx(0.5 + 0.5 + 0.5, rel=1e-12)

    def test_norm_1R_scalar_space(self):
        w = TruncatedSeries(np.array([1.0, 1.0]))
        assert series_norm_1R(w, 2.0) == pytest.approx(2.0 + 4.0)

    def test_sector_norm_weighting(self):
        params = QParams(q=2.0, k=1)
        sp = make_space(1.0, 2.0, half_width=5.0, n_points=101)
        tau_abs = np.array([0.5, 1.0, 2.0])
        vals = np.ones((3, sp.size), dtype=complex)
        got = series_norm_sector(tau_abs, vals, sp, alpha=0.0, R=1.0, params=params)
        # |tau| = 1 sample: kernel weight is exactly 1, m-weight max at grid edge
        edge = (1.0 + 5.0) ** 2 * math.exp(5.0)
        assert got >= edge * math.exp(-params.k * math.log(2.0) ** 2 / (2 * params.log_q)) / 2.0
        with pytest.raises(ValidationError):
            series_norm_sector(np.array([0.1]), vals[:1], sp, 0.0, 1.0, params)


class TestKernelBoundIntegral:
    @pytest.mark.parametrize("h1", [0.05])
    def test_lemma_style_bound_finite_and_stable(self, h1):
        # sup_m (1+|m|)^(mu-alpha) * int dm1 / ((1+|m-m1|)^mu (1+|m1|)^(mu-degB))
        # for (mu, alpha, degB) = (2, 1, 1)
        mu, alpha, degb = 2.0, 1.0, 1.0

        def sup_value(h):
            m = np.linspace(-50.0, 50.0, 201)
            m1 = np.arange(-400.0, 400.0 + h, h)
            integrand = 1.0 / (
                (1.0 + np.abs(m[:, None] - m1[None, :])) ** mu
                * (1.0 + np.abs(m1[None, :])) ** (mu - degb)
            )
            integral = np.trapezoid(integrand, dx=h, axis=1)
            return float(np.max((1.0 + np.abs(m)) ** (mu - alpha) * integral))

        coarse, fine = sup_value(h1), sup_value(h1 / 2)
        assert np.isfinite(fine) and fine > 0
        assert abs(coarse - fine) <= 0.05 * fine

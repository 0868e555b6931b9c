import itertools
import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import gammaln, i0

from bhchain.errors import ConfigError, ConvergenceError, MeshError
from bhchain.model import ModelParams
from bhchain.thermo import (
    SeriesConfig,
    ThermoPoint,
    annealed_first_order,
    annealed_log_coefficients,
    annealed_logZ_series,
    gaussian_path_Z,
    mc_annealed_oracle,
    mc_kinetic_energy,
    mean_kinetic_energy,
    quadrature_annealed_oracle,
    quenched_F_series,
    quenched_first_order,
    simplex_quenched_oracle,
)
from bhchain.thermo.series import log_bessel_composition_counts

LOG2PI = math.log(2 * math.pi)


def brute_c(L, K):
    """``c_K`` by enumerating every multi-index with total ``K``."""
    total = 0.0
    for ks in itertools.product(range(K + 1), repeat=L - 1):
        if sum(ks) != K:
            continue
        k = (0,) + ks + (0,)
        log_term = -2 * sum(gammaln(x + 1) for x in ks) + sum(gammaln((k[i] + k[i + 1] + 1) / 2) for i in range(L))
        total += math.exp(log_term)
    return total


def fd_energy(logz, beta, h=1e-4):
    E = lambda b: -(logz(b + h) - logz(b - h)) / (2 * h)
    C = -beta**2 * (E(beta + h) - E(beta - h)) / (2 * h)
    return E(beta), C


class TestAnnealedSeries:
    @pytest.mark.parametrize("L", [2, 3, 4, 5])
    def test_coefficients_brute_force(self, L):
        logc = annealed_log_coefficients(L, 6)
        for K in range(7):
            assert math.exp(logc[K]) == pytest.approx(brute_c(L, K), rel=1e-12)

    def test_J0_is_K0_term(self):
        p = ModelParams(J=0, U=2.0, mu=0.7)
        beta, L = 1.3, 5
        ref = L * LOG2PI + beta * p.mu**2 * L / (2 * p.U) + L / 2 * math.log(math.pi / (2 * beta * p.U))
        pt = annealed_logZ_series(p, beta, L)
        assert pt.value == pytest.approx(ref, abs=1e-12) and pt.tail_estimate == 0.0

    @pytest.mark.parametrize("L", [2, 3])
    @pytest.mark.parametrize("beta", [0.5, 1.0, 4.0])
    def test_quadrature_oracle(self, L, beta):
        p = ModelParams(J=0.1, U=50.0)
        s = annealed_logZ_series(p, beta, L)
        q = quadrature_annealed_oracle(p, beta, L)
        assert abs(s.value - q.value) <= 1e-3 * abs(q.value)
        assert abs(s.value - q.value) < 1e-10

    def test_tail_bounds_truncation(self):
        p = ModelParams(J=1.0, U=10.0)
        a = annealed_logZ_series(p, 1.0, 6, SeriesConfig(K_max=8, threshold=0.9))
        b = annealed_logZ_series(p, 1.0, 6, SeriesConfig(K_max=10, threshold=0.9))
        assert 0 < abs(a.value - b.value) < a.tail_estimate

    def test_convergence_error(self):
        with pytest.raises(ConvergenceError):
            annealed_logZ_series(ModelParams(J=3.0, U=1.0), 2.0, 8)

    def test_preconditions(self):
        with pytest.raises(ConfigError):
            annealed_logZ_series(ModelParams(J=1.0, U=0.0), 1.0, 3)
        with pytest.raises(ConfigError):
            annealed_logZ_series(ModelParams(J=1.0, U=1.0), -1.0, 3)
        with pytest.raises(ConfigError):
            annealed_logZ_series(ModelParams(J=1.0, U=1.0), 1.0, 1)
        with pytest.raises(ConfigError):
            SeriesConfig(K_max=0)
        with pytest.raises(ConfigError):
            SeriesConfig(threshold=1.0)
        with pytest.raises(ConfigError):
            ThermoPoint(beta=0, L=2, kind="F_q", value=0, E=0, C=0, truncation_order=0, tail_estimate=0)

    @pytest.mark.parametrize("mu", [0.0, 0.5])
    def test_analytic_derivatives(self, mu):
        p = ModelParams(J=0.4, U=3.0, mu=mu)
        beta, L = 0.8, 4
        pt = annealed_logZ_series(p, beta, L)
        E, C = fd_energy(lambda b: annealed_logZ_series(p, b, L).value, beta)
        assert pt.E == pytest.approx(E, rel=1e-6) and pt.C == pytest.approx(C, rel=1e-5)

    def test_no_overflow_large_chain(self):
        pt = annealed_logZ_series(ModelParams(J=0.01, U=100.0), 100.0, 200)
        assert np.isfinite(pt.value) and np.isfinite(pt.E)


class TestAnnealedClosedForm:
    def test_examples(self):
        a = annealed_first_order(ModelParams(J=0.1, U=1.0), 1.0, 10)
        assert (a.E, a.C) == (5.0, 5.0)
        U, T = 2.0, 0.5
        assert annealed_first_order(ModelParams(J=0.1, U=U, mu=math.sqrt(U * T)), 1 / T, 2).E == pytest.approx(0, abs=1e-15)
        p0 = ModelParams(J=0.0, U=2.0, mu=0.3)
        assert annealed_first_order(p0, 0.7, 6).logZ == pytest.approx(annealed_logZ_series(p0, 0.7, 6).value, abs=1e-12)

    @pytest.mark.parametrize("L", [2, 3, 7])
    def test_K1_identity(self, L):
        p = ModelParams(J=0.3, U=2.0, mu=0.4)
        s = annealed_logZ_series(p, 0.7, L, SeriesConfig(K_max=1, threshold=0.99))
        a = annealed_first_order(p, 0.7, L)
        assert a.logZ == pytest.approx(s.value, abs=1e-12)
        assert a.Z == pytest.approx(math.exp(s.value), rel=1e-12)

    def test_free_energy_is_linearized_logZ(self):
        p = ModelParams(J=0.01, U=5.0, mu=0.3)
        beta, L = 1.0, 4
        a = annealed_first_order(p, beta, L)
        assert a.F == pytest.approx(-a.logZ / beta, rel=1e-6)


class TestQuenched:
    def test_J0_bracket(self):
        p = ModelParams(J=0.0, U=1.5, mu=0.2)
        beta, L = 2.0, 3
        bracket = L * LOG2PI + beta * p.mu * L / (L + 1) - beta * p.U * L / ((L + 1) * (L + 2))
        assert quenched_F_series(p, beta, L).value == pytest.approx(-bracket / (beta * 6), abs=1e-14)

    def test_log_bessel_coefficients(self):
        counts = log_bessel_composition_counts(8, 8, 8)
        assert counts[2, 3] == pytest.approx(2 * 1 / 4)  # (1,2) and (2,1)
        n = np.arange(1, 9)
        coeff = (np.where(n % 2 == 1, 1.0, -1.0) / n) @ counts[1:]
        y = 0.05
        assert np.sum(coeff * y ** np.arange(9)) == pytest.approx(math.log(i0(2 * math.sqrt(y))), abs=1e-12)

    @pytest.mark.parametrize("L", [2, 3])
    @pytest.mark.parametrize("bJ", [0.01, 0.05, 0.5])
    def test_simplex_oracle(self, L, bJ):
        p = ModelParams(J=bJ, U=1.0, mu=0.3)
        s = quenched_F_series(p, 1.0, L)
        o = simplex_quenched_oracle(p, 1.0, L)
        assert abs(s.value - o.value) < 1e-3
        assert abs(s.value - o.value) < 1e-10

    def test_first_term_truncation(self):
        for L in (2, 3, 6):
            p = ModelParams(J=0.2, U=1.3, mu=0.4)
            s = quenched_F_series(p, 0.9, L, SeriesConfig(K_max=1))
            assert s.value == pytest.approx(quenched_first_order(p, 0.9, L).F, abs=1e-12)

    def test_first_order_examples(self):
        q = quenched_first_order(ModelParams(J=0.0, U=3.0, mu=0.0), 1.7, 2)
        assert q.E == 3.0 / 4 and q.C == 0.0
        q = quenched_first_order(ModelParams(J=0.5, U=1.0), 2.0, 3)
        assert q.C == pytest.approx(2 * 4 * 0.25 / 18)

    def test_thermodynamic_limit(self):
        p = ModelParams(J=0.0, U=1.0, mu=0.5)
        beta, L = 1.0, 20
        bracket = L * LOG2PI + beta * p.mu * L / (L + 1) - beta * p.U * L / ((L + 1) * (L + 2))
        assert abs(quenched_F_series(p, beta, L).value) < 1e-15 * abs(bracket)

    def test_series_derivatives(self):
        p = ModelParams(J=0.3, U=1.0, mu=0.2)
        L, beta = 3, 1.1
        pt = quenched_F_series(p, beta, L)
        E, C = fd_energy(lambda b: -b * quenched_F_series(p, b, L).value, beta)
        assert pt.E == pytest.approx(E, rel=1e-6) and pt.C == pytest.approx(C, rel=1e-4)

    def test_divergence_guard(self):
        with pytest.raises(ConvergenceError):
            quenched_F_series(ModelParams(J=20.0, U=1.0), 1.0, 2, SeriesConfig(K_max=12))


class TestGaussianAndKinetic:
    @pytest.mark.parametrize("beta", [0.1, 0.5, 1.0, 3.0, 10.0])
    def test_gaussian_equals_K0(self, beta):
        p = ModelParams(J=0.2, U=1.7)
        k0 = annealed_logZ_series(ModelParams(J=0.0, U=p.U), beta, 5)
        g = gaussian_path_Z(p, beta, 5)
        assert g.value == pytest.approx(k0.value, abs=1e-12)
        assert g.E == pytest.approx(5 / (2 * beta)) and g.kind == "logZ_gauss"

    def test_gaussian_unnormalized_zero(self):
        assert gaussian_path_Z(ModelParams(J=0, U=1.0), 2 * math.pi, 4, normalized=False).value == pytest.approx(0, abs=1e-15)

    def test_mean_kinetic(self):
        assert mean_kinetic_energy(ModelParams(J=1, U=2.0), 0.8, 3.0) == pytest.approx(0.4)
        assert mean_kinetic_energy(ModelParams(J=1, U=2.0, mu=1.5), 0.8, 1.5) == pytest.approx(0.4)
        with pytest.raises(ConfigError):
            mean_kinetic_energy(ModelParams(J=1, U=2.0), 0.0, 0.0)

    def test_mc_kinetic_small_chain(self):
        T = 1.0
        r = mc_kinetic_energy(ModelParams(J=0.05, U=20.0), 1 / T, 10, 5, 60_000, seed=4)
        assert abs(r.value - T / 2) < 3 * r.error


class TestOracles:
    @pytest.mark.parametrize("mu", [0.0, 0.4, -0.3])
    def test_mc_J0_exact(self, mu):
        p = ModelParams(J=0.0, U=3.0, mu=mu)
        beta, L = 1.2, 4
        m = mc_annealed_oracle(p, beta, L, 1000, seed=1)
        one_site = quad(lambda I: math.exp(beta * mu * I - beta * p.U * I * I / 2), 0, np.inf, epsabs=0, epsrel=1e-13)[0]
        assert m.value == pytest.approx(L * (LOG2PI + math.log(one_site)), abs=1e-10)
        assert m.error == 0.0
        if mu == 0.0:
            assert m.value == pytest.approx(annealed_logZ_series(p, beta, L).value, abs=1e-12)

    def test_mc_matches_series(self):
        p = ModelParams(J=0.1, U=50.0)
        for L in (2, 3, 5):
            m = mc_annealed_oracle(p, 1.0, L, 20_000, seed=L)
            assert abs(m.value - annealed_logZ_series(p, 1.0, L).value) < 3 * m.error

    def test_mc_error_scaling(self):
        p = ModelParams(J=1.0, U=2.0)
        a = mc_annealed_oracle(p, 1.0, 3, 40_000, seed=5)
        b = mc_annealed_oracle(p, 1.0, 3, 80_000, seed=6)
        assert a.error / b.error == pytest.approx(math.sqrt(2), rel=0.1)

    def test_mc_limits(self):
        with pytest.raises(ConfigError):
            mc_annealed_oracle(ModelParams(J=1, U=1), 1.0, 7, 100, 0)

    def test_simplex_J0_and_refinement(self):
        p = ModelParams(J=0.0, U=1.0, mu=0.3)
        o = simplex_quenched_oracle(p, 1.0, 2)
        assert o.value == pytest.approx(quenched_F_series(p, 1.0, 2).value, abs=1e-6)
        assert o.error < 1e-6
        with pytest.raises(ConfigError):
            simplex_quenched_oracle(p, 1.0, 4)

    def test_mesh_errors(self):
        with pytest.raises(MeshError):
            simplex_quenched_oracle(ModelParams(J=3.0, U=1.0), 1.0, 2, mesh=2, tol=1e-12)
        with pytest.raises(MeshError):
            quadrature_annealed_oracle(ModelParams(J=1.0, U=1.0), 1.0, 2, mesh=3)
        with pytest.raises(ConfigError):
            quadrature_annealed_oracle(ModelParams(J=1.0, U=1.0), 1.0, 4)

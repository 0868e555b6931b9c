"""Independent numerical checks of the thermodynamic series.

These evaluate the phase-integrated integrals directly, without the power
series: tensor Gauss-Legendre quadrature for the annealed integral on
``[0, inf)^L``, collapsed-coordinate Gauss-Legendre over the corner simplex
``{I >= 0, sum I <= 1}`` for the quenched integral, and importance sampling
with a truncated-Gaussian proposal for larger chains.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy.special import i0e, logsumexp, ndtr
from scipy.stats import truncnorm

from ..errors import ConfigError, MeshError
from ..model import ModelParams
from .series import LOG_2PI, _check


@dataclass(frozen=True)
class OracleEstimate:
    """Estimate with its uncertainty (standard error, or refinement change for quadrature)."""

    value: float
    error: float


def log_i0(x):
    x = np.asarray(x, dtype=float)
    return np.log(i0e(x)) + np.abs(x)


def _bond_log_bessel(I: np.ndarray, beta_J: float) -> np.ndarray:
    """``sum_j log I0(2 beta J sqrt(I_j I_{j+1}))`` over the last axis."""
    if beta_J == 0:
        return np.zeros(I.shape[:-1])
    return log_i0(2 * beta_J * np.sqrt(I[..., :-1] * I[..., 1:])).sum(axis=-1)


def _gauss_legendre(n: int, a: float, b: float):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


def _annealed_quadrature(params, beta, L, mesh):
    U, mu = params.U, params.mu
    sigma = 1.0 / math.sqrt(beta * U)
    upper = max(mu / U, 0.0) + 14.0 * sigma
    x, w = _gauss_legendre(mesh, 0.0, upper)
    grids = np.meshgrid(*([x] * L), indexing="ij")
    I = np.stack(grids, axis=-1)
    logw = sum(np.log(g) for g in np.meshgrid(*([w] * L), indexing="ij"))
    logf = beta * mu * I.sum(-1) - 0.5 * beta * U * (I * I).sum(-1) + _bond_log_bessel(I, beta * params.J)
    return L * LOG_2PI + float(logsumexp(logf + logw))


def quadrature_annealed_oracle(params: ModelParams, beta: float, L: int, mesh: int = 48,
                               tol: float = 1e-9) -> OracleEstimate:
    """``log Z_a`` from the phase-integrated integral on ``[0, inf)^L`` (``L`` in {2, 3}).

    Raises :class:`MeshError` if doubling ``mesh`` moves the result by more
    than ``10 * tol``.
    """
    _check(beta, L)
    if L > 3:
        raise ConfigError("tensor quadrature oracle supports L in {2, 3}; use mc_annealed_oracle")
    if not params.U > 0:
        raise ConfigError("U must be positive")
    coarse = _annealed_quadrature(params, beta, L, mesh)
    fine = _annealed_quadrature(params, beta, L, 2 * mesh)
    diff = abs(fine - coarse)
    if diff > 10 * tol:
        raise MeshError(f"refinement changed log Z by {diff:.3e} (> 10 x {tol:g})")
    return OracleEstimate(fine, diff)


def _proposal(params, beta):
    """Truncated normal on ``[0, inf)`` matching ``exp(beta mu I - beta U I^2/2)``."""
    loc = params.mu / params.U
    scale = 1.0 / math.sqrt(beta * params.U)
    log_norm = (beta * params.mu**2 / (2 * params.U) + 0.5 * math.log(2 * math.pi) + math.log(scale)
                + math.log(ndtr(loc / scale)))
    return truncnorm(-loc / scale, np.inf, loc=loc, scale=scale), log_norm


def mc_annealed_oracle(params: ModelParams, beta: float, L: int, n_samples: int, seed: int) -> OracleEstimate:
    """Importance-sampled ``log Z_a`` with its standard error (``L <= 6``).

    The Gaussian-in-``I`` factor is sampled exactly; the Bessel bond
    factors are the importance weights.
    """
    _check(beta, L)
    if L > 6:
        raise ConfigError("Monte Carlo oracle is meant for L <= 6")
    if not params.U > 0:
        raise ConfigError("U must be positive")
    if n_samples < 2:
        raise ConfigError("n_samples must be >= 2")
    dist, log_norm = _proposal(params, beta)
    rng = np.random.default_rng(seed)
    I = dist.rvs(size=(n_samples, L), random_state=rng)
    logw = _bond_log_bessel(I, beta * params.J)
    shift = logw.max()
    w = np.exp(logw - shift)
    mean = w.mean()
    se_log = w.std(ddof=1) / (math.sqrt(n_samples) * mean)
    return OracleEstimate(L * LOG_2PI + L * log_norm + shift + math.log(mean), float(se_log))


def _simplex_rule(L: int, n: int):
    """Nodes and weights on ``{I >= 0, sum I <= 1}`` via the collapsed (Duffy) map."""
    x, w = _gauss_legendre(n, 0.0, 1.0)
    pts, wts = [], []
    for idx in product(range(n), repeat=L):
        u = x[list(idx)]
        rem, jac = 1.0, 1.0
        point = np.empty(L)
        for d in range(L):
            point[d] = rem * u[d]
            jac *= rem
            rem *= 1.0 - u[d]
        pts.append(point)
        wts.append(jac * np.prod(w[list(idx)]))
    return np.array(pts), np.array(wts)


def _quenched_quadrature(params, beta, L, mesh):
    I, w = _simplex_rule(L, mesh)
    integrand = (L * LOG_2PI + _bond_log_bessel(I, beta * params.J)
                 + beta * params.mu * I.sum(-1) - 0.5 * beta * params.U * (I * I).sum(-1))
    return -float(np.dot(w, integrand)) / beta


def simplex_quenched_oracle(params: ModelParams, beta: float, L: int, mesh: int = 24,
                            tol: float = 1e-7) -> OracleEstimate:
    """``F_q`` as ``-(1/beta)`` times the integral of the log phase-partition over the corner simplex.

    The simplex volume ``1/L!`` comes out of the integration.  Raises
    :class:`MeshError` if doubling ``mesh`` moves the result by more than
    ``10 * tol``.
    """
    _check(beta, L)
    if L not in (2, 3):
        raise ConfigError("simplex oracle supports L in {2, 3}")
    coarse = _quenched_quadrature(params, beta, L, mesh)
    fine = _quenched_quadrature(params, beta, L, 2 * mesh)
    diff = abs(fine - coarse)
    if diff > 10 * tol:
        raise MeshError(f"refinement changed F_q by {diff:.3e} (> 10 x {tol:g})")
    return OracleEstimate(fine, diff)


def mc_kinetic_energy(params: ModelParams, beta: float, L: int, site: int, n_samples: int, seed: int,
                      chunk: int = 50_000) -> OracleEstimate:
    """Self-normalized importance-sampling estimate of ``<dphi_site/dt ^2>/(2U)`` under the annealed weight.

    Numbers come from the truncated-Gaussian proposal, phases uniformly
    from ``[0, 2pi)``; the hopping Boltzmann factor is the weight and the
    phase velocity is the number-phase equation of motion.
    """
    _check(beta, L)
    if not 0 < site < L - 1:
        raise ConfigError("site must be a bulk site (0 < site < L-1)")
    dist, _ = _proposal(params, beta)
    rng = np.random.default_rng(seed)
    J, U, mu = params.J, params.U, params.mu
    logws, gs = [], []
    done = 0
    while done < n_samples:
        n = min(chunk, n_samples - done)
        I = dist.rvs(size=(n, L), random_state=rng)
        phi = rng.uniform(0.0, 2 * np.pi, size=(n, L))
        sq = np.sqrt(I[:, :-1] * I[:, 1:])
        logws.append(2 * beta * J * np.sum(sq * np.cos(phi[:, :-1] - phi[:, 1:]), axis=1))
        l = site
        dphi = (-mu + U * I[:, l]
                - J * (np.sqrt(I[:, l - 1] / I[:, l]) * np.cos(phi[:, l] - phi[:, l - 1])
                       + np.sqrt(I[:, l + 1] / I[:, l]) * np.cos(phi[:, l] - phi[:, l + 1])))
        gs.append(dphi**2 / (2 * U))
        done += n
    logw = np.concatenate(logws)
    g = np.concatenate(gs)
    w = np.exp(logw - logw.max())
    est = float(np.sum(w * g) / np.sum(w))
    se = float(np.sqrt(np.sum(w * w * (g - est) ** 2)) / np.sum(w))
    return OracleEstimate(est, se)

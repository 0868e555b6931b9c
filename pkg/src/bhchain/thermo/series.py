"""Annealed partition-function and quenched free-energy series.

Both multi-index sums are reorganized into shells of fixed total order
``K`` and accumulated in log space; every factorial is a log-Gamma.

Annealed (expansion in ``x = 2 beta J^2 / U``)::

    log Z_a = L log 2pi + beta mu^2 L / (2U) - (L/2) log(2 beta U) + log sum_K c_K x^K
    c_K = sum_{k_1+...+k_{L-1}=K} prod_j 1/(k_j!)^2 prod_{i=0}^{L-1} Gamma((k_i + k_{i+1} + 1)/2)

with ``k_0 = k_L = 0``.  ``c_K`` is built by a transfer recursion along the
chain instead of enumerating multi-indices.

Quenched::

    F_q = -1/(beta L!) [L log 2pi + beta mu L/(L+1) - beta U L/((L+1)(L+2))]
          - (L-1)/beta sum_n (-1)^{n+1}/n sum_{k_1..k_n >= 1} (beta J)^{2K_n}/prod (k_j!)^2
                                          * Gamma(K_n+1)^2 / Gamma(2K_n+L+1)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from ..errors import ConfigError, ConvergenceError
from ..model import ModelParams

LOG_2PI = math.log(2 * math.pi)


@dataclass(frozen=True)
class SeriesConfig:
    """Truncation of the series.

    ``K_max`` bounds the total order of both series.  ``n_max`` and
    ``k_max`` additionally bound the number of factors and each ``k_j`` of
    the quenched sum (default: no extra bound).  A run fails its
    convergence test when the ratio of the last two shells exceeds
    ``threshold``.
    """

    K_max: int = 24
    n_max: int | None = None
    k_max: int | None = None
    threshold: float = 0.5

    def __post_init__(self):
        if self.K_max < 1:
            raise ConfigError("K_max must be >= 1")
        if not 0 < self.threshold < 1:
            raise ConfigError("threshold must lie in (0, 1)")
        for name in ("n_max", "k_max"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ConfigError(f"{name} must be >= 1")


@dataclass(frozen=True)
class ThermoPoint:
    """One thermodynamic evaluation.

    ``value`` is a dimensionless log for ``logZ_*`` kinds and an energy for
    ``F_*`` kinds.  ``E`` and ``C`` are the internal energy and heat
    capacity implied by the same truncated expression.  ``tail_estimate``
    is the magnitude of the last included shell relative to the running
    sum (0 for closed forms).
    """

    beta: float
    L: int
    kind: str
    value: float
    E: float
    C: float
    truncation_order: int
    tail_estimate: float

    def __post_init__(self):
        if not self.beta > 0:
            raise ConfigError("beta must be positive")


def inv_factorial(L: int) -> float:
    """``1/L!``: exact integer factorial while it fits a double, log-Gamma beyond."""
    if L <= 170:
        return 1.0 / math.factorial(L)
    return math.exp(-math.lgamma(L + 1))


def _check(beta: float, L: int):
    if not beta > 0:
        raise ConfigError(f"beta must be positive, got {beta}")
    if int(L) != L or L < 2:
        raise ConfigError(f"L must be an integer >= 2, got {L}")


def annealed_log_coefficients(L: int, K_max: int) -> np.ndarray:
    """``log c_K`` for ``K = 0..K_max`` via the transfer recursion."""
    ks = np.arange(K_max + 1)
    pair = gammaln((ks[:, None] + ks[None, :] + 1) / 2.0)  # Gamma((k'+k+1)/2)
    inv_fact2 = -2.0 * gammaln(ks + 1.0)
    # v[k, T]: last bond value k, running total T
    v = np.full((K_max + 1, K_max + 1), -np.inf)
    v[ks, ks] = pair[0, ks] + inv_fact2
    for _ in range(L - 2):
        new = np.full_like(v, -np.inf)
        for k in range(K_max + 1):
            width = K_max + 1 - k
            new[k, k:] = logsumexp(v[:, :width] + pair[:, k][:, None], axis=0) + inv_fact2[k]
        v = new
    return logsumexp(v + pair[:, 0][:, None], axis=0)


def _ratio_test(log_abs_shells: np.ndarray, threshold: float, what: str):
    finite = np.flatnonzero(np.isfinite(log_abs_shells))
    if finite.size < 2:
        return
    last, prev = finite[-1], finite[-2]
    ratio = math.exp(log_abs_shells[last] - log_abs_shells[prev])
    if ratio > threshold:
        raise ConvergenceError(
            f"{what}: shell ratio {ratio:.3g} at order {last} exceeds {threshold}; raise K_max or lower beta J"
        )


def annealed_logZ_series(params: ModelParams, beta: float, L: int, cfg: SeriesConfig | None = None) -> ThermoPoint:
    _check(beta, L)
    cfg = cfg or SeriesConfig()
    if not params.U > 0:
        raise ConfigError("the annealed series is an expansion around large U; U must be positive")
    J, U, mu = params.J, params.U, params.mu
    logc = annealed_log_coefficients(L, cfg.K_max)
    K = np.arange(cfg.K_max + 1)
    if J > 0:
        log_shell = logc + K * math.log(2.0 * beta * J * J / U)
    else:
        log_shell = np.where(K == 0, logc, -np.inf)
    _ratio_test(log_shell, cfg.threshold, "annealed series")
    log_sum = logsumexp(log_shell)
    p = np.exp(log_shell - log_sum)
    K_mean = float(np.sum(K * p))
    K_var = float(np.sum(K * K * p)) - K_mean**2
    last = int(np.flatnonzero(np.isfinite(log_shell))[-1])
    value = L * LOG_2PI + beta * mu * mu * L / (2 * U) - 0.5 * L * math.log(2 * beta * U) + log_sum
    return ThermoPoint(
        beta=beta, L=L, kind="logZ_a", value=float(value),
        E=0.5 * L / beta - mu * mu * L / (2 * U) - K_mean / beta,
        C=0.5 * L + K_var - K_mean,
        truncation_order=cfg.K_max,
        tail_estimate=float(math.exp(log_shell[last] - log_sum)) if last > 0 else 0.0,
    )


def log_bessel_composition_counts(K_max: int, n_max: int, k_max: int) -> np.ndarray:
    """``counts[n, K] = sum over k_1..k_n in [1, k_max] with sum K of prod 1/(k_j!)^2``."""
    a = np.zeros(K_max + 1)
    ks = np.arange(1, min(k_max, K_max) + 1)
    a[ks] = np.exp(-2.0 * gammaln(ks + 1.0))
    counts = np.zeros((n_max + 1, K_max + 1))
    counts[0, 0] = 1.0
    for n in range(1, n_max + 1):
        counts[n] = np.convolve(counts[n - 1], a)[: K_max + 1]
    return counts


def _quenched_terms(params: ModelParams, beta: float, L: int, cfg: SeriesConfig) -> np.ndarray:
    """Shell contributions ``T_K`` (``K = 0..K_max``, ``T_0 = 0``) of the double sum."""
    n_max = min(cfg.n_max or cfg.K_max, cfg.K_max)
    k_max = cfg.k_max or cfg.K_max
    counts = log_bessel_composition_counts(cfg.K_max, n_max, k_max)
    n = np.arange(1, n_max + 1)
    sign = np.where(n % 2 == 1, 1.0, -1.0) / n
    coeff = sign @ counts[1:]  # Taylor coefficients of log(sum_k y^k/(k!)^2) within the truncation
    K = np.arange(cfg.K_max + 1)
    bj = beta * params.J
    terms = np.zeros(cfg.K_max + 1)
    if bj > 0:
        log_mag = K[1:] * 2 * math.log(bj) + 2 * gammaln(K[1:] + 1.0) - gammaln(2 * K[1:] + L + 1.0)
        terms[1:] = coeff[1:] * np.exp(log_mag)
    return terms


def quenched_F_series(params: ModelParams, beta: float, L: int, cfg: SeriesConfig | None = None) -> ThermoPoint:
    _check(beta, L)
    cfg = cfg or SeriesConfig()
    U, mu = params.U, params.mu
    terms = _quenched_terms(params, beta, L, cfg)
    with np.errstate(divide="ignore"):
        _ratio_test(np.log(np.abs(terms)), cfg.threshold, "quenched series")
    inv_lfact = inv_factorial(L)
    bracket = L * LOG_2PI + beta * mu * L / (L + 1) - beta * U * L / ((L + 1) * (L + 2))
    total = float(np.sum(terms))
    K = np.arange(terms.size)
    # beta F = -(bracket/L! + (L-1) sum T_K), with T_K proportional to beta^{2K}
    E = -inv_lfact * (mu * L / (L + 1) - U * L / ((L + 1) * (L + 2))) - (L - 1) * float(np.sum(2 * K * terms)) / beta
    C = (L - 1) * float(np.sum(2 * K * (2 * K - 1) * terms))
    nz = np.flatnonzero(terms)
    tail = abs(terms[nz[-1]]) / abs(total) if nz.size and total != 0 else 0.0
    return ThermoPoint(
        beta=beta, L=L, kind="F_q",
        value=-(bracket * inv_lfact + (L - 1) * total) / beta,
        E=E, C=C, truncation_order=cfg.K_max, tail_estimate=float(tail),
    )

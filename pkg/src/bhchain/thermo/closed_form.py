"""First-order closed forms, the Gaussian path-integral limit and the kinetic-energy relation."""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..errors import ConfigError
from ..model import ModelParams
from .series import LOG_2PI, ThermoPoint, _check, inv_factorial


@dataclass(frozen=True)
class AnnealedFirstOrder:
    logZ: float
    F: float
    E: float
    C: float

    @property
    def Z(self) -> float:
        return math.exp(self.logZ)


def annealed_first_order(params: ModelParams, beta: float, L: int) -> AnnealedFirstOrder:
    """Zeroth plus first order of the annealed series.

    ``Z_a = (2pi)^L exp(beta mu^2 L/2U) (pi/2 beta U)^{L/2-1} (pi/2 beta U + (L-1) J^2/U^2)``,
    ``E_a = (L/2)(T - mu^2/U)``, ``C_a = L/2``.  ``F`` is the free energy
    with the logarithm expanded to first order in ``beta J^2/U``.
    """
    _check(beta, L)
    J, U, mu = params.J, params.U, params.mu
    if not U > 0:
        raise ConfigError("U must be positive")
    g = math.pi / (2 * beta * U)
    logZ = (L * LOG_2PI + beta * mu * mu * L / (2 * U) + (L / 2 - 1) * math.log(g)
            + math.log(g + (L - 1) * J * J / (U * U)))
    F = -(L * LOG_2PI + beta * mu * mu * L / (2 * U) + (L / 2) * math.log(g)
          + 2 * (L - 1) * J * J * beta / (math.pi * U)) / beta
    return AnnealedFirstOrder(logZ=logZ, F=F, E=0.5 * L * (1 / beta - mu * mu / U), C=0.5 * L)


@dataclass(frozen=True)
class QuenchedFirstOrder:
    F: float
    E: float
    C: float


def quenched_first_order(params: ModelParams, beta: float, L: int) -> QuenchedFirstOrder:
    """Leading quenched free energy with its internal energy and heat capacity.

    ``E_q = (U - mu L - 2 beta J^2)/(L! L)``; ``C_q = -beta^2 dE_q/dbeta = 2 beta^2 J^2/(L! L)``.
    """
    _check(beta, L)
    J, U, mu = params.J, params.U, params.mu
    inv = inv_factorial(L)
    bracket = (L * LOG_2PI + beta**2 * J**2 * (L - 1) / ((L + 1) * (L + 2))
               + beta * mu * L / (L + 1) - beta * U * L / ((L + 1) * (L + 2)))
    return QuenchedFirstOrder(
        F=-bracket * inv / beta,
        E=(U - mu * L - 2 * beta * J * J) * inv / L,
        C=2 * beta**2 * J * J * inv / L,
    )


def gaussian_path_Z(params: ModelParams, beta: float, L: int, normalized: bool = True) -> ThermoPoint:
    """Quadratic path-integral partition function ``N (2pi/beta U)^{L/2}``.

    With ``normalized=True`` the constant is ``N = pi^L``, which makes the
    result identical to the zeroth-order annealed term at ``mu = 0``;
    otherwise ``N = 1``.
    """
    _check(beta, L)
    if not params.U > 0:
        raise ConfigError("U must be positive")
    value = 0.5 * L * math.log(2 * math.pi / (beta * params.U))
    if normalized:
        value += L * math.log(math.pi)
    return ThermoPoint(beta=beta, L=L, kind="logZ_gauss", value=value, E=0.5 * L / beta, C=0.5 * L,
                       truncation_order=0, tail_estimate=0.0)


def mean_kinetic_energy(params: ModelParams, T: float, v_bar: float) -> float:
    """``mu^2/(2U) - mu v_bar/(2U) + T/2``; ``v_bar`` is supplied by the caller."""
    if not params.U > 0 or not T > 0:
        raise ConfigError("U and T must be positive")
    U, mu = params.U, params.mu
    return mu * mu / (2 * U) - mu * v_bar / (2 * U) + T / 2

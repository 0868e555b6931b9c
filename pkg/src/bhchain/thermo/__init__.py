"""Equilibrium thermodynamics of the classical chain: series, closed forms and oracles."""

from .closed_form import (
    AnnealedFirstOrder,
    QuenchedFirstOrder,
    annealed_first_order,
    gaussian_path_Z,
    mean_kinetic_energy,
    quenched_first_order,
)
from .oracles import (
    OracleEstimate,
    mc_annealed_oracle,
    mc_kinetic_energy,
    quadrature_annealed_oracle,
    simplex_quenched_oracle,
)
from .series import (
    SeriesConfig,
    ThermoPoint,
    annealed_log_coefficients,
    annealed_logZ_series,
    quenched_F_series,
)

__all__ = [
    "AnnealedFirstOrder", "OracleEstimate", "QuenchedFirstOrder", "SeriesConfig", "ThermoPoint",
    "annealed_first_order", "annealed_logZ_series", "annealed_log_coefficients", "gaussian_path_Z",
    "mc_annealed_oracle", "mc_kinetic_energy", "mean_kinetic_energy", "quadrature_annealed_oracle",
    "quenched_F_series", "quenched_first_order", "simplex_quenched_oracle",
]

"""Orbit ensembles, occupation moments and anomalous-exponent fits.

Exponent ladders, with ``m`` the graph distance to the nearest initially
filled site:

* ``"4m"``   variance exponent, generic initial conditions
* ``"2m"``   variance exponent, several partially filled sites
* ``"2m-2"`` mean exponent ``max(0, 2m - 2)``
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .dynamics import IntegratorConfig, energies, evolve_batch, log_save_times
from .errors import ConfigError, WindowError
from .model import FieldState, Lattice, ModelParams, distance_map

MOMENT_FLOOR = 1e-28
MIN_FIT_POINTS = 8
MIN_R2 = 0.98
LADDERS = ("4m", "2m", "2m-2")
PERTURB_MODES = ("filled", "all")


@dataclass(frozen=True, eq=False)
class EnsembleSpec:
    """Initial-condition distribution for an orbit ensemble.

    ``filled`` holds 0-based site indices.  With ``perturb="filled"`` the
    Gaussian noise of width ``width`` acts on the real and imaginary
    amplitude of the filled sites only, so empty sites start exactly empty.
    ``perturb="all"`` adds the noise to every site; the noise floor on the
    empty sites then turns the variance ladder into ``2m``.
    """

    filled: tuple[int, ...]
    width: float = 1e-3
    n_orbits: int = 500
    seed: int = 0
    save_times: np.ndarray = field(default_factory=lambda: log_save_times(1e-2, 10.0))
    weights: tuple[float, ...] | None = None
    perturb: str = "filled"

    def __post_init__(self):
        object.__setattr__(self, "filled", tuple(int(s) for s in self.filled))
        object.__setattr__(self, "save_times", np.asarray(self.save_times, dtype=float))
        if not self.filled:
            raise ConfigError("filled sites must be nonempty")
        if len(set(self.filled)) != len(self.filled):
            raise ConfigError("filled sites must be distinct")
        if self.n_orbits < 2:
            raise ConfigError("n_orbits must be >= 2")
        if not self.width > 0:
            raise ConfigError("width must be positive")
        if self.perturb not in PERTURB_MODES:
            raise ConfigError(f"perturb must be one of {PERTURB_MODES}")
        if self.weights is not None:
            w = tuple(float(x) for x in self.weights)
            if len(w) != len(self.filled) or min(w) <= 0:
                raise ConfigError("weights must be positive, one per filled site")
            object.__setattr__(self, "weights", w)
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")


def _orbit_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(index),)))


def ensemble_array(spec: EnsembleSpec, lattice: Lattice) -> np.ndarray:
    """Initial amplitudes as an ``(n_orbits, L)`` array; orbit ``i`` depends only on ``(seed, i)``."""
    L = lattice.n_sites
    if any(not 0 <= s < L for s in spec.filled):
        raise ConfigError(f"filled sites {spec.filled} outside lattice of {L} sites")
    w = np.ones(len(spec.filled)) if spec.weights is None else np.asarray(spec.weights)
    base = np.zeros(L, dtype=np.complex128)
    base[list(spec.filled)] = np.sqrt(w / w.sum())
    noisy = np.array(spec.filled) if spec.perturb == "filled" else np.arange(L)
    out = np.empty((spec.n_orbits, L), dtype=np.complex128)
    for i in range(spec.n_orbits):
        g = _orbit_rng(spec.seed, i).standard_normal((2, noisy.size))
        psi = base.copy()
        psi[noisy] += spec.width * (g[0] + 1j * g[1])
        nrm = np.linalg.norm(psi)
        if nrm < 1e-6:
            raise ConfigError(f"width {spec.width} too large: orbit {i} has norm {nrm:.2e} before renormalizing")
        out[i] = psi / nrm
    return out


def sample_ensemble(spec: EnsembleSpec, lattice: Lattice) -> list[FieldState]:
    return [FieldState.normalized(row) for row in ensemble_array(spec, lattice)]


def _jackknife_var_se(x: np.ndarray) -> np.ndarray:
    """Delete-one jackknife error of the population variance along axis 0."""
    n = x.shape[0]
    d = x - x.mean(axis=0)
    s2 = np.sum(d * d, axis=0)
    loo = (s2 - d * d * (n / (n - 1))) / (n - 1)
    dev = loo - loo.mean(axis=0)
    return np.sqrt((n - 1) / n * np.sum(dev * dev, axis=0))


def moments(occupations: np.ndarray):
    """Mean, population variance and their jackknife errors over the orbit axis.

    ``occupations`` has shape ``(n_times, n_orbits, L)``.  The variance is
    computed in two passes so that tiny occupations keep their precision.
    """
    x = np.moveaxis(occupations, 1, 0)
    n = x.shape[0]
    mean = x.mean(axis=0)
    var = np.mean((x - mean) ** 2, axis=0)
    se_mean = x.std(axis=0, ddof=1) / math.sqrt(n)
    return mean, var, se_mean, _jackknife_var_se(x)


@dataclass(frozen=True, eq=False)
class MomentSeries:
    """Per-site occupation moments at each save time (arrays are ``n_times x L``)."""

    times: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    se_mean: np.ndarray
    se_var: np.ndarray
    n_orbits: int
    energy_drift: np.ndarray | None = None
    norm_drift: np.ndarray | None = None

    @property
    def n_sites(self) -> int:
        return self.mean.shape[1]

    def moment(self, kind: str) -> np.ndarray:
        if kind == "variance":
            return self.var
        if kind == "mean":
            return self.mean
        raise ConfigError(f"moment must be 'mean' or 'variance', got {kind!r}")

    def total_mean_error(self) -> np.ndarray:
        """``|sum_n <I_n> - 1|`` in units of its standard error (floored at machine precision)."""
        tot = self.mean.sum(axis=1)
        se = np.sqrt(np.sum(self.se_mean**2, axis=1))
        return np.abs(tot - 1.0) / np.maximum(se, 1e-13)

    def to_csv(self, path) -> None:
        """Columns ``t, site, mean, var, se_mean, se_var``; ``site`` is the 1-based row-major index."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "site", "mean", "var", "se_mean", "se_var"])
            for k, t in enumerate(self.times):
                for j in range(self.n_sites):
                    w.writerow([repr(float(t)), j + 1, repr(float(self.mean[k, j])), repr(float(self.var[k, j])),
                                repr(float(self.se_mean[k, j])), repr(float(self.se_var[k, j]))])


def run_ensemble(spec: EnsembleSpec, params: ModelParams, lattice: Lattice,
                 config: IntegratorConfig, threads: int = 1) -> MomentSeries:
    psi0 = ensemble_array(spec, lattice)
    times, psi_t = evolve_batch(psi0, spec.save_times, params, lattice, config, threads=threads)
    E = energies(psi_t, params, lattice)
    e0 = np.where(E[0] == 0, 1.0, np.abs(E[0]))
    N = np.sum(np.abs(psi_t) ** 2, axis=2)
    occ = np.abs(psi_t) ** 2
    mean, var, se_mean, se_var = moments(occ)
    return MomentSeries(
        times=times, mean=mean, var=var, se_mean=se_mean, se_var=se_var, n_orbits=spec.n_orbits,
        energy_drift=np.max(np.abs(E - E[0]) / e0, axis=0),
        norm_drift=np.max(np.abs(N - N[0]), axis=0),
    )


@dataclass(frozen=True)
class ExponentFit:
    """Log-log least-squares fit of one moment of one site.

    ``ladder``/``m``/``classified`` are filled in by :func:`classify_ladder`;
    ``classified`` is the matched integer rung or ``None``.
    """

    site: int
    moment: str
    slope: float
    intercept: float
    r2: float
    window: tuple[float, float]
    n_points: int
    m: int | None = None
    ladder: str | None = None
    ladder_value: int | None = None
    classified: int | None = None

    def to_dict(self, lattice: Lattice | None = None) -> dict:
        return {
            "site": self.site + 1 if lattice is None else lattice.label(self.site),
            "moment": self.moment,
            "ladder_type": self.ladder,
            "slope": self.slope,
            "r2": self.r2,
            "window": list(self.window),
            "n_points": self.n_points,
            "m": self.m,
            "ladder_value": self.ladder_value,
            "classified": self.classified,
        }


def fit_exponent(series: MomentSeries, site: int, moment: str, window: tuple[float, float]) -> ExponentFit:
    """Slope of ``log(moment)`` against ``log(t)`` over ``window``.

    Points below ``1e-28`` are treated as numerical floor and skipped; any
    non-positive value inside the window raises :class:`WindowError`.
    """
    t_a, t_b = float(window[0]), float(window[1])
    if not 0 < t_a < t_b:
        raise WindowError(f"invalid window {window}")
    y = series.moment(moment)[:, site]
    sel = (series.times >= t_a * (1 - 1e-12)) & (series.times <= t_b * (1 + 1e-12))
    vals = y[sel]
    if np.any(vals <= 0):
        raise WindowError(f"site {site}: non-positive {moment} inside window {window}")
    keep = vals >= MOMENT_FLOOR
    t, v = series.times[sel][keep], vals[keep]
    if t.size < MIN_FIT_POINTS:
        raise WindowError(f"site {site}: {t.size} usable points in window {window}, need {MIN_FIT_POINTS}")
    lx, ly = np.log(t), np.log(v)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return ExponentFit(site=site, moment=moment, slope=float(slope), intercept=float(intercept),
                       r2=r2, window=(t_a, t_b), n_points=int(t.size))


def ladder_value(ladder: str, m: int) -> int:
    if ladder == "4m":
        return 4 * m
    if ladder == "2m":
        return 2 * m
    if ladder == "2m-2":
        return max(0, 2 * m - 2)
    raise ConfigError(f"unknown ladder {ladder!r}")


def ladder_tolerance(value: int) -> float:
    """15% of the rung, or 0.3 absolute on the zero rung."""
    return 0.3 if value == 0 else 0.15 * value


def classify_ladder(fit: ExponentFit, m: int, ladder: str | None = None) -> ExponentFit:
    """Match a fit to a ladder rung.

    Variance fits try ``4m`` then ``2m`` unless ``ladder`` is given; mean fits
    use ``2m-2``.  Non-zero rungs also need ``R^2 >= 0.98``; a flat series
    has no trend for ``R^2`` to measure, so the zero rung is judged on the
    slope alone.
    """
    if m < 0:
        raise ConfigError("m must be non-negative")
    if ladder is not None:
        candidates = (ladder,)
    else:
        candidates = ("2m-2",) if fit.moment == "mean" else ("4m", "2m")
    result = replace(fit, m=int(m), ladder=candidates[0], ladder_value=ladder_value(candidates[0], m))
    for lad in candidates:
        value = ladder_value(lad, m)
        if abs(fit.slope - value) <= ladder_tolerance(value) and (value == 0 or fit.r2 >= MIN_R2):
            return replace(fit, m=int(m), ladder=lad, ladder_value=value, classified=value)
    return result


def taylor_time(params: ModelParams, lattice: Lattice, filled: Sequence[int], weights=None) -> float:
    """Inverse of the fastest local frequency of the unperturbed initial state.

    Frequencies considered: the hopping rate ``J z_max`` and the on-site
    rotation ``|U I_f - mu|`` of each filled site.
    """
    w = np.ones(len(filled)) if weights is None else np.asarray(weights, dtype=float)
    shares = w / w.sum()
    z_max = max(len(n) for n in lattice.neighbors)
    omega = max([params.J * z_max] + [abs(params.U * s - params.mu) for s in shares])
    return 1.0 / omega


def early_window(params: ModelParams, lattice: Lattice, filled: Sequence[int], dt: float,
                 weights=None, fraction: float = 0.1) -> tuple[float, float]:
    """Default early-time fit window ``[10 dt, fraction * taylor_time]``."""
    t_a = 10.0 * dt
    t_b = fraction * taylor_time(params, lattice, filled, weights)
    if t_b <= t_a:
        raise WindowError(f"early window [{t_a:g}, {t_b:g}] is empty; reduce dt")
    return (float(t_a), float(t_b))


def local_slopes(series: MomentSeries, site: int, moment: str = "variance", width: float = 0.5):
    """Sliding least-squares log-log slope over ``width`` decades centred on each save time.

    Returns ``(times, slopes)`` for centres with at least 3 usable points.
    """
    y = series.moment(moment)[:, site]
    ok = (series.times > 0) & (y >= MOMENT_FLOOR)
    lt, ly = np.log10(series.times[ok]), np.log10(y[ok])
    centres, slopes = [], []
    for c in lt:
        sel = np.abs(lt - c) <= width / 2 + 1e-12
        if sel.sum() >= 3:
            centres.append(10**c)
            slopes.append(np.polyfit(lt[sel], ly[sel], 1)[0])
    return np.array(centres), np.array(slopes)


def detect_crossover(series: MomentSeries, site: int, moment: str = "variance", width: float = 0.5,
                     rise: float = 2.0, settle: float = 1.3) -> float | None:
    """First window centre where the local slope falls to ``<= settle`` after exceeding ``rise``."""
    t = series.times[series.times > 0]
    if t.size < 2 or math.log10(t[-1] / t[0]) < 2.0:
        raise WindowError("crossover detection needs a series spanning at least two decades")
    centres, slopes = local_slopes(series, site, moment, width)
    risen = False
    for tc, s in zip(centres, slopes):
        if s > rise:
            risen = True
        elif risen and s <= settle:
            return float(tc)
    return None


def fit_sites(series: MomentSeries, lattice: Lattice, filled: Iterable[int], window, moment: str,
              ladder: str | None = None) -> list[ExponentFit]:
    """Fit and classify every site; sites whose window is unusable are skipped."""
    dm = distance_map(lattice, filled)
    fits = []
    for j in range(lattice.n_sites):
        try:
            fit = fit_exponent(series, j, moment, window)
        except WindowError:
            continue
        fits.append(classify_ladder(fit, int(dm.m[j]), ladder))
    return fits


def write_plot_data(path, series: MomentSeries, lattice: Lattice, filled: Iterable[int], anchor: float) -> None:
    """Per-site log-log columns plus reference power laws anchored at ``t = anchor``.

    Reference columns: variance ``t^{4m}`` and ``t^{2m}``, mean ``t^{max(0, 2m-2)}``.
    """
    m = distance_map(lattice, filled).m
    t = series.times
    k0 = int(np.argmin(np.abs(np.log(np.maximum(t, 1e-300) / anchor))))

    def log10(x):
        return math.log10(x) if x > 0 else float("nan")

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "site", "m", "log10_t", "log10_mean", "log10_var",
                    "ref_var_4m", "ref_var_2m", "ref_mean_2m_2"])
        for k in range(1, t.size):
            r = t[k] / t[k0]
            for j in range(series.n_sites):
                mj = int(m[j])
                v0, u0 = series.var[k0, j], series.mean[k0, j]
                values = [math.log10(t[k]), log10(series.mean[k, j]), log10(series.var[k, j]),
                          v0 * r ** (4 * mj), v0 * r ** (2 * mj), u0 * r ** max(0, 2 * mj - 2)]
                w.writerow([repr(float(t[k])), j + 1, mj] + [repr(float(x)) for x in values])

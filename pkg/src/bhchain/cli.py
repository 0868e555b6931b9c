"""Batch command-line front end.

``bhchain --config run.cfg --out results/`` runs the command named in the
configuration (``simulate``, ``lyapunov``, ``diffuse`` or ``thermo``) and
writes its CSV/JSON results plus ``manifest.json``.  Outputs depend only on
the configuration text and the seed; ``--threads`` changes speed only.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import platform
import sys
from dataclasses import asdict, replace

import numba
import numpy as np
import scipy

from . import __version__
from .chaos import lyapunov_spectrum, site_perturbation_growth
from .config import RunConfig, parse_config
from .dynamics import check_conservation, integrate, log_save_times
from .errors import BHChainError, ConfigError
from .model import FieldState, ModelParams, filled_state
from .thermo import (
    SeriesConfig,
    ThermoPoint,
    annealed_first_order,
    annealed_logZ_series,
    gaussian_path_Z,
    mc_annealed_oracle,
    quadrature_annealed_oracle,
    quenched_F_series,
    simplex_quenched_oracle,
)
from .transport import EnsembleSpec, early_window, ensemble_array, fit_sites, run_ensemble, write_plot_data

DEFAULT_WIDTH = 1e-3
ANNEALED_REL_TOL = 1e-3
QUENCHED_ABS_TOL = 1e-3
GAUSS_TOL = 1e-12


def _write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _sub_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(index,)).generate_state(1, np.uint64)[0])


def _initial_state(cfg: RunConfig) -> FieldState:
    if cfg.ensemble.width is None:
        return filled_state(cfg.lattice, cfg.filled, cfg.weights)
    spec = EnsembleSpec(filled=cfg.filled, width=cfg.ensemble.width, n_orbits=2, seed=cfg.seed,
                        weights=cfg.weights, perturb=cfg.ensemble.perturb)
    return FieldState.normalized(ensemble_array(spec, cfg.lattice)[0])


def run_simulate(cfg: RunConfig, out: str, threads: int) -> list[str]:
    state0 = _initial_state(cfg)
    times = log_save_times(cfg.ensemble.t_min, cfg.integrator.t_max, cfg.ensemble.per_decade)
    traj = integrate(state0, cfg.params, cfg.lattice, cfg.integrator, times)
    traj.to_csv(os.path.join(out, "trajectory.csv"))
    report = check_conservation(traj)
    _write_json(os.path.join(out, "conservation.json"),
                {"max_energy_drift": float(report.max_energy_drift), "max_norm_drift": float(report.max_norm_drift)})
    return ["trajectory.csv", "conservation.json"]


def run_lyapunov(cfg: RunConfig, out: str, threads: int) -> list[str]:
    state0 = filled_state(cfg.lattice, cfg.filled, cfg.weights)
    res = lyapunov_spectrum(state0, cfg.params, cfg.lattice, cfg.chaos.horizon,
                            cfg.chaos.renorm_interval, cfg.integrator)
    res.to_csv(os.path.join(out, "lyapunov.csv"))
    summary = res.summary()
    if cfg.chaos.site_growth_horizon > 0:
        growth_cfg = replace(cfg.integrator, t_max=cfg.chaos.site_growth_horizon)
        summary["site_growth_horizon"] = cfg.chaos.site_growth_horizon
        summary["site_growth"] = [
            {"site": cfg.lattice.label(j),
             "rate": site_perturbation_growth(state0, j, cfg.params, cfg.lattice, cfg.chaos.site_growth_horizon,
                                              cfg.chaos.renorm_interval, growth_cfg)}
            for j in range(cfg.lattice.n_sites)
        ]
    _write_json(os.path.join(out, "lyapunov.json"), summary)
    return ["lyapunov.csv", "lyapunov.json"]


def run_diffuse(cfg: RunConfig, out: str, threads: int) -> list[str]:
    ens = cfg.ensemble
    spec = EnsembleSpec(
        filled=cfg.filled, width=ens.width or DEFAULT_WIDTH, n_orbits=ens.n_orbits, seed=cfg.seed,
        save_times=log_save_times(ens.t_min, ens.t_max, ens.per_decade), weights=cfg.weights,
        perturb=ens.perturb,
    )
    series = run_ensemble(spec, cfg.params, cfg.lattice, cfg.integrator, threads=threads)
    series.to_csv(os.path.join(out, "moments.csv"))
    window = ens.fit_window or early_window(cfg.params, cfg.lattice, cfg.filled, cfg.integrator.dt, cfg.weights)
    var_fits = fit_sites(series, cfg.lattice, cfg.filled, window, "variance", ens.variance_ladder)
    mean_fits = fit_sites(series, cfg.lattice, cfg.filled, window, "mean", "2m-2")
    fits = {
        "window": list(window),
        "variance": [f.to_dict(cfg.lattice) for f in var_fits],
        "mean": [f.to_dict(cfg.lattice) for f in mean_fits],
        "summary": {
            "n_sites": cfg.lattice.n_sites,
            "n_orbits": series.n_orbits,
            "variance_classified": sum(f.classified is not None for f in var_fits),
            "mean_classified": sum(f.classified is not None for f in mean_fits),
            "max_energy_drift": float(np.max(series.energy_drift)),
            "max_norm_drift": float(np.max(series.norm_drift)),
        },
    }
    _write_json(os.path.join(out, "fits.json"), fits)
    files = ["moments.csv", "fits.json"]
    if cfg.plot_data:
        write_plot_data(os.path.join(out, "plot_data.csv"), series, cfg.lattice, cfg.filled, anchor=window[0])
        files.append("plot_data.csv")
    return files


def _agrees(diff: float, tol: float) -> str:
    return "true" if diff <= tol else "false"


def thermo_rows(cfg: RunConfig) -> list[list]:
    """Series values with oracle cross-checks for every ``(L, beta)`` of the sweep."""
    params, th = cfg.params, cfg.thermo
    rows = []
    for L in th.sizes:
        for beta in th.betas:
            idx = len(rows)
            if params.U > 0:
                s = annealed_logZ_series(params, beta, L, cfg.series)
                oracle, o = "", None
                if th.oracle and L <= 3:
                    oracle, o = "quadrature", quadrature_annealed_oracle(params, beta, L)
                elif th.oracle and L <= 6:
                    oracle, o = "monte_carlo", mc_annealed_oracle(params, beta, L, th.mc_samples,
                                                                  _sub_seed(cfg.seed, idx))
                tol = None if o is None else max(ANNEALED_REL_TOL * abs(o.value), 3 * o.error)
                rows.append((s, oracle, o, tol))

                a = annealed_first_order(params, beta, L)
                rows.append((ThermoPoint(beta=beta, L=L, kind="F_a", value=a.F, E=a.E, C=a.C, truncation_order=1,
                                         tail_estimate=0.0), "", None, None))

                g = gaussian_path_Z(params, beta, L)
                k0 = annealed_logZ_series(ModelParams(J=0.0, U=params.U), beta, L, SeriesConfig(K_max=1))
                rows.append((g, "annealed_K0", k0.value, GAUSS_TOL))

            q = quenched_F_series(params, beta, L, cfg.series)
            oracle, o = "", None
            if th.oracle and L in (2, 3):
                oracle, o = "simplex", simplex_quenched_oracle(params, beta, L)
            rows.append((q, oracle, o, None if o is None else QUENCHED_ABS_TOL))

    table = []
    for point, oracle, o, tol in rows:
        d = asdict(point)
        if o is None:
            ov, oe, ok = "", "", ""
        else:
            value, err = (o, 0.0) if isinstance(o, float) else (o.value, o.error)
            ov, oe, ok = repr(float(value)), repr(float(err)), _agrees(abs(d["value"] - value), tol)
        table.append([repr(float(d["beta"])), d["L"], d["kind"], repr(float(d["value"])), repr(float(d["E"])),
                      repr(float(d["C"])), d["truncation_order"], repr(float(d["tail_estimate"])),
                      oracle, ov, oe, ok])
    return table


def run_thermo(cfg: RunConfig, out: str, threads: int) -> list[str]:
    with open(os.path.join(out, "thermo.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["beta", "L", "kind", "value", "E", "C", "truncation_order", "tail_estimate",
                    "oracle", "oracle_value", "oracle_error", "oracle_agrees"])
        w.writerows(thermo_rows(cfg))
    return ["thermo.csv"]


COMMANDS = {
    "simulate": run_simulate,
    "lyapunov": run_lyapunov,
    "diffuse": run_diffuse,
    "thermo": run_thermo,
}


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(cfg: RunConfig, out: str, files: list[str]) -> None:
    manifest = {
        "command": cfg.command,
        "config_sha256": cfg.sha256,
        "seed": cfg.seed,
        "versions": {
            "bhchain": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "numba": numba.__version__,
        },
        "files": [{"name": f, "sha256": _sha256(os.path.join(out, f))} for f in files],
    }
    _write_json(os.path.join(out, "manifest.json"), manifest)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bhchain", description=__doc__.splitlines()[0])
    p.add_argument("--config", required=True, help="path to the key=value run configuration")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.add_argument("--seed", type=int, help="master seed, unsigned 64-bit (overrides the config)")
    p.add_argument("--threads", type=int, default=1, help="worker threads; affects speed only")
    p.add_argument("--command", choices=sorted(COMMANDS), help="override the configured command")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = args.out
    try:
        with open(args.config) as fh:
            text = fh.read()
        cfg = parse_config(text, command=args.command)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg = replace(cfg, seed=args.seed)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        out = out or cfg.out_dir or "bhchain_out"
        os.makedirs(out, exist_ok=True)
        files = COMMANDS[cfg.command](cfg, out, args.threads)
        write_manifest(cfg, out, files)
    except (BHChainError, OSError) as exc:
        error = {"error": type(exc).__name__, "message": str(exc)}
        line = getattr(exc, "line", None)
        if line is not None:
            error["line"] = line
        print(json.dumps(error), file=sys.stderr)
        if out:
            try:
                os.makedirs(out, exist_ok=True)
                _write_json(os.path.join(out, "error.json"), error)
            except OSError:
                pass
        return 2 if isinstance(exc, ConfigError) else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

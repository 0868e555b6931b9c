"""Flat ``key=value`` run configuration.

One entry per line, ``#`` starts a comment.  Keys are grouped by prefix
(``model.``, ``lattice.``, ``ensemble.``, ``integrator.``, ``series.``,
``output.``); ``command`` and ``seed`` are top level.  A few common keys may
be written without their prefix (``U_over_J``, ``mu_over_J``, ``J``, ``U``,
``mu``, ``L``, ``filled``).  Unknown or repeated keys are errors.

Example::

    command = diffuse
    U_over_J = 0.375
    mu_over_J = 0.25
    L = 10
    filled = 3,8          # 2D: filled = (2,3),(7,4)
    ensemble.n_orbits = 500
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from typing import Callable

from .dynamics import SCHEMES, IntegratorConfig
from .errors import ConfigError, ParseError, ValidationError
from .model import Lattice, ModelParams, build_lattice
from .thermo.series import SeriesConfig
from .transport import LADDERS, PERTURB_MODES

COMMANDS = ("simulate", "lyapunov", "diffuse", "thermo")

_PAIR = re.compile(r"\(\s*(\d+)\s*,\s*(\d+)\s*\)")


def _float(s: str) -> float:
    return float(s)


def _int(s: str) -> int:
    return int(s)


def _bool(s: str) -> bool:
    low = s.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(x) for x in s.split(","))


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(x) for x in s.split(","))


def _str(s: str) -> str:
    return s


def _sites(s: str):
    """``3,8`` for chains, ``(2,3),(7,4)`` for square lattices."""
    if "(" in s:
        pairs = _PAIR.findall(s)
        if not pairs or _PAIR.sub("", s).replace(",", "").strip():
            raise ValueError(f"malformed site list {s!r}")
        return tuple((int(r), int(c)) for r, c in pairs)
    return _ints(s)


_KEYS: dict[str, Callable[[str], object]] = {
    "command": _str,
    "seed": _int,
    "model.J": _float,
    "model.U": _float,
    "model.mu": _float,
    "model.U_over_J": _float,
    "model.mu_over_J": _float,
    "lattice.L": _int,
    "lattice.extents": _ints,
    "lattice.filled": _sites,
    "lattice.weights": _floats,
    "ensemble.n_orbits": _int,
    "ensemble.width": _float,
    "ensemble.perturb": _str,
    "ensemble.t_min": _float,
    "ensemble.t_max": _float,
    "ensemble.per_decade": _int,
    "ensemble.fit_window": _floats,
    "ensemble.variance_ladder": _str,
    "integrator.scheme": _str,
    "integrator.dt": _float,
    "integrator.tol": _float,
    "integrator.max_iter": _int,
    "integrator.t_max": _float,
    "integrator.renorm_interval": _float,
    "integrator.site_growth_horizon": _float,
    "series.beta": _floats,
    "series.L": _ints,
    "series.K_max": _int,
    "series.n_max": _int,
    "series.k_max": _int,
    "series.threshold": _float,
    "series.oracle": _bool,
    "series.mc_samples": _int,
    "output.dir": _str,
    "output.plot_data": _bool,
}

_ALIASES = {
    "U_over_J": "model.U_over_J",
    "mu_over_J": "model.mu_over_J",
    "J": "model.J",
    "U": "model.U",
    "mu": "model.mu",
    "L": "lattice.L",
    "filled": "lattice.filled",
}


@dataclass(frozen=True)
class EnsembleBlock:
    n_orbits: int = 500
    width: float | None = None
    perturb: str = "filled"
    t_min: float = 1e-2
    t_max: float = 10.0
    per_decade: int = 32
    fit_window: tuple[float, float] | None = None
    variance_ladder: str | None = None


@dataclass(frozen=True)
class ChaosBlock:
    horizon: float = 100.0
    renorm_interval: float | None = None
    site_growth_horizon: float = 0.0


@dataclass(frozen=True)
class ThermoBlock:
    betas: tuple[float, ...] = ()
    sizes: tuple[int, ...] = ()
    oracle: bool = True
    mc_samples: int = 100_000


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration.

    ``filled`` holds 0-based site indices; ``lattice`` is ``None`` only for
    the ``thermo`` command.
    """

    command: str
    params: ModelParams
    lattice: Lattice | None
    filled: tuple[int, ...]
    weights: tuple[float, ...] | None
    ensemble: EnsembleBlock
    integrator: IntegratorConfig
    chaos: ChaosBlock
    series: SeriesConfig
    thermo: ThermoBlock
    out_dir: str | None
    plot_data: bool
    seed: int
    text: str

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()


def _tokenize(text: str) -> dict[str, tuple[object, int]]:
    raw: dict[str, tuple[object, int]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ParseError(f"expected key=value, got {body!r}", line=lineno)
        key, value = (part.strip() for part in body.split("=", 1))
        key = _ALIASES.get(key, key)
        if key not in _KEYS:
            raise ParseError(f"unknown key {key!r}", line=lineno)
        if key in raw:
            raise ParseError(f"duplicate key {key!r} (first set on line {raw[key][1]})", line=lineno)
        if not value:
            raise ParseError(f"empty value for {key!r}", line=lineno)
        try:
            raw[key] = (_KEYS[key](value), lineno)
        except ValueError as exc:
            raise ParseError(f"bad value for {key!r}: {exc}", line=lineno) from None
    return raw


def _model(v: dict) -> ModelParams:
    absolute = [k for k in ("model.J", "model.U", "model.mu") if k in v]
    ratio = [k for k in ("model.U_over_J", "model.mu_over_J") if k in v]
    if absolute and ratio:
        raise ValidationError(f"ratio and absolute parameter forms are mutually exclusive: {absolute + ratio}")
    try:
        if ratio:
            if "model.U_over_J" not in v:
                raise ValidationError("ratio form needs U_over_J")
            return ModelParams.from_ratios(v["model.U_over_J"], v.get("model.mu_over_J", 0.0))
        if "model.J" not in v or "model.U" not in v:
            raise ValidationError("model needs J and U (or U_over_J)")
        return ModelParams(J=v["model.J"], U=v["model.U"], mu=v.get("model.mu", 0.0))
    except ValidationError:
        raise
    except ConfigError as exc:
        raise ValidationError(str(exc)) from None


def _lattice(v: dict, command: str):
    if "lattice.L" in v and "lattice.extents" in v:
        raise ValidationError("give either lattice.L or lattice.extents, not both")
    if "lattice.L" not in v and "lattice.extents" not in v:
        if command == "thermo":
            return None, (), None
        raise ValidationError(f"command {command!r} needs a lattice (L or lattice.extents)")
    try:
        if "lattice.L" in v:
            lattice = build_lattice(1, v["lattice.L"])
        else:
            ext = v["lattice.extents"]
            lattice = build_lattice(len(ext), ext)
    except ConfigError as exc:
        raise ValidationError(str(exc)) from None
    labels = v.get("lattice.filled")
    if labels is None:
        if command == "thermo":
            return lattice, (), None
        raise ValidationError(f"command {command!r} needs filled sites")
    try:
        filled = tuple(lattice.index(lab) for lab in labels)
    except ConfigError as exc:
        raise ValidationError(f"filled sites: {exc}") from None
    if len(set(filled)) != len(filled):
        raise ValidationError("filled sites must be distinct")
    weights = v.get("lattice.weights")
    if weights is not None and (len(weights) != len(filled) or min(weights) <= 0):
        raise ValidationError("lattice.weights must be positive, one per filled site")
    return lattice, filled, weights


def parse_config(text: str, command: str | None = None) -> RunConfig:
    """Parse and validate a configuration; raises :class:`ParseError` or :class:`ValidationError`.

    A non-``None`` ``command`` overrides the one in the text.
    """
    raw = _tokenize(text)
    v = {k: val for k, (val, _) in raw.items()}

    command = command or v.get("command")
    if command is None:
        raise ValidationError("missing command")
    if command not in COMMANDS:
        raise ValidationError(f"command must be one of {COMMANDS}, got {command!r}")
    seed = v.get("seed", 0)
    if not 0 <= seed < 2**64:
        raise ValidationError("seed must be an unsigned 64-bit integer")

    params = _model(v)
    lattice, filled, weights = _lattice(v, command)

    window = v.get("ensemble.fit_window")
    if window is not None and (len(window) != 2 or not 0 < window[0] < window[1]):
        raise ValidationError("ensemble.fit_window must be two increasing positive times")
    ladder = v.get("ensemble.variance_ladder")
    if ladder is not None and ladder not in LADDERS[:2]:
        raise ValidationError(f"ensemble.variance_ladder must be one of {LADDERS[:2]}")
    perturb = v.get("ensemble.perturb", "filled")
    if perturb not in PERTURB_MODES:
        raise ValidationError(f"ensemble.perturb must be one of {PERTURB_MODES}")
    ensemble = EnsembleBlock(
        n_orbits=v.get("ensemble.n_orbits", 500),
        width=v.get("ensemble.width"),
        perturb=perturb,
        t_min=v.get("ensemble.t_min", 1e-2),
        t_max=v.get("ensemble.t_max", 10.0),
        per_decade=v.get("ensemble.per_decade", 32),
        fit_window=window,
        variance_ladder=ladder,
    )
    if ensemble.n_orbits < 2:
        raise ValidationError("ensemble.n_orbits must be >= 2")
    if ensemble.width is not None and not ensemble.width > 0:
        raise ValidationError("ensemble.width must be positive")
    if not 0 < ensemble.t_min < ensemble.t_max or ensemble.per_decade < 1:
        raise ValidationError("need 0 < ensemble.t_min < ensemble.t_max and per_decade >= 1")

    horizon = v.get("integrator.t_max", ensemble.t_max if command == "diffuse" else 100.0)
    scheme = v.get("integrator.scheme", "midpoint4")
    if scheme not in SCHEMES:
        raise ValidationError(f"integrator.scheme must be one of {SCHEMES}")
    try:
        integrator = IntegratorConfig(
            scheme=scheme,
            dt=v.get("integrator.dt", 1e-3 if command in ("simulate", "diffuse") else 1e-2),
            tol=v.get("integrator.tol", 1e-13),
            t_max=max(horizon, ensemble.t_max) if command == "diffuse" else horizon,
            max_iter=v.get("integrator.max_iter", 50),
        )
        series = SeriesConfig(
            K_max=v.get("series.K_max", 24),
            n_max=v.get("series.n_max"),
            k_max=v.get("series.k_max"),
            threshold=v.get("series.threshold", 0.5),
        )
    except ConfigError as exc:
        raise ValidationError(str(exc)) from None
    chaos = ChaosBlock(
        horizon=horizon,
        renorm_interval=v.get("integrator.renorm_interval"),
        site_growth_horizon=v.get("integrator.site_growth_horizon", 0.0),
    )
    if chaos.renorm_interval is not None and not chaos.renorm_interval > 0:
        raise ValidationError("integrator.renorm_interval must be positive")
    if chaos.site_growth_horizon < 0:
        raise ValidationError("integrator.site_growth_horizon must be >= 0")

    thermo = ThermoBlock(
        betas=v.get("series.beta", ()),
        sizes=v.get("series.L", ()),
        oracle=v.get("series.oracle", True),
        mc_samples=v.get("series.mc_samples", 100_000),
    )
    if command == "thermo":
        if not thermo.betas or not thermo.sizes:
            raise ValidationError("thermo needs series.beta and series.L")
        if min(thermo.betas) <= 0 or min(thermo.sizes) < 2:
            raise ValidationError("series.beta must be positive and series.L >= 2")
        if thermo.mc_samples < 2:
            raise ValidationError("series.mc_samples must be >= 2")

    return RunConfig(
        command=command, params=params, lattice=lattice, filled=filled, weights=weights,
        ensemble=ensemble, integrator=integrator, chaos=chaos, series=series, thermo=thermo,
        out_dir=v.get("output.dir"), plot_data=v.get("output.plot_data", True), seed=seed, text=text,
    )

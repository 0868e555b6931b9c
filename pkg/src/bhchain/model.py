"""Lattices, parameters, states and the classical number-phase Hamiltonian.

The canonical dynamical state is the complex amplitude vector ``psi`` with
``sum |psi_j|^2 = 1``.  Occupations ``I_j = |psi_j|^2`` and phases
``phi_j = arg psi_j`` are a derived view, since the phase is singular on
empty sites.

Site indices are 0-based everywhere in the Python API.  Physical 1-based
labels (``3`` on a chain, ``(2, 3)`` as row/column on a square lattice) are
converted with :meth:`Lattice.index` and :meth:`Lattice.label`.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import ConfigError

NORM_TOL = 1e-12
PHASE_FLOOR = 1e-12
FROM_VIEW_TOL = 1e-9

SiteLabel = Union[int, Sequence[int]]


@dataclass(frozen=True)
class ModelParams:
    """Hopping ``J``, rescaled interaction ``U = N U_BH`` and chemical potential ``mu``."""

    J: float
    U: float
    mu: float = 0.0

    def __post_init__(self):
        for name in ("J", "U", "mu"):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise ConfigError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        if self.J < 0 or self.U < 0:
            raise ConfigError(f"J and U must be non-negative (J={self.J}, U={self.U})")
        if self.J == 0 and self.U == 0:
            raise ConfigError("at least one of J, U must be positive")

    @classmethod
    def from_ratios(cls, U_over_J: float, mu_over_J: float = 0.0, J: float = 1.0) -> "ModelParams":
        return cls(J=J, U=U_over_J * J, mu=mu_over_J * J)

    @property
    def energy_scale(self) -> float:
        """``J`` when hopping is present, otherwise ``U``."""
        return self.J if self.J > 0 else self.U


@dataclass(frozen=True)
class Lattice:
    """Open-boundary chain or square lattice.

    Build instances with :func:`build_lattice`.  ``neighbors[j]`` is the
    sorted tuple of neighbor indices of site ``j``.
    """

    dimension: int
    extents: tuple[int, ...]
    neighbors: tuple[tuple[int, ...], ...] = field(repr=False)

    @property
    def n_sites(self) -> int:
        return len(self.neighbors)

    def __len__(self) -> int:
        return self.n_sites

    @cached_property
    def bonds(self) -> np.ndarray:
        """``(n_bonds, 2)`` array of site pairs ``j < k``, each bond once."""
        pairs = [(j, k) for j, nbrs in enumerate(self.neighbors) for k in nbrs if j < k]
        return np.array(pairs, dtype=np.int64).reshape(-1, 2)

    @cached_property
    def neighbor_table(self) -> tuple[np.ndarray, np.ndarray]:
        """Padded ``(L, z_max)`` neighbor table (``-1`` padding) and per-site counts."""
        counts = np.array([len(n) for n in self.neighbors], dtype=np.int64)
        table = np.full((self.n_sites, int(counts.max())), -1, dtype=np.int64)
        for j, nbrs in enumerate(self.neighbors):
            table[j, : len(nbrs)] = nbrs
        return table, counts

    @cached_property
    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.n_sites, self.n_sites))
        A[self.bonds[:, 0], self.bonds[:, 1]] = 1.0
        A[self.bonds[:, 1], self.bonds[:, 0]] = 1.0
        return A

    def index(self, label: SiteLabel) -> int:
        """0-based index of a 1-based site label (int on a chain, ``(row, col)`` in 2D)."""
        if self.dimension == 1:
            if isinstance(label, (tuple, list)):
                if len(label) != 1:
                    raise ConfigError(f"chain site label must be an integer, got {label!r}")
                label = label[0]
            n = int(label)
            if not 1 <= n <= self.extents[0]:
                raise ConfigError(f"site {label} outside chain of length {self.extents[0]}")
            return n - 1
        try:
            r, c = (int(x) for x in label)  # type: ignore[union-attr]
        except (TypeError, ValueError):
            raise ConfigError(f"2D site label must be (row, col), got {label!r}") from None
        rows, cols = self.extents
        if not (1 <= r <= rows and 1 <= c <= cols):
            raise ConfigError(f"site {label} outside {rows}x{cols} lattice")
        return (r - 1) * cols + (c - 1)

    def label(self, index: int) -> SiteLabel:
        if not 0 <= index < self.n_sites:
            raise ConfigError(f"site index {index} out of range")
        if self.dimension == 1:
            return index + 1
        cols = self.extents[1]
        return (index // cols + 1, index % cols + 1)

    def label_str(self, index: int) -> str:
        lab = self.label(index)
        return str(lab) if self.dimension == 1 else f"({lab[0]},{lab[1]})"


def build_lattice(dimension: int, extents: Sequence[int] | int) -> Lattice:
    """Open-boundary chain (``dimension=1``) or row-major square lattice (``dimension=2``)."""
    if dimension not in (1, 2):
        raise ConfigError(f"dimension must be 1 or 2, got {dimension!r}")
    ext = (int(extents),) if np.isscalar(extents) else tuple(int(e) for e in extents)
    if len(ext) != dimension:
        raise ConfigError(f"expected {dimension} extent(s), got {ext}")
    if any(e < 2 for e in ext):
        raise ConfigError(f"every extent must be >= 2, got {ext}")

    if dimension == 1:
        (n,) = ext
        nbrs = [tuple(k for k in (j - 1, j + 1) if 0 <= k < n) for j in range(n)]
    else:
        rows, cols = ext
        nbrs = []
        for r in range(rows):
            for c in range(cols):
                cand = [(r - 1, c), (r, c - 1), (r, c + 1), (r + 1, c)]
                nbrs.append(
                    tuple(sorted(rr * cols + cc for rr, cc in cand if 0 <= rr < rows and 0 <= cc < cols))
                )
    return Lattice(dimension=dimension, extents=ext, neighbors=tuple(nbrs))


@dataclass(frozen=True, eq=False)
class FieldState:
    """Normalized complex amplitudes, one per site.

    The constructor rejects vectors whose norm deviates from 1 by more than
    ``1e-12``; use :meth:`normalized` to rescale arbitrary input.
    """

    psi: np.ndarray

    def __post_init__(self):
        psi = np.array(self.psi, dtype=np.complex128).ravel()
        if psi.size < 2 or not np.all(np.isfinite(psi)):
            raise ConfigError("state needs at least two finite amplitudes")
        dev = abs(float(np.vdot(psi, psi).real) - 1.0)
        if dev > NORM_TOL:
            raise ConfigError(f"state norm deviates from 1 by {dev:.3e}")
        psi.setflags(write=False)
        object.__setattr__(self, "psi", psi)

    @classmethod
    def normalized(cls, psi) -> "FieldState":
        psi = np.asarray(psi, dtype=np.complex128).ravel()
        nrm = np.linalg.norm(psi)
        if not nrm > 0:
            raise ConfigError("cannot normalize a zero state")
        return cls(psi / nrm)

    @property
    def occupations(self) -> np.ndarray:
        return np.abs(self.psi) ** 2

    def __len__(self) -> int:
        return self.psi.size


@dataclass(frozen=True, eq=False)
class NumberPhaseView:
    """Occupations ``I`` in ``[0, 1]`` and phases ``phi`` in ``[-pi, pi)``."""

    I: np.ndarray
    phi: np.ndarray


def _wrap_phase(phi: np.ndarray) -> np.ndarray:
    return (np.asarray(phi) + np.pi) % (2 * np.pi) - np.pi


def to_number_phase(state: FieldState, phase_floor: float = PHASE_FLOOR) -> NumberPhaseView:
    psi = state.psi
    I = np.abs(psi) ** 2
    phi = np.where(I < phase_floor, 0.0, _wrap_phase(np.angle(psi)))
    return NumberPhaseView(I=I, phi=phi)


def from_number_phase(view: NumberPhaseView) -> FieldState:
    I = np.asarray(view.I, dtype=float)
    phi = np.asarray(view.phi, dtype=float)
    if I.shape != phi.shape:
        raise ConfigError("I and phi must have equal shapes")
    if np.any(I < 0):
        raise ConfigError("occupations must be non-negative")
    dev = abs(I.sum() - 1.0)
    if dev > FROM_VIEW_TOL:
        raise ConfigError(f"occupations sum to 1{dev:+.3e}, outside tolerance {FROM_VIEW_TOL}")
    return FieldState.normalized(np.sqrt(I) * np.exp(1j * phi))


def hamiltonian_energy(state: FieldState, params: ModelParams, lattice: Lattice) -> float:
    """Classical energy ``sum(U/2 I^2 - mu I) - 2J sum_bonds sqrt(I_j I_k) cos(phi_j - phi_k)``.

    Evaluated in amplitude form, where the hopping term is
    ``2 Re(conj(psi_j) psi_k)`` and nothing is singular at ``I = 0``.
    """
    psi = state.psi
    if psi.size != lattice.n_sites:
        raise ConfigError(f"state has {psi.size} sites, lattice has {lattice.n_sites}")
    I = np.abs(psi) ** 2
    onsite = np.sum(0.5 * params.U * I**2 - params.mu * I)
    b = lattice.bonds
    hop = np.sum((np.conj(psi[b[:, 0]]) * psi[b[:, 1]]).real)
    return float(onsite - 2.0 * params.J * hop)


@dataclass(frozen=True, eq=False)
class FilledSiteMap:
    """Initially filled sites and the graph distance ``m`` of every site to the nearest one."""

    filled: frozenset[int]
    m: np.ndarray


def distance_map(lattice: Lattice, filled_sites: Iterable[int]) -> FilledSiteMap:
    """Breadth-first graph distance to the nearest filled site (0-based indices)."""
    filled = frozenset(int(s) for s in filled_sites)
    if not filled:
        raise ConfigError("filled site set is empty")
    if any(not 0 <= s < lattice.n_sites for s in filled):
        raise ConfigError(f"filled sites {sorted(filled)} not all inside the lattice")
    m = np.full(lattice.n_sites, -1, dtype=np.int64)
    queue = deque(sorted(filled))
    for s in queue:
        m[s] = 0
    while queue:
        j = queue.popleft()
        for k in lattice.neighbors[j]:
            if m[k] < 0:
                m[k] = m[j] + 1
                queue.append(k)
    m.setflags(write=False)
    return FilledSiteMap(filled=filled, m=m)


def filled_state(lattice: Lattice, filled_sites: Iterable[int], weights=None, phases=None) -> FieldState:
    """Unperturbed state with the norm split over ``filled_sites`` (equal shares by default)."""
    sites = [int(s) for s in filled_sites]
    if not sites:
        raise ConfigError("filled site set is empty")
    w = np.ones(len(sites)) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (len(sites),) or np.any(w <= 0):
        raise ConfigError("weights must be positive, one per filled site")
    ph = np.zeros(len(sites)) if phases is None else np.asarray(phases, dtype=float)
    psi = np.zeros(lattice.n_sites, dtype=np.complex128)
    psi[sites] = np.sqrt(w / w.sum()) * np.exp(1j * ph)
    return FieldState.normalized(psi)

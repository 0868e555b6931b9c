import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bhchain.errors import ConfigError
from bhchain.model import (
    FieldState,
    ModelParams,
    NumberPhaseView,
    build_lattice,
    distance_map,
    filled_state,
    from_number_phase,
    hamiltonian_energy,
    to_number_phase,
)

from conftest import random_psi


def brute_energy(psi, params, lattice):
    """Number-phase form of the classical Hamiltonian, summed bond by bond."""
    I = np.abs(psi) ** 2
    phi = np.angle(psi)
    e = np.sum(params.U / 2 * I**2 - params.mu * I)
    for j in range(lattice.n_sites):
        for k in lattice.neighbors[j]:
            if j < k:
                e -= 2 * params.J * np.sqrt(I[j] * I[k]) * np.cos(phi[j] - phi[k])
    return e


class TestParams:
    def test_ratios(self):
        p = ModelParams.from_ratios(0.375, 0.25)
        assert (p.J, p.U, p.mu) == (1.0, 0.375, 0.25)

    @pytest.mark.parametrize("J,U", [(-1, 1), (1, -1), (0, 0), (float("nan"), 1)])
    def test_rejects(self, J, U):
        with pytest.raises(ConfigError):
            ModelParams(J=J, U=U)

    def test_energy_scale(self):
        assert ModelParams(J=0, U=3).energy_scale == 3
        assert ModelParams(J=2, U=3).energy_scale == 2


class TestLattice:
    def test_chain(self):
        lat = build_lattice(1, 5)
        assert lat.neighbors[0] == (1,) and lat.neighbors[2] == (1, 3)
        assert lat.bonds.tolist() == [[0, 1], [1, 2], [2, 3], [3, 4]]

    def test_square(self):
        lat = build_lattice(2, (3, 4))
        assert lat.n_sites == 12
        assert len(lat.bonds) == 3 * 3 + 2 * 4
        assert lat.neighbors[5] == (1, 4, 6, 9)
        assert np.allclose(lat.adjacency, lat.adjacency.T)

    def test_labels_roundtrip(self):
        lat = build_lattice(2, (10, 10))
        assert lat.index((2, 3)) == 12 and lat.index((7, 4)) == 63
        for j in range(lat.n_sites):
            assert lat.index(lat.label(j)) == j
        with pytest.raises(ConfigError):
            lat.index((11, 1))

    @pytest.mark.parametrize("dim,ext", [(3, 4), (1, 1), (2, (4,))])
    def test_bad(self, dim, ext):
        with pytest.raises(ConfigError):
            build_lattice(dim, ext)


class TestState:
    def test_norm_check(self):
        with pytest.raises(ConfigError):
            FieldState(np.array([1.0, 1e-6]))
        s = FieldState.normalized([3, 4j])
        assert s.psi.flags.writeable is False
        assert np.allclose(s.occupations, [0.36, 0.64])

    def test_number_phase_roundtrip(self, rng):
        s = FieldState.normalized(random_psi(rng, 7))
        back = from_number_phase(to_number_phase(s))
        assert np.allclose(back.psi, s.psi, atol=1e-14)

    def test_phase_floor(self):
        view = to_number_phase(filled_state(build_lattice(1, 4), [1]))
        assert np.all(view.phi == 0)
        assert np.all((view.phi >= -np.pi) & (view.phi < np.pi))

    def test_view_tolerance(self):
        with pytest.raises(ConfigError):
            from_number_phase(NumberPhaseView(I=np.array([0.5, 0.5 + 1e-6]), phi=np.zeros(2)))
        with pytest.raises(ConfigError):
            from_number_phase(NumberPhaseView(I=np.array([1.1, -0.1]), phi=np.zeros(2)))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0, 5), st.floats(0.1, 5), st.floats(-2, 2))
    def test_energy_matches_number_phase(self, seed, J, U, mu):
        lat = build_lattice(2, (3, 3))
        psi = random_psi(np.random.default_rng(seed), 9)
        p = ModelParams(J=J, U=U, mu=mu)
        assert hamiltonian_energy(FieldState(psi), p, lat) == pytest.approx(brute_energy(psi, p, lat), abs=1e-12)


class TestFilled:
    def test_distance_chain(self):
        m = distance_map(build_lattice(1, 10), [2, 7]).m
        assert m.tolist() == [2, 1, 0, 1, 2, 2, 1, 0, 1, 2]

    def test_distance_square_is_manhattan(self):
        lat = build_lattice(2, (10, 10))
        m = distance_map(lat, [12, 63]).m
        for j in range(lat.n_sites):
            r, c = divmod(j, 10)
            assert m[j] == min(abs(r - 1) + abs(c - 2), abs(r - 6) + abs(c - 3))

    def test_filled_state(self):
        s = filled_state(build_lattice(1, 4), [0, 2], weights=[1, 3])
        assert np.allclose(s.occupations, [0.25, 0, 0.75, 0])
        with pytest.raises(ConfigError):
            filled_state(build_lattice(1, 4), [])

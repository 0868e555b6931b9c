import numpy as np
import pytest

from bhchain.model import ModelParams, build_lattice


@pytest.fixture
def chain10():
    return build_lattice(1, 10)


@pytest.fixture
def chain_params():
    return ModelParams.from_ratios(0.375, 0.25)


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


def random_psi(rng, L, n=None):
    shape = (L,) if n is None else (n, L)
    z = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    return z / np.linalg.norm(z, axis=-1, keepdims=True)


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per acceptance criterion and assert it."""
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, [])

    def report(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)

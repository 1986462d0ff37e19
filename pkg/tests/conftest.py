import os

os.environ.setdefault("OMP_NUM_THREADS", "1")

import numpy as np
import pytest

from quasitrust.model import ResidualFunctional
from quasitrust.problems import CubicVolterra, benchmark_truth, make_noisy

# acceptance verdicts, filled by tests/test_acceptance.py
VERDICTS: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in sorted(VERDICTS, key=lambda v: _order(v[0])):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")


def _order(name: str):
    head = name.split()[0]
    return (int(head) if head.isdigit() else 99, name)


class Benchmark:
    """Cubic Volterra benchmark with noisy data at one relative level."""

    def __init__(self, delta_rel: float, seed: int = 0, n: int = 100):
        self.problem = CubicVolterra(n)
        self.x_true = benchmark_truth(self.problem.grid)
        self.setup = make_noisy(self.problem, self.x_true, delta_rel, seed)
        self.rf = ResidualFunctional(self.problem, self.setup.y_delta.coeffs)
        self.weights = self.problem.weights

    @property
    def rho_true(self) -> float:
        return float(np.sum(self.weights * self.x_true**2))

    def rel_error(self, x) -> float:
        w = self.weights
        return float(np.sqrt(np.sum(w * (np.asarray(x) - self.x_true) ** 2) / np.sum(w * self.x_true**2)))


@pytest.fixture(scope="session")
def bench1():
    return Benchmark(1.0)


@pytest.fixture(scope="session")
def bench3():
    return Benchmark(3.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

"""Forward operators and test problems.

* :class:`CubicVolterra` -- ``y(t) = int_0^t x(s) + c x(s)^3 ds`` discretized by
  the cumulative composite trapezoid rule on an equidistant grid of [0, 1].
* :class:`QuarticExample` -- a scalar nonconvex residual that still satisfies
  the positivity condition on the shifted Hessian at its constrained minimizer.
* :func:`make_noisy` -- seeded data perturbation at a prescribed relative level.
"""
from __future__ import annotations

import abc
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .linalg import WeightedVector, trapezoid_weights


class ForwardProblem(abc.ABC):
    """Discretized forward operator ``F : R^dim_in -> R^dim_out``.

    All vectors are coefficient arrays.  Adjoints are taken with respect to
    the weighted inner products ``<u, v>_in = sum(weights_in * u * v)`` and
    likewise on the output side.
    """

    weights_in: np.ndarray
    weights_out: np.ndarray

    @property
    def dim_in(self) -> int:
        return self.weights_in.size

    @property
    def dim_out(self) -> int:
        return self.weights_out.size

    @abc.abstractmethod
    def eval(self, x: np.ndarray) -> np.ndarray: ...

    @abc.abstractmethod
    def apply_jacobian(self, x: np.ndarray, h: np.ndarray) -> np.ndarray: ...

    @abc.abstractmethod
    def apply_jacobian_adjoint(self, x: np.ndarray, r: np.ndarray) -> np.ndarray: ...

    @abc.abstractmethod
    def apply_second(self, x: np.ndarray, h: np.ndarray, w: np.ndarray) -> np.ndarray: ...

    @abc.abstractmethod
    def second_adjoint_action(self, x: np.ndarray, r: np.ndarray, h: np.ndarray) -> np.ndarray:
        """Representer of ``w -> <r, F''(x)[h, w]>_out`` in the input inner product."""

    def __call__(self, x):
        return self.eval(np.asarray(x, dtype=float))


def cumulative_trapezoid(g: np.ndarray, h: float) -> np.ndarray:
    """``out[i]`` = trapezoid approximation of the integral of g over the first i cells."""
    out = np.zeros_like(g, dtype=float)
    np.cumsum(0.5 * h * (g[:-1] + g[1:]), out=out[1:])
    return out


def cumulative_trapezoid_transpose(v: np.ndarray, h: float) -> np.ndarray:
    """Euclidean transpose of :func:`cumulative_trapezoid`."""
    tail = np.zeros_like(v, dtype=float)
    # tail[j] = sum_{i > j} v[i]
    tail[:-1] = np.cumsum(v[::-1])[::-1][1:]
    out = 0.5 * h * v + h * tail
    out[0] = 0.5 * h * tail[0]
    return out


class CubicVolterra(ForwardProblem):
    """Nonlinear Volterra operator with integrand ``x + cubic * x**3``."""

    def __init__(self, n: int = 100, cubic: float = 10.0, interval_length: float = 1.0):
        self.n = n
        self.cubic = float(cubic)
        self.weights = trapezoid_weights(n, interval_length)
        self.grid = np.linspace(0.0, interval_length, n)
        self.h = interval_length / (n - 1)
        self.weights_in = self.weights_out = self.weights

    def __repr__(self):
        return f"CubicVolterra(n={self.n}, cubic={self.cubic})"

    def _integrate(self, g):
        return cumulative_trapezoid(g, self.h)

    def _integrate_adjoint(self, r):
        # weighted adjoint: W^{-1} L^T W r
        return cumulative_trapezoid_transpose(self.weights * r, self.h) / self.weights

    def eval(self, x):
        return self._integrate(x + self.cubic * x**3)

    def apply_jacobian(self, x, h):
        return self._integrate((1.0 + 3.0 * self.cubic * x**2) * h)

    def apply_jacobian_adjoint(self, x, r):
        return (1.0 + 3.0 * self.cubic * x**2) * self._integrate_adjoint(r)

    def apply_second(self, x, h, w):
        return self._integrate(6.0 * self.cubic * x * h * w)

    def second_adjoint_action(self, x, r, h):
        return 6.0 * self.cubic * x * h * self._integrate_adjoint(r)

    def quadrature_matrix(self) -> np.ndarray:
        """Dense matrix of the cumulative trapezoid rule (for cross-checks)."""
        L = np.zeros((self.n, self.n))
        for i in range(1, self.n):
            L[i, : i + 1] = self.h
            L[i, 0] = L[i, i] = 0.5 * self.h
        return L


def volterra_eval(p: CubicVolterra, x) -> WeightedVector:
    return WeightedVector(p.eval(np.asarray(x, dtype=float)), p.weights_out)


def volterra_jacobian(p: CubicVolterra, x, h) -> WeightedVector:
    return WeightedVector(p.apply_jacobian(np.asarray(x, float), np.asarray(h, float)), p.weights_out)


def volterra_second(p: CubicVolterra, x, h, w) -> WeightedVector:
    x, h, w = (np.asarray(v, float) for v in (x, h, w))
    return WeightedVector(p.apply_second(x, h, w), p.weights_out)


BENCHMARK_PEAK = 0.1


def benchmark_truth(grid: np.ndarray, peak: float = BENCHMARK_PEAK) -> np.ndarray:
    """Default exact solution ``4 peak s (1 - s)`` on [0, 1].

    From a peak of about 0.2 upward the cubic term dominates: norm-ball
    minimizers of the discrete residual then concentrate into grid-point spikes.
    """
    return 4.0 * peak * grid * (1.0 - grid)


@dataclass(frozen=True)
class NoisySetup:
    x_true: WeightedVector
    y_exact: WeightedVector
    y_delta: WeightedVector
    delta_rel: float
    delta_abs: float
    seed: int


def make_noisy(p: ForwardProblem, x_true, delta_rel: float, seed: int) -> NoisySetup:
    """Perturb ``F(x_true)`` by seeded uniform noise rescaled to ``delta_rel`` percent.

    The noise ``e`` satisfies ``|e|_n = delta_rel/100 * |y_exact|_n`` exactly and
    the returned noise level is ``delta_abs = |e|_n^2 / 2``, the misfit of the
    exact data under the squared-norm distance.
    """
    if delta_rel < 0:
        raise ConfigError(f"relative noise level must be nonnegative, got {delta_rel}")
    x = np.asarray(x_true, dtype=float)
    y = p.eval(x)
    y_exact = WeightedVector(y, p.weights_out)
    rng = np.random.default_rng(seed)
    e = rng.uniform(-1.0, 1.0, size=y.size)
    target = delta_rel / 100.0 * y_exact.norm()
    e_norm = WeightedVector(e, p.weights_out).norm()
    e = e * (target / e_norm) if target > 0 else np.zeros_like(e)
    return NoisySetup(
        x_true=WeightedVector(x, p.weights_in),
        y_exact=y_exact,
        y_delta=WeightedVector(y + e, p.weights_out),
        delta_rel=float(delta_rel),
        delta_abs=0.5 * WeightedVector(e, p.weights_out).norm_sq(),
        seed=seed,
    )


class QuarticExample:
    """``r(x) = (x - xd)^2 / 2 - C (x - xd)^4 + D min(0, x)^4`` on the real line.

    Nonconvex for ``|x - xd| > 1/sqrt(12 C)``; the parameter ranges enforced
    here keep ``r'' + lambda`` positive at the constrained minimizer.
    """

    def __init__(self, C: float = 0.2, D: float = 60.0, x_true: float = 1.0):
        if not x_true > 0:
            raise ConfigError(f"x_true must be positive, got {x_true}")
        c_lo, c_hi = 1.0 / (12 * x_true**2), 1.0 / (4 * x_true**2)
        if not c_lo < C < c_hi:
            raise ConfigError(f"C must lie in ({c_lo:.6g}, {c_hi:.6g}), got {C}")
        d_min = (48 * C * x_true**2 - 1) / (12 * (1 / (2 * math.sqrt(C)) - x_true) ** 2)
        if not D > d_min:
            raise ConfigError(f"D must exceed {d_min:.6g}, got {D}")
        self.C, self.D, self.x_true = float(C), float(D), float(x_true)
        self.weights = np.ones(1)

    @staticmethod
    def d_threshold(C: float, x_true: float = 1.0) -> float:
        return (48 * C * x_true**2 - 1) / (12 * (1 / (2 * math.sqrt(C)) - x_true) ** 2)

    def value(self, x) -> float:
        x = float(np.asarray(x).reshape(-1)[0])
        u = x - self.x_true
        return 0.5 * u**2 - self.C * u**4 + self.D * min(0.0, x) ** 4

    def derivative(self, x: float) -> float:
        u = x - self.x_true
        return u - 4 * self.C * u**3 + 4 * self.D * min(0.0, x) ** 3

    def second_derivative(self, x: float) -> float:
        u = x - self.x_true
        return 1 - 12 * self.C * u**2 + 12 * self.D * min(0.0, x) ** 2

    def gradient(self, x) -> np.ndarray:
        return np.array([self.derivative(float(np.asarray(x).reshape(-1)[0]))])

    def hessian_action(self, x, w) -> np.ndarray:
        return self.second_derivative(float(np.asarray(x).reshape(-1)[0])) * np.asarray(w, float)


def example_1d(C: float = 0.2, D: float = 60.0, x_true: float = 1.0) -> QuarticExample:
    return QuarticExample(C, D, x_true)

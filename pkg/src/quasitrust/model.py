"""Residual functional and its quadratic Taylor model as a Euclidean TRS.

With ``v = W^{1/2} x`` the weighted norm becomes Euclidean, and the model

    q(x) = r(x_k) + <g, x - x_k>_n + 1/2 <H (x - x_k), x - x_k>_n

reads ``q = constant + v'Av - 2a'v`` with

    A = 1/2 * Hhat,   a = 1/2 * (Hhat v_k - ghat),
    Hhat = W^{1/2} H W^{-1/2},   ghat = W^{1/2} g.

The TRS multiplier is half of the multiplier in the stationarity condition
``r'(x) + lam <x, .>_n = 0``; :meth:`TrsMapping.multiplier` undoes that.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .linalg import SymOperator, WeightedVector
from .problems import ForwardProblem
from .trs import TrsProblem


class Objective(Protocol):
    """Twice differentiable cost on the weighted coefficient space."""

    weights: np.ndarray

    def value(self, x) -> float: ...

    def gradient(self, x) -> np.ndarray: ...

    def hessian_action(self, x, w) -> np.ndarray: ...


class ResidualFunctional:
    """``r(x) = 1/2 |F(x) - y_delta|_n^2`` with gradients as weighted Riesz representers."""

    def __init__(self, problem: ForwardProblem, data):
        self.problem = problem
        self.data = np.asarray(data, dtype=float)
        if self.data.shape != (problem.dim_out,):
            raise ValueError(f"data has shape {self.data.shape}, expected ({problem.dim_out},)")
        self.weights = problem.weights_in

    def misfit(self, x) -> np.ndarray:
        return self.problem.eval(np.asarray(x, dtype=float)) - self.data

    def value(self, x) -> float:
        res = self.misfit(x)
        return 0.5 * float(np.sum(self.problem.weights_out * res**2))

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.problem.apply_jacobian_adjoint(x, self.misfit(x))

    def hessian_action(self, x, w) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        w = np.asarray(w, dtype=float)
        p = self.problem
        gauss_newton = p.apply_jacobian_adjoint(x, p.apply_jacobian(x, w))
        return gauss_newton + p.second_adjoint_action(x, self.misfit(x), w)


def eval_residual(rf: Objective, x) -> float:
    return rf.value(x)


def gradient(rf: Objective, x) -> WeightedVector:
    return WeightedVector(rf.gradient(x), rf.weights)


def hessian_action(rf: Objective, x, w) -> WeightedVector:
    return WeightedVector(rf.hessian_action(x, w), rf.weights)


def euclidean_hessian(rf: Objective, x) -> SymOperator:
    """``W^{1/2} H(x) W^{-1/2}`` as an operator on Euclidean coordinates."""
    x = np.asarray(x, dtype=float)
    sw = np.sqrt(rf.weights)
    return SymOperator(sw.size, lambda u: sw * rf.hessian_action(x, u / sw))


@dataclass(frozen=True)
class QuadraticModel:
    """Second-order Taylor model of an objective around ``base_point``."""

    base_point: WeightedVector
    gradient: WeightedVector
    hessian_action: SymOperator
    constant: float
    radius_sq: float

    @classmethod
    def build(cls, rf: Objective, x_k, rho: float) -> QuadraticModel:
        x_k = np.asarray(x_k, dtype=float)
        return cls(
            base_point=WeightedVector(x_k, rf.weights),
            gradient=WeightedVector(rf.gradient(x_k), rf.weights),
            hessian_action=euclidean_hessian(rf, x_k),
            constant=rf.value(x_k),
            radius_sq=float(rho),
        )

    def __call__(self, x) -> float:
        """Evaluate the model directly in the weighted space."""
        d = WeightedVector(np.asarray(x, dtype=float), self.base_point.weights) - self.base_point
        sw = np.sqrt(d.weights)
        curvature = (sw * d.coeffs) @ self.hessian_action.apply(sw * d.coeffs)
        return self.constant + self.gradient.inner(d) + 0.5 * curvature

    def model_gradient(self, x) -> WeightedVector:
        """Riesz representer of ``q'(x)``."""
        sw = np.sqrt(self.base_point.weights)
        d = np.asarray(x, dtype=float) - self.base_point.coeffs
        return self.gradient + WeightedVector(self.hessian_action.apply(sw * d) / sw, self.base_point.weights)


@dataclass(frozen=True)
class TrsMapping:
    """Bookkeeping between the Euclidean TRS and the weighted model problem."""

    weights: np.ndarray
    constant: float

    @property
    def sqrt_weights(self) -> np.ndarray:
        return np.sqrt(self.weights)

    def to_weighted(self, v) -> WeightedVector:
        return WeightedVector(np.asarray(v, dtype=float) / self.sqrt_weights, self.weights)

    def to_euclidean(self, x) -> np.ndarray:
        return self.sqrt_weights * np.asarray(x, dtype=float)

    def model_value(self, trs_objective: float) -> float:
        return trs_objective + self.constant

    @staticmethod
    def multiplier(trs_lam: float) -> float:
        return 2.0 * trs_lam


def build_trs(rf: Objective, x_k, rho: float, model: QuadraticModel | None = None, prox: float = 0.0):
    """Euclidean TRS whose solution maps back to the minimizer of the model over ``|x|_n^2 <= rho``.

    A positive ``prox`` adds ``prox/2 * |x - x_k|_n^2`` to the model, and
    the mapping constant then refers to that shifted model.

    Returns ``(TrsProblem, TrsMapping, QuadraticModel)``.
    """
    if not rho > 0:
        raise ValueError(f"radius must be positive, got {rho}")
    if model is None:
        model = QuadraticModel.build(rf, x_k, rho)
    sw = np.sqrt(model.base_point.weights)
    H = model.hessian_action
    v_k = sw * model.base_point.coeffs
    g_hat = sw * model.gradient.coeffs
    Hv_k = H.apply(v_k)
    if prox < 0:
        raise ValueError(f"prox must be nonnegative, got {prox}")
    if prox == 0:
        A = SymOperator(H.dim, lambda u: 0.5 * H.apply(u))
    else:
        A = SymOperator(H.dim, lambda u: 0.5 * (H.apply(u) + prox * u))
    a = 0.5 * (Hv_k + prox * v_k - g_hat)
    constant = model.constant - g_hat @ v_k + 0.5 * v_k @ Hv_k + 0.5 * prox * v_k @ v_k
    return TrsProblem(A, a, float(np.sqrt(rho))), TrsMapping(model.base_point.weights, float(constant)), model

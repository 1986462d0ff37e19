"""Weighted coefficient vectors, matrix-free symmetric operators and a
smallest-eigenpair solver.

Vectors in the discrete space carry quadrature weights so that
``<x, y>_n = sum(w * x * y)`` approximates the L2 inner product.  The
change of variables ``v = sqrt(w) * x`` maps this space isometrically onto
Euclidean space, which is where the trust-region machinery works.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .errors import EigenSolverError, InvalidGridError, WeightMismatchError

DENSE_THRESHOLD = 200


def trapezoid_weights(n: int, interval_length: float = 1.0) -> np.ndarray:
    """Composite trapezoid weights on ``n`` equidistant nodes (endpoints included)."""
    if n < 2:
        raise InvalidGridError(f"trapezoid rule needs at least 2 nodes, got {n}")
    if not interval_length > 0:
        raise InvalidGridError(f"interval length must be positive, got {interval_length}")
    h = interval_length / (n - 1)
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


@dataclass(frozen=True, eq=False)
class WeightedVector:
    """Coefficient vector with the quadrature-weighted inner product."""

    coeffs: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if coeffs.shape != weights.shape or coeffs.ndim != 1:
            raise WeightMismatchError(
                f"coefficients {coeffs.shape} and weights {weights.shape} differ"
            )
        if not np.all(weights > 0):
            raise WeightMismatchError("quadrature weights must be positive")
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "weights", weights)

    def __len__(self):
        return self.coeffs.size

    def __array__(self, dtype=None, copy=None):
        return self.coeffs if dtype is None else self.coeffs.astype(dtype)

    def _check(self, other: WeightedVector):
        if other.weights is not self.weights and not np.array_equal(other.weights, self.weights):
            raise WeightMismatchError("vectors live on different quadrature weights")

    def _wrap(self, coeffs) -> WeightedVector:
        return WeightedVector(coeffs, self.weights)

    def __add__(self, other: WeightedVector) -> WeightedVector:
        self._check(other)
        return self._wrap(self.coeffs + other.coeffs)

    def __sub__(self, other: WeightedVector) -> WeightedVector:
        self._check(other)
        return self._wrap(self.coeffs - other.coeffs)

    def __neg__(self) -> WeightedVector:
        return self._wrap(-self.coeffs)

    def __mul__(self, scalar: float) -> WeightedVector:
        return self._wrap(scalar * self.coeffs)

    __rmul__ = __mul__

    def inner(self, other: WeightedVector) -> float:
        self._check(other)
        return float(np.sum(self.weights * self.coeffs * other.coeffs))

    def norm_sq(self) -> float:
        return float(np.sum(self.weights * self.coeffs**2))

    def norm(self) -> float:
        return float(np.sqrt(self.norm_sq()))

    def to_euclidean(self) -> np.ndarray:
        return weighted_to_euclidean(self)

    @classmethod
    def zeros(cls, weights) -> WeightedVector:
        weights = np.asarray(weights, dtype=float)
        return cls(np.zeros_like(weights), weights)


def weighted_to_euclidean(x: WeightedVector) -> np.ndarray:
    return np.sqrt(x.weights) * x.coeffs


def euclidean_to_weighted(v, weights) -> WeightedVector:
    weights = np.asarray(weights, dtype=float)
    return WeightedVector(np.asarray(v, dtype=float) / np.sqrt(weights), weights)


@dataclass
class SymOperator:
    """Symmetric linear map on R^dim given only by its action.

    ``matrix`` may hold an explicit representation; when present it is
    used for materialization instead of ``dim`` operator applications.
    """

    dim: int
    apply: Callable[[np.ndarray], np.ndarray]
    matrix: Optional[np.ndarray] = field(default=None, repr=False)

    @classmethod
    def from_matrix(cls, M) -> SymOperator:
        M = np.asarray(M, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {M.shape}")
        M = 0.5 * (M + M.T)
        return cls(M.shape[0], lambda v: M @ v, matrix=M)

    def __call__(self, v):
        return self.apply(v)

    def materialize(self) -> np.ndarray:
        """Dense symmetric matrix of the operator (symmetrized)."""
        if self.matrix is not None:
            return self.matrix
        M = np.empty((self.dim, self.dim))
        e = np.zeros(self.dim)
        for j in range(self.dim):
            e[j] = 1.0
            M[:, j] = self.apply(e)
            e[j] = 0.0
        return 0.5 * (M + M.T)

    def symmetry_defect(self, n_probes: int = 10, seed: int = 0) -> float:
        """Largest ``|<Au,v> - <u,Av>| / (|u||v|)`` over seeded random probes."""
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(n_probes):
            u = rng.standard_normal(self.dim)
            v = rng.standard_normal(self.dim)
            gap = abs(self.apply(u) @ v - u @ self.apply(v))
            worst = max(worst, gap / (np.linalg.norm(u) * np.linalg.norm(v)))
        return worst

    def is_symmetric(self, tol_sym: float = 1e-8, n_probes: int = 10, seed: int = 0) -> bool:
        return self.symmetry_defect(n_probes, seed) <= tol_sym


@dataclass(frozen=True)
class EigenPair:
    value: float
    vector: np.ndarray
    residual_norm: float
    matvecs: int = 0


def normalize_sign(v: np.ndarray, tol: float = 1e-14) -> np.ndarray:
    """Flip ``v`` so its first entry that is not negligible is positive."""
    scale = np.max(np.abs(v)) if v.size else 0.0
    idx = np.flatnonzero(np.abs(v) > tol * max(scale, 1e-300))
    if idx.size and v[idx[0]] < 0:
        return -v
    return v


def smallest_eigenpair(
    A: SymOperator,
    tol_eig: float = 1e-10,
    max_mv: Optional[int] = None,
    seed: int = 0,
    dense_threshold: int = DENSE_THRESHOLD,
    max_basis: int = 40,
    keep: int = 8,
) -> EigenPair:
    """Smallest eigenvalue and unit eigenvector of a symmetric operator.

    Small problems (``dim <= dense_threshold``) are materialized and handed
    to LAPACK.  Larger ones use thick-restart Lanczos with full
    reorthogonalization, touching ``A`` only through ``A.apply``.
    """
    if A.dim < 1:
        raise ValueError("operator dimension must be positive")
    if not tol_eig > 0:
        raise ValueError("tol_eig must be positive")
    if A.dim <= dense_threshold:
        return _dense_smallest(A)
    if max_mv is None:
        max_mv = max(50 * A.dim, 2000)
    return _lanczos_smallest(A, tol_eig, max_mv, seed, max_basis, keep)


def _dense_smallest(A: SymOperator) -> EigenPair:
    M = A.materialize()
    mv = 0 if A.matrix is not None else A.dim
    # only the bottom of the spectrum is needed; MRRR on a one-index subset is much cheaper
    vals, vecs = scipy.linalg.eigh(M, subset_by_index=[0, 0], driver="evr", check_finite=False)
    v = normalize_sign(vecs[:, 0])
    res = float(np.linalg.norm(M @ v - vals[0] * v))
    return EigenPair(float(vals[0]), v, res, mv)


def _orthonormalize_against(V: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, float]:
    # two passes of classical Gram-Schmidt
    for _ in range(2):
        w = w - V @ (V.T @ w)
    return w, float(np.linalg.norm(w))


def _lanczos_smallest(A, tol_eig, max_mv, seed, max_basis, keep) -> EigenPair:
    n = A.dim
    max_basis = min(max_basis, n)
    keep = min(keep, max_basis - 1)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)

    V = np.empty((n, 0))
    AV = np.empty((n, 0))
    mv = 0
    best = None
    while True:
        while V.shape[1] < max_basis:
            w = A.apply(v)
            mv += 1
            V = np.column_stack([V, v])
            AV = np.column_stack([AV, w])
            if V.shape[1] == max_basis:
                break
            w, nrm = _orthonormalize_against(V, w)
            if nrm < 1e-12 * max(1.0, np.linalg.norm(AV[:, -1])):
                # invariant subspace found; continue with a fresh random direction
                w, nrm = _orthonormalize_against(V, rng.standard_normal(n))
                if nrm < 1e-14:
                    break
            v = w / nrm

        H = V.T @ AV
        H = 0.5 * (H + H.T)
        theta, Y = np.linalg.eigh(H)
        u = V @ Y[:, 0]
        r = AV @ Y[:, 0] - theta[0] * u
        rnorm = float(np.linalg.norm(r))
        best = EigenPair(float(theta[0]), normalize_sign(u / np.linalg.norm(u)), rnorm, mv)
        if rnorm <= tol_eig or V.shape[1] >= n:
            return best
        if mv >= max_mv:
            raise EigenSolverError(
                f"Lanczos did not reach residual {tol_eig:g} within {max_mv} products "
                f"(best residual {rnorm:.3e})",
                best=best,
            )
        # thick restart: retain the lowest Ritz vectors, extend along the residual
        k = min(keep, V.shape[1] - 1)
        V = V @ Y[:, :k]
        AV = AV @ Y[:, :k]
        V, R = np.linalg.qr(V)
        AV = np.linalg.solve(R.T, AV.T).T
        r, nrm = _orthonormalize_against(V, r)
        if nrm < 1e-14:
            r, nrm = _orthonormalize_against(V, rng.standard_normal(n))
        v = r / nrm

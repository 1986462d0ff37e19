"""Trust-region subproblem ``min x'Ax - 2a'x  s.t. |x| <= s`` with indefinite A.

The boundary solution is found from the bordered matrix

    D(t) = [[t, -a'], [-a, A]]

whose smallest eigenpair ``(theta, (y0, z))`` gives, whenever ``y0 != 0``,
``x = z / y0`` with ``(A - theta I) x = a`` and ``|x|^2 = (1 - y0^2) / y0^2``.
The multiplier is ``lam = -theta``.  Driving ``psi(t) = sqrt(s^2 + 1) - 1/y0(t)``
to zero puts ``x`` on the sphere of radius ``s``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize
from scipy.sparse.linalg import LinearOperator, cg, minres

from .errors import TrsConvergenceError
from .linalg import DENSE_THRESHOLD, EigenPair, SymOperator, normalize_sign, smallest_eigenpair

Y0_FLOOR = 1e-8


@dataclass(frozen=True)
class TrsProblem:
    A: SymOperator
    a: np.ndarray
    s: float

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        object.__setattr__(self, "a", a)
        if not self.s > 0:
            raise ValueError(f"trust-region radius must be positive, got {self.s}")
        if a.shape != (self.A.dim,):
            raise ValueError(f"linear term has shape {a.shape}, operator dim is {self.A.dim}")

    @property
    def dim(self) -> int:
        return self.A.dim

    def objective(self, x) -> float:
        return float(x @ self.A.apply(x) - 2.0 * self.a @ x)


@dataclass
class TrsSolution:
    x: np.ndarray
    lam: float
    objective: float
    on_boundary: bool
    hard_case: bool
    iterations: int
    eig_mv_count: int
    lambda_min_A: float
    t: Optional[float] = None
    trace: Optional[list] = field(default=None, repr=False)

    @property
    def indefinite(self) -> bool:
        return self.lambda_min_A < 0

    def stationarity(self, prob: TrsProblem) -> float:
        return float(np.linalg.norm(prob.A.apply(self.x) + self.lam * self.x - prob.a))

    def complementarity(self, prob: TrsProblem) -> float:
        return abs(self.lam * (self.x @ self.x - prob.s**2))

    def kkt_residual(self, prob: TrsProblem) -> float:
        """Stationarity plus complementarity, both in absolute terms."""
        return self.stationarity(prob) + self.complementarity(prob)


@dataclass(frozen=True)
class BorderedMatrix:
    t: float
    problem: TrsProblem

    def apply(self, y: np.ndarray) -> np.ndarray:
        y0, z = y[0], y[1:]
        a = self.problem.a
        out = np.empty_like(y)
        out[0] = self.t * y0 - a @ z
        out[1:] = -y0 * a + self.problem.A.apply(z)
        return out

    def operator(self) -> SymOperator:
        A = self.problem.A
        if A.matrix is None:
            return SymOperator(A.dim + 1, self.apply)
        n = A.dim
        D = np.empty((n + 1, n + 1))
        D[0, 0] = self.t
        D[0, 1:] = -self.problem.a
        D[1:, 0] = -self.problem.a
        D[1:, 1:] = A.matrix
        return SymOperator(n + 1, self.apply, matrix=D)


@dataclass(frozen=True)
class _Probe:
    t: float
    theta: float
    y0: float
    z: np.ndarray
    residual: float
    s: float
    y0_floor: float

    @property
    def k(self) -> float:
        return (self.s**2 + 1.0) * self.theta - self.t

    @property
    def psi(self) -> float:
        if self.y0 <= self.y0_floor:
            return -math.inf
        return math.sqrt(self.s**2 + 1.0) - 1.0 / self.y0

    @property
    def x(self) -> np.ndarray:
        return self.z / self.y0


def _bordered_eigenpair(t, prob, tol_eig, dense_threshold, seed) -> EigenPair:
    pair = smallest_eigenpair(
        BorderedMatrix(t, prob).operator(), tol_eig=tol_eig, seed=seed,
        dense_threshold=dense_threshold,
    )
    v = pair.vector if pair.vector[0] >= 0 else -pair.vector
    return EigenPair(pair.value, v, pair.residual_norm, pair.matvecs)


def eval_k(t: float, prob: TrsProblem, tol_eig: float = 1e-12,
           dense_threshold: int = DENSE_THRESHOLD, seed: int = 0) -> tuple[float, EigenPair]:
    """``k(t) = (s^2 + 1) * lambda_min(D(t)) - t`` and the eigenpair (with ``y0 >= 0``)."""
    pair = _bordered_eigenpair(t, prob, tol_eig, dense_threshold, seed)
    return (prob.s**2 + 1.0) * pair.value - t, pair


def eval_psi(t: float, prob: TrsProblem, tol_eig: float = 1e-12,
             dense_threshold: int = DENSE_THRESHOLD, seed: int = 0,
             y0_floor: float = Y0_FLOOR) -> float:
    """``sqrt(s^2 + 1) - 1/y0(t)``; ``-inf`` when ``y0(t) <= y0_floor`` (hard-case proximity)."""
    _, pair = eval_k(t, prob, tol_eig, dense_threshold, seed)
    y0 = pair.vector[0]
    if y0 <= y0_floor:
        return -math.inf
    return math.sqrt(prob.s**2 + 1.0) - 1.0 / y0


class _CountingOperator:
    def __init__(self, op: SymOperator):
        self.op = op
        self.count = 0

    def __call__(self, v):
        self.count += 1
        return self.op.apply(v)


def _solve_pd(A: SymOperator, rhs: np.ndarray) -> np.ndarray:
    if A.matrix is not None:
        return np.linalg.solve(A.matrix, rhs)
    L = LinearOperator((A.dim, A.dim), matvec=A.apply, dtype=float)
    x, _ = cg(L, rhs, rtol=1e-13, atol=0.0, maxiter=20 * A.dim)
    return x


def _range_space_solution(A: SymOperator, lam1: float, v1: np.ndarray, a: np.ndarray):
    """Minimum-norm solution of ``(A - lam1 I) x = a`` orthogonal to the bottom eigenspace.

    Returns ``(x, basis)`` with ``basis`` spanning the retained bottom
    eigenspace (columns), used to fill up to the boundary.
    """
    if A.matrix is not None:
        vals, Q = np.linalg.eigh(A.matrix)
        scale = max(1.0, np.max(np.abs(vals)))
        bottom = vals - lam1 <= 1e-10 * scale
        alpha = Q[:, ~bottom].T @ a
        x = Q[:, ~bottom] @ (alpha / (vals[~bottom] - lam1))
        return x, Q[:, bottom]
    n = A.dim
    rhs = a - v1 * (v1 @ a)
    L = LinearOperator((n, n), matvec=lambda u: A.apply(u) - lam1 * u, dtype=float)
    x, _ = minres(L, rhs, rtol=1e-14, maxiter=20 * n)
    x = x - v1 * (v1 @ x)
    return x, v1[:, None]


def default_tol_root(s: float) -> float:
    """|psi| tolerance giving ~1e-13 relative radius error, floored at psi's resolution."""
    return max(1e-13 * s**2 / math.sqrt(1.0 + s**2), 16 * np.finfo(float).eps * math.sqrt(1.0 + s**2))


def solve_trs(
    prob: TrsProblem,
    tol_root: Optional[float] = None,
    max_iter: int = 200,
    tol_eig: float = 1e-12,
    dense_threshold: int = DENSE_THRESHOLD,
    y0_floor: float = Y0_FLOOR,
    seed: int = 0,
    debug: bool = False,
) -> TrsSolution:
    """Solve the trust-region subproblem by root finding on the bordered eigenproblem.

    Root finding on ``psi`` uses inverse interpolation inside a maintained
    bracket with a bisection safeguard.  Interior solutions (A positive
    definite with its Newton point inside the ball) are returned with
    ``lam = 0``.  In the hard case the multiplier is pinned at
    ``-lambda_min(A)`` and the boundary is reached along the bottom
    eigenvector; this is flagged, not an error.
    """
    s = float(prob.s)
    if tol_root is None:
        tol_root = default_tol_root(s)
    counter = _CountingOperator(prob.A)
    n = prob.dim
    if n + 1 <= dense_threshold:
        M = SymOperator(n, counter).materialize()
        work = TrsProblem(SymOperator.from_matrix(M), prob.a, s)
    else:
        work = TrsProblem(SymOperator(n, counter), prob.a, s)
    a = work.a
    anorm = float(np.linalg.norm(a))
    trace = [] if debug else None

    bottom = smallest_eigenpair(work.A, tol_eig=tol_eig, seed=seed, dense_threshold=dense_threshold)
    lam1, v1 = bottom.value, bottom.vector

    def finish(x, lam, on_boundary, hard_case, iterations, t=None):
        return TrsSolution(
            x=x, lam=float(max(lam, 0.0)), objective=work.objective(x),
            on_boundary=on_boundary, hard_case=hard_case, iterations=iterations,
            eig_mv_count=counter.count, lambda_min_A=lam1, t=t, trace=trace,
        )

    def hard_case_solution(iterations, t=None):
        x_p, basis = _range_space_solution(work.A, lam1, v1, a)
        fill = s**2 - x_p @ x_p
        tau = math.sqrt(max(fill, 0.0))
        return finish(x_p + tau * v1, -lam1, True, True, iterations, t)

    if anorm == 0.0:
        if lam1 >= 0:
            return finish(np.zeros(n), 0.0, False, False, 0)
        return finish(s * v1, -lam1, True, True, 0)

    if lam1 > 0:
        x_int = _solve_pd(work.A, a)
        if np.linalg.norm(x_int) <= s:
            return finish(x_int, 0.0, False, False, 0)

    hard_checked = False
    iterations = 0

    def probe(t) -> _Probe:
        nonlocal iterations
        iterations += 1
        pair = _bordered_eigenpair(t, work, tol_eig, dense_threshold, seed)
        p = _Probe(t, pair.value, float(pair.vector[0]), pair.vector[1:], pair.residual_norm, s, y0_floor)
        if trace is not None:
            trace.append({"t": t, "lambda_min": p.theta, "psi": p.psi, "k": p.k, "y0": p.y0})
        return p

    def is_hard_case() -> bool:
        nonlocal hard_checked
        hard_checked = True
        if lam1 > 0:
            return False
        x_p, basis = _range_space_solution(work.A, lam1, v1, a)
        leak = np.linalg.norm(basis.T @ a)
        return leak <= 1e-10 * anorm and np.linalg.norm(x_p) <= s * (1.0 + 1e-12)

    # psi(t_lo) >= 0 >= psi(t_hi) from the standard multiplier bounds
    t_lo = lam1 - anorm / s
    t_hi = min(lam1, 0.0) + anorm * s
    lo = probe(t_lo)
    step = max(1.0, abs(t_lo), abs(t_hi))
    while lo.psi < 0:
        t_lo -= step
        step *= 2.0
        lo = probe(t_lo)
        if iterations > max_iter:
            raise TrsConvergenceError("could not bracket psi from below", bracket=(t_lo, t_hi))
    hi = probe(t_hi)
    step = max(1.0, abs(t_lo), abs(t_hi))
    while hi.psi > 0:
        t_hi += step
        step *= 2.0
        hi = probe(t_hi)
        if iterations > max_iter:
            raise TrsConvergenceError("could not bracket psi from above", bracket=(t_lo, t_hi))
    if hi.psi == -math.inf and is_hard_case():
        return hard_case_solution(iterations, t_hi)

    def converged(p: _Probe) -> bool:
        return abs(p.psi) <= tol_root

    best = min((lo, hi), key=lambda p: abs(p.psi))
    recent = [lo, hi]
    width_history = [hi.t - lo.t]
    while not converged(best):
        if iterations >= max_iter:
            raise TrsConvergenceError(
                f"psi root not found in {max_iter} eigen-solves (|psi|={abs(best.psi):.3e})",
                best=best.x if best.y0 > y0_floor else None, bracket=(lo.t, hi.t),
            )
        width = hi.t - lo.t
        if width <= 4 * np.finfo(float).eps * max(1.0, abs(lo.t), abs(hi.t)):
            # bracket collapsed onto a jump of y0: the hard case in floating point
            if hi.psi == -math.inf or not hard_checked and is_hard_case():
                return hard_case_solution(iterations, lo.t)
            break
        cand = _inverse_interpolation(recent, lo, hi)
        bisect = (
            cand is None
            or not (lo.t < cand < hi.t)
            or (len(width_history) >= 3 and width > 0.5 * width_history[-3])
        )
        if bisect:
            cand = 0.5 * (lo.t + hi.t)
        p = probe(cand)
        if p.psi == -math.inf and not hard_checked and is_hard_case():
            return hard_case_solution(iterations, p.t)
        if p.psi >= 0:
            lo = p
        else:
            hi = p
        recent = (recent + [p])[-3:]
        width_history.append(hi.t - lo.t)
        if abs(p.psi) < abs(best.psi):
            best = p

    x = best.x
    xn = np.linalg.norm(x)
    if xn > s:
        x = x * (s / xn)
    return finish(x, -best.theta, True, False, iterations, best.t)


def _inverse_interpolation(recent, lo, hi) -> Optional[float]:
    """Estimate the root of psi as a function of t from up to three samples.

    Fits t as a polynomial in psi (inverse interpolation); falls back to
    the secant through the bracket ends.
    """
    pts = [p for p in recent if math.isfinite(p.psi)]
    ps = [p.psi for p in pts]
    if len(pts) == 3 and len(set(ps)) == 3:
        (t0, f0), (t1, f1), (t2, f2) = [(p.t, p.psi) for p in pts]
        return (
            t0 * f1 * f2 / ((f0 - f1) * (f0 - f2))
            + t1 * f0 * f2 / ((f1 - f0) * (f1 - f2))
            + t2 * f0 * f1 / ((f2 - f0) * (f2 - f1))
        )
    if math.isfinite(lo.psi) and math.isfinite(hi.psi) and lo.psi != hi.psi:
        return lo.t + lo.psi * (hi.t - lo.t) / (lo.psi - hi.psi)
    return None


def solve_trs_oracle(prob: TrsProblem) -> TrsSolution:
    """Reference solution from a dense eigendecomposition of A.

    Solves the secular equation ``1/|x(lam)| = 1/s`` on
    ``(max(0, -lambda_min), inf)`` with ``x(lam) = (A + lam I)^{-1} a`` written
    in the eigenbasis, and treats the hard case explicitly.
    """
    if prob.dim > 500:
        raise ValueError("oracle is dense; dim must not exceed 500")
    M = prob.A.materialize()
    vals, Q = np.linalg.eigh(M)
    alpha = Q.T @ prob.a
    s = float(prob.s)
    lam1 = float(vals[0])
    anorm = float(np.linalg.norm(alpha))

    def build(lam, x, on_boundary, hard):
        return TrsSolution(x=x, lam=lam, objective=prob.objective(x), on_boundary=on_boundary,
                           hard_case=hard, iterations=0, eig_mv_count=0, lambda_min_A=lam1)

    if lam1 > 0:
        x0 = Q @ (alpha / vals)
        if np.linalg.norm(x0) <= s:
            return build(0.0, x0, False, False)

    if lam1 <= 0:
        scale = max(1.0, float(np.max(np.abs(vals))))
        cluster = vals - lam1 <= 1e-10 * scale
        rest = ~cluster
        x_p = Q[:, rest] @ (alpha[rest] / (vals[rest] - lam1))
        if np.linalg.norm(alpha[cluster]) <= 1e-10 * max(anorm, 1e-300) and np.linalg.norm(x_p) <= s:
            q1 = normalize_sign(Q[:, 0])
            tau = math.sqrt(max(s**2 - x_p @ x_p, 0.0))
            return build(-lam1, x_p + tau * q1, True, True)

    def secular(lam):
        d = vals + lam
        if np.any((d <= 0) & (alpha != 0)):
            return 1.0 / s
        with np.errstate(divide="ignore"):
            norm = math.sqrt(float(np.sum(np.where(alpha != 0, (alpha / d) ** 2, 0.0))))
        return 1.0 / s - (1.0 / norm if norm > 0 else math.inf)

    lam_lo = max(0.0, -lam1)
    lam_hi = max(anorm / s - lam1, lam_lo)
    while secular(lam_hi) > 0:
        lam_hi = 2.0 * lam_hi + 1.0
    lam = optimize.brentq(secular, lam_lo, lam_hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    x = Q @ (alpha / (vals + lam))
    xn = np.linalg.norm(x)
    if xn > s:
        x *= s / xn
    return build(float(lam), x, True, False)


def random_instance(rng: np.random.Generator, dim: int, indefinite: bool = True,
                    hard_case: bool = False) -> TrsProblem:
    """Random dense instance; ``hard_case`` makes ``a`` orthogonal to the bottom eigenvector
    of an indefinite A and puts the radius beyond the range-space solution."""
    Q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    vals = np.sort(rng.standard_normal(dim))
    if not indefinite and not hard_case:
        vals = np.abs(vals) + 0.1
    if hard_case:
        if dim < 2:
            raise ValueError("the hard case needs dim >= 2")
        vals[0] = min(vals[0], -abs(vals[0]) - 0.1)
        vals[1:] = np.maximum(vals[1:], vals[0] + 0.5)
        c = rng.standard_normal(dim - 1)
        a = Q[:, 1:] @ c
        x_p = c / (vals[1:] - vals[0])
        s = float(np.linalg.norm(x_p) * rng.uniform(1.2, 3.0))
    else:
        a = rng.standard_normal(dim)
        s = float(rng.uniform(0.1, 3.0))
    A = (Q * vals) @ Q.T
    return TrsProblem(SymOperator.from_matrix(A), a, s)

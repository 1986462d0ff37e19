"""Ivanov regularization: minimize the residual over ``|x|_n^2 <= rho`` and pick rho
by the discrepancy principle.

The inner loop at fixed rho minimizes successive quadratic Taylor models over
the ball, each one a (possibly indefinite) trust-region subproblem.  The outer
loop moves rho by Newton's method on ``phi(rho) = r(x_rho) - r_d``.

Multiplier convention: ``lambda_rho`` is the multiplier in
``r'(x) + lambda_rho <x, .>_n = 0``, so ``lambda_rho = -<r'(x), x>_n / rho`` on
the boundary and the shifted Hessian is ``r''(x) + lambda_rho I``.  With this
normalization ``phi'(rho) = -lambda_rho / 2``.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, OuterConvergenceError, StagnationError
from .linalg import DENSE_THRESHOLD, WeightedVector, smallest_eigenpair
from .model import Objective, ResidualFunctional, build_trs, euclidean_hessian
from .trs import solve_trs


@dataclass(frozen=True)
class Tolerances:
    """Noise level, discrepancy factor and the three inexactness tolerances."""

    delta: float
    tau: float = 2.0
    eta: float = 0.0
    eta_lower: float = 0.0
    eta_upper: float = 0.0

    def __post_init__(self):
        if not self.delta > 0:
            raise ConfigError(f"noise level must be positive, got {self.delta}")
        if not self.tau > 1:
            raise ConfigError(f"tau must exceed 1, got {self.tau}")
        if self.eta < 0:
            raise ConfigError(f"eta must be nonnegative, got {self.eta}")
        if not self.eta_lower < (self.tau - 1) * self.delta + self.eta_upper:
            raise ConfigError("need eta_lower < (tau - 1) * delta + eta_upper")
        if not self.delta + self.eta_lower - self.eta > 0:
            raise ConfigError("need delta + eta_lower - eta > 0")

    @property
    def upper(self) -> float:
        return self.tau * self.delta + self.eta_upper

    @property
    def lower(self) -> float:
        return self.delta + self.eta_lower

    @property
    def target(self) -> float:
        """Midpoint ``r_d`` of the discrepancy interval (Newton target)."""
        return 0.5 * ((self.tau + 1) * self.delta + self.eta_upper + self.eta_lower)


@dataclass
class SolverOptions:
    max_inner: int = 500
    max_outer: int = 100
    eps_step: float = 1e-9
    eps_kkt: float = 1e-8
    patience: int = 8
    lambda_floor: float = 1e-12
    max_backtracks: int = 30
    dense_threshold: int = DENSE_THRESHOLD
    trs_tol_eig: float = 1e-12
    track_min_eig: bool = True
    trs_debug: bool = False
    # proximal safeguard: steps whose actual/predicted decrease falls below accept_ratio are
    # rejected and the model gains prox/2 |x - x_k|^2; prox shrinks again after good steps
    accept_ratio: float = 0.1
    good_ratio: float = 0.75
    prox_increase: float = 4.0
    prox_decrease: float = 0.5
    max_rejections: int = 25


CSV_COLUMNS = ("l", "k", "rho", "residual", "error", "lambda_rho", "min_eig",
               "n_trs", "n_eig_mv", "wall_ms")


@dataclass(frozen=True)
class ExperimentRecord:
    """One inner iteration: state after solving the k-th model problem at radius rho_l."""

    l: int
    k: int
    rho: float
    residual: float
    error_to_truth: Optional[float]
    lambda_rho: float
    min_eig_lagrangian: float
    n_trs_solves: int
    n_eig_mv: int
    wall_time_ms: float
    nonconvex: bool = False
    trs_trace: Optional[list] = field(default=None, compare=False, repr=False)

    def row(self) -> tuple:
        return (self.l, self.k, self.rho, self.residual, self.error_to_truth, self.lambda_rho,
                self.min_eig_lagrangian, self.n_trs_solves, self.n_eig_mv, self.wall_time_ms)


@dataclass
class InnerState:
    x_k: WeightedVector
    lambda_k: float
    residual: float
    k: int
    converged: bool
    kkt: float = math.nan
    step: float = math.nan
    eta_estimate: float = math.nan
    n_trs: int = 0
    n_eig_mv: int = 0
    n_nonconvex: int = 0


@dataclass
class OuterState:
    rho_l: float
    x_hat: WeightedVector
    lambda_rho: float
    residual: float
    l: int
    history: list = field(default_factory=list)
    radii: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    multipliers: list = field(default_factory=list)
    min_eigs: list = field(default_factory=list)
    n_trs: int = 0
    n_nonconvex: int = 0
    backtracks: int = 0
    termination: str = ""


@dataclass(frozen=True)
class PosdefCheck:
    lambda_rho: float
    min_eig: float
    on_boundary: bool

    def __iter__(self):
        return iter((self.lambda_rho, self.min_eig))


def _weighted(rf: Objective, x) -> WeightedVector:
    if isinstance(x, WeightedVector):
        return x
    return WeightedVector(np.asarray(x, dtype=float), rf.weights)


def kkt_residual(rf: Objective, x, lam: float, rho: float) -> float:
    """``|r'(x) + lam x|_n + |lam (|x|_n^2 - rho)|`` for the constrained problem."""
    x = _weighted(rf, x)
    g = WeightedVector(rf.gradient(x.coeffs), rf.weights)
    return (g + lam * x).norm() + abs(lam * (x.norm_sq() - rho))


def closed_form_multiplier(rf: Objective, x, rho: float) -> float:
    x = _weighted(rf, x)
    g = WeightedVector(rf.gradient(x.coeffs), rf.weights)
    return -g.inner(x) / rho


def shifted_hessian_min_eig(rf: Objective, x, lam: float, dense_threshold: int = DENSE_THRESHOLD) -> float:
    H = euclidean_hessian(rf, np.asarray(_weighted(rf, x).coeffs))
    return smallest_eigenpair(H, dense_threshold=dense_threshold).value + lam


def check_posdef(rf: Objective, x, rho: float, boundary_tol: float = 1e-6,
                 dense_threshold: int = DENSE_THRESHOLD) -> PosdefCheck:
    """Closed-form multiplier and smallest eigenvalue of ``r''(x) + lambda_rho I``.

    For points off the boundary the multiplier is reported as 0.
    """
    x = _weighted(rf, x)
    on_boundary = abs(x.norm_sq() - rho) <= boundary_tol * max(1.0, rho)
    lam = closed_form_multiplier(rf, x, rho) if on_boundary else 0.0
    return PosdefCheck(lam, shifted_hessian_min_eig(rf, x, lam, dense_threshold), on_boundary)


def inner_solve(
    rf: Objective,
    rho: float,
    x0,
    opts: Optional[SolverOptions] = None,
    on_iterate: Optional[Callable[[int, WeightedVector, float, float, object], None]] = None,
) -> InnerState:
    """Sequential quadratic models at fixed radius, warm-started at ``x0``.

    Each step minimizes the second-order Taylor model of ``r`` over the ball.
    Far from a solution that model can be badly wrong along directions of
    negative curvature, so a step is only taken if ``r`` drops by at least
    ``accept_ratio`` times the predicted decrease; otherwise the next model
    gets a proximal term ``prox/2 |x - x_k|_n^2``.  Accepted good steps shrink
    ``prox`` back to zero, leaving the plain iteration (and its local rate)
    near a solution.

    Stops once the step ``|x_{k+1} - x_k|_n <= eps_step (1 + |x_k|_n)`` and the
    KKT residual is at most ``eps_kkt``; otherwise returns the last iterate
    after ``max_inner`` steps with ``converged = False``.  A KKT point reached
    with ``prox > 0`` is confirmed by one unshifted step; if that step is
    rejected the point is returned as converged (it is then a constrained
    stationary point where ``r'' + lambda`` is indefinite).
    """
    opts = opts or SolverOptions()
    if not rho > 0:
        raise ValueError(f"radius must be positive, got {rho}")
    x = _weighted(rf, x0)
    if x.norm_sq() > rho * (1 + 1e-10):
        raise ValueError(f"starting point violates |x|^2 <= rho ({x.norm_sq():.6g} > {rho:.6g})")

    state = InnerState(x, 0.0, rf.value(x.coeffs), 0, False)
    residuals = [state.residual]
    prox, rejections, retry_unshifted = 0.0, 0, False
    for k in range(1, opts.max_inner + 1):
        trs, mapping, model = build_trs(rf, x.coeffs, rho, prox=prox)
        sol = solve_trs(trs, tol_eig=opts.trs_tol_eig, dense_threshold=opts.dense_threshold,
                        debug=opts.trs_debug)
        state.n_trs += 1
        state.n_eig_mv += sol.eig_mv_count
        state.n_nonconvex += int(sol.indefinite)
        state.k = k

        x_new = mapping.to_weighted(sol.x)
        residual = rf.value(x_new.coeffs)
        predicted = model.constant - model(x_new.coeffs)
        actual = state.residual - residual
        slack = 64 * np.finfo(float).eps * max(state.residual, np.finfo(float).tiny)
        if actual < opts.accept_ratio * predicted - slack:
            if retry_unshifted:
                # the unshifted model steps away from a KKT point the shifted one accepts
                state.converged = True
                return state
            rejections += 1
            if rejections > opts.max_rejections:
                raise StagnationError(
                    f"{rejections} consecutive model steps rejected at rho={rho:.6g}",
                    state=state, rho=rho,
                )
            curvature = 2.0 * sol.lambda_min_A - prox
            prox = opts.prox_increase * prox if prox > 0 else max(abs(curvature), 1e-8)
            continue
        rejections = 0
        used_prox, retry_unshifted = prox, False
        if prox > 0 and actual >= opts.good_ratio * predicted:
            prox = opts.prox_decrease * prox
            if prox < 1e-6 * max(abs(2.0 * sol.lambda_min_A), 1.0):
                prox = 0.0
        elif prox > 0 and actual < 0.25 * predicted:
            prox = 2.0 * prox

        lam = mapping.multiplier(sol.lam)
        step = (x_new - x).norm()
        kkt = kkt_residual(rf, x_new, lam, rho)
        state.x_k, state.lambda_k, state.residual = x_new, lam, residual
        state.kkt, state.step = kkt, step
        state.eta_estimate = max(predicted, 0.0)
        if on_iterate is not None:
            on_iterate(k, x_new, lam, residual, sol)

        residuals.append(residual)
        if step <= opts.eps_step * (1 + x.norm()) and kkt <= opts.eps_kkt:
            if used_prox == 0:
                state.converged = True
                return state
            prox, retry_unshifted = 0.0, True
        x = x_new
        window = residuals[-(opts.patience + 1):]
        if (len(window) == opts.patience + 1 and min(window[1:]) >= window[0]
                and kkt > 1e3 * opts.eps_kkt):
            raise StagnationError(
                f"residual did not decrease over {opts.patience} inner iterations at rho={rho:.6g}",
                state=state, rho=rho,
            )
    return state


def newton_radius_update(rho: float, residual: float, target: float, lambda_rho: float) -> float:
    """Newton step on ``phi(rho) = r(x_rho) - target`` using ``phi'(rho) = -lambda_rho / 2``."""
    return rho + 2.0 * (residual - target) / lambda_rho


def initial_radius(rf: Objective, fraction: float = 0.1, iterations: int = 30, seed: int = 0) -> float:
    """``(fraction * |y_delta|_n / |F'(0)|)^2`` with the operator norm from power iteration."""
    if not isinstance(rf, ResidualFunctional):
        raise ConfigError("an explicit initial radius is required for this objective")
    p = rf.problem
    zero = np.zeros(p.dim_in)
    h = np.random.default_rng(seed).standard_normal(p.dim_in)
    h = _weighted(rf, h)
    h = h * (1.0 / h.norm())
    sigma_sq = 0.0
    for _ in range(iterations):
        g = WeightedVector(p.apply_jacobian_adjoint(zero, p.apply_jacobian(zero, h.coeffs)), rf.weights)
        sigma_sq = g.inner(h)
        nrm = g.norm()
        if nrm == 0:
            break
        h = g * (1.0 / nrm)
    lip = math.sqrt(max(sigma_sq, 0.0))
    y_norm = WeightedVector(rf.data, p.weights_out).norm()
    if lip == 0 or y_norm == 0:
        return 1.0
    return (fraction * y_norm / lip) ** 2


def _secant_radius(rho_a: float, res_a: float, rho_b: float, res_b: float, target: float) -> float:
    """Secant estimate of where the residual crosses ``target`` between two radii, kept off the ends."""
    frac = (res_a - target) / (res_a - res_b) if res_a != res_b else 0.5
    return rho_a + min(max(frac, 0.1), 0.9) * (rho_b - rho_a)


def outer_solve(
    rf: Objective,
    tol: Tolerances,
    rho1: Optional[float] = None,
    opts: Optional[SolverOptions] = None,
    x_true=None,
    on_record: Optional[Callable[[ExperimentRecord], None]] = None,
) -> OuterState:
    """Discrepancy-principle radius selection with warm-started inner solves.

    Runs until ``r(x_hat) <= tau * delta + eta_upper``.  Each accepted inner
    solution moves the radius by a Newton step toward the interval midpoint;
    a vanishing multiplier or a non-increasing Newton step doubles rho instead.
    """
    opts = opts or SolverOptions()
    if rho1 is None:
        rho1 = initial_radius(rf)
    if not rho1 > 0:
        raise ConfigError(f"initial radius must be positive, got {rho1}")
    x_true_w = None if x_true is None else _weighted(rf, x_true)
    start = time.perf_counter()

    x_hat = WeightedVector.zeros(rf.weights)
    state = OuterState(rho_l=rho1, x_hat=x_hat, lambda_rho=0.0, residual=rf.value(x_hat.coeffs), l=0)
    if state.residual <= tol.upper:
        state.termination = "discrepancy satisfied at x = 0"
        return state

    n_trs = n_mv = 0
    rho_prev, rho = 0.0, rho1
    # smallest radius seen whose solution fell below the interval: (rho, x, residual)
    below: Optional[tuple[float, WeightedVector, float]] = None
    for l in range(1, opts.max_outer + 1):
        inner, pending = None, []
        for _ in range(opts.max_backtracks + 1):
            pending = []

            def record(k, x, lam, residual, sol, l=l, rho=rho, pending=pending):
                nonlocal n_trs, n_mv
                n_trs += 1
                n_mv += sol.eig_mv_count
                err = None
                if x_true_w is not None:
                    err = (x - x_true_w).norm() / x_true_w.norm()
                min_eig = (shifted_hessian_min_eig(rf, x, lam, opts.dense_threshold)
                           if opts.track_min_eig else math.nan)
                pending.append(ExperimentRecord(
                    l=l, k=k, rho=rho, residual=residual, error_to_truth=err, lambda_rho=lam,
                    min_eig_lagrangian=min_eig, n_trs_solves=n_trs, n_eig_mv=n_mv,
                    wall_time_ms=1e3 * (time.perf_counter() - start), nonconvex=sol.indefinite,
                    trs_trace=sol.trace,
                ))

            x0 = state.x_hat
            if below is not None and rho < below[0]:
                # the undershooting solution shrunk into the ball often lies on a branch
                # that reaches the interval when the warm start's branch jumps past it
                shrunk = below[1] * math.sqrt(rho / below[0])
                if rf.value(shrunk.coeffs) < state.residual:
                    x0 = shrunk
            try:
                attempt = inner_solve(rf, rho, x0, opts, on_iterate=record)
            except StagnationError:
                attempt = None
            if attempt is not None:
                state.n_trs += attempt.n_trs
                state.n_nonconvex += attempt.n_nonconvex
            else:
                state.n_trs += len(pending)
                state.n_nonconvex += sum(r.nonconvex for r in pending)
            # a larger ball cannot raise the minimal residual
            ok = attempt is not None and attempt.residual <= state.residual * (1 + 1e-12)
            if ok and attempt.residual > tol.lower:
                inner = attempt
                break
            state.backtracks += 1
            if ok:
                below = (rho, attempt.x_k, attempt.residual)
                rho = _secant_radius(rho_prev, state.residual, rho, attempt.residual, tol.target)
            else:
                rho = rho_prev + 0.5 * (rho - rho_prev)
        if inner is None:
            state.termination = "inner solve failed"
            raise OuterConvergenceError(
                f"inner iteration failed at every trial radius after rho={rho_prev:.6g}", state=state,
            )
        for rec in pending:
            state.history.append(rec)
            if on_record is not None:
                on_record(rec)

        check = check_posdef(rf, inner.x_k, rho, dense_threshold=opts.dense_threshold)
        state.rho_l, state.x_hat, state.lambda_rho = rho, inner.x_k, inner.lambda_k
        state.residual, state.l = inner.residual, l
        state.radii.append(rho)
        state.residuals.append(inner.residual)
        state.multipliers.append(inner.lambda_k)
        state.min_eigs.append(check.min_eig)

        if inner.residual <= tol.upper:
            state.termination = "discrepancy satisfied"
            return state
        if inner.lambda_k < opts.lambda_floor:
            rho_next = 2.0 * rho
        else:
            rho_next = newton_radius_update(rho, inner.residual, tol.target, inner.lambda_k)
            if not rho_next > rho:
                rho_next = 2.0 * rho
        if below is not None and rho_next >= below[0]:
            rho_next = _secant_radius(rho, inner.residual, below[0], below[2], tol.target)
        rho_prev, rho = rho, rho_next

    state.termination = "max_outer reached"
    raise OuterConvergenceError(
        f"discrepancy principle not met after {opts.max_outer} radius updates "
        f"(residual {state.residual:.6g} > {tol.upper:.6g})",
        state=state,
    )

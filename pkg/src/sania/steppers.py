"""Update rules: every stepper is a pure map from a StepContext to the next iterate.

All rules solve the same proximal problem (minimize a B-weighted distance to
the current point subject to a local model of the batch loss dropping to its
known optimum); they differ in the model order, the metric B, and whether the
slack is pinned. Polyak-type rules never take a learning rate. When the loss
is already at its target they take the zero step; a target sitting above the
current loss (a misconfigured estimate) also clamps to zero, flagged, rather
than producing an ascent step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import linsolve
from .errors import CgLimitError, DegenerateGradientError, NegativeCurvatureError

DENOM_GUARD = 1e-30
_GAP_NOISE = 4.0 * np.finfo(np.float64).eps


def _gap(loss: float, f_star: float) -> float:
    """Loss gap with sub-noise positives rounded to zero.

    A gap smaller than the floating-point noise of the loss values involved
    carries no information; treating it as an inactive constraint keeps
    converged batches from tripping the degenerate-gradient guard (whose job is
    the opposite case: a macroscopic gap with a vanished gradient).
    """
    gap = loss - f_star
    if 0.0 < gap <= _GAP_NOISE * (1.0 + abs(loss) + abs(f_star)):
        return 0.0
    return gap


@dataclass
class StepContext:
    """One iteration's inputs.

    ``m`` is the search direction source (gradient or momentum), ``B`` the
    diagonal of the metric (None = identity). Second-order rules read the
    curvature through ``hvp`` (matrix-free) or ``hessian`` (dense, small d).
    ``step_size`` is only consulted by the learning-rate baselines.
    """

    w: np.ndarray
    loss: float
    f_star: float = 0.0
    m: np.ndarray | None = None
    B: np.ndarray | None = None
    step_size: float | None = None
    hvp: Callable[[np.ndarray], np.ndarray] | None = None
    hessian: np.ndarray | None = None


@dataclass
class StepResult:
    w_next: np.ndarray
    lam: float  # effective step multiplier
    constraint_residual: float | None = None
    cg_iterations: int | None = None
    kappa: float | None = None
    negative_curvature: bool = False
    clamped: bool = False  # loss fell below its target (or a degenerate branch skipped the step)


def _preconditioned(m: np.ndarray, B: np.ndarray | None) -> np.ndarray:
    """B^{-1} m for diagonal B. Zero diagonal entries are only legal against zero m entries."""
    if B is None:
        return m.copy()
    if np.any(B < 0.0):
        raise ValueError("preconditioner diagonal must be nonnegative")
    if np.any((B == 0.0) & (m != 0.0)):
        raise ValueError("singular preconditioner diagonal against a nonzero direction")
    out = np.zeros_like(m)
    np.divide(m, B, out=out, where=B > 0.0)
    return out


def sgd_step(ctx: StepContext) -> StepResult:
    """w - step_size * m."""
    if ctx.step_size is None:
        raise ValueError("sgd_step requires step_size")
    if ctx.step_size <= 0:
        raise ValueError("step_size must be > 0")
    return StepResult(w_next=ctx.w - ctx.step_size * ctx.m, lam=ctx.step_size)


def preconditioned_sgd_step(ctx: StepContext) -> StepResult:
    """w - step_size * B^{-1} m. Instantiates the AdaGrad/Adam/Adadelta/Hutchinson baselines."""
    if ctx.step_size is None:
        raise ValueError("preconditioned_sgd_step requires step_size")
    if ctx.step_size <= 0:
        raise ValueError("step_size must be > 0")
    direction = _preconditioned(ctx.m, ctx.B)
    return StepResult(w_next=ctx.w - ctx.step_size * direction, lam=ctx.step_size)


def _linear_polyak(ctx: StepContext, B: np.ndarray | None) -> StepResult:
    gap = _gap(ctx.loss, ctx.f_star)
    if gap <= 0.0:
        return StepResult(w_next=ctx.w.copy(), lam=0.0, constraint_residual=0.0,
                          clamped=gap < 0.0)
    direction = _preconditioned(ctx.m, B)
    quad = float(ctx.m @ direction)  # ||m||^2 in the B^{-1} norm
    if quad == 0.0:
        if B is None:
            # m = 0 with positive gap: inactive constraint, stay put
            return StepResult(w_next=ctx.w.copy(), lam=0.0, constraint_residual=0.0)
        raise DegenerateGradientError("zero preconditioned gradient norm with loss above target")
    if quad < DENOM_GUARD:
        raise DegenerateGradientError("preconditioned gradient norm underflow")
    lam = gap / quad
    w_next = ctx.w - lam * direction
    residual = abs(gap - lam * quad)
    return StepResult(w_next=w_next, lam=lam, constraint_residual=residual)


def sps_step(ctx: StepContext) -> StepResult:
    """Polyak step (loss - f*) / ||m||^2 along m; zero step when the constraint is inactive."""
    if ctx.m is not None and not np.any(ctx.m):
        return StepResult(w_next=ctx.w.copy(), lam=0.0, constraint_residual=0.0,
                          clamped=ctx.loss < ctx.f_star)
    return _linear_polyak(ctx, None)


def psps_step(ctx: StepContext) -> StepResult:
    """Polyak step in the B-weighted norm: lam = (loss - f*) / ||m||^2_{B^{-1}}, step B^{-1} m."""
    return _linear_polyak(ctx, ctx.B)


def sania_lambda(upsilon: float) -> float:
    """Damped multiplier 1 - sqrt(1 - u) for u <= 1, else 1. Never exceeds 1."""
    if upsilon < 0.0:
        raise ValueError("upsilon must be >= 0")
    if upsilon <= 1.0:
        return 1.0 - np.sqrt(1.0 - upsilon)
    return 1.0


def sania_qn_step(ctx: StepContext) -> StepResult:
    """Quadratic-model Polyak step in the metric B (curvature model D = B).

    upsilon = 2 (loss - f*) / ||m||^2_{B^{-1}}; the step is -lambda B^{-1} m with
    lambda = 1 - sqrt(1 - upsilon) clamped at 1. For upsilon <= 1 the quadratic
    constraint holds with equality; the residual diagnostic reports the gap.
    """
    gap = _gap(ctx.loss, ctx.f_star)
    if gap <= 0.0:
        return StepResult(w_next=ctx.w.copy(), lam=0.0, constraint_residual=0.0,
                          clamped=gap < 0.0)
    direction = _preconditioned(ctx.m, ctx.B)
    quad = float(ctx.m @ direction)
    if quad < DENOM_GUARD:
        raise DegenerateGradientError("zero preconditioned gradient norm with loss above target")
    upsilon = 2.0 * gap / quad
    lam = sania_lambda(upsilon)
    w_next = ctx.w - lam * direction
    # loss + m^T delta + 1/2 delta^T B delta - f*, with delta = -lam B^{-1} m
    residual = abs(gap - lam * quad + 0.5 * lam * lam * quad)
    return StepResult(w_next=w_next, lam=lam, constraint_residual=residual)


def _shifted_solver(ctx: StepContext, eps_cg: float):
    """Return solve(a, b) -> (a H + b I)^{-1} g plus a PD check, dense or matrix-free."""
    g = ctx.m
    if ctx.hessian is not None:
        U, S = linsolve.eig_sym(ctx.hessian)
        if S[0] <= 0.0:
            raise NegativeCurvatureError(
                "Hessian is not positive definite; use the non-convex stepper"
            )

        def solve(a: float, b: float) -> np.ndarray:
            return linsolve.solve_shifted_diag(S, U, g, a, b)

        return solve, None
    if ctx.hvp is None:
        raise ValueError("second-order step needs a dense Hessian or an hvp oracle")

    iteration_total = [0]

    def solve(a: float, b: float) -> np.ndarray:
        out = linsolve.pcg(
            lambda h: a * ctx.hvp(h) + b * h, g, tol=eps_cg, max_iter=4 * len(g)
        )
        if out.status == linsolve.NEGATIVE_CURVATURE:
            raise NegativeCurvatureError(
                "Hessian is not positive definite; use the non-convex stepper",
                direction=out.direction, iterate=out.iterate,
            )
        if out.status == linsolve.MAX_ITER:
            raise CgLimitError("inner CG hit its iteration cap in the shifted solve")
        iteration_total[0] += out.iterations
        return out.x

    return solve, iteration_total


def grad_reg_newton_step(ctx: StepContext, L2: float, eps_cg: float = 1e-12) -> StepResult:
    """Newton step regularized by sqrt(L2 ||g|| / 3) on the identity."""
    if L2 <= 0:
        raise ValueError("L2 must be > 0")
    g = ctx.m
    gnorm = float(np.linalg.norm(g))
    if gnorm == 0.0:
        return StepResult(w_next=ctx.w.copy(), lam=0.0)
    reg = np.sqrt(L2 * gnorm / 3.0)
    if ctx.hessian is not None:
        step = np.linalg.solve(ctx.hessian + reg * np.eye(len(g)), g)
        iters = None
    else:
        if ctx.hvp is None:
            raise ValueError("grad_reg_newton_step needs a dense Hessian or an hvp oracle")
        out = linsolve.pcg(lambda h: ctx.hvp(h) + reg * h, g, tol=eps_cg, max_iter=4 * len(g))
        if out.status == linsolve.NEGATIVE_CURVATURE:
            raise NegativeCurvatureError("regularized Hessian is not positive definite",
                                         direction=out.direction, iterate=out.iterate)
        if out.status == linsolve.MAX_ITER:
            raise CgLimitError("CG hit its iteration cap in the regularized Newton solve")
        step, iters = out.x, out.iterations
    return StepResult(w_next=ctx.w - step, lam=1.0, cg_iterations=iters)


def cubic_polyak_step(ctx: StepContext, tol: float = 1e-10, eps_cg: float = 1e-12) -> StepResult:
    """Parameter-free damped Newton step enforcing the quadratic Polyak constraint.

    With gap = loss - f* and H positive definite: when the gap exceeds half the
    squared H^{-1}-norm of the gradient the constraint cannot bind and the step
    is the pure Newton step (kappa = 0); otherwise kappa in [0,1] is found by
    bisection and the step is -(1-kappa) [kappa I + (1-kappa) H]^{-1} g.
    """
    gap = _gap(ctx.loss, ctx.f_star)
    if gap <= 0.0:
        return StepResult(w_next=ctx.w.copy(), lam=0.0, clamped=gap < 0.0)
    g = ctx.m
    if not np.any(g):
        return StepResult(w_next=ctx.w.copy(), lam=0.0)
    solve, _ = _shifted_solver(ctx, eps_cg)
    newton_dir = solve(1.0, 0.0 if ctx.hessian is not None else linsolve.SHIFT_FLOOR)
    gH2 = float(g @ newton_dir)  # ||g||^2 in the H^{-1} norm
    if gap > 0.5 * gH2:
        return StepResult(w_next=ctx.w - newton_dir, lam=1.0, kappa=0.0)
    search = linsolve.cubic_kappa_search(g, solve, gap, tol=tol)
    kappa = search.kappa
    u = solve(1.0 - kappa, max(kappa, linsolve.SHIFT_FLOOR))
    lam = 1.0 - kappa
    return StepResult(w_next=ctx.w - lam * u, lam=lam, kappa=kappa,
                      constraint_residual=search.residual)


def sania_pcg_convex_step(
    ctx: StepContext,
    M_inv=None,
    eps_cg: float = 1e-10,
    max_iter: int | None = None,
) -> StepResult:
    """Newton-type Polyak step with the direction s ~ H^{-1} g from preconditioned CG.

    upsilon = 2 (loss - f*) / (g^T s) reuses g^T s as the squared local-Hessian
    norm of the gradient, so no extra solve is needed for the damping.
    """
    gap = _gap(ctx.loss, ctx.f_star)
    if gap <= 0.0:
        return StepResult(w_next=ctx.w.copy(), lam=0.0, cg_iterations=0, clamped=gap < 0.0)
    if ctx.hvp is None:
        raise ValueError("sania_pcg_convex_step requires an hvp oracle")
    g = ctx.m
    out = linsolve.pcg(ctx.hvp, g, apply_Minv=M_inv, tol=eps_cg, max_iter=max_iter)
    if out.status == linsolve.NEGATIVE_CURVATURE:
        raise NegativeCurvatureError(
            "negative curvature met; this stepper expects a positive definite Hessian",
            direction=out.direction, iterate=out.iterate,
        )
    if out.status == linsolve.MAX_ITER:
        raise CgLimitError(
            f"CG exhausted {out.iterations} iterations (preconditioned residual {out.residual:g})"
        )
    s = out.x
    gs = float(g @ s)
    if gs < DENOM_GUARD:
        raise DegenerateGradientError("g^T s vanished in the convex CG step")
    lam = sania_lambda(2.0 * gap / gs)
    return StepResult(w_next=ctx.w - lam * s, lam=lam, cg_iterations=out.iterations)


def sania_pcg_nonconvex_step(
    ctx: StepContext,
    M_inv=None,
    eps_cg: float = 1e-10,
    gamma_mix: float = 0.5,
    eta_cap: float = 10.0,
    max_iter: int | None = None,
) -> StepResult:
    """CG-based Polyak step that survives indefinite Hessians.

    Runs the same preconditioned CG; if a direction of non-positive curvature
    appears at iteration j the step direction becomes
    gamma * x_j + (1-gamma) * sign(g^T p_j) * p_j with multiplier
    min(loss / g^T s, eta); otherwise the tolerance exit behaves exactly like
    the convex stepper (the rank-1 secant metric built from s = H^{-1} g and
    y = g has pseudoinverse s s^T / s^T y, so ||g||^2 in that metric is g^T s).
    """
    if not 0.0 <= gamma_mix <= 1.0:
        raise ValueError("gamma_mix must lie in [0,1]")
    if eta_cap <= 0:
        raise ValueError("eta_cap must be > 0")
    gap = _gap(ctx.loss, ctx.f_star)
    if gap <= 0.0:
        return StepResult(w_next=ctx.w.copy(), lam=0.0, cg_iterations=0, clamped=gap < 0.0)
    if ctx.hvp is None:
        raise ValueError("sania_pcg_nonconvex_step requires an hvp oracle")
    g = ctx.m
    out = linsolve.pcg(ctx.hvp, g, apply_Minv=M_inv, tol=eps_cg, max_iter=max_iter)
    if out.status == linsolve.NEGATIVE_CURVATURE:
        s = gamma_mix * out.iterate + (1.0 - gamma_mix) * np.sign(float(g @ out.direction)) * out.direction
        gs = float(g @ s)
        if abs(gs) < DENOM_GUARD:
            return StepResult(w_next=ctx.w.copy(), lam=0.0, cg_iterations=out.iterations,
                              negative_curvature=True, clamped=True)
        lam = min(ctx.loss / gs, eta_cap)
        return StepResult(w_next=ctx.w - lam * s, lam=lam, cg_iterations=out.iterations,
                          negative_curvature=True)
    if out.status == linsolve.MAX_ITER:
        raise CgLimitError(
            f"CG exhausted {out.iterations} iterations (preconditioned residual {out.residual:g})"
        )
    s = out.x
    gs = float(g @ s)
    if gs < DENOM_GUARD:
        raise DegenerateGradientError("g^T s vanished in the non-convex CG step")
    lam = sania_lambda(2.0 * gap / gs)
    return StepResult(w_next=ctx.w - lam * s, lam=lam, cg_iterations=out.iterations)


class Adadelta:
    """Two-EMA baseline direction (learning-rate comparison set only).

    Keeps EMAs of squared gradients and squared updates; the produced direction
    is sqrt((u + eps) / (v + eps)) * g, consumed by preconditioned_sgd_step with
    an identity metric.
    """

    def __init__(self, rho: float = 0.9, eps: float = 1e-6):
        self.rho = rho
        self.eps = eps
        self.v: np.ndarray | None = None
        self.u: np.ndarray | None = None

    def update(self, g: np.ndarray):
        if self.v is None:
            self.v = np.zeros_like(g)
            self.u = np.zeros_like(g)
        self.v = self.rho * self.v + (1.0 - self.rho) * g * g
        delta = np.sqrt((self.u + self.eps) / (self.v + self.eps)) * g
        self.u = self.rho * self.u + (1.0 - self.rho) * delta * delta
        return delta, np.ones_like(g)

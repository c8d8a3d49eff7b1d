"""Linear-algebra kernels for the second-order steppers.

Pure routines: preconditioned conjugate gradient over a matrix-free operator,
the scalar bisection behind the cubic Polyak step, and small-d symmetric
eigendecomposition with cheap shifted re-solves.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import BracketError

CONVERGED = "converged"
MAX_ITER = "max-iter"
NEGATIVE_CURVATURE = "negative-curvature"

SHIFT_FLOOR = 1e-14


@dataclass
class PcgOutcome:
    x: np.ndarray
    iterations: int
    residual: float  # final ||b - A x|| in the M^{-1} norm
    status: str
    direction: np.ndarray | None = None  # p_j with p^T A p <= 0
    iterate: np.ndarray | None = None  # x_j at detection time


@dataclass
class CubicSearchResult:
    kappa: float
    residual: float  # |C(kappa)|
    evaluations: int
    shift_floored: bool = False


def _apply_minv(apply_Minv, r):
    if apply_Minv is None:
        return r
    if callable(apply_Minv):
        return apply_Minv(r)
    return apply_Minv * r  # diagonal of M^{-1}


def pcg(
    apply_A: Callable[[np.ndarray], np.ndarray],
    b: np.ndarray,
    apply_Minv=None,
    tol: float = 1e-10,
    max_iter: int | None = None,
    relative: bool = True,
) -> PcgOutcome:
    """Preconditioned conjugate gradient for A x = b with A symmetric.

    ``apply_Minv`` is either a callable, a positive diagonal (1-d array), or
    None for the identity. Stops when ||r||_{M^{-1}} drops below ``tol`` (scaled
    by the initial preconditioned residual when ``relative``). A direction with
    p^T A p <= 0 ends the run immediately with the negative-curvature status
    carrying (p, x_j); no exception is raised, statuses cover all outcomes.
    """
    b = np.asarray(b, dtype=np.float64)
    d = b.shape[0]
    if max_iter is None:
        max_iter = d
    x = np.zeros(d)
    r = b.copy()
    z = _apply_minv(apply_Minv, r)
    rz = float(r @ z)
    res0 = np.sqrt(max(rz, 0.0))
    threshold = tol * res0 if relative else tol
    if res0 <= threshold or res0 == 0.0:
        return PcgOutcome(x=x, iterations=0, residual=res0, status=CONVERGED)
    p = z.copy()
    for j in range(max_iter):
        Ap = apply_A(p)
        pAp = float(p @ Ap)
        if pAp <= 0.0:
            return PcgOutcome(
                x=x,
                iterations=j,
                residual=np.sqrt(max(rz, 0.0)),
                status=NEGATIVE_CURVATURE,
                direction=p.copy(),
                iterate=x.copy(),
            )
        alpha = rz / pAp
        x = x + alpha * p
        r = r - alpha * Ap
        z = _apply_minv(apply_Minv, r)
        rz_next = float(r @ z)
        res = np.sqrt(max(rz_next, 0.0))
        if res < threshold:
            return PcgOutcome(x=x, iterations=j + 1, residual=res, status=CONVERGED)
        p = z + (rz_next / rz) * p
        rz = rz_next
    return PcgOutcome(x=x, iterations=max_iter, residual=np.sqrt(max(rz, 0.0)), status=MAX_ITER)


def cubic_kappa_search(
    g: np.ndarray,
    solve_shifted: Callable[[float, float], np.ndarray],
    gap: float,
    tol: float = 1e-10,
    max_evals: int = 200,
) -> CubicSearchResult:
    """Bisection on kappa in [0,1] for the damped-Newton multiplier.

    ``solve_shifted(a, b)`` must return (a H + b I)^{-1} g. The root condition is

        C(k) = gap - (1-k)/2 * g^T u - k(1-k)/2 * ||u||^2,  u = [(1-k)H + kI]^{-1} g,

    with C(0) <= 0 guaranteed by the caller (gap <= ||g||^2_{H^{-1}} / 2) and
    C(1) = gap >= 0, so a sign change exists. The shift b is floored at
    ``SHIFT_FLOOR`` to keep near-singular H solvable; ``shift_floored`` records
    when the floor was active at the returned kappa.
    """
    evaluations = 0
    floored = False

    def C(kappa: float) -> float:
        nonlocal evaluations, floored
        b_shift = max(kappa, SHIFT_FLOOR)
        floored = floored or (b_shift != kappa)
        u = solve_shifted(1.0 - kappa, b_shift)
        evaluations += 1
        gu = float(g @ u)
        return gap - 0.5 * (1.0 - kappa) * gu - 0.5 * kappa * (1.0 - kappa) * float(u @ u)

    lo, hi = 0.0, 1.0
    c_lo = C(lo)
    if abs(c_lo) <= tol:
        return CubicSearchResult(kappa=lo, residual=abs(c_lo), evaluations=evaluations,
                                 shift_floored=floored)
    if c_lo > tol:
        raise BracketError(
            f"no sign change on [0,1]: C(0)={c_lo:g} > 0; "
            "the gap exceeds half the squared Hessian-norm of the gradient"
        )
    # C(1) = gap >= 0 analytically; no solve needed at kappa = 1.
    kappa, c_mid = lo, c_lo
    while evaluations < max_evals:
        kappa = 0.5 * (lo + hi)
        c_mid = C(kappa)
        if abs(c_mid) < tol:
            break
        if c_mid < 0.0:
            lo = kappa
        else:
            hi = kappa
        if hi - lo <= np.finfo(float).eps:
            break
    return CubicSearchResult(kappa=kappa, residual=abs(c_mid), evaluations=evaluations,
                             shift_floored=floored)


def eig_sym(H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric eigendecomposition H = U diag(S) U^T, eigenvalues ascending."""
    H = np.asarray(H, dtype=np.float64)
    if not np.all(np.isfinite(H)):
        raise np.linalg.LinAlgError("non-finite entries in symmetric matrix")
    S, U = np.linalg.eigh(H)
    return U, S


def solve_shifted_diag(S: np.ndarray, U: np.ndarray, g: np.ndarray, a: float, b: float) -> np.ndarray:
    """(a H + b I)^{-1} g from a precomputed eigendecomposition, one matvec pair per call."""
    return U @ ((U.T @ g) / (a * S + b))

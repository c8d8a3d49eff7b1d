"""GLM losses with exact derivative oracles over minibatches.

Both losses have the form mean_i psi(x_i^T w; y_i), so gradients, Hessian-vector
products, Hessian diagonals and (small-d) dense Hessians all reduce to the
per-sample first and second derivatives of psi with respect to the margin.
Batch aggregation is the mean. Objectives are immutable; every evaluation is a
pure function of (w, batch).

Gradient entries whose naive accumulation lands below its own floating-point
noise floor are recomputed with exact summation: square-root-free
preconditioners divide by squares of gradient entries, and a roundoff ghost in
a coordinate whose true sum cancels exactly would otherwise blow the step up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .errors import CapabilityError

DENSE_HESSIAN_MAX_DIM = 2000

_NOISE_FACTOR = 4.0 * np.finfo(np.float64).eps

LOGREG = "logreg"
LOGREG_L2 = "logreg-l2"
NLLSQ = "nllsq"


@dataclass
class BatchEval:
    """One minibatch evaluation: mean loss, mean gradient, optional Hessian diagonal."""

    value: float
    gradient: np.ndarray
    hessian_diag: np.ndarray | None
    batch: np.ndarray


def _rows(X, batch):
    if batch is None:
        return X
    return X[np.asarray(batch, dtype=np.intp)]


def _weighted_column_sums(Xb, Xb_abs, c):
    """X^T c with sub-noise entries recomputed by exact summation.

    An entry is a suspect when |sum| <= 4 m eps * (|X|^T |c|)_j, i.e. it cannot
    be told apart from accumulated roundoff. The noise scale transforms exactly
    like the gradient under column scaling, so the recomputation fires on the
    same coordinates for a scaled problem.
    """
    raw = np.asarray(Xb.T @ c).ravel()
    scale = np.asarray(Xb_abs.T @ np.abs(c)).ravel()
    tol = _NOISE_FACTOR * len(c) * scale
    suspects = np.flatnonzero((np.abs(raw) <= tol) & (scale > 0.0))
    if suspects.size:
        raw = raw.copy()
        if sp.issparse(Xb):
            cols = Xb.tocsc()
            for j in suspects:
                col = cols.getcol(int(j))
                raw[j] = math.fsum(col.data * c[col.indices])
        else:
            for j in suspects:
                raw[j] = math.fsum(Xb[:, j] * c)
    return raw


class GlmObjective:
    """Shared X-algebra; subclasses supply the scalar loss and its margin derivatives."""

    kind: str

    def __init__(self, X, y, dense_cap: int = DENSE_HESSIAN_MAX_DIM):
        self.X = X if sp.issparse(X) else np.asarray(X, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.float64)
        self.n, self.d = X.shape
        self.dense_cap = dense_cap
        self.mu_reg = 0.0

    # per-sample psi(margin, label) and d psi / d margin, d^2 psi / d margin^2
    def _psi(self, t, y):
        raise NotImplementedError

    def _psi_d1(self, t, y):
        raise NotImplementedError

    def _psi_d2(self, t, y):
        raise NotImplementedError

    @property
    def _X_abs(self):
        if not hasattr(self, "_X_abs_cache"):
            self._X_abs_cache = abs(self.X)
        return self._X_abs_cache

    def _margins(self, w, batch):
        Xb = _rows(self.X, batch)
        yb = self.y if batch is None else self.y[np.asarray(batch, dtype=np.intp)]
        return Xb, yb, Xb @ w

    def value(self, w, batch=None) -> float:
        _, yb, t = self._margins(w, batch)
        val = float(np.mean(self._psi(t, yb)))
        if self.mu_reg:
            val += 0.5 * self.mu_reg * float(w @ w)
        return val

    def gradient(self, w, batch=None) -> np.ndarray:
        Xb, yb, t = self._margins(w, batch)
        g = _weighted_column_sums(Xb, _rows(self._X_abs, batch), self._psi_d1(t, yb)) / len(yb)
        if self.mu_reg:
            g = g + self.mu_reg * w
        return g

    def eval(self, w, batch=None, with_hessian_diag: bool = False) -> BatchEval:
        """Value and gradient from one forward pass (plus the Hessian diagonal on request)."""
        Xb, yb, t = self._margins(w, batch)
        m = len(yb)
        val = float(np.mean(self._psi(t, yb)))
        g = _weighted_column_sums(Xb, _rows(self._X_abs, batch), self._psi_d1(t, yb)) / m
        hd = None
        if with_hessian_diag:
            hd = self._hessian_diag_from(Xb, yb, t)
        if self.mu_reg:
            val += 0.5 * self.mu_reg * float(w @ w)
            g = g + self.mu_reg * w
            if hd is not None:
                hd = hd + self.mu_reg
        idx = np.arange(self.n) if batch is None else np.asarray(batch, dtype=np.intp)
        return BatchEval(value=val, gradient=g, hessian_diag=hd, batch=idx)

    def hvp(self, w, batch, h) -> np.ndarray:
        """Hessian-vector product, the directional derivative of the gradient."""
        Xb, yb, t = self._margins(w, batch)
        s = self._psi_d2(t, yb)
        out = np.asarray(Xb.T @ (s * (Xb @ h))).ravel() / len(yb)
        if self.mu_reg:
            out = out + self.mu_reg * h
        return out

    def _hessian_diag_from(self, Xb, yb, t):
        s = self._psi_d2(t, yb)
        if sp.issparse(Xb):
            diag = np.asarray(Xb.multiply(Xb).T @ s).ravel()
        else:
            diag = (Xb * Xb).T @ s
        return diag / len(yb)

    def hessian_diag(self, w, batch=None) -> np.ndarray:
        Xb, yb, t = self._margins(w, batch)
        diag = self._hessian_diag_from(Xb, yb, t)
        if self.mu_reg:
            diag = diag + self.mu_reg
        return diag

    def hessian_dense(self, w, batch=None) -> np.ndarray:
        """Full d x d Hessian. Guarded by a size cap; large-d paths must use hvp."""
        if self.d > self.dense_cap:
            raise CapabilityError(
                f"dense Hessian disabled for d={self.d} (cap {self.dense_cap})"
            )
        Xb, yb, t = self._margins(w, batch)
        s = self._psi_d2(t, yb)
        Xd = np.asarray(Xb.todense()) if sp.issparse(Xb) else Xb
        H = (Xd.T * s) @ Xd / len(yb)
        if self.mu_reg:
            H = H + self.mu_reg * np.eye(self.d)
        return H

    def f_star(self, batch=None) -> float:
        """Known (or configured) per-batch optimal value."""
        return 0.0

    def accuracy(self, w) -> float:
        raise NotImplementedError


class LogisticLoss(GlmObjective):
    """mean log(1 + exp(-y x^T w)) over the batch, labels in {-1,+1}.

    With ``mu_reg > 0`` an L2 term (mu/2)||w||^2 is added and the per-batch
    optimum is no longer 0; ``f_hat`` holds the configured estimate (default 0,
    a plain lower bound).
    """

    def __init__(self, X, y, mu_reg: float = 0.0, f_hat: float = 0.0,
                 dense_cap: int = DENSE_HESSIAN_MAX_DIM):
        super().__init__(X, y, dense_cap=dense_cap)
        if not set(np.unique(self.y)) <= {-1.0, 1.0}:
            raise ValueError("logistic loss expects labels in {-1,+1}")
        if mu_reg < 0:
            raise ValueError("mu_reg must be >= 0")
        self.mu_reg = float(mu_reg)
        self.f_hat = float(f_hat)

    @property
    def kind(self) -> str:
        return LOGREG_L2 if self.mu_reg else LOGREG

    def _psi(self, t, y):
        return np.logaddexp(0.0, -y * t)

    def _psi_d1(self, t, y):
        return -y * expit(-y * t)

    def _psi_d2(self, t, y):
        z = y * t
        return expit(z) * expit(-z)

    def f_star(self, batch=None) -> float:
        return self.f_hat if self.mu_reg else 0.0

    def accuracy(self, w) -> float:
        margins = np.asarray(self.X @ w).ravel()
        pred = np.where(margins < 0.0, -1.0, 1.0)
        return float(np.mean(pred == self.y))


class NonlinearLeastSquares(GlmObjective):
    """mean (y - sigmoid(x^T w))^2 over the batch, labels in {0,1}. Non-convex."""

    kind = NLLSQ

    def __init__(self, X, y, dense_cap: int = DENSE_HESSIAN_MAX_DIM):
        super().__init__(X, y, dense_cap=dense_cap)
        if not set(np.unique(self.y)) <= {0.0, 1.0}:
            raise ValueError("non-linear least squares expects labels in {0,1}")

    def _psi(self, t, y):
        return (y - expit(t)) ** 2

    def _psi_d1(self, t, y):
        p = expit(t)
        return -2.0 * (y - p) * p * expit(-t)

    def _psi_d2(self, t, y):
        p = expit(t)
        q = p * expit(-t)  # sigmoid'(t), computed without cancellation
        return 2.0 * q * q - 2.0 * (y - p) * q * (1.0 - 2.0 * p)

    def accuracy(self, w) -> float:
        margins = np.asarray(self.X @ w).ravel()
        pred = (margins >= 0.0).astype(np.float64)
        return float(np.mean(pred == self.y))


def build_objective(kind: str, X, y, mu_reg: float = 0.0, f_hat: float = 0.0) -> GlmObjective:
    if kind == LOGREG:
        return LogisticLoss(X, y)
    if kind == LOGREG_L2:
        return LogisticLoss(X, y, mu_reg=mu_reg, f_hat=f_hat)
    if kind == NLLSQ:
        return NonlinearLeastSquares(X, y)
    raise ValueError(f"unknown objective kind {kind!r}")

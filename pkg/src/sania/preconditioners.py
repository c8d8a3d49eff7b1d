"""Diagonal preconditioner states producing the (m_t, B_t) pair consumed by steppers.

Each state owns its running statistics (single-owner mutable, one per training
run) and publishes a direction vector m and a positive diagonal B on every
update. The square-root-free variants keep the raw second-moment accumulator
as the metric, which is what makes the Polyak-type steps scale invariant;
their classical counterparts take the entrywise square root and are not.
"""

from __future__ import annotations

import numpy as np

EPS_DEFAULT = 1e-8


class Identity:
    """No preconditioning: m = g, B = I."""

    def update(self, g: np.ndarray):
        return g, np.ones_like(g)


class FixedDiag:
    """A constant positive diagonal metric."""

    def __init__(self, diag: np.ndarray):
        diag = np.asarray(diag, dtype=np.float64)
        if np.any(diag <= 0):
            raise ValueError("fixed diagonal must be entrywise positive")
        self.diag = diag

    def update(self, g: np.ndarray):
        return g, self.diag


class AdaGrad:
    """Accumulate G += g^2, publish B = sqrt(G) + eps."""

    def __init__(self, eps: float = EPS_DEFAULT):
        self.eps = eps
        self.G: np.ndarray | None = None
        self.t = 0

    def update(self, g: np.ndarray):
        if self.G is None:
            self.G = np.zeros_like(g)
        self.G += g * g
        self.t += 1
        return g, np.sqrt(self.G) + self.eps


class AdaGradSqr(AdaGrad):
    """AdaGrad without the square root: B = G + eps."""

    def update(self, g: np.ndarray):
        if self.G is None:
            self.G = np.zeros_like(g)
        self.G += g * g
        self.t += 1
        return g, self.G + self.eps


class Adam:
    """Bias-corrected first/second moment EMAs, B = sqrt(v_hat) + eps."""

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = EPS_DEFAULT):
        if not (0.0 < beta1 < 1.0 and 0.0 < beta2 < 1.0):
            raise ValueError("beta1, beta2 must lie in (0,1)")
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: np.ndarray | None = None
        self.v: np.ndarray | None = None
        self.t = 0

    def _moments(self, g: np.ndarray):
        if self.m is None:
            self.m = np.zeros_like(g)
            self.v = np.zeros_like(g)
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * g
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * g * g
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return m_hat, v_hat

    def update(self, g: np.ndarray):
        m_hat, v_hat = self._moments(g)
        return m_hat, np.sqrt(v_hat) + self.eps


class AdamSqr(Adam):
    """Adam without the square root on the metric: B = v_hat + eps."""

    def update(self, g: np.ndarray):
        m_hat, v_hat = self._moments(g)
        return m_hat, v_hat + self.eps


class Hutchinson:
    """Running Rademacher estimate of the Hessian diagonal.

    Each update draws z with entries in {-1,+1}, forms z * hvp(z) (an unbiased
    estimate of diag(H)) and folds it into an EMA with weight ``beta``. The
    published diagonal is max(mu_floor, |ema|) per coordinate so the metric
    stays positive under non-convexity. ``init_estimate`` seeds the EMA with a
    plain average over ``k_init`` dedicated batches.
    """

    def __init__(self, beta: float = 0.999, mu_floor: float = 1e-3, k_init: int = 10):
        if not 0.0 < beta < 1.0:
            raise ValueError("beta must lie in (0,1)")
        if mu_floor <= 0:
            raise ValueError("mu_floor must be > 0")
        self.beta = beta
        self.mu_floor = mu_floor
        self.k_init = k_init
        self.ema: np.ndarray | None = None
        self.t = 0
        self.init_batches: list[np.ndarray] = []

    def _publish(self) -> np.ndarray:
        return np.maximum(self.mu_floor, np.abs(self.ema))

    def init_estimate(self, objective, w0: np.ndarray, batch_size: int, rng: np.random.Generator):
        """Average z * H_j z over k_init dedicated batches at w0."""
        n = objective.n
        total = np.zeros_like(w0)
        for _ in range(self.k_init):
            batch = rng.choice(n, size=min(batch_size, n), replace=False)
            self.init_batches.append(batch)
            z = rng.integers(0, 2, size=w0.shape[0]) * 2.0 - 1.0
            total += z * objective.hvp(w0, batch, z)
        self.ema = total / self.k_init
        return self._publish()

    def update(self, hvp, rng: np.random.Generator) -> np.ndarray:
        if self.ema is None:
            raise RuntimeError("call init_estimate before update")
        z = rng.integers(0, 2, size=self.ema.shape[0]) * 2.0 - 1.0
        raw = z * hvp(z)
        self.t += 1
        self.ema = self.beta * self.ema + (1.0 - self.beta) * raw
        return self._publish()


def rademacher_diag_estimate(hvp, d: int, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """Monte-Carlo mean of z * (H z) over n_samples Rademacher draws."""
    total = np.zeros(d)
    for _ in range(n_samples):
        z = rng.integers(0, 2, size=d) * 2.0 - 1.0
        total += z * hvp(z)
    return total / n_samples


def enumerate_rademacher_diag(hvp, d: int) -> np.ndarray:
    """Exact expectation of z * (H z) over all 2^d sign vectors (small d only)."""
    if d > 20:
        raise ValueError("full enumeration is limited to d <= 20")
    total = np.zeros(d)
    for bits in range(2**d):
        z = np.array([1.0 if (bits >> j) & 1 else -1.0 for j in range(d)])
        total += z * hvp(z)
    return total / 2**d

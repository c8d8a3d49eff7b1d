"""Scikit-learn estimator facade over the training engine."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .datasets import BatchSchedule, batches
from .harness import RunConfig
from .methods import build_driver
from .objectives import NLLSQ, build_objective


class SaniaClassifier(BaseEstimator, ClassifierMixin):
    """Binary linear classifier trained by a named update rule from the registry.

    The default methods are parameter-free (Polyak-type step sizes); classical
    baselines such as ``"adam"`` additionally require ``step_size``.

    Parameters
    ----------
    method : str, default="sania-adagrad-sqr"
        Training method name, e.g. "sania-adam-sqr", "sps", "adam", "adagrad".
    loss : str, default="logreg"
        "logreg", "logreg-l2" or "nllsq".
    epochs : int, default=10
    batch_size : int, default=32
    seed : int, default=0
        Seeds the per-epoch batch permutations (and any estimator randomness).
    step_size : float or None
        Learning rate, only for the baseline methods.
    mu_reg, f_hat : float
        L2 strength and configured optimum estimate for "logreg-l2".

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
        Learned weights.
    classes_ : ndarray of shape (2,)
        Original class labels; the smaller one is the negative class.
    final_train_loss_ : float
        Full-training-set loss at the learned weights.
    """

    def __init__(self, method="sania-adagrad-sqr", loss="logreg", epochs=10,
                 batch_size=32, seed=0, step_size=None, mu_reg=1e-4, f_hat=0.0,
                 eps=None, beta1=0.9, beta2=0.999):
        self.method = method
        self.loss = loss
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed
        self.step_size = step_size
        self.mu_reg = mu_reg
        self.f_hat = f_hat
        self.eps = eps
        self.beta1 = beta1
        self.beta2 = beta2

    def _config(self) -> RunConfig:
        return RunConfig(
            dataset="<in-memory>", objective=self.loss, method=self.method,
            batch_size=self.batch_size, epochs=self.epochs, seed=self.seed,
            step_size=self.step_size, mu_reg=self.mu_reg, f_hat=self.f_hat,
            eps=self.eps, beta1=self.beta1, beta2=self.beta2,
        )

    def fit(self, X, y):
        """Run the configured method over seeded minibatch epochs.

        Returns
        -------
        self : object
        """
        X, y = check_X_y(X, y, accept_sparse="csr")
        self.classes_ = np.unique(y)
        if len(self.classes_) != 2:
            raise ValueError(f"binary targets required, got {len(self.classes_)} classes")
        targets = (0.0, 1.0) if self.loss == NLLSQ else (-1.0, 1.0)
        y_mapped = np.where(y == self.classes_[0], targets[0], targets[1])

        cfg = self._config()
        objective = build_objective(self.loss, X, y_mapped, mu_reg=self.mu_reg, f_hat=self.f_hat)
        n = objective.n
        if not 1 <= self.batch_size <= n:
            raise ValueError(f"batch_size {self.batch_size} out of range for n={n}")
        rng = np.random.default_rng([self.seed, 0, 1])
        driver = build_driver(objective, cfg, rng)
        w = np.zeros(objective.d)
        for epoch in range(1, self.epochs + 1):
            for batch in batches(BatchSchedule(n, self.batch_size, self.seed, epoch)):
                ev = objective.eval(w, batch)
                if not np.isfinite(ev.value):
                    raise FloatingPointError("training loss became non-finite")
                w = driver.step(w, ev).w_next
        self.coef_ = w
        self.n_features_in_ = objective.d
        self.final_train_loss_ = objective.value(w)
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, accept_sparse="csr")
        return np.asarray(X @ self.coef_).ravel()

    def predict(self, X):
        """Class labels from the sign of the linear margin."""
        margins = self.decision_function(X)
        return self.classes_[(margins >= 0.0).astype(int)]

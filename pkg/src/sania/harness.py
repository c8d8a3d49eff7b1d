"""Experiment harness: seeded training runs, CSV traces, invariance and robustness reports.

Runs are deterministic given their config (identical configs produce byte-identical
CSV traces); independent configs may execute in parallel since every run owns its
state and RNG streams.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import datasets as ds_mod
from .datasets import BatchSchedule, batches, scaling_vector
from .errors import ConfigError
from .methods import build_driver, method_needs_lr
from .objectives import LOGREG, LOGREG_L2, NLLSQ, build_objective

DATA_DIR_ENV = "SANIA_DATA_DIR"
CSV_COLUMNS = (
    "epoch", "step", "loss", "full_train_loss", "train_accuracy",
    "grad_norm", "lambda", "kappa", "method", "dataset", "scale_k", "seed",
)


@dataclass
class RunConfig:
    dataset: str = "synthetic"
    objective: str = LOGREG
    method: str = "sania-adagrad-sqr"
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0
    scale_k: float = 0.0
    scale_seed: int = 0
    step_size: float | None = None
    mu_reg: float = 1e-4           # logreg-l2 only
    f_hat: float = 0.0             # configured per-batch optimum estimate (logreg-l2)
    l2: float = 0.1                # Hessian-Lipschitz constant for grad-reg-newton
    eps: float | None = None       # preconditioner floor; None = per-method default
    beta1: float = 0.9
    beta2: float = 0.999
    hutch_beta: float = 0.999
    hutch_mu: float = 1e-3
    hutch_init_batches: int = 10
    eps_cg: float = 1e-10
    gamma_mix: float = 0.5
    eta_cap: float = 10.0
    w0_scale: float = 0.0
    synthetic_n: int = 1000
    synthetic_d: int = 1000
    data_seed: int = 0
    record_iterates: bool = False


@dataclass
class TraceRow:
    epoch: int
    step: int
    loss: float | None
    full_train_loss: float | None
    train_accuracy: float | None
    grad_norm: float | None
    lam: float | None
    kappa: float | None
    method: str
    dataset: str
    scale_k: float
    seed: int


@dataclass
class TrainTrace:
    rows: list[TraceRow]
    metadata: dict
    iterates: list[np.ndarray] | None = None

    def summary_rows(self) -> list[TraceRow]:
        return [r for r in self.rows if r.full_train_loss is not None]

    def final_summary(self) -> TraceRow:
        return self.summary_rows()[-1]

    def to_csv(self) -> str:
        lines = [",".join(CSV_COLUMNS)]
        for r in self.rows:
            lines.append(",".join((
                str(r.epoch), str(r.step),
                _fmt(r.loss), _fmt(r.full_train_loss), _fmt(r.train_accuracy),
                _fmt(r.grad_norm), _fmt(r.lam), _fmt(r.kappa),
                r.method, r.dataset, _fmt(r.scale_k), str(r.seed),
            )))
        return "\n".join(lines) + "\n"

    def write(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_csv())
        with open(str(path) + ".meta.json", "w", encoding="utf-8") as fh:
            json.dump(self.metadata, fh, indent=2, sort_keys=True, default=_jsonable)
            fh.write("\n")


def _fmt(x) -> str:
    if x is None:
        return ""
    return format(float(x), ".17g")


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer, np.floating)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def data_dir() -> str:
    return os.environ.get(DATA_DIR_ENV, "data")


def resolve_dataset(cfg: RunConfig) -> ds_mod.SparseDataset:
    """Named dataset, file path, or the seeded synthetic generator; labels follow the objective."""
    normalize = ds_mod.ZERO_ONE if cfg.objective == NLLSQ else ds_mod.PM1
    if cfg.dataset == "synthetic":
        ds = ds_mod.generate_synthetic(cfg.synthetic_n, cfg.synthetic_d, cfg.data_seed)
        return ds_mod.relabel(ds, normalize)
    candidates = [cfg.dataset]
    candidates += [os.path.join(data_dir(), cfg.dataset + suffix) for suffix in ("", ".libsvm", ".txt")]
    for path in candidates:
        if os.path.isfile(path):
            return ds_mod.load_libsvm(path, normalize=normalize)
    raise ConfigError(
        f"dataset {cfg.dataset!r} not found (searched {candidates}; set ${DATA_DIR_ENV})"
    )


def _prepare(cfg: RunConfig):
    ds = resolve_dataset(cfg)
    if cfg.scale_k > 0.0:
        ds, _ = ds_mod.scale_columns(ds, cfg.scale_k, cfg.scale_seed)
    if not 1 <= cfg.batch_size <= ds.rows:
        raise ConfigError(f"batch_size {cfg.batch_size} out of range for n={ds.rows}")
    objective = build_objective(cfg.objective, ds.X, ds.labels, mu_reg=cfg.mu_reg, f_hat=cfg.f_hat)
    return ds, objective


def run(cfg: RunConfig) -> TrainTrace:
    """Execute one seeded training run and return its trace.

    The trace holds one row per optimizer step (batch loss before the step,
    gradient norm, step multiplier) plus one epoch-summary row per epoch (full
    training loss, training accuracy, full gradient norm), starting with the
    initial evaluation at epoch 0. A non-finite batch loss aborts the run; the
    trace up to the failure is returned with ``metadata["aborted"] = True``.
    """
    ds, objective = _prepare(cfg)
    rng = np.random.default_rng([cfg.seed, 0, 1])  # hutchinson draws; 3-word key cannot collide with the 2-word batch streams
    driver = build_driver(objective, cfg, rng)
    n, d = objective.n, objective.d

    w = np.full(d, cfg.w0_scale, dtype=np.float64)
    rows: list[TraceRow] = []
    iterates = [w.copy()] if cfg.record_iterates else None
    base = dict(method=cfg.method, dataset=cfg.dataset, scale_k=cfg.scale_k, seed=cfg.seed)

    def summary(epoch: int, step: int):
        ev = objective.eval(w)
        rows.append(TraceRow(
            epoch=epoch, step=step, loss=None,
            full_train_loss=ev.value, train_accuracy=objective.accuracy(w),
            grad_norm=float(np.linalg.norm(ev.gradient)), lam=None, kappa=None, **base,
        ))

    aborted = False
    summary(0, 0)
    for epoch in range(1, cfg.epochs + 1):
        step = 0
        for step, batch in enumerate(batches(BatchSchedule(n, cfg.batch_size, cfg.seed, epoch)), start=1):
            ev = objective.eval(w, batch)
            if not math.isfinite(ev.value):
                aborted = True
                break
            result = driver.step(w, ev)
            rows.append(TraceRow(
                epoch=epoch, step=step, loss=ev.value,
                full_train_loss=None, train_accuracy=None,
                grad_norm=float(np.linalg.norm(ev.gradient)),
                lam=result.lam, kappa=result.kappa, **base,
            ))
            w = result.w_next
            if iterates is not None:
                iterates.append(w.copy())
        if aborted:
            break
        summary(epoch, step + 1)  # end-of-epoch row sorts after the epoch's steps

    metadata = {
        "config": asdict(cfg),
        "sampling": "permutation-without-replacement",
        "epoch_summary_loss": "full-train",
        "rows_per_epoch": "one per optimizer step, plus an end-of-epoch summary row ordered after the steps",
        "aborted": aborted,
        "n": n,
        "d": d,
    }
    metadata.update(driver.metadata())
    return TrainTrace(rows=rows, metadata=metadata, iterates=iterates)


@dataclass
class InvarianceReport:
    method: str
    dataset: str
    k: float
    epochs: list[dict]
    max_iterate_gap: float
    max_loss_gap: float
    passed: bool
    tolerance: float


def invariance_report(cfg: RunConfig, k: float, seed: int, tolerance: float = 1e-6) -> InvarianceReport:
    """Train on the original and the column-scaled dataset with identical batch schedules.

    Reports per-epoch full-train losses of both runs, the largest relative loss
    gap, the largest iterate-mapping error max_t ||y_t - V^{-1} x_t||_inf, and a
    verdict at the given relative loss tolerance. Requires w0 = 0 so the mapped
    starting points coincide.
    """
    if cfg.w0_scale != 0.0:
        raise ConfigError("invariance comparison requires w0 = 0")
    base_cfg = replace(cfg, scale_k=0.0, record_iterates=True)
    scaled_cfg = replace(cfg, scale_k=k, scale_seed=seed, record_iterates=True)
    base = run(base_cfg)
    scaled = run(scaled_cfg)
    v = scaling_vector(base.metadata["d"], k, seed).v

    epochs = []
    max_gap = 0.0
    for rb, rs in zip(base.summary_rows(), scaled.summary_rows()):
        denom = max(abs(rb.full_train_loss), abs(rs.full_train_loss))
        gap = 0.0 if denom == 0.0 else abs(rb.full_train_loss - rs.full_train_loss) / denom
        max_gap = max(max_gap, gap)
        epochs.append({
            "epoch": rb.epoch,
            "loss_original": rb.full_train_loss,
            "loss_scaled": rs.full_train_loss,
            "relative_gap": gap,
        })
    iterate_gap = max(
        float(np.max(np.abs(ys - xs / v)))
        for xs, ys in zip(base.iterates, scaled.iterates)
    )
    return InvarianceReport(
        method=cfg.method, dataset=cfg.dataset, k=k, epochs=epochs,
        max_iterate_gap=iterate_gap, max_loss_gap=max_gap,
        passed=max_gap <= tolerance, tolerance=tolerance,
    )


@dataclass
class SweepRow:
    exponent: int
    gamma: float
    final_loss: float
    final_accuracy: float
    aborted: bool


@dataclass
class SweepTable:
    method: str
    dataset: str
    rows: list[SweepRow]
    best_exponent: int | None

    def best(self) -> SweepRow | None:
        if self.best_exponent is None:
            return None
        return next(r for r in self.rows if r.exponent == self.best_exponent)


DEFAULT_SWEEP_EXPONENTS = (-2, -4, -6, -8, -10, -12, -14, -16)


def lr_sweep(cfg: RunConfig, exponents=DEFAULT_SWEEP_EXPONENTS) -> SweepTable:
    """One run per grid point gamma = 2^n for a step-size-parameterized baseline."""
    if not method_needs_lr(cfg.method):
        raise ConfigError(f"method {cfg.method!r} takes no learning rate; nothing to sweep")
    rows = []
    for n in exponents:
        trace = run(replace(cfg, step_size=2.0 ** n))
        final = trace.final_summary()
        rows.append(SweepRow(
            exponent=int(n), gamma=2.0 ** n,
            final_loss=final.full_train_loss, final_accuracy=final.train_accuracy,
            aborted=trace.metadata["aborted"],
        ))
    finite = [r for r in rows if not r.aborted and math.isfinite(r.final_loss)]
    best = min(finite, key=lambda r: r.final_loss).exponent if finite else None
    return SweepTable(method=cfg.method, dataset=cfg.dataset, rows=rows, best_exponent=best)


@dataclass
class RobustnessRow:
    label: str
    parameter: float
    iterations_to_target: int | None
    final_loss: float


@dataclass
class RobustnessReport:
    dataset: str
    reference_minimum: float
    loss_tolerance: float
    rows: list[RobustnessRow]
    metadata: dict


def plot_losses(curves: dict[str, list[tuple[int, float]]], path: str, title: str = "") -> None:
    """Static loss-curve figure from epoch-summary data (optional; needs matplotlib)."""
    try:
        import matplotlib
    except ImportError as exc:
        raise ConfigError("plot emission needs matplotlib (pip install matplotlib)") from exc
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for label, points in curves.items():
        xs = [e for e, _ in points]
        ys = [l for _, l in points]
        ax.semilogy(xs, ys, marker=".", label=label)
    ax.set_xlabel("epoch")
    ax.set_ylabel("full-train loss")
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def trace_loss_curve(trace: TrainTrace) -> list[tuple[int, float]]:
    return [(r.epoch, r.full_train_loss) for r in trace.summary_rows()]


def reference_minimum(objective, w0: np.ndarray) -> float:
    """High-precision minimum via a scipy second-order solve (independent of the steppers)."""
    from scipy.optimize import minimize

    res = minimize(
        lambda w: objective.value(w), w0, jac=lambda w: objective.gradient(w),
        hessp=lambda w, p: objective.hvp(w, None, p),
        method="Newton-CG", options={"xtol": 1e-14, "maxiter": 500},
    )
    return float(res.fun)


def cubic_robustness(
    cfg: RunConfig,
    f_hat_grid=None,
    l2_baselines=(0.1, 0.0004),
    max_iterations: int = 200,
    loss_tolerance: float = 1e-6,
) -> RobustnessReport:
    """Full-batch comparison of the parameter-free damped Newton step against its
    gradient-regularized baselines on the l2-regularized logistic objective.

    Starts far from the solution (w0 = 3 * ones). ``f_hat_grid = None`` uses
    {computed minimum, minimum - 0.03, 0}. Reports, per variant, the number of
    full-batch iterations until the training loss is within ``loss_tolerance``
    of the reference minimum.
    """
    base = replace(
        cfg, objective=LOGREG_L2, mu_reg=cfg.mu_reg if cfg.mu_reg > 0 else 1e-4,
        w0_scale=3.0, epochs=max_iterations, batch_size=1,
    )
    ds, objective = _prepare(base)
    base = replace(base, batch_size=ds.rows)
    w0 = np.full(objective.d, 3.0)
    f_min = reference_minimum(objective, w0)
    target = f_min + loss_tolerance
    if f_hat_grid is None:
        f_hat_grid = (f_min, f_min - 0.03, 0.0)

    def iterations_until(trace: TrainTrace):
        for row in trace.summary_rows():
            if row.full_train_loss <= target:
                return row.epoch
        return None

    rows = []
    for f_hat in f_hat_grid:
        trace = run(replace(base, method="cubic-polyak", f_hat=float(f_hat)))
        rows.append(RobustnessRow(
            label="cubic-polyak", parameter=float(f_hat),
            iterations_to_target=iterations_until(trace),
            final_loss=trace.final_summary().full_train_loss,
        ))
    for l2 in l2_baselines:
        trace = run(replace(base, method="grad-reg-newton", l2=float(l2)))
        rows.append(RobustnessRow(
            label="grad-reg-newton", parameter=float(l2),
            iterations_to_target=iterations_until(trace),
            final_loss=trace.final_summary().full_train_loss,
        ))
    return RobustnessReport(
        dataset=base.dataset, reference_minimum=f_min, loss_tolerance=loss_tolerance,
        rows=rows,
        metadata={
            "dataset_choice": base.dataset,
            "mu_reg": base.mu_reg,
            "w0": "3 * ones",
            "config": asdict(base),
        },
    )

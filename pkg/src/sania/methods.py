"""Named training methods: each composes a preconditioner state with a stepper.

A driver owns the per-run mutable state (accumulators, RNG streams) and maps
(current iterate, batch evaluation) to a StepResult. The registry at the bottom
is what the harness CLI and the estimator select from by name.
"""

from __future__ import annotations

import numpy as np

from . import preconditioners as precond
from . import steppers
from .errors import ConfigError
from .objectives import LOGREG, LOGREG_L2, NLLSQ

EPS_CLASSICAL = precond.EPS_DEFAULT
# The additive floor breaks exact scale invariance (it does not transform with
# the metric), so the square-root-free methods run without it by default; zero
# accumulator entries only ever divide zero gradient entries.
EPS_SQR = 0.0


def _resolve_eps(cfg, default):
    return default if getattr(cfg, "eps", None) is None else cfg.eps


def _state_factory(name: str, cfg):
    if name == "identity":
        return precond.Identity()
    if name == "adagrad":
        return precond.AdaGrad(eps=_resolve_eps(cfg, EPS_CLASSICAL))
    if name == "adagrad-sqr":
        return precond.AdaGradSqr(eps=_resolve_eps(cfg, EPS_SQR))
    if name == "adam":
        return precond.Adam(beta1=cfg.beta1, beta2=cfg.beta2, eps=_resolve_eps(cfg, EPS_CLASSICAL))
    if name == "adam-sqr":
        return precond.AdamSqr(beta1=cfg.beta1, beta2=cfg.beta2, eps=_resolve_eps(cfg, EPS_SQR))
    if name == "adadelta":
        return steppers.Adadelta()
    raise ConfigError(f"unknown preconditioner {name!r}")


class Driver:
    """Base: owns objective + config; subclasses implement step(w, ev)."""

    def __init__(self, objective, cfg, rng: np.random.Generator):
        self.objective = objective
        self.cfg = cfg
        self.rng = rng

    def metadata(self) -> dict:
        return {}

    def _hvp(self, w, batch):
        return lambda h: self.objective.hvp(w, batch, h)

    def step(self, w, ev) -> steppers.StepResult:
        raise NotImplementedError


class BaselineDriver(Driver):
    def __init__(self, objective, cfg, rng, precond_name):
        super().__init__(objective, cfg, rng)
        self.state = _state_factory(precond_name, cfg)

    def step(self, w, ev):
        m, B = self.state.update(ev.gradient)
        ctx = steppers.StepContext(w=w, loss=ev.value, m=m, B=B, step_size=self.cfg.step_size)
        return steppers.preconditioned_sgd_step(ctx)


class SpsDriver(Driver):
    def step(self, w, ev):
        ctx = steppers.StepContext(
            w=w, loss=ev.value, f_star=self.objective.f_star(ev.batch), m=ev.gradient
        )
        return steppers.sps_step(ctx)


class PolyakPrecondDriver(Driver):
    """PSPS or SANIA-QN on top of a gradient-statistics preconditioner."""

    def __init__(self, objective, cfg, rng, precond_name, damped: bool):
        super().__init__(objective, cfg, rng)
        self.state = _state_factory(precond_name, cfg)
        self.stepper = steppers.sania_qn_step if damped else steppers.psps_step

    def step(self, w, ev):
        m, B = self.state.update(ev.gradient)
        ctx = steppers.StepContext(
            w=w, loss=ev.value, f_star=self.objective.f_star(ev.batch), m=m, B=B
        )
        return self.stepper(ctx)


class HutchinsonPolyakDriver(Driver):
    """SANIA-QN (or PSPS) with the estimated Hessian diagonal as the metric."""

    def __init__(self, objective, cfg, rng, damped: bool):
        super().__init__(objective, cfg, rng)
        self.state = precond.Hutchinson(
            beta=cfg.hutch_beta, mu_floor=cfg.hutch_mu, k_init=cfg.hutch_init_batches
        )
        self.stepper = steppers.sania_qn_step if damped else steppers.psps_step
        self._initialized = False

    def _ensure_init(self, w):
        if not self._initialized:
            self.state.init_estimate(self.objective, w, self.cfg.batch_size, self.rng)
            self._initialized = True

    def step(self, w, ev):
        self._ensure_init(w)
        B = self.state.update(self._hvp(w, ev.batch), self.rng)
        ctx = steppers.StepContext(
            w=w, loss=ev.value, f_star=self.objective.f_star(ev.batch), m=ev.gradient, B=B
        )
        return self.stepper(ctx)

    def metadata(self):
        return {
            "hutchinson_init_batches": [b.tolist() for b in self.state.init_batches],
        }


class HessDiagPolyakDriver(Driver):
    """SANIA-QN with the exact batch Hessian diagonal as the metric."""

    def step(self, w, ev):
        diag = self.objective.hessian_diag(w, ev.batch)
        ctx = steppers.StepContext(
            w=w, loss=ev.value, f_star=self.objective.f_star(ev.batch), m=ev.gradient,
            B=np.abs(diag),
        )
        return steppers.sania_qn_step(ctx)


def _cg_budget(d: int) -> int:
    # the exact-arithmetic bound is d iterations; give floating point headroom
    return 2 * d + 10


class SaniaNewtonDriver(Driver):
    """Exact Newton direction through a dense solve (the CG runs one iteration with M = H)."""

    def step(self, w, ev):
        H = self.objective.hessian_dense(w, ev.batch)
        ctx = steppers.StepContext(
            w=w, loss=ev.value, f_star=self.objective.f_star(ev.batch), m=ev.gradient,
            hvp=lambda h: H @ h,
        )
        return steppers.sania_pcg_convex_step(
            ctx, M_inv=lambda r: np.linalg.solve(H, r), eps_cg=self.cfg.eps_cg,
            max_iter=_cg_budget(self.objective.d),
        )


class SaniaPcgDriver(Driver):
    def __init__(self, objective, cfg, rng, metric: str | None, convex: bool):
        super().__init__(objective, cfg, rng)
        self.metric_state = _state_factory(metric, cfg) if metric else None
        self.convex = convex

    def step(self, w, ev):
        M_inv = None
        if self.metric_state is not None:
            _, B = self.metric_state.update(ev.gradient)
            # coordinates without accumulated statistics keep the identity metric
            M_inv = np.ones_like(B)
            np.divide(1.0, B, out=M_inv, where=B > 0.0)
        ctx = steppers.StepContext(
            w=w, loss=ev.value, f_star=self.objective.f_star(ev.batch), m=ev.gradient,
            hvp=self._hvp(w, ev.batch),
        )
        if self.convex:
            return steppers.sania_pcg_convex_step(
                ctx, M_inv=M_inv, eps_cg=self.cfg.eps_cg, max_iter=_cg_budget(self.objective.d)
            )
        return steppers.sania_pcg_nonconvex_step(
            ctx, M_inv=M_inv, eps_cg=self.cfg.eps_cg,
            gamma_mix=self.cfg.gamma_mix, eta_cap=self.cfg.eta_cap,
            max_iter=_cg_budget(self.objective.d),
        )


class CubicPolyakDriver(Driver):
    def step(self, w, ev):
        dense = self.objective.d <= self.objective.dense_cap
        ctx = steppers.StepContext(
            w=w, loss=ev.value, f_star=self.objective.f_star(ev.batch), m=ev.gradient,
            hessian=self.objective.hessian_dense(w, ev.batch) if dense else None,
            hvp=None if dense else self._hvp(w, ev.batch),
        )
        return steppers.cubic_polyak_step(ctx)


class GradRegNewtonDriver(Driver):
    def step(self, w, ev):
        dense = self.objective.d <= self.objective.dense_cap
        ctx = steppers.StepContext(
            w=w, loss=ev.value, m=ev.gradient,
            hessian=self.objective.hessian_dense(w, ev.batch) if dense else None,
            hvp=None if dense else self._hvp(w, ev.batch),
        )
        return steppers.grad_reg_newton_step(ctx, L2=self.cfg.l2)


CONVEX_KINDS = (LOGREG, LOGREG_L2)
ANY_KIND = (LOGREG, LOGREG_L2, NLLSQ)

# name -> (factory(objective, cfg, rng), needs_lr, allowed objective kinds)
REGISTRY = {
    "sgd": (lambda o, c, r: BaselineDriver(o, c, r, "identity"), True, ANY_KIND),
    "adam": (lambda o, c, r: BaselineDriver(o, c, r, "adam"), True, ANY_KIND),
    "adagrad": (lambda o, c, r: BaselineDriver(o, c, r, "adagrad"), True, ANY_KIND),
    "adadelta": (lambda o, c, r: BaselineDriver(o, c, r, "adadelta"), True, ANY_KIND),
    "sps": (lambda o, c, r: SpsDriver(o, c, r), False, ANY_KIND),
    "psps-adagrad": (lambda o, c, r: PolyakPrecondDriver(o, c, r, "adagrad", False), False, ANY_KIND),
    "psps-adam": (lambda o, c, r: PolyakPrecondDriver(o, c, r, "adam", False), False, ANY_KIND),
    "psps-hutchinson": (lambda o, c, r: HutchinsonPolyakDriver(o, c, r, False), False, ANY_KIND),
    "sania-identity": (lambda o, c, r: PolyakPrecondDriver(o, c, r, "identity", True), False, ANY_KIND),
    "sania-adagrad-sqr": (lambda o, c, r: PolyakPrecondDriver(o, c, r, "adagrad-sqr", True), False, ANY_KIND),
    "sania-adam-sqr": (lambda o, c, r: PolyakPrecondDriver(o, c, r, "adam-sqr", True), False, ANY_KIND),
    "sania-adagrad": (lambda o, c, r: PolyakPrecondDriver(o, c, r, "adagrad", True), False, ANY_KIND),
    "sania-adam": (lambda o, c, r: PolyakPrecondDriver(o, c, r, "adam", True), False, ANY_KIND),
    "sania-hutchinson": (lambda o, c, r: HutchinsonPolyakDriver(o, c, r, True), False, ANY_KIND),
    "sania-hess-diag": (lambda o, c, r: HessDiagPolyakDriver(o, c, r), False, ANY_KIND),
    "sania-newton": (lambda o, c, r: SaniaNewtonDriver(o, c, r), False, CONVEX_KINDS),
    "sania-pcg": (lambda o, c, r: SaniaPcgDriver(o, c, r, None, True), False, CONVEX_KINDS),
    "sania-pcg-adagrad-sqr": (lambda o, c, r: SaniaPcgDriver(o, c, r, "adagrad-sqr", True), False, CONVEX_KINDS),
    "sania-pcg-adam-sqr": (lambda o, c, r: SaniaPcgDriver(o, c, r, "adam-sqr", True), False, CONVEX_KINDS),
    "sania-pcg-nonconvex": (lambda o, c, r: SaniaPcgDriver(o, c, r, None, False), False, ANY_KIND),
    "sania-pcg-nonconvex-adagrad-sqr": (lambda o, c, r: SaniaPcgDriver(o, c, r, "adagrad-sqr", False), False, ANY_KIND),
    "sania-pcg-nonconvex-adam-sqr": (lambda o, c, r: SaniaPcgDriver(o, c, r, "adam-sqr", False), False, ANY_KIND),
    "cubic-polyak": (lambda o, c, r: CubicPolyakDriver(o, c, r), False, CONVEX_KINDS),
    "grad-reg-newton": (lambda o, c, r: GradRegNewtonDriver(o, c, r), False, CONVEX_KINDS),
}

METHOD_NAMES = sorted(REGISTRY)


def method_needs_lr(name: str) -> bool:
    if name not in REGISTRY:
        raise ConfigError(f"unknown method {name!r}")
    return REGISTRY[name][1]


def build_driver(objective, cfg, rng: np.random.Generator) -> Driver:
    """Validate method/objective/step-size compatibility and construct the driver."""
    name = cfg.method
    if name not in REGISTRY:
        raise ConfigError(f"unknown method {name!r} (available: {', '.join(METHOD_NAMES)})")
    factory, needs_lr, kinds = REGISTRY[name]
    if needs_lr and (cfg.step_size is None or cfg.step_size <= 0):
        raise ConfigError(f"method {name!r} requires a positive step_size")
    if not needs_lr and cfg.step_size is not None:
        raise ConfigError(f"method {name!r} is parameter-free and takes no step_size")
    if objective.kind not in kinds:
        raise ConfigError(f"method {name!r} does not support the {objective.kind!r} objective")
    if name == "cubic-polyak" and objective.kind != LOGREG_L2 and cfg.batch_size != objective.n:
        raise ConfigError("cubic-polyak needs the l2-regularized objective or full-batch mode")
    return factory(objective, cfg, rng)

"""Command-line entry points: run / invariance / lr-sweep / cubic-robustness."""

from __future__ import annotations

import json
import sys

import click

from . import datasets as ds_mod
from . import harness
from .errors import SaniaError
from .methods import METHOD_NAMES


def _common_options(fn):
    opts = [
        click.option("--dataset", default="synthetic", show_default=True,
                     help="Dataset name (resolved in $SANIA_DATA_DIR), file path, or 'synthetic'."),
        click.option("--objective", default="logreg", show_default=True,
                     type=click.Choice(["logreg", "logreg-l2", "nllsq"])),
        click.option("--method", default="sania-adagrad-sqr", show_default=True,
                     type=click.Choice(METHOD_NAMES)),
        click.option("--batch-size", default=32, show_default=True, type=int),
        click.option("--epochs", default=10, show_default=True, type=int),
        click.option("--seed", default=0, show_default=True, type=int),
        click.option("--scale-k", default=0.0, show_default=True, type=float,
                     help="Column scaling range; 0 keeps the original dataset."),
        click.option("--scale-seed", default=0, show_default=True, type=int),
        click.option("--step-size", default=None, type=float,
                     help="Learning rate (baseline methods only)."),
        click.option("--mu-reg", default=1e-4, show_default=True, type=float),
        click.option("--f-hat", default=0.0, show_default=True, type=float),
        click.option("--l2", default=0.1, show_default=True, type=float),
        click.option("--eps", default=None, type=float,
                     help="Preconditioner floor; default depends on the method family."),
        click.option("--beta1", default=0.9, show_default=True, type=float),
        click.option("--beta2", default=0.999, show_default=True, type=float),
        click.option("--hutch-beta", default=0.999, show_default=True, type=float),
        click.option("--hutch-mu", default=1e-3, show_default=True, type=float),
        click.option("--hutch-init-batches", default=10, show_default=True, type=int),
        click.option("--eps-cg", default=1e-10, show_default=True, type=float),
        click.option("--gamma-mix", default=0.5, show_default=True, type=float),
        click.option("--eta-cap", default=10.0, show_default=True, type=float),
        click.option("--w0-scale", default=0.0, show_default=True, type=float),
        click.option("--synthetic-n", default=1000, show_default=True, type=int),
        click.option("--synthetic-d", default=1000, show_default=True, type=int),
        click.option("--data-seed", default=0, show_default=True, type=int),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def _config(kw) -> harness.RunConfig:
    return harness.RunConfig(
        dataset=kw["dataset"], objective=kw["objective"], method=kw["method"],
        batch_size=kw["batch_size"], epochs=kw["epochs"], seed=kw["seed"],
        scale_k=kw["scale_k"], scale_seed=kw["scale_seed"], step_size=kw["step_size"],
        mu_reg=kw["mu_reg"], f_hat=kw["f_hat"], l2=kw["l2"], eps=kw["eps"],
        beta1=kw["beta1"], beta2=kw["beta2"], hutch_beta=kw["hutch_beta"],
        hutch_mu=kw["hutch_mu"], hutch_init_batches=kw["hutch_init_batches"],
        eps_cg=kw["eps_cg"], gamma_mix=kw["gamma_mix"], eta_cap=kw["eta_cap"],
        w0_scale=kw["w0_scale"], synthetic_n=kw["synthetic_n"],
        synthetic_d=kw["synthetic_d"], data_seed=kw["data_seed"],
    )


def _fail(exc: Exception) -> None:
    click.echo(json.dumps({"error": type(exc).__name__, "message": str(exc)}), err=True)
    sys.exit(1)


@click.group()
def main():
    """Parameter-free Polyak-step-size training runs and invariance experiments."""


@main.command("run")
@_common_options
@click.option("--output", default=None, type=click.Path(),
              help="Write the trace CSV here (plus <output>.meta.json).")
@click.option("--export-scaled", default=None, type=click.Path(),
              help="Also write the scaled dataset as LibSVM text.")
@click.option("--plot", default=None, type=click.Path(), help="Write a loss-curve image.")
def run_cmd(output, export_scaled, plot, **kw):
    """Execute one training run and print its epoch summaries."""
    cfg = _config(kw)
    try:
        if export_scaled is not None and cfg.scale_k > 0.0:
            ds = harness.resolve_dataset(cfg)
            scaled, _ = ds_mod.scale_columns(ds, cfg.scale_k, cfg.scale_seed)
            with open(export_scaled, "w", encoding="utf-8") as fh:
                fh.write(ds_mod.serialize_libsvm(scaled))
        trace = harness.run(cfg)
        if plot is not None:
            harness.plot_losses({cfg.method: harness.trace_loss_curve(trace)}, plot,
                                title=f"{cfg.dataset} / {cfg.objective}")
    except SaniaError as exc:
        _fail(exc)
    for row in trace.summary_rows():
        click.echo(f"epoch {row.epoch:4d}  loss {row.full_train_loss:.10f}  "
                   f"accuracy {row.train_accuracy:.4f}  grad-norm {row.grad_norm:.3e}")
    if output is not None:
        trace.write(output)
        click.echo(f"trace written to {output}")
    if trace.metadata["aborted"]:
        _fail(FloatingPointError("run aborted on non-finite loss"))


@main.command("invariance")
@_common_options
@click.option("--k", default=2.0, show_default=True, type=float)
@click.option("--tolerance", default=1e-6, show_default=True, type=float)
@click.option("--output", default=None, type=click.Path(), help="Write the report as JSON.")
@click.option("--plot", default=None, type=click.Path(), help="Write both loss curves as an image.")
def invariance_cmd(k, tolerance, output, plot, **kw):
    """Compare training on the original vs column-scaled dataset."""
    cfg = _config(kw)
    try:
        report = harness.invariance_report(cfg, k=k, seed=cfg.scale_seed, tolerance=tolerance)
        if plot is not None:
            harness.plot_losses(
                {
                    "original": [(e["epoch"], e["loss_original"]) for e in report.epochs],
                    f"scaled (k={k:g})": [(e["epoch"], e["loss_scaled"]) for e in report.epochs],
                },
                plot, title=f"{cfg.method} on {cfg.dataset}",
            )
    except SaniaError as exc:
        _fail(exc)
    for row in report.epochs:
        click.echo(f"epoch {row['epoch']:4d}  original {row['loss_original']:.12f}  "
                   f"scaled {row['loss_scaled']:.12f}  rel-gap {row['relative_gap']:.3e}")
    click.echo(f"max iterate-mapping error: {report.max_iterate_gap:.3e}")
    click.echo(f"max relative loss gap:     {report.max_loss_gap:.3e}")
    click.echo(f"verdict: {'PASS' if report.passed else 'FAIL'} (tolerance {report.tolerance:g})")
    if output is not None:
        with open(output, "w", encoding="utf-8") as fh:
            json.dump(report.__dict__, fh, indent=2, default=str)
            fh.write("\n")


@main.command("lr-sweep")
@_common_options
@click.option("--exponent", "exponents", multiple=True, type=int,
              help="Grid exponent n for gamma = 2^n (repeatable). Default: -2 .. -16 step -2.")
def lr_sweep_cmd(exponents, **kw):
    """Sweep a step-size grid for a baseline method and report the best gamma."""
    cfg = _config(kw)
    grid = exponents or harness.DEFAULT_SWEEP_EXPONENTS
    try:
        table = harness.lr_sweep(cfg, grid)
    except SaniaError as exc:
        _fail(exc)
    for row in table.rows:
        status = "aborted" if row.aborted else f"loss {row.final_loss:.8f}  accuracy {row.final_accuracy:.4f}"
        click.echo(f"gamma = 2^{row.exponent:<4d} {status}")
    if table.best_exponent is None:
        click.echo("no finite run in the grid")
    else:
        click.echo(f"best gamma: 2^{table.best_exponent}")


@main.command("cubic-robustness")
@_common_options
@click.option("--f-hat-value", "f_hat_values", multiple=True, type=float,
              help="Optimum estimates to try (repeatable). Default: computed minimum, minus 0.03, and 0.")
@click.option("--l2-baseline", "l2_values", multiple=True, type=float,
              help="Hessian-Lipschitz constants for the regularized-Newton baselines.")
@click.option("--max-iterations", default=200, show_default=True, type=int)
@click.option("--loss-tolerance", default=1e-6, show_default=True, type=float)
def cubic_robustness_cmd(f_hat_values, l2_values, max_iterations, loss_tolerance, **kw):
    """Robustness of the damped Newton Polyak step to the configured optimum estimate."""
    cfg = _config(kw)
    try:
        report = harness.cubic_robustness(
            cfg,
            f_hat_grid=f_hat_values or None,
            l2_baselines=l2_values or (0.1, 0.0004),
            max_iterations=max_iterations,
            loss_tolerance=loss_tolerance,
        )
    except SaniaError as exc:
        _fail(exc)
    click.echo(f"dataset {report.dataset}  reference minimum {report.reference_minimum:.10f}")
    for row in report.rows:
        iters = "never" if row.iterations_to_target is None else str(row.iterations_to_target)
        click.echo(f"{row.label:18s} parameter {row.parameter:< 12.6g} "
                   f"iterations-to-target {iters:>6s}  final loss {row.final_loss:.10f}")


if __name__ == "__main__":
    main()

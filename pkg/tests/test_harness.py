import hashlib
import json
import math
from dataclasses import replace

import pytest

from sania.errors import ConfigError
from sania.harness import (
    DEFAULT_SWEEP_EXPONENTS,
    RunConfig,
    cubic_robustness,
    invariance_report,
    lr_sweep,
    run,
)

SMALL = dict(dataset="synthetic", synthetic_n=80, synthetic_d=10, batch_size=20, epochs=3, seed=0)


def test_run_epochs_zero_initial_row_only():
    trace = run(RunConfig(**{**SMALL, "epochs": 0}))
    assert len(trace.rows) == 1
    row = trace.rows[0]
    assert (row.epoch, row.step) == (0, 0)
    assert row.full_train_loss == pytest.approx(math.log(2.0))
    assert row.train_accuracy is not None


def test_run_row_layout_and_ordering():
    trace = run(RunConfig(**SMALL))
    keys = [(r.epoch, r.step) for r in trace.rows]
    assert keys == sorted(keys)
    assert len(keys) == len(set(keys))
    steps_per_epoch = 4  # 80 / 20
    # initial summary + per epoch: steps + one summary
    assert len(trace.rows) == 1 + 3 * (steps_per_epoch + 1)
    summaries = trace.summary_rows()
    assert [r.epoch for r in summaries] == [0, 1, 2, 3]
    assert [r.step for r in summaries] == [0, 5, 5, 5]
    step_rows = [r for r in trace.rows if r.loss is not None]
    assert all(r.lam is not None for r in step_rows)
    assert all(r.full_train_loss is None for r in step_rows)


def test_run_deterministic_csv_bytes():
    a = run(RunConfig(**SMALL)).to_csv()
    b = run(RunConfig(**SMALL)).to_csv()
    assert hashlib.sha256(a.encode()).hexdigest() == hashlib.sha256(b.encode()).hexdigest()


def test_run_seed_changes_trace():
    a = run(RunConfig(**SMALL)).to_csv()
    b = run(RunConfig(**{**SMALL, "seed": 1})).to_csv()
    assert a != b


def test_csv_float_format():
    trace = run(RunConfig(**{**SMALL, "epochs": 1}))
    line = trace.to_csv().splitlines()[1]
    loss_field = line.split(",")[3]
    assert float(loss_field) == pytest.approx(math.log(2.0), rel=1e-16)
    assert len(loss_field.replace(".", "").replace("-", "").lstrip("0")) >= 16


def test_trace_write_includes_metadata(tmp_path):
    trace = run(RunConfig(**{**SMALL, "epochs": 1}))
    out = tmp_path / "trace.csv"
    trace.write(str(out))
    assert out.exists()
    meta = json.loads((out.with_suffix(".csv.meta.json")).read_text())
    assert meta["sampling"] == "permutation-without-replacement"
    assert meta["aborted"] is False
    assert meta["config"]["method"] == "sania-adagrad-sqr"


def test_method_objective_mismatch_rejected():
    with pytest.raises(ConfigError):
        run(RunConfig(**SMALL, method="sania-pcg", objective="nllsq"))
    with pytest.raises(ConfigError):
        run(RunConfig(**SMALL, method="cubic-polyak", objective="logreg"))  # minibatch, no l2


def test_lr_rules_enforced():
    with pytest.raises(ConfigError):
        run(RunConfig(**SMALL, method="adam"))  # baseline without step size
    with pytest.raises(ConfigError):
        run(RunConfig(**SMALL, method="sania-adam-sqr", step_size=0.1))  # lr-free method


def test_unknown_names_rejected():
    with pytest.raises(ConfigError):
        run(RunConfig(**SMALL, method="nope"))
    with pytest.raises(ConfigError):
        run(RunConfig(**{**SMALL, "dataset": "missing-file"}))
    with pytest.raises(ValueError):
        run(RunConfig(**{**SMALL, "objective": "squared-hinge"}))


def test_every_registered_method_runs():
    from sania.methods import METHOD_NAMES, method_needs_lr

    for name in METHOD_NAMES:
        cfg = dict(SMALL, epochs=1, method=name)
        if name == "cubic-polyak":
            cfg["objective"] = "logreg-l2"
        if name.startswith("sania-pcg-nonconvex"):
            cfg["objective"] = "nllsq"
        if method_needs_lr(name):
            cfg["step_size"] = 2.0**-4
        trace = run(RunConfig(**cfg))
        assert not trace.metadata["aborted"]
        assert math.isfinite(trace.final_summary().full_train_loss)


def test_deep_convergence_does_not_abort_polyak_runs():
    # seeds where training interpolates to denormal batch losses mid-run; the
    # run must ride through on zero steps instead of dying on the divide guard
    for method in ("sania-adagrad-sqr", "sania-adam-sqr"):
        for seed in (9, 11):
            cfg = RunConfig(dataset="colon-cancer", method=method, batch_size=16,
                            epochs=10, seed=seed)
            trace = run(cfg)
            assert trace.final_summary().train_accuracy == 1.0


def test_hutchinson_metadata_records_init_batches():
    trace = run(RunConfig(**SMALL, method="sania-hutchinson"))
    assert len(trace.metadata["hutchinson_init_batches"]) == 10


@pytest.mark.filterwarnings("ignore:overflow")
def test_sgd_divergence_aborts_with_partial_trace():
    # the l2 term turns an oversized step size into a geometric weight blowup
    cfg = RunConfig(**{**SMALL, "epochs": 5, "objective": "logreg-l2"},
                    method="sgd", step_size=2.0**40)
    trace = run(cfg)
    assert trace.metadata["aborted"] is True
    assert all(r.loss is None or math.isfinite(r.loss) for r in trace.rows)


def test_invariance_identity_scaling_passes_everywhere():
    for method in ("sania-adagrad-sqr", "sania-adam", "sps"):
        rep = invariance_report(RunConfig(**SMALL, method=method), k=0.0, seed=0)
        assert rep.passed
        assert rep.max_loss_gap == 0.0
        assert rep.max_iterate_gap == 0.0


def test_invariance_requires_zero_start():
    with pytest.raises(ConfigError):
        invariance_report(RunConfig(**{**SMALL, "w0_scale": 1.0}), k=1.0, seed=0)


def test_invariance_report_epoch_table():
    rep = invariance_report(RunConfig(**SMALL), k=2.0, seed=3)
    assert len(rep.epochs) == 4
    assert rep.epochs[0]["epoch"] == 0
    assert rep.max_loss_gap <= 1e-8  # square-root-free metric on dense data


def test_lr_sweep_rejects_parameter_free_methods():
    with pytest.raises(ConfigError):
        lr_sweep(RunConfig(**SMALL), exponents=(-2,))


def test_lr_sweep_singleton_grid():
    table = lr_sweep(RunConfig(**SMALL, method="adagrad"), exponents=(-3,))
    assert len(table.rows) == 1
    assert table.rows[0].gamma == 2.0**-3
    assert table.best_exponent == -3


def test_lr_sweep_reports_best_gamma():
    table = lr_sweep(RunConfig(**SMALL, method="adam"), exponents=(-2, -6, -10))
    assert table.best_exponent in (-2, -6, -10)
    finite_losses = [r.final_loss for r in table.rows if not r.aborted]
    assert min(finite_losses) == table.best().final_loss


def test_default_sweep_grid():
    assert DEFAULT_SWEEP_EXPONENTS == (-2, -4, -6, -8, -10, -12, -14, -16)


def test_lr_sweep_full_grid_on_colon_cancer():
    cfg = RunConfig(dataset="colon-cancer", method="adam", batch_size=16, epochs=2, seed=0)
    table = lr_sweep(cfg)
    assert len(table.rows) == 8
    assert table.best_exponent is not None


def test_cubic_robustness_report_structure():
    cfg = RunConfig(dataset="synthetic", synthetic_n=60, synthetic_d=12, mu_reg=1e-4, seed=0)
    rep = cubic_robustness(cfg, max_iterations=60)
    labels = [r.label for r in rep.rows]
    assert labels.count("cubic-polyak") == 3
    assert labels.count("grad-reg-newton") == 2
    assert {r.parameter for r in rep.rows if r.label == "grad-reg-newton"} == {0.1, 0.0004}
    assert rep.metadata["dataset_choice"] == "synthetic"
    # the three optimum estimates: computed minimum, minus 0.03, and zero
    params = sorted(r.parameter for r in rep.rows if r.label == "cubic-polyak")
    assert params[1] == 0.0
    assert params[2] == pytest.approx(rep.reference_minimum)
    assert params[0] == pytest.approx(rep.reference_minimum - 0.03)


def test_cubic_robustness_accepts_explicit_grids():
    cfg = RunConfig(dataset="synthetic", synthetic_n=40, synthetic_d=8, mu_reg=1e-4)
    rep = cubic_robustness(cfg, f_hat_grid=(0.3361, 0.3, 0.0), l2_baselines=(0.1,), max_iterations=5)
    assert [r.parameter for r in rep.rows if r.label == "cubic-polyak"] == [0.3361, 0.3, 0.0]


def test_scaled_run_differs_from_original():
    base = run(RunConfig(**SMALL))
    scaled = run(replace(RunConfig(**SMALL), scale_k=2.0, scale_seed=1, method="sania-adagrad"))
    assert base.to_csv() != scaled.to_csv()

import json

from click.testing import CliRunner

from sania.cli import main

SMALL = [
    "--dataset", "synthetic", "--synthetic-n", "60", "--synthetic-d", "8",
    "--batch-size", "15", "--epochs", "2",
]


def test_run_command_writes_trace(tmp_path):
    out = tmp_path / "trace.csv"
    result = CliRunner().invoke(main, ["run", *SMALL, "--output", str(out)])
    assert result.exit_code == 0, result.output
    assert "epoch    2" in result.output
    header = out.read_text().splitlines()[0]
    assert header.startswith("epoch,step,loss,full_train_loss")
    assert (tmp_path / "trace.csv.meta.json").exists()


def test_run_command_export_scaled(tmp_path):
    exported = tmp_path / "scaled.libsvm"
    result = CliRunner().invoke(
        main, ["run", *SMALL, "--scale-k", "1.0", "--export-scaled", str(exported)]
    )
    assert result.exit_code == 0, result.output
    assert exported.exists()
    from sania.datasets import load_libsvm

    assert load_libsvm(exported).rows == 60


def test_run_command_machine_readable_error():
    result = CliRunner().invoke(main, ["run", *SMALL, "--method", "adam"], catch_exceptions=False)
    assert result.exit_code == 1
    err = json.loads(result.output.strip().splitlines()[-1])
    assert err["error"] == "ConfigError"
    assert "step_size" in err["message"]


def test_invariance_command_reports_verdict():
    result = CliRunner().invoke(main, ["invariance", *SMALL, "--k", "2.0"])
    assert result.exit_code == 0, result.output
    assert "verdict: PASS" in result.output


def test_plot_emission(tmp_path):
    png = tmp_path / "loss.png"
    result = CliRunner().invoke(main, ["run", *SMALL, "--plot", str(png)])
    assert result.exit_code == 0, result.output
    assert png.exists() and png.stat().st_size > 0
    png2 = tmp_path / "pair.png"
    result = CliRunner().invoke(main, ["invariance", *SMALL, "--k", "1.0", "--plot", str(png2)])
    assert result.exit_code == 0, result.output
    assert png2.exists() and png2.stat().st_size > 0


def test_invariance_command_negative_control():
    result = CliRunner().invoke(
        main, ["invariance", *SMALL, "--epochs", "10", "--k", "2.0", "--method", "sania-adagrad"]
    )
    assert result.exit_code == 0, result.output
    assert "verdict: FAIL" in result.output


def test_lr_sweep_command():
    result = CliRunner().invoke(
        main, ["lr-sweep", *SMALL, "--method", "adagrad", "--exponent", "-2", "--exponent", "-8"]
    )
    assert result.exit_code == 0, result.output
    assert "best gamma: 2^" in result.output


def test_lr_sweep_rejects_parameter_free():
    result = CliRunner().invoke(main, ["lr-sweep", *SMALL])
    assert result.exit_code == 1
    err = json.loads(result.output.strip().splitlines()[-1])
    assert err["error"] == "ConfigError"


def test_cubic_robustness_command():
    result = CliRunner().invoke(
        main,
        ["cubic-robustness", "--dataset", "synthetic", "--synthetic-n", "40",
         "--synthetic-d", "8", "--max-iterations", "40"],
    )
    assert result.exit_code == 0, result.output
    assert "cubic-polyak" in result.output
    assert "grad-reg-newton" in result.output


def test_unknown_method_is_usage_error():
    result = CliRunner().invoke(main, ["run", "--method", "warp-drive"])
    assert result.exit_code == 2

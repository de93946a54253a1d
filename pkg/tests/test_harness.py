import os

import numpy as np
import pytest

from codedlat import cli, harness
from codedlat.distributions import Exponential
from codedlat.simulator import ClusterConfig, KSplit


def write(tmp_path, text, name="sweep.config"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


FULL_CONFIG = """
# comment lines and blank lines are ignored
experiment = gain-sweep
lambda.grid = 0.2, 0.5
code.n = 4, 9
code.k = 2, 3          # aligned lists
dist.family = shifted-exponential
dist.shift = 0.1
sim.L = 300
sim.seed = 17
sim.warmup_jobs = 400
sim.measured_jobs = 800
out.path = rows.csv
"""


def test_load_config_full(tmp_path):
    spec = harness.load_config(write(tmp_path, FULL_CONFIG))
    assert spec.experiment == "gain-sweep"
    assert spec.lam_grid == (0.2, 0.5)
    # code.d omitted: inferred from n / k
    assert spec.codes == ((4, 2, 2), (9, 3, 3))
    assert spec.family == "shifted-exponential"
    assert spec.shift == 0.1
    assert (spec.L, spec.seed) == (300, 17)
    assert spec.out_path == "rows.csv"


def test_minimal_config_defers_to_simulator_defaults(tmp_path):
    spec = harness.load_config(write(
        tmp_path, "experiment = bound-check\nlambda.grid = 0.9\ncode.k = 4\ncode.d = 2\n"
    ))
    assert spec.L is None and spec.warmup_jobs is None and spec.measured_jobs is None
    config = ClusterConfig(
        lam=0.9, policy=KSplit(k=4, d=2), service=Exponential(rate=4.0),
        L=spec.L, warmup_jobs=spec.warmup_jobs,
    )
    assert config.L == 2000
    assert config.warmup_jobs == 20 * config.L


@pytest.mark.parametrize(
    "text,needle",
    [
        ("experiment = gain-sweep\nlambda.grid =\ncode.k = 2\n", "lambda grid empty"),
        ("experiment = gain-sweep\ncode.k = 2\n", "lambda grid empty"),
        ("experiment = gain-sweep\nlambda.grid = 0.5\ncode.k = 2\nsim.L = 9\nsim.L = 9\n",
         "line 5: duplicate key 'sim.L'"),
        ("experiment = gain-sweep\nlambda.grid = 0.5\ncode.kk = 2\n", "unknown key 'code.kk'"),
        ("experiment = gain-sweep\nlambda.grid = 0.5\ncode.k = 2\njunk\n", "expected key=value"),
        ("experiment = gain-sweep\nlambda.grid = 0.5\ncode.k = 2\nsim.L = ten\n",
         "expects int"),
        ("lambda.grid = 0.5\ncode.k = 2\n", "missing key 'experiment'"),
        ("experiment = warp-drive\nlambda.grid = 0.5\ncode.k = 2\n", "unknown experiment"),
        ("experiment = gain-sweep\nlambda.grid = 1.5\ncode.k = 2\n", "outside (0, 1)"),
        ("experiment = gain-sweep\nlambda.grid = 0.5\n", "missing key 'code.k'"),
        ("experiment = gain-sweep\nlambda.grid = 0.5\ncode.n = 4, 6\ncode.k = 2, 3, 4\n",
         "expected 3 to match"),
        ("experiment = batch-sampling\nlambda.grid = 0.5\ncode.n = 20\ncode.k = 10\n",
         "k < n < 2k"),
        ("experiment = tail-check\nlambda.grid = 0.5\ncode.k = 4\ncode.d = 2\n"
         "dist.family = weibull\n", "unsupported for tail-check"),
        ("experiment = gain-sweep\nlambda.grid = 0.5\ncode.n = 7\ncode.k = 3\ncode.d = 2\n",
         "fanout n must equal d*k"),
    ],
)
def test_config_errors(tmp_path, text, needle):
    with pytest.raises(harness.ConfigError) as err:
        harness.load_config(write(tmp_path, text))
    assert needle in str(err.value)


SMALL_SPEC = harness.SweepSpec(
    "gain-sweep", (0.3, 0.7), ((4, 2, 2),), "exponential",
    L=200, seed=3, warmup_jobs=300, measured_jobs=1_500,
)


def test_serial_and_parallel_runs_yield_identical_csv():
    serial = harness.render_csv(harness.run_sweep(SMALL_SPEC))
    again = harness.render_csv(harness.run_sweep(SMALL_SPEC))
    parallel = harness.render_csv(harness.run_sweep(SMALL_SPEC, workers=3))
    assert serial == again
    assert serial == parallel


def test_rows_sorted_and_pass_flags_recomputable():
    mixed = harness.SweepSpec(
        "bound-check", (0.7, 0.5), ((8, 4, 2), (4, 2, 2)), "exponential",
        L=200, seed=1, warmup_jobs=500, measured_jobs=2_000,
    )
    rows = harness.run_sweep(mixed)
    keys = [row.sort_key() for row in rows]
    assert keys == sorted(keys)
    for row in rows:
        assert row.passed == (row.sim_mean <= row.theory + 3.0 * row.sim_se)


def test_gain_rows_carry_both_arm_means():
    rows = harness.run_sweep(SMALL_SPEC)
    for row in rows:
        assert row.aux_a is not None and row.aux_b is not None
        assert row.sim_mean == pytest.approx(row.aux_a - row.aux_b, abs=1e-12)
        assert row.passed == (
            row.sim_mean > 0 and row.sim_mean >= row.theory - 3.0 * row.sim_se
        )


def test_write_csv_layout(tmp_path):
    rows = harness.run_sweep(SMALL_SPEC)
    path = tmp_path / "out" / "rows.csv"
    harness.write_csv(rows, path)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == ",".join(harness.CSV_COLUMNS)
    assert len(lines) == 1 + len(rows)
    first = dict(zip(harness.CSV_COLUMNS, lines[1].split(",")))
    assert first["experiment"] == "gain-sweep"
    assert first["t"] == ""  # not a tail row
    assert first["passed"] in ("0", "1")
    # numeric cells parse back and match the row to 9 significant digits
    assert float(first["sim_mean"]) == pytest.approx(rows[0].sim_mean, rel=1e-8)


def test_presets_cover_the_advertised_grid():
    gain_names = ("fig3a", "fig3b", "fig4")
    expected_codes = ((4, 2, 2), (6, 3, 2), (8, 4, 2), (9, 3, 3))
    expected_grid = tuple(round(0.1 * i, 1) for i in range(1, 10))
    families = {
        "fig3a": ("exponential", 0.0, 1.0),
        "fig3b": ("shifted-exponential", 0.1, 1.0),
        "fig4": ("weibull", 0.0, 1.5),
    }
    for name in gain_names:
        spec = harness.preset(name)
        assert spec.experiment == "gain-sweep"
        assert spec.codes == expected_codes
        assert spec.lam_grid == expected_grid
        family, shift, shape = families[name]
        assert (spec.family, spec.shift, spec.shape) == (family, shift, shape)
    fig5 = harness.preset("fig5")
    assert fig5.experiment == "batch-sampling"
    assert fig5.codes == ((14, 10, 1),)
    assert fig5.lam_grid == (0.8, 0.85, 0.9)
    assert fig5.L == 2000
    with pytest.raises(harness.ConfigError):
        harness.preset("fig9")


# ---------------------------------------------------------------------------
# CLI


def test_cli_bound_prints_branch_and_value(capsys):
    assert cli.main(["bound", "--k", "8", "--lambda", "0.9"]) == 0
    out = capsys.readouterr().out
    assert "branch = Phi3" in out
    value = float(next(line.split("=")[1] for line in out.splitlines()
                       if line.startswith("value")))
    assert value == pytest.approx(0.761, abs=5e-4)


def test_cli_bound_tail_mode(capsys):
    assert cli.main(["bound", "--k", "4", "--lambda", "0.5",
                     "--epsilon", "0.01", "--t", "1.5"]) == 0
    assert "0.437266" in capsys.readouterr().out


def test_cli_sweep_empty_lambda_grid_exits_2(tmp_path, capsys):
    cfg = write(tmp_path, "experiment = gain-sweep\nlambda.grid =\ncode.k = 2\n")
    assert cli.main(["sweep", "--config", cfg]) == 2
    assert "lambda grid empty" in capsys.readouterr().err


def test_cli_sweep_unknown_key_exits_2(tmp_path, capsys):
    cfg = write(tmp_path, "experiment = gain-sweep\nlambda.grid = 0.5\nrcode.k = 2\n")
    assert cli.main(["sweep", "--config", cfg]) == 2
    assert "rcode.k" in capsys.readouterr().err


def test_cli_sweep_writes_csv(tmp_path, capsys):
    out = str(tmp_path / "rows.csv")
    code = cli.main([
        "sweep", "--experiment", "bound-check", "--k", "2", "--d", "2",
        "--lambda", "0.5", "--L", "200", "--warmup-jobs", "300",
        "--measured-jobs", "1000", "--out", out,
    ])
    assert code == 0
    assert os.path.exists(out)
    assert "1 rows" in capsys.readouterr().out


def test_cli_out_dir_env_fallback(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("CODEDLAT_OUT", str(tmp_path))
    code = cli.main([
        "sweep", "--experiment", "residual-check", "--lambda", "0.5",
        "--measured-jobs", "20000",
    ])
    assert code == 0
    assert os.path.exists(tmp_path / "residual-check.csv")


def test_gain_sweep_rejects_degenerate_split():
    with pytest.raises(harness.ConfigError):
        harness.SweepSpec("gain-sweep", (0.4,), ((2, 1, 2),))


def test_cli_compare_exit_1_on_failed_row(tmp_path, capsys, monkeypatch):
    failed = harness.ComparisonRow(
        "bound-check", "exponential", 1.0, 0.0, 8, 4, 2.0, 0.9, None, 0,
        sim_mean=1.5, sim_se=0.01, theory=1.2, branch="Phi3", passed=False,
    )
    monkeypatch.setattr(harness, "run_sweep", lambda spec, workers=None: [failed])
    out = str(tmp_path / "fail.csv")
    cfg = write(tmp_path, "experiment = bound-check\nlambda.grid = 0.9\ncode.k = 4\n")
    assert cli.main(["compare", "--config", cfg, "--out", out]) == 1
    captured = capsys.readouterr().out
    assert "FAIL" in captured
    assert os.path.exists(out)  # failing rows still land in the CSV


def test_cli_compare_exit_0_when_all_rows_pass(tmp_path, capsys):
    passing = write(tmp_path, (
        "experiment = residual-check\nlambda.grid = 0.5\n"
        "sim.measured_jobs = 40000\n"
    ), name="ok.config")
    out = str(tmp_path / "ok.csv")
    assert cli.main(["compare", "--config", passing, "--out", out]) == 0


def test_cli_simulate_smoke(capsys):
    code = cli.main([
        "simulate", "--policy", "least", "--k", "2", "--d", "2",
        "--lambda", "0.3", "--L", "200", "--warmup-jobs", "300",
        "--measured-jobs", "2000",
    ])
    assert code == 0
    out = capsys.readouterr().out
    assert "mean =" in out and "jobs = 2000" in out


def test_cli_simulate_invalid_lambda_exits_2(capsys):
    code = cli.main([
        "simulate", "--policy", "naive", "--lambda", "1.5", "--L", "100",
    ])
    assert code == 2
    assert "config error" in capsys.readouterr().err

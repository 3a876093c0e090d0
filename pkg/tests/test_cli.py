import json
import os

import numpy as np
import pytest

from moddev import cli
from moddev.sim import SimulationAbort

SMALL = ["--n-paths", "200", "--checkpoints", "1,2"]


def _run(argv, capsys=None):
    code = cli.main(argv)
    if capsys is None:
        return code
    out = capsys.readouterr()
    return code, out.out, out.err


def _body(path):
    """File contents below the leading comment lines."""
    return "".join(l for l in path.read_text().splitlines(True) if not l.startswith("#"))


def _listing(root):
    return sorted(os.path.relpath(os.path.join(d, f), root)
                  for d, _, files in os.walk(root) for f in files)


# ---------------------------------------------------------------- rate


def test_rate_on_degenerate_q(capsys):
    code, out, _ = _run(["rate", "--Q", "diag:2,0", "--Y", "1,0"], capsys)
    assert code == 0 and "J = 0.25" in out


def test_rate_off_range_is_infinite_and_regularized_is_finite(capsys):
    code, out, _ = _run(["rate", "--Q", "diag:2,0", "--Y", "0,1", "--gamma", "0.5"], capsys)
    assert code == 0 and "J = inf" in out and "J_gamma = 1.0" in out


def test_rate_contraction(capsys):
    code, out, _ = _run(["rate", "--Q", "1,0;0,3", "--T", "1,1", "--y", "2"], capsys)
    assert code == 0 and "contracted = 0.5" in out


@pytest.mark.parametrize("argv", [
    ["rate", "--Q", "1,2;3"],
    ["rate", "--Q", "diag:1", "--Y", "1,2"],
    ["rate", "--Q", "diag:1", "--Y", "1", "--gamma", "-1"],
    ["rate", "--Q", "diag:1", "--T", "1"],
])
def test_rate_bad_input_is_config_error(argv, capsys):
    code, _, err = _run(argv, capsys)
    assert code == cli.EXIT_CONFIG and "configuration error" in err


# ---------------------------------------------------------------- example


def test_example_is_byte_reproducible(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert _run(["example", "cubic", "--seed", "7", "--out", str(a)] + SMALL) == 0
    assert _run(["example", "cubic", "--seed", "7", "--out", str(b)] + SMALL) == 0
    names = _listing(a)
    assert names == _listing(b) and "cubic_summary.json" in names
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes()
    capsys.readouterr()


def test_example_seed_changes_curves(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    _run(["example", "cubic", "--seed", "1", "--out", str(a)] + SMALL)
    _run(["example", "cubic", "--seed", "2", "--out", str(b)] + SMALL)
    assert _body(a / "cubic_norm_S_1.csv") != _body(b / "cubic_norm_S_1.csv")


def test_example_langevin_reports_controllability(tmp_path, capsys):
    code, out, _ = _run(["example", "langevin", "--out", str(tmp_path)] + SMALL, capsys)
    assert code == 0 and "controllability: nonsingular" in out
    report = (tmp_path / "langevin_report.txt").read_text()
    assert "controllability: nonsingular" in report
    summary = json.loads((tmp_path / "langevin_summary.json").read_text())
    # Q = A^{-1} B B^T A^{-T} for the unit Langevin system
    np.testing.assert_allclose(summary["Q"], [[1, 0], [0, 0]], atol=1e-10)
    assert summary["corrector"] == "closed_form" and summary["rank"] == 1


def test_example_outputs_carry_hash_and_seed(tmp_path):
    _run(["example", "ou-linear", "--seed", "5", "--out", str(tmp_path)] + SMALL)
    summary = json.loads((tmp_path / "ou-linear_summary.json").read_text())
    for name in _listing(tmp_path):
        if name.endswith(".csv") or name.endswith(".txt"):
            first = (tmp_path / name).read_text().splitlines()[0]
            assert first.startswith(f"# config_hash={summary['config_hash']} seed=5")


def test_example_json_format(tmp_path):
    _run(["example", "ou-linear", "--format", "json", "--out", str(tmp_path)] + SMALL)
    data = json.loads((tmp_path / "ou-linear_norm_S_1.json").read_text())
    assert data["reference"] == pytest.approx(-0.5) and len(data["rows"]) == 2
    assert data["rows"][0]["t"] == 1.0 and data["seed"] == 0


def test_example_writes_only_into_output_dir(tmp_path, monkeypatch):
    work = tmp_path / "work"
    work.mkdir()
    monkeypatch.chdir(work)
    out = tmp_path / "out"
    _run(["example", "ou-quadratic", "--out", str(out)] + SMALL)
    assert _listing(work) == []
    assert set(_listing(tmp_path)) == {os.path.join("out", n) for n in _listing(out)}


def test_output_dir_from_environment(tmp_path, monkeypatch):
    env = tmp_path / "env"
    monkeypatch.setenv(cli.ENV_OUTPUT, str(env))
    monkeypatch.chdir(tmp_path)
    assert _run(["example", "ou-linear"] + SMALL) == 0
    assert "ou-linear_summary.json" in _listing(env)
    assert not (tmp_path / "moddev-output").exists()


def test_scenario_file_with_run_section(tmp_path):
    cfg = tmp_path / "odd.ini"
    cfg.write_text("[scenario]\nlabel = odd\ndrift = odd-cubic\ndrift_params = 1,1\n"
                   "observable = cube\n[run]\nn_paths = 50\ncheckpoints = 1,2\nseed = 3\n")
    out = tmp_path / "out"
    assert _run(["example", str(cfg), "--out", str(out)]) == 0
    summary = json.loads((out / "odd_summary.json").read_text())
    assert summary["seed"] == 3 and summary["corrector"] == "poisson_1d"


def test_linear_scenario_file_uses_affine_route(tmp_path):
    cfg = tmp_path / "lin.ini"
    cfg.write_text("[scenario]\nlabel = lin\ndim = 2\ndrift = linear\n"
                   "drift_params = -1,0.5,0,-2\ndiffusion_params = 1,0,0,1\n")
    out = tmp_path / "out"
    assert _run(["example", str(cfg), "--out", str(out)] + SMALL) == 0
    summary = json.loads((out / "lin_summary.json").read_text())
    assert summary["corrector"] == "affine"
    np.testing.assert_allclose(summary["Q"], [[1.0625, 0.125], [0.125, 0.25]], rtol=1e-10)


# ---------------------------------------------------------------- exit codes


@pytest.mark.parametrize("extra", [
    ["--kappa", "1.2"],
    ["--kappa", "0.5"],
    ["--n-paths", "0"],
    ["--checkpoints", "2,1"],
    ["--workers", "0"],
])
def test_bad_run_values_exit_2(tmp_path, extra, capsys):
    code, _, err = _run(["example", "cubic", "--out", str(tmp_path)] + extra, capsys)
    assert code == cli.EXIT_CONFIG and "configuration error" in err
    assert _listing(tmp_path) == []


def test_unknown_scenario_and_keys_exit_2(tmp_path, capsys):
    assert _run(["example", "no-such", "--out", str(tmp_path)], capsys)[0] == cli.EXIT_CONFIG
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[scenario]\nbuiltin = cubic\n[run]\nspeed = 3\n")
    code, _, err = _run(["example", "--config", str(cfg), "--out", str(tmp_path / "o")], capsys)
    assert code == cli.EXIT_CONFIG and "speed" in err


@pytest.mark.parametrize("text", [
    "[scenario]\ndrift = linear\ndrift_params = 1\n",
    "[scenario]\ndrift = odd-cubic\ndrift_params = 1,-1\n",
])
def test_anti_dissipative_scenario_exits_3(tmp_path, text, capsys):
    cfg = tmp_path / "anti.ini"
    cfg.write_text(text)
    code, _, err = _run(["example", str(cfg), "--out", str(tmp_path / "o")] + SMALL, capsys)
    assert code == cli.EXIT_SCENARIO and "scenario failure" in err
    assert not (tmp_path / "o").exists()


def test_simulation_abort_exits_4(tmp_path, monkeypatch, capsys):
    def boom(*a, **k):
        raise SimulationAbort("3 of 200 paths produced non-finite values")

    monkeypatch.setattr(cli, "simulate_batch", boom)
    code, _, err = _run(["example", "cubic", "--out", str(tmp_path)] + SMALL, capsys)
    assert code == cli.EXIT_ABORT and "aborted" in err


# ---------------------------------------------------------------- run configuration


def test_run_config_hash_round_trip():
    rc = cli.RunConfig(command="example", scenario="cubic", kappa=0.7, delta=(0.5, 1.0),
                       checkpoints=(1.0, 2.0), n_paths=10, seed=4, output="somewhere")
    back = cli.RunConfig.from_json(rc.to_json(), output="elsewhere")
    assert back.config_hash == rc.config_hash and back.canonical() == rc.canonical()
    assert cli.RunConfig(command="example", scenario="cubic", seed=5).config_hash != \
        cli.RunConfig(command="example", scenario="cubic", seed=6).config_hash
    with pytest.raises(cli.ConfigError):
        cli.RunConfig.from_json('{"command": "rate", "colour": 1}')


def test_parse_matrix_forms():
    np.testing.assert_array_equal(cli.parse_matrix("diag:1,2"), np.diag([1.0, 2.0]))
    np.testing.assert_array_equal(cli.parse_matrix("1,2;3,4"), [[1, 2], [3, 4]])
    with pytest.raises(ValueError):
        cli.parse_matrix("1,2;3")


def test_output_dir_rejects_unsafe_names(tmp_path):
    out = cli.OutputDir(tmp_path)
    for name in ("../x", ".hidden", "a/b"):
        with pytest.raises(ValueError):
            out.write(name, "x")
    out.write("ok.txt", "x")
    assert _listing(tmp_path) == ["ok.txt"]


# ---------------------------------------------------------------- other commands


def test_simulate_csv_and_binary(tmp_path):
    assert _run(["simulate", "ou-linear", "--out", str(tmp_path)] + SMALL) == 0
    assert _run(["simulate", "ou-linear", "--binary", "--out", str(tmp_path)] + SMALL) == 0
    text = (tmp_path / "ou-linear_ensemble.csv").read_text().splitlines()
    assert text[0].startswith("# config_hash=")
    assert (tmp_path / "ou-linear_ensemble.bin").stat().st_size > 0


def test_verify_writes_bound_table(tmp_path, capsys):
    code, out, _ = _run(["verify", "ou-linear", "--out", str(tmp_path)] + SMALL, capsys)
    assert code == 0 and "[pass]" in out
    lines = (tmp_path / "ou-linear_verify.csv").read_text().splitlines()
    assert lines[0].startswith("# config_hash=")
    assert lines[1].split(",")[:3] == ["t", "eps", "cond_i"]
    assert len(lines) == 2 + 2


def test_estimator_and_report(tmp_path, capsys):
    code, out, _ = _run(["estimator", "--n-paths", "300", "--checkpoints", "5,10", "--h", "0.05",
                         "--out", str(tmp_path)], capsys)
    assert code == 0 and "reference -0.25" in out
    for name in ("estimator_error_delta=1.csv", "estimator_martingale_delta=1.csv",
                 "estimator_bracket_eps=0.2.csv"):
        assert (tmp_path / name).read_text().startswith("# config_hash=")
    code, out, _ = _run(["report", str(tmp_path)], capsys)
    assert code == 0 and "estimator_summary.json: command=estimator" in out


def test_report_on_missing_directory(tmp_path, capsys):
    assert _run(["report", str(tmp_path / "none")], capsys)[0] == cli.EXIT_CONFIG


def test_module_entry_point():
    import subprocess
    import sys

    r = subprocess.run([sys.executable, "-m", "moddev", "rate", "--Q", "diag:2,0", "--Y", "1,0"],
                       capture_output=True, text=True, check=True)
    assert r.stdout.strip() == "J = 0.25"

import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from parisian_levy import Scenario, cli, reference_models, scale_context
from parisian_levy.cli import EXIT_FAIL, EXIT_OK, EXIT_USAGE, main
from parisian_levy.verification import CheckKind, CheckSpec, Tolerance


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def table(text):
    rows = list(csv.reader(io.StringIO(text)))
    return rows[0], rows[1:]


def test_eval_at_upper_level_is_one(capsys):
    code, out, _ = run(capsys, "eval", "g", "--q", "0", "--theta", "0", "--a", "-1", "--b", "2", "--x", "2")
    assert code == EXIT_OK
    head, rows = table(out)
    assert head == ["identity", "q", "r", "a", "b", "x", "theta", "value"]
    assert float(rows[0][-1]) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("model", ["brownian", "cramer_lundberg", "jump_diffusion"])
def test_eval_upcross_certain(capsys, model):
    code, out, _ = run(capsys, "eval", "upcross_laplace", "--model", model, "--q", "0", "--theta", "0",
                       "--b", "2", "--x", "0.5")
    assert code == EXIT_OK
    assert float(table(out)[1][0][-1]) == pytest.approx(1.0, abs=1e-9)


def test_eval_dividends_above_barrier(capsys):
    common = ("--a", "-1", "--b", "2")
    _, at_b, _ = run(capsys, "eval", "j_hat", "--x", "2", *common)
    _, above, _ = run(capsys, "eval", "j_hat", "--x", "3", *common)
    assert float(table(above)[1][0][-1]) == pytest.approx(float(table(at_b)[1][0][-1]) + 1.0, rel=1e-12)


def test_eval_trace_and_pretty(capsys):
    code, out, err = run(capsys, "eval", "g", "h", "--a", "-1", "--b", "2", "--trace")
    assert code == EXIT_OK
    assert len(table(out)[1]) == 2
    assert "# g (" in err and "H(b)" in err
    code, out, _ = run(capsys, "eval", "g", "--a", "-1", "--b", "2", "--format", "pretty", "--trace")
    assert "identity" in out.splitlines()[0] and "# g" in out


def test_eval_precondition_names_the_branch(capsys):
    code, _, err = run(capsys, "eval", "g", "--a", "-1", "--b", "2", "--x", "3")
    assert code == EXIT_USAGE
    assert "two-sided exit" in err and "x <= b" in err
    code, _, err = run(capsys, "eval", "u1", "--a", "-1", "--x", "0.5")
    assert code == EXIT_USAGE and "x <= 0" in err


def test_model_file(capsys, tmp_path):
    path = tmp_path / "model.json"
    path.write_text(json.dumps(reference_models()["cramer_lundberg"].to_config()))
    _, by_file, _ = run(capsys, "eval", "g", "--model", str(path), "--a", "-1", "--b", "2")
    _, by_name, _ = run(capsys, "eval", "g", "--a", "-1", "--b", "2")
    assert by_file == by_name
    path.write_text('{"gamma": 1, "colour": 3}')
    code, _, err = run(capsys, "eval", "g", "--model", str(path), "--a", "-1", "--b", "2")
    assert code == EXIT_USAGE and "colour" in err
    code, _, _ = run(capsys, "eval", "g", "--model", "no_such_model", "--a", "-1", "--b", "2")
    assert code == EXIT_USAGE


def test_sweep_x_is_monotone(capsys):
    code, out, _ = run(capsys, "sweep", "g", "--var", "x", "--from", "-1", "--to", "2", "--steps", "31",
                       "--a", "-1", "--b", "2")
    assert code == EXIT_OK
    head, rows = table(out)
    assert head == ["x", "g"]
    g = np.array([float(r[1]) for r in rows])
    assert np.all(np.diff(g) >= -1e-12)
    assert g[-1] == pytest.approx(1.0)


def _sweep_a(capsys, x, lo, hi, steps):
    _, out, _ = run(capsys, "sweep", "g", "--var", "a", "--from", str(lo), "--to", str(hi),
                    "--steps", str(steps), "--b", "2", "--x", str(x))
    _, rows = table(out)
    ctx = scale_context(reference_models()["cramer_lundberg"], 0.05)
    limit = float(ctx.W(x) / ctx.W(2.0))
    return np.array([float(r[0]) for r in rows]), np.array([float(r[1]) for r in rows]) - limit


def test_sweep_a_recovers_classical_exit(capsys):
    a, err = _sweep_a(capsys, 1.5, -5, -0.01, 12)
    assert abs(err[-1]) < 1e-3
    assert np.all(np.diff(np.abs(err)) <= 0)
    # the approach is first order in |a|, with a constant that grows as x moves away from b
    a, err = _sweep_a(capsys, 0.0, -0.01, -0.0001, 3)
    np.testing.assert_allclose(err / -a, err[0] / -a[0], rtol=0.02)


def test_sweep_theta_decreases_to_no_bailout(capsys):
    _, out, _ = run(capsys, "sweep", "upcross_laplace", "upcross_no_bailout", "--var", "theta",
                    "--from", "0", "--to", "400", "--steps", "41", "--b", "2", "--x", "0.5")
    _, rows = table(out)
    up = np.array([float(r[1]) for r in rows])
    assert np.all(np.diff(up) <= 1e-12)
    assert up[-1] == pytest.approx(float(rows[-1][2]), rel=1e-2)


@pytest.mark.parametrize("args", [
    ("--from", "1", "--to", "1", "--steps", "5"),
    ("--from", "0", "--to", "1", "--steps", "0"),
    ("--from", "0", "--to", "1", "--steps", "1"),
])
def test_sweep_rejects_degenerate_grids(capsys, args):
    code, _, err = run(capsys, "sweep", "g", "--var", "x", *args, "--a", "-1", "--b", "2")
    assert code == EXIT_USAGE and "error" in err


def test_simulate_table(capsys):
    code, out, _ = run(capsys, "simulate", "g", "h", "--a", "-1", "--b", "2", "--paths", "4000")
    assert code == EXIT_OK
    head, rows = table(out)
    assert head[:2] == ["target", "q"] and head[-4:] == ["mean", "std_error", "n", "bias_note"]
    assert [r[0] for r in rows] == ["g", "h"]
    assert all(r[-2] == "4000" for r in rows)


def test_simulate_trace(capsys):
    code, out, _ = run(capsys, "simulate", "g", "--a", "-1", "--b", "2", "--paths", "1", "--trace")
    assert code == EXIT_OK
    lines = out.splitlines()
    assert lines and lines[-1].split()[1] in ("HIT_A", "HIT_B", "HORIZON")
    code, _, _ = run(capsys, "simulate", "g", "--a", "-1", "--b", "2", "--paths", "5", "--trace")
    assert code == EXIT_USAGE


def test_simulate_rejections(capsys):
    # q = 0 without a horizon has no almost surely finite stop
    code, _, err = run(capsys, "simulate", "f", "--q", "0", "--a", "-1", "--b", "2", "--paths", "10")
    assert code == EXIT_USAGE and "horizon" in err
    code, _, _ = run(capsys, "simulate", "nope", "--a", "-1", "--b", "2")
    assert code == EXIT_USAGE
    code, _, err = run(capsys, "simulate", "g", "--model", "jump_diffusion", "--a", "-1", "--b", "2",
                       "--paths", "10")
    assert code == EXIT_USAGE and "euler_step" in err


def test_verify_analytic_suite(capsys, tmp_path):
    out = tmp_path / "report.csv"
    code, _, _ = run(capsys, "verify", "--suite", "analytic", "-o", str(out))
    assert code == EXIT_OK
    head, rows = table(out.read_text())
    assert head == ["check", "name", "analytic", "estimate", "std_error", "abs_err", "verdict"]
    assert rows and all(r[-1] == "PASS" for r in rows)
    assert all(r[0] != "MCAgreement" for r in rows)


def test_verify_failure_exit_code(capsys, monkeypatch):
    bad = CheckSpec("always_off", CheckKind.ALGEBRAIC_IDENTITY, Scenario(q=0.1, r=1.0),
                    Tolerance(abs=1e-9), compare=lambda m, s: (0.0, 1.0))
    monkeypatch.setattr(cli, "default_suite", lambda ubv=True: [bad])
    code, _, err = run(capsys, "verify", "--suite", "analytic")
    assert code == EXIT_FAIL and "always_off" in err


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "parisian_levy.cli", "--version"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "parisian-levy" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "parisian_levy.cli", "eval"], capture_output=True, text=True)
    assert proc.returncode == EXIT_USAGE

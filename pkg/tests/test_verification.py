import csv
import io
import math

import pytest

from parisian_levy import Scenario
from parisian_levy.simulation.simulator import SimConfig
from parisian_levy.verification import (
    CSV_COLUMNS,
    CheckKind,
    CheckSpec,
    RuntimeClass,
    Tolerance,
    default_suite,
    run_suite,
)

S = Scenario(q=0.05, r=1.0, a=-1.0, b=2.0, x=0.0)
CFG = SimConfig(20_000, seed=7)


def _algebraic(name, compare, tol=1e-9):
    return CheckSpec(name, CheckKind.ALGEBRAIC_IDENTITY, S, Tolerance(abs=tol), compare=compare)


def test_rejects_empty_and_duplicate_lists():
    with pytest.raises(ValueError):
        run_suite([], CFG)
    spec = _algebraic("same", lambda m, s: (1.0, 1.0))
    with pytest.raises(ValueError, match="unique"):
        run_suite([spec, spec], CFG)


@pytest.mark.parametrize("kwargs", [
    dict(kind=CheckKind.MC_AGREEMENT, tolerance=Tolerance(abs=1e-3), target="g"),
    dict(kind=CheckKind.MC_AGREEMENT, tolerance=Tolerance(sigmas=3.0)),
    dict(kind=CheckKind.ALGEBRAIC_IDENTITY, tolerance=Tolerance(sigmas=3.0)),
    dict(kind=CheckKind.ALGEBRAIC_IDENTITY, tolerance=Tolerance(abs=1e-3, rel=1e-3)),
    dict(kind=CheckKind.BOUND, tolerance=Tolerance(abs=1e-3)),
])
def test_malformed_specs(kwargs):
    with pytest.raises(ValueError):
        CheckSpec("bad", scenario=S, **kwargs)


def test_crash_is_a_failed_check_not_a_failed_suite():
    def boom(model, s):
        raise ZeroDivisionError("kaboom")

    report = run_suite([_algebraic("crash", boom), _algebraic("fine", lambda m, s: (2.0, 2.0))], CFG)
    assert not report.passed
    (bad,) = report.failures
    assert bad.name == "crash" and "ZeroDivisionError: kaboom" in bad.message
    assert math.isnan(bad.analytic)
    assert [r.name for r in report.results] == ["crash", "fine"]


def test_tolerances_and_bounds():
    specs = [
        _algebraic("abs_ok", lambda m, s: (1.0, 1.0 + 1e-10)),
        _algebraic("abs_bad", lambda m, s: (1.0, 1.1)),
        CheckSpec("rel", CheckKind.LIMIT_AGREEMENT, S, Tolerance(rel=1e-3), compare=lambda m, s: (1e6, 1e6 + 10)),
        CheckSpec("bound_ok", CheckKind.BOUND, S, Tolerance(abs=1e-9), compare=lambda m, s: (0.3, 1.0)),
        CheckSpec("bound_bad", CheckKind.BOUND, S, Tolerance(abs=1e-9), compare=lambda m, s: (1.2, 1.0)),
        _algebraic("nan", lambda m, s: (math.nan, 1.0)),
    ]
    verdicts = {r.name: r.passed for r in run_suite(specs, CFG).results}
    assert verdicts == {"abs_ok": True, "abs_bad": False, "rel": True, "bound_ok": True,
                        "bound_bad": False, "nan": False}


def test_mc_check_and_csv_layout():
    specs = [
        CheckSpec("mc_g", CheckKind.MC_AGREEMENT, S, Tolerance(sigmas=4.0), target="g",
                  expected_runtime_class=RuntimeClass.SLOW),
        _algebraic("alg", lambda m, s: (0.5, 0.5)),
    ]
    report = run_suite(specs, CFG)
    rows = list(csv.reader(io.StringIO(report.to_csv())))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert [r[1] for r in rows[1:]] == ["alg", "mc_g"]
    alg, mc = rows[1], rows[2]
    assert alg[0] == "AlgebraicIdentity" and alg[4] == ""   # no standard error
    assert mc[0] == "MCAgreement" and float(mc[4]) > 0
    assert all(r[-1] in ("PASS", "FAIL") for r in rows[1:])
    assert "passed" in report.to_pretty().splitlines()[-1]


def test_workers_do_not_change_the_report():
    specs = [s for s in default_suite(ubv=False) if s.expected_runtime_class is RuntimeClass.FAST]
    assert specs
    small = SimConfig(2_000, seed=3)
    assert run_suite(specs, small, workers=1).to_csv() == run_suite(specs, small, workers=4).to_csv()


def test_default_suite_is_well_formed():
    suite = default_suite()
    names = [s.name for s in suite]
    assert len(set(names)) == len(names)
    kinds = {s.kind for s in suite}
    assert kinds == set(CheckKind)

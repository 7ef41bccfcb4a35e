import json
import math
from fractions import Fraction

import numpy as np
import pytest

from leaky_asm import shape, verify
from leaky_asm.sandpile import ToppleRule, point_source, stabilize


def test_experiment_config_validation():
    verify.ExperimentConfig("operators")
    with pytest.raises(ValueError):
        verify.ExperimentConfig("sandwich")
    with pytest.raises(ValueError):
        verify.ExperimentConfig("coupling", n=[5], tolerances={"x": 0})


def test_report_aggregate_is_conjunction():
    rep = verify.VerificationReport("r")
    rep.add("a", 1, 2, True)
    assert rep.passed
    rep.add("b", Fraction(1, 3), np.float64(0.5), False)
    assert not rep.passed
    d = rep.to_dict()
    assert json.loads(json.dumps(d))["checks"][1]["measured"] == "1/3"
    assert rep.summary_lines()[1].startswith("FAIL r:b")


def test_sandwich_small_case_bookkeeping():
    rep = verify.check_sandwich(5, 1.25)
    assert rep.passed
    assert rep.checks[0].measured == 0 and rep.checks[1].measured == 0


@pytest.mark.parametrize("n,d,w", [(1e4, 2, (1, 1, 1, 1)), (1e5, 2, (2, 1, 1, 1)),
                                   (1e4, 1.3, (1, 3, 0, 2))])
def test_sandwich_zero_violations(n, d, w):
    rep = verify.check_sandwich(n, d, ToppleRule(*w, d=d))
    assert rep.passed, rep.summary_lines()


@pytest.mark.parametrize("rule", [ToppleRule.uniform(2), ToppleRule(2, 1, 1, 1, d=3)])
def test_operator_identities_float(rule):
    rep = verify.check_operator_identities(rule, exact=False, tail_eps=1e-20)
    assert rep.passed, rep.summary_lines()


def test_operator_identities_exact_small():
    rep = verify.check_operator_identities(ToppleRule.uniform(5), tail_eps=1e-20)
    assert rep.passed
    off = rep.checks[0]
    assert off.measured <= off.bound


def test_constant_field_eigenvalue_example():
    rep = verify.check_operator_identities(ToppleRule.uniform(2), exact=False, tail_eps=1e-10)
    assert [c for c in rep.checks if c.name == "constant_eigenvalue"][0].passed


def test_shape_convergence_large_d():
    rep = verify.check_shape_convergence([1e10, 1e20, 1e40], 100.0)
    assert rep.passed, rep.summary_lines()


def test_shape_convergence_near_one():
    rep = verify.check_shape_convergence([1e10, 1e20, 1e40], 1.05)
    assert rep.passed, rep.summary_lines()


def test_boundary_radii_disc():
    res = stabilize(point_source(1e8, 1), ToppleRule.uniform(1.02))
    rad = verify.boundary_radii(res, 128)
    assert rad.min() > 0 and rad.max() / rad.min() < 1.1


def test_leak_to_zero_reports_and_skips():
    n = 1e7
    rep = verify.check_leak_to_zero(n, [1 / math.log(n), n ** -0.5, 1e-8])
    assert rep.inconclusive == 1
    assert rep.passed, rep.summary_lines()
    row = rep.tables["rows"][0]
    # at n = 1e7 the log log n correction keeps the radius well below its limit 1/2;
    # the finite-n band brackets it instead
    t, L = row["t"], math.log(n)
    band = shape.radial_band(n, 1 + t, [0.0])
    lo, hi = band.r_inner[0] * math.sqrt(t) / L, band.r_outer[0] * math.sqrt(t) / L
    assert lo <= row["scaled_outer_min"] <= row["scaled_outer_max"] <= hi < 0.5


def test_coupling_small_list():
    rep = verify.check_coupling([4, 5, 50])
    assert rep.passed, rep.summary_lines()
    assert any(c.name.startswith("ceil_limit") for c in rep.checks)


def test_classical_background_small():
    out = verify.classical_background_asm(4)
    assert out.shape == (1, 1) and out[0, 0] == 3
    out = verify.classical_background_asm(6)
    assert out[1, 1] == 1 and out[0, 1] == 0 and out[0, 0] == -1


def test_run_suite_unknown():
    with pytest.raises(ValueError):
        verify.run_suite("nope")


def test_run_suites_parallel_matches_serial(monkeypatch):
    opts = {"n": [5, 50]}
    serial = verify.run_suites(["coupling"], opts)
    monkeypatch.setenv("LEAKY_THREADS", "2")
    assert verify.worker_count() == 2
    par = verify.run_suites(["coupling", "operators"], {"d": "5"})
    par_c = verify.run_suites(["coupling"], opts)
    assert [r.to_dict() for r in serial["coupling"]] == [r.to_dict() for r in par_c["coupling"]]
    assert par["operators"][0].passed


def test_worker_count_bad_env(monkeypatch):
    monkeypatch.setenv("LEAKY_THREADS", "lots")
    assert verify.worker_count() == 1


def test_reports_reproducible():
    a = verify.check_sandwich(1e4, 2).to_dict()
    b = verify.check_sandwich(1e4, 2).to_dict()
    assert a == b

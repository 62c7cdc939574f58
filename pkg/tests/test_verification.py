import csv
import io
import json

import numpy as np
import pytest

from cramer_rl.verification import (CLAIMS, Check, InstanceGrid, VerificationReport,
                                    contraction_instance, contraction_terms,
                                    fixed_point_records, hat_gradient_fd_error, identity_errors,
                                    run_claims, summary_csv, verify_lemma_condition_number,
                                    verify_lemma_contraction, verify_lemma_expectation,
                                    verify_projection_identities, verify_theorem_convergence,
                                    verify_theorem_expectation_bound, write_reports)

SMALL_GRID = InstanceGrid(n=(5,), k=(11,), m=(2, 5), gamma=(0.9,), lam=(1.0,), seeds=2)


# -- checks and reports -----------------------------------------------------------------------

def test_check_semantics():
    assert Check("a", 0.5, 0.0).passed
    assert Check("a", -1e-12, 1e-10).passed
    assert not Check("a", -1e-9, 1e-10).passed
    assert Check("a", -1e-9, 1e-8, "equality").passed
    assert not Check("a", -1e-7, 1e-8, "equality").passed
    assert Check("a", -0.5, 1.0).normalized() == 0.5
    assert Check("a", -0.5, 0.0).normalized() == -0.5


def test_report_aggregation():
    checks = [Check("x/1", 0.1, 0.0), Check("x/2", -0.2, 0.0), Check("y/1", 1.0, 0.0)]
    r = VerificationReport.from_checks("demo", checks, seeds=2)
    assert not r.passed
    assert r.worst_margin == -0.2
    assert r.kind == "inequality"
    assert not r.part_passed("x") and r.part_passed("y")
    assert r.parts["x"]["checks"] == 2
    assert len(r.details) == 3


def test_report_mixed_tolerances_normalize():
    checks = [Check("a/1", -5e-11, 1e-10), Check("b/1", -1e-9, 1e-8, "equality")]
    r = VerificationReport.from_checks("mixed", checks, seeds=1)
    assert r.kind == "normalized" and r.tolerance == 0.0
    assert r.worst_margin == pytest.approx(0.5)
    assert r.passed


def test_report_needs_checks():
    with pytest.raises(ValueError):
        VerificationReport.from_checks("empty", [], 0)


def test_report_serialization(tmp_path):
    r = VerificationReport.from_checks("demo", [Check("a/1", np.float64(0.1), 0.0)], 1)
    json.dumps(r.to_dict())
    out = write_reports([r], tmp_path)
    assert (out / "demo.json").exists()
    rows = list(csv.reader(io.StringIO((out / "summary.csv").read_text())))
    assert rows[0] == ["name", "kind", "tolerance", "seeds", "worst_margin", "passed"]
    assert rows[1][0] == "demo" and rows[1][-1] == "1"
    assert summary_csv([r]) == (out / "summary.csv").read_text()


def test_run_claims_rejects_unknown():
    with pytest.raises(KeyError):
        run_claims(["nope"])


# -- small claim runs -----------------------------------------------------------------------

def test_condition_number_claim_small():
    r = verify_lemma_condition_number(ks=(3, 11), seeds=range(3))
    assert r.passed
    assert set(r.parts) == {"interval", "outside", "extension"}


def test_expectation_claim_small():
    r = verify_lemma_expectation(ks=(3, 11), seeds=range(50))
    assert r.passed
    assert r.part_passed("asymmetric_counterexample")
    assert {"preserved", "feasible", "inverse_z", "constant"} <= set(r.parts)


def test_expectation_claim_deterministic():
    a = verify_lemma_expectation(ks=(5,), seeds=range(10))
    b = verify_lemma_expectation(ks=(5,), seeds=range(10))
    assert a.to_dict() == b.to_dict()


def test_contraction_instance_reproducible():
    a = contraction_instance(3, 0.9)
    b = contraction_instance(3, 0.9)
    np.testing.assert_array_equal(a[3], b[3])
    assert a[0].n == b[0].n and a[1].k == b[1].k


def test_contraction_claim_parts():
    r = verify_lemma_contraction(gammas=(0.9,), seeds=range(100))
    # the mass part and the equal-mass specialization are sound
    assert r.part_passed("mass")
    assert r.part_passed("equal_mass")
    assert r.part_passed("non_vacuity")


def test_centered_inequality_can_fail_for_improper_pairs():
    # counterexamples exist among Gaussian pairs at gamma = 0.5; see the bellman tests
    slacks = []
    for s in range(100):
        t = contraction_terms(*contraction_instance(s, 0.5))
        slacks.append(t["aat_rhs"] - t["aat_lhs"])
    assert min(slacks) < -1e-10


def test_identity_errors_small():
    for s in range(10):
        errs = identity_errors(s)
        for key in ("pythagoras", "gradient_lambda", "gradient_hat", "reset_identity"):
            assert errs[key] <= 1e-8, (s, key, errs[key])
    assert verify_projection_identities(seeds=range(5)).passed


def test_hat_gradient_fd():
    assert max(hat_gradient_fd_error(s) for s in range(20)) <= 1e-6


def test_fixed_point_records_small_grid():
    records = fixed_point_records(SMALL_GRID, 1e-10, 10_000)
    # two m values, lambda in {1, 0}, two seeds
    assert len(records) == 8
    for r in records:
        assert r.final_step <= 1e-10
        assert r.spread <= 1e-12
    tabular = [r for r in records if r.m == 5 and r.lam > 0]
    assert all(r.lhs <= 1e-16 for r in tabular)
    assert fixed_point_records(SMALL_GRID, 1e-10, 10_000) is records


def test_theorem_claims_small_grid():
    r = verify_theorem_convergence(SMALL_GRID)
    assert r.part_passed("converged")
    assert r.part_passed("unique") and r.part_passed("centered_unique")
    e = verify_theorem_expectation_bound(SMALL_GRID)
    assert e.passed
    assert {"bound", "zero", "tight"} == set(e.parts)


def test_claim_registry():
    assert set(CLAIMS) == {"lemma_condition_number", "lemma_expectation", "lemma_contraction",
                           "theorem_convergence", "theorem_expectation_bound",
                           "projection_identities"}

import json
import math

import numpy as np
import pytest

from svpinn.verify import (
    STUDIES,
    StudyReport,
    ESTIMATOR_RESIDUALS,
    comparison_table,
    grid_phi_norm_sq,
    loglog_slope,
    reference_phi_norm_sq,
    regularity_diagnostics,
    streamed_corrected_loss,
    study_comparison,
    study_eigen_convergence,
    study_equivalence,
    study_regularity,
    study_estimator_convergence,
    study_trapezoid,
)
from svpinn.spectral import GridSpec


def test_loglog_slope_exact():
    h = np.array([0.1, 0.05, 0.025])
    assert loglog_slope(h, 3 * h**2) == pytest.approx(2.0)
    assert loglog_slope(h, h**-0.5) == pytest.approx(-0.5)


def test_report_write_and_lines(tmp_path):
    rep = StudyReport("demo", {"a": True, "b": False}, {"x": np.float64(1.5), "bad": math.nan}, [{"n": 1, "e": 0.5}])
    assert not rep.passed
    assert rep.lines() == ["PASS  demo.a", "FAIL  demo.b"]
    csv_path, json_path = rep.write(tmp_path)
    data = json.loads(json_path.read_text())
    assert data["schema_version"] == 1 and data["summary"] == {"x": 1.5, "bad": None}
    assert csv_path.read_text().splitlines() == ["n,e", "1,0.5"]


@pytest.mark.parametrize("d", [1, 2, 3])
def test_equivalence_study(d):
    rep = study_equivalence(d, trials=200)
    assert rep.passed
    assert rep.summary["c"] <= rep.summary["min_ratio"] <= rep.summary["max_ratio"] <= rep.summary["C"]


@pytest.mark.parametrize("d", [1, 2])
def test_trapezoid_study(d):
    rep = study_trapezoid(d, ns=(15, 31, 63, 127))
    assert rep.passed, rep.summary


def test_eigen_study():
    rep = study_eigen_convergence(1)
    assert rep.passed, rep.summary
    assert rep.summary["scaling_ratio"] == pytest.approx(256, rel=0.01)
    assert study_eigen_convergence(2, ns=(15, 31, 63)).passed


def test_reference_norm_is_converged():
    fn = ESTIMATOR_RESIDUALS[1]
    a = reference_phi_norm_sq(fn, 1, n_fine=8191)
    b = reference_phi_norm_sq(fn, 1)
    assert abs(a - b) / b < 1e-6
    assert b == pytest.approx(0.004466031, rel=1e-6)


def test_streamed_loss_is_unbiased():
    g = GridSpec(1, 31)
    r = ESTIMATOR_RESIDUALS[1](g.points())
    mean = grid_phi_norm_sq(r, g, 1.0)
    N = 200_000
    est = streamed_corrected_loss(r, g, 1.0, N, seed=5, chunk=30_000)
    assert abs(est - mean) < 4 * math.sqrt(2.0 / N) * mean


def test_estimator_convergence_small():
    rep = study_estimator_convergence(1, n_fixed=63, Ns=(100, 1000, 10000), reps=40, h_N=200_000, h_reps=2,
                          h_ns=(15, 31, 63), h_slope_min=1.0, n_slope_band=0.15)
    assert rep.checks["zero_residual"]
    assert rep.checks["n_slope"], rep.summary
    assert rep.checks["h_slope"], rep.summary


def test_regularity_study_shapes():
    rep = study_regularity(2, boxes=(8, 16, 32), draws=20)
    diag = regularity_diagnostics(rep)
    assert diag["t_one_divergent"]
    assert len(rep.rows) == 3
    assert set(rep.checks) == {"bounded_t_minus", "divergent_t_plus"}
    means = [row["mean_t_minus"] for row in rep.rows]
    assert all(b > a for a, b in zip(means, means[1:]))


def test_comparison_study_small():
    cfg = {"width": 8, "depth": 1, "n_features": 6, "n_test": 50, "grid_n": 31, "l2_every": 5, "lr": 1e-2}
    rep = study_comparison("exp1 a=1", 10, config=cfg, final_below=10.0, reach_1pct_within=10)
    assert {r["method"] for r in rep.rows} == {"PINN(GD)", "SV-PINN(GD)", "SV-PINN(L-BFGS)"}
    assert "svpinn_beats_pinn" in rep.checks and "final_below" in rep.checks and "reach_1pct" in rep.checks
    assert rep.checks["final_below"]
    assert rep.summary["checkpoints"] == [10]
    assert "L2@10" in rep.summary["table"]


def test_comparison_table_std_only_with_several_seeds():
    rows = [{"method": "A", "l2@5": 0.1, "steps_to_1pct": None, "wall_s": 1.0}]
    single = comparison_table(rows, [5]).splitlines()[1]
    assert "+-" not in single and single.endswith("| - | 1.0")
    rows.append({"method": "A", "l2@5": 0.3, "steps_to_1pct": 4, "wall_s": 3.0})
    assert "+-" in comparison_table(rows, [5])


def test_studies_listed():
    assert STUDIES == ("equivalence", "trapezoid", "eigen", "estimator", "regularity", "comparison")

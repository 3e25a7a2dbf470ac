import json
import math

import numpy as np
import pytest

from otmap.experiments import (
    EstimatorKind,
    fit_slope,
    log_factor_note,
    prop315_holds,
    run_estimator,
    run_rate_experiment,
    theoretical_exponent,
    write_report,
)
from otmap.synthetic import coordinate_map, make_linear_problem, make_separable_problem


def test_exponent_table():
    assert theoretical_exponent("none", 5) == pytest.approx(0.4)
    assert theoretical_exponent("none", 3) == 0.5
    assert theoretical_exponent("none", 4) == 0.5
    assert theoretical_exponent("sobolev", 10, 1) == pytest.approx(0.3)
    assert theoretical_exponent("sobolev", 6, 1) == 0.5
    assert theoretical_exponent("besov", 4, 1) == pytest.approx(1 / 3)
    assert theoretical_exponent("besov", 2, 3) == 0.5


def test_exponent_errors():
    with pytest.raises(ValueError):
        theoretical_exponent("holder", 3)
    with pytest.raises(ValueError):
        theoretical_exponent("none", 1)


def test_log_notes_flag_boundary_cases():
    assert "d=4" in log_factor_note("none", 4)
    assert "2(s+2)" in log_factor_note("sobolev", 6, 1)
    assert log_factor_note("sobolev", 3, 1) == "no log factors"


def test_estimator_kind_validation():
    with pytest.raises(ValueError):
        EstimatorKind("sinkhorn")
    with pytest.raises(ValueError):
        EstimatorKind("kernel-smoothed-discretized", M=5000, m_max=4096)
    k = EstimatorKind("kernel-smoothed-discretized", s=1)
    assert k.atoms(16) == 64
    assert k.atoms(512) == 4096


def test_fit_slope_needs_four_points():
    assert fit_slope([1, 2, 3], [1, 1, 1])[0] is None
    slope, _ = fit_slope([1, 2, 4, 8], [1, 0.5, 0.25, 0.125])
    assert slope == pytest.approx(-1.0)


@pytest.mark.parametrize("kind", ["discrete-discrete", "semi-discrete", "kernel-smoothed-discretized", "wavelet-smoothed-discretized"])
def test_identity_problem_errors_shrink(kind):
    p = make_linear_problem(1)
    est = EstimatorKind(kind, s=1, bandwidth_scale=0.1, m_max=2048)

    def med(n):
        return np.median([run_estimator(est, p, n, n, (n, r))[0] for r in range(8)])

    assert med(256) < med(32)


def test_coupled_identity_is_exact():
    p = make_linear_problem(2)
    assert run_estimator(EstimatorKind(), p, 50, 50, 0, coupled=True) == (0.0, 0.0)


def test_degenerate_slope_flagged():
    rep = run_rate_experiment(EstimatorKind(), make_linear_problem(2), [8, 16, 32, 64], 3, 0, coupled=True)
    assert rep.fitted_slope is None
    assert "undefined" in rep.slope_flag


def test_discrete_1d_monotone():
    p = make_linear_problem(1, [[2.0]])
    est = EstimatorKind()
    e256 = np.median([run_estimator(est, p, 256, 256, (1, r))[0] for r in range(20)])
    e1024 = np.median([run_estimator(est, p, 1024, 1024, (2, r))[0] for r in range(20)])
    assert e1024 < e256


def test_semi_discrete_1d_exact_quadrature():
    # with a single target atom the map is constant and both errors are closed-form
    p = make_linear_problem(1, [[2.0]])
    from otmap.experiments import _semi_discrete_1d
    from otmap.ot_core import DiscreteMeasure

    err, w2err, w2 = _semi_discrete_1d(p, DiscreteMeasure.uniform(np.array([[1.0]])))
    assert err == pytest.approx(1 / 3, abs=1e-14)  # int (1 - 2x)^2 dx
    assert w2 == pytest.approx(1 / 3, abs=1e-14)  # int (1 - x)^2 dx
    assert w2err == pytest.approx(0.0, abs=1e-14)


def test_report_deterministic_and_parallel_invariant(tmp_path):
    p = make_linear_problem(2, np.diag([2.0, 1.0]))
    a = run_rate_experiment(EstimatorKind(), p, [16, 32, 64, 128], 4, 11)
    b = run_rate_experiment(EstimatorKind(), p, [16, 32, 64, 128], 4, 11, threads=2)
    assert a.summary() == b.summary()
    assert a.rows == b.rows
    c1, j1 = write_report(a, tmp_path / "a")
    c2, j2 = write_report(b, tmp_path / "b")
    assert c1.read_bytes() == c2.read_bytes()
    assert j1.read_bytes() == j2.read_bytes()
    summary = json.loads(j1.read_text())
    assert summary["theoretical_exponent"] == -0.5
    assert len(c1.read_text().splitlines()) == 1 + 4 * 4


def test_report_fields():
    p = make_linear_problem(3, np.diag([1.5, 1.0, 0.5]))
    rep = run_rate_experiment(EstimatorKind(), p, [16, 32, 64, 128], 10, 3)
    assert len(rep.map_median) == 4 and len(rep.w2_iqr) == 4
    assert all(r["map_error"] >= 0 and r["w2_error"] >= 0 for r in rep.rows)
    assert rep.fitted_slope < 0


def test_rate_experiment_validates_grid():
    with pytest.raises(ValueError):
        run_rate_experiment(EstimatorKind(), make_linear_problem(2), [64, 32, 128, 256], 2, 0)


def test_prop315_identity_every_replication():
    p = make_separable_problem(2, [coordinate_map("cubic"), coordinate_map("affine", scale=1.5)])
    rep = run_rate_experiment(EstimatorKind(), p, [16, 32, 64, 128], 5, 2)
    assert all(prop315_holds(r["w2sq_hat"], p.true_w2sq) for r in rep.rows)
    with pytest.raises(ValueError):
        prop315_holds(0.1, 0.0)


def test_prop315_is_algebraic():
    for a, b in [(0.3, 0.5), (2.0, 0.1), (1e-8, 1.0)]:
        assert abs(math.sqrt(a) - math.sqrt(b)) <= abs(a - b) / math.sqrt(b) + 1e-15

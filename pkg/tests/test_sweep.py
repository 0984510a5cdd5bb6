import math

import numpy as np
import pytest

from packspec import penergy as pe, space as sp, sweep
from packspec.packing import InfeasibleError


class NoisySolver(pe.DirichletSolver):
    """Returns a value that depends on how a support is written, breaking the union laws."""

    def log_lambda(self, support, p=None, restarts=None):
        base = super().log_lambda(support, p, restarts)
        return base + 0.5 * (len(list(support)) % 3)


def test_convergence_estimate_recovers_exact_model():
    pairs = [(p, 0.7 + 2.0 / p) for p in (8, 16, 32, 64)]
    est = sweep.convergence_estimate(pairs)
    assert not est["refused"]
    assert est["value"] == pytest.approx(0.7, abs=1e-12)
    assert est["c1"] == pytest.approx(2.0, abs=1e-10)
    assert est["used_p"] == [32.0, 64.0]


def test_convergence_estimate_refuses_short_grid():
    est = sweep.convergence_estimate([(8, 1.0), (16, 0.9)])
    assert est["refused"]
    assert est["value"] == 0.9


def test_p_sweep_on_circle():
    s = sp.circle(2 * math.pi, 40)
    rep = sweep.p_sweep(s, 1, [4, 8, 16], config=pe.EnergyConfig(4.0, restarts=2))
    assert rep.target == pytest.approx(2 / math.pi)
    roots = [r.lambda_bar_root for r in rep.rows]
    assert all(r.error is None for r in rep.rows)
    # p * root is nondecreasing and roots sit below the packing cone bound
    pr = [r.p_times_root for r in rep.rows]
    assert pr == sorted(pr)
    assert all(r.lambda_bar_root <= r.bound_root * (1 + 1e-9) for r in rep.rows)
    assert roots[-1] < roots[0]
    d = rep.to_dict()
    assert d["schema_version"] == 1 and len(d["rows"]) == 3


def test_csv_layout():
    s = sp.circle(2 * math.pi, 24)
    rep = sweep.p_sweep(s, 1, [4, 8, 16], config=pe.EnergyConfig(4.0, restarts=2))
    lines = rep.to_csv().splitlines()
    assert lines[0] == "# schema_version=1"
    assert lines[1].split(",") == list(sweep.CSV_COLUMNS)
    assert len(lines) == 5


def test_grid_validation():
    s = sp.circle(1.0, 12)
    with pytest.raises(ValueError):
        sweep.p_sweep(s, 1, [])
    with pytest.raises(ValueError):
        sweep.p_sweep(s, 1, [8, 4])
    # the two singletons of the two-point space touch: every row carries the error
    rep = sweep.p_sweep(sp.build(2, [(0, 1, 1.0)]), 1, [2, 4])
    assert [r.error is not None for r in rep.rows] == [True, True]
    assert "InfeasibleError" in rep.rows[0].error
    with pytest.raises(InfeasibleError):
        sweep.p_sweep(sp.build(2, [(0, 1, 1.0)]), 2, [2, 4])


def test_dirichlet_sweep_target_is_inpack():
    s = sp.interval(2.0, 41)
    rep = sweep.dirichlet_sweep(s, range(1, 40), 1, [4, 8, 16], config=pe.EnergyConfig(4.0, restarts=2))
    assert rep.dirichlet
    assert rep.target == pytest.approx(1.0)
    assert rep.rows[-1].rel_err < rep.rows[0].rel_err


def test_convergence_estimate_on_closed_form_rows():
    L = math.pi

    def root(p):
        return 2 * math.pi * (p - 1) ** (1 / p) / (p * math.sin(math.pi / p)) / L

    est = sweep.convergence_estimate([(p, root(p)) for p in range(16, 129, 16)])
    assert est["value"] == pytest.approx(2 / L, rel=0.01)


def test_dirichlet_sweep_edge_cases():
    s = sp.interval(2.0, 41)
    cfg = pe.EnergyConfig(4.0, restarts=2)
    rep = sweep.dirichlet_sweep(s, range(1, 40), 2, [4, 8], config=cfg)
    assert rep.target == pytest.approx(2.0)
    tiny = sweep.dirichlet_sweep(s, [20], 1, [4, 8, 16], config=cfg)
    assert all(r.error is None and math.isfinite(r.lambda_bar_root) for r in tiny.rows)
    assert tiny.to_dict()["extrapolation"]


def test_audit_passes_on_small_circle():
    s = sp.circle(1.0, 12)
    rows = sweep.audit(s, 2, [2, 3, 4], config=pe.EnergyConfig(2.0, restarts=2))
    assert sweep.audit_summary(rows)["violations"] == 0


def test_audit_passes_on_random_graph():
    s = sp.random_geometric(8, 0.5, 3)
    rows = sweep.audit(s, 2, [2, 3], config=pe.EnergyConfig(2.0, restarts=2))
    summary = sweep.audit_summary(rows)
    assert summary["violations"] == 0
    laws = {r.law for r in rows}
    assert {"under_le_bar", "p_root_nondecreasing", "union_eq_min", "span_identity",
            "inradius_le_pack", "domain_monotone"} <= laws


def test_audit_catches_broken_solver():
    s = sp.random_geometric(8, 0.5, 3)
    cfg = pe.EnergyConfig(2.0, restarts=2)
    rows = sweep.audit(s, 1, [2, 3], config=cfg, solver=NoisySolver(s, cfg))
    failed = {r.law for r in rows if r.verdict == "fail"}
    assert "union_eq_min" in failed


def test_refinement_study_second_order_on_interval():
    cfg = pe.EnergyConfig(2.0, restarts=1)
    out = sweep.refinement_study(lambda n: sp.interval(math.pi, n), [21, 41, 81],
                                 lambda s: pe.dirichlet_eig1(s, range(1, s.n - 1), cfg).lambda_,
                                 reference=1.0)
    assert all(1.7 < o < 2.3 for o in out["orders"])
    errs = [r["error"] for r in out["rows"]]
    assert errs == sorted(errs, reverse=True)


def test_refinement_of_theta_diameter():
    out = sweep.refinement_study(lambda m: sp.theta_space(1.0 / m), [10, 20, 40], sp.diameter,
                                 reference=math.pi + 2)
    for row in out["rows"]:
        assert row["error"] <= 1.0 / row["n"] + 1e-12
    assert np.isfinite(out["rows"][-1]["value"])

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from packspec import fakespec as fs, penergy as pe, space as sp
from packspec.packing import InfeasibleError


def brute_connected(space, allowed):
    out = []
    verts = [v for v in range(space.n) if allowed >> v & 1]
    for r in range(1, len(verts) + 1):
        for combo in itertools.combinations(verts, r):
            if len(sp.induced_components(space, combo)) == 1:
                out.append(sum(1 << v for v in combo))
    full = (1 << space.n) - 1
    return sorted((m for m in out if m != full), key=lambda m: (m.bit_count(), m))


def brute_families(space, count, lam):
    """(min max, min mean) over all labelled assignments of vertices to count supports."""
    best_bar = best_under = math.inf
    for labels in itertools.product(range(count + 1), repeat=space.n):
        sets = [[v for v in range(space.n) if labels[v] == i] for i in range(count)]
        if any(not s for s in sets):
            continue
        try:
            fs.DisjointFamily.of(sets).validate(space)
        except fs.AdjacencyError:
            continue
        vals = [lam(tuple(s)) for s in sets]
        best_bar = min(best_bar, max(vals))
        best_under = min(best_under, sum(vals) / count)
    return best_bar, best_under


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_connected_subsets_match_brute_force(seed):
    s = sp.random_geometric(9, 0.5, seed)
    allowed = (1 << s.n) - 1
    assert fs.connected_subsets(s, allowed) == brute_connected(s, allowed)
    part = sum(1 << v for v in (0, 2, 3, 5, 7, 8))
    assert fs.connected_subsets(s, part) == brute_connected(s, part)


def test_connected_subsets_limit():
    s = sp.circle(1.0, 30)
    with pytest.raises(fs.ExhaustiveRefused):
        fs.connected_subsets(s, (1 << 30) - 1, limit=100)


@pytest.mark.parametrize("graph", ["cycle", "rgg"])
@pytest.mark.parametrize("k", [1, 2])
def test_exhaustive_matches_assignment_enumeration_at_p2(graph, k):
    s = sp.circle(1.0, 8) if graph == "cycle" else sp.random_geometric(8, 0.5, 2)
    cache = {}

    def lam(support):
        if support not in cache:
            cache[support] = pe.exact_p2(s, support)
        return cache[support]

    want_bar, want_under = brute_families(s, k + 1, lam)
    cfg = pe.EnergyConfig(2.0, restarts=2)
    bar = fs.lambda_bar(s, k, 2.0, "exhaustive", cfg)
    under = fs.lambda_under(s, k, 2.0, "exhaustive", cfg)
    assert bar.certificate == "exact"
    assert bar.lambda_bar == pytest.approx(want_bar, rel=1e-6)
    assert under.lambda_under == pytest.approx(want_under, rel=1e-6)


def test_local_matches_exhaustive_on_small_circle():
    s = sp.circle(2 * math.pi, 12)
    cfg = pe.EnergyConfig(4.0, restarts=4)
    solver = pe.DirichletSolver(s, cfg)
    for k in (1, 2):
        ex = fs.lambda_bar(s, k, 4.0, "exhaustive", cfg, solver=solver)
        lo = fs.lambda_bar(s, k, 4.0, "local", cfg, solver=solver)
        assert lo.lambda_bar == pytest.approx(ex.lambda_bar, rel=1e-6)


def test_results_respect_family_contract():
    s = sp.circle(2 * math.pi, 30)
    cfg = pe.EnergyConfig(8.0, restarts=2)
    bar = fs.lambda_bar(s, 2, 8.0, "local", cfg)
    bar.family.validate(s)
    assert len(bar.family.supports) == 3
    assert bar.lambda_bar <= bar.packing_bound * (1 + 1e-9)
    under = fs.lambda_under(s, 2, 8.0, "local", cfg, warm=bar.family)
    assert under.lambda_under <= bar.lambda_bar * (1 + 1e-9)


def test_dirichlet_variant_stays_in_region():
    s = sp.interval(1.0, 31)
    omega = list(range(5, 26))
    res = fs.lambda_bar_dirichlet(s, omega, 2, 4.0, "local", pe.EnergyConfig(4.0, restarts=2))
    assert set(v for sup in res.family.supports for v in sup) <= set(omega)
    assert len(res.family.supports) == 2


def test_no_room_raises():
    s = sp.circle(1.0, 5)
    with pytest.raises(InfeasibleError):
        fs.lambda_bar(s, 2, 2.0, "local")  # three non-adjacent vertices do not fit in C5
    two = sp.build(2, [(0, 1, 1.0)])
    with pytest.raises(InfeasibleError):
        fs.packing_upper_bound(two, 1, 4.0)


def test_adjacent_family_rejected():
    s = sp.circle(1.0, 10)
    fam = fs.DisjointFamily.of([[0, 1], [2, 3]])
    with pytest.raises(fs.AdjacencyError):
        fam.validate(s)
    with pytest.raises(fs.AdjacencyError):
        fs.span_identity_check(s, fam, [1.0, 1.0], 3.0)


def test_span_identity_on_separated_family():
    s = sp.circle(1.0, 20)
    fam = fs.DisjointFamily.of([[1, 2, 3], [8, 9], [13, 14, 15, 16]])
    rep = fs.span_identity_check(s, fam, [0.3, -1.2, 2.0], 5.0,
                                 solver=pe.DirichletSolver(s, pe.EnergyConfig(5.0, restarts=2)))
    assert rep.passed
    assert rep.norm_rel_err <= 1e-12 and rep.energy_rel_err <= 1e-12


def test_packing_bound_matches_cone_quotient():
    s = sp.circle(2 * math.pi, 40)
    b = fs.packing_upper_bound(s, 1, 6.0)
    assert b.radius == pytest.approx(math.pi / 2)
    logs = [pe.log_rayleigh(s, u, 6.0) for u in b.functions]
    assert b.log_value == max(logs)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 500), p=st.sampled_from([2.0, 3.0]))
def test_under_le_bar_and_monotone_in_k(seed, p):
    s = sp.random_geometric(8, 0.55, seed)
    cfg = pe.EnergyConfig(p, restarts=2)
    solver = pe.DirichletSolver(s, cfg)
    prev = 0.0
    for k in (1, 2):
        try:
            bar = fs.lambda_bar(s, k, p, "exhaustive", cfg, solver=solver)
        except InfeasibleError:
            break
        under = fs.lambda_under(s, k, p, "exhaustive", cfg, solver=solver)
        assert under.lambda_under <= bar.lambda_bar * (1 + 1e-9)
        assert prev <= bar.lambda_bar * (1 + 1e-9)
        prev = bar.lambda_bar


def test_seeded_runs_are_identical():
    s = sp.circle(2 * math.pi, 36)
    cfg = pe.EnergyConfig(8.0, restarts=2, seed=7)
    a = fs.lambda_bar(s, 1, 8.0, "anneal", cfg)
    b = fs.lambda_bar(s, 1, 8.0, "anneal", cfg)
    assert a.family == b.family
    assert a.per_set_log == b.per_set_log
    assert np.isfinite(a.log_bar)

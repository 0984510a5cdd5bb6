"""p-sweeps toward the packing targets, extrapolation, invariant audits and
mesh refinement studies."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import fakespec as fs
from .packing import InfeasibleError, inpack, inradius, pack_radius
from .penergy import DirichletSolver, EnergyConfig
from .space import MetricMeasureSpace

CSV_COLUMNS = ["p", "lambda_bar_root", "lambda_under_root", "p_times_root", "bound_root", "target", "rel_err"]
SCHEMA_VERSION = 1


@dataclass
class SweepRow:
    p: float
    lambda_bar_root: float = math.nan
    lambda_under_root: float = math.nan
    p_times_root: float = math.nan
    bound_root: float | None = None
    rel_err: float = math.nan
    family: list | None = None
    statuses: list = field(default_factory=list)
    error: str | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class SweepReport:
    space_id: str
    k: int
    target: float
    rows: list[SweepRow]
    dirichlet: bool = False
    strategy: str = "local"
    extrapolation: dict = field(default_factory=dict)

    @property
    def extrapolated_limit(self) -> float:
        return self.extrapolation.get("value", math.nan)

    @property
    def rel_error_at_pmax(self) -> float:
        good = [r for r in self.rows if r.error is None]
        return good[-1].rel_err if good else math.nan

    @property
    def rel_error_extrapolated(self) -> float:
        return abs(self.extrapolated_limit - self.target) / self.target

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "space": self.space_id,
            "k": self.k,
            "dirichlet": self.dirichlet,
            "strategy": self.strategy,
            "target": self.target,
            "rows": [r.to_dict() for r in self.rows],
            "extrapolation": self.extrapolation,
            "extrapolated_limit": self.extrapolated_limit,
            "rel_error_at_pmax": self.rel_error_at_pmax,
            "rel_error_extrapolated": self.rel_error_extrapolated,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# schema_version={SCHEMA_VERSION}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            cells = [r.p, r.lambda_bar_root, r.lambda_under_root, r.p_times_root,
                     "" if r.bound_root is None else r.bound_root, self.target, r.rel_err]
            w.writerow([c if isinstance(c, str) else repr(float(c)) for c in cells])
        return buf.getvalue()


def _check_grid(p_list: Sequence[float]) -> list[float]:
    ps = [float(p) for p in p_list]
    if not ps:
        raise ValueError("empty p grid")
    if any(p <= 1 for p in ps):
        raise ValueError("every p must exceed 1")
    if any(b <= a for a, b in zip(ps, ps[1:])):
        raise ValueError("p grid must be strictly increasing")
    return ps


def _sweep(space, omega, k, ps, strategy, config, solver, target):
    cfg = config or EnergyConfig(ps[0])
    solver = solver or DirichletSolver(space, cfg)
    rows = []
    warm = None
    for p in ps:
        row = SweepRow(p)
        try:
            if omega is None:
                bar = fs.lambda_bar(space, k, p, strategy, cfg, solver=solver, warm=warm)
                under = fs.lambda_under(space, k, p, strategy, cfg, solver=solver, warm=bar.family)
                row.bound_root = fs.packing_upper_bound(space, k, p).root
            else:
                bar = fs.lambda_bar_dirichlet(space, omega, k, p, strategy, cfg, solver=solver, warm=warm)
                under = fs.lambda_under_dirichlet(space, omega, k, p, strategy, cfg, solver=solver,
                                                  warm=bar.family)
            warm = bar.family
            row.lambda_bar_root = bar.root("bar")
            row.lambda_under_root = under.root("under")
            row.p_times_root = p * row.lambda_bar_root
            row.rel_err = abs(row.lambda_bar_root - target) / target
            row.family = [list(s) for s in bar.family.supports]
            row.statuses = bar.statuses
        except (InfeasibleError, fs.ExhaustiveRefused, ValueError) as exc:
            row.error = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    return rows


def p_sweep(space: MetricMeasureSpace, k: int, p_list: Sequence[float], strategy: str = "local",
            config: EnergyConfig | None = None, solver: DirichletSolver | None = None) -> SweepReport:
    """lambda_bar and lambda_under roots over a p-grid against the target 1/pack_{k+1}.

    Each row warm-starts from the previous row's family; the packing-seeded
    candidates are always evaluated as well and the best family is kept.
    """
    ps = _check_grid(p_list)
    if k + 1 > space.n:
        raise InfeasibleError(f"k + 1 = {k + 1} exceeds the vertex count")
    target = 1.0 / pack_radius(space, k + 1, "auto").radius
    rows = _sweep(space, None, k, ps, strategy, config, solver, target)
    rep = SweepReport(repr(space), k, target, rows, False, strategy)
    rep.extrapolation = convergence_estimate(rep)
    return rep


def dirichlet_sweep(space: MetricMeasureSpace, omega, k: int, p_list: Sequence[float],
                    strategy: str = "local", config: EnergyConfig | None = None,
                    solver: DirichletSolver | None = None) -> SweepReport:
    """Dirichlet variant: k supports inside omega, target 1/inpack_k(omega)."""
    ps = _check_grid(p_list)
    target = 1.0 / inpack(space, omega, k).radius
    rows = _sweep(space, sorted(omega), k, ps, strategy, config, solver, target)
    rep = SweepReport(repr(space), k, target, rows, True, strategy)
    rep.extrapolation = convergence_estimate(rep)
    return rep


def convergence_estimate(report) -> dict:
    """Least-squares fit root ~ c0 + c1/p over the upper half of the p-grid.

    Accepts a SweepReport or a sequence of (p, root) pairs.  With fewer than
    three usable rows no fit is made: the last value is returned, flagged.
    """
    if isinstance(report, SweepReport):
        pts = [(r.p, r.lambda_bar_root) for r in report.rows if r.error is None]
    else:
        pts = [(float(p), float(v)) for p, v in report]
    pts.sort()
    if not pts:
        return {"value": math.nan, "refused": True, "reason": "no rows"}
    if len(pts) < 3:
        return {"value": pts[-1][1], "refused": True, "reason": f"only {len(pts)} rows",
                "used_p": [pts[-1][0]]}
    h = max(2, math.ceil(len(pts) / 2))
    P = np.array([p for p, _ in pts[-h:]])
    y = np.array([v for _, v in pts[-h:]])
    A = np.column_stack([np.ones_like(P), 1.0 / P])
    (c0, c1), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ np.array([c0, c1])
    return {"value": float(c0), "c0": float(c0), "c1": float(c1), "refused": False,
            "used_p": P.tolist(), "residuals": resid.tolist(),
            "max_abs_residual": float(np.abs(resid).max())}


# --- audit ---------------------------------------------------------------------


@dataclass
class AuditRow:
    law: str
    instance: str
    verdict: str  # pass | fail | warn | skip
    detail: str

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _le(a: float, b: float, rtol: float) -> bool:
    return a <= b + rtol * max(abs(a), abs(b))


def _random_nonadjacent_family(space, count, rng, tries=50):
    """Random disjoint non-adjacent supports grown from random seed vertices."""
    for _ in range(tries):
        order = rng.permutation(space.n)
        sets: list[set[int]] = []
        taken = 0
        for v in order:
            v = int(v)
            if len(sets) == count:
                break
            if not (space.closed_mask[v] & taken):
                sets.append({v})
                taken |= 1 << v
        if len(sets) < count:
            continue
        # grow each set by neighbors that touch no other set
        for _ in range(int(rng.integers(0, 3))):
            for i, s in enumerate(sets):
                others = 0
                for j, t in enumerate(sets):
                    if j != i:
                        for w in t:
                            others |= space.closed_mask[w]
                for v in list(s):
                    for w in space.neighbors[v]:
                        w = int(w)
                        if not (others >> w & 1) and all(w not in t for t in sets) and rng.random() < 0.5:
                            s.add(w)
        fam = fs.DisjointFamily.of([sorted(s) for s in sets])
        try:
            fam.validate(space)
        except fs.AdjacencyError:
            continue
        return fam
    return None


def audit(space: MetricMeasureSpace, k_max: int, p_list: Sequence[float], strategy: str = "exhaustive",
          config: EnergyConfig | None = None, solver: DirichletSolver | None = None,
          instance: str | None = None, rtol: float = 1e-9, seed: int = 0) -> list[AuditRow]:
    """Run every monotonicity and decomposition law on one space.

    ``solver`` may be injected (e.g. a deliberately broken one) to confirm the
    audit catches violations.
    """
    ps = _check_grid(p_list)
    cfg = config or EnergyConfig(ps[0])
    solver = solver or DirichletSolver(space, cfg)
    name = instance or repr(space)
    rows: list[AuditRow] = []
    rng = np.random.default_rng(seed)

    def add(law, ok, detail, warn=False):
        rows.append(AuditRow(law, name, "pass" if ok else ("warn" if warn else "fail"), detail))

    bar: dict[tuple[int, float], fs.FakeSpecResult] = {}
    under: dict[tuple[int, float], fs.FakeSpecResult] = {}
    for p in ps:
        for k in range(1, k_max + 1):
            try:
                bar[k, p] = fs.lambda_bar(space, k, p, strategy, cfg, solver=solver)
                under[k, p] = fs.lambda_under(space, k, p, strategy, cfg, solver=solver,
                                              warm=bar[k, p].family)
            except InfeasibleError:
                break

    for (k, p), b in bar.items():
        u = under[k, p]
        add("under_le_bar", _le(u.lambda_under, b.lambda_bar, rtol),
            f"k={k} p={p:g}: {u.lambda_under!r} <= {b.lambda_bar!r}")
        if (k + 1, p) in bar:
            nxt = bar[k + 1, p].lambda_bar
            add("bar_monotone_in_k", _le(b.lambda_bar, nxt, rtol),
                f"k={k} p={p:g}: {b.lambda_bar!r} <= {nxt!r}")
            add("bar_strict_growth", nxt > b.lambda_bar, f"k={k} p={p:g}: {b.lambda_bar!r} < {nxt!r}",
                warn=True)
        if b.packing_bound is not None:
            add("bar_le_packing_bound", _le(b.lambda_bar, b.packing_bound, rtol),
                f"k={k} p={p:g}: {b.lambda_bar!r} <= {b.packing_bound!r}")

    for k in range(1, k_max + 1):
        seq = [(p, p * bar[k, p].root("bar")) for p in ps if (k, p) in bar]
        for (p1, a), (p2, c) in zip(seq, seq[1:]):
            add("p_root_nondecreasing", _le(a, c, rtol), f"k={k}: p={p1:g} {a!r} <= p={p2:g} {c!r}")

    # min inradius of any non-adjacent family <= pack_{k+1}
    for k in range(1, k_max + 1):
        if k + 1 > space.n:
            break
        pk = pack_radius(space, k + 1, "exact").radius
        fams = [bar[k, ps[0]].family] if (k, ps[0]) in bar else []
        for _ in range(5):
            f = _random_nonadjacent_family(space, k + 1, rng)
            if f is not None:
                fams.append(f)
        for f in fams:
            mi = min(inradius(space, s) for s in f.supports)
            add("inradius_le_pack", _le(mi, pk, rtol), f"k={k} {f.supports}: {mi!r} <= {pk!r}")

    for p in ps:
        # union of two non-adjacent sets: exact min, hence <= max
        for _ in range(3):
            f = _random_nonadjacent_family(space, 2, rng)
            if f is None:
                break
            A, B = f.supports
            if len(A) + len(B) >= space.n:
                continue
            la, lb = solver.log_lambda(A, p), solver.log_lambda(B, p)
            lu = solver.log_lambda(A + B, p)
            add("union_le_max", _le(math.exp(lu), math.exp(max(la, lb)), rtol),
                f"p={p:g} {A}|{B}: {math.exp(lu)!r} <= {math.exp(max(la, lb))!r}")
            add("union_eq_min", abs(lu - min(la, lb)) <= rtol, f"p={p:g} {A}|{B}: log {lu!r} == {min(la, lb)!r}")

        for k in range(1, k_max + 1):
            if (k, p) not in bar:
                break
            fam = bar[k, p].family
            # span identity on the optimal family
            t = rng.standard_normal(len(fam.supports))
            rep = fs.span_identity_check(space, fam, t, p, solver=solver)
            add("span_identity", rep.passed,
                f"k={k} p={p:g}: norm err {rep.norm_rel_err:.2e}, energy err {rep.energy_rel_err:.2e}")
            # family supports as a region with k+1 Dirichlet supports
            union = sorted(v for s in fam.supports for v in s)
            if len(union) < space.n:
                d = fs.lambda_bar_dirichlet(space, union, k + 1, p, strategy, cfg, solver=solver)
                lam_max = max(math.exp(solver.log_lambda(s, p)) for s in fam.supports)
                add("dirichlet_union_le_max", _le(d.lambda_bar, lam_max, rtol),
                    f"k+1={k + 1} p={p:g}: {d.lambda_bar!r} <= {lam_max!r}")
                add("closed_le_dirichlet", _le(bar[k, p].lambda_bar, d.lambda_bar, rtol),
                    f"k={k} p={p:g}: {bar[k, p].lambda_bar!r} <= {d.lambda_bar!r}")

        # nested regions U subset V
        for kd in range(1, k_max + 1):
            pair = _nested_regions(space, kd, rng)
            if pair is None:
                continue
            U, V = pair
            try:
                dU = fs.lambda_bar_dirichlet(space, U, kd, p, strategy, cfg, solver=solver)
                dV = fs.lambda_bar_dirichlet(space, V, kd, p, strategy, cfg, solver=solver)
            except InfeasibleError:
                continue
            add("domain_monotone", _le(dV.lambda_bar, dU.lambda_bar, rtol),
                f"k={kd} p={p:g} U={U} V={V}: {dV.lambda_bar!r} <= {dU.lambda_bar!r}")
    return rows


def _nested_regions(space: MetricMeasureSpace, room: int, rng) -> tuple[list[int], list[int]] | None:
    """Random proper regions U strictly inside V; U holds ``room`` non-adjacent vertices."""
    for _ in range(20):
        V = sorted(int(v) for v in rng.choice(space.n, int(rng.integers(2, space.n)), replace=False))
        if len(V) < 3:
            continue
        U = sorted(int(v) for v in rng.choice(V, int(rng.integers(2, len(V))), replace=False))
        if fs._independent_exists(space, fs._mask(U), room):
            return U, V
    return None


def audit_summary(rows: Sequence[AuditRow]) -> dict:
    counts: dict[str, int] = {}
    for r in rows:
        counts[r.verdict] = counts.get(r.verdict, 0) + 1
    return {"rows": len(rows), "violations": counts.get("fail", 0), "counts": counts}


# --- refinement ------------------------------------------------------------------


def refinement_study(generator: Callable[[int], MetricMeasureSpace], n_list: Sequence[int],
                     quantity: Callable[[MetricMeasureSpace], float],
                     reference: float | None = None) -> dict:
    """Recompute ``quantity`` over meshes and report errors and observed orders.

    With a reference value the order between consecutive meshes is
    log(e_i / e_{i+1}) / log(n_{i+1} / n_i); without one, successive
    differences are used instead.
    """
    ns = [int(n) for n in n_list]
    vals = [float(quantity(generator(n))) for n in ns]
    rows = [{"n": n, "value": v} for n, v in zip(ns, vals)]
    if reference is not None:
        errs = [abs(v - reference) for v in vals]
        for r, e in zip(rows, errs):
            r["error"] = e
        pairs = list(zip(ns, errs))
    else:
        diffs = [abs(b - a) for a, b in zip(vals, vals[1:])]
        for r, d in zip(rows[1:], diffs):
            r["difference"] = d
        pairs = list(zip(ns[1:], diffs))
    orders = []
    for (n1, e1), (n2, e2) in zip(pairs, pairs[1:]):
        orders.append(math.log(e1 / e2) / math.log(n2 / n1) if e1 > 0 and e2 > 0 else math.nan)
    return {"rows": rows, "reference": reference, "orders": orders}

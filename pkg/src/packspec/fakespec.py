"""Min-max "fake spectra" over families of disjoint, non-adjacent supports.

    lambda_bar_k   = min over families A_0..A_k of max_i lambda^D(A_i)
    lambda_under_k = min over families A_0..A_k of mean_i lambda^D(A_i)

The Dirichlet variants place k supports (A_1..A_k) inside a region omega.
Supports must be pairwise disjoint and no edge may join two of them; this is
what makes the energy of a combination split exactly over the supports.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .packing import InfeasibleError, _CliqueSearch, pack_radius
from .penergy import DirichletSolver, EnergyConfig, log_p_energy, log_p_norm_p, log_rayleigh
from .space import MetricMeasureSpace, ball

DEFAULT_MAX_SUBSETS = 60_000
SEARCH_RESTARTS = 2


class AdjacencyError(ValueError):
    """Raised when two supports of a family share a vertex or an edge."""


class ExhaustiveRefused(RuntimeError):
    """Raised when exhaustive enumeration would exceed the size guard."""


def _mask(vertices) -> int:
    m = 0
    for v in vertices:
        m |= 1 << int(v)
    return m


def _members(mask: int) -> tuple[int, ...]:
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return tuple(out)


@dataclass(frozen=True)
class DisjointFamily:
    supports: tuple[tuple[int, ...], ...]
    ambient: tuple[int, ...] | None = None

    @classmethod
    def of(cls, supports: Sequence[Sequence[int]], ambient: Sequence[int] | None = None) -> "DisjointFamily":
        sets = [tuple(sorted({int(v) for v in s})) for s in supports]
        sets.sort(key=lambda s: (s[0] if s else -1, s))  # canonical label order
        amb = None if ambient is None else tuple(sorted({int(v) for v in ambient}))
        return cls(tuple(sets), amb)

    def validate(self, space: MetricMeasureSpace) -> None:
        if any(len(s) == 0 for s in self.supports):
            raise AdjacencyError("every support must be nonempty")
        closed = space.closed_mask
        masks = [_mask(s) for s in self.supports]
        for s in self.supports:
            if s[0] < 0 or s[-1] >= space.n:
                raise ValueError("support vertex out of range")
        for i, a in enumerate(masks):
            near = 0
            for v in self.supports[i]:
                near |= closed[v]
            for j in range(i + 1, len(masks)):
                if near & masks[j]:
                    raise AdjacencyError(f"supports {i} and {j} overlap or are joined by an edge")
        if self.ambient is not None:
            amb = _mask(self.ambient)
            if len(self.ambient) >= space.n:
                raise ValueError("ambient region must be a proper subset")
            if any(m & ~amb for m in masks):
                raise ValueError("a support leaves the ambient region")

    def to_dict(self) -> dict:
        out: dict = {"supports": [list(s) for s in self.supports]}
        if self.ambient is not None:
            out["ambient"] = list(self.ambient)
        return out


@dataclass
class FakeSpecResult:
    """One optimized family.

    ``lambda_bar`` and ``lambda_under`` are the max and the mean of the
    family's eigenvalues; ``objective`` tells which of the two was minimized.
    """

    family: DisjointFamily
    per_set_lambda: list[float]
    per_set_log: list[float]
    p: float
    k: int
    objective: str  # "bar" or "under"
    strategy: str
    certificate: str  # "exact" or "upper_bound"
    packing_bound: float | None = None
    statuses: list[str] = field(default_factory=list)
    evaluations: int = 0

    @property
    def lambda_bar(self) -> float:
        return max(self.per_set_lambda)

    @property
    def lambda_under(self) -> float:
        return float(np.mean(self.per_set_lambda))

    @property
    def log_bar(self) -> float:
        return max(self.per_set_log)

    @property
    def log_under(self) -> float:
        return _log_mean(self.per_set_log)

    @property
    def value(self) -> float:
        return self.lambda_bar if self.objective == "bar" else self.lambda_under

    @property
    def log_value(self) -> float:
        return self.log_bar if self.objective == "bar" else self.log_under

    def root(self, which: str | None = None) -> float:
        log = self.log_bar if (which or self.objective) == "bar" else self.log_under
        return math.exp(log / self.p)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "p": self.p,
            "objective": self.objective,
            "lambda_bar": self.lambda_bar,
            "lambda_under": self.lambda_under,
            "lambda_bar_root": self.root("bar"),
            "lambda_under_root": self.root("under"),
            "per_set_lambda": self.per_set_lambda,
            "family": self.family.to_dict(),
            "strategy": self.strategy,
            "certificate": self.certificate,
            "packing_bound": self.packing_bound,
            "statuses": self.statuses,
        }


def _log_mean(logs: Sequence[float]) -> float:
    a = np.asarray(logs, dtype=float)
    top = a.max()
    return float(top + math.log(np.exp(a - top).mean()))


def _key(logs: Sequence[float], objective: str) -> tuple[float, float]:
    if objective == "bar":
        return (max(logs), _log_mean(logs))
    return (_log_mean(logs), max(logs))


# --- enumeration ----------------------------------------------------------------


def connected_subsets(space: MetricMeasureSpace, allowed: int, limit: int | None = None) -> list[int]:
    """All nonempty connected vertex subsets inside ``allowed`` (bitmasks), sorted.

    Each subset is generated once from its smallest vertex by the usual
    exclusive-neighborhood extension.  The full vertex set is left out.
    """
    nb = space.adj_mask
    full = (1 << space.n) - 1
    out: list[int] = []

    def closure(S: int) -> int:
        m = S
        for v in _members(S):
            m |= nb[v]
        return m

    def extend(S: int, ext: int, floor: int) -> None:
        if S != full:
            out.append(S)
            if limit is not None and len(out) > limit:
                raise ExhaustiveRefused(
                    f"more than {limit} connected subsets; use strategy='local' or raise the guard"
                )
        while ext:
            low = ext & -ext
            w = low.bit_length() - 1
            ext ^= low
            fresh = nb[w] & floor & allowed & ~closure(S)
            extend(S | low, ext | fresh, floor)

    for v in _members(allowed):
        floor = full & ~((1 << (v + 1)) - 1)
        extend(1 << v, nb[v] & floor & allowed, floor)
    out.sort(key=lambda m: (m.bit_count(), m))
    return out


def _independent_exists(space: MetricMeasureSpace, allowed: int, count: int) -> bool:
    """Whether ``count`` pairwise non-adjacent vertices exist inside ``allowed``."""
    adj = [allowed & ~space.closed_mask[v] for v in range(space.n)]
    return _CliqueSearch(adj, count, None).run(allowed) is not None


def _allowed_mask(space: MetricMeasureSpace, omega) -> int:
    if omega is None:
        return (1 << space.n) - 1
    idx = sorted({int(v) for v in omega})
    if not idx:
        raise ValueError("ambient region is empty")
    if len(idx) >= space.n:
        raise ValueError("ambient region must be a proper subset")
    if idx[0] < 0 or idx[-1] >= space.n:
        raise ValueError("ambient vertex out of range")
    return _mask(idx)


# --- exhaustive ----------------------------------------------------------------


def _exhaustive(space, allowed, count, objective, solver, cfg, max_subsets):
    """Exact optimum over families of connected supports.

    Restricting to connected supports loses nothing: a support's eigenvalue is
    the smallest over its components, and keeping only that component leaves a
    valid family with the same value.
    """
    sets = connected_subsets(space, allowed, max_subsets)
    logs = np.array([solver.log_lambda(_members(m), cfg.p, cfg.restarts) for m in sets])
    closed = []
    for m in sets:
        c = m
        for v in _members(m):
            c |= space.closed_mask[v]
        closed.append(c)
    order = sorted(range(len(sets)), key=lambda i: (logs[i], sets[i].bit_count(), sets[i]))
    pos = np.empty(len(sets), dtype=int)
    pos[order] = np.arange(len(sets))
    sorted_sets = [sets[i] for i in order]
    sorted_closed = [closed[i] for i in order]
    sorted_logs = logs[order]
    N = len(order)

    def compat(prefix: int) -> list[int]:
        # compatibility graph on the first `prefix` sets, as bitmasks over sorted indices
        adj = []
        for i in range(prefix):
            row = 0
            ci = sorted_closed[i]
            for j in range(prefix):
                if j != i and not (ci & sorted_sets[j]):
                    row |= 1 << j
            adj.append(row)
        return adj

    full_adj = compat(N)

    def feasible(prefix: int):
        adj = [a & ((1 << prefix) - 1) for a in full_adj[:prefix]]
        return _CliqueSearch(adj, count, None).run((1 << prefix) - 1)

    if feasible(N) is None:
        raise InfeasibleError(f"no family of {count} disjoint non-adjacent supports")
    lo, hi = count, N
    while lo < hi:
        mid = (lo + hi) // 2
        if feasible(mid) is not None:
            hi = mid
        else:
            lo = mid + 1
    bar_family = feasible(lo)
    if objective == "bar":
        return [sorted_sets[i] for i in bar_family], [float(sorted_logs[i]) for i in bar_family]

    # mean objective: branch and bound over sets sorted by eigenvalue
    ref = float(sorted_logs[bar_family[-1]])
    cap = ref + math.log(count)  # a set above (k+1) * lambda_bar can never help
    usable = int(np.searchsorted(sorted_logs, cap, side="right"))
    vals = np.exp(sorted_logs[:usable] - ref)
    best_sum = float(vals[bar_family].sum())
    best = list(bar_family)

    def dfs(chosen: list[int], total: float, cand: int) -> None:
        nonlocal best_sum, best
        need = count - len(chosen)
        if need == 0:
            if total < best_sum:
                best_sum, best = total, list(chosen)
            return
        while cand:
            low = cand & -cand
            i = low.bit_length() - 1
            # all remaining candidates are at least vals[i]
            if total + need * vals[i] >= best_sum:
                return
            cand ^= low
            dfs(chosen + [i], total + vals[i], cand & full_adj[i])

    dfs([], 0.0, (1 << usable) - 1)
    return [sorted_sets[i] for i in best], [float(sorted_logs[i]) for i in best]


# --- local search ----------------------------------------------------------------


class _Family:
    def __init__(self, space: MetricMeasureSpace, masks: list[int]):
        self.space = space
        self.masks = list(masks)

    def closed(self, i: int) -> int:
        c = self.masks[i]
        for v in _members(self.masks[i]):
            c |= self.space.closed_mask[v]
        return c

    def valid(self) -> bool:
        if any(m == 0 for m in self.masks):
            return False
        for i in range(len(self.masks)):
            ci = self.closed(i)
            for j in range(i + 1, len(self.masks)):
                if ci & self.masks[j]:
                    return False
        return True


def _trim(space: MetricMeasureSpace, supports: list[set[int]], centers: list[int]) -> list[set[int]]:
    """Drop vertices until no edge joins two supports; the vertex farther from
    its own center goes first (larger index on ties)."""
    owner = {}
    for i, s in enumerate(supports):
        for v in s:
            owner.setdefault(v, i)
    supports = [set(v for v in s if owner[v] == i) for i, s in enumerate(supports)]
    changed = True
    while changed:
        changed = False
        for u, v in space.edges:
            u, v = int(u), int(v)
            if u in owner and v in owner and owner[u] != owner[v]:
                du = space.dist[centers[owner[u]], u]
                dv = space.dist[centers[owner[v]], v]
                drop = u if (du, u) > (dv, v) else v
                supports[owner[drop]].discard(drop)
                del owner[drop]
                changed = True
    return supports


def _moves(space: MetricMeasureSpace, fam: _Family, allowed: int) -> list[tuple]:
    masks = fam.masks
    closed = [fam.closed(i) for i in range(len(masks))]
    used = 0
    for m in masks:
        used |= m
    out = []
    for i, m in enumerate(masks):
        others_closed = 0
        for j, c in enumerate(closed):
            if j != i:
                others_closed |= c
        # add: an unused vertex touching support i and no other support
        grow = (closed[i] & ~m) & allowed & ~used & ~others_closed
        for v in _members(grow):
            out.append(("add", i, v))
        boundary = [v for v in _members(m) if space.adj_mask[v] & ~m]
        if m.bit_count() > 1:
            for v in boundary:
                out.append(("remove", i, v))
        for v in _members(grow):
            for w in boundary:
                if not (space.adj_mask[w] & (1 << v)):
                    out.append(("shift", i, w, v))
        for v in _members(m):
            for j in range(len(masks)):
                if j != i and (space.adj_mask[v] & masks[j]) and masks[i].bit_count() > 1:
                    out.append(("transfer", i, v, j))
    return out


def _apply(fam: _Family, move: tuple) -> _Family:
    masks = list(fam.masks)
    kind = move[0]
    if kind == "add":
        masks[move[1]] |= 1 << move[2]
    elif kind == "remove":
        masks[move[1]] &= ~(1 << move[2])
    elif kind == "shift":
        masks[move[1]] = (masks[move[1]] & ~(1 << move[2])) | (1 << move[3])
    else:
        masks[move[1]] &= ~(1 << move[2])
        masks[move[3]] |= 1 << move[2]
    return _Family(fam.space, masks)


def _local(space, allowed, count, objective, solver, cfg, seeds, rng, anneal=False, max_rounds=10_000):
    restarts = min(SEARCH_RESTARTS, cfg.restarts)

    def evaluate(fam: _Family) -> list[float]:
        return [solver.log_lambda(_members(m), cfg.p, restarts) for m in fam.masks]

    finalists: list[_Family] = []
    for seed_masks in seeds:
        fam = _Family(space, seed_masks)
        if not fam.valid():
            continue
        finalists.append(fam)
        logs = evaluate(fam)
        key = _key(logs, objective)
        temp = 0.05 if anneal else 0.0
        cur_best = (fam, logs, key)
        for _ in range(max_rounds):
            moves = _moves(space, fam, allowed)
            order = rng.permutation(len(moves))
            moved = False
            for idx in order:
                cand = _apply(fam, moves[idx])
                if not cand.valid():
                    continue
                clogs = evaluate(cand)
                ckey = _key(clogs, objective)
                delta = ckey[0] - key[0]
                accept = ckey < key
                if not accept and temp > 0 and delta > 0:
                    accept = rng.random() < math.exp(-delta / temp)
                if accept:
                    fam, logs, key = cand, clogs, ckey
                    if key < cur_best[2]:
                        cur_best = (fam, logs, key)
                    moved = True
                    break
            if temp > 0:
                temp *= 0.8
                if temp < 1e-4:
                    temp = 0.0
                    fam, logs, key = cur_best
                    continue
            if not moved:
                break
        finalists.append(cur_best[0])
    if not finalists:
        raise InfeasibleError("no valid starting family")
    # seeds stay in the final comparison, so the result never exceeds a seed
    best_masks, best_logs = None, None
    for fam in finalists:
        logs = [solver.log_lambda(_members(m), cfg.p, cfg.restarts) for m in fam.masks]
        if best_logs is None or _key(logs, objective) < _key(best_logs, objective):
            best_masks, best_logs = fam.masks, logs
    return best_masks, best_logs


def _packing_seeds(space: MetricMeasureSpace, allowed: int, count: int, dirichlet: bool) -> list[list[int]]:
    seeds = []
    if dirichlet:
        from .packing import inpack

        omega = _members(allowed)
        res = inpack(space, omega, count)
        centers, r = res.centers, res.radius
    else:
        res = pack_radius(space, count, "auto")
        centers, r = res.centers, res.radius
    for theta in (1.0, 0.75, 0.5):
        sup = [set(int(v) for v in ball(space, c, max(r * theta, 1e-300)) if allowed >> int(v) & 1) | {c}
               for c in centers]
        trimmed = _trim(space, sup, centers)
        if all(trimmed):
            seeds.append([_mask(s) for s in trimmed])
    return seeds


# --- public API ------------------------------------------------------------------


def _run(space, omega, count, k, p, objective, strategy, config, solver, warm, max_subsets):
    if k < 1:
        raise ValueError("k must be at least 1")
    if strategy not in ("exhaustive", "local", "anneal"):
        raise ValueError(f"unknown strategy {strategy!r}")
    cfg = (config or EnergyConfig(p)).with_p(p)
    solver = solver or DirichletSolver(space, cfg)
    allowed = _allowed_mask(space, omega)
    if not _independent_exists(space, allowed, count):
        raise InfeasibleError(f"no room for {count} disjoint non-adjacent supports")
    if strategy == "exhaustive":
        masks, logs = _exhaustive(space, allowed, count, objective, solver, cfg, max_subsets)
        certificate = "exact"
    else:
        seeds = _packing_seeds(space, allowed, count, omega is not None)
        if warm is not None:
            seeds.insert(0, [_mask(s) for s in warm.supports])
        if not seeds:
            raise InfeasibleError("packing seeds could not be separated")
        rng = np.random.default_rng([cfg.seed, k, 0 if objective == "bar" else 1])
        masks, logs = _local(space, allowed, count, objective, solver, cfg, seeds, rng,
                             anneal=strategy == "anneal")
        certificate = "upper_bound"
    pairs = sorted(zip(masks, logs), key=lambda t: (_members(t[0])[0], t[0]))
    family = DisjointFamily(tuple(_members(m) for m, _ in pairs),
                            None if omega is None else tuple(_members(allowed)))
    logs = [l for _, l in pairs]
    statuses = [solver.solve(s, cfg.p, cfg.restarts).status for s in family.supports]
    bound = None
    if omega is None:
        try:
            bound = packing_upper_bound(space, k, p).value
        except InfeasibleError:
            bound = None
    return FakeSpecResult(
        family=family,
        per_set_lambda=[math.exp(l) if l < 709 else math.inf for l in logs],
        per_set_log=logs,
        p=p,
        k=k,
        objective=objective,
        strategy=strategy,
        certificate=certificate,
        packing_bound=bound,
        statuses=statuses,
        evaluations=solver.calls,
    )


def lambda_bar(space, k, p, strategy="local", config=None, *, solver=None, warm=None,
               max_subsets=DEFAULT_MAX_SUBSETS) -> FakeSpecResult:
    """min over k+1 disjoint non-adjacent supports of the largest Dirichlet eigenvalue."""
    return _run(space, None, k + 1, k, p, "bar", strategy, config, solver, warm, max_subsets)


def lambda_under(space, k, p, strategy="local", config=None, *, solver=None, warm=None,
                 max_subsets=DEFAULT_MAX_SUBSETS) -> FakeSpecResult:
    """Same families as lambda_bar, minimizing the mean eigenvalue instead."""
    return _run(space, None, k + 1, k, p, "under", strategy, config, solver, warm, max_subsets)


def lambda_bar_dirichlet(space, omega, k, p, strategy="local", config=None, *, solver=None,
                         warm=None, max_subsets=DEFAULT_MAX_SUBSETS) -> FakeSpecResult:
    """k supports inside omega, largest eigenvalue minimized."""
    return _run(space, omega, k, k, p, "bar", strategy, config, solver, warm, max_subsets)


def lambda_under_dirichlet(space, omega, k, p, strategy="local", config=None, *, solver=None,
                           warm=None, max_subsets=DEFAULT_MAX_SUBSETS) -> FakeSpecResult:
    return _run(space, omega, k, k, p, "under", strategy, config, solver, warm, max_subsets)


@dataclass
class PackingBound:
    log_value: float
    p: float
    radius: float
    centers: list[int]
    family: DisjointFamily
    functions: list[np.ndarray]

    @property
    def value(self) -> float:
        return math.exp(self.log_value) if self.log_value < 709 else math.inf

    @property
    def root(self) -> float:
        return math.exp(self.log_value / self.p)


def packing_upper_bound(space: MetricMeasureSpace, k: int, p: float, mode: str = "auto") -> PackingBound:
    """max_i of the Rayleigh quotient of the cone functions max(r - dist(x_i, .), 0)
    at an optimal (k+1)-packing, after trimming supports apart.

    The trimmed cones have disjoint non-adjacent supports, so the value bounds
    lambda_bar_k from above.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    res = pack_radius(space, k + 1, mode)
    centers, r = res.centers, res.radius
    sup = [set(int(v) for v in ball(space, c, r)) for c in centers]
    trimmed = _trim(space, sup, centers)
    if not all(trimmed):
        raise InfeasibleError("packing balls cannot be separated by a non-adjacent gap")
    funcs = []
    for c, s in zip(centers, trimmed):
        u = np.zeros(space.n)
        idx = np.array(sorted(s))
        u[idx] = np.maximum(r - space.dist[c, idx], 0.0)
        funcs.append(u)
    logs = [log_rayleigh(space, u, p) for u in funcs]
    family = DisjointFamily.of([sorted(s) for s in trimmed])
    return PackingBound(max(logs), p, r, list(centers), family, funcs)


@dataclass
class SpanReport:
    norm_lhs: float
    norm_rhs: float
    energy_lhs: float
    energy_rhs: float
    norm_rel_err: float
    energy_rel_err: float
    quotient: float
    max_lambda: float
    passed: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def span_identity_check(space: MetricMeasureSpace, family: DisjointFamily, t, p: float,
                        solver: DirichletSolver | None = None, tol: float = 1e-12) -> SpanReport:
    """Check that norms and energies of sum_i t_i u_i split over the supports.

    u_i is the eigenfunction minimizer of support i normalized to unit p-norm.
    Raises AdjacencyError when the family violates the non-adjacency contract.
    """
    family.validate(space)
    t = np.asarray(t, dtype=float)
    if t.shape != (len(family.supports),):
        raise ValueError("one weight per support is required")
    if not np.any(t):
        raise ValueError("weights must not all vanish")
    solver = solver or DirichletSolver(space, EnergyConfig(p))
    us, energies = [], []
    for s in family.supports:
        u = solver.solve(s, p).minimizer.copy()
        if not np.any(u[list(s)]):
            u[list(s)] = 1.0
        u /= math.exp(log_p_norm_p(space, u, p) / p)
        us.append(u)
        energies.append(math.exp(log_p_energy(space, u, p)))
    f = sum(ti * u for ti, u in zip(t, us))
    at = np.abs(t) ** p
    norm_lhs = math.exp(log_p_norm_p(space, f, p))
    norm_rhs = float(at.sum())
    energy_lhs = math.exp(log_p_energy(space, f, p))
    energy_rhs = float(np.dot(at, energies))
    nerr = abs(norm_lhs - norm_rhs) / norm_rhs
    eerr = abs(energy_lhs - energy_rhs) / energy_rhs if energy_rhs else abs(energy_lhs)
    quotient = energy_lhs / norm_lhs
    lam_max = max(energies)  # unit norm, so the energy is the quotient
    return SpanReport(norm_lhs, norm_rhs, energy_lhs, energy_rhs, nerr, eerr, quotient, lam_max,
                      bool(nerr <= tol and eerr <= tol and quotient <= lam_max * (1 + tol)))

"""Packing radii, inradius, inscribed packing radii and the counting function.

pack_{k+1} is half the largest possible minimum pairwise distance among k+1
vertices (max-min dispersion).  The exact solver binary-searches that minimum
over the finite set of pairwise distances; each probe asks for a (k+1)-clique
in the graph joining vertices at distance >= t, answered by a bitset
branch-and-bound with a greedy-coloring bound.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .space import MetricMeasureSpace


class InfeasibleError(ValueError):
    """Raised when the requested configuration cannot exist on the space."""


class _Budget(Exception):
    pass


@dataclass
class PackingResult:
    centers: list[int]
    radius: float
    certificate: str  # "exact" or "heuristic"
    k_plus_1: int
    lower_bound: float
    upper_bound: float
    nodes: int = 0

    def to_dict(self) -> dict:
        return {
            "k_plus_1": self.k_plus_1,
            "radius": self.radius,
            "centers": self.centers,
            "certificate": self.certificate,
            "lower_bound": self.lower_bound,
            "upper_bound": self.upper_bound,
        }


def _color_bound(adj: list[int], P: int) -> int:
    """Number of colors used by a greedy coloring of P (an upper bound on any clique)."""
    colors = 0
    U = P
    while U:
        colors += 1
        Q = U
        while Q:
            low = Q & -Q
            v = low.bit_length() - 1
            U &= ~low
            Q &= ~low & ~adj[v]
    return colors


class _CliqueSearch:
    """Lexicographically smallest clique of a given size, or None."""

    def __init__(self, adj: list[int], size: int, budget: int | None):
        self.adj = adj
        self.size = size
        self.budget = budget
        self.nodes = 0

    def run(self, P: int) -> list[int] | None:
        return self._dfs([], P)

    def _dfs(self, chosen: list[int], P: int) -> list[int] | None:
        self.nodes += 1
        if self.budget is not None and self.nodes > self.budget:
            raise _Budget
        need = self.size - len(chosen)
        if need == 0:
            return chosen
        if P.bit_count() < need or _color_bound(self.adj, P) < need:
            return None
        while P:
            if P.bit_count() < need:
                return None
            low = P & -P
            v = low.bit_length() - 1
            P ^= low
            # only higher-indexed vertices remain in P, so results come out sorted
            found = self._dfs(chosen + [v], P & self.adj[v])
            if found is not None:
                return found
        return None


def _far_graph(dist: np.ndarray, t: float, allowed: np.ndarray | None = None) -> list[int]:
    far = dist >= t
    if allowed is not None:
        far &= allowed[:, None] & allowed[None, :]
    np.fill_diagonal(far, False)
    packed = np.packbits(far, axis=1, bitorder="little")
    return [int.from_bytes(row.tobytes(), "little") for row in packed]


def _max_threshold(
    dist: np.ndarray,
    values: np.ndarray,
    size: int,
    allowed_at: callable,
    budget: int | None,
) -> tuple[float, list[int] | None, int, tuple[float, float] | None]:
    """Largest t in ``values`` admitting a clique of ``size`` in the far graph.

    Returns (t, clique, nodes, bracket); bracket is set when the budget ran out.
    """
    lo, hi = 0, len(values) - 1
    best_t, best = -math.inf, None
    nodes = 0
    # feasibility is monotone decreasing in t
    while lo <= hi:
        mid = (lo + hi) // 2
        t = float(values[mid])
        allowed = allowed_at(t)
        adj = _far_graph(dist, t, allowed)
        P = 0
        for v in np.flatnonzero(allowed):
            P |= 1 << int(v)
        search = _CliqueSearch(adj, size, budget)
        try:
            clique = search.run(P)
        except _Budget:
            nodes += search.nodes
            return best_t, best, nodes, (float(values[lo - 1]) if lo > 0 else 0.0, float(values[hi]))
        nodes += search.nodes
        if clique is not None:
            best_t, best = t, clique
            lo = mid + 1
        else:
            hi = mid - 1
    return best_t, best, nodes, None


def greedy_centers(space: MetricMeasureSpace, k_plus_1: int) -> list[int]:
    """Farthest-point insertion started at an endpoint of a diameter pair."""
    d = space.dist
    start = int(np.argmax(d.max(axis=1) == d.max()))
    centers = [start]
    near = d[start].copy()
    while len(centers) < k_plus_1:
        nxt = int(np.argmax(near))
        centers.append(nxt)
        near = np.minimum(near, d[nxt])
    return sorted(centers)


def _min_pairwise(space: MetricMeasureSpace, centers: Sequence[int]) -> float:
    c = np.asarray(centers)
    sub = space.dist[np.ix_(c, c)]
    return float(sub[np.triu_indices(len(c), 1)].min())


def pack_radius(
    space: MetricMeasureSpace,
    k_plus_1: int,
    mode: str = "auto",
    node_budget: int | None = 2_000_000,
) -> PackingResult:
    """Half the max over (k+1)-subsets of the min pairwise distance.

    ``exact`` always finishes; ``greedy`` returns farthest-point insertion with
    the bracket [greedy, min(2 greedy, diam/2)]; ``auto`` runs the exact search
    under ``node_budget`` and falls back to a heuristic bracket if it runs out.
    """
    if k_plus_1 < 2:
        raise ValueError("k_plus_1 must be at least 2")
    if k_plus_1 > space.n:
        raise InfeasibleError(f"cannot place {k_plus_1} centers on {space.n} vertices")
    if mode not in ("exact", "greedy", "auto"):
        raise ValueError(f"unknown packing mode {mode!r}")
    g_centers = greedy_centers(space, k_plus_1)
    g = _min_pairwise(space, g_centers) / 2
    half_diam = float(space.dist.max()) / 2
    upper = min(2 * g, half_diam)
    if mode == "greedy":
        return PackingResult(g_centers, g, "heuristic", k_plus_1, g, upper)
    iu = np.triu_indices(space.n, 1)
    d = np.unique(space.dist[iu])
    # the optimum lies in [2g, 2 upper]
    values = d[(d >= 2 * g - 1e-15) & (d <= 2 * upper + 1e-15)]
    everyone = np.ones(space.n, dtype=bool)
    t, clique, nodes, bracket = _max_threshold(
        space.dist, values, k_plus_1, lambda _t: everyone, None if mode == "exact" else node_budget
    )
    if bracket is not None:
        lo = max(g, t / 2 if clique else g)
        cen = clique if clique and t / 2 >= g else g_centers
        return PackingResult(sorted(cen), lo, "heuristic", k_plus_1, lo, bracket[1] / 2, nodes)
    return PackingResult(clique, t / 2, "exact", k_plus_1, t / 2, t / 2, nodes)


def _check_region(space: MetricMeasureSpace, A) -> np.ndarray:
    idx = np.asarray(sorted({int(v) for v in A}), dtype=int)
    if idx.size == 0:
        raise ValueError("region is empty")
    if idx.size >= space.n:
        raise ValueError("region must be a proper subset (its complement is the boundary)")
    if idx[0] < 0 or idx[-1] >= space.n:
        raise ValueError("region vertex out of range")
    return idx


def boundary_distance(space: MetricMeasureSpace, A) -> dict[int, float]:
    idx = _check_region(space, A)
    outside = np.setdiff1d(np.arange(space.n), idx)
    depth = space.dist[np.ix_(idx, outside)].min(axis=1)
    return {int(v): float(x) for v, x in zip(idx, depth)}


def inradius(space: MetricMeasureSpace, A) -> float:
    """max over x in A of dist(x, V minus A)."""
    return max(boundary_distance(space, A).values())


@dataclass
class InpackResult:
    radius: float
    centers: list[int] = field(default_factory=list)


def inpack(space: MetricMeasureSpace, omega, k: int) -> InpackResult:
    """Largest r such that k centers in omega are 2r apart and r away from the complement."""
    depth = boundary_distance(space, omega)
    idx = np.array(sorted(depth))
    if not 1 <= k <= idx.size:
        raise ValueError(f"k must lie in [1, {idx.size}]")
    depth_arr = np.zeros(space.n)
    depth_arr[idx] = [depth[int(v)] for v in idx]
    if k == 1:
        v = int(idx[int(np.argmax(depth_arr[idx]))])
        return InpackResult(float(depth_arr[v]), [v])
    sub = space.dist[np.ix_(idx, idx)] / 2
    cand = np.unique(np.concatenate([sub[np.triu_indices(idx.size, 1)], depth_arr[idx]]))
    in_omega = np.zeros(space.n, dtype=bool)
    in_omega[idx] = True
    t, clique, _, _ = _max_threshold(
        space.dist / 2, cand, k, lambda t: in_omega & (depth_arr >= t), None
    )
    if clique is None:
        raise InfeasibleError("no admissible center set")  # unreachable: t = min depth works
    return InpackResult(float(t), clique)


@dataclass
class CountingResult:
    r: float
    count: int
    truncated: bool
    packs: list[float]


def counting_function(space: MetricMeasureSpace, r: float, k_max: int, mode: str = "exact") -> CountingResult:
    """N(r) = #{k >= 1 : pack_{k+1} > r}, scanning k = 1..k_max.

    The scan stops at the first pack_{k+1} <= r since the sequence is
    non-increasing.  ``truncated`` is set when pack_{k_max+1} still exceeds r.
    """
    if not r > 0:
        raise ValueError("r must be positive")
    packs = []
    for k in range(1, k_max + 1):
        if k + 1 > space.n:
            return CountingResult(r, len(packs), False, packs)
        val = pack_radius(space, k + 1, mode).radius
        packs.append(val)
        if val <= r:
            return CountingResult(r, k - 1, False, packs)
    return CountingResult(r, k_max, True, packs)


def packing_law_report(
    spaces: Sequence[MetricMeasureSpace],
    dim: int,
    k_list: Sequence[int],
    mode: str = "auto",
) -> dict:
    """Table of k pack_k^dim / vol over a refinement family.

    A row is marked valid when the balls are at least four mesh steps across,
    since on a fixed graph pack_k eventually sticks to the mesh spacing.
    """
    rows = []
    for space in spaces:
        vol = float(space.meta.get("volume", 1.0))
        step = float(space.lengths.max())
        for k in k_list:
            if k > space.n:
                continue
            pk = pack_radius(space, k, mode).radius
            rows.append({
                "space": repr(space),
                "n": space.n,
                "k": k,
                "pack_k": pk,
                "value": k * pk**dim / vol,
                "valid": bool(2 * pk >= 4 * step),
            })
    target = 0.5 if dim == 1 else None
    valid = [r for r in rows if r["valid"]]
    trend = max(valid, key=lambda r: (r["n"], r["k"]))["value"] if valid else None
    return {"dim": dim, "rows": rows, "target": target, "trend": trend}

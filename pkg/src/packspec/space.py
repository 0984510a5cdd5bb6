"""Finite geodesic metric measure spaces.

A space is a connected weighted graph carrying the shortest-path metric, a
probability measure on the vertices and a nonnegative weight per edge used by
the discrete p-energy.  Everything downstream (balls, packing radii, Dirichlet
eigenvalues) is a finite computation on one of these objects.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

SCHEMA_VERSION = 1


class SpaceError(ValueError):
    """Raised when a space description violates the build contract."""


@dataclass(frozen=True, eq=False)
class MetricMeasureSpace:
    n: int
    edges: np.ndarray  # (E, 2) int, u < v
    lengths: np.ndarray  # (E,)
    measure: np.ndarray  # (n,), sums to 1
    edge_measure: np.ndarray  # (E,), scaled by the same constant as measure
    dist: np.ndarray  # (n, n)
    meta: dict = field(default_factory=dict)

    @cached_property
    def neighbors(self) -> list[np.ndarray]:
        nbrs: list[list[int]] = [[] for _ in range(self.n)]
        for u, v in self.edges:
            nbrs[u].append(int(v))
            nbrs[v].append(int(u))
        return [np.array(sorted(a), dtype=int) for a in nbrs]

    @cached_property
    def incident(self) -> list[np.ndarray]:
        inc: list[list[int]] = [[] for _ in range(self.n)]
        for e, (u, v) in enumerate(self.edges):
            inc[u].append(e)
            inc[v].append(e)
        return [np.array(a, dtype=int) for a in inc]

    @cached_property
    def adj_mask(self) -> list[int]:
        """Neighbor sets as integer bitmasks (bit v set iff v is adjacent)."""
        masks = [0] * self.n
        for u, v in self.edges:
            masks[u] |= 1 << int(v)
            masks[v] |= 1 << int(u)
        return masks

    @cached_property
    def closed_mask(self) -> list[int]:
        return [m | (1 << v) for v, m in enumerate(self.adj_mask)]

    @cached_property
    def min_edge_length(self) -> float:
        return float(self.lengths.min())

    @property
    def num_edges(self) -> int:
        return len(self.lengths)

    def __repr__(self) -> str:
        name = self.meta.get("generator", "custom")
        return f"MetricMeasureSpace({name}, n={self.n}, edges={self.num_edges})"

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "vertices": self.n,
            "edges": [[int(u), int(v), float(w)] for (u, v), w in zip(self.edges, self.lengths)],
            "measure": [float(x) for x in self.measure],
            "edge_measure": [float(x) for x in self.edge_measure],
            "meta": self.meta,
        }


def build(
    vertices: int,
    edges: Sequence[Sequence[float]],
    measure: Sequence[float] | None = None,
    edge_measure: Sequence[float] | None = None,
    meta: dict | None = None,
) -> MetricMeasureSpace:
    """Validate a weighted graph and turn it into a metric measure space.

    ``edges`` holds ``(u, v, length)`` triples.  ``measure`` defaults to the
    uniform measure.  Without ``edge_measure`` each edge gets
    ``length * (rho_u + rho_v) / 2`` where ``rho_v`` is the vertex mass divided
    by half the total length incident to ``v``; on uniform 1D meshes this is the
    exact cell length.  Vertex and edge measures are divided by the same
    constant so the vertex measure is a probability measure.
    """
    n = int(vertices)
    if n < 2:
        raise SpaceError(f"a space needs at least two vertices, got {n}")
    if len(edges) == 0:
        raise SpaceError("no edges: the graph is disconnected")
    arr = np.asarray(edges, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise SpaceError("edges must be a list of [u, v, length] triples")
    uv = arr[:, :2]
    if not np.all(uv == np.round(uv)):
        raise SpaceError("edge endpoints must be integers")
    uv = uv.astype(int)
    lengths = arr[:, 2].copy()
    if uv.min() < 0 or uv.max() >= n:
        raise SpaceError(f"edge endpoint out of range [0, {n})")
    if np.any(uv[:, 0] == uv[:, 1]):
        raise SpaceError("self-loops are not allowed")
    if not np.all(np.isfinite(lengths)) or np.any(lengths <= 0):
        bad = int(np.flatnonzero(~(lengths > 0))[0]) if np.any(~(lengths > 0)) else 0
        raise SpaceError(f"edge {bad} has nonpositive or non-finite length {lengths[bad]!r}")
    uv = np.sort(uv, axis=1)
    keys = uv[:, 0] * n + uv[:, 1]
    if len(np.unique(keys)) != len(keys):
        raise SpaceError("duplicate edges between the same pair of vertices")

    if measure is None:
        m = np.full(n, 1.0 / n)
    else:
        m = np.asarray(measure, dtype=float).copy()
        if m.shape != (n,):
            raise SpaceError(f"measure must have {n} entries, got {m.shape}")
        if not np.all(np.isfinite(m)) or np.any(m <= 0):
            raise SpaceError("vertex measure must be strictly positive and finite")

    if edge_measure is None:
        cell = np.zeros(n)
        np.add.at(cell, uv[:, 0], lengths / 2)
        np.add.at(cell, uv[:, 1], lengths / 2)
        with np.errstate(divide="ignore"):  # isolated vertices are rejected below
            rho = m / cell
        mu = lengths * (rho[uv[:, 0]] + rho[uv[:, 1]]) / 2
    else:
        mu = np.asarray(edge_measure, dtype=float).copy()
        if mu.shape != lengths.shape:
            raise SpaceError("edge_measure must have one entry per edge")
        if not np.all(np.isfinite(mu)) or np.any(mu < 0):
            raise SpaceError("edge measure must be nonnegative and finite")

    total = float(m.sum())
    # already-normalized input is kept bit-for-bit so save/load is idempotent
    if abs(total - 1.0) > 1e-12:
        m = m / total
        mu = mu / total

    graph = csr_matrix((lengths, (uv[:, 0], uv[:, 1])), shape=(n, n))
    ncomp, _ = connected_components(graph, directed=False)
    if ncomp != 1:
        raise SpaceError(f"graph is disconnected ({ncomp} components)")
    dist = shortest_path(graph, method="D", directed=False)

    for a in (uv, lengths, m, mu, dist):
        a.setflags(write=False)
    return MetricMeasureSpace(n, uv, lengths, m, mu, dist, dict(meta or {}))


def from_dict(data: dict[str, Any]) -> MetricMeasureSpace:
    try:
        return build(
            data["vertices"],
            data["edges"],
            data.get("measure"),
            data.get("edge_measure"),
            data.get("meta"),
        )
    except KeyError as exc:
        raise SpaceError(f"space file is missing field {exc}") from None


def load(path: str | Path) -> MetricMeasureSpace:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SpaceError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise SpaceError(f"{path}: expected a JSON object")
    return from_dict(data)


def dumps(space: MetricMeasureSpace) -> str:
    return json.dumps(space.to_dict(), indent=1, sort_keys=True)


# --- metric quantities -------------------------------------------------------


def ball(space: MetricMeasureSpace, x: int, r: float) -> np.ndarray:
    """Vertices at distance strictly less than ``r`` from ``x``."""
    return np.flatnonzero(space.dist[x] < r)


def diameter(space: MetricMeasureSpace) -> float:
    return float(space.dist.max())


def dist_to_set(space: MetricMeasureSpace, x: int, vertices) -> float:
    idx = np.asarray(list(vertices), dtype=int)
    if idx.size == 0:
        return math.inf
    return float(space.dist[x, idx].min())


def critical_radii(space: MetricMeasureSpace, factors: Sequence[float] = (1.0,)) -> np.ndarray:
    """Sorted distinct positive distances, each divided by every factor."""
    d = np.unique(space.dist[np.triu_indices(space.n, 1)])
    return np.unique(np.concatenate([d / f for f in factors]))


def _interval_points(breaks: np.ndarray) -> np.ndarray:
    """One radius inside each interval (b_i, b_{i+1}] and one beyond the last."""
    mids = (breaks[:-1] + breaks[1:]) / 2 if len(breaks) > 1 else np.empty(0)
    first = breaks[:1] / 2
    last = breaks[-1:] * 1.5 + 1.0
    return np.concatenate([first, mids, last])


def doubling_constant(space: MetricMeasureSpace) -> float:
    """Exact sup over centers and radii of m(U_2r(x)) / m(U_r(x)).

    Both balls are constant on the intervals between consecutive values of
    {d, d/2 : d a pairwise distance}, so one radius per interval suffices.
    """
    radii = _interval_points(critical_radii(space, (1.0, 2.0)))
    best = 1.0
    m = space.measure
    for x in range(space.n):
        d = space.dist[x]
        small = (d[None, :] < radii[:, None]) @ m
        big = (d[None, :] < 2 * radii[:, None]) @ m
        best = max(best, float(np.max(big / small)))
    return best


def lip_local_all(space: MetricMeasureSpace, f) -> np.ndarray:
    """Largest neighbor slope |f(x) - f(y)| / length at every vertex."""
    f = as_function(space, f)
    slopes = np.abs(f[space.edges[:, 0]] - f[space.edges[:, 1]]) / space.lengths
    out = np.zeros(space.n)
    np.maximum.at(out, space.edges[:, 0], slopes)
    np.maximum.at(out, space.edges[:, 1], slopes)
    return out


def lip_local(space: MetricMeasureSpace, f, x: int) -> float:
    return float(lip_local_all(space, f)[x])


def lip_global(space: MetricMeasureSpace, f) -> float:
    f = as_function(space, f)
    iu = np.triu_indices(space.n, 1)
    return float(np.max(np.abs(f[iu[0]] - f[iu[1]]) / space.dist[iu]))


def as_function(space: MetricMeasureSpace, f) -> np.ndarray:
    arr = np.asarray(f, dtype=float)
    if arr.shape != (space.n,):
        raise ValueError(f"function must have {space.n} values, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("function values must be finite")
    return arr


def induced_components(space: MetricMeasureSpace, vertices) -> list[list[int]]:
    """Connected components of the subgraph induced on ``vertices``, sorted."""
    members = set(int(v) for v in vertices)
    seen: set[int] = set()
    comps = []
    for start in sorted(members):
        if start in seen:
            continue
        comp = [start]
        seen.add(start)
        stack = [start]
        while stack:
            u = stack.pop()
            for w in space.neighbors[u]:
                w = int(w)
                if w in members and w not in seen:
                    seen.add(w)
                    comp.append(w)
                    stack.append(w)
        comps.append(sorted(comp))
    return comps


# --- generators --------------------------------------------------------------


def _path_cells(lengths: np.ndarray, edges: np.ndarray, n: int) -> np.ndarray:
    cell = np.zeros(n)
    np.add.at(cell, edges[:, 0], lengths / 2)
    np.add.at(cell, edges[:, 1], lengths / 2)
    return cell


def _one_dimensional(n, edges, lengths, meta) -> MetricMeasureSpace:
    # vertex mass = 1D Hausdorff measure of the vertex cell, edge mass = edge length
    edges = np.asarray(edges, dtype=int)
    lengths = np.asarray(lengths, dtype=float)
    cell = _path_cells(lengths, edges, n)
    triples = [[int(u), int(v), float(w)] for (u, v), w in zip(edges, lengths)]
    return build(n, triples, cell, lengths, meta)


def circle(L: float, n: int) -> MetricMeasureSpace:
    if n < 3:
        raise SpaceError("circle needs n >= 3")
    if not L > 0:
        raise SpaceError("circle length must be positive")
    edges = [(i, (i + 1) % n) for i in range(n)]
    meta = {"generator": "circle", "L": L, "n": n, "dim": 1, "volume": L}
    return _one_dimensional(n, edges, np.full(n, L / n), meta)


def interval(L: float, n: int) -> MetricMeasureSpace:
    if n < 2:
        raise SpaceError("interval needs n >= 2")
    if not L > 0:
        raise SpaceError("interval length must be positive")
    edges = [(i, i + 1) for i in range(n - 1)]
    meta = {"generator": "interval", "L": L, "n": n, "dim": 1, "volume": L}
    return _one_dimensional(n, edges, np.full(n - 1, L / (n - 1)), meta)


def torus_grid(L1: float, L2: float, n1: int, n2: int) -> MetricMeasureSpace:
    if n1 < 3 or n2 < 3:
        raise SpaceError("torus_grid needs n1, n2 >= 3")
    h1, h2 = L1 / n1, L2 / n2
    idx = lambda i, j: i * n2 + j  # noqa: E731
    edges = []
    for i in range(n1):
        for j in range(n2):
            edges.append([idx(i, j), idx((i + 1) % n1, j), h1])
            edges.append([idx(i, j), idx(i, (j + 1) % n2), h2])
    meta = {"generator": "torus_grid", "L1": L1, "L2": L2, "n1": n1, "n2": n2,
            "dim": 2, "volume": L1 * L2}
    return build(n1 * n2, edges, None, None, meta)


def theta_space(h: float) -> MetricMeasureSpace:
    """Two unit segments glued to the unit circle at (-1, 0) and (1, 0).

    Vertex 0 is (-2, 0), vertex 1 is (2, 0); the intrinsic metric makes them
    antipodal at distance pi + 2.
    """
    if not h > 0 or h > 1:
        raise SpaceError("theta_space needs 0 < h <= 1")
    n_seg = max(1, round(1.0 / h))
    n_arc = max(2, round(math.pi / h))
    coords: list[tuple[float, float]] = []

    def add(pt):
        coords.append(pt)
        return len(coords) - 1

    left_end, right_end = add((-2.0, 0.0)), add((2.0, 0.0))
    v_minus, v_plus = add((-1.0, 0.0)), add((1.0, 0.0))
    edges, lengths = [], []

    def chain(a, b, interior, step):
        prev = a
        for pt in interior:
            cur = add(pt)
            edges.append((prev, cur))
            lengths.append(step)
            prev = cur
        edges.append((prev, b))
        lengths.append(step)

    seg_step = 1.0 / n_seg
    chain(left_end, v_minus, [(-2.0 + i * seg_step, 0.0) for i in range(1, n_seg)], seg_step)
    chain(v_plus, right_end, [(1.0 + i * seg_step, 0.0) for i in range(1, n_seg)], seg_step)
    arc_step = math.pi / n_arc
    for sign in (1.0, -1.0):
        pts = [(math.cos(math.pi - i * arc_step), sign * math.sin(math.pi - i * arc_step))
               for i in range(1, n_arc)]
        chain(v_minus, v_plus, pts, arc_step)
    meta = {"generator": "theta_space", "h": h, "dim": 1, "volume": 2.0 + 2 * math.pi,
            "coords": [[round(x, 12), round(y, 12)] for x, y in coords]}
    return _one_dimensional(len(coords), edges, lengths, meta)


def random_geometric(n: int, radius: float, seed: int = 0) -> MetricMeasureSpace:
    """Uniform points in the unit square, edges of Euclidean length below ``radius``.

    Components are joined through their closest pair of points so the result is
    always connected.  The vertex measure is random in [0.5, 1.5] (normalized).
    """
    if n < 2:
        raise SpaceError("random_geometric needs n >= 2")
    if not radius > 0:
        raise SpaceError("radius must be positive")
    rng = np.random.default_rng(seed)
    pts = rng.random((n, 2))
    mass = rng.uniform(0.5, 1.5, n)
    d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
    iu = np.triu_indices(n, 1)
    close = d[iu] < radius
    edges = {(int(u), int(v)) for u, v in zip(iu[0][close], iu[1][close])}
    while True:
        graph = csr_matrix((np.ones(len(edges)), tuple(np.array(sorted(edges)).T)), shape=(n, n)) \
            if edges else csr_matrix((n, n))
        ncomp, labels = connected_components(graph, directed=False)
        if ncomp == 1:
            break
        first = labels == labels[0]
        sub = np.where(first[:, None] & ~first[None, :], d, np.inf)
        u, v = np.unravel_index(np.argmin(sub), sub.shape)
        edges.add((min(u, v), max(u, v)))
    triples = [[u, v, float(d[u, v])] for u, v in sorted(edges)]
    meta = {"generator": "random_geometric", "n": n, "radius": radius, "seed": seed,
            "points": pts.round(12).tolist()}
    return build(n, triples, mass, None, meta)


GENERATORS = {
    "circle": circle,
    "interval": interval,
    "torus_grid": torus_grid,
    "theta_space": theta_space,
    "random_geometric": random_geometric,
}

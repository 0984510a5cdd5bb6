"""Discrete p-energy, Rayleigh quotients and the first Dirichlet eigenvalue.

For a function f on the vertices,

    energy(f) = sum_e mu_e |f(u) - f(v)|^p / l_e^p,   norm(f)^p = sum_x m_x |f(x)|^p,

and the first Dirichlet eigenvalue of a vertex set A is the infimum of
energy/norm^p over nonzero f vanishing outside A.  All quantities are
evaluated in a max-rescaled log representation so that p up to MAX_P does not
overflow.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh
from scipy.optimize import minimize

from .space import MetricMeasureSpace, as_function, induced_components

MAX_P = 256.0


class SupportError(ValueError):
    """Raised for an empty or full Dirichlet support."""


@dataclass(frozen=True)
class EnergyConfig:
    p: float
    tol: float = 1e-8
    max_iter: int = 20000
    restarts: int = 8
    seed: int = 0
    log_domain: bool | None = None

    def __post_init__(self):
        if not (self.p > 1):
            raise ValueError(f"p must exceed 1, got {self.p}")
        if self.p > MAX_P:
            raise ValueError(f"p is capped at {MAX_P:g}, got {self.p}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.restarts < 1:
            raise ValueError("restarts must be at least 1")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")

    @property
    def use_log(self) -> bool:
        return self.p >= 32 if self.log_domain is None else bool(self.log_domain)

    def with_p(self, p: float) -> "EnergyConfig":
        return EnergyConfig(p, self.tol, self.max_iter, self.restarts, self.seed, self.log_domain)

    def with_restarts(self, restarts: int) -> "EnergyConfig":
        return EnergyConfig(self.p, self.tol, self.max_iter, restarts, self.seed, self.log_domain)


@dataclass
class EigenResult:
    """First Dirichlet eigenvalue of ``support`` with solver diagnostics.

    ``restart_spread`` is max - min of the per-restart values on the
    component that attains the minimum.  ``crosscheck`` holds the exact linear
    eigenvalue when p = 2.
    """

    lambda_: float
    log_lambda: float
    p: float
    minimizer: np.ndarray
    support: tuple[int, ...]
    iterations: int
    status: str
    restart_spread: float
    restart_values: list[float] = field(default_factory=list)
    crosscheck: float | None = None

    @property
    def lambda_root(self) -> float:
        return math.exp(self.log_lambda / self.p)

    def to_dict(self, with_minimizer: bool = False) -> dict:
        out = {
            "lambda": self.lambda_,
            "lambda_root": self.lambda_root,
            "log_lambda": self.log_lambda,
            "p": self.p,
            "support": list(self.support),
            "iterations": self.iterations,
            "status": self.status,
            "restart_spread": self.restart_spread,
            "restart_values": self.restart_values,
        }
        if self.crosscheck is not None:
            out["crosscheck"] = self.crosscheck
        if with_minimizer:
            out["minimizer"] = [float(v) for v in self.minimizer]
        return out


# --- evaluation ---------------------------------------------------------------


def _log_power_sum(weights: np.ndarray, values: np.ndarray, p: float) -> float:
    """log(sum w |v|^p), computed by factoring out max |v|."""
    a = np.abs(values)
    top = a.max() if a.size else 0.0
    if top == 0.0:
        return -math.inf
    return p * math.log(top) + math.log(float(np.sum(weights * (a / top) ** p)))


def log_p_norm_p(space: MetricMeasureSpace, f, p: float) -> float:
    return _log_power_sum(space.measure, as_function(space, f), p)


def log_p_energy(space: MetricMeasureSpace, f, p: float) -> float:
    f = as_function(space, f)
    slopes = (f[space.edges[:, 0]] - f[space.edges[:, 1]]) / space.lengths
    return _log_power_sum(space.edge_measure, slopes, p)


def p_norm(space: MetricMeasureSpace, f, p: float) -> float:
    return math.exp(log_p_norm_p(space, f, p) / p)


def p_energy(space: MetricMeasureSpace, f, p: float) -> float:
    val = log_p_energy(space, f, p)
    return math.exp(val) if val < 709 else math.inf


def log_rayleigh(space: MetricMeasureSpace, f, p: float) -> float:
    den = log_p_norm_p(space, f, p)
    if den == -math.inf:
        raise ValueError("Rayleigh quotient of the zero function")
    return log_p_energy(space, f, p) - den


def rayleigh(space: MetricMeasureSpace, f, p: float) -> float:
    val = log_rayleigh(space, f, p)
    return math.exp(val) if val < 709 else math.inf


def cone_function(space: MetricMeasureSpace, x: int, r: float) -> np.ndarray:
    """max(r - dist(x, .), 0); supported on ball(x, r) and 1-Lipschitz."""
    return np.maximum(r - space.dist[x], 0.0)


def dist_to_complement(space: MetricMeasureSpace, support) -> np.ndarray:
    idx = np.asarray(sorted(support), dtype=int)
    outside = np.setdiff1d(np.arange(space.n), idx)
    return space.dist[np.ix_(idx, outside)].min(axis=1)


# --- solver ---------------------------------------------------------------------


class _Problem:
    """Rayleigh quotient restricted to functions supported on one vertex set."""

    def __init__(self, space: MetricMeasureSpace, comp: list[int], p: float):
        self.p = p
        self.comp = np.asarray(comp, dtype=int)
        k = len(comp)
        loc = np.full(space.n, k)  # index k is the shared zero slot
        loc[self.comp] = np.arange(k)
        eu, ev = space.edges[:, 0], space.edges[:, 1]
        keep = (loc[eu] < k) | (loc[ev] < k)
        self.a = loc[eu[keep]]
        self.b = loc[ev[keep]]
        self.inv_len = 1.0 / space.lengths[keep]
        self.log_mu = np.log(np.maximum(space.edge_measure[keep], 1e-300))
        self.mu_pos = space.edge_measure[keep] > 0
        self.log_m = np.log(space.measure[self.comp])
        self.size = k

    def log_value_grad(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        p, k = self.p, self.size
        xz = np.append(x, 0.0)
        g = (xz[self.a] - xz[self.b]) * self.inv_len
        ag = np.abs(g)
        G = ag.max()
        F = x.max()
        if G == 0.0 or F <= 0.0:
            return math.inf, np.zeros(k)
        with np.errstate(divide="ignore"):
            tE = np.where(self.mu_pos & (ag > 0), self.log_mu + p * np.log(ag / G), -np.inf)
            tN = np.where(x > 0, self.log_m + p * np.log(np.maximum(x, 0) / F), -np.inf)
        sE = np.exp(tE - tE.max())
        SE = sE.sum()
        sN = np.exp(tN - tN.max())
        SN = sN.sum()
        val = p * math.log(G) + tE.max() + math.log(SE) - p * math.log(F) - tN.max() - math.log(SN)
        safe_g = np.where(ag > 0, g, 1.0)
        ge = np.where(ag > 0, (sE / SE) * p / safe_g, 0.0) * self.inv_len
        grad = np.bincount(self.a, ge, k + 1) - np.bincount(self.b, ge, k + 1)
        grad = grad[:k]
        safe_x = np.where(x > 0, x, 1.0)
        grad -= np.where(x > 0, p * (sN / SN) / safe_x, 0.0)
        return val, grad


def _single_vertex_log_lambda(space: MetricMeasureSpace, v: int, p: float) -> float:
    # f = indicator of v: every incident edge has slope 1/l_e
    inc = space.incident[v]
    terms = np.log(np.maximum(space.edge_measure[inc], 1e-300)) - p * np.log(space.lengths[inc])
    terms = terms[space.edge_measure[inc] > 0]
    if terms.size == 0:
        return -math.inf
    top = terms.max()
    return float(top + math.log(np.exp(terms - top).sum()) - math.log(space.measure[v]))


def _starts(space: MetricMeasureSpace, comp: np.ndarray, cfg: EnergyConfig) -> list[np.ndarray]:
    depth = dist_to_complement(space, comp)
    center = int(comp[int(np.argmax(depth))])
    r = float(depth.max())
    base = cone_function(space, center, r)[comp]
    base = base / base.max() if base.max() > 0 else np.ones(len(comp))
    floor = 1e-3
    starts = [np.maximum(base, floor)]
    if cfg.restarts == 1:
        return starts
    # neighbor averaging inside comp (zero outside) gives smooth random profiles
    pos = {int(v): i for i, v in enumerate(comp)}
    nb = [[pos[int(w)] for w in space.neighbors[v] if int(w) in pos] for v in comp]
    deg = np.array([len(space.neighbors[v]) for v in comp], dtype=float)
    for j in range(1, cfg.restarts):
        rng = np.random.default_rng([cfg.seed, j])
        z = rng.random(len(comp))
        for _ in range(4):
            z = (z + np.array([z[q].sum() for q in nb])) / (1.0 + deg)
        z = z / z.max()
        # multiplicative noise keeps the cone's decay toward the boundary, which
        # matters at large p where the quotient is driven by the steepest edge
        w = rng.uniform(0.3, 0.9)
        starts.append(np.maximum(base * (1 - w + w * z), floor))
    return starts


def _descend(prob: _Problem, x0: np.ndarray, cfg: EnergyConfig) -> tuple[float, np.ndarray, int, bool]:
    use_log = cfg.use_log

    def fun(x):
        val, grad = prob.log_value_grad(x)
        if use_log or not math.isfinite(val):
            return val, grad
        r = math.exp(val)
        return r, r * grad

    x = x0 / x0.max()
    best = prob.log_value_grad(x)[0]
    used = 0
    converged = False
    bounds = [(0.0, None)] * prob.size
    while used < cfg.max_iter:
        res = minimize(fun, x, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": min(2000, cfg.max_iter - used), "ftol": 1e-13,
                                "gtol": 1e-12, "maxcor": 20})
        used += max(int(res.nit), 1)
        if not np.all(np.isfinite(res.x)) or res.x.max() <= 0:
            break
        xn = res.x / res.x.max()
        val = prob.log_value_grad(xn)[0]
        gain = best - val  # log-domain decrease = relative decrease of lambda
        if val < best:
            x, best = xn, val
        # a clean stop of the inner solver already means per-step decrease < ftol
        if gain < cfg.tol or (res.status == 0 and res.nit > 0):
            converged = True
            break
    return best, x, used, converged


CONTINUATION_FROM = 32.0


def _ladder(p: float) -> list[float]:
    """Exponents 32, 64, ... below p, then p itself."""
    steps = []
    q = CONTINUATION_FROM
    while q < p:
        steps.append(q)
        q *= 2
    return steps + [p]


def _continuation(ladder: list[_Problem], x0: np.ndarray, cfg: EnergyConfig):
    # for large p the quotient is nearly flat away from the optimum; walking up
    # in p from a better conditioned exponent avoids stalling there
    x, used = x0, 0
    for prob in ladder[:-1]:
        _, x, it, _ = _descend(prob, x, cfg.with_p(prob.p))
        used += it
    best, x, it, conv = _descend(ladder[-1], x, cfg)
    return best, x, used + it, conv


def _solve_component(space: MetricMeasureSpace, comp: list[int], cfg: EnergyConfig):
    """Returns (log_lambda, values on comp, iterations, status, spread, restart values)."""
    if len(comp) == 1:
        ll = _single_vertex_log_lambda(space, comp[0], cfg.p)
        return ll, np.ones(1), 0, "converged", 0.0, [math.exp(ll)]
    prob = _Problem(space, comp, cfg.p)
    ladder = [_Problem(space, comp, q) for q in _ladder(cfg.p)]
    runs = [_continuation(ladder, x0, cfg) for x0 in _starts(space, prob.comp, cfg)]
    vals = [r[0] for r in runs]
    i = int(np.argmin(vals))  # argmin keeps the lowest restart index on ties
    best, x, _, conv = runs[i]
    iters = sum(r[2] for r in runs)
    lam = [math.exp(v) for v in vals]
    spread = max(lam) - min(lam)
    status = "converged" if conv else "max_iter"
    if status == "converged" and spread > 10 * cfg.tol * lam[i]:
        # restarts disagree: the landscape was not resolved to tolerance
        status = "max_iter"
    return best, x, iters, status, spread, lam


def _check_support(space: MetricMeasureSpace, support) -> tuple[int, ...]:
    idx = tuple(sorted({int(v) for v in support}))
    if not idx:
        raise SupportError("Dirichlet support is empty")
    if len(idx) >= space.n:
        raise SupportError("Dirichlet support must be a proper subset")
    if idx[0] < 0 or idx[-1] >= space.n:
        raise SupportError("support vertex out of range")
    return idx


def exact_p2(space: MetricMeasureSpace, support) -> float:
    """Smallest eigenvalue of the Dirichlet quadratic form restricted to ``support``."""
    idx = np.asarray(_check_support(space, support))
    loc = np.full(space.n, -1)
    loc[idx] = np.arange(len(idx))
    K = np.zeros((len(idx), len(idx)))
    w = space.edge_measure / space.lengths**2
    for (u, v), we in zip(space.edges, w):
        iu, iv = loc[u], loc[v]
        if iu >= 0:
            K[iu, iu] += we
        if iv >= 0:
            K[iv, iv] += we
        if iu >= 0 and iv >= 0:
            K[iu, iv] -= we
            K[iv, iu] -= we
    return float(eigh(K, np.diag(space.measure[idx]), eigvals_only=True, subset_by_index=[0, 0])[0])


class DirichletSolver:
    """Caches per-component solves so that shared supports get identical values."""

    def __init__(self, space: MetricMeasureSpace, config: EnergyConfig):
        self.space = space
        self.config = config
        self._cache: dict[tuple, tuple] = {}
        self.calls = 0

    def _component(self, comp: tuple[int, ...], cfg: EnergyConfig):
        key = (comp, cfg)
        if key not in self._cache:
            self.calls += 1
            self._cache[key] = _solve_component(self.space, list(comp), cfg)
        return self._cache[key]

    def log_lambda(self, support, p: float | None = None, restarts: int | None = None) -> float:
        cfg = self._cfg(p, restarts)
        idx = _check_support(self.space, support)
        return min(self._component(tuple(c), cfg)[0] for c in induced_components(self.space, idx))

    def _cfg(self, p, restarts) -> EnergyConfig:
        cfg = self.config if p is None else self.config.with_p(p)
        return cfg if restarts is None else cfg.with_restarts(restarts)

    def solve(self, support, p: float | None = None, restarts: int | None = None) -> EigenResult:
        cfg = self._cfg(p, restarts)
        idx = _check_support(self.space, support)
        comps = induced_components(self.space, idx)
        sols = [self._component(tuple(c), cfg) for c in comps]
        j = int(np.argmin([s[0] for s in sols]))
        ll, x, _, status, spread, lam = sols[j]
        f = np.zeros(self.space.n)
        f[comps[j]] = x
        if not math.isfinite(ll):
            status = "degenerate"
        elif any(s[3] != "converged" for s in sols):
            status = "max_iter"
        cross = exact_p2(self.space, idx) if cfg.p == 2 else None
        return EigenResult(
            lambda_=math.exp(ll) if ll < 709 else math.inf,
            log_lambda=ll,
            p=cfg.p,
            minimizer=f,
            support=idx,
            iterations=sum(s[2] for s in sols),
            status=status,
            restart_spread=spread,
            restart_values=lam,
            crosscheck=cross,
        )


def dirichlet_eig1(space: MetricMeasureSpace, A, config: EnergyConfig) -> EigenResult:
    """First Dirichlet eigenvalue of the vertex set ``A``.

    Each connected component of A is solved on its own (the quotient of a sum
    of functions on non-adjacent pieces is at least the smallest piecewise
    quotient) and the smallest value wins.
    """
    return DirichletSolver(space, config).solve(A)

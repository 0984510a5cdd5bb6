"""Morrey-type Hoelder estimates on doubling spaces.

Explicit constants for the estimate

    |f(x) - f(y)| <= C(p) ||Df||_p dist(x, y)^(1 - s/p),   s = log2 C_D,

the dyadic Riesz potential that drives it, a finite-sample estimate of the
Poincare constant and exhaustive checks of the volume comparison inequalities.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .penergy import cone_function, log_p_energy
from .space import MetricMeasureSpace, as_function, critical_radii, lip_local_all


@dataclass(frozen=True)
class MorreyConstants:
    C_D: float
    C_P: float
    sigma: float
    p: float
    diam: float
    s: float
    C: float
    C_prime: float
    C_dprime_stated: float
    C_dprime_product: float
    C_of_p: float
    note: str

    def to_dict(self) -> dict:
        return asdict(self)


DPRIME_NOTE = (
    "C'' stated and C'' from the product 4 3^(-s/p) C C' C_D^(2/p) sigma^(-s/p) differ by "
    "3^(2-2s/p); C(p) uses the stated (larger) value"
)


def morrey_constants(C_D: float, C_P: float, sigma: float, p: float, diam: float = 1.0,
                     p0: float = 1.0) -> MorreyConstants:
    if not C_D > 1:
        raise ValueError("C_D must exceed 1")
    if not C_P > 0:
        raise ValueError("C_P must be positive")
    if not sigma >= 1:
        raise ValueError("sigma must be at least 1")
    if not diam > 0:
        raise ValueError("diam must be positive")
    s = math.log2(C_D)
    if not p > max(p0, s):
        raise ValueError(f"p = {p} must exceed max(p0, s) = {max(p0, s)}")
    C = (1 + C_D) * C_D * C_P / sigma
    C_prime = 2 ** (4 + 1 / p) * 3 ** (-1 + 2 * s / p) * C_D ** (1 / p) * sigma ** (1 + s / p)
    stated = 2 ** (6 + 1 / p) * 3 ** (1 - s / p) * C_D ** (1 + 3 / p) * (1 + C_D) * C_P
    product = 4 * 3 ** (-s / p) * C * C_prime * C_D ** (2 / p) * sigma ** (-s / p)
    if not math.isclose(stated / product, 3 ** (2 - 2 * s / p), rel_tol=1e-9):
        raise AssertionError("C'' forms are inconsistent")  # pragma: no cover
    return MorreyConstants(C_D, C_P, sigma, p, diam, s, C, C_prime, stated, product,
                           stated * diam ** (s / p), DPRIME_NOTE)


def _log_mean_power(weights: np.ndarray, values: np.ndarray, p: float) -> float:
    """log of (sum w |v|^p / sum w)^(1/p), max-rescaled; -inf for zero data."""
    a = np.abs(values)
    top = a.max() if a.size else 0.0
    if top == 0:
        return -math.inf
    return math.log(top) + math.log(np.sum(weights * (a / top) ** p) / weights.sum()) / p


def riesz_potential(space: MetricMeasureSpace, h, p: float, sigma: float, omega, x: int) -> float:
    """Sum over 2^i <= 2 sigma diam(omega) of 2^i (mean of |h|^p over U_{2^i}(x))^(1/p).

    Below the nearest neighbor distance of x the ball is {x} and the terms form
    a geometric series, summed in closed form as 2^(i*+1) |h(x)|.
    """
    h = as_function(space, h)
    if not p > 0:
        raise ValueError("p must be positive")
    if not sigma >= 1:
        raise ValueError("sigma must be at least 1")
    idx = np.asarray(sorted({int(v) for v in omega}), dtype=int)
    if idx.size == 0:
        raise ValueError("omega is empty")
    diam = float(space.dist[np.ix_(idx, idx)].max())
    top = 2 * sigma * diam
    if top <= 0:
        return 0.0
    i_max = math.floor(math.log2(top))
    if 2.0 ** (i_max + 1) <= top:  # guard against log2 rounding down
        i_max += 1
    elif 2.0 ** i_max > top:
        i_max -= 1
    d = space.dist[x]
    nearest = float(np.min(d[d > 0]))
    i_star = min(math.floor(math.log2(nearest)), i_max)
    if 2.0 ** i_star > nearest:
        i_star -= 1
    total = 2.0 ** (i_star + 1) * abs(h[x])
    for i in range(i_star + 1, i_max + 1):
        inside = d < 2.0 ** i
        lm = _log_mean_power(space.measure[inside], h[inside], p)
        if lm > -math.inf:
            total += 2.0**i * math.exp(lm)
    return total


@dataclass(frozen=True)
class PoincareData:
    C_P: float
    p0: float
    sigma: float
    method: str = "estimated-lower-bound"
    witness: tuple = ()

    def to_dict(self) -> dict:
        return asdict(self)


def default_test_family(space: MetricMeasureSpace, seed: int = 0, count: int = 6) -> list[np.ndarray]:
    """Distance functions, cone functions and smoothed random functions."""
    rng = np.random.default_rng(seed)
    diam = float(space.dist.max())
    picks = sorted(set(int(v) for v in rng.choice(space.n, min(count, space.n), replace=False)))
    fam = [space.dist[x].copy() for x in picks]
    fam += [cone_function(space, x, r * diam) for x in picks for r in (0.25, 0.5)]
    for _ in range(count):
        z = rng.standard_normal(space.n)
        for _ in range(3):
            z = (z + np.array([z[space.neighbors[v]].sum() for v in range(space.n)])) / (
                1 + np.array([len(a) for a in space.neighbors]))
        fam.append(z)
    return fam


def poincare_estimate(space: MetricMeasureSpace, p0: float = 1.0, sigma: float = 1.0,
                      test_family: Sequence | None = None, seed: int = 0) -> PoincareData:
    """Largest observed ratio

        mean_{U_r(x)} |f - mean f|  /  ( r (mean_{U_{sigma r}(x)} lip(f)^p0)^(1/p0) )

    over the test family, all centers and all radii.  Both balls are constant
    between consecutive values of {d, d/sigma}, and r grows inside each such
    interval, so the supremum is approached at its left end, where the balls
    are the closed ones {dist <= b} and {dist <= sigma b}.
    """
    if not p0 >= 1:
        raise ValueError("p0 must be at least 1")
    if not sigma >= 1:
        raise ValueError("sigma must be at least 1")
    family = list(default_test_family(space, seed) if test_family is None else test_family)
    radii = critical_radii(space, (1.0, sigma))
    m = space.measure
    best, witness = 0.0, ()
    for fi, f in enumerate(family):
        f = as_function(space, f)
        lip = lip_local_all(space, f) ** p0
        for x in range(space.n):
            d = space.dist[x]
            small = d[None, :] <= radii[:, None] * (1 + 1e-12)
            big = d[None, :] <= sigma * radii[:, None] * (1 + 1e-12)
            ms = small @ m
            mean = (small @ (m * f)) / ms
            osc = np.sum(small * m * np.abs(f[None, :] - mean[:, None]), axis=1) / ms
            grad = ((big @ (m * lip)) / (big @ m)) ** (1 / p0)
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(grad > 0, osc / (radii * grad), 0.0)
            j = int(np.argmax(ratio))
            if ratio[j] > best:
                best, witness = float(ratio[j]), (fi, x, float(radii[j]))
    return PoincareData(best, p0, sigma, "estimated-lower-bound", witness)


@dataclass
class HolderReport:
    max_ratio: float
    bound: float
    passed: bool
    pair: tuple[int, int]
    s: float
    p: float
    safety: float

    def to_dict(self) -> dict:
        return {"max_ratio": self.max_ratio, "bound": self.bound, "pass": self.passed,
                "pair": list(self.pair), "s": self.s, "p": self.p, "safety": self.safety}


def holder_check(space: MetricMeasureSpace, f, p: float, constants: MorreyConstants,
                 safety: float = 2.0) -> HolderReport:
    """max over x != y of |f(x) - f(y)| / (||Df||_p dist^(1 - s/p)) against C(p).

    The Poincare constant in ``constants`` is only a lower estimate, so the
    bound is recomputed with C_P multiplied by ``safety``.
    """
    f = as_function(space, f)
    if np.ptp(f) == 0:
        raise ValueError("f is constant")
    s = constants.s
    used = morrey_constants(constants.C_D, constants.C_P * safety, constants.sigma, p, constants.diam)
    log_df = log_p_energy(space, f, p) / p
    iu = np.triu_indices(space.n, 1)
    with np.errstate(divide="ignore"):
        logs = (np.log(np.abs(f[iu[0]] - f[iu[1]])) - log_df
                - (1 - s / p) * np.log(space.dist[iu]))
    j = int(np.argmax(logs))
    ratio = math.exp(logs[j])
    return HolderReport(ratio, used.C_of_p, bool(ratio <= used.C_of_p),
                        (int(iu[0][j]), int(iu[1][j])), s, p, safety)


@dataclass
class VolumeReport:
    violations: int
    checked: int
    worst_ratio: float  # largest lhs / rhs seen; <= 1 means no violation
    s: float

    def to_dict(self) -> dict:
        return asdict(self)


def volume_comparison_check(space: MetricMeasureSpace, C_D: float, rtol: float = 1e-12) -> VolumeReport:
    """Exhaustive check of

        m(U_r(x)) / m(U_r'(x')) <= 2 C_D (r/r')^s   for x' in U_r(x), r' < r,
        m(U_r(x)) / m(U_r'(x))  <=   C_D (r/r')^s,

    with s = log2 C_D.  Balls are constant on (b_i, b_{i+1}] for consecutive
    distance values b; the worst case in each pair of intervals takes r at
    the left end of its interval and r' at the right end of its own.
    """
    s = math.log2(C_D)
    b = np.concatenate([[0.0], critical_radii(space)])
    K = len(b)
    # V[x, i] = m(U_r(x)) for r in (b_i, b_{i+1}]
    V = np.stack([(space.dist <= bi) @ space.measure for bi in b], axis=1)
    right = np.append(b[1:], math.inf)
    violations = checked = 0
    worst = 0.0
    for i in range(1, K):
        r = b[i]
        for j in range(i):
            rp = right[j]
            scale = (r / rp) ** s
            # same center
            lhs = V[:, i] / V[:, j]
            q = lhs / (C_D * scale)
            worst = max(worst, float(q.max()))
            violations += int(np.sum(q > 1 + rtol))
            checked += space.n
            # shifted center x' with dist(x, x') <= b_i
            near = space.dist <= r
            q2 = (V[:, i][:, None] / V[None, :, j]) / (2 * C_D * scale)
            q2 = np.where(near, q2, 0.0)
            worst = max(worst, float(q2.max()))
            violations += int(np.sum(q2 > 1 + rtol))
            checked += int(near.sum())
    return VolumeReport(violations, checked, worst, s)


def sup_C_of_p(C_D: float, C_P: float, sigma: float, p_list: Sequence[float], diam: float = 1.0) -> dict:
    """C(p) over a p-grid; finite values mean the Hoelder bound is uniform there."""
    vals = {}
    for p in p_list:
        try:
            vals[float(p)] = morrey_constants(C_D, C_P, sigma, p, diam).C_of_p
        except ValueError:
            continue
    if not vals:
        raise ValueError("no admissible p in the grid")
    worst = max(vals, key=vals.get)
    return {"values": vals, "sup": vals[worst], "argmax_p": worst,
            "finite": bool(math.isfinite(vals[worst]))}


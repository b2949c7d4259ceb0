"""Rate-versus-OSNR curves, sum rates and minimum-OSNR thresholds.

A "scheme" names how every user of a scenario is designed:

* ``proposed``: free probabilistic shaping with optimized spacing and FEC rate
* ``pcm``: pairwise-constant shaping (adjacent symbols share a probability)
* ``uniform``: uniform signaling at the highest feasible FEC rate
* ``capacity``: power-constrained NOMA capacity
* ``uniform-capacity``: mutual information of uniform signaling
"""

import math

import numpy as np

from .channel import NomaScenario
from .optimizer import (SolverConfig, capacity_noma, optimize_scenario,
                        uniform_baseline, uniform_capacity)

SCHEMES = ("proposed", "pcm", "uniform", "capacity", "uniform-capacity")
CURVE_FIELDS = ("scheme", "osnr_db", "user", "rate", "R_fec", "delta")


def solve_scheme(scenario, scheme, cfg=None, first=0):
    """Per-user results of ``scheme``; ``None`` marks an infeasible user."""
    cfg = cfg or SolverConfig()
    if scheme in ("proposed", "pcm"):
        return optimize_scenario(scenario, cfg, scheme, first)
    if scheme == "uniform":
        return uniform_baseline(scenario, cfg, first)
    if scheme == "capacity":
        return capacity_noma(scenario, cfg, first)
    if scheme == "uniform-capacity":
        return uniform_capacity(scenario, cfg, first)
    raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


def user_rate(result):
    """Rate in bpcu of one user result (0 when infeasible)."""
    if result is None:
        return 0.0
    return float(getattr(result, "T", getattr(result, "capacity", 0.0)))


def curve_rows(scenario, scheme, cfg=None):
    """CSV rows of one OSNR point: one per user plus a ``sum`` row."""
    results = solve_scheme(scenario, scheme, cfg)
    rows = []
    for j, res in enumerate(results):
        rows.append({
            "scheme": scheme, "osnr_db": scenario.osnr_db, "user": j + 1,
            "rate": user_rate(res),
            "R_fec": str(getattr(res, "code_rate", "")) if res is not None else "",
            "delta": res.spacing if res is not None else math.nan,
        })
    rows.append({"scheme": scheme, "osnr_db": scenario.osnr_db, "user": "sum",
                 "rate": sum(r["rate"] for r in rows), "R_fec": "", "delta": math.nan})
    return rows


def sum_rate(scenario, scheme, cfg=None):
    return sum(user_rate(r) for r in solve_scheme(scenario, scheme, cfg))


def threshold_osnr(rate_at, target, lo, hi, tol=0.01):
    """Smallest OSNR in ``[lo, hi]`` with ``rate_at(osnr) >= target``.

    Bisection that assumes ``rate_at`` is nondecreasing. Returns ``inf`` if
    even ``hi`` misses the target and ``lo`` if ``lo`` already reaches it.
    """
    if rate_at(hi) < target:
        return math.inf
    if rate_at(lo) >= target:
        return lo
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if rate_at(mid) >= target:
            hi = mid
        else:
            lo = mid
    return hi


def user_rate_fn(j, scheme, n_users, M, backoff_db, cfg=None, sigma=1.0):
    """``osnr_db -> rate`` of user ``j`` (0-based) in an ``n_users`` scenario.

    Only users ``j..N-1`` are solved; the weaker users do not affect user ``j``.
    """
    cache = {}

    def rate_at(osnr_db):
        key = round(float(osnr_db), 9)
        if key not in cache:
            scn = NomaScenario.from_osnr(osnr_db, n_users, M, backoff_db, sigma)
            cache[key] = user_rate(solve_scheme(scn, scheme, cfg, first=j)[j])
        return cache[key]

    return rate_at


def gain_table(targets, users, n_users, M, backoff_db, cfg=None, lo=-5.0, hi=30.0,
               tol=0.01, scheme="proposed", reference="uniform"):
    """OSNR gain of ``scheme`` over ``reference`` per (user, target rate)."""
    out = {}
    for j in users:
        fa = user_rate_fn(j, scheme, n_users, M, backoff_db, cfg)
        fb = user_rate_fn(j, reference, n_users, M, backoff_db, cfg)
        for t in targets:
            a = threshold_osnr(fa, t, lo, hi, tol)
            b = threshold_osnr(fb, t, lo, hi, tol)
            out[(j, t)] = (a, b, b - a)
    return out


REGION_FIELDS = ("scheme", "osnr_db", "backoff_db", "R1", "R2")


def achievable_rate(result):
    """Achievable rate of one user: ``R^SDT`` for coded designs, MI otherwise."""
    if result is None:
        return 0.0
    if hasattr(result, "r_sdt"):
        return float(result.r_sdt)
    return float(result.capacity)


def region_points(osnr_db, M, backoffs, scheme, cfg=None, sigma=1.0):
    """Two-user ``(R1, R2)`` points obtained by sweeping the back-off ``c``."""
    out = []
    for c in backoffs:
        scn = NomaScenario.from_osnr(osnr_db, 2, M, float(c), sigma)
        out.append([achievable_rate(r) for r in solve_scheme(scn, scheme, cfg)])
    return np.array(out)


def close_region(points):
    """Boundary polyline extended to both axes."""
    points = np.asarray(points, dtype=float)
    return np.vstack([[0.0, points[0, 1]], points, [points[-1, 0], 0.0]])


def distance_to_polyline(point, polyline):
    """Euclidean distance from ``point`` to the nearest segment of ``polyline``."""
    p = np.asarray(point, dtype=float)
    a, b = polyline[:-1], polyline[1:]
    ab = b - a
    s = np.einsum("ij,ij->i", p - a, ab) / np.maximum(np.einsum("ij,ij->i", ab, ab), 1e-30)
    nearest = a + np.clip(s, 0.0, 1.0)[:, None] * ab
    return float(np.min(np.linalg.norm(nearest - p, axis=1)))


def region_gap(inner, outer):
    """Distance from every ``inner`` boundary point to the closed ``outer`` boundary."""
    poly = close_region(outer)
    return np.array([distance_to_polyline(p, poly) for p in np.asarray(inner)])


def osnr_grid(start, stop, step):
    """Inclusive OSNR grid rounded to 1e-9 dB so keys are stable."""
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 9) for i in range(n)]


__all__ = ["CURVE_FIELDS", "REGION_FIELDS", "SCHEMES", "achievable_rate",
           "close_region", "curve_rows", "distance_to_polyline", "gain_table",
           "osnr_grid", "region_gap", "region_points",
           "solve_scheme", "sum_rate", "threshold_osnr", "user_rate",
           "user_rate_fn"]

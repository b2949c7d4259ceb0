"""Fixed operating points for link simulation.

An operating point freezes one user's design (PMF, FEC rate and amplitudes
relative to the received power) so the OSNR can be swept with the design
held fixed, as in a waterfall measurement.
"""

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ._validation import InfeasibleError, check_order
from .channel import NomaScenario
from .curves import solve_scheme, threshold_osnr, user_rate, user_rate_fn
from .optimizer import SolverConfig
from .sim import DEFAULT_BLOCK_BITS, SimConfig, UserLink, fer_monte_carlo

LINK_SCHEMES = ("proposed", "pcm", "uniform", "gs-fixed")


@dataclass(frozen=True)
class OperatingPoint:
    """Design of one user; ``amplitude_ratio`` is amplitudes divided by ``P_rj``."""

    user: int
    scheme: str
    pmf: tuple
    code_rate: Fraction
    amplitude_ratio: tuple
    T: float
    design_osnr_db: float = math.nan

    @property
    def M(self):
        return len(self.pmf)

    def link(self, power, block_bits=DEFAULT_BLOCK_BITS, code_seed=0):
        amps = power * np.asarray(self.amplitude_ratio)
        return UserLink(np.asarray(self.pmf), amps, self.code_rate, block_bits, code_seed)

    def to_dict(self):
        return {"user": self.user + 1, "scheme": self.scheme, "pmf": list(self.pmf),
                "R_fec": str(self.code_rate), "amplitude_ratio": list(self.amplitude_ratio),
                "T": self.T, "design_osnr_db": self.design_osnr_db}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["user"]) - 1, d["scheme"], tuple(float(x) for x in d["pmf"]),
                   Fraction(d["R_fec"]), tuple(float(x) for x in d["amplitude_ratio"]),
                   float(d["T"]), float(d.get("design_osnr_db", math.nan)))


def uniform_point(j, M, target, rates):
    """Uniform signaling at ``Delta = 2P/(M+1)`` and ``R_FEC = target / log2 M``."""
    M = check_order(M)
    rate = Fraction(target / math.log2(M)).limit_denominator(1000)
    if rate not in set(rates):
        raise InfeasibleError(f"rate {target} bpcu needs R_FEC={rate}, not in the code set")
    ratio = tuple(2.0 * np.arange(1, M + 1) / (M + 1))
    return OperatingPoint(j, "uniform", (1.0 / M,) * M, rate, ratio, float(target))


def gs_point(j, spacings, code_rate):
    """Uniform PMF on an externally supplied geometric layout.

    ``spacings`` are the gaps between consecutive levels (the first one from
    zero); the layout is rescaled so the average intensity equals ``P_rj``.
    """
    levels = np.cumsum(np.asarray(spacings, dtype=float))
    if levels.size < 2 or np.any(np.diff(levels) < 0) or levels[-1] <= 0:
        raise ValueError("geometric spacings must be nonnegative with a positive sum")
    M = check_order(levels.size)
    ratio = tuple(levels / levels.mean())
    rate = Fraction(code_rate)
    return OperatingPoint(j, "gs-fixed", (1.0 / M,) * M, rate, ratio,
                          float(rate) * math.log2(M))


def design_point(j, scheme, target, n_users, M, backoff_db, cfg=None, lo=-5.0,
                 hi=30.0, tol=0.01):
    """Operating point of user ``j`` that carries ``target`` bpcu.

    Shaped schemes take the optimum at the smallest OSNR reaching the target
    (so the design sits at its own threshold); uniform signaling takes the
    code rate with ``R log2 M = target``.
    """
    cfg = cfg or SolverConfig()
    if scheme == "uniform":
        return uniform_point(j, M, target, cfg.rates)
    if scheme not in ("proposed", "pcm"):
        raise ValueError(f"cannot design scheme {scheme!r}")
    osnr = threshold_osnr(user_rate_fn(j, scheme, n_users, M, backoff_db, cfg),
                          target, lo, hi, tol)
    if not math.isfinite(osnr):
        raise InfeasibleError(f"user {j + 1} cannot reach {target} bpcu below {hi} dB")
    scn = NomaScenario.from_osnr(osnr, n_users, M, backoff_db)
    res = solve_scheme(scn, scheme, cfg, first=j)[j]
    ratio = tuple(res.constellation().amplitudes / scn.received[j])
    return OperatingPoint(j, scheme, tuple(float(x) for x in res.pmf), res.code_rate,
                          ratio, user_rate(res), osnr)


def sim_config(points, osnr_db, n_users, M, backoff_db, sigma=1.0, **kw):
    """Simulation setup with every user at its operating point and ``P_r1/sigma = osnr``."""
    scn = NomaScenario.from_osnr(osnr_db, n_users, M, backoff_db, sigma)
    points = sorted(points, key=lambda p: p.user)
    if [p.user for p in points] != list(range(n_users)):
        raise ValueError("need exactly one operating point per user")
    block = kw.pop("block_bits", DEFAULT_BLOCK_BITS)
    links = [p.link(scn.received[p.user], block, code_seed=p.user) for p in points]
    return SimConfig(links, sigma, **kw)


def waterfall(points, user, osnrs, n_users, M, backoff_db, stop_below=0.0, **kw):
    """FER reports of ``user`` (0-based) over increasing ``osnrs``.

    Users after ``user`` transmit but are not decoded. The sweep stops after
    the first point whose FER is at most ``stop_below``.
    """
    reports = []
    for osnr in sorted(osnrs):
        cfg = sim_config(points, osnr, n_users, M, backoff_db, users=user + 1, **kw)
        rep = fer_monte_carlo(cfg)[user]
        rep.osnr_db = float(osnr)
        reports.append(rep)
        if rep.fer <= stop_below:
            break
    return reports


def crossing_osnr(reports, target=0.1):
    """OSNR where the FER falls through ``target`` (log-linear interpolation).

    Returns ``inf`` if no pair of consecutive points brackets the target and
    the first OSNR if the FER starts below it.
    """
    pts = sorted((r.osnr_db, r.fer) for r in reports)
    if not pts:
        return math.inf
    if pts[0][1] <= target:
        return pts[0][0]
    floor = 0.5 / max(r.frames for r in reports)
    for (x0, f0), (x1, f1) in zip(pts, pts[1:]):
        if f0 > target >= f1:
            l0, l1 = math.log(f0), math.log(max(f1, floor))
            return x0 + (x1 - x0) * (l0 - math.log(target)) / (l0 - l1)
    return math.inf


__all__ = ["LINK_SCHEMES", "OperatingPoint", "crossing_osnr", "design_point",
           "gs_point", "sim_config", "uniform_point", "waterfall"]

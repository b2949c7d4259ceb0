"""Probabilistic-shaping optimizer for uplink NOMA users.

Per user and FEC rate the transmission rate ``T = R_FEC H(p)`` is maximized
subject to the power equality and the achievability constraint
``T <= R_SDT - R_bf``. For a fixed spacing the PMF comes from a surrogate
fixed point of the KKT map, the spacing from a golden-section search.

PMFs are parametrized over "atoms": a column-stochastic expansion ``E`` with
``p = E q``. The identity gives free shaping, adjacent pairs give the
pairwise-constant (PCM) baseline. Each atom has a mean symbol index ``a_k``
and an entropy offset ``h_k`` (bits gained when it spreads over its symbols).
"""

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np
from numba import njit

from ._validation import (ConvergenceError, InfeasibleError, check_code_rate,
                          check_order, check_positive)
from .rates import (DEFAULT_MIXTURE_CAP, DEFAULT_QUAD, LN2, NO_INTERFERENCE,
                    DivergenceKernel, ShapedConstellation)

DVB_S2_RATES = tuple(Fraction(a, b) for a, b in (
    (1, 4), (1, 3), (2, 5), (1, 2), (3, 5), (2, 3), (3, 4), (4, 5), (5, 6),
    (8, 9), (9, 10)))
SLACK_TOL = 1e-9
LN2_C = math.log(2.0)
ZERO_CLAMP = 1e-12


@dataclass(frozen=True)
class SolverConfig:
    gamma_s: float = 1e-8
    delta_tol: float = 1e-4
    root_tol: float = 1e-12
    max_iter: int = 5000
    max_rounds: int = 50
    rates: tuple = DVB_S2_RATES
    r_bf: float = 0.05
    grid_points: int = 12
    starts: tuple = ("geometric", "edges")
    quad: object = DEFAULT_QUAD
    mixture_cap: int = DEFAULT_MIXTURE_CAP

    def __post_init__(self):
        for name in ("gamma_s", "delta_tol", "root_tol"):
            check_positive(getattr(self, name), name)
        if self.max_iter < 1 or self.max_rounds < 1 or self.grid_points < 3:
            raise ValueError("iteration budgets must be >= 1 and grid_points >= 3")
        if self.r_bf < 0:
            raise ValueError("r_bf must be >= 0")
        rates = tuple(sorted({Fraction(r).limit_denominator(1000) for r in self.rates}))
        for r in rates:
            check_code_rate(r)
        object.__setattr__(self, "rates", rates)


@dataclass(frozen=True)
class SpacingBounds:
    delta_min: float
    delta_max: float

    def __post_init__(self):
        if not 0 < self.delta_min <= self.delta_max:
            raise ValueError(f"invalid spacing bounds {self.delta_min!r}, {self.delta_max!r}")

    @classmethod
    def for_rate(cls, power, M, rate, index_range=None):
        """Spacings for which the power equality has a PMF solution.

        ``index_range`` is the (lowest, highest) achievable mean symbol index,
        ``(1, M)`` for free shaping.
        """
        lo, hi = index_range if index_range is not None else (1, M)
        parity = (1 - float(rate)) * (M + 1) / 2
        return cls(power / (float(rate) * hi + parity), power / (float(rate) * lo + parity))

    @property
    def width(self):
        return self.delta_max - self.delta_min


@dataclass(frozen=True)
class KktMultipliers:
    eta: float
    tau: float

    @property
    def rate_active(self):
        return self.tau > 0


class Atoms:
    """Column-stochastic expansion of atom weights into a symbol PMF."""

    def __init__(self, expand, name):
        self.expand = np.asarray(expand, dtype=float)
        self.name = name
        M = self.expand.shape[0]
        self.index = np.arange(1, M + 1) @ self.expand
        col = self.expand
        with np.errstate(divide="ignore", invalid="ignore"):
            self.offset = -np.where(col > 0, col * np.log2(col), 0.0).sum(0)

    @property
    def M(self):
        return self.expand.shape[0]

    @property
    def size(self):
        return self.expand.shape[1]

    def index_range(self):
        return float(self.index.min()), float(self.index.max())

    def reduce(self, w):
        """Atom-level surrogate weights (average of W over each atom)."""
        return w @ self.expand

    def to_pmf(self, q):
        return self.expand @ q

    @classmethod
    def free(cls, M):
        return cls(np.eye(M), "proposed")

    @classmethod
    def pairs(cls, M):
        if M % 2:
            raise ValueError("pairwise-constant shaping needs an even order")
        e = np.zeros((M, M // 2))
        for k in range(M // 2):
            e[2 * k:2 * k + 2, k] = 0.5
        return cls(e, "pcm")


def _softmax2(logits2):
    """Normalized ``2**logits2`` computed stably."""
    z = (logits2 - logits2.max()) * LN2
    e = np.exp(z)
    return e / e.sum()


@njit(cache=True)
def _tilted(base, index, u, target, q):
    """Fill ``q ∝ 2**(base - u a)``; return (mean - target, variance)."""
    top = -np.inf
    for k in range(base.size):
        x = base[k] - u * index[k]
        if x > top:
            top = x
    total = 0.0
    for k in range(base.size):
        q[k] = math.exp((base[k] - u * index[k] - top) * LN2_C)
        total += q[k]
    mean = 0.0
    for k in range(base.size):
        q[k] /= total
        mean += q[k] * index[k]
    var = 0.0
    for k in range(base.size):
        var += q[k] * (index[k] - mean) ** 2
    return mean - target, var


@njit(cache=True)
def _tilt_core(base, index, target, tol, q):
    """Interior tilt solve; returns ``(u, ok)`` and leaves the PMF in ``q``."""
    scale = max(1.0, abs(target))
    lo, hi = -1.0, 1.0
    while _tilted(base, index, lo, target, q)[0] <= 0:
        lo *= 2.0
        if lo < -1e12:
            return 0.0, False
    while _tilted(base, index, hi, target, q)[0] >= 0:
        hi *= 2.0
        if hi > 1e12:
            return 0.0, False
    u = 0.0 if lo < 0.0 < hi else 0.5 * (lo + hi)
    for _ in range(200):
        r, v = _tilted(base, index, u, target, q)
        if abs(r) <= tol * scale:
            return u, True
        if r > 0:
            lo = u
        else:
            hi = u
        step = r / (LN2_C * v) if v > 0 else 0.0
        nu = u + step
        if not (lo < nu < hi) or step == 0.0:
            nu = 0.5 * (lo + hi)
        if nu == u:
            break
        u = nu
    _tilted(base, index, u, target, q)
    return u, True


@njit(cache=True)
def _tau_core(h, b, index, target, cost, tol, slack_tol, q):
    """Bisection on the rate multiplier with the inner tilt solved per step.

    Returns ``(tau, u, status)``: 0 solved, 1 no bracket, 2 inner failure.
    """
    base = np.empty_like(h)

    def resid(tau):
        for k in range(h.size):
            base[k] = h[k] - tau * b[k]
        u, ok = _tilt_core(base, index, target, tol, q)
        g = 0.0
        for k in range(h.size):
            g += q[k] * cost[k]
        return g, u, ok

    lo, hi = 0.0, 1.0
    g, u, ok = resid(hi)
    if not ok:
        return hi, u, 2
    while g > 0:
        lo, hi = hi, hi * 2.0
        g, u, ok = resid(hi)
        if not ok:
            return hi, u, 2
        if hi > 1e9:
            if g <= slack_tol:
                break
            return hi, u, 1
    tau, best_u = hi, u
    for _ in range(200):
        if hi - lo <= 1e-13 * max(1.0, hi):
            break
        mid = 0.5 * (lo + hi)
        g, u, ok = resid(mid)
        if not ok:
            return mid, u, 2
        if g > 0:
            lo = mid
        else:
            hi, tau, best_u = mid, mid, u
            if g > -tol:
                break
    resid(tau)
    return tau, best_u, 0


def solve_tilt(base, index, target, tol=1e-12):
    """Find ``u`` with ``sum q a = target`` for ``q ∝ 2**(base - u a)``.

    The tilted mean is strictly decreasing in ``u``; safeguarded Newton on a
    bracket grown geometrically. Returns ``(u, q)``; ``u`` is ``±inf`` when
    the target sits on the edge of the index range (point mass).
    """
    index = np.asarray(index, dtype=float)
    base = np.asarray(base, dtype=float)
    lo_a, hi_a = index.min(), index.max()
    scale = max(1.0, abs(target))
    if target < lo_a - tol * scale or target > hi_a + tol * scale:
        raise InfeasibleError(f"mean index {target!r} outside [{lo_a}, {hi_a}]")
    if target <= lo_a + tol * scale or target >= hi_a - tol * scale:
        edge = index == (lo_a if target <= lo_a + tol * scale else hi_a)
        q = np.where(edge, _softmax2(np.where(edge, base, -np.inf)), 0.0)
        return (math.inf if target <= lo_a + tol * scale else -math.inf), q
    q = np.empty_like(base)
    u, ok = _tilt_core(base, index, float(target), tol, q)
    if not ok:
        raise InfeasibleError("tilt bracket did not close")
    return u, q


def _rate_lp_min(index, cost, target):
    """Minimum of ``sum q cost`` over PMFs with ``sum q index = target``.

    The optimum of this LP sits on an edge of the simplex, so enumerating
    atom pairs that straddle the target is exact.
    """
    a = np.asarray(index, dtype=float)
    c = np.asarray(cost, dtype=float)
    below = a <= target
    above = a >= target
    best = math.inf
    for k in np.flatnonzero(below):
        ls = np.flatnonzero(above)
        span = a[ls] - a[k]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(span > 0, (target - a[k]) / span, 0.0)
        vals = (1 - t) * c[k] + t * c[ls]
        best = min(best, float(vals.min()))
    return best


@dataclass
class KktSolution:
    pmf: np.ndarray
    atoms_q: np.ndarray
    multipliers: KktMultipliers
    branch: int
    rate_residual: float


def kkt_pmf(spacing, rate, w, power, slack_budget, atoms, tol=1e-12):
    """One KKT step: the max-entropy PMF for fixed surrogate weights.

    Maximizes ``H(p)`` subject to the power equality and
    ``rate * sum p W <= slack_budget`` where ``slack_budget =
    (1 - rate) I_u - R_bf``. Branch 1 leaves the rate constraint slack
    (``tau = 0``), Branch 2 makes it active. Raises ``InfeasibleError`` when
    no PMF in the surrogate feasible set exists.
    """
    rate = float(rate)
    M = atoms.M
    p_shaped = power - (1 - rate) * spacing * (M + 1) / 2
    target = p_shaped / (rate * spacing)
    b = atoms.reduce(np.asarray(w, dtype=float))
    cost = rate * b - slack_budget
    a = atoms.index
    h = atoms.offset

    u, q = solve_tilt(h, a, target, tol)
    g = float(q @ cost)
    if g < -SLACK_TOL:
        return _finish(q, u, 0.0, 1, h, a, target, cost, spacing, atoms, tol)

    if _rate_lp_min(a, cost, target) > SLACK_TOL:
        raise InfeasibleError("rate constraint cannot be met at this spacing")

    if not a.min() < target < a.max():
        # Point mass: the rate multiplier is irrelevant.
        return _finish(q, u, 0.0, 2, h, a, target, cost, spacing, atoms, tol)
    q = np.empty_like(h)
    tau, u, status = _tau_core(h, b, a, float(target), cost, tol, SLACK_TOL, q)
    if status:
        raise InfeasibleError("rate multiplier bracket did not close")
    return _finish(q, u, tau, 2, h - tau * b, a, target, cost, spacing, atoms, tol)


def _finish(q, u, tau, branch, base, a, target, cost, spacing, atoms, tol):
    """Clamp negligible atoms to zero and re-impose the power equality."""
    keep = q >= ZERO_CLAMP
    if not keep.all() and keep.any():
        sub = a[keep]
        if sub.min() < target < sub.max() or np.isclose(sub.min(), sub.max()):
            u2, q2 = solve_tilt(base[keep], sub, target, tol)
            q = np.zeros_like(q)
            q[keep] = q2
            u = u2
    q = q / q.sum()
    mult = KktMultipliers(eta=u / spacing, tau=float(tau))
    return KktSolution(atoms.to_pmf(q), q, mult, branch, float(q @ cost))




def initial_pmf(spacing, rate, power, atoms, tol=1e-12, start="geometric"):
    """Starting PMF on the power equality.

    ``"geometric"`` projects the uniform PMF with the geometric family.
    ``"edges"`` puts all mass on the lowest and highest atoms, the structure
    of low-OSNR optima. An array of atom weights is tilted onto the power
    equality (warm start).
    """
    M = atoms.M
    target = (power - (1 - rate) * spacing * (M + 1) / 2) / (rate * spacing)
    _, q = solve_tilt(atoms.offset, atoms.index, target, tol)
    if isinstance(start, str) and start == "geometric":
        return atoms.to_pmf(q)
    if not isinstance(start, str):
        # Warm start: tilt a previous PMF (given in atom weights) onto this power.
        with np.errstate(divide="ignore"):
            base = np.log2(start) + atoms.offset
        _, warm = solve_tilt(base, atoms.index, target, tol)
        return atoms.to_pmf(warm)
    if start != "edges":
        raise ValueError(f"unknown start {start!r}")
    lo, hi = int(np.argmin(atoms.index)), int(np.argmax(atoms.index))
    if lo == hi:
        return atoms.to_pmf(q)
    edge = np.zeros(atoms.size)
    t = (target - atoms.index[lo]) / (atoms.index[hi] - atoms.index[lo])
    edge[lo], edge[hi] = 1 - t, t
    return atoms.to_pmf(edge)


@dataclass
class FixedPoint:
    pmf: np.ndarray
    iterations: int
    kkt: KktSolution
    mi: float
    uniform_mi: float


def _uniform_budget(kernel, M, rate, r_bf):
    mi_u = kernel.mutual_information(np.full(M, 1.0 / M))
    return mi_u, (1 - rate) * mi_u - r_bf


def run_fixed_point(kernel, spacing, rate, power, atoms, cfg, start="geometric"):
    """Surrogate fixed point on a prebuilt divergence kernel (spacing already fixed)."""
    rate = float(rate)
    mi_u, budget = _uniform_budget(kernel, atoms.M, rate, cfg.r_bf)
    if budget < 0:
        raise InfeasibleError("rate back-off exceeds the parity contribution")
    p_hat = initial_pmf(spacing, rate, power, atoms, cfg.root_tol, start)
    for it in range(1, cfg.max_iter + 1):
        w = kernel.w_vector(p_hat)
        sol = kkt_pmf(spacing, rate, w, power, budget, atoms, cfg.root_tol)
        eps = float(np.sum((p_hat - sol.pmf) ** 2))
        p_hat = sol.pmf
        if eps < cfg.gamma_s:
            return FixedPoint(p_hat, it, sol, kernel.mutual_information(p_hat), mi_u)
    raise ConvergenceError(f"fixed point not reached in {cfg.max_iter} iterations")


def algorithm1(spacing, rate, power, sigma, M, interference=NO_INTERFERENCE,
               cfg=None, atoms=None, start="geometric"):
    """Surrogate fixed point for the PMF at a fixed spacing.

    ``start`` is one of the cold starts of :func:`initial_pmf`.
    Returns ``(pmf, iterations)``.
    """
    cfg = cfg or SolverConfig()
    atoms = atoms or Atoms.free(check_order(M))
    kernel = DivergenceKernel(spacing * np.arange(1, M + 1), sigma, interference,
                              cfg.quad, cfg.mixture_cap)
    fp = run_fixed_point(kernel, spacing, check_code_rate(rate), power, atoms, cfg, start)
    return fp.pmf, fp.iterations


GOLDEN = (math.sqrt(5.0) - 1) / 2


def golden_section_delta(objective, bounds, tol=1e-4, grid_points=0, after_scan=None):
    """Maximize ``objective(delta)`` over ``bounds``.

    Plain golden-section when ``grid_points`` is 0. Otherwise a coarse grid
    first locates the best cell, which protects against the flat infeasible
    plateaus (objective ``-inf``) near the bounds. ``after_scan(best_x)`` is
    called once the bracket is fixed. Returns ``(delta, value, evaluations)``;
    the best point seen is returned.
    """
    lo, hi = bounds.delta_min, bounds.delta_max
    width = hi - lo
    seen = {}

    def f(x):
        if x not in seen:
            seen[x] = objective(x)
        return seen[x]

    if width <= 0:
        return lo, f(lo), len(seen)
    if grid_points:
        xs = lo + width * (np.arange(grid_points) + 0.5) / grid_points
        vals = [f(float(x)) for x in xs]
        if not np.isfinite(max(vals)):
            # Feasible sets can hug a bound; probe geometrically toward both.
            steps = width * 2.0 ** -np.arange(5, 31)
            edge = np.concatenate([lo + steps, hi - steps])
            xs = np.sort(np.concatenate([xs, edge]))
            vals = [f(float(x)) for x in xs]
            grid_points = xs.size
        g = int(np.argmax(vals))
        if not np.isfinite(vals[g]):
            return lo, -math.inf, len(seen)
        a = float(xs[g - 1]) if g > 0 else lo
        b = float(xs[g + 1]) if g < grid_points - 1 else hi
    else:
        a, b = lo, hi
    if after_scan is not None and seen:
        after_scan(max(seen, key=lambda x: (seen[x], -x)))
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol * width:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    best = max(seen, key=lambda x: (seen[x], -x))
    return best, seen[best], len(seen)


@dataclass
class OptimizationResult:
    user: int
    scheme: str
    code_rate: Fraction
    spacing: float
    pmf: np.ndarray
    T: float
    r_sdt: float
    iterations: int = 0
    spacing_iterations: int = 0
    rate_active: bool = False
    osnr_db: float = float("nan")
    amplitudes: np.ndarray = field(default=None)

    def constellation(self):
        if self.amplitudes is not None:
            return ShapedConstellation(self.pmf, self.spacing, self.amplitudes)
        return ShapedConstellation(self.pmf, self.spacing)

    def to_record(self):
        return {"user": self.user + 1, "scheme": self.scheme, "osnr_db": self.osnr_db,
                "R_fec": str(self.code_rate), "delta": self.spacing,
                "pmf": [float(x) for x in self.pmf], "T": self.T, "R_sdt": self.r_sdt,
                "iters": self.iterations}


def _entropy_bits(p):
    nz = p[p > 0]
    return float(-(nz * np.log2(nz)).sum())


def optimize_user(j, rate, scenario, interference=NO_INTERFERENCE, cfg=None,
                  atoms=None):
    """Best shaped PMF and spacing of user ``j`` (0-based) at one FEC rate.

    Every spacing candidate of the golden-section search runs the fixed point
    to convergence, so the search directly maximizes ``T`` over the spacing.
    Raises ``InfeasibleError`` when no spacing supports the rate.
    """
    cfg = cfg or SolverConfig()
    M = scenario.M
    atoms = atoms or Atoms.free(M)
    rate = Fraction(rate)
    power = scenario.received[j]
    bounds = SpacingBounds.for_rate(power, M, rate, atoms.index_range())
    results = {}
    warm = {}

    def objective(delta):
        kernel = DivergenceKernel(delta * np.arange(1, M + 1), scenario.sigma,
                                  interference, cfg.quad, cfg.mixture_cap)
        best, best_T = None, -math.inf
        starts = [warm["q"]] if "q" in warm else cfg.starts
        if "q" in warm:
            sub = atoms.index[warm["q"] > 0]
            target = (power / delta - (1 - float(rate)) * (M + 1) / 2) / float(rate)
            if not sub.min() < target < sub.max():
                starts = cfg.starts
        for start in starts:
            try:
                fp = run_fixed_point(kernel, delta, rate, power, atoms, cfg, start)
            except (InfeasibleError, FloatingPointError):
                continue
            T = float(rate) * _entropy_bits(fp.pmf)
            if T > best_T + 1e-12:
                best, best_T = fp, T
        if best is not None:
            results[delta] = best
        return best_T

    def start_warm(delta):
        if delta in results:
            warm["q"] = results[delta].kkt.atoms_q

    delta, value, evals = golden_section_delta(objective, bounds, cfg.delta_tol,
                                               cfg.grid_points, start_warm)
    if not np.isfinite(value):
        raise InfeasibleError(f"user {j + 1}: rate {rate} infeasible at every spacing")
    fp = results[delta]
    r = float(rate)
    return OptimizationResult(
        user=j, scheme=atoms.name, code_rate=rate, spacing=delta, pmf=fp.pmf,
        T=value, r_sdt=r * fp.mi + (1 - r) * fp.uniform_mi,
        iterations=fp.iterations, spacing_iterations=evals,
        rate_active=fp.kkt.multipliers.rate_active, osnr_db=scenario.osnr_db)


def best_over_rates(j, scenario, interference=NO_INTERFERENCE, cfg=None, atoms=None):
    """Sweep the FEC rate set and keep the highest transmission rate.

    Rates are visited from high to low; a rate is skipped once its ceiling
    ``R log2 M`` cannot beat the incumbent.
    """
    cfg = cfg or SolverConfig()
    best = None
    ceiling = math.log2(scenario.M)
    for rate in sorted(cfg.rates, reverse=True):
        if best is not None and float(rate) * ceiling <= best.T:
            break
        try:
            res = optimize_user(j, rate, scenario, interference, cfg, atoms)
        except InfeasibleError:
            continue
        if best is None or res.T > best.T + 1e-12:
            best = res
    if best is None:
        raise InfeasibleError(f"user {j + 1}: no FEC rate is feasible")
    return best


def silent_constellation(scenario, j):
    """Signal of a user with no feasible rate: uniform symbols at its power.

    The user still radiates ``P_rj`` (it carries no information), so the
    users decoded before it keep seeing it as interference.
    """
    M = scenario.M
    return ShapedConstellation(np.full(M, 1.0 / M), 2 * scenario.received[j] / (M + 1))


def _chain(scenario, solve_user, first=0):
    """Run ``solve_user(j, interference)`` in inverse SIC order, chaining profiles.

    An infeasible user (``None``) interferes as :func:`silent_constellation`.
    Users before ``first`` are not solved and stay ``None``.
    """
    results = [None] * scenario.n_users
    interference = NO_INTERFERENCE
    for j in reversed(range(first, scenario.n_users)):
        res = solve_user(j, interference)
        results[j] = res
        signal = silent_constellation(scenario, j) if res is None else res.constellation()
        interference = interference.prepend(signal)
    return results


def optimize_scenario(scenario, cfg=None, scheme="proposed", first=0):
    """Per-user optimum for every user, strongest-received first.

    Users with no feasible rate get ``None``.
    """
    cfg = cfg or SolverConfig()
    if scheme == "proposed":
        atoms = Atoms.free(scenario.M)
    elif scheme == "pcm":
        atoms = Atoms.pairs(scenario.M)
    else:
        raise ValueError(f"unknown shaping scheme {scheme!r}")

    def solve(j, interference):
        try:
            return best_over_rates(j, scenario, interference, cfg, atoms)
        except InfeasibleError:
            return None

    return _chain(scenario, solve, first)


def pcm_baseline(scenario, cfg=None, first=0):
    return optimize_scenario(scenario, cfg, scheme="pcm", first=first)


def uniform_baseline(scenario, cfg=None, first=0):
    """Uniform signaling at ``Delta = 2 P / (M + 1)`` with the highest feasible rate."""
    cfg = cfg or SolverConfig()
    M = scenario.M
    p = np.full(M, 1.0 / M)

    def solve(j, interference):
        delta = 2 * scenario.received[j] / (M + 1)
        kernel = DivergenceKernel(delta * np.arange(1, M + 1), scenario.sigma,
                                  interference, cfg.quad, cfg.mixture_cap)
        mi = kernel.mutual_information(p)
        for rate in sorted(cfg.rates, reverse=True):
            T = float(rate) * math.log2(M)
            if T <= mi - cfg.r_bf + 1e-12:
                return OptimizationResult(j, "uniform", rate, delta, p, T, mi,
                                          osnr_db=scenario.osnr_db)
        return None

    return _chain(scenario, solve, first)


@dataclass
class CapacityResult:
    user: int
    capacity: float
    spacing: float
    pmf: np.ndarray
    iterations: int = 0
    scheme: str = "capacity"

    def constellation(self):
        return ShapedConstellation(self.pmf, self.spacing)


def power_constrained_ba(kernel, spacing, power, M, cfg):
    """Blahut-Arimoto iteration with the power equality ``Delta sum i p_i = P``.

    Update ``p_i ∝ p̂_i 2^(D_i - eta Delta i)``, eta re-solved every step.
    Returns ``(pmf, mutual information, iterations)``.
    """
    idx = np.arange(1, M + 1, dtype=float)
    target = power / spacing
    _, p = solve_tilt(np.zeros(M), idx, target, cfg.root_tol)
    for it in range(1, cfg.max_iter + 1):
        w = kernel.w_vector(p)
        _, new = solve_tilt(-w, idx, target, cfg.root_tol)
        eps = float(np.sum((new - p) ** 2))
        p = new
        if eps < cfg.gamma_s:
            break
    keep = p >= ZERO_CLAMP
    if not keep.all() and idx[keep].min() < target < idx[keep].max():
        _, sub = solve_tilt(-w[keep], idx[keep], target, cfg.root_tol)
        p = np.zeros(M)
        p[keep] = sub
    return p, kernel.mutual_information(p), it


def capacity_user(j, scenario, interference=NO_INTERFERENCE, cfg=None):
    """Maximum mutual information of user ``j`` under the power equality."""
    cfg = cfg or SolverConfig()
    M = scenario.M
    power = scenario.received[j]
    found = {}

    def objective(delta):
        kernel = DivergenceKernel(delta * np.arange(1, M + 1), scenario.sigma,
                                  interference, cfg.quad, cfg.mixture_cap)
        p, mi, it = power_constrained_ba(kernel, delta, power, M, cfg)
        found[delta] = (p, it)
        return mi

    bounds = SpacingBounds(power / M, power)
    delta, value, _ = golden_section_delta(objective, bounds, cfg.delta_tol,
                                           cfg.grid_points)
    p, it = found[delta]
    return CapacityResult(j, value, delta, p, it)


def capacity_noma(scenario, cfg=None, first=0):
    """Per-user capacities in inverse SIC order with capacity-achieving interferers."""
    cfg = cfg or SolverConfig()
    return _chain(scenario, lambda j, intf: capacity_user(j, scenario, intf, cfg), first)


def uniform_capacity(scenario, cfg=None, first=0):
    """Mutual information of uniform signaling with every user at ``2P/(M+1)``."""
    cfg = cfg or SolverConfig()
    M = scenario.M
    p = np.full(M, 1.0 / M)

    def solve(j, interference):
        delta = 2 * scenario.received[j] / (M + 1)
        kernel = DivergenceKernel(delta * np.arange(1, M + 1), scenario.sigma,
                                  interference, cfg.quad, cfg.mixture_cap)
        return CapacityResult(j, kernel.mutual_information(p), delta, p, 0, "uniform")

    return _chain(scenario, solve, first)


def with_config(cfg, **changes):
    return replace(cfg or SolverConfig(), **changes)


__all__ = [
    "Atoms", "CapacityResult", "DVB_S2_RATES", "FixedPoint", "KktMultipliers",
    "KktSolution", "OptimizationResult", "SolverConfig", "SpacingBounds",
    "algorithm1", "best_over_rates", "capacity_noma", "capacity_user",
    "golden_section_delta", "initial_pmf", "kkt_pmf", "optimize_scenario",
    "optimize_user", "pcm_baseline", "power_constrained_ba", "run_fixed_point",
    "silent_constellation",
    "solve_tilt", "uniform_baseline", "uniform_capacity", "with_config",
]

"""Independent reference computations used by the tests.

Nothing here shares code with the package: integrals use a dense
trapezoidal grid instead of Gauss-Hermite nodes, and the optimizer oracle is
exhaustive enumeration of a PMF grid.
"""

import itertools
import math

import numpy as np


def trapz_mi(pmfs, spacings, sigma, interference=((0.0,), (1.0,)), points=400):
    """Mutual information (bits) of unipolar PAM for a batch of (pmf, spacing).

    ``interference`` is ``(values, weights)`` of an additive discrete term.
    Each batch row gets its own uniform y grid spanning the support +-9 sigma.
    """
    pmfs = np.atleast_2d(np.asarray(pmfs, dtype=float))
    B, M = pmfs.shape
    spacings = np.broadcast_to(np.asarray(spacings, dtype=float), (B,))
    v = np.asarray(interference[0], dtype=float)
    wv = np.asarray(interference[1], dtype=float)
    lo = spacings + v.min() - 9 * sigma
    hi = M * spacings + v.max() + 9 * sigma
    t = np.linspace(0.0, 1.0, points)
    y = lo[:, None] + (hi - lo)[:, None] * t[None, :]                    # (B, Y)
    amps = spacings[:, None] * np.arange(1, M + 1)[None, :]               # (B, M)
    z = (y[:, :, None, None] - amps[:, None, :, None] - v) / sigma        # (B, Y, M, V)
    cond = (np.exp(-0.5 * z * z) * wv).sum(-1) / (math.sqrt(2 * math.pi) * sigma)
    mix = np.einsum("bym,bm->by", cond, pmfs)
    with np.errstate(divide="ignore", invalid="ignore"):
        integrand = np.where(cond > 0, cond * np.log2(cond / mix[:, :, None]), 0.0)
    integrand = np.einsum("bym,bm->by", integrand, pmfs)
    return np.trapezoid(integrand, dx=1.0, axis=1) * (hi - lo) / (points - 1)


def simplex_grid(M, step):
    n = int(round(1 / step))
    for c in itertools.combinations(range(n + M - 1), M - 1):
        parts = np.diff((-1,) + c + (n + M - 1,)) - 1
        yield parts / n


def _cond_table(delta, M, sigma, points):
    """Dense-grid conditional densities ``f(y | i)`` and their self-information."""
    y = np.linspace(delta - 9 * sigma, M * delta + 9 * sigma, points)
    dy = y[1] - y[0]
    cond = np.exp(-0.5 * ((y[:, None] - delta * np.arange(1, M + 1)) / sigma) ** 2)
    cond /= math.sqrt(2 * math.pi) * sigma
    with np.errstate(divide="ignore", invalid="ignore"):
        self_info = np.trapezoid(np.where(cond > 0, cond * np.log2(cond), 0.0), dx=dy, axis=0)
    return cond, self_info, dy


def _mi_batch(p, cond, self_info, dy):
    f = p @ cond.T                                               # (B, Y)
    with np.errstate(divide="ignore", invalid="ignore"):
        fl = np.where(f > 0, f * np.log2(f), 0.0)
    return p @ self_info - np.trapezoid(fl, dx=dy, axis=1)


def _hyperplane_pmfs(M, target, mids):
    """Complete interior coordinates ``p_2..p_{M-1}`` to PMFs with mean index ``target``."""
    if M == 2:
        p_top = np.array([target - 1.0])
        full = np.stack([1 - p_top, p_top], 1)
    else:
        w = np.arange(1, M - 1)
        p_top = (target - 1 - mids @ w) / (M - 1)
        p_bot = 1 - mids.sum(1) - p_top
        full = np.concatenate([p_bot[:, None], mids, p_top[:, None]], 1)
    return full[np.all(full >= -1e-12, axis=1)].clip(0.0)


def _entropy_rows(p):
    with np.errstate(divide="ignore", invalid="ignore"):
        return -np.where(p > 0, p * np.log2(p), 0.0).sum(1)


def _best_on(deltas, mids, M, power, rate, r_bf, sigma, points):
    best = (0.0, None, None)
    uniform = np.full((1, M), 1.0 / M)
    for delta in deltas:
        target = (power / delta - (1 - rate) * (M + 1) / 2) / rate
        p = _hyperplane_pmfs(M, target, mids)
        if p.size == 0:
            continue
        T = rate * _entropy_rows(p)
        keep = T > best[0]
        if not keep.any():
            continue
        p, T = p[keep], T[keep]
        cond, self_info, dy = _cond_table(delta, M, sigma, points)
        mi = _mi_batch(p, cond, self_info, dy)
        mi_u = _mi_batch(uniform, cond, self_info, dy)[0]
        ok = T <= rate * mi + (1 - rate) * mi_u - r_bf
        if ok.any():
            k = int(np.argmax(np.where(ok, T, -1.0)))
            best = (float(T[k]), p[k], float(delta))
    return best


def grid_search_tr(M, osnr_db, rate, step=0.005, n_delta=200, r_bf=0.05, sigma=1.0,
                   refine=10, rounds=3, points=300):
    """Exhaustive search of max ``R H(p)`` s.t. power equality and ``T <= R_SDT - R_bf``.

    Spacings on an ``n_delta`` grid over the feasible range; at each spacing
    the PMFs of a ``step`` simplex grid restricted to the power hyperplane
    (interior coordinates on the grid, the two outer ones solved). The best
    cell is then searched ``refine`` times finer, ``rounds`` times, because
    near point masses the entropy changes by more than 1e-3 across one
    coarse cell.
    Returns ``(T, pmf, spacing)``; ``(0, None, None)`` if nothing is feasible.
    """
    power = sigma * 10 ** (osnr_db / 10)
    parity = (1 - rate) * (M + 1) / 2
    d_lo, d_hi = power / (rate * M + parity), power / (rate + parity)
    deltas = np.linspace(d_lo, d_hi, n_delta)
    if M > 2:
        mids = np.array([g[:M - 2] for g in simplex_grid(M - 1, step)])
    else:
        mids = np.zeros((1, 0))
    best = _best_on(deltas, mids, M, power, rate, r_bf, sigma, points)
    dd = (d_hi - d_lo) / (n_delta - 1)
    cell = step
    for _ in range(rounds):
        if best[1] is None:
            break
        fine_d = np.linspace(max(d_lo, best[2] - 2 * dd), min(d_hi, best[2] + 2 * dd),
                             4 * refine + 1)
        dd /= refine
        cell /= refine
        if M > 2:
            offs = np.arange(-2 * refine, 2 * refine + 1) * cell
            mesh = np.stack(np.meshgrid(*([offs] * (M - 2)), indexing="ij"), -1)
            fine_mids = best[1][1:M - 1] + mesh.reshape(-1, M - 2)
            fine_mids = fine_mids[np.all(fine_mids >= 0, axis=1) & (fine_mids.sum(1) <= 1)]
        else:
            fine_mids = mids
        fine = _best_on(fine_d, fine_mids, M, power, rate, r_bf, sigma, points)
        if fine[0] >= best[0]:
            best = fine
    return best


def mc_mi(pmf, amplitudes, sigma, interference=((0.0,), (1.0,)), samples=10 ** 6,
          seed=0, chunk=10 ** 5):
    """Monte-Carlo estimate of ``I(X; Y)`` in bits and its standard error.

    Draws ``(x, interferer, noise)``, then averages ``log2 f(y|x) / f(y)``
    with both densities evaluated exactly as finite Gaussian mixtures.
    """
    rng = np.random.default_rng(seed)
    pmf = np.asarray(pmf, dtype=float)
    a = np.asarray(amplitudes, dtype=float)
    v = np.asarray(interference[0], dtype=float)
    wv = np.asarray(interference[1], dtype=float)
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < samples:
        n = min(chunk, samples - done)
        x = rng.choice(a.size, size=n, p=pmf)
        k = rng.choice(v.size, size=n, p=wv)
        y = a[x] + v[k] + sigma * rng.standard_normal(n)
        g = np.exp(-0.5 * ((y[:, None, None] - a[None, :, None] - v[None, None, :]) / sigma) ** 2)
        cond = (g * wv).sum(-1)                                          # (n, M)
        mix = cond @ pmf
        s = np.log2(cond[np.arange(n), x] / mix)
        total += s.sum()
        total_sq += (s * s).sum()
        done += n
    mean = total / samples
    var = total_sq / samples - mean * mean
    return mean, math.sqrt(var / samples)


def trapz_w(pmf, amplitudes, sigma, points=20001):
    """Surrogate weights ``int f(y|i) log2(f(y) / (f(y|i) p_i)) dy`` on a dense grid."""
    pmf = np.asarray(pmf, dtype=float)
    a = np.asarray(amplitudes, dtype=float)
    y = np.linspace(a.min() - 12 * sigma, a.max() + 12 * sigma, points)
    cond = np.exp(-0.5 * ((y[:, None] - a) / sigma) ** 2) / (math.sqrt(2 * math.pi) * sigma)
    mix = cond @ pmf
    with np.errstate(divide="ignore", invalid="ignore"):
        integrand = np.where(cond > 0, cond * np.log2(mix[:, None] / (cond * pmf)), 0.0)
    return np.trapezoid(integrand, y, axis=0)

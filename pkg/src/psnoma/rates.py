"""Achievable and transmission rates of shaped unipolar PAM under NOMA interference.

All rates are in bits. Received amplitudes are used directly: each user
pre-compensates its channel (``alpha_j = 1/h_j``), so the symbol ``i*Delta`` of
user j contributes exactly ``i*Delta`` to the photodiode output.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numba import njit
from numpy.polynomial.hermite import hermgauss

from ._validation import check_code_rate, check_pmf, check_positive

LN2 = np.log(2.0)
LOG_FLOOR = 1e-300
DEFAULT_MIXTURE_CAP = 10 ** 6


@dataclass(frozen=True)
class QuadratureSpec:
    node_count: int = 64
    scheme: str = "gauss-hermite"

    def __post_init__(self):
        # numpy's Gauss-Hermite weights overflow somewhere above 350 nodes.
        if not 8 <= int(self.node_count) <= 300:
            raise ValueError("quadrature needs between 8 and 300 nodes")
        if self.scheme != "gauss-hermite":
            raise ValueError(f"unsupported quadrature scheme {self.scheme!r}")


DEFAULT_QUAD = QuadratureSpec()


@lru_cache(maxsize=16)
def _hermite(n):
    x, w = hermgauss(n)
    return x, w / np.sqrt(np.pi)


class ShapedConstellation:
    """PMF over the points of one user's unipolar constellation.

    The regular alphabet is ``{Delta, 2 Delta, ..., M Delta}``; an explicit
    ``amplitudes`` vector overrides it (used for externally supplied
    geometric-shaping layouts).
    """

    def __init__(self, pmf, spacing=None, amplitudes=None):
        self.pmf = check_pmf(pmf)
        if amplitudes is None:
            self.spacing = check_positive(spacing, "spacing")
            self.amplitudes = self.spacing * np.arange(1, self.pmf.size + 1)
        else:
            amplitudes = np.asarray(amplitudes, dtype=float)
            if amplitudes.shape != self.pmf.shape:
                raise ValueError("amplitudes and pmf must have the same length")
            if np.any(amplitudes < 0):
                raise ValueError("intensity amplitudes must be nonnegative")
            self.amplitudes = amplitudes
            self.spacing = spacing

    @property
    def M(self):
        return self.pmf.size

    def __repr__(self):
        return f"ShapedConstellation(M={self.M}, spacing={self.spacing!r})"


class InterferenceProfile:
    """Not-yet-cancelled users ``j+1..N`` seen by the decoder of user j."""

    def __init__(self, entries=()):
        self.entries = tuple(entries)
        for e in self.entries:
            if not isinstance(e, ShapedConstellation):
                raise TypeError("interference entries must be ShapedConstellation")

    def __len__(self):
        return len(self.entries)

    def prepend(self, constellation):
        return InterferenceProfile((constellation,) + self.entries)

    def mixture(self, cap=DEFAULT_MIXTURE_CAP):
        """Support and weights of the summed interference; zero weights dropped."""
        size = 1
        for e in self.entries:
            size *= e.M
        if size > cap:
            raise ValueError(f"interference mixture has {size} terms, cap is {cap}")
        values = np.zeros(1)
        weights = np.ones(1)
        for e in self.entries:
            keep = e.pmf > 0
            values = (values[:, None] + e.amplitudes[keep][None, :]).ravel()
            weights = (weights[:, None] * e.pmf[keep][None, :]).ravel()
        return values, weights


NO_INTERFERENCE = InterferenceProfile()


def entropy(p):
    """Shannon entropy in bits, with 0 log 0 = 0."""
    p = check_pmf(p)
    nz = p[p > 0]
    return float(-(nz * np.log2(nz)).sum())


def transmission_rate(p, rate):
    """Information bits per channel use of an SDT frame: ``R_FEC * H(p)``."""
    return check_code_rate(rate) * entropy(p)


def average_power(spacing, p, rate):
    """Mean received intensity of an SDT frame (shaped part plus uniform parity)."""
    p = check_pmf(p)
    rate = check_code_rate(rate)
    M = p.size
    return rate * spacing * float(np.dot(np.arange(1, M + 1), p)) \
        + (1 - rate) * spacing * (M + 1) / 2


def conditional_pdf(y, amplitude, sigma, interference=NO_INTERFERENCE,
                    cap=DEFAULT_MIXTURE_CAP):
    """Density of the post-SIC sample given the user's symbol amplitude."""
    sigma = check_positive(sigma, "sigma")
    values, weights = interference.mixture(cap)
    y = np.asarray(y, dtype=float)
    z = (y[..., None] - amplitude - values) / sigma
    return (weights * np.exp(-0.5 * z * z)).sum(-1) / (np.sqrt(2 * np.pi) * sigma)


@njit(cache=True)
def _mixture_logpdf(offsets, v, logw, nodes):
    """``G[u, k, q] = log sum_k' w_k' exp(-(offsets_u + v_k + nodes_q - v_k')^2 / 2)``."""
    U, K, Q = offsets.size, v.size, nodes.size
    out = np.empty((U, K, Q))
    terms = np.empty(K)
    for u in range(U):
        for k in range(K):
            for q in range(Q):
                y = offsets[u] + v[k] + nodes[q]
                top = -np.inf
                for kk in range(K):
                    d = y - v[kk]
                    t = logw[kk] - 0.5 * d * d
                    terms[kk] = t
                    if t > top:
                        top = t
                acc = 0.0
                for kk in range(K):
                    acc += np.exp(terms[kk] - top)
                out[u, k, q] = np.log(acc) + top
    return out


def _mixture_loglik(a, v, logw, nodes):
    """``L[i, k, q, m] = log sum_k' w_k' exp(-(y - a_m - v_k')^2 / 2)``.

    ``y = a_i + v_k + nodes_q``; every input is in units of sigma. ``L`` only
    depends on ``a_i - a_m``, so each distinct offset is evaluated once
    (``2M - 1`` of them on a regular grid).
    """
    diffs = a[:, None] - a[None, :]
    scale = max(float(np.abs(a).max()), 1e-300)
    _, first, inv = np.unique(np.round(diffs / scale, 12), return_index=True,
                              return_inverse=True)
    g = _mixture_logpdf(diffs.ravel()[first], v, logw, nodes)
    return np.ascontiguousarray(g[inv.reshape(a.size, a.size)].transpose(0, 2, 3, 1))


@njit(cache=True)
def _divergence_sums(loglik, logp, weights):
    """Natural-log divergences ``sum_kq w_kq (L[i,k,q,i] - log sum_m p_m e^L[i,k,q,m])``."""
    M, K, Q = loglik.shape[0], loglik.shape[1], loglik.shape[2]
    support = np.flatnonzero(logp > -np.inf)
    out = np.zeros(M)
    finite = True
    for i in range(M):
        acc = 0.0
        for k in range(K):
            for q in range(Q):
                top = -np.inf
                for m in support:
                    t = loglik[i, k, q, m] + logp[m]
                    if t > top:
                        top = t
                s = 0.0
                for m in support:
                    s += np.exp(loglik[i, k, q, m] + logp[m] - top)
                r = loglik[i, k, q, i] - (np.log(s) + top)
                if not np.isfinite(r):
                    finite = False
                acc += weights[k, q] * r
        out[i] = acc
    return out, finite


class DivergenceKernel:
    """Precomputed Gaussian-mixture log-likelihoods at the quadrature nodes.

    Depends only on the amplitudes, noise level and interference, so repeated
    evaluations for different PMFs (fixed-point iterations) are cheap.
    """

    def __init__(self, amplitudes, sigma, interference=NO_INTERFERENCE,
                 quad=DEFAULT_QUAD, cap=DEFAULT_MIXTURE_CAP):
        a = np.asarray(amplitudes, dtype=float)
        sigma = check_positive(sigma, "sigma")
        v, w = interference.mixture(cap)
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(v))):
            raise FloatingPointError("non-finite amplitude in quadrature integrand")
        z, omega = _hermite(int(quad.node_count))
        loglik = _mixture_loglik(a / sigma, v / sigma, np.log(w), np.sqrt(2.0) * z)
        self.amplitudes = a
        self.sigma = sigma
        self.loglik = loglik
        # Expectation weights over (interferer tuple, node) given symbol i.
        self.weights = w[:, None] * omega[None, :]

    def divergences(self, p):
        """``D_i = E[log2 f(y|s_i) / f(y)]`` for every symbol i, in bits."""
        p = np.asarray(p, dtype=float)
        with np.errstate(divide="ignore"):
            logp = np.log(p)
        d, finite = _divergence_sums(self.loglik, logp, self.weights)
        if not finite:
            raise FloatingPointError("non-finite integrand in quadrature")
        return d / LN2

    def mutual_information(self, p):
        p = np.asarray(p, dtype=float)
        d = self.divergences(p)
        nz = p > 0
        mi = float(np.dot(p[nz], d[nz]))
        h = float(-(p[nz] * np.log2(p[nz])).sum())
        return min(max(mi, 0.0), h)

    def w_vector(self, p):
        p = np.asarray(p, dtype=float)
        return -np.log2(np.maximum(p, LOG_FLOOR)) - self.divergences(p)


def symbol_divergences(amplitudes, p, sigma, interference=NO_INTERFERENCE,
                       quad=DEFAULT_QUAD, cap=DEFAULT_MIXTURE_CAP):
    """``D_i = E[log2 f(y|s_i) / f(y)]`` for every symbol i, in bits.

    The expectation over y given s_i runs over the interference mixture
    exactly and over the Gaussian noise by Gauss-Hermite quadrature. Entries
    with ``p_i = 0`` are still evaluated (needed by the surrogate weights).
    """
    return DivergenceKernel(amplitudes, sigma, interference, quad, cap).divergences(p)


def mutual_information(constellation, sigma, interference=NO_INTERFERENCE,
                       quad=DEFAULT_QUAD, cap=DEFAULT_MIXTURE_CAP):
    """``I(X_j; Y_j)`` in bits for one user under residual NOMA interference."""
    p = constellation.pmf
    d = symbol_divergences(constellation.amplitudes, p, sigma, interference, quad, cap)
    mi = float(np.dot(p[p > 0], d[p > 0]))
    return min(max(mi, 0.0), entropy(p))


def w_integral(constellation, sigma, interference=NO_INTERFERENCE,
               quad=DEFAULT_QUAD, cap=DEFAULT_MIXTURE_CAP, strict=False):
    """Surrogate weights ``W_i = E_{y|s_i}[log2 f(y) / (f(y|s_i) p_i)]``.

    ``sum_i p_i W_i`` is the equivocation ``H(X|Y)``. Zero-probability
    indices get a floored ``p_i`` inside the log unless ``strict``.
    """
    p = constellation.pmf
    if strict and np.any(p == 0):
        raise ValueError("w_integral at a zero-probability symbol with strict=True")
    d = symbol_divergences(constellation.amplitudes, p, sigma, interference, quad, cap)
    return -np.log2(np.maximum(p, LOG_FLOOR)) - d


def uniform_like(constellation):
    M = constellation.M
    return ShapedConstellation(np.full(M, 1.0 / M), constellation.spacing,
                               amplitudes=constellation.amplitudes)


def sdt_rate(constellation, rate, sigma, interference=NO_INTERFERENCE,
             quad=DEFAULT_QUAD, cap=DEFAULT_MIXTURE_CAP, uniform_mi=None):
    """Achievable rate of a sparse-dense frame.

    The shaped fraction ``rate`` of the symbols follows the PMF, the parity
    fraction is uniform. ``uniform_mi`` may be passed to skip recomputation.
    """
    rate = check_code_rate(rate)
    mi = mutual_information(constellation, sigma, interference, quad, cap)
    if rate == 1:
        return mi
    if uniform_mi is None:
        uniform_mi = mutual_information(uniform_like(constellation), sigma,
                                        interference, quad, cap)
    return rate * mi + (1 - rate) * uniform_mi

"""Systematic LDPC codes, sum-product decoding and symbol-to-bit MAP metrics.

Codes have parity-check matrix ``H = [H_s | H_p]`` with ``H_p`` lower
bidiagonal (an accumulator, as in IRA/DVB-S2 codes) or the identity (small
hand-written codes). The parity bits are ``z_u = C z_p`` with
``C = H_p^{-1} H_s``, so the generator is ``[I | C^T]``.
LLRs use the convention ``log P(b=0) / P(b=1)``.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from numba import njit
from scipy.special import logsumexp

from .ccdm import gray_labels

LLR_CLIP = 30.0
PHI_FLOOR = 1e-12


@dataclass(eq=False)
class LdpcCode:
    """Binary systematic code given by the sparse systematic part of ``H``.

    ``sys_rows``/``sys_cols`` are the coordinates of the ones of ``H_s``
    (``m x k``). ``accumulate`` selects the bidiagonal parity part.
    """

    k: int
    m: int
    sys_rows: np.ndarray
    sys_cols: np.ndarray
    accumulate: bool = True
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.sys_rows = np.asarray(self.sys_rows, dtype=np.int64)
        self.sys_cols = np.asarray(self.sys_cols, dtype=np.int64)
        if self.k < 1 or self.m < 1:
            raise ValueError("code needs k >= 1 and m >= 1")
        if self.sys_rows.shape != self.sys_cols.shape:
            raise ValueError("row and column coordinate arrays differ in length")
        if self.sys_rows.size and (self.sys_rows.max() >= self.m or self.sys_cols.max() >= self.k
                                   or min(self.sys_rows.min(), self.sys_cols.min()) < 0):
            raise ValueError("coordinates outside the matrix")

    @property
    def n(self):
        return self.k + self.m

    @property
    def rate(self):
        return Fraction(self.k, self.n)

    def h_sys(self):
        if "hs" not in self._cache:
            data = np.ones(self.sys_rows.size, dtype=np.int64)
            hs = sp.csr_matrix((data, (self.sys_rows, self.sys_cols)), shape=(self.m, self.k))
            hs.data %= 2
            hs.eliminate_zeros()
            self._cache["hs"] = hs
        return self._cache["hs"]

    def edges(self):
        """``(rows, cols)`` of every one of the full ``H``, columns in codeword order."""
        if "edges" not in self._cache:
            hs = self.h_sys().tocoo()
            prow = np.arange(self.m)
            rows = [hs.row, prow]
            cols = [hs.col, self.k + prow]
            if self.accumulate and self.m > 1:
                rows.append(prow[1:])
                cols.append(self.k + prow[:-1])
            r = np.concatenate(rows).astype(np.int64)
            c = np.concatenate(cols).astype(np.int64)
            order = np.lexsort((c, r))
            self._cache["edges"] = (r[order], c[order])
        return self._cache["edges"]

    def parity_check_matrix(self):
        r, c = self.edges()
        return sp.csr_matrix((np.ones(r.size, dtype=np.int64), (r, c)), shape=(self.m, self.n))

    def parity_matrix(self):
        """Dense ``C`` (``m x k``) with ``z_u = C z_p``; meant for small codes."""
        c = self.h_sys().toarray() % 2
        if self.accumulate:
            c = np.bitwise_xor.accumulate(c, axis=0)
        return c.astype(np.uint8)

    def syndrome(self, codewords):
        cw = np.atleast_2d(np.asarray(codewords, dtype=np.int64))
        return (self.parity_check_matrix() @ cw.T).T % 2


def fec_encode(bits, code):
    """Parity bits ``C z_p`` for one word or a ``(frames, k)`` batch."""
    z = np.asarray(bits, dtype=np.int64)
    single = z.ndim == 1
    z = np.atleast_2d(z)
    if z.shape[1] != code.k:
        raise ValueError(f"expected {code.k} systematic bits, got {z.shape[1]}")
    s = (code.h_sys() @ z.T).T % 2
    if code.accumulate:
        s = np.bitwise_xor.accumulate(s, axis=1)
    s = s.astype(np.uint8)
    return s[0] if single else s


def code_from_parity_matrix(c):
    """Code with ``H = [C | I]`` from a dense parity matrix (toy codes, tests)."""
    c = np.asarray(c) % 2
    r, col = np.nonzero(c)
    return LdpcCode(c.shape[1], c.shape[0], r, col, accumulate=False)


# Systematic column-weight profile of the DVB-S2 normal-frame codes:
# rate -> (high weight, fraction of systematic columns with it); the rest have weight 3.
DVB_S2_PROFILES = {
    Fraction(1, 4): (12, Fraction(1, 3)), Fraction(1, 3): (12, Fraction(1, 3)),
    Fraction(2, 5): (12, Fraction(1, 3)), Fraction(1, 2): (8, Fraction(2, 5)),
    Fraction(3, 5): (12, Fraction(1, 3)), Fraction(2, 3): (13, Fraction(1, 10)),
    Fraction(3, 4): (12, Fraction(1, 9)), Fraction(4, 5): (11, Fraction(1, 8)),
    Fraction(5, 6): (13, Fraction(1, 10)), Fraction(8, 9): (4, Fraction(1, 8)),
    Fraction(9, 10): (4, Fraction(1, 9)),
}


def column_weights(k, rate, col_weight=None):
    """Per-column weights: constant ``col_weight`` or the DVB-S2 profile of ``rate``.

    Rates without a profile fall back to weight 3 throughout.
    """
    if col_weight is not None:
        return np.full(k, int(col_weight), dtype=np.int64)
    high, frac = DVB_S2_PROFILES.get(Fraction(rate), (3, Fraction(0)))
    w = np.full(k, 3, dtype=np.int64)
    w[:int(round(k * frac))] = high
    return w


def build_ira_code(k, m, col_weight=3, seed=0):
    """IRA code whose systematic column ``i`` has weight ``col_weight[i]``.

    ``col_weight`` is a scalar or a length-``k`` sequence. Each systematic
    column is attached to the currently lightest checks that do not close a
    4-cycle with the edges placed so far (including the accumulator chain);
    ties are broken by a seeded shuffle. When no such check remains the
    4-cycle rule is dropped for that edge.
    """
    weights = np.broadcast_to(np.asarray(col_weight, dtype=np.int64), (k,))
    if k and weights.max() > m:
        raise ValueError("column weight exceeds the number of checks")
    rng = np.random.default_rng(seed)
    degree = np.zeros(m, dtype=np.int64)
    check_cols = [[] for _ in range(m)]
    col_checks = []
    rows, cols = [], []
    for col in range(k):
        chosen = []
        blocked = np.zeros(m, dtype=bool)
        for _ in range(int(weights[col])):
            tie = rng.random(m)
            key = degree + np.where(blocked, m * 4, 0) + tie
            if chosen:
                key[chosen] = np.inf
            r = int(np.argmin(key))
            chosen.append(r)
            # Checks sharing a column or an accumulator edge with r would close a 4-cycle.
            blocked[max(r - 1, 0):r + 2] = True
            for other in check_cols[r]:
                blocked[col_checks[other]] = True
        chosen.sort()
        for r in chosen:
            degree[r] += 1
            check_cols[r].append(col)
            rows.append(r)
            cols.append(col)
        col_checks.append(chosen)
    return LdpcCode(k, m, np.array(rows), np.array(cols), accumulate=True)


@lru_cache(maxsize=32)
def ldpc_code(block_bits, rate, seed=0, col_weight=None):
    """Cached IRA code of length ``block_bits`` and rate ``rate``.

    By default the systematic columns follow the DVB-S2 weight profile of
    the rate; an integer ``col_weight`` gives a column-regular code instead.
    """
    rate = Fraction(rate)
    k = Fraction(block_bits) * rate
    if k.denominator != 1 or not 0 < rate < 1:
        raise ValueError(f"rate {rate} does not divide a {block_bits}-bit block")
    k = int(k)
    return build_ira_code(k, block_bits - k, column_weights(k, rate, col_weight), seed)


def save_code(path, code):
    r, c = code.h_sys().nonzero()
    with open(path, "w") as fh:
        fh.write(f"# rate {code.rate}\n# k {code.k}\n# m {code.m}\n")
        fh.write(f"# parity {'accumulate' if code.accumulate else 'identity'}\n")
        for a, b in sorted(zip(r.tolist(), c.tolist())):
            fh.write(f"{a} {b}\n")


def load_code(path):
    meta = {}
    rows, cols = [], []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition(" ")
                meta[key] = value.strip()
                continue
            a, b = line.split()
            rows.append(int(a))
            cols.append(int(b))
    for key in ("rate", "k", "m", "parity"):
        if key not in meta:
            raise ValueError(f"code file lacks the '# {key}' header")
    code = LdpcCode(int(meta["k"]), int(meta["m"]), np.array(rows, dtype=np.int64),
                    np.array(cols, dtype=np.int64), meta["parity"] == "accumulate")
    if Fraction(meta["rate"]) != code.rate:
        raise ValueError(f"rate tag {meta['rate']} disagrees with k/n = {code.rate}")
    return code


@njit(cache=True)
def _phi(x):
    if x < PHI_FLOOR:
        x = PHI_FLOOR
    elif x > 2 * LLR_CLIP:
        x = 2 * LLR_CLIP
    return -math.log(math.tanh(0.5 * x))


@njit(cache=True)
def _syndrome_ok(hard, chk_ptr, edge_col):
    for r in range(chk_ptr.size - 1):
        s = 0
        for e in range(chk_ptr[r], chk_ptr[r + 1]):
            s ^= hard[edge_col[e]]
        if s:
            return False
    return True


@njit(cache=True)
def _bp_frames(llr, chk_ptr, edge_col, max_iters, hard, converged, iters):
    F, n = llr.shape
    E = edge_col.size
    width = 0
    for r in range(chk_ptr.size - 1):
        width = max(width, chk_ptr[r + 1] - chk_ptr[r])
    for f in range(F):
        total = llr[f].copy()
        for v in range(n):
            hard[f, v] = 1 if total[v] < 0 else 0
        if _syndrome_ok(hard[f], chk_ptr, edge_col):
            converged[f] = True
            continue
        c2v = np.zeros(E)
        mag = np.empty(width)
        neg = np.empty(width, dtype=np.bool_)
        for it in range(1, max_iters + 1):
            for r in range(chk_ptr.size - 1):
                lo = chk_ptr[r]
                deg = chk_ptr[r + 1] - lo
                acc = 0.0
                parity = False
                for d in range(deg):
                    m = total[edge_col[lo + d]] - c2v[lo + d]
                    neg[d] = m < 0
                    mag[d] = _phi(abs(m))
                    acc += mag[d]
                    parity ^= neg[d]
                for d in range(deg):
                    out = min(_phi(acc - mag[d]), LLR_CLIP)
                    c2v[lo + d] = -out if parity ^ neg[d] else out
            total[:] = llr[f]
            for e in range(E):
                total[edge_col[e]] += c2v[e]
            for v in range(n):
                hard[f, v] = 1 if total[v] < 0 else 0
            iters[f] = it
            if _syndrome_ok(hard[f], chk_ptr, edge_col):
                converged[f] = True
                break


@dataclass
class DecodeResult:
    bits: np.ndarray
    converged: np.ndarray
    iterations: np.ndarray


def bp_decode(llr, code, max_iters=50):
    """Flooding sum-product decoding of a ``(frames, n)`` LLR batch.

    A frame stops as soon as its hard decision satisfies every check.
    Returns the systematic bits, a converged flag and the number of
    message-passing iterations per frame (0 when the channel decision is
    already a codeword).
    """
    llr = np.atleast_2d(np.asarray(llr, dtype=float))
    if llr.shape[1] != code.n:
        raise ValueError(f"expected {code.n} LLRs per frame, got {llr.shape[1]}")
    llr = np.ascontiguousarray(np.clip(llr, -LLR_CLIP, LLR_CLIP))
    rows, cols = code.edges()
    chk_ptr = np.searchsorted(rows, np.arange(code.m + 1)).astype(np.int64)
    F = llr.shape[0]
    hard = np.zeros((F, code.n), dtype=np.uint8)
    converged = np.zeros(F, dtype=np.bool_)
    iters = np.zeros(F, dtype=np.int64)
    _bp_frames(llr, chk_ptr, cols, int(max_iters), hard, converged, iters)
    return DecodeResult(hard[:, :code.k].copy(), converged, iters)


def symbol_loglik(y, amplitudes, sigma, intf_values=(0.0,), intf_logw=None):
    """``log f(y_t | x)`` for every sample and symbol, Gaussian-mixture interference.

    ``intf_logw`` is ``(K,)`` or per-sample ``(n, K)`` log-weights.
    """
    y = np.asarray(y, dtype=float)
    v = np.asarray(intf_values, dtype=float)
    if intf_logw is None:
        intf_logw = np.zeros(v.size)
    logw = np.asarray(intf_logw, dtype=float)
    if logw.ndim == 1:
        logw = np.broadcast_to(logw, (y.size, v.size))
    z = (y[:, None, None] - np.asarray(amplitudes)[None, :, None] - v[None, None, :]) / sigma
    return logsumexp(logw[:, None, :] - 0.5 * z * z, axis=-1) - np.log(np.sqrt(2 * np.pi) * sigma)


def map_llr(y, amplitudes, prior, sigma, intf_values=(0.0,), intf_logw=None):
    """Bit-level MAP metrics of Gray-labelled symbols.

    ``prior`` is ``(M,)`` or a per-sample ``(n, M)`` array, so shaped and
    parity segments can use different priors. Exact symbol sums, no
    bit-independence assumption. Returns ``(n, log2 M)`` LLRs clipped to
    ``+-LLR_CLIP``.
    """
    amplitudes = np.asarray(amplitudes, dtype=float)
    M = amplitudes.size
    prior = np.asarray(prior, dtype=float)
    with np.errstate(divide="ignore"):
        logp = np.log(prior)
    if logp.ndim == 1:
        logp = logp[None, :]
    metric = symbol_loglik(y, amplitudes, sigma, intf_values, intf_logw) + logp
    labels = gray_labels(M).astype(bool)                        # (M, m)
    neg = np.full_like(metric, -np.inf)
    out = np.empty((metric.shape[0], labels.shape[1]))
    for level in range(labels.shape[1]):
        one = labels[:, level]
        l0 = logsumexp(np.where(one, neg, metric), axis=1)
        l1 = logsumexp(np.where(one, metric, neg), axis=1)
        with np.errstate(invalid="ignore"):
            d = l0 - l1
        d = np.where(np.isnan(d), 0.0, d)
        out[:, level] = np.clip(d, -LLR_CLIP, LLR_CLIP)
    return out

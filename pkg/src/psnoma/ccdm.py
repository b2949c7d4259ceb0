"""Constant-composition distribution matching, Gray mapping and frame layout.

The matcher maps ``k`` uniform bits to one of the ``multinomial(n; counts)``
sequences with a fixed symbol composition. Encoding is unranking in
lexicographic order with exact integer arithmetic (arithmetic coding over the
shrinking multiset), so encode/decode are bit-exact on every platform.
Symbol indices are 1-based throughout (``1..M``).
"""

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ._validation import CodewordError, check_order, check_pmf


def multinomial(counts):
    counts = [int(c) for c in counts]
    out = math.factorial(sum(counts))
    for c in counts:
        out //= math.factorial(c)
    return out


@dataclass(frozen=True)
class Composition:
    counts: tuple

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if not counts or any(c < 0 for c in counts) or sum(counts) < 1:
            raise ValueError(f"invalid composition {self.counts!r}")
        object.__setattr__(self, "counts", counts)

    @property
    def M(self):
        return len(self.counts)

    @property
    def n_p(self):
        return sum(self.counts)

    @property
    def n_sequences(self):
        return multinomial(self.counts)

    @property
    def k(self):
        """Input length ``floor(log2 multinomial)``."""
        return self.n_sequences.bit_length() - 1

    def pmf(self):
        return np.asarray(self.counts, dtype=float) / self.n_p

    def entropy(self):
        p = self.pmf()
        nz = p[p > 0]
        return float(-(nz * np.log2(nz)).sum())

    def rate_loss(self):
        """``H(counts/n_p) - k/n_p`` in bits per symbol."""
        return self.entropy() - self.k / self.n_p


def _kl(counts, n, p):
    q = counts / n
    nz = q > 0
    return float((q[nz] * (np.log(q[nz]) - np.log(p[nz]))).sum())


def quantize_composition(p, n_p):
    """Integer composition of length ``n_p`` close to ``p`` in KL divergence.

    Largest-remainder rounding followed by single-unit transfers while they
    reduce ``KL(counts/n_p || p)``. Zero-probability symbols get zero counts.
    """
    p = check_pmf(p)
    n_p = int(n_p)
    if n_p < 1:
        raise ValueError("n_p must be >= 1")
    scaled = p * n_p
    counts = np.floor(scaled).astype(np.int64)
    short = n_p - int(counts.sum())
    # Ties go to the lower index so the result is deterministic.
    order = np.lexsort((np.arange(p.size), -(scaled - counts)))
    counts[order[:short]] += 1
    support = np.flatnonzero(p > 0)
    best = _kl(counts, n_p, p)
    while True:
        move = None
        for i in support:
            if counts[i] == 0:
                continue
            for j in support:
                if i == j:
                    continue
                counts[i] -= 1
                counts[j] += 1
                kl = _kl(counts, n_p, p)
                counts[i] += 1
                counts[j] -= 1
                if kl < best - 1e-15:
                    best, move = kl, (i, j)
        if move is None:
            return Composition(tuple(int(c) for c in counts))
        counts[move[0]] -= 1
        counts[move[1]] += 1


def bits_to_int(bits):
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    if bits.size == 0:
        return 0
    if np.any(bits > 1):
        raise ValueError("bits must be 0 or 1")
    pad = (-bits.size) % 8
    packed = np.packbits(np.concatenate([np.zeros(pad, np.uint8), bits]))
    return int.from_bytes(packed.tobytes(), "big")


def int_to_bits(value, k):
    if k == 0:
        return np.zeros(0, dtype=np.uint8)
    nbytes = (k + 7) // 8
    raw = np.frombuffer(int(value).to_bytes(nbytes, "big"), dtype=np.uint8)
    return np.unpackbits(raw)[nbytes * 8 - k:]


def ccdm_encode(bits, comp):
    """Map exactly ``comp.k`` bits to a sequence with composition ``comp``."""
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    if bits.size != comp.k:
        raise ValueError(f"expected {comp.k} bits, got {bits.size}")
    rank = bits_to_int(bits)
    counts = list(comp.counts)
    n = comp.n_p
    total = comp.n_sequences
    out = np.empty(n, dtype=np.int64)
    for t in range(n):
        # Sequences starting with symbol s number total*c_s/n (exact).
        for s, c in enumerate(counts):
            if c == 0:
                continue
            block = total * c // n
            if rank < block:
                out[t] = s + 1
                counts[s] -= 1
                total = block
                break
            rank -= block
        n -= 1
    return out


def ccdm_decode(symbols, comp):
    """Inverse of :func:`ccdm_encode`; raises ``CodewordError`` on invalid input."""
    symbols = np.asarray(symbols).ravel()
    if symbols.size != comp.n_p:
        raise CodewordError(f"expected {comp.n_p} symbols, got {symbols.size}")
    if symbols.size and (symbols.min() < 1 or symbols.max() > comp.M):
        raise CodewordError("symbol index out of range")
    if tuple(np.bincount(symbols - 1, minlength=comp.M)) != comp.counts:
        raise CodewordError("sequence does not have the matcher composition")
    counts = list(comp.counts)
    n = comp.n_p
    total = comp.n_sequences
    rank = 0
    for x in symbols:
        x = int(x) - 1
        for s in range(x):
            if counts[s]:
                rank += total * counts[s] // n
        total = total * counts[x] // n
        counts[x] -= 1
        n -= 1
    if rank >> comp.k:
        raise CodewordError("sequence lies outside the matcher's input range")
    return int_to_bits(rank, comp.k)


def gray_map(index, M):
    """Gray label (MSB first) of symbol ``index`` in ``1..M``; index 1 is all zeros."""
    M = check_order(M)
    index = np.asarray(index)
    if np.any(index < 1) or np.any(index > M):
        raise ValueError(f"symbol index out of range 1..{M}")
    m = M.bit_length() - 1
    g = (index - 1) ^ ((index - 1) >> 1)
    shifts = np.arange(m - 1, -1, -1)
    return ((np.asarray(g)[..., None] >> shifts) & 1).astype(np.uint8)


def gray_demap(bits):
    """Symbol index (1-based) of Gray labels along the last axis."""
    bits = np.asarray(bits, dtype=np.int64)
    if np.any((bits != 0) & (bits != 1)):
        raise ValueError("bits must be 0 or 1")
    m = bits.shape[-1]
    g = (bits << np.arange(m - 1, -1, -1)).sum(-1)
    b = g.copy()
    shift = 1
    while shift < m:
        b ^= b >> shift
        shift <<= 1
    return b + 1


def gray_labels(M):
    """``(M, log2 M)`` table of labels, row ``i - 1`` for symbol ``i``."""
    return gray_map(np.arange(1, check_order(M) + 1), M)


@dataclass(frozen=True)
class FrameLayout:
    """Sizes of one sparse-dense frame: shaped symbols first, then parity symbols."""

    n_p: int
    code_rate: Fraction
    M: int

    def __post_init__(self):
        object.__setattr__(self, "code_rate", Fraction(self.code_rate))
        check_order(self.M)
        if self.n_p < 1 or not 0 < self.code_rate <= 1:
            raise ValueError("need n_p >= 1 and a code rate in (0, 1]")
        n = Fraction(self.n_p) / self.code_rate
        if n.denominator != 1:
            raise ValueError(f"n_p={self.n_p} / R_FEC={self.code_rate} is not an integer")

    @property
    def n(self):
        return int(Fraction(self.n_p) / self.code_rate)

    @property
    def bits_per_symbol(self):
        return self.M.bit_length() - 1

    @property
    def parity_symbols(self):
        return self.n - self.n_p

    @property
    def parity_bits(self):
        return self.parity_symbols * self.bits_per_symbol

    @property
    def block_bits(self):
        return self.n * self.bits_per_symbol

    @classmethod
    def for_block(cls, block_bits, code_rate, M):
        m = check_order(M).bit_length() - 1
        if block_bits % m:
            raise ValueError("block length must be a multiple of log2 M")
        n = block_bits // m
        n_p = Fraction(n) * Fraction(code_rate)
        if n_p.denominator != 1:
            raise ValueError(f"{n} symbols at rate {code_rate} give fractional n_p")
        return cls(int(n_p), code_rate, M)


def assemble_frame(shaped, uniform, alpha=1.0, layout=None):
    """Transmit frame ``alpha * [shaped, uniform]``."""
    shaped = np.asarray(shaped, dtype=float).ravel()
    uniform = np.asarray(uniform, dtype=float).ravel()
    if layout is not None and (shaped.size != layout.n_p
                               or uniform.size != layout.parity_symbols):
        raise ValueError("segment lengths do not match the frame layout")
    return alpha * np.concatenate([shaped, uniform])


class DistributionMatcher:
    """Estimator-style wrapper: ``fit`` a target PMF, then map bits to symbols.

    ``transform`` takes a ``(frames, k)`` bit array and returns
    ``(frames, n_p)`` symbol indices; ``inverse_transform`` undoes it.
    """

    def __init__(self, n_symbols=64800):
        self.n_symbols = n_symbols

    def get_params(self, deep=True):
        return {"n_symbols": self.n_symbols}

    def set_params(self, **params):
        for key, value in params.items():
            if key not in self.get_params():
                raise ValueError(f"invalid parameter {key!r}")
            setattr(self, key, value)
        return self

    def fit(self, pmf):
        self.composition_ = quantize_composition(pmf, self.n_symbols)
        self.k_ = self.composition_.k
        return self

    def _check_fitted(self):
        if not hasattr(self, "composition_"):
            raise RuntimeError("DistributionMatcher is not fitted; call fit first")

    def transform(self, bits):
        self._check_fitted()
        bits = np.atleast_2d(bits)
        return np.stack([ccdm_encode(b, self.composition_) for b in bits])

    def inverse_transform(self, symbols):
        self._check_fitted()
        symbols = np.atleast_2d(symbols)
        return np.stack([ccdm_decode(s, self.composition_) for s in symbols])

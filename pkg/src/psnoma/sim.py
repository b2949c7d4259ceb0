"""Monte-Carlo link simulation of the shaped uplink NOMA chain.

Per frame every user maps random bits through the matcher, Gray labels the
shaped symbols, appends LDPC parity symbols and transmits. The receiver runs
successive interference cancellation from user 1 (weakest) upward, each
stage decoding with interference-aware MAP metrics and cancelling the
re-encoded, re-modulated decision.
"""

import csv
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.stats import beta

from ._validation import CodewordError, check_pmf
from .ccdm import (FrameLayout, ccdm_decode, ccdm_encode, gray_demap, gray_map,
                   quantize_composition)
from .fec import bp_decode, fec_encode, ldpc_code, map_llr

DEFAULT_BLOCK_BITS = 6480
REPORT_FIELDS = ("user", "osnr_db", "frames", "errors", "fer", "ci_lo", "ci_hi", "seed")


@dataclass
class UserLink:
    """Transmit parameters of one user: PMF, received amplitudes and FEC rate."""

    pmf: np.ndarray
    amplitudes: np.ndarray
    code_rate: Fraction
    block_bits: int = DEFAULT_BLOCK_BITS
    code_seed: int = 0

    def __post_init__(self):
        self.pmf = check_pmf(self.pmf)
        self.amplitudes = np.asarray(self.amplitudes, dtype=float)
        if self.amplitudes.shape != self.pmf.shape:
            raise ValueError("amplitudes and pmf must have the same length")
        self.code_rate = Fraction(self.code_rate)
        M = self.pmf.size
        self.layout = FrameLayout.for_block(self.block_bits, self.code_rate, M)
        self.composition = quantize_composition(self.pmf, self.layout.n_p)
        self.code = ldpc_code(self.block_bits, self.code_rate, self.code_seed)

    @classmethod
    def regular(cls, pmf, spacing, code_rate, **kw):
        return cls(pmf, spacing * np.arange(1, len(pmf) + 1), code_rate, **kw)

    @property
    def M(self):
        return self.pmf.size

    @property
    def bits_per_symbol(self):
        return self.layout.bits_per_symbol

    def average_power(self):
        """Mean received intensity of one frame at the design PMF."""
        r = float(self.code_rate)
        return r * float(self.pmf @ self.amplitudes) + (1 - r) * float(self.amplitudes.mean())

    def segment_prior(self):
        """``(n, M)`` symbol prior: shaped target PMF first, uniform parity after."""
        prior = np.full((self.layout.n, self.M), 1.0 / self.M)
        prior[:self.layout.n_p] = self.composition.pmf()
        return prior


@dataclass
class SimConfig:
    """Link-level simulation setup.

    Only the first ``users`` users (in SIC order) are decoded and reported;
    the rest still transmit and interfere.
    """

    links: tuple
    sigma: float
    min_errors: int = 50
    max_frames: int = 100000
    seed: int = 0
    max_iters: int = 50
    genie_sic: bool = False
    gains: tuple = None
    users: int = None

    def __post_init__(self):
        self.links = tuple(self.links)
        if not self.links:
            raise ValueError("need at least one user")
        if self.users is None:
            self.users = len(self.links)
        if not 1 <= self.users <= len(self.links):
            raise ValueError("users must be between 1 and the number of links")
        n = {link.layout.n for link in self.links}
        if len(n) != 1:
            raise ValueError("all users must share the frame length")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.gains is None:
            self.gains = (1.0,) * len(self.links)
        for h in self.gains:
            if not h > 0 or abs(h * (1.0 / h) - 1.0) > 1e-12:
                raise ValueError("channel gain times its inverse must be 1")

    @property
    def n_users(self):
        return len(self.links)

    @property
    def osnr_db(self):
        if self.sigma == 0:
            return math.inf
        return 10 * math.log10(self.links[0].average_power() / self.sigma)


@dataclass
class TxFrame:
    bits: np.ndarray
    symbols: np.ndarray
    amplitudes: np.ndarray


def build_frame(link, rng):
    """Draw info bits and produce the transmitted symbol indices of one frame."""
    u = rng.integers(0, 2, link.composition.k, dtype=np.uint8)
    s_p = ccdm_encode(u, link.composition)
    z_p = gray_map(s_p, link.M).ravel()
    symbols = np.concatenate([s_p, _parity_symbols(z_p, link)])
    return TxFrame(u, symbols, link.amplitudes[symbols - 1])


def _parity_symbols(z_p, link):
    z_u = fec_encode(z_p, link.code)
    return gray_demap(z_u.reshape(-1, link.bits_per_symbol))


def transmit(frames, sigma, rng, gains=None):
    """Photodiode samples ``y = sum_j h_j alpha_j x_j + w``.

    ``frames`` are the received-domain amplitudes (already ``h_j alpha_j = 1``);
    ``gains`` only serve to check that pre-compensation is exact.
    """
    frames = np.atleast_2d(np.asarray(frames, dtype=float))
    if gains is not None:
        for h in gains:
            if abs(h * (1.0 / h) - 1.0) > 1e-12:
                raise ValueError("transmit weight does not invert the channel gain")
    y = frames.sum(0)
    if sigma > 0:
        y = y + sigma * rng.standard_normal(y.size)
    return y


def sic_cancel(y, cancelled):
    """Subtract already-decoded users' re-modulated frames.

    The frames are summed the same way :func:`transmit` sums them, so a
    noiseless, correctly decoded superposition cancels to exactly zero.
    """
    y = np.asarray(y, dtype=float)
    if not len(cancelled):
        return y
    return y - np.atleast_2d(np.asarray(cancelled, dtype=float)).sum(0)


def interference_terms(links):
    """Sum amplitudes and per-sample log-weights of the not-yet-cancelled users."""
    if not links:
        return np.zeros(1), None
    combos = list(itertools.product(*[range(link.M) for link in links]))
    values = np.array([sum(l.amplitudes[i] for l, i in zip(links, c)) for c in combos])
    logw = np.zeros((links[0].layout.n, len(combos)))
    for pos, link in enumerate(links):
        with np.errstate(divide="ignore"):
            lp = np.log(link.segment_prior())
        idx = np.array([c[pos] for c in combos])
        logw += lp[:, idx]
    return values, logw


@dataclass
class RxResult:
    bits: np.ndarray
    ok: bool
    remodulated: np.ndarray
    converged: bool


def receive_user(y_hat, link, interferers, sigma, tx_bits=None, max_iters=50):
    """Decode one user from its post-SIC samples.

    ``interferers`` are the links of users not cancelled yet. ``ok`` compares
    the dematched bits with ``tx_bits`` when those are given.
    """
    values, logw = interference_terms(interferers)
    eff_sigma = sigma if sigma > 0 else 1e-6 * float(np.min(np.diff(
        np.concatenate([[0.0], np.sort(link.amplitudes)]))) or 1.0)
    llr = map_llr(y_hat, link.amplitudes, link.segment_prior(), eff_sigma, values, logw)
    res = bp_decode(llr.reshape(1, -1), link.code, max_iters)
    z_p = res.bits[0]
    m = link.bits_per_symbol
    s_p = gray_demap(z_p.reshape(-1, m))
    symbols = np.concatenate([s_p, _parity_symbols(z_p, link)])
    try:
        bits = ccdm_decode(s_p, link.composition)
    except CodewordError:
        bits = None
    ok = bits is not None and (tx_bits is None or np.array_equal(bits, tx_bits))
    return RxResult(bits, ok, link.amplitudes[symbols - 1], bool(res.converged[0]))


def frame_rng(seed, frame):
    """Independent generator per frame, so results do not depend on run order."""
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(frame),)))


def simulate_frame(cfg, frame):
    """One transmitted frame through the full SIC chain.

    Returns per-user success flags and the residual after cancelling every
    decoded user (noise and undecoded users included).
    """
    rng = frame_rng(cfg.seed, frame)
    tx = [build_frame(link, rng) for link in cfg.links]
    y = transmit([t.amplitudes for t in tx], cfg.sigma, rng, cfg.gains)
    cancelled = []
    ok = []
    for j, link in enumerate(cfg.links[:cfg.users]):
        y_hat = sic_cancel(y, cancelled)
        rx = receive_user(y_hat, link, cfg.links[j + 1:], cfg.sigma, tx[j].bits,
                          cfg.max_iters)
        ok.append(rx.ok)
        cancelled.append(tx[j].amplitudes if cfg.genie_sic else rx.remodulated)
    return ok, sic_cancel(y, cancelled)


def clopper_pearson(errors, frames, level=0.95):
    a = 1 - level
    lo = 0.0 if errors == 0 else float(beta.ppf(a / 2, errors, frames - errors + 1))
    hi = 1.0 if errors == frames else float(beta.ppf(1 - a / 2, errors + 1, frames - errors))
    return lo, hi


@dataclass
class FerReport:
    user: int
    osnr_db: float
    frames: int
    errors: int
    seed: int
    residual_max: float = field(default=0.0, compare=False)

    @property
    def fer(self):
        return self.errors / self.frames if self.frames else math.nan

    @property
    def ci(self):
        return clopper_pearson(self.errors, self.frames)

    def row(self):
        lo, hi = self.ci
        return {"user": self.user, "osnr_db": self.osnr_db, "frames": self.frames,
                "errors": self.errors, "fer": self.fer, "ci_lo": lo, "ci_hi": hi,
                "seed": self.seed}


def fer_monte_carlo(cfg, progress=None):
    """Frame error rates of every user under the stopping rule of ``cfg``.

    Frames are simulated until every user has ``min_errors`` errors or
    ``max_frames`` frames were sent.
    """
    errors = np.zeros(cfg.users, dtype=np.int64)
    residual = 0.0
    frames = 0
    while frames < cfg.max_frames and errors.min() < cfg.min_errors:
        ok, res = simulate_frame(cfg, frames)
        errors += ~np.asarray(ok)
        residual = max(residual, float(np.abs(res).max()) if cfg.sigma == 0 else residual)
        frames += 1
        if progress is not None:
            progress(frames, errors)
    return [FerReport(j + 1, cfg.osnr_db, frames, int(errors[j]), cfg.seed, residual)
            for j in range(cfg.users)]


def write_reports(path, reports, header=None, append=False):
    """Write FER rows as CSV, optionally preceded by a ``# ...`` manifest line."""
    mode = "a" if append else "w"
    with open(path, mode, newline="") as fh:
        if header and not append:
            fh.write(f"# {header}\n")
        writer = csv.DictWriter(fh, fieldnames=REPORT_FIELDS)
        if not append:
            writer.writeheader()
        for r in reports:
            writer.writerow(r.row())

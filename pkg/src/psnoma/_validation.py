"""Input validation helpers shared by the estimators and free functions."""

import numpy as np

PMF_ATOL = 1e-12


class InfeasibleError(ValueError):
    """Raised when a power plan or a (spacing, code rate) pair admits no solution."""


class ConvergenceError(RuntimeError):
    """Raised when an iterative solver exceeds its iteration budget."""


class CodewordError(ValueError):
    """Raised when a symbol sequence is not a valid matcher codeword."""


def check_pmf(p, name="pmf", atol=PMF_ATOL):
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size < 1:
        raise ValueError(f"{name} must be a non-empty 1-D array, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValueError(f"{name} has non-finite entries")
    if np.any(p < 0):
        raise ValueError(f"{name} has negative entries")
    total = p.sum()
    if abs(total - 1.0) > max(atol, 1e-12):
        raise ValueError(f"{name} sums to {total!r}, expected 1")
    return p


def check_positive(value, name):
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be finite and > 0, got {value!r}")
    return value


def check_order(M):
    M = int(M)
    if M < 2 or M & (M - 1):
        raise ValueError(f"constellation order must be a power of two >= 2, got {M}")
    return M


def check_code_rate(rate):
    rate = float(rate)
    if not 0 < rate <= 1:
        raise ValueError(f"code rate must lie in (0, 1], got {rate!r}")
    return rate


def normalize_pmf(p):
    """Clip tiny negatives from round-off and renormalise."""
    p = np.clip(np.asarray(p, dtype=float), 0.0, None)
    return p / p.sum()

"""Lambertian line-of-sight gains, uplink power plan and OSNR bookkeeping."""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import InfeasibleError, check_order, check_positive

# OSNR in dB is 10*log10(P_r1 / sigma) (optical power ratio).
OSNR_DB_FACTOR = 10.0
GAIN_TIE_TOL = 1e-12


def lambert_mode(half_power_angle):
    """Lambert mode number ``m = -ln 2 / ln cos(half_power_angle)`` (radians)."""
    phi = float(half_power_angle)
    c = math.cos(phi)
    if not 0 < phi < math.pi / 2 or c <= 0 or c >= 1:
        raise ValueError(f"half-power angle must lie in (0, pi/2), got {phi!r}")
    return -math.log(2.0) / math.log(c)


@dataclass(frozen=True)
class ChannelGeometry:
    """LED-to-photodiode geometry; all angles in radians."""

    distance: float
    detector_area: float
    fov: float
    arrival_angle: float
    departure_angle: float
    half_power_angle: float
    filter_gain: float = 1.0
    concentrator_gain: float = 1.0

    def __post_init__(self):
        check_positive(self.distance, "distance")
        check_positive(self.detector_area, "detector_area")
        if not 0 < self.fov <= math.pi / 2:
            raise ValueError(f"fov must lie in (0, pi/2], got {self.fov!r}")
        if not 0 < self.half_power_angle < math.pi / 2:
            raise ValueError("half_power_angle must lie in (0, pi/2)")
        if self.filter_gain < 0 or self.concentrator_gain < 0:
            raise ValueError("filter and concentrator gains must be >= 0")
        if self.arrival_angle < 0:
            raise ValueError("arrival_angle must be >= 0")

    @classmethod
    def from_degrees(cls, distance, detector_area, fov, arrival_angle,
                     departure_angle, half_power_angle, filter_gain=1.0,
                     concentrator_gain=1.0):
        r = math.radians
        return cls(distance, detector_area, r(fov), r(arrival_angle),
                   r(departure_angle), r(half_power_angle), filter_gain,
                   concentrator_gain)


def lambertian_gain(geom):
    """DC gain of a Lambertian LOS link; zero outside the receiver field of view."""
    if geom.arrival_angle > geom.fov:
        return 0.0
    m = lambert_mode(geom.half_power_angle)
    return ((m + 1) * geom.detector_area / (2 * math.pi * geom.distance ** 2)
            * math.cos(geom.departure_angle) ** m * geom.filter_gain
            * geom.concentrator_gain * math.cos(geom.arrival_angle))


def power_backoff(p_max, alpha_1, p_rn, n_users):
    """Back-off (dB) that keeps user 1 exactly at ``p_max``."""
    n_users = int(n_users)
    if n_users < 2:
        raise ValueError("power back-off needs at least two users")
    ratio = p_max / (alpha_1 * p_rn)
    if ratio < 1:
        raise InfeasibleError(
            f"P_max={p_max!r} is below alpha_1*P_rN={alpha_1 * p_rn!r}")
    return 10 * math.log10(ratio) / (n_users - 1)


def received_powers(p_rn, backoff_db, n_users):
    """Target received powers ``P_rj = P_rN 10^((N-j)c/10)`` for j = 1..N."""
    if backoff_db < 0:
        raise ValueError("back-off must be >= 0 dB")
    j = np.arange(1, int(n_users) + 1)
    powers = p_rn * 10.0 ** ((n_users - j) * backoff_db / 10.0)
    powers[-1] = p_rn
    return powers


def osnr_to_power(osnr_db, sigma):
    check_positive(sigma, "sigma")
    return sigma * 10.0 ** (np.asarray(osnr_db, dtype=float) / OSNR_DB_FACTOR)


def power_to_osnr(power, sigma):
    check_positive(sigma, "sigma")
    return OSNR_DB_FACTOR * np.log10(np.asarray(power, dtype=float) / sigma)


@dataclass(frozen=True)
class NomaScenario:
    """Ordered uplink users (weakest channel first) with their power plan.

    ``received`` holds the target received powers P_rj; the transmit weights
    are ``alpha_j = 1 / h_j`` so every user arrives with unit net gain.
    """

    gains: tuple
    M: int
    sigma: float
    received: tuple
    p_max: float
    backoff_db: float = 0.0
    user_ids: tuple = field(default=None)

    def __post_init__(self):
        gains = tuple(float(h) for h in self.gains)
        received = tuple(float(p) for p in self.received)
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "received", received)
        object.__setattr__(self, "M", check_order(self.M))
        check_positive(self.sigma, "sigma")
        if len(gains) < 1 or len(gains) != len(received):
            raise ValueError("gains and received powers must have equal, nonzero length")
        if any(h <= 0 for h in gains):
            raise ValueError("channel gains must be > 0 (user outside the field of view?)")
        if any(b < a - GAIN_TIE_TOL for a, b in zip(gains, gains[1:])):
            raise ValueError("users must be ordered by nondecreasing channel gain")
        for j, (h, p) in enumerate(zip(gains, received)):
            check_positive(p, f"received power of user {j + 1}")
            if p / h > self.p_max * (1 + 1e-9):
                raise InfeasibleError(
                    f"user {j + 1} needs {p / h!r} > P_max={self.p_max!r}")
        if self.user_ids is None:
            object.__setattr__(self, "user_ids", tuple(range(len(gains))))

    @property
    def n_users(self):
        return len(self.gains)

    @property
    def alphas(self):
        return tuple(1.0 / h for h in self.gains)

    @property
    def osnr_db(self):
        """Received OSNR of user 1, the x-axis of every rate and FER curve."""
        return float(power_to_osnr(self.received[0], self.sigma))

    @classmethod
    def from_gains(cls, gains, M, sigma, p_max, p_rn):
        """Sort users by gain (ties by index) and derive back-off and received powers."""
        gains = np.asarray(gains, dtype=float)
        order = sorted(range(len(gains)),
                       key=lambda j: (round(gains[j] / GAIN_TIE_TOL), j))
        gains = gains[order]
        n = len(gains)
        if n == 1:
            c = 0.0
            received = [p_rn]
        else:
            c = power_backoff(p_max, 1.0 / gains[0], p_rn, n)
            received = received_powers(p_rn, c, n)
        return cls(tuple(gains), M, sigma, tuple(received), p_max, c, tuple(order))

    @classmethod
    def from_osnr(cls, osnr_db, n_users, M, backoff_db, sigma=1.0):
        """Scenario in OSNR space: unit gains, P_r1 = sigma*10^(osnr/10)."""
        p_r1 = float(osnr_to_power(osnr_db, sigma))
        p_rn = p_r1 / 10.0 ** ((n_users - 1) * backoff_db / 10.0)
        received = received_powers(p_rn, backoff_db, n_users)
        received[0] = p_r1
        return cls((1.0,) * n_users, M, sigma, tuple(received), p_r1, backoff_db)

    def with_sigma(self, sigma):
        return NomaScenario(self.gains, self.M, sigma, self.received, self.p_max,
                            self.backoff_db, self.user_ids)

    def scaled(self, factor):
        """Scale every power and sigma jointly; rates are invariant."""
        return NomaScenario(self.gains, self.M, self.sigma * factor,
                            tuple(p * factor for p in self.received),
                            self.p_max * factor, self.backoff_db, self.user_ids)

    def to_dict(self):
        return {"gains": list(self.gains), "M": self.M, "sigma": self.sigma,
                "received": list(self.received), "P_max": self.p_max,
                "backoff_db": self.backoff_db}


def scenario_from_dict(data):
    """Build a scenario from the JSON scenario schema.

    Users carry either ``h`` or a ``geometry`` block (angles in degrees).
    ``P_rN`` and ``P_max`` are in watts.
    """
    gains = []
    for k, user in enumerate(data["users"]):
        if "h" in user:
            gains.append(float(user["h"]))
        elif "geometry" in user:
            gains.append(lambertian_gain(ChannelGeometry.from_degrees(**user["geometry"])))
        else:
            raise ValueError(f"users[{k}] needs either 'h' or 'geometry'")
    return NomaScenario.from_gains(gains, data["M"], data["sigma"], data["P_max"],
                                   data["P_rN"])


def load_scenario(path):
    with open(path) as fh:
        return scenario_from_dict(json.load(fh))

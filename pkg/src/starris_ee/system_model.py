"""Physical-layer quantities and closed-form rate / power / energy-efficiency evaluations.

All computation is done in watts; dBm only appears at configuration
boundaries (see dbm_to_watt). Users are labeled by the surface side they
sit on: "t" (transmission side, behind the surface) or "r" (reflection
side, same side as the base station).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .channel import ChannelSet

TRANSMISSION = "t"
REFLECTION = "r"
SIDES = (TRANSMISSION, REFLECTION)

LN2 = float(np.log(2.0))


def dbm_to_watt(x_dbm):
    """Convert a power level in dBm to watts: 10^((x - 30) / 10)."""
    x_dbm = float(x_dbm)
    if not np.isfinite(x_dbm):
        raise ValueError(f"dBm value must be finite, got {x_dbm}")
    return 10.0 ** ((x_dbm - 30.0) / 10.0)


def watt_to_dbm(x_watt):
    """Inverse of dbm_to_watt, for display purposes."""
    if x_watt <= 0:
        raise ValueError("power must be positive to express in dBm")
    return 10.0 * np.log10(x_watt) + 30.0


@dataclass(frozen=True)
class SystemDims:
    """Problem dimensions: K users, M base-station antennas, N surface elements."""

    num_users: int
    num_bs_antennas: int
    num_ris_elements: int

    def __post_init__(self):
        for name in ("num_users", "num_bs_antennas", "num_ris_elements"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")

    @property
    def K(self):
        return self.num_users

    @property
    def M(self):
        return self.num_bs_antennas

    @property
    def N(self):
        return self.num_ris_elements


@dataclass(frozen=True)
class PowerBreakdown:
    """Documentation-only decomposition of the static power constant.

    None of these enter any computation; the optimization sees only the
    aggregate static term in PowerModel. Kept so configurations can record
    where a static-power figure came from.
    """

    amplifier_inefficiency: float | None = None
    user_hardware_watts: float | None = None
    bs_hardware_watts: float | None = None
    ris_hardware_watts: float | None = None


@dataclass(frozen=True)
class PowerModel:
    """Power budget, static power, noise power and the per-user QoS rate floor.

    qos_rate_threshold is a spectral-efficiency floor in bit/s/Hz; the
    corresponding SINR threshold is 2^R - 1.
    """

    p_max_watts: float
    static_power_watts: float
    noise_power_watts: float
    qos_rate_threshold: float
    breakdown: PowerBreakdown | None = None

    def __post_init__(self):
        if self.p_max_watts <= 0:
            raise ValueError("p_max_watts must be > 0")
        if self.static_power_watts <= 0:
            raise ValueError("static_power_watts must be > 0")
        if self.noise_power_watts <= 0:
            raise ValueError("noise_power_watts must be > 0")
        if self.qos_rate_threshold < 0:
            raise ValueError("qos_rate_threshold must be >= 0")

    @property
    def sinr_threshold(self):
        """SINR level equivalent to the QoS rate floor: 2^R - 1."""
        return 2.0 ** self.qos_rate_threshold - 1.0


class UserSideLabels:
    """Per-user side assignment, one of "t" / "r" for every user."""

    def __init__(self, sides):
        sides = list(sides)
        for s in sides:
            if s not in SIDES:
                raise ValueError(f"side label must be one of {SIDES}, got {s!r}")
        self.sides = sides

    def __len__(self):
        return len(self.sides)

    def __getitem__(self, k):
        return self.sides[k]

    def __iter__(self):
        return iter(self.sides)

    def __eq__(self, other):
        return isinstance(other, UserSideLabels) and self.sides == other.sides

    def __repr__(self):
        return f"UserSideLabels({self.sides!r})"


_BETA_SUM_TOL = 1e-9


@dataclass
class StarCoefficients:
    """Energy-splitting surface state: per-element amplitude splits and phases.

    beta_t[n] + beta_r[n] = 1 for every element (the ES protocol), each beta
    in [0, 1], phases in [0, 2*pi). The diagonal coefficient matrix for mode
    c has entries sqrt(beta_c[n]) * exp(1j * theta_c[n]).
    """

    beta_t: np.ndarray
    beta_r: np.ndarray
    theta_t: np.ndarray
    theta_r: np.ndarray

    def __post_init__(self):
        self.beta_t = np.asarray(self.beta_t, dtype=float)
        self.beta_r = np.asarray(self.beta_r, dtype=float)
        self.theta_t = np.asarray(self.theta_t, dtype=float)
        self.theta_r = np.asarray(self.theta_r, dtype=float)
        n = self.beta_t.shape
        if not (self.beta_r.shape == self.theta_t.shape == self.theta_r.shape == n):
            raise ValueError("all coefficient arrays must share one length")
        if self.beta_t.ndim != 1:
            raise ValueError("coefficient arrays must be one-dimensional")
        for beta in (self.beta_t, self.beta_r):
            if np.any(beta < -1e-12) or np.any(beta > 1.0 + 1e-12):
                raise ValueError("amplitude splits must lie in [0, 1]")
        if np.max(np.abs(self.beta_t + self.beta_r - 1.0)) > _BETA_SUM_TOL:
            raise ValueError("beta_t[n] + beta_r[n] must equal 1 per element")
        for theta in (self.theta_t, self.theta_r):
            if np.any(theta < 0.0) or np.any(theta >= 2.0 * np.pi):
                raise ValueError("phases must lie in [0, 2*pi)")

    @property
    def num_elements(self):
        return self.beta_t.shape[0]

    def beta(self, side):
        return self.beta_t if side == TRANSMISSION else self.beta_r

    def theta(self, side):
        return self.theta_t if side == TRANSMISSION else self.theta_r

    def phi_vector(self, side):
        """Per-element complex coefficients sqrt(beta_c) * exp(1j theta_c) for one mode."""
        if side not in SIDES:
            raise ValueError(f"unknown side {side!r}")
        return np.sqrt(np.clip(self.beta(side), 0.0, 1.0)) * np.exp(1j * self.theta(side))

    def phi_matrix(self, side):
        """Diagonal coefficient matrix for one mode."""
        return np.diag(self.phi_vector(side))

    @classmethod
    def uniform_split(cls, n, theta_t=None, theta_r=None):
        """Even 50/50 split with given (default zero) phases."""
        zeros = np.zeros(n)
        return cls(
            beta_t=np.full(n, 0.5),
            beta_r=np.full(n, 0.5),
            theta_t=zeros if theta_t is None else np.asarray(theta_t, float),
            theta_r=zeros.copy() if theta_r is None else np.asarray(theta_r, float),
        )


@dataclass
class BeamformerSet:
    """Per-user transmit beamforming vectors, stacked as a K x M complex array."""

    v: np.ndarray

    def __post_init__(self):
        self.v = np.asarray(self.v, dtype=complex)
        if self.v.ndim != 2:
            raise ValueError("beamformers must form a K x M array")

    @property
    def num_users(self):
        return self.v.shape[0]

    def vector(self, k):
        return self.v[k]

    def total_power(self):
        return float(np.sum(np.abs(self.v) ** 2))

    def user_tx_power(self, k):
        return float(np.sum(np.abs(self.v[k]) ** 2))

    def satisfies_budget(self, p_max_watts, tol=1e-6):
        return self.total_power() <= p_max_watts + tol


@dataclass
class SystemInstance:
    """Immutable problem input: dimensions, power constants, channels and labels.

    H is the N x M base-station-to-surface matrix, g[k] the 1 x N (stored as
    length-N) surface-to-user row vectors.
    """

    dims: SystemDims
    power: PowerModel
    H: np.ndarray
    g: list = field(default_factory=list)
    side_labels: UserSideLabels | None = None

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=complex)
        self.g = [np.asarray(gk, dtype=complex).reshape(-1) for gk in self.g]
        if self.H.shape != (self.dims.N, self.dims.M):
            raise ValueError(
                f"H must be {self.dims.N}x{self.dims.M}, got {self.H.shape}"
            )
        if len(self.g) != self.dims.K:
            raise ValueError("need one g vector per user")
        for gk in self.g:
            if gk.shape != (self.dims.N,):
                raise ValueError("each g vector must have length N")
        if self.side_labels is None or len(self.side_labels) != self.dims.K:
            raise ValueError("need one side label per user")
        if not np.all(np.isfinite(self.H.view(float))):
            raise ValueError("H contains non-finite entries")

    @classmethod
    def from_channels(cls, dims, power, channels: "ChannelSet"):
        return cls(dims=dims, power=power, H=channels.H, g=channels.g,
                   side_labels=channels.side_labels)


def effective_channel(g_k, phi: StarCoefficients, side, H):
    """Composite BS -> surface -> user channel g_k diag(phi_c) H for the user's side.

    Returns a length-M complex row vector.
    """
    g_k = np.asarray(g_k, dtype=complex).reshape(-1)
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2 or H.shape[0] != g_k.shape[0]:
        raise ValueError(f"dimension mismatch: g has length {g_k.shape[0]}, H is {H.shape}")
    if phi.num_elements != g_k.shape[0]:
        raise ValueError("coefficient count does not match element count")
    return (g_k * phi.phi_vector(side)) @ H


def user_rate(instance: SystemInstance, phi: StarCoefficients,
              beamformers: BeamformerSet, k):
    """Spectral efficiency of user k in bit/s/Hz.

    log2(1 + |h_k v_k|^2 / (sum_{j != k} |h_k v_j|^2 + noise)).
    """
    h_k = effective_channel(instance.g[k], phi, instance.side_labels[k], instance.H)
    gains = np.abs(beamformers.v @ h_k) ** 2  # |h_k v_j|^2 for every j
    signal = gains[k]
    interference = float(np.sum(gains)) - float(signal)
    sigma2 = instance.power.noise_power_watts
    return float(np.log2(1.0 + signal / (interference + sigma2)))


def user_sinr(instance, phi, beamformers, k):
    """Signal-to-interference-plus-noise ratio of user k (linear)."""
    h_k = effective_channel(instance.g[k], phi, instance.side_labels[k], instance.H)
    gains = np.abs(beamformers.v @ h_k) ** 2
    signal = gains[k]
    interference = float(np.sum(gains)) - float(signal)
    return float(signal / (interference + instance.power.noise_power_watts))


def user_power(v_k, static_power_watts):
    """Total power attributed to one user: ||v_k||^2 plus the static constant."""
    v_k = np.asarray(v_k, dtype=complex)
    return float(np.sum(np.abs(v_k) ** 2)) + float(static_power_watts)


def user_ee(instance, phi, beamformers, k):
    """Energy efficiency of user k: rate over total attributed power (bit/s/Hz/W)."""
    rate = user_rate(instance, phi, beamformers, k)
    power = user_power(beamformers.v[k], instance.power.static_power_watts)
    return rate / power


def min_user_ee(instance, phi, beamformers):
    """Worst user's energy efficiency and its index (lowest index on ties)."""
    values = [user_ee(instance, phi, beamformers, k) for k in range(instance.dims.K)]
    k_min = int(np.argmin(values))  # argmin returns the first minimum
    return k_min, values[k_min]


def all_user_rates(instance, phi, beamformers):
    return [user_rate(instance, phi, beamformers, k) for k in range(instance.dims.K)]


def all_user_powers(instance, beamformers):
    P = instance.power.static_power_watts
    return [user_power(beamformers.v[k], P) for k in range(instance.dims.K)]


def qos_satisfied(instance, phi, beamformers, tol=1e-7):
    """Whether every user's rate meets the QoS floor, within tol."""
    floor = instance.power.qos_rate_threshold
    return all(r >= floor - tol for r in all_user_rates(instance, phi, beamformers))

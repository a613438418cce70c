"""Independent brute-force reference search for tiny instances.

The oracle enumerates quantized surface configurations (per-element
amplitude splits and per-mode phases) and per-user power vectors, and
evaluates the worst-user energy efficiency with its own arithmetic
(closed-form rate and power expressions written here, not calls into
system_model), skipping points that violate the QoS floor or the power
budget.

Beamformer search space: matched-filter directions per user (for one
transmit antenna this is the exact search space; for more antennas the
result is a lower bound on the true optimum). For a single antenna the
enumeration additionally exploits an exact dominance argument: each
user's energy efficiency is nondecreasing in its own channel gain with
everything else fixed, so surface configurations whose gain vectors are
componentwise dominated can never win and are pruned before the power
scan. Ties are broken toward the lexicographically smallest evaluated
grid index, which makes the search deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .system_model import (
    REFLECTION,
    TRANSMISSION,
    BeamformerSet,
    StarCoefficients,
    SystemInstance,
)

GRID_POINT_GUARD = 10 ** 8


@dataclass(frozen=True)
class GridSpec:
    """Quantization of the search space.

    phase_points: points per full turn for each per-element phase.
    beta_step: spacing of the transmission-split grid over [0, 1]; 1/step
        must be an integer so both endpoints are on the grid.
    power_points: per-user power grid size over [0, p_max].
    beam_directions: "matched" scans matched-filter directions only.
    """

    phase_points: int = 8
    beta_step: float = 0.25
    power_points: int = 21
    beam_directions: str = "matched"

    def __post_init__(self):
        if self.phase_points < 2 or self.power_points < 2:
            raise ValueError("all grid sizes must be at least 2")
        steps = 1.0 / self.beta_step
        if self.beta_step <= 0 or self.beta_step > 1 or abs(steps - round(steps)) > 1e-9:
            raise ValueError("beta_step must evenly divide [0, 1]")
        if self.beam_directions != "matched":
            raise ValueError("only matched beam directions are supported")

    def beta_grid(self):
        n = int(round(1.0 / self.beta_step)) + 1
        return np.linspace(0.0, 1.0, n)

    def phase_grid(self):
        return 2.0 * np.pi * np.arange(self.phase_points) / self.phase_points


@dataclass
class OracleResult:
    feasible: bool
    best_min_ee: float
    beta_t: np.ndarray | None = None
    theta_t: np.ndarray | None = None
    theta_r: np.ndarray | None = None
    powers: np.ndarray | None = None
    directions: np.ndarray | None = None  # unit beam directions, one row per user
    config_index: tuple | None = None
    n_candidates: int = 0

    def star_coefficients(self):
        if not self.feasible:
            raise ValueError("infeasible result carries no configuration")
        return StarCoefficients(
            beta_t=self.beta_t, beta_r=1.0 - self.beta_t,
            theta_t=self.theta_t, theta_r=self.theta_r,
        )

    def beamformer_set(self):
        if not self.feasible:
            raise ValueError("infeasible result carries no configuration")
        v = self.directions * np.sqrt(self.powers)[:, None]
        return BeamformerSet(v=v)


def _joint_grid(values, n):
    """All length-n tuples over `values`, lexicographic, as an (m^n, n) array."""
    grids = np.meshgrid(*([values] * n), indexing="ij")
    return np.stack([g.reshape(-1) for g in grids], axis=1)


def _pareto_keep(points):
    """Indices of componentwise non-dominated rows (earliest kept among equals)."""
    n, d = points.shape
    if d == 1:
        return np.array([int(np.argmax(points[:, 0]))])
    keep = np.ones(n, dtype=bool)
    for i in range(n):
        if not keep[i]:
            continue
        geq = np.all(points >= points[i], axis=1)
        eq = np.all(points == points[i], axis=1)
        dominators = geq & ~eq
        dominators[i] = False
        if np.any(dominators):
            keep[i] = False
            continue
        duplicates = np.nonzero(eq)[0]
        if duplicates[0] != i:
            keep[i] = False
    return np.nonzero(keep)[0]


def _power_tuples(grid: GridSpec, num_users, p_max):
    axis = np.linspace(0.0, p_max, grid.power_points)
    tuples = _joint_grid(axis, num_users)
    within_budget = np.sum(tuples, axis=1) <= p_max + 1e-12
    return tuples, within_budget


def _min_ee_scalar_gains(gains, tuples, budget_mask, sigma2, static_p, qos_rate):
    """Best worst-user EE over power tuples for fixed per-user scalar gains.

    Returns (value, first tuple index) or (nan, -1) when nothing is feasible.
    """
    K = gains.shape[0]
    total = np.sum(tuples, axis=1)
    min_ee = np.full(tuples.shape[0], np.inf)
    feasible = budget_mask.copy()
    for k in range(K):
        p_k = tuples[:, k]
        interference = gains[k] * (total - p_k)
        sinr = gains[k] * p_k / (interference + sigma2)
        rate = np.log2(1.0 + sinr)
        feasible &= rate >= qos_rate - 1e-12
        min_ee = np.minimum(min_ee, rate / (p_k + static_p))
    min_ee = np.where(feasible, min_ee, -np.inf)
    idx = int(np.argmax(min_ee))
    if not feasible[idx]:
        return float("nan"), -1
    return float(min_ee[idx]), idx


def _min_ee_cross_gains(cross, tuples, budget_mask, sigma2, static_p, qos_rate):
    """Same as above with a full K x K cross-gain matrix (matched directions)."""
    K = cross.shape[0]
    min_ee = np.full(tuples.shape[0], np.inf)
    feasible = budget_mask.copy()
    for k in range(K):
        interference = tuples @ cross[k] - tuples[:, k] * cross[k, k]
        sinr = cross[k, k] * tuples[:, k] / (interference + sigma2)
        rate = np.log2(1.0 + sinr)
        feasible &= rate >= qos_rate - 1e-12
        min_ee = np.minimum(min_ee, rate / (tuples[:, k] + static_p))
    min_ee = np.where(feasible, min_ee, -np.inf)
    idx = int(np.argmax(min_ee))
    if not feasible[idx]:
        return float("nan"), -1
    return float(min_ee[idx]), idx


def _check_guard(grid: GridSpec, instance: SystemInstance):
    n = instance.dims.N
    k = instance.dims.K
    n_beta = len(grid.beta_grid())
    n_phase = grid.phase_points
    n_power = grid.power_points ** k
    if instance.dims.M == 1:
        channel_configs = (n_beta ** n) * (n_phase ** n)
        heaviest = max(channel_configs, n_power)
    else:
        heaviest = (n_beta ** n) * (n_phase ** (2 * n)) * n_power
    if heaviest > GRID_POINT_GUARD:
        raise ValueError(
            f"grid would enumerate ~{heaviest:.3g} points, above the "
            f"{GRID_POINT_GUARD:.0e} guard"
        )


def oracle_grid_search(instance: SystemInstance, grid: GridSpec):
    """Exhaustive quantized search for the max-min energy efficiency.

    Returns the best feasible configuration found on the grid, or an
    infeasible result when no grid point satisfies QoS and budget.
    """
    _check_guard(grid, instance)
    if instance.dims.M == 1:
        return _search_single_antenna(instance, grid)
    return _search_matched(instance, grid)


def _search_single_antenna(instance, grid):
    K, N = instance.dims.K, instance.dims.N
    pm = instance.power
    beta_axis = grid.beta_grid()
    theta_axis = grid.phase_grid()
    beta_cfgs = _joint_grid(beta_axis, N)          # (n_b^N, N)
    theta_cfgs = _joint_grid(theta_axis, N)        # (n_p^N, N)
    phases = np.exp(1j * theta_cfgs)               # (n_p^N, N)

    users_by_side = {
        TRANSMISSION: [k for k in range(K) if instance.side_labels[k] == TRANSMISSION],
        REFLECTION: [k for k in range(K) if instance.side_labels[k] == REFLECTION],
    }
    # cascade vector per user: entries g_k[n] * H[n, 0]
    cascades = np.array([instance.g[k] * instance.H[:, 0] for k in range(K)])

    tuples, budget_mask = _power_tuples(grid, K, pm.p_max_watts)

    best_value = -np.inf
    best = None
    n_candidates = 0
    for b_idx, beta_t in enumerate(beta_cfgs):
        amp = {TRANSMISSION: np.sqrt(beta_t), REFLECTION: np.sqrt(1.0 - beta_t)}
        mode_sets = {}
        for side in (TRANSMISSION, REFLECTION):
            users = users_by_side[side]
            if not users:
                mode_sets[side] = [(0, None)]
                continue
            coeffs = phases * amp[side][None, :]
            table = np.abs(coeffs @ cascades[users].T) ** 2  # (n_cfg, d)
            kept = _pareto_keep(table)
            mode_sets[side] = [(int(i), table[i]) for i in np.sort(kept)]
        for t_idx, t_gains in mode_sets[TRANSMISSION]:
            for r_idx, r_gains in mode_sets[REFLECTION]:
                gains = np.empty(K)
                if t_gains is not None:
                    gains[users_by_side[TRANSMISSION]] = t_gains
                if r_gains is not None:
                    gains[users_by_side[REFLECTION]] = r_gains
                n_candidates += 1
                value, p_idx = _min_ee_scalar_gains(
                    gains, tuples, budget_mask, pm.noise_power_watts,
                    pm.static_power_watts, pm.qos_rate_threshold)
                if p_idx >= 0 and value > best_value:
                    best_value = value
                    best = (b_idx, t_idx, r_idx, p_idx)
    if best is None:
        return OracleResult(feasible=False, best_min_ee=float("nan"),
                            n_candidates=n_candidates)
    b_idx, t_idx, r_idx, p_idx = best
    return OracleResult(
        feasible=True, best_min_ee=best_value,
        beta_t=beta_cfgs[b_idx].copy(),
        theta_t=theta_cfgs[t_idx].copy(),
        theta_r=theta_cfgs[r_idx].copy(),
        powers=tuples[p_idx].copy(),
        directions=np.ones((K, 1), dtype=complex),
        config_index=best,
        n_candidates=n_candidates,
    )


def _search_matched(instance, grid):
    K, N = instance.dims.K, instance.dims.N
    pm = instance.power
    beta_cfgs = _joint_grid(grid.beta_grid(), N)
    theta_cfgs = _joint_grid(grid.phase_grid(), N)
    tuples, budget_mask = _power_tuples(grid, K, pm.p_max_watts)

    best_value = -np.inf
    best = None
    best_dirs = None
    n_candidates = 0
    for b_idx, beta_t in enumerate(beta_cfgs):
        amp = {TRANSMISSION: np.sqrt(beta_t), REFLECTION: np.sqrt(1.0 - beta_t)}
        for t_idx in range(theta_cfgs.shape[0]):
            for r_idx in range(theta_cfgs.shape[0]):
                coeff = {
                    TRANSMISSION: amp[TRANSMISSION] * np.exp(1j * theta_cfgs[t_idx]),
                    REFLECTION: amp[REFLECTION] * np.exp(1j * theta_cfgs[r_idx]),
                }
                h = np.array([
                    (instance.g[k] * coeff[instance.side_labels[k]]) @ instance.H
                    for k in range(K)
                ])
                norms = np.linalg.norm(h, axis=1)
                dirs = np.array([
                    h[k].conj() / norms[k] if norms[k] > 0
                    else np.eye(instance.dims.M, dtype=complex)[0]
                    for k in range(K)
                ])
                cross = np.abs(h @ dirs.T) ** 2  # [k, j] = |h_k . d_j|^2
                n_candidates += 1
                value, p_idx = _min_ee_cross_gains(
                    cross, tuples, budget_mask, pm.noise_power_watts,
                    pm.static_power_watts, pm.qos_rate_threshold)
                if p_idx >= 0 and value > best_value:
                    best_value = value
                    best = (b_idx, t_idx, r_idx, p_idx)
                    best_dirs = dirs
    if best is None:
        return OracleResult(feasible=False, best_min_ee=float("nan"),
                            n_candidates=n_candidates)
    b_idx, t_idx, r_idx, p_idx = best
    return OracleResult(
        feasible=True, best_min_ee=best_value,
        beta_t=beta_cfgs[b_idx].copy(),
        theta_t=theta_cfgs[t_idx].copy(),
        theta_r=theta_cfgs[r_idx].copy(),
        powers=tuples[p_idx].copy(),
        directions=best_dirs,
        config_index=best,
        n_candidates=n_candidates,
    )


def evaluate_min_ee_exact(instance, gains, powers):
    """Oracle-arithmetic min-EE for explicit scalar gains and powers (test aid)."""
    pm = instance.power
    total = float(np.sum(powers))
    values = []
    for k in range(len(gains)):
        interference = gains[k] * (total - powers[k])
        sinr = gains[k] * powers[k] / (interference + pm.noise_power_watts)
        rate = math.log2(1.0 + sinr)
        values.append(rate / (powers[k] + pm.static_power_watts))
    return min(values)

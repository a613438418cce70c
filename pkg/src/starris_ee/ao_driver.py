"""Alternating optimization between the beamforming and surface-coefficient stages.

One outer iteration runs the Dinkelbach beamforming stage at the current
surface coefficients, extracts beamforming vectors, then runs the
sequential rank-one relaxation at the resulting Dinkelbach parameter and
extracts new coefficients. The worst-user energy efficiency of the best
decision variables found so far is recorded per outer iteration; a stage
whose extracted point evaluates worse than the incumbent is kept out of
the incumbent (and the working state reverts to the incumbent at the end
of the iteration), so the recorded sequence never decreases. The loop
stops when that sequence settles in relative terms.

Baselines: reflect_only / transmit_only freeze the per-element splits into
two conventional half-panels (first ceil(N/2) elements on the named side,
the rest on the other), with phases still optimized.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import system_model as sm
from .beamforming import (
    LiftedBeamformers,
    dinkelbach_beamforming,
    extract_beamformers,
)
from .errors import InfeasibleInstanceError, RankOneExtractionError
from .phase_shift import (
    extract_star_coefficients,
    lift_star_coefficients,
    sequential_relaxation,
)
from .system_model import (
    REFLECTION,
    TRANSMISSION,
    BeamformerSet,
    StarCoefficients,
    SystemInstance,
)

MODE_STAR = "star_es"
MODE_REFLECT = "reflect_only"
MODE_TRANSMIT = "transmit_only"
MODES = (MODE_STAR, MODE_REFLECT, MODE_TRANSMIT)

AO_MONOTONICITY_TOL = 1e-6


@dataclass
class AoConfig:
    """Tolerances and limits for one alternating-optimization run."""

    mode: str = MODE_STAR
    outer_tol: float = 1e-3          # relative change of min-EE
    max_outer: int = 20
    dinkelbach_tol: float = 1e-3
    dinkelbach_max_iter: int = 30
    sca_tol: float = 1e-4
    sca_max_rounds: int = 20
    delta0: float = 0.1
    delta_tol: float = 1e-2
    tau_max: int = 50
    objective_tol: float = 1e-4
    n_rand: int = 100
    rank_one_threshold: float = 0.99
    extraction_seed: int = 0
    initial_star: StarCoefficients | None = None
    initial_beamformers: BeamformerSet | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        for name in ("outer_tol", "dinkelbach_tol", "sca_tol", "delta_tol",
                     "objective_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")


@dataclass
class BaselineView:
    """Frozen per-element split pattern for a conventional-panel baseline."""

    mode: str
    element_sides: list
    fixed_beta: dict
    degenerate: bool
    unserved_users: list


def apply_baseline_mode(instance: SystemInstance, mode):
    """Panel split for a baseline mode: first ceil(N/2) elements on the named side.

    Elements carry a full split (beta = 1) toward their panel's side and
    zero toward the other, so each panel serves only matching-side users.
    Raises for mode star_es; flags the view degenerate when one side has no
    users and lists users left without any serving element.
    """
    if mode == MODE_STAR:
        raise ValueError("baseline view is undefined for the star_es mode")
    if mode not in (MODE_REFLECT, MODE_TRANSMIT):
        raise ValueError(f"unknown baseline mode {mode!r}")
    n = instance.dims.N
    n_first = math.ceil(n / 2)
    first_side = REFLECTION if mode == MODE_REFLECT else TRANSMISSION
    other_side = TRANSMISSION if mode == MODE_REFLECT else REFLECTION
    sides = [first_side] * n_first + [other_side] * (n - n_first)
    beta_r = np.array([1.0 if s == REFLECTION else 0.0 for s in sides])
    fixed_beta = {TRANSMISSION: 1.0 - beta_r, REFLECTION: beta_r}

    user_sides = set(instance.side_labels)
    element_sides = set(sides)
    unserved = [k for k, s in enumerate(instance.side_labels)
                if s not in element_sides]
    degenerate = len(user_sides) < 2
    return BaselineView(mode=mode, element_sides=sides, fixed_beta=fixed_beta,
                        degenerate=degenerate, unserved_users=unserved)


@dataclass
class OuterRow:
    """Record of one completed outer iteration."""

    i: int
    min_ee: float
    lambda_star: float
    mu_beam: float
    mu_phase: float
    beam_qos_feasible: bool
    phase_rank_one_ok: bool
    dinkelbach_rows: list = field(default_factory=list)
    relaxation_rows: list = field(default_factory=list)


@dataclass
class ConvergenceTrace:
    outer: list = field(default_factory=list)


@dataclass
class SolveReport:
    """Outcome of one alternating-optimization run, self-consistent by construction.

    min_ee is recomputed from the stored decision variables through the
    closed-form rate/power evaluations, so re-evaluating them reproduces
    the headline number exactly.
    """

    mode: str
    min_ee: float
    argmin_user: int
    user_rates: list
    user_powers: list
    user_ees: list
    avg_se: float
    star: StarCoefficients
    beamformers: BeamformerSet
    qos_feasible: bool
    rank_one_ok: bool
    converged: bool
    outer_iterations: int
    lambda_star: float
    baseline_degenerate: bool
    wall_clock_seconds: float
    trace: ConvergenceTrace = field(default_factory=ConvergenceTrace)


def evaluate_solution(instance, star, beams):
    """Closed-form per-user rate/power/EE evaluation of explicit decision variables."""
    rates = sm.all_user_rates(instance, star, beams)
    powers = sm.all_user_powers(instance, beams)
    ees = [r / p for r, p in zip(rates, powers)]
    k_min = int(np.argmin(ees))
    qos_ok = (all(r >= instance.power.qos_rate_threshold - 1e-7 for r in rates)
              and beams.satisfies_budget(instance.power.p_max_watts))
    return rates, powers, ees, k_min, qos_ok


def report_to_lines(report: SolveReport):
    """Flat key = value serialization of a report (one scalar or list per line)."""
    def fmt(x):
        return f"{x:.9g}"

    lines = [
        f"mode = {report.mode}",
        f"min_ee = {fmt(report.min_ee)}",
        f"argmin_user = {report.argmin_user}",
        f"avg_se = {fmt(report.avg_se)}",
        f"lambda_star = {fmt(report.lambda_star)}",
        f"user_rates = {','.join(fmt(x) for x in report.user_rates)}",
        f"user_powers = {','.join(fmt(x) for x in report.user_powers)}",
        f"user_ees = {','.join(fmt(x) for x in report.user_ees)}",
        f"qos_feasible = {str(report.qos_feasible).lower()}",
        f"rank_one_ok = {str(report.rank_one_ok).lower()}",
        f"converged = {str(report.converged).lower()}",
        f"outer_iterations = {report.outer_iterations}",
        f"baseline_degenerate = {str(report.baseline_degenerate).lower()}",
        f"wall_clock_seconds = {report.wall_clock_seconds:.3f}",
        f"beta_t = {','.join(fmt(x) for x in report.star.beta_t)}",
        f"beta_r = {','.join(fmt(x) for x in report.star.beta_r)}",
        f"theta_t = {','.join(fmt(x) for x in report.star.theta_t)}",
        f"theta_r = {','.join(fmt(x) for x in report.star.theta_r)}",
    ]
    for k in range(report.beamformers.num_users):
        v = report.beamformers.v[k]
        lines.append(
            f"v_{k} = " + ",".join(f"{z.real:.9g}{z.imag:+.9g}j" for z in v)
        )
    return lines


def _initial_star(instance, config, view):
    if config.initial_star is not None:
        return config.initial_star
    n = instance.dims.N
    if view is None:
        return StarCoefficients.uniform_split(n)
    zeros = np.zeros(n)
    return StarCoefficients(
        beta_t=view.fixed_beta[TRANSMISSION].copy(),
        beta_r=view.fixed_beta[REFLECTION].copy(),
        theta_t=zeros, theta_r=zeros.copy(),
    )


def alternating_optimize(instance: SystemInstance, config: AoConfig | None = None):
    """Run the full alternating optimization and return a SolveReport.

    Raises InfeasibleInstanceError when the QoS/budget set is empty for the
    requested mode (detected by the first beamforming solve, or up front for
    baseline panels that leave a user without serving elements).
    """
    config = config or AoConfig()
    t_start = time.perf_counter()

    view = None
    if config.mode != MODE_STAR:
        view = apply_baseline_mode(instance, config.mode)
        if view.unserved_users:
            raise InfeasibleInstanceError(
                f"baseline {config.mode} leaves users {view.unserved_users} "
                "without serving elements"
            )
    fixed_beta = view.fixed_beta if view is not None else None

    star = _initial_star(instance, config, view)
    beams = config.initial_beamformers

    best = None  # (ee, star, beams, qos_ok)

    def consider(candidate_star, candidate_beams):
        nonlocal best
        if candidate_beams is None:
            return None, False
        _, _, ees, k_min, qos_ok = evaluate_solution(
            instance, candidate_star, candidate_beams)
        ee = ees[k_min]
        if best is None:
            best = (ee, candidate_star, candidate_beams, qos_ok)
        else:
            best_ee, _, _, best_qos = best
            better = (qos_ok and not best_qos) or (
                qos_ok == best_qos and ee > best_ee)
            if better:
                best = (ee, candidate_star, candidate_beams, qos_ok)
        return ee, qos_ok

    consider(star, beams)
    prev_recorded = best[0] if best is not None else None

    trace = ConvergenceTrace()
    converged = False
    rank_one_ok_all = True
    lambda_star = 0.0
    prev_lifted: LiftedBeamformers | None = None

    for i in range(1, config.max_outer + 1):
        din = dinkelbach_beamforming(
            instance, star, v_init=prev_lifted,
            eps_tol=config.dinkelbach_tol, n_max=config.dinkelbach_max_iter,
            sca_tol=config.sca_tol, sca_max_rounds=config.sca_max_rounds,
        )
        prev_lifted = din.lifted
        lambda_star = din.lambda_star
        ext = extract_beamformers(
            din.lifted, instance, star, n_rand=config.n_rand,
            rank_one_threshold=config.rank_one_threshold,
            seed=config.extraction_seed + i,
        )
        beams = ext.beamformers
        consider(star, beams)

        phase = sequential_relaxation(
            instance, beams, lam=din.lambda_star,
            phi_init=lift_star_coefficients(star),
            delta0=config.delta0, delta_tol=config.delta_tol,
            tau_max=config.tau_max, objective_tol=config.objective_tol,
            fixed_beta=fixed_beta,
        )
        rank_one_ok_all = rank_one_ok_all and phase.rank_one_ok
        try:
            star_new = extract_star_coefficients(phase.lifted)
        except RankOneExtractionError:
            star_new = None
        if star_new is not None:
            star = star_new
            consider(star, beams)

        recorded = best[0]
        trace.outer.append(OuterRow(
            i=i, min_ee=recorded, lambda_star=din.lambda_star,
            mu_beam=din.mu_star, mu_phase=phase.mu_final,
            beam_qos_feasible=ext.qos_feasible,
            phase_rank_one_ok=phase.rank_one_ok,
            dinkelbach_rows=din.rows, relaxation_rows=phase.rows,
        ))
        if prev_recorded is not None:
            assert recorded >= prev_recorded - AO_MONOTONICITY_TOL, (
                f"min-EE decreased across outer iterations: "
                f"{prev_recorded} -> {recorded}"
            )
            denom = max(abs(prev_recorded), 1e-12)
            if abs(recorded - prev_recorded) / denom < config.outer_tol:
                converged = True
        prev_recorded = recorded

        # revert the working state when a stage drifted below the incumbent
        best_ee, best_star, best_beams, _ = best
        _, _, cur_ees, cur_k, _ = evaluate_solution(instance, star, beams)
        if cur_ees[cur_k] < best_ee - 1e-12:
            star, beams = best_star, best_beams
        if converged:
            break

    best_ee, best_star, best_beams, _ = best
    rates, powers, ees, k_min, qos_ok = evaluate_solution(
        instance, best_star, best_beams)
    return SolveReport(
        mode=config.mode,
        min_ee=ees[k_min],
        argmin_user=k_min,
        user_rates=rates,
        user_powers=powers,
        user_ees=ees,
        avg_se=float(np.mean(rates)),
        star=best_star,
        beamformers=best_beams,
        qos_feasible=qos_ok,
        rank_one_ok=rank_one_ok_all,
        converged=converged,
        outer_iterations=len(trace.outer),
        lambda_star=lambda_star,
        baseline_degenerate=bool(view.degenerate) if view is not None else False,
        wall_clock_seconds=time.perf_counter() - t_start,
        trace=trace,
    )

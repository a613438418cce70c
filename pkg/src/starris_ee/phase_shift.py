"""Passive-beamforming stage: surface coefficient optimization at fixed beamformers.

The transmission and reflection coefficient vectors are lifted to PSD
matrices Phi_c (c in {t, r}) with per-element diagonal coupling
[Phi_t]_nn + [Phi_r]_nn = 1. The rank-one requirement on each Phi_c is
driven in by a sequential constraint relaxation: the surrogate

    e_max(Phi_c_prev)^H Phi_c e_max(Phi_c_prev) >= epsilon * trace(Phi_c)

is tightened by raising epsilon toward 1 (epsilon = 0 drops the rank
constraint entirely, epsilon = 1 enforces it at optimality). When a solve
fails the step size is halved and the previous iterate kept.

Received-power identities: with b_k = diag(g_k) H v_k the physical gain
|g_k Phi_c H v_k|^2 equals trace(Phi_c B_k) when Phi_c is the lift of the
physical coefficient vector phi_c and B_k is built from the conjugate of
b_k (stored that way here; see PassiveData).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .conic_interface import (
    ConicProblem,
    LinearConstraint,
    LogConstraint,
    Objective,
    extract_hermitian,
    hermitian_trace_coefficient,
    solve_conic,
)
from .errors import RankOneExtractionError
from .system_model import (
    LN2,
    REFLECTION,
    SIDES,
    TRANSMISSION,
    BeamformerSet,
    StarCoefficients,
    SystemInstance,
)

DELTA0 = 0.1
DELTA_TOL = 1e-2
TAU_MAX = 50
OBJECTIVE_TOL = 1e-4
EXTRACT_MIN_RATIO = 1.0 - 2e-2


@dataclass
class PassiveData:
    """Cascade vectors through the surface and their lifted matrices.

    b[k] = diag(g_k) H v_k is user k's own cascade. Interference seen by
    user k from beam j travels through user k's receive channel, so the
    lifted matrices are pairwise: B[k][j] is the rank-one Hermitian built
    from the conjugate of diag(g_k) H v_j, giving

        trace(Phi_c B[k][j]) = |g_k diag(phi_c) H v_j|^2

    for the lift Phi_c = phi_c phi_c^H of the physical coefficient vector.
    """

    b: list
    B: list


def compute_passive_data(instance: SystemInstance, beamformers: BeamformerSet):
    if beamformers.v.shape != (instance.dims.K, instance.dims.M):
        raise ValueError("beamformer set does not match instance dimensions")
    hv = [instance.H @ beamformers.v[j] for j in range(instance.dims.K)]
    b, B = [], []
    for k in range(instance.dims.K):
        b.append(instance.g[k] * hv[k])
        row = []
        for j in range(instance.dims.K):
            bc = (instance.g[k] * hv[j]).conj()
            row.append(np.outer(bc, bc.conj()))
        B.append(row)
    return PassiveData(b=b, B=B)


@dataclass
class LiftedPhases:
    """Lifted PSD coefficient matrices for both modes."""

    phi_t: np.ndarray
    phi_r: np.ndarray

    def __post_init__(self):
        self.phi_t = np.asarray(self.phi_t, dtype=complex)
        self.phi_r = np.asarray(self.phi_r, dtype=complex)
        if self.phi_t.shape != self.phi_r.shape or self.phi_t.ndim != 2:
            raise ValueError("mode matrices must be square and equal-sized")

    def matrix(self, side):
        return self.phi_t if side == TRANSMISSION else self.phi_r

    def rank_one_ratio(self, side):
        w = np.linalg.eigvalsh(self.matrix(side))
        tr = float(np.sum(w))
        return float(w[-1]) / tr if tr > 0 else 1.0

    def principal_eigenvector(self, side):
        w, U = np.linalg.eigh(self.matrix(side))
        return U[:, -1]

    def diag_coupling_error(self):
        s = np.real(np.diag(self.phi_t) + np.diag(self.phi_r))
        return float(np.max(np.abs(s - 1.0)))


def lift_star_coefficients(phi: StarCoefficients):
    """Rank-one lift Phi_c = u_c u_c^H of the physical coefficient vectors."""
    mats = {}
    for side in SIDES:
        u = phi.phi_vector(side)
        mats[side] = np.outer(u, u.conj())
    return LiftedPhases(phi_t=mats[TRANSMISSION], phi_r=mats[REFLECTION])


def update_epsilon(phi_c, delta):
    """Relaxation parameter update: min(1, max-eigenvalue-to-trace ratio + delta)."""
    phi_c = np.asarray(phi_c, dtype=complex)
    w = np.linalg.eigvalsh(phi_c)
    tr = float(np.sum(w))
    if tr <= 0.0:
        raise ValueError("zero-trace matrix has no eigenvalue ratio")
    if delta < 0.0:
        raise ValueError("step size must be nonnegative")
    return min(1.0, float(w[-1]) / tr + float(delta))


def lifted_received_power(lifted: LiftedPhases, passive: PassiveData, user_side, k, j):
    """trace(Phi_{side} B[k][j]): power user k receives from beam j."""
    return float(np.real(np.trace(lifted.matrix(user_side) @ passive.B[k][j])))


def lifted_phase_rate(lifted, passive, instance, k):
    side = instance.side_labels[k]
    sigma2 = instance.power.noise_power_watts
    signal = lifted_received_power(lifted, passive, side, k, k)
    interference = sum(
        lifted_received_power(lifted, passive, side, k, j)
        for j in range(instance.dims.K) if j != k
    )
    return float(np.log2(signal + interference + sigma2) - np.log2(interference + sigma2))


def build_phase_sdp(instance: SystemInstance, passive: PassiveData, tx_powers,
                    lam, epsilon, anchors, phi_prev: LiftedPhases,
                    mu_floor=None, fixed_beta=None):
    """SDP for one relaxation step.

    tx_powers are the fixed per-user transmit powers ||v_k||^2 entering the
    (now constant) power side of the energy-efficiency floor. anchors maps
    side -> unit principal eigenvector of the previous iterate. fixed_beta,
    when given, maps side -> per-element diagonal values and replaces the
    transmission/reflection coupling (baseline panels with frozen splits).
    """
    K, N = instance.dims.K, instance.dims.N
    pm = instance.power
    sigma2 = pm.noise_power_watts
    block_of = {TRANSMISSION: "Phi_t", REFLECTION: "Phi_r"}

    problem = ConicProblem(
        psd_blocks=[("Phi_t", 2 * N), ("Phi_r", 2 * N)],
        scalars=[("mu", None if mu_floor is None else float(mu_floor))]
        + [(f"t{k}", None) for k in range(K)],
        objective=Objective(scalar_coeffs={"mu": 1.0}, sense="max"),
    )

    gamma = pm.sinr_threshold
    for k in range(K):
        side = instance.side_labels[k]
        blk = block_of[side]
        B_row = [Bkj / sigma2 for Bkj in passive.B[k]]
        # per-user scale bounding the log argument in (0, 1]; it cancels in
        # the rate's difference of logs (see the beamforming builder)
        row_total = sum(B_row)
        c_k = 1.0 / (1.0 + N * float(np.linalg.eigvalsh(row_total)[-1]))
        B_s = [c_k * Bkj for Bkj in B_row]

        problem.log_constraints.append(LogConstraint(
            scalar=f"t{k}",
            block_coeffs={blk: hermitian_trace_coefficient(sum(B_s))},
            constant=c_k,
            name=f"rate_epigraph_{k}",
        ))

        # tangent of the subtracted log around the previous iterate
        agg = sum(B_s[j] for j in range(K) if j != k) if K > 1 else np.zeros((N, N))
        x0 = float(np.real(np.trace(phi_prev.matrix(side) @ agg))) + c_k
        slope = 1.0 / (x0 * LN2)
        constant = float(np.log2(x0)) + (c_k - x0) * slope
        problem.linear_constraints.append(LinearConstraint(
            block_coeffs={blk: -hermitian_trace_coefficient(agg) * slope},
            scalar_coeffs={f"t{k}": 1.0, "mu": -1.0},
            relation=">=",
            rhs=constant + lam * (tx_powers[k] + pm.static_power_watts),
            name=f"ee_floor_{k}",
        ))

        if gamma > 0.0:
            qos = B_s[k] / gamma - agg
            problem.linear_constraints.append(LinearConstraint(
                block_coeffs={blk: hermitian_trace_coefficient(qos)},
                relation=">=",
                rhs=c_k,
                name=f"qos_{k}",
            ))

    e_nn = np.zeros((N, N))
    for n in range(N):
        e_nn[:] = 0.0
        e_nn[n, n] = 1.0
        diag_coeff = hermitian_trace_coefficient(e_nn)
        if fixed_beta is None:
            problem.linear_constraints.append(LinearConstraint(
                block_coeffs={"Phi_t": diag_coeff, "Phi_r": diag_coeff.copy()},
                relation="==",
                rhs=1.0,
                name=f"coupling_{n}",
            ))
        else:
            for side in SIDES:
                problem.linear_constraints.append(LinearConstraint(
                    block_coeffs={block_of[side]: diag_coeff.copy()},
                    relation="==",
                    rhs=float(fixed_beta[side][n]),
                    name=f"fixed_beta_{side}_{n}",
                ))

    for side in SIDES:
        e = np.asarray(anchors[side], dtype=complex).reshape(-1)
        surrogate = np.outer(e, e.conj()) - epsilon * np.eye(N)
        problem.linear_constraints.append(LinearConstraint(
            block_coeffs={block_of[side]: hermitian_trace_coefficient(surrogate)},
            relation=">=",
            rhs=0.0,
            name=f"eigen_surrogate_{side}",
        ))
    return problem


@dataclass
class RelaxationRow:
    tau: int
    epsilon: float
    delta: float
    mu: float
    ratio_t: float
    ratio_r: float
    solvable: bool
    status: str = ""


@dataclass
class PhaseResult:
    lifted: LiftedPhases
    rows: list = field(default_factory=list)
    rank_one_ok: bool = False
    converged: bool = False
    epsilon_final: float = 0.0
    mu_final: float = float("nan")


def default_phase_init(n, fixed_beta=None):
    """All-ones-phase rank-one start: phi_c = sqrt(beta_c) elementwise, theta = 0."""
    if fixed_beta is None:
        u = np.full(n, np.sqrt(0.5), dtype=complex)
        return LiftedPhases(phi_t=np.outer(u, u.conj()), phi_r=np.outer(u, u.conj()))
    mats = {}
    for side in SIDES:
        u = np.sqrt(np.asarray(fixed_beta[side], float)).astype(complex)
        mats[side] = np.outer(u, u.conj())
    return LiftedPhases(phi_t=mats[TRANSMISSION], phi_r=mats[REFLECTION])


def sequential_relaxation(instance: SystemInstance, beamformers: BeamformerSet,
                          lam, phi_init: LiftedPhases | None = None,
                          delta0=DELTA0, delta_tol=DELTA_TOL, tau_max=TAU_MAX,
                          objective_tol=OBJECTIVE_TOL, mu_floor=None,
                          fixed_beta=None):
    """Sequential rank-one constraint relaxation over the lifted phase SDP.

    Per iteration: solve the SDP at the current epsilon; on success accept
    the iterate and reset the step to delta0, otherwise keep the previous
    iterate and halve the step; then raise epsilon via the eigenvalue-ratio
    update. Terminates when epsilon is within delta_tol of 1 and the
    objective has settled (change below objective_tol over two accepted
    solves), or at tau_max with the rank-one failure flag set.
    """
    passive = compute_passive_data(instance, beamformers)
    tx_powers = [beamformers.user_tx_power(k) for k in range(instance.dims.K)]
    cur = phi_init if phi_init is not None else default_phase_init(
        instance.dims.N, fixed_beta)

    epsilon = 0.0
    delta = float(delta0)
    rows = []
    mu_accepted = []
    converged = False
    tau = 0
    while tau < tau_max:
        anchors = {side: cur.principal_eigenvector(side) for side in SIDES}
        problem = build_phase_sdp(instance, passive, tx_powers, lam, epsilon,
                                  anchors, cur, mu_floor=mu_floor,
                                  fixed_beta=fixed_beta)
        sol = solve_conic(problem)
        solvable = sol.status == "optimal"
        mu_val = float("nan")
        if solvable:
            cur = LiftedPhases(
                phi_t=extract_hermitian(sol.block_values["Phi_t"]),
                phi_r=extract_hermitian(sol.block_values["Phi_r"]),
            )
            delta = float(delta0)
            mu_val = sol.scalar_values["mu"]
            mu_accepted.append(mu_val)
        else:
            delta = delta / 2.0
        rows.append(RelaxationRow(
            tau=tau, epsilon=epsilon, delta=delta, mu=mu_val,
            ratio_t=cur.rank_one_ratio(TRANSMISSION),
            ratio_r=cur.rank_one_ratio(REFLECTION),
            solvable=solvable, status=sol.status,
        ))
        tau += 1
        ratio = min(cur.rank_one_ratio(TRANSMISSION), cur.rank_one_ratio(REFLECTION))
        epsilon = min(1.0, ratio + delta)
        if abs(1.0 - epsilon) <= delta_tol and len(mu_accepted) >= 2 \
                and abs(mu_accepted[-1] - mu_accepted[-2]) < objective_tol:
            converged = True
            break

    ratio_t = cur.rank_one_ratio(TRANSMISSION)
    ratio_r = cur.rank_one_ratio(REFLECTION)
    rank_one_ok = (converged and min(ratio_t, ratio_r) >= 1.0 - 2.0 * delta_tol)
    return PhaseResult(
        lifted=cur, rows=rows, rank_one_ok=rank_one_ok, converged=converged,
        epsilon_final=epsilon,
        mu_final=mu_accepted[-1] if mu_accepted else float("nan"),
    )


def extract_star_coefficients(lifted: LiftedPhases, min_ratio=EXTRACT_MIN_RATIO):
    """Read surface coefficients off (near-)rank-one lifted matrices.

    Amplitude splits come from the diagonals, renormalized per element so
    the pair sums to exactly one. Phases are the arguments of the principal
    eigenvector, rotated so the first component with nonnegligible
    amplitude has zero phase.
    """
    for side in SIDES:
        ratio = lifted.rank_one_ratio(side)
        if ratio < min_ratio:
            raise RankOneExtractionError(
                f"mode {side!r} eigenvalue ratio {ratio:.4f} below {min_ratio}"
            )
    n = lifted.phi_t.shape[0]
    beta = {}
    for side in SIDES:
        beta[side] = np.clip(np.real(np.diag(lifted.matrix(side))), 0.0, None)
    sums = beta[TRANSMISSION] + beta[REFLECTION]
    beta_t = np.where(sums > 1e-15, beta[TRANSMISSION] / np.where(sums > 1e-15, sums, 1.0), 0.5)
    beta_t = np.clip(beta_t, 0.0, 1.0)
    beta_r = 1.0 - beta_t

    theta = {}
    for side in SIDES:
        e = lifted.principal_eigenvector(side)
        mags = np.abs(e)
        ref_candidates = np.nonzero(mags > 1e-9 * max(mags.max(), 1e-300))[0]
        if ref_candidates.size:
            e = e * np.exp(-1j * np.angle(e[ref_candidates[0]]))
        ang = np.angle(e)
        theta[side] = np.mod(np.where(mags > 1e-15, ang, 0.0), 2.0 * np.pi)
        # angle can return exactly 2*pi after the mod when rounding up
        theta[side] = np.where(theta[side] >= 2.0 * np.pi, 0.0, theta[side])

    return StarCoefficients(
        beta_t=beta_t, beta_r=beta_r,
        theta_t=theta[TRANSMISSION], theta_r=theta[REFLECTION],
    )

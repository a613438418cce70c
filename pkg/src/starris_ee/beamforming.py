"""Active-beamforming stage: max-min energy efficiency at fixed surface coefficients.

The fractional objective is handled by Dinkelbach iterations: at parameter
lambda the subtractive problem max-min_k (R_k - lambda * P_k) is solved as
an SDP over lifted beamformers V_k = v_k v_k^H with the rank constraint
dropped. The subtracted interference logarithm in the rate makes that
subproblem non-convex, so it is replaced by its first-order tangent around
the previous iterate (a valid upper bound of a concave function) and
re-linearized in an inner loop until the true constraint values settle.

All SDPs are built with channels normalized by the noise power, which
keeps the conic data well scaled without changing the problem.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import system_model as sm
from .conic_interface import (
    ConicProblem,
    LinearConstraint,
    LogConstraint,
    Objective,
    extract_hermitian,
    hermitian_trace_coefficient,
    solve_conic,
)
from .errors import InfeasibleInstanceError, SolverFailureError
from .system_model import LN2, BeamformerSet, StarCoefficients, SystemInstance

SCA_TOL = 1e-4
SCA_MAX_ROUNDS = 20
DINKELBACH_TOL = 1e-3
DINKELBACH_MAX_ITER = 30
RANK_ONE_THRESHOLD = 0.99
N_RANDOMIZATION = 100


@dataclass
class LiftedBeamformers:
    """Lifted PSD beamforming matrices V_k (one complex Hermitian M x M per user)."""

    V: list

    def __post_init__(self):
        self.V = [np.asarray(vk, dtype=complex) for vk in self.V]

    @property
    def num_users(self):
        return len(self.V)

    def traces(self):
        return [float(np.real(np.trace(vk))) for vk in self.V]

    def total_power(self):
        return float(sum(self.traces()))

    def min_eigenvalue(self):
        return min(float(np.linalg.eigvalsh(vk)[0]) for vk in self.V)

    def rank_one_ratios(self):
        """Largest-eigenvalue-to-trace ratio per user (1 means exactly rank one)."""
        out = []
        for vk in self.V:
            w = np.linalg.eigvalsh(vk)
            tr = float(np.sum(w))
            out.append(float(w[-1]) / tr if tr > 0 else 1.0)
        return out


@dataclass
class DinkelbachRow:
    """One Dinkelbach iteration record."""

    n: int
    lam: float
    mu: float
    F: float
    sca_slack_min: float
    inner_rounds: int
    solver: str = ""


@dataclass
class DinkelbachResult:
    lifted: LiftedBeamformers
    lambda_star: float
    mu_star: float
    rows: list = field(default_factory=list)
    converged: bool = False


def channel_grams(instance: SystemInstance, phi: StarCoefficients):
    """Gram matrices H_k = h_k^H h_k of the effective channels, one per user."""
    grams = []
    for k in range(instance.dims.K):
        h_k = sm.effective_channel(instance.g[k], phi, instance.side_labels[k], instance.H)
        grams.append(np.outer(h_k.conj(), h_k))
    return grams


def lifted_user_rate(grams, lifted: LiftedBeamformers, k, sigma2):
    """Rate of user k evaluated on lifted matrices through the trace identities."""
    signal = float(np.real(np.trace(grams[k] @ lifted.V[k])))
    interference = sum(
        float(np.real(np.trace(grams[k] @ lifted.V[j])))
        for j in range(lifted.num_users) if j != k
    )
    return float(np.log2(signal + interference + sigma2) - np.log2(interference + sigma2))


def lifted_user_powers(lifted: LiftedBeamformers, static_power):
    return [tr + static_power for tr in lifted.traces()]


def subtractive_objective(grams, lifted, lam, power_model):
    """F evaluation min_k (R_k - lambda * P_k) at fixed lifted beamformers."""
    sigma2 = power_model.noise_power_watts
    powers = lifted_user_powers(lifted, power_model.static_power_watts)
    vals = [
        lifted_user_rate(grams, lifted, k, sigma2) - lam * powers[k]
        for k in range(lifted.num_users)
    ]
    return min(vals), vals


@dataclass
class ScaTangent:
    """First-order tangent of the subtracted interference log for one user.

    Represents x -> log2(x0) + (x - x0) / (x0 ln 2) at the expansion point
    x0 = sum_{j != k} trace(H_k V_prev_j) + sigma^2. As an affine functional
    of the lifted matrices it reads  constant + sum_j trace(A_j V_j)  with
    A_j = H_k / (x0 ln 2).
    """

    user: int
    x0: float
    constant: float
    matrices: dict

    @property
    def slope(self):
        return 1.0 / (self.x0 * LN2)

    def value_at(self, x):
        return float(np.log2(self.x0) + (x - self.x0) * self.slope)


def sca_linearize_interference(v_prev: LiftedBeamformers, gram_k, user_k, sigma2):
    """Tangent upper bound of log2(interference + noise) around the previous iterate."""
    gram_k = np.asarray(gram_k, dtype=complex)
    x0 = float(sigma2)
    for j in range(v_prev.num_users):
        if j != user_k:
            x0 += float(np.real(np.trace(gram_k @ v_prev.V[j])))
    slope = 1.0 / (x0 * LN2)
    constant = float(np.log2(x0)) + (sigma2 - x0) * slope
    matrices = {
        j: gram_k * slope for j in range(v_prev.num_users) if j != user_k
    }
    return ScaTangent(user=user_k, x0=x0, constant=constant, matrices=matrices)


def build_beamforming_sdp(lam, phi: StarCoefficients, instance: SystemInstance,
                          v_prev: LiftedBeamformers):
    """SDP for one Dinkelbach step at parameter lam, linearized around v_prev.

    Variables: lifted PSD blocks V0..V{K-1} (real-embedded), a slack mu and
    per-user rate epigraphs t_k <= log2(total received power + noise).
    Constraints per user: linearized rate minus lambda * (trace V_k + P)
    at least mu; SINR floor; shared power budget.
    """
    K = instance.dims.K
    M = instance.dims.M
    pm = instance.power
    sigma2 = pm.noise_power_watts
    grams = channel_grams(instance, phi)
    grams_n = [g / sigma2 for g in grams]  # noise-normalized
    eye_coeff = hermitian_trace_coefficient(np.eye(M))

    problem = ConicProblem(
        psd_blocks=[(f"V{k}", 2 * M) for k in range(K)],
        scalars=[("mu", None)] + [(f"t{k}", None) for k in range(K)],
        objective=Objective(scalar_coeffs={"mu": 1.0}, sense="max"),
    )

    gamma = pm.sinr_threshold
    for k in range(K):
        # Both logs of the rate share a per-user scale c_k that bounds the
        # epigraph argument in (0, 1]; the scale cancels in their difference,
        # so the constraint is unchanged while the cone data stays bounded.
        lam_max_k = float(np.linalg.eigvalsh(grams_n[k])[-1])
        c_k = 1.0 / (1.0 + lam_max_k * pm.p_max_watts)
        coeff_k = hermitian_trace_coefficient(grams_n[k] * c_k)

        problem.log_constraints.append(LogConstraint(
            scalar=f"t{k}",
            block_coeffs={f"V{j}": coeff_k.copy() for j in range(K)},
            constant=c_k,
            name=f"rate_epigraph_{k}",
        ))

        tangent = sca_linearize_interference(v_prev, grams_n[k] * c_k, k, c_k)
        block_coeffs = {
            f"V{j}": -hermitian_trace_coefficient(tangent.matrices[j])
            for j in range(K) if j != k
        }
        vk_coeff = block_coeffs.get(f"V{k}", np.zeros((2 * M, 2 * M)))
        block_coeffs[f"V{k}"] = vk_coeff - lam * eye_coeff
        problem.linear_constraints.append(LinearConstraint(
            block_coeffs=block_coeffs,
            scalar_coeffs={f"t{k}": 1.0, "mu": -1.0},
            relation=">=",
            rhs=tangent.constant + lam * pm.static_power_watts,
            name=f"ee_floor_{k}",
        ))

        if gamma > 0.0:
            qos_coeffs = {f"V{k}": coeff_k / gamma}
            for j in range(K):
                if j != k:
                    qos_coeffs[f"V{j}"] = -coeff_k
            problem.linear_constraints.append(LinearConstraint(
                block_coeffs=qos_coeffs,
                relation=">=",
                rhs=c_k,
                name=f"qos_{k}",
            ))

    problem.linear_constraints.append(LinearConstraint(
        block_coeffs={f"V{k}": eye_coeff.copy() for k in range(K)},
        relation="<=",
        rhs=pm.p_max_watts,
        name="power_budget",
    ))
    return problem


def _lifted_from_solution(solution, num_users):
    return LiftedBeamformers(
        V=[extract_hermitian(solution.block_values[f"V{k}"]) for k in range(num_users)]
    )


def mrt_lifted_init(instance: SystemInstance, phi: StarCoefficients):
    """Matched-direction initialization V_k = (Pmax / K) h_k^H h_k / ||h_k||^2."""
    K, M = instance.dims.K, instance.dims.M
    p_each = instance.power.p_max_watts / K
    out = []
    for k in range(K):
        h_k = sm.effective_channel(instance.g[k], phi, instance.side_labels[k], instance.H)
        nrm2 = float(np.real(np.vdot(h_k, h_k)))
        if nrm2 > 0.0:
            out.append(p_each * np.outer(h_k.conj(), h_k) / nrm2)
        else:
            out.append(p_each * np.eye(M, dtype=complex) / M)
    return LiftedBeamformers(V=out)


def dinkelbach_beamforming(instance: SystemInstance, phi: StarCoefficients,
                           v_init: LiftedBeamformers | None = None,
                           eps_tol=DINKELBACH_TOL, n_max=DINKELBACH_MAX_ITER,
                           lambda_init=0.0, sca_tol=SCA_TOL,
                           sca_max_rounds=SCA_MAX_ROUNDS):
    """Dinkelbach iterations over the SDR subproblem at fixed surface coefficients.

    Each iteration solves the SDP at the current lambda with an inner loop
    that re-linearizes the subtracted log until the true per-user constraint
    values move by less than sca_tol. Stops when |min_k (R_k - lambda P_k)|
    drops below eps_tol or after n_max iterations. The lambda sequence is
    non-decreasing (asserted). Raises InfeasibleInstanceError when the
    QoS/budget set is empty, SolverFailureError on an unusable solve.
    """
    grams = channel_grams(instance, phi)
    pm = instance.power
    if v_init is None:
        v_init = mrt_lifted_init(instance, phi)

    lam = float(lambda_init)
    v_cur = v_init
    mu_cur = float("nan")
    rows = []
    converged = False
    any_accepted = False

    for n in range(1, n_max + 1):
        anchor = v_cur
        _, lhs_prev = subtractive_objective(grams, anchor, lam, pm)
        sca_slack_min = np.inf
        inner_rounds = 0
        accepted_this_iter = False
        solver_used = ""
        for _ in range(sca_max_rounds):
            inner_rounds += 1
            problem = build_beamforming_sdp(lam, phi, instance, anchor)
            sol = solve_conic(problem)
            if sol.status == "infeasible":
                raise InfeasibleInstanceError(
                    "QoS and power budget admit no feasible beamformers"
                )
            if sol.status != "optimal":
                # the solver hit its precision floor; keep the last accepted
                # iterate instead of tightening further
                if any_accepted:
                    break
                raise SolverFailureError(
                    f"beamforming SDP solve returned status {sol.status!r}"
                )
            any_accepted = True
            accepted_this_iter = True
            solver_used = sol.solver
            v_new = _lifted_from_solution(sol, instance.dims.K)
            mu_cur = sol.scalar_values["mu"]
            _, lhs_new = subtractive_objective(grams, v_new, lam, pm)
            sca_slack_min = min(sca_slack_min,
                                min(l - mu_cur for l in lhs_new))
            delta = max(abs(a - b) for a, b in zip(lhs_new, lhs_prev))
            anchor = v_new
            lhs_prev = lhs_new
            if delta < sca_tol:
                break
        v_cur = anchor

        F, _ = subtractive_objective(grams, v_cur, lam, pm)
        rows.append(DinkelbachRow(
            n=n, lam=lam, mu=mu_cur, F=F,
            sca_slack_min=float(sca_slack_min) if accepted_this_iter else float("nan"),
            inner_rounds=inner_rounds, solver=solver_used))
        if abs(F) <= eps_tol:
            converged = True
            break
        if not accepted_this_iter:
            break  # no usable solve at this lambda, stop with the last iterate
        rates = [lifted_user_rate(grams, v_cur, k, pm.noise_power_watts)
                 for k in range(instance.dims.K)]
        powers = lifted_user_powers(v_cur, pm.static_power_watts)
        new_lam = min(r / p for r, p in zip(rates, powers))
        assert new_lam >= lam - 1e-9, (
            f"Dinkelbach parameter decreased: {lam} -> {new_lam}"
        )
        lam = new_lam

    rates = [lifted_user_rate(grams, v_cur, k, pm.noise_power_watts)
             for k in range(instance.dims.K)]
    powers = lifted_user_powers(v_cur, pm.static_power_watts)
    lambda_star = min(r / p for r, p in zip(rates, powers))
    return DinkelbachResult(lifted=v_cur, lambda_star=lambda_star,
                            mu_star=mu_cur, rows=rows, converged=converged)


@dataclass
class ExtractionResult:
    beamformers: BeamformerSet
    qos_feasible: bool
    used_randomization: bool
    rank_one_ratios: list


def _fix_global_phase(v):
    idx = int(np.argmax(np.abs(v)))
    if np.abs(v[idx]) > 0:
        v = v * np.exp(-1j * np.angle(v[idx]))
    return v


def extract_beamformers(lifted: LiftedBeamformers, instance: SystemInstance,
                        phi: StarCoefficients, n_rand=N_RANDOMIZATION,
                        rank_one_threshold=RANK_ONE_THRESHOLD, seed=0):
    """Recover beamforming vectors from lifted matrices.

    When every V_k is numerically rank one (principal eigenvalue at least
    rank_one_threshold of the trace) the principal component is taken
    directly. Otherwise Gaussian randomization draws n_rand candidates per
    user from CN(0, V_k), each rescaled to carry the principal-eigenvalue
    power (which keeps the shared budget satisfied), and the QoS-feasible
    candidate with the best worst-user energy efficiency wins. If no
    candidate is QoS-feasible the best effort is returned with
    qos_feasible False.
    """
    K = lifted.num_users
    eigs = [np.linalg.eigh(vk) for vk in lifted.V]
    ratios = []
    for w, _ in eigs:
        tr = float(np.sum(w))
        ratios.append(float(w[-1]) / tr if tr > 0 else 1.0)

    def principal_set():
        vs = []
        for w, U in eigs:
            xi = max(float(w[-1]), 0.0)
            vs.append(_fix_global_phase(np.sqrt(xi) * U[:, -1]))
        return BeamformerSet(v=np.array(vs))

    eigen_bf = principal_set()
    if all(r >= rank_one_threshold for r in ratios):
        feasible = sm.qos_satisfied(instance, phi, eigen_bf)
        return ExtractionResult(beamformers=eigen_bf, qos_feasible=feasible,
                                used_randomization=False, rank_one_ratios=ratios)

    rng = np.random.Generator(np.random.Philox(int(seed)))
    roots = []
    for w, U in eigs:
        w = np.clip(w, 0.0, None)
        roots.append(U @ np.diag(np.sqrt(w)))
    targets = [max(float(w[-1]), 0.0) for w, _ in eigs]

    candidates = [eigen_bf]
    for _ in range(n_rand):
        vs = []
        for k in range(K):
            xi = (rng.standard_normal(lifted.V[k].shape[0])
                  + 1j * rng.standard_normal(lifted.V[k].shape[0])) / np.sqrt(2.0)
            v = roots[k] @ xi
            nrm2 = float(np.real(np.vdot(v, v)))
            if nrm2 > 0 and targets[k] > 0:
                v = v * np.sqrt(targets[k] / nrm2)
            else:
                v = np.zeros_like(v)
            vs.append(v)
        candidates.append(BeamformerSet(v=np.array(vs)))

    best_feasible, best_feasible_ee = None, -np.inf
    best_any, best_any_ee = None, -np.inf
    for cand in candidates:
        _, ee = sm.min_user_ee(instance, phi, cand)
        if ee > best_any_ee:
            best_any, best_any_ee = cand, ee
        if sm.qos_satisfied(instance, phi, cand) and ee > best_feasible_ee:
            best_feasible, best_feasible_ee = cand, ee
    if best_feasible is not None:
        return ExtractionResult(beamformers=best_feasible, qos_feasible=True,
                                used_randomization=True, rank_one_ratios=ratios)
    return ExtractionResult(beamformers=best_any, qos_feasible=False,
                            used_randomization=True, rank_one_ratios=ratios)

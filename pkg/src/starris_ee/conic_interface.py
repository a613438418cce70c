"""Solver-agnostic construction and solution of semidefinite programs.

Problems are stated over real symmetric PSD matrix blocks plus scalar
variables. Complex Hermitian matrix variables enter through the real
embedding

    embed(A) = [[Re A, -Im A], [Im A, Re A]],

which preserves positive semidefiniteness and doubles the trace inner
product: trace(embed(A) embed(B)) = 2 Re trace(A B). Constraint builders
absorb the factor two by using embed(A) / 2 as the coefficient of a
Hermitian matrix A, so they can keep writing constraints in complex
Hermitian terms (see hermitian_trace_coefficient).

Concave logarithms of affine expressions are supported as epigraph
constraints t <= log2(affine) and handed to the backend's exponential
cone. The backing solver is cvxpy with CLARABEL, falling back to SCS;
both support the PSD and exponential cones needed here. Every solution
reported as optimal is re-checked post hoc against the contract
(minimum block eigenvalue >= -1e-7, constraint residuals <= 1e-6) and
downgraded to "inaccurate" if it fails.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SolverFailureError

PSD_EIG_TOL = 1e-7
RESIDUAL_TOL = 1e-6
MAX_ITERATIONS = 200

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"
STATUS_INACCURATE = "inaccurate"
STATUS_FAILED = "failed"


def embed_hermitian(A):
    """Real symmetric 2n x 2n embedding of a complex Hermitian n x n matrix."""
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("input must be square")
    scale = max(1.0, float(np.max(np.abs(A)))) if A.size else 1.0
    if np.max(np.abs(A - A.conj().T)) > 1e-12 * scale:
        raise ValueError("input must be Hermitian within 1e-12 (relative)")
    A = 0.5 * (A + A.conj().T)  # remove round-off asymmetry
    re, im = A.real, A.imag
    top = np.hstack([re, -im])
    bottom = np.hstack([im, re])
    return np.vstack([top, bottom])


def extract_hermitian(X):
    """Complex Hermitian n x n matrix represented by a real 2n x 2n block value.

    Solver blocks need not have the exact embedding structure; averaging X
    with J X J^T (J the symplectic swap) projects onto it without changing
    any trace(embed(A)/2 * X) functional, and preserves PSD-ness.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != X.shape[1] or X.shape[0] % 2 != 0:
        raise ValueError("block value must be square with even dimension")
    n = X.shape[0] // 2
    p = 0.5 * (X[:n, :n] + X[n:, n:])
    q = 0.5 * (X[n:, :n] - X[:n, n:])
    p = 0.5 * (p + p.T)
    q = 0.5 * (q - q.T)
    return p + 1j * q


def hermitian_trace_coefficient(A):
    """Real coefficient C with trace(C X) = Re trace(A V) for V = extract(X)."""
    return embed_hermitian(A) / 2.0


@dataclass
class LinearConstraint:
    """sum_b trace(C_b X_b) + sum_s c_s x_s  (relation)  rhs."""

    block_coeffs: dict = field(default_factory=dict)
    scalar_coeffs: dict = field(default_factory=dict)
    relation: str = "<="
    rhs: float = 0.0
    name: str = ""


@dataclass
class LogConstraint:
    """scalar <= log2( const + sum_b trace(C_b X_b) + sum_s c_s x_s )."""

    scalar: str
    block_coeffs: dict = field(default_factory=dict)
    scalar_coeffs: dict = field(default_factory=dict)
    constant: float = 0.0
    name: str = ""


@dataclass
class Objective:
    block_coeffs: dict = field(default_factory=dict)
    scalar_coeffs: dict = field(default_factory=dict)
    sense: str = "max"


@dataclass
class ConicProblem:
    """A semidefinite program over PSD blocks, scalars and linear/log constraints.

    psd_blocks: list of (name, dimension) real symmetric PSD variables.
    scalars: list of (name, lower bound or None for free).
    """

    psd_blocks: list = field(default_factory=list)
    scalars: list = field(default_factory=list)
    linear_constraints: list = field(default_factory=list)
    log_constraints: list = field(default_factory=list)
    objective: Objective = field(default_factory=Objective)

    def block_dims(self):
        return dict(self.psd_blocks)

    def scalar_names(self):
        return [name for name, _ in self.scalars]

    def validate(self):
        dims = self.block_dims()
        names = set(self.scalar_names())
        if len(dims) != len(self.psd_blocks) or len(names) != len(self.scalars):
            raise ValueError("duplicate block or scalar names")

        def check_terms(block_coeffs, scalar_coeffs, where):
            for b, C in block_coeffs.items():
                if b not in dims:
                    raise ValueError(f"{where} references undeclared block {b!r}")
                C = np.asarray(C, float)
                if C.shape != (dims[b], dims[b]):
                    raise ValueError(f"{where}: coefficient for {b!r} has wrong shape")
                if np.max(np.abs(C - C.T)) > 1e-9:
                    raise ValueError(f"{where}: coefficient for {b!r} is not symmetric")
            for s in scalar_coeffs:
                if s not in names:
                    raise ValueError(f"{where} references undeclared scalar {s!r}")

        for i, con in enumerate(self.linear_constraints):
            if con.relation not in ("<=", "==", ">="):
                raise ValueError(f"constraint {i} has unknown relation {con.relation!r}")
            check_terms(con.block_coeffs, con.scalar_coeffs, f"constraint {i}")
        for i, con in enumerate(self.log_constraints):
            if con.scalar not in names:
                raise ValueError(f"log constraint {i} epigraph scalar undeclared")
            check_terms(con.block_coeffs, con.scalar_coeffs, f"log constraint {i}")
        check_terms(self.objective.block_coeffs, self.objective.scalar_coeffs, "objective")
        if self.objective.sense not in ("max", "min"):
            raise ValueError("objective sense must be max or min")


@dataclass
class ConicSolution:
    status: str
    block_values: dict = field(default_factory=dict)
    scalar_values: dict = field(default_factory=dict)
    objective_value: float | None = None
    solver: str = ""
    max_residual: float = 0.0
    min_block_eig: float = 0.0

    @property
    def is_optimal(self):
        return self.status == STATUS_OPTIMAL


def _affine_value(block_values, scalar_values, block_coeffs, scalar_coeffs, constant=0.0):
    total = float(constant)
    for b, C in block_coeffs.items():
        total += float(np.sum(np.asarray(C, float) * block_values[b]))
    for s, c in scalar_coeffs.items():
        total += float(c) * scalar_values[s]
    return total


def check_solution_contract(problem: ConicProblem, block_values, scalar_values):
    """(max residual, min block eigenvalue) of a candidate solution."""
    min_eig = np.inf
    for name, _ in problem.psd_blocks:
        X = block_values[name]
        w = np.linalg.eigvalsh(0.5 * (X + X.T))
        min_eig = min(min_eig, float(w[0]))
    max_residual = 0.0
    for name, lower in problem.scalars:
        if lower is not None:
            max_residual = max(max_residual, lower - scalar_values[name])
    for con in problem.linear_constraints:
        lhs = _affine_value(block_values, scalar_values, con.block_coeffs, con.scalar_coeffs)
        if con.relation == "<=":
            r = lhs - con.rhs
        elif con.relation == ">=":
            r = con.rhs - lhs
        else:
            r = abs(lhs - con.rhs)
        max_residual = max(max_residual, r)
    for con in problem.log_constraints:
        arg = _affine_value(block_values, scalar_values, con.block_coeffs,
                            con.scalar_coeffs, con.constant)
        if arg <= 0.0:
            max_residual = max(max_residual, 1.0)
            continue
        max_residual = max(max_residual, scalar_values[con.scalar] - math.log2(arg))
    if min_eig is np.inf:
        min_eig = 0.0
    return max_residual, min_eig


def _solve_with_cvxpy(problem: ConicProblem, solver_name):
    import cvxpy as cp

    dims = problem.block_dims()
    blocks = {name: cp.Variable((d, d), PSD=True, name=name) for name, d in dims.items()}
    scalars = {}
    side_constraints = []
    for name, lower in problem.scalars:
        s = cp.Variable(name=name)
        scalars[name] = s
        if lower is not None:
            side_constraints.append(s >= lower)

    def affine(block_coeffs, scalar_coeffs, constant=0.0):
        expr = constant
        for b, C in block_coeffs.items():
            expr = expr + cp.sum(cp.multiply(np.asarray(C, float), blocks[b]))
        for s, c in scalar_coeffs.items():
            expr = expr + float(c) * scalars[s]
        return expr

    constraints = list(side_constraints)
    for con in problem.linear_constraints:
        lhs = affine(con.block_coeffs, con.scalar_coeffs)
        if con.relation == "<=":
            constraints.append(lhs <= con.rhs)
        elif con.relation == ">=":
            constraints.append(lhs >= con.rhs)
        else:
            constraints.append(lhs == con.rhs)
    ln2 = math.log(2.0)
    for con in problem.log_constraints:
        arg = affine(con.block_coeffs, con.scalar_coeffs, con.constant)
        constraints.append(scalars[con.scalar] * ln2 <= cp.log(arg))

    obj_expr = affine(problem.objective.block_coeffs, problem.objective.scalar_coeffs)
    objective = cp.Maximize(obj_expr) if problem.objective.sense == "max" else cp.Minimize(obj_expr)
    prob = cp.Problem(objective, constraints)

    kwargs = {}
    if solver_name == "CLARABEL":
        kwargs = {"max_iter": MAX_ITERATIONS}
    elif solver_name == "SCS":
        kwargs = {"max_iters": 20000, "eps": 1e-8}
    prob.solve(solver=solver_name, **kwargs)
    return prob, blocks, scalars


def solve_conic(problem: ConicProblem, solvers=("CLARABEL", "SCS")):
    """Solve a ConicProblem, enforcing the solution contract.

    Returns a ConicSolution whose status is "optimal" only if the backend
    reports optimality and the post-hoc feasibility checks pass. Solver
    order is tried left to right; later solvers are only consulted when an
    earlier one fails outright or returns an unusable solution.
    """
    import cvxpy as cp

    problem.validate()
    last_failure = None
    for solver_name in solvers:
        try:
            prob, blocks, scalars = _solve_with_cvxpy(problem, solver_name)
        except (cp.SolverError, Exception) as exc:  # noqa: BLE001 backend quirks vary
            last_failure = ConicSolution(status=STATUS_FAILED, solver=solver_name)
            last_failure_note = str(exc)
            continue
        status = prob.status
        if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
            return ConicSolution(status=STATUS_INFEASIBLE, solver=solver_name)
        if status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
            block_values = {}
            scalar_values = {}
            usable = True
            for name in problem.block_dims():
                val = blocks[name].value
                if val is None:
                    usable = False
                    break
                block_values[name] = np.asarray(val, float)
            for name in problem.scalar_names():
                val = scalars[name].value
                if val is None:
                    usable = False
                    break
                scalar_values[name] = float(val)
            if not usable:
                last_failure = ConicSolution(status=STATUS_FAILED, solver=solver_name)
                continue
            max_res, min_eig = check_solution_contract(problem, block_values, scalar_values)
            ok = (status == cp.OPTIMAL and max_res <= RESIDUAL_TOL
                  and min_eig >= -PSD_EIG_TOL)
            sol = ConicSolution(
                status=STATUS_OPTIMAL if ok else STATUS_INACCURATE,
                block_values=block_values,
                scalar_values=scalar_values,
                objective_value=float(prob.value),
                solver=solver_name,
                max_residual=max_res,
                min_block_eig=min_eig,
            )
            if ok:
                return sol
            last_failure = sol
            continue
        # unbounded or unknown
        last_failure = ConicSolution(status=STATUS_FAILED, solver=solver_name)
    if last_failure is None:
        raise SolverFailureError("no conic solver available")
    return last_failure


def dump_problem(problem: ConicProblem, fh):
    """Write a problem in a sparse one-line-per-nonzero text form (debug aid).

    Lines:
        psd <name> <dim>
        scalar <name> <lower|free>
        objective <sense>
        obj block <name> <i> <j> <value>   /  obj scalar <name> <value>
        con <idx> <relation> <rhs> <name>
        con <idx> block <name> <i> <j> <value>  /  con <idx> scalar <name> <value>
        log <idx> <epigraph-scalar> <constant> <name>
        log <idx> block <name> <i> <j> <value>  /  log <idx> scalar <name> <value>
    """

    def emit_terms(prefix, block_coeffs, scalar_coeffs):
        for b, C in block_coeffs.items():
            C = np.asarray(C, float)
            for i, j in zip(*np.nonzero(C)):
                fh.write(f"{prefix} block {b} {i} {j} {C[i, j]!r}\n")
        for s, c in scalar_coeffs.items():
            fh.write(f"{prefix} scalar {s} {float(c)!r}\n")

    for name, d in problem.psd_blocks:
        fh.write(f"psd {name} {d}\n")
    for name, lower in problem.scalars:
        fh.write(f"scalar {name} {'free' if lower is None else repr(float(lower))}\n")
    fh.write(f"objective {problem.objective.sense}\n")
    emit_terms("obj", problem.objective.block_coeffs, problem.objective.scalar_coeffs)
    for idx, con in enumerate(problem.linear_constraints):
        fh.write(f"con {idx} {con.relation} {con.rhs!r} {con.name}\n")
        emit_terms(f"con {idx}", con.block_coeffs, con.scalar_coeffs)
    for idx, con in enumerate(problem.log_constraints):
        fh.write(f"log {idx} {con.scalar} {con.constant!r} {con.name}\n")
        emit_terms(f"log {idx}", con.block_coeffs, con.scalar_coeffs)

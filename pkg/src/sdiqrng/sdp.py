"""Small dense semidefinite programs in standard conic form.

A problem is a set of named symmetric matrix variables (optionally
constrained to the PSD cone), free scalar variables, scalar linear
equalities, and a linear objective.  Matrix inequalities are expressed
by the builders through explicit PSD slack variables, so the solver
only ever sees {linear equalities, PSD cones}.

Solving is delegated to cvxopt's interior-point cone LP (``conelp``),
which certifies convergence with a primal--dual gap.  Two
preprocessing steps make the tiny, often degenerate problems digestible:

* the variable space is restricted to the column space of the stacked
  constraint matrix (directions that touch no constraint either make
  the problem unbounded or are fixed to zero);
* linearly dependent equality rows are dropped after an explicit
  least-squares consistency check, so inconsistent data surfaces as
  ``infeasible`` rather than a solver error.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from cvxopt import matrix as cvx_matrix
from cvxopt import solvers as cvx_solvers

DEFAULT_FEASTOL = 1e-8
DEFAULT_GAPTOL = 1e-8

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
UNKNOWN = "unknown"


@dataclass(frozen=True)
class MatrixVar:
    """A named real symmetric matrix variable of side ``dim``."""

    name: str
    dim: int
    psd: bool = True


class LinExpr:
    """Scalar-valued linear expression over matrix entries and scalars.

    A matrix term pairs a coefficient matrix ``C`` with a variable ``V``
    as ``sum(C * V)`` (entrywise); with symmetric ``V`` this covers both
    trace pairings and single-entry selections.
    """

    __slots__ = ("terms", "scalars", "const")

    def __init__(self, terms=None, scalars=None, const=0.0):
        self.terms: dict[str, np.ndarray] = dict(terms or {})
        self.scalars: dict[str, float] = dict(scalars or {})
        self.const = float(const)

    @staticmethod
    def trace_term(var: str, coeff: np.ndarray) -> "LinExpr":
        return LinExpr(terms={var: np.asarray(coeff, dtype=float)})

    @staticmethod
    def scalar_term(name: str, coeff: float = 1.0) -> "LinExpr":
        return LinExpr(scalars={name: float(coeff)})

    def __add__(self, other: "LinExpr") -> "LinExpr":
        out = LinExpr(self.terms, self.scalars, self.const)
        for k, v in other.terms.items():
            out.terms[k] = out.terms.get(k, 0) + v
        for k, v in other.scalars.items():
            out.scalars[k] = out.scalars.get(k, 0.0) + v
        out.const += other.const
        return out

    def __mul__(self, factor: float) -> "LinExpr":
        return LinExpr(
            {k: v * factor for k, v in self.terms.items()},
            {k: v * factor for k, v in self.scalars.items()},
            self.const * factor,
        )

    __rmul__ = __mul__

    def __sub__(self, other: "LinExpr") -> "LinExpr":
        return self + other * -1.0

    def shifted(self, const: float) -> "LinExpr":
        return LinExpr(self.terms, self.scalars, self.const + const)

    def value(self, matrices: dict[str, np.ndarray], scalars: dict[str, float]) -> float:
        acc = self.const
        for name, coeff in self.terms.items():
            acc += float(np.sum(coeff * matrices[name]))
        for name, coeff in self.scalars.items():
            acc += coeff * scalars[name]
        return acc


@dataclass(frozen=True)
class Equality:
    expr: LinExpr
    rhs: float = 0.0


@dataclass
class SdpProblem:
    """Standard-form problem: declared variables, equalities, objective."""

    matrix_vars: list[MatrixVar]
    scalar_vars: list[str] = field(default_factory=list)
    equalities: list[Equality] = field(default_factory=list)
    objective: LinExpr = field(default_factory=LinExpr)
    sense: str = "minimize"

    def __post_init__(self) -> None:
        if self.sense not in ("minimize", "maximize"):
            raise ValueError(f"sense must be minimize or maximize, got {self.sense!r}")
        names = [v.name for v in self.matrix_vars] + list(self.scalar_vars)
        if len(set(names)) != len(names):
            raise ValueError("variable names must be unique")

    def check_declared(self) -> None:
        declared = {v.name for v in self.matrix_vars} | set(self.scalar_vars)
        exprs = [self.objective] + [e.expr for e in self.equalities]
        for ex in exprs:
            for name in list(ex.terms) + list(ex.scalars):
                if name not in declared:
                    raise ValueError(f"expression references undeclared variable {name!r}")


@dataclass
class SdpSolution:
    status: str
    value: float | None
    matrices: dict[str, np.ndarray]
    scalars: dict[str, float]
    gap: float | None
    relative_gap: float | None
    iterations: int
    solver_status: str


class _Layout:
    """Flat component layout: upper triangle of each matrix var, then scalars."""

    def __init__(self, problem: SdpProblem):
        self.slots: list[tuple[str, int, int]] = []  # (var, i, j); scalars use i=j=-1
        self.matrix_vars = problem.matrix_vars
        for mv in problem.matrix_vars:
            for i in range(mv.dim):
                for j in range(i, mv.dim):
                    self.slots.append((mv.name, i, j))
        for name in problem.scalar_vars:
            self.slots.append((name, -1, -1))
        self.index = {slot: k for k, slot in enumerate(self.slots)}
        self.n = len(self.slots)

    def row(self, expr: LinExpr) -> np.ndarray:
        out = np.zeros(self.n)
        for name, coeff in expr.terms.items():
            coeff = np.asarray(coeff, dtype=float)
            d = coeff.shape[0]
            for i in range(d):
                out[self.index[(name, i, i)]] += coeff[i, i]
                for j in range(i + 1, d):
                    out[self.index[(name, i, j)]] += coeff[i, j] + coeff[j, i]
        for name, coeff in expr.scalars.items():
            out[self.index[(name, -1, -1)]] += coeff
        return out

    def unpack(self, x: np.ndarray, problem: SdpProblem):
        matrices: dict[str, np.ndarray] = {}
        for mv in problem.matrix_vars:
            M = np.zeros((mv.dim, mv.dim))
            for i in range(mv.dim):
                for j in range(i, mv.dim):
                    M[i, j] = M[j, i] = x[self.index[(mv.name, i, j)]]
            matrices[mv.name] = M
        scalars = {
            name: float(x[self.index[(name, -1, -1)]]) for name in problem.scalar_vars
        }
        return matrices, scalars


def _independent_rows(A: np.ndarray, tol: float = 1e-10) -> list[int]:
    keep: list[int] = []
    for i in range(A.shape[0]):
        if np.linalg.matrix_rank(A[keep + [i], :], tol=tol) > len(keep):
            keep.append(i)
    return keep


def solve_sdp(
    problem: SdpProblem,
    feastol: float = DEFAULT_FEASTOL,
    gaptol: float = DEFAULT_GAPTOL,
    max_iterations: int = 200,
) -> SdpSolution:
    """Solve a standard-form problem with cvxopt's cone LP.

    Returns a solution whose ``status`` is one of ``optimal``,
    ``infeasible`` (the equalities/cones admit no point), ``unbounded``,
    or ``unknown`` (solver did not converge).
    """
    problem.check_declared()
    layout = _Layout(problem)
    sign = 1.0 if problem.sense == "minimize" else -1.0
    c = sign * layout.row(problem.objective)

    lin_rows: list[np.ndarray] = []  # dim-1 PSD vars live in the 'l' cone
    sdp_blocks: list[np.ndarray] = []
    sdp_dims: list[int] = []
    for mv in problem.matrix_vars:
        if not mv.psd:
            continue
        if mv.dim == 1:
            row = np.zeros(layout.n)
            row[layout.index[(mv.name, 0, 0)]] = -1.0
            lin_rows.append(row)
            continue
        block = np.zeros((mv.dim * mv.dim, layout.n))
        for i in range(mv.dim):
            for j in range(i, mv.dim):
                basis = np.zeros((mv.dim, mv.dim))
                basis[i, j] = basis[j, i] = 1.0
                block[:, layout.index[(mv.name, i, j)]] = -basis.flatten(order="F")
        sdp_blocks.append(block)
        sdp_dims.append(mv.dim)
    G = np.vstack([np.array(lin_rows).reshape(len(lin_rows), layout.n)] + sdp_blocks) \
        if lin_rows else (np.vstack(sdp_blocks) if sdp_blocks else np.zeros((0, layout.n)))
    h = np.zeros(G.shape[0])
    dims = {"l": len(lin_rows), "q": [], "s": sdp_dims}

    A = np.array([layout.row(e.expr) for e in problem.equalities]).reshape(
        len(problem.equalities), layout.n
    )
    b = np.array([e.rhs - e.expr.const for e in problem.equalities])

    def _finish(status, x=None, gap=None, rgap=None, iters=0, raw=""):
        if x is None:
            return SdpSolution(status, None, {}, {}, gap, rgap, iters, raw)
        matrices, scalars = layout.unpack(x, problem)
        value = problem.objective.value(matrices, scalars)
        return SdpSolution(status, value, matrices, scalars, gap, rgap, iters, raw)

    # restrict to the column space of the stacked constraints
    stacked = np.vstack([G, A])
    U, svals, Vt = np.linalg.svd(stacked, full_matrices=True)
    rank_tol = max(stacked.shape) * np.finfo(float).eps * (svals[0] if len(svals) else 1.0)
    r = int(np.sum(svals > rank_tol))
    basis = Vt[:r].T
    null = Vt[r:].T
    if null.size and np.max(np.abs(null.T @ c)) > 1e-9:
        return _finish(UNBOUNDED if problem.sense == "minimize" else UNBOUNDED)
    Gr = G @ basis
    Ar = A @ basis

    if Ar.shape[0]:
        sol_ls, *_ = np.linalg.lstsq(Ar, b, rcond=None)
        residual = np.max(np.abs(Ar @ sol_ls - b)) if b.size else 0.0
        if residual > 1e-9 * max(1.0, np.max(np.abs(b))):
            return _finish(INFEASIBLE)
        keep = _independent_rows(Ar)
        Ar, br = Ar[keep], b[keep]
    else:
        br = b

    options = {
        "show_progress": False,
        "abstol": gaptol,
        "reltol": gaptol,
        "feastol": feastol,
        "maxiters": max_iterations,
    }
    try:
        raw = cvx_solvers.conelp(
            cvx_matrix(c @ basis),
            cvx_matrix(Gr),
            cvx_matrix(h),
            dims,
            A=cvx_matrix(Ar) if Ar.shape[0] else None,
            b=cvx_matrix(br) if Ar.shape[0] else None,
            options=options,
        )
    except (ValueError, ArithmeticError, ZeroDivisionError) as exc:
        return _finish(UNKNOWN, raw=f"conelp error: {exc}")

    status_map = {
        "optimal": OPTIMAL,
        "primal infeasible": INFEASIBLE,
        "dual infeasible": UNBOUNDED,
    }
    status = status_map.get(raw["status"], UNKNOWN)
    if status != OPTIMAL:
        return _finish(status, raw=raw["status"])
    x = basis @ np.array(raw["x"]).ravel()
    return _finish(
        OPTIMAL,
        x=x,
        gap=float(raw["gap"]),
        rgap=None if raw["relative gap"] is None else float(raw["relative gap"]),
        iters=int(raw["iterations"]),
        raw=raw["status"],
    )

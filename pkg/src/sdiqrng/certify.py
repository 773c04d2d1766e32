"""Certification of extractable randomness.

Given a measured conditional-probability table and a declared energy
bound ``mu`` (never estimated from the data itself), the adversary's
guessing probability is bounded by a pair of small semidefinite
programs over the two-dimensional span of the prepared states:

* the *primal* maximizes the guessing probability over sub-normalized
  measurement operators, one pair per deterministic guess label
  ``(g0, g1)`` (the adversary's planned guess for each input), and
  lower-bounds the true optimum;
* the *dual* minimizes ``-sum nu_bx p(b|x)`` over matrix multipliers
  ``H`` and scalar multipliers ``nu`` subject to eight linear matrix
  inequalities, and upper-bounds it.  Only the dual is used for
  certificates, since a non-converged dual is still a valid bound
  direction and its multipliers allow cheap re-bounding on new tables.

Statistical uncertainty of the estimated table enters through the
Chernoff--Hoeffding half width ``Delta(eps, n) = sqrt(-log2(eps)/(2n))``
added to the dual objective with ``|nu|`` weights.

Everything here works over real symmetric matrices by default; the
``field="embedded"`` mode re-solves the same programs over the doubled
real embedding of complex self-adjoint matrices as a cross-check.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linprog, minimize_scalar
from scipy.special import erf

from .errors import AssumptionError, DataInconsistentError, SolverError
from .phase_space import MU_CERTIFIABLE_MAX, overlap_from_energy
from .sdp import (
    DEFAULT_FEASTOL,
    DEFAULT_GAPTOL,
    INFEASIBLE,
    OPTIMAL,
    UNBOUNDED,
    Equality,
    LinExpr,
    MatrixVar,
    SdpProblem,
    SdpSolution,
    solve_sdp,
)

GUESS_LABELS = tuple((g0, g1) for g0 in (0, 1) for g1 in (0, 1))

DEFAULT_EPSILON = 1e-10


@dataclass(frozen=True)
class ProbTable:
    """Conditional probabilities ``p_bx[b, x]`` with optional sample sizes.

    Columns (fixed input x) must sum to one.  ``n_x`` carries the
    per-input sample counts needed for finite-size corrections.
    """

    p_bx: np.ndarray
    n_x: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        p = np.asarray(self.p_bx, dtype=float)
        object.__setattr__(self, "p_bx", p)
        if p.shape != (2, 2):
            raise ValueError(f"p_bx must be 2x2, got shape {p.shape}")
        if np.any(p < -1e-12) or np.any(p > 1 + 1e-12):
            raise ValueError("probabilities must lie in [0, 1]")
        if np.max(np.abs(p.sum(axis=0) - 1.0)) > 1e-9:
            raise ValueError("columns of p_bx must sum to 1")
        if self.n_x is not None:
            nx = tuple(int(v) for v in self.n_x)
            if len(nx) != 2 or min(nx) < 1:
                raise ValueError("n_x must hold two positive counts")
            object.__setattr__(self, "n_x", nx)

    @classmethod
    def from_counts(cls, counts) -> "ProbTable":
        """Build from a :class:`sdiqrng.tracking.ConditionalCounts`."""
        return cls(counts.p_bx(), n_x=tuple(int(v) for v in counts.n_x))

    def digest(self) -> str:
        payload = self.p_bx.tobytes() + repr(self.n_x).encode()
        return hashlib.sha256(payload).hexdigest()[:16]


@dataclass(frozen=True)
class OverlapConstraint:
    """Overlap lower bound and the energy bound it came from."""

    lam: float
    mu: float

    def __post_init__(self) -> None:
        if abs(self.lam - (1.0 - 2.0 * self.mu)) > 1e-12:
            raise ValueError("lam must equal 1 - 2*mu")
        if not 0 <= self.mu <= MU_CERTIFIABLE_MAX:
            raise ValueError(f"mu must lie in [0, 0.5], got {self.mu}")

    @classmethod
    def from_energy(cls, mu: float) -> "OverlapConstraint":
        return cls(overlap_from_energy(mu), mu)

    def digest(self) -> str:
        return hashlib.sha256(repr((self.lam, self.mu)).encode()).hexdigest()[:16]


def embed_states(lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Density matrices of two pure states with overlap ``lam``.

    The pair is fixed to ``psi0 = (1, 0)`` and ``psi1 = (lam,
    sqrt(1 - lam^2))``, which is fully general up to a basis change.
    """
    if not 0 <= lam <= 1:
        raise ValueError(f"overlap must lie in [0, 1], got {lam}")
    s = np.sqrt(max(0.0, 1.0 - lam * lam))
    rho0 = np.array([[1.0, 0.0], [0.0, 0.0]])
    rho1 = np.array([[lam * lam, lam * s], [lam * s, s * s]])
    return rho0, rho1


def _field_geometry(lam: float, field: str):
    """States, pairing coefficients and trace factor for the chosen field.

    In the doubled real embedding a self-adjoint matrix ``A + iB`` maps
    to ``[[A, -B], [B, A]]``; real states embed block-diagonally, trace
    pairings pick up a factor 1/2, and the PSD cones coincide.  The
    embedded problems share their optima with the real-restricted ones
    (the embedding subspace is invariant under the symmetrization that
    preserves feasibility and objective), so no structure constraints
    are added.
    """
    rho = embed_states(lam)
    if field == "real":
        dim = 2
        pair = rho  # coefficient matrices for tr[rho M]
        lmi = rho  # matrices appearing inside LMIs
    elif field == "embedded":
        dim = 4
        blocks = tuple(np.block([[r, np.zeros((2, 2))], [np.zeros((2, 2)), r]]) for r in rho)
        pair = tuple(0.5 * blk for blk in blocks)
        lmi = blocks
    else:
        raise ValueError(f"field must be 'real' or 'embedded', got {field!r}")
    return dim, pair, lmi


def _entry_selector(dim: int, i: int, j: int) -> np.ndarray:
    sel = np.zeros((dim, dim))
    if i == j:
        sel[i, i] = 1.0
    else:
        sel[i, j] = sel[j, i] = 0.5
    return sel


def build_primal(pt: ProbTable, oc: OverlapConstraint, field: str = "real") -> SdpProblem:
    """Guessing-probability maximization over strategy operators.

    Eight PSD matrix variables ``M_b^{g0,g1}`` (outcome operator scaled
    by the label weight), constrained to be proportional to a resolution
    of the identity per label and to reproduce the measured table.
    """
    dim, pair, _ = _field_geometry(oc.lam, field)
    mvars = [
        MatrixVar(f"M{b}_g{g0}{g1}", dim) for b in (0, 1) for (g0, g1) in GUESS_LABELS
    ]

    objective = LinExpr()
    for g0, g1 in GUESS_LABELS:
        for x, guess in ((0, g0), (1, g1)):
            objective = objective + LinExpr.trace_term(f"M{guess}_g{g0}{g1}", 0.5 * pair[x])

    equalities: list[Equality] = []
    # per label: M0 + M1 proportional to the identity (weight = half trace)
    for g0, g1 in GUESS_LABELS:
        for i in range(dim):
            for j in range(i, dim):
                coeff = _entry_selector(dim, i, j)
                if i == j:
                    coeff = coeff - np.eye(dim) / dim
                expr = LinExpr.trace_term(f"M0_g{g0}{g1}", coeff) + LinExpr.trace_term(
                    f"M1_g{g0}{g1}", coeff
                )
                equalities.append(Equality(expr, 0.0))
    # reproduce the measured table
    for b in (0, 1):
        for x in (0, 1):
            expr = LinExpr()
            for g0, g1 in GUESS_LABELS:
                expr = expr + LinExpr.trace_term(f"M{b}_g{g0}{g1}", pair[x])
            equalities.append(Equality(expr, float(pt.p_bx[b, x])))

    return SdpProblem(mvars, [], equalities, objective, sense="maximize")


def build_dual(
    pt: ProbTable,
    oc: OverlapConstraint,
    field: str = "real",
    finite_size_epsilon: float | None = None,
) -> SdpProblem:
    """Upper-bounding dual of :func:`build_primal`.

    Four free symmetric matrix variables ``H^{g0,g1}`` and four scalars
    ``nu_bx``; each (outcome, label) pair contributes one linear matrix
    inequality, realized here through a PSD slack variable.  With
    ``finite_size_epsilon`` set, the objective is penalized by
    ``sum |nu_bx| Delta(eps, n_x)`` (via nonnegative split variables),
    which keeps the bound valid for any true table inside the
    Chernoff--Hoeffding box around the estimate.
    """
    dim, _, lmi = _field_geometry(oc.lam, field)
    mvars = [MatrixVar(f"H_g{g0}{g1}", dim, psd=False) for (g0, g1) in GUESS_LABELS]
    scalars = [f"nu_{b}{x}" for b in (0, 1) for x in (0, 1)]
    equalities: list[Equality] = []

    objective = LinExpr()
    for b in (0, 1):
        for x in (0, 1):
            objective = objective + LinExpr.scalar_term(f"nu_{b}{x}", -float(pt.p_bx[b, x]))

    if finite_size_epsilon is not None:
        if pt.n_x is None:
            raise ValueError("finite-size dual requires sample sizes n_x")
        delta = finite_size_delta(finite_size_epsilon, np.asarray(pt.n_x))
        # |nu| = (lo + hi)/2 at the optimum, with lo = t - nu, hi = t + nu >= 0
        for b in (0, 1):
            for x in (0, 1):
                lo, hi = f"lo_{b}{x}", f"hi_{b}{x}"
                mvars += [MatrixVar(lo, 1), MatrixVar(hi, 1)]
                split = (
                    LinExpr.trace_term(hi, np.array([[1.0]]))
                    - LinExpr.trace_term(lo, np.array([[1.0]]))
                    - LinExpr.scalar_term(f"nu_{b}{x}", 2.0)
                )
                equalities.append(Equality(split, 0.0))
                bound = 0.5 * float(delta[x])
                objective = (
                    objective
                    + LinExpr.trace_term(lo, np.array([[bound]]))
                    + LinExpr.trace_term(hi, np.array([[bound]]))
                )

    for b in (0, 1):
        for g0, g1 in GUESS_LABELS:
            slack = f"S{b}_g{g0}{g1}"
            mvars.append(MatrixVar(slack, dim))
            const = 0.5 * ((g0 == b) * lmi[0] + (g1 == b) * lmi[1])
            for i in range(dim):
                for j in range(i, dim):
                    coeff_h = _entry_selector(dim, i, j)
                    if i == j:
                        coeff_h = coeff_h - np.eye(dim) / dim
                    expr = (
                        LinExpr.trace_term(f"H_g{g0}{g1}", coeff_h)
                        + LinExpr.trace_term(slack, _entry_selector(dim, i, j))
                        + LinExpr.scalar_term(f"nu_{b}0", float(lmi[0][i, j]))
                        + LinExpr.scalar_term(f"nu_{b}1", float(lmi[1][i, j]))
                    )
                    equalities.append(Equality(expr, -float(const[i, j])))

    return SdpProblem(mvars, scalars, equalities, objective, sense="minimize")


def finite_size_delta(epsilon: float, n_x) -> np.ndarray:
    """Chernoff--Hoeffding half width ``sqrt(-log2(eps) / (2 n))``."""
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    n = np.asarray(n_x, dtype=float)
    if np.any(n < 1):
        raise ValueError("sample sizes must be >= 1")
    return np.sqrt(-np.log2(epsilon) / (2.0 * n))


def finite_size_objective(nu: np.ndarray, pt: ProbTable, epsilon: float) -> float:
    """Reliable guessing-probability bound from fixed dual multipliers.

    ``-sum nu_bx p(b|x) + sum |nu_bx| Delta(eps, n_x)``: the worst case
    of the linear dual bound over the confidence box, so it can be
    re-evaluated on new tables without another solve.
    """
    if pt.n_x is None:
        raise ValueError("finite-size evaluation requires sample sizes n_x")
    nu = np.asarray(nu, dtype=float)
    delta = finite_size_delta(epsilon, np.asarray(pt.n_x))
    return float(-np.sum(nu * pt.p_bx) + np.sum(np.abs(nu) * delta[None, :]))


def _nu_array(solution: SdpSolution) -> np.ndarray:
    return np.array(
        [[solution.scalars[f"nu_{b}{x}"] for x in (0, 1)] for b in (0, 1)]
    )


@dataclass(frozen=True)
class Certificate:
    """Certified randomness bound and the provenance of its inputs."""

    pg_upper: float
    hmin_rate: float
    epsilon: float
    finite_size: bool
    duality_gap: float
    mu: float
    lam: float
    nu: np.ndarray
    iterations: int
    inputs_digest: str
    pg_raw: float

    def __post_init__(self) -> None:
        if not 0.5 <= self.pg_upper <= 1.0:
            raise ValueError("pg_upper must lie in [0.5, 1]")
        if abs(self.hmin_rate + np.log2(self.pg_upper)) > 1e-12:
            raise ValueError("hmin_rate must equal -log2(pg_upper)")

    def to_json(self) -> str:
        doc = {
            "pg_upper": self.pg_upper,
            "hmin_rate": self.hmin_rate,
            "epsilon": self.epsilon,
            "finite_size": self.finite_size,
            "duality_gap": self.duality_gap,
            "mu": self.mu,
            "lam": self.lam,
            "nu": [[float(v) for v in row] for row in self.nu],
            "iterations": self.iterations,
            "inputs_digest": self.inputs_digest,
            "pg_raw": self.pg_raw,
        }
        return json.dumps(doc, sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "Certificate":
        doc = json.loads(text)
        return cls(
            pg_upper=doc["pg_upper"],
            hmin_rate=doc["hmin_rate"],
            epsilon=doc["epsilon"],
            finite_size=doc["finite_size"],
            duality_gap=doc["duality_gap"],
            mu=doc["mu"],
            lam=doc["lam"],
            nu=np.array(doc["nu"]),
            iterations=doc["iterations"],
            inputs_digest=doc["inputs_digest"],
            pg_raw=doc["pg_raw"],
        )


def solve_pg_dual(
    pt: ProbTable,
    oc: OverlapConstraint,
    field: str = "real",
    finite_size_epsilon: float | None = None,
    feastol: float = DEFAULT_FEASTOL,
    gaptol: float = DEFAULT_GAPTOL,
) -> SdpSolution:
    """Solve the dual program; classify infeasible data explicitly."""
    problem = build_dual(pt, oc, field=field, finite_size_epsilon=finite_size_epsilon)
    solution = solve_sdp(problem, feastol=feastol, gaptol=gaptol)
    if solution.status == UNBOUNDED:
        # the dual is always feasible, so an unbounded objective means the
        # data cannot be reproduced under the overlap constraint
        raise DataInconsistentError(
            f"data inconsistent with energy bound mu={oc.mu}: dual objective unbounded"
        )
    if solution.status != OPTIMAL:
        primal = solve_sdp(build_primal(pt, oc, field=field), feastol=feastol, gaptol=gaptol)
        if primal.status == INFEASIBLE:
            raise DataInconsistentError(
                f"data inconsistent with energy bound mu={oc.mu}: primal infeasible"
            )
        raise SolverError(f"dual solve failed with status {solution.status!r}")
    return solution


def certify(
    pt: ProbTable,
    mu: float,
    epsilon: float = DEFAULT_EPSILON,
    finite_size: bool = False,
    field: str = "real",
    feastol: float = DEFAULT_FEASTOL,
    gaptol: float = DEFAULT_GAPTOL,
) -> Certificate:
    """Bound the guessing probability and convert to a min-entropy rate.

    ``mu`` is the externally declared energy bound; values above 0.5 are
    refused because the overlap bound underpinning the whole program
    no longer holds.  With ``finite_size=True`` the penalized dual is
    solved and the certificate holds up to confidence ``epsilon``.
    """
    if not np.isfinite(mu) or mu < 0:
        raise AssumptionError(f"mu must be finite and >= 0, got {mu}")
    if mu > MU_CERTIFIABLE_MAX:
        raise AssumptionError(
            f"certification refused: mu={mu} exceeds 0.5, no overlap bound available"
        )
    oc = OverlapConstraint.from_energy(mu)
    solution = solve_pg_dual(
        pt,
        oc,
        field=field,
        finite_size_epsilon=epsilon if finite_size else None,
        feastol=feastol,
        gaptol=gaptol,
    )
    pg_raw = float(solution.value)
    pg = float(min(1.0, max(0.5, pg_raw)))
    return Certificate(
        pg_upper=pg,
        hmin_rate=float(-np.log2(pg)),
        epsilon=epsilon,
        finite_size=finite_size,
        duality_gap=float(solution.gap),
        mu=mu,
        lam=oc.lam,
        nu=_nu_array(solution),
        iterations=solution.iterations,
        inputs_digest=f"{pt.digest()}:{oc.digest()}",
        pg_raw=pg_raw,
    )


def oracle_pg(
    pt: ProbTable, oc: OverlapConstraint, grid: float = 1e-2, tol: float = 1e-3
) -> float:
    """Lower bound on the guessing probability by explicit strategies.

    Enumerates the four deterministic guess labels combined with
    projective or trivial binary measurements on a Bloch-angle grid,
    then linear-programs over mixtures that reproduce the table.  Exact
    reproduction is required whenever the discretized strategy set
    allows it; the ``tol`` band is only a fallback so boundary tables
    remain representable.  Entirely independent of the conic solver.
    """
    rho0, rho1 = embed_states(oc.lam)
    angles = np.arange(0.0, np.pi, grid)
    rows = []
    for g0, g1 in GUESS_LABELS:
        for gamma in angles:
            v = np.array([np.cos(gamma), np.sin(gamma)])
            proj = np.outer(v, v)
            q0 = (float(np.sum(rho0 * proj)), float(1.0 - np.sum(rho0 * proj)))
            q1 = (float(np.sum(rho1 * proj)), float(1.0 - np.sum(rho1 * proj)))
            rows.append((q0[0], q1[0], 0.5 * (q0[g0] + q1[g1])))
        for q_always in (1.0, 0.0):  # trivial measurements: constant outcome
            guess0 = q_always if g0 == 0 else 1.0 - q_always
            guess1 = q_always if g1 == 0 else 1.0 - q_always
            rows.append((q_always, q_always, 0.5 * (guess0 + guess1)))
    atoms = np.array(rows)
    n = len(atoms)
    cost = -atoms[:, 2]
    A_ub = np.vstack([atoms[:, 0], -atoms[:, 0], atoms[:, 1], -atoms[:, 1]])
    p00, p01 = float(pt.p_bx[0, 0]), float(pt.p_bx[0, 1])
    for band in (1e-9, tol):
        b_ub = np.array([p00 + band, band - p00, p01 + band, band - p01])
        res = linprog(
            cost,
            A_ub=A_ub,
            b_ub=b_ub,
            A_eq=np.ones((1, n)),
            b_eq=[1.0],
            bounds=(0, None),
            method="highs",
        )
        if res.success:
            return float(-res.fun)
    raise DataInconsistentError(
        "no strategy mixture reproduces the table within tolerance"
    )


@dataclass(frozen=True)
class EfficiencyFit:
    """MLE detector efficiency with its one-sigma curvature error."""

    eta: float
    sigma: float


def fit_efficiency(tables: Sequence[tuple[float, ProbTable]]) -> EfficiencyFit:
    """Fit a single detector efficiency to tables at several amplitudes.

    Model: ``p(b=x | x) = (1 + erf(sqrt(eta) * alpha_mag)) / 2``.  The
    binomial log-likelihood of the observed counts is maximized over
    ``eta`` in (0, 1]; the quoted sigma comes from the curvature at the
    maximum.
    """
    if len({float(a) for a, _ in tables}) < 2:
        raise ValueError("need tables at >= 2 distinct amplitudes to identify eta")
    counts = []
    for alpha_mag, pt in tables:
        if pt.n_x is None:
            raise ValueError("efficiency fit requires sample sizes n_x")
        n_x = np.asarray(pt.n_x, dtype=float)
        n_bx = pt.p_bx * n_x[None, :]
        n_same = n_bx[0, 0] + n_bx[1, 1]
        n_diff = n_bx[1, 0] + n_bx[0, 1]
        counts.append((float(alpha_mag), n_same, n_diff))

    def neg_ll(eta: float) -> float:
        acc = 0.0
        for a, n_same, n_diff in counts:
            q = 0.5 * (1.0 + erf(np.sqrt(eta) * a))
            q = min(max(q, 1e-300), 1.0 - 1e-16)
            acc -= n_same * np.log(q) + n_diff * np.log(1.0 - q)
        return acc

    res = minimize_scalar(neg_ll, bounds=(1e-9, 1.0), method="bounded",
                          options={"xatol": 1e-10})
    eta_hat = float(res.x)
    h = 1e-5
    lo, hi = max(eta_hat - h, 1e-9), min(eta_hat + h, 1.0)
    curvature = (neg_ll(hi) - 2.0 * neg_ll(eta_hat) + neg_ll(lo)) / ((hi - lo) / 2) ** 2
    if not np.isfinite(curvature) or curvature <= 0:
        raise ValueError("degenerate data: likelihood has no curvature in eta")
    return EfficiencyFit(eta=eta_hat, sigma=float(1.0 / np.sqrt(curvature)))

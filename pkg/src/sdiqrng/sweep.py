"""Certified min-entropy curves over mean-photon-number grids.

Three table families are swept: ideal heterodyne, heterodyne with an
inefficient detector (amplitude scaled by sqrt(eta), energy bound
unchanged), and homodyne at fixed measurement-axis angles.  Each grid
point is one dual-program solve.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .certify import OverlapConstraint, ProbTable, solve_pg_dual
from .phase_space import prob_heterodyne, prob_homodyne


def hmin_for_table(p_bx: np.ndarray, mu: float) -> float:
    """Certified min-entropy rate (bits/round) for one table at energy
    bound ``mu``."""
    solution = solve_pg_dual(ProbTable(p_bx), OverlapConstraint.from_energy(mu))
    pg = min(1.0, max(0.5, float(solution.value)))
    return float(-np.log2(pg))


def hmin_heterodyne(mu: float, eta: float = 1.0) -> float:
    """Heterodyne Hmin at ``mu``; ``eta`` scales the detected amplitude."""
    return hmin_for_table(prob_heterodyne(np.sqrt(eta * mu)), mu)


def hmin_homodyne(mu: float, theta: float) -> float:
    """Homodyne Hmin at ``mu`` for measurement axis ``theta``."""
    return hmin_for_table(prob_homodyne(np.sqrt(mu), theta), mu)


@dataclass
class SweepRow:
    mu: float
    hmin_ideal: float
    hmin_eta: float
    hmin_homodyne: tuple[float, ...]


def _sweep_point(args) -> SweepRow:
    mu, eta, thetas = args
    return SweepRow(
        mu=mu,
        hmin_ideal=hmin_heterodyne(mu),
        hmin_eta=hmin_heterodyne(mu, eta),
        hmin_homodyne=tuple(hmin_homodyne(mu, t) for t in thetas),
    )


def sweep_table(
    mu_grid, eta: float, thetas, workers: int = 1
) -> list[SweepRow]:
    """Hmin columns for every mu in the grid, in grid order."""
    mu_grid = [float(m) for m in mu_grid]
    thetas = tuple(float(t) for t in thetas)
    if not mu_grid:
        raise ValueError("mu grid must be non-empty")
    jobs = [(mu, eta, thetas) for mu in mu_grid]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_point, jobs))
    return [_sweep_point(job) for job in jobs]


def theta_max_curve(thetas, mu_grid) -> list[tuple[float, float, float]]:
    """Per-theta maximum of the homodyne Hmin curve over the mu grid.

    Returns ``(theta, best_mu, hmin)`` triples.
    """
    out = []
    for theta in thetas:
        values = [(hmin_homodyne(mu, theta), mu) for mu in mu_grid]
        hmin, mu = max(values)
        out.append((float(theta), float(mu), float(hmin)))
    return out


def write_sweep_csv(rows: list[SweepRow], thetas, path) -> None:
    thetas = tuple(float(t) for t in thetas)
    headers = ["mu", "hmin_ideal", "hmin_eta"] + [
        f"hmin_homodyne_{np.degrees(t):g}deg" for t in thetas
    ]
    with open(path, "w") as fh:
        fh.write(",".join(headers) + "\n")
        for row in rows:
            cells = [repr(row.mu), repr(row.hmin_ideal), repr(row.hmin_eta)]
            cells += [repr(v) for v in row.hmin_homodyne]
            fh.write(",".join(cells) + "\n")


def write_theta_max_csv(curve, path) -> None:
    with open(path, "w") as fh:
        fh.write("theta_deg,best_mu,hmin\n")
        for theta, mu, hmin in curve:
            fh.write(f"{np.degrees(theta)!r},{mu!r},{hmin!r}\n")

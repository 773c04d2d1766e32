"""Coherent-state phase-space model: sampling kernels and closed-form
conditional probabilities for heterodyne and homodyne detection.

Conventions (fixed once, used everywhere):

* Phase-space points live in the alpha-plane.  A heterodyne outcome is a
  complex number ``beta = X + iP`` drawn from an isotropic Gaussian
  centered on the (efficiency-scaled) state amplitude with variance 1/2
  per quadrature.  This is the unique choice reproducing
  ``p(0|0) = (1 + erf(|alpha|)) / 2`` for the sign-of-X decision.
* A homodyne outcome along axis ``theta`` is a real Gaussian with mean
  ``Re(alpha * exp(-i*theta))`` and variance 1/4 (vacuum-limited single
  quadrature), which reproduces ``p(0|0) = (1 + erf(sqrt(2)|alpha cos
  theta|)) / 2``.
* Detector inefficiency ``eta`` scales the amplitude by ``sqrt(eta)``
  and leaves the vacuum noise untouched (noiseless-but-lossy detector).
* All sampling is pure given an integer seed (PCG64 behind
  ``numpy.random.default_rng``).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import erf

HETERODYNE_QUAD_VAR = 0.5
HOMODYNE_QUAD_VAR = 0.25

# mu above this value carries no certifiable overlap bound
MU_CERTIFIABLE_MAX = 0.5


class PhasePoint(NamedTuple):
    """One heterodyne outcome: X and P quadrature values (alpha-plane units)."""

    re: float
    im: float

    @classmethod
    def from_complex(cls, z: complex) -> "PhasePoint":
        return cls(float(np.real(z)), float(np.imag(z)))

    def as_complex(self) -> complex:
        return complex(self.re, self.im)


@dataclass(frozen=True)
class StatePrep:
    """Coherent-state preparation for one protocol input.

    The emitted amplitude is ``(-1)**x * sqrt(mu) * exp(i*phi)``.  Values
    of ``mu`` above 0.5 are representable (the simulation is still
    meaningful) but are refused by certification, which needs the
    energy-to-overlap bound.
    """

    mu: float
    phi: float = 0.0
    x: int = 0

    def __post_init__(self) -> None:
        if not np.isfinite(self.mu) or self.mu < 0:
            raise ValueError(f"mean photon number must be finite and >= 0, got {self.mu}")
        if not np.isfinite(self.phi):
            raise ValueError("phase must be finite")
        if self.x not in (0, 1):
            raise ValueError(f"input bit must be 0 or 1, got {self.x}")

    @property
    def alpha(self) -> complex:
        """Unsigned amplitude ``sqrt(mu) * exp(i*phi)``."""
        return complex(np.sqrt(self.mu) * np.exp(1j * self.phi))

    @property
    def signed_alpha(self) -> complex:
        """Amplitude actually emitted, ``alpha * (-1)**x``."""
        return self.alpha * (-1) ** self.x


@dataclass(frozen=True)
class DetectorModel:
    """Quantum efficiency and measurement kind.

    ``theta`` selects the homodyne measurement axis and is ignored for
    heterodyne detection.
    """

    eta: float = 1.0
    kind: str = "heterodyne"
    theta: float = 0.0

    def __post_init__(self) -> None:
        if not np.isfinite(self.eta) or not 0 < self.eta <= 1:
            raise ValueError(f"efficiency must satisfy 0 < eta <= 1, got {self.eta}")
        if self.kind not in ("heterodyne", "homodyne"):
            raise ValueError(f"unknown detector kind {self.kind!r}")
        if not np.isfinite(self.theta):
            raise ValueError("theta must be finite")


def heterodyne_points(amplitudes, rng: np.random.Generator) -> np.ndarray:
    """Draw one phase-space point per entry of ``amplitudes``.

    This is the single noise kernel shared by all heterodyne simulation
    paths: points are complex Gaussians centered on the given amplitudes
    with variance 1/2 per quadrature.
    """
    amplitudes = np.asarray(amplitudes, dtype=np.complex128)
    sigma = np.sqrt(HETERODYNE_QUAD_VAR)
    noise = rng.normal(0.0, sigma, amplitudes.shape) + 1j * rng.normal(
        0.0, sigma, amplitudes.shape
    )
    return amplitudes + noise


def homodyne_values(means, rng: np.random.Generator) -> np.ndarray:
    """Draw one quadrature value per entry of ``means`` (variance 1/4)."""
    means = np.asarray(means, dtype=np.float64)
    return rng.normal(means, np.sqrt(HOMODYNE_QUAD_VAR))


def sample_heterodyne(
    prep: StatePrep, det: DetectorModel, rng_seed: int, n: int
) -> np.ndarray:
    """Sample ``n`` heterodyne outcomes for a fixed preparation.

    Returns a complex array; real part is the X quadrature, imaginary
    part is P.  Deterministic given ``rng_seed``.
    """
    if det.kind != "heterodyne":
        raise ValueError(f"heterodyne sampling requires a heterodyne detector, got {det.kind!r}")
    if n < 1:
        raise ValueError("n must be >= 1")
    mean = np.sqrt(det.eta) * prep.signed_alpha
    rng = np.random.default_rng(rng_seed)
    return heterodyne_points(np.full(n, mean), rng)


def sample_homodyne(
    prep: StatePrep, det: DetectorModel, rng_seed: int, n: int
) -> np.ndarray:
    """Sample ``n`` homodyne outcomes along the detector axis ``theta``."""
    if det.kind != "homodyne":
        raise ValueError(f"homodyne sampling requires a homodyne detector, got {det.kind!r}")
    if n < 1:
        raise ValueError("n must be >= 1")
    mean = np.sqrt(det.eta) * np.real(prep.signed_alpha * np.exp(-1j * det.theta))
    rng = np.random.default_rng(rng_seed)
    return homodyne_values(np.full(n, mean), rng)


def prob_heterodyne(alpha_mag: float) -> np.ndarray:
    """Conditional probability table for ideal heterodyne detection.

    Returns the 2x2 array ``p[b, x]`` with ``p[0, 0] = p[1, 1] =
    (1 + erf(alpha_mag)) / 2``; columns sum to one.
    """
    if alpha_mag < 0:
        raise ValueError("alpha_mag must be >= 0")
    p_same = 0.5 * (1.0 + erf(alpha_mag))
    return np.array([[p_same, 1.0 - p_same], [1.0 - p_same, p_same]])


def prob_homodyne(alpha_mag: float, theta: float) -> np.ndarray:
    """Conditional probability table for homodyne detection along ``theta``.

    ``p[0, 0] = (1 + erf(sqrt(2) * |alpha_mag cos theta|)) / 2``.  Equals
    :func:`prob_heterodyne` at ``theta = pi/4`` and collapses to 1/2
    everywhere at ``theta = pi/2``.
    """
    if alpha_mag < 0:
        raise ValueError("alpha_mag must be >= 0")
    p_same = 0.5 * (1.0 + erf(np.sqrt(2.0) * abs(alpha_mag * np.cos(theta))))
    return np.array([[p_same, 1.0 - p_same], [1.0 - p_same, p_same]])


def discrimination_bound(mu: float) -> float:
    """Guaranteed lower bound on the sum of error probabilities
    ``p(1|0) + p(0|1)`` for any binary measurement, given the energy
    bound ``mu``: ``1 - 2*sqrt(mu - mu**2)``.
    """
    if not 0 <= mu <= MU_CERTIFIABLE_MAX:
        raise ValueError(f"discrimination bound requires 0 <= mu <= 0.5, got {mu}")
    return 1.0 - 2.0 * np.sqrt(mu - mu * mu)

def overlap_from_energy(mu: float) -> float:
    """Lower bound ``1 - 2*mu`` on the overlap of the two prepared states.

    Only valid for ``mu <= 0.5``; beyond that the bound is negative and
    certification must refuse.
    """
    if not 0 <= mu <= MU_CERTIFIABLE_MAX:
        raise ValueError(
            f"energy-to-overlap bound requires 0 <= mu <= 0.5, got {mu}"
        )
    return 1.0 - 2.0 * mu

"""End-to-end experiment simulation: input generation, phase drift,
per-round heterodyne sampling, and the trial-stream file format.

A trial stream is a numpy structured array with one record per protocol
round (fields ``index, x, b, re, im``).  Outcomes ``b`` are written as
255 (unassigned) by the simulator and filled in later by the tracking
stage.

The binary file layout is little-endian throughout:

* 16-byte header: magic ``SDIQ``, version ``u16``, flags ``u16``,
  record count ``u64``;
* then per record: ``index u64, x u8, b u8, re f64, im f64``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError
from .phase_space import heterodyne_points

TRIAL_DTYPE = np.dtype(
    [("index", "<u8"), ("x", "u1"), ("b", "u1"), ("re", "<f8"), ("im", "<f8")]
)
B_UNASSIGNED = 255

MAGIC = b"SDIQ"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHHQ")

DEFAULT_REP_RATE = 1.25e9
DEFAULT_DRIFT_RATE = np.deg2rad(32.0)  # measured long-term drift scale


@dataclass(frozen=True)
class DriftModel:
    """Signal--LO relative-phase process: linear rate plus optional
    Wiener diffusion.

    Only the average drift rate is experimentally characterized, so the
    generative model is deliberately simple; diffusion defaults to zero.
    """

    rate: float = DEFAULT_DRIFT_RATE  # radians / second
    diffusion: float = 0.0  # radians / sqrt(second)
    phi0: float = 0.0

    def __post_init__(self) -> None:
        if self.diffusion < 0:
            raise ValueError("diffusion must be >= 0")
        if not (np.isfinite(self.rate) and np.isfinite(self.phi0)):
            raise ValueError("drift parameters must be finite")

    def phases(self, n: int, rep_rate: float, rng: np.random.Generator) -> np.ndarray:
        """Phase of rounds ``0..n-1`` at ``rep_rate`` rounds per second."""
        dt = 1.0 / rep_rate
        t = np.arange(n, dtype=np.float64) * dt
        phi = self.phi0 + self.rate * t
        if self.diffusion > 0:
            steps = rng.normal(0.0, self.diffusion * np.sqrt(dt), n - 1)
            phi[1:] += np.cumsum(steps)
        return phi


@dataclass(frozen=True)
class RunConfig:
    """Parameters of one simulated acquisition run."""

    mu: float
    n_rounds: int
    eta: float = 1.0
    rep_rate: float = DEFAULT_REP_RATE
    drift: DriftModel = field(default_factory=DriftModel)
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.rep_rate <= 0:
            raise ValueError("rep_rate must be > 0")
        if self.n_rounds < 1:
            raise ValueError("n_rounds must be >= 1")
        if self.mu < 0 or not np.isfinite(self.mu):
            raise ValueError("mu must be finite and >= 0")
        if not 0 < self.eta <= 1:
            raise ValueError("eta must satisfy 0 < eta <= 1")


def generate_inputs(n: int, rng_seed) -> np.ndarray:
    """i.i.d. uniform input bits, reproducible from the seed.

    ``rng_seed`` may be an integer or a ``numpy.random.SeedSequence``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(rng_seed)
    return rng.integers(0, 2, n, dtype=np.uint8)


def simulate_run(cfg: RunConfig) -> np.ndarray:
    """Simulate a full run and return the trial stream (outcomes unassigned).

    Round ``t`` carries phase ``phi(t)`` from the drift model and a
    heterodyne point centered at ``(-1)**x * sqrt(eta*mu) * exp(i*phi(t))``.
    Three independent child streams (inputs, shot noise, diffusion) are
    derived from ``rng_seed`` so the run is fully deterministic.
    """
    ss_inputs, ss_noise, ss_phase = np.random.SeedSequence(cfg.rng_seed).spawn(3)
    n = cfg.n_rounds
    x = generate_inputs(n, ss_inputs)
    phi = cfg.drift.phases(n, cfg.rep_rate, np.random.default_rng(ss_phase))

    amp = np.sqrt(cfg.eta * cfg.mu) * np.exp(1j * phi)
    amp[x == 1] *= -1.0
    points = heterodyne_points(amp, np.random.default_rng(ss_noise))

    records = np.zeros(n, dtype=TRIAL_DTYPE)
    records["index"] = np.arange(n, dtype=np.uint64)
    records["x"] = x
    records["b"] = B_UNASSIGNED
    records["re"] = points.real
    records["im"] = points.imag
    return records


def write_trials(records: np.ndarray, path, flags: int = 0) -> None:
    """Write a trial stream to ``path`` in the binary format above."""
    records = np.ascontiguousarray(records, dtype=TRIAL_DTYPE)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, flags, len(records)))
        fh.write(records.tobytes())


def read_trials(path) -> np.ndarray:
    """Read a trial stream written by :func:`write_trials`.

    Raises :class:`FormatError` on a bad magic number, unknown version,
    or truncated payload.
    """
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise FormatError(f"{path}: truncated header")
        magic, version, _flags, count = _HEADER.unpack(header)
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise FormatError(f"{path}: unsupported format version {version}")
        payload = fh.read()
    expected = count * TRIAL_DTYPE.itemsize
    if len(payload) < expected:
        raise FormatError(
            f"{path}: truncated payload ({len(payload)} bytes, expected {expected})"
        )
    return np.frombuffer(payload[:expected], dtype=TRIAL_DTYPE).copy()


def write_trials_csv(records: np.ndarray, path) -> None:
    """Debug export, one line per record under an ``index,x,b,re,im`` header."""
    with open(path, "w") as fh:
        fh.write("index,x,b,re,im\n")
        for rec in records:
            fh.write(
                f"{rec['index']},{rec['x']},{rec['b']},{rec['re']!r},{rec['im']!r}\n"
            )

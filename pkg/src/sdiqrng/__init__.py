"""Semi-device-independent QRNG toolkit.

Simulates a heterodyne-based prepare-and-measure randomness source,
tracks the signal--LO phase in post-processing, certifies extractable
min-entropy through a guessing-probability SDP under an energy bound,
and extracts uniform bits with Toeplitz hashing.
"""

from .acquisition import DriftModel, RunConfig, generate_inputs, read_trials, simulate_run, write_trials
from .certify import (
    Certificate,
    EfficiencyFit,
    OverlapConstraint,
    ProbTable,
    build_dual,
    build_primal,
    certify,
    embed_states,
    finite_size_delta,
    finite_size_objective,
    fit_efficiency,
    oracle_pg,
)
from .errors import (
    AssumptionError,
    DataInconsistentError,
    DegenerateChunkError,
    FormatError,
    SdiQrngError,
    SolverError,
)
from .extract import ExtractorParams, output_length, sanity_tests, toeplitz_hash
from .phase_space import (
    DetectorModel,
    PhasePoint,
    StatePrep,
    discrimination_bound,
    overlap_from_energy,
    prob_heterodyne,
    prob_homodyne,
    sample_heterodyne,
    sample_homodyne,
)
from .tracking import ChunkSummary, ConditionalCounts, accumulate, classify, summarize_chunk, track_stream, unwrap_phases

__version__ = "0.1.0"

"""Post-processing of a trial stream: chunked centroid estimation,
phase unwrapping, perpendicular-bisector classification, and conditional
counting.

The signal--LO phase is quasi-static within a chunk (default 1000
rounds), so each chunk gets its own centroid pair and phase estimate;
no filtering across chunks is attempted.  Chunks missing an input class
cannot yield a centroid pair and are excluded from the counts rather
than guessed; they are reported in the tracking result.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .acquisition import B_UNASSIGNED
from .errors import DegenerateChunkError, SdiQrngError

DEFAULT_CHUNK_SIZE = 1000


@dataclass(frozen=True)
class ChunkSummary:
    """Per-chunk centroids and the phase of the x=0 lobe."""

    chunk_index: int
    c0: complex
    c1: complex
    phi_hat: float
    n_in_chunk: int


@dataclass
class ConditionalCounts:
    """Outcome counts ``n_bx[b, x]`` and per-input totals ``n_x``."""

    n_bx: np.ndarray = field(default_factory=lambda: np.zeros((2, 2), dtype=np.int64))

    @property
    def n_x(self) -> np.ndarray:
        return self.n_bx.sum(axis=0)

    @property
    def total(self) -> int:
        return int(self.n_bx.sum())

    def p_bx(self) -> np.ndarray:
        """Estimated conditional probabilities ``n_bx / n_x``."""
        n_x = self.n_x
        if np.any(n_x == 0):
            raise SdiQrngError("cannot form probabilities: an input class has no counts")
        return self.n_bx / n_x

    def merge(self, other: "ConditionalCounts") -> "ConditionalCounts":
        return ConditionalCounts(self.n_bx + other.n_bx)


def _points(records: np.ndarray) -> np.ndarray:
    return records["re"] + 1j * records["im"]


def summarize_chunk(records: np.ndarray, chunk_index: int) -> ChunkSummary:
    """Centroids of the two input populations and the resulting phase.

    ``phi_hat`` is the argument of ``(c0 - c1) / 2``, i.e. the phase of
    the x=0 lobe.  Raises :class:`DegenerateChunkError` if either input
    class is absent (a centroid is never fabricated).
    """
    if len(records) == 0:
        raise DegenerateChunkError(f"chunk {chunk_index}: empty")
    x = records["x"]
    pts = _points(records)
    mask0 = x == 0
    n0 = int(np.count_nonzero(mask0))
    if n0 == 0 or n0 == len(records):
        raise DegenerateChunkError(
            f"chunk {chunk_index}: missing input class {0 if n0 == 0 else 1}"
        )
    c0 = pts[mask0].mean()
    c1 = pts[~mask0].mean()
    phi_hat = float(np.angle((c0 - c1) / 2.0))
    return ChunkSummary(chunk_index, complex(c0), complex(c1), phi_hat, len(records))


def unwrap_phases(summaries: list[ChunkSummary]) -> list[ChunkSummary]:
    """Adjust each ``phi_hat`` by multiples of 2*pi so consecutive
    differences lie in (-pi, pi].  Summaries must be in chunk order."""
    if not summaries:
        return []
    out = [summaries[0]]
    prev = summaries[0].phi_hat
    for s in summaries[1:]:
        dd = s.phi_hat - prev
        k = np.floor((np.pi - dd) / (2.0 * np.pi))
        phi = s.phi_hat + 2.0 * np.pi * k
        out.append(ChunkSummary(s.chunk_index, s.c0, s.c1, float(phi), s.n_in_chunk))
        prev = phi
    return out


def classify(records: np.ndarray, summary: ChunkSummary) -> np.ndarray:
    """Assign outcomes by the perpendicular bisector of the centroid pair.

    ``b = 0`` iff ``<point - (c0+c1)/2, c0 - c1> >= 0`` (ties go to 0).
    Returns a copy with the ``b`` field filled in.
    """
    direction = summary.c0 - summary.c1
    if direction == 0:
        raise DegenerateChunkError(
            f"chunk {summary.chunk_index}: coincident centroids"
        )
    midpoint = (summary.c0 + summary.c1) / 2.0
    pts = _points(records)
    inner = np.real((pts - midpoint) * np.conj(direction))
    out = records.copy()
    out["b"] = np.where(inner >= 0.0, 0, 1).astype(np.uint8)
    return out


def accumulate(records: np.ndarray) -> ConditionalCounts:
    """Exact conditional counts of a fully classified stream."""
    b = records["b"]
    if np.any(b == B_UNASSIGNED):
        raise SdiQrngError("accumulate: stream contains unclassified records")
    key = b.astype(np.int64) * 2 + records["x"]
    counts = np.bincount(key, minlength=4)
    return ConditionalCounts(counts.reshape(2, 2))


@dataclass
class TrackingResult:
    """Classified stream plus everything derived from it."""

    records: np.ndarray
    summaries: list[ChunkSummary]
    counts: ConditionalCounts
    skipped_chunks: list[int]

    @property
    def n_classified(self) -> int:
        return self.counts.total


def track_stream(
    records: np.ndarray, chunk_size: int = DEFAULT_CHUNK_SIZE
) -> TrackingResult:
    """Run the full tracking pass over a trial stream.

    Splits into consecutive chunks (the last one may be short), estimates
    and unwraps the per-chunk phase, classifies every usable chunk, and
    accumulates counts.  Unusable chunks keep ``b = 255`` and are listed
    in ``skipped_chunks``.
    """
    if chunk_size < 1:
        raise ValueError("chunk_size must be >= 1")
    n = len(records)
    out = records.copy()
    summaries: list[ChunkSummary] = []
    skipped: list[int] = []
    spans: dict[int, tuple[int, int]] = {}
    for ci, start in enumerate(range(0, n, chunk_size)):
        stop = min(start + chunk_size, n)
        try:
            summaries.append(summarize_chunk(records[start:stop], ci))
            spans[ci] = (start, stop)
        except DegenerateChunkError:
            skipped.append(ci)
    summaries = unwrap_phases(summaries)
    counts = ConditionalCounts()
    for s in summaries:
        start, stop = spans[s.chunk_index]
        try:
            out[start:stop] = classify(records[start:stop], s)
        except DegenerateChunkError:
            skipped.append(s.chunk_index)
            continue
        counts = counts.merge(accumulate(out[start:stop]))
    skipped.sort()
    kept = [s for s in summaries if s.chunk_index not in set(skipped)]
    return TrackingResult(out, kept, counts, skipped)


def write_chunk_csv(summaries: list[ChunkSummary], path) -> None:
    """Chunk-summary export: ``chunk,phi_hat_rad,c0_re,c0_im,c1_re,c1_im,n``."""
    with open(path, "w") as fh:
        fh.write("chunk,phi_hat_rad,c0_re,c0_im,c1_re,c1_im,n\n")
        for s in summaries:
            fh.write(
                f"{s.chunk_index},{s.phi_hat!r},{s.c0.real!r},{s.c0.imag!r},"
                f"{s.c1.real!r},{s.c1.imag!r},{s.n_in_chunk}\n"
            )

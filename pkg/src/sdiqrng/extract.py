"""Randomness extraction: Toeplitz two-universal hashing plus the
output-length accounting and two lightweight statistical sanity tests.

The hash matrix is ``T[i, j] = seed[i - j + n_in - 1]`` (constant along
diagonals), so output ``i`` is the mod-2 inner product of row ``i`` with
the raw bits.  Worked 3->2 example with ``seed = 1011`` (index 0..3) and
``raw = 110``::

    T = [[s2, s1, s0],    [[1, 0, 1],
         [s3, s2, s1]]  =  [1, 1, 0]]     ->  output (1, 0)

The production implementation evaluates the product as one carry-free
integer multiplication (each bit in its own 32-bit lane), which is exact
and fast enough for 1e7-bit inputs; the naive definition is kept as the
test oracle.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass

import gmpy2
import numpy as np
from scipy.special import erfc

DEFAULT_EPSILON_RE = 1e-10
_LANE_BYTES = 4  # supports n_in up to 2**32 - 1 without lane carries


def output_length(n_in: int, hmin_rate: float, epsilon_re: float = DEFAULT_EPSILON_RE) -> int:
    """Extractable bits under leftover-hash accounting.

    ``floor(n_in * hmin_rate - 2*log2(1/epsilon_re))``, clamped at 0.
    """
    if n_in < 1:
        raise ValueError("n_in must be >= 1")
    if not 0 <= hmin_rate <= 1:
        raise ValueError("hmin_rate must lie in [0, 1]")
    if not 0 < epsilon_re < 1:
        raise ValueError("epsilon_re must lie in (0, 1)")
    n_out = math.floor(n_in * hmin_rate - 2.0 * math.log2(1.0 / epsilon_re))
    return max(0, n_out)


@dataclass(frozen=True)
class ExtractorParams:
    """Shape and seed of one Toeplitz extraction."""

    n_in: int
    n_out: int
    seed_bits: np.ndarray
    epsilon_re: float = DEFAULT_EPSILON_RE

    def __post_init__(self) -> None:
        if self.n_in < 1 or self.n_out < 1:
            raise ValueError("n_in and n_out must be >= 1")
        seed = np.ascontiguousarray(np.asarray(self.seed_bits) & 1, dtype=np.uint8)
        object.__setattr__(self, "seed_bits", seed)
        if len(seed) != self.n_in + self.n_out - 1:
            raise ValueError(
                f"seed must hold n_in + n_out - 1 = {self.n_in + self.n_out - 1} bits, "
                f"got {len(seed)}"
            )


def make_seed_bits(n_bits: int, rng_seed: int | None = None) -> np.ndarray:
    """Uniform seed bits: from a PRNG when ``rng_seed`` is given
    (reproducible runs), otherwise from the platform entropy source."""
    if rng_seed is not None:
        return np.random.default_rng(rng_seed).integers(0, 2, n_bits, dtype=np.uint8)
    raw = np.frombuffer(os.urandom((n_bits + 7) // 8), dtype=np.uint8)
    return np.unpackbits(raw)[:n_bits]


def _bits_to_lanes(bits: np.ndarray) -> gmpy2.mpz:
    lanes = np.zeros(len(bits) * _LANE_BYTES, dtype=np.uint8)
    lanes[::_LANE_BYTES] = bits
    return gmpy2.mpz(int.from_bytes(lanes.tobytes(), "little"))


def toeplitz_hash(raw: np.ndarray, params: ExtractorParams) -> np.ndarray:
    """Hash ``raw`` (bit array of length ``n_in``) to ``n_out`` bits.

    Bit-exact against :func:`toeplitz_hash_naive`; evaluated through a
    single spaced integer product whose lanes carry the integer
    convolution coefficients.
    """
    raw = np.ascontiguousarray(np.asarray(raw) & 1, dtype=np.uint8)
    if len(raw) != params.n_in:
        raise ValueError(f"raw length {len(raw)} does not match n_in {params.n_in}")
    assert params.n_in < 2 ** (8 * _LANE_BYTES)
    product = _bits_to_lanes(raw) * _bits_to_lanes(params.seed_bits)
    n_lanes = len(raw) + len(params.seed_bits)
    buf = int(product).to_bytes(n_lanes * _LANE_BYTES, "little")
    coeff_lsb = np.frombuffer(buf, dtype=np.uint8)[:: _LANE_BYTES]
    return (coeff_lsb[params.n_in - 1 : params.n_in - 1 + params.n_out] & 1).astype(
        np.uint8
    )


def toeplitz_hash_naive(raw: np.ndarray, params: ExtractorParams) -> np.ndarray:
    """Direct bit-by-bit evaluation of the defining formula (test oracle)."""
    raw = np.asarray(raw) & 1
    if len(raw) != params.n_in:
        raise ValueError(f"raw length {len(raw)} does not match n_in {params.n_in}")
    seed = params.seed_bits
    out = np.zeros(params.n_out, dtype=np.uint8)
    for i in range(params.n_out):
        acc = 0
        for j in range(params.n_in):
            acc ^= int(seed[i - j + params.n_in - 1]) & int(raw[j])
        out[i] = acc
    return out


@dataclass(frozen=True)
class SanityReport:
    """Monobit and runs statistics of a bit stream."""

    n_bits: int
    monobit_z: float
    monobit_p: float
    runs_p: float
    threshold: float = 0.01

    @property
    def passed(self) -> bool:
        return self.monobit_p >= self.threshold and self.runs_p >= self.threshold


def sanity_tests(bits: np.ndarray, threshold: float = 0.01) -> SanityReport:
    """Monobit z-statistic and runs-test p-value (pass at p >= 0.01).

    Not a substitute for full statistical batteries; catches gross
    bias and oscillation artifacts only.
    """
    bits = np.asarray(bits) & 1
    n = len(bits)
    if n < 10_000:
        raise ValueError("sanity tests need at least 1e4 bits")
    ones = int(bits.sum())
    z = (2.0 * ones - n) / np.sqrt(n)
    monobit_p = float(erfc(abs(z) / np.sqrt(2.0)))
    pi = ones / n
    if pi in (0.0, 1.0):
        runs_p = 0.0
    else:
        v = 1 + int(np.count_nonzero(np.diff(bits)))
        runs_p = float(
            erfc(abs(v - 2.0 * n * pi * (1 - pi)) / (2.0 * np.sqrt(2.0 * n) * pi * (1 - pi)))
        )
    return SanityReport(n, float(z), monobit_p, runs_p, threshold)


def pack_bits(bits: np.ndarray) -> bytes:
    """Pack a bit array into bytes, LSB of byte 0 first."""
    return np.packbits(np.asarray(bits, dtype=np.uint8), bitorder="little").tobytes()


def unpack_bits(payload: bytes, n_bits: int) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8), bitorder="little")
    if len(bits) < n_bits:
        raise ValueError("payload too short for requested bit count")
    return bits[:n_bits]


def extraction_manifest(
    params: ExtractorParams, certificate_digest: str
) -> str:
    """JSON manifest recording the extraction shape and provenance."""
    doc = {
        "n_in": params.n_in,
        "n_out": params.n_out,
        "epsilon_re": params.epsilon_re,
        "certificate_digest": certificate_digest,
        "seed_digest": hashlib.sha256(params.seed_bits.tobytes()).hexdigest(),
    }
    return json.dumps(doc, sort_keys=True, indent=2)

"""Scrambled block Hadamard sensing, uniform quantization and packet I/O.

The sensing operator is: seeded pixel permutation -> blockwise Hadamard
transform on consecutive groups of block_size**2 samples (scaled orthonormal)
-> subsampling of M coefficients chosen by a second seeded permutation.  All
randomness comes from a fixed xorshift64* generator with Fisher-Yates, so the
operator is reproducible bit-for-bit across platforms.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np
from scipy.linalg import hadamard

from .coder import BitstreamError, entropy_decode, entropy_encode

MAGIC = b"GCMP"
VERSION = 1
_SELECT_SEED_TWEAK = 0x9E3779B97F4A7C15  # decorrelates the subsampling permutation


@dataclass(frozen=True)
class SensingSpec:
    dims: tuple[int, int]
    m_count: int
    block_size: int = 8
    seed: int = 0

    def __post_init__(self):
        n1, n2 = self.dims
        if n1 <= 0 or n2 <= 0:
            raise ValueError("dims must be positive")
        if self.block_size < 1:
            raise ValueError("block_size must be >= 1")
        if not (1 <= self.m_count <= n1 * n2):
            raise ValueError("m_count must be in [1, N1*N2]")

    @property
    def padded_len(self) -> int:
        n = self.dims[0] * self.dims[1]
        b = self.block_size ** 2
        return ((n + b - 1) // b) * b


@dataclass(frozen=True)
class QuantizerSpec:
    bits: int
    step: float
    offset: float

    def __post_init__(self):
        if self.bits < 1:
            raise ValueError("bits must be >= 1")
        if self.step <= 0:
            raise ValueError("step must be positive")

    @property
    def levels(self) -> int:
        return 1 << self.bits


@dataclass
class MeasurementPacket:
    """Everything the decoder knows about a compressed image."""

    sensing: SensingSpec
    quant: QuantizerSpec
    indices: np.ndarray
    bitstream_len: int  # total serialized size in bits (header included)

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        if self.indices.size != self.sensing.m_count:
            raise ValueError("index count must equal m_count")
        if self.indices.size and int(self.indices.max()) >= self.quant.levels:
            raise ValueError("index exceeds quantizer levels")

    @property
    def dequantized(self) -> np.ndarray:
        return dequantize(self.indices, self.quant)

    @property
    def cell_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return cell_bounds(self.indices, self.quant)


def _xorshift64star(state: int):
    """Fixed-constant xorshift64* stream of 64-bit integers."""
    state = (state or 0x106689D45497FDB5) & 0xFFFFFFFFFFFFFFFF
    while True:
        state ^= state >> 12
        state ^= (state << 25) & 0xFFFFFFFFFFFFFFFF
        state ^= state >> 27
        state &= 0xFFFFFFFFFFFFFFFF
        yield (state * 0x2545F4914F6CDD1D) & 0xFFFFFFFFFFFFFFFF


def _permutation(n: int, seed: int) -> np.ndarray:
    """Fisher-Yates permutation of range(n) driven by xorshift64*."""
    rng = _xorshift64star(seed)
    perm = np.arange(n, dtype=np.int64)
    for i in range(n - 1, 0, -1):
        j = next(rng) % (i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return perm


class _OperatorCache:
    """Per-spec cache of the permutations and the Hadamard matrix."""

    def __init__(self):
        self._cache: dict[tuple, tuple] = {}

    def get(self, spec: SensingSpec):
        key = (spec.dims, spec.block_size, spec.seed, spec.m_count)
        if key not in self._cache:
            b = spec.block_size ** 2
            n_pad = spec.padded_len
            perm = _permutation(n_pad, spec.seed)
            sel = _permutation(n_pad, spec.seed ^ _SELECT_SEED_TWEAK)[:spec.m_count]
            h = hadamard(b).astype(np.float64) / np.sqrt(b)
            self._cache[key] = (perm, sel, h)
        return self._cache[key]


_OPERATOR = _OperatorCache()


def sense(image: np.ndarray, spec: SensingSpec) -> np.ndarray:
    """Apply the sensing operator: y = Phi @ vec(image), length m_count."""
    if image.shape != tuple(spec.dims):
        raise ValueError("image dims do not match the sensing spec")
    perm, sel, h = _OPERATOR.get(spec)
    b = spec.block_size ** 2
    vec = np.zeros(spec.padded_len, dtype=np.float64)
    vec[:image.size] = image.ravel()
    coeffs = (vec[perm].reshape(-1, b) @ h).ravel()
    return coeffs[sel]


def apply_sensing(atom_grid: np.ndarray, spec: SensingSpec) -> np.ndarray:
    """Sense a rendered atom; identical contract to sense."""
    return sense(atom_grid, spec)


def quantizer_for(y: np.ndarray, bits: int) -> QuantizerSpec:
    """Mid-rise uniform quantizer over [-3*std(y), +3*std(y)]."""
    sigma = float(np.std(y))
    if sigma <= 0 or not np.isfinite(sigma):
        sigma = 1.0
    span = 6.0 * sigma
    return QuantizerSpec(bits=bits, step=span / (1 << bits), offset=-3.0 * sigma)


def quantize(y: np.ndarray, quant: QuantizerSpec) -> tuple[np.ndarray, np.ndarray]:
    """Return (indices, dequantized midpoints) for a measurement vector."""
    idx = np.floor((np.asarray(y, dtype=np.float64) - quant.offset) / quant.step)
    idx = np.clip(idx, 0, quant.levels - 1).astype(np.int64)
    return idx, dequantize(idx, quant)


def dequantize(indices: np.ndarray, quant: QuantizerSpec) -> np.ndarray:
    return quant.offset + (np.asarray(indices, dtype=np.float64) + 0.5) * quant.step


def cell_bounds(indices: np.ndarray,
                quant: QuantizerSpec) -> tuple[np.ndarray, np.ndarray]:
    """Half-open cell bounds per index; end cells are half-infinite."""
    indices = np.asarray(indices, dtype=np.float64)
    lo = quant.offset + indices * quant.step
    hi = quant.offset + (indices + 1) * quant.step
    lo[indices == 0] = -np.inf
    hi[indices == quant.levels - 1] = np.inf
    return lo, hi


# ---------------------------------------------------------------------------
# bitstream file format
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<4sBIIHQIBddII")  # magic, ver, N1, N2, block, seed,
                                           # M, bits, step, offset, payload_len, crc32


def encode_packet(image: np.ndarray, spec: SensingSpec,
                  quant_bits: int) -> tuple[MeasurementPacket, bytes]:
    """Sense, quantize and entropy-code an image into a GCMP bitstream."""
    y = sense(image, spec)
    quant = quantizer_for(y, quant_bits)
    indices, _ = quantize(y, quant)
    payload = entropy_encode(indices, quant.bits)
    header = _HEADER.pack(MAGIC, VERSION, spec.dims[0], spec.dims[1],
                          spec.block_size, spec.seed, spec.m_count, quant.bits,
                          quant.step, quant.offset, len(payload),
                          zlib.crc32(payload))
    blob = header + payload
    packet = MeasurementPacket(spec, quant, indices, len(blob) * 8)
    return packet, blob


def decode_packet(blob: bytes) -> MeasurementPacket:
    """Parse and entropy-decode a GCMP bitstream."""
    if len(blob) < _HEADER.size:
        raise BitstreamError("bitstream too short")
    (magic, version, n1, n2, block, seed, m, bits, step, offset,
     payload_len, crc) = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise BitstreamError("bad magic")
    if version != VERSION:
        raise BitstreamError(f"unsupported version {version}")
    payload = blob[_HEADER.size:_HEADER.size + payload_len]
    if len(payload) != payload_len:
        raise BitstreamError("truncated payload")
    if zlib.crc32(payload) != crc:
        raise BitstreamError("payload checksum mismatch")
    indices = entropy_decode(payload, m, bits)
    spec = SensingSpec(dims=(n1, n2), m_count=m, block_size=block, seed=seed)
    quant = QuantizerSpec(bits=bits, step=step, offset=offset)
    return MeasurementPacket(spec, quant, indices,
                             (_HEADER.size + payload_len) * 8)

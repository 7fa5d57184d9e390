"""Code-offset reconciliation, CRC agreement check, guard-band calibration and
SHA-256 privacy amplification.

Bob masks his key with a random BCH codeword and publishes the mask
``s = K_B xor c``. Alice computes ``K_A xor s = c xor e``, decodes the
codeword and recovers ``K_B``; a CRC-32 of Bob's key confirms agreement.
"""

from __future__ import annotations

import hashlib
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .bch import BchCode, DecodingError, default_code
from .quantizer import ALPHA_MAX, DiversityQuantizer, merge_drops

PA_INPUT_BITS = 512


@dataclass(frozen=True)
class ReconMessage:
    block_id: int
    s: np.ndarray
    v: int

    def __post_init__(self):
        object.__setattr__(self, "s", np.asarray(self.s, dtype=np.uint8))

    def to_bytes(self) -> bytes:
        return (
            struct.pack(">IH", self.block_id, self.s.size)
            + np.packbits(self.s).tobytes()
            + struct.pack(">I", self.v)
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "ReconMessage":
        msg, used = cls.unpack_from(data)
        if used != len(data):
            raise ValueError("trailing bytes after recon message")
        return msg

    @classmethod
    def unpack_from(cls, data: bytes, offset: int = 0) -> tuple["ReconMessage", int]:
        block_id, n_bits = struct.unpack_from(">IH", data, offset)
        n_bytes = (n_bits + 7) // 8
        start = offset + 6
        s = np.unpackbits(np.frombuffer(data[start:start + n_bytes], dtype=np.uint8))[:n_bits]
        (v,) = struct.unpack_from(">I", data, start + n_bytes)
        return cls(block_id, s, v), start + n_bytes + 4 - offset

    def __eq__(self, other):
        if not isinstance(other, ReconMessage):
            return NotImplemented
        return self.block_id == other.block_id and self.v == other.v and np.array_equal(self.s, other.s)

    __hash__ = None


@dataclass(frozen=True)
class CalibrationPolicy:
    delta_alpha: float = 0.2
    max_calibrations: int = 2

    def __post_init__(self):
        if self.delta_alpha <= 0:
            raise ValueError("delta_alpha must be positive")
        if self.max_calibrations < 0:
            raise ValueError("max_calibrations must be non-negative")


@dataclass(frozen=True)
class IRC:
    block_id: int
    flag: int


def crc32_bits(bits) -> int:
    """CRC-32 (IEEE 802.3, reflected) of key bits packed MSB-first."""
    return zlib.crc32(np.packbits(np.asarray(bits, dtype=np.uint8)).tobytes()) & 0xFFFFFFFF


def _bits(key) -> np.ndarray:
    return np.asarray(getattr(key, "bits", key), dtype=np.uint8)


def _pad(bits: np.ndarray, n: int) -> np.ndarray:
    chunks = max(1, -(-bits.size // n))
    out = np.zeros(chunks * n, dtype=np.uint8)
    out[: bits.size] = bits
    return out


def make_recon_message(key_b, code: BchCode | None = None, rng=None, block_id: int = 0) -> ReconMessage | None:
    """Bob's masking message, or None for an empty key."""
    code = code or default_code()
    rng = np.random.default_rng(rng)
    kb = _bits(key_b)
    if kb.size == 0:
        return None
    padded = _pad(kb, code.n)
    mask = np.concatenate([
        code.encode(rng.integers(0, 2, code.k, dtype=np.uint8))
        for _ in range(padded.size // code.n)
    ])
    return ReconMessage(block_id, padded ^ mask, crc32_bits(kb))


def correct(key_a, msg: ReconMessage, code: BchCode | None = None) -> tuple[np.ndarray | None, IRC]:
    """Alice's correction step; returns (K_A' or None, IRC)."""
    code = code or default_code()
    ka = _bits(key_a)
    padded = _pad(ka, code.n)
    if padded.size != msg.s.size:
        raise ValueError(f"key of {ka.size} bits does not match mask of {msg.s.size} bits")
    r = padded ^ msg.s
    try:
        c_hat = np.concatenate([
            code.decode(r[i:i + code.n]) for i in range(0, r.size, code.n)
        ])
    except DecodingError:
        return None, IRC(msg.block_id, 0)
    corrected = (c_hat ^ msg.s)[: ka.size]
    if crc32_bits(corrected) != msg.v:
        return None, IRC(msg.block_id, 0)
    return corrected, IRC(msg.block_id, 1)


def correctable(key_a, key_b, code: BchCode | None = None) -> bool:
    """Offline shortcut: decoding succeeds exactly when each codeword chunk
    carries at most t disagreements (beyond t any decoded codeword is wrong
    and the CRC rejects it)."""
    code = code or default_code()
    a, b = _pad(_bits(key_a), code.n), _pad(_bits(key_b), code.n)
    diff = (a ^ b).reshape(-1, code.n).sum(axis=1)
    return bool(np.all(diff <= code.t))


@dataclass
class CalibrationStep:
    alpha: float
    n_bits: int
    n_mismatch: int
    irc: int

    @property
    def kdr(self) -> float:
        return self.n_mismatch / self.n_bits if self.n_bits else 0.0


@dataclass
class BlockResult:
    block_id: int
    m: int
    alpha: float
    agreed: bool
    calibrations: int
    key: np.ndarray | None
    trajectory: list = field(default_factory=list)


def calibrated_alpha(alpha: float, attempt: int, policy: CalibrationPolicy) -> float:
    return min(alpha + attempt * policy.delta_alpha, ALPHA_MAX)


def reconcile_with_calibration(quant_a: DiversityQuantizer, quant_b: DiversityQuantizer,
                               alpha: float, policy: CalibrationPolicy | None = None,
                               code: BchCode | None = None, rng=None,
                               block_id: int = 0) -> BlockResult:
    """Reconcile one diversity block, widening guard bands after each failure.

    Both quantizers must cover the same probe indices at the same level. A
    block whose key is still rejected after ``max_calibrations`` retries is
    dropped.
    """
    policy = policy or CalibrationPolicy()
    code = code or default_code()
    rng = np.random.default_rng(rng)
    trajectory = []
    for attempt in range(policy.max_calibrations + 1):
        a = calibrated_alpha(alpha, attempt, policy)
        out_a, out_b = quant_a.quantize(a), quant_b.quantize(a)
        key_a = merge_drops(out_a, out_b.dropped).bits
        key_b = merge_drops(out_b, out_a.dropped).bits
        if key_b.size == 0:
            trajectory.append(CalibrationStep(a, 0, 0, 0))
            break
        msg = make_recon_message(key_b, code, rng, block_id)
        corrected, irc = correct(key_a, msg, code)
        trajectory.append(CalibrationStep(a, key_b.size, int(np.count_nonzero(key_a != key_b)), irc.flag))
        if irc.flag:
            return BlockResult(block_id, quant_a.m, a, True, attempt, corrected, trajectory)
    return BlockResult(block_id, quant_a.m, trajectory[-1].alpha, False, len(trajectory) - 1, None, trajectory)


class PrivacyAmplifier:
    """Hashes disjoint 512-bit chunks into 256-bit keys, buffering the rest."""

    def __init__(self, chunk_bits: int = PA_INPUT_BITS):
        if chunk_bits % 8:
            raise ValueError("chunk size must be a whole number of bytes")
        self.chunk_bits = chunk_bits
        self.buffer = np.zeros(0, dtype=np.uint8)

    def feed(self, bits) -> list[bytes]:
        self.buffer = np.concatenate([self.buffer, _bits(bits)])
        keys = []
        while self.buffer.size >= self.chunk_bits:
            chunk, self.buffer = self.buffer[: self.chunk_bits], self.buffer[self.chunk_bits:]
            keys.append(hashlib.sha256(np.packbits(chunk).tobytes()).digest())
        return keys


def privacy_amplify(bits) -> tuple[list[bytes], np.ndarray]:
    """(final 256-bit keys, leftover bits carried to the next session)."""
    pa = PrivacyAmplifier()
    keys = pa.feed(bits)
    return keys, pa.buffer

"""Multi-level mean-split quantization with guard bands and Gray coding.

Thresholds are built by recursive mean splitting of the block range. Each
internal threshold ``q_n`` carries a guard band of half-width ``alpha * s_n``
where ``s_n`` is the population standard deviation of the samples lying
between the neighbouring thresholds. Samples in a guard band are dropped and
the drop sets of both parties are merged before keys are compared.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

LEVELS = (2, 4, 8)
BLOCK_LEN = {2: 5, 4: 20, 8: 40}
DIVERSITY_LEN = 40
ALPHA_MAX = 1.5


class DegenerateBlockError(ValueError):
    """The block is constant, so no thresholds exist."""


def bits_per_sample(m: int) -> int:
    if m not in LEVELS:
        raise ValueError(f"quantization level must be one of {LEVELS}, got {m}")
    return m.bit_length() - 1


@dataclass(frozen=True)
class QuantParams:
    m: int
    alpha: float
    block_len: int | None = None

    def __post_init__(self):
        bits_per_sample(self.m)
        if not 0.0 <= self.alpha <= ALPHA_MAX + 1e-12:
            raise ValueError(f"alpha must lie in [0, {ALPHA_MAX}], got {self.alpha}")
        if self.block_len is None:
            object.__setattr__(self, "block_len", BLOCK_LEN[self.m])
        elif self.block_len < 1:
            raise ValueError("block_len must be positive")


@dataclass(frozen=True)
class Thresholds:
    """``q`` holds q_0..q_m; ``s`` holds s_1..s_{m-1}."""

    q: tuple[float, ...]
    s: tuple[float, ...]
    alpha: float = 0.0

    @property
    def m(self) -> int:
        return len(self.q) - 1

    def guards(self) -> list[tuple[float, float]]:
        return [
            (self.q[n] - self.alpha * self.s[n - 1], self.q[n] + self.alpha * self.s[n - 1])
            for n in range(1, self.m)
        ]

    def with_alpha(self, alpha: float) -> "Thresholds":
        return Thresholds(self.q, self.s, alpha)


@dataclass(frozen=True)
class BitKey:
    """Key bits grouped per source sample; ``width`` bits per group."""

    bits: np.ndarray
    source_indices: np.ndarray
    width: int

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8)
        idx = np.asarray(self.source_indices, dtype=np.int64)
        if self.width < 1 or bits.size != idx.size * self.width:
            raise ValueError("bit count must equal width * number of source indices")
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "source_indices", idx)

    def __len__(self) -> int:
        return int(self.bits.size)

    def bitstring(self) -> str:
        return "".join("1" if b else "0" for b in self.bits)

    @classmethod
    def empty(cls, width: int) -> "BitKey":
        return cls(np.zeros(0, np.uint8), np.zeros(0, np.int64), width)


@dataclass(frozen=True)
class QuantOutcome:
    bits: BitKey
    dropped: frozenset[int]
    thresholds: Thresholds | None

    @property
    def retained(self) -> frozenset[int]:
        return frozenset(self.bits.source_indices.tolist())


def partition(values: Sequence, block_len: int) -> list:
    """Split into consecutive full blocks; a short tail is discarded."""
    if block_len < 1:
        raise ValueError("block_len must be >= 1")
    n_blocks = len(values) // block_len
    return [values[k * block_len:(k + 1) * block_len] for k in range(n_blocks)]


def _mean_split(x: np.ndarray, lo: float, hi: float, closed_low: bool) -> float:
    """Mean of the samples in the window; the window midpoint if it is empty.

    An empty window holds no samples, so any split point inside it gives the
    same interval membership; the midpoint keeps thresholds ordered.
    """
    sel = x[(x >= lo) & (x <= hi)] if closed_low else x[(x > lo) & (x <= hi)]
    if sel.size == 0:
        return (lo + hi) / 2
    return float(sel.mean())


def compute_thresholds(block: Sequence[float], m: int, alpha: float = 0.0) -> Thresholds:
    """Mean-split thresholds and guard widths for one quantization block."""
    bits_per_sample(m)
    x = np.asarray(block, dtype=float)
    if x.size == 0:
        raise ValueError("empty block")
    q = [None] * (m + 1)
    q[0], q[m] = float(x.min()), float(x.max())
    if q[0] == q[m]:
        raise DegenerateBlockError("constant block has no quantization thresholds")
    step = m
    while step > 1:
        half = step // 2
        for lo in range(0, m, step):
            q[lo + half] = _mean_split(x, q[lo], q[lo + step], closed_low=lo == 0)
        step = half
    s = []
    for n in range(1, m):
        lo, hi = q[n - 1], q[n + 1]
        sel = x[(x >= lo) & (x <= hi)] if n == 1 else x[(x > lo) & (x <= hi)]
        s.append(float(sel.std()) if sel.size else 0.0)
    return Thresholds(tuple(q), tuple(s), alpha)


def gray_code(interval_index: int, m: int) -> str:
    """Gray word for interval Q_i; Q_1 (lowest) gets the word of m-1."""
    width = bits_per_sample(m)
    if not 1 <= interval_index <= m:
        raise ValueError(f"interval index {interval_index} outside 1..{m}")
    j = m - interval_index
    return format(j ^ (j >> 1), f"0{width}b")


def _gray_table(m: int) -> np.ndarray:
    width = bits_per_sample(m)
    return np.array([[int(c) for c in gray_code(i, m)] for i in range(1, m + 1)], dtype=np.uint8).reshape(m, width)


_GRAY = {m: _gray_table(m) for m in LEVELS}


def interval_index(x: np.ndarray, thr: Thresholds) -> np.ndarray:
    """Interval number 1..m of each sample, ignoring guard bands."""
    internal = np.asarray(thr.q[1:-1])
    return 1 + (np.asarray(x, dtype=float)[:, None] > internal[None, :]).sum(axis=1)


def guard_mask(x: np.ndarray, thr: Thresholds) -> np.ndarray:
    """True where a sample falls in a guard band.

    A band of non-zero width is closed at both ends: values exactly on
    ``q_n - alpha*s_n`` count as guarded. Zero-width bands drop nothing.
    """
    x = np.asarray(x, dtype=float)
    mask = np.zeros(x.shape, dtype=bool)
    for (lo, hi), s in zip(thr.guards(), thr.s):
        if thr.alpha * s > 0:
            mask |= (x >= lo) & (x <= hi)
    return mask


def encode(x: np.ndarray, thr: Thresholds) -> np.ndarray:
    """Gray bits (rows per sample) for samples assumed outside guard bands."""
    return _GRAY[thr.m][interval_index(x, thr) - 1]


def quantize_with(values: Sequence[float], indices: Sequence[int], thr: Thresholds) -> QuantOutcome:
    x = np.asarray(values, dtype=float)
    idx = np.asarray(indices, dtype=np.int64)
    drop = guard_mask(x, thr)
    keep = ~drop
    bits = encode(x[keep], thr).reshape(-1)
    key = BitKey(bits, idx[keep], bits_per_sample(thr.m))
    return QuantOutcome(key, frozenset(idx[drop].tolist()), thr)


def quantize_block(block: Sequence[float], m: int, alpha: float,
                   indices: Sequence[int] | None = None) -> QuantOutcome:
    """Quantize one block; raises DegenerateBlockError for constant input."""
    if indices is None:
        indices = range(len(block))
    thr = compute_thresholds(block, m, alpha)
    return quantize_with(block, list(indices), thr)


def merge_drops(outcome: QuantOutcome, dropped_other: Iterable[int]) -> BitKey:
    """Remove every bit group whose sample was dropped by either party."""
    key = outcome.bits
    excluded = set(outcome.dropped) | set(dropped_other)
    if not excluded:
        return key
    keep = np.array([i not in excluded for i in key.source_indices.tolist()], dtype=bool)
    bit_keep = np.repeat(keep, key.width)
    return BitKey(key.bits[bit_keep], key.source_indices[keep], key.width)


class DiversityQuantizer:
    """Quantizes one diversity block at a fixed level for any alpha.

    Thresholds do not depend on alpha, so they are computed once per
    quantization block and reused across guard-band settings. Constant
    quantization blocks produce no bits; their samples are reported as
    dropped so the peer discards them too.
    """

    def __init__(self, values: Sequence[float], indices: Sequence[int], m: int,
                 block_len: int | None = None):
        self.m = m
        self.width = bits_per_sample(m)
        self.block_len = block_len or BLOCK_LEN[m]
        vals = np.asarray(values, dtype=float)
        idx = np.asarray(indices, dtype=np.int64)
        self.blocks = []
        for v, i in zip(partition(vals, self.block_len), partition(idx, self.block_len)):
            try:
                thr = compute_thresholds(v, m)
            except DegenerateBlockError:
                thr = None
            self.blocks.append((v, i, thr))

    def quantize(self, alpha: float) -> QuantOutcome:
        bits, src, dropped = [], [], set()
        for v, i, thr in self.blocks:
            if thr is None:
                dropped.update(i.tolist())
                continue
            out = quantize_with(v, i, thr.with_alpha(alpha))
            bits.append(out.bits.bits)
            src.append(out.bits.source_indices)
            dropped |= out.dropped
        if bits:
            key = BitKey(np.concatenate(bits), np.concatenate(src), self.width)
        else:
            key = BitKey.empty(self.width)
        return QuantOutcome(key, frozenset(dropped), None)

    def drop_matrix(self, alphas: Sequence[float]) -> np.ndarray:
        """Dropped flags for every sample (columns) at every alpha (rows).

        Row ``j`` equals the drop set of ``quantize(alphas[j])``.
        """
        a = np.asarray(alphas, dtype=float)[:, None]
        cols = []
        for v, _, thr in self.blocks:
            if thr is None:
                cols.append(np.ones((a.shape[0], len(v)), dtype=bool))
                continue
            x = np.asarray(v, dtype=float)[None, :]
            mask = np.zeros((a.shape[0], len(v)), dtype=bool)
            for q, sd in zip(thr.q[1:-1], thr.s):
                width = a * sd
                mask |= (width > 0) & (x >= q - width) & (x <= q + width)
            cols.append(mask)
        if not cols:
            return np.zeros((a.shape[0], 0), dtype=bool)
        return np.concatenate(cols, axis=1)

    def eavesdrop(self) -> BitKey:
        """Bits for every sample with guard bands ignored; constant blocks
        map every sample to the lowest interval."""
        bits, src = [], []
        for v, i, thr in self.blocks:
            if thr is None:
                bits.append(np.tile(_GRAY[self.m][0], len(v)))
            else:
                bits.append(encode(v, thr).reshape(-1))
            src.append(i)
        if not bits:
            return BitKey.empty(self.width)
        return BitKey(np.concatenate(bits), np.concatenate(src), self.width)


def quantize_diversity_block(values, indices, m: int, alpha: float,
                             block_len: int | None = None) -> QuantOutcome:
    return DiversityQuantizer(values, indices, m, block_len).quantize(alpha)

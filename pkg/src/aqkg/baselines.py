"""Reference schemes: differential quantization and the best fixed (m, alpha)."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .bch import BchCode, default_code
from .quantizer import ALPHA_MAX, DIVERSITY_LEN, LEVELS, BitKey, DiversityQuantizer, bits_per_sample, merge_drops
from .randomness import kgr as kgr_ratio, kdr as kdr_ratio, nfr as nfr_ratio, split_keys
from .reconciliation import correctable, privacy_amplify
from .training import ALPHA_STEP_PER_UNIT, diversity_blocks, lattice_alpha
from .traces import ProbeSession, RssiTrace, align


@dataclass(frozen=True)
class BenchmarkRow:
    method: str
    kgr: float
    kdr: float
    nfr: float


def differential_quantize(trace: RssiTrace | np.ndarray) -> BitKey:
    """One bit per adjacent pair: 1 when the RSSI rises, else 0 (ties give 0)."""
    if isinstance(trace, RssiTrace):
        values, idx = trace.values, trace.indices
    else:
        values = np.asarray(trace)
        idx = np.arange(values.size)
    if values.size < 2:
        return BitKey.empty(1)
    bits = (values[1:] > values[:-1]).astype(np.uint8)
    return BitKey(bits, idx[1:], 1)


def differential_row(session: ProbeSession) -> BenchmarkRow:
    s = session if session.is_aligned else align(session)
    ka = differential_quantize(s.trace_a).bits
    kb = differential_quantize(s.trace_b).bits
    if ka.size == 0:
        return BenchmarkRow("differential", 0.0, 0.0, 0.0)
    d = kdr_ratio(ka, kb)
    # differential keys are compared as raw bits, chunked into 120-bit blocks
    # and reconciled like a diversity block of the adaptive scheme
    agreed = []
    for i in range(0, ka.size - 119, 120):
        if correctable(ka[i:i + 120], kb[i:i + 120]):
            agreed.append(kb[i:i + 120])
    bits = np.concatenate(agreed) if agreed else np.zeros(0, np.uint8)
    return BenchmarkRow("differential", kgr_ratio(bits.size, len(s.trace_a)), d, _nfr_of(bits))


def _nfr_of(bits: np.ndarray) -> float:
    keys, _ = privacy_amplify(bits)
    seqs = split_keys(keys)
    return nfr_ratio(seqs)[2] if seqs else 0.0


class _SessionGrid:
    """Per-block quantizers for both parties at every level, built once."""

    def __init__(self, session: ProbeSession, code: BchCode):
        s = session if session.is_aligned else align(session)
        self.blocks = list(diversity_blocks(s))
        if not self.blocks:
            raise ValueError("session has no complete diversity block")
        self.code = code
        self.quant = {
            m: [(DiversityQuantizer(a, i, m), DiversityQuantizer(b, i, m)) for _, i, a, b in self.blocks]
            for m in LEVELS
        }
        self.n_rssi = len(self.blocks) * DIVERSITY_LEN

    def run(self, m: int, alpha: float):
        """(agreed bits, mismatched bits, compared bits) for one global setting."""
        agreed, mism, total = [], 0, 0
        for qa, qb in self.quant[m]:
            oa, ob = qa.quantize(alpha), qb.quantize(alpha)
            ka = merge_drops(oa, ob.dropped).bits
            kb = merge_drops(ob, oa.dropped).bits
            if kb.size == 0:
                continue
            mism += int(np.count_nonzero(ka != kb))
            total += kb.size
            if correctable(ka, kb, self.code):
                agreed.append(kb)
        bits = np.concatenate(agreed) if agreed else np.zeros(0, np.uint8)
        return bits, mism, total

    def sweep(self, m: int, alphas) -> np.ndarray:
        """Agreed bit count at every alpha in one pass.

        Valid because a diversity block holds at most 3 * 40 = 120 < n bits,
        so each block is one codeword and decodes iff mismatches <= t.
        """
        width = bits_per_sample(m)
        agreed = np.zeros(len(alphas), dtype=np.int64)
        for qa, qb in self.quant[m]:
            keep = ~(qa.drop_matrix(alphas) | qb.drop_matrix(alphas))
            wa, wb = qa.eavesdrop().bits, qb.eavesdrop().bits
            diff = (wa != wb).reshape(-1, width).sum(axis=1)
            n_bits = width * keep.sum(axis=1)
            mism = keep @ diff
            agreed += np.where((n_bits > 0) & (mism <= self.code.t), n_bits, 0)
        return agreed


def fixed_search(session: ProbeSession, code: BchCode | None = None,
                 alpha_max: float = ALPHA_MAX) -> tuple[int, float, BenchmarkRow]:
    """Exhaustive search of one global (m, alpha) maximizing end-to-end KGR.

    Uses both traces, so it is an offline upper bound for fixed
    quantization. Reconciliation runs without calibration; ties keep the
    larger level and then the smaller alpha.
    """
    code = code or default_code()
    grid = _SessionGrid(session, code)
    steps = range(int(round(alpha_max * ALPHA_STEP_PER_UNIT)) + 1)
    alphas = [lattice_alpha(k) for k in steps]
    best = None
    for m in LEVELS:
        counts = grid.sweep(m, alphas)
        for step, n in zip(steps, counts):
            key = (int(n), m, -step)
            if best is None or key > best:
                best = key
    _, m, neg_step = best
    alpha = alphas[-neg_step]
    bits, mism, total = grid.run(m, alpha)
    row = BenchmarkRow("fixed", kgr_ratio(bits.size, grid.n_rssi), mism / total if total else 0.0, _nfr_of(bits))
    return m, alpha, row


def fixed_kgr(session: ProbeSession, m: int, alpha: float, code: BchCode | None = None) -> float:
    grid = _SessionGrid(session, code or default_code())
    bits, _, _ = grid.run(m, alpha)
    return kgr_ratio(bits.size, grid.n_rssi)


def benchmark_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("method", "kgr", "kdr", "nfr"))
    for r in rows:
        w.writerow((r.method, f"{r.kgr:.6g}", f"{r.kdr:.6g}", f"{r.nfr:.6g}"))
    return buf.getvalue()

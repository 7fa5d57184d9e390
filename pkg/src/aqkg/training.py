"""Offline training: per-block optimal parameters and regression fitting.

Needs both parties' measurements, so it only runs on pre-collected data.
The level objective is to maximize KGR subject to KDR <= 20%. Picking the
level by largest KDR instead would select the worst level.
"""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .complexity import normalized_complexity
from .quantizer import (ALPHA_MAX, DIVERSITY_LEN, LEVELS, DiversityQuantizer,
                        bits_per_sample, merge_drops, partition)
from .selector import AdaptiveModel, PiecewiseLinearModel
from .traces import ProbeSession

KDR_TARGET = 0.20
ALPHA_STEP_PER_UNIT = 100  # alpha lattice spacing 0.01
MIN_RECORDS = 20
MIN_DISTINCT_C = 5


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class TrainingRecord:
    block_id: int
    C: float
    m_opt: int
    alpha_opt: float
    kgr: float
    kdr: float


@dataclass
class LevelSearch:
    """Search trajectory for one level: (alpha, n_bits, kdr) per visited alpha."""

    m: int
    steps: list = field(default_factory=list)
    feasible: bool = False

    @property
    def alpha(self) -> float:
        return self.steps[-1][0]

    @property
    def kgr(self) -> float:
        return self.steps[-1][1] / DIVERSITY_LEN

    @property
    def kdr(self) -> float:
        return self.steps[-1][2]


@dataclass
class BlockSearch:
    levels: dict
    m: int | None
    alpha: float | None

    @property
    def feasible(self) -> bool:
        return self.m is not None


def lattice_alpha(step: int) -> float:
    return round(step / ALPHA_STEP_PER_UNIT, 10)


def evaluate(quant_a: DiversityQuantizer, quant_b: DiversityQuantizer, alpha: float) -> tuple[int, float]:
    """(agreed-length key bits, KDR) after union-dropping at ``alpha``."""
    out_a, out_b = quant_a.quantize(alpha), quant_b.quantize(alpha)
    ka = merge_drops(out_a, out_b.dropped).bits
    kb = merge_drops(out_b, out_a.dropped).bits
    if ka.size == 0:
        return 0, 0.0
    return int(ka.size), float(np.count_nonzero(ka != kb)) / ka.size


def search_level(values_a, values_b, indices, m: int, alpha_max: float = ALPHA_MAX) -> LevelSearch:
    qa = DiversityQuantizer(values_a, indices, m)
    qb = DiversityQuantizer(values_b, indices, m)
    res = LevelSearch(m)
    max_step = int(round(alpha_max * ALPHA_STEP_PER_UNIT))
    step = 0
    while True:
        alpha = lattice_alpha(step)
        n_bits, rate = evaluate(qa, qb, alpha)
        res.steps.append((alpha, n_bits, rate))
        if n_bits == 0:
            break
        if rate <= KDR_TARGET:
            res.feasible = True
            break
        if step >= max_step:
            break
        step += 1
    return res


def optimal_block_params(values_a: Sequence[int], values_b: Sequence[int],
                         indices: Sequence[int] | None = None,
                         alpha_max: float = ALPHA_MAX) -> BlockSearch:
    """Best (m, alpha) for one diversity block, or an infeasible result.

    For each level alpha grows from 0 in steps of 0.01 until the KDR after
    union dropping is at most 20%. Among feasible levels the one with the
    highest KGR wins; ties go to the larger level.
    """
    if len(values_a) != len(values_b):
        raise ValueError("paired blocks must have equal length")
    if indices is None:
        indices = range(len(values_a))
    indices = list(indices)
    levels = {m: search_level(values_a, values_b, indices, m, alpha_max) for m in LEVELS}
    best = None
    for m in LEVELS:
        lv = levels[m]
        if not lv.feasible:
            continue
        if best is None or lv.kgr >= levels[best].kgr:
            best = m
    if best is None:
        return BlockSearch(levels, None, None)
    return BlockSearch(levels, best, levels[best].alpha)


def diversity_blocks(session: ProbeSession, length: int = DIVERSITY_LEN):
    """Yield (block_id, indices, values_a, values_b) for consecutive full blocks."""
    idx = session.trace_a.indices
    va, vb = session.trace_a.values, session.trace_b.values
    if not np.array_equal(idx, session.trace_b.indices):
        raise ValueError("session must be aligned before splitting into diversity blocks")
    for k, (i, a, b) in enumerate(zip(partition(idx, length), partition(va, length), partition(vb, length))):
        yield k, i, a, b


def build_training_set(session: ProbeSession) -> list[TrainingRecord]:
    if len(session.trace_a) < DIVERSITY_LEN:
        raise InsufficientDataError(
            f"need at least {DIVERSITY_LEN} aligned samples, got {len(session.trace_a)}"
        )
    records = []
    for k, idx, va, vb in diversity_blocks(session):
        res = optimal_block_params(va, vb, idx)
        if not res.feasible:
            continue
        lv = res.levels[res.m]
        records.append(TrainingRecord(k, normalized_complexity(va.tolist()), res.m, res.alpha, lv.kgr, lv.kdr))
    return records


def lower_median(values: Sequence[float]) -> float:
    s = sorted(values)
    return s[(len(s) - 1) // 2]


def fit_line(points: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """Least-squares (slope, intercept); a single distinct x gives a flat line."""
    x = np.array([p[0] for p in points], dtype=float)
    y = np.array([p[1] for p in points], dtype=float)
    if x.size == 0:
        return 0.0, 0.0
    if np.ptp(x) == 0:
        return 0.0, float(y.mean())
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(intercept)


def fit_level_thresholds(medians: dict, step: float = 1 / DIVERSITY_LEN) -> tuple[float, float]:
    """Cut points of the median-bits step function.

    Candidate cuts are the observed complexity values plus two grid steps
    on either side of the observed range. The pair (t_low < t_high) minimizing the number of complexity
    groups whose median log2(m) falls on the wrong side of 1.5 / 2.5 is
    chosen; ties prefer the smallest cuts.
    """
    cs = sorted(medians)
    cands = [cs[0] - 2 * step, cs[0] - step] + cs + [cs[-1] + step, cs[-1] + 2 * step]
    best = None
    for i, lo in enumerate(cands):
        for hi in cands[i + 1:]:
            err = 0
            for c in cs:
                y = medians[c]
                pred = 1 if c < lo else (2 if c < hi else 3)
                want = 1 if y < 1.5 else (2 if y < 2.5 else 3)
                err += pred != want
            if best is None or err < best[0]:
                best = (err, lo, hi)
    return best[1], best[2]


def fit_model(records: Sequence[TrainingRecord], alpha_max: float = ALPHA_MAX) -> AdaptiveModel:
    if len(records) < MIN_RECORDS:
        raise InsufficientDataError(f"fit_model needs >= {MIN_RECORDS} records, got {len(records)}")
    distinct = {r.C for r in records}
    if len(distinct) < MIN_DISTINCT_C:
        raise InsufficientDataError(
            f"fit_model needs >= {MIN_DISTINCT_C} distinct complexity values, got {len(distinct)}"
        )
    by_c = defaultdict(list)
    for r in records:
        by_c[r.C].append(bits_per_sample(r.m_opt))
    medians = {c: lower_median(v) for c, v in by_c.items()}
    thresholds = fit_level_thresholds(medians)

    models = {}
    for m in LEVELS:
        alpha_by_c = defaultdict(list)
        for r in records:
            if r.m_opt == m:
                alpha_by_c[r.C].append(r.alpha_opt)
        points = [(c, lower_median(a)) for c, a in sorted(alpha_by_c.items())]
        slope, intercept = fit_line(points)
        models[m] = PiecewiseLinearModel.line(slope, intercept, alpha_max)
    return AdaptiveModel(thresholds, models)


def records_csv(records: Sequence[TrainingRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("block_id", "C", "m_opt", "alpha_opt", "kgr", "kdr"))
    for r in records:
        w.writerow((r.block_id, f"{r.C:.6g}", r.m_opt, f"{r.alpha_opt:.2f}", f"{r.kgr:.6g}", f"{r.kdr:.6g}"))
    return buf.getvalue()


def parse_records_csv(text: str) -> list[TrainingRecord]:
    rows = csv.DictReader(io.StringIO(text))
    return [
        TrainingRecord(int(r["block_id"]), float(r["C"]), int(r["m_opt"]),
                       float(r["alpha_opt"]), float(r["kgr"]), float(r["kdr"]))
        for r in rows
    ]

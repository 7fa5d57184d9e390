"""Paired RSSI traces: CSV ingestion, index alignment and a synthetic channel.

The simulator stands in for real bidirectional probing. A shared AR(1)
log-normal shadowing process drives both legitimate parties, each adds its
own measurement noise, and an eavesdropper sees an independently drawn
shadowing process.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

RSSI_MIN = -150
RSSI_MAX = 0
CSV_HEADER = ("index", "rssi_dbm")


class TraceError(ValueError):
    """Raised for malformed or inconsistent trace data."""


class EmptySessionError(TraceError):
    """Raised when alignment leaves no common probe index."""


@dataclass(frozen=True)
class RssiSample:
    index: int
    value: int


@dataclass(frozen=True)
class RssiTrace:
    """Ordered RSSI readings of one party, keyed by probe round."""

    party: str
    samples: tuple[RssiSample, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        prev = None
        for s in self.samples:
            if prev is not None and s.index <= prev:
                if s.index == prev:
                    raise TraceError(f"duplicate index {s.index} in {self.party} trace")
                raise TraceError(
                    f"non-increasing index {s.index} after {prev} in {self.party} trace"
                )
            if s.index < 0:
                raise TraceError(f"negative index {s.index}")
            if not RSSI_MIN <= s.value <= RSSI_MAX:
                raise TraceError(f"RSSI {s.value} dBm at index {s.index} out of range")
            prev = s.index

    @classmethod
    def from_arrays(cls, party: str, indices: Iterable[int], values: Iterable[int]) -> "RssiTrace":
        return cls(party, tuple(RssiSample(int(i), int(v)) for i, v in zip(indices, values)))

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def indices(self) -> np.ndarray:
        return np.array([s.index for s in self.samples], dtype=np.int64)

    @property
    def values(self) -> np.ndarray:
        return np.array([s.value for s in self.samples], dtype=np.int64)

    def index_set(self) -> frozenset[int]:
        return frozenset(s.index for s in self.samples)

    def restrict(self, keep: Iterable[int]) -> "RssiTrace":
        keep = set(keep)
        return RssiTrace(self.party, tuple(s for s in self.samples if s.index in keep))


@dataclass(frozen=True)
class ProbeSession:
    trace_a: RssiTrace
    trace_b: RssiTrace
    lost_a: frozenset[int] = frozenset()
    lost_b: frozenset[int] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "lost_a", frozenset(self.lost_a))
        object.__setattr__(self, "lost_b", frozenset(self.lost_b))

    @property
    def is_aligned(self) -> bool:
        return (
            self.trace_a.index_set() == self.trace_b.index_set()
            and not (self.lost_a | self.lost_b) & self.trace_a.index_set()
        )


@dataclass(frozen=True)
class SimConfig:
    """Synthetic probing parameters.

    ``diversity_profile`` optionally overrides ``shadow_sigma`` piecewise: a
    sequence of ``(n_samples, shadow_sigma)`` segments covering the probes in
    order; probes past the last segment keep the last sigma.
    """

    n_probes: int = 4000
    base_power: float = -80.0
    shadow_sigma: float = 6.0
    shadow_phi: float = 0.9
    noise_sigma: float = 1.0
    loss_prob: float = 0.0
    seed: int = 0
    diversity_profile: tuple[tuple[int, float], ...] | None = None

    def __post_init__(self):
        if self.n_probes < 0:
            raise ValueError("n_probes must be non-negative")
        if not 0.0 <= self.shadow_phi < 1.0:
            raise ValueError("shadow_phi must lie in [0, 1)")
        if not 0.0 <= self.loss_prob < 1.0:
            raise ValueError("loss_prob must lie in [0, 1)")
        if self.shadow_sigma < 0 or self.noise_sigma < 0:
            raise ValueError("sigmas must be non-negative")
        if self.diversity_profile is not None:
            prof = tuple((int(n), float(s)) for n, s in self.diversity_profile)
            if not prof or any(n <= 0 or s < 0 for n, s in prof):
                raise ValueError("diversity_profile segments need n > 0 and sigma >= 0")
            object.__setattr__(self, "diversity_profile", prof)

    def sigma_schedule(self) -> np.ndarray:
        if self.diversity_profile is None:
            return np.full(self.n_probes, self.shadow_sigma)
        sig = np.empty(self.n_probes)
        pos = 0
        last = self.shadow_sigma
        for n, s in self.diversity_profile:
            sig[pos:pos + n] = s
            pos += n
            last = s
            if pos >= self.n_probes:
                break
        sig[pos:] = last
        return sig


@dataclass(frozen=True)
class SimulatedSession:
    session: ProbeSession
    eve: RssiTrace
    config: SimConfig = field(repr=False, default=None)


def load_trace(path: str | Path, party: str = "Alice") -> RssiTrace:
    """Read a ``index,rssi_dbm`` CSV file into a trace."""
    text = Path(path).read_text(encoding="utf-8")
    return parse_trace(text, party=party, source=str(path))


def parse_trace(text: str, party: str = "Alice", source: str = "<string>") -> RssiTrace:
    lines = text.splitlines()
    if not lines:
        raise TraceError(f"{source}: missing header")
    header = tuple(h.strip() for h in lines[0].split(","))
    if header != CSV_HEADER:
        raise TraceError(f"{source}:1: expected header 'index,rssi_dbm', got {lines[0]!r}")
    samples = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise TraceError(f"{source}:{lineno}: expected 2 fields, got {len(parts)}")
        try:
            samples.append(RssiSample(int(parts[0]), int(parts[1])))
        except ValueError:
            raise TraceError(f"{source}:{lineno}: non-integer field in {line!r}") from None
    try:
        return RssiTrace(party, tuple(samples))
    except TraceError as exc:
        raise TraceError(f"{source}: {exc}") from None


def format_trace(trace: RssiTrace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for s in trace.samples:
        w.writerow((s.index, s.value))
    return buf.getvalue()


def save_trace(trace: RssiTrace, path: str | Path) -> None:
    Path(path).write_bytes(format_trace(trace).encode("utf-8"))


def align(session: ProbeSession) -> ProbeSession:
    """Restrict both traces to the probe indices valid at both parties."""
    common = session.trace_a.index_set() & session.trace_b.index_set()
    common -= session.lost_a | session.lost_b
    if not common:
        raise EmptySessionError("no common probe index after alignment")
    return ProbeSession(
        session.trace_a.restrict(common),
        session.trace_b.restrict(common),
        session.lost_a,
        session.lost_b,
    )


def simulate(config: SimConfig) -> SimulatedSession:
    """Draw a reciprocal probing session plus an independent eavesdropper trace."""
    rng = np.random.default_rng(config.seed)
    n = config.n_probes
    sigma = config.sigma_schedule()

    def shadowing():
        z = rng.standard_normal(n)
        w = np.empty(n)
        innov = math.sqrt(1.0 - config.shadow_phi ** 2)
        prev = 0.0
        for i in range(n):
            if i == 0:
                prev = sigma[0] * z[0]
            else:
                prev = config.shadow_phi * prev + sigma[i] * innov * z[i]
            w[i] = prev
        return w

    shared = shadowing()
    noise_a = rng.normal(0.0, config.noise_sigma, n) if config.noise_sigma else np.zeros(n)
    noise_b = rng.normal(0.0, config.noise_sigma, n) if config.noise_sigma else np.zeros(n)
    eve_shared = shadowing()
    noise_e = rng.normal(0.0, config.noise_sigma, n) if config.noise_sigma else np.zeros(n)
    lost_a_mask = rng.random(n) < config.loss_prob
    lost_b_mask = rng.random(n) < config.loss_prob

    def to_dbm(x):
        return np.clip(np.rint(config.base_power + x), RSSI_MIN, RSSI_MAX).astype(np.int64)

    idx = np.arange(n)
    va = to_dbm(shared + noise_a)
    vb = to_dbm(shared + noise_b)
    ve = to_dbm(eve_shared + noise_e)
    trace_a = RssiTrace.from_arrays("Alice", idx[~lost_a_mask], va[~lost_a_mask])
    trace_b = RssiTrace.from_arrays("Bob", idx[~lost_b_mask], vb[~lost_b_mask])
    eve = RssiTrace.from_arrays("Eve", idx, ve)
    session = ProbeSession(
        trace_a,
        trace_b,
        frozenset(idx[lost_a_mask].tolist()),
        frozenset(idx[lost_b_mask].tolist()),
    )
    return SimulatedSession(session, eve, config)


def concat_sessions(parts: Sequence[SimulatedSession]) -> SimulatedSession:
    """Join simulated sessions end to end, shifting probe indices."""
    a, b, e = [], [], []
    lost_a, lost_b = set(), set()
    offset = 0
    for part in parts:
        s = part.session
        a += [RssiSample(x.index + offset, x.value) for x in s.trace_a.samples]
        b += [RssiSample(x.index + offset, x.value) for x in s.trace_b.samples]
        e += [RssiSample(x.index + offset, x.value) for x in part.eve.samples]
        lost_a |= {i + offset for i in s.lost_a}
        lost_b |= {i + offset for i in s.lost_b}
        span = [x.index for x in s.trace_a.samples + s.trace_b.samples + part.eve.samples]
        span += list(s.lost_a | s.lost_b)
        offset += (max(span) + 1) if span else 0
    return SimulatedSession(
        ProbeSession(RssiTrace("Alice", a), RssiTrace("Bob", b), lost_a, lost_b),
        RssiTrace("Eve", e),
    )

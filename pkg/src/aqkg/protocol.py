"""Two-party key-generation sessions over an in-process public channel.

Each party is a message-driven state machine holding only its own trace.
Per diversity block the parameter-deciding party announces ``(m, alpha)``,
both exchange guard-band drop sets, Bob publishes a code-offset mask and a
CRC, and Alice answers with the reconciliation flag. A failed block is
re-quantized with a wider guard band up to ``max_calibrations`` times.
"""

from __future__ import annotations

import json
import struct
from collections import deque
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .bch import BchCode, default_code
from .complexity import normalized_complexity
from .quantizer import DIVERSITY_LEN, DiversityQuantizer, merge_drops, partition
from .randomness import MetricReport, kgr as kgr_ratio, nfr as nfr_ratio, split_keys
from .reconciliation import (IRC, CalibrationPolicy, PrivacyAmplifier, ReconMessage,
                             calibrated_alpha, correct, make_recon_message)
from .selector import AdaptiveModel, reference_model, select_params
from .traces import ProbeSession, RssiTrace, TraceError

ALICE, BOB = "Alice", "Bob"


class ProtocolError(RuntimeError):
    pass


@dataclass(frozen=True)
class LostIndices:
    indices: frozenset


@dataclass(frozen=True)
class QuantParamsMsg:
    block_id: int
    m: int
    alpha: float


@dataclass(frozen=True)
class DroppedIndices:
    block_id: int
    indices: frozenset


@dataclass(frozen=True)
class Recon:
    msg: ReconMessage


@dataclass(frozen=True)
class Irc:
    irc: IRC


Message = Union[LostIndices, QuantParamsMsg, DroppedIndices, Recon, Irc]

_TAGS = {LostIndices: 1, QuantParamsMsg: 2, DroppedIndices: 3, Recon: 4, Irc: 5}
_DIRS = {"A->B": 0, "B->A": 1}


def _pack_indices(indices) -> bytes:
    ids = sorted(int(i) for i in indices)
    return struct.pack(f">I{len(ids)}I", len(ids), *ids)


def _unpack_indices(data: bytes, offset: int) -> tuple[frozenset, int]:
    (count,) = struct.unpack_from(">I", data, offset)
    ids = struct.unpack_from(f">{count}I", data, offset + 4)
    return frozenset(ids), offset + 4 + 4 * count


def encode_message(msg: Message) -> bytes:
    tag = bytes([_TAGS[type(msg)]])
    if isinstance(msg, LostIndices):
        return tag + _pack_indices(msg.indices)
    if isinstance(msg, QuantParamsMsg):
        return tag + struct.pack(">IBd", msg.block_id, msg.m, msg.alpha)
    if isinstance(msg, DroppedIndices):
        return tag + struct.pack(">I", msg.block_id) + _pack_indices(msg.indices)
    if isinstance(msg, Recon):
        return tag + msg.msg.to_bytes()
    if isinstance(msg, Irc):
        return tag + struct.pack(">IB", msg.irc.block_id, msg.irc.flag)
    raise TypeError(f"not a protocol message: {msg!r}")


def decode_message(data: bytes) -> Message:
    tag = data[0]
    if tag == 1:
        ids, end = _unpack_indices(data, 1)
        msg = LostIndices(ids)
    elif tag == 2:
        block_id, m, alpha = struct.unpack_from(">IBd", data, 1)
        msg, end = QuantParamsMsg(block_id, m, alpha), 1 + 13
    elif tag == 3:
        (block_id,) = struct.unpack_from(">I", data, 1)
        ids, end = _unpack_indices(data, 5)
        msg = DroppedIndices(block_id, ids)
    elif tag == 4:
        rm, used = ReconMessage.unpack_from(data, 1)
        msg, end = Recon(rm), 1 + used
    elif tag == 5:
        block_id, flag = struct.unpack_from(">IB", data, 1)
        msg, end = Irc(IRC(block_id, flag)), 6
    else:
        raise ValueError(f"unknown message tag {tag}")
    if end != len(data):
        raise ValueError("trailing bytes in message record")
    return msg


@dataclass
class Transcript:
    records: list = field(default_factory=list)

    def append(self, direction: str, msg: Message) -> None:
        self.records.append((direction, msg))

    def __iter__(self):
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    def to_bytes(self) -> bytes:
        """Length-prefixed records: u32 length, direction byte, tag byte, payload."""
        out = bytearray()
        for direction, msg in self.records:
            body = bytes([_DIRS[direction]]) + encode_message(msg)
            out += struct.pack(">I", len(body)) + body
        return bytes(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Transcript":
        inv = {v: k for k, v in _DIRS.items()}
        t = cls()
        pos = 0
        while pos < len(data):
            (length,) = struct.unpack_from(">I", data, pos)
            body = data[pos + 4:pos + 4 + length]
            if len(body) != length:
                raise ValueError("truncated transcript record")
            t.append(inv[body[0]], decode_message(body[1:]))
            pos += 4 + length
        return t

    def count_for_block(self, block_id: int) -> int:
        n = 0
        for _, msg in self.records:
            bid = _block_of(msg)
            if bid == block_id:
                n += 1
        return n


def _block_of(msg: Message):
    if isinstance(msg, (QuantParamsMsg, DroppedIndices)):
        return msg.block_id
    if isinstance(msg, Recon):
        return msg.msg.block_id
    if isinstance(msg, Irc):
        return msg.irc.block_id
    return None


def local_lost(trace: RssiTrace, n_probes: int, lost=()) -> frozenset:
    """Probe rounds this party cannot use: missing from its trace or flagged lost."""
    return frozenset(set(range(n_probes)) - trace.index_set()) | frozenset(lost)


@dataclass
class _BlockState:
    block_id: int
    indices: np.ndarray
    values: np.ndarray
    m: int = 0
    alpha: float = 0.0
    c: float = 0.0
    attempt: int = 0
    quant: DiversityQuantizer | None = None
    own_dropped: frozenset = frozenset()
    key: np.ndarray | None = None
    outcome: object = None


@dataclass
class BlockOutcome:
    block_id: int
    complexity: float
    m: int
    alpha: float
    final_alpha: float
    calibrations: int
    agreed: bool
    n_bits: int


class Party:
    """One protocol endpoint.

    ``role`` fixes the reconciliation duties (Bob masks, Alice corrects);
    ``decides`` marks the party that computes the complexity of its own
    samples and announces the quantization parameters.
    """

    def __init__(self, role: str, trace: RssiTrace, n_probes: int, lost=(),
                 model: AdaptiveModel | None = None, policy: CalibrationPolicy | None = None,
                 decides: bool | None = None, code: BchCode | None = None, rng=None):
        self.role = role
        self.out = "A->B" if role == ALICE else "B->A"
        self.trace = trace
        self.n_probes = n_probes
        self.lost = local_lost(trace, n_probes, lost)
        self.model = model or reference_model()
        self.policy = policy or CalibrationPolicy()
        self.decides = (role == ALICE) if decides is None else decides
        self.code = code or default_code()
        self.rng = np.random.default_rng(rng)
        self.blocks: list[_BlockState] = []
        self.current: _BlockState | None = None
        self.next_block = 0
        self.peer_dropped: frozenset | None = None
        self.agreed: dict[int, np.ndarray] = {}
        self.outcomes: dict[int, BlockOutcome] = {}
        self.done = False

    # -- helpers -----------------------------------------------------------------
    def _setup_blocks(self, peer_lost: frozenset) -> None:
        unusable = self.lost | peer_lost
        keep = [s for s in self.trace.samples if s.index not in unusable]
        idx = np.array([s.index for s in keep], dtype=np.int64)
        val = np.array([s.value for s in keep], dtype=np.int64)
        self.blocks = [
            _BlockState(k, i, v)
            for k, (i, v) in enumerate(zip(partition(idx, DIVERSITY_LEN), partition(val, DIVERSITY_LEN)))
        ]
        if not self.blocks:
            raise ProtocolError("no complete diversity block after alignment")

    def _quantize(self) -> list[Message]:
        b = self.current
        a = calibrated_alpha(b.alpha, b.attempt, self.policy)
        if b.quant is None:
            b.quant = DiversityQuantizer(b.values, b.indices, b.m)
        out = b.quant.quantize(a)
        b.outcome = out
        b.own_dropped = out.dropped
        self.peer_dropped = None
        return [DroppedIndices(b.block_id, out.dropped)]

    def _start_block(self) -> list[Message]:
        if self.next_block >= len(self.blocks):
            self.done = True
            self.current = None
            return []
        b = self.blocks[self.next_block]
        self.next_block += 1
        self.current = b
        b.c = normalized_complexity(b.values.tolist())
        b.m, b.alpha = select_params(b.c, self.model)
        return [QuantParamsMsg(b.block_id, b.m, b.alpha)] + self._quantize()

    def _finish(self, agreed: bool, key: np.ndarray | None) -> list[Message]:
        b = self.current
        n_bits = int(key.size) if key is not None else 0
        if agreed:
            self.agreed[b.block_id] = key
        self.outcomes[b.block_id] = BlockOutcome(
            b.block_id, b.c, b.m, b.alpha, calibrated_alpha(b.alpha, b.attempt, self.policy),
            b.attempt, agreed, n_bits if agreed else 0,
        )
        self.current = None
        if self.decides:
            return self._start_block()
        if self.next_block >= len(self.blocks):
            self.done = True
        return []

    def _retry_or_drop(self) -> list[Message]:
        b = self.current
        if b.attempt < self.policy.max_calibrations:
            b.attempt += 1
            return self._quantize()
        return self._finish(False, None)

    # -- state machine -----------------------------------------------------------
    def start(self) -> list[Message]:
        return [LostIndices(self.lost)]

    def receive(self, msg: Message) -> list[Message]:
        if isinstance(msg, LostIndices):
            self._setup_blocks(msg.indices)
            return self._start_block() if self.decides else []
        if isinstance(msg, QuantParamsMsg):
            if self.decides:
                raise ProtocolError("deciding party received quantization parameters")
            if msg.block_id != self.next_block:
                raise ProtocolError(f"unexpected block {msg.block_id}")
            b = self.blocks[msg.block_id]
            self.next_block += 1
            self.current = b
            b.c = normalized_complexity(b.values.tolist())
            b.m, b.alpha = msg.m, msg.alpha
            return self._quantize()
        b = self.current
        if b is None:
            raise ProtocolError(f"{self.role} received {type(msg).__name__} outside a block")
        if isinstance(msg, DroppedIndices):
            self.peer_dropped = msg.indices
            b.key = merge_drops(b.outcome, msg.indices).bits
            if b.key.size == 0:
                return self._finish(False, None)
            if self.role == BOB:
                rm = make_recon_message(b.key, self.code, self.rng, b.block_id)
                return [Recon(rm)]
            return []
        if isinstance(msg, Recon) and self.role == ALICE:
            corrected, irc = correct(b.key, msg.msg, self.code)
            if irc.flag:
                return [Irc(irc)] + self._finish(True, corrected)
            return [Irc(irc)] + self._retry_or_drop()
        if isinstance(msg, Irc) and self.role == BOB:
            if msg.irc.flag:
                return self._finish(True, b.key)
            return self._retry_or_drop()
        raise ProtocolError(f"{self.role} cannot handle {type(msg).__name__}")


class DuplexChannel:
    """Reliable FIFO public channel recording every message it carries."""

    def __init__(self):
        self.queues = {"A->B": deque(), "B->A": deque()}
        self.transcript = Transcript()

    def send(self, direction: str, msgs) -> None:
        for m in msgs:
            self.transcript.append(direction, m)
            self.queues[direction].append(m)

    def pending(self) -> bool:
        return any(self.queues.values())


def exchange(alice: Party, bob: Party, channel: DuplexChannel | None = None) -> Transcript:
    channel = channel or DuplexChannel()
    channel.send("A->B", alice.start())
    channel.send("B->A", bob.start())
    while channel.pending():
        for direction, receiver in (("A->B", bob), ("B->A", alice)):
            q = channel.queues[direction]
            if q:
                channel.send(receiver.out, receiver.receive(q.popleft()))
    return channel.transcript


@dataclass
class SessionReport:
    keys_a: list
    keys_b: list
    blocks: list
    metrics: MetricReport
    transcript: Transcript
    leftover_bits: int = 0

    @property
    def agreed_fraction(self) -> float:
        return sum(b.agreed for b in self.blocks) / len(self.blocks) if self.blocks else 0.0

    def to_dict(self) -> dict:
        m = self.metrics
        return {
            "keys_alice": [k.hex() for k in self.keys_a],
            "keys_bob": [k.hex() for k in self.keys_b],
            "keys_identical": self.keys_a == self.keys_b,
            "leftover_bits": self.leftover_bits,
            "metrics": {
                "n_rssi": m.n_rssi, "n_key": m.n_key, "kgr": m.kgr, "kdr": m.kdr,
                "n_ks": m.n_ks, "n_f": m.n_f, "nfr": m.nfr,
            },
            "agreed_fraction": self.agreed_fraction,
            "blocks": [
                {
                    "block_id": b.block_id, "complexity": b.complexity, "m": b.m,
                    "alpha": b.alpha, "final_alpha": b.final_alpha,
                    "calibrations": b.calibrations, "agreed": b.agreed, "n_bits": b.n_bits,
                }
                for b in self.blocks
            ],
            "n_messages": len(self.transcript),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _n_probes(session: ProbeSession) -> int:
    idx = [s.index for s in session.trace_a.samples + session.trace_b.samples]
    idx += list(session.lost_a | session.lost_b)
    return (max(idx) + 1) if idx else 0


def _prereconciliation_kdr(alice: Party, bob: Party) -> float:
    mism = total = 0
    for ba, bb in zip(alice.blocks, bob.blocks):
        if ba.key is None or bb.key is None or ba.key.size != bb.key.size:
            continue
        mism += int(np.count_nonzero(ba.key != bb.key))
        total += ba.key.size
    return mism / total if total else 0.0


def run_session(session: ProbeSession, model: AdaptiveModel | None = None,
                policy: CalibrationPolicy | None = None, seed=0,
                code: BchCode | None = None, bob_decides: bool = False) -> SessionReport:
    """Run a full session and return keys, per-block outcomes and metrics.

    N_RSSI counts every aligned probe inside a complete diversity block,
    dropped blocks included; N_KEY counts reconciled bits before hashing.
    """
    model = model or reference_model()
    policy = policy or CalibrationPolicy()
    n = _n_probes(session)
    alice = Party(ALICE, session.trace_a, n, session.lost_a, model, policy,
                  decides=not bob_decides, code=code, rng=None)
    bob = Party(BOB, session.trace_b, n, session.lost_b, model, policy,
                decides=bob_decides, code=code, rng=seed)
    transcript = exchange(alice, bob)
    if alice.current is not None or bob.current is not None:
        raise ProtocolError("session ended mid-block")

    pa_a, pa_b = PrivacyAmplifier(), PrivacyAmplifier()
    keys_a, keys_b = [], []
    for k in sorted(alice.agreed):
        keys_a += pa_a.feed(alice.agreed[k])
        keys_b += pa_b.feed(bob.agreed[k])

    n_rssi = len(alice.blocks) * DIVERSITY_LEN
    n_key = sum(v.size for v in alice.agreed.values())
    if keys_b:
        n_ks, n_f, nfr = nfr_ratio(split_keys(keys_b))
    else:
        n_ks, n_f, nfr = 0, 0, 0.0
    metrics = MetricReport(n_rssi, n_key, kgr_ratio(n_key, n_rssi),
                           _prereconciliation_kdr(alice, bob), n_ks, n_f, nfr)
    blocks = [alice.outcomes[k] for k in sorted(alice.outcomes)]
    return SessionReport(keys_a, keys_b, blocks, metrics, transcript, int(pa_a.buffer.size))


# -- replay and eavesdropping ----------------------------------------------------

@dataclass
class ReplayAttempt:
    block_id: int
    attempt: int
    m: int
    alpha: float
    indices: np.ndarray
    dropped_a: frozenset
    dropped_b: frozenset
    recon: ReconMessage | None = None
    irc: int | None = None

    @property
    def union_dropped(self) -> frozenset:
        return self.dropped_a | self.dropped_b


def _last_for(attempts, block_id):
    for a in reversed(attempts):
        if a.block_id == block_id:
            return a
    raise ProtocolError(f"message for block {block_id} before its drop exchange")


def replay_attempts(transcript: Transcript, n_probes: int,
                    policy: CalibrationPolicy | None = None) -> list[ReplayAttempt]:
    """Public schedule of a session: every quantization attempt with its drop sets."""
    policy = policy or CalibrationPolicy()
    lost = frozenset()
    for _, msg in transcript:
        if isinstance(msg, LostIndices):
            lost |= msg.indices
    usable = np.array(sorted(set(range(n_probes)) - lost), dtype=np.int64)
    blocks = partition(usable, DIVERSITY_LEN)
    params = {}
    attempts: list[ReplayAttempt] = []
    pending: dict[int, dict] = {}
    for direction, msg in transcript:
        if isinstance(msg, QuantParamsMsg):
            params[msg.block_id] = (msg.m, msg.alpha)
        elif isinstance(msg, DroppedIndices):
            slot = pending.setdefault(msg.block_id, {})
            slot[direction] = msg.indices
            if len(slot) == 2:
                m, alpha = params[msg.block_id]
                n_prior = sum(a.block_id == msg.block_id for a in attempts)
                attempts.append(ReplayAttempt(
                    msg.block_id, n_prior, m, calibrated_alpha(alpha, n_prior, policy),
                    blocks[msg.block_id], slot["A->B"], slot["B->A"]))
                del pending[msg.block_id]
        elif isinstance(msg, Recon):
            _last_for(attempts, msg.msg.block_id).recon = msg.msg
        elif isinstance(msg, Irc):
            _last_for(attempts, msg.irc.block_id).irc = msg.irc.flag
    return attempts


def _values_at(trace: RssiTrace, indices: np.ndarray) -> np.ndarray:
    lookup = {s.index: s.value for s in trace.samples}
    try:
        return np.array([lookup[int(i)] for i in indices], dtype=np.int64)
    except KeyError as exc:
        raise TraceError(f"{trace.party} trace has no sample for probe {exc.args[0]}") from None


def replay_bob(trace_b: RssiTrace, transcript: Transcript, n_probes: int,
               policy: CalibrationPolicy | None = None) -> dict[int, np.ndarray]:
    """Rebuild Bob's agreed block keys from his own trace and the public transcript."""
    keys = {}
    quants = {}
    for a in replay_attempts(transcript, n_probes, policy):
        q = quants.get(a.block_id)
        if q is None:
            q = quants[a.block_id] = DiversityQuantizer(_values_at(trace_b, a.indices), a.indices, a.m)
        out = q.quantize(a.alpha)
        if out.dropped != a.dropped_b:
            raise ProtocolError(f"block {a.block_id}: trace does not reproduce Bob's drop set")
        if a.irc == 1:
            keys[a.block_id] = merge_drops(out, a.dropped_a).bits
    return keys


@dataclass
class EavesdropReport:
    kdr: float
    n_bits: int
    crc_passes: int
    attempts: int
    param_match_rate: float


def eavesdrop_report(transcript: Transcript, eve_trace: RssiTrace, bob_trace: RssiTrace,
                     n_probes: int, model: AdaptiveModel | None = None,
                     policy: CalibrationPolicy | None = None,
                     code: BchCode | None = None) -> EavesdropReport:
    """Passive attacker replaying the session on her own channel observations.

    Eve keeps the legitimate retained indices, quantizes her samples with the
    announced parameters (no guard bands of her own) and tries every published
    mask. ``param_match_rate`` is how often her own model choice matches the
    announced level, a proxy for what the public parameters reveal.
    """
    model = model or reference_model()
    code = code or default_code()
    mism = total = passes = n_attempts = 0
    matches = seen = 0
    eve_q, bob_q = {}, {}
    for a in replay_attempts(transcript, n_probes, policy):
        if a.block_id not in eve_q:
            ev = _values_at(eve_trace, a.indices)
            eve_q[a.block_id] = DiversityQuantizer(ev, a.indices, a.m)
            bob_q[a.block_id] = DiversityQuantizer(_values_at(bob_trace, a.indices), a.indices, a.m)
            m_e, _ = select_params(normalized_complexity(ev.tolist()), model)
            matches += m_e == a.m
            seen += 1
        if a.recon is None:
            continue
        bob_key = merge_drops(bob_q[a.block_id].quantize(a.alpha), a.dropped_a).bits
        eve_all = eve_q[a.block_id].eavesdrop()
        keep = np.array([i not in a.union_dropped for i in eve_all.source_indices.tolist()], dtype=bool)
        eve_key = eve_all.bits[np.repeat(keep, eve_all.width)]
        n_attempts += 1
        mism += int(np.count_nonzero(eve_key != bob_key))
        total += bob_key.size
        _, irc = correct(eve_key, a.recon, code)
        passes += irc.flag
    return EavesdropReport(mism / total if total else float("nan"), total, passes, n_attempts,
                           matches / seen if seen else 0.0)


def transcript_numbers(transcript: Transcript) -> list:
    """Every scalar carried by the transcript, for structural leak scans."""
    out = []
    for _, msg in transcript:
        if isinstance(msg, LostIndices):
            out += sorted(msg.indices)
        elif isinstance(msg, QuantParamsMsg):
            out += [msg.block_id, msg.m, msg.alpha]
        elif isinstance(msg, DroppedIndices):
            out += [msg.block_id] + sorted(msg.indices)
        elif isinstance(msg, Recon):
            out += [msg.msg.block_id, msg.msg.v]
        elif isinstance(msg, Irc):
            out += [msg.irc.block_id, msg.irc.flag]
    return out

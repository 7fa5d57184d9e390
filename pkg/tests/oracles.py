"""Slow, definition-level reference implementations used only by tests.

Each oracle is written straight from the textual definition with plain
Python lists and no shared code with the library.
"""

from __future__ import annotations

import functools
import statistics


# -- LZ76 ---------------------------------------------------------------------------

def _occurs(needle: list, hay: list) -> bool:
    n = len(needle)
    return any(hay[p:p + n] == needle for p in range(len(hay) - n + 1))


def lz76_bruteforce(seq) -> int:
    """Components of the exhaustive history.

    A component starting at ``i`` is extended one symbol at a time; it ends
    at the first ``j`` where ``seq[i..j]`` is not a substring of
    ``seq[0..j-1]``. The last component may run off the end.
    """
    s = list(seq)
    n = len(s)
    i = c = 0
    while i < n:
        j = i
        while j < n and _occurs(s[i:j + 1], s[:j]):
            j += 1
        c += 1
        i = j + 1
    return c


# -- quantizer ----------------------------------------------------------------------

def _mean(vals):
    return sum(vals) / len(vals)


def thresholds_by_definition(block, m):
    """q_0..q_m and s_1..s_{m-1} from the recursive mean-split rules."""
    return _thresholds(tuple(float(v) for v in block), m)


@functools.lru_cache(maxsize=4096)
def _thresholds(x, m):
    q = {0: min(x), m: max(x)}

    def split(lo, hi):
        if hi - lo < 2:
            return
        mid = (lo + hi) // 2
        if lo == 0:
            window = [v for v in x if q[lo] <= v <= q[hi]]
        else:
            window = [v for v in x if q[lo] < v <= q[hi]]
        q[mid] = _mean(window) if window else (q[lo] + q[hi]) / 2
        split(lo, mid)
        split(mid, hi)

    split(0, m)
    qs = [q[n] for n in range(m + 1)]
    s = []
    for n in range(1, m):
        if n == 1:
            window = [v for v in x if qs[0] <= v <= qs[2]]
        else:
            window = [v for v in x if qs[n - 1] < v <= qs[n + 1]]
        s.append(statistics.pstdev(window) if window else 0.0)
    return qs, s


def reflected_gray(width: int) -> list[str]:
    """Binary reflected Gray code by mirroring, words for 0..2^width-1."""
    words = [""]
    for _ in range(width):
        words = ["0" + w for w in words] + ["1" + w for w in reversed(words)]
    return words


def interval_by_definition(v: float, q) -> int:
    """Interval Q_i holding v: Q_1 = [q_0, q_1], Q_i = (q_{i-1}, q_i]."""
    m = len(q) - 1
    if q[0] <= v <= q[1]:
        return 1
    for i in range(2, m + 1):
        if q[i - 1] < v <= q[i]:
            return i
    raise ValueError("value outside block range")


def quantize_by_definition(block, m, alpha, block_len=None):
    """(bits string, dropped positions) for one diversity block.

    The block is cut into quantization sub-blocks of ``block_len``; constant
    sub-blocks contribute nothing and all their positions count as dropped.
    """
    width = m.bit_length() - 1
    block_len = block_len or {2: 5, 4: 20, 8: 40}[m]
    gray = reflected_gray(width)
    bits, dropped = [], []
    for start in range(0, len(block) - block_len + 1, block_len):
        sub = block[start:start + block_len]
        if min(sub) == max(sub):
            dropped += list(range(start, start + block_len))
            continue
        q, s = thresholds_by_definition(sub, m)
        for off, v in enumerate(sub):
            guarded = any(
                alpha * s[n - 1] > 0 and q[n] - alpha * s[n - 1] <= v <= q[n] + alpha * s[n - 1]
                for n in range(1, m)
            )
            if guarded:
                dropped.append(start + off)
            else:
                bits.append((start + off, gray[m - interval_by_definition(v, q)]))
    return bits, set(dropped)


def paired_keys(block_a, block_b, m, alpha):
    """Both parties' keys after union dropping, as bit strings."""
    bits_a, drop_a = quantize_by_definition(list(block_a), m, alpha)
    bits_b, drop_b = quantize_by_definition(list(block_b), m, alpha)
    union = drop_a | drop_b
    ka = "".join(w for pos, w in bits_a if pos not in union)
    kb = "".join(w for pos, w in bits_b if pos not in union)
    return ka, kb


# -- block parameter search ----------------------------------------------------------

def grid_search(block_a, block_b, kdr_target=0.2, alpha_max=1.5, levels=(2, 4, 8)):
    """Exhaustive search over every lattice point of every level.

    For each level the accepted alpha is the smallest lattice value whose
    agreed key is non-empty with KDR <= target, provided no smaller alpha
    produced an empty key. The level with the most bits wins; ties go to the
    larger level. Returns (m, alpha) or (None, None).
    """
    best = None
    for m in levels:
        table = []
        for step in range(int(round(alpha_max * 100)) + 1):
            alpha = round(step / 100, 10)
            ka, kb = paired_keys(block_a, block_b, m, alpha)
            rate = sum(x != y for x, y in zip(ka, kb)) / len(ka) if ka else None
            table.append((alpha, len(ka), rate))
        first_empty = min((a for a, n, _ in table if n == 0), default=float("inf"))
        feasible = [(a, n) for a, n, r in table if n > 0 and r <= kdr_target and a < first_empty]
        if not feasible:
            continue
        alpha, n_bits = min(feasible)
        if best is None or n_bits >= best[0]:
            best = (n_bits, m, alpha)
    if best is None:
        return None, None
    return best[1], best[2]

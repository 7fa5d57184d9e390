"""Lempel-Ziv (1976) complexity of symbol sequences."""

from __future__ import annotations

from typing import Hashable, Sequence

from .quantizer import DIVERSITY_LEN


def lz76(seq: Sequence[Hashable]) -> int:
    """Number of components in the exhaustive LZ76 decomposition of ``seq``.

    Kaspar-Schuster scan: each new component is extended while it can still
    be copied from some earlier start position (overlap allowed).
    """
    s = list(seq)
    n = len(s)
    if n == 0:
        raise ValueError("LZ76 complexity is undefined for an empty sequence")
    if n == 1:
        return 1
    c = 1       # components found so far
    i = 0       # candidate start of the copy in the prefix
    k = 1       # length of the current match
    k_max = 1
    start = 1   # start of the current component
    while True:
        if s[i + k - 1] == s[start + k - 1]:
            k += 1
            if start + k > n:
                c += 1
                break
        else:
            k_max = max(k, k_max)
            i += 1
            if i == start:
                c += 1
                start += k_max
                if start + 1 > n:
                    break
                i, k, k_max = 0, 1, 1
            else:
                k = 1
    return c


def normalized_complexity(block: Sequence[Hashable], length: int = DIVERSITY_LEN) -> float:
    if len(block) != length:
        raise ValueError(f"diversity block must hold {length} samples, got {len(block)}")
    return lz76(block) / length

"""Binary narrow-sense BCH codes over GF(2^m) with Berlekamp-Massey decoding."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

# Primitive polynomials, bit i = coefficient of x^i.
_PRIMITIVE = {3: 0b1011, 4: 0b10011, 5: 0b100101, 6: 0b1000011, 7: 0b10001001, 8: 0b100011101}


class DecodingError(Exception):
    """More errors than the code can correct were detected."""


class GF2m:
    def __init__(self, m: int):
        self.m = m
        self.order = (1 << m) - 1
        poly = _PRIMITIVE[m]
        self.exp = [0] * (2 * self.order)
        self.log = [0] * (self.order + 1)
        x = 1
        for i in range(self.order):
            self.exp[i] = x
            self.log[x] = i
            x <<= 1
            if x >> m:
                x ^= poly
        for i in range(self.order, 2 * self.order):
            self.exp[i] = self.exp[i - self.order]

    def mul(self, a: int, b: int) -> int:
        if a == 0 or b == 0:
            return 0
        return self.exp[self.log[a] + self.log[b]]

    def div(self, a: int, b: int) -> int:
        if b == 0:
            raise ZeroDivisionError("division by zero in GF(2^m)")
        if a == 0:
            return 0
        return self.exp[(self.log[a] - self.log[b]) % self.order]

    def pow_alpha(self, e: int) -> int:
        return self.exp[e % self.order]


def _poly_mul_gf2(a: list[int], b: list[int]) -> list[int]:
    out = [0] * (len(a) + len(b) - 1)
    for i, ai in enumerate(a):
        if ai:
            for j, bj in enumerate(b):
                out[i + j] ^= bj
    return out


def _minimal_poly(field: GF2m, e: int) -> tuple[list[int], frozenset[int]]:
    coset = []
    c = e % field.order
    while c not in coset:
        coset.append(c)
        c = (c * 2) % field.order
    poly = [1]  # low to high
    for c in coset:
        root = field.pow_alpha(c)
        nxt = [0] * (len(poly) + 1)
        for k, p in enumerate(poly):
            nxt[k + 1] ^= p
            nxt[k] ^= field.mul(p, root)
        poly = nxt
    if any(v not in (0, 1) for v in poly):
        raise AssertionError("minimal polynomial must have binary coefficients")
    return poly, frozenset(coset)


@dataclass(frozen=True)
class BchCode:
    """Narrow-sense primitive BCH code of length 2^field_m - 1 correcting t errors."""

    field_m: int = 7
    t: int = 27
    generator: tuple[int, ...] = field(init=False, repr=False)

    def __post_init__(self):
        gf = _field(self.field_m)
        seen: set[int] = set()
        g = [1]
        for i in range(1, 2 * self.t + 1):
            if i % gf.order in seen:
                continue
            poly, coset = _minimal_poly(gf, i)
            seen |= coset
            g = _poly_mul_gf2(g, poly)
        object.__setattr__(self, "generator", tuple(g))
        if self.k <= 0:
            raise ValueError(f"no BCH code with n={self.n}, t={self.t}")

    @property
    def n(self) -> int:
        return (1 << self.field_m) - 1

    @property
    def k(self) -> int:
        return self.n - (len(self.generator) - 1)

    @property
    def gf(self) -> GF2m:
        return _field(self.field_m)

    def encode(self, message) -> np.ndarray:
        """Non-systematic encoding c(x) = u(x) g(x); bit i is coefficient of x^i."""
        u = np.asarray(message, dtype=np.uint8)
        if u.size != self.k:
            raise ValueError(f"message must hold {self.k} bits")
        g = np.asarray(self.generator, dtype=np.uint8)
        c = np.zeros(self.n, dtype=np.uint8)
        for i in np.flatnonzero(u):
            c[i:i + g.size] ^= g
        return c

    def is_codeword(self, word) -> bool:
        return not any(self.syndromes(word))

    def syndromes(self, word) -> list[int]:
        gf = self.gf
        pos = np.flatnonzero(np.asarray(word, dtype=np.uint8)).tolist()
        out = []
        for j in range(1, 2 * self.t + 1):
            s = 0
            for p in pos:
                s ^= gf.exp[(j * p) % gf.order]
            out.append(s)
        return out

    def error_positions(self, word) -> list[int]:
        """Locate errors via Berlekamp-Massey and Chien search."""
        synd = self.syndromes(word)
        if not any(synd):
            return []
        gf = self.gf
        lam = [1]
        prev = [1]
        l_deg = 0
        shift = 1
        b = 1
        for r in range(2 * self.t):
            d = synd[r]
            for i in range(1, l_deg + 1):
                if i < len(lam):
                    d ^= gf.mul(lam[i], synd[r - i])
            if d == 0:
                shift += 1
                continue
            coef = gf.div(d, b)
            upd = [0] * shift + [gf.mul(coef, p) for p in prev]
            new = lam + [0] * max(0, len(upd) - len(lam))
            for i, v in enumerate(upd):
                new[i] ^= v
            if 2 * l_deg <= r:
                prev, l_deg, b, shift = lam, r + 1 - l_deg, d, 1
            else:
                shift += 1
            lam = new
        while len(lam) > 1 and lam[-1] == 0:
            lam.pop()
        degree = len(lam) - 1
        if degree > self.t or degree != l_deg:
            raise DecodingError("error locator degree exceeds correction capability")
        positions = []
        for p in range(self.n):
            # root at alpha^{-p} marks an error at position p
            acc = 0
            for i, c in enumerate(lam):
                if c:
                    acc ^= gf.exp[(gf.log[c] - i * p) % gf.order]
            if acc == 0:
                positions.append(p)
        if len(positions) != degree:
            raise DecodingError("error locator does not split over the field")
        return positions

    def decode(self, word) -> np.ndarray:
        """Nearest codeword within distance t; raises DecodingError otherwise."""
        r = np.array(word, dtype=np.uint8, copy=True)
        if r.size != self.n:
            raise ValueError(f"received word must hold {self.n} bits")
        for p in self.error_positions(r):
            r[p] ^= 1
        if not self.is_codeword(r):
            raise DecodingError("correction did not yield a codeword")
        return r


@lru_cache(maxsize=None)
def _field(m: int) -> GF2m:
    return GF2m(m)


@lru_cache(maxsize=None)
def default_code() -> BchCode:
    return BchCode(7, 27)

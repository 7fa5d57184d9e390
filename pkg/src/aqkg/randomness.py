"""Key-generation metrics and a nine-test subset of NIST SP 800-22.

The tests are parameterized for 128-bit sequences (one AES-128 key):
block frequency uses a single block of 128, longest run uses M=8 over 16
blocks, serial and approximate entropy use pattern length 2.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import gammaincc

PASS_THRESHOLD = 0.01
KEY_BITS = 128

TEST_NAMES = (
    "frequency",
    "block_frequency",
    "runs",
    "longest_run",
    "dft",
    "serial",
    "approximate_entropy",
    "cusum_forward",
    "cusum_reverse",
)


@dataclass(frozen=True)
class MetricReport:
    n_rssi: int
    n_key: int
    kgr: float
    kdr: float
    n_ks: int = 0
    n_f: int = 0
    nfr: float = 0.0


@dataclass(frozen=True)
class NistReport:
    p_values: dict = field(default_factory=dict)

    @property
    def passed(self) -> dict:
        return {k: p > PASS_THRESHOLD for k, p in self.p_values.items()}

    @property
    def all_passed(self) -> bool:
        return all(self.passed.values())


def kgr(n_key: int, n_rssi: int) -> float:
    """Key bits per RSSI measurement."""
    if n_rssi <= 0:
        raise ValueError("n_rssi must be positive")
    return n_key / n_rssi


def kdr(key_a, key_b) -> float:
    """Fraction of disagreeing bits between two equal-length keys."""
    a = _as_bits(key_a)
    b = _as_bits(key_b)
    if a.size != b.size:
        raise ValueError(f"key lengths differ: {a.size} vs {b.size}")
    if a.size == 0:
        raise ValueError("KDR is undefined for empty keys")
    return float(np.count_nonzero(a != b)) / a.size


def _as_bits(key) -> np.ndarray:
    if isinstance(key, str):
        return np.frombuffer(key.encode("ascii"), dtype=np.uint8) - ord("0")
    bits = getattr(key, "bits", key)
    return np.asarray(bits, dtype=np.uint8)


def igamc(a: float, x: float) -> float:
    return float(gammaincc(a, x))


def frequency(bits: np.ndarray) -> float:
    n = bits.size
    s = int(2 * np.count_nonzero(bits) - n)
    return math.erfc(abs(s) / math.sqrt(2 * n))


def block_frequency(bits: np.ndarray, block: int = KEY_BITS) -> float:
    n_blocks = bits.size // block
    pis = bits[: n_blocks * block].reshape(n_blocks, block).mean(axis=1)
    chi2 = 4.0 * block * float(np.sum((pis - 0.5) ** 2))
    return igamc(n_blocks / 2, chi2 / 2)


def runs(bits: np.ndarray) -> float:
    n = bits.size
    pi = np.count_nonzero(bits) / n
    if abs(pi - 0.5) >= 2 / math.sqrt(n):
        return 0.0
    v_obs = 1 + int(np.count_nonzero(bits[1:] != bits[:-1]))
    return math.erfc(abs(v_obs - 2 * n * pi * (1 - pi)) / (2 * math.sqrt(2 * n) * pi * (1 - pi)))


# M=8, K=3: categories <=1, 2, 3, >=4
_LONGEST_RUN_PI = (0.2148, 0.3672, 0.2305, 0.1875)


def longest_run(bits: np.ndarray) -> float:
    m, k = 8, 3
    n_blocks = bits.size // m
    rows = bits[: n_blocks * m].reshape(n_blocks, m).astype(np.int64)
    run = np.zeros(n_blocks, dtype=np.int64)
    best = np.zeros(n_blocks, dtype=np.int64)
    for col in rows.T:
        run = (run + 1) * col
        best = np.maximum(best, run)
    counts = np.bincount(np.clip(best, 1, k + 1) - 1, minlength=k + 1).astype(float)
    expected = n_blocks * np.asarray(_LONGEST_RUN_PI)
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    return igamc(k / 2, chi2 / 2)


def dft(bits: np.ndarray) -> float:
    n = bits.size
    x = 2.0 * bits - 1.0
    mags = np.abs(np.fft.fft(x))[: n // 2]
    t = math.sqrt(math.log(1 / 0.05) * n)
    return dft_p_value(int(np.count_nonzero(mags < t)), n)


def dft_p_value(n1: int, n: int) -> float:
    """P-value for ``n1`` of the first n/2 peaks lying below the 95% threshold."""
    n0 = 0.95 * n / 2
    d = (n1 - n0) / math.sqrt(n * 0.95 * 0.05 / 4)
    return math.erfc(abs(d) / math.sqrt(2))


def _psi_sq(bits: np.ndarray, m: int) -> float:
    if m <= 0:
        return 0.0
    n = bits.size
    ext = np.concatenate([bits, bits[: m - 1]]).astype(np.int64)
    codes = np.zeros(n, dtype=np.int64)
    for j in range(m):
        codes = (codes << 1) | ext[j:j + n]
    counts = np.bincount(codes, minlength=2 ** m)
    return float((2 ** m / n) * np.sum(counts.astype(float) ** 2) - n)


def serial(bits: np.ndarray, m: int = 2) -> tuple[float, float]:
    """Both serial p-values: (from del psi^2_m, from del^2 psi^2_m)."""
    p0, p1, p2 = _psi_sq(bits, m), _psi_sq(bits, m - 1), _psi_sq(bits, m - 2)
    d1 = p0 - p1
    d2 = p0 - 2 * p1 + p2
    return igamc(2 ** (m - 2), d1 / 2), igamc(2 ** (m - 3), d2 / 2)


def _phi(bits: np.ndarray, m: int) -> float:
    n = bits.size
    ext = np.concatenate([bits, bits[: m - 1]]).astype(np.int64)
    codes = np.zeros(n, dtype=np.int64)
    for j in range(m):
        codes = (codes << 1) | ext[j:j + n]
    c = np.bincount(codes, minlength=2 ** m) / n
    c = c[c > 0]
    return float(np.sum(c * np.log(c)))


def approximate_entropy(bits: np.ndarray, m: int = 2) -> float:
    n = bits.size
    apen = _phi(bits, m) - _phi(bits, m + 1)
    chi2 = 2 * n * (math.log(2) - apen)
    return igamc(2 ** (m - 1), chi2 / 2)


def _norm_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2))


def cusum(bits: np.ndarray, reverse: bool = False) -> float:
    n = bits.size
    x = 2 * bits.astype(np.int64) - 1
    if reverse:
        x = x[::-1]
    z = int(np.max(np.abs(np.cumsum(x))))
    rn = math.sqrt(n)
    total1 = 0.0
    for k in range(math.floor((-n / z + 1) / 4), math.floor((n / z - 1) / 4) + 1):
        total1 += _norm_cdf((4 * k + 1) * z / rn) - _norm_cdf((4 * k - 1) * z / rn)
    total2 = 0.0
    for k in range(math.floor((-n / z - 3) / 4), math.floor((n / z - 1) / 4) + 1):
        total2 += _norm_cdf((4 * k + 3) * z / rn) - _norm_cdf((4 * k + 1) * z / rn)
    return float(min(max(1.0 - total1 + total2, 0.0), 1.0))


def nist_suite(key) -> NistReport:
    bits = _as_bits(key)
    if bits.size != KEY_BITS:
        raise ValueError(f"NIST subset expects {KEY_BITS}-bit keys, got {bits.size}")
    p = {
        "frequency": frequency(bits),
        "block_frequency": block_frequency(bits),
        "runs": runs(bits),
        "longest_run": longest_run(bits),
        "dft": dft(bits),
        "serial": serial(bits)[0],
        "approximate_entropy": approximate_entropy(bits),
        "cusum_forward": cusum(bits),
        "cusum_reverse": cusum(bits, reverse=True),
    }
    return NistReport(p)


def nfr(keys: Sequence) -> tuple[int, int, float]:
    """(N_KS, N_F, NFR) over 128-bit key sequences."""
    if len(keys) == 0:
        raise ValueError("NFR needs at least one key sequence")
    failed = sum(not nist_suite(k).all_passed for k in keys)
    return len(keys), failed, failed / len(keys)


def bytes_to_bits(data: bytes) -> np.ndarray:
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8))


def split_keys(final_keys: Sequence[bytes]) -> list[np.ndarray]:
    """Cut each final key into 128-bit sequences."""
    out = []
    for key in final_keys:
        bits = bytes_to_bits(key)
        out += [bits[i:i + KEY_BITS] for i in range(0, bits.size - KEY_BITS + 1, KEY_BITS)]
    return out


def report_csv(reports: Sequence[tuple[str, NistReport]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("key_id", "test_name", "p_value", "pass"))
    for key_id, rep in reports:
        for name in TEST_NAMES:
            p = rep.p_values[name]
            w.writerow((key_id, name, f"{p:.6g}", int(p > PASS_THRESHOLD)))
    return buf.getvalue()

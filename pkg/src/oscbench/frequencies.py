"""Perturbed oscillator frequencies and small-divisor certification.

The linear frequencies are omega_j = 2j - 1 + m_j / j^k where the
multipliers m_j are i.i.d. uniform on [-1/2, 1/2], drawn by hashing
(seed, k, j) so that any single frequency is reproducible without
generating the others.  A small divisor is a signed sum of frequencies
over two index multisets; it vanishes identically only when the
multisets coincide, and the scanner certifies a lower bound of the
shape gamma (1 + S) / mu^delta over all non-trivial combinations up to
a given order and mode cutoff.
"""

from __future__ import annotations

import hashlib
import math
import struct
from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np

from .tuples import tuple_stats


def _hash_unit(seed: int, k: int, j: int, stream: str = "mult") -> float:
    """Deterministic uniform draw on [-1/2, 1/2) from (seed, k, j)."""
    msg = f"{stream}:{seed}:{k}:{j}".encode()
    digest = hashlib.blake2b(msg, digest_size=8).digest()
    (u,) = struct.unpack("<Q", digest)
    return (u + 0.5) / 2.0 ** 64 - 0.5


def derive_seed(seed: int, stream: str, counter: int) -> int:
    """Child seed for an independent deterministic stream."""
    msg = f"derive:{stream}:{seed}:{counter}".encode()
    digest = hashlib.blake2b(msg, digest_size=8).digest()
    (u,) = struct.unpack("<Q", digest)
    return int(u)


@dataclass(frozen=True)
class MultiplierSample:
    """One draw of the frequency multipliers m_1..m_J."""

    k: int
    J: int
    seed: int
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.J,):
            raise ValueError("multiplier vector length must equal J")


def sample_multiplier(k: int, J: int, seed: int) -> MultiplierSample:
    """Draw m_j ~ U[-1/2, 1/2) for j = 1..J, counter-based on (seed, k, j)."""
    if k < 1 or J < 1:
        raise ValueError("need k >= 1 and J >= 1")
    vals = np.array([_hash_unit(seed, k, j) for j in range(1, J + 1)])
    vals.setflags(write=False)
    return MultiplierSample(k=k, J=J, seed=seed, values=vals)


@dataclass(frozen=True)
class FrequencyVector:
    """omega_j for j = 1..J, with the sample that produced it (or 'unperturbed')."""

    J: int
    omega: np.ndarray
    provenance: object

    def __post_init__(self):
        if self.omega.shape != (self.J,):
            raise ValueError("frequency vector length must equal J")

    @classmethod
    def from_sample(cls, sample: MultiplierSample) -> "FrequencyVector":
        j = np.arange(1, sample.J + 1, dtype=float)
        om = 2.0 * j - 1.0 + sample.values / j ** sample.k
        om.setflags(write=False)
        return cls(J=sample.J, omega=om, provenance=sample)

    @classmethod
    def unperturbed(cls, J: int) -> "FrequencyVector":
        om = 2.0 * np.arange(1, J + 1, dtype=float) - 1.0
        om.setflags(write=False)
        return cls(J=J, omega=om, provenance="unperturbed")

    def of(self, j: int) -> float:
        if not 1 <= j <= self.J:
            raise ValueError(f"mode {j} outside 1..{self.J}")
        return float(self.omega[j - 1])


def small_divisor(freq: FrequencyVector, plus, minus) -> float:
    """Signed frequency sum over two index multisets.

    Common indices are cancelled symbolically first, so the value is an
    exact 0.0 precisely when the multisets coincide, and carries no
    cancellation roundoff from shared modes otherwise.
    """
    cp = Counter(int(j) for j in plus)
    cm = Counter(int(j) for j in minus)
    common = cp & cm
    cp -= common
    cm -= common
    if not cp and not cm:
        return 0.0
    total = 0.0
    for j, c in sorted(cp.items()):
        total += c * freq.of(j)
    for j, c in sorted(cm.items()):
        total -= c * freq.of(j)
    return total


def is_structural_zero(plus, minus) -> bool:
    """True when the two multisets coincide, so the divisor vanishes identically."""
    return Counter(int(j) for j in plus) == Counter(int(j) for j in minus)


@dataclass(frozen=True)
class DivisorRecord:
    """One scanned divisor, with the statistics entering its threshold."""

    plus: tuple
    minus: tuple
    value: float
    mu: int
    S: int
    structural: bool


@dataclass
class NonresonanceScan:
    """Outcome of an exhaustive divisor scan up to order r and cutoff J.

    violations holds every non-structural divisor with
    |Omega| < gamma (1 + S) / mu^delta; admissible_gamma is the largest
    gamma for which the scan would be violation-free (the exact min of
    |Omega| mu^delta / (1 + S)), and argmin identifies the minimizing
    combination.
    """

    r: int
    J: int
    gamma: float
    delta: float
    n_scanned: int = 0
    n_structural: int = 0
    violations: list = field(default_factory=list)
    admissible_gamma: float = math.inf
    argmin: DivisorRecord | None = None

    @property
    def certified(self) -> bool:
        return not self.violations


def _index_splits(r: int, J: int):
    """All (plus, minus) multiset pairs with arity 3..r, plus >= minus.

    Pairs are generated once as integer arrays, grouped by split shape,
    so frequency-dependent work is vectorizable.
    """
    for total in range(3, r + 1):
        for n_minus in range(0, total // 2 + 1):
            n_plus = total - n_minus
            plus_list = list(combinations_with_replacement(range(1, J + 1), n_plus))
            minus_list = list(combinations_with_replacement(range(1, J + 1), n_minus))
            yield n_plus, n_minus, np.array(plus_list, dtype=int), \
                np.array(minus_list, dtype=int).reshape(len(minus_list), n_minus)


def _split_budget(r: int, J: int) -> int:
    n = 0
    for total in range(3, r + 1):
        for n_minus in range(0, total // 2 + 1):
            n_plus = total - n_minus
            n += math.comb(J + n_plus - 1, n_plus) * math.comb(J + n_minus - 1, n_minus)
    return n


def scan_nonresonance(
    freq: FrequencyVector,
    r: int,
    J: int | None = None,
    gamma: float = 0.1,
    delta: float = 4.0,
    budget: int = 20_000_000,
) -> NonresonanceScan:
    """Exhaustively scan signed frequency sums of order 3..r, indices <= J.

    Records every violation of |Omega| >= gamma (1 + S) / mu^delta
    (structural zeros plus == minus are exempt) and the exact largest
    admissible gamma.  mu and S are the order statistics of the
    combined index tuple.
    """
    if J is None:
        J = freq.J
    if J > freq.J:
        raise ValueError(f"cutoff {J} exceeds frequency table {freq.J}")
    if r < 3:
        raise ValueError("order must be at least 3")
    if gamma < 0 or delta < 0:
        raise ValueError("gamma and delta must be nonnegative")
    n_pairs = _split_budget(r, J)
    if n_pairs > budget:
        raise ValueError(f"{n_pairs} combinations exceeds budget {budget}")

    scan = NonresonanceScan(r=r, J=J, gamma=gamma, delta=delta)
    om = freq.omega
    for n_plus, n_minus, plus_arr, minus_arr in _index_splits(r, J):
        sum_plus = om[plus_arr - 1].sum(axis=1)
        if n_minus:
            sum_minus = om[minus_arr - 1].sum(axis=1)
        else:
            sum_minus = np.zeros(1)
        omega_grid = sum_plus[:, None] - sum_minus[None, :]
        # order statistics of the combined tuple, vectorized per pair block
        for im in range(minus_arr.shape[0]):
            combined = np.concatenate(
                [plus_arr, np.broadcast_to(minus_arr[im], (plus_arr.shape[0], n_minus))],
                axis=1,
            )
            srt = np.sort(combined, axis=1)[:, ::-1]
            mu = srt[:, 2].astype(float)
            s_gap = (srt[:, 0] - srt[:, 1]).astype(float)
            omg = omega_grid[:, im]
            if n_plus == n_minus:
                structural = (plus_arr == minus_arr[im]).all(axis=1)
            else:
                structural = np.zeros(plus_arr.shape[0], dtype=bool)
            scan.n_scanned += plus_arr.shape[0]
            scan.n_structural += int(structural.sum())
            ratio = np.abs(omg) * mu ** delta / (1.0 + s_gap)
            ratio[structural] = np.inf
            i_min = int(np.argmin(ratio))
            if ratio[i_min] < scan.admissible_gamma:
                scan.admissible_gamma = float(ratio[i_min])
                scan.argmin = DivisorRecord(
                    plus=tuple(int(v) for v in plus_arr[i_min]),
                    minus=tuple(int(v) for v in minus_arr[im]),
                    value=float(omg[i_min]),
                    mu=int(mu[i_min]),
                    S=int(s_gap[i_min]),
                    structural=False,
                )
            bad = (~structural) & (np.abs(omg) < gamma * (1.0 + s_gap) / mu ** delta)
            for ib in np.nonzero(bad)[0]:
                scan.violations.append(DivisorRecord(
                    plus=tuple(int(v) for v in plus_arr[ib]),
                    minus=tuple(int(v) for v in minus_arr[im]),
                    value=float(omega_grid[ib, im]),
                    mu=int(srt[ib, 2]),
                    S=int(srt[ib, 0] - srt[ib, 1]),
                    structural=False,
                ))
    return scan


@dataclass(frozen=True)
class MeasureEstimate:
    """Wilson interval for the probability that a sample violates the bound."""

    n_samples: int
    n_violating: int
    p_hat: float
    lo: float
    hi: float
    gamma: float
    delta: float


def _wilson(successes: int, n: int, z: float = 1.96) -> tuple[float, float, float]:
    p = successes / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return p, max(0.0, center - half), min(1.0, center + half)


def estimate_resonant_measure(
    k: int,
    r: int,
    J: int,
    gamma: float,
    delta: float,
    n_samples: int = 200,
    seed: int = 0,
) -> MeasureEstimate:
    """Fraction of multiplier draws whose divisor scan has any violation.

    Index combinatorics are enumerated once; each sample only recomputes
    the signed sums, so the per-draw cost is a handful of matrix ops.
    """
    if n_samples < 1:
        raise ValueError("need at least one sample")
    splits = []
    for n_plus, n_minus, plus_arr, minus_arr in _index_splits(r, J):
        thresholds = []
        for im in range(minus_arr.shape[0]):
            combined = np.concatenate(
                [plus_arr, np.broadcast_to(minus_arr[im], (plus_arr.shape[0], n_minus))],
                axis=1,
            )
            srt = np.sort(combined, axis=1)[:, ::-1]
            mu = srt[:, 2].astype(float)
            s_gap = (srt[:, 0] - srt[:, 1]).astype(float)
            thr = gamma * (1.0 + s_gap) / mu ** delta
            if n_plus == n_minus:
                thr[(plus_arr == minus_arr[im]).all(axis=1)] = -1.0
            thresholds.append(thr)
        splits.append((plus_arr, minus_arr, np.stack(thresholds, axis=1)))

    n_bad = 0
    for i_sample in range(n_samples):
        child = derive_seed(seed, "measure", i_sample)
        freq = FrequencyVector.from_sample(sample_multiplier(k, J, child))
        om = freq.omega
        violated = False
        for plus_arr, minus_arr, thr in splits:
            sum_plus = om[plus_arr - 1].sum(axis=1)
            if minus_arr.shape[1]:
                sum_minus = om[minus_arr - 1].sum(axis=1)
            else:
                sum_minus = np.zeros(minus_arr.shape[0])
            omega_grid = sum_plus[:, None] - sum_minus[None, :]
            if (np.abs(omega_grid) < thr).any():
                violated = True
                break
        if violated:
            n_bad += 1
    p, lo, hi = _wilson(n_bad, n_samples)
    return MeasureEstimate(
        n_samples=n_samples, n_violating=n_bad,
        p_hat=p, lo=lo, hi=hi, gamma=gamma, delta=delta,
    )

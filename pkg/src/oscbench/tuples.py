"""Order statistics of index tuples and the interaction bounds built on them.

For a tuple of at least three nonzero integers, sorted by absolute
value v_1 >= v_2 >= v_3 >= ..., the quantities tracked everywhere are

    mu = v_3, S = v_1 - v_2, B = sqrt(v_2 v_3), C = v_1,
    A = B / (B + S).

All of them are invariant under permutation and sign flips of the
entries.  Bounds are checked numerically: exhaustively at arity 3 and
by seeded random sampling at higher arity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class TupleStats:
    mu: int
    S: int
    B: float
    C: int
    A: float


def tuple_stats(indices) -> TupleStats:
    """Order statistics of a tuple of nonzero integers (arity >= 3)."""
    mags = sorted((abs(int(j)) for j in indices), reverse=True)
    if len(mags) < 3:
        raise ValueError("statistics need at least three entries")
    if mags[-1] == 0:
        raise ValueError("indices must be nonzero")
    v1, v2, v3 = mags[0], mags[1], mags[2]
    b = math.sqrt(v2 * v3)
    return TupleStats(mu=v3, S=v1 - v2, B=b, C=v1, A=b / (b + (v1 - v2)))


def a_tilde(j1: int, j2: int, ell: int) -> float:
    """Two-largest-entry majorant for A of a tuple joined with one index.

    Depends only on the two largest magnitudes j1 >= j2 of the original
    tuple and the magnitude of the appended index.
    """
    j1, j2, ell = abs(int(j1)), abs(int(j2)), abs(int(ell))
    if not j1 >= j2 >= 1 or ell < 1:
        raise ValueError("need j1 >= j2 >= 1 and ell >= 1")
    if ell <= j2:
        return 2.0 * j2 / (ell + j1 - j2)
    root = math.sqrt(ell * j2)
    return 2.0 * root / (root + abs(j1 - ell))


def _stats_grid(v1: np.ndarray, v2: np.ndarray, v3: np.ndarray):
    """Vectorized (mu, S, B, A) from descending order statistics."""
    s_gap = (v1 - v2).astype(float)
    mu = v3.astype(float)
    b = np.sqrt(v2.astype(float) * mu)
    return mu, s_gap, b, b / (b + s_gap)


def _merge_pair_single(hi, lo, s):
    """Descending order stats of {hi, lo, s} with hi >= lo elementwise."""
    v1 = np.maximum(hi, s)
    v3 = np.minimum(lo, s)
    v2 = hi + lo + s - v1 - v3
    return v1, v2, v3


@dataclass
class LemmaReport:
    """Empirical sups for the tuple-joining inequalities.

    sup_l_times_a: sup of |l| A(j + (l,)) / |j_1|            (bound 2)
    sup_a_over_majorant: sup of A(j + (l,)) / a_tilde        (bound 1)
    sup_product: sup of A(j,l)^2 A(i,l)^2 / A(i + j)         (finite C)
    sup_mu_product: sup of max(mu(j,l) A(i,l)^2,
                               mu(i,l) A(j,l)^2) / mu(i+j)^2 (finite C)
    """

    j_bound: int
    pair_bound: int
    sup_l_times_a: float = 0.0
    sup_a_over_majorant: float = 0.0
    sup_product: float = 0.0
    sup_mu_product: float = 0.0
    arg_l_times_a: tuple = ()
    arg_product: tuple = ()
    arg_mu_product: tuple = ()
    sampled_arities: tuple = ()
    sample_sups: dict = field(default_factory=dict)


def _scan_arity3(j_bound: int, report: LemmaReport) -> None:
    j1g, j2g = np.meshgrid(np.arange(1, j_bound + 1), np.arange(1, j_bound + 1),
                           indexing="ij")
    keep = j1g >= j2g
    j1v, j2v = j1g[keep], j2g[keep]
    ells = np.arange(1, j_bound + 1)
    for ell in ells:
        v1, v2, v3 = _merge_pair_single(j1v, j2v, np.full_like(j1v, ell))
        _, _, _, a_val = _stats_grid(v1, v2, v3)
        ratio_l = ell * a_val / j1v
        i_max = int(np.argmax(ratio_l))
        if ratio_l[i_max] > report.sup_l_times_a:
            report.sup_l_times_a = float(ratio_l[i_max])
            report.arg_l_times_a = (int(j1v[i_max]), int(j2v[i_max]), int(ell))
        maj = np.where(
            ell <= j2v,
            2.0 * j2v / (ell + j1v - j2v),
            2.0 * np.sqrt(float(ell) * j2v)
            / (np.sqrt(float(ell) * j2v) + np.abs(j1v - ell)),
        )
        report.sup_a_over_majorant = max(
            report.sup_a_over_majorant, float((a_val / maj).max())
        )


def _scan_pair_lemmas(pair_bound: int, report: LemmaReport) -> None:
    """Exhaustive check of the two product inequalities for pairs i, j.

    i = (i1 >= i2), j = (j1 >= j2), joined index l; all entries up to
    pair_bound, l up to 3 * pair_bound.
    """
    p1, p2 = np.triu_indices(pair_bound)
    hi = np.maximum(p1 + 1, p2 + 1)
    lo = np.minimum(p1 + 1, p2 + 1)
    n_pairs = hi.size
    ihi, jhi = np.meshgrid(hi, hi, indexing="ij")
    ilo, jlo = np.meshgrid(lo, lo, indexing="ij")
    u1, u2, u3, _ = _sorted4(ihi, ilo, jhi, jlo)
    mu_ij, _, _, a_ij = _stats_grid(u1, u2, u3)
    for ell in range(1, 3 * pair_bound + 1):
        e = np.full((n_pairs, n_pairs), ell)
        v1j, v2j, v3j = _merge_pair_single(jhi, jlo, e)
        mu_jl, _, _, a_jl = _stats_grid(v1j, v2j, v3j)
        v1i, v2i, v3i = _merge_pair_single(ihi, ilo, e)
        mu_il, _, _, a_il = _stats_grid(v1i, v2i, v3i)
        prod = (a_jl ** 2) * (a_il ** 2) / a_ij
        i_max = int(np.argmax(prod))
        if prod.flat[i_max] > report.sup_product:
            report.sup_product = float(prod.flat[i_max])
            r, c = np.unravel_index(i_max, prod.shape)
            report.arg_product = (int(ihi[r, c]), int(ilo[r, c]),
                                  int(jhi[r, c]), int(jlo[r, c]), ell)
        mu_prod = np.maximum(mu_jl * a_il ** 2, mu_il * a_jl ** 2) / mu_ij ** 2
        i_max = int(np.argmax(mu_prod))
        if mu_prod.flat[i_max] > report.sup_mu_product:
            report.sup_mu_product = float(mu_prod.flat[i_max])
            r, c = np.unravel_index(i_max, mu_prod.shape)
            report.arg_mu_product = (int(ihi[r, c]), int(ilo[r, c]),
                                     int(jhi[r, c]), int(jlo[r, c]), ell)


def _sorted4(a, b, c, d):
    """Descending order statistics of four arrays elementwise."""
    stacked = np.stack([a, b, c, d])
    stacked = np.sort(stacked, axis=0)[::-1]
    return stacked[0], stacked[1], stacked[2], stacked[3]


def _sample_higher_arity(j_bound: int, samples: int, seed: int,
                         arities: tuple, report: LemmaReport) -> None:
    rng = np.random.default_rng(seed)
    sups = {"l_times_a": 0.0, "a_over_majorant": 0.0,
            "product": 0.0, "mu_product": 0.0}
    for _ in range(samples):
        ka = int(rng.integers(arities[0], arities[-1] + 1))
        kb = int(rng.integers(arities[0], arities[-1] + 1))
        i_tup = np.sort(rng.integers(1, j_bound + 1, size=ka))[::-1]
        j_tup = np.sort(rng.integers(1, j_bound + 1, size=kb))[::-1]
        ell = int(rng.integers(1, 3 * j_bound + 1))
        st_jl = tuple_stats(tuple(j_tup) + (ell,))
        st_il = tuple_stats(tuple(i_tup) + (ell,))
        st_ij = tuple_stats(tuple(i_tup) + tuple(j_tup))
        sups["l_times_a"] = max(sups["l_times_a"], ell * st_jl.A / j_tup[0])
        sups["a_over_majorant"] = max(
            sups["a_over_majorant"],
            st_jl.A / a_tilde(j_tup[0], j_tup[1], ell),
        )
        sups["product"] = max(
            sups["product"], st_jl.A ** 2 * st_il.A ** 2 / st_ij.A
        )
        sups["mu_product"] = max(
            sups["mu_product"],
            max(st_jl.mu * st_il.A ** 2, st_il.mu * st_jl.A ** 2) / st_ij.mu ** 2,
        )
    report.sampled_arities = arities
    report.sample_sups = sups


def verify_A_lemmas(
    j_bound: int = 120,
    pair_bound: int = 30,
    samples: int = 4000,
    seed: int = 2024,
    arities: tuple = (3, 5),
) -> LemmaReport:
    """Numerically verify the joining inequalities for the statistic A.

    Exhaustive at arity 3 up to j_bound (and up to pair_bound for the
    two product inequalities, whose index space is four-dimensional),
    random-sampled at arities in [arities[0], arities[1]].  Returns the
    report; callers assert on the recorded sups.
    """
    report = LemmaReport(j_bound=j_bound, pair_bound=pair_bound)
    _scan_arity3(j_bound, report)
    _scan_pair_lemmas(pair_bound, report)
    if samples > 0:
        _sample_higher_arity(j_bound, samples, seed, arities, report)
    return report

"""Hermite eigenbasis of the quantum harmonic oscillator on the line.

Modes are indexed from 1: ``phi_j = h_{j-1}`` where ``h_n`` is the
L2-normalized Hermite function.  ``T phi_j = (2j - 1) phi_j`` with
``T = -d^2/dx^2 + x^2``.  Everything overlap-related is evaluated with
Gauss-Hermite quadrature on the scaled polynomial parts
``p_n(x) = h_n(x) * exp(x^2 / 2)``, which satisfy the same three-term
recurrence as ``h_n`` and stay polynomial-sized, so no Gaussian
underflow can corrupt products of many factors.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.special import roots_hermite

_PI_M14 = math.pi ** -0.25

# exp(x^2/2) must stay below float max; |p_n| <= 0.82 * exp(x^2/2) for all n
_X_PLAIN_MAX = 37.0

OVERLAP_NOISE_FLOOR = 1e-14
TABLE_FORMAT_VERSION = 1


def _check_indices(indices) -> tuple[int, ...]:
    idx = tuple(int(j) for j in indices)
    if any(j < 1 for j in idx):
        raise ValueError(f"mode indices start at 1, got {idx}")
    return idx


@lru_cache(maxsize=32)
def gauss_hermite_nodes(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for exp(-x^2)-weighted quadrature, exact to degree 2n-1."""
    if n < 1:
        raise ValueError("need at least one node")
    x, w = roots_hermite(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def scaled_poly_rows(n_max: int, x: np.ndarray) -> np.ndarray:
    """Rows p_0..p_{n_max} of the scaled Hermite parts at the points x.

    p_n(x) = h_n(x) exp(x^2/2).  Row n has degree n.  Requires
    |x| <= 37 so that reconstructing h_n = p_n exp(-x^2/2) cannot
    overflow downstream consumers; the quadrature grids used here are
    always well inside that.
    """
    x = np.asarray(x, dtype=float)
    if x.size and np.max(np.abs(x)) > _X_PLAIN_MAX:
        raise ValueError(
            f"|x| up to {np.max(np.abs(x)):.1f} exceeds {_X_PLAIN_MAX}; "
            "use eval_phi, which rescales internally"
        )
    rows = np.empty((n_max + 1, x.size), dtype=float)
    rows[0] = _PI_M14
    if n_max >= 1:
        rows[1] = math.sqrt(2.0) * x * rows[0]
    for n in range(1, n_max):
        rows[n + 1] = (
            x * math.sqrt(2.0 / (n + 1)) * rows[n]
            - math.sqrt(n / (n + 1.0)) * rows[n - 1]
        )
    return rows


def phi_matrix(j_max: int, x: np.ndarray) -> np.ndarray:
    """Rows phi_1..phi_{j_max} evaluated at x (|x| <= 37)."""
    x = np.asarray(x, dtype=float)
    return scaled_poly_rows(j_max - 1, x) * np.exp(-0.5 * x * x)


def phi_and_derivative(j_max: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """phi_j and phi_j' for j = 1..j_max at the points x.

    Uses h_n' = sqrt(n/2) h_{n-1} - sqrt((n+1)/2) h_{n+1}, so one extra
    row is generated internally.
    """
    x = np.asarray(x, dtype=float)
    h = scaled_poly_rows(j_max, x) * np.exp(-0.5 * x * x)
    d = np.empty((j_max, x.size), dtype=float)
    for n in range(j_max):
        d[n] = -math.sqrt((n + 1) / 2.0) * h[n + 1]
        if n >= 1:
            d[n] += math.sqrt(n / 2.0) * h[n - 1]
    return h[:j_max], d


def eval_phi(j: int, x) -> np.ndarray | float:
    """phi_j(x) for arbitrary real x, safe for j up to at least 10^4.

    The three-term recurrence is run on the scaled parts p_n with a
    per-point logarithmic scale accumulator, so neither the Gaussian
    seed nor the polynomial growth can underflow or overflow before the
    final combination exp(log p_n - x^2/2).
    """
    j = int(j)
    if j < 1:
        raise ValueError("mode index starts at 1")
    scalar = np.isscalar(x)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n_max = j - 1
    fm1 = np.zeros_like(x)
    f = np.full_like(x, _PI_M14)
    scale = np.zeros_like(x)
    if n_max >= 1:
        fm1, f = f, math.sqrt(2.0) * x * f
    for n in range(1, n_max):
        fm1, f = f, (
            x * math.sqrt(2.0 / (n + 1)) * f
            - math.sqrt(n / (n + 1.0)) * fm1
        )
        if n % 16 == 0:
            big = np.maximum(np.abs(f), np.abs(fm1))
            mask = big > 1e150
            if mask.any():
                f[mask] /= big[mask]
                fm1[mask] /= big[mask]
                scale[mask] += np.log(big[mask])
    expo = scale - 0.5 * x * x
    out = np.where(expo > -700.0, f * np.exp(np.maximum(expo, -700.0)), 0.0)
    return float(out[0]) if scalar else out


def eigenvalue(j: int) -> int:
    """T phi_j = (2j - 1) phi_j."""
    return 2 * int(j) - 1


def sup_norms(js, points_per_unit: float = 500.0) -> np.ndarray:
    """Max of |phi_j| over the line, for each j in js.

    One shared scan grid covers [0, sqrt(2 j_max - 1) + 4] (the
    functions are even/odd and negligible beyond the turning point).
    The recurrence runs rescaled, exactly as in eval_phi.
    """
    js = np.asarray(sorted(set(int(j) for j in js)), dtype=int)
    if js.size == 0:
        return np.empty(0)
    if js[0] < 1:
        raise ValueError("mode index starts at 1")
    j_max = int(js[-1])
    x_hi = math.sqrt(2.0 * j_max - 1.0) + 4.0
    n_pts = max(4000, int(points_per_unit * x_hi))
    x = np.linspace(0.0, x_hi, n_pts)
    fm1 = np.zeros_like(x)
    f = np.full_like(x, _PI_M14)
    scale = np.zeros_like(x)
    want = set(int(j) for j in js)
    sup = np.zeros(js.size)
    pos = {int(j): i for i, j in enumerate(js)}

    def capture(j_mode: int) -> None:
        expo = scale - 0.5 * x * x
        vals = np.where(expo > -700.0, np.abs(f) * np.exp(np.maximum(expo, -700.0)), 0.0)
        sup[pos[j_mode]] = vals.max()

    if 1 in want:
        capture(1)
    if j_max >= 2:
        fm1, f = f, math.sqrt(2.0) * x * f
        if 2 in want:
            capture(2)
    for n in range(1, j_max - 1):
        fm1, f = f, (
            x * math.sqrt(2.0 / (n + 1)) * f
            - math.sqrt(n / (n + 1.0)) * fm1
        )
        if n % 16 == 0:
            big = np.maximum(np.abs(f), np.abs(fm1))
            mask = big > 1e150
            if mask.any():
                f[mask] /= big[mask]
                fm1[mask] /= big[mask]
                scale[mask] += np.log(big[mask])
        if (n + 2) in want:
            capture(n + 2)
    return sup


@dataclass(frozen=True)
class SupNormFit:
    """Least-squares fit of log sup|phi_j| against log j."""

    exponent: float
    intercept: float
    js: np.ndarray
    sups: np.ndarray


def fit_supnorm_exponent(j_lo: int = 50, j_hi: int = 2000, n_samples: int = 60) -> SupNormFit:
    """Fit sup|phi_j| ~ C j^alpha over a log-spaced range of modes."""
    js = np.unique(np.round(np.logspace(math.log10(j_lo), math.log10(j_hi), n_samples)).astype(int))
    sups = sup_norms(js)
    slope, intercept = np.polyfit(np.log(js), np.log(sups), 1)
    return SupNormFit(exponent=float(slope), intercept=float(intercept), js=js, sups=sups)


# ---------------------------------------------------------------------------
# overlap integrals


def _overlap_nodes(arity: int, degree_sum: int) -> tuple[np.ndarray, np.ndarray, float]:
    """Quadrature data for a product of `arity` modes of polynomial degree sum D.

    Substituting x = y sqrt(2/k) turns the product of k Gaussians into
    exp(-y^2); n = ceil(D/2) + 1 nodes then integrate the remaining
    degree-D polynomial exactly.
    """
    n = degree_sum // 2 + 1 if degree_sum % 2 == 0 else (degree_sum + 1) // 2 + 1
    y, w = gauss_hermite_nodes(n)
    stretch = math.sqrt(2.0 / arity)
    return y * stretch, w, stretch


def overlap(indices, n_nodes: int | None = None) -> float:
    """Integral over R of the product prod_i phi_{j_i}(x).

    Exact (up to roundoff) for any index tuple with arity >= 2; returns
    0.0 outright when the total polynomial degree is odd (parity).
    """
    idx = _check_indices(indices)
    k = len(idx)
    if k < 2:
        raise ValueError("overlap needs at least two factors")
    degs = [j - 1 for j in idx]
    d_sum = sum(degs)
    if d_sum % 2 == 1:
        return 0.0
    if n_nodes is None:
        x, w, stretch = _overlap_nodes(k, d_sum)
    else:
        y, w = gauss_hermite_nodes(int(n_nodes))
        stretch = math.sqrt(2.0 / k)
        x = y * stretch
    rows = scaled_poly_rows(max(degs), x)
    prod = rows[degs[0]].copy()
    for d in degs[1:]:
        prod *= rows[d]
    return float(stretch * np.dot(w, prod))


def _multiset_count(J: int, k: int) -> int:
    return math.comb(J + k - 1, k)


@dataclass
class OverlapTable:
    """All nonzero overlaps of arity k with every index <= J.

    Keys are index tuples sorted descending.  Parity-odd tuples and
    entries below the noise floor are omitted; value() returns 0.0 for
    those and raises for tuples outside the table's range.
    """

    k: int
    J: int
    entries: dict[tuple[int, ...], float] = field(default_factory=dict)
    noise_floor: float = OVERLAP_NOISE_FLOOR
    version: int = TABLE_FORMAT_VERSION

    def key(self, indices) -> tuple[int, ...]:
        idx = _check_indices(indices)
        if len(idx) != self.k:
            raise ValueError(f"table holds arity {self.k}, got {len(idx)} indices")
        if max(idx) > self.J:
            raise ValueError(f"index {max(idx)} outside table cutoff J={self.J}")
        return tuple(sorted(idx, reverse=True))

    def value(self, indices) -> float:
        return self.entries.get(self.key(indices), 0.0)

    def __len__(self) -> int:
        return len(self.entries)

    def save_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["k", "J", "version"])
            writer.writerow([self.k, self.J, self.version])
            writer.writerow([f"j_{i + 1}" for i in range(self.k)] + ["a"])
            for key in sorted(self.entries):
                writer.writerow(list(key) + ["%.17g" % self.entries[key]])

    @classmethod
    def load_csv(cls, path) -> "OverlapTable":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            head = next(reader)
            if head != ["k", "J", "version"]:
                raise ValueError(f"unrecognized table header {head!r} in {path}")
            k, J, version = (int(v) for v in next(reader))
            next(reader)
            entries = {}
            for row in reader:
                if not row:
                    continue
                entries[tuple(int(v) for v in row[:k])] = float(row[k])
        return cls(k=k, J=J, entries=entries, version=version)


def build_overlap_table(
    k: int,
    J: int,
    noise_floor: float = OVERLAP_NOISE_FLOOR,
    budget: int = 2_000_000,
) -> OverlapTable:
    """Tabulate every overlap of arity k with indices <= J.

    All tuples share one quadrature grid sized for the worst-case
    degree sum, so each entry is still exact.  Tuples are enumerated as
    descending multisets; |a| below the noise floor is dropped along
    with parity zeros.
    """
    if k < 2:
        raise ValueError("arity must be at least 2")
    if J < 1:
        raise ValueError("cutoff must be at least 1")
    n_tuples = _multiset_count(J, k)
    if n_tuples > budget:
        raise ValueError(
            f"{n_tuples} tuples for k={k}, J={J} exceeds budget {budget}"
        )
    d_max = k * (J - 1)
    x, w, stretch = _overlap_nodes(k, d_max)
    rows = scaled_poly_rows(J - 1, x)
    entries: dict[tuple[int, ...], float] = {}
    from itertools import combinations_with_replacement

    for combo in combinations_with_replacement(range(J, 0, -1), k):
        if (sum(combo) - k) % 2 == 1:
            continue
        prod = rows[combo[0] - 1].copy()
        for j in combo[1:]:
            prod *= rows[j - 1]
        val = float(stretch * np.dot(w, prod))
        if abs(val) >= noise_floor:
            entries[combo] = val
    return OverlapTable(k=k, J=J, entries=entries, noise_floor=noise_floor)


def default_cache_dir() -> Path:
    env = os.environ.get("OSCBENCH_CACHE")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "oscbench"


def cached_overlap_table(
    k: int,
    J: int,
    cache_dir=None,
    budget: int = 2_000_000,
) -> OverlapTable:
    """build_overlap_table with a CSV cache keyed by (k, J, format version)."""
    root = Path(cache_dir) if cache_dir is not None else default_cache_dir()
    path = root / f"overlap_k{k}_J{J}_v{TABLE_FORMAT_VERSION}.csv"
    if path.exists():
        try:
            table = OverlapTable.load_csv(path)
            if table.k == k and table.J == J and table.version == TABLE_FORMAT_VERSION:
                return table
        except (ValueError, OSError):
            pass
    table = build_overlap_table(k, J, budget=budget)
    table.save_csv(path)
    return table


# ---------------------------------------------------------------------------
# decay-constant scan


@dataclass(frozen=True)
class DecayScan:
    """Empirical sup of |a_j| C^beta / (mu^nu A^N) over ordered tuples."""

    k: int
    nu: float
    beta: float
    cutoff: int
    sup_by_n: dict[float, float]
    restricted_sup_by_n: dict[float, float]
    restricted_cutoff: int
    argmax_by_n: dict[float, tuple[int, ...]]
    n_tuples: int


def _pair_stats(hi: np.ndarray, lo: np.ndarray, bhi, blo):
    """Order statistics of the union of two descending pairs (vectorized)."""
    v1 = np.maximum(hi, bhi)
    v4 = np.minimum(lo, blo)
    m1 = np.minimum(hi, bhi)
    m2 = np.maximum(lo, blo)
    v2 = np.maximum(m1, m2)
    v3 = np.minimum(m1, m2)
    return v1, v2, v3, v4


def overlap_decay_scan(
    k: int,
    j1_max: int = 150,
    nu: float = 0.2,
    beta: float = 1.0 / 24.0,
    n_list: tuple[float, ...] = (1.0, 2.0, 4.0),
    restricted_max: int = 100,
    block: int = 256,
) -> DecayScan:
    """Scan sup |a_j| C^beta / (mu^nu A^N) over all ordered tuples, arity 3 or 4.

    Tuples are generated as products of precomputed half-tuples and the
    quadrature contraction is a blocked matrix product, so the full
    j_1 <= 150 quartic scan stays in the tens of millions of flops.
    """
    if k not in (3, 4):
        raise ValueError("decay scan implemented for arity 3 and 4")
    d_max = k * (j1_max - 1)
    x, w, stretch = _overlap_nodes(k, d_max)
    rows = scaled_poly_rows(j1_max - 1, x)
    ww = w * stretch

    if k == 4:
        pa, pb = np.triu_indices(j1_max)
        left_idx = np.stack([pa + 1, pb + 1], axis=1)
        right_idx = left_idx
        qa_raw = rows[pa] * rows[pb]
        left_mat = qa_raw * ww
        right_mat = qa_raw
        lhi, llo = np.maximum(pa + 1, pb + 1), np.minimum(pa + 1, pb + 1)
        rhi, rlo = lhi, llo
        lpar = (pa + pb) % 2
        rpar = lpar
    else:
        pa, pb = np.triu_indices(j1_max)
        right_idx = np.stack([pa + 1, pb + 1], axis=1)
        right_mat = rows[pa] * rows[pb]
        left_idx = np.arange(1, j1_max + 1)[:, None]
        left_mat = rows * ww
        lhi = llo = np.arange(1, j1_max + 1)
        rhi, rlo = np.maximum(pa + 1, pb + 1), np.minimum(pa + 1, pb + 1)
        lpar = np.arange(j1_max) % 2
        rpar = (pa + pb) % 2

    sup = {float(N): 0.0 for N in n_list}
    sup_r = {float(N): 0.0 for N in n_list}
    arg = {float(N): None for N in n_list}
    n_seen = 0
    for lo_start in range(0, left_mat.shape[0], block):
        sl = slice(lo_start, min(lo_start + block, left_mat.shape[0]))
        a_blk = left_mat[sl] @ right_mat.T
        bhi, blo = lhi[sl][:, None], llo[sl][:, None]
        if k == 4:
            v1, v2, v3, _ = _pair_stats(np.broadcast_to(rhi, a_blk.shape),
                                        np.broadcast_to(rlo, a_blk.shape),
                                        bhi, blo)
        else:
            v1 = np.maximum(bhi, rhi[None, :])
            v3 = np.minimum(bhi, rlo[None, :])
            v2 = bhi + rhi[None, :] + rlo[None, :] - v1 - v3
        parity_odd = (lpar[sl][:, None] + rpar[None, :]) % 2 == 1
        a_abs = np.abs(a_blk)
        a_abs[parity_odd] = 0.0
        s_gap = (v1 - v2).astype(float)
        mu = v3.astype(float)
        b_geo = np.sqrt(v2.astype(float) * mu)
        a_ratio = b_geo / (b_geo + s_gap)
        base = a_abs * (v1.astype(float) ** beta) / (mu ** nu)
        restricted = v1 <= restricted_max
        n_seen += a_abs.size
        for N in sup:
            vals = base / (a_ratio ** N)
            m = float(vals.max())
            if m > sup[N]:
                sup[N] = m
                flat = int(np.argmax(vals))
                r, c = np.unravel_index(flat, vals.shape)
                combined = tuple(sorted(
                    list(left_idx[sl][r]) + list(right_idx[c]), reverse=True))
                arg[N] = combined
            if restricted.any():
                mr = float(np.where(restricted, vals, 0.0).max())
                if mr > sup_r[N]:
                    sup_r[N] = mr
    return DecayScan(
        k=k, nu=nu, beta=beta, cutoff=j1_max,
        sup_by_n=sup, restricted_sup_by_n=sup_r,
        restricted_cutoff=restricted_max,
        argmax_by_n={N: v for N, v in arg.items()},
        n_tuples=n_seen,
    )

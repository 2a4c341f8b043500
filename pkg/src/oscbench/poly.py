"""Sparse polynomials in mode variables and their Poisson algebra.

A monomial is xi_{j_1}..xi_{j_p} eta_{l_1}..eta_{l_q}, stored as a pair
of ascending index tuples; coefficients are complex.  The bracket is

    {F, G} = i sum_j (dF/dxi_j dG/deta_j - dF/deta_j dG/dxi_j),

under which the quadratic H_0 = sum_j omega_j xi_j eta_j acts diagonally:
{H_0, xi^(j) eta^(l)} = -i Omega(j, l) xi^(j) eta^(l) with Omega the
signed frequency sum.
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass
from itertools import combinations_with_replacement
from pathlib import Path

import numpy as np

from .basis import OverlapTable, cached_overlap_table
from .frequencies import FrequencyVector, small_divisor
from .state import StateVector
from .tuples import tuple_stats

Key = tuple[tuple[int, ...], tuple[int, ...]]

DROP_REL_TOL = 1e-16


def _canon_key(xi_idx, eta_idx) -> Key:
    return tuple(sorted(int(j) for j in xi_idx)), tuple(sorted(int(j) for j in eta_idx))


class SparsePolynomial:
    """Dict-backed polynomial over the 2J mode variables, cutoff-aware."""

    __slots__ = ("J", "terms")

    def __init__(self, J: int, terms: dict | None = None):
        self.J = int(J)
        self.terms: dict[Key, complex] = dict(terms) if terms else {}

    # -- construction ----------------------------------------------------

    @classmethod
    def zero(cls, J: int) -> "SparsePolynomial":
        return cls(J)

    @classmethod
    def monomial(cls, J: int, xi_idx, eta_idx, coeff=1.0) -> "SparsePolynomial":
        key = _canon_key(xi_idx, eta_idx)
        for j in key[0] + key[1]:
            if not 1 <= j <= J:
                raise ValueError(f"index {j} outside 1..{J}")
        return cls(J, {key: complex(coeff)})

    @classmethod
    def quadratic_diagonal(cls, freq: FrequencyVector) -> "SparsePolynomial":
        """sum_j omega_j xi_j eta_j."""
        return cls(freq.J, {((j,), (j,)): complex(freq.of(j))
                            for j in range(1, freq.J + 1)})

    # -- bookkeeping ------------------------------------------------------

    def copy(self) -> "SparsePolynomial":
        return SparsePolynomial(self.J, self.terms)

    def __len__(self) -> int:
        return len(self.terms)

    def __bool__(self) -> bool:
        return bool(self.terms)

    def max_abs_coeff(self) -> float:
        return max((abs(c) for c in self.terms.values()), default=0.0)

    def prune(self, rel_tol: float = DROP_REL_TOL) -> "SparsePolynomial":
        """Drop coefficients below rel_tol times the largest magnitude."""
        cut = self.max_abs_coeff() * rel_tol
        self.terms = {k: c for k, c in self.terms.items() if abs(c) > cut}
        return self

    def degrees(self) -> set[int]:
        return {len(k[0]) + len(k[1]) for k in self.terms}

    def degree_part(self, d: int) -> "SparsePolynomial":
        return SparsePolynomial(
            self.J, {k: c for k, c in self.terms.items() if len(k[0]) + len(k[1]) == d}
        )

    def truncated(self, d_max: int) -> tuple["SparsePolynomial", dict[int, float]]:
        """Split off degrees above d_max; returns (kept, dropped coefficient mass)."""
        kept = {}
        dropped: dict[int, float] = {}
        for k, c in self.terms.items():
            d = len(k[0]) + len(k[1])
            if d <= d_max:
                kept[k] = c
            else:
                dropped[d] = dropped.get(d, 0.0) + abs(c)
        return SparsePolynomial(self.J, kept), dropped

    # -- arithmetic --------------------------------------------------------

    def _require_same_cutoff(self, other: "SparsePolynomial") -> None:
        if self.J != other.J:
            raise ValueError(f"cutoff mismatch: {self.J} vs {other.J}")

    def __add__(self, other: "SparsePolynomial") -> "SparsePolynomial":
        self._require_same_cutoff(other)
        out = dict(self.terms)
        for k, c in other.terms.items():
            out[k] = out.get(k, 0.0) + c
        return SparsePolynomial(self.J, out).prune()

    def __sub__(self, other: "SparsePolynomial") -> "SparsePolynomial":
        return self + (other * -1.0)

    def __mul__(self, scalar) -> "SparsePolynomial":
        s = complex(scalar)
        return SparsePolynomial(self.J, {k: c * s for k, c in self.terms.items()})

    __rmul__ = __mul__

    def coeff(self, xi_idx, eta_idx) -> complex:
        return self.terms.get(_canon_key(xi_idx, eta_idx), 0.0 + 0.0j)

    def max_coeff_diff(self, other: "SparsePolynomial") -> float:
        keys = set(self.terms) | set(other.terms)
        return max(
            (abs(self.terms.get(k, 0.0) - other.terms.get(k, 0.0)) for k in keys),
            default=0.0,
        )

    # -- evaluation ---------------------------------------------------------

    def evaluate(self, z: StateVector) -> complex:
        if z.J != self.J:
            raise ValueError("state length does not match cutoff")
        total = 0.0 + 0.0j
        for (xi_idx, eta_idx), c in self.terms.items():
            v = c
            for j in xi_idx:
                v *= z.xi[j - 1]
            for j in eta_idx:
                v *= z.eta[j - 1]
            total += v
        return total

    def gradients(self, z: StateVector) -> tuple[np.ndarray, np.ndarray]:
        """(dP/dxi, dP/deta) at z, each a length-J complex vector."""
        if z.J != self.J:
            raise ValueError("state length does not match cutoff")
        gx = np.zeros(self.J, complex)
        ge = np.zeros(self.J, complex)
        for (xi_idx, eta_idx), c in self.terms.items():
            xc = Counter(xi_idx)
            ec = Counter(eta_idx)
            eta_prod = 1.0 + 0.0j
            for j in eta_idx:
                eta_prod *= z.eta[j - 1]
            xi_prod = 1.0 + 0.0j
            for j in xi_idx:
                xi_prod *= z.xi[j - 1]
            for j, cnt in xc.items():
                partial = c * cnt * eta_prod
                for jj, cc in xc.items():
                    partial *= z.xi[jj - 1] ** (cc - 1 if jj == j else cc)
                gx[j - 1] += partial
            for j, cnt in ec.items():
                partial = c * cnt * xi_prod
                for jj, cc in ec.items():
                    partial *= z.eta[jj - 1] ** (cc - 1 if jj == j else cc)
                ge[j - 1] += partial
        return gx, ge

    # -- structure tests -----------------------------------------------------

    def reality_mismatch(self) -> float:
        """Max |conj(a_{xi,eta}) - a_{eta,xi}|; zero for real-valued Hamiltonians."""
        worst = 0.0
        for (xi_idx, eta_idx), c in self.terms.items():
            mirror = self.terms.get((eta_idx, xi_idx), 0.0 + 0.0j)
            worst = max(worst, abs(np.conj(c) - mirror))
        return worst

    def non_action_mass(self) -> float:
        """Largest coefficient magnitude outside the action subalgebra."""
        return max(
            (abs(c) for (xi_idx, eta_idx), c in self.terms.items() if xi_idx != eta_idx),
            default=0.0,
        )

    def is_action_only(self) -> bool:
        return all(k[0] == k[1] for k in self.terms)

    # -- serialization ---------------------------------------------------------

    def save_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["J", self.J])
            writer.writerow(["xi_indices", "eta_indices", "re", "im"])
            for key in sorted(self.terms):
                c = self.terms[key]
                writer.writerow([
                    " ".join(map(str, key[0])), " ".join(map(str, key[1])),
                    "%.17g" % c.real, "%.17g" % c.imag,
                ])

    @classmethod
    def load_csv(cls, path) -> "SparsePolynomial":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            head = next(reader)
            if head[0] != "J":
                raise ValueError(f"unrecognized polynomial header {head!r}")
            J = int(head[1])
            next(reader)
            terms = {}
            for row in reader:
                if not row:
                    continue
                xi_idx = tuple(int(v) for v in row[0].split()) if row[0] else ()
                eta_idx = tuple(int(v) for v in row[1].split()) if row[1] else ()
                terms[(xi_idx, eta_idx)] = complex(float(row[2]), float(row[3]))
        return cls(J, terms)


# ---------------------------------------------------------------------------
# Poisson structure


def _remove_one(idx: tuple, j: int) -> tuple:
    out = list(idx)
    out.remove(j)
    return tuple(out)


def _merge(a: tuple, b: tuple) -> tuple:
    return tuple(sorted(a + b))


def poisson_bracket(F: SparsePolynomial, G: SparsePolynomial) -> SparsePolynomial:
    """{F, G} = i sum_j (dF/dxi_j dG/deta_j - dF/deta_j dG/dxi_j)."""
    F._require_same_cutoff(G)
    out: dict[Key, complex] = {}
    g_terms = [
        (k, c, Counter(k[0]), Counter(k[1])) for k, c in G.terms.items()
    ]
    for (fx, fe), fc in F.terms.items():
        fxc, fec = Counter(fx), Counter(fe)
        for (gx, ge), gc, gxc, gec in g_terms:
            for j in fxc:
                if j in gec:
                    key = (_merge(_remove_one(fx, j), gx),
                           _merge(fe, _remove_one(ge, j)))
                    val = 1j * fc * gc * fxc[j] * gec[j]
                    out[key] = out.get(key, 0.0) + val
            for j in fec:
                if j in gxc:
                    key = (_merge(fx, _remove_one(gx, j)),
                           _merge(_remove_one(fe, j), ge))
                    val = -1j * fc * gc * fec[j] * gxc[j]
                    out[key] = out.get(key, 0.0) + val
    return SparsePolynomial(F.J, out).prune()


def h0_eigenvalue(freq: FrequencyVector, xi_idx, eta_idx) -> complex:
    """Bracket eigenvalue of a monomial under H_0: -i Omega(xi_idx, eta_idx)."""
    return -1j * small_divisor(freq, xi_idx, eta_idx)


def bracket_with_H0(freq: FrequencyVector, P: SparsePolynomial) -> SparsePolynomial:
    """{H_0, P} computed termwise from the exact signed frequency sums.

    Monomials with xi and eta index multisets equal are annihilated
    exactly (their divisor is a structural zero), so action polynomials
    pass through to the zero polynomial with no roundoff.
    """
    if freq.J < P.J:
        raise ValueError("frequency table shorter than polynomial cutoff")
    out = {}
    for (xi_idx, eta_idx), c in P.terms.items():
        lam = h0_eigenvalue(freq, xi_idx, eta_idx)
        if lam != 0.0:
            out[(xi_idx, eta_idx)] = lam * c
    return SparsePolynomial(P.J, out)


def vector_field_apply(P: SparsePolynomial, z: StateVector) -> StateVector:
    """Signed symplectic gradient of P: the pair (-dP/dxi, +dP/deta).

    The +-i factors and the block pairing are owned by the consumers:
    the physical evolution reads xi' = -i (eta slot), eta' = -i (xi
    slot), while the generator flows in the normalization use the
    bracket-adapted orientation (the same pair times +i, slots swapped).
    """
    gx, ge = P.gradients(z)
    return StateVector(xi=-gx, eta=ge)


# ---------------------------------------------------------------------------
# diagnostics and model building


def class_T_diagnostic(
    P: SparsePolynomial,
    nu: float = 0.2,
    beta: float = 1.0 / 24.0,
    n_exponent: float = 1.0,
    plus_variant: bool = False,
) -> float:
    """Empirical interaction-decay constant of a homogeneous polynomial.

    sup over monomials of |a| C^beta / (mu^nu A^N); the plus variant
    multiplies by (1 + S).  Requires degree at least 3 (the statistics
    need three indices).
    """
    degs = P.degrees()
    if len(degs) > 1:
        raise ValueError(f"polynomial mixes degrees {sorted(degs)}")
    if degs and min(degs) < 3:
        raise ValueError("diagnostic needs degree >= 3")
    worst = 0.0
    for (xi_idx, eta_idx), c in P.terms.items():
        st = tuple_stats(xi_idx + eta_idx)
        val = abs(c) * st.C ** beta / (st.mu ** nu * st.A ** n_exponent)
        if plus_variant:
            val *= 1.0 + st.S
        worst = max(worst, val)
    return worst


def _multinomial(counts: Counter) -> int:
    total = sum(counts.values())
    out = math.factorial(total)
    for c in counts.values():
        out //= math.factorial(c)
    return out


def validate_g_taylor(g_taylor: dict) -> dict[tuple[int, int], complex]:
    """Normalize and check a nonlinearity's Taylor data g_{l,m}.

    Keys are (l, m) powers of (psi, conj psi); real-valuedness requires
    g_{l,m} = conj(g_{m,l}); total degree must be at least 3.
    """
    out = {}
    for key, val in g_taylor.items():
        l, m = (int(v) for v in key)
        if l < 0 or m < 0 or l + m < 3:
            raise ValueError(f"g term ({l},{m}) must have total degree >= 3")
        out[(l, m)] = complex(val)
    for (l, m), val in out.items():
        mirror = out.get((m, l))
        if mirror is None or abs(np.conj(val) - mirror) > 1e-14 * max(1.0, abs(val)):
            raise ValueError(
                f"g is not real: need g[({m},{l})] = conj(g[({l},{m})])"
            )
    return out


def expand_nonlinearity(
    g_taylor: dict,
    J: int,
    r: int,
    tables: dict[int, OverlapTable] | None = None,
    cache_dir=None,
) -> SparsePolynomial:
    """Mode expansion of int G(psi, conj psi) dx through degree r.

    Each Taylor term g_{l,m} psi^l conj(psi)^m contributes, for every
    pair of index multisets, the overlap of the combined tuple times the
    multiset multinomial counts.  Terms of degree above r are omitted.
    """
    g = validate_g_taylor(g_taylor)
    out: dict[Key, complex] = {}
    for (l, m), coeff in sorted(g.items()):
        if l + m > r:
            continue
        arity = l + m
        if tables is not None and arity in tables:
            table = tables[arity]
            if table.k != arity or table.J < J:
                raise ValueError(f"table for arity {arity} does not cover J={J}")
        else:
            table = cached_overlap_table(arity, J, cache_dir=cache_dir)
        for xi_idx in combinations_with_replacement(range(1, J + 1), l):
            mult_xi = _multinomial(Counter(xi_idx))
            for eta_idx in combinations_with_replacement(range(1, J + 1), m):
                a = table.value(xi_idx + eta_idx)
                if a == 0.0:
                    continue
                mult = mult_xi * _multinomial(Counter(eta_idx))
                key = (xi_idx, eta_idx)
                out[key] = out.get(key, 0.0) + coeff * mult * a
    return SparsePolynomial(J, out).prune()

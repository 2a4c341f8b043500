"""Birkhoff normalization of H = H_0 + P up to a prescribed order.

Order by order, the degree-k part Q of the current Hamiltonian is split
as Q = Z_k + (terms to kill); the generator chi_k solves the linear
equation {H_0, chi_k} + Q = Z_k coefficientwise (each non-action
monomial is divided by its small divisor), and the canonical change of
coordinates is realized as the time-1 flow of chi_k, applied to H as a
Lie series truncated at the working degree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .frequencies import FrequencyVector, NonresonanceScan, small_divisor
from .poly import SparsePolynomial, bracket_with_H0, poisson_bracket
from .state import StateVector

DIVISOR_FLOOR = 1e-12

_sigma_cache: int | None = None


def homological_sign() -> int:
    """Orientation of the generator: chi = sigma * i * a / Omega per monomial.

    Calibrated once at runtime on a one-term model: the correct sign is
    the one for which {H_0, chi} + Q vanishes identically.  Both signs
    are tried; exactly one must win.
    """
    global _sigma_cache
    if _sigma_cache is not None:
        return _sigma_cache
    freq = FrequencyVector.unperturbed(3)
    q = SparsePolynomial.monomial(3, (1, 2), (3,), 1.0)
    divisor = small_divisor(freq, (1, 2), (3,))
    winners = []
    for sigma in (+1, -1):
        chi = SparsePolynomial(3, {k: sigma * 1j * c / divisor
                                   for k, c in q.terms.items()})
        residual = (bracket_with_H0(freq, chi) + q).max_abs_coeff()
        if residual < 1e-14:
            winners.append(sigma)
    if len(winners) != 1:
        raise AssertionError(f"sign calibration found {winners}, expected one winner")
    _sigma_cache = winners[0]
    return _sigma_cache


@dataclass
class HomologicalSplit:
    """Solution of {H_0, chi} + Q = Z for one homogeneous block.

    Z collects the action monomials of Q (untouched by the bracket);
    chi carries one term per remaining monomial.  min_abs_divisor is
    the smallest |Omega| actually divided by.
    """

    chi: SparsePolynomial
    Z: SparsePolynomial
    min_abs_divisor: float
    degree: int
    floor: float = DIVISOR_FLOOR


class ResonantSampleError(RuntimeError):
    """A divisor fell below the numerical floor; the sample is unusable."""


def solve_homological(
    Q: SparsePolynomial,
    freq: FrequencyVector,
    floor: float = DIVISOR_FLOOR,
    certificate: NonresonanceScan | None = None,
) -> HomologicalSplit:
    """Split Q into resonant part Z and generator chi killing the rest.

    Every non-action monomial coefficient is divided by its exact
    signed frequency sum; a divisor below the floor aborts with
    ResonantSampleError rather than producing a huge generator.  An
    optional scan certificate is checked for coverage (order and cutoff
    at least those of Q, and violation-free).
    """
    degs = Q.degrees()
    if len(degs) > 1:
        raise ValueError(f"homological step needs a homogeneous block, got degrees {sorted(degs)}")
    degree = degs.pop() if degs else 0
    if certificate is not None:
        if certificate.r < degree or certificate.J < Q.J:
            raise ValueError(
                f"certificate covers r={certificate.r}, J={certificate.J}; "
                f"need r>={degree}, J>={Q.J}"
            )
        if not certificate.certified:
            raise ValueError("certificate records violations; sample not usable")
    sigma = homological_sign()
    chi_terms = {}
    z_terms = {}
    min_div = math.inf
    for (xi_idx, eta_idx), c in Q.terms.items():
        if xi_idx == eta_idx:
            z_terms[(xi_idx, eta_idx)] = c
            continue
        divisor = small_divisor(freq, xi_idx, eta_idx)
        if abs(divisor) < floor:
            raise ResonantSampleError(
                f"divisor {divisor:.3e} for {xi_idx} | {eta_idx} below floor {floor:g}"
            )
        min_div = min(min_div, abs(divisor))
        chi_terms[(xi_idx, eta_idx)] = sigma * 1j * c / divisor
    return HomologicalSplit(
        chi=SparsePolynomial(Q.J, chi_terms),
        Z=SparsePolynomial(Q.J, z_terms),
        min_abs_divisor=min_div,
        degree=degree,
        floor=floor,
    )


def homological_residual(split: HomologicalSplit, Q: SparsePolynomial,
                         freq: FrequencyVector) -> float:
    """Relative sup-norm of {H_0, chi} + Q - Z; zero up to roundoff."""
    res = (bracket_with_H0(freq, split.chi) + Q - split.Z).max_abs_coeff()
    scale = Q.max_abs_coeff()
    return res / scale if scale else res


def lie_transform_series(
    P: SparsePolynomial,
    chi: SparsePolynomial,
    r: int,
) -> tuple[SparsePolynomial, dict[int, float]]:
    """P composed with the time-1 flow of chi, truncated at degree r.

    Sums P + {P, chi} + {{P, chi}, chi}/2! + ... ; each bracket with a
    generator of degree >= 3 raises the minimum degree, so the series
    terminates once the iterate lands entirely above r.  Dropped
    coefficient mass is tallied by degree.
    """
    if min(chi.degrees(), default=3) < 3:
        raise ValueError("generator must have degree >= 3")
    tail: dict[int, float] = {}
    iterate = P
    total = SparsePolynomial.zero(P.J)
    k = 0
    while iterate:
        kept, dropped = iterate.truncated(r)
        factor = 1.0 / math.factorial(k)
        for d, mass in dropped.items():
            tail[d] = tail.get(d, 0.0) + factor * mass
        total = total + kept * factor
        if not kept:
            break
        k += 1
        iterate = poisson_bracket(iterate, chi)
    return total, tail


@dataclass
class NormalFormResult:
    """Everything produced by the order-by-order normalization.

    generators maps degree k to chi_k; Z is the accumulated resonant
    (action) part through degree r; residuals, minimum divisors and
    dropped tail mass are recorded per step.  terminal_nonaction is the
    largest non-action coefficient of degree <= r left in the final
    Hamiltonian, relative to the input perturbation scale.
    """

    r: int
    J: int
    freq: FrequencyVector
    generators: dict[int, SparsePolynomial]
    Z: SparsePolynomial
    final_hamiltonian: SparsePolynomial
    residuals: dict[int, float]
    min_divisors: dict[int, float]
    tail_mass: dict[int, dict[int, float]]
    step_consistency: dict[int, float]
    terminal_nonaction: float
    input_scale: float


def birkhoff_iterate(
    freq: FrequencyVector,
    P: SparsePolynomial,
    r: int,
    floor: float = DIVISOR_FLOOR,
    certificate: NonresonanceScan | None = None,
    term_budget: int = 2_000_000,
) -> NormalFormResult:
    """Normalize H = H_0 + P through degree r.

    At each degree k = 3..r: extract the degree-k block, solve the
    homological equation, verify the residual, push the full Hamiltonian
    through the Lie series of chi_k (truncated at r), and check that
    the transformed degree-k block equals the predicted Z_k.
    """
    if r < 3:
        raise ValueError("normalization order must be at least 3")
    if min(P.degrees(), default=3) < 3:
        raise ValueError("perturbation must start at degree 3")
    if P.J > freq.J:
        raise ValueError("frequency table shorter than cutoff")
    input_scale = P.max_abs_coeff() or 1.0
    h0 = SparsePolynomial.quadratic_diagonal(freq)
    if h0.J != P.J:
        h0 = SparsePolynomial(P.J, {k: c for k, c in h0.terms.items()
                                    if k[0][0] <= P.J})
    ham = h0 + P
    generators: dict[int, SparsePolynomial] = {}
    z_total = SparsePolynomial.zero(P.J)
    residuals: dict[int, float] = {}
    min_divisors: dict[int, float] = {}
    tails: dict[int, dict[int, float]] = {}
    consistency: dict[int, float] = {}
    for k in range(3, r + 1):
        q_k = ham.degree_part(k)
        split = solve_homological(q_k, freq, floor=floor, certificate=certificate)
        residuals[k] = homological_residual(split, q_k, freq) if q_k else 0.0
        min_divisors[k] = split.min_abs_divisor
        generators[k] = split.chi
        z_total = z_total + split.Z
        if split.chi:
            ham, tail = lie_transform_series(ham, split.chi, r)
            tails[k] = tail
        else:
            tails[k] = {}
        if len(ham) > term_budget:
            raise RuntimeError(
                f"hamiltonian grew to {len(ham)} terms at degree {k}, over budget {term_budget}"
            )
        consistency[k] = split.Z.max_coeff_diff(ham.degree_part(k)) / input_scale
    terminal = max(
        (ham.degree_part(k).non_action_mass() for k in range(3, r + 1)),
        default=0.0,
    )
    return NormalFormResult(
        r=r, J=P.J, freq=freq,
        generators=generators,
        Z=z_total,
        final_hamiltonian=ham,
        residuals=residuals,
        min_divisors=min_divisors,
        tail_mass=tails,
        step_consistency=consistency,
        terminal_nonaction=terminal / input_scale,
        input_scale=input_scale,
    )


# ---------------------------------------------------------------------------
# realizing the coordinate change


class FlowEscapeError(RuntimeError):
    """The generator flow left the safe neighborhood (norm more than doubled)."""


def _flow_rhs(chi: SparsePolynomial, z: StateVector) -> StateVector:
    """Bracket-adapted flow field of the generator: d/dt F = {F, chi}.

    xi' = +i dchi/deta, eta' = -i dchi/dxi; with this orientation the
    time-1 flow realizes the Lie series P + {P, chi} + ... exactly.
    """
    gx, ge = chi.gradients(z)
    return StateVector(xi=1j * ge, eta=-1j * gx)


def _rk4_step(chi: SparsePolynomial, z: StateVector, h: float) -> StateVector:
    k1 = _flow_rhs(chi, z)
    k2 = _flow_rhs(chi, StateVector(z.xi + 0.5 * h * k1.xi, z.eta + 0.5 * h * k1.eta))
    k3 = _flow_rhs(chi, StateVector(z.xi + 0.5 * h * k2.xi, z.eta + 0.5 * h * k2.eta))
    k4 = _flow_rhs(chi, StateVector(z.xi + h * k3.xi, z.eta + h * k3.eta))
    return StateVector(
        z.xi + (h / 6.0) * (k1.xi + 2 * k2.xi + 2 * k3.xi + k4.xi),
        z.eta + (h / 6.0) * (k1.eta + 2 * k2.eta + 2 * k3.eta + k4.eta),
    )


def _flow_time_one(chi: SparsePolynomial, z: StateVector, direction: float,
                   rel_tol: float = 1e-13, max_steps: int = 100_000) -> StateVector:
    """Time-(+-1) flow of the generator field, adaptive RK4.

    Classic step doubling: each accepted step compares one step of size
    h against two of size h/2 and keeps the h/2 result; h adapts to hold
    the fifth-order error estimate below rel_tol times the state size.
    A norm doubling aborts: the flow is only meaningful near the origin.
    """
    norm0 = float(np.linalg.norm(z.xi) + np.linalg.norm(z.eta))
    scale = max(norm0, 1e-300)
    cur = z
    t = 0.0
    h = direction * 0.25
    steps = 0
    while abs(t) < 1.0:
        if abs(t) + abs(h) > 1.0:
            h = direction * (1.0 - abs(t))
        # a rejected trial step may overflow transiently; divergence is
        # reported as escape below, not as a numpy warning
        with np.errstate(over="ignore", invalid="ignore"):
            full = _rk4_step(chi, cur, h)
            half = _rk4_step(chi, _rk4_step(chi, cur, 0.5 * h), 0.5 * h)
            err = float(np.linalg.norm(full.xi - half.xi) + np.linalg.norm(full.eta - half.eta))
        tol = rel_tol * scale
        if not np.isfinite(err):
            if abs(h) < 1e-6:
                raise FlowEscapeError("generator field diverges along the flow")
            h *= 0.1
            steps += 1
            if steps > max_steps:
                raise FlowEscapeError("generator flow did not converge within the step budget")
            continue
        if err <= tol or abs(h) < 1e-6:
            cur = half
            t += h
            if err > 0:
                h *= min(2.0, 0.9 * (tol / err) ** 0.2 + 1e-12)
        else:
            h *= max(0.1, 0.9 * (tol / err) ** 0.25)
        steps += 1
        if steps > max_steps:
            raise FlowEscapeError("generator flow did not converge within the step budget")
        if float(np.linalg.norm(cur.xi) + np.linalg.norm(cur.eta)) > 2.0 * norm0 + 1e-30:
            raise FlowEscapeError("generator flow escaped; state too large for the series")
    return cur


def apply_tau(
    result: NormalFormResult,
    z: StateVector,
    inverse: bool = False,
    rel_tol: float = 1e-13,
) -> StateVector:
    """The normalizing change of coordinates (or its inverse) at a point.

    Forward is the composition of the time-1 generator flows applied
    innermost-first (highest degree first); the inverse runs the same
    flows backwards in the opposite order.
    """
    if z.J != result.J:
        raise ValueError("state length does not match normal form cutoff")
    cur = z.copy()
    ks = sorted(result.generators)
    if inverse:
        for k in ks:
            if result.generators[k]:
                cur = _flow_time_one(result.generators[k], cur, -1.0, rel_tol)
    else:
        for k in reversed(ks):
            if result.generators[k]:
                cur = _flow_time_one(result.generators[k], cur, +1.0, rel_tol)
    return cur


# ---------------------------------------------------------------------------
# persistence


def save_result(result: NormalFormResult, out_dir) -> None:
    """Write a normal form to a directory: summary JSON plus polynomial CSVs."""
    import json
    from pathlib import Path

    path = Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    summary = {
        "r": result.r,
        "J": result.J,
        "provenance": repr(result.freq.provenance),
        "residuals": {str(k): v for k, v in result.residuals.items()},
        "min_divisors": {str(k): v for k, v in result.min_divisors.items()},
        "tail_mass": {str(k): {str(d): m for d, m in t.items()}
                      for k, t in result.tail_mass.items()},
        "step_consistency": {str(k): v for k, v in result.step_consistency.items()},
        "terminal_nonaction": result.terminal_nonaction,
        "input_scale": result.input_scale,
        "omega": list(result.freq.omega),
    }
    with open(path / "normal_form.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    for k, chi in result.generators.items():
        chi.save_csv(path / f"chi_{k}.csv")
    result.Z.save_csv(path / "Z.csv")
    result.final_hamiltonian.save_csv(path / "final_hamiltonian.csv")


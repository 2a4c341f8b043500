"""Release gate: the eleven checks a build must pass, with pinned
parameters and tolerances.  Each test is one gate and states its own
budget; together they exercise every module at desk scale.
"""

import time

import numpy as np
import pytest

from oscbench.basis import (
    eigenvalue,
    fit_supnorm_exponent,
    gauss_hermite_nodes,
    overlap_decay_scan,
    phi_and_derivative,
    phi_matrix,
)
from oscbench.dynamics import evolve, low_mode_state, measure_action_drift
from oscbench.frequencies import (
    FrequencyVector,
    sample_multiplier,
    scan_nonresonance,
)
from oscbench.normal_form import apply_tau, birkhoff_iterate
from oscbench.poly import (
    SparsePolynomial,
    bracket_with_H0,
    expand_nonlinearity,
    poisson_bracket,
)
from oscbench.tuples import verify_A_lemmas

GAUGE_QUARTIC = {(2, 2): 1.0}
MIXED_G = {(2, 1): 0.5, (1, 2): 0.5, (2, 2): 0.25}


@pytest.fixture(scope="module")
def canonical_normal_form():
    # shared by gates 6, 7, 8: J = 4, r = 5, generic multiplier, seed 1
    t0 = time.monotonic()
    freq = FrequencyVector.from_sample(sample_multiplier(1, 4, seed=1))
    scan = scan_nonresonance(freq, r=5, J=4, gamma=0.0)
    P = expand_nonlinearity(MIXED_G, 4, 5)
    result = birkhoff_iterate(freq, P, 5, certificate=scan)
    return result, time.monotonic() - t0


def test_gate01_hermite_correctness():
    t0 = time.monotonic()
    J = 200
    x, w = gauss_hermite_nodes(J + 2)
    wfull = w * np.exp(x**2)
    mat = phi_matrix(J, x)
    gram = (mat * wfull) @ mat.T
    assert np.abs(gram - np.eye(J)).max() < 1e-10

    xg, wg = gauss_hermite_nodes(260)
    wg_full = wg * np.exp(xg**2)
    vals, derivs = phi_and_derivative(J, xg)
    num = np.sum(wg_full * (derivs**2 + xg**2 * vals**2), axis=1)
    den = np.sum(wg_full * vals**2, axis=1)
    want = np.array([eigenvalue(j) for j in range(1, J + 1)])
    assert np.abs(num / den - want).max() < 1e-8
    assert time.monotonic() - t0 < 30.0


def test_gate02_supnorm_exponent():
    fit = fit_supnorm_exponent(j_lo=50, j_hi=2000)
    assert -0.10 <= fit.exponent <= -0.07, fit.exponent


@pytest.mark.parametrize("k", [3, 4])
def test_gate03_overlap_decay_plateau(k):
    scan = overlap_decay_scan(k, 150, nu=0.2, beta=1.0 / 24.0,
                              n_list=(1.0, 2.0, 4.0), restricted_max=100)
    for N in (1.0, 2.0, 4.0):
        full = scan.sup_by_n[N]
        restricted = scan.restricted_sup_by_n[N]
        assert np.isfinite(full) and full > 0
        # growing the cutoff 100 -> 150 moves the constant by < 5%
        assert abs(full - restricted) < 0.05 * restricted, (k, N)


def test_gate04_index_tuple_inequalities():
    report = verify_A_lemmas(j_bound=120, pair_bound=30, samples=4000, seed=2024)
    # exhaustive over arity-3 tuples with indices <= 120, constant 2
    assert report.sup_l_times_a <= 2.0
    assert report.sup_a_over_majorant <= 1.0
    assert np.isfinite(report.sup_product)
    assert np.isfinite(report.sup_mu_product)
    # the pair-lemma constants are stable when the scan range doubles
    half = verify_A_lemmas(j_bound=120, pair_bound=15, samples=4000, seed=2024)
    assert abs(report.sup_product - half.sup_product) <= 0.05 * half.sup_product
    assert abs(report.sup_mu_product - half.sup_mu_product) \
        <= 0.05 * half.sup_mu_product


def test_gate05_bracket_algebra(trials=100, tol=1e-12):
    rng = np.random.default_rng(20240501)

    def rand_poly(J, degree, n_terms=6):
        P = SparsePolynomial.zero(J)
        for _ in range(n_terms):
            d_xi = int(rng.integers(0, degree + 1))
            xi_idx = tuple(sorted(rng.integers(1, J + 1, size=d_xi)))
            eta_idx = tuple(sorted(rng.integers(1, J + 1, size=degree - d_xi)))
            P = P + SparsePolynomial.monomial(
                J, xi_idx, eta_idx, complex(rng.normal(), rng.normal()))
        return P

    freq = FrequencyVector.from_sample(sample_multiplier(1, 4, seed=9))
    H0 = SparsePolynomial.quadratic_diagonal(freq)
    for _ in range(trials):
        F = rand_poly(4, 3)
        G = rand_poly(4, 4)
        H = rand_poly(4, 3)
        scale = max(1.0, F.max_abs_coeff() * G.max_abs_coeff())
        anti = poisson_bracket(F, G) + poisson_bracket(G, F)
        assert anti.max_abs_coeff() <= tol * scale
        jac = (poisson_bracket(F, poisson_bracket(G, H))
               + poisson_bracket(G, poisson_bracket(H, F))
               + poisson_bracket(H, poisson_bracket(F, G)))
        jscale = max(1.0, F.max_abs_coeff() * G.max_abs_coeff() * H.max_abs_coeff())
        assert jac.max_abs_coeff() <= tol * jscale
        # agreement exact to rounding of the reordered frequency sum
        fast = bracket_with_H0(freq, G)
        slow = poisson_bracket(H0, G)
        assert fast.max_coeff_diff(slow) <= tol * max(1.0, slow.max_abs_coeff())


def test_gate06_homological_residuals(canonical_normal_form):
    result, _ = canonical_normal_form
    assert set(result.residuals) == {3, 4, 5}
    for k, resid in result.residuals.items():
        assert resid <= 1e-10, (k, resid)


def test_gate07_normal_form_terminal(canonical_normal_form):
    result, elapsed = canonical_normal_form
    # non-action content of the transformed Hamiltonian through degree 5,
    # relative to the input coefficient scale
    assert result.terminal_nonaction <= 1e-10
    assert result.Z.is_action_only()
    assert elapsed < 300.0


def test_gate08_tau_contract(canonical_normal_form):
    result, _ = canonical_normal_form
    J = result.J

    def snorm(dxi, deta):
        wts = np.arange(1, J + 1, dtype=float) ** 2.0
        return float(np.sqrt(np.sum(wts * (np.abs(dxi) ** 2 + np.abs(deta) ** 2))))

    ratios = []
    for mag in (1e-2, 1e-3, 1e-4):
        z = low_mode_state(J, mag, seed=5)
        tz = apply_tau(result, z)
        ratios.append(snorm(tz.xi - z.xi, tz.eta - z.eta) / mag**2)
        back = apply_tau(result, tz, inverse=True)
        assert snorm(back.xi - z.xi, back.eta - z.eta) <= 1e-9 * mag
    assert max(ratios) <= 2.0 * min(ratios), ratios


def test_gate09_action_drift_scaling():
    t0 = time.monotonic()
    freq = FrequencyVector.from_sample(sample_multiplier(1, 16, seed=11))
    eps_list = (0.1, 0.05, 0.025)
    drifts = []
    for eps in eps_list:
        z0 = low_mode_state(16, eps, seed=3)
        traj = evolve(z0, GAUGE_QUARTIC, freq, dt=5e-3, T=10.0 / eps)
        drifts.append(measure_action_drift(traj, 1.0))
    slope = np.polyfit(np.log(eps_list), np.log(drifts), 1)[0]
    assert slope >= 2.5, (drifts, slope)
    assert time.monotonic() - t0 < 1800.0


def test_gate10_integrator_health():
    freq = FrequencyVector.from_sample(sample_multiplier(1, 16, seed=11))
    # energy drift must shrink like dt^2 under step halving
    z0 = low_mode_state(16, 0.25, seed=3)
    pair = []
    for dt in (4e-3, 2e-3):
        traj = evolve(z0, GAUGE_QUARTIC, freq, dt=dt, T=10.0)
        pair.append(np.abs(traj.energy - traj.energy[0]).max())
    ratio = pair[0] / pair[1]
    assert 3.5 <= ratio <= 4.5, (pair, ratio)

    # forward then backward integration returns to the start
    z0 = low_mode_state(16, 0.1, seed=3)
    fwd = evolve(z0, GAUGE_QUARTIC, freq, dt=1e-3, T=10.0, save_stride=10**9)
    zT = fwd.state(fwd.t.size - 1)
    back = evolve(zT, GAUGE_QUARTIC, freq, dt=-1e-3, T=10.0, save_stride=10**9)
    zb = back.state(back.t.size - 1)
    rel = np.abs(zb.xi - z0.xi).max() / np.abs(z0.xi).max()
    assert rel <= 1e-8, rel


def test_gate11_resonance_detection():
    # the unperturbed ladder carries the exact zero divisor
    # omega_1 + omega_3 - 2 omega_2 at zero multiplier
    scan0 = scan_nonresonance(FrequencyVector.unperturbed(10), r=4, J=10,
                              gamma=1e-8)
    hits = [v for v in scan0.violations
            if tuple(sorted(v.plus)) == (1, 3) and tuple(sorted(v.minus)) == (2, 2)]
    assert hits and hits[0].value == 0.0
    assert scan0.admissible_gamma == 0.0

    # a generic sampled multiplier certifies a positive gamma, and a
    # rescan at exactly that level finds nothing below it
    freq = FrequencyVector.from_sample(sample_multiplier(1, 20, seed=1))
    base = scan_nonresonance(freq, r=4, J=20, gamma=0.0)
    assert base.admissible_gamma > 0.0
    again = scan_nonresonance(freq, r=4, J=20, gamma=base.admissible_gamma)
    assert again.violations == []

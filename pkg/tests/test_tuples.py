import numpy as np
import pytest

from oscbench.tuples import LemmaReport, a_tilde, tuple_stats, verify_A_lemmas


def test_stats_on_a_known_tuple():
    st = tuple_stats((7, 3, 5))
    # sorted magnitudes are 7, 5, 3
    assert st.C == 7
    assert st.S == 2
    assert st.mu == 3
    assert st.B == pytest.approx(np.sqrt(15.0))
    assert st.A == pytest.approx(st.B / (st.B + st.S))


def test_stats_ignore_order_and_sign():
    rng = np.random.default_rng(7)
    for _ in range(100):
        k = rng.integers(3, 7)
        idx = rng.integers(1, 200, size=k)
        signs = rng.choice([-1, 1], size=k)
        a = tuple_stats(tuple(idx))
        b = tuple_stats(tuple((idx * signs)[rng.permutation(k)]))
        assert (a.mu, a.S, a.B, a.C, a.A) == (b.mu, b.S, b.B, b.C, b.A)


def test_stats_reject_short_or_zero_tuples():
    with pytest.raises(ValueError):
        tuple_stats((3, 1))
    with pytest.raises(ValueError):
        tuple_stats((3, 0, 1))


def test_equal_indices_have_no_gap():
    st = tuple_stats((4, 4, 4))
    assert st.S == 0
    assert st.A == 1.0


def test_majorant_branches():
    # l inside the pair range uses the gap form
    assert a_tilde(10, 6, 3) == pytest.approx(12.0 / (3 + 10 - 6))
    # l beyond j2 uses the geometric-mean form
    l, j1, j2 = 25, 10, 6
    geo = np.sqrt(l * j2)
    assert a_tilde(j1, j2, l) == pytest.approx(2 * geo / (geo + abs(j1 - l)))


def test_majorant_dominates_exhaustively(bound=40):
    # A(j1, j2, l) <= a_tilde for every ordered triple in range
    for j1 in range(1, bound + 1):
        for j2 in range(1, j1 + 1):
            for ell in range(1, bound + 1):
                a = tuple_stats((j1, j2, ell)).A
                assert a <= a_tilde(j1, j2, ell) + 1e-12, (j1, j2, ell)


def test_report_bounds_hold_at_small_range():
    report = verify_A_lemmas(j_bound=50, pair_bound=12, samples=500, seed=5)
    assert isinstance(report, LemmaReport)
    assert report.sup_l_times_a <= 2.0 + 1e-12
    assert report.sup_a_over_majorant <= 1.0 + 1e-12
    assert np.isfinite(report.sup_product)
    assert np.isfinite(report.sup_mu_product)
    assert report.arg_l_times_a != ()
    # the sampled sups are ratios against the same bounds
    for name, sup in report.sample_sups.items():
        assert np.isfinite(sup), name


def test_report_is_deterministic():
    a = verify_A_lemmas(j_bound=30, pair_bound=8, samples=300, seed=11)
    b = verify_A_lemmas(j_bound=30, pair_bound=8, samples=300, seed=11)
    assert a == b

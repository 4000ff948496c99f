from fractions import Fraction

import mpmath
import numpy as np
import pytest
from scipy.special import lambertw

from perc_solidify.errors import UsageError
from perc_solidify.schedule import (GrowthPair, I0_lemma_check, alpha_delta, alpha_exact,
                                    alpha_ratio_check, build_schedule, ell0_and_A,
                                    elementary_lemma_check, gamma_recursion, growth_check, intervals,
                                    intervals_within_bounds, lambert_w_check, log_gamma_tilde,
                                    proper_separation_check)


def test_alpha_one_is_exact():
    assert alpha_exact(1) == Fraction(1, 38)
    assert alpha_exact(2) is None
    a, d = alpha_delta(1)
    with mpmath.workdps(50):
        assert abs(a - mpmath.mpf(1) / 38) < mpmath.mpf(10) ** -45
        assert d == a / 4


def test_alpha_decreasing_and_ratio_bound():
    vals = [alpha_delta(J)[0] for J in range(1, 20)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert all(alpha_ratio_check(J) for J in range(1, 20))
    # a generous alpha must fail the check
    assert not alpha_ratio_check(1, alpha=0.06)


def test_interval_endpoints_exact_for_one():
    (l0, r0), (l1, r1) = intervals(1, exact=True)
    assert (l0, r0) == (Fraction(75, 152), Fraction(77, 152))
    assert (l1, r1) == (Fraction(899, 1976), Fraction(3077, 5624))
    # the uniform bounds come from rho^J >= 9/10 and alpha <= 1/38
    a = Fraction(1, 38)
    assert Fraction(3, 4) * Fraction(9, 10) - (1 + a) / 4 == Fraction(159, 380)
    assert Fraction(3, 4) * Fraction(10, 9) - (1 - a) / 4 == Fraction(269, 456)
    assert Fraction(159, 380) <= l1 and r1 <= Fraction(269, 456)


def test_intervals_nested_and_bounded():
    for J in (1, 2, 5, 64):
        ivs = intervals(J)
        for (a, b), (c, d) in zip(ivs, ivs[1:]):
            assert c < a and b < d
        assert intervals_within_bounds(J)


def test_a_star_size():
    ell0, A, A_star = ell0_and_A(200, 3, 2, 5)
    assert len(A_star) == 3 * 3
    assert ell0 % 15 == 0 and set(A) <= set(A_star)


def test_gamma_tilde_pinned_value():
    assert float(mpmath.exp(log_gamma_tilde(3, 10**6, 0.5))) == pytest.approx(0.611, abs=5e-4)
    table = gamma_recursion(0.5, 2, [1, 4, 9])
    assert table[1] == [0.0, 0.0, 0.0]
    assert table[2] == pytest.approx([1.0, 0.5, 0.25])


def test_I0_lemma_holds_on_a_case():
    holds, lhs, rhs = I0_lemma_check(0.5, 2, 0.3)
    assert holds and lhs <= rhs


def test_lambert_against_scipy():
    u = np.linspace(0.01, 50, 500)
    rep = lambert_w_check(u)
    ref = lambertw(-np.exp(-u - 1), k=-1).real
    assert np.allclose(rep.w, ref, rtol=1e-11, atol=1e-11)
    assert rep.all_positive and rep.certified
    assert not rep.weakened_holds.any()


def test_lambert_rejects_nonpositive():
    with pytest.raises(UsageError):
        lambert_w_check([0.0, 1.0])


def test_elementary_lemma_cases():
    assert elementary_lemma_check([0.5], [1.0], 0.1) == "central"
    v = np.array([0.0, 1.0])
    assert elementary_lemma_check(v, [0.5, 0.5], 0.2) == "tails"
    with pytest.raises(UsageError):
        elementary_lemma_check([0.1], [1.0], 0.3)


def test_growth_and_separation():
    ok = GrowthPair.from_functions([16, 32, 64], lambda n: n / 4, lambda n: n ** 1.25 / 2)
    assert growth_check(ok).ok
    flat = GrowthPair((16, 32), (4, 8), (8, 16))
    assert not growth_check(flat).ok
    assert not proper_separation_check([10, 8], 1, 5, 1.0).ok


def test_schedule_json_keeps_exact_alpha():
    s = build_schedule(1, 3, 0.7)
    js = s.to_json()
    assert js["alpha"]["exact"] == "1/38"
    assert js["alpha_tilde"]["exact"] == "3/640"
    assert js["intervals"][1][0]["exact"] == "899/1976"
    with pytest.raises(UsageError):
        build_schedule(0, 3, 0.7)


def test_gamma_tilde_antitone_in_I():
    memo = {}
    for k in (2, 3):
        vals = [log_gamma_tilde(k, I, 0.3, memo) for I in range(1, 400)]
        assert all(b <= a for a, b in zip(vals, vals[1:]))

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from feedback_bins.sequences import (
    AnalyticAsymptotics,
    Confidence,
    ConstantSequence,
    CustomSequence,
    DoublyExponentialTau,
    ExactRangeError,
    FactorialSequence,
    GeometricSequence,
    PolynomialSequence,
    RhoKind,
    SeriesKind,
    SeriesVerdict,
    check_identity_1101,
    estimate_lambda,
    estimate_theta,
    largest_exact_n,
    log_lambda_n,
    make_sequence,
    series_tail,
    series_tail_bound,
    sigma,
    tau,
)

# floor(b^n e^{2^n}) for n = 0..6, evaluated independently with decimal at 200 digits
DEXP_TAUS = {
    2.0: [2, 14, 218, 23847, 142177768, 2526814725845782, 399049541171943480506191277371],
    1.0: [2, 7, 54, 2980, 8886110, 78962960182680, 6235149080811616882909238708],
    0.5: [2, 3, 13, 372, 555381, 2467592505708, 97424204387681513795456854],
}
# floor(e^{3^n}), n = 0..4, same oracle
EXP3_TAUS = [2, 20, 8103, 532048240601, 150609731458503054835259413016767498]


def test_sigma_examples():
    assert sigma(ConstantSequence(1, 2), 17) == 1
    assert sigma(FactorialSequence(2), 5) == 120
    d = DoublyExponentialTau(2, 1, 2)
    assert sigma(d, 3) == 23847 - 218


def test_tau_examples():
    assert tau(ConstantSequence(1, 2), 10) == 12
    assert tau(GeometricSequence(1, 2, 1), 3) == 15
    for seq in (ConstantSequence(3, 5), FactorialSequence(7), PolynomialSequence(2, 3, 4)):
        assert tau(seq, 0) == seq.tau0


@pytest.mark.parametrize("b", [2.0, 1.0, 0.5])
def test_doubly_exponential_floors(b):
    d = DoublyExponentialTau(b, 1, 2)
    assert [d.tau(n) for n in range(7)] == DEXP_TAUS[b]


def test_doubly_exponential_other_base():
    d = DoublyExponentialTau(1, 1, 2, base=3)
    assert [d.tau(n) for n in range(5)] == EXP3_TAUS


def test_doubly_exponential_rejects_non_increasing():
    with pytest.raises(ValueError, match="strictly increasing"):
        DoublyExponentialTau(0.1, 1, 2)


def test_custom_range_and_file(tmp_path):
    f = tmp_path / "s.txt"
    f.write_text("# arrivals\n1\n2\n\n3\n")
    seq = CustomSequence.from_file(f, 2)
    assert [seq.tau(n) for n in range(4)] == [2, 3, 5, 8]
    with pytest.raises(ExactRangeError):
        seq.sigma(4)
    with pytest.raises(ValueError):
        CustomSequence([1, 0, 2])


def test_factorial_and_geometric_closed_forms():
    f = FactorialSequence(2)
    assert f.tau(5) == 2 + 1 + 2 + 6 + 24 + 120
    g = GeometricSequence(3, 2, 5)
    assert g.tau(4) == 5 + 3 * (2 + 4 + 8 + 16)


@pytest.mark.parametrize("seq", [
    ConstantSequence(1, 2), PolynomialSequence(1, 2, 2), GeometricSequence(1, 2, 2),
    FactorialSequence(2), DoublyExponentialTau(2, 1, 2),
])
def test_tau_strictly_increasing(seq):
    top = largest_exact_n(seq, 10_000)
    top = min(top, 10_000 if seq.family.value in ("constant", "polynomial") else top)
    prev = seq.tau(0)
    for n in range(1, min(top, 3000) + 1):
        t = seq.tau(n)
        assert t > prev and t - prev == seq.sigma(n)
        prev = t


def test_random_access_matches_sequential():
    seq = PolynomialSequence(2, 2, 3)
    direct = [seq.tau(n) for n in (500, 3, 200, 499)]
    fresh = PolynomialSequence(2, 2, 3)
    expected = [3 + sum(2 * k * k for k in range(1, n + 1)) for n in (500, 3, 200, 499)]
    assert direct == expected
    assert fresh.tau(499) == expected[3]


@pytest.mark.parametrize("seq,n", [
    (ConstantSequence(1, 2), 1000),
    (FactorialSequence(2), 15),
    (GeometricSequence(1, 3, 2), 30),
])
def test_identity_1101_examples(seq, n):
    assert check_identity_1101(seq, n) < 1e-9


def test_estimate_theta_numeric_matches_analytic():
    d = DoublyExponentialTau(1, 1, 2)
    assert estimate_theta(d, 2).confidence is Confidence.ANALYTIC
    num = estimate_theta(d, 2, 30, use_analytic=False)
    assert num.confidence is Confidence.NUMERIC_STABLE
    assert num.value == pytest.approx(1.0, rel=1e-4)


@pytest.mark.parametrize("seq", [ConstantSequence(1, 2), PolynomialSequence(1, 2, 2),
                                 GeometricSequence(1, 2, 2)])
def test_bounded_rho_theta_small(seq):
    # bounded rho forces theta = 0; numerically below 1e-3 by n = 30
    assert seq.analytic(2.0).rho_class is RhoKind.BOUNDED
    assert estimate_theta(seq, 2.0, 30, use_analytic=False).value < 1e-3


def test_estimate_theta_preconditions():
    with pytest.raises(ValueError):
        estimate_theta(ConstantSequence(), 1.0)
    with pytest.raises(ValueError):
        estimate_theta(ConstantSequence(), 2.0, 5)


def test_estimate_lambda():
    g = GeometricSequence(1, 3, 2)
    est = estimate_lambda(g, 2.0, 30, use_analytic=False)
    assert est.confidence is Confidence.NUMERIC_STABLE
    assert est.value == pytest.approx(3.0 ** (1 - 2.0), rel=1e-9)
    f = FactorialSequence(2)
    assert estimate_lambda(f, 2.0, 40, use_analytic=False).value < 0.1


def test_lambda_log_space_matches_direct():
    f = FactorialSequence(2)
    for n in range(2, 15):
        s0, s1, s2 = (float(f.sigma(k)) for k in (n - 1, n, n + 1))
        direct = s2 * s0**2 / s1**3
        assert math.exp(log_lambda_n(f, 2.0, n)) == pytest.approx(direct, rel=1e-12)


def test_constant_exact_tail_matches_brute_force():
    c = ConstantSequence(1, 2)
    # sum_{n >= m} 1/(2+n)^2, brute force to 2e6 terms plus integral remainder
    assert c.exact_tail(2.0, 0) == pytest.approx(0.6449340668482265, rel=1e-12)
    assert c.exact_tail(2.0, 10) == pytest.approx(0.08690187287176838, rel=1e-10)
    assert c.exact_tail(2.0, 1000) == pytest.approx(0.0009985021636706283, rel=1e-9)


@pytest.mark.parametrize("seq", [ConstantSequence(1, 2), PolynomialSequence(1, 2, 2),
                                 GeometricSequence(1, 2, 2), DoublyExponentialTau(2, 1, 2)])
def test_tail_bound_dominates_remaining_sum(seq):
    kind = SeriesKind.SIGMA_OVER_TAU_ALPHA
    for m in (5, 10, 40):
        bound = series_tail_bound(seq, 2.0, kind, m)
        rest = series_tail(seq, 2.0, kind, m, 2 * m).partial_sum
        assert bound is not None and bound >= rest


def test_series_verdicts():
    kind = SeriesKind.TAU_OVER_TAU_ALPHA
    assert series_tail(DoublyExponentialTau(2, 1, 2), 2.0, kind, 0, 10).verdict is SeriesVerdict.CONVERGES
    assert series_tail(DoublyExponentialTau(1, 1, 2), 2.0, kind, 0, 10).verdict is SeriesVerdict.DIVERGES
    custom = CustomSequence([1] * 50)
    assert series_tail(custom, 2.0, kind, 0, 40).verdict is SeriesVerdict.UNKNOWN


def test_analytic_round_trip_and_strict_keys():
    a = ConstantSequence(1, 2).analytic(2.0)
    assert AnalyticAsymptotics.from_dict(a.to_dict()) == a
    with pytest.raises(ValueError):
        AnalyticAsymptotics.from_dict({**a.to_dict(), "bogus": 1})


def test_make_sequence():
    assert make_sequence({"name": "constant", "sigma": 2, "tau0": 3}).tau(4) == 11
    d = make_sequence({"name": "doubly_exponential_tau", "b": 2, "theta0": 1}, 2.0)
    assert d.tau(3) == 23847
    with pytest.raises(ValueError):
        make_sequence({"name": "constant", "sigmaa": 2})
    with pytest.raises(ValueError):
        make_sequence({"name": "nope"})


def test_float_mode_log_tau_continuous():
    d = DoublyExponentialTau(2, 1, 2, bit_budget=2000)
    top = largest_exact_n(d, 40)
    assert d.is_exact(top) and not d.is_exact(top + 1)
    exact = math.log(d.tau(top))
    assert d.log_tau(top) == pytest.approx(exact, rel=1e-12)
    assert d.log_tau(top + 1) == pytest.approx((top + 1) * math.log(2) + 2.0 ** (top + 1), rel=1e-12)
    with pytest.raises(ExactRangeError):
        d.tau(top + 1)


def test_log_arrays_consistent():
    seq = GeometricSequence(1, 2, 2)
    lt = seq.log_tau_array(50)
    assert np.allclose(lt, [math.log(seq.tau(n)) for n in range(50)], rtol=1e-13)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(1, 10**12), min_size=1, max_size=60), st.integers(1, 10**6))
def test_identity_1101_custom_property(sigmas, tau0):
    seq = CustomSequence(sigmas, tau0)
    assert check_identity_1101(seq, len(sigmas)) < 1e-9


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 50), st.integers(0, 4), st.integers(1, 100), st.integers(1, 300))
def test_polynomial_tau_property(c, d, tau0, n):
    seq = PolynomialSequence(c, d, tau0)
    assert seq.tau(n) == tau0 + sum(c * k**d for k in range(1, n + 1))

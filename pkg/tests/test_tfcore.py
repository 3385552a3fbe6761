import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridcert.tfcore import (
    Improper,
    NoConverge,
    PoleHit,
    Polynomial,
    RationalTF,
    ZeroInverse,
    combine,
    evaluate,
    near_cancellations,
    realize,
    roots,
)

W0 = 2 * np.pi * 60.0


def make_mu(rho, omega0=W0):
    return RationalTF([omega0**2], [omega0**2 * (1 + rho**2), 2 * rho * omega0, 1.0])


def test_polynomial_trims_exact_trailing_zeros():
    p = Polynomial([1.0, 2.0, 0.0, 0.0])
    assert p.coeffs == (1.0, 2.0)
    assert p.degree == 1
    assert Polynomial([0.0, 0.0]).is_zero


def test_polynomial_rejects_nonfinite():
    with pytest.raises(ValueError):
        Polynomial([1.0, np.inf])


def test_eval_hand_case():
    tf = RationalTF([1.0, 1.0], [1.0, 2.0])  # (1+s)/(1+2s)
    assert evaluate(tf, 1j) == pytest.approx(0.6 - 0.2j, rel=1e-12)


def test_eval_mu_dc_gain():
    mu = make_mu(0.1)
    assert evaluate(mu, 0.0) == pytest.approx(1 / 1.01, rel=1e-12)


def test_eval_vectorized_matches_scalar():
    tf = RationalTF([1.0, 0.5], [2.0, 1.0, 3.0])
    ss = np.array([0.3 + 1j, -2.0 + 0.1j, 5j])
    vec = evaluate(tf, ss)
    for s, v in zip(ss, vec):
        assert v == pytest.approx(evaluate(tf, s), rel=1e-14)


def test_eval_pole_hit():
    tf = RationalTF([1.0], [1.0, 1.0])  # 1/(s+1)
    with pytest.raises(PoleHit):
        evaluate(tf, -1.0)


def test_combine_invert():
    tf = RationalTF([1.0], [1.0, 1.0])
    inv = combine(tf, kind="invert")
    assert inv.num.coeffs == (1.0, 1.0)
    assert inv.den.coeffs == (1.0,)


def test_combine_invert_zero():
    with pytest.raises(ZeroInverse):
        combine(RationalTF([0.0], [1.0, 1.0]), kind="invert")


def test_combine_add_strips_structural_origin_factor():
    one_over_s = RationalTF([1.0], [0.0, 1.0])
    two_over_s = combine(one_over_s, one_over_s, "add")
    assert two_over_s.num.coeffs == (2.0,)
    assert two_over_s.den.coeffs == (0.0, 1.0)


def test_combine_scale_is_pointwise():
    tf = RationalTF([1.0, 0.2], [1.0, 2.0, 0.5])
    scaled = combine(tf, kind="scale", c=3.5)
    for s in [0.1j, 1 + 1j, 20j]:
        assert evaluate(scaled, s) == pytest.approx(3.5 * evaluate(tf, s), rel=1e-12)


coeff = st.floats(min_value=-5, max_value=5).filter(lambda x: abs(x) > 1e-3)
poly = st.lists(coeff, min_size=1, max_size=4)


@settings(max_examples=60, deadline=None)
@given(poly, poly, poly, poly)
def test_combine_add_commutes(na, da, nb, db):
    a, b = RationalTF(na, da), RationalTF(nb, db)
    ab, ba = combine(a, b, "add"), combine(b, a, "add")
    assert np.allclose(ab.num.coeffs, ba.num.coeffs, rtol=1e-9, atol=1e-12)
    assert np.allclose(ab.den.coeffs, ba.den.coeffs, rtol=1e-9, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(poly, poly, poly, poly, poly, poly)
def test_combine_mul_associates(na, da, nb, db, nc, dc):
    a, b, c = RationalTF(na, da), RationalTF(nb, db), RationalTF(nc, dc)
    left = combine(combine(a, b, "mul"), c, "mul")
    right = combine(a, combine(b, c, "mul"), "mul")
    ln = left.num.trimmed().coeffs
    rn = right.num.trimmed().coeffs
    assert np.allclose(ln, rn, rtol=1e-9, atol=1e-12)
    assert np.allclose(left.den.trimmed().coeffs, right.den.trimmed().coeffs,
                       rtol=1e-9, atol=1e-12)


def test_roots_double_root():
    rts = roots(Polynomial([1.0, 2.0, 1.0]))
    assert np.allclose(sorted(r.real for r in rts), [-1, -1], atol=1e-8)
    assert max(abs(r.imag) for r in rts) < 1e-8


def test_roots_oscillator():
    rts = roots(Polynomial([W0**2, 0.0, 1.0]))
    assert sorted(r.imag for r in rts) == pytest.approx([-W0, W0], rel=1e-10)


def test_roots_mu_denominator_complete_square():
    rho = 0.1
    mu = make_mu(rho)
    rts = sorted(mu.poles(), key=lambda z: z.imag)
    assert rts[1] == pytest.approx(-rho * W0 + 1j * W0, rel=1e-10)
    assert rts[0] == pytest.approx(-rho * W0 - 1j * W0, rel=1e-10)


def test_roots_rejects_constant():
    with pytest.raises(ValueError):
        roots(Polynomial([3.0]))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(min_value=-3, max_value=3), min_size=2, max_size=8,
                unique=True).filter(
                    lambda rs: min(abs(a - b) for i, a in enumerate(rs)
                                   for b in rs[i + 1:]) > 0.2))
def test_roots_reconstruction(real_roots):
    # well-separated roots: clustered/multiple roots are inherently
    # ill-conditioned for any root finder and are not part of the contract
    p = Polynomial.from_roots(real_roots, leading=1.0)
    try:
        rts = roots(p)
    except NoConverge:
        return  # ill-conditioned cases may legitimately refuse
    q = Polynomial.from_roots([r.real for r in rts], leading=1.0)
    assert np.allclose(p.coeffs, q.coeffs, rtol=1e-6, atol=1e-6)


def test_realize_first_order_lag():
    ss = realize(RationalTF([1.0], [1.0, 1.0]))
    assert np.allclose(ss.A, [[-1.0]])
    assert np.allclose(ss.B, [[1.0]])
    assert np.allclose(ss.C, [[1.0]])
    assert np.allclose(ss.D, [[0.0]])


def test_realize_biproper_feedthrough():
    tf = RationalTF([2.0, 1.0], [1.0, 1.0])  # (s+2)/(s+1)
    ss = realize(tf)
    assert np.allclose(ss.D, [[1.0]])
    assert np.allclose(ss.A, [[-1.0]])
    assert ss.transfer_at(1j) == pytest.approx(evaluate(tf, 1j), rel=1e-12)


def test_realize_improper_raises():
    # PD droop with T_p = 0 reduces to a pure derivative-plus-gain
    with pytest.raises(Improper):
        realize(RationalTF([1.0, 0.005], [1.0]))


def test_realize_matches_eval_randomized():
    rng = np.random.default_rng(7)
    for _ in range(20):
        n = rng.integers(1, 5)
        poles = -rng.uniform(0.1, 5.0, n)
        den = Polynomial.from_roots(poles)
        num = Polynomial(rng.uniform(-2, 2, rng.integers(1, n + 2)))
        tf = RationalTF(num, den)
        ss = realize(tf)
        for s in rng.uniform(0.1, 10, 100) + 1j * rng.uniform(-10, 10, 100):
            assert ss.transfer_at(s) == pytest.approx(evaluate(tf, s), rel=1e-9)


def test_near_cancellation_diagnostic():
    # (s+1)(s+2) / (s+1.0000001)(s+3): one pair flagged
    num = Polynomial.from_roots([-1.0, -2.0])
    den = Polynomial.from_roots([-1.0000001, -3.0])
    pairs = near_cancellations(RationalTF(num, den))
    assert len(pairs) == 1
    assert pairs[0][0] == pytest.approx(-1.0000001, rel=1e-6)
    assert not near_cancellations(RationalTF([1.0], [6.0, 5.0, 1.0]))

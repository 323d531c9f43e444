from __future__ import annotations

import random

import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from liesym import equivgroup as eg
from liesym import fields as fl
from liesym import oracle
from liesym import symkernel as sk
from liesym import tables
from liesym.symkernel import I, PSI, T

x1, x2 = sk.xs(2)


def same(A, B, space=None):
    return (A - B).is_zero(space)


def test_make_generator_examples():
    assert same(fl.make_generator("D", tau=1), fl.VectorField(2, tau=1))
    Dl = fl.make_generator("Dl", tau=T, lam=2)
    R = fl.to_raw(Dl)
    assert R.tau == T
    assert R.xi == (x1 / 2, x2 / 2)
    assert sk.is_zero(R.eta + PSI / 2)
    Ip = fl.make_generator("Iprime", delta=I)
    assert same(Ip, fl.Igen(sp.exp(-T)))


def test_make_generator_errors():
    with pytest.raises(fl.FieldError):
        fl.make_generator("Dl", tau=T, lam=0)
    with pytest.raises(fl.FieldError):
        fl.make_generator("Pprime", chi=(1, 0), delta=1)
    with pytest.raises(fl.FieldError):
        fl.make_generator("Q")


def test_iprime_real_delta_branch():
    assert same(fl.Iprime(3, 0), fl.Igen(1) + fl.Mgen(3 * T))


def test_kappa_must_be_skew():
    with pytest.raises(fl.FieldError):
        fl.VectorField(2, kappa=((0, 1), (1, 0)))


def test_raw_expansion_of_dilation():
    tau = sk.rfunc("tau", T)
    R = fl.to_raw(fl.D(tau))
    assert sk.is_zero(R.xi[0] - sp.diff(tau, T) * x1 / 2)
    assert sk.is_zero(R.eta - I * sp.diff(tau, T, 2) * (x1**2 + x2**2) / 8 * PSI)


def test_commutator_examples():
    assert same(fl.commutator(fl.D(1), fl.D(T)), fl.D(1))
    assert fl.commutator(fl.Mgen(), fl.Igen()).is_zero()
    half_M = fl.commutator(fl.P(1, 0), fl.P(T, 0))
    assert same(half_M, fl.Mgen(sp.Rational(1, 2)))


def test_commutator_raw_and_structured_agree_on_table():
    tau1, tau2 = sk.rfunc("tau1", T), sk.rfunc("tau2", T)
    c1, c2 = sk.rfunc("c1", T), sk.rfunc("c2", T)
    s = sk.rfunc("s", T)
    gens = [fl.D(tau1), fl.D(tau2), fl.J(), fl.P(c1, c2), fl.P(c2, T), fl.Mgen(s), fl.Igen(s),
            fl.Dlam(tau1, 3)]
    for A in gens:
        for B in gens:
            fl.commutator(A, B, check=True)


def test_dilation_bracket_formula():
    tau1, tau2 = sk.rfunc("tau1", T), sk.rfunc("tau2", T)
    got = fl.commutator(fl.D(tau1), fl.D(tau2))
    want = fl.D(tau1 * sp.diff(tau2, T) - tau2 * sp.diff(tau1, T))
    assert same(got, want)


def _rand_field(rng):
    q = lambda: sum(sp.Rational(rng.randint(-3, 3), rng.randint(1, 3)) * T**k for k in range(3))
    k = sp.Rational(rng.randint(-2, 2))
    return fl.VectorField(2, tau=q(), kappa=((0, -k), (k, 0)), chi=(q(), q()), sigma=q(), zeta=q())


def _poly_zero(Q):
    return all(sp.expand(p) == 0 for p in Q.params())


def test_antisymmetry_and_jacobi_on_200_triples():
    rng = random.Random(7)
    br = fl.structured_bracket
    for _ in range(200):
        A, B, C = (_rand_field(rng) for _ in range(3))
        assert _poly_zero(br(A, B) + br(B, A))
        assert _poly_zero(br(A, br(B, C)) + br(B, br(C, A)) + br(C, br(A, B)))


def test_prolong2_examples():
    pM = fl.prolong2(fl.Mgen())
    assert sk.is_zero(pM.eta_t - I * sk.jet((0,)))
    assert sk.is_zero(pM.eta_ab[(1, 2)] - I * sk.jet((1, 2)))
    pD = fl.prolong2(fl.D(1))
    assert pD.eta_t == 0 and all(v == 0 for v in pD.eta_ab.values())
    pDt = fl.prolong2(fl.D(T))
    assert sp.expand(pDt.eta_ab[(1, 1)]).coeff(sk.jet((1, 1))) == -1


@settings(max_examples=25, deadline=None)
@given(st.integers(-4, 4), st.integers(-4, 4), st.integers(0, 10_000))
def test_prolong2_linearity(a, b, seed):
    rng = random.Random(seed)
    A, B = _rand_field(rng), _rand_field(rng)
    pa, pb, pab = fl.prolong2(A), fl.prolong2(B), fl.prolong2(a * A + b * B)
    assert sk.is_zero(pab.eta_t - a * pa.eta_t - b * pb.eta_t)
    for key in pab.eta_ab:
        assert sk.is_zero(pab.eta_ab[key] - a * pa.eta_ab[key] - b * pb.eta_ab[key])


def test_signature_examples():
    assert fl.signature(fl.Span([fl.Mgen()], "Vf")).as_tuple() == (0, 1, 0, 0, 0)
    b = tables.build(tables.get_case("vf", "14"))
    sig = fl.signature(b.span, b.instance())
    assert sig.as_tuple() == (2, 1, 4, 1, 1) and sig.dim == 7
    b0 = tables.build(tables.get_case("log", "0"))
    assert fl.signature(b0.span, b0.instance()).k0 == 2


def test_signature_lemmas():
    assert fl.Signature(2, 1, 4, 1, 1).violations() == []
    assert "r1 = 1 implies k2 = 0" in fl.Signature(1, 1, 2, 1, 0).violations()
    assert "r1 = 0 iff k1 = 0" in fl.Signature(0, 1, 2, 0, 0).violations()


def test_signature_invariant_under_pushforward():
    b = tables.build(tables.get_case("vf", "14"))
    inst = b.instance()
    want = fl.signature(b.span, inst).as_tuple()
    g = eg.compose(eg.Pmap((T**2 / 3, -T)), eg.compose(eg.Jmap(eg.rotation(sp.Rational(1, 3))),
                                                        eg.Dmap(T + 2)))
    pushed = [eg.pushforward(g, q) for q in b.basis]
    assert fl.signature(fl.Span(pushed, "Vf"), inst).as_tuple() == want


def test_closure_examples():
    mu = sk.const("mu")
    s4 = fl.Span([fl.Mgen(), fl.J() + fl.Mgen(mu * T), fl.D(1)], "Vf")
    inst = oracle.instantiate([], s4.full_space(), {"mu": 0.7})
    assert fl.closure_check(s4, inst).closed
    assert same(fl.commutator(fl.D(1), fl.J() + fl.Mgen(mu * T)), fl.Mgen(mu))
    sl2 = fl.Span([fl.Mgen(), fl.D(1), fl.Dlam(T, 2), fl.Dlam(T**2, 2)], "Plam")
    assert fl.closure_check(sl2).closed
    assert fl.closure_check(fl.Span([fl.Mgen(), fl.P(1, 0)])).closed
    assert not fl.closure_check(fl.Span([fl.D(1), fl.P(T, 0)])).closed


def test_independence():
    b = tables.build(tables.get_case("vf", "14"))
    assert fl.independent(b.span, b.instance())
    dup = fl.Span(b.basis + [b.basis[1] * 2], "Vf", space=b.span.space)
    assert not fl.independent(dup, b.instance())

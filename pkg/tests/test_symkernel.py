from __future__ import annotations

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from liesym import oracle
from liesym import symkernel as sk
from liesym.symkernel import EPS, I, PSI, PSIC, RHO, T

x1, x2 = sk.xs(2)


def test_differentiate_polynomial():
    assert sk.differentiate(T**2, T) == 2 * T


def test_differentiate_uses_rewrite_rule():
    space = sk.Space()
    alpha = sk.const("alpha")
    theta = sk.rfunc("theta", T)
    space.add_rule("theta", 2, alpha * theta)
    assert sk.differentiate(sp.diff(theta, T), T, space) == alpha * theta
    # third derivative reduces through the rule as well
    assert sk.simplify(sp.diff(theta, T, 3), space) == alpha * sp.diff(theta, T)


def test_differentiate_symmetric_sum():
    assert sk.differentiate(x1**2 + x2**2, x1) == 2 * x1


def test_differentiate_unknown_symbol():
    with pytest.raises(sk.UnknownSymbolError):
        sk.differentiate(T, sp.Symbol("q"))


def test_rule_cycle_detected():
    space = sk.Space()
    a = sk.rfunc("cyc", T)
    with pytest.raises(sk.RuleCycleError):
        space.add_rule("cyc", 1, sp.diff(a, T, 2))


def test_total_derivative_on_jets():
    d = sk.differentiate(PSI * x1, x1, total=True, n=2)
    assert sk.is_zero(d - (PSI + x1 * sk.jet((1,))))


def test_simplify_examples():
    assert sk.simplify(EPS * EPS * x1) == x1
    assert sk.simplify(I * I) == -1
    assert sk.simplify((x1 + x2) ** 2 - x1**2 - 2 * x1 * x2 - x2**2) == 0


def test_substitute_function_binding():
    tau = sk.rfunc("tau", T)
    S = sk.func("S", T, x1)
    e = sp.diff(tau, T) * S + tau * sp.diff(S, T)
    out = sk.substitute(e, {"tau": sp.Lambda(T, T)})
    assert sk.is_zero(out - (S + T * sp.diff(S, T)))


def test_substitute_on_shell_identity():
    S = sk.func("S", T, x1, x2)
    psi_t = sk.jet((0,))
    lap = sk.jet((1, 1)) + sk.jet((2, 2))
    e = I * psi_t + lap + S * PSI
    assert sk.substitute(e, {psi_t: I * lap + I * S * PSI}) == 0


def test_substitute_chain_rule_through_rotation():
    kappa = sk.const("kappa")
    w1 = x1 * sp.cos(kappa * T) + x2 * sp.sin(kappa * T)
    w2 = -x1 * sp.sin(kappa * T) + x2 * sp.cos(kappa * T)
    U = sk.func("U", T)
    out = sp.diff(sk.substitute(U, {"U": sp.Lambda(T, T)}).xreplace({T: w2}), T)
    Uw = sk.substitute(sk.func("U", sk.T), {"U": sp.Lambda(sk.T, w2)})
    assert sk.is_zero(sp.diff(Uw, T) + kappa * w1)
    assert sk.is_zero(out + kappa * w1)


def test_substitute_signature_mismatch():
    U = sk.func("U", x1, x2)
    with pytest.raises(sk.KernelError):
        sk.substitute(U, {"U": sp.Lambda(T, T)})


def test_conjugate_examples():
    sigma = sk.rfunc("sigma", T)
    assert sk.conjugate(I * sigma * PSI) == -I * sigma * PSIC
    d1, d2, lam = sk.const("d1"), sk.const("d2"), sk.const("lam")
    e = (d1 + I * d2) * RHO**lam * PSI
    assert sk.is_zero(sk.conjugate(e) - (d1 - I * d2) * RHO**lam * PSIC)


def test_collect_classifying_rhs():
    tau = sk.rfunc("tau", T)
    chi1 = sk.rfunc("chi1", T)
    sigma = sk.rfunc("sigma", T)
    e = sp.diff(tau, T, 3) * (x1**2 + x2**2) / 8 + sp.diff(chi1, T, 2) * x1 / 2 + sp.diff(sigma, T)
    got = sk.collect(e, (x1, x2))
    assert got == {x1**2: sp.diff(tau, T, 3) / 8, x2**2: sp.diff(tau, T, 3) / 8,
                   x1: sp.diff(chi1, T, 2) / 2, 1: sp.diff(sigma, T)}
    assert sk.collect(0, (x1,)) == {}


def test_collect_non_polynomial():
    with pytest.raises(sk.NonPolynomialError):
        sk.collect(sp.sin(x1), (x1,))


def test_is_zero_sign_branches():
    U = sk.func("U", x2)
    e = sp.sign(T) * U / sp.Abs(T) ** sp.Rational(3, 2) - U / (T * sp.Abs(T) ** sp.Rational(1, 2))
    assert sk.is_zero(e)
    assert not sk.is_zero(sp.Abs(T) - T)


def test_sexpr_round_trip():
    U = sk.func("U", T, x2)
    theta = sk.rfunc("theta", T)
    e = sp.Rational(3, 4) * I * sp.diff(U, T) * x1**2 + sp.exp(T) * theta - PSIC * RHO**2
    s = sk.to_sexpr(e)
    assert sk.from_sexpr(s) == e
    assert sk.to_sexpr(sk.from_sexpr(s)) == s


# ---------------------------------------------------------------- properties

_atoms = [T, x1, x2, RHO, sk.rfunc("g", T), sk.func("U", x1, x2), I, sp.Rational(1, 3)]


@st.composite
def expressions(draw, depth=3):
    if depth == 0 or draw(st.booleans()):
        return draw(st.sampled_from(_atoms)) * draw(st.integers(-3, 3))
    a = draw(expressions(depth=depth - 1))
    b = draw(expressions(depth=depth - 1))
    op = draw(st.sampled_from(["add", "mul", "pow"]))
    if op == "add":
        return a + b
    if op == "mul":
        return a * b
    return a ** draw(st.integers(0, 3))


@settings(max_examples=60, deadline=None)
@given(expressions(), expressions())
def test_differentiate_linear_and_leibniz(a, b):
    for v in (T, x1):
        assert sk.is_zero(sk.differentiate(a + b, v) - sk.differentiate(a, v) - sk.differentiate(b, v))
        assert sk.is_zero(sk.differentiate(a * b, v) - sk.differentiate(a, v) * b
                          - a * sk.differentiate(b, v))


@settings(max_examples=60, deadline=None)
@given(expressions())
def test_mixed_partials_commute(a):
    assert sk.is_zero(sk.differentiate(sk.differentiate(a, x1), x2)
                      - sk.differentiate(sk.differentiate(a, x2), x1))


@settings(max_examples=60, deadline=None)
@given(expressions())
def test_conjugate_involution_and_commutes_with_d(a):
    assert sk.is_zero(sk.conjugate(sk.conjugate(a)) - a)
    assert sk.is_zero(sk.conjugate(sk.differentiate(a, T)) - sk.differentiate(sk.conjugate(a), T))


@settings(max_examples=60, deadline=None)
@given(expressions(), expressions())
def test_simplify_idempotent_and_cancels(a, b):
    s = sk.simplify(a * b + a)
    assert sk.simplify(s) == s
    assert sk.simplify(a - a) == 0


@settings(max_examples=40, deadline=None)
@given(expressions(), st.integers(0, 10_000))
def test_simplify_preserves_numeric_value(a, seed):
    e = sp.expand(a) * (1 + x1) ** 2
    inst = oracle.auto_instance([e], seed=seed)
    env = oracle.sample_points(inst, 10, 2, np.random.default_rng(seed))
    before = np.asarray(oracle.evaluate(e, inst, env), dtype=complex)
    after = np.asarray(oracle.evaluate(sk.simplify(e), inst, env), dtype=complex)
    scale = max(1.0, float(np.max(np.abs(before))))
    assert np.max(np.abs(before - after)) <= 1e-12 * scale

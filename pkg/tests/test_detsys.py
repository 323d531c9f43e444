from __future__ import annotations

import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from liesym import classes as cl
from liesym import detsys as ds
from liesym import fields as fl
from liesym import symkernel as sk
from liesym import tables
from liesym.symkernel import I, PSI, RHO, T

x1, x2 = sk.xs(2)


def s_eq(S, n=2):
    return cl.build_equation("S", {"S": S}, n=n, check=False)


def test_invariance_examples():
    S = sk.func("S", T, x1, x2, RHO)
    assert ds.invariance_residual(fl.Mgen(), s_eq(S)).is_zero()
    St = sk.func("S", x1, x2, RHO)
    assert ds.invariance_residual(fl.D(1), s_eq(St)).is_zero()
    r = ds.invariance_residual(fl.D(1), s_eq(T * RHO))
    assert sk.is_zero(r.expr - RHO * PSI)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_determining_system_matches_stated(n):
    derived = ds.derive_determining_system(n)
    cmp = ds.compare_systems(derived, ds.stated_system(n))
    for group, (missing, extra) in cmp.items():
        assert not missing and not extra, (group, missing, extra)


def test_determining_system_contents_n2():
    R, _ = ds.general_ansatz(2)
    tau, xi, eta = R.tau, R.xi, R.eta
    A = ds.derive_determining_system(2).groups["A"]
    B = ds.derive_determining_system(2).groups["B"]
    has = lambda grp, e: any(ds.same_equation(e, g) for g in grp)
    assert has(A, sp.diff(tau, x1))
    assert has(A, sp.diff(xi[0], x2) + sp.diff(xi[1], x1))
    assert has(B, 2 * sp.diff(eta, PSI, x1) - I * sp.diff(xi[0], T))


def test_determining_system_n1_single_xi_condition():
    R, _ = ds.general_ansatz(1)
    A = ds.derive_determining_system(1).groups["A"]
    tau_t, xi_x = sp.diff(R.tau, T), sp.diff(R.xi[0], x1)
    conds = [e for e in A if e.has(xi_x)]
    assert len(conds) == 1
    assert ds.same_equation(conds[0], tau_t - 2 * xi_x)


def test_general_solution_solves_groups_A_B():
    R, S = ds.general_ansatz(2)
    tau = sk.rfunc("tau", T)
    chi = (sk.rfunc("chi1", T), sk.rfunc("chi2", T))
    kap = sk.const("kap")
    sig, zet = sk.rfunc("sig", T), sk.rfunc("zet", T)
    Q = fl.VectorField(2, tau, ((0, -kap), (kap, 0)), chi, sig, zet)
    raw = fl.to_raw(Q)
    args = R.tau.args
    binding = {"tau": sp.Lambda(args, raw.tau), "xi1": sp.Lambda(args, raw.xi[0]),
               "xi2": sp.Lambda(args, raw.xi[1]),
               "eta": sp.Lambda(args, raw.eta), "etac": sp.Lambda(args, sk.conjugate(raw.eta))}
    stated = ds.stated_system(2)
    for g in ("A", "B"):
        for e in stated[g]:
            got = sk.substitute(e, binding)
            assert sk.is_zero(got), (g, e, got)


def test_classifying_examples():
    for th, cid, variant in [("vf", "1", None), ("log", "4", "d2!=0"), ("power", "21", None)]:
        c = tables.get_case(th, cid)
        vs = c.variants()
        v = next(x for x in vs if variant is None or x.label(c) == variant) if variant else vs[0]
        b = tables.build(c, v)
        for q in b.basis:
            assert ds.classifying_residual(q, b.e).is_zero(), (th, cid, q.label)


def test_classifying_rejects_inadmissible_shape():
    e = cl.build_equation("Vf", {"f": RHO**2 + RHO**3, "V": x1})
    with pytest.raises(ds.AdmissibilityError):
        ds.classifying_residual(fl.D(T), e)
    p = cl.build_equation("Plam", {"delta": 1, "lam": 2, "V": 0})
    with pytest.raises(ds.AdmissibilityError):
        ds.classifying_residual(fl.D(T), p)
    assert ds.classifying_residual(fl.Dlam(T, 2), p).is_zero()


def test_consistency_examples():
    assert ds.consistency_check(fl.Mgen(), s_eq(RHO**2)).ok
    kappa = sk.const("kappa")
    w1 = x1 * sp.cos(kappa * T) + x2 * sp.sin(kappa * T)
    w2 = -x1 * sp.sin(kappa * T) + x2 * sp.cos(kappa * T)
    U = sk.func("U", w1, w2)
    e = cl.build_equation("Vf", {"f": RHO**2 + RHO**3, "V": U}, check=False)
    rep = ds.consistency_check(fl.D(1) + fl.J() * kappa, e)
    assert rep.ok and sk.is_zero(rep.classifying)
    Ut = sk.func("U", T, x2)
    e = cl.build_equation("Plam", {"delta": 1, "lam": 2, "V": Ut}, check=False)
    rep = ds.consistency_check(fl.P(T, 0), e)
    assert rep.ok and sk.is_zero(rep.classifying)


def test_consistency_on_non_symmetry():
    S = sk.func("S", T, x1, x2, RHO)
    rep = ds.consistency_check(fl.D(sk.rfunc("tau", T)) + fl.P(T, 1), s_eq(S))
    assert rep.ok and not sk.is_zero(rep.classifying)


def test_split_x_quadratic_vf():
    h = sk.const("h")
    c1, c2, s = sk.rfunc("c1", T), sk.rfunc("c2", T), sk.rfunc("s", T)
    e = cl.build_equation("Vf", {"f": RHO**2 + RHO**3, "V": h * (x1**2 + x2**2)}, check=False)
    r = ds.classifying_residual(fl.P(c1, c2) + fl.Mgen(s), e)
    eqs = ds.split_x(r)
    want = [2 * h * c1 - sp.diff(c1, T, 2) / 2, 2 * h * c2 - sp.diff(c2, T, 2) / 2, sp.diff(s, T)]
    assert len(eqs) == 3
    for w in want:
        assert any(ds.same_equation(w, g) for g in eqs), w


def test_split_x_power_h_system():
    h0 = sk.rfunc("h0", T)
    tau = sk.rfunc("tau", T)
    lam = sp.Integer(2)
    e = cl.build_equation("Plam", {"delta": 1, "lam": lam, "V": I * h0}, check=False)
    r = ds.classifying_residual(fl.Dlam(tau, lam), e)
    eqs = ds.split_x(r)
    target = tau * sp.diff(h0, T) + sp.diff(tau, T) * h0 - e.lam_prime * sp.diff(tau, T, 2)
    assert any(ds.same_equation(target, g) for g in eqs)
    assert any(ds.same_equation(sp.diff(tau, T, 3), g) for g in eqs)


def test_split_zero_and_reconstruct():
    e = cl.build_equation("Vf", {"f": RHO**2 + RHO**3, "V": x1 + x2}, check=False)
    assert ds.split_x(ds.classifying_residual(fl.Mgen(), e)) == []
    r = ds.classifying_residual(fl.P(T**2, 1) + fl.Mgen(T**3), e)
    assert sk.is_zero(ds.reconstruct(r.split()) - r.expr)


def test_split_non_polynomial():
    e = cl.build_equation("Vf", {"f": RHO**2 + RHO**3, "V": sp.sin(x1)}, check=False)
    with pytest.raises(sk.NonPolynomialError):
        ds.split_x(ds.classifying_residual(fl.P(1, 0), e))


@pytest.mark.parametrize("cls", ["Vf", "P0", "Plam", "S"])
def test_kernel_sweep(cls):
    samples = ds.kernel_sweep(cls, 25, seed=5)
    assert samples and all(s.passed for s in samples)
    if cls == "P0":
        assert {s.generator for s in samples} == {"M", "I'"}
        assert {sp.im(s.delta) == 0 for s in samples} == {True, False}


_coef = st.integers(-3, 3).map(sp.Integer)


@settings(max_examples=20, deadline=None)
@given(_coef, _coef, st.lists(_coef, min_size=10, max_size=10))
def test_classifying_residual_is_linear(a, b, cs):
    U = sk.func("U", T, x1, x2)
    e = cl.build_equation("Plam", {"delta": 1 + I, "lam": 3, "V": U}, check=False)
    p = lambda i: cs[i] + cs[i + 1] * T
    Q1 = fl.Dlam(p(0) + cs[2] * T**2, 3) + fl.P(p(3), p(4)) + fl.J() * cs[5]
    Q2 = fl.Dlam(p(6), 3) + fl.Mgen(p(7)) + fl.P(cs[9], cs[8] * T**3)
    lhs = ds.classifying_expr(a * Q1 + b * Q2, e)
    rhs = a * ds.classifying_expr(Q1, e) + b * ds.classifying_expr(Q2, e)
    assert sk.is_zero(lhs - rhs)


def test_bound_realization_rank():
    assert tables.bound_realization_rank() == 9

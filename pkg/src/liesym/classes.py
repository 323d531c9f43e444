"""Equation classes and their arbitrary elements.

Class ids::

    F       i psi_t + psi_aa + F = 0 (general)
    F1      F = S psi + F0 linear-in-psi subclass
    S       S(t, x, rho), S_rho != 0
    Vtilde  S = f(rho) + V(t, x) inside the S class
    V       the (f, V) reparameterisation
    Vprime  rho f_rhorho / f_rho not a real constant
    Vf      fixed f from Vprime, arbitrary V
    P0      f = delta ln rho (lambda = 0)
    Plam    f = delta rho^lambda, lambda != 0
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from . import oracle
from . import symkernel as sk
from .symkernel import RHO, T


class MembershipError(Exception):
    pass


@dataclass(frozen=True)
class ClassDescriptor:
    cls: str
    generators: tuple
    condition: str
    group_constraints: tuple
    level: str


DESCRIPTORS = {
    "F": ClassDescriptor("F", ("D", "J", "P", "M", "I"), "invariance", ("Psi general",), "F"),
    "F1": ClassDescriptor("F1", ("D", "J", "P", "M", "I"), "invariance",
                          ("Psi = exp(...) psi_hat + Psi0",), "F"),
    "S": ClassDescriptor("S", ("D", "J", "P", "M", "I"), "S", (), "S"),
    "Vtilde": ClassDescriptor("Vtilde", ("D", "J", "P", "M", "I"), "S",
                              ("T_tt = 0", "Z_t = 0"), "S"),
    "V": ClassDescriptor("V", ("D", "J", "P", "M"), "Vf",
                         ("T_tt = 0", "Z_t = 0", "gauge c"), "V"),
    "Vprime": ClassDescriptor("Vprime", ("D", "J", "P", "M"), "Vf",
                              ("T_tt = 0", "Z_t = 0", "gauge c"), "V"),
    "Vf": ClassDescriptor("Vf", ("D(c)", "J", "P", "M"), "Vf",
                          ("T_t = 1 (or +-1 for real f)", "Z = 0", "c = 0"), "V"),
    "P0": ClassDescriptor("P0", ("D(c)", "J", "P", "M", "I"), "P0",
                          ("T_tt = 0", "T_t = 1 if delta_2 != 0, else +-1"), "V"),
    "Plam": ClassDescriptor("Plam", ("D", "J", "P", "M", "I"), "Plam",
                            ("e^Z = |T_t|^(-1/lambda)", "T_t > 0 if Im delta != 0"), "V"),
}


@dataclass(frozen=True)
class EquationInstance:
    cls: str
    n: int
    S: sp.Expr | None = None
    f: sp.Expr | None = None
    V: sp.Expr | None = None
    delta: sp.Expr | None = None
    lam: sp.Expr | None = None
    F: sp.Expr | None = None
    space: sk.Space = field(default_factory=sk.Space, compare=False)
    assumptions: tuple = ()

    @property
    def lam_prime(self):
        if self.cls != "Plam":
            raise MembershipError("lambda' only defined for power classes")
        return 1 / sp.sympify(self.lam) - sp.Rational(self.n, 4)

    @property
    def delta_parts(self):
        d = sp.sympify(self.delta)
        return sp.re(d), sp.im(d)

    def with_V(self, V) -> "EquationInstance":
        from dataclasses import replace
        return replace(self, V=sp.sympify(V))


def as_S(e: EquationInstance):
    if e.S is not None:
        return e.S
    if e.cls in ("Vtilde", "V", "Vprime", "Vf"):
        return e.f + e.V
    if e.cls == "P0":
        return e.delta * sp.log(RHO) + e.V
    if e.cls == "Plam":
        return e.delta * RHO ** e.lam + e.V
    raise MembershipError(f"class {e.cls} has no S form")


def _nonzero_somewhere(expr, space, seed=0) -> bool:
    inst = oracle.auto_instance([expr], space, seed=seed)
    rng = np.random.default_rng(seed)
    env = oracle.sample_points(inst, 32, 3, rng)
    val = np.asarray(oracle.evaluate(expr, inst, env), dtype=complex)
    return bool(np.max(np.abs(val)) > 1e-6)


def ratio_kind(f, space=None):
    """Partition predicate on a nonlinearity f(rho).

    Returns ("P0", 0), ("Plam", lam) or ("Vprime", None); abstract f gives
    ("Vprime", None) with the decision recorded as an assumption."""
    fr = sp.diff(f, RHO)
    if sk.simplify(fr, space) == 0:
        raise MembershipError("f_rho = 0")
    ratio = sp.simplify(RHO * sp.diff(f, RHO, 2) / fr)
    if not ratio.has(RHO) and not sk.applied_atoms(ratio):
        re_, im_ = sp.re(ratio), sp.im(ratio)
        if sp.simplify(im_) == 0 and not (ratio.free_symbols - {RHO}):
            lam = sp.nsimplify(ratio + 1)
            return ("P0", 0) if lam == 0 else ("Plam", lam)
        if ratio.free_symbols and all(s.is_real for s in ratio.free_symbols) and not ratio.has(sp.I):
            lam = ratio + 1
            return ("Plam", lam)
    if sk.applied_atoms(ratio):
        return ("Vprime", None)
    # numeric spread at 8 sample rho values
    rhos = np.linspace(0.2, 2.8, 8)
    inst = oracle.auto_instance([ratio], space)
    vals = np.asarray(oracle.evaluate(ratio, inst, {RHO: rhos}), dtype=complex)
    vals = np.broadcast_to(vals, rhos.shape)
    spread = np.max(np.abs(vals - vals[0]))
    if spread > 1e-8 * max(1.0, np.max(np.abs(vals))) or np.max(np.abs(vals.imag)) > 1e-8:
        return ("Vprime", None)
    lam = sp.nsimplify(float(vals[0].real) + 1, rational=True)
    return ("P0", 0) if lam == 0 else ("Plam", lam)


def build_equation(cls: str, elements: dict, n: int = 2, space: sk.Space | None = None,
                   check: bool = True) -> EquationInstance:
    if cls not in DESCRIPTORS:
        raise MembershipError(f"unknown class {cls}")
    space = space or sk.Space()
    el = {k: sp.sympify(v) for k, v in elements.items()}
    x = sk.xs(n)
    assumptions = []
    if cls in ("F", "F1"):
        e = EquationInstance(cls, n, F=el["F"], space=space)
        return e
    if cls in ("S", "Vtilde"):
        e = EquationInstance(cls, n, S=el["S"], space=space)
    elif cls in ("V", "Vprime", "Vf"):
        e = EquationInstance(cls, n, f=el["f"], V=el.get("V", 0), space=space)
    elif cls == "P0":
        e = EquationInstance(cls, n, V=el.get("V", 0), delta=el["delta"], lam=sp.Integer(0),
                             space=space)
    else:
        lam = el["lam"]
        if lam == 0:
            raise MembershipError("lambda = 0 is the logarithmic class P0")
        e = EquationInstance(cls, n, V=el.get("V", 0), delta=el["delta"], lam=lam, space=space)
    if not check:
        return e
    if cls in ("P0", "Plam"):
        if sp.simplify(e.delta) == 0:
            raise MembershipError("delta must be nonzero")
        if e.delta.free_symbols & {T, RHO, *x} or sk.applied_atoms(e.delta):
            raise MembershipError("delta must be a constant")
    S = as_S(e)
    Srho = sp.diff(S, RHO)
    if sk.simplify(Srho, space) == 0:
        raise MembershipError("S_rho = 0")
    if not _nonzero_somewhere(Srho, space):
        raise MembershipError("S_rho vanishes at all sampled points")
    if cls in ("Vtilde", "V", "Vprime", "Vf", "P0", "Plam"):
        for v in (T,) + x:
            r = sk.simplify(sp.diff(Srho, v), space)
            if not sk.is_zero(r, space):
                raise MembershipError(f"S_rho{v} = {r} != 0")
    if cls in ("V", "Vprime", "Vf"):
        if e.V is not None and RHO in e.V.free_symbols:
            raise MembershipError("V depends on rho")
    if cls in ("Vprime", "Vf"):
        kind, _ = ratio_kind(e.f, space)
        if kind != "Vprime":
            raise MembershipError("rho f_rhorho / f_rho is a real constant")
        if sk.applied_atoms(e.f):
            assumptions.append("abstract f assumed in Vprime")
    if cls == "P0":
        r = sk.simplify(sp.diff(RHO * Srho, RHO), space)
        if not sk.is_zero(r, space):
            raise MembershipError(f"(rho S_rho)_rho = {r} != 0")
    if cls == "Plam":
        r = sp.diff(RHO * Srho, RHO) - e.lam * Srho
        if not sk.is_zero(sp.powsimp(sp.expand(r)), space):
            raise MembershipError(f"(rho S_rho)_rho - lambda S_rho = {r} != 0")
    from dataclasses import replace
    return replace(e, assumptions=tuple(assumptions))


def gauge_delta(delta, cls: str, lam=None):
    """Normal form of delta: |delta| = 1 and Im delta >= 0.

    Returns (new delta, scale, reflect) where scale is |T_t| (P0) or mu
    (Plam) and reflect tells whether the Wigner reflection T = -t is used.
    """
    d = sp.sympify(delta)
    mod = sp.sqrt(sp.re(d) ** 2 + sp.im(d) ** 2)
    reflect = bool(sp.im(d) < 0)
    dh = sp.conjugate(d) if reflect else d
    if cls == "P0":
        # delta~ = delta_hat / |T_t| with T = +-|delta| t
        return sp.simplify(dh / mod), mod, reflect
    if cls == "Plam":
        mu = mod ** (1 / sp.sympify(lam))
        return sp.simplify(dh / mu ** lam), mu, reflect
    raise MembershipError("delta gauging only for P0 and Plam")

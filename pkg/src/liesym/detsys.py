"""Invariance criterion, determining equations and classifying conditions."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import sympy as sp

from . import symkernel as sk
from .classes import EquationInstance, MembershipError, as_S
from .fields import RawField, VectorField, prolong2, to_raw
from .symkernel import I, PSI, PSIC, RHO, T


class AdmissibilityError(Exception):
    pass


@dataclass(frozen=True)
class Residual:
    expr: sp.Expr
    provenance: str = ""
    n: int = 2
    space: sk.Space = field(default_factory=sk.Space, compare=False)

    def is_zero(self) -> bool:
        return sk.is_zero(self.expr, self.space)

    def split(self) -> dict:
        return split_form(self.expr, self.n, self.space)


# ---------------------------------------------------------------- invariance


def on_shell(expr, S, n: int):
    """Substitute psi_t and psi*_t from the equation."""
    lap = sum(sk.jet((a, a)) for a in range(1, n + 1))
    lapc = sum(sk.jet((a, a), conj=True) for a in range(1, n + 1))
    sub = {sk.jet((0,)): I * lap + I * S * PSI,
           sk.jet((0,), conj=True): -I * lapc - I * sk.conjugate(S) * PSIC}
    return sp.sympify(expr).xreplace(sub)


def invariance_expr(Q, S, n: int):
    """Q_(2)(i psi_t + psi_aa + S psi) restricted to the solution set."""
    R = Q if isinstance(Q, RawField) else to_raw(Q)
    pr = prolong2(R)
    x = sk.xs(n)
    eta = R.eta
    etac = sk.conjugate(eta)
    q_rho = (PSIC * eta + PSI * etac) / (2 * RHO)
    total = I * pr.eta_t + sum(pr.eta_ab[(a, a)] for a in range(1, n + 1))
    total += PSI * (R.tau * sp.diff(S, T) + sum(R.xi[a] * sp.diff(S, x[a]) for a in range(n))
                    + sp.diff(S, RHO) * q_rho)
    total += S * eta
    return on_shell(total, S, n)


def _rho_reduce(e):
    """Use psi psi* = rho^2 on expressions linear-fractional in psi."""
    return sp.expand(sp.expand(e).xreplace({PSIC: RHO ** 2 / PSI}))


def invariance_residual(Q, e: EquationInstance) -> Residual:
    S = as_S(e)
    space = e.space
    if isinstance(Q, VectorField):
        space = Q.space(space)
    expr = sk.simplify(_rho_reduce(invariance_expr(Q, S, e.n)), space)
    return Residual(expr, "invariance", e.n, space)


# ---------------------------------------------------------------- classifying


def _xi_struct(Q: VectorField, with_dilation: bool):
    x = sk.xs(Q.n)
    tt = sp.diff(Q.tau, T)
    return [(tt * x[a] / 2 if with_dilation else 0)
            + sum(Q.kappa[a][b] * x[b] for b in range(Q.n)) + Q.chi[a] for a in range(Q.n)]


def _rhs_common(Q: VectorField):
    x = sk.xs(Q.n)
    r2 = sum(v ** 2 for v in x)
    return (sp.diff(Q.tau, T, 3) * r2 / 8
            + sum(sp.diff(c, T, 2) * v for c, v in zip(Q.chi, x)) / 2
            + sp.diff(Q.sigma, T))


def admissible(Q: VectorField, e: EquationInstance) -> None:
    """Raise if the structured shape of Q is not allowed for the class."""
    sp_ = Q.space(e.space)
    if e.cls in ("Vf", "V", "Vprime"):
        if not sk.is_zero(sp.diff(Q.tau, T), sp_):
            raise AdmissibilityError("tau_t = 0 required")
        if not sk.is_zero(Q.zeta, sp_):
            raise AdmissibilityError("zeta = 0 required")
    elif e.cls == "P0":
        if not sk.is_zero(sp.diff(Q.tau, T), sp_):
            raise AdmissibilityError("tau_t = 0 required")
    elif e.cls == "Plam":
        if not sk.is_zero(e.lam * Q.zeta + sp.diff(Q.tau, T), sp_):
            raise AdmissibilityError("lambda zeta + tau_t = 0 required")


def classifying_expr(Q: VectorField, e: EquationInstance, canonical: bool = True):
    """Left minus right side of the classifying condition of e's class."""
    x = sk.xs(e.n)
    n = e.n
    if e.cls in ("S", "Vtilde") or e.cls in ("F", "F1"):
        S = as_S(e)
        xi = _xi_struct(Q, True)
        lhs = (Q.tau * sp.diff(S, T) + sum(xi[a] * sp.diff(S, x[a]) for a in range(n))
               + Q.zeta * RHO * sp.diff(S, RHO) + sp.diff(Q.tau, T) * S)
        rhs = (_rhs_common(Q) - I * sp.diff(Q.zeta, T)
               - I * sp.Rational(n, 4) * sp.diff(Q.tau, T, 2))
    elif e.cls in ("Vf", "V", "Vprime"):
        V = e.V
        xi = _xi_struct(Q, False)
        lhs = Q.tau * sp.diff(V, T) + sum(xi[a] * sp.diff(V, x[a]) for a in range(n))
        rhs = _rhs_common(Q)
    elif e.cls == "P0":
        V = e.V
        xi = _xi_struct(Q, False)
        lhs = Q.tau * sp.diff(V, T) + sum(xi[a] * sp.diff(V, x[a]) for a in range(n))
        rhs = _rhs_common(Q) - I * sp.diff(Q.zeta, T) - e.delta * Q.zeta
    elif e.cls == "Plam":
        V = e.V
        xi = _xi_struct(Q, True)
        lhs = (Q.tau * sp.diff(V, T) + sum(xi[a] * sp.diff(V, x[a]) for a in range(n))
               + sp.diff(Q.tau, T) * V)
        rhs = _rhs_common(Q) + I * e.lam_prime * sp.diff(Q.tau, T, 2)
    else:
        raise MembershipError(f"no classifying condition for class {e.cls}")
    out = lhs - rhs
    return sk.simplify(out, Q.space(e.space)) if canonical else out


def classifying_residual(Q: VectorField, e: EquationInstance) -> Residual:
    admissible(Q, e)
    space = Q.space(e.space)
    return Residual(classifying_expr(Q, e), f"classifying[{e.cls}]", e.n, space)


def s_level_expr(Q: VectorField, e: EquationInstance, canonical=True):
    """S-class classifying expression for the S form of e."""
    from dataclasses import replace
    es = replace(e, cls="S", S=as_S(e))
    return classifying_expr(Q, es, canonical)


@dataclass
class ConsistencyReport:
    ok: bool
    invariance: sp.Expr
    classifying: sp.Expr
    difference: sp.Expr


def consistency_check(Q: VectorField, e: EquationInstance) -> ConsistencyReport:
    inv = invariance_residual(Q, e)
    cls = s_level_expr(Q, e)
    space = Q.space(e.space)
    diff = sk.simplify(inv.expr - _rho_reduce(cls * PSI), space)
    ok = sk.is_zero(diff, space)
    return ConsistencyReport(ok, inv.expr, cls, diff)


# ---------------------------------------------------------------- splitting


def split_form(expr, n: int, space=None) -> dict:
    """Map x-monomial -> (real part, imaginary part) of its coefficient."""
    x = sk.xs(n)
    e = sk.simplify(expr, space)
    coeffs = sk.collect(e, x)
    out = {}
    for mono in sorted(coeffs, key=sp.default_sort_key):
        out[mono] = sk.split_re_im(coeffs[mono])
    return out


def split_x(r: Residual) -> list:
    """Coefficient equations (expressions equal to zero), real parts first."""
    eqs = []
    for mono, (re_, im_) in r.split().items():
        for part in (re_, im_):
            p = sk.simplify(part, r.space)
            if p != 0:
                eqs.append(p)
    return eqs


def reconstruct(split: dict):
    return sp.expand(sum(m * (re_ + I * im_) for m, (re_, im_) in split.items()))


# ---------------------------------------------------------------- kernels


@dataclass
class KernelSample:
    cls: str
    generator: str
    delta: sp.Expr
    symbolic_zero: bool
    numeric: float

    @property
    def passed(self):
        return self.symbolic_zero and self.numeric < 1e-9


def kernel_sweep(cls: str, count: int = 100, seed: int = 0, n: int = 2) -> list:
    """Kernel generators against random potentials: M for every class, and
    I' for the logarithmic class with delta_2 = 0 and delta_2 != 0 alternating."""
    import numpy as np

    from . import oracle
    from .fields import Iprime, Mgen

    rng = np.random.default_rng(seed)
    x = sk.xs(n)
    out = []
    for k in range(count):
        V = oracle.random_poly(rng, (T,) + x, 3, True)
        d1 = sp.Rational(int(rng.integers(1, 9)), 4) * (1 if rng.random() < 0.5 else -1)
        d2 = 0 if k % 2 == 0 else sp.Rational(int(rng.integers(1, 9)), 4)
        delta = d1 + I * d2
        if cls == "Vf":
            e = EquationInstance(cls, n, f=RHO ** 2 + RHO ** 3, V=V)
            gens = [Mgen(n=n)]
        elif cls == "P0":
            e = EquationInstance(cls, n, V=V, delta=delta, lam=sp.Integer(0))
            gens = [Mgen(n=n), Iprime(d1, d2, n)]
        elif cls == "Plam":
            lam = sp.Rational(int(rng.integers(1, 7)), int(rng.integers(1, 4)))
            e = EquationInstance(cls, n, V=V, delta=delta, lam=lam)
            gens = [Mgen(n=n)]
        else:
            e = EquationInstance("S", n, S=delta * RHO ** 2 + V)
            gens = [Mgen(n=n)]
        inst = oracle.auto_instance([V], seed=seed + k)
        for q in gens:
            r = classifying_residual(q, e)
            num = oracle.numeric_residual(inst, q, e, 50, seed + k)
            out.append(KernelSample(cls, q.label, delta, r.is_zero(), num))
    return out


# ---------------------------------------------------------------- determining system


@dataclass
class DeterminingSystem:
    n: int
    groups: dict
    steps: list

    def equations(self) -> list:
        return [e for g in ("A", "B", "C") for e in self.groups[g]]


def general_ansatz(n: int):
    """Components as abstract functions of (t, x, psi, psi*)."""
    x = sk.xs(n)
    args = (T,) + x + (PSI, PSIC)
    slots = (n + 1, n + 2)
    tau = sk.func("tau", *args, real=True, psi_slots=slots)
    xi = tuple(sk.func(f"xi{a}", *args, real=True, psi_slots=slots) for a in range(1, n + 1))
    eta = sk.func("eta", *args, psi_slots=slots, partner="etac")
    S = sk.func("S", T, *x, RHO)
    return RawField(n, tau, xi, eta), S


def _dominates(a, b) -> bool:
    return all(p >= q for p, q in zip(a, b))


class _Vanishing:
    """Derivative atoms known to vanish, closed under differentiation."""

    def __init__(self):
        self.atoms: dict = {}

    def add(self, name, index) -> bool:
        known = self.atoms.setdefault(name, [])
        if any(_dominates(index, k) for k in known):
            return False
        known[:] = [k for k in known if not _dominates(k, index)] + [index]
        return True

    def kills(self, name, index) -> bool:
        return any(_dominates(index, k) for k in self.atoms.get(name, []))

    def reduce(self, e):
        reps = {}
        for a in sk.applied_atoms(e):
            name = a._fname
            idx = a._index
            if self.kills(name, idx):
                reps[a] = 0
            elif name == "etac" and self.kills("eta", _swap(idx, a)):
                reps[a] = 0
        return sp.expand(e.xreplace(reps)) if reps else sp.expand(e)


def _swap(idx, a):
    i, j = a._psi_slots
    idx = list(idx)
    idx[i], idx[j] = idx[j], idx[i]
    return tuple(idx)


def _canon_eq(e):
    """Monic canonical form of an equation e = 0."""
    e = sp.expand(e)
    if e == 0:
        return e
    terms = sorted(sp.Add.make_args(e), key=sp.default_sort_key)
    c, _ = terms[0].as_coeff_Mul()
    if c.is_Number and c != 0:
        e = sp.expand(e / c)
    lead = sorted(sp.Add.make_args(e), key=sp.default_sort_key)[0]
    coeff = [f for f in sp.Mul.make_args(lead) if f.is_number]
    if coeff and coeff[0] != 1:
        e = sp.expand(e / coeff[0])
    return e


def _single_atom(e):
    """If e is (nonzero factor) * derivative atom, return the atom."""
    e = sp.factor_terms(sp.expand(e))
    atoms = [a for a in sk.applied_atoms(e) if a._fname in ("tau", "eta", "etac")
             or a._fname.startswith("xi")]
    if len(atoms) != 1:
        return None
    a = atoms[0]
    if sp.expand(e.xreplace({a: 0})) != 0:
        return None
    d = sp.Dummy("d")
    if sp.expand(sp.diff(e.xreplace({a: d}), d, 2)) != 0:
        return None
    return a


def _jet_split(expr, n):
    jets = sorted([s for s in sp.sympify(expr).free_symbols
                   if sk.is_jet(s) and s not in (PSI, PSIC)], key=lambda s: s.name)
    co = sk.collect(expr, jets)

    def order(m):
        return max((sum(1 for _ in jet_counts(s)) for s in m.free_symbols), default=0)

    return sorted(co.items(), key=lambda kv: (-order(kv[0]), sp.default_sort_key(kv[0]))), order


def jet_counts(s):
    counts, _ = sk.jet_parse(s)
    return counts


def derive_determining_system(n: int = 2) -> DeterminingSystem:
    R, S = general_ansatz(n)
    expr = sp.expand(invariance_expr(R, S, n))
    van = _Vanishing()
    groups = {"A": [], "B": [], "C": []}
    steps = []
    x = sk.xs(n)

    def group_of(e):
        names = {a._fname for a in sk.applied_atoms(e)}
        return "B" if names & {"eta", "etac"} else "A"

    def record(e, why):
        e = _canon_eq(e)
        conj_e = _canon_eq(sk.conjugate(e))
        g = group_of(e)
        known = groups[g]
        # conjugate duplicates only for complex equations (psi <-> psi* for real ones)
        dup_conj = g == "B"
        if any(sp.expand(e - k) == 0 or (dup_conj and sp.expand(conj_e - k) == 0) for k in known):
            return
        known.append(e)
        steps.append((why, e))

    # stage 1: single-atom coefficients, iterated to a fixpoint
    changed = True
    while changed:
        changed = False
        reduced = van.reduce(expr)
        items, _ = _jet_split(reduced, n)
        for mono, c in items:
            a = _single_atom(c)
            if a is None:
                continue
            name = a._fname
            idx = a._index
            if name == "etac":
                name, idx = "eta", _swap(idx, a)
            if van.add(name, idx):
                changed = True
        if changed:
            continue
    for name in sorted(van.atoms):
        for idx in sorted(van.atoms[name]):
            if name == "eta" and sum(idx[n + 1:]) == 0:
                continue
            f = sk.fclass(name, idx, name != "eta", (n + 1, n + 2),
                          None if name != "eta" else "etac")(*R.tau.args)
            record(f, f"coefficient of a jet monomial is {f}")
    # stage 2: multi-atom coefficients of second-order jets
    reduced = van.reduce(expr)
    items, order = _jet_split(reduced, n)
    for mono, c in items:
        if order(mono) == 2 and len(mono.free_symbols) == 1 and sp.degree(mono, list(mono.free_symbols)[0]) == 1:
            c = van.reduce(c)
            if c != 0:
                record(c, f"coefficient of {mono}")
    # consequence of group A: second x-derivatives of xi vanish
    for a in range(1, n + 1):
        for b in range(1, n + 1):
            for c in range(b, n + 1):
                idx = [0] * (n + 3)
                idx[b] += 1
                idx[c] += 1
                van.add(f"xi{a}", tuple(idx))
    steps.append(("group A implies xi^a_bc = 0", None))
    # stage 3: first-order jets
    reduced = van.reduce(expr)
    items, order = _jet_split(reduced, n)
    for mono, c in items:
        if order(mono) != 1:
            continue
        a = _single_atom(c)
        if a is not None:
            name = a._fname
            idx = a._index if name == "eta" else _swap(a._index, a)
            van.add("eta", idx)
            f = sk.fclass("eta", idx, False, (n + 1, n + 2), "etac")(*R.tau.args)
            record(f, f"coefficient of {mono}")
    reduced = van.reduce(expr)
    items, order = _jet_split(reduced, n)
    for mono, c in items:
        if order(mono) == 1 and sp.degree(mono, list(mono.free_symbols)[0]) == 1:
            c = van.reduce(c)
            if c != 0 and not any(s.name.startswith("psic") for s in mono.free_symbols):
                record(c, f"coefficient of {mono}")
    # stage 4: zeroth order, split by the phase of psi
    zero = van.reduce(reduced.xreplace({s: 0 for s in reduced.free_symbols
                                        if sk.is_jet(s) and s not in (PSI, PSIC)}))
    A_ = sk.rfunc("_A", T, *x)
    B_ = sk.func("_B", T, *x)
    eta_lin = A_ * PSI + B_
    lin = _substitute_eta(zero, R, eta_lin)
    E = sp.Symbol("E")
    lin = sp.expand(lin.xreplace({PSI: RHO * E, PSIC: RHO / E}))
    harmonic = sp.expand(lin.coeff(E, 2))
    Srho = sp.diff(S, RHO)
    if harmonic != 0:
        factor = sp.simplify(harmonic / sp.conjugate(B_))
        if not factor.has(B_) and factor.has(Srho):
            eq = PSI * R.eta.diff(PSI) - R.eta
            record(eq, "phase harmonic e^{2i phi}: S_rho B* = 0 with eta = A psi + B")
    # stage 5: remaining equation with psi eta_psi = eta on underived eta
    eta_psi = R.eta.diff(PSI)
    c_expr = zero.xreplace({R.eta: PSI * eta_psi, sk.conjugate(R.eta): PSIC * sk.conjugate(eta_psi)})
    c_expr = van.reduce(_rho_reduce_outer(c_expr))
    record_c = _canon_eq(c_expr)
    groups["C"].append(record_c)
    steps.append(("zeroth-order remainder", record_c))
    return DeterminingSystem(n, groups, steps)


def _rho_reduce_outer(e):
    """psi* -> rho^2/psi outside function arguments."""
    e = sp.expand(e)
    atoms = sorted(sk.applied_atoms(e), key=sp.default_sort_key)
    hide = {a: sp.Dummy() for a in atoms}
    e = _rho_reduce(e.xreplace(hide))
    return sp.expand(e.xreplace({v: k for k, v in hide.items()}))


def same_equation(a, b) -> bool:
    """a = 0 and b = 0 agree up to a nonzero constant factor."""
    a, b = sp.expand(a), sp.expand(b)
    if a == 0 or b == 0:
        return a == b
    r = sp.simplify(a / b)
    return bool(r.is_number and r != 0)


def stated_system(n: int = 2) -> dict:
    """The determining equations written out by hand."""
    R, S = general_ansatz(n)
    x = sk.xs(n)
    tau, xi, eta = R.tau, R.xi, R.eta
    d = sp.diff
    A = [d(tau, PSI), d(tau, PSIC)] + [d(tau, v) for v in x]
    A += [d(xi[a], PSI) for a in range(n)] + [d(xi[a], PSIC) for a in range(n)]
    A += [d(tau, T) - 2 * d(xi[a], x[a]) for a in range(n)]
    A += [d(xi[a], x[b]) + d(xi[b], x[a]) for a in range(n) for b in range(a + 1, n)]
    B = [d(eta, PSIC), d(eta, PSI, 2)]
    B += [2 * d(eta, PSI, x[a]) - I * d(xi[a], T) for a in range(n)]
    B += [PSI * d(eta, PSI) - eta]
    eta_psi = d(eta, PSI)
    re_eta_psi = (eta_psi + sk.conjugate(eta_psi)) / 2
    C = (I * d(eta, T) + sum(d(eta, v, 2) for v in x)
         + (tau * d(S, T) + sum(xi[a] * d(S, x[a]) for a in range(n))) * PSI
         + RHO * d(S, RHO) * re_eta_psi * PSI + d(tau, T) * S * PSI)
    return {"A": A, "B": B, "C": [C]}


def compare_systems(derived: DeterminingSystem, stated: dict) -> dict:
    """Per group: equations missing from either side."""
    out = {}
    for g in ("A", "B", "C"):
        got = list(derived.groups[g])
        want = list(stated[g])
        missing = [w for w in want if not any(same_equation(w, x) for x in got)]
        extra = [x for x in got if not any(same_equation(w, x) for w in want)]
        out[g] = (missing, extra)
    return out


def _substitute_eta(e, R, eta_new):
    """Replace eta (and its derivatives) by an explicit expression."""
    n = R.n
    args = R.tau.args
    lam = sp.Lambda(args, eta_new)
    lamc = sp.Lambda(args, sk.conjugate(eta_new))
    return sk.substitute(e, {"eta": lam, "etac": lamc})

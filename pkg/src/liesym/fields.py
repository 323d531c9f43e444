"""Vector fields on (t, x, psi, psi*).

A structured field is

    D(tau) - sum_{a<b} kappa_ab J_ab + P(chi) + sigma M + zeta I

stored through its parameters; ``kappa`` is a skew matrix acting as
xi^a = kappa_ab x_b.  For n = 2 the convention kappa J with J = J_12 means
kappa_21 = kappa = -kappa_12.  D^lambda(tau) is D(tau) with zeta shifted by
-tau_t/lambda.  Raw fields carry arbitrary components (tau, xi^a, eta).
"""

from __future__ import annotations

import itertools
import signal
import threading
import warnings
from contextlib import contextmanager
from dataclasses import dataclass, field, replace

import numpy as np
import sympy as sp

from . import oracle
from . import symkernel as sk
from .symkernel import I, PSI, PSIC, T


class FieldError(Exception):
    pass


def _zero_kappa(n):
    return tuple(tuple(sp.Integer(0) for _ in range(n)) for _ in range(n))


@dataclass(frozen=True)
class VectorField:
    n: int
    tau: sp.Expr = sp.Integer(0)
    kappa: tuple = None
    chi: tuple = None
    sigma: sp.Expr = sp.Integer(0)
    zeta: sp.Expr = sp.Integer(0)
    rules: tuple = ()
    label: str = ""

    def __post_init__(self):
        n = self.n
        object.__setattr__(self, "tau", sp.sympify(self.tau))
        object.__setattr__(self, "sigma", sp.sympify(self.sigma))
        object.__setattr__(self, "zeta", sp.sympify(self.zeta))
        k = self.kappa if self.kappa is not None else _zero_kappa(n)
        k = tuple(tuple(sp.sympify(v) for v in row) for row in k)
        for a in range(n):
            for b in range(n):
                if sp.expand(k[a][b] + k[b][a]) != 0:
                    raise FieldError("kappa must be skew-symmetric")
        object.__setattr__(self, "kappa", k)
        c = self.chi if self.chi is not None else (0,) * n
        if len(c) != n:
            raise FieldError("chi must have n components")
        object.__setattr__(self, "chi", tuple(sp.sympify(v) for v in c))

    # linear structure -------------------------------------------------
    def __add__(self, other):
        if other == 0:
            return self
        if not isinstance(other, VectorField) or other.n != self.n:
            return NotImplemented
        n = self.n
        return VectorField(
            n, self.tau + other.tau,
            tuple(tuple(self.kappa[a][b] + other.kappa[a][b] for b in range(n)) for a in range(n)),
            tuple(p + q for p, q in zip(self.chi, other.chi)),
            self.sigma + other.sigma, self.zeta + other.zeta,
            _merge_rules(self.rules, other.rules),
            _join_labels(self.label, other.label, "+"))

    __radd__ = __add__

    def __mul__(self, c):
        c = sp.sympify(c)
        n = self.n
        lab = f"{c}*({self.label})" if self.label else ""
        return VectorField(
            n, c * self.tau,
            tuple(tuple(c * v for v in row) for row in self.kappa),
            tuple(c * v for v in self.chi), c * self.sigma, c * self.zeta,
            self.rules, lab)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1

    def __sub__(self, other):
        return self + (-other)

    def params(self) -> list:
        """Flat list of parameter functions (tau, kappa_ab for a<b, chi, sigma, zeta)."""
        n = self.n
        ks = [self.kappa[a][b] for a in range(n) for b in range(a + 1, n)]
        return [self.tau] + ks + list(self.chi) + [self.sigma, self.zeta]

    def space(self, base: sk.Space | None = None) -> sk.Space:
        s = base.copy() if base is not None else sk.Space()
        for r in self.rules:
            s.rules[r.name] = r
        return s

    def canonical(self, space=None) -> "VectorField":
        sp_ = self.space(space)
        f = lambda e: sk.simplify(e, sp_)
        return VectorField(self.n, f(self.tau),
                           tuple(tuple(f(v) for v in row) for row in self.kappa),
                           tuple(f(v) for v in self.chi), f(self.sigma), f(self.zeta),
                           self.rules, self.label)

    def is_zero(self, space=None) -> bool:
        sp_ = self.space(space)
        return all(sk.is_zero(p, sp_) for p in self.params())

    def __str__(self):
        return self.label or to_text(self)


def _merge_rules(a, b):
    out = {r.name: r for r in a}
    for r in b:
        out[r.name] = r
    return tuple(out[k] for k in sorted(out))


def _join_labels(a, b, op):
    if a and b:
        return f"{a}{op}{b}"
    return ""


@dataclass(frozen=True)
class RawField:
    """Components tau, xi^a, eta (eta* is the conjugate of eta)."""

    n: int
    tau: sp.Expr
    xi: tuple
    eta: sp.Expr

    def apply(self, f):
        """Q(f) for f a function of (t, x, psi, psi*)."""
        out = self.tau * sp.diff(f, T)
        for x, c in zip(sk.xs(self.n), self.xi):
            out += c * sp.diff(f, x)
        out += self.eta * sp.diff(f, PSI) + sk.conjugate(self.eta) * sp.diff(f, PSIC)
        return out


# ---------------------------------------------------------------- generators


def D(tau, n=2):
    return VectorField(n, tau=tau, label=f"D({tau})")


def Dlam(tau, lam, n=2):
    lam = sp.sympify(lam)
    if lam == 0:
        raise FieldError("D^lambda needs lambda != 0")
    tau = sp.sympify(tau)
    return VectorField(n, tau=tau, zeta=-sp.diff(tau, T) / lam, label=f"Dl({tau})")


def J(a=1, b=2, n=2):
    """J_ab = x_a d_b - x_b d_a."""
    k = [[sp.Integer(0)] * n for _ in range(n)]
    k[b - 1][a - 1] = sp.Integer(1)
    k[a - 1][b - 1] = sp.Integer(-1)
    return VectorField(n, kappa=tuple(map(tuple, k)), label="J" if n == 2 else f"J{a}{b}")


def P(*chi, n=None):
    if len(chi) == 1 and isinstance(chi[0], (tuple, list)):
        chi = tuple(chi[0])
    n = n or len(chi)
    return VectorField(n, chi=chi, label="P(" + ",".join(map(str, chi)) + ")")


def Mgen(sigma=1, n=2):
    return VectorField(n, sigma=sigma, label="M" if sigma == 1 else f"({sigma})*M")


def Igen(zeta=1, n=2):
    return VectorField(n, zeta=zeta, label="I" if zeta == 1 else f"({zeta})*I")


def Iprime(d1, d2, n=2):
    """e^{-d2 t}(d2 I - d1 M), or I + d1 t M when d2 = 0."""
    d1, d2 = sp.sympify(d1), sp.sympify(d2)
    if d2 == 0:
        return VectorField(n, sigma=d1 * T, zeta=1, label="I'")
    e = sp.exp(-d2 * T)
    return VectorField(n, sigma=-d1 * e, zeta=d2 * e, label="I'")


def Pprime(chi, h0, d1, d2, name="zh", n=None):
    """P(chi) - zh I - d1 A M with zh_t + d2 zh = h0.chi and A_t = zh."""
    if h0 is None:
        raise FieldError("P' needs the potential's h^{0a}")
    chi = tuple(sp.sympify(c) for c in chi)
    n = n or len(chi)
    h0 = tuple(sp.sympify(h) for h in h0)
    zh = sk.rfunc(name, T)
    A = sk.rfunc(name + "_int", T)
    rules = (sk.Rule(name, 1, sum(h * c for h, c in zip(h0, chi)) - sp.sympify(d2) * zh),
             sk.Rule(name + "_int", 1, zh))
    return VectorField(n, chi=chi, sigma=-sp.sympify(d1) * A, zeta=-zh, rules=rules,
                       label="P'(" + ",".join(map(str, chi)) + ")")


def make_generator(kind: str, n: int = 2, **p) -> VectorField:
    if kind == "D":
        return D(p.get("tau", 1), n)
    if kind in ("Dl", "Dlam", "Dλ"):
        return Dlam(p.get("tau", 1), p["lam"], n)
    if kind == "J":
        return J(p.get("a", 1), p.get("b", 2), n)
    if kind == "P":
        return P(tuple(p["chi"]), n=n)
    if kind == "M":
        return Mgen(p.get("sigma", 1), n)
    if kind == "I":
        return Igen(p.get("zeta", 1), n)
    if kind == "Iprime":
        d = sp.sympify(p["delta"])
        return Iprime(sp.re(d), sp.im(d), n)
    if kind == "Pprime":
        d = sp.sympify(p.get("delta", 1))
        return Pprime(p["chi"], p.get("h0"), sp.re(d), sp.im(d), p.get("name", "zh"), n)
    raise FieldError(f"unknown generator kind {kind}")


# ---------------------------------------------------------------- raw


def to_raw(Q: VectorField) -> RawField:
    n = Q.n
    x = sk.xs(n)
    tt = sp.diff(Q.tau, T)
    xi = tuple(tt * x[a] / 2 + sum(Q.kappa[a][b] * x[b] for b in range(n)) + Q.chi[a]
               for a in range(n))
    r2 = sum(v ** 2 for v in x)
    gamma = (I * sp.diff(Q.tau, T, 2) * r2 / 8
             + I * sum(sp.diff(c, T) * v for c, v in zip(Q.chi, x)) / 2
             + I * Q.sigma + Q.zeta)
    return RawField(n, Q.tau, xi, gamma * PSI)


def raw_bracket(A: RawField, B: RawField) -> RawField:
    n = A.n
    return RawField(
        n, A.apply(B.tau) - B.apply(A.tau),
        tuple(A.apply(b) - B.apply(a) for a, b in zip(A.xi, B.xi)),
        A.apply(B.eta) - B.apply(A.eta))


def recognize(R: RawField, space=None) -> VectorField | None:
    """Coefficient matching of a raw field against the structured template."""
    n = R.n
    x = sk.xs(n)
    z = {v: 0 for v in x}
    tau = sk.simplify(R.tau, space)
    if any(sk.simplify(sp.diff(tau, v), space) != 0 for v in x + (PSI, PSIC)):
        return None
    chi = tuple(sk.simplify(sp.sympify(c).subs(z), space) for c in R.xi)
    tt = sp.diff(tau, T)
    kap = [[sp.Integer(0)] * n for _ in range(n)]
    for a in range(n):
        for b in range(n):
            v = sk.simplify(sp.diff(R.xi[a], x[b]) - (tt / 2 if a == b else 0), space)
            kap[a][b] = v.subs(z) if v.free_symbols & set(x) else v
    try:
        cand = VectorField(n, tau, tuple(map(tuple, kap)), chi)
    except FieldError:
        return None
    eta = sp.sympify(R.eta)
    gamma = sk.simplify(sp.diff(eta, PSI), space)
    g0 = sk.simplify(gamma.subs(z), space)
    re_, im_ = sk.split_re_im(g0)
    if any(a._fname.endswith(("_re", "_im")) for a in sk.applied_atoms(re_ + im_)):
        return None
    cand = replace(cand, sigma=im_, zeta=re_)
    back = to_raw(cand)
    ok = all(sk.is_zero(p - q, space) for p, q in zip(back.xi, R.xi))
    ok = ok and sk.is_zero(back.eta - eta, space)
    return cand if ok else None


# ---------------------------------------------------------------- brackets


def structured_bracket(A: VectorField, B: VectorField) -> VectorField:
    """Bracket from the closed-form commutation relations of the span."""
    n = A.n
    d = lambda e: sp.diff(e, T)
    tau = A.tau * d(B.tau) - B.tau * d(A.tau)
    KA = sp.Matrix(A.kappa)
    KB = sp.Matrix(B.kappa)
    K = KB * KA - KA * KB
    cA = sp.Matrix(A.chi)
    cB = sp.Matrix(B.chi)
    chi = (A.tau * cB.diff(T) - d(A.tau) * cB / 2 - B.tau * cA.diff(T) + d(B.tau) * cA / 2
           + KB * cA - KA * cB)
    sigma = (A.tau * d(B.sigma) - B.tau * d(A.sigma)
             + sum(cA[i] * d(cB[i]) - cB[i] * d(cA[i]) for i in range(n)) / 2)
    zeta = A.tau * d(B.zeta) - B.tau * d(A.zeta)
    return VectorField(n, tau, tuple(tuple(K[a, b] for b in range(n)) for a in range(n)),
                       tuple(chi), sigma, zeta, _merge_rules(A.rules, B.rules))


def commutator(A, B, space=None, check: bool = False):
    """[A, B].  Structured inputs give a structured result; with
    ``check=True`` the raw componentwise bracket is recomputed and must
    agree."""
    if isinstance(A, VectorField) and isinstance(B, VectorField):
        sp_ = B.space(A.space(space))
        C = structured_bracket(A, B).canonical(sp_)
        if check:
            R = raw_bracket(to_raw(A), to_raw(B))
            rec = recognize(R, sp_)
            if rec is None or not (rec - C).is_zero(sp_):
                raise FieldError("raw and structured brackets disagree")
        return C
    RA = A if isinstance(A, RawField) else to_raw(A)
    RB = B if isinstance(B, RawField) else to_raw(B)
    R = raw_bracket(RA, RB)
    rec = recognize(R, space)
    if rec is None:
        warnings.warn("bracket not recognized as structured; returning raw field")
        return R
    return rec


# ---------------------------------------------------------------- prolongation


@dataclass(frozen=True)
class ProlongedField:
    base: RawField
    eta_t: sp.Expr
    eta_ab: dict

    def conj_t(self):
        return sk.conjugate(self.eta_t)

    def conj_ab(self, a, b):
        return sk.conjugate(self.eta_ab[tuple(sorted((a, b)))])


def prolong2(Q) -> ProlongedField:
    R = Q if isinstance(Q, RawField) else to_raw(Q)
    n = R.n
    Dt = lambda e: sk.total_derivative(e, 0, n)
    Dx = lambda e, a: sk.total_derivative(e, a, n)
    W = R.eta - R.tau * sk.jet((0,)) - sum(R.xi[a] * sk.jet((a + 1,)) for a in range(n))
    eta_t = Dt(W) + R.tau * sk.jet((0, 0)) + sum(R.xi[a] * sk.jet((0, a + 1)) for a in range(n))
    eta_ab = {}
    for a in range(1, n + 1):
        DaW = Dx(W, a)
        for b in range(a, n + 1):
            e = (Dx(DaW, b) + R.tau * sk.jet((0, a, b))
                 + sum(R.xi[c - 1] * sk.jet((a, b, c)) for c in range(1, n + 1)))
            eta_ab[(a, b)] = sp.expand(e)
    return ProlongedField(R, sp.expand(eta_t), eta_ab)


# ---------------------------------------------------------------- spans


@dataclass(frozen=True)
class Signature:
    r1: int
    k0: int
    k1: int
    k2: int
    k3: int

    @property
    def dim(self):
        return self.k0 + self.k1 + self.k2 + self.k3

    def as_tuple(self):
        return (self.r1, self.k0, self.k1, self.k2, self.k3)

    def violations(self, lam=None) -> list:
        out = []
        if self.r1 > self.k1:
            out.append("r1 <= k1")
        if self.r1 not in (0, 1, 2):
            out.append("r1 in {0,1,2}")
        if self.k2 not in (0, 1):
            out.append("k2 in {0,1}")
        if (self.r1 == 0) != (self.k1 == 0):
            out.append("r1 = 0 iff k1 = 0")
        if self.r1 == 1 and self.k2 != 0:
            out.append("r1 = 1 implies k2 = 0")
        if self.k1 == 3:
            out.append("k1 != 3")
        if (self.r1 == 2) != (self.k1 == 4):
            out.append("r1 = 2 iff k1 = 4")
        return out


@dataclass
class Span:
    basis: list
    cls: str = "Vf"
    n: int = 2
    space: sk.Space = field(default_factory=sk.Space)

    def full_space(self) -> sk.Space:
        s = self.space.copy()
        for q in self.basis:
            for r in q.rules:
                s.rules[r.name] = r
        return s


def _features(Q: VectorField, inst, ts):
    vals = []
    for p in Q.params():
        v = oracle.evaluate(p, inst, {T: ts})
        vals.append(np.broadcast_to(np.asarray(v, dtype=complex), ts.shape))
    return np.array(vals)  # (nparams, nt)


def _feature_layout(n):
    nk = n * (n - 1) // 2
    idx = {"tau": [0], "kappa": list(range(1, 1 + nk)),
           "chi": list(range(1 + nk, 1 + nk + n)),
           "sigma": [1 + nk + n], "zeta": [2 + nk + n]}
    return idx


def _sample_ts(inst, npoints=16, seed=0):
    rng = np.random.default_rng(seed + 7919)
    dom = inst.domain
    out = []
    while len(out) < npoints:
        t = rng.uniform(*dom.t_range)
        if any(abs(t - s) < dom.margin for s in dom.t_singular):
            continue
        out.append(t)
    return np.array(out)


def _realify(m):
    return np.concatenate([m.real, m.imag], axis=-1)


def _null_space(m, tol=oracle.RANK_TOL):
    if m.shape[1] == 0:
        return np.eye(m.shape[0])
    u, s, vh = np.linalg.svd(m)
    if s.size == 0 or s[0] == 0:
        return np.eye(m.shape[0])
    r = int(np.sum(s > tol * s[0]))
    return u[:, r:]


def span_matrix(s: Span, inst, ts=None):
    ts = _sample_ts(inst) if ts is None else ts
    F = np.array([_features(q, inst, ts) for q in s.basis])  # (dim, nparams, nt)
    return F, ts


def independent(s: Span, inst) -> bool:
    F, _ = span_matrix(s, inst)
    m = _realify(F.reshape(len(s.basis), -1))
    return oracle.numeric_rank(m) == len(s.basis)


def signature(s: Span, inst=None) -> Signature:
    """Invariant integers (r1, k0, k1, k2, k3) of a span."""
    if inst is None:
        inst = oracle.instantiate([], s.full_space(), {})
    dim = len(s.basis)
    F, ts = span_matrix(s, inst)
    lay = _feature_layout(s.n)
    log_class = s.cls == "P0"

    def inter_dim(out_keys):
        cols = [i for k in out_keys for i in lay[k]]
        sub = F[:, cols, :].reshape(dim, -1)
        return _null_space(_realify(sub)).shape[1], cols

    out0 = ["tau", "kappa", "chi"] + ([] if log_class else ["zeta"])
    out1 = ["tau", "kappa"] + ([] if log_class else ["zeta"])
    d0, _ = inter_dim(out0)
    d1, cols1 = inter_dim(out1)
    out2 = ["tau"]
    d2, _ = inter_dim(out2)
    k0 = d0
    k1 = d1 - d0
    k2 = d2 - d1
    k3 = dim - d2
    sub = F[:, cols1, :].reshape(dim, -1)
    N = _null_space(_realify(sub))
    r1 = 0
    if N.shape[1]:
        chi = np.einsum("dk,dpt->kpt", N, F[:, lay["chi"], :])  # (k, n, nt)
        r1 = max(oracle.numeric_rank(chi[:, :, j]) for j in range(len(ts)))
    return Signature(r1, k0, k1, k2, k3)


# ---------------------------------------------------------------- closure


@dataclass
class ClosureReport:
    closed: bool
    failures: list
    coefficients: dict
    methods: dict = field(default_factory=dict)


def _numeric_coeffs(target: VectorField, basis, inst, ts):
    """Least-squares constant coefficients, or None if target is not in the span."""
    dim = len(basis)
    Fb = np.array([_features(q, inst, ts) for q in basis]).reshape(dim, -1)
    Ft = _features(target, inst, ts).reshape(-1)
    A = _realify(Fb).T
    bvec = _realify(Ft[None, :])[0]
    c, *_ = np.linalg.lstsq(A, bvec, rcond=None)
    scale = max(1.0, float(np.max(np.abs(bvec))) if bvec.size else 1.0)
    if np.max(np.abs(A @ c - bvec)) > 1e-7 * scale:
        return None
    return c


def _expand_coeffs(target: VectorField, basis, sp_, inst, ts):
    """Constants c with target = sum c_i basis_i, certified symbolically."""
    c = _numeric_coeffs(target, basis, inst, ts)
    if c is None:
        return None
    support = [i for i in range(len(basis)) if abs(c[i]) > 1e-9]
    if not support and target.is_zero(sp_):
        return {}
    out = _certify(target, basis, support, sp_, inst, ts) if support else None
    if out is None:
        # coefficients may only be constant relative to a full fundamental set
        wider = list(range(len(basis)))
        if wider != support:
            out = _certify(target, basis, wider, sp_, inst, ts)
    if out is None:
        return None
    return {i: v for i, v in out.items() if v != 0}


class _Budget(BaseException):
    # BaseException so that broad ``except Exception`` inside sympy cannot swallow it
    pass


@contextmanager
def _time_limit(seconds):
    """Raise _Budget after `seconds` (main thread only; otherwise no limit)."""
    if not seconds or threading.current_thread() is not threading.main_thread():
        yield
        return

    def handler(signum, frame):
        raise _Budget()

    old = signal.signal(signal.SIGALRM, handler)
    # re-arm every 0.5 s in case a handler invocation is lost inside library code
    signal.setitimer(signal.ITIMER_REAL, seconds, 0.5)
    try:
        yield
    finally:
        signal.setitimer(signal.ITIMER_REAL, 0)
        signal.signal(signal.SIGALRM, old)


def _certify(target, basis, support, sp_, inst, ts):
    """Exact constant coefficients on ``support``, or None."""
    cs = sp.symbols(f"c0:{len(support)}")
    comb = target - sum((cs[j] * basis[i] for j, i in enumerate(support)), VectorField(target.n))
    rows = []
    for e in comb.params():
        e = sk.simplify(e, sp_)
        if e != 0:
            rows.append(e)
    system = list(rows)

    def numeric(M):
        env = {T: np.array([ts[3]])}
        return np.array([[complex(np.asarray(oracle.evaluate(M[i, j], inst, env)).ravel()[0])
                          for j in range(M.shape[1])] for i in range(M.shape[0])])

    k = 0
    while True:
        M, rhs = sp.linear_eq_to_matrix(system, cs)
        try:
            Mnum = numeric(M)
        except oracle.OracleError:
            return None
        if oracle.numeric_rank(_realify(Mnum)) == len(cs):
            break
        if k >= 3:
            return None
        rows = [sk.simplify(sp.diff(e, T), sp_) for e in rows]
        system = system + rows
        k += 1
    # choose independent rows numerically, then solve exactly
    chosen = []
    for i in range(M.shape[0]):
        trial = chosen + [i]
        if oracle.numeric_rank(_realify(Mnum[trial, :])) == len(trial):
            chosen = trial
        if len(chosen) == len(cs):
            break
    Ms = M.extract(chosen, list(range(len(cs))))
    rs = rhs.extract(chosen, [0])
    sol = Ms.LUsolve(rs)
    out = {}
    for j, i in enumerate(support):
        v = sp.cancel(sk.simplify(sol[j], sp_))
        if not sk.is_zero(sp.diff(v, T), sp_):
            return None
        out[i] = v
    resid = target - sum((out[i] * basis[i] for i in support), VectorField(target.n))
    if not resid.is_zero(sp_):
        return None
    return out


def closure_check(s: Span, inst=None, symmetry=None, budget: float | None = None) -> ClosureReport:
    """Every bracket re-expands in the basis with constant coefficients.

    Coefficients are certified exactly when possible.  If `budget` seconds
    run out and a `symmetry` predicate is given, a bracket is accepted when
    it satisfies the classifying condition exactly and re-expands
    numerically; such brackets are listed in `methods` as "symmetry".
    """
    sp_ = s.full_space()
    if inst is None:
        inst = oracle.instantiate([], sp_, {})
    ts = _sample_ts(inst)
    failures = []
    coeffs = {}
    methods = {}
    for i, j in itertools.combinations(range(len(s.basis)), 2):
        B = commutator(s.basis[i], s.basis[j], sp_)
        if B.is_zero(sp_):
            coeffs[(i, j)] = {}
            methods[(i, j)] = "zero"
            continue
        c = None
        try:
            with _time_limit(budget):
                c = _expand_coeffs(B, s.basis, sp_, inst, ts)
            methods[(i, j)] = "exact"
        except _Budget:
            num = _numeric_coeffs(B, s.basis, inst, ts)
            if num is not None and symmetry is not None and symmetry(B):
                c = {k: sp.Float(v, 12) for k, v in enumerate(num) if abs(v) > 1e-9}
                methods[(i, j)] = "symmetry"
        if c is None:
            failures.append((i, j, to_text(B)))
        else:
            coeffs[(i, j)] = c
    return ClosureReport(not failures, failures, coeffs, methods)


# ---------------------------------------------------------------- text


def to_text(Q: VectorField) -> str:
    parts = []
    n = Q.n
    if Q.tau != 0:
        parts.append(f"D({Q.tau})")
    for a in range(n):
        for b in range(a + 1, n):
            k = Q.kappa[b][a]
            if k != 0:
                parts.append(f"({k})*J{'' if n == 2 else f'({a + 1},{b + 1})'}")
    if any(c != 0 for c in Q.chi):
        parts.append("P(" + ", ".join(str(c) for c in Q.chi) + ")")
    if Q.sigma != 0:
        parts.append(f"({Q.sigma})*M")
    if Q.zeta != 0:
        parts.append(f"({Q.zeta})*I")
    return " + ".join(parts) if parts else "0"

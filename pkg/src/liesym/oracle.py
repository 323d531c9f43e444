"""Numeric oracle.

Abstract functions are replaced by concrete numeric evaluators: random
polynomials for free functions, closed forms or high-order Runge-Kutta
integration for functions constrained by rewrite rules.  Expressions are
evaluated directly from their (unsimplified) trees, vectorised over sample
points.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import sympy as sp
from scipy.integrate import solve_ivp

from . import symkernel as sk

RTOL = 1e-12
ATOL = 1e-14
RANK_TOL = 1e-8


class OracleError(Exception):
    pass


# ---------------------------------------------------------------- evaluators


class ClosedForm:
    """Evaluator for a sympy expression in dummy argument symbols."""

    def __init__(self, expr, args):
        self.expr = sp.sympify(expr)
        self.args = tuple(args)
        self._cache: dict = {}

    def derivative_expr(self, index):
        e = self.expr
        for v, k in zip(self.args, index):
            if k:
                e = sp.diff(e, v, k)
        return e

    def __call__(self, index, values, inst):
        fn = self._cache.get(index)
        if fn is None:
            fn = self.derivative_expr(index)
            self._cache[index] = fn
        env = dict(zip(self.args, values))
        return evaluate(fn, inst, env)


class ODEGroup:
    """Jointly integrated functions of t defined by rewrite rules."""

    def __init__(self, names, space, init, inst):
        self.names = list(names)
        self.space = space
        self.init = init
        self.orders = {nm: space.rules[nm].order for nm in self.names}
        self.slots = {}
        k = 0
        for nm in self.names:
            for j in range(self.orders[nm]):
                self.slots[(nm, j)] = k
                k += 1
        self.dim = k
        self.state_syms = [sp.Symbol(f"_y{i}") for i in range(k)]
        rhs = []
        for nm in self.names:
            for j in range(self.orders[nm] - 1):
                rhs.append(self.state_syms[self.slots[(nm, j + 1)]])
            rhs.append(self._to_state(space.rules[nm].rhs))
        self.rhs_exprs = rhs
        self.inst = inst
        self.span = (-2.5, 2.5)
        self._sol = None

    def _to_state(self, e):
        reps = {}
        for a in sk.applied_atoms(e):
            if a._fname in self.orders:
                if a.args != (sk.T,):
                    raise OracleError("rule right-hand side must be in t")
                reps[a] = self.state_syms[self.slots[(a._fname, a._index[0])]]
        return e.xreplace(reps)

    def _rhs(self, t, y):
        env = {sk.T: np.array([t])}
        for s, v in zip(self.state_syms, y):
            env[s] = np.array([v])
        out = np.empty(self.dim, dtype=complex)
        for i, e in enumerate(self.rhs_exprs):
            out[i] = evaluate(e, self.inst, env)[0]
        return out

    def _y0(self):
        y0 = np.zeros(self.dim, dtype=complex)
        for nm in self.names:
            vals = self.init.get(nm)
            if vals is None:
                vals = [0.0] * self.orders[nm]
            for j in range(self.orders[nm]):
                y0[self.slots[(nm, j)]] = complex(vals[j])
        return y0

    def _solve(self, lo, hi):
        y0 = self._y0()
        fwd = solve_ivp(self._rhs, (0.0, hi), y0, method="DOP853",
                        rtol=RTOL, atol=ATOL, dense_output=True)
        bwd = solve_ivp(self._rhs, (0.0, lo), y0, method="DOP853",
                        rtol=RTOL, atol=ATOL, dense_output=True)
        if not (fwd.success and bwd.success):
            raise OracleError("ODE integration failed")
        self._sol = (fwd.sol, bwd.sol)
        self.span = (lo, hi)

    def state(self, t):
        t = np.asarray(t, dtype=float)
        lo, hi = self.span
        if self._sol is None or t.size and (t.min() < lo or t.max() > hi):
            lo = min(lo, float(t.min()) - 0.5) if t.size else lo
            hi = max(hi, float(t.max()) + 0.5) if t.size else hi
            self._solve(lo, hi)
        fsol, bsol = self._sol
        out = np.empty((self.dim,) + t.shape, dtype=complex)
        pos = t >= 0
        if pos.any():
            out[:, pos] = fsol(t[pos])
        if (~pos).any():
            out[:, ~pos] = bsol(t[~pos])
        return out

    def evaluator(self, name):
        group = self

        def ev(index, values, inst):
            k = index[0]
            order = group.orders[name]
            if k < order:
                return group.state(np.real(values[0]))[group.slots[(name, k)]]
            atom = sk.fclass(name, (k,), True)(sk.T)
            reduced = group.space.reduce(atom)
            tval = np.real(values[0])
            return evaluate(reduced, inst, {sk.T: tval})

        return ev


@dataclass
class Domain:
    t_range: tuple = (-2.0, 2.0)
    x_range: tuple = (-2.0, 2.0)
    rho_range: tuple = (0.1, 3.0)
    t_singular: tuple = ()
    x_singular: tuple = ()   # callables x -> distance to singular set
    margin: float = 0.05


@dataclass
class NumericInstance:
    params: dict = field(default_factory=dict)
    funcs: dict = field(default_factory=dict)
    space: sk.Space = field(default_factory=sk.Space)
    domain: Domain = field(default_factory=Domain)
    seed: int = 0

    def call(self, node, values):
        ev = self.funcs.get(node._fname)
        if ev is None:
            raise OracleError(f"no evaluator for function {node._fname}")
        return ev(node._index, values, self)


# ---------------------------------------------------------------- evaluation

_UNARY = {
    sp.sin: np.sin, sp.cos: np.cos, sp.tan: np.tan, sp.exp: np.exp,
    sp.log: np.log, sp.atan: np.arctan, sp.sinh: np.sinh, sp.cosh: np.cosh,
    sp.tanh: np.tanh, sp.asin: np.arcsin, sp.acos: np.arccos,
}


def evaluate(e, inst: NumericInstance, env: dict):
    """Vectorised evaluation of a sympy tree."""
    memo: dict = {}

    def ev(node):
        key = node
        if key in memo:
            return memo[key]
        if node.is_Number:
            val = complex(node)
        elif node is sp.I:
            val = 1j
        elif node is sp.pi:
            val = np.pi
        elif node is sp.E:
            val = np.e
        elif isinstance(node, sp.Symbol):
            if node in env:
                val = env[node]
            elif node in inst.params:
                val = inst.params[node]
            elif node.name in inst.params:
                val = inst.params[node.name]
            else:
                raise OracleError(f"unbound symbol {node}")
        elif node.is_Add:
            val = 0
            for a in node.args:
                val = val + ev(a)
        elif node.is_Mul:
            val = 1
            for a in node.args:
                val = val * ev(a)
        elif node.is_Pow:
            b, x = ev(node.base), ev(node.exp)
            if node.exp.is_Integer:
                val = np.asarray(b, dtype=complex) ** int(node.exp)
            else:
                val = np.power(np.asarray(b, dtype=complex), x)
        elif isinstance(node, sk.Applied):
            val = inst.call(node, [ev(a) for a in node.args])
        elif isinstance(node, sp.conjugate):
            val = np.conj(ev(node.args[0]))
        elif isinstance(node, sp.Abs):
            val = np.abs(ev(node.args[0]))
        elif isinstance(node, sp.DiracDelta):
            # derivatives of sign(u): zero away from the excluded set u = 0
            u = np.real(ev(node.args[0]))
            val = np.where(u == 0, np.nan, 0.0)
        elif isinstance(node, sp.sign):
            val = np.sign(np.real(ev(node.args[0])))
        elif isinstance(node, sp.atan2):
            val = np.arctan2(np.real(ev(node.args[0])), np.real(ev(node.args[1])))
        elif isinstance(node, sp.re):
            val = np.real(ev(node.args[0]))
        elif isinstance(node, sp.im):
            val = np.imag(ev(node.args[0]))
        elif type(node) in _UNARY:
            val = _UNARY[type(node)](np.asarray(ev(node.args[0]), dtype=complex))
        elif isinstance(node, sp.Derivative):
            raise OracleError(f"unevaluated derivative {node}")
        else:
            raise OracleError(f"cannot evaluate {type(node).__name__}")
        memo[key] = val
        return val

    return ev(sp.sympify(e))


# ---------------------------------------------------------------- instantiate


def random_poly(rng, args, degree: int, complex_: bool, scale: float = 0.5):
    """Random polynomial of total degree <= degree in the dummy args."""
    terms = [sp.Integer(1)]
    for _ in range(degree):
        terms = sorted(set(sp.expand(a * m) for a in args for m in terms) | set(terms),
                       key=sp.default_sort_key)
    expr = 0
    for m in terms:
        c = rng.uniform(-1, 1)
        if complex_:
            c = complex(c, rng.uniform(-1, 1))
            expr += (sp.Float(c.real, 17) + sp.I * sp.Float(c.imag, 17)) * scale * m
        else:
            expr += sp.Float(c, 17) * scale * m
    return expr


@dataclass
class FunctionDecl:
    """How a function should be instantiated."""

    name: str
    nargs: int = 1
    real: bool = True
    kind: str = "poly"      # poly | positive | expr | ode
    degree: int = 3
    expr: str | None = None  # closed form in dummy args a0, a1, ...
    init: list | None = None


def dummy_args(k: int):
    return tuple(sp.Symbol(f"a{i}", real=True) for i in range(k))


def instantiate(decls, space: sk.Space, params: dict, seed: int = 0,
                domain: Domain | None = None) -> NumericInstance:
    """Numeric instance for a collection of function declarations."""
    rng = np.random.default_rng(seed)
    inst = NumericInstance(params=dict(params), space=space,
                           domain=domain or Domain(), seed=seed)
    ode_names = []
    inits = {}
    for d in decls:
        args = dummy_args(d.nargs)
        if d.name in space.rules:
            ode_names.append(d.name)
            if d.init is not None:
                inits[d.name] = d.init
            continue
        if d.kind == "expr":
            e = sp.sympify(d.expr, locals={f"a{i}": a for i, a in enumerate(args)})
            e = e.subs({sp.Symbol(str(k), real=True): v for k, v in params.items()
                        if isinstance(k, str)})
        elif d.kind == "positive":
            e = sp.exp(random_poly(rng, args, min(d.degree, 2), False, 0.3))
            if not d.real:
                e = e * (1 + sp.I * sp.Float(rng.uniform(-1, 1), 17))
        else:
            e = random_poly(rng, args, d.degree, not d.real)
        inst.funcs[d.name] = ClosedForm(e, args)
    for nm in space.rules:
        if nm not in ode_names and nm not in inst.funcs:
            ode_names.append(nm)
    if ode_names:
        _attach_odes(inst, ode_names, space, inits, rng)
    return inst


def _closed_form_2nd(name, rule, params, init):
    """theta_tt = c*theta with numeric constant c: closed form."""
    a = sk.rfunc(name, sk.T)
    c = sp.simplify(rule.rhs / a)
    if rule.order != 2 or c.free_symbols - set(params_syms(params)) or sk.applied_atoms(c):
        return None
    cval = complex(c.subs({s: v for s, v in params_items(params)}))
    if abs(cval.imag) > 0:
        return None
    c = cval.real
    y0, y1 = (float(init[0]), float(init[1])) if init else (1.0, 0.0)
    t = dummy_args(1)[0]
    if c > 0:
        w = sp.sqrt(sp.Float(c, 17))
        e = y0 * sp.cosh(w * t) + y1 * sp.sinh(w * t) / w
    elif c < 0:
        w = sp.sqrt(sp.Float(-c, 17))
        e = y0 * sp.cos(w * t) + y1 * sp.sin(w * t) / w
    else:
        e = y0 + y1 * t
    return ClosedForm(e, (t,))


def params_syms(params):
    return [k if isinstance(k, sp.Symbol) else sp.Symbol(k, real=True) for k in params]


def params_items(params):
    return [((k if isinstance(k, sp.Symbol) else sp.Symbol(k, real=True)), v)
            for k, v in params.items()]


def _attach_odes(inst, names, space, inits, rng, closed=True):
    remaining = []
    for nm in names:
        cf = _closed_form_2nd(nm, space.rules[nm], inst.params, inits.get(nm)) if closed else None
        if cf is not None:
            inst.funcs[nm] = cf
        else:
            remaining.append(nm)
    if not remaining:
        return
    for nm in remaining:
        if nm not in inits:
            order = space.rules[nm].order
            inits[nm] = list(rng.uniform(-1, 1, size=order))
    group = ODEGroup(remaining, space, inits, inst)
    for nm in remaining:
        inst.funcs[nm] = group.evaluator(nm)


# ---------------------------------------------------------------- sampling


def sample_points(inst: NumericInstance, npoints: int, n: int, rng, with_rho=True):
    """Random (t, x, rho) points avoiding declared singular sets."""
    dom = inst.domain
    out_t, out_x, out_r = [], [], []
    tries = 0
    while len(out_t) < npoints:
        tries += 1
        if tries > 100 * npoints + 1000:
            raise OracleError("singular sampling domain is empty")
        t = rng.uniform(*dom.t_range)
        if any(abs(t - s) < dom.margin for s in dom.t_singular):
            continue
        x = rng.uniform(*dom.x_range, size=n)
        if any(f(x) < dom.margin for f in dom.x_singular):
            continue
        out_t.append(t)
        out_x.append(x)
        out_r.append(rng.uniform(*dom.rho_range))
    env = {sk.T: np.array(out_t)}
    X = np.array(out_x)
    for a, s in enumerate(sk.xs(n)):
        env[s] = X[:, a]
    if with_rho:
        env[sk.RHO] = np.array(out_r)
    return env


def max_abs(expr, inst: NumericInstance, n: int, npoints: int = 100, seed: int = 0,
            extra_env: dict | None = None) -> float:
    rng = np.random.default_rng(seed)
    env = sample_points(inst, npoints, n, rng)
    if extra_env:
        env.update(extra_env)
    val = evaluate(expr, inst, env)
    val = np.broadcast_to(np.asarray(val, dtype=complex), (npoints,))
    if not np.all(np.isfinite(val)):
        raise OracleError("non-finite residual value")
    return float(np.max(np.abs(val))) if npoints else 0.0


def numeric_rank(matrix, tol: float = RANK_TOL) -> int:
    """Rank via singular values relative to the largest."""
    m = np.asarray(matrix, dtype=complex)
    if m.size == 0:
        return 0
    s = np.linalg.svd(m, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > tol * s[0]))


def function_rank(functions, inst: NumericInstance | None = None, samples=None,
                  npoints: int = 16, seed: int = 0) -> int:
    """Rank of a list of tuples of functions of t over the reals."""
    inst = inst or NumericInstance()
    if samples is None:
        rng = np.random.default_rng(seed)
        samples = rng.uniform(*inst.domain.t_range, size=npoints)
    samples = np.asarray(samples, dtype=float)
    rows = []
    for f in functions:
        comps = f if isinstance(f, (tuple, list)) else (f,)
        row = []
        for c in comps:
            v = evaluate(sp.sympify(c), inst, {sk.T: samples})
            row.append(np.broadcast_to(np.asarray(v, dtype=complex), samples.shape))
        rows.append(np.concatenate(row))
    m = np.array(rows)
    m = np.concatenate([m.real, m.imag], axis=1)
    return numeric_rank(m)


def numeric_residual(inst: NumericInstance, Q, e, npoints: int = 100, seed: int = 0) -> float:
    """Max |classifying residual| of Q for equation e over random points."""
    from .detsys import classifying_expr
    expr = classifying_expr(Q, e, canonical=False)
    return max_abs(expr, inst, e.n, npoints, seed)


def auto_instance(exprs, space: sk.Space | None = None, params: dict | None = None,
                  seed: int = 0, domain: Domain | None = None) -> NumericInstance:
    """Instance covering every abstract function and constant in ``exprs``.

    Unbound constants get random values in [0.5, 1.5]."""
    space = space or sk.Space()
    params = dict(params or {})
    rng = np.random.default_rng(seed + 104729)
    decls = {}
    syms = set()
    for e in exprs:
        e = sp.sympify(e)
        for a in sk.applied_atoms(e):
            decls.setdefault(a._fname, FunctionDecl(a._fname, len(a.args), a._real))
        syms |= {s for s in e.free_symbols if not sk.is_jet(s)}
    for r in space.rules.values():
        decls.setdefault(r.name, FunctionDecl(r.name, 1, True))
        for a in sk.applied_atoms(r.rhs):
            decls.setdefault(a._fname, FunctionDecl(a._fname, len(a.args), a._real))
        syms |= r.rhs.free_symbols
    bound = {k if isinstance(k, str) else k.name for k in params}
    for s in sorted(syms, key=lambda s: s.name):
        if s in (sk.T, sk.RHO) or s.name.startswith("x") and s.name[1:].isdigit():
            continue
        if s.name not in bound:
            params[s.name] = float(rng.uniform(0.5, 1.5))
    return instantiate(sorted(decls.values(), key=lambda d: d.name), space, params, seed, domain)

"""Exact expression layer.

Expressions are sympy trees.  On top of sympy this module adds

* named abstract functions whose derivatives are new named functions
  carrying a multi-index (so ``theta`` differentiated twice is the atom
  ``theta_2(t)``), with optional order-reducing rewrite rules;
* jet coordinates ``psi``, ``psic`` (the conjugate), ``psi_t``, ``psi_12`` ...
  and total derivatives acting on them;
* the sign symbol ``eps`` with ``eps**2 = 1``;
* an exact s-expression serialization.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction

import sympy as sp

T = sp.Symbol("t", real=True)
RHO = sp.Symbol("rho", positive=True)
EPS = sp.Symbol("eps", real=True, nonzero=True)
I = sp.I


class KernelError(Exception):
    pass


class UnknownSymbolError(KernelError):
    pass


class RuleCycleError(KernelError):
    pass


class NonPolynomialError(KernelError):
    pass


def xs(n: int) -> tuple:
    return tuple(sp.Symbol(f"x{a}", real=True) for a in range(1, n + 1))


def const(name: str) -> sp.Symbol:
    """A named real constant (kappa, alpha, mu, ...)."""
    return sp.Symbol(name, real=True)


# ---------------------------------------------------------------- functions


class Applied(sp.Function):
    """Application of a named abstract function.

    Class attributes: ``_fname`` base name, ``_index`` derivative multi-index,
    ``_real`` realness, ``_psi_slots`` positions of (psi, psic) arguments,
    ``_partner`` name of the conjugate function for complex functions of psi.
    """

    _fname = None
    _index: tuple = ()
    _real = False
    _psi_slots = None
    _partner = None

    @classmethod
    def eval(cls, *args):
        return None

    def fdiff(self, argindex=1):
        idx = list(self._index)
        idx[argindex - 1] += 1
        return fclass(self._fname, tuple(idx), self._real,
                      self._psi_slots, self._partner)(*self.args)

    def _eval_is_real(self):
        return True if self._real else None

    def _eval_conjugate(self):
        if self._psi_slots is None:
            return self if self._real else None
        i, j = self._psi_slots
        idx = list(self._index)
        idx[i], idx[j] = idx[j], idx[i]
        name = self._fname if self._real else self._partner
        partner_of = self._fname if not self._real else None
        return fclass(name, tuple(idx), self._real, self._psi_slots,
                      partner_of)(*self.args)

    @property
    def order(self) -> int:
        return sum(self._index)


_CLASSES: dict = {}


def fclass(name: str, index: tuple, real: bool = False, psi_slots=None,
           partner=None):
    key = (name, tuple(index))
    c = _CLASSES.get(key)
    if c is None:
        if any(index):
            suffix = "_" + "_".join(str(k) for k in index) if len(index) > 1 else "_" + str(index[0])
        else:
            suffix = ""
        c = type(name + suffix, (Applied,), {
            "_fname": name, "_index": tuple(index), "_real": bool(real),
            "_psi_slots": psi_slots, "_partner": partner,
            "nargs": len(index)})
        _CLASSES[key] = c
    elif c._real != bool(real):
        raise KernelError(f"function {name} redeclared with other realness")
    return c


def func(name: str, *args, real: bool = False, psi_slots=None, partner=None):
    return fclass(name, (0,) * len(args), real, psi_slots, partner)(*args)


def rfunc(name: str, *args):
    return func(name, *args, real=True)


def applied_atoms(e) -> set:
    return {a for a in sp.sympify(e).atoms(sp.Function) if isinstance(a, Applied)}


@dataclass(frozen=True)
class Rule:
    """``d^order f / dt^order = rhs`` for a function f of a single argument.

    ``rhs`` is written in terms of the symbol ``T``.
    """

    name: str
    order: int
    rhs: sp.Expr


@dataclass
class Space:
    """Rewrite rules of the abstract functions in scope."""

    rules: dict = field(default_factory=dict)

    def add_rule(self, name: str, order: int, rhs) -> None:
        rhs = sp.sympify(rhs)
        self.rules[name] = Rule(name, order, rhs)
        self._check_order()

    def _check_order(self):
        for r in self.rules.values():
            for a in applied_atoms(r.rhs):
                if a._fname in self.rules and a.order >= self.rules[a._fname].order:
                    raise RuleCycleError(f"rule for {r.name} is not order reducing")
                if a._fname == r.name and a.order >= r.order:
                    raise RuleCycleError(f"rule for {r.name} is not order reducing")

    def copy(self) -> "Space":
        return Space(dict(self.rules))

    def merged(self, other: "Space | None") -> "Space":
        s = self.copy()
        if other is not None:
            s.rules.update(other.rules)
        return s

    def reduce(self, e, max_rounds: int = 200):
        """Apply the rewrite rules to a fixpoint."""
        e = sp.sympify(e)
        if not self.rules:
            return e
        for _ in range(max_rounds):
            reps = {}
            for a in applied_atoms(e):
                r = self.rules.get(a._fname)
                if r is None or len(a.args) != 1 or a._index[0] < r.order:
                    continue
                k = a._index[0] - r.order
                body = sp.diff(r.rhs, T, k) if k else r.rhs
                reps[a] = body.xreplace({T: a.args[0]}) if a.args[0] != T else body
            if not reps:
                return e
            e = e.xreplace(reps)
        raise RuleCycleError("rewrite rules did not reach a fixpoint")


EMPTY = Space()

# ---------------------------------------------------------------- jets

_JET_RE = re.compile(r"^psi(c?)(?:_(t*)(\d*))?$")


def jet(counts=(), conj: bool = False, n: int | None = None) -> sp.Symbol:
    """Jet symbol.  ``counts`` lists the differentiation variables, 0 for t
    and a for x_a, e.g. ``(0, 1)`` is psi_t1."""
    counts = sorted(counts)
    nt = counts.count(0)
    xa = "".join(str(c) for c in counts if c)
    name = "psic" if conj else "psi"
    if counts:
        name += "_" + "t" * nt + xa
    return sp.Symbol(name)


def jet_parse(sym) -> tuple | None:
    m = _JET_RE.match(getattr(sym, "name", ""))
    if not m:
        return None
    conj = m.group(1) == "c"
    counts = [0] * len(m.group(2) or "") + [int(c) for c in (m.group(3) or "")]
    return tuple(sorted(counts)), conj


PSI = jet()
PSIC = jet(conj=True)


def is_jet(sym) -> bool:
    return isinstance(sym, sp.Symbol) and jet_parse(sym) is not None


def jets_in(e) -> list:
    return sorted((s for s in sp.sympify(e).free_symbols if is_jet(s)), key=lambda s: s.name)


def total_derivative(e, mu: int, n: int):
    """D_mu e; mu = 0 for t, a for x_a."""
    var = T if mu == 0 else xs(n)[mu - 1]
    out = sp.diff(e, var)
    for s in jets_in(e):
        counts, conj = jet_parse(s)
        out += jet(counts + (mu,), conj) * sp.diff(e, s)
    return out


# ---------------------------------------------------------------- ops


def _is_declared_variable(v) -> bool:
    if not isinstance(v, sp.Symbol):
        return False
    if v in (T, RHO) or is_jet(v):
        return True
    return re.fullmatch(r"x\d+", v.name) is not None


def differentiate(e, v, space: Space | None = None, total: bool = False, n: int | None = None):
    """Partial (or, with ``total=True``, total) derivative followed by
    rule reduction and canonicalisation."""
    if not _is_declared_variable(v):
        raise UnknownSymbolError(f"not a variable: {v}")
    if total:
        if v == T:
            mu = 0
        elif is_jet(v) or v == RHO:
            raise UnknownSymbolError(f"total derivative needs t or x_a, got {v}")
        else:
            mu = int(v.name[1:])
        nn = n if n is not None else max(mu, 1)
        d = total_derivative(e, mu, nn)
    else:
        d = sp.diff(e, v)
    return simplify(d, space)


def _eps_rule(e):
    if not e.has(EPS):
        return e
    return e.replace(lambda z: z.is_Pow and z.base == EPS and z.exp.is_Integer,
                     lambda z: EPS ** (int(z.exp) % 2))


def simplify(e, space: Space | None = None):
    """Canonical form: rule fixpoint, eps**2 = 1, fully expanded sum."""
    e = sp.sympify(e)
    sp_ = space or EMPTY
    prev = None
    while prev != e:
        prev = e
        e = sp_.reduce(e)
        e = sp.expand(e)
        e = _eps_rule(e)
    return e


def _trig_to_exp(e):
    return e.replace(
        lambda z: isinstance(z, (sp.sin, sp.cos, sp.tan)),
        lambda z: z.rewrite(sp.exp))


def is_zero(e, space: Space | None = None) -> bool:
    """Exact zero test: canonical form, then trig-to-exponential and
    clearing of denominators when needed."""
    e = simplify(e, space)
    if e == 0:
        return True
    e0 = e
    e2 = sp.expand(sp.powsimp(sp.expand(_trig_to_exp(e))))
    if e2 == 0:
        return True
    num = sp.numer(sp.together(e2))
    num = sp.expand(sp.powsimp(sp.expand(num)))
    if num == 0:
        return True
    num = _eps_rule(num)
    if sp.expand(num) == 0:
        return True
    split = _sign_branches(e0)
    if split is not None:
        return all(is_zero(b, space) for b in split)
    return sp.simplify(e0) == 0


def _sign_branches(e):
    """Replace Abs/sign of one real symbol by its two sign branches."""
    for a in e.atoms(sp.Abs, sp.sign):
        s = a.args[0]
        if isinstance(s, sp.Symbol) and s.is_real and s.is_positive is None:
            p = sp.Dummy(s.name, positive=True)
            return [e.subs(s, sgn * p) for sgn in (1, -1)]
    return None


def conjugate(e):
    """Complex conjugation; jets psi <-> psic swap, real atoms fixed."""
    e = sp.conjugate(sp.sympify(e))
    reps = {}
    for c in e.atoms(sp.conjugate):
        a = c.args[0]
        if is_jet(a):
            counts, conj = jet_parse(a)
            reps[c] = jet(counts, not conj)
    if reps:
        e = e.xreplace(reps)
    return e


def substitute(e, binding: dict, space: Space | None = None):
    """Simultaneous substitution.

    Keys are symbols (mapped to expressions) or function names (mapped to
    ``sp.Lambda`` objects); derivative atoms of a substituted function are
    replaced by the corresponding derivatives of the lambda body.
    """
    e = sp.sympify(e)
    fun_b = {k: v for k, v in binding.items() if isinstance(k, str)}
    sym_b = {k: sp.sympify(v) for k, v in binding.items() if not isinstance(k, str)}
    if fun_b:
        reps = {}
        for a in applied_atoms(e):
            lam = fun_b.get(a._fname)
            if lam is None:
                continue
            if not isinstance(lam, sp.Lambda):
                lam = sp.Lambda(T, sp.sympify(lam))
            vars_ = lam.variables
            if len(vars_) != len(a.args):
                raise KernelError(f"signature mismatch substituting {a._fname}")
            body = lam.expr
            for var, k in zip(vars_, a._index):
                if k:
                    body = sp.diff(body, var, k)
            reps[a] = body.xreplace(dict(zip(vars_, a.args)))
        e = e.xreplace(reps)
    if sym_b:
        e = e.subs(sym_b, simultaneous=True)
    return simplify(e, space)


def collect(e, atoms) -> dict:
    """Map monomial -> coefficient for e polynomial in ``atoms``."""
    e = sp.expand(sp.sympify(e))
    if e == 0:
        return {}
    atoms = list(atoms)
    out: dict = {}
    for term in sp.Add.make_args(e):
        mono = sp.Integer(1)
        coeff = []
        for f in sp.Mul.make_args(term):
            base, ex = f.as_base_exp()
            if base in atoms:
                if not (ex.is_Integer and ex > 0):
                    raise NonPolynomialError(f"non-polynomial in {base}")
                mono *= f
            else:
                if f.free_symbols & set(atoms):
                    raise NonPolynomialError(f"non-polynomial dependence: {f}")
                coeff.append(f)
        out[mono] = out.get(mono, 0) + sp.Mul(*coeff)
    return {k: v for k, v in out.items() if sp.expand(v) != 0}


def split_re_im(e) -> tuple:
    """Real and imaginary parts of an expression whose atoms are real,
    except for complex abstract functions which are split into
    ``name_re`` / ``name_im`` real functions."""
    e = sp.sympify(e)
    reps = {}
    for a in applied_atoms(e):
        if not a._real:
            re_ = fclass(a._fname + "_re", a._index, True)(*a.args)
            im_ = fclass(a._fname + "_im", a._index, True)(*a.args)
            reps[a] = re_ + I * im_
    e = e.xreplace(reps)
    e = sp.expand(e.replace(lambda z: isinstance(z, sp.conjugate),
                            lambda z: sp.expand(_conj_real_split(z.args[0]))))
    j = sp.Dummy("j")
    e = sp.expand(e.xreplace({I: j}))
    p = sp.Poly(e, j) if e.has(j) else None
    if p is None:
        return e, sp.Integer(0)
    re_part, im_part = sp.Integer(0), sp.Integer(0)
    for (k,), c in p.terms():
        val = c * [1, I, -1, -I][k % 4]
        if k % 2 == 0:
            re_part += val
        else:
            im_part += val / I
    return sp.expand(re_part), sp.expand(im_part)


def _conj_real_split(e):
    return e.xreplace({I: -I})


# ---------------------------------------------------------------- serialization

_FUNS = {
    "sin": sp.sin, "cos": sp.cos, "tan": sp.tan, "exp": sp.exp, "log": sp.log,
    "atan": sp.atan, "Abs": sp.Abs, "conjugate": sp.conjugate, "sign": sp.sign,
    "atan2": sp.atan2, "sqrt": sp.sqrt,
}


def _sym_from_name(name: str) -> sp.Symbol:
    if name == "t":
        return T
    if name == "rho":
        return RHO
    if name == "eps":
        return EPS
    if _JET_RE.match(name):
        return sp.Symbol(name)
    return sp.Symbol(name, real=True)


def _atom_rank(e) -> tuple:
    if e.is_Number:
        return (0, "")
    if e == I:
        return (1, "")
    if isinstance(e, sp.Symbol):
        if e == T:
            return (2, "")
        if re.fullmatch(r"x\d+", e.name):
            return (3, e.name)
        if e == RHO:
            return (4, "")
        if is_jet(e):
            return (5, e.name)
        return (4, e.name)
    if isinstance(e, Applied):
        return (6, e._fname, e.order)
    return (7,)


def to_sexpr(e) -> str:
    e = sp.sympify(e)
    if e.is_Integer:
        return str(int(e))
    if e.is_Rational:
        return f"{e.p}/{e.q}"
    if e == I:
        return "I"
    if e is sp.pi:
        return "pi"
    if e is sp.E:
        return "E"
    if isinstance(e, sp.Symbol):
        return e.name
    if isinstance(e, Applied):
        flag = "r" if e._real else "c"
        if e._psi_slots is not None:
            flag += ":" + ",".join(map(str, e._psi_slots)) + ":" + (e._partner or "")
        idx = ",".join(map(str, e._index))
        return "(fn " + " ".join([e._fname, idx, flag] + [to_sexpr(a) for a in e.args]) + ")"
    if e.is_Add or e.is_Mul:
        op = "+" if e.is_Add else "*"
        parts = sorted(e.args, key=lambda z: (_atom_rank(z), to_sexpr(z)))
        return "(" + op + " " + " ".join(to_sexpr(a) for a in parts) + ")"
    if e.is_Pow:
        return f"(^ {to_sexpr(e.base)} {to_sexpr(e.exp)})"
    name = type(e).__name__
    if name in _FUNS:
        return "(" + name + " " + " ".join(to_sexpr(a) for a in e.args) + ")"
    raise KernelError(f"cannot serialize {e!r}")


def _tokenize(s: str) -> list:
    return re.findall(r"\(|\)|[^\s()]+", s)


def from_sexpr(s: str):
    toks = _tokenize(s)
    pos = 0

    def parse():
        nonlocal pos
        tok = toks[pos]
        pos += 1
        if tok == "(":
            head = toks[pos]
            pos += 1
            if head == "fn":
                name, idx, flag = toks[pos], toks[pos + 1], toks[pos + 2]
                pos += 3
                args = []
                while toks[pos] != ")":
                    args.append(parse())
                pos += 1
                index = tuple(int(k) for k in idx.split(","))
                parts = flag.split(":")
                slots = tuple(int(k) for k in parts[1].split(",")) if len(parts) > 1 else None
                partner = parts[2] or None if len(parts) > 2 else None
                return fclass(name, index, parts[0] == "r", slots, partner)(*args)
            args = []
            while toks[pos] != ")":
                args.append(parse())
            pos += 1
            if head == "+":
                return sp.Add(*args)
            if head == "*":
                return sp.Mul(*args)
            if head == "^":
                return sp.Pow(*args)
            if head in _FUNS:
                return _FUNS[head](*args)
            raise KernelError(f"unknown operator {head}")
        if re.fullmatch(r"-?\d+(/\d+)?", tok):
            f = Fraction(tok)
            return sp.Rational(f.numerator, f.denominator)
        if tok == "I":
            return I
        if tok == "pi":
            return sp.pi
        if tok == "E":
            return sp.E
        return _sym_from_name(tok)

    out = parse()
    if pos != len(toks):
        raise KernelError("trailing tokens in s-expression")
    return out

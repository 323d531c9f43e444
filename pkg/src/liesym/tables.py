"""Encoded classification cases and the verification pipeline over them."""

from __future__ import annotations

import os
import re
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import sympy as sp
import yaml
from sympy.parsing.sympy_parser import parse_expr, standard_transformations

from . import equivgroup as eg
from . import fields as fl
from . import oracle
from . import symkernel as sk
from .classes import MembershipError, build_equation
from .detsys import AdmissibilityError, classifying_expr, classifying_residual
from .symkernel import RHO, T

THEOREMS = {"vf": "Vf", "log": "Log", "power": "Power"}
NUMERIC_TOL = 1e-9
SENSITIVITY_TOL = 1e-6
CLOSURE_BUDGET = 2.0
PERTURBATION = "(1 + I)*(x1 + x1*x2/2 + t*x2/3)/100"


class CaseFileError(Exception):
    def __init__(self, msg, path=None, line=None, col=None):
        self.path, self.line, self.col = path, line, col
        where = f"{path}:{line}:{col}: " if path is not None and line is not None else ""
        super().__init__(where + msg)


def case_dir() -> Path:
    env = os.environ.get("LIESYM_CASE_DIR")
    return Path(env) if env else Path(__file__).parent / "cases"


# ---------------------------------------------------------------- loading


class _LineLoader(yaml.SafeLoader):
    pass


def _mapping_with_marks(loader, node, deep=False):
    m = loader.construct_mapping(node, deep=True)
    m["__line__"] = node.start_mark.line + 1
    m["__col__"] = node.start_mark.column + 1
    return m


_LineLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _mapping_with_marks)


@dataclass
class ClassificationCase:
    theorem: str
    cls: str
    case_id: str
    potential: str
    basis: list
    signature: tuple
    functions: dict = field(default_factory=dict)
    constants: list = field(default_factory=list)
    coords: dict = field(default_factory=dict)
    constraints: list = field(default_factory=list)
    basis_lam2: list | None = None
    signature_lam2: tuple | None = None
    h0: list | None = None
    samples: list = field(default_factory=list)
    singular: dict = field(default_factory=dict)
    maximality: str = ""
    subsumes: list = field(default_factory=list)
    maps_to: dict | None = None
    branches: list | None = None
    remark: bool = False
    n: int = 2
    f: str | None = None
    delta: str | None = None
    lams: tuple = ()
    source: tuple = ("", 0, 0)

    @property
    def key(self) -> str:
        return f"{self.theorem} {self.case_id}"

    def expected(self, lam=None, branch=None):
        """(basis strings, signature) for a variant."""
        if branch is not None:
            b = self.branches[branch]
            return b.get("basis", self.basis), tuple(b.get("signature", self.signature))
        if lam is not None and sp.sympify(lam) == 2 and self.basis_lam2 is not None:
            return self.basis_lam2, tuple(self.signature_lam2)
        return self.basis, tuple(self.signature)

    def dimension(self, lam=None, branch=None) -> int:
        return len(self.expected(lam, branch)[0])

    def variants(self) -> list:
        if self.cls == "Plam":
            return [Variant(lam=sp.Rational(l)) for l in self.lams]
        if self.branches:
            return [Variant(branch=i) for i in range(len(self.branches))]
        return [Variant()]


@dataclass(frozen=True)
class Variant:
    lam: sp.Expr | None = None
    branch: int | None = None

    def label(self, case: ClassificationCase | None = None) -> str:
        if self.lam is not None:
            return f"lam={self.lam}"
        if self.branch is not None and case is not None:
            return case.branches[self.branch]["when"].replace(" ", "")
        return ""


def _strip(d):
    return {k: v for k, v in d.items() if not str(k).startswith("__")}


def load_theorem(name: str, directory: Path | None = None) -> list:
    key = name.lower()
    if key not in THEOREMS:
        raise CaseFileError(f"unknown theorem {name!r}")
    path = (directory or case_dir()) / f"{key}.yaml"
    try:
        text = path.read_text()
    except OSError as exc:
        raise CaseFileError(f"cannot read case file: {exc}", path) from exc
    try:
        doc = yaml.load(text, Loader=_LineLoader)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        raise CaseFileError(str(exc.problem), path, mark.line + 1, mark.column + 1) from exc
    if not isinstance(doc, dict) or "cases" not in doc:
        raise CaseFileError("case file needs a top-level 'cases' list", path, 1, 1)
    cases = []
    for raw in doc["cases"]:
        where = (str(path), raw.get("__line__", 0), raw.get("__col__", 0))
        try:
            c = ClassificationCase(
                theorem=doc["theorem"], cls=doc["class"], case_id=str(raw["id"]),
                potential=str(raw.get("potential", "")),
                basis=list(raw.get("basis", [])),
                signature=tuple(raw.get("signature", ())),
                functions={k: _strip(v) if isinstance(v, dict) else v
                           for k, v in _strip(raw.get("functions", {})).items()},
                constants=list(raw.get("constants", [])),
                coords={**_strip(doc.get("coords", {})), **_strip(raw.get("coords", {}))},
                constraints=list(raw.get("constraints", [])),
                basis_lam2=raw.get("basis_lam2"),
                signature_lam2=tuple(raw["signature_lam2"]) if "signature_lam2" in raw else None,
                h0=raw.get("h0"),
                samples=[_strip(s) for s in raw.get("samples", doc.get("samples", []))],
                singular=_strip(raw.get("singular", {})),
                maximality=str(raw.get("maximality", "")),
                subsumes=[_strip(s) for s in raw.get("subsumes", [])],
                maps_to=_strip(raw["maps_to"]) if "maps_to" in raw else None,
                branches=[_strip(b) for b in raw["branches"]] if "branches" in raw else None,
                remark=bool(raw.get("remark", False)),
                n=int(doc.get("n", 2)), f=doc.get("f"), delta=doc.get("delta"),
                lams=tuple(doc.get("lam", ())), source=where)
        except (KeyError, TypeError, ValueError) as exc:
            raise CaseFileError(f"malformed case entry: {exc}", *where) from exc
        if c.maps_to is not None:
            c.maps_to = {k: _strip(v) if isinstance(v, dict) else v for k, v in c.maps_to.items()}
        if len(c.samples) < 3:
            raise CaseFileError("three parameter samples are required", *where)
        _check_case(c)
        cases.append(c)
    return cases


def _check_case(c: ClassificationCase):
    """Static invariants of a case entry."""
    variants = [(None, i) for i in range(len(c.branches))] if c.branches else [(None, None)]
    if c.basis_lam2 is not None:
        variants.append((2, None))
    for lam, br in variants:
        basis, sig = c.expected(lam, br)
        if len(sig) != 5:
            raise CaseFileError(f"case {c.case_id}: signature needs five integers", *c.source)
        if len(basis) != sum(sig[1:]):
            raise CaseFileError(f"case {c.case_id}: basis length {len(basis)} differs from "
                                f"k0+k1+k2+k3 = {sum(sig[1:])}", *c.source)


_REGISTRY: dict = {}


def registry(directory: Path | None = None) -> dict:
    """theorem -> list of cases (cached per directory)."""
    d = directory or case_dir()
    key = str(d)
    if key not in _REGISTRY:
        _REGISTRY[key] = {THEOREMS[k]: load_theorem(k, d) for k in THEOREMS}
    return _REGISTRY[key]


def get_case(theorem: str, case_id: str, directory: Path | None = None) -> ClassificationCase:
    th = THEOREMS.get(theorem.lower(), theorem)
    for c in registry(directory).get(th, []):
        if c.case_id == str(case_id):
            return c
    raise KeyError(f"no case {case_id} in theorem {theorem}")


# ---------------------------------------------------------------- building

_TRANS = standard_transformations
_GLOBAL = {"Integer": sp.Integer, "Float": sp.Float, "Rational": sp.Rational,
           "Symbol": sp.Symbol, "Function": sp.Function}
_FUNCS = {"sqrt": sp.sqrt, "exp": sp.exp, "log": sp.log, "cos": sp.cos, "sin": sp.sin,
          "tan": sp.tan, "atan2": sp.atan2, "Abs": sp.Abs, "diff": sp.diff,
          "Rational": sp.Rational, "pi": sp.pi, "E": sp.E, "Lambda": sp.Lambda}
_SINGULAR = {"r": lambda x: float(np.hypot(x[0], x[1])), "x1": lambda x: abs(x[0]),
             "x2": lambda x: abs(x[1])}


def _parse(text, ns, where, allowed=None):
    try:
        out = parse_expr(str(text), local_dict=dict(ns), global_dict=dict(_GLOBAL),
                         transformations=_TRANS)
    except Exception as exc:
        raise CaseFileError(f"cannot parse {text!r}: {exc}", *where) from exc
    if allowed is not None:
        syms = out.free_symbols if isinstance(out, sp.Basic) else set().union(
            *[sp.sympify(p).free_symbols for p in out.params()])
        bad = sorted(s.name for s in syms if s not in allowed)
        if bad:
            raise CaseFileError(f"unknown names {bad} in {text!r}", *where)
    return out


@dataclass
class BuiltCase:
    case: ClassificationCase
    variant: Variant
    e: object
    basis: list
    span: fl.Span
    decls: list
    params: dict
    potential: sp.Expr
    ns: dict

    def instance(self, k: int = 0, seed: int = 0) -> oracle.NumericInstance:
        vals = self.case.samples[k % len(self.case.samples)]
        params = {name: float(vals[name]) for name in self.case.constants if name in vals}
        dom = oracle.Domain(t_singular=tuple(float(v) for v in self.case.singular.get("t", [])),
                            x_singular=tuple(_SINGULAR[s] for s in self.case.singular.get("x", [])))
        return oracle.instantiate(self.decls, self.span.full_space(), params, seed + 1000 * k, dom)


def _namespace(case: ClassificationCase, variant: Variant):
    x = sk.xs(case.n)
    ns = dict(_FUNCS)
    ns.update({"t": T, "rho": RHO, "I": sp.I})
    for a, s in enumerate(x):
        ns[f"x{a + 1}"] = s
    allowed = {T, RHO, *x}
    if case.cls == "Plam":
        lam = variant.lam
        ns["lam"] = lam
        ns["lamp"] = 1 / lam - sp.Rational(case.n, 4)
    delta = None
    if case.cls in ("P0", "Plam"):
        dtext = case.delta
        if variant.branch is not None:
            dtext = case.branches[variant.branch].get("delta", dtext)
        delta = sp.nsimplify(sp.sympify(dtext))
        ns["delta"] = delta
        ns["d1"], ns["d2"] = sp.re(delta), sp.im(delta)
    for c in case.constants:
        ns[c] = sk.const(c)
        allowed.add(ns[c])
    for name, spec in case.functions.items():
        spec = spec or {}
        real = bool(spec.get("real", False))
        ns[name] = (lambda nm, rl: (lambda *args: sk.func(nm, *args, real=rl)))(name, real)
    ns["r"] = sp.sqrt(x[0] ** 2 + x[1] ** 2)
    ns["phi"] = sp.atan2(x[1], x[0])
    return ns, allowed, delta


def _bind(ns, binding, allowed, where, functions):
    """Function names bound to expressions in dummy args a0, a1, ..."""
    out = {}
    for name, text in binding.items():
        k = int((functions.get(name) or {}).get("args", 1))
        dummies = oracle.dummy_args(max(k, 4))
        local = dict(ns)
        local.update({f"a{i}": d for i, d in enumerate(dummies)})
        e = _parse(text, local, where, allowed | set(dummies[:k]))
        out[name] = sp.Lambda(dummies[:k], e)
    return out


def build(case: ClassificationCase, variant: Variant | None = None, binding=None) -> BuiltCase:
    variant = variant or case.variants()[0]
    where = case.source
    ns, allowed, delta = _namespace(case, variant)
    if binding:
        ns.update(_bind(ns, binding, allowed, where, case.functions))
    for name, text in case.coords.items():
        ns[name] = _parse(text, ns, where)
    potential_text = case.potential
    h0_text = case.h0
    if variant.branch is not None:
        br = case.branches[variant.branch]
        potential_text = br.get("potential", potential_text)
        h0_text = br.get("h0", h0_text)
    V = _parse(potential_text, ns, where, allowed)
    space = sk.Space()
    decls = []
    for name, spec in case.functions.items():
        spec = spec or {}
        if binding and name in binding:
            continue
        real = bool(spec.get("real", False))
        nargs = int(spec.get("args", 1))
        if "rule" in spec:
            rhs = _parse(spec["rule"], ns, where, allowed)
            space.add_rule(name, int(spec.get("order", 2)), rhs)
        decls.append(oracle.FunctionDecl(name, nargs, real, spec.get("kind", "poly"),
                                         int(spec.get("degree", 3)), None, spec.get("init")))
    h0 = [_parse(h, ns, where, allowed) for h in h0_text] if h0_text else None
    counter = [0]

    def Pp(*chi):
        counter[0] += 1
        d = delta if delta is not None else 0
        return fl.Pprime(chi, h0, sp.re(d), sp.im(d), name=f"zh{counter[0]}", n=case.n)

    bns = dict(ns)
    bns.update({"M": fl.Mgen(n=case.n), "J": fl.J(n=case.n), "I": fl.Igen(n=case.n),
                "D": lambda tau: fl.D(tau, case.n), "P": lambda *c: fl.P(*c, n=case.n),
                "Pp": Pp})
    if case.cls == "P0":
        bns["Ip"] = fl.Iprime(sp.re(delta), sp.im(delta), case.n)
    if case.cls == "Plam":
        bns["Dl"] = lambda tau: fl.Dlam(tau, variant.lam, case.n)
    btexts, _ = case.expected(variant.lam, variant.branch)
    basis = []
    for text in btexts:
        q = _parse(text, bns, where)
        if not isinstance(q, fl.VectorField):
            raise CaseFileError(f"basis entry {text!r} is not a vector field", *where)
        basis.append(replace(q, label=str(text)))
    elements = {"V": V}
    if case.cls == "Vf":
        elements["f"] = _parse(case.f, ns, where)
    if case.cls in ("P0", "Plam"):
        elements["delta"] = delta
    if case.cls == "Plam":
        elements["lam"] = variant.lam
    e = build_equation(case.cls, elements, case.n, space, check=False)
    span = fl.Span(basis, case.cls, case.n, space)
    return BuiltCase(case, variant, e, basis, span, decls, {}, V, ns)


# ---------------------------------------------------------------- verification


@dataclass
class CheckResult:
    passed: bool
    detail: str = ""

    def as_dict(self):
        return {"passed": self.passed, "detail": self.detail}


@dataclass
class CaseReport:
    theorem: str
    case_id: str
    variant: str
    checks: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    seed: int = 0
    signature: tuple = ()
    dimension: int = 0

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(c.passed for c in self.checks.values())

    @property
    def key(self) -> str:
        return f"{self.theorem} {self.case_id}" + (f" [{self.variant}]" if self.variant else "")

    def add(self, name, ok, detail="", failure=None):
        self.checks[name] = CheckResult(bool(ok), detail)
        if not ok and failure is not None:
            self.failures.append({"check": name, **failure})

    def as_dict(self, timings=False):
        d = {"theorem": self.theorem, "case": self.case_id, "variant": self.variant,
             "passed": self.passed, "seed": self.seed, "dimension": self.dimension,
             "signature": list(self.signature),
             "checks": {k: v.as_dict() for k, v in sorted(self.checks.items())},
             "failures": self.failures}
        if timings:
            d["timings"] = {k: round(v, 3) for k, v in sorted(self.timings.items())}
        return d


SYMBOLIC_CHECKS = ("membership", "residuals_zero", "closure", "signature", "independence")
NUMERIC_CHECKS = ("numeric", "sensitivity")


def verify_case(c: ClassificationCase, variant: Variant | None = None, seed: int = 0,
                checks: str = "both") -> CaseReport:
    """Run the case checks; failures land in the report."""
    variant = variant or c.variants()[0]
    rep = CaseReport(c.theorem, c.case_id, variant.label(c), seed=seed)
    clock = time.perf_counter()
    try:
        b = build(c, variant)
    except (CaseFileError, MembershipError, sk.KernelError) as exc:
        rep.add("build", False, str(exc), {"error": str(exc)})
        return rep
    rep.timings["build"] = time.perf_counter() - clock
    _, sig_expected = c.expected(variant.lam, variant.branch)
    rep.dimension = len(b.basis)
    lam = variant.lam
    sig_viol = fl.Signature(*sig_expected).violations(lam)
    rep.add("expected_signature_lemmas", not sig_viol, "; ".join(sig_viol))
    symbolic = checks in ("symbolic", "both")
    numeric = checks in ("numeric", "both")

    def timed(name, fn):
        t0 = time.perf_counter()
        try:
            fn()
        except Exception as exc:  # a crash in one check must not hide the others
            rep.add(name, False, f"{type(exc).__name__}: {exc}", {"error": repr(exc)})
        rep.timings[name] = time.perf_counter() - t0

    inst0 = None

    def inst(k):
        return b.instance(k, seed)

    def membership():
        elements = {"V": b.e.V}
        if c.cls == "Vf":
            elements["f"] = b.e.f
        if c.cls in ("P0", "Plam"):
            elements["delta"] = b.e.delta
        if c.cls == "Plam":
            elements["lam"] = b.e.lam
        build_equation(c.cls, elements, c.n, b.e.space, check=True)
        rep.add("membership", True, c.cls)

    def residuals():
        bad = []
        for q in b.basis:
            try:
                r = classifying_residual(q, b.e)
            except AdmissibilityError as exc:
                bad.append({"generator": q.label, "error": str(exc)})
                continue
            if not r.is_zero():
                bad.append({"generator": q.label, "residual": sk.to_sexpr(r.expr)})
        rep.add("residuals_zero", not bad, f"{len(b.basis) - len(bad)}/{len(b.basis)} zero",
                {"items": bad} if bad else None)

    def closure():
        space = b.span.full_space()
        sym = lambda B: sk.is_zero(classifying_expr(B, replace(b.e, space=space)), space)
        cr = fl.closure_check(b.span, inst0, symmetry=sym, budget=CLOSURE_BUDGET)
        nsym = sum(1 for m in cr.methods.values() if m == "symmetry")
        rep.add("closure", cr.closed, f"{len(cr.coefficients)} brackets expanded"
                + (f", {nsym} via symmetry" if nsym else ""),
                {"items": [list(map(str, f)) for f in cr.failures]} if not cr.closed else None)

    def signature():
        got = fl.signature(b.span, inst0).as_tuple()
        rep.signature = got
        rep.add("signature", got == tuple(sig_expected), f"got {got}, expected {tuple(sig_expected)}",
                {"got": list(got), "expected": list(sig_expected)})

    def independence():
        ok = fl.independent(b.span, inst0)
        rep.add("independence", ok, f"{len(b.basis)} fields")

    def numeric_res():
        worst = 0.0
        bad = []
        for k in range(3):
            ik = inst(k)
            for q in b.basis:
                v = oracle.numeric_residual(ik, q, b.e, 100, seed + k)
                worst = max(worst, v)
                if not v < NUMERIC_TOL:
                    bad.append({"generator": q.label, "instance": k, "value": float(v),
                                "seed": seed + k})
        rep.add("numeric", not bad, f"max residual {worst:.1e}", {"items": bad} if bad else None)

    def sensitivity():
        ep = b.e.with_V(b.e.V + _parse(PERTURBATION, b.ns, c.source))
        ik = inst(0)
        best = max(oracle.numeric_residual(ik, q, ep, 100, seed) for q in b.basis)
        kernel_only = _kernel_only(b)
        ok = best >= SENSITIVITY_TOL or kernel_only
        note = f"max perturbed residual {best:.1e}"
        if kernel_only:
            note += " (kernel only: perturbation invisible by design)"
        rep.add("sensitivity", ok, note, {"value": best})

    if symbolic:
        timed("membership", membership)
    try:
        inst0 = inst(0)
    except Exception as exc:
        rep.add("instantiate", False, str(exc), {"error": repr(exc)})
        return rep
    if symbolic:
        timed("residuals_zero", residuals)
        timed("closure", closure)
    timed("signature", signature)
    timed("independence", independence)
    if numeric:
        timed("numeric", numeric_res)
        timed("sensitivity", sensitivity)
    rep.timings["total"] = time.perf_counter() - clock
    return rep


def _kernel_only(b: BuiltCase) -> bool:
    """All listed fields lie in the kernel of the class (M, and I' for P0)."""
    return all(q.tau == 0 and q.chi == (0,) * q.n and all(v == 0 for row in q.kappa for v in row)
               for q in b.basis)


def verify_all(theorems=("Vf", "Log", "Power"), case_ids=None, seed: int = 0,
               checks: str = "both", workers: int | None = None) -> list:
    """Verify every selected (case, variant); deterministic order."""
    jobs = []
    reg = registry()
    for th in theorems:
        for c in reg[th]:
            if case_ids is not None and c.case_id not in case_ids:
                continue
            for v in c.variants():
                jobs.append((th, c.case_id, v))
    if workers is None:
        workers = min(os.cpu_count() or 1, 8)
    if workers == 1 or len(jobs) < 2:
        return [verify_case(get_case(th, cid), v, seed, checks) for th, cid, v in jobs]
    from concurrent.futures import ProcessPoolExecutor
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futs = [pool.submit(_verify_job, th, cid, v, seed, checks, str(case_dir())) for th, cid, v in jobs]
        return [f.result() for f in futs]


def _verify_job(th, cid, v, seed, checks, directory):
    os.environ["LIESYM_CASE_DIR"] = directory
    return verify_case(get_case(th, cid), v, seed, checks)


# ---------------------------------------------------------------- subsumption


def verify_subsumption(c: ClassificationCase, link: dict, variant: Variant | None = None) -> CheckResult:
    """The ancestor's potential specialised by `bind` equals c's potential and
    its basis becomes a sub-span of c's algebra."""
    variant = variant or c.variants()[0]
    anc = get_case(c.theorem, link["case"])
    b = build(c, variant)
    # the ancestor is read in the descendant's namespace so bound names resolve
    anc_in = replace(anc, constants=sorted(set(anc.constants) | set(c.constants)),
                     functions={**{k: v for k, v in c.functions.items()}, **anc.functions},
                     samples=c.samples, singular=c.singular or anc.singular)
    a = build(anc_in, variant, binding=link.get("bind", {}))
    diff = sk.simplify(a.potential - b.potential, b.e.space)
    if not sk.is_zero(diff, b.e.space):
        return CheckResult(False, f"specialised potential differs by {diff}")
    space = b.span.full_space().merged(a.span.full_space())
    bad = []
    for q in a.basis:
        q2 = replace(q, rules=tuple(space.rules.values()))
        if not sk.is_zero(classifying_expr(q2, replace(b.e, space=space)), space):
            bad.append(q.label)
    if bad:
        return CheckResult(False, f"not symmetries of the descendant: {bad}")
    inst = oracle.instantiate(b.decls + [d for d in a.decls if d.name not in {x.name for x in b.decls}],
                              space, b.instance(0).params)
    joint = fl.Span(b.basis + a.basis, c.cls, c.n, space)
    F, _ = fl.span_matrix(joint, inst)
    rank = oracle.numeric_rank(fl._realify(F.reshape(len(joint.basis), -1)))
    ok = rank == len(b.basis)
    return CheckResult(ok, f"joint rank {rank}, descendant dim {len(b.basis)}")


# ---------------------------------------------------------------- maximality


@dataclass
class ProbeResult:
    found: list
    listed: int
    ansatz: int

    @property
    def extra(self):
        return [f - self.listed for f in self.found]

    @property
    def passed(self):
        return all(e == 0 for e in self.extra)


def ansatz_fields(cls: str, n: int = 2, degree: int = 3, lam=None, delta=None) -> list:
    """Polynomial-in-t structured fields admissible for the class."""
    out = [fl.J(n=n)]
    ts = [T ** k for k in range(degree + 1)]
    for k in ts:
        for a in range(n):
            chi = [0] * n
            chi[a] = k
            out.append(fl.P(*chi, n=n))
        out.append(fl.Mgen(k, n))
    if cls in ("Vf", "P0"):
        out.append(fl.D(1, n))
    if cls == "P0":
        out += [fl.Igen(k, n) for k in ts]
    if cls == "Plam":
        out += [fl.Dlam(k, lam, n) for k in ts]
    if cls == "S":
        out += [fl.D(k, n) for k in ts] + [fl.Igen(k, n) for k in ts]
    return out


def _residual_columns(fields_, e, inst, env, npoints):
    cols = []
    for q in fields_:
        v = oracle.evaluate(classifying_expr(q, e, canonical=False), inst, env)
        cols.append(np.broadcast_to(np.asarray(v, dtype=complex), (npoints,)))
    return np.array(cols).T


def solution_dimension(listed, ansatz, e, inst, npoints: int = 80, seed: int = 0) -> int:
    """Dimension of the span of combinations of listed + ansatz fields that
    satisfy the classifying condition at sampled points."""
    rng = np.random.default_rng(seed + 31)
    env = oracle.sample_points(inst, npoints, e.n, rng)
    allf = list(listed) + list(ansatz)
    A = _residual_columns(allf, e, inst, env, npoints)
    A = np.concatenate([A.real, A.imag], axis=0)
    scale = np.maximum(np.max(np.abs(A), axis=0), 1.0)
    A = A / scale
    u, s, vh = np.linalg.svd(A)
    r = int(np.sum(s > oracle.RANK_TOL * s[0])) if s.size and s[0] > 0 else 0
    null = vh[r:].T / scale[:, None]
    if null.shape[1] == 0:
        return 0
    ts = fl._sample_ts(inst, 16, seed)
    F = np.array([fl._features(q, inst, ts).reshape(-1) for q in allf])
    combos = null.T @ F
    return oracle.numeric_rank(np.concatenate([combos.real, combos.imag], axis=1))


def maximality_probe(c: ClassificationCase, variant: Variant | None = None, degree: int = 3,
                     seed: int = 0) -> ProbeResult:
    variant = variant or c.variants()[0]
    b = build(c, variant)
    ans = ansatz_fields(c.cls, c.n, degree, variant.lam, b.e.delta)
    found = []
    for k in range(3):
        inst = b.instance(k, seed)
        found.append(solution_dimension(b.basis, ans, b.e, inst, seed=seed + k))
    return ProbeResult(found, len(b.basis), len(ans))


def bound_realization_rank(n: int = 2, degree: int = 3, seed: int = 0) -> int:
    """Numeric rank of the solution space of the S-level condition for S = rho**(4/n)."""
    e = build_equation("S", {"S": RHO ** sp.Rational(4, n)}, n, check=False)
    inst = oracle.NumericInstance()
    return solution_dimension([], ansatz_fields("S", n, degree), e, inst, seed=seed)


# ---------------------------------------------------------------- bounds

MAX_DIM = {"Vf": (7, "14"), "Log": (8, "14"), "Power": (9, "23")}
K0 = {"Vf": 1, "Log": 2, "Power": 1}
K3_MAX = {"Vf": 1, "Log": 1, "Power": 3}


@dataclass
class BoundsReport:
    theorem: str
    max_dim: int
    attained_by: list
    violations: list
    conflicts: list

    @property
    def passed(self):
        return not self.violations


def _k3_allowed(lam):
    return {0, 1, 3} if lam == 2 else {0, 1, 2}


# (theorem, case, lam) where the stated k3 range disagrees with the listed algebra
KNOWN_K3_CONFLICTS = {("Power", "3", 2)}


def verify_bounds(theorem: str, n: int = 2, reports=None) -> BoundsReport:
    """Dimension bounds and invariant ranges over the expected (or verified) signatures."""
    th = THEOREMS.get(theorem.lower(), theorem)
    bound, top = MAX_DIM[th]
    sigs = []
    got = {(r.case_id, r.variant): r.signature for r in (reports or []) if r.theorem == th}
    for c in registry()[th]:
        if c.remark:
            continue
        for v in c.variants():
            _, s = c.expected(v.lam, v.branch)
            s = tuple(got.get((c.case_id, v.label(c)), s)) or s
            sigs.append((c.case_id, v, fl.Signature(*s)))
    violations, conflicts = [], []
    dims = [s.dim for _, _, s in sigs]
    mx = max(dims)
    attained = sorted({cid for cid, _, s in sigs if s.dim == mx}, key=lambda x: int(x))
    if mx != bound:
        violations.append(f"maximum dimension {mx} != {bound}")
    if top not in attained:
        violations.append(f"case {top} does not attain {bound}")
    for cid, v, s in sigs:
        where = f"case {cid}" + (f" [{v.label()}]" if v.lam is not None else "")
        if s.dim > bound:
            violations.append(f"{where}: dim {s.dim} > {bound}")
        if s.k0 != K0[th]:
            violations.append(f"{where}: k0 = {s.k0} != {K0[th]}")
        if s.k1 > 2 * n:
            violations.append(f"{where}: k1 = {s.k1} > {2 * n}")
        if s.k0 + s.k1 > 2 * n + (2 if th == "Log" else 1):
            violations.append(f"{where}: kernel plus P-part exceeds 2n+1")
        if s.k3 > K3_MAX[th]:
            violations.append(f"{where}: k3 = {s.k3} > {K3_MAX[th]}")
        for msg in s.violations(v.lam):
            violations.append(f"{where}: {msg}")
        if th == "Power" and s.k3 not in _k3_allowed(v.lam):
            item = f"{where}: k3 = {s.k3} outside the stated range for lam = {v.lam}"
            if (th, cid, v.lam) in KNOWN_K3_CONFLICTS:
                conflicts.append(item)
            else:
                violations.append(item)
    return BoundsReport(th, mx, attained, violations, conflicts)


# ---------------------------------------------------------------- remark mappings


@dataclass
class MappingReport:
    source: str
    target: str
    lam: sp.Expr
    potential_ok: bool
    potential_mode: str
    potential_residual: float
    delta_ratio: sp.Expr
    delta_ok: bool
    basis_ok: bool
    basis_detail: str
    pushforward_residual: float

    @property
    def passed(self):
        return self.potential_ok and self.delta_ok and self.basis_ok


def transform_of(c: ClassificationCase, lam, n: int = 2) -> eg.PointTransformation:
    spec = c.maps_to["transform"]
    ns = {"t": T, "lam": lam, **_FUNCS}
    get = lambda k, d: _parse(spec.get(k, d), ns, c.source)
    return eg.PointTransformation(n, T=get("T", "t"), Z=get("Z", "0"), Sigma=get("Sigma", "0"),
                                  label=f"{spec}")


def verify_remark_mapping(c: ClassificationCase, lam, seed: int = 0) -> MappingReport:
    lam = sp.Rational(lam)
    m = c.maps_to
    target = get_case(c.theorem, m["case"])
    src = build(c, Variant(lam=lam))
    g = transform_of(c, lam, c.n)
    out = eg.act_on_elements(g, src.e, coords="old")
    # target template with the bound functions, evaluated at the image point
    tgt_in = replace(target, functions={**c.functions, **target.functions},
                     constants=sorted(set(target.constants) | set(c.constants)))
    tb = build(tgt_in, Variant(lam=lam), binding=m.get("bind", {}))
    x = sk.xs(c.n)
    xn = eg.act_vars(g)
    image = tb.potential.xreplace({T: g.T, **{x[a]: xn[1][a] for a in range(c.n)}})
    diff = sp.simplify(out.V - image)
    mode = "symbolic"
    resid = 0.0
    ok = sk.is_zero(diff, src.e.space)
    if not ok:
        mode = "numeric"
        inst = oracle.auto_instance([diff], src.e.space, src.instance(0).params, seed,
                                    oracle.Domain(t_range=(-1.2, 1.2)))
        resid = oracle.max_abs(diff, inst, c.n, 100, seed)
        ok = resid < NUMERIC_TOL
    ratio = sp.nsimplify(sp.simplify(out.delta / src.e.delta))
    want = sp.sympify(m.get("delta_factor", "1"))
    dok = sp.simplify(ratio - want) == 0
    # bases: pushforward lands in the target span and spans it
    pushed = [eg.pushforward(g, q) for q in src.basis]
    lo, hi = m.get("t_image", [-2.0, 2.0])
    tinst = tb.instance(0, seed)
    tinst.domain = replace(tinst.domain, t_range=(float(lo), float(hi)))
    ts = fl._sample_ts(tinst)
    Ft = np.array([fl._features(q, tinst, ts).reshape(-1) for q in tb.basis])
    Fp = np.array([fl._features(q, tinst, ts).reshape(-1) for q in pushed])
    rt = oracle.numeric_rank(fl._realify(Ft))
    rj = oracle.numeric_rank(fl._realify(np.concatenate([Ft, Fp])))
    rp = oracle.numeric_rank(fl._realify(Fp))
    bok = rt == rj == rp == len(tb.basis)
    detail = f"target rank {rt}, joint {rj}, pushed {rp}"
    # independent raw-route check of the pushforward formula
    worst = 0.0
    for q, qn in zip(src.basis, pushed):
        worst = max(worst, eg.image_residual(g, q, qn, seed=seed))
    return MappingReport(c.case_id, target.case_id, lam, ok, mode, resid, ratio, dok,
                         bok and worst < NUMERIC_TOL, detail, worst)


def verify_remark_mappings(lams=None, seed: int = 0) -> list:
    out = []
    for c in registry()["Power"]:
        if c.maps_to is None:
            continue
        for lam in (lams or c.lams):
            out.append(verify_remark_mapping(c, lam, seed))
    return out


# ---------------------------------------------------------------- equivariance


@dataclass
class EquivarianceSample:
    case: str
    generator: str
    transformation: str
    residual: float
    perturbed_before: float
    perturbed_after: float

    @property
    def passed(self):
        kept = self.residual < NUMERIC_TOL
        # a non-symmetry must stay a non-symmetry
        detected = self.perturbed_before < SENSITIVITY_TOL or self.perturbed_after >= SENSITIVITY_TOL
        return kept and detected


def _image_instance(b: BuiltCase, g: eg.PointTransformation, seed: int):
    inst = b.instance(0, seed)
    f = sp.lambdify(T, g.T, "numpy")
    lo, hi = inst.domain.t_range
    ends = sorted(float(f(v)) for v in (0.75 * lo, 0.75 * hi))
    sing = tuple(float(f(v)) for v in inst.domain.t_singular)
    inst.domain = replace(inst.domain, t_range=tuple(ends), t_singular=sing)
    return inst


def equivariance_sweep(theorem: str, count: int = 20, seed: int = 0) -> list:
    """Random (g, Q, V) triples: Q solves the classifying condition for V and
    g_*Q must solve it for the transformed potential, evaluated numerically
    in the new variables.  A perturbed V must stay detectable."""
    theorem = THEOREMS.get(theorem.lower(), theorem)
    rng = np.random.default_rng(seed)
    cases = [c for c in registry()[theorem] if not c.remark]
    out = []
    for k in range(count):
        c = cases[int(rng.integers(len(cases)))]
        variants = c.variants()
        v = variants[int(rng.integers(len(variants)))]
        b = build(c, v)
        moving = [q for q in b.basis if q.tau != 0 or any(x != 0 for x in q.chi)
                  or any(x != 0 for row in q.kappa for x in row)]
        pool = moving or b.basis
        q = pool[int(rng.integers(len(pool)))]
        g = eg.random_transformation(c.cls, rng, c.n, b.e.lam)
        qn = eg.pushforward(g, q)
        inst = _image_instance(b, g, seed + k)
        en = eg.act_on_elements(g, b.e, coords="new", simplify=False)
        r = oracle.numeric_residual(inst, qn, en, 100, seed + k)
        ep = b.e.with_V(b.e.V + _parse(PERTURBATION, b.ns, c.source))
        before = oracle.numeric_residual(b.instance(0, seed), q, ep, 100, seed + k)
        epn = eg.act_on_elements(g, ep, coords="new", simplify=False)
        after = oracle.numeric_residual(inst, qn, epn, 100, seed + k)
        label = f"{c.theorem} {c.case_id}" + (f" [{v.label(c)}]" if v.label(c) else "")
        out.append(EquivarianceSample(label, q.label, f"T={g.T}, O angle, X={g.X}", r, before,
                                      after))
    return out


# ---------------------------------------------------------------- dossier


def explain(theorem: str, case_id: str) -> str:
    c = get_case(theorem, case_id)
    lines = [f"{c.theorem} case {c.case_id}" + (" (t-independent form)" if c.remark else ""),
             f"  class: {c.cls}" + (f", lam sampled at {list(c.lams)}" if c.lams else "")]
    if c.potential:
        lines.append(f"  potential: V = {c.potential}")
    if c.constraints:
        lines.append(f"  constraints: {'; '.join(c.constraints)}")
    if c.h0:
        lines.append(f"  h0 = ({', '.join(c.h0)})")
    variants = c.variants()
    shown = variants if c.cls != "Plam" else [Variant(lam=sp.Integer(3))] + (
        [Variant(lam=sp.Integer(2))] if c.basis_lam2 else [])
    for v in shown:
        basis, sig = c.expected(v.lam, v.branch)
        head = "  algebra"
        if v.branch is not None:
            br = c.branches[v.branch]
            head += f" for {br['when']} (delta = {br.get('delta')}): V = {br.get('potential')}"
        elif v.lam is not None:
            head += " for lam = 2" if v.lam == 2 else (" for lam != 2" if c.basis_lam2 else "")
        lines.append(head)
        lines.append(f"    basis: <{', '.join(basis)}>  (dim {len(basis)})")
        lines.append(f"    signature (r1, k0, k1, k2, k3) = {tuple(sig)}")
    if c.maximality:
        lines.append(f"  maximality: {c.maximality}")
    if c.subsumes:
        for s in c.subsumes:
            lines.append(f"  specialises case {s['case']} with {s.get('bind', {})}")
    if c.maps_to:
        m = c.maps_to
        lines.append(f"  maps to case {m['case']} by T = {m['transform'].get('T')}, "
                     f"Z = {m['transform'].get('Z')}; delta scales by {m.get('delta_factor', 1)}")
    for other in registry()[c.theorem]:
        if other.maps_to and other.maps_to["case"] == c.case_id:
            m = other.maps_to
            lines.append(f"  mapping witness: case {other.case_id} (V = {other.potential}) is sent "
                         f"here by T = {m['transform'].get('T')}, Z = {m['transform'].get('Z')}"
                         + (f" with {m['bind']}" if m.get("bind") else "")
                         + f"; delta scales by {m.get('delta_factor', 1)}")
    lines.append("  residual trace (coefficients of x-monomials before and after simplification):")
    v = shown[-1]
    b = build(c, v)
    if _kernel_only(b):
        lines.insert(-1, "  kernel-only: every listed generator belongs to the kernel algebra of the class")
    for q in b.basis:
        lines.append(f"    {q.label}:")
        lines.extend("      " + s for s in _trace(q, b))
    return "\n".join(lines)


def _trace(q, b) -> list:
    raw = classifying_expr(q, b.e, canonical=False)
    space = q.space(b.e.space)
    try:
        table = sk.collect(sp.expand(raw), sk.xs(b.e.n))
    except sk.NonPolynomialError:
        verdict = "0" if sk.is_zero(raw, space) else str(sk.simplify(raw, space))
        return [f"not polynomial in x; {len(sp.Add.make_args(sp.expand(raw)))} terms -> {verdict}"]
    if not table:
        return ["identically 0"]
    out = []
    for mono in sorted(table, key=sp.default_sort_key):
        coeff = table[mono]
        out.append(f"{str(mono):>10}: {len(sp.Add.make_args(coeff))} terms -> "
                   f"{sk.simplify(coeff, space)}")
    return out

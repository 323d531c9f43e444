from __future__ import annotations

import shutil
import textwrap
from dataclasses import replace

import pytest
import sympy as sp

from liesym import tables


def _write(tmp_path, name, text):
    (tmp_path / f"{name}.yaml").write_text(textwrap.dedent(text))


_HEAD = """\
theorem: Vf
class: Vf
n: 2
f: "exp(rho)"
samples:
  - {mu: 1}
  - {mu: 2}
  - {mu: 3}
cases:
"""


def test_loader_reports_yaml_position(tmp_path):
    _write(tmp_path, "vf", _HEAD + '  - id: "0"\n    basis: ["M"\n    signature: [0, 1, 0, 0, 0]\n')
    with pytest.raises(tables.CaseFileError) as err:
        tables.load_theorem("vf", tmp_path)
    assert err.value.line is not None and err.value.col is not None
    assert f"vf.yaml:{err.value.line}:{err.value.col}:" in str(err.value)


def test_loader_checks_basis_length(tmp_path):
    _write(tmp_path, "vf", _HEAD + '  - id: "0"\n    potential: "0"\n    basis: ["M", "D(1)"]\n'
                                   '    signature: [0, 1, 0, 0, 0]\n')
    with pytest.raises(tables.CaseFileError, match="basis length 2") as err:
        tables.load_theorem("vf", tmp_path)
    assert (err.value.line, err.value.col) == (10, 5)


def test_loader_structural_errors(tmp_path):
    _write(tmp_path, "vf", "theorem: Vf\n")
    with pytest.raises(tables.CaseFileError, match="top-level"):
        tables.load_theorem("vf", tmp_path)
    _write(tmp_path, "vf", _HEAD.replace("  - {mu: 3}\n", "") + '  - id: "0"\n    basis: ["M"]\n'
                                                                 '    signature: [0, 1, 0, 0, 0]\n')
    with pytest.raises(tables.CaseFileError, match="three parameter samples"):
        tables.load_theorem("vf", tmp_path)
    with pytest.raises(tables.CaseFileError, match="unknown theorem"):
        tables.load_theorem("sine-gordon", tmp_path)
    with pytest.raises(tables.CaseFileError, match="cannot read"):
        tables.load_theorem("log", tmp_path)


def test_registry_is_complete_and_consistent():
    reg = tables.registry()
    assert set(reg) == {"Vf", "Log", "Power"}
    for th, cases in reg.items():
        for c in cases:
            for v in c.variants():
                basis, sig = c.expected(v.lam, v.branch)
                assert len(basis) == sum(sig[1:]), c.key


def test_environment_case_dir(tmp_path, monkeypatch):
    src = tables.case_dir()
    for name in ("vf", "log", "power"):
        shutil.copy(src / f"{name}.yaml", tmp_path / f"{name}.yaml")
    monkeypatch.setenv("LIESYM_CASE_DIR", str(tmp_path))
    assert tables.case_dir() == tmp_path
    assert tables.get_case("vf", "14").dimension() == 7


def test_verify_kernel_only_case():
    rep = tables.verify_case(tables.get_case("vf", "0"))
    assert rep.passed and rep.dimension == 1
    assert "kernel only" in rep.checks["sensitivity"].detail


def test_verify_log_14():
    rep = tables.verify_case(tables.get_case("log", "14"))
    assert rep.passed, rep.failures
    assert rep.dimension == 8
    assert set(rep.checks) >= set(tables.SYMBOLIC_CHECKS) | set(tables.NUMERIC_CHECKS)


def test_verify_power_23_at_lam_2():
    c = tables.get_case("power", "23")
    rep = tables.verify_case(c, tables.Variant(lam=sp.Integer(2)))
    assert rep.passed, rep.failures
    assert rep.dimension == 9 and rep.signature == (2, 1, 4, 1, 3)


def test_report_records_failures():
    c = tables.get_case("vf", "14")
    wrong = replace(c, signature=(2, 1, 4, 0, 2))
    rep = tables.verify_case(wrong, checks="symbolic")
    assert not rep.passed and not rep.checks["signature"].passed
    assert rep.failures and rep.failures[0]["check"] == "signature"


def test_subsumption():
    c = tables.get_case("vf", "1")
    assert tables.verify_subsumption(c, c.subsumes[0]).passed
    bad = {"case": "0", "bind": {"Vg": "U(a1, a2) + a0"}}
    res = tables.verify_subsumption(c, bad)
    assert not res.passed and "differs" in res.detail


@pytest.mark.parametrize("th,bound,top", [("vf", 7, "14"), ("log", 8, "14"), ("power", 9, "23")])
def test_bounds(th, bound, top):
    rep = tables.verify_bounds(th)
    assert rep.passed, rep.violations
    assert rep.max_dim == bound and top in rep.attained_by


def test_power_k3_conflict_is_ledgered_not_hidden():
    rep = tables.verify_bounds("power")
    assert any(item.startswith("case 3") for item in rep.conflicts)


def test_remark_mapping_tan():
    c = tables.get_case("power", "11'")
    rep = tables.verify_remark_mapping(c, 3)
    assert rep.passed, rep
    assert rep.delta_ratio == 1 and rep.pushforward_residual < 1e-9


def test_remark_mapping_exp_halves_delta():
    rep = tables.verify_remark_mapping(tables.get_case("power", "21'"), 3)
    assert rep.passed, rep
    assert rep.delta_ratio == sp.Rational(1, 2)


def test_explain_examples():
    text = tables.explain("log", "4")
    assert "d2 != 0" in text and "d2 = 0" in text
    assert "kernel-only" in tables.explain("vf", "0")
    text = tables.explain("power", "21")
    assert "mapping witness: case 21'" in text
    assert "residual trace" in text


def test_explain_unknown_case():
    with pytest.raises(KeyError):
        tables.explain("vf", "99")

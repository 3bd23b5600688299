import json

import numpy as np
import pytest
import sympy as sp

from pet_engine import catalog as cat
from pet_engine.model import DcEquation
from pet_engine.symcheck import VectorField, fields_equal
from pet_engine.symexpr import parse, t, u, x


def eq(d, k=None, K=None):
    return DcEquation.from_strings(d, k, K)


def test_table_sizes():
    assert len(cat.table(1)) == 12
    assert len(cat.table(2)) == 21


def test_case_1_8():
    c = cat.case("1.8")
    assert c.d == parse("u^(-4/3)") and c.k == 0
    assert len(c.basis) == 5
    assert any(fields_equal(X, VectorField(0, x**2, -3 * x * u)) for X in c.basis)


def test_case_2_9_has_heat_family():
    c = cat.case("2.9")
    assert sp.simplify(c.d - u**-2) == 0 and c.K == 0
    assert any(X.functional == "phi" for X in c.basis)


def test_case_2_3_starred():
    c = cat.case("2.3*")
    assert c.d == sp.exp(u) and sp.simplify(c.K - u**2) == 0
    assert len(c.basis) == 4


def test_K_consistency():
    assert all(ok for _, ok in cat.K_consistency())


def test_verify_case_reports_every_operator():
    res = cat.verify_case(cat.case("1.10"), samples=100, seed=1)
    assert len(res) == len(cat.case("1.10").basis)
    assert all(r.passed for r in res) and all(r.samples >= 100 for r in res)


def test_negative_control():
    for _, worst, _ in cat.negative_control(cat.case("2.10")):
        assert worst > 1e-3


@pytest.mark.parametrize("d, k, label, params", [
    ("u^(-2)", "0", "1.7a", {"mu": -2}),
    ("3*u^2", "0", "1.7a", {"mu": 2}),
    ("1", "5*u", "1.9", {}),
    ("exp(u)", "exp(u)", "1.2", {"mu": 1}),
    ("u^(-4/3)", "0", "1.8", {}),
    ("1", "0", "1.10", {}),
])
def test_classify(d, k, label, params):
    c = cat.classify(eq(d, k))
    assert c.case.label == label and c.verified
    for name, val in params.items():
        assert abs(float(c.params[name]) - val) < 1e-9


def test_classify_absorbs_constant():
    c = cat.classify(eq("3*u^2", "0"))
    assert abs(c.transform.e4 - 3) < 1e-9 or abs(c.transform.e5**2 / c.transform.e4 - 1 / 3) < 1e-9


def test_classify_system_starred_pair():
    out = cat.classify_system(eq("u^(-2)*exp(1/u)", K="0")).to_json()
    assert out["case"] in ("2.3", "2.4*")


def test_correspondences_all_pass():
    entries = cat.correspondences(seed=3)
    kinds = {e.kind for e in entries}
    assert {"starred", "lemma1", "reduction", "simplification", "excluded-pair", "complex"} <= kinds
    assert all(e.passed for e in entries)


def test_nu_minus_two():
    assert cat.nu_minus_two_simplification().passed


def test_excluded_pair():
    e = cat.excluded_pair_mapping()
    assert e.passed and e.to_json()["pass"]


def test_solutions_entries():
    sols = {s.sol_id: s for s in cat.solutions("9")}
    four = cat.make_solution("9", "4", {"eps": 1.0})
    assert sp.simplify(four.u - 2 * t / (x**2 + t**2)) == 0
    assert set(sols) == {"1", "2", "3", "4", "5", "6", "7"}
    ten = {s.sol_id: s for s in cat.solutions("10")}
    assert set(ten) == {"1", "2", "3", "4", "5", "6"}
    assert sp.simplify(ten["4"].u - sp.sinh(t) / (sp.cosh(x) - sp.cosh(t))) == 0
    assert not ten["4"].adduced


def test_arrow_display_contains_named_links():
    text = [(a.source.describe(), a.target.describe()) for a in cat.arrows("9")]
    assert ("5", "4[eps=4]") in text
    assert ("2", "3[mu=0, x > t]") in text


def test_predicate():
    mask = cat.evaluate_predicate("abs(x) < 2*abs(t)", np.array([1.0, 1.0]), np.array([1.0, 3.0]))
    assert mask.tolist() == [True, False]


def test_missing_key_rejected(tmp_path):
    raw = json.loads(cat.raw_text())
    del raw["arrows"]
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(raw))
    with pytest.raises(cat.CatalogError):
        cat.load_catalog(str(p))


def test_corrupted_operator_detected(tmp_path):
    raw = json.loads(cat.raw_text())
    raw["tables"]["2"][12]["basis"][0]["t"] = "2"
    label = raw["tables"]["2"][12]["label"]
    raw["tables"]["2"][12]["basis"][0]["x"] = "u"
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(raw))
    bad = cat.load_catalog(str(p))
    res = cat.verify_case(bad.case(label))
    assert not res[0].passed

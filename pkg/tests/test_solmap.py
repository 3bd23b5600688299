import json

import numpy as np
import pytest
import sympy as sp

from pet_engine import catalog as cat
from pet_engine import solmap
from pet_engine.equivgroups import hodograph, purely_potential
from pet_engine.model import DcEquation
from pet_engine.symexpr import t, x

E = solmap.FAST_DIFFUSION


def pick(list_id, sol_id, **consts):
    for s in cat.solutions(list_id):
        if s.sol_id == sol_id and all(abs(s.constants.get(k) - v) < 1e-12 for k, v in consts.items()):
            return s
    raise LookupError((list_id, sol_id, consts))


class Numeric:
    """A plain callable solution on a rectangle."""

    def __init__(self, fn, t_range=(0.5, 1.5), x_range=(-1.0, 1.0)):
        self.fn, self._t, self._x = fn, t_range, x_range

    def __call__(self, tt, xx):
        return self.fn(tt, xx)

    def t_range(self):
        return self._t

    def x_range(self):
        return self._x


@pytest.mark.parametrize("sol_id, consts", [("2", {}), ("4", {"eps": -1.0}), ("5", {})])
def test_closed_forms_verify(sol_id, consts):
    ver = solmap.verify_solution(E, pick("9", sol_id, **consts))
    assert ver.method == "symbolic" and ver.residual < 1e-10


def test_list_ten_first_entry():
    assert solmap.verify_solution(E, pick("10", "1")).residual < 1e-10


@pytest.mark.parametrize("sol_id, consts, expected", [
    ("2", {}, sp.exp(x) + t),
    ("5", {}, 2 * t * sp.tan(x)),
    ("4", {"eps": 0.0}, -2 * t / x),
])
def test_potentials(sol_id, consts, expected):
    pot = solmap.lift_to_potential(E, pick("9", sol_id, **consts))
    assert pot.symbolic and sp.simplify(pot.expr - expected) == 0


def test_potential_residuals_small():
    sol = pick("10", "3")
    pot = solmap.lift_to_potential(E, sol)
    assert max(pot.residuals(*sol.grid(12))) < 1e-9


@pytest.mark.parametrize("src, target", [("2", "3[mu=0, x > t]"), ("5", "4[eps=4]"),
                                         ("4", "4[eps=0]")])
def test_hodograph_images(src, target):
    arrow = [a for a in cat.arrows("9") if a.source.sol_id == src][0]
    assert arrow.target.describe() == target
    image = solmap.hodograph_on_solution(E, cat.arrow_solution("9", arrow.source))
    m = solmap.match_up_to_x_translation(image, cat.arrow_solution("9", arrow.target), reflect=None)
    assert m.ok and m.sup_error < 1e-6


def test_image_satisfies_equation():
    image = solmap.hodograph_on_solution(E, pick("9", "5"))
    ver = solmap.verify_solution(E, image)
    assert ver.ok and ver.order >= 1.8


def test_self_match():
    s = pick("10", "2")
    m = solmap.match_up_to_x_translation(s, s)
    assert m.shift == 0 and m.sup_error < 1e-14


def test_distinct_solutions_do_not_match():
    m = solmap.match_up_to_x_translation(pick("10", "2"), pick("10", "6"), reflect=None)
    assert not m.ok and m.sup_error > 1e-3


def test_arrow_with_round_trip():
    arrow = [a for a in cat.arrows("10") if a.source.sol_id == "3"][0]
    res = solmap.map_arrow(arrow)
    assert res.ok and res.back.sup_error < 1e-6


def test_gmax_identity():
    s = pick("9", "5")
    assert sp.simplify(solmap.gmax_action(0, 0, 1, 1, s).u - s.u) == 0


def test_gmax_scaling():
    g = solmap.gmax_action(0, 0, 1, 2, pick("9", "2"))
    assert sp.simplify(g.u - 4 * sp.exp(2 * x)) == 0
    assert solmap.verify_solution(E, g).ok
    json.dumps(g.to_json())


def test_gmax_time_reversal():
    g = solmap.gmax_action(0, 0, -1, 1, pick("9", "5"))
    assert g.t_box[1] < 0 and solmap.verify_solution(E, g).ok


def test_implicit_solution():
    s8 = solmap.implicit_solution_8(1.0)
    ver = solmap.verify_solution(E, s8)
    assert ver.ok and ver.order >= 1.8
    assert s8.implicit_error() < 1e-8 and s8.invariance_error() < 1e-8


def test_implicit_solution_is_image_of_three():
    image = solmap.hodograph_on_solution(E, pick("9", "3", mu=1.0))
    m = solmap.match_up_to_x_translation(image, solmap.implicit_solution_8(1.0), reflect=None)
    assert m.ok and abs(m.shift + np.log(2)) < 1e-8


def test_order_gate_rejects_near_miss():
    near = Numeric(lambda tt, xx: np.exp(xx) * (1 + 1e-7 * xx**2))
    ver = solmap.verify_solution(E, near)
    assert ver.residual < 1e-6
    assert not ver.ok


def test_order_gate_accepts_exact():
    ver = solmap.verify_solution(E, Numeric(lambda tt, xx: 2 * tt / np.cos(xx) ** 2))
    assert ver.ok


def test_grid_solution_export(tmp_path):
    sol = pick("9", "5")
    tt, xx = sol.grid(21)
    g = solmap.GridSolution(tt[:, 0], xx[0], sol(tt, xx), meta={"source": sol.name})
    csv_path, json_path = g.save(tmp_path / "five")
    header = json.loads(json_path.read_text())
    assert header["source"] == sol.name
    data = np.loadtxt(csv_path, delimiter=",", skiprows=1)
    assert data.shape[0] == 21 * 21
    tt, xx = np.meshgrid(np.linspace(0.9, 1.1, 161), np.linspace(-0.2, 0.2, 161), indexing="ij")
    dense = solmap.GridSolution(tt[:, 0], xx[0], sol(tt, xx))
    ver = solmap.verify_solution(E, dense)
    assert ver.ok and ver.order >= 1.8


def test_invariance_criterion():
    assert solmap.is_invariant_under(E, hodograph())
    assert not solmap.is_invariant_under(DcEquation.from_strings("1", K="0"), hodograph())
    assert solmap.is_invariant_under(DcEquation.from_strings("u^(-2)", K="u"), purely_potential(1.0))


def test_three_image():
    out = solmap.three_image(DcEquation.from_strings("u^(-2)", "u^(-2)"))
    assert sp.simplify(out.d - sp.Symbol("u") ** -2) == 0 and out.k_expr == 0
    with pytest.raises(solmap.SolmapError):
        solmap.three_image(DcEquation.from_strings("u^2", "1"))


def test_wave_identity():
    lam, err = solmap.wave_identity(pick("10", "1"))
    assert err < 1e-10


def test_chain_links():
    links = solmap.chain_links()
    assert len(links) == 3 and all(link.ok for link in links)
    assert len(solmap.chain_links(with_complex=True)) == 4


def test_cole_hopf_transport():
    stages = solmap.cole_hopf_chain()
    assert all(s.ok for s in stages)
    assert stages[-1].verification.residual < 1e-6 and stages[-1].exact_error < 1e-8

from fractions import Fraction

import pytest

from nonrel_lab.thresholds import delta0_general, delta0_order2, feasibility, s0, smallness_thresholds


def test_delta02_value():
    assert delta0_order2(2, 2) == Fraction(13, 4)
    th = smallness_thresholds(2, 2, 2)
    assert th.delta0 == Fraction(13, 4) and th.formula == "order2"
    assert th.alpha_star == Fraction(13, 4)


def test_order2_and_general_disagree_at_r2():
    assert delta0_general(2, 2, 2) == Fraction(7, 2)
    assert any("general formula" in n for n in smallness_thresholds(2, 2, 2).notes)


def test_hypothesis_flags():
    th = smallness_thresholds(3, 2, 2)
    assert th.ratio == 1
    assert not th.hypothesis_ok
    assert smallness_thresholds(2, 4, 2).hypothesis_ok
    assert smallness_thresholds(2, 4, 3).formula == "general"


def test_s0_and_ratio():
    assert s0(2) == Fraction(9, 2)
    th = smallness_thresholds(3, 4, 3)
    assert th.ratio == Fraction(2, 3)
    assert th.alpha_star == max(th.delta0, th.ratio)


def test_bad_arguments():
    for args in [(1, 2, 2), (2, 1, 2), (2, 2, 1)]:
        with pytest.raises(ValueError):
            smallness_thresholds(*args)


def test_feasibility_shape():
    out = feasibility(3.5, 16.0)
    assert set(out) >= {"term1", "term2", "term3", "contraction", "all", "values"}
    # larger delta only helps
    lo, hi = feasibility(1.0, 16.0), feasibility(6.0, 16.0)
    for k in ("term1", "term2", "term3", "contraction"):
        assert hi["values"][k] <= lo["values"][k]
    assert hi["all"] and not lo["all"]
    th = smallness_thresholds(2, 2, 2)
    assert th.feasibility(6.0, 16.0)["all"]

from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prasp_lite.grounder import Grounder, WeightedItem
from prasp_lite.modelcount import (
    CountingConfig,
    counting_inference,
    counting_probability,
    rational_weight,
    weights2cc_transform,
)
from prasp_lite.spanning import build_spanning_program
from prasp_lite.syntax import And, Atom, parse_formula, parse_program
from prasp_lite.worlds import WorldSet, enumerate_answer_sets


def cc_worlds(text):
    span = weights2cc_transform(Grounder(parse_program(text)).ground())
    return span, WorldSet(span.program, enumerate_answer_sets(span.program))


def plain_worlds(text):
    span = build_spanning_program(Grounder(parse_program(text)).ground())
    return WorldSet(span.program, enumerate_answer_sets(span.program))


@pytest.mark.parametrize("w, expected", [(0.5, Fraction(1, 2)), (0.3, Fraction(3, 10)), (0.05, Fraction(1, 20))])
def test_rational_weight(w, expected):
    assert rational_weight(w) == expected


def test_rational_weight_warns_when_rounding():
    with pytest.warns(UserWarning, match="approximated"):
        assert rational_weight(1 / 3 + 0.001) == Fraction(1, 3)


def test_counting_config_validation():
    with pytest.raises(ValueError):
        CountingConfig(mode="other")
    with pytest.raises(ValueError):
        CountingConfig(denominator_cap=1)


def test_half_weight_uses_two_helpers():
    span, ws = cc_worlds("[0.5] a.")
    helper_names = sorted(str(span.program.atoms[i]) for i in span.helpers)
    assert helper_names == ["hp__cc_0_0", "hp__cc_0_1"]
    assert len(ws) == 2
    assert counting_probability(ws, Atom("a")) == Fraction(1, 2)


def test_helper_atoms_are_hidden():
    span, ws = cc_worlds("[0.3] a.")
    rendered = {span.program.render_world(w) for w in ws.worlds}
    assert rendered == {"{a}", "{}"}


def test_weighted_rule_counts_given_its_body():
    # the violated branch needs a true body, so only the conditional is exact
    span, ws = cc_worlds("[0.5] a.\n[0.8] b :- a.")
    assert counting_probability(ws, Atom("b"), Atom("a")) == Fraction(4, 5)
    assert len(ws) == 9


def test_compound_formula_counts_per_assignment():
    # each satisfying assignment of a | b gets 1 helper choice, the falsifying one 3
    span, ws = cc_worlds("[0.25] a | b.")
    assert len(ws) == 3 * 1 + 1 * 3
    assert counting_probability(ws, parse_formula("a | b")) == Fraction(1, 2)
    assert counting_probability(ws, parse_formula("a & b"), parse_formula("a | b")) == Fraction(1, 3)


def test_plain_counting_over_spanning_worlds():
    ws = plain_worlds("[0.5] a.\n[0.5] b.\nc :- a, b.")
    assert counting_probability(ws, Atom("c")) == Fraction(1, 4)
    assert counting_probability(ws, Atom("c"), Atom("a")) == Fraction(1, 2)


def test_undefined_conditional_is_none():
    ws = plain_worlds("[0.5] a.\n:- b.\n0{b}1.")
    assert counting_probability(ws, Atom("a"), Atom("b")) is None


def test_context_restricts_the_numerator():
    ws = plain_worlds("[0.5] a.\n[0.5] b.")
    ctx = ws.indicator(Atom("b"))
    assert counting_probability(ws, Atom("a"), context=ctx) == Fraction(1, 4)


def test_counting_inference_per_query():
    ws = plain_worlds("[0.5] a.\n[0.5] b.")
    qs = [WeightedItem(Atom("a")), WeightedItem(Atom("a"), condition=Atom("b"))]
    assert counting_inference(ws, qs) == [Fraction(1, 2), Fraction(1, 2)]


def test_interval_weights_keep_plain_spanning():
    with pytest.warns(UserWarning, match="interval"):
        span, ws = cc_worlds("[0.2;0.4] a.")
    assert not span.helpers
    assert len(ws) == 2


weights = st.sampled_from([Fraction(1, 2), Fraction(1, 4), Fraction(3, 5), Fraction(2, 3), Fraction(7, 10), Fraction(1, 5)])


@settings(max_examples=40, deadline=None)
@given(st.lists(weights, min_size=1, max_size=3))
def test_counting_reproduces_products(ws_):
    """Independent encoded weights multiply exactly under counting."""
    text = "\n".join(f"[{float(w)}] a{i}." for i, w in enumerate(ws_))
    _, ws = cc_worlds(text)
    expected = Fraction(1)
    for w in ws_:
        expected *= w
    conj = And(tuple(Atom(f"a{i}") for i in range(len(ws_)))) if len(ws_) > 1 else Atom("a0")
    assert counting_probability(ws, conj) == expected
    for i, w in enumerate(ws_):
        assert counting_probability(ws, Atom(f"a{i}")) == w

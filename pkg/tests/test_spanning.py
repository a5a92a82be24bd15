import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import DATA
from prasp_lite.engine import load_statements
from prasp_lite.grounder import Grounder
from prasp_lite.spanning import AUTO_INDEP_MUTUAL_LIMIT, build_spanning_program
from prasp_lite.syntax import Atom, parse_formula, parse_program
from prasp_lite.worlds import GroundProgram, WorldSet, enumerate_answer_sets, holds


def span_of(text, **kw):
    statements = load_statements(DATA / text) if text.endswith(".prasp") else parse_program(text)
    return build_spanning_program(Grounder(statements).ground(), **kw)


def worlds_of(span):
    return WorldSet(span.program, enumerate_answer_sets(span.program))


def rendered(span):
    ws = worlds_of(span)
    return sorted(span.program.render_world(w) for w in ws.worlds)


def test_weighted_atom_becomes_choice():
    span = span_of("[0.3] a.")
    assert span.program.to_text().splitlines() == ["0{a}1."]


def test_certain_weight_is_a_fact():
    assert rendered(span_of("[1] a.")) == ["{a}"]


def test_coin_game_has_four_worlds():
    assert rendered(span_of("coins.prasp")) == [
        "{coin1(heads),coin2(heads),win}",
        "{coin1(heads),coin2(tails)}",
        "{coin1(tails),coin2(heads)}",
        "{coin1(tails),coin2(tails)}",
    ]


def test_two_independent_coins():
    assert len(worlds_of(span_of("two_coins.prasp"))) == 4


def test_weighted_rule_splits_worlds():
    span = span_of("[0.5] a.\n[0.8] b :- a.")
    ws = worlds_of(span)
    rule = parse_formula("b :- a")
    truth = {holds(w, rule, span.program.index) for w in ws.worlds}
    assert truth == {True, False}
    # the helper atom stays out of the rendered worlds
    assert span.helpers
    assert all("hp__" not in span.program.render_world(w) for w in ws.worlds)


def test_compound_formula_atoms_get_choices():
    span = span_of("[0.4] a & (b | c).")
    assert len(worlds_of(span)) == 8


def test_span_annotation_adds_choice():
    assert rendered(span_of("[.] p.")) == ["{p}", "{}"]


def test_conditional_atoms_are_spanned():
    assert len(worlds_of(span_of("[0.8|win] happy."))) == 4


def test_implicit_independence_group():
    span = span_of("[0.5] a.\n[0.5] b.\n[0.5] c.")
    (group,) = span.groups
    assert group.implicit and group.members == [0, 1, 2]
    assert span_of("[0.5] a.\n[0.5] b.\n[0.5] c.", auto_indeps=False).groups == []


def test_defined_atoms_stay_out_of_the_implicit_group():
    span = span_of("[0.5] a.\n[0.5] b.\n[0.5] c.\nc :- a.")
    (group,) = span.groups
    assert group.members == [0, 1]


def test_large_implicit_group_is_pairwise():
    n = AUTO_INDEP_MUTUAL_LIMIT + 1
    text = "\n".join(f"[0.5] a{i}." for i in range(n))
    with pytest.warns(UserWarning, match="pairwise"):
        span = span_of(text)
    assert span.groups[0].pairwise


def test_declared_groups_can_be_ignored():
    assert span_of("coins.prasp").groups
    assert span_of("coins.prasp", declared_indeps=False, auto_indeps=False).groups == []


@st.composite
def weighted_programs(draw):
    n = draw(st.integers(1, 4))
    lines = [f"[{draw(st.sampled_from(['0.2', '0.5', '0.7']))}] x{i}." for i in range(n)]
    for _ in range(draw(st.integers(0, 3))):
        head = draw(st.integers(0, n + 1))
        body = draw(st.lists(st.integers(0, n - 1), min_size=1, max_size=2, unique=True))
        neg = draw(st.booleans())
        lits = [f"x{b}" for b in body]
        if neg:
            lits[0] = "not " + lits[0]
        lines.append(f"y{head} :- {', '.join(lits)}.")
    return n, "\n".join(lines)


@settings(max_examples=40, deadline=None)
@given(weighted_programs())
def test_weighted_atoms_take_both_values(case):
    """Every uncertain atom is true in some world and false in another."""
    n, text = case
    span = span_of(text)
    ws = worlds_of(span)
    for i in range(n):
        ind = ws.indicator(Atom(f"x{i}"))
        assert ind.any() and not ind.all()


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(["0.1", "0.5", "0.9"]), st.booleans())
def test_weighted_rule_both_polarities(w, negated_body):
    body = "not a" if negated_body else "a"
    span = span_of(f"[0.5] a.\n[{w}] b :- {body}.")
    ws = worlds_of(span)
    rule = parse_formula(f"b :- {body}")
    assert set(ws.indicator(rule).tolist()) == {True, False}


def test_spanning_program_is_a_ground_program():
    assert isinstance(span_of("coins.prasp").program, GroundProgram)

import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prasp_lite.syntax import And, Atom, Not, Or, parse_formula
from prasp_lite.worlds import (
    EnumerationLimitError,
    GroundProgram,
    GroundRule,
    WorldSet,
    brute_force_answer_sets,
    enumerate_answer_sets,
    holds,
    is_stable,
    least_model,
)


def program(*formulas) -> GroundProgram:
    p = GroundProgram()
    for text in formulas:
        assert p.add_formula(parse_formula(text)), text
    return p.finalize()


def rendered(p: GroundProgram, worlds) -> set:
    return {p.render_world(w) for w in worlds}


def ids(p, *names):
    return frozenset(p.index[Atom(n)] for n in names)


def test_least_model_chain():
    assert least_model([(1, (0,)), (2, (1,))], facts=[0]) == {0, 1, 2}


def test_least_model_needs_every_body_atom():
    assert least_model([(2, (0, 1))], facts=[0]) == {0}


def test_least_model_without_facts_is_empty():
    assert least_model([(1, (0,)), (0, (1,))]) == set()


def test_even_loop_has_two_answer_sets():
    p = program("a :- not b", "b :- not a")
    assert rendered(p, enumerate_answer_sets(p)) == {"{a}", "{b}"}


def test_odd_loop_has_none():
    p = program("a :- not a")
    assert enumerate_answer_sets(p) == []


def test_unsupported_atom_is_not_stable():
    p = program("a :- b", "0{b}1")
    assert is_stable(ids(p), p)
    assert is_stable(ids(p, "a", "b"), p)
    # a without its support b
    assert not is_stable(ids(p, "a"), p)


def test_constraint_removes_world():
    p = program("0{a}1", ":- a")
    assert rendered(p, enumerate_answer_sets(p)) == {"{}"}


def test_cardinality_bounds():
    p = program("1{a, b, c}2")
    worlds = enumerate_answer_sets(p)
    assert len(worlds) == 6
    assert all(1 <= len(w) <= 2 for w in worlds)


def test_strong_negation_excludes_both():
    p = program("0{p}1", "0{-p}1")
    assert "{-p,p}" not in rendered(p, enumerate_answer_sets(p))
    assert len(enumerate_answer_sets(p)) == 3


def test_normal_program_answer_sets_form_an_antichain():
    # choice rules break minimality, so the program has none
    p = program("a :- not b", "b :- not a", "c :- a", "d :- not c, not e", "e :- not d")
    worlds = enumerate_answer_sets(p)
    for w, v in itertools.permutations(worlds, 2):
        assert not w < v


def test_enumeration_order_is_deterministic():
    p = program("1{a, b, c}3")
    assert enumerate_answer_sets(p) == enumerate_answer_sets(p)


def test_limit_and_cap():
    p = program("0{a, b, c, d}4")
    assert len(enumerate_answer_sets(p, limit=3)) == 3
    with pytest.raises(EnumerationLimitError) as err:
        enumerate_answer_sets(p, max_worlds=5)
    assert len(err.value.partial) > 5


def test_holds_contradiction_and_excluded_middle():
    p = program("0{f}1")
    index = p.index
    f = Atom("f")
    for w in enumerate_answer_sets(p):
        assert not holds(w, And((f, Not(f))), index)
        assert holds(w, Or((f, Not(f))), index)


def test_holds_unknown_atom_is_false():
    assert not holds(frozenset(), Atom("nowhere"), {})


def test_holds_count_and_rule():
    p = program("1{a, b, c}3")
    w = ids(p, "a", "b")
    assert holds(w, parse_formula("2{a, b, c}2"), p.index)
    assert not holds(w, parse_formula("c :- a, b"), p.index)
    assert holds(w, parse_formula("a :- c"), p.index)


def test_indicator_matches_holds():
    p = program("0{a, b, c}3")
    ws = WorldSet(p, enumerate_answer_sets(p))
    f = parse_formula("a & not b | c")
    expected = [holds(w, f, p.index) for w in ws.worlds]
    assert ws.indicator(f).tolist() == expected


def test_helper_atoms_are_hidden():
    p = GroundProgram()
    p.add_choice([Atom("hp__x"), Atom("a")], 0, 2)
    w = frozenset(range(2))
    assert p.render_world(w) == "{a}"


def test_to_text_parses_back():
    p = program("a :- not b", "b :- not a", "1{c, d}1 :- a", ":- b, c")
    assert "a :- not b." in p.to_text().splitlines()


# -- the search agrees with brute force -------------------------------------


@st.composite
def normal_programs(draw):
    n = draw(st.integers(2, 5))
    rules = []
    for _ in range(draw(st.integers(1, 6))):
        head = draw(st.integers(0, n - 1))
        pos = draw(st.lists(st.integers(0, n - 1), max_size=2, unique=True))
        neg = draw(st.lists(st.integers(0, n - 1), max_size=2, unique=True))
        kind = draw(st.sampled_from(["rule", "rule", "constraint", "choice"]))
        rules.append((kind, head, tuple(pos), tuple(neg)))
    return n, rules


@settings(max_examples=80, deadline=None)
@given(normal_programs())
def test_search_matches_brute_force(case):
    n, rules = case
    p = GroundProgram()
    for i in range(n):
        p.atom_id(Atom(f"x{i}"))
    for kind, head, pos, neg in rules:
        if kind == "rule":
            p.add_rule(GroundRule(head, pos, neg))
        elif kind == "constraint":
            p.add_rule(GroundRule(None, pos, neg))
        else:
            p.add_rule(GroundRule(None, pos, neg, (), (head,), 0, 1))
    assert set(enumerate_answer_sets(p)) == set(brute_force_answer_sets(p))
    for w in enumerate_answer_sets(p):
        assert is_stable(w, p)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6))
def test_free_choices_give_every_subset(n):
    p = GroundProgram()
    for i in range(n):
        p.add_choice([Atom(f"c{i}")], 0, 1)
    worlds = enumerate_answer_sets(p)
    assert len(worlds) == 2**n
    assert len(set(worlds)) == 2**n
    assert WorldSet(p, worlds).matrix.sum() == n * 2 ** (n - 1)

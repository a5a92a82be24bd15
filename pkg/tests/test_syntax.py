import itertools
import textwrap

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import DATA
from prasp_lite.syntax import (
    And,
    AnnotatedDisjunction,
    AnnotatedFormula,
    Atom,
    Const,
    Count,
    MetaBlock,
    Not,
    Num,
    Or,
    ParseError,
    Rule,
    desugar_annotated_disjunction,
    expand_macros,
    format_probability,
    load_source,
    parse_formula,
    parse_program,
    resolve_includes,
    strip_comments,
)


def only(text, **kw):
    (st_,) = parse_program(text, **kw)
    return st_


# -- comments, includes and macros -----------------------------------------


def test_line_comment_is_blanked():
    assert strip_comments("a. % c") == "a.    "


def test_block_comment_keeps_newlines():
    out = strip_comments("a. %* x \n y *% b.")
    assert out.split() == ["a.", "b."]
    assert out.count("\n") == 1


def test_text_without_comments_is_unchanged():
    assert strip_comments("a.") == "a."


def test_unterminated_block_comment():
    with pytest.raises(ParseError):
        strip_comments("a. %* never closed")


def test_include_single(tmp_path):
    (tmp_path / "b.prasp").write_text("p.\n")
    (tmp_path / "a.prasp").write_text('#include "b.prasp"\n')
    assert resolve_includes(tmp_path / "a.prasp").split() == ["p."]


def test_include_chain_is_spliced_depth_first(tmp_path):
    (tmp_path / "c.prasp").write_text("c.\n")
    (tmp_path / "b.prasp").write_text('b1.\n#include "c.prasp"\nb2.\n')
    (tmp_path / "a.prasp").write_text('a1.\n#include "b.prasp"\na2.\n')
    assert resolve_includes(tmp_path / "a.prasp").split() == ["a1.", "b1.", "c.", "b2.", "a2."]


def test_include_cycle(tmp_path):
    (tmp_path / "a.prasp").write_text('#include "a.prasp"\n')
    with pytest.raises(ParseError, match="cycle"):
        resolve_includes(tmp_path / "a.prasp")


def test_macro_expands_in_condition():
    out = expand_macros("#def e = a & b\n[?|e] c.")
    assert out.split("\n")[1] == "[?|a & b] c."


def test_macro_refers_to_earlier_macro():
    out = expand_macros("#def e1 = a\n#def e2 = e1 & x\n[?|e2] c.")
    assert out.split("\n")[2] == "[?|a & x] c."


def test_text_without_macros_unchanged():
    text = "a.\n[0.5] b."
    assert expand_macros(text) == text


@given(st.lists(st.sampled_from(["a.", "[0.5] b.", "c :- a.", "[?|a] b.", "q(1..2)."]), max_size=6))
def test_macro_expansion_is_idempotent(lines):
    once = expand_macros("#def m = a & b\n" + "\n".join(lines))
    assert expand_macros(once) == once


def test_load_source_combines_steps(tmp_path):
    (tmp_path / "defs.prasp").write_text("#def w = coin(1)\n")
    (tmp_path / "main.prasp").write_text('#include "defs.prasp"\n[0.5] w. % comment\n')
    (st_,) = parse_program(load_source(tmp_path / "main.prasp"))
    assert st_.formula == Atom("coin", (Num(1),))


# -- statements -------------------------------------------------------------


def test_interval_weight():
    st_ = only("[0.45;0.5] coin(1,heads).")
    assert (st_.annotation.kind, st_.annotation.lo, st_.annotation.hi) == ("interval", 0.45, 0.5)
    assert st_.formula == Atom("coin", (Num(1), Const("heads")))


def test_conditional_weight():
    st_ = only("[0.8|win] happy.")
    assert st_.annotation.kind == "point"
    assert st_.annotation.lo == 0.8
    assert st_.annotation.condition == Atom("win")
    assert st_.formula == Atom("happy")


def test_plain_rule():
    st_ = only("win :- coin1(heads), coin2(heads).")
    assert st_.annotation is None
    assert isinstance(st_.formula, Rule)
    assert st_.formula.head == Atom("win")
    assert len(st_.formula.body) == 2


def test_short_probability_literal():
    assert only("[.3] a.").annotation.lo == pytest.approx(0.3)


def test_condition_bar_inside_brackets():
    st_ = only("[?|a | b] c.", query_mode=True)
    assert st_.annotation.condition == Or((Atom("a"), Atom("b")))


def test_disjunction_outside_brackets():
    assert only("[0.2] a | b.").formula == Or((Atom("a"), Atom("b")))


def test_count_formula():
    f = parse_formula("2{a, b, c}2")
    assert isinstance(f, Count)
    assert (f.lower, f.upper) == (2, 2)


def test_query_only_in_query_files():
    with pytest.raises(ParseError):
        parse_program("[?] a.")


def test_weight_out_of_range():
    with pytest.raises(ParseError):
        parse_program("[1.5] a.")


def test_reversed_interval():
    with pytest.raises(ParseError):
        parse_program("[0.6;0.4] a.")


def test_reserved_prefix_rejected():
    with pytest.raises(ParseError):
        parse_program("hp__x.")


def test_independence_block():
    (block,) = parse_program("#indep\n[0.6] a.\n[0.5] b.\n#endIndep")
    assert isinstance(block, MetaBlock)
    assert block.kind == "indep"
    assert len(block.items) == 2


def test_span_annotation_rejected_in_independence_block():
    with pytest.raises(ParseError):
        parse_program("#indep\n[.] a.\n#endIndep")


def test_conditional_rejected_in_independence_block():
    with pytest.raises(ParseError):
        parse_program("#indep\n[0.5|b] a.\n#endIndep")


def test_parse_error_has_line_number():
    with pytest.raises(ParseError) as err:
        parse_program("a.\nb :- .\n")
    assert err.value.line == 2


# -- annotated disjunctions -------------------------------------------------


def test_weighted_rule_disjunction():
    (ad,) = parse_program("[0.8] happy ::- win.")
    helpers, rules = desugar_annotated_disjunction(ad)
    assert [h.annotation.lo for h in helpers] == [0.8]
    (rule,) = rules
    assert rule.formula.head == Atom("happy")
    assert rule.formula.body == (Atom("win"), helpers[0].formula)


def test_two_alternatives():
    (ad,) = parse_program("[0.5] a; [0.5] b ::- c.")
    helpers, rules = desugar_annotated_disjunction(ad)
    # the second helper is certain once the first one failed
    assert [h.annotation.lo for h in helpers] == [0.5]
    heads = [r.formula.head if isinstance(r.formula, Rule) else r.formula for r in rules]
    assert Atom("a") in heads and Atom("b") in heads


def test_single_certain_alternative_is_plain_rule():
    ad = AnnotatedDisjunction([(1.0, Atom("a"))], (Atom("c"),))
    helpers, rules = desugar_annotated_disjunction(ad)
    assert helpers == []
    assert rules[0].formula == Rule(Atom("a"), (Atom("c"),))


@settings(max_examples=50)
@given(st.lists(st.integers(min_value=0, max_value=100), min_size=1, max_size=4))
def test_disjunction_marginals(weights):
    """Brute force over helper truth values reproduces each alternative's weight."""
    total = sum(weights)
    probs = [w / max(total, 100) for w in weights]
    ad = AnnotatedDisjunction([(p, Atom(f"h{i}")) for i, p in enumerate(probs)], ())
    helpers, rules = desugar_annotated_disjunction(ad)
    facts = {r.formula for r in rules if isinstance(r.formula, Atom)}
    names = [h.formula for h in helpers]
    marginal = [0.0] * len(probs)
    for bits in itertools.product((False, True), repeat=len(names)):
        true = {n for n, b in zip(names, bits) if b} | facts
        weight = 1.0
        for h, b in zip(helpers, bits):
            weight *= h.annotation.lo if b else 1.0 - h.annotation.lo
        for r in rules:
            f = r.formula
            if not isinstance(f, Rule):
                continue
            fired = all(b in true if isinstance(b, Atom) else b.sub not in true for b in f.body)
            if fired:
                marginal[int(f.head.pred[1:])] += weight
    assert marginal == pytest.approx(probs, abs=1e-9)


# -- round trips ------------------------------------------------------------


CORPUS_FORMULAS = [
    "coin1(heads) | coin1(tails)",
    "not (coin1(heads) | coin1(tails))",
    "coin1(heads) & coin2(heads)",
    "2{h3, x1}2",
    "smokes(X) :- friend(X,Y), influences(Y,X), smokes(Y), X != Y",
    "a & (b | c) & d -> e | f & not g",
    ":- v(1)",
    "-p(a)",
]


@pytest.mark.parametrize("text", CORPUS_FORMULAS)
def test_print_parse_round_trip(text):
    f = parse_formula(text)
    assert parse_formula(str(f)) == f


def test_every_corpus_statement_round_trips():
    for path in sorted(DATA.glob("*.prasp")):
        for stmt in parse_program(path.read_text()):
            items = stmt.items if isinstance(stmt, MetaBlock) else [stmt]
            for it in items:
                if isinstance(it, AnnotatedFormula):
                    assert parse_formula(str(it.formula), allow_reserved=True) == it.formula, (path.name, it.text)


atoms = st.sampled_from([Atom("a"), Atom("b"), Atom("p", (Num(1),)), Atom("q", (Const("x"), Num(2)))])


def _formulas():
    return st.recursive(
        atoms,
        lambda inner: st.one_of(
            inner.map(Not),
            st.lists(inner, min_size=2, max_size=3).map(lambda xs: And(tuple(xs))),
            st.lists(inner, min_size=2, max_size=3).map(lambda xs: Or(tuple(xs))),
        ),
        max_leaves=6,
    )


@given(_formulas())
def test_generated_formula_round_trip(f):
    printed = str(f)
    assert str(parse_formula(printed)) == printed


@given(st.floats(min_value=0.0, max_value=1.0, allow_nan=False))
def test_probability_literals_round_trip(w):
    st_ = only(f"[{format_probability(w)}] a.")
    assert 0.0 <= st_.annotation.lo <= st_.annotation.hi <= 1.0
    assert st_.annotation.lo == pytest.approx(w, rel=1e-15, abs=1e-300)


def test_program_listing_parses():
    text = textwrap.dedent(
        """\
        coin(1..3).
        [0.45;0.5] coin_out(1,heads).
        [[0.5]] coin_out(N,heads) :- coin(N), N != 1.
        1{coin_out(N,heads), coin_out(N,tails)}1 :- coin(N).
        n_win :- coin_out(N,tails), coin(N).
        win :- not n_win.
        [0.8|win] happy.
        """
    )
    assert len(parse_program(text)) == 7

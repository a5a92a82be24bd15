"""Internal grounder.

Variables are bound through *domain predicates* (predicates whose extension
is fixed by facts and deterministic rules), through ``#domain`` declarations,
and as a last resort through the set of atoms that may possibly become true.
Multi-bracket annotations are expanded here into per-instance weighted
formulas.
"""

from __future__ import annotations

import itertools
import logging
import re
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional

from .syntax import (
    And,
    AnnotatedDisjunction,
    AnnotatedFormula,
    Annotation,
    Atom,
    BinOp,
    Comparison,
    Const,
    Count,
    CountElem,
    DomainDecl,
    Func,
    Interval,
    MetaBlock,
    Not,
    Num,
    Or,
    ParseError,
    Pool,
    Rule,
    Var,
    desugar_annotated_disjunction,
    formula_atoms,
    formula_variables,
    tokenize,
)

log = logging.getLogger(__name__)


class GroundingError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Terms and substitutions
# ---------------------------------------------------------------------------


def _arith(op: str, a, b):
    if not (isinstance(a, Num) and isinstance(b, Num)):
        raise GroundingError(f"arithmetic on non-integer terms: {a} {op} {b}")
    if op == "+":
        return Num(a.value + b.value)
    if op == "-":
        return Num(a.value - b.value)
    if op == "*":
        return Num(a.value * b.value)
    if op == "/":
        if b.value == 0:
            raise GroundingError("division by zero in term")
        return Num(a.value // b.value)
    raise GroundingError(f"unknown operator {op}")


def expand_term(t, subst: dict) -> list:
    """All ground values of ``t`` under ``subst`` (intervals and pools expand)."""
    if isinstance(t, (Num, Const)):
        return [t]
    if isinstance(t, Var):
        if t.name not in subst:
            raise GroundingError(f"unbound variable {t.name}")
        return [subst[t.name]]
    if isinstance(t, Func):
        choices = [expand_term(a, subst) for a in t.args]
        return [Func(t.name, tuple(c)) for c in itertools.product(*choices)]
    if isinstance(t, BinOp):
        return [_arith(t.op, a, b) for a in expand_term(t.left, subst) for b in expand_term(t.right, subst)]
    if isinstance(t, Interval):
        out = []
        for lo in expand_term(t.lo, subst):
            for hi in expand_term(t.hi, subst):
                if not (isinstance(lo, Num) and isinstance(hi, Num)):
                    raise GroundingError(f"interval bounds must be integers: {t}")
                if hi.value < lo.value:
                    warnings.warn(f"empty interval {lo}..{hi}", stacklevel=2)
                out.extend(Num(v) for v in range(lo.value, hi.value + 1))
        return out
    if isinstance(t, Pool):
        out = []
        for alt in t.alternatives:
            out.extend(expand_term(alt, subst))
        return out
    raise GroundingError(f"cannot ground term {t!r}")


def _has_shorthand(t) -> bool:
    if isinstance(t, (Interval, Pool)):
        return True
    if isinstance(t, Func):
        return any(_has_shorthand(a) for a in t.args)
    if isinstance(t, BinOp):
        return _has_shorthand(t.left) or _has_shorthand(t.right)
    return False


def ground_atoms_of(atom: Atom, subst: dict) -> list:
    """Ground instances of ``atom`` under ``subst``, expanding shorthand."""
    choices = [expand_term(a, subst) for a in atom.args]
    return [Atom(atom.pred, tuple(c), atom.strong) for c in itertools.product(*choices)]


def substitute(f, subst: dict):
    """Apply ``subst``; intervals/pools inside atoms expand to conjunctions."""
    if isinstance(f, Atom):
        inst = ground_atoms_of(f, subst)
        return inst[0] if len(inst) == 1 else And(tuple(inst))
    if isinstance(f, Comparison):
        left = expand_term(f.left, subst)
        right = expand_term(f.right, subst)
        if len(left) != 1 or len(right) != 1:
            raise GroundingError(f"intervals not allowed in comparison {f}")
        return Comparison(f.op, left[0], right[0])
    if isinstance(f, Not):
        return Not(substitute(f.sub, subst))
    if isinstance(f, And):
        return And(tuple(substitute(g, subst) for g in f.items))
    if isinstance(f, Or):
        return Or(tuple(substitute(g, subst) for g in f.items))
    if isinstance(f, Rule):
        head = None if f.head is None else substitute(f.head, subst)
        return Rule(head, tuple(substitute(b, subst) for b in f.body))
    if isinstance(f, Count):
        return Count(f.lower, tuple(_subst_elem(e, subst) for e in f.elems), f.upper)
    raise GroundingError(f"cannot substitute into {f!r}")


def _subst_elem(e: CountElem, subst: dict) -> CountElem:
    return CountElem(_subst_partial(e.literal, subst), tuple(_subst_partial(c, subst) for c in e.conditions))


def _term_partial(t, subst: dict):
    if isinstance(t, Var):
        return subst.get(t.name, t)
    if isinstance(t, Func):
        return Func(t.name, tuple(_term_partial(a, subst) for a in t.args))
    if isinstance(t, BinOp):
        return BinOp(t.op, _term_partial(t.left, subst), _term_partial(t.right, subst))
    if isinstance(t, Interval):
        return Interval(_term_partial(t.lo, subst), _term_partial(t.hi, subst))
    if isinstance(t, Pool):
        return Pool(tuple(_term_partial(a, subst) for a in t.alternatives))
    return t


def _subst_partial(f, subst: dict):
    """Substitute the bound variables only (local count variables stay)."""
    if isinstance(f, Atom):
        return Atom(f.pred, tuple(_term_partial(a, subst) for a in f.args), f.strong)
    if isinstance(f, Comparison):
        return Comparison(f.op, _term_partial(f.left, subst), _term_partial(f.right, subst))
    if isinstance(f, Not):
        return Not(_subst_partial(f.sub, subst))
    raise GroundingError(f"unsupported count element {f}")


def compare(op: str, a, b) -> bool:
    if isinstance(a, Num) and isinstance(b, Num):
        x, y = a.value, b.value
    else:
        x, y = _cmp_key(a), _cmp_key(b)
    return {
        "==": x == y,
        "!=": x != y,
        "<": x < y,
        "<=": x <= y,
        ">": x > y,
        ">=": x >= y,
    }[op]


def _cmp_key(t) -> tuple:
    if isinstance(t, Num):
        return (0, t.value, "")
    return (1, 0, str(t))


def is_ground(f) -> bool:
    return not formula_variables(f, include_local=True)


# ---------------------------------------------------------------------------
# Shorthand expansion and sorting
# ---------------------------------------------------------------------------


def expand_term_shorthand(f) -> list:
    """Expand ``p(1..3)``/``p(a;b)`` shorthand in a ground atom or fact.

    The cartesian product over all argument positions is returned, e.g.
    ``twoCoins(1..3,1..2)`` yields six atoms.
    """
    if isinstance(f, Atom):
        return ground_atoms_of(f, {})
    if isinstance(f, Rule) and f.head is not None and isinstance(f.head, Atom) and not f.body:
        return ground_atoms_of(f.head, {})
    return [f]


_TOKEN_KEY_RE = re.compile(r"-?\d+|[A-Za-z_][A-Za-z0-9_']*|\S")


def token_key(text: str) -> tuple:
    """Token-wise sort key: integers compare numerically, words lexically."""
    key = []
    for tok in _TOKEN_KEY_RE.findall(text):
        if re.fullmatch(r"-?\d+", tok):
            key.append((1, int(tok), ""))
        else:
            key.append((2, 0, tok))
    return tuple(key)


def sort_instances(items: list, key=str) -> list:
    """Stable sort of ground formulas by their token sequence."""
    return sorted(items, key=lambda x: token_key(key(x)))


# ---------------------------------------------------------------------------
# Grounding results
# ---------------------------------------------------------------------------


@dataclass
class WeightedItem:
    """A ground weighted (or span-only) formula.

    ``lo``/``hi`` hold the weight bounds (equal for point weights);
    ``condition`` is set for conditional weights; ``kind`` is ``weight``,
    ``span`` (``[.] f``) or ``indep_only`` (a member of a volatile independence
    block, which only contributes independence constraints).
    """

    formula: object
    lo: Optional[float] = None
    hi: Optional[float] = None
    condition: object = None
    kind: str = "weight"
    text: str = ""
    line: int = 0

    @property
    def is_point(self) -> bool:
        return self.lo is not None and self.lo == self.hi


@dataclass
class IndepGroup:
    members: list  # indices into GroundedProgram.weighted
    pairwise: bool = False
    implicit: bool = False
    source: str = ""


@dataclass
class GroundedProgram:
    hard: list = field(default_factory=list)  # ground unannotated formulas
    weighted: list = field(default_factory=list)  # WeightedItem
    groups: list = field(default_factory=list)  # IndepGroup
    domains: dict = field(default_factory=dict)
    helper_prefixes: tuple = ("hp__",)


# ---------------------------------------------------------------------------
# Grounder
# ---------------------------------------------------------------------------


def _flatten(statements: list) -> Iterator:
    """Yield (statement, block_kind, block_id) in source order."""
    for bid, st in enumerate(statements):
        if isinstance(st, MetaBlock):
            for item in st.items:
                yield item, st.kind, bid
        else:
            yield st, None, None


def _head_atoms(f) -> list:
    """Atoms that ``f`` can define (heads of rules, choice elements, facts)."""
    if isinstance(f, Atom):
        return [f]
    if isinstance(f, Rule):
        return [] if f.head is None else _head_atoms(f.head)
    if isinstance(f, Count):
        return [e.literal for e in f.elems if isinstance(e.literal, Atom)]
    if isinstance(f, And):
        out = []
        for g in f.items:
            out.extend(_head_atoms(g))
        return out
    return []


def _body_of(f) -> tuple:
    return f.body if isinstance(f, Rule) else ()


class Grounder:
    """Ground a parsed program (list of statements from ``parse_program``)."""

    def __init__(self, statements: list, max_rounds: int = 20):
        self.statements = statements
        self.max_rounds = max_rounds
        self.var_domain_decls: list = []
        self.domain_preds: set = set()
        self.domains: dict = {}
        self.possible: dict = {}
        self._analyse()

    # -- domain analysis --------------------------------------------------
    def _analyse(self) -> None:
        defined: set = set()
        uncertain: set = set()
        rules_by_head: dict = {}
        for st, block, _ in _flatten(self.statements):
            if isinstance(st, DomainDecl):
                self.var_domain_decls.append(st.atom)
                continue
            if isinstance(st, AnnotatedDisjunction):
                for _, h in st.alternatives:
                    uncertain.add(h.signature)
                continue
            f = st.formula
            ann = st.annotation
            if ann is not None or (block not in (None, "volat")):
                for a in (_head_atoms(f) if isinstance(f, Rule) else formula_atoms(f)):
                    uncertain.add(a.signature)
                if ann is not None and ann.condition is not None:
                    for a in formula_atoms(ann.condition):
                        uncertain.add(a.signature)
                if isinstance(f, Rule) and f.head is not None and isinstance(f.head, Atom) and f.head.pred == "condPr":
                    for t in f.head.args:
                        if isinstance(t, (Func, Const)):
                            uncertain.add((t.name, len(t.args) if isinstance(t, Func) else 0))
                continue
            if isinstance(f, Atom):
                defined.add(f.signature)
                if f.strong:
                    uncertain.add(f.signature)
            elif isinstance(f, Rule) and f.head is not None:
                if isinstance(f.head, Atom):
                    sig = f.head.signature
                    defined.add(sig)
                    rules_by_head.setdefault(sig, []).append(f)
                    if f.head.strong:
                        uncertain.add(sig)
                else:
                    for a in _head_atoms(f.head):
                        uncertain.add(a.signature)
                    if not isinstance(f.head, Count):
                        for a in formula_atoms(f.head):
                            uncertain.add(a.signature)
            elif isinstance(f, Count):
                for a in formula_atoms(f):
                    uncertain.add(a.signature)
            elif isinstance(f, (And,)) and all(isinstance(g, Atom) for g in f.items):
                for g in f.items:
                    defined.add(g.signature)
            elif isinstance(f, Rule):
                pass
            else:
                for a in formula_atoms(f):
                    uncertain.add(a.signature)
        # least fixpoint: a predicate joins once all its rules have domain bodies
        eligible = set(defined) - uncertain
        candidates = {sig for sig in eligible if sig not in rules_by_head}
        changed = True
        while changed:
            changed = False
            for sig in sorted(eligible - candidates):
                if all(self._body_is_domain(r.body, candidates) for r in rules_by_head[sig]):
                    candidates.add(sig)
                    changed = True
        # predicates that never occur in a head are certainly empty: domain
        all_sigs: set = set()
        for st, _, _ in _flatten(self.statements):
            if isinstance(st, AnnotatedFormula):
                for a in formula_atoms(st.formula):
                    all_sigs.add(a.signature)
            elif isinstance(st, AnnotatedDisjunction):
                for a in st.body:
                    for b in formula_atoms(a):
                        all_sigs.add(b.signature)
        never_defined = {s for s in all_sigs if s not in defined and s not in uncertain}
        self.domain_preds = candidates | never_defined
        self.domains = self.compute_domains()

    def _body_is_domain(self, body: tuple, domain: set) -> bool:
        for b in body:
            if isinstance(b, Comparison):
                continue
            inner = b.sub if isinstance(b, Not) else b
            if isinstance(inner, Atom) and inner.signature in domain:
                continue
            if isinstance(inner, Atom) and inner.signature not in self._all_defined_sigs():
                continue
            return False
        return True

    def _all_defined_sigs(self) -> set:
        if not hasattr(self, "_defined_cache"):
            sigs = set()
            for st, _, _ in _flatten(self.statements):
                if isinstance(st, AnnotatedFormula):
                    for a in _head_atoms(st.formula):
                        sigs.add(a.signature)
                    if st.annotation is not None:
                        for a in formula_atoms(st.formula):
                            sigs.add(a.signature)
                        if st.annotation.condition is not None:
                            for a in formula_atoms(st.annotation.condition):
                                sigs.add(a.signature)
                elif isinstance(st, AnnotatedDisjunction):
                    for _, h in st.alternatives:
                        sigs.add(h.signature)
            self._defined_cache = sigs
        return self._defined_cache

    def compute_domains(self) -> dict:
        """Least fixpoint of the domain predicates' facts and rules."""
        domains: dict = {}
        facts = []
        rules = []
        for st, block, _ in _flatten(self.statements):
            if not isinstance(st, AnnotatedFormula) or st.annotation is not None:
                continue
            if block not in (None, "volat"):
                continue
            f = st.formula
            if isinstance(f, Atom) and f.signature in self.domain_preds:
                facts.append(f)
            elif isinstance(f, And) and all(isinstance(g, Atom) for g in f.items):
                facts.extend(g for g in f.items if g.signature in self.domain_preds)
            elif isinstance(f, Rule) and isinstance(f.head, Atom) and f.head.signature in self.domain_preds:
                if f.body:
                    rules.append(f)
                else:
                    facts.append(f.head)
        for a in facts:
            if formula_variables(a):
                # variables bound by #domain declarations
                rules.append(Rule(a, ()))
                continue
            for g in ground_atoms_of(a, {}):
                domains.setdefault((g.pred, len(g.args)), set()).add(g.args)
        self.domains = domains
        changed = True
        while changed:
            changed = False
            for r in rules:
                for subst in self.bind(r.body, formula_variables(r.head), r):
                    for g in ground_atoms_of(r.head, subst):
                        key = (g.pred, len(g.args))
                        ext = domains.setdefault(key, set())
                        if g.args not in ext:
                            ext.add(g.args)
                            changed = True
        return domains

    # -- variable binding -------------------------------------------------
    def _var_domain(self, name: str) -> Optional[list]:
        values = None
        for decl in self.var_domain_decls:
            for pos, t in enumerate(decl.args):
                if isinstance(t, Var) and t.name == name:
                    ext = self.domains.get((decl.pred, len(decl.args)), set())
                    vals = {args[pos] for args in ext}
                    values = vals if values is None else values | vals
        if values is None:
            return None
        return sorted(values, key=_cmp_key)

    def bind(self, body: tuple, extra_vars: set, where, use_possible: bool = True) -> Iterator[dict]:
        """Enumerate substitutions for the variables of ``body`` and ``extra_vars``.

        Positive domain atoms in ``body`` are joined first, then ``#domain``
        declarations bind what is left, then positive non-domain atoms are
        matched against the atoms that may possibly hold.
        """
        needed = set(extra_vars)
        for b in body:
            needed |= formula_variables(b, include_local=False)
        binders = [b for b in body if isinstance(b, Atom) and not b.strong and b.signature in self.domain_preds]
        binders += [b for b in body if isinstance(b, Atom) and b.strong and b.signature in self.domain_preds]
        late = [b for b in body if isinstance(b, Atom) and b.signature not in self.domain_preds]
        yield from self._join(binders, {}, needed, late, where, use_possible)

    def _join(self, atoms: list, subst: dict, needed: set, late: list, where, use_possible: bool) -> Iterator[dict]:
        if atoms:
            first, rest = atoms[0], atoms[1:]
            ext = self.domains.get((first.pred, len(first.args)), set())
            for args in sorted(ext, key=lambda a: tuple(_cmp_key(x) for x in a)):
                s2 = _match_args(first.args, args, subst)
                if s2 is not None:
                    yield from self._join(rest, s2, needed, late, where, use_possible)
            return
        unbound = sorted(v for v in needed if v not in subst)
        declared = [v for v in unbound if self._var_domain(v) is not None]
        if declared:
            pools = [self._var_domain(v) for v in declared]
            for combo in itertools.product(*pools):
                s2 = dict(subst)
                s2.update(zip(declared, combo))
                yield from self._join([], s2, needed, late, where, use_possible)
            return
        if unbound and use_possible:
            for atom in late:
                if formula_variables(atom) & set(unbound):
                    ext = self.possible.get(atom.signature, set())
                    for args in sorted(ext, key=lambda a: tuple(_cmp_key(x) for x in a)):
                        s2 = _match_args(atom.args, args, subst)
                        if s2 is not None:
                            yield from self._join([], s2, needed, [l for l in late if l is not atom], where, use_possible)
                    return
        if unbound:
            raise GroundingError(f"unsafe variable {', '.join(unbound)} in '{where}'")
        yield subst

    # -- simplification ---------------------------------------------------
    def _domain_truth(self, atom: Atom) -> Optional[bool]:
        if atom.signature not in self.domain_preds:
            return None
        return atom.args in self.domains.get((atom.pred, len(atom.args)), set())

    def simplify_body(self, body: tuple) -> Optional[tuple]:
        """Drop true domain literals and comparisons; ``None`` if some is false."""
        out = []
        for b in body:
            if isinstance(b, Comparison):
                if not compare(b.op, b.left, b.right):
                    return None
                continue
            if isinstance(b, And) and all(isinstance(x, Atom) for x in b.items):
                parts = self.simplify_body(b.items)
                if parts is None:
                    return None
                out.extend(parts)
                continue
            if isinstance(b, Atom):
                t = self._domain_truth(b)
                if t is True:
                    continue
                if t is False:
                    return None
            if isinstance(b, Not) and isinstance(b.sub, Atom):
                t = self._domain_truth(b.sub)
                if t is True:
                    return None
                if t is False:
                    continue
            if isinstance(b, Count):
                b = self.expand_count(b)
            out.append(self.simplify_formula(b))
        return tuple(out)

    def simplify_formula(self, f):
        """Evaluate comparisons and expand count conditions inside ``f``."""
        if isinstance(f, Count):
            return self.expand_count(f)
        if isinstance(f, Not):
            return Not(self.simplify_formula(f.sub))
        if isinstance(f, And):
            return And(tuple(self.simplify_formula(g) for g in f.items))
        if isinstance(f, Or):
            return Or(tuple(self.simplify_formula(g) for g in f.items))
        if isinstance(f, Comparison):
            return And(()) if compare(f.op, f.left, f.right) else Or(())
        return f

    def expand_count(self, c: Count) -> Count:
        elems = []
        for e in c.elems:
            if not e.conditions:
                if formula_variables(e.literal):
                    local = sorted(formula_variables(e.literal))
                    pools = [self._var_domain(v) for v in local]
                    if any(p is None for p in pools):
                        raise GroundingError(f"unsafe variable in count element {e}")
                    for combo in itertools.product(*pools):
                        elems.append(CountElem(substitute(e.literal, dict(zip(local, combo)))))
                    continue
                lit = e.literal
                if isinstance(lit, Atom) and any(_has_shorthand(a) for a in lit.args):
                    elems.extend(CountElem(g) for g in ground_atoms_of(lit, {}))
                else:
                    elems.append(e)
                continue
            conds = tuple(e.conditions)
            local_vars = formula_variables(e.literal)
            for cnd in conds:
                local_vars |= formula_variables(cnd)
            for subst in self.bind(conds, local_vars, e, use_possible=False):
                body = self.simplify_body(tuple(substitute(x, subst) for x in conds))
                if body is None:
                    continue
                if body:
                    raise GroundingError(f"count element conditions must be domain literals: {e}")
                elems.append(CountElem(substitute(e.literal, subst)))
        return Count(c.lower, tuple(elems), c.upper)

    # -- instance generation ----------------------------------------------
    def instances(self, f, where="") -> list:
        """Ground instances of ``f`` (simplified); rules with a false body vanish."""
        if isinstance(f, Rule):
            head_vars = set() if f.head is None else formula_variables(f.head, include_local=False)
            out = []
            seen = set()
            for subst in self.bind(f.body, head_vars, where or f):
                body = self.simplify_body(tuple(substitute(b, subst) for b in f.body))
                if body is None:
                    continue
                head = None if f.head is None else self._ground_head(f.head, subst)
                if isinstance(head, And) and f.head is not None and isinstance(f.head, Atom):
                    inst = [Rule(h, body) for h in head.items]
                else:
                    inst = [Rule(head, body)]
                for r in inst:
                    if r not in seen:
                        seen.add(r)
                        out.append(r)
            return out
        variables = formula_variables(f, include_local=False)
        out = []
        seen = set()
        for subst in self.bind((), variables, where or f):
            g = self._ground_general(f, subst)
            if g not in seen:
                seen.add(g)
                out.append(g)
        return out

    def _ground_head(self, head, subst):
        if isinstance(head, Count):
            return self.expand_count(_count_partial(head, subst))
        return self.simplify_formula(substitute(head, subst))

    def _ground_general(self, f, subst):
        if isinstance(f, Count):
            return self.expand_count(_count_partial(f, subst))
        if isinstance(f, Atom):
            return substitute(f, subst)
        if isinstance(f, Not):
            return Not(self._ground_general(f.sub, subst))
        if isinstance(f, And):
            return And(tuple(self._ground_general(g, subst) for g in f.items))
        if isinstance(f, Or):
            return Or(tuple(self._ground_general(g, subst) for g in f.items))
        if isinstance(f, Comparison):
            return self.simplify_formula(substitute(f, subst))
        raise GroundingError(f"cannot ground {f}")

    # -- whole program ----------------------------------------------------
    def ground(self) -> GroundedProgram:
        """Ground all statements.

        Runs a few rounds so that variables bound only by non-domain atoms
        see the atoms derivable from earlier rounds.
        """
        result = None
        previous_size = -1
        for _ in range(self.max_rounds):
            result = self._ground_once()
            self.possible = _possible_atoms(result)
            size = sum(len(v) for v in self.possible.values())
            if size == previous_size:
                break
            previous_size = size
        return result

    def _ground_once(self) -> GroundedProgram:
        gp = GroundedProgram(domains=self.domains)
        block_groups: dict = {}
        ad_helpers: list = []
        ad_index = 0
        for st, block, bid in _flatten(self.statements):
            if isinstance(st, DomainDecl):
                continue
            if isinstance(st, AnnotatedDisjunction):
                pseudo = Rule(And(tuple(h for _, h in st.alternatives)), st.body)
                for inst in self.instances(pseudo, f"annotated disjunction at line {st.line}"):
                    heads = inst.head.items if isinstance(inst.head, And) else (inst.head,)
                    ad = AnnotatedDisjunction(
                        [(w, h) for (w, _), h in zip(st.alternatives, heads)], inst.body, st.line
                    )
                    helpers, rules = desugar_annotated_disjunction(ad, ad_index)
                    ad_index += 1
                    for r in rules:
                        gp.hard.append(r.formula)
                    for h in helpers:
                        gp.weighted.append(WeightedItem(h.formula, h.annotation.lo, h.annotation.hi, text=str(h.formula), line=st.line))
                        ad_helpers.append(len(gp.weighted) - 1)
                continue
            assert isinstance(st, AnnotatedFormula)
            volatile = block == "volat"
            if st.annotation is None:
                if block not in (None, "volat"):
                    raise GroundingError(f"line {st.line}: unweighted formula inside independence block")
                for g in self.instances(st.formula, st.text or str(st.formula)):
                    if volatile:
                        continue
                    if isinstance(g, And) and all(isinstance(x, Atom) for x in g.items):
                        gp.hard.extend(g.items)
                    else:
                        gp.hard.append(g)
                continue
            items = self.expand_annotated(st)
            if volatile:
                continue
            start = len(gp.weighted)
            for it in items:
                if block in ("indep_volat", "pindep_volat"):
                    it.kind = "indep_only"
                gp.weighted.append(it)
            if block in ("indep", "pindep", "indep_volat", "pindep_volat"):
                group = block_groups.get(bid)
                if group is None:
                    group = IndepGroup([], pairwise=block.startswith("pindep"), source=f"block at line {st.line}")
                    block_groups[bid] = group
                    gp.groups.append(group)
                group.members.extend(range(start, len(gp.weighted)))
        if ad_helpers:
            gp.groups.append(IndepGroup(ad_helpers, pairwise=False, implicit=True, source="annotated disjunctions"))
        return gp

    def expand_annotated(self, st: AnnotatedFormula) -> list:
        """Expand one annotated statement into ground :class:`WeightedItem` objects."""
        ann = st.annotation
        f = st.formula
        where = st.text or str(f)
        if isinstance(f, Rule) and isinstance(f.head, Atom) and f.head.pred == "condPr":
            return self._expand_condpr(st)
        f_inst = sort_instances(self.instances(f, where))
        c_inst = [] if ann.condition is None else sort_instances(self.instances(ann.condition, where))
        kind = "span" if ann.kind == "span" else "weight"
        lo, hi = ann.lo, ann.hi
        text = st.text
        if ann.level == 1:
            if ann.kind == "distribute":
                raise GroundingError(f"line {st.line}: '[:]' needs two or three brackets")
            formula = _conjoin(f_inst)
            cond = None if ann.condition is None else _conjoin(c_inst)
            return [WeightedItem(formula, lo, hi, cond, kind, text, st.line)]
        if ann.kind == "distribute":
            n = len(f_inst)
            if n == 0:
                return []
            w = 1.0 / n
            return [WeightedItem(g, w, w, None, "weight", str(g), st.line) for g in f_inst]
        if ann.condition is None:
            return [WeightedItem(g, lo, hi, None, kind, _instance_text(g), st.line) for g in f_inst]
        if ann.level == 2:
            if len(f_inst) == len(c_inst):
                pairs = list(zip(f_inst, c_inst))
            elif len(f_inst) == 1:
                pairs = [(f_inst[0], c) for c in c_inst]
            else:
                raise GroundingError(
                    f"line {st.line}: {len(f_inst)} instances of the formula but {len(c_inst)} of the condition"
                )
        else:
            pairs = [(g, c) for g in f_inst for c in c_inst]
        return [WeightedItem(g, lo, hi, c, kind, _instance_text(g), st.line) for g, c in pairs]

    def _expand_condpr(self, st: AnnotatedFormula) -> list:
        ann = st.annotation
        if ann.level < 2:
            raise GroundingError(f"line {st.line}: condPr rules need double or triple brackets")
        rule = st.formula
        if len(rule.head.args) != 2:
            raise GroundingError(f"line {st.line}: condPr expects two arguments")
        out = []
        for inst in self.instances(rule, st.text):
            if inst.body:
                raise GroundingError(f"line {st.line}: condPr body must reduce to domain literals and comparisons")
            ftm, ctm = inst.head.args
            fa, ca = _term_to_atom(ftm), _term_to_atom(ctm)
            out.append(WeightedItem(fa, ann.lo, ann.hi, ca, "weight", str(fa), st.line))
        return sort_instances(out, key=lambda it: f"{it.formula} | {it.condition}")


def _term_to_atom(t) -> Atom:
    if isinstance(t, Const):
        return Atom(t.name, ())
    if isinstance(t, Func):
        return Atom(t.name, t.args)
    raise GroundingError(f"expected an atom-like term, got {t}")


def _instance_text(f) -> str:
    if isinstance(f, Rule) and not f.body and f.head is not None:
        return str(f.head)
    return str(f)


def _conjoin(instances: list):
    flat = [_unwrap_fact(g) for g in instances]
    if len(flat) == 1:
        return flat[0]
    return And(tuple(flat))


def _unwrap_fact(g):
    if isinstance(g, Rule) and g.head is not None and not g.body:
        return g.head
    return g


def _count_partial(c: Count, subst: dict) -> Count:
    elems = []
    for e in c.elems:
        lit = _subst_partial(e.literal, subst)
        conds = tuple(_subst_partial(x, subst) for x in e.conditions)
        elems.append(CountElem(lit, conds))
    return Count(c.lower, tuple(elems), c.upper)


def _match_args(pattern: tuple, args: tuple, subst: dict) -> Optional[dict]:
    if len(pattern) != len(args):
        return None
    out = dict(subst)
    for p, a in zip(pattern, args):
        if not _match_term(p, a, out):
            return None
    return out


def _match_term(p, a, subst: dict) -> bool:
    if isinstance(p, Var):
        if p.name == "_":
            return True
        if p.name in subst:
            return subst[p.name] == a
        subst[p.name] = a
        return True
    if isinstance(p, (Num, Const)):
        return p == a
    if isinstance(p, Func):
        if not isinstance(a, Func) or a.name != p.name or len(a.args) != len(p.args):
            return False
        return all(_match_term(x, y, subst) for x, y in zip(p.args, a.args))
    try:
        values = expand_term(p, subst)
    except GroundingError:
        return False
    return a in values


def _possible_atoms(gp: GroundedProgram) -> dict:
    """Over-approximation of atoms that may hold, keyed by signature."""
    out: dict = {}

    def add(a: Atom) -> None:
        out.setdefault(a.signature, set()).add(a.args)

    for key, ext in gp.domains.items():
        for args in ext:
            out.setdefault(key, set()).add(args)
    for f in gp.hard:
        for a in _head_atoms(f):
            add(a)
    for it in gp.weighted:
        for a in formula_atoms(it.formula):
            add(a)
        if it.condition is not None:
            for a in formula_atoms(it.condition):
                add(a)
    return out


def ground_program(statements: list) -> GroundedProgram:
    """Convenience wrapper: ground parsed ``statements``."""
    return Grounder(statements).ground()


def ground_formula(st: AnnotatedFormula, domains: dict) -> list:
    """Ground one annotated formula against ``domains`` (a :class:`DomainMap`)."""
    g = Grounder([])
    g.domains = domains
    g.domain_preds = {k for k in domains}
    return g.expand_annotated(st)

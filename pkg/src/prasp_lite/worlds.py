"""Ground programs, stable models and formula evaluation over worlds.

A :class:`GroundProgram` holds normal rules, choice rules and integrity
constraints over integer atom ids.  Possible worlds are its answer sets;
they are enumerated with a guess-and-propagate search that only branches on
atoms which can influence the Gelfond-Lifschitz reduct (choice atoms and
atoms under default negation or inside count aggregates).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .syntax import And, Atom, Comparison, Count, Not, Or, Rule, formula_atoms
from .grounder import compare

HELPER_PREFIX = "hp__"


class EnumerationLimitError(RuntimeError):
    """Raised when enumeration exceeds its configured resource cap.

    ``partial`` holds the worlds found before the cap was hit.
    """

    def __init__(self, message: str, partial: list):
        super().__init__(message)
        self.partial = partial


class NotSimpleError(ValueError):
    pass


@dataclass(frozen=True)
class CountLit:
    """A ground ``l { lits } u`` aggregate, optionally default-negated."""

    lower: Optional[int]
    upper: Optional[int]
    lits: tuple  # (atom id, positive?)
    negated: bool = False

    def value(self, world) -> bool:
        n = sum(1 for a, pos in self.lits if (a in world) == pos)
        ok = (self.lower is None or n >= self.lower) and (self.upper is None or n <= self.upper)
        return ok != self.negated

    def bounds(self, true: set, false: set) -> tuple:
        """(certainly true, possibly true) under a partial assignment."""
        sure = unsure = 0
        for a, pos in self.lits:
            if a in true:
                if pos:
                    sure += 1
            elif a in false:
                if not pos:
                    sure += 1
            else:
                unsure += 1
        lo_n, hi_n = sure, sure + unsure
        lower = self.lower if self.lower is not None else 0
        upper = self.upper if self.upper is not None else len(self.lits)
        # aggregate holds for some n in [lo_n, hi_n] within [lower, upper]
        can_hold = hi_n >= lower and lo_n <= upper
        must_hold = lo_n >= lower and hi_n <= upper
        if self.negated:
            return (not can_hold, not must_hold)
        return (must_hold, can_hold)

    def atoms(self) -> set:
        return {a for a, _ in self.lits}


@dataclass(frozen=True)
class GroundRule:
    """``head :- pos, not neg, aggs``.

    ``head`` is an atom id, or ``None`` for constraints and choice rules;
    ``choice`` lists the atoms of a choice head with cardinality bounds.
    """

    head: Optional[int] = None
    pos: tuple = ()
    neg: tuple = ()
    aggs: tuple = ()
    choice: Optional[tuple] = None
    lower: Optional[int] = None
    upper: Optional[int] = None

    @property
    def is_constraint(self) -> bool:
        return self.head is None and self.choice is None


class GroundProgram:
    """Ground normal/choice program plus hard formula constraints."""

    def __init__(self) -> None:
        self.atoms: list = []
        self.index: dict = {}
        self.rules: list = []
        self.formulas: list = []  # ground formulas that must hold in every world

    # -- construction -----------------------------------------------------
    def atom_id(self, atom: Atom) -> int:
        i = self.index.get(atom)
        if i is None:
            i = len(self.atoms)
            self.atoms.append(atom)
            self.index[atom] = i
        return i

    def add_rule(self, rule: GroundRule) -> None:
        self.rules.append(rule)

    def add_fact(self, atom: Atom) -> None:
        self.add_rule(GroundRule(head=self.atom_id(atom)))

    def add_choice(self, atoms: Sequence[Atom], lower=None, upper=None, body=()) -> None:
        pos, neg, aggs = self.compile_body(body)
        ids = tuple(self.atom_id(a) for a in atoms)
        self.add_rule(GroundRule(None, pos, neg, aggs, ids, lower, upper))

    def add_formula_constraint(self, f) -> None:
        for a in formula_atoms(f):
            self.atom_id(a)
        self.formulas.append(f)

    def compile_literal(self, lit, negated: bool = False):
        """Return ('pos'|'neg', id) or ('agg', CountLit) or ('true'|'false', None)."""
        if isinstance(lit, Atom):
            return ("neg" if negated else "pos", self.atom_id(lit))
        if isinstance(lit, Not):
            inner = lit.sub
            if isinstance(inner, Not) and isinstance(inner.sub, (Atom, Count)):
                # not not a: evaluated against the candidate world
                c = self.compile_literal(inner.sub, negated)
                if c[0] == "pos":
                    return ("agg", CountLit(1, None, ((c[1], True),), False))
                if c[0] == "neg":
                    return ("agg", CountLit(1, None, ((c[1], True),), True))
                return c
            return self.compile_literal(inner, not negated)
        if isinstance(lit, Count):
            lits = []
            for e in lit.elems:
                if e.conditions:
                    raise NotSimpleError(f"count element with unexpanded conditions: {e}")
                l = e.literal
                if isinstance(l, Atom):
                    lits.append((self.atom_id(l), True))
                elif isinstance(l, Not) and isinstance(l.sub, Atom):
                    lits.append((self.atom_id(l.sub), False))
                else:
                    raise NotSimpleError(f"count elements must be literals: {l}")
            return ("agg", CountLit(lit.lower, lit.upper, tuple(lits), negated))
        if isinstance(lit, And) and not lit.items:
            return ("false" if negated else "true", None)
        if isinstance(lit, Or) and not lit.items:
            return ("true" if negated else "false", None)
        if isinstance(lit, Comparison):
            v = compare(lit.op, lit.left, lit.right)
            return ("true" if v != negated else "false", None)
        raise NotSimpleError(f"not a literal: {lit}")

    def compile_body(self, body: Iterable) -> tuple:
        pos, neg, aggs = [], [], []
        for b in body:
            items = b.items if isinstance(b, And) and b.items else (b,)
            for item in items:
                kind, val = self.compile_literal(item)
                if kind == "pos":
                    pos.append(val)
                elif kind == "neg":
                    neg.append(val)
                elif kind == "agg":
                    aggs.append(val)
                elif kind == "false":
                    return None
        return tuple(pos), tuple(neg), tuple(aggs)

    def add_formula(self, f) -> bool:
        """Add an unweighted ground formula as rules when it is rule-shaped.

        Returns ``False`` (and adds nothing) when ``f`` is not expressible as
        a normal rule, choice rule, fact or constraint.
        """
        try:
            rules = self._rules_for(f)
        except NotSimpleError:
            return False
        for r in rules:
            self.add_rule(r)
        return True

    def _rules_for(self, f) -> list:
        if isinstance(f, Atom):
            return [GroundRule(head=self.atom_id(f))]
        if isinstance(f, And):
            out = []
            for g in f.items:
                out.extend(self._rules_for(g))
            return out
        if isinstance(f, Count):
            return [self._choice_rule(f, ())]
        if isinstance(f, Rule):
            compiled = self.compile_body(f.body)
            if compiled is None:
                return []
            pos, neg, aggs = compiled
            h = f.head
            if h is None:
                return [GroundRule(None, pos, neg, aggs)]
            if isinstance(h, Atom):
                return [GroundRule(self.atom_id(h), pos, neg, aggs)]
            if isinstance(h, Count):
                return [self._choice_rule(h, f.body)]
            if isinstance(h, And) and all(isinstance(x, Atom) for x in h.items):
                return [GroundRule(self.atom_id(x), pos, neg, aggs) for x in h.items]
            if isinstance(h, Or) and not h.items:
                return [GroundRule(None, pos, neg, aggs)]
            raise NotSimpleError(f"unsupported rule head: {h}")
        if isinstance(f, Not):
            kind, val = self.compile_literal(f.sub)
            if kind == "pos":
                return [GroundRule(None, (val,))]
            if kind == "neg":
                return [GroundRule(None, (), (val,))]
            if kind == "agg":
                return [GroundRule(None, (), (), (val,))]
            if kind == "true":
                return [GroundRule(None)]
            return []
        raise NotSimpleError(f"not rule-shaped: {f}")

    def _choice_rule(self, c: Count, body) -> GroundRule:
        compiled = self.compile_body(body)
        if compiled is None:
            compiled = ((), (), ())
        pos, neg, aggs = compiled
        ids = []
        for e in c.elems:
            if not isinstance(e.literal, Atom) or e.conditions:
                raise NotSimpleError(f"choice elements must be atoms: {e}")
            ids.append(self.atom_id(e.literal))
        return GroundRule(None, pos, neg, aggs, tuple(ids), c.lower, c.upper)

    def finalize(self) -> "GroundProgram":
        """Add the implicit ``:- p, -p`` constraints for strong negation."""
        for atom in list(self.atoms):
            if atom.strong:
                pos = Atom(atom.pred, atom.args)
                if pos in self.index:
                    self.add_rule(GroundRule(None, (self.index[pos], self.index[atom])))
        return self

    # -- views --------------------------------------------------------------
    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    def is_helper(self, i: int) -> bool:
        return self.atoms[i].pred.startswith(HELPER_PREFIX)

    def visible_atoms(self, world) -> list:
        return sorted((self.atoms[i] for i in world if not self.is_helper(i)), key=lambda a: a.sort_key())

    def render_world(self, world) -> str:
        return "{" + ",".join(str(a) for a in self.visible_atoms(world)) + "}"

    def to_text(self) -> str:
        """Render the program in input syntax (used by ``--showspan``)."""
        lines = []
        name = lambda i: str(self.atoms[i])  # noqa: E731
        for r in self.rules:
            body = [name(p) for p in r.pos] + [f"not {name(n)}" for n in r.neg]
            for a in r.aggs:
                inner = ", ".join(name(x) if pos else f"not {name(x)}" for x, pos in a.lits)
                lo = "" if a.lower is None else str(a.lower)
                hi = "" if a.upper is None else str(a.upper)
                body.append(("not " if a.negated else "") + f"{lo}{{{inner}}}{hi}")
            if r.choice is not None:
                lo = "" if r.lower is None else str(r.lower)
                hi = "" if r.upper is None else str(r.upper)
                head = f"{lo}{{{', '.join(name(x) for x in r.choice)}}}{hi}"
            elif r.head is not None:
                head = name(r.head)
            else:
                head = ""
            if body:
                lines.append(f"{head} :- {', '.join(body)}." if head else f":- {', '.join(body)}.")
            else:
                lines.append(f"{head}." if head else ":- .")
        for f in self.formulas:
            lines.append(f"{f}.")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# Least models and stability
# ---------------------------------------------------------------------------


def least_model(rules: Iterable[tuple], facts: Iterable[int] = ()) -> set:
    """Least model of a definite program given as ``(head, body_ids)`` pairs."""
    rules = list(rules)
    model = set(facts)
    waiting: dict = {}
    missing = []
    queue = list(model)
    for k, (head, body) in enumerate(rules):
        need = [b for b in set(body) if b not in model]
        missing.append(len(need))
        if not need:
            if head not in model:
                model.add(head)
                queue.append(head)
        for b in need:
            waiting.setdefault(b, []).append(k)
    while queue:
        a = queue.pop()
        for k in waiting.pop(a, ()):
            missing[k] -= 1
            if missing[k] == 0:
                h = rules[k][0]
                if h not in model:
                    model.add(h)
                    queue.append(h)
    return model


def reduct(program: GroundProgram, world) -> list:
    """Gelfond-Lifschitz reduct as definite ``(head, pos)`` pairs.

    Aggregates are evaluated against ``world``, like negated literals.
    Choice rules contribute the chosen atoms of ``world``.
    """
    out = []
    for r in program.rules:
        if any(n in world for n in r.neg):
            continue
        if not all(a.value(world) for a in r.aggs):
            continue
        if r.choice is not None:
            out.extend((c, r.pos) for c in r.choice if c in world)
        elif r.head is not None:
            out.append((r.head, r.pos))
    return out


def _body_true(r: GroundRule, world) -> bool:
    return (
        all(p in world for p in r.pos)
        and not any(n in world for n in r.neg)
        and all(a.value(world) for a in r.aggs)
    )


def is_stable(world, program: GroundProgram) -> bool:
    """Whether ``world`` (a set of atom ids) is an answer set of ``program``."""
    world = frozenset(world)
    for r in program.rules:
        if r.is_constraint and _body_true(r, world):
            return False
        if r.choice is not None and _body_true(r, world):
            n = sum(1 for c in r.choice if c in world)
            if (r.lower is not None and n < r.lower) or (r.upper is not None and n > r.upper):
                return False
    if least_model(reduct(program, world)) != set(world):
        return False
    return all(holds(world, f, program.index) for f in program.formulas)


# ---------------------------------------------------------------------------
# Enumeration
# ---------------------------------------------------------------------------


def guess_atoms(program: GroundProgram) -> list:
    """Atoms whose truth value the search branches on, in universe order."""
    g = set()
    for r in program.rules:
        if r.choice is not None:
            g.update(r.choice)
        g.update(r.neg)
        for a in r.aggs:
            g.update(a.atoms())
    return sorted(g)


class _Search:
    def __init__(self, program: GroundProgram, order: list):
        self.p = program
        self.order = order
        self.guess = set(order)
        self.facts = set()
        self.rules = program.rules
        self.formula_atoms = [
            {program.index[a] for a in formula_atoms(f) if a in program.index} for f in program.formulas
        ]

    def bound(self, true: set, false: set, optimistic: bool) -> set:
        """Least model where undecided guesses are read pessimistically or optimistically."""
        definite = []
        for r in self.rules:
            if optimistic:
                if any(n in true for n in r.neg):
                    continue
                if not all(a.bounds(true, false)[1] for a in r.aggs):
                    continue
            else:
                if not all(n in false for n in r.neg):
                    continue
                if not all(a.bounds(true, false)[0] for a in r.aggs):
                    continue
            if r.choice is not None:
                for c in r.choice:
                    if c in true or (optimistic and c not in false):
                        definite.append((c, r.pos))
            elif r.head is not None:
                definite.append((r.head, r.pos))
        return least_model(definite)

    def consistent(self, true: set, false: set) -> Optional[tuple]:
        low = self.bound(true, false, optimistic=False)
        if low & false:
            return None
        up = self.bound(true, false, optimistic=True)
        if not true <= up:
            return None
        for r in self.rules:
            if r.is_constraint or r.choice is not None:
                certain = (
                    all(p in low for p in r.pos)
                    and all(n in false or (n not in self.guess and n not in up) for n in r.neg)
                    and all(a.bounds(true, false)[0] for a in r.aggs)
                )
                if not certain:
                    continue
                if r.is_constraint:
                    return None
                n_low = sum(1 for c in r.choice if c in low)
                n_up = sum(1 for c in r.choice if c in up)
                if r.upper is not None and n_low > r.upper:
                    return None
                if r.lower is not None and n_up < r.lower:
                    return None
        return low, up


def enumerate_answer_sets(
    program: GroundProgram,
    limit: Optional[int] = None,
    max_worlds: int = 1 << 20,
    rng: Optional[np.random.Generator] = None,
) -> list:
    """Enumerate answer sets as frozensets of atom ids.

    Branching follows the atom universe order with the false branch first,
    so the output order is deterministic.  With ``rng`` the branch order and
    polarity are randomised (used for solver-style random sampling).
    ``limit`` stops after that many models; exceeding ``max_worlds`` raises
    :class:`EnumerationLimitError`.
    """
    order = guess_atoms(program)
    if rng is not None:
        order = [order[i] for i in rng.permutation(len(order))]
    search = _Search(program, order)
    found: list = []
    seen: set = set()

    def visit(k: int, true: set, false: set) -> bool:
        res = search.consistent(true, false)
        if res is None:
            return True
        low, up = res
        if k == len(order):
            if low != up:
                return True
            w = frozenset(low)
            if w in seen or not is_stable(w, program):
                return True
            seen.add(w)
            found.append(w)
            if limit is not None and len(found) >= limit:
                return False
            if len(found) > max_worlds:
                raise EnumerationLimitError(f"more than {max_worlds} answer sets", found)
            return True
        a = order[k]
        first_true = rng is not None and rng.random() < 0.5
        branches = ((true | {a}, false), (true, false | {a}))
        if not first_true:
            branches = branches[::-1]
        for t, f in branches:
            if not visit(k + 1, t, f):
                return False
        return True

    import sys

    old = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old, 4 * len(order) + 1000))
    try:
        visit(0, set(), set())
    finally:
        sys.setrecursionlimit(old)
    return found


def brute_force_answer_sets(program: GroundProgram) -> list:
    """All answer sets by testing every subset of the atom universe."""
    n = program.n_atoms
    out = []
    for bits in itertools.product((False, True), repeat=n):
        w = frozenset(i for i, b in enumerate(bits) if b)
        if is_stable(w, program):
            out.append(w)
    return out


# ---------------------------------------------------------------------------
# Formula evaluation
# ---------------------------------------------------------------------------


def holds(world, f, index: dict) -> bool:
    """Classical truth of ground formula ``f`` in ``world`` (set of atom ids)."""
    if isinstance(f, Atom):
        i = index.get(f)
        return i is not None and i in world
    if isinstance(f, Not):
        return not holds(world, f.sub, index)
    if isinstance(f, And):
        return all(holds(world, g, index) for g in f.items)
    if isinstance(f, Or):
        return any(holds(world, g, index) for g in f.items)
    if isinstance(f, Rule):
        body = all(holds(world, b, index) for b in f.body)
        if f.head is None:
            return not body
        return (not body) or holds(world, f.head, index)
    if isinstance(f, Count):
        n = 0
        for e in f.elems:
            if e.conditions:
                raise ValueError(f"non-ground count element {e}")
            if holds(world, e.literal, index):
                n += 1
        return (f.lower is None or n >= f.lower) and (f.upper is None or n <= f.upper)
    if isinstance(f, Comparison):
        return compare(f.op, f.left, f.right)
    raise ValueError(f"cannot evaluate {f!r}")


def holds_matrix(matrix: np.ndarray, f, index: dict) -> np.ndarray:
    """Vectorised :func:`holds` over the rows of a boolean world matrix."""
    n = matrix.shape[0]
    if isinstance(f, Atom):
        i = index.get(f)
        if i is None or i >= matrix.shape[1]:
            return np.zeros(n, dtype=bool)
        return matrix[:, i].copy()
    if isinstance(f, Not):
        return ~holds_matrix(matrix, f.sub, index)
    if isinstance(f, And):
        out = np.ones(n, dtype=bool)
        for g in f.items:
            out &= holds_matrix(matrix, g, index)
        return out
    if isinstance(f, Or):
        out = np.zeros(n, dtype=bool)
        for g in f.items:
            out |= holds_matrix(matrix, g, index)
        return out
    if isinstance(f, Rule):
        body = np.ones(n, dtype=bool)
        for b in f.body:
            body &= holds_matrix(matrix, b, index)
        if f.head is None:
            return ~body
        return ~body | holds_matrix(matrix, f.head, index)
    if isinstance(f, Count):
        count = np.zeros(n, dtype=int)
        for e in f.elems:
            if e.conditions:
                raise ValueError(f"non-ground count element {e}")
            count += holds_matrix(matrix, e.literal, index)
        ok = np.ones(n, dtype=bool)
        if f.lower is not None:
            ok &= count >= f.lower
        if f.upper is not None:
            ok &= count <= f.upper
        return ok
    if isinstance(f, Comparison):
        return np.full(n, compare(f.op, f.left, f.right))
    raise ValueError(f"cannot evaluate {f!r}")


@dataclass
class WorldSet:
    """Answer sets of a program with a boolean matrix view."""

    program: GroundProgram
    worlds: list

    def __post_init__(self) -> None:
        self._matrix = None

    @property
    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            m = np.zeros((len(self.worlds), self.program.n_atoms), dtype=bool)
            for r, w in enumerate(self.worlds):
                for a in w:
                    m[r, a] = True
            self._matrix = m
        return self._matrix

    def indicator(self, f) -> np.ndarray:
        return holds_matrix(self.matrix, f, self.program.index)

    def __len__(self) -> int:
        return len(self.worlds)

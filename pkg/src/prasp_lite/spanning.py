"""Spanning program construction.

Weights are removed and every weighted formula is replaced by a
nondeterministic *spanning* fragment whose answer sets cover both the case
where the formula holds and the case where it does not.  The answer sets of
the resulting program are the possible worlds.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional

from .grounder import GroundedProgram, IndepGroup, WeightedItem
from .syntax import And, Atom, Count, Not, Or, Rule, formula_atoms
from .worlds import GroundProgram, GroundRule, NotSimpleError

log = logging.getLogger(__name__)

#: Above this size the implicit independence group is reduced to pairwise rows.
AUTO_INDEP_MUTUAL_LIMIT = 12


@dataclass
class SpanningProgram:
    program: GroundProgram
    weighted: list  # WeightedItem, aligned with GroundedProgram.weighted
    groups: list  # IndepGroup
    helpers: set = field(default_factory=set)  # ids of generated helper atoms

    def visible(self, atom_id: int) -> bool:
        return atom_id not in self.helpers and not self.program.is_helper(atom_id)


def _is_certain(item: WeightedItem) -> bool:
    return item.condition is None and item.lo is not None and item.lo >= 1.0 and item.hi >= 1.0


def spanning_for_atom(program: GroundProgram, atom: Atom, weight: Optional[float] = None) -> None:
    """``0 {a} 1`` for an uncertain atom; a plain fact when the weight is 1."""
    if weight is not None and weight >= 1.0:
        program.add_fact(atom)
    else:
        program.add_choice([atom], 0, 1)


def spanning_for_rule(program: GroundProgram, rule: Rule, helper: Atom, choice: bool = True) -> None:
    """Split worlds into "rule holds" (helper true) and "rule violated".

    Emits ``0 {g} 1``, ``h :- body, g``, one ``:- not g, not b_i`` per body
    literal and ``:- not g, h``.  In worlds without ``g`` the body is true and
    the head false.  With ``choice=False`` the caller defines ``g`` itself.
    """
    if rule.head is not None and not isinstance(rule.head, Atom):
        raise NotSimpleError(f"rule spanning needs a single-atom head: {rule}")
    compiled = program.compile_body(rule.body)
    if compiled is None:
        # the body can never hold: the rule is trivially satisfied
        return
    pos, neg, aggs = compiled
    g = program.atom_id(helper)
    if choice:
        program.add_choice([helper], 0, 1)
    head = None if rule.head is None else program.atom_id(rule.head)
    program.add_rule(GroundRule(head, pos + (g,), neg, aggs))
    for p in pos:
        program.add_rule(GroundRule(None, (), (g, p)))
    for n in neg:
        program.add_rule(GroundRule(None, (n,), (g,)))
    for a in aggs:
        flipped = type(a)(a.lower, a.upper, a.lits, not a.negated)
        program.add_rule(GroundRule(None, (), (g,), (flipped,)))
    if head is not None:
        program.add_rule(GroundRule(None, (head,), (g,)))


def _rule_spannable(program: GroundProgram, f) -> bool:
    if not isinstance(f, Rule) or not (f.head is None or isinstance(f.head, Atom)):
        return False
    probe = GroundProgram()
    try:
        probe.compile_body(f.body)
    except NotSimpleError:
        return False
    return True


def _defined_heads(program: GroundProgram) -> set:
    out = set()
    for r in program.rules:
        if r.head is not None:
            out.add(r.head)
        if r.choice is not None:
            out.update(r.choice)
    return out


def build_spanning_program(
    gp: GroundedProgram,
    auto_indeps: bool = True,
    declared_indeps: bool = True,
    encode=None,
) -> SpanningProgram:
    """Compile a grounded program into its spanning program.

    ``auto_indeps`` adds the implicit mutual-independence group of weighted
    atoms that nothing else defines; ``declared_indeps`` keeps the
    ``#indep``/``#pIndep`` groups.  ``encode(program, item, k)`` may take over
    the encoding of an uncertain item (returning the helper atom ids it
    created, or ``None`` to fall back to ordinary spanning).
    """
    prog = GroundProgram()
    pending: list = []  # atoms that need a choice if nothing defines them

    for f in gp.hard:
        if not prog.add_formula(f):
            prog.add_formula_constraint(f)
            pending.extend(formula_atoms(f))

    helpers: set = set()
    span_counter = 0
    for item in gp.weighted:
        if item.kind == "indep_only":
            for a in formula_atoms(item.formula):
                prog.atom_id(a)
            continue
        f = item.formula
        if item.condition is not None:
            pending.extend(formula_atoms(f))
            pending.extend(formula_atoms(item.condition))
            continue
        if item.kind == "span":
            if isinstance(f, Atom):
                spanning_for_atom(prog, f)
            else:
                pending.extend(formula_atoms(f))
            continue
        if _is_certain(item):
            if not prog.add_formula(f):
                prog.add_formula_constraint(f)
                pending.extend(formula_atoms(f))
            continue
        if encode is not None:
            made = encode(prog, item, len(helpers) + span_counter)
            if made is not None:
                helpers.update(made)
                if not isinstance(f, (Atom, Rule)):
                    pending.extend(formula_atoms(f))
                continue
        if isinstance(f, Atom):
            spanning_for_atom(prog, f, item.lo if item.is_point else None)
        elif isinstance(f, Rule) and not f.body and isinstance(f.head, Atom):
            spanning_for_atom(prog, f.head)
        elif _rule_spannable(prog, f):
            helper = Atom(f"hp__span_{span_counter}")
            span_counter += 1
            spanning_for_rule(prog, f, helper)
            helpers.add(prog.atom_id(helper))
        else:
            pending.extend(formula_atoms(f))

    defined = _defined_heads(prog)
    seen: set = set()
    for a in pending:
        i = prog.atom_id(a)
        if i in defined or i in seen:
            continue
        seen.add(i)
        prog.add_choice([a], 0, 1)
    prog.finalize()

    groups = [g for g in gp.groups if g.implicit or declared_indeps]
    if auto_indeps:
        auto = _auto_group(gp, prog, defined)
        if auto is not None:
            groups.append(auto)
    return SpanningProgram(prog, list(gp.weighted), groups, helpers)


def _auto_group(gp: GroundedProgram, prog: GroundProgram, defined_before: set) -> Optional[IndepGroup]:
    """Weighted atoms that nothing else defines are assumed independent."""
    in_groups = {m for g in gp.groups for m in g.members}
    in_conditions = set()
    for it in gp.weighted:
        if it.condition is not None:
            in_conditions.update(formula_atoms(it.condition))
            in_conditions.update(formula_atoms(it.formula))
    # atoms defined by something other than their own spanning choice
    other_defs: dict = {}
    for r in prog.rules:
        if r.head is not None:
            other_defs[r.head] = other_defs.get(r.head, 0) + 2
        if r.choice is not None:
            for c in r.choice:
                weight = 1 if len(r.choice) == 1 and r.lower in (None, 0) and r.upper == 1 and not r.pos and not r.neg and not r.aggs else 2
                other_defs[c] = other_defs.get(c, 0) + weight
    members = []
    seen_atoms = set()
    for k, it in enumerate(gp.weighted):
        if k in in_groups or it.kind != "weight" or it.condition is not None:
            continue
        if not isinstance(it.formula, Atom) or it.formula in in_conditions:
            continue
        if it.formula in seen_atoms:
            continue
        i = prog.index[it.formula]
        if other_defs.get(i, 0) > 1:
            continue
        if any(it.formula in set(formula_atoms(f)) for f in prog.formulas):
            continue
        seen_atoms.add(it.formula)
        members.append(k)
    if len(members) < 2:
        return None
    pairwise = False
    if len(members) > AUTO_INDEP_MUTUAL_LIMIT:
        warnings.warn(
            f"{len(members)} implicitly independent atoms; using pairwise independence constraints",
            stacklevel=2,
        )
        pairwise = True
    return IndepGroup(members, pairwise=pairwise, implicit=True, source="implicit")

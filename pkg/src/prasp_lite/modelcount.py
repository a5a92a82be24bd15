"""Inference by counting answer sets.

Plain counting ignores weights: the probability of a query is the fraction
of possible worlds satisfying it.  The weights-to-counting transform turns
every point weight ``m/n`` into ``n`` mutually exclusive helper atoms of
which ``m`` imply the formula, so that plain counting over the transformed
program reproduces the weights (for mutually independent formulas).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .grounder import GroundedProgram, WeightedItem
from .spanning import SpanningProgram, _rule_spannable, build_spanning_program, spanning_for_rule
from .syntax import And, Atom, Not, Or, Rule
from .worlds import GroundRule, WorldSet

DEFAULT_DENOMINATOR_CAP = 20


@dataclass
class CountingConfig:
    mode: str = "plain"  # plain | weights2cc
    denominator_cap: int = DEFAULT_DENOMINATOR_CAP

    def __post_init__(self) -> None:
        if self.mode not in ("plain", "weights2cc"):
            raise ValueError(f"unknown counting mode {self.mode!r}")
        if self.denominator_cap < 2:
            raise ValueError("the denominator cap must be at least 2")


def rational_weight(w: float, cap: int = DEFAULT_DENOMINATOR_CAP) -> Fraction:
    """Closest fraction to ``w`` with denominator at most ``cap``."""
    frac = Fraction(w).limit_denominator(cap)
    if abs(float(frac) - w) > 1e-12:
        warnings.warn(f"weight {w} approximated by {frac} for counting", stacklevel=2)
    return frac


def counting_probability(worldset: WorldSet, f, condition=None, context: Optional[np.ndarray] = None) -> Optional[Fraction]:
    """Exact ``|worlds with f| / |worlds|`` (conditional on ``condition``)."""
    f_ind = worldset.indicator(f)
    if context is not None:
        f_ind = f_ind & context
    if condition is None:
        den = len(worldset)
    else:
        c_ind = worldset.indicator(condition)
        f_ind = f_ind & c_ind
        den = int(c_ind.sum())
    if den == 0:
        return None
    return Fraction(int(f_ind.sum()), den)


def counting_inference(worldset: WorldSet, queries: Sequence[WeightedItem], context: Optional[np.ndarray] = None) -> list:
    """One exact fraction (or ``None`` when undefined) per ground query."""
    return [counting_probability(worldset, q.formula, q.condition, context) for q in queries]


def weights2cc_transform(gp: GroundedProgram, cap: int = DEFAULT_DENOMINATOR_CAP) -> SpanningProgram:
    """Spanning program in which point weights are encoded by helper counts.

    For ``[m/n] f``: ``1{h1;...;hn}1`` plus ``f :- hi`` for ``i <= m`` and
    ``:- f, not h1, ..., not hm`` (atoms),
    the rule-spanning constraints with ``g :- hi`` (rules), or the formula
    constraint ``(h1 | ... | hm) <-> f`` (other formulas).  Interval and
    conditional weights keep their ordinary spanning encoding.
    """
    counter = [0]

    def encode(prog, item: WeightedItem, _k: int):
        if not item.is_point:
            warnings.warn(f"interval weight on {item.text or item.formula} ignored by counting", stacklevel=3)
            return None
        f = item.formula
        if isinstance(f, Rule) and not f.body and isinstance(f.head, Atom):
            f = f.head
        if isinstance(f, Rule) and not _rule_spannable(prog, f):
            return None
        frac = rational_weight(item.lo, cap)
        m, n = frac.numerator, frac.denominator
        k = counter[0]
        counter[0] += 1
        hs = [Atom(f"hp__cc_{k}_{i}") for i in range(n)]
        prog.add_choice(hs, 1, 1)
        made = {prog.atom_id(h) for h in hs}
        if isinstance(f, Atom):
            target = prog.atom_id(f)
            for h in hs[:m]:
                prog.add_rule(GroundRule(target, (prog.atom_id(h),)))
            # other rules (e.g. a choice) may also define f: exclude it unless some hi with i <= m holds
            prog.add_rule(GroundRule(None, (target,), tuple(prog.atom_id(h) for h in hs[:m])))
        elif isinstance(f, Rule):
            g = Atom(f"hp__cc_{k}_g")
            spanning_for_rule(prog, f, g, choice=False)
            gid = prog.atom_id(g)
            made.add(gid)
            for h in hs[:m]:
                prog.add_rule(GroundRule(gid, (prog.atom_id(h),)))
        else:
            chosen = Or(tuple(hs[:m])) if m > 0 else None
            if chosen is None:
                prog.add_formula_constraint(Not(f))
            else:
                prog.add_formula_constraint(And((Or((Not(chosen), f)), Or((Not(f), chosen)))))
        return made

    return build_spanning_program(gp, auto_indeps=False, declared_indeps=False, encode=encode)

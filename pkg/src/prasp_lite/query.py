"""Query evaluation over a computed distribution and result formatting."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .grounder import Grounder, WeightedItem
from .linsys import ConstraintSystem, InfeasibleError, solve_lp_bounds, solve_lp_ratio_bounds
from .syntax import AnnotatedFormula, Atom, Rule, format_probability
from .worlds import WorldSet

#: Conditions less probable than this make a conditional query unanswerable.
UNKNOWN_THRESHOLD = 1e-12


@dataclass
class QueryResult:
    """The answer to one ground query.

    ``kind`` is ``point`` (``values == (p,)``), ``interval`` (``(lo, hi)``),
    ``list`` (one probability per sampled distribution) or ``unknown``.
    """

    text: str
    condition: Optional[str] = None
    kind: str = "unknown"
    values: tuple = ()

    def __post_init__(self) -> None:
        if self.kind == "interval" and self.values[0] > self.values[1]:
            raise ValueError(f"interval result with lo > hi: {self.values}")

    @property
    def value(self) -> Optional[float]:
        """The point value, the interval midpoint, or ``None`` when unknown."""
        if self.kind == "point":
            return self.values[0]
        if self.kind == "interval":
            return 0.5 * (self.values[0] + self.values[1])
        if self.kind == "list":
            return float(np.mean(self.values))
        return None


@dataclass
class Belief:
    """What queries are answered from.

    ``distributions`` holds one or more probability vectors over the worlds
    of ``worldset`` (several only with ``--ndistrs``); ``system`` is the
    constraint system used for interval results.  When the distribution
    stems from counting sampled models, ``counts`` holds the multiplicities
    and probabilities are computed as exact ratios of counts.
    """

    worldset: WorldSet
    distributions: list = field(default_factory=list)
    system: Optional[ConstraintSystem] = None
    counts: Optional[np.ndarray] = None

    @classmethod
    def from_counts(cls, worldset: WorldSet, counts: np.ndarray, system=None) -> "Belief":
        counts = np.asarray(counts, dtype=float)
        return cls(worldset, [counts / counts.sum()], system, counts)

    @property
    def probs(self) -> np.ndarray:
        return self.distributions[0]


def _clamp(p: float) -> float:
    return min(1.0, max(0.0, p))


def _ratio(num: float, den: float) -> Optional[float]:
    if den < UNKNOWN_THRESHOLD:
        return None
    return _clamp(num / den)


def answer_query(
    belief: Belief,
    item: WeightedItem,
    context: Optional[np.ndarray] = None,
    intervals: bool = False,
) -> QueryResult:
    """Probability of a ground query.

    ``context`` is a boolean vector over the worlds (the conjunction of the
    query file's unannotated formulas); it is conjoined into the query
    formula.  With ``intervals`` the range over every distribution solving
    ``belief.system`` is returned.
    """
    ws = belief.worldset
    cond_text = None if item.condition is None else str(item.condition)
    f_ind = ws.indicator(item.formula)
    if context is not None:
        f_ind = f_ind & context
    c_ind = None if item.condition is None else ws.indicator(item.condition)
    if c_ind is not None:
        f_ind = f_ind & c_ind
    f_vec = f_ind.astype(float)
    if intervals:
        if belief.system is None:
            raise ValueError("interval results need a constraint system")
        try:
            if c_ind is None:
                lo, hi = solve_lp_bounds(belief.system, f_vec)
            else:
                lo, hi = solve_lp_ratio_bounds(belief.system, f_vec, c_ind.astype(float))
        except InfeasibleError:
            return QueryResult(item.text, cond_text)
        lo, hi = _clamp(lo), _clamp(hi)
        return QueryResult(item.text, cond_text, "interval", (min(lo, hi), max(lo, hi)))
    if belief.counts is not None:
        num = int(round(float(f_vec @ belief.counts)))
        den = int(round(float(belief.counts.sum() if c_ind is None else c_ind.astype(float) @ belief.counts)))
        if den == 0:
            return QueryResult(item.text, cond_text)
        return QueryResult(item.text, cond_text, "point", (float(Fraction(num, den)),))
    values = []
    for probs in belief.distributions:
        num = float(f_vec @ probs)
        if c_ind is None:
            values.append(_clamp(num))
            continue
        v = _ratio(num, float(c_ind.astype(float) @ probs))
        if v is None:
            return QueryResult(item.text, cond_text)
        values.append(v)
    if not values:
        return QueryResult(item.text, cond_text)
    if len(values) == 1:
        return QueryResult(item.text, cond_text, "point", (values[0],))
    return QueryResult(item.text, cond_text, "list", tuple(values))


def format_result(r: QueryResult) -> str:
    """``[p] f.``, ``[p|c] f.``, ``[lo;hi] f.``, ``[p1,p2] f.`` or ``[?] f.``."""
    text = r.text.rstrip(".")
    if r.kind == "unknown":
        head = "?"
    elif r.kind == "interval":
        head = f"{format_probability(r.values[0])};{format_probability(r.values[1])}"
    else:
        head = ",".join(format_probability(v) for v in r.values)
    if r.condition is not None:
        head = f"{head}|{r.condition}"
    return f"[{head}] {text}."


# ---------------------------------------------------------------------------
# Query files
# ---------------------------------------------------------------------------


@dataclass
class QueryFile:
    """Parsed query file: the ``[?]`` statements and the unannotated context."""

    queries: list  # AnnotatedFormula with a query annotation
    context: list  # unannotated AnnotatedFormula
    domain_statements: list = field(default_factory=list)

    @classmethod
    def from_statements(cls, statements: Sequence) -> "QueryFile":
        queries, context, domain = [], [], []
        for st in statements:
            if isinstance(st, AnnotatedFormula) and st.annotation is not None:
                if st.annotation.kind != "query":
                    raise ValueError(f"line {st.line}: query files may not contain weights")
                queries.append(st)
            elif isinstance(st, AnnotatedFormula):
                context.append(st)
            else:
                domain.append(st)
        return cls(queries, context, domain)


def ground_queries(qf: QueryFile, background_statements: Sequence) -> tuple:
    """Ground the queries of ``qf`` using the background plus query-file facts.

    Returns ``(list of (statement, [WeightedItem]), list of ground context
    formulas)``.  Plain facts in the query file only feed grounding; every
    other unannotated formula becomes context.
    """
    grounder = Grounder(list(background_statements) + list(qf.context) + list(qf.domain_statements))
    grounder.ground()
    out = []
    for st in qf.queries:
        items = grounder.expand_annotated(st)
        if st.annotation.level == 1:
            for it in items:
                it.text = st.text
        out.append((st, items))
    context = []
    for st in qf.context:
        for g in grounder.instances(st.formula, st.text):
            g = _unwrap_fact(g)
            if not isinstance(g, Atom):
                context.append(g)
    return out, context


def context_indicator(worldset: WorldSet, formulas: Sequence) -> Optional[np.ndarray]:
    if not formulas:
        return None
    ind = np.ones(len(worldset), dtype=bool)
    for f in formulas:
        ind &= worldset.indicator(f)
    return ind


def _unwrap_fact(g):
    if isinstance(g, Rule) and g.head is not None and not g.body:
        return g.head
    return g


"""Weight learning: maximise the likelihood of examples over hypothesis weights.

The likelihood of a weight vector is the product of the example
probabilities inferred from the background knowledge plus the weighted
hypotheses.  It is maximised by Barzilai-Borwein gradient ascent with
forward-difference gradients, projected onto a box inside ``(0, 1)``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .approx import RefineParams, refine_vectors
from .engine import InferenceConfig
from .grounder import Grounder
from .linsys import build_system, pick_distribution, solve_nnls
from .spanning import build_spanning_program
from .syntax import And, Annotation, AnnotatedFormula, Atom, Rule, format_probability
from .worlds import WorldSet, enumerate_answer_sets

log = logging.getLogger(__name__)

BOX = (0.001, 0.999)
#: Refinement settings for the inner inference runs.  Gradients are taken by
#: finite differences, so the inner solves must be far more accurate than the
#: interactive default.
LEARNING_REFINE = RefineParams(epsilon=1e-12, max_iterations=5000)


@dataclass
class LearningTask:
    """Background program, ``[?]`` hypotheses and unweighted examples."""

    background: list
    hypotheses: list  # AnnotatedFormula with a query annotation
    examples: list  # unannotated AnnotatedFormula
    conjunctive_target: bool = False
    keep_duplicates: bool = False
    normalize: bool = True

    def __post_init__(self) -> None:
        if not self.hypotheses:
            raise ValueError("learning needs at least one hypothesis formula")
        for h in self.hypotheses:
            if not isinstance(h, AnnotatedFormula) or h.annotation is None or h.annotation.kind != "query":
                raise ValueError(f"line {getattr(h, 'line', '?')}: hypotheses must be annotated with [?]")
            if h.annotation.condition is not None:
                raise ValueError(f"line {h.line}: conditional hypotheses are not supported")
        for e in self.examples:
            if not isinstance(e, AnnotatedFormula):
                raise ValueError("examples must be formulas")
            if e.annotation is not None:
                raise ValueError(f"line {e.line}: weighted examples are not yet supported")


@dataclass
class LearnedWeights:
    w: np.ndarray
    objective: float
    iterations: int
    trace: list = field(default_factory=list)  # objective per accepted iterate

    def lines(self, task: LearningTask) -> list:
        return [f"[{format_probability(round(float(x), 6))}] {h.text.rstrip('.')}." for x, h in zip(self.w, task.hypotheses)]


def _unwrap(g):
    if isinstance(g, Rule) and g.head is not None and not g.body:
        return g.head
    return g


class LikelihoodModel:
    """Ground, span and enumerate once; then evaluate weight vectors.

    Hypothesis weights never reach 0 or 1 inside the projection box, so the
    spanning program (and therefore the set of possible worlds) does not
    depend on them; only the constraint rows change between evaluations.
    """

    def __init__(self, task: LearningTask, cfg: Optional[InferenceConfig] = None, refine: RefineParams = LEARNING_REFINE):
        self.task = task
        self.cfg = cfg or InferenceConfig(solver="itrefine")
        self.refine = refine
        placeholders = [
            AnnotatedFormula(Annotation("point", 0.5, 0.5, level=h.annotation.level), h.formula, h.line, h.text)
            for h in task.hypotheses
        ]
        statements = list(task.background) + placeholders
        grounder = Grounder(statements)
        gp = grounder.ground()
        sizes = [len(grounder.expand_annotated(p)) for p in placeholders]
        total = sum(sizes)
        start = len(gp.weighted) - total
        self.slices = []
        for n in sizes:
            self.slices.append(list(range(start, start + n)))
            start += n
        span = build_spanning_program(gp, self.cfg.auto_indeps, self.cfg.declared_indeps)
        self.items = span.weighted
        self.groups = span.groups
        worlds = enumerate_answer_sets(span.program, max_worlds=self.cfg.max_worlds)
        self.worldset = WorldSet(span.program, worlds)
        self.example_indicators = self._example_indicators(grounder)
        self.rng = np.random.default_rng(self.cfg.seed)
        self.evaluations = 0

    def _example_indicators(self, grounder: Grounder) -> list:
        seen = set()
        out = []
        for e in self.task.examples:
            inst = [_unwrap(g) for g in grounder.instances(e.formula, e.text)]
            f = inst[0] if len(inst) == 1 else And(tuple(inst))
            if not inst:
                continue
            if not self.task.keep_duplicates:
                if f in seen:
                    continue
                seen.add(f)
            out.append(self.worldset.indicator(f).astype(float))
        if self.task.conjunctive_target and out:
            joint = np.prod(np.vstack(out), axis=0)
            out = [joint]
        return out

    def set_weights(self, w: Sequence[float]) -> None:
        for x, sl in zip(w, self.slices):
            for k in sl:
                self.items[k].lo = self.items[k].hi = float(x)

    def distribution(self, w: Sequence[float]) -> np.ndarray:
        self.set_weights(w)
        system = build_system(
            self.worldset, self.items, self.groups, self.cfg.limit_indep_combs, independence=self.cfg.indep_constraints
        )
        if self.cfg.solver == "itrefine":
            p0 = np.full(len(self.worldset), 1.0 / len(self.worldset))
            return refine_vectors(p0, system.refine_triples, self.refine)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return pick_distribution(system, "ignore-entropy", 1, self.rng).probs

    def example_probabilities(self, w: Sequence[float]) -> list:
        p = self.distribution(w)
        return [float(ind @ p) for ind in self.example_indicators]

    def __call__(self, w: Sequence[float]) -> float:
        """Likelihood of the examples; ``-inf`` when inference fails."""
        self.evaluations += 1
        try:
            probs = self.example_probabilities(w)
        except (ValueError, RuntimeError, FloatingPointError) as exc:
            log.debug("inference failed at %s: %s", list(w), exc)
            return -math.inf
        return float(np.prod(probs)) if probs else 1.0


def likelihood(task: LearningTask, w: Sequence[float], cfg: Optional[InferenceConfig] = None) -> float:
    """Product of the example probabilities under hypothesis weights ``w``."""
    return LikelihoodModel(task, cfg)(w)


def numeric_gradient(objective, w: Sequence[float]) -> np.ndarray:
    """Forward differences with step ``sqrt(eps) * w_i`` (at least 1e-8)."""
    w = np.asarray(w, dtype=float)
    f0 = objective(w)
    grad = np.zeros_like(w)
    for i in range(w.size):
        h = max(math.sqrt(np.finfo(float).eps) * abs(w[i]), 1e-8)
        step = w.copy()
        step[i] += h
        grad[i] = (objective(step) - f0) / h
    return grad


def _project(w: np.ndarray) -> np.ndarray:
    return np.clip(w, *BOX)


def bb_learn(
    objective,
    w0: Optional[Sequence[float]] = None,
    n: Optional[int] = None,
    alpha0: float = 1.0,
    max_iter: int = 200,
    tol: float = 1e-4,
) -> LearnedWeights:
    """Barzilai-Borwein ascent on ``objective`` over the box ``[0.001, 0.999]^n``.

    The step is ``s_k = grad_k / alpha_k`` (projected), and the next step
    parameter is ``alpha_{k+1} = -s_k.y_k / s_k.s_k`` with ``y_k`` the gradient
    change; the sign makes the quotient positive near a maximum.  When it is
    not positive and finite the previous value is kept.
    """
    if w0 is None:
        if n is None:
            raise ValueError("either w0 or n is needed")
        w0 = np.full(n, 0.5)
    w = _project(np.asarray(w0, dtype=float))
    alpha = alpha0
    grad = numeric_gradient(objective, w)
    f = objective(w)
    best = (f, w.copy())
    trace = [f]
    bad = 0
    k = 0
    for k in range(1, max_iter + 1):
        w_new = _project(w + grad / alpha)
        s = w_new - w
        if float(np.linalg.norm(s)) <= tol:
            break
        f_new = objective(w_new)
        if not math.isfinite(f_new):
            bad += 1
            if bad >= 5:
                warnings.warn("learning diverged; returning the best weights found", stacklevel=2)
                break
        else:
            bad = 0
        grad_new = numeric_gradient(objective, w_new)
        y = grad_new - grad
        ss = float(s @ s)
        a = -float(s @ y) / ss if ss > 0 else math.nan
        if math.isfinite(a) and a > 1e-12:
            alpha = a
        w, grad, f = w_new, grad_new, f_new
        trace.append(f)
        if math.isfinite(f) and f > best[0]:
            best = (f, w.copy())
    w_out = w if math.isfinite(f) and f >= best[0] else best[1]
    return LearnedWeights(w_out, max(f, best[0]) if math.isfinite(f) else best[0], k, trace)


def normalize_weights(model: LikelihoodModel, w: np.ndarray) -> np.ndarray:
    """Clamp to [0, 1]; if the weights contradict the background knowledge,
    move them to the hypothesis probabilities of one least-squares solve."""
    w = np.clip(np.asarray(w, dtype=float), 0.0, 1.0)
    model.set_weights(w)
    system = build_system(model.worldset, model.items, model.groups, model.cfg.limit_indep_combs, model.cfg.indep_constraints)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        dist = solve_nnls(system)
    if dist.residual <= 1e-6:
        return w
    out = w.copy()
    for i, sl in enumerate(model.slices):
        if sl:
            ind = model.worldset.indicator(model.items[sl[0]].formula).astype(float)
            out[i] = float(ind @ dist.probs)
    return out


def learn(task: LearningTask, cfg: Optional[InferenceConfig] = None, max_iter: int = 200, tol: float = 1e-4) -> LearnedWeights:
    """Learn hypothesis weights for ``task`` (w0 = 0.5, alpha0 = 1)."""
    model = LikelihoodModel(task, cfg)
    result = bb_learn(model, n=len(task.hypotheses), max_iter=max_iter, tol=tol)
    if task.normalize:
        result.w = normalize_weights(model, result.w)
    return result


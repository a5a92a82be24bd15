"""The inference pipeline: ground, span, sample, solve, answer queries."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .approx import (
    AnnealParams,
    RefineParams,
    WalkSatParams,
    iterative_refinement,
    maxwalksat,
    simulated_annealing,
    walksat_weight,
)
from .grounder import Grounder, GroundedProgram
from .linsys import ConstraintSystem, build_system, candidate_distributions, entropy, pick_distribution
from .modelcount import weights2cc_transform
from .query import Belief, QueryFile, QueryResult, answer_query, context_indicator, format_result, ground_queries
from .sampling import SampleMultiset, SamplerConfig, SamplingContext, initial_sample, make_rng, sample_uniform
from .spanning import SpanningProgram, build_spanning_program
from .syntax import Annotation, format_probability, formula_atoms, load_source, parse_program, render_statement
from .worlds import GroundProgram, WorldSet

log = logging.getLogger(__name__)

#: Default target number of sampled models for the sampling methods.
DEFAULT_SAMPLE_MODELS = 1 << 10


@dataclass
class InferenceConfig:
    """Everything that selects and tunes the inference pipeline.

    ``solver`` is ``nnls`` (linear system with entropy-ranked candidates),
    ``itrefine``, ``simanneal`` or ``maxwalksat``.  ``initsample`` and
    ``models`` follow ``--initsample``/``--models``; ``None`` picks the
    defaults (all models for the exact solvers, 1024 samples otherwise).
    """

    solver: str = "nnls"
    nosolve: bool = False
    nospan: bool = False
    weights2cc: bool = False
    interval_results: bool = False
    ndistrs: int = 1
    max_entropy: bool = False
    ignore_entropy: bool = False
    auto_indeps: bool = True
    indep_constraints: bool = True
    declared_indeps: bool = True
    limit_indep_combs: Optional[int] = None
    initsample: Optional[int] = None
    models: Optional[int] = None
    uni_method: int = 0
    xor_q1: int = 100
    xor_q2: Optional[int] = None
    flip_uni: int = 0
    sirnd_o: int = 100
    anneal: AnnealParams = field(default_factory=AnnealParams)
    refine: RefineParams = field(default_factory=RefineParams)
    walksat: WalkSatParams = field(default_factory=WalkSatParams)
    n_candidates: int = 5
    max_worlds: int = 1 << 16
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        if self.solver not in ("nnls", "itrefine", "simanneal", "maxwalksat"):
            raise ValueError(f"unknown solver {self.solver!r}")
        if self.ndistrs < 1:
            raise ValueError("--ndistrs needs a positive number")
        if self.nospan and self.solver != "maxwalksat":
            raise ValueError("--nospan is only meaningful together with --maxwalksat")

    def sampler_config(self) -> SamplerConfig:
        method = 2 if self.initsample is None else self.initsample
        if self.models is not None:
            n = self.models
        elif method == 2 or self.solver == "simanneal" and self.initsample is None:
            n = 0
        else:
            n = DEFAULT_SAMPLE_MODELS
        if self.solver == "simanneal" and self.initsample is None:
            method = 0
        return SamplerConfig(method, n, self.uni_method, self.xor_q1, self.xor_q2, self.flip_uni, self.sirnd_o)

    def describe(self) -> list:
        """Human-readable summary of the chosen defaults (for ``--verbose``)."""
        s = self.sampler_config()
        return [
            f"solver: {self.solver}{' (no solving, counting)' if self.nosolve else ''}",
            f"initial sampling: method {s.method}, models {s.n or 'all'}",
            f"uniform sampling: method {s.uni_method}; xor q1={s.xor_q1} q2={s.xor_q2 or 'auto'}",
            f"independence: auto={self.auto_indeps} declared={self.declared_indeps} rows={self.indep_constraints}",
            f"seed: {self.seed}",
        ]


def load_statements(path: Union[str, Path], query_mode: bool = False) -> list:
    """Read, preprocess and parse one program file."""
    return parse_program(load_source(path), source=str(path), query_mode=query_mode)


def _to_worldset(program: GroundProgram, samples: SampleMultiset) -> tuple:
    """Distinct worlds of a multiset (first-seen order) and their counts."""
    order: dict = {}
    for w in samples.worlds:
        order[w] = order.get(w, 0) + 1
    worlds = list(order)
    return WorldSet(program, worlds), np.array([order[w] for w in worlds], dtype=float)


class Engine:
    """Run inference for one background program.

    The distribution is computed once (lazily) and shared by all query
    files.  The ``*_lines`` methods render the informational output of
    ``--check``, ``--showspan`` and similar switches.
    """

    def __init__(self, statements: Sequence, cfg: Optional[InferenceConfig] = None):
        self.statements = list(statements)
        self.cfg = cfg or InferenceConfig()
        self.rng = make_rng(self.cfg.seed)
        self._gp: Optional[GroundedProgram] = None
        self._span: Optional[SpanningProgram] = None
        self._ctx: Optional[SamplingContext] = None
        self._belief: Optional[Belief] = None

    # -- stages -------------------------------------------------------------
    @property
    def grounded(self) -> GroundedProgram:
        if self._gp is None:
            self._gp = Grounder(self.statements).ground()
        return self._gp

    @property
    def span(self) -> SpanningProgram:
        if self._span is None:
            gp = self.grounded
            if self.cfg.weights2cc:
                self._span = weights2cc_transform(gp)
            else:
                self._span = build_spanning_program(gp, self.cfg.auto_indeps, self.cfg.declared_indeps)
        return self._span

    @property
    def context(self) -> SamplingContext:
        if self._ctx is None:
            self._ctx = SamplingContext(self.span, max_worlds=self.cfg.max_worlds)
        return self._ctx

    def _items(self) -> list:
        # weights2cc encodes the weights in the worlds themselves
        if self.cfg.weights2cc:
            return []
        return self.span.weighted

    def _groups(self) -> list:
        return [] if self.cfg.weights2cc else self.span.groups

    def system_for(self, worldset: WorldSet) -> ConstraintSystem:
        return build_system(
            worldset,
            self._items(),
            self._groups(),
            self.cfg.limit_indep_combs,
            independence=self.cfg.indep_constraints,
        )

    def belief(self) -> Belief:
        if self._belief is None:
            self._belief = self._solve()
        return self._belief

    def _solve(self) -> Belief:
        cfg = self.cfg
        if cfg.solver == "maxwalksat":
            return self._solve_walksat()
        ctx = self.context
        scfg = cfg.sampler_config()
        samples = initial_sample(scfg, ctx, self.rng)
        log.info("initial sample: %d models (%d worlds in total)", len(samples.worlds), len(ctx))
        if cfg.solver == "simanneal":
            result = simulated_annealing(ctx, cfg.anneal, samples, self.rng, scfg)
            log.info("annealing: energy %.4g after %d iterations", result.energy, result.iterations)
            if result.energy > cfg.anneal.max_energy:
                warnings.warn(f"simulated annealing stopped at energy {result.energy:.4g}", stacklevel=2)
            samples = result.samples
        if not samples.worlds:
            raise RuntimeError("initial sampling produced no models; choose another --initsample method")
        worldset, counts = _to_worldset(self.span.program, samples)
        system = None
        if cfg.interval_results or not cfg.nosolve:
            system = self.system_for(worldset)
        if cfg.nosolve:
            return Belief.from_counts(worldset, counts, system)
        if cfg.interval_results:
            return Belief(worldset, [], system)
        if cfg.solver == "itrefine":
            if system.has_interval_items:
                warnings.warn("iterative refinement ignores interval weights", stacklevel=2)
            dist = iterative_refinement(worldset.worlds, counts, system.refine_triples, cfg.refine)
            return Belief(worldset, [dist.probs], system)
        if cfg.ndistrs > 1:
            cands = candidate_distributions(system, cfg.ndistrs, self.rng, include_uniform=not cfg.ignore_entropy)
            return Belief(worldset, [d.probs for d in cands], system)
        mode = "default"
        if cfg.ignore_entropy:
            mode = "ignore-entropy"
        elif cfg.max_entropy:
            if system.has_interval_items:
                warnings.warn("--maxentropy needs point weights; using entropy-ranked candidates", stacklevel=2)
            else:
                mode = "maxent"
        dist = pick_distribution(system, mode, cfg.n_candidates, self.rng)
        return Belief(worldset, [dist.probs], system)

    def walksat_formulas(self) -> list:
        gp = self.grounded
        out = [(f, walksat_weight(None, None)) for f in gp.hard]
        for it in gp.weighted:
            if it.kind != "weight":
                continue
            if it.condition is not None:
                raise ValueError("MaxWalkSAT does not support conditional weights in background knowledge")
            out.append((it.formula, walksat_weight(it.lo, it.hi)))
        return out

    def _solve_walksat(self) -> Belief:
        cfg = self.cfg
        seeds: list = []
        program = None
        if cfg.initsample not in (None, 0) and not cfg.nospan:
            samples = initial_sample(cfg.sampler_config(), self.context, self.rng)
            prog = self.span.program
            seeds = [frozenset(prog.atoms[i] for i in w) for w in samples.worlds]
            program = prog
        params = cfg.walksat
        if cfg.models:
            params = WalkSatParams(params.cost_target, params.max_flips, params.max_tries, params.p, params.replacement, cfg.models)
        found = maxwalksat(self.walksat_formulas(), params, self.rng, seeds)
        if not found:
            raise RuntimeError("MaxWalkSAT found no model within the cost target")
        if program is None:
            program = GroundProgram()
            for f, _ in self.walksat_formulas():
                for a in formula_atoms(f):
                    program.atom_id(a)
        worlds = [frozenset(program.atom_id(a) for a in m) for m in found]
        worldset, counts = _to_worldset(program, SampleMultiset(worlds))
        return Belief.from_counts(worldset, counts)

    # -- queries --------------------------------------------------------------
    def answer(self, qf: QueryFile) -> list:
        """Results for every (expanded) query of ``qf``."""
        grounded, context = ground_queries(qf, self.statements)
        belief = self.belief()
        ctx = context_indicator(belief.worldset, context)
        out = []
        for st, items in grounded:
            for it in items:
                r = answer_query(belief, it, ctx, self.cfg.interval_results)
                if st.annotation.level == 1 and st.annotation.condition_text:
                    r.condition = st.annotation.condition_text
                out.append(r)
        return out

    def answer_lines(self, qf: QueryFile) -> list:
        return [format_result(r) for r in self.answer(qf)]

    # -- diagnostics ------------------------------------------------------------
    def expansion_lines(self) -> list:
        lines = []
        for it in self.grounded.weighted:
            if it.kind == "indep_only":
                continue
            if it.kind == "span":
                ann = Annotation("span")
            elif it.is_point:
                ann = Annotation("point", it.lo, it.hi, it.condition)
            else:
                ann = Annotation("interval", it.lo, it.hi, it.condition)
            lines.append(render_statement(ann, it.formula))
        return lines

    def span_lines(self) -> list:
        return self.span.program.to_text().splitlines()

    def check_lines(self) -> list:
        """Given weight versus inferred probability for every weighted formula."""
        belief = self.belief()
        if not belief.distributions:
            return ["% check: not available with interval results"]
        lines = []
        p = belief.probs
        ws = belief.worldset
        for it in self.span.weighted:
            if it.kind != "weight":
                continue
            f_ind = ws.indicator(it.formula)
            if it.condition is None:
                val = float(f_ind.astype(float) @ p)
            else:
                c_ind = ws.indicator(it.condition)
                den = float(c_ind.astype(float) @ p)
                val = float((f_ind & c_ind).astype(float) @ p) / den if den > 0 else float("nan")
            delta = max(it.lo - val, 0.0, val - it.hi)
            given = format_probability(it.lo) if it.is_point else f"{format_probability(it.lo)};{format_probability(it.hi)}"
            cond = "" if it.condition is None else f"|{it.condition}"
            lines.append(f"% check [{given}{cond}] {it.text or it.formula}: inferred {format_probability(val)}, delta {delta:.3g}")
        return lines

    def entropy_lines(self) -> list:
        belief = self.belief()
        return [f"% entropy {entropy(d):.6g}" for d in belief.distributions]

    def pwdistr_lines(self, limit: Optional[int] = None) -> list:
        belief = self.belief()
        lines = []
        prog = belief.worldset.program
        for k, d in enumerate(belief.distributions):
            lines.append(f"% distribution {k + 1}, entropy {entropy(d):.6g}")
            order = sorted(range(len(d)), key=lambda i: (-d[i], prog.render_world(belief.worldset.worlds[i])))
            if limit:
                order = order[:limit]
            for i in order:
                lines.append(f"% {format_probability(float(d[i]))} {prog.render_world(belief.worldset.worlds[i])}")
        return lines

    def pwsample_lines(self, n: int) -> list:
        ctx = self.context
        prog = self.span.program
        return [f"% {prog.render_world(w)}" for w in sample_uniform(ctx.worlds, n, self.rng).worlds]


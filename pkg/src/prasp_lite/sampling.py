"""Sampling possible worlds.

All samplers draw from the answer sets of a spanning program.  The worlds are
enumerated once (the engine works at desk scale) and every sampler filters
that list: uniform draws pick among all worlds, XOR sampling keeps worlds
that satisfy random parity constraints, and flip-sampling keeps worlds that
agree with a random true/false decision per uncertain formula.

Samples are frozensets of atom ids.  ``None`` marks a draw whose forced
literals admit no answer set; consumers drop these before counting.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .spanning import SpanningProgram
from .worlds import GroundProgram, WorldSet, enumerate_answer_sets

# ``--unisample`` codes
UNI_ALL_MODELS = 0
UNI_FLIP = 1
UNI_XOR = 2
UNI_SOLVER = 3
UNI_FLIP_INDEP = 4

# ``--flipsampconf`` codes: how flip-sampling draws its uniform model
FLIP_UNI_SOLVER = 0
FLIP_UNI_ALL = 1
FLIP_UNI_XOR = 2

XOR_RETRIES = 50


def make_rng(seed: Optional[int] = None) -> np.random.Generator:
    """PCG64 generator; ``None`` seeds from OS entropy."""
    return np.random.Generator(np.random.PCG64(seed))


@dataclass
class SamplerConfig:
    """Initial sampling configuration.

    ``method`` follows ``--initsample``: 0 empty, 1 near-uniform, 2 first n
    models, 3 independent-product resampling, 4/5 stratified flip-sampling
    (5 respects independence), 6/7 unstratified flip-sampling.
    """

    method: int = 2
    n: int = 0
    uni_method: int = UNI_ALL_MODELS
    xor_q1: int = 100
    xor_q2: Optional[int] = None
    flip_uni: int = FLIP_UNI_SOLVER
    sirnd_o: int = 100

    def __post_init__(self) -> None:
        if not 0 <= self.method <= 7:
            raise ValueError(f"unknown initial sampling method {self.method}")
        if self.n < 0 or self.xor_q1 < 0:
            raise ValueError("sample counts must be non-negative")


@dataclass
class SampleMultiset:
    items: list = field(default_factory=list)
    seed: Optional[int] = None

    def __len__(self) -> int:
        return len(self.items)

    @property
    def worlds(self) -> list:
        """Samples without the empty placeholders."""
        return [w for w in self.items if w is not None]

    def extend(self, other: "SampleMultiset") -> "SampleMultiset":
        return SampleMultiset(self.items + other.items, self.seed)


class SamplingContext:
    """Enumerated worlds of a spanning program plus the uncertain formulas.

    ``uncertain`` lists ``(item index, WeightedItem)`` for the unconditional
    weighted formulas with weight below one; ``indicators`` holds one boolean
    row per uncertain formula over the worlds.
    """

    def __init__(self, span: SpanningProgram, worldset: Optional[WorldSet] = None, max_worlds: int = 1 << 16):
        self.span = span
        if worldset is None:
            worldset = WorldSet(span.program, enumerate_answer_sets(span.program, max_worlds=max_worlds))
        if len(worldset) == 0:
            raise ValueError("the spanning program has no answer sets")
        self.worldset = worldset
        self.uncertain = [
            (k, it)
            for k, it in enumerate(span.weighted)
            if it.kind == "weight" and it.condition is None and it.lo is not None and it.lo < 1.0
        ]
        self.indicators = np.array(
            [worldset.indicator(it.formula) for _, it in self.uncertain], dtype=bool
        ).reshape(len(self.uncertain), len(worldset))
        self._group_sets = [set(g.members) for g in span.groups]
        self._visible_cols = [i for i in range(span.program.n_atoms) if span.visible(i)]

    @property
    def worlds(self) -> list:
        return self.worldset.worlds

    def __len__(self) -> int:
        return len(self.worldset)

    def independent(self, members: set) -> bool:
        """Whether the weighted items ``members`` lie in a common independence group."""
        if len(members) <= 1:
            return True
        for g, gs in zip(self.span.groups, self._group_sets):
            if members <= gs and (not g.pairwise or len(members) <= 2):
                return True
        return False

    # -- uniform picks among the worlds selected by a mask ---------------
    def pick(self, mask: np.ndarray, how: str, rng: np.random.Generator, cfg: SamplerConfig) -> Optional[int]:
        """Index of one world among ``mask``; ``None`` when the mask is empty.

        ``how`` is ``all`` (uniform), ``xor`` (parity-filtered) or ``solver``
        (random member of a window of ``sirnd_o`` consecutive models starting at
        a random position, which mimics randomised solver search).
        """
        cand = np.flatnonzero(mask)
        if cand.size == 0:
            return None
        if how == "xor":
            return int(cand[_xor_choice(self.worldset.matrix[cand][:, self._visible_cols], cfg.xor_q1, cfg.xor_q2, rng)])
        if how == "solver" and cfg.sirnd_o > 0 and cand.size > cfg.sirnd_o:
            start = int(rng.integers(cand.size))
            window = (start + np.arange(cfg.sirnd_o)) % cand.size
            return int(cand[window[int(rng.integers(cfg.sirnd_o))]])
        return int(cand[int(rng.integers(cand.size))])


def sample_uniform(worlds: list, n: int, rng: np.random.Generator) -> SampleMultiset:
    """``n`` uniform draws with replacement."""
    if not worlds:
        raise ValueError("cannot sample from an empty world list")
    idx = rng.integers(len(worlds), size=n)
    return SampleMultiset([worlds[i] for i in idx])


def _parity_constraints(n_atoms: int, q2: int, rng: np.random.Generator) -> tuple:
    subsets = rng.random((q2, n_atoms)) < 0.5
    constants = rng.random(q2) < 0.5
    return subsets, constants


def _xor_choice(matrix: np.ndarray, q1: int, q2: Optional[int], rng: np.random.Generator) -> int:
    """Row index of ``matrix`` chosen by XOR streamlining.

    Each parity constraint keeps the worlds in which the number of true atoms
    of a random subset, plus an optional constant ``true``, is odd.  Among up
    to ``q1`` surviving worlds (``0`` means all) one is picked at random.
    """
    n_worlds, n_atoms = matrix.shape
    if q2 is None:
        q2 = math.ceil(math.log2(n_atoms)) if n_atoms > 1 else 0
    for _ in range(XOR_RETRIES):
        subsets, constants = _parity_constraints(n_atoms, q2, rng)
        counts = matrix.astype(np.int64) @ subsets.T.astype(np.int64) + constants
        keep = np.flatnonzero(np.all(counts % 2 == 1, axis=1)) if q2 else np.arange(n_worlds)
        if keep.size:
            if q1:
                keep = keep[:q1]
            return int(keep[int(rng.integers(keep.size))])
    warnings.warn(
        f"no model satisfied {q2} parity constraints in {XOR_RETRIES} attempts; sampling without them",
        stacklevel=3,
    )
    return int(rng.integers(n_worlds))


def xor_sample(
    program: GroundProgram,
    q1: int = 100,
    q2: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    worlds: Optional[list] = None,
) -> frozenset:
    """One near-uniform answer set of ``program`` via random parity constraints.

    ``worlds`` may pass the already enumerated answer sets.  The default
    number of constraints is ``ceil(log2(#atoms))`` over the non-helper atoms.
    """
    rng = make_rng() if rng is None else rng
    if worlds is None:
        worlds = enumerate_answer_sets(program)
    if not worlds:
        raise ValueError("the program has no answer sets")
    ws = WorldSet(program, worlds)
    cols = [i for i in range(program.n_atoms) if not program.is_helper(i)]
    return worlds[_xor_choice(ws.matrix[:, cols], q1, q2, rng)]


def _flip_uni(cfg: SamplerConfig) -> str:
    return {FLIP_UNI_SOLVER: "solver", FLIP_UNI_ALL: "all", FLIP_UNI_XOR: "xor"}[cfg.flip_uni]


def flip_sample(
    ctx: SamplingContext,
    n: int,
    stratified: bool = True,
    respect_indep: bool = False,
    rng: Optional[np.random.Generator] = None,
    cfg: Optional[SamplerConfig] = None,
    uniform_weights: bool = False,
) -> SampleMultiset:
    """Weighted flip-sampling.

    For every uncertain formula a rank vector is drawn: a random permutation
    of ``(1/n, ..., n/n)`` when ``stratified``, otherwise ``n`` uniform
    numbers.  Draw ``j`` forces formula ``k`` true when its rank is at most
    the formula's weight (a uniform point of the interval for interval
    weights) and false otherwise.  With ``respect_indep`` a formula is forced
    only while all forced formulas stay inside one independence group.  A
    world consistent with the forced literals is then picked uniformly.
    ``uniform_weights`` treats every weight as 0.5 (uniform flip-sampling).
    """
    rng = make_rng() if rng is None else rng
    cfg = SamplerConfig() if cfg is None else cfg
    how = _flip_uni(cfg)
    m = len(ctx.uncertain)
    if n <= 0:
        return SampleMultiset()
    if stratified:
        ranks = np.array([rng.permutation(n) + 1 for _ in range(m)], dtype=float).reshape(m, n) / n
    else:
        ranks = rng.random((m, n))
    out = []
    nw = len(ctx)
    for j in range(n):
        mask = np.ones(nw, dtype=bool)
        forced: set = set()
        for k, (idx, it) in enumerate(ctx.uncertain):
            if respect_indep and not ctx.independent(forced | {idx}):
                continue
            if uniform_weights:
                threshold = 0.5
            elif it.lo == it.hi:
                threshold = it.lo
            else:
                threshold = it.lo + (it.hi - it.lo) * rng.random()
            if ranks[k, j] <= threshold:
                mask &= ctx.indicators[k]
            else:
                mask &= ~ctx.indicators[k]
            forced.add(idx)
        i = ctx.pick(mask, how, rng, cfg)
        out.append(None if i is None else ctx.worlds[i])
    return SampleMultiset(out)


def near_uniform(ctx: SamplingContext, n: int, cfg: SamplerConfig, rng: np.random.Generator) -> SampleMultiset:
    if cfg.uni_method == UNI_FLIP:
        return flip_sample(ctx, n, stratified=False, rng=rng, cfg=cfg, uniform_weights=True)
    if cfg.uni_method == UNI_FLIP_INDEP:
        return flip_sample(ctx, n, stratified=False, respect_indep=True, rng=rng, cfg=cfg, uniform_weights=True)
    how = {UNI_ALL_MODELS: "all", UNI_XOR: "xor", UNI_SOLVER: "solver"}.get(cfg.uni_method)
    if how is None:
        raise ValueError(f"unknown uniform sampling method {cfg.uni_method}")
    everything = np.ones(len(ctx), dtype=bool)
    return SampleMultiset([ctx.worlds[ctx.pick(everything, how, rng, cfg)] for _ in range(n)])


def product_weights(ctx: SamplingContext) -> np.ndarray:
    """Per-world product of ``w`` or ``1 - w`` over independent weighted formulas."""
    members = sorted({m for g in ctx.span.groups for m in g.members})
    items = ctx.span.weighted
    weights = np.ones(len(ctx))
    for m in members:
        it = items[m]
        if it.condition is not None or it.lo is None:
            continue
        w = 0.5 * (it.lo + it.hi)
        ind = ctx.worldset.indicator(it.formula)
        weights *= np.where(ind, w, 1.0 - w)
    return weights


def initial_sample(cfg: SamplerConfig, ctx: SamplingContext, rng: Optional[np.random.Generator] = None) -> SampleMultiset:
    """Dispatch on ``cfg.method`` (see :class:`SamplerConfig`)."""
    rng = make_rng() if rng is None else rng
    method, n = cfg.method, cfg.n
    if method == 0:
        return SampleMultiset()
    if n == 0 or method == 2:
        worlds = ctx.worlds if n == 0 else ctx.worlds[:n]
        return SampleMultiset(list(worlds))
    if method == 1:
        return near_uniform(ctx, n, cfg, rng)
    if method == 3:
        if not ctx.span.groups:
            raise ValueError(
                "initial sampling method 3 needs declared or discovered independence; use methods 4 to 7 instead"
            )
        weights = product_weights(ctx)
        total = weights.sum()
        if total <= 0:
            raise ValueError("independent weights exclude every world")
        idx = rng.choice(len(ctx), size=n, p=weights / total)
        return SampleMultiset([ctx.worlds[i] for i in idx])
    stratified = method in (4, 5)
    respect = method in (5, 7)
    return flip_sample(ctx, n, stratified=stratified, respect_indep=respect, rng=rng, cfg=cfg)

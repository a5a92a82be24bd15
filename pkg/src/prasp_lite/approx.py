"""Approximate inference.

* :func:`iterative_refinement` rescales world probabilities formula by
  formula until the weights hold, converging to the maximum-entropy
  distribution over the given worlds when started from the uniform one.
* :func:`simulated_annealing` grows a multiset of sampled worlds whose
  formula frequencies approach the formula weights.
* :func:`maxwalksat` searches truth assignments of low unsatisfied weight.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .linsys import WorldDistribution, entropy
from .sampling import SampleMultiset, SamplerConfig, SamplingContext, initial_sample, near_uniform
from .syntax import formula_atoms
from .worlds import holds

log = logging.getLogger(__name__)

#: Cost assigned to unsatisfied hard formulas in MaxWalkSAT.
HARD_WEIGHT = 1000.0


# ---------------------------------------------------------------------------
# Iterative refinement
# ---------------------------------------------------------------------------


@dataclass
class RefineParams:
    epsilon: float = 0.02
    max_iterations: int = 1000
    retain_counts: bool = False

    def __post_init__(self) -> None:
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


def _refine_once(p: np.ndarray, fc: np.ndarray, c: np.ndarray, w: float) -> np.ndarray:
    """One multiplicative update for the constraint ``Pr(f | c) = w``."""
    cf = fc > 0
    cnf = (c > 0) & ~cf
    nc = ~(c > 0)
    p_cf, p_cnf, p_nc = p[cf].sum(), p[cnf].sum(), p[nc].sum()
    # 0 ** 0 == 1 keeps the w = 0 and w = 1 cases well defined
    b = p_cf**w * p_cnf ** (1.0 - w)
    denom = b + p_nc * w**w * (1.0 - w) ** (1.0 - w)
    if denom <= 0.0:
        return p
    a = b / denom
    out = p.copy()
    if p_nc > 0:
        out[nc] *= (1.0 - a) / p_nc
    if p_cnf > 0:
        out[cnf] *= (1.0 - w) * a / p_cnf
    if p_cf > 0:
        out[cf] *= w * a / p_cf
    return out


def refine_vectors(p0: np.ndarray, triples: Sequence[tuple], params: RefineParams) -> np.ndarray:
    """Iterate the refinement updates from ``p0``.

    ``triples`` are ``(indicator of f & c, indicator of c, w)`` over the
    worlds.  Stops after ``max_iterations`` sweeps or once the Euclidean
    change of a sweep is at most ``epsilon``.
    """
    p = np.asarray(p0, dtype=float).copy()
    # the cell masks do not change between sweeps
    cells = []
    for fc, c, w in triples:
        cf = np.asarray(fc) > 0
        cm = np.asarray(c) > 0
        cells.append((cf.astype(float), (cm & ~cf).astype(float), (~cm).astype(float), float(w)))
    k = 1
    while True:
        prev = p.copy()
        for cf, cnf, nc, w in cells:
            p_cf, p_cnf, p_nc = float(p @ cf), float(p @ cnf), float(p @ nc)
            b = p_cf**w * p_cnf ** (1.0 - w)
            denom = b + p_nc * w**w * (1.0 - w) ** (1.0 - w)
            if denom <= 0.0:
                continue
            a = b / denom
            scale = nc * ((1.0 - a) / p_nc if p_nc > 0 else 1.0)
            scale += cnf * ((1.0 - w) * a / p_cnf if p_cnf > 0 else 1.0)
            scale += cf * (w * a / p_cf if p_cf > 0 else 1.0)
            p *= scale
        d = float(np.linalg.norm(p - prev))
        k += 1
        if k > params.max_iterations or d <= params.epsilon:
            break
    return p


def iterative_refinement(worlds: list, counts: Optional[np.ndarray], triples: Sequence[tuple], params: RefineParams) -> WorldDistribution:
    """Maximum-entropy style refinement over ``worlds``.

    ``counts`` are the multiplicities of the worlds in the initial sample
    multiset; they seed the distribution when ``params.retain_counts``,
    otherwise the start is uniform over the distinct worlds.
    """
    n = len(worlds)
    if n == 0:
        raise ValueError("iterative refinement needs at least one world")
    if params.retain_counts and counts is not None:
        c = np.asarray(counts, dtype=float)
        p0 = c / c.sum()
    else:
        p0 = np.full(n, 1.0 / n)
    return WorldDistribution(refine_vectors(p0, triples, params), list(worlds))


# ---------------------------------------------------------------------------
# Simulated annealing
# ---------------------------------------------------------------------------


@dataclass
class AnnealParams:
    max_energy: float = 0.05
    min_temp: float = 1e-150
    temp_decr: float = 0.95
    sampling_method: int = 0
    init_temp: float = 5.0
    samples_per_step: int = 1
    target_all: bool = False
    max_time: int = 5000
    parallelism: int = 8
    max_entropy: bool = False


@dataclass
class Target:
    """A formula weight the annealing energy compares frequencies against."""

    f_ind: np.ndarray
    c_ind: Optional[np.ndarray]
    lo: float
    hi: float


def annealing_targets(ctx: SamplingContext, target_all: bool = False) -> list:
    out = []
    for it in ctx.span.weighted:
        if it.kind != "weight" or it.lo is None:
            continue
        if not target_all and it.lo >= 1.0:
            continue
        f_ind = ctx.worldset.indicator(it.formula)
        c_ind = None if it.condition is None else ctx.worldset.indicator(it.condition)
        if c_ind is not None:
            f_ind = f_ind & c_ind
        out.append(Target(f_ind.astype(float), None if c_ind is None else c_ind.astype(float), it.lo, it.hi))
    return out


def energy(counts: np.ndarray, targets: Sequence[Target], max_entropy: bool = False) -> float:
    """Euclidean distance between formula frequencies and weights.

    ``counts`` are world multiplicities.  Interval weights contribute the
    distance to the nearest bound (zero inside); conditional weights compare
    against ``freq(f & c) / freq(c)``.  An empty multiset has infinite
    energy.  With ``max_entropy`` the reciprocal entropy of the frequencies
    is added.
    """
    total = counts.sum()
    if total <= 0:
        return math.inf
    sq = 0.0
    for t in targets:
        num = float(t.f_ind @ counts)
        if t.c_ind is None:
            freq = num / total
        else:
            den = float(t.c_ind @ counts)
            if den <= 0:
                freq = 0.0 if t.lo > 0 else t.lo
            else:
                freq = num / den
        gap = max(t.lo - freq, 0.0, freq - t.hi)
        sq += gap * gap
    e = math.sqrt(sq)
    if max_entropy:
        h = entropy(counts / total)
        e += 1.0 / h if h > 0 else math.inf
    return e


def _counts_of(ctx: SamplingContext, samples: SampleMultiset) -> np.ndarray:
    pos = {w: i for i, w in enumerate(ctx.worlds)}
    counts = np.zeros(len(ctx))
    for w in samples.worlds:
        counts[pos[w]] += 1
    return counts


def _supported_product(ctx: SamplingContext, world_idx: int, respect_indep: bool) -> float:
    """Product of weights of the weighted formulas a world satisfies.

    With ``respect_indep`` the product runs over the independent subset of
    supported formulas with the smallest product.
    """
    supported = [
        (k, 0.5 * (it.lo + it.hi))
        for (k, it), row in zip(ctx.uncertain, ctx.indicators)
        if row[world_idx]
    ]
    if not supported:
        return 1.0
    if not respect_indep:
        return float(np.prod([w for _, w in supported]))
    best = min(w for _, w in supported)
    for g in ctx.span.groups:
        members = set(g.members)
        ws = [w for k, w in supported if k in members]
        if g.pairwise:
            ws = sorted(ws)[:2]
        if ws:
            best = min(best, float(np.prod(ws)))
    return best


def sample_step(
    method: int,
    ctx: SamplingContext,
    rng: np.random.Generator,
    cfg: Optional[SamplerConfig] = None,
    samples_per_step: int = 1,
) -> SampleMultiset:
    """New samples for one annealing step.

    Method 0 draws near-uniformly.  Methods 1 and 2 draw a candidate and
    keep it with a probability tied to the product of the weights of the
    formulas it supports (1 restricts the product to independent formulas).
    Methods from 3 on reuse the initial sampling method of that number;
    a single stratified draw would force every formula false, so methods 4
    and 5 fall back to their unstratified forms 6 and 7 for one sample.
    """
    cfg = SamplerConfig() if cfg is None else cfg
    if method == 0:
        return near_uniform(ctx, samples_per_step, cfg, rng)
    if method in (1, 2):
        out = []
        for _ in range(samples_per_step):
            cand = near_uniform(ctx, 1, cfg, rng).items[0]
            idx = ctx.worlds.index(cand)
            prod = _supported_product(ctx, idx, respect_indep=method == 1)
            n_supported = int(ctx.indicators[:, idx].sum()) if ctx.uncertain else 0
            n_atoms = sum(1 for a in cand if ctx.span.visible(a))
            r = prod if n_atoms == n_supported else rng.random() * prod
            out.append(cand if rng.random() <= r else None)
        return SampleMultiset(out)
    if samples_per_step == 1 and method in (4, 5):
        method += 2
    step_cfg = SamplerConfig(
        method=method, n=samples_per_step, uni_method=cfg.uni_method, xor_q1=cfg.xor_q1,
        xor_q2=cfg.xor_q2, flip_uni=cfg.flip_uni, sirnd_o=cfg.sirnd_o,
    )
    return initial_sample(step_cfg, ctx, rng)


@dataclass
class AnnealResult:
    samples: SampleMultiset
    counts: np.ndarray
    energy: float
    iterations: int
    trace: list = field(default_factory=list)


def simulated_annealing(
    ctx: SamplingContext,
    params: AnnealParams,
    init: Optional[SampleMultiset] = None,
    rng: Optional[np.random.Generator] = None,
    cfg: Optional[SamplerConfig] = None,
) -> AnnealResult:
    """Grow a sample multiset by Metropolis-accepted sampling steps.

    Each iteration builds ``parallelism`` candidates by adding one sampling
    step to the current multiset, keeps the lowest-energy candidate and
    accepts it if its energy is lower or with probability
    ``exp(-(e' - e) / temp)``.  The temperature decays geometrically; the
    loop ends when the energy reaches ``max_energy``, the temperature drops
    below ``min_temp`` or ``max_time`` iterations have run.
    """
    rng = np.random.default_rng() if rng is None else rng
    targets = annealing_targets(ctx, params.target_all)
    init = SampleMultiset() if init is None else init
    samples = list(init.items)
    counts = _counts_of(ctx, init)
    pos = {w: i for i, w in enumerate(ctx.worlds)}
    e = energy(counts, targets, params.max_entropy)
    d = energy(counts, targets) if params.max_entropy else e
    temp = params.init_temp
    k = 0
    trace = [e]
    while k <= params.max_time and temp >= params.min_temp and d > params.max_energy:
        best = None
        for _ in range(max(1, params.parallelism)):
            step = sample_step(params.sampling_method, ctx, rng, cfg, params.samples_per_step)
            cand = counts.copy()
            for w in step.worlds:
                cand[pos[w]] += 1
            ce = energy(cand, targets, params.max_entropy)
            if best is None or ce < best[0]:
                best = (ce, cand, step)
        e_new, cand, step = best
        if e_new < e or (math.isfinite(e_new) and rng.random() < math.exp(-(e_new - e) / temp)):
            counts, e = cand, e_new
            samples.extend(step.items)
            d = energy(counts, targets) if params.max_entropy else e
        temp *= params.temp_decr
        k += 1
        trace.append(e)
    if counts.sum() == 0:
        raise RuntimeError("simulated annealing produced no consistent sample")
    return AnnealResult(SampleMultiset(samples, init.seed), counts, d, k, trace)


# ---------------------------------------------------------------------------
# MaxWalkSAT
# ---------------------------------------------------------------------------


@dataclass
class WalkSatParams:
    cost_target: float = 1.0
    max_flips: int = 100000
    max_tries: int = 10000
    p: float = 0.3
    replacement: bool = True
    n_models: int = 1

    def __post_init__(self) -> None:
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("random walk probability must lie in [0, 1]")


def walksat_weight(lo: Optional[float], hi: Optional[float]) -> float:
    """Cost weight: interval mean, or :data:`HARD_WEIGHT` for certain formulas."""
    if lo is None or lo >= 1.0:
        return HARD_WEIGHT
    return 0.5 * (lo + hi)


def maxwalksat(
    formulas: Sequence[tuple],
    params: WalkSatParams,
    rng: Optional[np.random.Generator] = None,
    seeds: Sequence[frozenset] = (),
) -> list:
    """Low-cost truth assignments of weighted ground formulas.

    ``formulas`` are ``(formula, cost weight)`` pairs; the cost of an
    assignment is the summed weight of the formulas it falsifies.  Each try
    starts from a random assignment (or a random member of ``seeds``, sets of
    atoms) and flips atoms of a random unsatisfied formula, either at random
    with probability ``p`` or greedily (lowest resulting cost, lowest atom
    index on ties).  Returns the assignments (as frozensets of atoms) whose
    cost reached ``cost_target``.
    """
    rng = np.random.default_rng() if rng is None else rng
    atoms: list = []
    index: dict = {}
    for f, _ in formulas:
        for a in formula_atoms(f):
            if a not in index:
                index[a] = len(atoms)
                atoms.append(a)
    weights = np.array([w for _, w in formulas], dtype=float)
    occurs: list = [[] for _ in atoms]
    f_atoms: list = []
    for k, (f, _) in enumerate(formulas):
        ids = sorted({index[a] for a in formula_atoms(f)})
        f_atoms.append(ids)
        for i in ids:
            occurs[i].append(k)

    def satisfied(world: set, k: int) -> bool:
        return holds(world, formulas[k][0], index)

    found: list = []
    seen: set = set()
    for _ in range(params.max_tries):
        if seeds:
            seed = seeds[int(rng.integers(len(seeds)))]
            m = {index[a] for a in seed if a in index}
        else:
            m = {i for i in range(len(atoms)) if rng.random() < 0.5}
        sat = np.array([satisfied(m, k) for k in range(len(formulas))], dtype=bool)
        cost = float(weights[~sat].sum())
        for _ in range(params.max_flips):
            if cost <= params.cost_target:
                world = frozenset(atoms[i] for i in m)
                if params.replacement or world not in seen:
                    seen.add(world)
                    found.append(world)
                if len(found) >= params.n_models:
                    return found
                break
            unsat = np.flatnonzero(~sat)
            usf = int(unsat[int(rng.integers(unsat.size))])
            candidates = f_atoms[usf]
            if not candidates:
                break  # an unsatisfiable formula without atoms
            if rng.random() < params.p:
                flip_atom = candidates[int(rng.integers(len(candidates)))]
            else:
                best = None
                for a in candidates:
                    m ^= {a}
                    delta = sum(
                        (weights[k] if not satisfied(m, k) else 0.0) - (weights[k] if not sat[k] else 0.0)
                        for k in occurs[a]
                    )
                    m ^= {a}
                    if best is None or cost + delta < best[0]:
                        best = (cost + delta, a)
                flip_atom = best[1]
            m ^= {flip_atom}
            for k in occurs[flip_atom]:
                sat[k] = satisfied(m, k)
            cost = float(weights[~sat].sum())
    if len(found) < params.n_models:
        warnings.warn(f"MaxWalkSAT found {len(found)} of {params.n_models} requested models", stacklevel=2)
    return found

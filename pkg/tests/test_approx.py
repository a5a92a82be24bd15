import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import DATA
from prasp_lite.approx import (
    HARD_WEIGHT,
    AnnealParams,
    RefineParams,
    Target,
    WalkSatParams,
    _refine_once,
    annealing_targets,
    energy,
    iterative_refinement,
    maxwalksat,
    refine_vectors,
    simulated_annealing,
    walksat_weight,
)
from prasp_lite.engine import Engine, InferenceConfig, load_statements
from prasp_lite.sampling import make_rng
from prasp_lite.syntax import Atom, parse_formula, parse_program
from prasp_lite.worlds import holds

TIGHT = RefineParams(epsilon=1e-12, max_iterations=20000)


def engine(text, **cfg):
    statements = load_statements(DATA / text) if text.endswith(".prasp") else parse_program(text)
    return Engine(statements, InferenceConfig(**cfg))


def coin_triples():
    e = engine("coins.prasp")
    ws = e.context.worldset
    return ws, e.system_for(ws).refine_triples


# -- energy -----------------------------------------------------------------


def one_target(lo, hi=None, cond=None):
    return Target(np.array([1.0, 0.0]), cond, lo, lo if hi is None else hi)


def test_energy_zero_on_target():
    assert energy(np.array([3.0, 7.0]), [one_target(0.3)]) == pytest.approx(0.0)


def test_energy_is_the_frequency_gap():
    assert energy(np.array([4.0, 6.0]), [one_target(0.3)]) == pytest.approx(0.1)


def test_energy_inside_an_interval():
    assert energy(np.array([4.0, 6.0]), [one_target(0.3, 0.5)]) == 0.0


def test_energy_combines_targets_euclidean():
    targets = [one_target(0.3), Target(np.array([0.0, 1.0]), None, 0.3, 0.3)]
    assert energy(np.array([6.0, 4.0]), targets) == pytest.approx(math.hypot(0.3, 0.1))


def test_energy_of_conditional_target():
    t = Target(np.array([1.0, 0.0, 0.0]), np.array([1.0, 1.0, 0.0]), 0.5, 0.5)
    assert energy(np.array([1.0, 1.0, 8.0]), [t]) == pytest.approx(0.0)
    assert energy(np.array([3.0, 1.0, 0.0]), [t]) == pytest.approx(0.25)


def test_empty_multiset_has_infinite_energy():
    assert energy(np.zeros(2), [one_target(0.3)]) == math.inf


def test_entropy_term():
    counts = np.array([5.0, 5.0])
    assert energy(counts, [one_target(0.5)], max_entropy=True) == pytest.approx(1 / math.log(2))


# -- iterative refinement ---------------------------------------------------


def test_refinement_reaches_the_product_distribution():
    ws, triples = coin_triples()
    p = refine_vectors(np.full(4, 0.25), triples, TIGHT)
    prob = {ws.program.render_world(w): v for w, v in zip(ws.worlds, p)}
    assert prob["{coin1(heads),coin2(heads),win}"] == pytest.approx(0.3, abs=1e-9)
    assert prob["{coin1(tails),coin2(tails)}"] == pytest.approx(0.2, abs=1e-9)


def test_single_update_fixes_its_constraint():
    fc = np.array([1.0, 0.0, 0.0, 0.0])
    c = np.array([1.0, 1.0, 0.0, 0.0])
    p = _refine_once(np.full(4, 0.25), fc, c, 0.8)
    assert p.sum() == pytest.approx(1.0)
    assert p[0] / (p[0] + p[1]) == pytest.approx(0.8)


@pytest.mark.parametrize("w", [0.0, 1.0])
def test_extreme_weights(w):
    fc = np.array([1.0, 0.0])
    p = _refine_once(np.array([0.5, 0.5]), fc, np.ones(2), w)
    assert p == pytest.approx([w, 1.0 - w])


def test_uniform_start_over_distinct_worlds():
    ws, triples = coin_triples()
    counts = np.array([10.0, 1.0, 1.0, 1.0])
    d = iterative_refinement(ws.worlds, counts, [], RefineParams())
    assert d.probs == pytest.approx(np.full(4, 0.25))
    kept = iterative_refinement(ws.worlds, counts, [], RefineParams(retain_counts=True))
    assert kept.probs == pytest.approx(counts / counts.sum())


def test_refinement_needs_worlds():
    with pytest.raises(ValueError):
        iterative_refinement([], None, [], RefineParams())


def test_epsilon_must_be_positive():
    with pytest.raises(ValueError):
        RefineParams(epsilon=0)


def _sequential_route(p, triples, params):
    """The same sweeps built from the per-constraint update."""
    k = 1
    while True:
        prev = p.copy()
        for fc, c, w in triples:
            p = _refine_once(p, fc, c, w)
        k += 1
        if k > params.max_iterations or np.linalg.norm(p - prev) <= params.epsilon:
            return p


@st.composite
def refinement_problems(draw):
    n = draw(st.integers(2, 8))
    m = draw(st.integers(1, 3))
    triples = []
    for _ in range(m):
        c = np.array(draw(st.lists(st.booleans(), min_size=n, max_size=n)), dtype=float)
        f = np.array(draw(st.lists(st.booleans(), min_size=n, max_size=n)), dtype=float)
        w = draw(st.sampled_from([0.1, 0.25, 0.5, 0.8]))
        triples.append((f * c, c, w))
    start = np.array(draw(st.lists(st.integers(1, 5), min_size=n, max_size=n)), dtype=float)
    return start / start.sum(), triples


@settings(max_examples=60, deadline=None)
@given(refinement_problems())
def test_vector_and_sequential_updates_agree(problem):
    p0, triples = problem
    params = RefineParams(epsilon=1e-9, max_iterations=200)
    fast = refine_vectors(p0, triples, params)
    slow = _sequential_route(p0.copy(), triples, params)
    assert fast == pytest.approx(slow, abs=1e-9)
    assert fast.sum() == pytest.approx(1.0)
    assert (fast >= 0).all()


@settings(max_examples=30, deadline=None)
@given(st.lists(st.sampled_from([0.2, 0.5, 0.7]), min_size=1, max_size=3))
def test_refinement_matches_max_entropy(weights):
    """Marginal-only constraints: refinement and the entropy oracle agree."""
    text = "\n".join(f"[{w}] a{i}." for i, w in enumerate(weights))
    e = engine(text, auto_indeps=False)
    ws = e.context.worldset
    triples = e.system_for(ws).refine_triples
    p = refine_vectors(np.full(len(ws), 1 / len(ws)), triples, TIGHT)
    a, b = oracles.refine_triples_rows(triples, len(ws))
    expected, _ = oracles.max_entropy(a, b)
    assert p == pytest.approx(expected, abs=1e-6)


# -- simulated annealing ----------------------------------------------------


def test_annealing_targets_skip_certain_weights():
    ctx = engine("[1] a.\n[0.4] b.").context
    assert len(annealing_targets(ctx)) == 1
    assert len(annealing_targets(ctx, target_all=True)) == 2


def test_annealing_reaches_the_energy_bound():
    ctx = engine("coins.prasp").context
    result = simulated_annealing(ctx, AnnealParams(), rng=make_rng(42))
    assert result.energy <= 0.05
    assert result.counts.sum() == len(result.samples.worlds)
    assert result.trace[-1] == pytest.approx(result.energy)


def test_annealing_is_reproducible():
    ctx = engine("coins.prasp").context
    a = simulated_annealing(ctx, AnnealParams(), rng=make_rng(3))
    b = simulated_annealing(ctx, AnnealParams(), rng=make_rng(3))
    assert (a.counts == b.counts).all()


@pytest.mark.parametrize("method", [1, 2, 4, 7])
def test_annealing_sampling_methods(method):
    ctx = engine("coins.prasp").context
    result = simulated_annealing(ctx, AnnealParams(sampling_method=method, max_time=3000), rng=make_rng(7))
    assert result.counts.sum() > 0
    assert result.energy < 0.2


# -- MaxWalkSAT ---------------------------------------------------------------


def test_walksat_weights():
    assert walksat_weight(None, None) == HARD_WEIGHT
    assert walksat_weight(1.0, 1.0) == HARD_WEIGHT
    assert walksat_weight(0.2, 0.4) == pytest.approx(0.3)


def test_walksat_satisfies_hard_formulas():
    formulas = [(parse_formula("a & not b"), HARD_WEIGHT), (parse_formula("c | b"), HARD_WEIGHT)]
    found = maxwalksat(formulas, WalkSatParams(cost_target=0, max_flips=100, max_tries=10), make_rng(1))
    assert found == [frozenset({Atom("a"), Atom("c")})]


def test_walksat_cost_target_admits_soft_violations():
    formulas = [(parse_formula("a"), HARD_WEIGHT), (parse_formula("not a"), 0.4)]
    found = maxwalksat(formulas, WalkSatParams(cost_target=0.5, n_models=5), make_rng(2))
    assert len(found) == 5
    assert all(Atom("a") in m for m in found)


def test_walksat_without_replacement_returns_distinct_models():
    formulas = [(parse_formula("a | b"), HARD_WEIGHT)]
    params = WalkSatParams(cost_target=0, replacement=False, n_models=3, max_tries=200)
    found = maxwalksat(formulas, params, make_rng(4))
    assert len(found) == len(set(found)) == 3


def test_walksat_warns_on_unsatisfiable_input():
    formulas = [(parse_formula("a"), HARD_WEIGHT), (parse_formula("not a"), HARD_WEIGHT)]
    with pytest.warns(UserWarning):
        found = maxwalksat(formulas, WalkSatParams(cost_target=0, max_flips=20, max_tries=3), make_rng(0))
    assert found == []


def test_walksat_starts_from_seeds():
    formulas = [(parse_formula("a | b"), HARD_WEIGHT)]
    seed = frozenset({Atom("b")})
    found = maxwalksat(formulas, WalkSatParams(cost_target=0, n_models=4), make_rng(0), seeds=[seed])
    assert found == [seed] * 4


def test_walksat_probability_range():
    with pytest.raises(ValueError):
        WalkSatParams(p=1.5)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31))
def test_walksat_models_meet_the_cost_target(seed):
    formulas = [
        (parse_formula("a | b"), HARD_WEIGHT),
        (parse_formula("not a | c"), HARD_WEIGHT),
        (parse_formula("b"), 0.3),
    ]
    index = {Atom(x): i for i, x in enumerate("abc")}
    for m in maxwalksat(formulas, WalkSatParams(cost_target=0.3, n_models=3), make_rng(seed)):
        world = {index[a] for a in m}
        cost = sum(w for f, w in formulas if not holds(world, f, index))
        assert cost <= 0.3

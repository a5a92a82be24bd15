"""Constraint systems over possible worlds and their solvers.

Each weighted formula contributes a row bounding the summed probability of
the worlds in which it holds; conditional weights, independence
declarations and the normalisation row add further rows.  Point solutions
come from non-negative least squares (Lawson-Hanson active set, written out
here), interval answers from a two-phase simplex.
"""

from __future__ import annotations

import itertools
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .grounder import WeightedItem
from .syntax import And

log = logging.getLogger(__name__)

INCONSISTENT_MSG = "Specified probabilities appear to be inconsistent"

#: Weight of the normalisation row inside least-squares solves.
NORMALIZATION_WEIGHT = 10.0
#: Margin used for ``Pr(c) > 0`` requirements in linear programs.
CONDITION_MARGIN = 1e-9


class InfeasibleError(ValueError):
    pass


@dataclass
class ConstraintRow:
    coeffs: np.ndarray
    lo: float
    hi: float
    kind: str  # weight | conditional | independence | normalization | extra
    source: str = ""


@dataclass
class ConstraintSystem:
    rows: list
    n_worlds: int
    # point-weight constraints as (indicator of f&c, indicator of c, weight)
    refine_triples: list = field(default_factory=list)
    has_interval_items: bool = False

    def matrix(self) -> np.ndarray:
        if not self.rows:
            return np.zeros((0, self.n_worlds))
        return np.vstack([r.coeffs for r in self.rows])

    @property
    def point_only(self) -> bool:
        return all(r.lo == r.hi for r in self.rows)

    def residuals(self, probs: np.ndarray) -> np.ndarray:
        """Distance of each row value from its [lo, hi] range."""
        out = []
        for r in self.rows:
            v = float(r.coeffs @ probs)
            out.append(max(r.lo - v, 0.0, v - r.hi))
        return np.array(out)


@dataclass
class WorldDistribution:
    probs: np.ndarray
    worlds: list = field(default_factory=list)
    residual: float = 0.0

    def __post_init__(self) -> None:
        p = np.asarray(self.probs, dtype=float)
        p = np.where(p < 0, 0.0, p)
        self.probs = p


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------


def _indicator(worldset, f) -> np.ndarray:
    return worldset.indicator(f).astype(float)


def build_system(
    worldset,
    items: Sequence[WeightedItem],
    groups: Sequence = (),
    limit_indep_combs: Optional[int] = None,
    independence: bool = True,
) -> ConstraintSystem:
    """Assemble the constraint rows over the worlds of ``worldset``.

    ``items`` are the weighted formulas (span-only and independence-only
    items contribute no weight row); ``groups`` are independence groups
    whose ``members`` index into ``items``.
    """
    n = len(worldset)
    if n == 0:
        raise ValueError("no possible worlds: the program is inconsistent")
    rows: list = []
    triples: list = []
    has_interval = False
    ones = np.ones(n)
    for k, it in enumerate(items):
        if it.kind != "weight":
            continue
        f_ind = _indicator(worldset, it.formula)
        src = it.text or str(it.formula)
        if it.condition is None:
            rows.append(ConstraintRow(f_ind, it.lo, it.hi, "weight", src))
            if it.is_point:
                triples.append((f_ind, ones, it.lo))
            else:
                has_interval = True
            continue
        c_ind = _indicator(worldset, it.condition)
        fc = f_ind * c_ind
        src = f"{src} | {it.condition}"
        if it.is_point:
            rows.append(ConstraintRow(fc - it.lo * c_ind, 0.0, 0.0, "conditional", src))
            triples.append((fc, c_ind, it.lo))
        else:
            has_interval = True
            rows.append(ConstraintRow(fc - it.lo * c_ind, 0.0, math.inf, "conditional", src))
            rows.append(ConstraintRow(fc - it.hi * c_ind, -math.inf, 0.0, "conditional", src))
    if independence:
        for g in groups:
            rows.extend(independence_rows(worldset, [items[m] for m in g.members], g.pairwise, limit_indep_combs))
    rows.append(ConstraintRow(ones.copy(), 1.0, 1.0, "normalization", "sum"))
    return ConstraintSystem(rows, n, triples, has_interval)


def independence_rows(worldset, members: list, pairwise: bool, limit: Optional[int] = None) -> list:
    """Product rows ``prod l <= Pr(f1 & ... & fk) <= prod u``."""
    members = [m for m in members if m.condition is None and m.lo is not None]
    rows = []
    sizes = [2] if pairwise else range(2, len(members) + 1)
    for size in sizes:
        for combo in itertools.combinations(members, size):
            if limit is not None and len(rows) >= limit:
                return rows
            ind = np.ones(len(worldset))
            for m in combo:
                ind = ind * _indicator(worldset, m.formula)
            lo = float(np.prod([m.lo for m in combo]))
            hi = float(np.prod([m.hi for m in combo]))
            rows.append(ConstraintRow(ind, lo, hi, "independence", " & ".join(m.text for m in combo)))
    return rows


# ---------------------------------------------------------------------------
# Non-negative least squares
# ---------------------------------------------------------------------------


def nnls(A: np.ndarray, b: np.ndarray, max_iter: Optional[int] = None, tol: Optional[float] = None) -> tuple:
    """Solve ``min ||Ax - b||_2`` subject to ``x >= 0`` (Lawson-Hanson).

    Returns ``(x, residual_norm, converged)``.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    if max_iter is None:
        max_iter = 3 * n + 50
    if tol is None:
        tol = 10 * max(m, n) * np.finfo(float).eps * max(1.0, np.abs(A).max(initial=0.0))
    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    # columns that were dropped again right after entering; retried only
    # after some other column changed the solution (prevents cycling on
    # gradient noise at the optimum)
    blocked = np.zeros(n, dtype=bool)
    w = A.T @ (b - A @ x)
    it = 0
    converged = True
    while True:
        cand = ~passive & ~blocked & (w > tol)
        if not cand.any():
            break
        if it >= max_iter:
            converged = False
            break
        j = int(np.argmax(np.where(cand, w, -np.inf)))
        passive[j] = True
        while True:
            it += 1
            z = np.zeros(n)
            cols = np.flatnonzero(passive)
            z[cols] = np.linalg.lstsq(A[:, cols], b, rcond=None)[0]
            if (z[cols] > tol).all():
                x = z
                break
            if it >= max_iter:
                # keep the last feasible point
                converged = False
                break
            bad = cols[z[cols] <= tol]
            alphas = x[bad] / (x[bad] - z[bad])
            alpha = float(np.min(alphas))
            x = x + alpha * (z - x)
            passive &= ~(x <= tol)
            passive[bad[np.argmin(alphas)]] = False
            x[~passive] = 0.0
        if not converged:
            break
        if passive[j]:
            blocked[:] = False
        else:
            blocked[j] = True
        w = A.T @ (b - A @ x)
    return x, float(np.linalg.norm(A @ x - b)), converged


def _expand_slacks(system: ConstraintSystem) -> tuple:
    """Least-squares form with slack columns for interval rows.

    Returns ``(A, b, n_slack)`` where the first ``n_worlds`` columns are
    world probabilities.  A row ``lo <= a.x <= hi`` becomes ``a.x - s1 = lo``
    and ``a.x + s2 = hi`` (one of them when a bound is infinite).
    """
    rows_a, rows_b, slack_cols = [], [], []
    n = system.n_worlds
    for r in system.rows:
        weight = NORMALIZATION_WEIGHT if r.kind == "normalization" else 1.0
        if r.lo == r.hi:
            rows_a.append((r.coeffs * weight, None))
            rows_b.append(r.lo * weight)
            continue
        if math.isfinite(r.lo):
            rows_a.append((r.coeffs, -1.0))
            rows_b.append(r.lo)
        if math.isfinite(r.hi):
            rows_a.append((r.coeffs, 1.0))
            rows_b.append(r.hi)
    n_slack = sum(1 for _, s in rows_a if s is not None)
    A = np.zeros((len(rows_a), n + n_slack))
    k = n
    for i, (coeffs, s) in enumerate(rows_a):
        A[i, :n] = coeffs
        if s is not None:
            A[i, k] = s
            k += 1
    return A, np.array(rows_b, dtype=float), n_slack


def solve_nnls(
    system: ConstraintSystem,
    center: Optional[np.ndarray] = None,
    regularization: float = 0.0,
    permutation: Optional[np.ndarray] = None,
) -> WorldDistribution:
    """Least-squares distribution for ``system``.

    With ``regularization > 0`` the objective gains
    ``regularization * ||x - center||^2`` which selects, among exact
    solutions, the one closest to ``center``.  ``permutation`` reorders the
    columns before solving (a different starting basis for the active set).
    """
    n = system.n_worlds
    A, b, n_slack = _expand_slacks(system)
    if regularization > 0:
        r = np.full(n, 1.0 / n) if center is None else np.asarray(center, dtype=float)
        reg = np.zeros((n, A.shape[1]))
        reg[:, :n] = math.sqrt(regularization) * np.eye(n)
        A = np.vstack([A, reg])
        b = np.concatenate([b, math.sqrt(regularization) * r])
    perm = np.arange(A.shape[1]) if permutation is None else np.asarray(permutation)
    x_perm, _, converged = nnls(A[:, perm], b)
    x = np.zeros(A.shape[1])
    x[perm] = x_perm
    probs = x[:n]
    total = probs.sum()
    if total <= 0:
        probs = np.full(n, 1.0 / n)
    else:
        probs = polish(system, probs / total)
    residual = float(np.linalg.norm(system.residuals(probs)))
    if residual > 1e-6 or not converged:
        warnings.warn(f"{INCONSISTENT_MSG} (residual {residual:.3g})", stacklevel=2)
    return WorldDistribution(probs, residual=residual)


def polish(system: ConstraintSystem, probs: np.ndarray, support_tol: float = 1e-12) -> np.ndarray:
    """Remove the small bias left by regularisation and iteration tolerances.

    Applies the minimum-norm correction on the support of ``probs`` that
    makes every equality row hold exactly; the correction is kept only when
    it leaves all probabilities non-negative and does not increase the
    residual of any row.
    """
    eq = [r for r in system.rows if r.lo == r.hi]
    support = np.flatnonzero(probs > support_tol)
    if not eq or support.size == 0:
        return probs
    A = np.vstack([r.coeffs for r in eq])
    gap = np.array([r.lo for r in eq]) - A @ probs
    d, *_ = np.linalg.lstsq(A[:, support], gap, rcond=None)
    out = probs.copy()
    out[support] += d
    if out.min() < 0:
        return probs
    before, after = system.residuals(probs), system.residuals(out)
    if np.any(after > before + 1e-15):
        return probs
    return out


def entropy(d) -> float:
    """Shannon entropy (natural log) with ``0 ln 0 = 0``."""
    p = np.asarray(getattr(d, "probs", d), dtype=float)
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


# ---------------------------------------------------------------------------
# Linear programming (two-phase simplex, Bland's rule)
# ---------------------------------------------------------------------------


def simplex(c: np.ndarray, A_eq: np.ndarray, b_eq: np.ndarray, max_iter: int = 100000, tol: float = 1e-9) -> tuple:
    """Minimise ``c.x`` s.t. ``A_eq x = b_eq``, ``x >= 0``.

    Returns ``(x, objective)``; raises :class:`InfeasibleError` if no feasible
    point exists.
    """
    A = np.array(A_eq, dtype=float)
    b = np.array(b_eq, dtype=float)
    m, n = A.shape
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1
    # phase 1 tableau with artificials n..n+m-1
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n : n + m] = np.eye(m)
    T[:m, -1] = b
    basis = list(range(n, n + m))
    T[m, :] = 0.0
    T[m, n : n + m] = 1.0
    for i in range(m):
        T[m] -= T[i]
    _pivot_loop(T, basis, n + m, max_iter, tol)
    if -T[m, -1] > 1e-7 * max(1.0, np.abs(b).max(initial=0.0)):
        raise InfeasibleError("primal infeasible")
    # drive artificial variables out of the basis
    for i in range(m):
        if basis[i] >= n:
            row = T[i, :n]
            candidates = np.flatnonzero(np.abs(row) > tol)
            if candidates.size:
                _pivot(T, basis, i, int(candidates[0]))
    keep = [i for i in range(m) if basis[i] < n]
    T2 = np.zeros((len(keep) + 1, n + 1))
    T2[:-1, :n] = T[keep, :n]
    T2[:-1, -1] = T[keep, -1]
    basis2 = [basis[i] for i in keep]
    T2[-1, :n] = c
    for i, bi in enumerate(basis2):
        T2[-1] -= c[bi] * T2[i]
    _pivot_loop(T2, basis2, n, max_iter, tol)
    x = np.zeros(n)
    for i, bi in enumerate(basis2):
        x[bi] = T2[i, -1]
    return x, float(c @ x)


def _pivot(T: np.ndarray, basis: list, row: int, col: int) -> None:
    T[row] /= T[row, col]
    for i in range(T.shape[0]):
        if i != row and T[i, col] != 0.0:
            T[i] -= T[i, col] * T[row]
    basis[row] = col


def _pivot_loop(T: np.ndarray, basis: list, n_cols: int, max_iter: int, tol: float) -> None:
    m = T.shape[0] - 1
    for _ in range(max_iter):
        reduced = T[m, :n_cols]
        entering = np.flatnonzero(reduced < -tol)
        if entering.size == 0:
            return
        col = int(entering[0])  # Bland: lowest index
        column = T[:m, col]
        pos = column > tol
        if not pos.any():
            raise ValueError("linear program is unbounded")
        ratios = np.full(m, np.inf)
        ratios[pos] = T[:m, -1][pos] / column[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + tol * max(1.0, abs(best)))
        row = int(min(ties, key=lambda i: basis[i]))
        _pivot(T, basis, row, col)
    raise RuntimeError("simplex iteration limit reached")


def _lp_form(system: ConstraintSystem, extra_rows: Sequence[ConstraintRow] = ()) -> tuple:
    n = system.n_worlds
    rows = list(system.rows) + list(extra_rows)
    eq_a, eq_b = [], []
    slack_specs = []  # (row index, sign)
    for r in rows:
        if r.lo == r.hi:
            eq_a.append(r.coeffs)
            eq_b.append(r.lo)
            slack_specs.append(None)
            continue
        if math.isfinite(r.lo):
            eq_a.append(r.coeffs)
            eq_b.append(r.lo)
            slack_specs.append(-1.0)
        if math.isfinite(r.hi):
            eq_a.append(r.coeffs)
            eq_b.append(r.hi)
            slack_specs.append(1.0)
    n_slack = sum(1 for s in slack_specs if s is not None)
    A = np.zeros((len(eq_a), n + n_slack))
    k = n
    for i, (coeffs, s) in enumerate(zip(eq_a, slack_specs)):
        A[i, :n] = coeffs
        if s is not None:
            A[i, k] = s
            k += 1
    return A, np.array(eq_b, dtype=float)


def solve_lp_bounds(
    system: ConstraintSystem,
    query: np.ndarray,
    conditions: Sequence[np.ndarray] = (),
    max_iter: int = 100000,
) -> tuple:
    """Minimum and maximum of ``query . x`` over all feasible distributions.

    ``conditions`` are indicator vectors whose probability must stay
    positive (at least :data:`CONDITION_MARGIN`).
    """
    extra = [ConstraintRow(np.asarray(c, dtype=float), CONDITION_MARGIN, math.inf, "extra") for c in conditions]
    A, b = _lp_form(system, extra)
    q = np.zeros(A.shape[1])
    q[: system.n_worlds] = query
    _, lo = simplex(q, A, b, max_iter)
    _, neg_hi = simplex(-q, A, b, max_iter)
    return lo, -neg_hi


def solve_lp_ratio_bounds(
    system: ConstraintSystem,
    numerator: np.ndarray,
    denominator: np.ndarray,
    max_iter: int = 100000,
) -> tuple:
    """Bounds of ``Pr(f & c) / Pr(c)`` via the Charnes-Cooper transformation.

    Variables ``y = t x`` with ``t = 1 / Pr(c)``; constraints are scaled by
    ``t`` and ``denominator . y = 1``.  ``Pr(c) >= CONDITION_MARGIN`` is
    enforced, which bounds ``t``.
    """
    n = system.n_worlds
    rows_a, rows_b = [], []
    base_rows = list(system.rows) + [
        ConstraintRow(np.asarray(denominator, dtype=float), CONDITION_MARGIN, math.inf, "extra")
    ]
    # homogenised rows: a.y - lo t >= 0, a.y - hi t <= 0, with t as last column
    specs = []
    for r in base_rows:
        if r.lo == r.hi:
            specs.append((r.coeffs, -r.lo, None))
            continue
        if math.isfinite(r.lo):
            specs.append((r.coeffs, -r.lo, -1.0))
        if math.isfinite(r.hi):
            specs.append((r.coeffs, -r.hi, 1.0))
    n_slack = sum(1 for s in specs if s[2] is not None)
    width = n + 1 + n_slack
    A = np.zeros((len(specs) + 1, width))
    k = n + 1
    for i, (coeffs, t_coef, s) in enumerate(specs):
        A[i, :n] = coeffs
        A[i, n] = t_coef
        if s is not None:
            A[i, k] = s
            k += 1
    A[-1, :n] = denominator
    b = np.zeros(len(specs) + 1)
    b[-1] = 1.0
    q = np.zeros(width)
    q[:n] = numerator
    _, lo = simplex(q, A, b, max_iter)
    _, neg_hi = simplex(-q, A, b, max_iter)
    return lo, -neg_hi


# ---------------------------------------------------------------------------
# Candidate selection
# ---------------------------------------------------------------------------

#: Beyond this many worlds candidates use column permutations instead of
#: the regularised least-squares formulation (which needs dense n x n rows).
REGULARIZED_WORLD_LIMIT = 400
DEFAULT_REGULARIZATION = 1e-9


def candidate_distributions(system: ConstraintSystem, n: int, rng: np.random.Generator, include_uniform: bool = True) -> list:
    """``n`` solutions of ``system``; the first is centred on the uniform
    distribution when ``include_uniform``, the others on random centres."""
    out = []
    nw = system.n_worlds
    for k in range(n):
        if nw <= REGULARIZED_WORLD_LIMIT:
            if k == 0 and include_uniform:
                center = np.full(nw, 1.0 / nw)
            else:
                center = rng.dirichlet(np.ones(nw))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                d = solve_nnls(system, center=center, regularization=DEFAULT_REGULARIZATION)
        else:
            perm = None if (k == 0 and include_uniform) else rng.permutation(nw + _slack_count(system))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                d = solve_nnls(system, permutation=perm)
        out.append(d)
    return out


def _slack_count(system: ConstraintSystem) -> int:
    return _expand_slacks(system)[2]


def pick_distribution(
    system: ConstraintSystem,
    mode: str = "default",
    n_candidates: int = 5,
    rng: Optional[np.random.Generator] = None,
    refine_params=None,
) -> WorldDistribution:
    """Choose one distribution solving ``system``.

    ``default`` returns the highest-entropy candidate, ``ignore-entropy`` the
    first candidate, and ``maxent`` runs iterative refinement from the
    uniform distribution over all worlds.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    if mode == "maxent":
        from .approx import RefineParams, refine_vectors

        if system.has_interval_items:
            raise ValueError("maximum-entropy refinement supports point weights only")
        params = refine_params or RefineParams(epsilon=1e-9, max_iterations=20000)
        p0 = np.full(system.n_worlds, 1.0 / system.n_worlds)
        probs = refine_vectors(p0, system.refine_triples, params)
        residual = float(np.linalg.norm(system.residuals(probs)))
        return WorldDistribution(probs, residual=residual)
    count = 1 if mode == "ignore-entropy" else max(1, n_candidates)
    cands = candidate_distributions(system, count, rng)
    best = max(cands, key=lambda d: (entropy(d) - 1e6 * d.residual))
    if best.residual > 1e-6:
        warnings.warn(f"{INCONSISTENT_MSG} (residual {best.residual:.3g})", stacklevel=2)
    return best

"""Independent reference implementations used by the tests.

Nothing here imports the package's solvers: stable models are found by
brute force over subsets, linear programs and least squares go through
scipy, and maximum entropy is a direct numeric optimisation.
"""

from __future__ import annotations

import itertools
import math
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import linprog, lsq_linear, minimize


# ---------------------------------------------------------------------------
# Stable models
# ---------------------------------------------------------------------------


def _least_model(definite: Iterable[tuple]) -> set:
    """Naive fixpoint of ``(head, positive body)`` pairs."""
    definite = list(definite)
    model: set = set()
    changed = True
    while changed:
        changed = False
        for head, pos in definite:
            if head not in model and all(p in model for p in pos):
                model.add(head)
                changed = True
    return model


def stable_models(n_atoms: int, rules: Sequence[tuple], choices: Sequence[tuple] = ()) -> set:
    """All stable models as frozensets of atom numbers.

    ``rules`` are ``(head, pos, neg)`` with ``head=None`` for constraints;
    ``choices`` are ``(atoms, lower, upper, pos, neg)`` cardinality choice
    rules.  Every subset of ``range(n_atoms)`` is checked against its reduct.
    """
    out = set()
    for bits in itertools.product((False, True), repeat=n_atoms):
        world = frozenset(i for i, b in enumerate(bits) if b)

        def body(pos, neg):
            return all(p in world for p in pos) and not any(q in world for q in neg)

        if any(h is None and body(pos, neg) for h, pos, neg in rules):
            continue
        bad = False
        for atoms, lo, hi, pos, neg in choices:
            if body(pos, neg):
                k = sum(a in world for a in atoms)
                if (lo is not None and k < lo) or (hi is not None and k > hi):
                    bad = True
        if bad:
            continue
        definite = [(h, pos) for h, pos, neg in rules if h is not None and not any(q in world for q in neg)]
        for atoms, lo, hi, pos, neg in choices:
            if not any(q in world for q in neg):
                definite.extend((a, pos) for a in atoms if a in world)
        if _least_model(definite) == set(world):
            out.add(world)
    return out


# ---------------------------------------------------------------------------
# Linear algebra over world distributions
# ---------------------------------------------------------------------------


def split_rows(rows: Sequence[tuple]) -> tuple:
    """Turn ``(coeffs, lo, hi)`` rows into scipy's ``A_eq``/``A_ub`` form."""
    a_eq, b_eq, a_ub, b_ub = [], [], [], []
    for coeffs, lo, hi in rows:
        coeffs = np.asarray(coeffs, dtype=float)
        if lo == hi:
            a_eq.append(coeffs)
            b_eq.append(lo)
            continue
        if math.isfinite(hi):
            a_ub.append(coeffs)
            b_ub.append(hi)
        if math.isfinite(lo):
            a_ub.append(-coeffs)
            b_ub.append(-lo)
    def arr(rows_, width):
        return np.array(rows_, dtype=float).reshape(len(rows_), width)

    n = len(np.asarray(rows[0][0]))
    return arr(a_eq, n), np.array(b_eq, dtype=float), arr(a_ub, n), np.array(b_ub, dtype=float)


def lp_range(rows: Sequence[tuple], objective: np.ndarray) -> tuple:
    """Min and max of ``objective . p`` over distributions ``p`` meeting ``rows``.

    ``rows`` must include the normalisation row.  Returns ``None`` when the
    rows are infeasible.
    """
    a_eq, b_eq, a_ub, b_ub = split_rows(rows)
    kw = dict(
        A_eq=a_eq if len(b_eq) else None,
        b_eq=b_eq if len(b_eq) else None,
        A_ub=a_ub if len(b_ub) else None,
        b_ub=b_ub if len(b_ub) else None,
        bounds=(0, None),
        method="highs",
    )
    lo = linprog(objective, **kw)
    hi = linprog(-objective, **kw)
    if lo.status != 0 or hi.status != 0:
        return None
    return float(lo.fun), float(-hi.fun)


def lp_conditional_range(rows: Sequence[tuple], num: np.ndarray, den: np.ndarray) -> tuple:
    """Range of ``num.p / den.p`` with ``den.p > 0`` (Charnes-Cooper transform).

    With ``y = t p`` and ``den . y = 1`` the ratio becomes linear; every row
    ``lo <= a.p <= hi`` turns into ``lo t <= a.y <= hi t``.
    """
    n = len(num)
    a_eq, b_eq, a_ub, b_ub = [], [], [], []
    for coeffs, lo, hi in rows:
        coeffs = np.asarray(coeffs, dtype=float)
        if lo == hi:
            a_eq.append(np.append(coeffs, -lo))
            b_eq.append(0.0)
            continue
        if math.isfinite(hi):
            a_ub.append(np.append(coeffs, -hi))
            b_ub.append(0.0)
        if math.isfinite(lo):
            a_ub.append(np.append(-coeffs, lo))
            b_ub.append(0.0)
    a_eq.append(np.append(np.asarray(den, dtype=float), 0.0))
    b_eq.append(1.0)
    kw = dict(
        A_eq=np.array(a_eq),
        b_eq=np.array(b_eq),
        A_ub=np.array(a_ub).reshape(len(a_ub), n + 1) if a_ub else None,
        b_ub=np.array(b_ub) if b_ub else None,
        bounds=(0, None),
        method="highs",
    )
    c = np.append(np.asarray(num, dtype=float), 0.0)
    lo = linprog(c, **kw)
    hi = linprog(-c, **kw)
    if lo.status != 0 or hi.status != 0:
        return None
    return float(lo.fun), float(-hi.fun)


def least_squares_distribution(a: np.ndarray, b: np.ndarray) -> tuple:
    """Bounded least-squares solution of ``a p = b`` with ``p >= 0`` and its residual norm.

    Uses ``lsq_linear`` rather than ``scipy.optimize.nnls``: the latter
    returns non-optimal points (and a zero residual) on some inputs in
    scipy 1.15.  The residual is recomputed from the returned point.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    p = lsq_linear(a, b, bounds=(0, np.inf), method="bvls", tol=1e-14).x
    return p, float(np.linalg.norm(a @ p - b))


# ---------------------------------------------------------------------------
# Maximum entropy
# ---------------------------------------------------------------------------


def _neg_entropy(p: np.ndarray) -> float:
    q = np.clip(p, 1e-300, None)
    return float(np.sum(np.where(p > 0, p * np.log(q), 0.0)))


def max_entropy(a_eq: np.ndarray, b_eq: np.ndarray) -> tuple:
    """Maximum entropy distribution with ``a_eq p = b_eq`` and ``p >= 0``.

    The feasible set is parametrised as ``p0 + N z`` with ``p0`` an LP
    vertex and ``N`` an orthonormal null-space basis, so the search runs
    over the free parameters only.  Returns ``(p, entropy)``.
    """
    a_eq = np.asarray(a_eq, dtype=float)
    b_eq = np.asarray(b_eq, dtype=float)
    n = a_eq.shape[1]
    start = linprog(np.zeros(n), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if start.status != 0:
        raise ValueError("constraints are infeasible")
    p0 = start.x
    basis = null_space(a_eq)
    if basis.shape[1] == 0:
        return p0, -_neg_entropy(p0)
    # move the start into the interior first: maximise the smallest entry
    k = basis.shape[1]
    inner = linprog(
        np.append(np.zeros(k), -1.0),
        A_ub=np.hstack([-basis, np.ones((n, 1))]),
        b_ub=p0,
        bounds=[(None, None)] * k + [(None, 1.0)],
        method="highs",
    )
    z0 = inner.x[:k] if inner.status == 0 and inner.x[k] > 0 else np.zeros(k)

    def objective(z):
        return _neg_entropy(p0 + basis @ z)

    def gradient(z):
        p = np.clip(p0 + basis @ z, 1e-300, None)
        return basis.T @ (np.log(p) + 1.0)

    res = minimize(
        objective,
        z0,
        jac=gradient,
        constraints=[{"type": "ineq", "fun": lambda z: p0 + basis @ z, "jac": lambda z: basis}],
        method="SLSQP",
        options={"ftol": 1e-14, "maxiter": 2000},
    )
    p = np.clip(p0 + basis @ res.x, 0.0, None)
    p /= p.sum()
    return p, -_neg_entropy(p)


def refine_triples_rows(triples: Sequence[tuple], n: int) -> tuple:
    """Equality rows ``Pr(f & c) - w Pr(c) = 0`` plus normalisation."""
    rows = [np.asarray(fc, dtype=float) - w * np.asarray(c, dtype=float) for fc, c, w in triples]
    rows.append(np.ones(n))
    b = np.zeros(len(rows))
    b[-1] = 1.0
    return np.vstack(rows), b

"""Concretization: solving min/max of linear bounds over perturbation regions.

lp balls admit a dual-norm closed form; bounded synonym substitution is
solved exactly by a dynamic program over (position, replacements-used)
states. A brute-force enumerator over all substitution assignments serves
as the independent oracle for the DP.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import GraphError
from .interval import IntervalBounds
from .linear import InputLayout, LinearBounds
from .perturb import LpBall, PerturbationSpec, Synonym

__all__ = [
    "DpTable",
    "concretize_lp",
    "synonym_dp",
    "concretize_synonym_dp",
    "brute_force_synonym",
    "concretize_bounds",
]

_BRUTE_FORCE_LIMIT = 10**6


def _row_norms(w: np.ndarray, q: float) -> np.ndarray:
    if w.shape[1] == 0:
        return np.zeros(w.shape[0])
    return np.linalg.norm(w, ord=q, axis=1)


def _lp_lower(w: np.ndarray, b: np.ndarray, spec: LpBall) -> np.ndarray:
    return w @ spec.center + b - spec.eps * _row_norms(w, spec.dual_q)


def _lp_upper(w: np.ndarray, b: np.ndarray, spec: LpBall) -> np.ndarray:
    return w @ spec.center + b + spec.eps * _row_norms(w, spec.dual_q)


def concretize_lp(lb: LinearBounds, spec: LpBall) -> IntervalBounds:
    """Exact min/max of the linear bounds over an lp ball (dual-norm form)."""
    if lb.input_dim != spec.center.shape[0]:
        raise GraphError(
            f"bound has {lb.input_dim} columns but ball is {spec.center.shape[0]}-dimensional"
        )
    return IntervalBounds(
        _lp_lower(lb.lower_w, lb.lower_b, spec), _lp_upper(lb.upper_w, lb.upper_b, spec)
    )


def _position_contributions(w: np.ndarray, spec: Synonym, t: int) -> tuple[np.ndarray, np.ndarray]:
    """(clean contribution, per-candidate contributions) of position t.

    Contributions are W_t @ e(word) where W_t is the column block of w for
    position t; candidate rows follow the substitution-set order.
    """
    d = spec.embedding_dim
    wt = w[:, t * d:(t + 1) * d]
    clean = wt @ spec.embedding(spec.words[t])
    cands = spec.candidates(t)
    if cands:
        subs = np.stack([wt @ spec.embedding(word) for word in cands])
    else:
        subs = np.empty((0, w.shape[0]))
    return clean, subs


def _dp_table(w: np.ndarray, init: np.ndarray, spec: Synonym, minimize: bool) -> np.ndarray:
    """Fill the (position, replacements) table for one bound side.

    Cell [i, j] is the extreme of init + sum_{t<=i} W_t e(w_t) over actual
    words with exactly j of the first i words replaced; unreachable states
    (j > i, or no substitutable position available) stay at +/- infinity.
    """
    n = spec.length
    budget = min(spec.budget, n)
    s = w.shape[0]
    unreachable = np.inf if minimize else -np.inf
    pick = np.minimum if minimize else np.maximum
    reduce_cands = (lambda a: a.min(axis=0)) if minimize else (lambda a: a.max(axis=0))
    table = np.full((n + 1, budget + 1, s), unreachable)
    table[0, 0] = init
    for i in range(1, n + 1):
        clean, subs = _position_contributions(w, spec, i - 1)
        best_sub = reduce_cands(subs) if subs.shape[0] else None
        for j in range(budget + 1):
            cell = table[i - 1, j] + clean
            if j > 0 and best_sub is not None:
                cell = pick(cell, table[i - 1, j - 1] + best_sub)
            table[i, j] = cell
    return table


@dataclass(frozen=True)
class DpTable:
    """Both DP tables, shaped (length+1, budget+1, output_dim)."""

    lower: np.ndarray
    upper: np.ndarray


def synonym_dp(lb: LinearBounds, spec: Synonym) -> DpTable:
    """Build the substitution DP tables for both bound sides."""
    if lb.input_dim != spec.length * spec.embedding_dim:
        raise GraphError(
            f"bound has {lb.input_dim} columns but spec spans "
            f"{spec.length * spec.embedding_dim} embedding coordinates"
        )
    return DpTable(
        _dp_table(lb.lower_w, lb.lower_b, spec, minimize=True),
        _dp_table(lb.upper_w, lb.upper_b, spec, minimize=False),
    )


def concretize_synonym_dp(lb: LinearBounds, spec: Synonym) -> IntervalBounds:
    """Exact min/max of the linear bounds under bounded word substitution.

    Reduces the DP tables over all replacement counts up to the budget;
    output coordinates are treated independently (the recurrence is
    elementwise).
    """
    table = synonym_dp(lb, spec)
    return IntervalBounds(table.lower[-1].min(axis=0), table.upper[-1].max(axis=0))


def _enumerate_assignments(spec: Synonym) -> np.ndarray:
    """All candidate index combinations as rows; index 0 means the clean word."""
    sizes = [1 + len(spec.candidates(t)) for t in range(spec.length)]
    total = 1
    for size in sizes:
        total *= size
    if total > _BRUTE_FORCE_LIMIT:
        raise GraphError(f"{total} substitution assignments exceed the brute-force guard")
    grids = np.meshgrid(*[np.arange(size) for size in sizes], indexing="ij")
    return np.stack(grids, axis=-1).reshape(-1, spec.length)


def brute_force_synonym(lb: LinearBounds, spec: Synonym) -> IntervalBounds:
    """Oracle: enumerate every substitution assignment within the budget.

    Accumulates per-position contributions left to right, the same
    summation order the DP uses.
    """
    combos = _enumerate_assignments(spec)
    within_budget = (combos > 0).sum(axis=1) <= min(spec.budget, spec.length)
    combos = combos[within_budget]

    def extreme(w: np.ndarray, b: np.ndarray, reduce_rows) -> np.ndarray:
        acc = np.tile(b, (combos.shape[0], 1))
        for t in range(spec.length):
            clean, subs = _position_contributions(w, spec, t)
            options = np.concatenate([clean[None, :], subs], axis=0)
            acc = acc + options[combos[:, t]]
        return reduce_rows(acc)

    return IntervalBounds(
        extreme(lb.lower_w, lb.lower_b, lambda a: a.min(axis=0)),
        extreme(lb.upper_w, lb.upper_b, lambda a: a.max(axis=0)),
    )


def concretize_bounds(
    lb: LinearBounds, layout: InputLayout, specs: Mapping[int, PerturbationSpec]
) -> IntervalBounds:
    """Concretize linear bounds under heterogeneous per-node specs.

    Blocks are independent regions, so the optimum separates into a sum of
    per-block extremes added to the bias terms.
    """
    if lb.input_dim != layout.dim:
        raise GraphError(
            f"bound has {lb.input_dim} columns but layout spans {layout.dim}"
        )
    lower = lb.lower_b.copy()
    upper = lb.upper_b.copy()
    zero = np.zeros(lb.dim)
    for i in layout.ids:
        block = layout.block(i)
        spec = specs[i]
        wl = lb.lower_w[:, block]
        wu = lb.upper_w[:, block]
        if isinstance(spec, LpBall):
            lower = lower + _lp_lower(wl, zero, spec)
            upper = upper + _lp_upper(wu, zero, spec)
        elif isinstance(spec, Synonym):
            lower = lower + _dp_table(wl, zero, spec, minimize=True)[-1].min(axis=0)
            upper = upper + _dp_table(wu, zero, spec, minimize=False)[-1].max(axis=0)
        else:
            raise GraphError(f"node {i} is not a perturbed input")
    return IntervalBounds(lower, upper)

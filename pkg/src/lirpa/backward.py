"""Backward-mode linear bound propagation and the strategy driver.

A BFS from the output node pushes coefficient matrices through per-op
oracle rules until only independent nodes carry nonzero coefficients.
Out-degree bookkeeping guarantees each dependent node is relaxed exactly
once, with its full accumulated coefficient.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .concretize import concretize_bounds
from .errors import DomainError, GraphError
from .forward import forward_lirpa, forward_oracle
from .graph import (
    Add,
    Affine,
    Graph,
    Input,
    MulElementwise,
    Neg,
    OpKind,
    Sub,
    SumReduce,
    get_out_degree,
    is_nonlinear,
    topological_order,
)
from .interval import IntervalBounds, ibp_propagate, input_interval
from .linear import InputLayout, LinearBounds
from .perturb import Constant, PerturbationSpec
from .relaxation import ReluLowerMode, mul_relaxation, unary_relaxation

__all__ = [
    "BoundStrategy",
    "BackwardState",
    "backward_oracle",
    "run_backward",
    "backward_lirpa",
    "intermediate_intervals",
    "compute_bounds",
]


class BoundStrategy(Enum):
    """How intermediate and output bounds are produced."""

    IBP = "ibp"
    FORWARD = "forward"
    BACKWARD = "backward"
    IBP_BACKWARD = "ibp+backward"
    FORWARD_BACKWARD = "forward+backward"


@dataclass
class BackwardState:
    """Coefficient maps and bias terms of one backward pass.

    After termination every dependent node's coefficient matrices are zero
    and only independent nodes retain contributions; ``pop_order`` records
    the BFS processing sequence.
    """

    lower_coeff: dict[int, np.ndarray]
    upper_coeff: dict[int, np.ndarray]
    lower_bias: np.ndarray
    upper_bias: np.ndarray
    out_degree: dict[int, int]
    pop_order: tuple[int, ...]


def _posneg(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return np.maximum(a, 0.0), np.minimum(a, 0.0)


def backward_oracle(
    op: OpKind,
    lower_coeff: np.ndarray,
    upper_coeff: np.ndarray,
    input_intervals: Sequence[IntervalBounds] | None = None,
    relu_mode: ReluLowerMode = ReluLowerMode.ADAPTIVE,
    in_dim: int | None = None,
) -> tuple[list[tuple[np.ndarray, np.ndarray]], np.ndarray, np.ndarray]:
    """Push output coefficients of one node onto its inputs.

    Returns one (lower, upper) coefficient pair per input, in input order,
    plus the bias increments for both sides. ``in_dim`` is only consulted by
    sum_reduce, whose expansion width is not visible in the coefficients.
    """
    rows = lower_coeff.shape[0]
    zero_bias = np.zeros(rows)
    if isinstance(op, Affine):
        return (
            [(lower_coeff @ op.weight, upper_coeff @ op.weight)],
            lower_coeff @ op.bias,
            upper_coeff @ op.bias,
        )
    if isinstance(op, Neg):
        return [(-lower_coeff, -upper_coeff)], zero_bias, zero_bias.copy()
    if isinstance(op, Add):
        return (
            [(lower_coeff, upper_coeff), (lower_coeff.copy(), upper_coeff.copy())],
            zero_bias,
            zero_bias.copy(),
        )
    if isinstance(op, Sub):
        return (
            [(lower_coeff, upper_coeff), (-lower_coeff, -upper_coeff)],
            zero_bias,
            zero_bias.copy(),
        )
    if isinstance(op, SumReduce):
        if in_dim is None:
            raise GraphError("sum_reduce backward rule needs the input dimension")
        ones = np.ones((1, in_dim))
        return [(lower_coeff @ ones, upper_coeff @ ones)], zero_bias, zero_bias.copy()
    if input_intervals is None:
        raise DomainError(f"missing intermediate bounds at nonlinear op {op.kind!r}")
    lo_pos, lo_neg = _posneg(lower_coeff)
    up_pos, up_neg = _posneg(upper_coeff)
    if isinstance(op, MulElementwise):
        ix, iy = input_intervals
        rel = mul_relaxation(ix.lower, ix.upper, iy.lower, iy.upper)
        lam_x = (
            lo_pos * rel.lower_x + lo_neg * rel.upper_x,
            up_pos * rel.upper_x + up_neg * rel.lower_x,
        )
        lam_y = (
            lo_pos * rel.lower_y + lo_neg * rel.upper_y,
            up_pos * rel.upper_y + up_neg * rel.lower_y,
        )
        d_lo = lo_pos @ rel.lower_const + lo_neg @ rel.upper_const
        d_up = up_pos @ rel.upper_const + up_neg @ rel.lower_const
        return [lam_x, lam_y], d_lo, d_up
    rel = unary_relaxation(op, input_intervals[0].lower, input_intervals[0].upper, relu_mode)
    lam = (
        lo_pos * rel.lower_slope + lo_neg * rel.upper_slope,
        up_pos * rel.upper_slope + up_neg * rel.lower_slope,
    )
    d_lo = lo_pos @ rel.lower_intercept + lo_neg @ rel.upper_intercept
    d_up = up_pos @ rel.upper_intercept + up_neg @ rel.lower_intercept
    return [lam], d_lo, d_up


def run_backward(
    g: Graph,
    o: int,
    intermediate: Mapping[int, IntervalBounds],
    out_coeff: np.ndarray | None = None,
    relu_mode: ReluLowerMode = ReluLowerMode.ADAPTIVE,
) -> BackwardState:
    """Run the backward BFS from node o and return the final state.

    ``out_coeff`` (default identity) left-multiplies the output node, so a
    margin or specification matrix can be bounded in one pass. A node is
    queued only once its pending out-degree reaches zero, which merges all
    coefficient contributions before the node is relaxed.
    """
    node_o = g.nodes[o]
    if out_coeff is None:
        out_coeff = np.eye(node_o.dim)
    out_coeff = np.asarray(out_coeff, dtype=np.float64)
    if out_coeff.ndim != 2 or out_coeff.shape[1] != node_o.dim:
        raise GraphError(
            f"out_coeff must have {node_o.dim} columns, got shape {out_coeff.shape}"
        )
    rows = out_coeff.shape[0]
    lower: dict[int, np.ndarray] = {o: out_coeff.copy()}
    upper: dict[int, np.ndarray] = {o: out_coeff.copy()}
    d_lower = np.zeros(rows)
    d_upper = np.zeros(rows)
    degree = get_out_degree(g, o)
    queue: deque[int] = deque([o])
    pops: list[int] = []
    while queue:
        i = queue.popleft()
        pops.append(i)
        node = g.nodes[i]
        if isinstance(node.op, Input):
            continue
        intervals = None
        if is_nonlinear(node.op):
            try:
                intervals = [intermediate[j] for j in node.inputs]
            except KeyError as exc:
                raise DomainError(
                    f"missing intermediate bounds for node {exc.args[0]} "
                    f"required by nonlinear node {i}"
                ) from exc
        lams, d_lo, d_up = backward_oracle(
            node.op,
            lower[i],
            upper[i],
            intervals,
            relu_mode,
            in_dim=g.nodes[node.inputs[0]].dim,
        )
        ready: list[int] = []
        for j, (lam_lo, lam_up) in zip(node.inputs, lams):
            if j in lower:
                lower[j] = lower[j] + lam_lo
                upper[j] = upper[j] + lam_up
            else:
                lower[j] = lam_lo.copy()
                upper[j] = lam_up.copy()
            degree[j] -= 1
            if degree[j] == 0 and not isinstance(g.nodes[j].op, Input):
                ready.append(j)
        d_lower = d_lower + d_lo
        d_upper = d_upper + d_up
        lower[i] = np.zeros_like(lower[i])
        upper[i] = np.zeros_like(upper[i])
        queue.extend(sorted(ready))
    return BackwardState(lower, upper, d_lower, d_upper, degree, tuple(pops))


def _state_to_linear(
    state: BackwardState,
    g: Graph,
    layout: InputLayout,
    specs: Mapping[int, PerturbationSpec],
) -> LinearBounds:
    rows = state.lower_bias.shape[0]
    lw = np.zeros((rows, layout.dim))
    uw = np.zeros((rows, layout.dim))
    lb = state.lower_bias.copy()
    ub = state.upper_bias.copy()
    for i in g.input_ids:
        a_lo = state.lower_coeff.get(i)
        a_up = state.upper_coeff.get(i)
        if a_lo is None:
            continue
        spec = specs[i]
        if isinstance(spec, Constant):
            # pinned inputs contribute exactly; fold into the bias
            lb = lb + a_lo @ spec.value
            ub = ub + a_up @ spec.value
        else:
            lw[:, layout.block(i)] = a_lo
            uw[:, layout.block(i)] = a_up
    return LinearBounds(lw, lb, uw, ub)


def backward_lirpa(
    g: Graph,
    o: int,
    intermediate: Mapping[int, IntervalBounds],
    specs: Mapping[int, PerturbationSpec],
    out_coeff: np.ndarray | None = None,
    relu_mode: ReluLowerMode = ReluLowerMode.ADAPTIVE,
) -> LinearBounds:
    """Linear bounds of node o over the perturbed independent nodes.

    ``intermediate`` must cover every node feeding a nonlinear op on a path
    to o. Coefficients accumulated on constant inputs fold into the bias.
    """
    layout = InputLayout.from_specs(g, specs)
    state = run_backward(g, o, intermediate, out_coeff, relu_mode)
    return _state_to_linear(state, g, layout, specs)


def _ancestors(g: Graph, target: int) -> set[int]:
    seen = {target}
    stack = [target]
    while stack:
        for j in g.nodes[stack.pop()].inputs:
            if j not in seen:
                seen.add(j)
                stack.append(j)
    return seen


def _nonlinear_operand_ids(g: Graph, target: int) -> set[int]:
    scope = _ancestors(g, target)
    needed: set[int] = set()
    for i in scope:
        if is_nonlinear(g.nodes[i].op):
            needed.update(g.nodes[i].inputs)
    return needed


def _backward_intermediates(
    g: Graph,
    specs: Mapping[int, PerturbationSpec],
    target: int,
    relu_mode: ReluLowerMode,
) -> dict[int, IntervalBounds]:
    """Intervals for relaxation operands, each from its own backward pass.

    Computed lazily in topological order so every pass only needs intervals
    that are already available; memoized for the duration of the query.
    """
    needed = _nonlinear_operand_ids(g, target)
    layout = InputLayout.from_specs(g, specs)
    intervals: dict[int, IntervalBounds] = {}
    for j in topological_order(g):
        if j not in needed:
            continue
        if isinstance(g.nodes[j].op, Input):
            intervals[j] = input_interval(specs[j], g.nodes[j])
        else:
            lb = backward_lirpa(g, j, intervals, specs, relu_mode=relu_mode)
            intervals[j] = concretize_bounds(lb, layout, specs)
    return intervals


def _apply_out_coeff_interval(bounds: IntervalBounds, c: np.ndarray) -> IntervalBounds:
    c_pos, c_neg = _posneg(c)
    return IntervalBounds(
        c_pos @ bounds.lower + c_neg @ bounds.upper,
        c_pos @ bounds.upper + c_neg @ bounds.lower,
    )


def intermediate_intervals(
    g: Graph,
    specs: Mapping[int, PerturbationSpec],
    strategy: BoundStrategy,
    target: int | None = None,
    relu_mode: ReluLowerMode = ReluLowerMode.ADAPTIVE,
) -> dict[int, IntervalBounds]:
    """Intervals the backward pass needs, produced by the strategy's supplier."""
    if target is None:
        target = g.output
    if strategy in (BoundStrategy.IBP, BoundStrategy.IBP_BACKWARD):
        return ibp_propagate(g, specs)
    if strategy in (BoundStrategy.FORWARD, BoundStrategy.FORWARD_BACKWARD):
        layout = InputLayout.from_specs(g, specs)
        fwd = forward_lirpa(g, specs, relu_mode)
        return {
            j: concretize_bounds(fwd[j], layout, specs)
            for j in sorted(_nonlinear_operand_ids(g, target))
        }
    if strategy is BoundStrategy.BACKWARD:
        return _backward_intermediates(g, specs, target, relu_mode)
    raise GraphError(f"unknown bound strategy {strategy!r}")


def compute_bounds(
    g: Graph,
    specs: Mapping[int, PerturbationSpec],
    strategy: BoundStrategy,
    target: int | None = None,
    out_coeff: np.ndarray | None = None,
    relu_mode: ReluLowerMode = ReluLowerMode.ADAPTIVE,
) -> tuple[LinearBounds | IntervalBounds, IntervalBounds]:
    """Bound a node under the chosen strategy.

    Returns the strategy's native bound object plus its concretized
    interval. Hybrid strategies take intermediate intervals from the cheap
    supplier and run one backward pass for the target.
    """
    if target is None:
        target = g.output
    layout = InputLayout.from_specs(g, specs)

    if strategy is BoundStrategy.IBP:
        box = ibp_propagate(g, specs)[target]
        if out_coeff is not None:
            box = _apply_out_coeff_interval(box, np.asarray(out_coeff, dtype=np.float64))
        return box, box

    if strategy is BoundStrategy.FORWARD:
        lb = forward_lirpa(g, specs, relu_mode)[target]
        if out_coeff is not None:
            coeff_op = Affine(out_coeff, np.zeros(np.asarray(out_coeff).shape[0]))
            lb = forward_oracle(coeff_op, [lb])
        return lb, concretize_bounds(lb, layout, specs)

    intermediate = intermediate_intervals(g, specs, strategy, target, relu_mode)
    lb = backward_lirpa(g, target, intermediate, specs, out_coeff, relu_mode)
    return lb, concretize_bounds(lb, layout, specs)

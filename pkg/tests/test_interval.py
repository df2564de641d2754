import math

import numpy as np
import pytest

from helpers import demo_net, random_graph, assert_sound
from lirpa import (
    Constant,
    DomainError,
    Graph,
    Input,
    Log,
    LpBall,
    Node,
    Synonym,
    evaluate,
    ibp_propagate,
    input_interval,
)


def test_input_interval_linf_ball():
    box = input_interval(LpBall([0.0, 1.0], 2.0, math.inf))
    assert box.lower == pytest.approx([-2.0, -1.0])
    assert box.upper == pytest.approx([2.0, 3.0])


def test_input_interval_constant():
    box = input_interval(Constant([7.0]))
    assert box.lower == pytest.approx([7.0]) and box.upper == pytest.approx([7.0])


def test_input_interval_lp_ball_uses_coordinate_box():
    box = input_interval(LpBall([0.0, 0.0], 1.0, 2.0))
    assert box.lower == pytest.approx([-1.0, -1.0])
    assert box.upper == pytest.approx([1.0, 1.0])


def test_input_interval_synonym_coordinate_minmax():
    spec = Synonym(
        ("hi",),
        {0: ("yo",)},
        {"hi": np.array([1.0, 0.0]), "yo": np.array([0.0, 2.0])},
        budget=1,
    )
    box = input_interval(spec)
    assert box.lower == pytest.approx([0.0, 0.0])
    assert box.upper == pytest.approx([1.0, 2.0])


def test_ibp_demo_net_output():
    g, specs = demo_net()
    bounds = ibp_propagate(g, specs)
    assert bounds[5].lower == pytest.approx([-56.0], abs=0.0)
    assert bounds[5].upper == pytest.approx([32.0], abs=0.0)


def test_ibp_demo_net_intermediates():
    g, specs = demo_net()
    bounds = ibp_propagate(g, specs)
    assert bounds[1].lower == pytest.approx([-5.0, -10.0], abs=0.0)
    assert bounds[1].upper == pytest.approx([7.0, 18.0], abs=0.0)
    assert bounds[3].lower == pytest.approx([-36.0, 0.0])
    assert bounds[3].upper == pytest.approx([28.0, 32.0])


def test_ibp_zero_radius_collapses_to_evaluate():
    rng = np.random.default_rng(10)
    for _ in range(10):
        g, specs = random_graph(rng)
        point_specs = {
            i: Constant(s.center) if isinstance(s, LpBall) else s for i, s in specs.items()
        }
        bounds = ibp_propagate(g, point_specs)
        values = evaluate(g, {i: np.asarray(point_specs[i].value) for i in g.input_ids})
        for i in range(len(g.nodes)):
            assert bounds[i].lower == pytest.approx(values[i], abs=1e-9)
            assert bounds[i].upper == pytest.approx(values[i], abs=1e-9)


def test_ibp_log_domain_error():
    nodes = (Node(0, Input(), (), 1), Node(1, Log(), (0,), 1))
    g = Graph(nodes, 1)
    with pytest.raises(DomainError):
        ibp_propagate(g, {0: LpBall([1.0], 1.0, math.inf)})


def test_ibp_soundness_randomized():
    rng = np.random.default_rng(11)
    for _ in range(20):
        g, specs = random_graph(rng)
        bounds = ibp_propagate(g, specs)
        assert_sound(g, specs, bounds, rng, n=1000)


def test_ibp_inclusion_monotonicity():
    rng = np.random.default_rng(12)
    scales = [0.0, 0.2, 0.5, 1.0, 1.5, 2.0]
    for _ in range(20):
        g, specs = random_graph(rng)
        previous = None
        for scale in scales:
            scaled = {
                i: LpBall(s.center, s.eps * scale, s.p) if isinstance(s, LpBall) else s
                for i, s in specs.items()
            }
            bounds = ibp_propagate(g, scaled)
            if previous is not None:
                for i in range(len(g.nodes)):
                    assert np.all(previous[i].lower >= bounds[i].lower)
                    assert np.all(previous[i].upper <= bounds[i].upper)
            previous = bounds


def test_ibp_exact_on_monotone_chain_with_point_input():
    g, _ = demo_net()
    specs = {0: Constant([0.5, 1.5])}
    bounds = ibp_propagate(g, specs)
    values = evaluate(g, {0: np.array([0.5, 1.5])})
    for i in range(len(g.nodes)):
        assert bounds[i].lower == pytest.approx(values[i], abs=0.0)
        assert bounds[i].upper == pytest.approx(values[i], abs=0.0)

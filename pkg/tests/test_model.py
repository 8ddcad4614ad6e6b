import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from detour.model import (
    Edge,
    Extremes,
    Instance,
    InstanceError,
    Lottery,
    ParseError,
    Side,
    agent_cost,
    cut_counts,
    extremes,
    lottery_cost,
    lottery_max_cost,
    max_cost,
    parse_instance,
    serialize_instance,
    social_cost,
)

from conftest import instances


def test_agent_cost_at_edge_endpoint():
    assert agent_cost(Edge(0.3, 1.0), 0.3, Side.LEFT, 0.0) == 0.0


def test_agent_cost_right_side():
    assert agent_cost(Edge(0.1, 0.9), 1.0, Side.RIGHT, 0.0) == pytest.approx(0.2, abs=1e-15)


def test_social_cost_examples():
    assert social_cost(Edge(0, 1), Instance(0.0, 0.5, 0.0, (0.2,), (0.8,))) == pytest.approx(0.4)
    assert social_cost(Edge(0, 1), Instance(0.3, 0.5, 0.0, (), (1.0,))) == pytest.approx(0.3)


def test_edge_rejects_reversed_endpoints():
    with pytest.raises(InstanceError, match="degenerate edge"):
        Edge(0.6, 0.5)


def test_max_cost_examples(midpoints):
    # every agent pays 0.2 at the midpoints when k = 0
    assert max_cost(Edge(0.1, 0.9), midpoints) == pytest.approx(0.2)
    assert max_cost(Edge(0.2, 0.8), midpoints) == pytest.approx(0.4)


@given(st.floats(0.0, 0.49), st.floats(0.0, 0.99))
def test_max_cost_single_agent_at_a(x, k):
    inst = Instance(k, 0.5, 0.0, (x,), ())
    assert max_cost(Edge(x, 1.0), inst) == pytest.approx(k * (1 - x), abs=1e-15)


def test_lottery_cost_examples(midpoints):
    point = Lottery.point(Edge(0.2, 0.8))
    assert lottery_cost(point, 0.0, Side.LEFT, 0.0) == pytest.approx(0.4)
    lot = Lottery(((Edge(0.2, 0.8), 1 / 3), (Edge(0.1, 0.9), 2 / 3)))
    assert lottery_cost(lot, 0.0, Side.LEFT, 0.0) == pytest.approx(0.4 / 3 + 0.4 / 3)
    assert lottery_max_cost(lot, midpoints) == pytest.approx(0.4 / 3 + 2 * 0.2 / 3)


def test_lottery_probability_check():
    with pytest.raises(InstanceError, match="probabilities do not sum to 1"):
        Lottery(((Edge(0.2, 0.8), 0.5), (Edge(0.1, 0.9), 0.4)))
    with pytest.raises(InstanceError):
        Lottery(())


def test_lottery_max_cost_is_not_max_expected_cost():
    # three agents; expectation of max differs from max of expectations
    inst = Instance(0.0, 0.5, 0.0, (0.0, 0.4), (0.9,))
    lot = Lottery(((Edge(0.0, 0.9), 0.5), (Edge(0.4, 1.0), 0.5)))
    exp_max = lottery_max_cost(lot, inst)
    max_exp = max(lottery_cost(lot, x, s, inst.k) for s, _, x in inst.agents())
    assert exp_max == pytest.approx(0.5)
    assert max_exp == pytest.approx(0.25)


def test_extremes_conventions():
    assert extremes(Instance(0, 0.5, 0, (0, 0.2), (0.8, 1))) == Extremes(0, 0.2, 0.8, 1)
    assert extremes(Instance(0, 0.5, 0, (), (0.8,))) == Extremes(0, 0, 0.8, 0.8)
    assert extremes(Instance(0, 0.5, 0, (0.3,), ())) == Extremes(0.3, 0.3, 1, 1)


def test_cut_counts_boundary_convention():
    inst = Instance(0, 0.5, 0, (0.1, 0.2, 0.3), (0.6, 0.7))
    cc = cut_counts(inst, 0.2)
    assert (cc.n1l, cc.n1r) == (2, 1)
    cc = cut_counts(inst, 0.7)
    assert (cc.n2l, cc.n2r) == (1, 1)


def test_parse_example():
    inst = parse_instance("k 0.5\no 0.5\nL 0\nleft 0 0.2\nright 0.8 1\n")
    assert inst == Instance(0.5, 0.5, 0.0, (0.0, 0.2), (0.8, 1.0))


def test_parse_defaults_and_comments():
    inst = parse_instance("# header\nk 0.1  # trailing\no 0.4\nright 0.9\n")
    assert inst.L == 0.0 and inst.left == () and inst.right == (0.9,)


@pytest.mark.parametrize(
    "text, message",
    [
        ("k 0\no 0.5\nleft 0.6\n", "agent inside or beyond obstacle"),
        ("k 0\no 0.5\nright 0.5\n", "agent inside or beyond obstacle"),
        ("k 0\no 0.5\nleft 0.3 0.1\n", "unsorted list"),
        ("k 0\nleft 0.1\n", "missing required directive"),
        ("k 0\no 0.5\nfoo 1\n", "malformed line"),
        ("k x\no 0.5\n", "malformed line"),
        ("k 0\nk 0\no 0.5\n", "duplicate"),
        ("k 0\no 0.5\nleft nan\n", "out-of-range"),
        ("k 1\no 0.5\nleft 0.1\n", "k=1.0 >= 1"),
        ("k 0\no 0.5\n", "no agents"),
    ],
)
def test_parse_errors(text, message):
    with pytest.raises(ParseError, match=message):
        parse_instance(text)


def test_parse_error_reports_line():
    with pytest.raises(ParseError) as info:
        parse_instance("k 0\no 0.5\nleft 0.3 0.1\n")
    assert info.value.line == 3


def test_instance_validation():
    with pytest.raises(InstanceError):
        Instance(0.0, 0.0, 0.0, (), (0.5,))
    with pytest.raises(InstanceError):
        Instance(0.0, 0.5, 0.5, (0.1,), ())
    with pytest.raises(InstanceError):
        Instance(-0.1, 0.5, 0.0, (0.1,), ())


def test_from_positions_partitions():
    inst = Instance.from_positions([0.9, 0.1, 0.3], k=0.2, o=0.5, L=0.1)
    assert inst.left == (0.1, 0.3) and inst.right == (0.9,)
    with pytest.raises(InstanceError):
        Instance.from_positions([0.55], k=0.2, o=0.5, L=0.1)


def test_check_edge():
    inst = Instance(0.0, 0.5, 0.1, (0.1,), ())
    with pytest.raises(InstanceError):
        inst.check_edge(Edge(0.5, 0.55))
    assert inst.check_edge(Edge(0.5, 0.6)) == Edge(0.5, 0.6)


@given(instances())
def test_roundtrip(inst):
    text = serialize_instance(inst)
    assert parse_instance(text) == inst
    assert serialize_instance(parse_instance(text)) == text


@given(instances(), st.floats(0, 1), st.floats(0, 1))
def test_cost_nonnegative(inst, u, v):
    e = Edge(u * inst.o, inst.o + inst.L + v * (1 - inst.o - inst.L))
    for side, _, x in inst.agents():
        assert agent_cost(e, x, side, inst.k) >= 0.0


@given(st.sampled_from([Side.LEFT, Side.RIGHT]), st.floats(0, 0.99), st.floats(0.02, 0.98), st.floats(0.02, 0.98), st.floats(0.0, 0.48))
def test_cost_slopes(side, k, a, b, x):
    a, b = min(a, b) / 2, 0.5 + max(a, b) / 2
    xx = x if side is Side.LEFT else 0.5 + x + 0.01
    h = 1e-7
    if min(abs(xx - a), abs(xx - b)) < 10 * h:
        return
    base = agent_cost(Edge(a, b), xx, side, k)
    da = (agent_cost(Edge(a + h, b), xx, side, k) - base) / h
    db = (agent_cost(Edge(a, b + h), xx, side, k) - base) / h
    slopes = [1 + k, 1 - k, -1 + k, -1 - k, k, -k]
    assert min(abs(da - s) for s in slopes) < 1e-6
    assert min(abs(db - s) for s in slopes) < 1e-6


@given(instances(), st.floats(0, 1), st.floats(0, 1))
def test_max_cost_attained_at_extreme(inst, u, v):
    e = Edge(u * inst.o, inst.o + inst.L + v * (1 - inst.o - inst.L))
    ex = extremes(inst)
    cands = [agent_cost(e, x, Side.LEFT, inst.k) for x in {ex.x_l, ex.x_r} if inst.left]
    cands += [agent_cost(e, y, Side.RIGHT, inst.k) for y in {ex.y_l, ex.y_r} if inst.right]
    assert max_cost(e, inst) == max(cands)


@given(instances(), st.floats(0, 1), st.floats(0, 1))
def test_point_lottery_matches_max_cost(inst, u, v):
    e = Edge(u * inst.o, inst.o + inst.L + v * (1 - inst.o - inst.L))
    assert lottery_max_cost(Lottery.point(e), inst) == max_cost(e, inst)


def test_region_membership():
    inst = Instance(0.0, 0.5, 0.1, (0.1,), (0.9,))
    assert inst.in_region(0.0, Side.LEFT) and not inst.in_region(0.5, Side.LEFT)
    assert inst.in_region(1.0, Side.RIGHT) and not inst.in_region(0.6, Side.RIGHT)
    assert not math.isnan(inst.position(Side.RIGHT, 0))

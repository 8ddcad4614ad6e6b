"""Pathway-building mechanisms.

Every mechanism is a total function from an :class:`Instance` to an
:class:`Edge` (deterministic) or a :class:`Lottery` (randomized). Empty
groups follow the virtual-agent convention of :func:`detour.model.extremes`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Union

import numpy as np

from detour.model import Edge, Instance, InstanceError, Lottery, Side, check_coefficient, cut_counts, extremes

Outcome = Union[Edge, Lottery]

INF = math.inf


class UnsupportedRegime(InstanceError):
    """The mechanism is only defined for a point obstacle (L = 0)."""


def _require_point_obstacle(inst: Instance, name: str) -> None:
    if inst.L != 0.0:
        raise UnsupportedRegime(f"{name} is only defined for L = 0 (got L={inst.L!r})")


# -- social cost ---------------------------------------------------------------


def _left_condition(inst: Instance, x: float) -> bool:
    cc = cut_counts(inst, x)
    k = inst.k
    return (cc.n1l + len(inst.right)) * (1.0 - k) < cc.n1r * (1.0 + k)


def _right_condition(inst: Instance, x: float) -> bool:
    cc = cut_counts(inst, x)
    k = inst.k
    return (cc.n2r + len(inst.left)) * (1.0 - k) < cc.n2l * (1.0 + k)


def opt_soc_cost(inst: Instance) -> Edge:
    """Social-cost optimal edge.

    The left endpoint slides right from 0 while moving it still lowers the
    total cost; the set of such points is [0, t) with t an agent location,
    so it suffices to test the condition on 0 and every left location.
    Symmetrically for the right endpoint sliding left from 1.
    """
    a = 0.0
    if _left_condition(inst, 0.0):
        # the counts are constant on [v, next v) so the first failing v is sup X_L
        a = next(v for v in sorted(set(inst.left)) if not _left_condition(inst, v))
    b = 1.0
    if _right_condition(inst, 1.0):
        b = next(v for v in sorted(set(inst.right), reverse=True) if not _right_condition(inst, v))
    return Edge(a, b)


# -- maximum cost --------------------------------------------------------------


def opt_max_cost(inst: Instance) -> Edge:
    """The unique maximum-cost optimal edge.

    Two-sided instances use the closed form built from the four extremes.
    A one-sided instance is solved directly: the missing group's endpoint
    goes to the far end and the other endpoint to its group's midpoint.
    """
    if not inst.right:
        return Edge((inst.left[0] + inst.left[-1]) / 2.0, 1.0)
    if not inst.left:
        return Edge(0.0, (inst.right[0] + inst.right[-1]) / 2.0)
    ex = extremes(inst)
    if 1.0 - ex.y_r >= ex.x_l:
        return Edge((ex.x_l + ex.x_r) / 2.0, (ex.y_l - ex.x_l) / 2.0 + 0.5)
    return Edge((ex.x_r - ex.y_r) / 2.0 + 0.5, (ex.y_l + ex.y_r) / 2.0)


class TwoExtremeVariant(Enum):
    INNER = "inner"  # (x_r, y_l)
    OUTER = "outer"  # (x_l, y_r)
    LEFT_PAIR = "left"  # (x_l, y_l)
    RIGHT_PAIR = "right"  # (x_r, y_r)


def two_extreme(inst: Instance, variant: TwoExtremeVariant = TwoExtremeVariant.INNER) -> Edge:
    ex = extremes(inst)
    if variant is TwoExtremeVariant.INNER:
        return Edge(ex.x_r, ex.y_l)
    if variant is TwoExtremeVariant.OUTER:
        return Edge(ex.x_l, ex.y_r)
    if variant is TwoExtremeVariant.LEFT_PAIR:
        return Edge(ex.x_l, ex.y_l)
    return Edge(ex.x_r, ex.y_r)


def restrict_c(k: float) -> float:
    """Distance-to-obstacle fraction used by :func:`two_extreme_restrict`.

    Equal to (1+k^2 - sqrt(R)) / (1-k^2) with R = k^4 - k^3 + 3k^2 + k,
    evaluated in the rationalized form (1-k) / (1+k^2 + sqrt(R)), which has
    no cancellation at either end of [0, 1).
    """
    check_coefficient(k)
    radicand = k**4 - k**3 + 3.0 * k**2 + k
    return (1.0 - k) / (1.0 + k * k + math.sqrt(radicand))


def restrict_thresholds(o: float, k: float) -> tuple[float, float]:
    c = restrict_c(k)
    return o * (1.0 - c), o + c * (1.0 - o)


def two_extreme_restrict(inst: Instance) -> Edge:
    _require_point_obstacle(inst, "TwoExtremeRestrict")
    ex = extremes(inst)
    lo, hi = restrict_thresholds(inst.o, inst.k)
    return Edge(min(ex.x_r, lo), max(ex.y_l, hi))


def rand_max_cost_probability(k: float) -> float:
    return max((1.0 + k) / (3.0 - k), (k + k * k) / (1.0 + k * k))


def rand_max_cost(inst: Instance) -> Lottery:
    """Inner edge with probability p, the two half-way points otherwise."""
    _require_point_obstacle(inst, "RandMaxCost")
    ex = extremes(inst)
    p = rand_max_cost_probability(inst.k)
    return Lottery(((Edge(ex.x_r, ex.y_l), p), (Edge(ex.x_r / 2.0, (ex.y_l + 1.0) / 2.0), 1.0 - p)))


def rand_unbound(inst: Instance) -> Lottery:
    """Draw each endpoint independently from {inner extreme, half-way point}."""
    _require_point_obstacle(inst, "RandUnbound")
    ex = extremes(inst)
    k = inst.k
    q = (1.0 + k) / (3.0 - k)
    qs = (q, 2.0 * (1.0 - k) / (3.0 - k))
    a_vals = (ex.x_r, ex.x_r / 2.0)
    b_vals = (ex.y_l, (1.0 + ex.y_l) / 2.0)
    support = tuple(
        (Edge(a_vals[i], b_vals[j]), qs[i] * qs[j]) for i in range(2) for j in range(2)
    )
    return Lottery(support)


# -- generalized medians ---------------------------------------------------------


@dataclass(frozen=True)
class PhantomProfile:
    """n+1 fixed extended-real values per axis."""

    xs: tuple[float, ...]
    ys: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "xs", tuple(float(v) for v in self.xs))
        object.__setattr__(self, "ys", tuple(float(v) for v in self.ys))


def peaks(inst: Instance) -> list[tuple[float, float]]:
    """Most-preferred edge of each agent: (x, 1) on the left, (0, y) on the right."""
    return [(x, 1.0) if side is Side.LEFT else (0.0, x) for side, _, x in inst.agents()]


def _median(values: list[float]) -> float:
    values = sorted(values)
    return values[len(values) // 2]


def generalized_median(inst: Instance, ph: PhantomProfile) -> Edge:
    n = inst.n
    if len(ph.xs) != n + 1 or len(ph.ys) != n + 1:
        raise ValueError(
            f"phantom profile needs {n + 1} values per axis, got {len(ph.xs)} and {len(ph.ys)}"
        )
    pk = peaks(inst)
    a = _median([p[0] for p in pk] + list(ph.xs))
    b = _median([p[1] for p in pk] + list(ph.ys))
    if not (math.isfinite(a) and math.isfinite(b)):
        raise InstanceError(f"phantom profile yields an infinite coordinate ({a!r}, {b!r})")
    return inst.check_edge(Edge(a, b))


def median_phantoms(n: int) -> PhantomProfile:
    low = math.ceil(n / 2)
    vals = (-INF,) * low + (INF,) * (n + 1 - low)
    return PhantomProfile(vals, vals)


def inner_phantoms(n: int) -> PhantomProfile:
    """Phantoms under which the generalized median is TwoExtreme (x_r, y_l)."""
    return PhantomProfile((-INF,) + (INF,) * n, (-INF,) * n + (INF,))


def restrict_phantoms(inst: Instance) -> PhantomProfile:
    """Phantoms under which the generalized median is TwoExtremeRestrict.

    |N1| phantoms at (o(1-c), 0), |N2| at (1, o+c(1-o)) and one at (0, 1).
    """
    lo, hi = restrict_thresholds(inst.o, inst.k)
    n1, n2 = len(inst.left), len(inst.right)
    xs = (lo,) * n1 + (1.0,) * n2 + (0.0,)
    ys = (0.0,) * n1 + (hi,) * n2 + (1.0,)
    return PhantomProfile(xs, ys)


def median_mechanism(inst: Instance) -> Edge:
    return generalized_median(inst, median_phantoms(inst.n))


# -- sampling --------------------------------------------------------------------


def sample(lot: Lottery, seed: int, size: int | None = None) -> Edge | list[Edge]:
    """Draw from a lottery with a seeded generator."""
    rng = np.random.default_rng(seed)
    probs = np.asarray(lot.probabilities, dtype=float)
    idx = rng.choice(len(probs), size=size, p=probs / probs.sum())
    if size is None:
        return lot.support[int(idx)][0]
    return [lot.support[int(i)][0] for i in idx]


# -- registry ----------------------------------------------------------------------


@dataclass(frozen=True)
class Mechanism:
    """A named mechanism as exposed on the command line.

    ``kernel`` names the compiled fast path used by the incentive fuzzer;
    ``None`` means the fuzzer falls back to calling ``func`` directly.
    """

    name: str
    func: Callable[[Instance], Outcome]
    randomized: bool = False
    point_obstacle_only: bool = False
    kernel: str | None = None

    def __call__(self, inst: Instance) -> Outcome:
        return self.func(inst)


def _genmedian(kind: str) -> Callable[[Instance], Edge]:
    def run(inst: Instance) -> Edge:
        if kind == "inner":
            ph = inner_phantoms(inst.n)
        elif kind == "restrict":
            _require_point_obstacle(inst, "generalized median (restrict phantoms)")
            ph = restrict_phantoms(inst)
        else:
            ph = median_phantoms(inst.n)
        return generalized_median(inst, ph)

    run.__name__ = f"genmedian_{kind}"
    return run


def _variant(v: TwoExtremeVariant) -> Callable[[Instance], Edge]:
    def run(inst: Instance) -> Edge:
        return two_extreme(inst, v)

    run.__name__ = f"two_extreme_{v.value}"
    return run


MECHANISMS: dict[str, Mechanism] = {
    "optsc": Mechanism("optsc", opt_soc_cost, kernel="optsc"),
    "optmc": Mechanism("optmc", opt_max_cost, kernel="optmc"),
    "twoextreme:inner": Mechanism("twoextreme:inner", _variant(TwoExtremeVariant.INNER), kernel="inner"),
    "twoextreme:outer": Mechanism("twoextreme:outer", _variant(TwoExtremeVariant.OUTER), kernel="outer"),
    "twoextreme:left": Mechanism("twoextreme:left", _variant(TwoExtremeVariant.LEFT_PAIR), kernel="leftpair"),
    "twoextreme:right": Mechanism("twoextreme:right", _variant(TwoExtremeVariant.RIGHT_PAIR), kernel="rightpair"),
    "restrict": Mechanism("restrict", two_extreme_restrict, point_obstacle_only=True, kernel="restrict"),
    "randmc": Mechanism("randmc", rand_max_cost, randomized=True, point_obstacle_only=True, kernel="randmc"),
    "randub": Mechanism("randub", rand_unbound, randomized=True, point_obstacle_only=True, kernel="randub"),
    "median": Mechanism("median", median_mechanism, kernel="median"),
    "genmedian:median": Mechanism("genmedian:median", _genmedian("median")),
    "genmedian:inner": Mechanism("genmedian:inner", _genmedian("inner")),
    "genmedian:restrict": Mechanism("genmedian:restrict", _genmedian("restrict"), point_obstacle_only=True),
}

_ALIASES = {"twoextreme": "twoextreme:inner", "genmedian": "genmedian:median"}


def get_mechanism(name: str) -> Mechanism:
    key = _ALIASES.get(name, name)
    try:
        return MECHANISMS[key]
    except KeyError:
        known = ", ".join(sorted(set(MECHANISMS) | set(_ALIASES)))
        raise KeyError(f"unknown mechanism {name!r}; known: {known}") from None

"""Instances, pathways, lotteries and the agent cost model.

An instance places agents on [0, 1] around a blocked interval [o, o+L].
Agents in [0, o) form the left group, agents in (o+L, 1] the right group.
A pathway (a, b) joins the two regions; a left agent travels to the far
end 1 through it, a right agent travels to 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator, Sequence

DEFAULT_EPS = 1e-6
PROB_TOL = 1e-12


class InstanceError(ValueError):
    """Raised for instances or edges that violate the model's domain."""


class ParseError(InstanceError):
    """Raised by :func:`parse_instance`; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class Side(Enum):
    LEFT = "left"
    RIGHT = "right"

    @property
    def other(self) -> Side:
        return Side.RIGHT if self is Side.LEFT else Side.LEFT


def _as_positions(values: Iterable[float], name: str) -> tuple[float, ...]:
    out = tuple(float(v) for v in values)
    for v in out:
        if math.isnan(v):
            raise InstanceError(f"{name} contains NaN")
    if any(out[i] > out[i + 1] for i in range(len(out) - 1)):
        raise InstanceError(f"{name} positions are not sorted ascending")
    return out


@dataclass(frozen=True)
class Instance:
    """Agent locations split by the obstacle, plus the parameters (k, o, L).

    ``left`` and ``right`` hold sorted positions. Construction validates the
    whole domain; use :meth:`from_positions` to build an instance from an
    unsorted list of locations.
    """

    k: float
    o: float
    L: float = 0.0
    left: tuple[float, ...] = ()
    right: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        k, o, L = float(self.k), float(self.o), float(self.L)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "o", o)
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "left", _as_positions(self.left, "left"))
        object.__setattr__(self, "right", _as_positions(self.right, "right"))
        check_coefficient(k)
        if not 0.0 < o < 1.0:
            raise InstanceError(f"obstacle position o={o!r} out of range (0, 1)")
        if not 0.0 <= L < 1.0 - o:
            raise InstanceError(f"obstacle length L={L!r} out of range [0, 1-o)")
        for x in self.left:
            if x < 0.0:
                raise InstanceError(f"left position {x!r} out of range [0, o)")
            if x >= o:
                raise InstanceError(f"agent inside or beyond obstacle: left position {x!r} >= o={o!r}")
        for y in self.right:
            if y > 1.0:
                raise InstanceError(f"right position {y!r} out of range (o+L, 1]")
            if y <= o + L:
                raise InstanceError(
                    f"agent inside or beyond obstacle: right position {y!r} <= o+L={o + L!r}"
                )
        if not self.left and not self.right:
            raise InstanceError("no agents")

    @classmethod
    def from_positions(cls, positions: Iterable[float], k: float, o: float, L: float = 0.0) -> Instance:
        """Partition raw locations by the obstacle. Locations inside it are rejected."""
        left, right = [], []
        for x in positions:
            x = float(x)
            if x < o:
                left.append(x)
            elif x > o + L:
                right.append(x)
            else:
                raise InstanceError(f"agent inside or beyond obstacle: position {x!r} in [{o!r}, {o + L!r}]")
        return cls(k=k, o=o, L=L, left=sorted(left), right=sorted(right))

    @property
    def n(self) -> int:
        return len(self.left) + len(self.right)

    @property
    def two_sided(self) -> bool:
        return bool(self.left) and bool(self.right)

    def agents(self) -> Iterator[tuple[Side, int, float]]:
        """Yield ``(side, index, position)`` for every agent, left group first."""
        for i, x in enumerate(self.left):
            yield Side.LEFT, i, x
        for j, y in enumerate(self.right):
            yield Side.RIGHT, j, y

    def position(self, side: Side, index: int) -> float:
        return self.left[index] if side is Side.LEFT else self.right[index]

    def positions(self) -> list[float]:
        return list(self.left) + list(self.right)

    def in_region(self, x: float, side: Side) -> bool:
        if side is Side.LEFT:
            return 0.0 <= x < self.o
        return self.o + self.L < x <= 1.0

    def contains_edge(self, edge: Edge) -> bool:
        return 0.0 <= edge.a <= self.o and self.o + self.L <= edge.b <= 1.0

    def check_edge(self, edge: Edge) -> Edge:
        if not self.contains_edge(edge):
            raise InstanceError(
                f"edge ({edge.a!r}, {edge.b!r}) outside [0, {self.o!r}] x [{self.o + self.L!r}, 1]"
            )
        return edge


def check_coefficient(k: float) -> float:
    if math.isnan(k) or k < 0.0:
        raise InstanceError(f"coefficient k={k!r} must be in [0, 1)")
    if k >= 1.0:
        raise InstanceError(
            f"coefficient k={k!r} >= 1 is not supported: every agent then prefers the shortest "
            "pathway and the fixed edge (o-eps, o+L+eps) is group strategyproof and near-optimal"
        )
    return k


@dataclass(frozen=True)
class Edge:
    """A candidate pathway with left endpoint ``a`` and right endpoint ``b``."""

    a: float
    b: float

    def __post_init__(self) -> None:
        a, b = float(self.a), float(self.b)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        if not (0.0 <= a <= b <= 1.0):
            raise InstanceError(f"degenerate edge ({a!r}, {b!r}): need 0 <= a <= b <= 1")

    def __iter__(self):
        yield self.a
        yield self.b


@dataclass(frozen=True)
class Lottery:
    """A discrete distribution over edges."""

    support: tuple[tuple[Edge, float], ...]

    def __post_init__(self) -> None:
        support = tuple((e if isinstance(e, Edge) else Edge(*e), float(p)) for e, p in self.support)
        object.__setattr__(self, "support", support)
        if not support:
            raise InstanceError("lottery support is empty")
        if any(p < 0.0 or math.isnan(p) for _, p in support):
            raise InstanceError("lottery has a negative probability")
        total = math.fsum(p for _, p in support)
        if abs(total - 1.0) > PROB_TOL:
            raise InstanceError(f"probabilities do not sum to 1 (sum={total!r})")

    @classmethod
    def point(cls, edge: Edge) -> Lottery:
        return cls(((edge, 1.0),))

    @property
    def edges(self) -> list[Edge]:
        return [e for e, _ in self.support]

    @property
    def probabilities(self) -> list[float]:
        return [p for _, p in self.support]


@dataclass(frozen=True)
class Extremes:
    x_l: float
    x_r: float
    y_l: float
    y_r: float


@dataclass(frozen=True)
class CutCounts:
    """Agents of each group on either side of a cut point.

    Left-group counts split as ``x_i <= x`` / ``x_i > x``; right-group counts
    as ``x_j < x`` / ``x_j >= x``.
    """

    n1l: int
    n1r: int
    n2l: int
    n2r: int


def agent_cost(edge: Edge, x: float, side: Side, k: float) -> float:
    a, b = edge.a, edge.b
    if side is Side.LEFT:
        return abs(x - a) + k * (b - a) + (1.0 - b)
    return abs(x - b) + k * (b - a) + a


def social_cost(edge: Edge, inst: Instance) -> float:
    return math.fsum(agent_cost(edge, x, side, inst.k) for side, _, x in inst.agents())


def max_cost(edge: Edge, inst: Instance) -> float:
    if inst.n == 0:
        raise InstanceError("no agents")
    return max(agent_cost(edge, x, side, inst.k) for side, _, x in inst.agents())


def lottery_cost(lot: Lottery, x: float, side: Side, k: float) -> float:
    return math.fsum(p * agent_cost(e, x, side, k) for e, p in lot.support)


def lottery_social_cost(lot: Lottery, inst: Instance) -> float:
    return math.fsum(p * social_cost(e, inst) for e, p in lot.support)


def lottery_max_cost(lot: Lottery, inst: Instance) -> float:
    """Expected maximum cost: the mean over realizations of each edge's MC.

    This is not the largest expected agent cost; the two differ in general.
    """
    return math.fsum(p * max_cost(e, inst) for e, p in lot.support)


def extremes(inst: Instance) -> Extremes:
    """Outermost agents of each group.

    An empty group is replaced by a virtual agent at its region's far end:
    x_l = x_r = 0 without left agents, y_l = y_r = 1 without right agents.
    """
    x_l, x_r = (inst.left[0], inst.left[-1]) if inst.left else (0.0, 0.0)
    y_l, y_r = (inst.right[0], inst.right[-1]) if inst.right else (1.0, 1.0)
    return Extremes(x_l, x_r, y_l, y_r)


def cut_counts(inst: Instance, x: float) -> CutCounts:
    n1l = sum(1 for v in inst.left if v <= x)
    n2l = sum(1 for v in inst.right if v < x)
    return CutCounts(n1l, len(inst.left) - n1l, n2l, len(inst.right) - n2l)


# -- text format -------------------------------------------------------------

_SCALARS = ("k", "o", "L")
_LISTS = ("left", "right")


def parse_instance(text: str) -> Instance:
    """Parse the line-oriented instance format.

    One directive per line, ``#`` starts a comment::

        k 0.5
        o 0.5
        L 0          # optional, defaults to 0
        left 0 0.2
        right 0.8 1
    """
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *args = line.split()
        if key not in _SCALARS and key not in _LISTS:
            raise ParseError(f"malformed line: unknown directive {key!r}", lineno)
        if key in values:
            raise ParseError(f"malformed line: duplicate directive {key!r}", lineno)
        try:
            nums = [float(a) for a in args]
        except ValueError:
            raise ParseError(f"malformed line: non-numeric value in {line!r}", lineno) from None
        if any(math.isnan(v) or math.isinf(v) for v in nums):
            raise ParseError(f"out-of-range value in {line!r}", lineno)
        if key in _SCALARS:
            if len(nums) != 1:
                raise ParseError(f"malformed line: {key!r} takes exactly one value", lineno)
            values[key] = nums[0]
        else:
            if any(nums[i] > nums[i + 1] for i in range(len(nums) - 1)):
                raise ParseError(f"unsorted list: {key} positions must be ascending", lineno)
            values[key] = nums
    for key in ("k", "o"):
        if key not in values:
            raise ParseError(f"missing required directive {key!r}")
    try:
        return Instance(
            k=values["k"],
            o=values["o"],
            L=values.get("L", 0.0),
            left=values.get("left", ()),
            right=values.get("right", ()),
        )
    except ParseError:
        raise
    except InstanceError as exc:
        raise ParseError(str(exc)) from None


def _fmt(v: float) -> str:
    return repr(float(v))


def serialize_instance(inst: Instance) -> str:
    lines = [f"k {_fmt(inst.k)}", f"o {_fmt(inst.o)}", f"L {_fmt(inst.L)}"]
    lines.append(" ".join(["left", *map(_fmt, inst.left)]))
    lines.append(" ".join(["right", *map(_fmt, inst.right)]))
    return "\n".join(lines) + "\n"


def format_positions(values: Sequence[float]) -> str:
    return " ".join(_fmt(v) for v in values)

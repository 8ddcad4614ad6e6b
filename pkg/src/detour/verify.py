"""Brute-force oracles, incentive fuzzers and approximation-ratio measurement."""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence, Union

import numpy as np

from detour import _kernels
from detour.mechanisms import (
    MECHANISMS,
    Mechanism,
    Outcome,
    UnsupportedRegime,
    get_mechanism,
    opt_max_cost,
    opt_soc_cost,
    restrict_c,
)
from detour.model import (
    Edge,
    Instance,
    InstanceError,
    Lottery,
    Side,
    agent_cost,
    extremes,
    lottery_cost,
    lottery_max_cost,
    lottery_social_cost,
    max_cost,
    social_cost,
)

DEFAULT_TOL = 1e-9
DEFAULT_GRID = 200
DEFAULT_TRIPLE_SAMPLES = 2000
N_MAX = 8


class Objective(Enum):
    SC = "sc"
    MC = "mc"

    @classmethod
    def parse(cls, value: Union[str, Objective]) -> Objective:
        if isinstance(value, Objective):
            return value
        try:
            return cls(value.lower())
        except ValueError:
            raise ValueError(f"unknown objective {value!r}; expected sc or mc") from None


class DegenerateInstance(InstanceError):
    """The optimal value is (numerically) zero, so no ratio exists."""


MechanismLike = Union[str, Mechanism, Callable[[Instance], Outcome]]


def _resolve(mechanism: MechanismLike) -> Mechanism:
    if isinstance(mechanism, Mechanism):
        return mechanism
    if isinstance(mechanism, str):
        return get_mechanism(mechanism)
    return Mechanism(getattr(mechanism, "__name__", "custom"), mechanism)


def _as_lottery(out: Outcome) -> Lottery:
    return out if isinstance(out, Lottery) else Lottery.point(out)


# -- random instances --------------------------------------------------------------


def random_instance(
    rng: np.random.Generator,
    k: float | None = None,
    L: float | None = None,
    two_sided: bool = False,
    n_max: int = N_MAX,
) -> Instance:
    """Draw an instance: n uniform in 1..n_max, o in (0.1, 0.9), agents uniform in their regions.

    Without an explicit ``L`` the obstacle is a point half of the time and
    otherwise has length uniform in [0, (1-o)/2]. ``two_sided`` resamples
    until both groups are nonempty.
    """
    kk = float(rng.uniform(0.0, 1.0)) if k is None else float(k)
    while True:
        n = int(rng.integers(2 if two_sided else 1, n_max + 1))
        o = float(rng.uniform(0.1, 0.9))
        if L is None:
            ll = 0.0 if rng.random() < 0.5 else float(rng.uniform(0.0, (1.0 - o) / 2.0))
        else:
            ll = float(L)
            if not ll < 1.0 - o:
                continue
        is_left = rng.random(n) < 0.5
        if two_sided and (is_left.all() or not is_left.any()):
            continue
        left, right = [], []
        for flag in is_left:
            if flag:
                left.append(float(rng.uniform(0.0, o)))
            else:
                # 1 - U[0, 1-o-L) lands in (o+L, 1]
                right.append(1.0 - float(rng.uniform(0.0, 1.0 - o - ll)))
        return Instance(kk, o, ll, sorted(left), sorted(right))


def corpus(seed: int, count: int, **kwargs) -> list[Instance]:
    """``count`` instances from one seeded stream; identical for identical arguments."""
    rng = np.random.default_rng(seed)
    return [random_instance(rng, **kwargs) for _ in range(count)]


# -- objectives and oracles ------------------------------------------------------------


def evaluate(out: Outcome, inst: Instance, objective: Union[str, Objective]) -> float:
    obj = Objective.parse(objective)
    if isinstance(out, Lottery):
        return lottery_social_cost(out, inst) if obj is Objective.SC else lottery_max_cost(out, inst)
    return social_cost(out, inst) if obj is Objective.SC else max_cost(out, inst)


def optimum(inst: Instance, objective: Union[str, Objective]) -> tuple[Edge, float]:
    """Exact optimum from the closed-form optimal mechanisms."""
    obj = Objective.parse(objective)
    edge = opt_soc_cost(inst) if obj is Objective.SC else opt_max_cost(inst)
    return edge, evaluate(edge, inst, obj)


def grid_opt(inst: Instance, objective: Union[str, Objective], resolution: int) -> tuple[Edge, float]:
    """Best edge on the (resolution+1)^2 grid over [0, o] x [o+L, 1]."""
    obj = Objective.parse(objective)
    if resolution < 2:
        raise ValueError(f"resolution must be >= 2, got {resolution}")
    if obj is Objective.MC and inst.n == 0:
        raise InstanceError("no agents")
    a = np.linspace(0.0, inst.o, resolution + 1)[:, None]
    b = np.linspace(inst.o + inst.L, 1.0, resolution + 1)[None, :]
    b[0, -1] = 1.0
    travel = inst.k * (b - a)
    total = np.zeros((resolution + 1, resolution + 1))
    worst = np.full((resolution + 1, resolution + 1), -np.inf)
    for side, _, x in inst.agents():
        c = np.abs(x - a) + travel + (1.0 - b) if side is Side.LEFT else np.abs(x - b) + travel + a
        total += c
        np.maximum(worst, c, out=worst)
    vals = total if obj is Objective.SC else worst
    i, j = np.unravel_index(int(np.argmin(vals)), vals.shape)
    return Edge(float(a[i, 0]), float(b[0, j])), float(vals[i, j])


def ratio(mechanism: MechanismLike, inst: Instance, objective: Union[str, Objective] = Objective.MC) -> float:
    """Objective value of the mechanism's outcome over the optimal value."""
    mech = _resolve(mechanism)
    _, opt = optimum(inst, objective)
    if opt <= 1e-12:
        raise DegenerateInstance(f"optimal value {opt!r} is too small for a ratio")
    return evaluate(mech(inst), inst, objective) / opt


def max_cost_certificate(inst: Instance) -> float:
    """Distance between the costs of the two inner extreme agents at the MC optimum.

    One-sided instances use the two extremes of the occupied group.
    """
    edge = opt_max_cost(inst)
    k = inst.k
    if inst.two_sided:
        ex = extremes(inst)
        return abs(agent_cost(edge, ex.x_r, Side.LEFT, k) - agent_cost(edge, ex.y_l, Side.RIGHT, k))
    side = Side.LEFT if inst.left else Side.RIGHT
    xs = inst.left if inst.left else inst.right
    return abs(agent_cost(edge, xs[0], side, k) - agent_cost(edge, xs[-1], side, k))


# -- incentives -------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    """A profitable deviation, or a monotonicity counterexample when ``kind == "monotone"``.

    For incentive violations ``gains`` holds each member's cost decrease;
    for monotonicity it holds the displacement of the output.
    """

    instance: Instance
    coalition: tuple[tuple[Side, int], ...]
    misreports: tuple[float, ...]
    gains: tuple[float, ...]
    mechanism: str = ""
    kind: str = "incentive"

    CSV_HEADER = "mechanism,kind,k,o,L,left,right,members,misreports,gains"

    def csv_row(self) -> str:
        inst = self.instance
        members = " ".join(f"{s.value}:{i}" for s, i in self.coalition)
        fields = [
            self.mechanism,
            self.kind,
            f"{inst.k:.6f}",
            f"{inst.o:.6f}",
            f"{inst.L:.6f}",
            " ".join(f"{v:.6f}" for v in inst.left),
            " ".join(f"{v:.6f}" for v in inst.right),
            members,
            " ".join(f"{v:.6f}" for v in self.misreports),
            " ".join(f"{v:.6f}" for v in self.gains),
        ]
        return ",".join(fields)


def misreport_grid(inst: Instance, side: Side, resolution: int) -> np.ndarray:
    """Uniform grid of the region of ``side``: o*i/G on the left, o+L+(1-o-L)(i+1)/G on the right."""
    i = np.arange(resolution, dtype=float)
    if side is Side.LEFT:
        return inst.o * i / resolution
    g = inst.o + inst.L + (1.0 - inst.o - inst.L) * (i + 1.0) / resolution
    g[-1] = 1.0
    return g


def _candidates(inst: Instance, side: Side, resolution: int, cross_region: bool) -> np.ndarray:
    if cross_region:
        return np.concatenate((misreport_grid(inst, Side.LEFT, resolution), misreport_grid(inst, Side.RIGHT, resolution)))
    return misreport_grid(inst, side, resolution)


def _with_reports(inst: Instance, members: Sequence[tuple[Side, int]], reports: Sequence[float]) -> Instance:
    skip = set(members)
    pos = [x for side, i, x in inst.agents() if (side, i) not in skip]
    return Instance.from_positions(pos + list(reports), inst.k, inst.o, inst.L)


def _agent_index(inst: Instance, flat: int) -> tuple[Side, int]:
    n1 = len(inst.left)
    return (Side.LEFT, flat) if flat < n1 else (Side.RIGHT, flat - n1)


def _incentives_kernel(mech, inst, size, resolution, tol, cross_region, samples, seed):
    par = _kernels.params(inst.k, inst.o, restrict_c(inst.k))
    lv = np.asarray(inst.left, dtype=float)
    rv = np.asarray(inst.right, dtype=float)
    members = np.zeros(size, dtype=np.int64)
    reports = np.zeros(size)
    gains = np.zeros(size)
    found = _kernels.fuzz_instance(
        _kernels.KERNEL_IDS[mech.kernel], par, lv, rv, size,
        misreport_grid(inst, Side.LEFT, resolution), misreport_grid(inst, Side.RIGHT, resolution),
        cross_region, samples, seed, tol, members, reports, gains,
    )
    if not found:
        return None
    return Violation(
        inst,
        tuple(_agent_index(inst, int(m)) for m in members),
        tuple(float(r) for r in reports),
        tuple(float(g) for g in gains),
        mech.name,
    )


def _incentives_python(mech, inst, size, resolution, tol, cross_region, samples, seed):
    agents = list(inst.agents())
    truthful = _as_lottery(mech(inst))
    truth = {(s, i): lottery_cost(truthful, x, s, inst.k) for s, i, x in agents}
    rng = np.random.default_rng(seed)
    for combo in itertools.combinations(agents, size):
        members = [(s, i) for s, i, _ in combo]
        cands = [_candidates(inst, s, resolution, cross_region) for s, _, _ in combo]
        if samples > 0:
            tuples = (tuple(c[rng.integers(len(c))] for c in cands) for _ in range(samples))
        else:
            tuples = itertools.product(*cands)
        best, best_rep = -math.inf, None
        for rep in tuples:
            out = _as_lottery(mech(_with_reports(inst, members, rep)))
            gain = min(truth[(s, i)] - lottery_cost(out, x, s, inst.k) for s, i, x in combo)
            if gain > tol and gain > best:
                best, best_rep = gain, rep
        if best_rep is not None:
            out = _as_lottery(mech(_with_reports(inst, members, best_rep)))
            gains = tuple(truth[(s, i)] - lottery_cost(out, x, s, inst.k) for s, i, x in combo)
            return Violation(inst, tuple(members), tuple(float(r) for r in best_rep), gains, mech.name)
    return None


def check_incentives(
    mechanism: MechanismLike,
    inst: Instance,
    coalition_size: int = 1,
    resolution: int = DEFAULT_GRID,
    tol: float = DEFAULT_TOL,
    cross_region: bool = False,
    samples: int | None = None,
    seed: int = 0,
    use_kernel: bool = True,
) -> Violation | None:
    """Search for a coalition whose members all strictly gain by misreporting.

    Coalitions are tried in agent order (left group first). Sizes 1 and 2
    search the full misreport grid; size 3 draws ``samples`` random
    misreport tuples per coalition. Returns the first violating coalition
    together with the misreport that maximizes its smallest member gain.
    """
    if not 1 <= coalition_size <= 3:
        raise ValueError(f"coalition size must be 1, 2 or 3, got {coalition_size}")
    mech = _resolve(mechanism)
    if mech.point_obstacle_only and inst.L != 0.0:
        mech(inst)  # raises the mechanism's own regime error
    if samples is None:
        samples = DEFAULT_TRIPLE_SAMPLES if coalition_size == 3 else 0
    if use_kernel and mech.kernel is not None:
        return _incentives_kernel(mech, inst, coalition_size, resolution, tol, cross_region, samples, seed)
    return _incentives_python(mech, inst, coalition_size, resolution, tol, cross_region, samples, seed)


def _edge_shift(e: Edge, f: Edge) -> float:
    return max(abs(e.a - f.a), abs(e.b - f.b))


def check_monotone(
    mechanism: MechanismLike,
    inst: Instance,
    moves: int = 20,
    tol: float = DEFAULT_TOL,
    seed: int = 0,
) -> Violation | None:
    """Move single agents without crossing their group's output coordinate; the output must not change.

    A left agent is compared against a, a right agent against b. Agents
    located exactly at that coordinate are skipped.
    """
    mech = _resolve(mechanism)
    if mech.randomized:
        raise ValueError(f"{mech.name} is randomized; monotonicity applies to deterministic mechanisms")
    rng = np.random.default_rng(seed)
    base = mech(inst)
    agents = list(inst.agents())
    for _ in range(moves):
        side, i, x = agents[int(rng.integers(len(agents)))]
        if side is Side.LEFT:
            c = base.a
            lo, hi = (0.0, c) if x < c else (c, inst.o)
        else:
            c = base.b
            lo, hi = (inst.o + inst.L, c) if x < c else (c, 1.0)
        if x == c:
            continue
        # sample the open interval, keeping the closed end of the region reachable
        new = float(rng.uniform(lo, hi))
        if new == c or not inst.in_region(new, side) or (new < c) != (x < c):
            continue
        moved = _with_reports(inst, [(side, i)], [new])
        out = mech(moved)
        shift = _edge_shift(base, out)
        if shift > tol:
            return Violation(inst, ((side, i),), (new,), (shift,), mech.name, kind="monotone")
    return None


@dataclass(frozen=True)
class PeakCounterexample:
    instance: Instance
    side: Side
    index: int
    alpha: Edge
    beta: Edge
    cost_alpha: float
    cost_beta: float


def peak_of(inst: Instance, side: Side, index: int) -> Edge:
    x = inst.position(side, index)
    return Edge(x, 1.0) if side is Side.LEFT else Edge(0.0, x)


def check_single_peaked(inst: Instance, samples: int = 200, seed: int = 0, tol: float = 1e-12) -> PeakCounterexample | None:
    """Dominance check: moving an outcome toward an agent's peak on both axes never hurts it.

    For each agent, draw beta in the feasible box and alpha coordinatewise
    between beta and the agent's peak.
    """
    rng = np.random.default_rng(seed)
    lo_b = inst.o + inst.L
    for side, i, x in inst.agents():
        peak = peak_of(inst, side, i)
        for _ in range(samples):
            ba = float(rng.uniform(0.0, inst.o))
            bb = float(rng.uniform(lo_b, 1.0))
            aa = ba + float(rng.random()) * (peak.a - ba)
            ab = bb + float(rng.random()) * (peak.b - bb)
            alpha, beta = Edge(aa, ab), Edge(ba, bb)
            ca = agent_cost(alpha, x, side, inst.k)
            cb = agent_cost(beta, x, side, inst.k)
            if ca > cb + tol:
                return PeakCounterexample(inst, side, i, alpha, beta, ca, cb)
    return None


# -- worst-case search -------------------------------------------------------------------


@dataclass(frozen=True)
class RatioReport:
    mechanism: str
    objective: Objective
    k: float
    L: float
    worst_ratio: float
    witness: Instance
    mech_value: float
    opt_value: float

    CSV_HEADER = "mechanism,objective,k,L,worst_ratio,mech_value,opt_value"

    def csv_row(self) -> str:
        return ",".join([
            self.mechanism, self.objective.value, f"{self.k:.6f}", f"{self.L:.6f}",
            f"{self.worst_ratio:.6f}", f"{self.mech_value:.6f}", f"{self.opt_value:.6f}",
        ])


def structured_instances(k: float, L: float) -> list[Instance]:
    """Known hard instances, adapted to (k, L) where the family allows it."""
    out = []
    for eps in (1e-2, 1e-3, 1e-4):
        out.append(paper_witness("twoextreme-tight", k=k, eps=eps, L=L).instance)
        if L == 0.0:
            for name in ("appendixA-mc", "appendixA-sc", "appendixB", "appendixB-mirror"):
                out.append(paper_witness(name, k=k, eps=eps).instance)
    if L == 0.0:
        out.append(paper_witness("optmc-nonsp", k=k).instance)
    return out


def worst_ratio_search(
    mechanism: MechanismLike,
    objective: Union[str, Objective] = Objective.MC,
    k: float = 0.0,
    L: float = 0.0,
    budget: int = 10_000,
    seed: int = 42,
) -> RatioReport:
    """Largest ratio over structured families plus ``budget`` random two-sided instances."""
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    mech = _resolve(mechanism)
    obj = Objective.parse(objective)
    if mech.point_obstacle_only and L != 0.0:
        raise UnsupportedRegime(f"{mech.name} is only defined for L = 0 (got L={L!r})")
    rng = np.random.default_rng(seed)
    pool = structured_instances(k, L)
    pool += [random_instance(rng, k=k, L=L, two_sided=True) for _ in range(budget)]
    best: RatioReport | None = None
    for inst in pool:
        _, opt = optimum(inst, obj)
        if opt <= 1e-12:
            continue
        val = evaluate(mech(inst), inst, obj)
        r = val / opt
        if best is None or r > best.worst_ratio:
            best = RatioReport(mech.name, obj, k, L, r, inst, val, opt)
    assert best is not None
    return best


# -- witness catalog ------------------------------------------------------------------------


@dataclass(frozen=True)
class Witness:
    name: str
    instance: Instance
    anchor: str
    expected: dict = field(default_factory=dict)


def _tight(k: float, eps: float, L: float) -> Witness:
    t = (1.0 - L - eps) / 2.0
    o = t + eps / 2.0
    inst = Instance(k, o, L, (0.0, t), (t + L + eps,))
    d = L + eps
    r = 2.0 * (1.0 - (1.0 - k) * d) / (1.0 + k - (1.0 - k) * d)
    return Witness(
        "twoextreme-tight", inst,
        "inner-extreme tightness: x_l = 0 and y_l = x_r + L + eps; ratio tends to the inner-extreme guarantee",
        {"ratio:twoextreme:inner": r},
    )


def _median_witness(k: float, eps: float, name: str) -> Witness:
    inst = Instance(k, 1.0 - eps / 2.0, 0.0, (0.0, eps, 1.0 - eps), (1.0,))
    mc = (k * (1.0 - eps) + 1.0 - 2.0 * eps) / (k * (1.0 - (1.0 - eps) / 2.0) + (1.0 - eps) / 2.0)
    sc = (4.0 * k * (1.0 - eps) + 1.0) / (4.0 * k * eps + 2.0 * (1.0 - eps) + (1.0 - 2.0 * eps))
    anchor = "median bad profile (0, eps, 1-eps, 1) with the obstacle inside (1-eps, 1)"
    return Witness(name, inst, anchor, {
        "edge:median": (eps, 1.0),
        "edge:optmc": ((1.0 - eps) / 2.0, 1.0),
        "ratio_mc:median": mc,
        "ratio_sc_vs_edge:median": sc,
        "sc_edge": (1.0 - eps, 1.0),
    })


def _small_k(k: float, eps: float, t: int) -> Witness:
    inst = Instance(k, eps / 2.0, 0.0, (0.0,), (eps,) * t + (1.0,) * t)
    r = (k * (2 * t + 1) + t * (1.0 - eps)) / (k * eps * (2 * t + 1) + (t + 1) * (1.0 - eps))
    return Witness("appendixA-smallk", inst,
                   "median for small k: one agent at 0, t at eps, t at 1, obstacle inside (0, eps)",
                   {"edge:median": (0.0, 1.0), "sc_edge": (0.0, eps), "ratio_sc_vs_edge:median": r})


def _variant_witness(k: float, eps: float, mirror: bool) -> Witness:
    r = (1.0 - eps + k) / ((1.0 + k) / 2.0 - (1.0 - k) * eps / 2.0)
    if mirror:
        inst = Instance(k, eps / 2.0, 0.0, (0.0,), (eps, 1.0))
        return Witness("appendixB-mirror", inst,
                       "mirror of the two-extreme variant instance: x = 0, y_l = eps, y_r = 1",
                       {"ratio:twoextreme:right": r})
    inst = Instance(k, 1.0 - eps / 2.0, 0.0, (0.0, 1.0 - eps), (1.0,))
    return Witness("appendixB", inst,
                   "two-extreme variants: x_l = 0, x_r = 1-eps, y_l = y_r = 1",
                   {"ratio:twoextreme:outer": r, "ratio:twoextreme:left": r})


WITNESS_NAMES = (
    "optmc-nonsp",
    "midpoints",
    "twoextreme-tight",
    "appendixA-mc",
    "appendixA-sc",
    "appendixA-smallk",
    "appendixB",
    "appendixB-mirror",
)

_CALL = re.compile(r"^([\w-]+)\((.*)\)$")


def paper_witness(name: str, k: float | None = None, eps: float | None = None, L: float = 0.0, t: int = 20) -> Witness:
    """Prebuilt hard or illustrative instance with its expected artifacts.

    Parametric names also accept call syntax, e.g. ``"twoextreme-tight(0.5, 1e-4)"``
    for (k, eps).
    """
    m = _CALL.match(name.strip())
    if m:
        name = m.group(1)
        args = [float(a) for a in m.group(2).split(",") if a.strip()]
        if args:
            k = args[0]
        if len(args) > 1:
            eps = args[1]
    if name == "optmc-nonsp":
        kk = 0.5 if k is None else k
        inst = Instance(kk, 0.5, 0.0, (0.0, 0.2), (0.8, 1.0))
        return Witness(name, inst, "max-cost optimum is manipulable: the agent at 0.2 reports 0.4", {
            "edge:optmc": (0.1, 0.9),
            "member": (Side.LEFT, 1),
            "misreport": 0.4,
            "gain": 0.1 + 0.1 * kk,
        })
    if name == "midpoints":
        kk = 0.0 if k is None else k
        inst = Instance(kk, 0.5, 0.0, (0.0, 0.2), (0.8, 1.0))
        return Witness(name, inst, "max-cost optimum returns the two midpoints", {
            "edge:optmc": (0.1, 0.9),
            "edge:twoextreme:inner": (0.2, 0.8),
        })
    kk = 0.0 if k is None else k
    if name == "twoextreme-tight":
        return _tight(kk, 1e-4 if eps is None else eps, L)
    if name in ("appendixA-mc", "appendixA-sc"):
        if name == "appendixA-sc" and k is None:
            kk = 0.75
        return _median_witness(kk, 0.01 if eps is None else eps, name)
    if name == "appendixA-smallk":
        return _small_k(0.25 if k is None else k, 1e-3 if eps is None else eps, t)
    if name in ("appendixB", "appendixB-mirror"):
        return _variant_witness(kk, 1e-3 if eps is None else eps, name == "appendixB-mirror")
    raise KeyError(f"unknown witness {name!r}; known: {', '.join(WITNESS_NAMES)}")


__all__ = [
    "MECHANISMS",
    "DegenerateInstance",
    "Objective",
    "PeakCounterexample",
    "RatioReport",
    "Violation",
    "Witness",
    "check_incentives",
    "check_monotone",
    "check_single_peaked",
    "corpus",
    "evaluate",
    "grid_opt",
    "max_cost_certificate",
    "misreport_grid",
    "optimum",
    "paper_witness",
    "random_instance",
    "ratio",
    "worst_ratio_search",
]

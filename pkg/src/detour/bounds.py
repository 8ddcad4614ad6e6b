"""Approximation-ratio curves and the computer-assisted lower bound B(k).

Upper curves are the guarantees of the mechanisms in
:mod:`detour.mechanisms`; lower curves bound every strategyproof
mechanism. B(k) comes from a minimax grid search over 16 four-agent
profiles that a strategyproof mechanism must answer with the same edge.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from detour import _kernels
from detour.mechanisms import restrict_c
from detour.model import DEFAULT_EPS, Extremes, InstanceError, check_coefficient

SKIP_EPS = 1e-8
SAFE_MARGIN = 0.003
DEFAULT_GRID = 1000
O_SWEEP = tuple(0.5 + i / 40 for i in range(21))
KAPPA = (9.0 - math.sqrt(73.0)) / 4.0

UPPER_CURVES = ("two_extreme", "restrict", "randmc", "randub")


def _check_length(L: float) -> None:
    if math.isnan(L) or not 0.0 <= L < 1.0:
        raise InstanceError(f"obstacle length L={L!r} out of range [0, 1)")


def restrict_terms(k: float) -> tuple[float, float, float, float]:
    """(R1, R2, R3, R4) of the restricted mechanism's guarantee at c = c(k), k > 0."""
    c = restrict_c(k)
    # with c = (1-k)/D, clear D so that nothing cancels as c -> 1
    sr = math.sqrt(k**4 - k**3 + 3.0 * k**2 + k)
    d = 1.0 + k * k + sr
    e = k + k * k + sr  # D (1 - c)
    r1 = (2.0 * k + sr) / (3.0 * k + k**3 + (1.0 + k) * sr)
    r2 = (k * (1.0 - k) * (2.0 * d - 1.0 + k) + e * (d + 1.0 - k)) / (2.0 * d * (e + k * (1.0 - k)))
    r3 = (1.0 + 2.0 * c * k) / (2.0 - (1.0 - k) * c)
    return r1, r2, r3, c


def upper_curve(name: str, k: float, L: float = 0.0) -> float:
    """Proven approximation ratio for maximum cost.

    ``two_extreme`` accepts any obstacle length; the other curves are only
    established for a point obstacle.
    """
    check_coefficient(k)
    _check_length(L)
    if name == "two_extreme":
        return (2.0 - 2.0 * (1.0 - k) * L) / (1.0 + k - (1.0 - k) * L)
    if name not in UPPER_CURVES:
        raise KeyError(f"unknown curve {name!r}; known: {', '.join(UPPER_CURVES)}")
    if L != 0.0:
        raise InstanceError(f"curve {name!r} is only defined for L = 0 (got L={L!r})")
    if name == "restrict":
        if k == 0.0:
            # c(0) = 1 turns R1 and R2 into 0/0; all four terms tend to 1
            return 2.0
        return 2.0 * max(restrict_terms(k))
    if name == "randmc":
        return max((4.0 - 2.0 * k) / (3.0 - k), (1.0 + k) / (1.0 + k * k))
    if k <= KAPPA:
        return (4.0 - 2.0 * k) / (3.0 - k)
    return (11.0 + 2.0 * k**3 - 9.0 * k * k) / (9.0 + k * k - 6.0 * k)


def mechanism_bound(mechanism: str, k: float, L: float = 0.0) -> float | None:
    """Guarantee for a registered mechanism name, or None if none is proven."""
    if mechanism in ("twoextreme", "twoextreme:inner"):
        return upper_curve("two_extreme", k, L)
    if mechanism in ("twoextreme:outer", "twoextreme:left", "twoextreme:right"):
        return 2.0
    if mechanism == "restrict":
        return upper_curve("restrict", k, L)
    if mechanism == "randmc":
        return upper_curve("randmc", k, L)
    if mechanism == "randub":
        return upper_curve("randub", k, L)
    if mechanism == "optmc":
        return 1.0
    return None


# -- analytic lower bounds -----------------------------------------------------------


def gm_terms(a: float, k: float, L: float) -> tuple[float, float]:
    """The two forced ratios when the mechanism places the left endpoint at ``a``."""
    den1 = a / 2.0 + k * (1.0 - a / 2.0)
    first = 2.0 if den1 == 0.0 else (a + k * (1.0 - a)) / den1
    second = 2.0 * (max(a, 1.0 - L - a) + k * (1.0 - a)) / (1.0 - L + k * (1.0 + L))
    return first, second


def gm_argmin(k: float, L: float = 0.0) -> float:
    """Closed-form minimizer a0, clipped to (1-L)/2; written in cancellation-free form."""
    if k == 0.0:
        return 0.0
    B = (1.0 - k) * L + 2.0 * (1.0 + k)
    qa = (1.0 + k) * (1.0 - k)
    qb = k * B
    qc = k * (1.0 + k) * (1.0 - L)
    a0 = 2.0 * qc / (qb + math.sqrt(qb * qb + 4.0 * qa * qc))
    return min(a0, (1.0 - L) / 2.0)


def gm_numeric(k: float, L: float = 0.0, samples: int = 4001) -> float:
    """min over a in [0, 1-L] of the larger forced ratio, by dense scan plus bounded refinement."""
    hi = 1.0 - L
    grid = np.linspace(0.0, hi, samples)
    vals = [max(gm_terms(a, k, L)) for a in grid]
    i = int(np.argmin(vals))
    lo_a, hi_a = grid[max(i - 1, 0)], grid[min(i + 1, samples - 1)]
    res = minimize_scalar(lambda a: max(gm_terms(a, k, L)), bounds=(lo_a, hi_a), method="bounded",
                          options={"xatol": 1e-13})
    return min(float(res.fun), vals[i])


def analytic_lb(kind: str, k: float, L: float = 0.0) -> float:
    """Lower bound on the ratio of any strategyproof mechanism (maximum cost)."""
    check_coefficient(k)
    if kind == "randomized":
        return (6.0 + 6.0 * k) / (5.0 + 7.0 * k)
    if kind != "deterministic":
        raise KeyError(f"unknown lower-bound kind {kind!r}")
    _check_length(L)
    if k == 0.0:
        return 2.0
    return max(gm_terms(gm_argmin(k, L), k, L))


def point_obstacle_lb(k: float) -> float:
    """2 / (1 + sqrt k): the deterministic bound at L = 0."""
    return 2.0 / (1.0 + math.sqrt(k)) if k > 0.0 else 2.0


# -- computer-assisted bound -------------------------------------------------------------


@dataclass(frozen=True)
class SixteenProfiles:
    """The extreme-agent profiles that must share the output (a0, b0).

    Entries follow the product order x_l, x_r, y_l, y_r over
    {0, a0} x {a0, o-eps} x {o+eps, b0} x {b0, 1}. They are kept as raw
    extremes: the construction does not guard the orderings.
    """

    o: float
    a0: float
    b0: float
    eps: float
    profiles: tuple[Extremes, ...]

    @property
    def misordered(self) -> list[int]:
        """Indices of entries with x_l > x_r or y_l > y_r."""
        return [i for i, p in enumerate(self.profiles) if p.x_l > p.x_r or p.y_l > p.y_r]


def profiles16(o: float, a0: float, b0: float, eps: float = DEFAULT_EPS) -> SixteenProfiles:
    choices = ((0.0, a0), (a0, o - eps), (o + eps, b0), (b0, 1.0))
    return SixteenProfiles(o, a0, b0, eps, tuple(Extremes(*p) for p in itertools.product(*choices)))


def _max_cost4(a: float, b: float, p: Extremes, k: float) -> float:
    t = k * (b - a)
    return max(
        abs(p.x_l - a) + t + (1.0 - b),
        abs(p.x_r - a) + t + (1.0 - b),
        abs(p.y_l - b) + t + a,
        abs(p.y_r - b) + t + a,
    )


def _opt_max_cost4(p: Extremes, k: float) -> float:
    if 1.0 - p.y_r >= p.x_l:
        a, b = (p.x_l + p.x_r) / 2.0, (p.y_l - p.x_l) / 2.0 + 0.5
    else:
        a, b = (p.x_r - p.y_r) / 2.0 + 0.5, (p.y_l + p.y_r) / 2.0
    return _max_cost4(a, b, p, k)


def f_k(o: float, a0: float, b0: float, k: float, eps: float = DEFAULT_EPS, eps_skip: float = SKIP_EPS) -> float:
    """Worst MC ratio of the fixed edge (a0, b0) over the 16 profiles.

    Profiles whose optimum is below ``eps_skip`` are ignored.
    """
    worst = 0.0
    for p in profiles16(o, a0, b0, eps).profiles:
        opt = _opt_max_cost4(p, k)
        if opt < eps_skip:
            continue
        worst = max(worst, _max_cost4(a0, b0, p, k) / opt)
    return worst


def grid_point(o: float, i: int, j: int, n: int) -> tuple[float, float]:
    """Candidate (a0, b0) for indices 0 <= i, j < n; the upper grid lines are excluded."""
    return o * i / n, o + (1.0 - o) * j / n


def inner_min(k: float, o: float, grid_n: int, eps: float = DEFAULT_EPS, eps_skip: float = SKIP_EPS) -> float:
    """min over the (a0, b0) grid of :func:`f_k` (compiled)."""
    check_coefficient(k)
    if grid_n < 2:
        raise ValueError(f"grid_n must be >= 2, got {grid_n}")
    return float(_kernels.inner_min(float(k), float(o), int(grid_n), float(eps), float(eps_skip)))


def inner_min_reference(k: float, o: float, grid_n: int, eps: float = DEFAULT_EPS, eps_skip: float = SKIP_EPS) -> float:
    """Pure-Python :func:`inner_min`; quadratic in ``grid_n``, for cross-checks only."""
    return min(
        f_k(o, *grid_point(o, i, j, grid_n), k, eps, eps_skip)
        for i in range(grid_n)
        for j in range(grid_n)
    )


@dataclass(frozen=True)
class LowerBoundRecord:
    k: float
    grid_n: int
    o_values: tuple[float, ...]
    raw: float
    safe: float
    analytic: float
    per_o: tuple[float, ...] = ()

    @property
    def o_mode(self) -> str:
        return "fixed05" if self.o_values == (0.5,) else "sweep"


def o_values(o_mode: str) -> tuple[float, ...]:
    if o_mode == "fixed05":
        return (0.5,)
    if o_mode == "sweep":
        return O_SWEEP
    raise ValueError(f"unknown o-mode {o_mode!r}; expected fixed05 or sweep")


def b_of_k(
    k: float,
    grid_n: int = DEFAULT_GRID,
    o_mode: str = "fixed05",
    eps: float = DEFAULT_EPS,
    eps_skip: float = SKIP_EPS,
) -> LowerBoundRecord:
    """Grid estimate of B(k) with its safe reported value.

    Each o contributes max(inner_min, 2/(1+sqrt k)); raw is the largest
    contribution and safe = max(2/(1+sqrt k), raw - 0.003).
    """
    os_ = o_values(o_mode)
    lb = point_obstacle_lb(k)
    per_o = tuple(max(inner_min(k, o, grid_n, eps, eps_skip), lb) for o in os_)
    raw = max(per_o)
    return LowerBoundRecord(k, grid_n, os_, raw, max(lb, raw - SAFE_MARGIN), lb, per_o)


def k_range(start: float, end: float, step: float) -> list[float]:
    """Inclusive arithmetic sweep, rounded so that decimal steps land exactly."""
    if step <= 0.0 or math.isnan(step):
        raise ValueError(f"k-step must be positive, got {step!r}")
    if end < start:
        raise ValueError(f"empty k range: start {start!r} > end {end!r}")
    count = int(math.floor((end - start) / step + 1e-9)) + 1
    ks = [round(start + i * step, 12) for i in range(count)]
    for k in ks:
        check_coefficient(k)
    return ks


@dataclass(frozen=True)
class CurvePoint:
    k: float
    L: float
    curve: str
    value: float


CURVE_COLUMNS = ("two_extreme", "restrict", "det_lb", "rand_upper", "rand_lb")


def curve_row(k: float, L: float = 0.0) -> list[CurvePoint]:
    values = (
        upper_curve("two_extreme", k, L),
        upper_curve("restrict", k, L),
        analytic_lb("deterministic", k, L),
        upper_curve("randmc", k, L),
        analytic_lb("randomized", k, L),
    )
    return [CurvePoint(k, L, name, v) for name, v in zip(CURVE_COLUMNS, values)]


@dataclass(frozen=True)
class GapStats:
    det_gap: float
    det_argk: float
    rand_gap: float
    rand_argk: float


Mapper = Callable[[Callable, Iterable], Iterable]


def _safe_at(args: tuple[float, int]) -> float:
    k, grid_n = args
    return b_of_k(k, grid_n).safe


def gap_stats(k_step: float = 1e-3, grid_n: int = DEFAULT_GRID, mapper: Mapper = map) -> GapStats:
    """Largest distance between the best known upper and lower bounds.

    The deterministic gap compares the restricted mechanism's guarantee to
    the safe computed bound; the randomized gap compares the randomized
    mechanism's guarantee to the analytic randomized bound. ``mapper`` may
    be a parallel ordered map.
    """
    if k_step > 1e-3:
        raise ValueError(f"k-step must be <= 1e-3, got {k_step!r}")
    ks = k_range(0.0, 1.0 - k_step, k_step)
    ks = [k for k in ks if k < 1.0]
    safe = list(mapper(_safe_at, [(k, grid_n) for k in ks]))
    det = [upper_curve("restrict", k) - s for k, s in zip(ks, safe)]
    rnd = [upper_curve("randmc", k) - analytic_lb("randomized", k) for k in ks]
    i = int(np.argmax(det))
    j = int(np.argmax(rnd))
    return GapStats(det[i], ks[i], rnd[j], ks[j])


def non_increasing(values: Sequence[float], tol: float = 1e-6) -> bool:
    return all(b <= a + tol for a, b in zip(values, values[1:]))

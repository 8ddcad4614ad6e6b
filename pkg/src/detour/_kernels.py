"""Compiled inner loops for the lower-bound grid search and incentive fuzzing.

These mirror the scalar implementations in :mod:`detour.mechanisms` and
:mod:`detour.bounds`; the test suite cross-checks both routes.
"""

from __future__ import annotations

import numpy as np
from numba import njit

OPTSC = 0
OPTMC = 1
INNER = 2
OUTER = 3
LEFTPAIR = 4
RIGHTPAIR = 5
RESTRICT = 6
RANDMC = 7
RANDUB = 8
MEDIAN = 9

KERNEL_IDS = {
    "optsc": OPTSC,
    "optmc": OPTMC,
    "inner": INNER,
    "outer": OUTER,
    "leftpair": LEFTPAIR,
    "rightpair": RIGHTPAIR,
    "restrict": RESTRICT,
    "randmc": RANDMC,
    "randub": RANDUB,
    "median": MEDIAN,
}

# -- lower bound -------------------------------------------------------------------


@njit(cache=True)
def _mc4(a, b, xl, xr, yl, yr, k):
    t = k * (b - a)
    c1 = abs(xl - a) + t + (1.0 - b)
    c2 = abs(xr - a) + t + (1.0 - b)
    c3 = abs(yl - b) + t + a
    c4 = abs(yr - b) + t + a
    return max(max(max(c1, c2), c3), c4)


@njit(cache=True)
def _opt4(xl, xr, yl, yr, k):
    if 1.0 - yr >= xl:
        a = (xl + xr) / 2.0
        b = (yl - xl) / 2.0 + 0.5
    else:
        a = (xr - yr) / 2.0 + 0.5
        b = (yl + yr) / 2.0
    return _mc4(a, b, xl, xr, yl, yr, k)


@njit(cache=True)
def worst_ratio16(a0, b0, o, k, eps, skip):
    """Largest MC ratio of the fixed edge (a0, b0) over the 16 extreme profiles."""
    worst = 0.0
    for p0 in range(2):
        xl = 0.0 if p0 == 0 else a0
        for p1 in range(2):
            xr = a0 if p1 == 0 else o - eps
            for p2 in range(2):
                yl = o + eps if p2 == 0 else b0
                for p3 in range(2):
                    yr = b0 if p3 == 0 else 1.0
                    opt = _opt4(xl, xr, yl, yr, k)
                    if opt < skip:
                        continue
                    r = _mc4(a0, b0, xl, xr, yl, yr, k) / opt
                    if r > worst:
                        worst = r
    return worst


@njit(cache=True)
def inner_min(k, o, n, eps, skip):
    """min over the (a0, b0) grid of the 16-profile worst ratio.

    A cell is abandoned as soon as its running worst reaches the current
    best; such a cell can never lower the minimum, so the result equals the
    unpruned search exactly.
    """
    best = np.inf
    for i in range(n):
        a0 = o * i / n
        for j in range(n):
            b0 = o + (1.0 - o) * j / n
            worst = 0.0
            done = False
            for p0 in range(2):
                xl = 0.0 if p0 == 0 else a0
                for p1 in range(2):
                    xr = a0 if p1 == 0 else o - eps
                    for p2 in range(2):
                        yl = o + eps if p2 == 0 else b0
                        for p3 in range(2):
                            yr = b0 if p3 == 0 else 1.0
                            opt = _opt4(xl, xr, yl, yr, k)
                            if opt < skip:
                                continue
                            r = _mc4(a0, b0, xl, xr, yl, yr, k) / opt
                            if r > worst:
                                worst = r
                            if worst >= best:
                                done = True
                                break
                        if done:
                            break
                    if done:
                        break
                if done:
                    break
            if worst < best:
                best = worst
    return best


# -- mechanisms on sorted arrays -------------------------------------------------------
#
# An outcome is a flat 13-tuple (m, a0, b0, p0, ..., a3, b3, p3) holding the
# support size and up to four weighted edges. Plain tuples keep the hot loops
# free of array reference counting.

# layout of the constant vector shared by the mechanism kernels
P_K, P_O, P_LO, P_HI, P_P, P_Q0, P_Q1 = 0, 1, 2, 3, 4, 5, 6


def params(k: float, o: float, c: float) -> np.ndarray:
    """Per-(k, o) constants: thresholds of the restricted variant and lottery weights."""
    p = max((1.0 + k) / (3.0 - k), (k + k * k) / (1.0 + k * k))
    return np.array(
        [k, o, o * (1.0 - c), o + c * (1.0 - o), p, (1.0 + k) / (3.0 - k), 2.0 * (1.0 - k) / (3.0 - k)]
    )


@njit(cache=True)
def _point(a, b):
    z = 0.0
    return (1.0, a, b, 1.0, z, z, z, z, z, z, z, z, z)


@njit(cache=True)
def _outcome_ext(mid, par, xl, xr, yl, yr, nl, nr):
    """Outcome of a mechanism that only looks at the reported extremes."""
    if nl == 0:
        xl = 0.0
        xr = 0.0
    if nr == 0:
        yl = 1.0
        yr = 1.0
    if mid == OPTMC:
        if nr == 0:
            return _point((xl + xr) / 2.0, 1.0)
        if nl == 0:
            return _point(0.0, (yl + yr) / 2.0)
        if 1.0 - yr >= xl:
            return _point((xl + xr) / 2.0, (yl - xl) / 2.0 + 0.5)
        return _point((xr - yr) / 2.0 + 0.5, (yl + yr) / 2.0)
    if mid == INNER:
        return _point(xr, yl)
    if mid == OUTER:
        return _point(xl, yr)
    if mid == LEFTPAIR:
        return _point(xl, yl)
    if mid == RIGHTPAIR:
        return _point(xr, yr)
    if mid == RESTRICT:
        return _point(min(xr, par[P_LO]), max(yl, par[P_HI]))
    z = 0.0
    if mid == RANDMC:
        p = par[P_P]
        return (2.0, xr, yl, p, xr / 2.0, (yl + 1.0) / 2.0, 1.0 - p, z, z, z, z, z, z)
    # RANDUB: product of the two marginal draws, a-major order
    q0 = par[P_Q0]
    q1 = par[P_Q1]
    ah = xr / 2.0
    bh = (1.0 + yl) / 2.0
    return (4.0, xr, yl, q0 * q0, xr, bh, q0 * q1, ah, yl, q1 * q0, ah, bh, q1 * q1)


@njit(cache=True)
def _optsc_cut(n_own, n_other, k):
    """Number of own-group agents strictly beyond the social-cost endpoint."""
    for j in range(n_own + 1):
        if not ((j + n_other) * (1.0 - k) < (n_own - j) * (1.0 + k)):
            return j
    return n_own


@njit(cache=True)
def outcome(mid, par, lv, nl, rv, nr):
    """Outcome of mechanism ``mid`` on sorted reported positions."""
    if mid == OPTSC:
        k = par[P_K]
        m = _optsc_cut(nl, nr, k)
        m2 = _optsc_cut(nr, nl, k)
        return _point(0.0 if m == 0 else lv[m - 1], 1.0 if m2 == 0 else rv[nr - m2])
    if mid == MEDIAN:
        p = (nl + nr) // 2
        return _point(0.0 if p < nr else lv[p - nr], rv[p] if p < nr else 1.0)
    xl = lv[0] if nl > 0 else 0.0
    xr = lv[nl - 1] if nl > 0 else 0.0
    yl = rv[0] if nr > 0 else 1.0
    yr = rv[nr - 1] if nr > 0 else 1.0
    return _outcome_ext(mid, par, xl, xr, yl, yr, nl, nr)


@njit(cache=True)
def expected_cost(x, is_left, k, t):
    s = 0.0
    for u in range(4):
        if u >= t[0]:
            break
        a = t[1 + 3 * u]
        b = t[2 + 3 * u]
        if is_left:
            s += t[3 + 3 * u] * (abs(x - a) + k * (b - a) + (1.0 - b))
        else:
            s += t[3 + 3 * u] * (abs(x - b) + k * (b - a) + a)
    return s


@njit(cache=True)
def _insert(buf, n, v):
    i = n
    while i > 0 and buf[i - 1] > v:
        buf[i] = buf[i - 1]
        i -= 1
    buf[i] = v
    return n + 1


@njit(cache=True)
def _scan12(mid, par, two, c1, c2, rest_l, nrl, rest_r, nrr, x1, l1, t1, x2, l2, t2, tol, res):
    """Exhaustive scan over one or two members' candidate reports.

    ``res`` receives (best smallest gain, index 1, index 2); the first
    tuple attaining the best value wins ties.
    """
    k = par[P_K]
    o = par[P_O]
    rxl = rest_l[0] if nrl > 0 else np.inf
    rxr = rest_l[nrl - 1] if nrl > 0 else -np.inf
    ryl = rest_r[0] if nrr > 0 else np.inf
    ryr = rest_r[nrr - 1] if nrr > 0 else -np.inf
    order_stat = mid == OPTSC or mid == MEDIAN
    best = -np.inf
    n1 = c1.shape[0]
    inner = c2.shape[0] if two else 1
    for i in range(n1):
        v1 = c1[i]
        for j in range(inner):
            v2 = c2[j] if two else 0.0
            # reported counts and the (at most two) inserted values per side
            nlu = 0
            nru = 0
            lu0 = 0.0
            lu1 = 0.0
            ru0 = 0.0
            ru1 = 0.0
            for s in range(2 if two else 1):
                v = v1 if s == 0 else v2
                if v < o:
                    if nlu == 0:
                        lu0 = v
                    elif v < lu0:
                        lu1 = lu0
                        lu0 = v
                    else:
                        lu1 = v
                    nlu += 1
                else:
                    if nru == 0:
                        ru0 = v
                    elif v < ru0:
                        ru1 = ru0
                        ru0 = v
                    else:
                        ru1 = v
                    nru += 1
            cl = nrl + nlu
            cr = nrr + nru
            if not order_stat:
                xl = rxl
                xr = rxr
                yl = ryl
                yr = ryr
                if nlu > 0:
                    xl = min(xl, lu0)
                    xr = max(xr, lu1 if nlu == 2 else lu0)
                if nru > 0:
                    yl = min(yl, ru0)
                    yr = max(yr, ru1 if nru == 2 else ru0)
                t = _outcome_ext(mid, par, xl, xr, yl, yr, cl, cr)
            else:
                if mid == OPTSC:
                    m = _optsc_cut(cl, cr, k)
                    ia = m - 1
                    m2 = _optsc_cut(cr, cl, k)
                    ib = cr - m2 if m2 > 0 else -1
                else:
                    p = (cl + cr) // 2
                    ia = p - cr if p >= cr else -1
                    ib = p if p < cr else -1
                a = 0.0
                if ia >= 0:
                    # ia-th smallest of rest_l merged with the inserted left values
                    ii = 0
                    jj = 0
                    for _ in range(ia + 1):
                        uj = lu0 if jj == 0 else lu1
                        if jj < nlu and (ii >= nrl or uj < rest_l[ii]):
                            a = uj
                            jj += 1
                        else:
                            a = rest_l[ii]
                            ii += 1
                b = 1.0
                if ib >= 0:
                    ii = 0
                    jj = 0
                    for _ in range(ib + 1):
                        uj = ru0 if jj == 0 else ru1
                        if jj < nru and (ii >= nrr or uj < rest_r[ii]):
                            b = uj
                            jj += 1
                        else:
                            b = rest_r[ii]
                            ii += 1
                t = _point(a, b)
            floor = max(tol, best)
            g = t1 - expected_cost(x1, l1, k, t)
            if g <= floor:
                continue
            if two:
                g2 = t2 - expected_cost(x2, l2, k, t)
                if g2 <= floor:
                    continue
                g = min(g, g2)
            best = g
            res[1] = i
            res[2] = j
    res[0] = best


@njit(cache=True)
def fuzz_instance(mid, par, lv, rv, size, grid_l, grid_r, cross, samples, seed, tol, out_members, out_reports, out_gains):
    """Search coalitions of ``size`` agents for a profitable joint misreport.

    Agents are numbered left group first. Coalitions are visited in
    lexicographic order; within the first coalition that has a violation,
    the misreport maximizing the smallest member gain is reported. With
    ``samples > 0`` each coalition tries that many random misreport tuples
    instead of the full grid product. Returns 1 if a violation was found.
    """
    k = par[P_K]
    o = par[P_O]
    nl = lv.shape[0]
    nr = rv.shape[0]
    n = nl + nr
    if size > n:
        return 0
    pos = np.empty(n)
    isl = np.empty(n, dtype=np.bool_)
    for i in range(nl):
        pos[i] = lv[i]
        isl[i] = True
    for j in range(nr):
        pos[nl + j] = rv[j]
        isl[nl + j] = False

    t0 = outcome(mid, par, lv, nl, rv, nr)
    truth = np.empty(n)
    for i in range(n):
        truth[i] = expected_cost(pos[i], isl[i], k, t0)

    both = np.concatenate((grid_l, grid_r))
    comb = np.arange(size)
    member = np.zeros(n, dtype=np.bool_)
    rest_l = np.empty(n + size)
    rest_r = np.empty(n + size)
    buf_l = np.empty(n + size)
    buf_r = np.empty(n + size)
    idx = np.zeros(size, dtype=np.int64)
    best_idx = np.zeros(size, dtype=np.int64)
    res = np.empty(3)
    if samples > 0:
        np.random.seed(seed)

    while True:
        for i in range(n):
            member[i] = False
        for s in range(size):
            member[comb[s]] = True
        nrl = 0
        nrr = 0
        for i in range(nl):
            if not member[i]:
                rest_l[nrl] = pos[i]
                nrl += 1
        for j in range(nr):
            if not member[nl + j]:
                rest_r[nrr] = pos[nl + j]
                nrr += 1

        cands = []
        for s in range(size):
            if cross:
                cands.append(both)
            elif isl[comb[s]]:
                cands.append(grid_l)
            else:
                cands.append(grid_r)

        best = -np.inf
        if samples == 0 and size <= 2:
            a1 = comb[0]
            a2 = comb[size - 1]
            _scan12(mid, par, size == 2, cands[0], cands[size - 1], rest_l, nrl, rest_r, nrr,
                    pos[a1], isl[a1], truth[a1], pos[a2], isl[a2], truth[a2], tol, res)
            if res[0] > -np.inf:
                best = res[0]
                best_idx[0] = int(res[1])
                if size == 2:
                    best_idx[1] = int(res[2])
        else:
            total = 1
            for s in range(size):
                total *= cands[s].shape[0]
            iters = samples if samples > 0 else total
            for s in range(size):
                idx[s] = 0
            for _ in range(iters):
                if samples > 0:
                    for s in range(size):
                        idx[s] = np.random.randint(0, cands[s].shape[0])
                cl = nrl
                cr = nrr
                for u in range(nrl):
                    buf_l[u] = rest_l[u]
                for u in range(nrr):
                    buf_r[u] = rest_r[u]
                for s in range(size):
                    v = cands[s][idx[s]]
                    if v < o:
                        cl = _insert(buf_l, cl, v)
                    else:
                        cr = _insert(buf_r, cr, v)
                t = outcome(mid, par, buf_l, cl, buf_r, cr)
                worst_gain = np.inf
                for s in range(size):
                    a = comb[s]
                    worst_gain = min(worst_gain, truth[a] - expected_cost(pos[a], isl[a], k, t))
                    if worst_gain <= tol:
                        break
                if worst_gain > tol and worst_gain > best:
                    best = worst_gain
                    for s in range(size):
                        best_idx[s] = idx[s]
                if samples == 0:
                    # odometer over the grid product, last member fastest
                    s = size - 1
                    while s >= 0:
                        idx[s] += 1
                        if idx[s] < cands[s].shape[0]:
                            break
                        idx[s] = 0
                        s -= 1

        if best > -np.inf:
            cl = nrl
            cr = nrr
            for u in range(nrl):
                buf_l[u] = rest_l[u]
            for u in range(nrr):
                buf_r[u] = rest_r[u]
            for s in range(size):
                out_members[s] = comb[s]
                v = cands[s][best_idx[s]]
                out_reports[s] = v
                if v < o:
                    cl = _insert(buf_l, cl, v)
                else:
                    cr = _insert(buf_r, cr, v)
            t = outcome(mid, par, buf_l, cl, buf_r, cr)
            for s in range(size):
                a = comb[s]
                out_gains[s] = truth[a] - expected_cost(pos[a], isl[a], k, t)
            return 1
        # next combination
        s = size - 1
        while s >= 0 and comb[s] == n - size + s:
            s -= 1
        if s < 0:
            return 0
        comb[s] += 1
        for u in range(s + 1, size):
            comb[u] = comb[u - 1] + 1

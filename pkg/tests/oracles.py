"""Independent reference implementations used to cross-check the package.

Everything here is written from the definitions, in the most literal way
possible (explicit loops, full recomputation), and must not import any
fitting internals. Slow on purpose.
"""

import itertools
import math

import numpy as np


# ---------------------------------------------------------------------------
# 1-D minimization
# ---------------------------------------------------------------------------

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section(f, lo, hi, iters=200):
    """Golden-section search for the minimum of a unimodal f on [lo, hi]."""
    a, b = float(lo), float(hi)
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def bracket_minimum(f, width=50.0, points=2001):
    """Coarse scan for a bracketing interval of the minimizer."""
    xs = np.linspace(-width, width, points)
    vals = np.array([f(x) for x in xs])
    i = int(np.argmin(vals))
    assert 0 < i < points - 1, "minimum at scan boundary; widen the bracket"
    return xs[i - 1], xs[i + 1]


def quadratic_vertex(f, x, h=1e-3):
    """Parabola vertex through (x-h, x, x+h); exact when f is quadratic.

    Golden section alone stalls near sqrt(eps) around a flat minimum, so it
    is refined with one interpolation step. Falls back to x when the local
    curvature is not positive.
    """
    fa, fb, fc = f(x - h), f(x), f(x + h)
    denom = fa - 2.0 * fb + fc
    if denom <= 0.0 or not math.isfinite(denom):
        return x
    return x + h * (fa - fc) / (2.0 * denom)


# ---------------------------------------------------------------------------
# Kaplan-Meier
# ---------------------------------------------------------------------------


def km_jump_weights(y_sorted, delta_sorted):
    """Jumps of the Kaplan-Meier estimator at the (untied) sorted times.

    Walks the survival curve one subject at a time: at an event the curve
    drops by S_prev / (at risk), which is that observation's weight.
    """
    n = len(y_sorted)
    surv = 1.0
    w = np.zeros(n)
    for i in range(n):
        at_risk = n - i
        if delta_sorted[i] == 1:
            drop = surv / at_risk
            w[i] = drop
            surv -= drop
    return w


# ---------------------------------------------------------------------------
# Brute-force commonality/difference path
# ---------------------------------------------------------------------------


def brute_cd_path(Xs, ys, ws, assignment, nu, T, lam, mode="all_pairs"):
    """Literal implementation of the joint boosting path.

    Per iteration: enumerate every covariate s and every non-empty subset A
    of the equality class of s's group containing it; the shared increment
    is the exact minimizer of the summed loss over A; evaluate the FULL
    objective (losses + sparsity terms + commonality penalty) at the
    tentative unscaled update; pick the candidate minimizing
    (objective, -|A|, s, A); apply nu times the increment to all of A and
    split the class if A is proper. Returns the (s, A, gamma) record list.
    """
    M = len(Xs)
    p = Xs[0].shape[1]
    K = int(max(assignment)) + 1
    if mode == "ordered":
        normalizer = (M - 1) * K
    else:
        normalizer = M * (M - 1) // 2 * K
    pf = [math.log(len(y)) / len(y) for y in ys]
    beta = np.zeros((p, M))
    parts = [[tuple(range(M))] for _ in range(K)]

    def unequal_pairs(partition):
        where = {}
        for ci, c in enumerate(partition):
            for m in c:
                where[m] = ci
        if mode == "ordered":
            return sum(1 for m in range(M - 1) if where[m] != where[m + 1])
        return sum(
            1 for m1, m2 in itertools.combinations(range(M), 2)
            if where[m1] != where[m2]
        )

    def objective(beta_t, parts_t):
        total = 0.0
        for m in range(M):
            r = ys[m] - Xs[m] @ beta_t[:, m]
            total += 0.5 * float(ws[m] @ (r * r))
            total += pf[m] * int(np.count_nonzero(beta_t[:, m]))
        if normalizer > 0:
            pen = sum(unequal_pairs(pt) for pt in parts_t)
            total += lam * pen / normalizer
        return total

    def split(partition, A):
        out = []
        sA = set(A)
        for c in partition:
            if sA and sA.issubset(set(c)) and len(c) > len(A):
                rest = tuple(m for m in c if m not in sA)
                out.extend([tuple(sorted(A)), rest])
            else:
                out.append(c)
        return sorted((tuple(sorted(c)) for c in out), key=lambda c: c[0])

    records = []
    trace = []
    for _ in range(T):
        best_key = None
        best = None
        for s in range(p):
            k = int(assignment[s])
            for cls in parts[k]:
                for size in range(len(cls), 0, -1):
                    for A in itertools.combinations(cls, size):
                        num = 0.0
                        den = 0.0
                        for m in A:
                            r = ys[m] - Xs[m] @ beta[:, m]
                            num += float((ws[m] * Xs[m][:, s]) @ r)
                            den += float(ws[m] @ (Xs[m][:, s] ** 2))
                        gamma = num / den if den > 0 else 0.0
                        beta_t = beta.copy()
                        for m in A:
                            beta_t[s, m] += gamma
                        parts_t = [list(pt) for pt in parts]
                        if gamma != 0.0 and len(A) < len(cls):
                            parts_t[k] = split(parts_t[k], A)
                        key = (objective(beta_t, parts_t), -len(A), s, A)
                        if best_key is None or key < best_key:
                            best_key, best = key, (s, A, gamma)
        s, A, gamma = best
        k = int(assignment[s])
        cls = next(c for c in parts[k] if A[0] in c)
        if gamma != 0.0 and len(A) < len(cls):
            parts[k] = split(parts[k], A)
        for m in A:
            beta[s, m] += nu * gamma
        records.append((s, tuple(A), gamma))
        trace.append(objective(beta, parts))
    return records, np.array(trace), beta, parts


# ---------------------------------------------------------------------------
# Metrics, the long way
# ---------------------------------------------------------------------------


def hdbic_direct(beta, Xs, ys, deltas, model):
    total = 0.0
    p = beta.shape[0]
    for m in range(len(Xs)):
        r = ys[m] - Xs[m] @ beta[:, m]
        df = int(np.count_nonzero(beta[:, m]))
        if model == "aft":
            order = np.lexsort((1 - deltas[m], ys[m]))
            w = km_jump_weights(ys[m][order], deltas[m][order])
            rs = r[order]
            wrss = float(np.sum(w * rs * rs))
            n_ev = int(deltas[m].sum())
            total += n_ev * math.log(max(wrss, 1e-12)) + df * math.log(p) * math.log(n_ev)
        else:
            n = len(ys[m])
            rss = float(r @ r)
            total += n * math.log(max(rss, 1e-12) / n) + df * math.log(p) * math.log(n)
    return total


def ermse_direct(beta_hat, beta_true):
    total = 0.0
    for j in range(beta_hat.shape[0]):
        for m in range(beta_hat.shape[1]):
            total += (beta_hat[j, m] - beta_true[j, m]) ** 2
    return math.sqrt(total)


def ooi_direct(selections, top=15):
    """Mean of the `top` largest selection frequencies across splits."""
    counts = {}
    for sel in selections:
        for j in set(sel):
            counts[j] = counts.get(j, 0) + 1
    freqs = sorted((c / len(selections) for c in counts.values()), reverse=True)
    freqs += [0.0] * max(0, top - len(freqs))
    return sum(freqs[:top]) / top


def quad_form_direct(sigma_fn, p, d):
    total = 0.0
    for i in range(p):
        for j in range(p):
            total += d[i] * sigma_fn(i, j) * d[j]
    return total


def design_sigma_fn(design):
    """Entry (i, j) of the population covariate covariance for a design."""
    sizes = list(design.sizes)
    bounds = np.cumsum([0] + sizes)
    group_of = np.repeat(np.arange(design.K), sizes)
    b = design.between_corr
    rho = design.rho_within

    def sigma(i, j):
        if i == j:
            return 1.0
        if group_of[i] != group_of[j]:
            return b
        return b + (1.0 - b) * rho ** abs(i - j)

    return sigma


def logrank_statistic(time, delta, group):
    """Two-group logrank (Mantel-Haenszel) chi-square statistic."""
    time = np.asarray(time, dtype=float)
    delta = np.asarray(delta, dtype=int)
    group = np.asarray(group, dtype=int)
    O1 = E1 = V = 0.0
    for t in sorted(set(time[delta == 1])):
        at = time >= t
        n = int(at.sum())
        n1 = int((at & (group == 1)).sum())
        d = int(((time == t) & (delta == 1)).sum())
        d1 = int(((time == t) & (delta == 1) & (group == 1)).sum())
        O1 += d1
        E1 += d * n1 / n
        if n > 1:
            V += d * (n1 / n) * (1 - n1 / n) * (n - d) / (n - 1)
    if V == 0:
        raise ZeroDivisionError("degenerate logrank table")
    return (O1 - E1) ** 2 / V


# Ten subjects, hand-worked. Group 0: times 1, 3, 5, 7, 9 with events at
# 1, 3, 7; group 1: times 2, 4, 6, 8, 10 with events at 2, 6, 8.
# Event-time table (n at risk, n1 at risk, group-1 events):
#   t=1: 10, 5, 0   t=2: 9, 5, 1   t=3: 8, 4, 0
#   t=6:  5, 3, 1   t=7: 4, 2, 0   t=8: 3, 2, 1
# O1 = 3, E1 = 1/2 + 5/9 + 1/2 + 3/5 + 1/2 + 2/3 = 299/90,
# V = 1/4 + 20/81 + 1/4 + 6/25 + 1/4 + 2/9 = 11819/8100,
# statistic = (3 - 299/90)^2 / V = 841 / 11819.
HAND_LOGRANK_TIME = np.array([1.0, 3, 5, 7, 9, 2, 4, 6, 8, 10])
HAND_LOGRANK_DELTA = np.array([1, 1, 0, 1, 0, 1, 0, 1, 1, 0])
HAND_LOGRANK_GROUP = np.array([0, 0, 0, 0, 0, 1, 1, 1, 1, 1])
HAND_LOGRANK_VALUE = 841.0 / 11819.0

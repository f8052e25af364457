"""Closed-form margins, subset scaling ratios, and normal/half-normal quantiles.

The linear margin along a subspace V with frame U is min ||delta||_p subject
to (w^T U) delta = -(w^T x + b); by norm duality this equals
|w^T x + b| / ||w^T U||_q with 1/p + 1/q = 1. Everything here is expressed in
subspace coordinates, so the identity holds for any frame.
"""

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .geometry import INF, dual_exponent, lp_norm
from .seeding import as_rng, derive_rng

SQRT2 = math.sqrt(2.0)


# ---------------------------------------------------------------------------
# normal / half-normal distribution helpers

def normal_cdf(x):
    """Standard normal CDF via erfc (keeps relative accuracy in both tails)."""
    x = float(x)
    if math.isnan(x):
        raise ValueError("normal_cdf: NaN input")
    return 0.5 * math.erfc(-x / SQRT2)


def _normal_pdf(x):
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def normal_quantile(u):
    """Inverse standard normal CDF by bracketed bisection plus Newton.

    Accurate to well below 1e-8 in x for u in (1e-12, 1 - 1e-12).
    """
    u = float(u)
    if not (0.0 < u < 1.0):
        raise ValueError(f"normal_quantile: u must lie in (0, 1), got {u}")
    if u == 0.5:
        return 0.0
    if u > 0.5:
        # 1 - u is exact here, and Phi(x) - u keeps full relative accuracy
        # in the left tail, so reduce by symmetry
        return -normal_quantile(1.0 - u)
    lo, hi = -1.0, 1.0
    while normal_cdf(lo) > u:
        lo *= 2.0
    while normal_cdf(hi) < u:
        hi *= 2.0
    for _ in range(30):
        mid = 0.5 * (lo + hi)
        if normal_cdf(mid) < u:
            lo = mid
        else:
            hi = mid
    x = 0.5 * (lo + hi)
    for _ in range(60):
        f = normal_cdf(x) - u
        if f > 0.0:
            hi = min(hi, x)
        elif f < 0.0:
            lo = max(lo, x)
        else:
            return x
        pdf = _normal_pdf(x)
        if pdf <= 0.0:
            break
        x_new = x - f / pdf
        if not (lo < x_new < hi):
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= 1e-14 * max(1.0, abs(x)):
            return x_new
        x = x_new
    return x


def halfnormal_cdf(x):
    """CDF of |Z| for standard normal Z; zero on the negative axis."""
    x = float(x)
    if math.isnan(x):
        raise ValueError("halfnormal_cdf: NaN input")
    if x <= 0.0:
        return 0.0
    return math.erf(x / SQRT2)


def halfnormal_quantile(u):
    """Inverse half-normal CDF: F^{-1}(u) = Phi^{-1}((1 + u) / 2)."""
    u = float(u)
    if not (0.0 <= u < 1.0):
        raise ValueError(f"halfnormal_quantile: u must lie in [0, 1), got {u}")
    if u == 0.0:
        return 0.0
    return normal_quantile(0.5 * (1.0 + u))


def l1_reparam_factor(d, n, approx=False):
    """Budget rescaling for l1 curves: F^{-1}(1 - 1/d) / F^{-1}(1 - 1/n).

    F is the half-normal CDF; with approx=True the plain normal quantile is
    used instead (a cruder variant that differs visibly only at small d).
    Equals 1 when d = n.
    """
    d, n = int(d), int(n)
    if d < 2:
        raise ValueError(f"l1_reparam_factor: need d >= 2, got {d}")
    if not (d <= n):
        raise ValueError(f"l1_reparam_factor: need d <= n, got d={d}, n={n}")
    inv = normal_quantile if approx else halfnormal_quantile
    return inv(1.0 - 1.0 / d) / inv(1.0 - 1.0 / n)


# ---------------------------------------------------------------------------
# linear margins

@dataclass(frozen=True)
class MarginResult:
    """Closed-form margin; minimizer is the optimal perturbation (p = 2 only)."""

    margin: float
    minimizer: np.ndarray | None = None


def margin_closed_form(w, b, x, V, p):
    """Smallest ||delta||_p (subspace coords) that moves w^T x + b to zero.

    Returns margin = |s| / ||w^T U||_q where s = w^T x + b and q is the dual
    exponent. margin is inf when w^T U = 0 but s != 0, and 0 when s = 0.
    For p = 2 the unique minimizer -s (w^T U) / ||w^T U||_2^2 is included.
    """
    q = dual_exponent(p)
    w = np.asarray(w, dtype=float)
    x = np.asarray(x, dtype=float)
    s = float(w @ x + b)
    a = V.pullback(w)
    denom = lp_norm(a, q)
    if s == 0.0:
        minim = np.zeros(V.d) if p == 2 else None
        return MarginResult(margin=0.0, minimizer=minim)
    if denom == 0.0:
        return MarginResult(margin=INF, minimizer=None)
    margin = abs(s) / denom
    minim = None
    if p == 2:
        minim = a * (-s / float(a @ a))
    return MarginResult(margin=margin, minimizer=minim)


def margin_bruteforce(w, b, x, V, p, grid=41, zooms=60):
    """Margin by grid search with local refinement; requires V.d <= 3.

    Parametrizes the feasible hyperplane {delta : a^T delta = -s} through its
    minimum-l2-norm point plus an orthonormal null-space frame, then minimizes
    ||delta||_p over the free coordinates by repeated grid-and-shrink around
    the best point seen so far. The objective is convex; the window halves
    per zoom, slow enough to track the shallow valleys the piecewise-linear
    l1 and linf objectives produce.
    """
    if V.d > 3:
        raise ValueError(f"margin_bruteforce: supports d <= 3, got d={V.d}")
    w = np.asarray(w, dtype=float)
    x = np.asarray(x, dtype=float)
    s = float(w @ x + b)
    a = V.pullback(w)
    if s == 0.0:
        return 0.0
    norm_a = float(np.linalg.norm(a))
    if norm_a == 0.0:
        return INF
    delta0 = a * (-s / (norm_a * norm_a))
    d = V.d
    if d == 1:
        return lp_norm(delta0, p)
    # orthonormal basis of the null space of a^T
    full = np.linalg.svd(a.reshape(1, -1))[2]
    null = full[1:].T  # d x (d-1)
    k = d - 1
    # any candidate beating delta0 satisfies ||N t||_2 <= 2 sqrt(d) ||delta0||_p
    radius = 2.0 * math.sqrt(d) * max(lp_norm(delta0, p), 1e-300)
    lin = np.linspace(-1.0, 1.0, grid)
    center = np.zeros(k)
    best = lp_norm(delta0, p)
    for _ in range(zooms):
        grids = np.meshgrid(*[center[i] + radius * lin for i in range(k)],
                            indexing="ij")
        T = np.stack([g.ravel() for g in grids], axis=1)
        cand = delta0 + T @ null.T
        if p == INF:
            vals = np.max(np.abs(cand), axis=1)
        else:
            vals = np.sum(np.abs(cand) ** p, axis=1) ** (1.0 / p)
        i = int(np.argmin(vals))
        if vals[i] < best:
            best = float(vals[i])
            center = T[i]
        radius *= 0.5
    return best

# ---------------------------------------------------------------------------
# subset scaling ratios

def scaling_ratio_exact(w, d, q):
    """Average of ||w_S||_q^q / ||w||_q^q over all size-d axis subsets S.

    Exact enumeration with compensated sums; equals d / n for every w by
    symmetry, which is what callers verify. Enumeration only, so n <= 16.
    """
    w = np.asarray(w, dtype=float).ravel()
    n = w.size
    q = float(q)
    if q not in (1.0, 2.0):
        raise ValueError(f"scaling_ratio_exact: q must be 1 or 2, got {q}")
    if not (1 <= d <= n):
        raise ValueError(f"scaling_ratio_exact: need 1 <= d <= n, got d={d}, n={n}")
    if n > 16:
        raise ValueError(f"scaling_ratio_exact: enumeration capped at n = 16, got n={n}")
    powers = np.abs(w) ** q
    total = math.fsum(powers)
    if total == 0.0:
        raise ValueError("scaling_ratio_exact: w must be nonzero")
    acc = math.fsum(math.fsum(powers[list(S)]) for S in combinations(range(n), d))
    return acc / (math.comb(n, d) * total)


@dataclass(frozen=True)
class McEstimate:
    """Monte Carlo mean with its standard error."""

    mean: float
    std_error: float
    trials: int


def scaling_ratio_mc(w, d, q, sampler, trials, seed):
    """Monte Carlo mean of ||U^T w||_q^q / ||w||_q^q over sampled subspaces.

    sampler is a callable (n, d, rng) -> Subspace; one Generator derived from
    seed is threaded through all draws, so results are reproducible. For axis
    subsets (any q) and rotation-invariant frames with q = 2 the expectation
    is d / n.
    """
    w = np.asarray(w, dtype=float).ravel()
    n = w.size
    q = float(q)
    if q not in (1.0, 2.0):
        raise ValueError(f"scaling_ratio_mc: q must be 1 or 2, got {q}")
    trials = int(trials)
    if trials < 1:
        raise ValueError("scaling_ratio_mc: trials must be >= 1")
    total = math.fsum(np.abs(w) ** q)
    if total == 0.0:
        raise ValueError("scaling_ratio_mc: w must be nonzero")
    rng = as_rng(seed)
    vals = np.empty(trials)
    for t in range(trials):
        V = sampler(n, d, rng)
        a = V.pullback(w)
        vals[t] = np.sum(np.abs(a) ** q) / total
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(trials)) if trials > 1 else math.inf
    return McEstimate(mean=mean, std_error=se, trials=trials)


# ---------------------------------------------------------------------------
# closed-form attack oracle for linear models

def oracle_success_rate(model, data, sampler, d, cfg, subspaces=None):
    """Fraction of datapoints whose margin along a fresh subspace is <= eps.

    Mirrors attack_success_rate: per-datapoint subspaces come from the same
    seed derivation (cfg.seed, point index) unless pinned via subspaces (a
    list of Subspace objects or an index matrix of axis subsets), so a PGD
    run and this oracle see identical subspaces. Points the model already
    misclassifies count as successes. Requires a linear model (attributes
    w and b).
    """
    w = getattr(model, "w", None)
    b = getattr(model, "b", None)
    if w is None or b is None:
        raise TypeError("oracle_success_rate needs a linear model with w and b")
    X = np.asarray(data.inputs, dtype=float)
    Y = np.asarray(data.labels)
    n = X.shape[1]
    wrong = model.predict(X) != Y
    if subspaces is None:
        subspaces = [sampler(n, d, derive_rng(cfg.seed, k))
                     for k in range(len(X))]
    if isinstance(subspaces, np.ndarray):
        # axis subsets as an index matrix: margins vectorize to
        # |w.x + b| / ||w restricted to the subset||_q
        s = np.abs(X @ np.asarray(w, dtype=float) + b)
        wsub = np.asarray(w, dtype=float)[subspaces]
        q = dual_exponent(cfg.norm.p)
        if q == INF:
            denom = np.max(np.abs(wsub), axis=1)
        elif q == 2.0:
            denom = np.sqrt(np.sum(wsub * wsub, axis=1))
        else:
            denom = np.sum(np.abs(wsub), axis=1)
        with np.errstate(divide="ignore"):
            margins = np.where(denom > 0, s / np.where(denom > 0, denom, 1.0),
                               INF)
        hit = wrong | (margins <= cfg.epsilon)
        return float(np.mean(hit))
    hits = 0
    for k in range(X.shape[0]):
        if wrong[k]:
            hits += 1
            continue
        res = margin_closed_form(w, b, X[k], subspaces[k], cfg.norm.p)
        if res.margin <= cfg.epsilon:
            hits += 1
    return hits / X.shape[0]

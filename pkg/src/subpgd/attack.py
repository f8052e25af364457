"""Projected gradient ascent restricted to a subspace of the input box.

The perturbation delta lives in subspace coordinates and starts at zero. One
iteration takes the loss gradient at x + V delta, pulls it back to the
subspace, moves along the normalized direction scaled by the step size,
projects onto the lp budget ball, and (by default) pulls the point back
inside the [0, 1] ambient box. Step sizes follow a random-walk budget
heuristic: T accumulated unit steps should just cover the ball radius.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import INF, NormSpec, clip_pullback, lp_norm, normalized_gradient, project_ball
from .seeding import derive_rng
from .theory import normal_quantile

STEP_RULES = ("normalized", "argmax-basis")
BALL_SLACK = 1e-9


@dataclass(frozen=True)
class AttackConfig:
    norm: NormSpec
    epsilon: float
    steps: int = 16
    step_rule: str = "normalized"
    step_multiplier: float = 2.0
    step_size: float | None = None
    box_clip: bool = True
    projection_mode: str = "radial"
    record_trace: bool = False
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.norm, NormSpec):
            object.__setattr__(self, "norm", NormSpec.parse(self.norm))
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be nonnegative, got {self.epsilon}")
        if self.steps < 0:
            raise ValueError(f"steps must be nonnegative, got {self.steps}")
        if self.step_rule not in STEP_RULES:
            raise ValueError(f"unknown step_rule {self.step_rule!r}")
        if self.step_rule == "argmax-basis" and self.norm.p != 1:
            raise ValueError("argmax-basis stepping is an l1 rule; use p = 1")
        if self.projection_mode == "clamp" and self.norm.p != INF:
            raise ValueError("clamp projection requires p = inf")
        if self.projection_mode not in ("radial", "clamp"):
            raise ValueError(f"unknown projection_mode {self.projection_mode!r}")
        if self.step_multiplier <= 0:
            raise ValueError("step_multiplier must be positive")


@dataclass
class StepRecord:
    step: int
    loss: float
    norm: float
    support: int


@dataclass
class AttackOutcome:
    delta: np.ndarray
    success: bool
    loss: float
    norm: float
    trace: list = field(default_factory=list)


def step_size(p, eps, steps, d, multiplier=2.0):
    """Per-iteration step length for a T-step budget-eps attack.

    At the default multiplier 2 the rules are 2 eps / sqrt(T) for p = 2,
    2 eps / (sqrt(T) Phi^{-1}(1 - 1/d)) for p = inf, and
    sqrt(2 pi) eps / sqrt(T) for p = 1; the multiplier scales each rule
    proportionally. For d = 1 the p = inf divisor is undefined and the rule
    falls back to multiplier * eps / sqrt(T).
    """
    p = NormSpec(p).p if not isinstance(p, NormSpec) else p.p
    if steps < 1:
        raise ValueError("steps must be >= 1 to define a step size")
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if d < 1:
        raise ValueError("subspace dimension must be >= 1")
    root_t = math.sqrt(steps)
    if p == 2:
        return multiplier * eps / root_t
    if p == INF:
        # the max-coordinate divisor Phi^{-1}(1 - 1/d) is undefined at d = 1
        # and zero at d = 2; both fall back to the plain random-walk rule
        if d <= 2:
            return multiplier * eps / root_t
        return multiplier * eps / (root_t * normal_quantile(1.0 - 1.0 / d))
    return (multiplier / 2.0) * math.sqrt(2.0 * math.pi) * eps / root_t


def _ascent_step(g, cfg, eta):
    if cfg.step_rule == "normalized":
        return eta * normalized_gradient(g, cfg.norm.p)
    # argmax-basis: move along the single coordinate with the largest
    # gradient magnitude (lowest index wins ties)
    step = np.zeros_like(g)
    a = int(np.argmax(np.abs(g)))
    if g[a] != 0.0:
        step[a] = eta * math.copysign(1.0, g[a])
    return step


def pgd_attack(model, x, y, V, cfg):
    """Run subspace PGD from delta = 0 and report the final perturbation.

    Success means the model label at x + V delta differs from y after the
    last step (so steps = 0 just tests the clean point). The returned delta
    satisfies the lp budget up to a 1e-9 relative slack. With box_clip on,
    basis subsets keep x + V delta inside [0, 1] exactly; dense frames clip
    in ambient space and pull back, which damps box overshoot each step but
    cannot remove it, since the clipped point generally leaves the subspace.
    """
    x = np.asarray(x, dtype=float)
    y = int(y)
    eta = cfg.step_size if cfg.step_size is not None else step_size(
        cfg.norm, cfg.epsilon, max(cfg.steps, 1), V.d, cfg.step_multiplier)
    delta = np.zeros(V.d)
    trace = []
    loss = float(np.atleast_1d(model.loss_and_input_grad(x, y)[0])[0])
    for t in range(cfg.steps):
        loss_t, g_amb = model.loss_and_input_grad(x + V.embed(delta), y)
        g = V.pullback(np.asarray(g_amb, dtype=float))
        delta = project_ball(delta + _ascent_step(g, cfg, eta),
                             cfg.epsilon, cfg.norm.p, cfg.projection_mode)
        if cfg.box_clip:
            delta = clip_pullback(x, delta, V)
            if V.kind == "dense":
                # clipping in ambient space can grow subspace coordinates
                # for dense frames; re-impose the ball
                delta = project_ball(delta, cfg.epsilon, cfg.norm.p,
                                     cfg.projection_mode)
        loss = float(np.atleast_1d(loss_t)[0])
        if cfg.record_trace:
            trace.append(StepRecord(
                step=t, loss=loss, norm=lp_norm(delta, cfg.norm.p),
                support=int(np.count_nonzero(delta))))
    final_norm = lp_norm(delta, cfg.norm.p)
    if final_norm > cfg.epsilon * (1.0 + BALL_SLACK):
        raise AssertionError(
            f"budget violated: ||delta|| = {final_norm} > eps = {cfg.epsilon}")
    success = model.predict(x + V.embed(delta)) != y
    return AttackOutcome(delta=delta, success=bool(success), loss=loss,
                         norm=final_norm, trace=trace)


def _row_lp_norms(D, p):
    if p == INF:
        return np.max(np.abs(D), axis=1)
    if p == 1:
        return np.sum(np.abs(D), axis=1)
    return np.sqrt(np.sum(D * D, axis=1))


def _project_rows(D, eps, p, mode):
    if mode == "clamp":
        return np.clip(D, -eps, eps)
    nrm = _row_lp_norms(D, p)
    over = nrm > eps * (1.0 + 1e-12)
    if np.any(over):
        D = D.copy()
        D[over] *= (eps / nrm[over])[:, None]
    return D


def _step_rows(G, cfg, eta):
    p = cfg.norm.p
    if cfg.step_rule == "argmax-basis":
        step = np.zeros_like(G)
        rows = np.arange(G.shape[0])
        a = np.argmax(np.abs(G), axis=1)
        vals = G[rows, a]
        step[rows, a] = eta * np.sign(vals)
        return step
    if p == INF:
        return eta * np.sign(G)
    nrm = _row_lp_norms(G, p)
    out = np.zeros_like(G)
    ok = nrm > 0.0
    out[ok] = G[ok] * (eta / nrm[ok])[:, None]
    return out


def _pgd_basis_batch(model, X, Y, index_rows, cfg):
    """Vectorized PGD over a batch of points, each with its own axis subset.

    Identical update sequence to pgd_attack; differs from the per-point loop
    only at BLAS rounding level. Returns (success mask, final lp norms).
    """
    B, d = index_rows.shape
    eta = cfg.step_size if cfg.step_size is not None else step_size(
        cfg.norm, cfg.epsilon, max(cfg.steps, 1), d, cfg.step_multiplier)
    Xs = np.take_along_axis(X, index_rows, axis=1)
    delta = np.zeros((B, d))
    for _ in range(cfg.steps):
        xp = X.copy()
        np.put_along_axis(xp, index_rows, Xs + delta, axis=1)
        _, G = model.loss_and_input_grad(xp, Y)
        g = np.take_along_axis(np.asarray(G, dtype=float), index_rows, axis=1)
        delta = _project_rows(delta + _step_rows(g, cfg, eta),
                              cfg.epsilon, cfg.norm.p, cfg.projection_mode)
        if cfg.box_clip:
            delta = np.clip(Xs + delta, 0.0, 1.0) - Xs
    xp = X.copy()
    np.put_along_axis(xp, index_rows, Xs + delta, axis=1)
    success = np.asarray(model.predict(xp)) != Y
    return success, _row_lp_norms(delta, cfg.norm.p)


def attack_success_rate(model, data, sampler, d, cfg, on_outcome=None,
                        subspaces=None):
    """Mean PGD success over a dataset with a fresh subspace per point.

    Point k attacks along sampler(n, d, rng_k) where rng_k derives from
    (cfg.seed, k); the same derivation drives the closed-form oracle, so both
    see identical subspaces. Callers may instead pass subspaces, either a
    list of Subspace objects or a (len(data), d) index matrix of axis
    subsets, to pin the per-point subspaces (a sweep holds them fixed across
    its budget grid). Batches all points through one vectorized PGD when
    every subspace is an axis subset, otherwise falls back to per-point
    attacks. on_outcome, when given, is called as
    on_outcome(index, success, final_norm) for each point in order.
    """
    X = np.asarray(data.inputs, dtype=float)
    Y = np.asarray(data.labels)
    if len(X) == 0:
        raise ValueError("attack_success_rate: empty dataset")
    n = X.shape[1]
    if subspaces is None:
        subspaces = [sampler(n, d, derive_rng(cfg.seed, k))
                     for k in range(len(X))]
    if isinstance(subspaces, np.ndarray):
        if subspaces.shape != (len(X), d):
            raise ValueError(f"subspace index matrix has shape "
                             f"{subspaces.shape}, want {(len(X), d)}")
        success, norms = _pgd_basis_batch(model, X, Y, subspaces, cfg)
    elif all(s.kind == "basis" for s in subspaces):
        index_rows = np.stack([s.indices for s in subspaces])
        success, norms = _pgd_basis_batch(model, X, Y, index_rows, cfg)
    else:
        success = np.zeros(len(X), dtype=bool)
        norms = np.zeros(len(X))
        for k, V in enumerate(subspaces):
            out = pgd_attack(model, X[k], Y[k], V, cfg)
            success[k] = out.success
            norms[k] = out.norm
    if on_outcome is not None:
        for k in range(len(X)):
            on_outcome(k, bool(success[k]), float(norms[k]))
    return float(np.mean(success))

"""lp-ball geometry: norms, normalized ascent directions, ball projections, box pullback.

All perturbations live in subspace coordinates (length-d vectors). For
axis-aligned basis subsets the lp norm of the embedded ambient vector equals
the norm of the coordinate vector for every p; for dense orthonormal frames
that identity holds for p = 2 only, so callers pair dense frames with p = 2.
"""

import math
from dataclasses import dataclass

import numpy as np

INF = math.inf

_VALID_P = (1.0, 2.0, INF)

# relative slack used when deciding whether a vector is already inside the
# ball; keeps project_ball exactly idempotent under float rounding
_BALL_SLACK = 1e-12


def _check_p(p):
    p = float(p)
    if p not in _VALID_P:
        raise ValueError(f"unsupported norm exponent p={p!r}; expected 1, 2 or inf")
    return p


def dual_exponent(p):
    """Holder conjugate q with 1/p + 1/q = 1 (dual_exponent(1) = inf)."""
    p = _check_p(p)
    if p == 1.0:
        return INF
    if p == INF:
        return 1.0
    return 2.0


@dataclass(frozen=True)
class NormSpec:
    """Constraint norm, parsed from 1, 2, inf or the strings "1", "2", "inf"."""

    p: float

    def __post_init__(self):
        object.__setattr__(self, "p", _check_p(self.p))

    @classmethod
    def parse(cls, text):
        text = str(text).strip().lower()
        if text in ("inf", "infinity", "linf"):
            return cls(INF)
        try:
            return cls(float(text))
        except ValueError:
            raise ValueError(f"cannot parse norm spec {text!r}") from None

    @property
    def q(self):
        return dual_exponent(self.p)

    @property
    def label(self):
        return "inf" if self.p == INF else str(int(self.p))


def lp_norm(v, p):
    """lp norm of a vector; rejects NaN entries."""
    p = _check_p(p)
    v = np.asarray(v, dtype=float)
    if np.isnan(v).any():
        raise ValueError("lp_norm: input contains NaN")
    if v.size == 0:
        return 0.0
    return float(np.linalg.norm(v.ravel(), ord=p))


def normalized_gradient(g, p):
    """Unit ascent direction for a given constraint norm.

    p = 1 or 2 returns g / ||g||_p, p = inf returns sign(g). The zero vector
    maps to the zero vector in every case.
    """
    p = _check_p(p)
    g = np.asarray(g, dtype=float)
    if np.isnan(g).any():
        raise ValueError("normalized_gradient: input contains NaN")
    if p == INF:
        return np.sign(g)
    # prescale by the largest magnitude so squaring tiny or huge entries
    # cannot underflow or overflow the norm
    scale = float(np.max(np.abs(g)))
    if scale == 0.0:
        return np.zeros_like(g)
    u = g / scale
    return u / np.linalg.norm(u.ravel(), ord=p)


def project_ball(delta, eps, p, mode="radial"):
    """Project onto the lp ball of radius eps.

    mode "radial" rescales to the boundary along the ray from the origin
    (this is the default for every p, including inf where the divisor is the
    max absolute coordinate). mode "clamp" is the coordinatewise alternative
    and is only meaningful for p = inf.
    """
    p = _check_p(p)
    eps = float(eps)
    if eps < 0.0:
        raise ValueError(f"project_ball: eps must be nonnegative, got {eps}")
    if mode not in ("radial", "clamp"):
        raise ValueError(f"project_ball: unknown mode {mode!r}")
    delta = np.asarray(delta, dtype=float)
    if mode == "clamp":
        if p != INF:
            raise ValueError("project_ball: clamp mode requires p = inf")
        return np.clip(delta, -eps, eps)
    nrm = lp_norm(delta, p)
    if nrm <= eps * (1.0 + _BALL_SLACK):
        return delta
    return delta * (eps / nrm)


def clip_pullback(x, delta, V):
    """Pull a subspace perturbation back inside the [0,1] ambient box.

    Embeds delta, clips x + V delta to the box, and returns the subspace
    coordinates of the clipped displacement. For basis subsets this can only
    shrink coordinates, so it never grows any lp norm.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != V.n:
        raise ValueError(f"clip_pullback: x must have shape ({V.n},), got {x.shape}")
    ambient = x + V.embed(delta)
    clipped = np.clip(ambient, 0.0, 1.0)
    return V.pullback(clipped - x)

"""Budget/dimension sweeps, curve reparametrization, and collapse scoring.

A sweep runs one attack per (subspace dimension, budget) cell over a dataset
and records the success-rate matrix. Reparametrizing the budget axis by
(d / n)^{1/q} (or the half-normal quantile ratio for l1) should collapse the
per-dimension curves onto one curve; collapse_score measures the worst
pairwise sup-distance between curves over their shared abscissa range.
"""

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .attack import AttackConfig, attack_success_rate
from .geometry import INF, NormSpec, dual_exponent
from .seeding import TAG_CELL, TAG_POINT, TAG_SUBSAMPLE, derive_rng
from .subspace import (Subspace, _qr_orthonormal, sample_basis_subset,
                       sample_grassmannian)
from .theory import l1_reparam_factor, oracle_success_rate

SAMPLERS = {"basis": sample_basis_subset, "grassmannian": sample_grassmannian}
REPARAM_MODES = ("none", "power", "l1-quantile")
CSV_HEADER = ["d", "eps", "asr", "n_samples", "reparam_eps"]


def log_grid(lo, hi, k):
    """k logarithmically spaced points with exact endpoints lo and hi."""
    lo, hi, k = float(lo), float(hi), int(k)
    if not (0.0 < lo < hi):
        raise ValueError(f"log_grid: need 0 < lo < hi, got lo={lo}, hi={hi}")
    if k < 2:
        raise ValueError(f"log_grid: need k >= 2, got {k}")
    grid = np.geomspace(lo, hi, k)
    grid[0], grid[-1] = lo, hi
    return grid


@dataclass(frozen=True)
class SweepConfig:
    norm: NormSpec
    eps_grid: tuple
    d_grid: tuple
    sampler: str = "basis"
    mode: str = "pgd"
    steps: int = 16
    step_rule: str = "normalized"
    step_multiplier: float = 2.0
    box_clip: bool = True
    projection_mode: str = "radial"
    subsample: int | None = None
    master_seed: int = 0

    def __post_init__(self):
        if not isinstance(self.norm, NormSpec):
            object.__setattr__(self, "norm", NormSpec.parse(self.norm))
        object.__setattr__(self, "eps_grid", tuple(float(e) for e in self.eps_grid))
        object.__setattr__(self, "d_grid", tuple(int(d) for d in self.d_grid))
        if len(self.eps_grid) == 0 or len(self.d_grid) == 0:
            raise ValueError("grids must be non-empty")
        if any(e < 0 for e in self.eps_grid):
            raise ValueError("eps grid must be nonnegative")
        if any(b <= a for a, b in zip(self.eps_grid, self.eps_grid[1:])):
            raise ValueError("eps grid must be strictly increasing")
        if any(d < 1 for d in self.d_grid):
            raise ValueError("d grid must be >= 1")
        if any(b <= a for a, b in zip(self.d_grid, self.d_grid[1:])):
            raise ValueError("d grid must be strictly increasing")
        if self.sampler not in SAMPLERS:
            raise ValueError(f"unknown sampler {self.sampler!r}")
        if self.sampler == "grassmannian" and self.norm.p != 2:
            raise ValueError("dense rotation-invariant subspaces only pair with p = 2 "
                             "(their embedding is an isometry for the l2 norm only)")
        if self.mode not in ("pgd", "oracle"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.subsample is not None and self.subsample < 1:
            raise ValueError("subsample must be >= 1")

    def fingerprint(self):
        payload = {
            "norm": self.norm.label, "eps_grid": list(self.eps_grid),
            "d_grid": list(self.d_grid), "sampler": self.sampler,
            "mode": self.mode, "steps": self.steps, "step_rule": self.step_rule,
            "step_multiplier": self.step_multiplier, "box_clip": self.box_clip,
            "projection_mode": self.projection_mode, "subsample": self.subsample,
            "master_seed": self.master_seed,
        }
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class SweepResult:
    d_grid: tuple
    eps_grid: tuple
    asr: np.ndarray
    counts: np.ndarray
    norm: NormSpec
    n: int
    mode: str
    master_seed: int
    fingerprint: str


def _cell_seed(master, i, j):
    ss = np.random.SeedSequence((int(master), TAG_CELL, int(i), int(j)))
    return int(ss.generate_state(1, np.uint64)[0])


def _row_subspaces(kind, n, d, master_seed, n_points):
    """Per-point subspaces for one d row, nested across rows.

    Point k draws from rng(master_seed, TAG_POINT, k) regardless of d: axis
    subsets are sorted prefixes of one permutation per point, dense frames
    are the QR factor of a per-point Gaussian matrix consumed column by
    column. Growing d therefore extends each point's subspace instead of
    resampling it, which makes the success surface nondecreasing in d
    pointwise, and every budget cell in a row sees identical subspaces.
    """
    if kind == "basis":
        rows = np.empty((n_points, d), dtype=np.intp)
        for k in range(n_points):
            perm = derive_rng(master_seed, TAG_POINT, k).permutation(n)
            rows[k] = np.sort(perm[:d])
        return rows
    out = []
    for k in range(n_points):
        g = derive_rng(master_seed, TAG_POINT, k).standard_normal((d, n)).T
        out.append(Subspace.dense(_qr_orthonormal(g), check=False))
    return out


def run_sweep(model, data, cfg):
    """Success-rate matrix over cfg.d_grid x cfg.eps_grid.

    Point k's subspace derives from (master_seed, point tag, k): fixed across
    the budget grid and nested across dimensions, so per-point success sets
    only grow along either axis. Each cell still derives its own attack seed
    from (master_seed, cell indices). Subsampling picks a deterministic
    shuffle prefix. Repeat runs are bit-identical.
    """
    n = data.inputs.shape[1]
    if cfg.d_grid[-1] > n:
        raise ValueError(
            f"d grid reaches {cfg.d_grid[-1]} but inputs have dimension {n}")
    used = data
    if cfg.subsample is not None and cfg.subsample < len(data):
        order = derive_rng(cfg.master_seed, TAG_SUBSAMPLE).permutation(len(data))
        used = data.subset(order[:cfg.subsample])
    sampler = SAMPLERS[cfg.sampler]
    D, E = len(cfg.d_grid), len(cfg.eps_grid)
    asr = np.zeros((D, E))
    counts = np.full((D, E), len(used), dtype=np.int64)
    for i, d in enumerate(cfg.d_grid):
        subs = _row_subspaces(cfg.sampler, n, d, cfg.master_seed, len(used))
        for j, eps in enumerate(cfg.eps_grid):
            acfg = AttackConfig(
                norm=cfg.norm, epsilon=eps, steps=cfg.steps,
                step_rule=cfg.step_rule, step_multiplier=cfg.step_multiplier,
                box_clip=cfg.box_clip, projection_mode=cfg.projection_mode,
                seed=_cell_seed(cfg.master_seed, i, j))
            if cfg.mode == "oracle":
                asr[i, j] = oracle_success_rate(model, used, sampler, d, acfg,
                                                subspaces=subs)
            else:
                asr[i, j] = attack_success_rate(model, used, sampler, d, acfg,
                                                subspaces=subs)
    return SweepResult(d_grid=cfg.d_grid, eps_grid=cfg.eps_grid, asr=asr,
                       counts=counts, norm=cfg.norm, n=n, mode=cfg.mode,
                       master_seed=cfg.master_seed, fingerprint=cfg.fingerprint())


# ---------------------------------------------------------------------------
# reparametrization and collapse

@dataclass
class Curve:
    """One success curve: original budgets eps, reparametrized abscissa x."""

    d: int
    eps: np.ndarray
    x: np.ndarray
    y: np.ndarray
    counts: np.ndarray


@dataclass
class CollapseReport:
    mode: str
    curves: list
    score: float
    pairwise: dict
    excluded_pairs: list = field(default_factory=list)


def _reparam_factor(mode, d, n, norm):
    if mode == "none":
        return 1.0
    if mode == "power":
        q = dual_exponent(norm.p)
        if q == INF:
            return 1.0
        return (d / n) ** (1.0 / q)
    if mode == "l1-quantile":
        return l1_reparam_factor(d, n)
    raise ValueError(f"unknown reparametrization mode {mode!r}")


def _build_curves(result, mode):
    eps = np.asarray(result.eps_grid, dtype=float)
    out = []
    for i, d in enumerate(result.d_grid):
        fac = _reparam_factor(mode, d, result.n, result.norm)
        out.append(Curve(d=int(d), eps=eps.copy(), x=eps * fac,
                         y=result.asr[i].copy(), counts=result.counts[i].copy()))
    return out


def reparametrize(result, mode):
    """Rescale each curve's budget axis and score the collapse.

    mode "none" keeps raw budgets, "power" multiplies by (d/n)^{1/q} with q
    dual to the sweep norm (a no-op when q is infinite), "l1-quantile"
    multiplies by the half-normal quantile ratio (needs every d >= 2).
    """
    curves = _build_curves(result, mode)
    score, pairwise, excluded = _pairwise_collapse(curves)
    return CollapseReport(mode=mode, curves=curves, score=score,
                          pairwise=pairwise, excluded_pairs=excluded)


def _pairwise_collapse(curves, grid_points=256):
    if len(curves) < 2:
        raise ValueError("collapse needs at least two curves")
    for c in curves:
        if len(c.x) < 2:
            raise ValueError("every curve needs at least two points")
        if np.any(c.x <= 0):
            raise ValueError("collapse abscissas must be positive (log spacing)")
        if np.any(np.diff(c.x) <= 0):
            raise ValueError("curve abscissas must be strictly increasing")
    score = 0.0
    pairwise = {}
    excluded = []
    for a in range(len(curves)):
        for b in range(a + 1, len(curves)):
            ca, cb = curves[a], curves[b]
            lo = max(ca.x[0], cb.x[0])
            hi = min(ca.x[-1], cb.x[-1])
            if lo > hi:
                excluded.append((ca.d, cb.d))
                continue
            grid = np.log(np.geomspace(lo, hi, grid_points))
            ya = np.interp(grid, np.log(ca.x), ca.y)
            yb = np.interp(grid, np.log(cb.x), cb.y)
            dev = float(np.max(np.abs(ya - yb)))
            pairwise[(ca.d, cb.d)] = dev
            score = max(score, dev)
    if not pairwise:
        raise ValueError("no pair of curves shares any abscissa range")
    return score, pairwise, excluded


def collapse_score(curves):
    """Worst pairwise sup-distance between curves on shared log-spaced grids."""
    return _pairwise_collapse(curves)[0]

# ---------------------------------------------------------------------------
# CSV artifacts

def _fmt(x):
    return format(float(x), ".17g")


def write_csv(obj, path, mode="power"):
    """Write a sweep (or a collapse report) as d,eps,asr,n_samples,reparam_eps.

    Floats carry 17 significant digits, so a read_csv round trip restores
    them exactly. For a SweepResult the reparametrized budget is computed
    with the given mode; a CollapseReport already carries its abscissas.
    """
    if isinstance(obj, SweepResult):
        curves = _build_curves(obj, mode)
    elif isinstance(obj, CollapseReport):
        curves = obj.curves
    else:
        raise TypeError(f"cannot write {type(obj).__name__} as CSV")
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_HEADER)
        for c in curves:
            for j in range(len(c.eps)):
                writer.writerow([c.d, _fmt(c.eps[j]), _fmt(c.y[j]),
                                 int(c.counts[j]), _fmt(c.x[j])])
    return path


@dataclass
class SweepTable:
    """Columnar view of a sweep CSV: matrices indexed by (d, eps)."""

    d_grid: tuple
    eps_grid: tuple
    asr: np.ndarray
    counts: np.ndarray
    reparam: np.ndarray

    def curves(self):
        eps = np.asarray(self.eps_grid, dtype=float)
        return [Curve(d=int(d), eps=eps.copy(), x=self.reparam[i].copy(),
                      y=self.asr[i].copy(), counts=self.counts[i].copy())
                for i, d in enumerate(self.d_grid)]


def read_csv(path):
    """Parse a sweep CSV back into matrices; exact float round trip."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header!r}")
        rows = [(int(r[0]), float(r[1]), float(r[2]), int(r[3]), float(r[4]))
                for r in reader]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    d_grid = tuple(sorted({r[0] for r in rows}))
    eps_grid = tuple(sorted({r[1] for r in rows}))
    index = {(r[0], r[1]): r for r in rows}
    if len(index) != len(d_grid) * len(eps_grid):
        raise ValueError(f"{path}: rows do not form a full (d, eps) grid")
    asr = np.zeros((len(d_grid), len(eps_grid)))
    counts = np.zeros_like(asr, dtype=np.int64)
    reparam = np.zeros_like(asr)
    for i, d in enumerate(d_grid):
        for j, e in enumerate(eps_grid):
            _, _, a, c, rp = index[(d, e)]
            asr[i, j], counts[i, j], reparam[i, j] = a, c, rp
    return SweepTable(d_grid=d_grid, eps_grid=eps_grid, asr=asr,
                      counts=counts, reparam=reparam)


# ---------------------------------------------------------------------------
# SVG rendering

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
           "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f"]

_W, _H = 640, 440
_ML, _MR, _MT, _MB = 70, 160, 40, 55


def _svg_escape(s):
    return (str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;"))


def write_svg(curves, path, title="success rate vs budget", xlabel="eps",
              ambient_dim=None):
    """Render curves as an SVG line chart with a log budget axis.

    Legend entries show d/n ratios when ambient_dim is given, otherwise the
    raw subspace dimensions. Pure string assembly, no plotting dependency.
    """
    if isinstance(curves, CollapseReport):
        curves = curves.curves
    if not curves:
        raise ValueError("write_svg: no curves")
    xs = np.concatenate([c.x for c in curves])
    if np.any(xs <= 0):
        raise ValueError("write_svg: abscissas must be positive for a log axis")
    lo, hi = float(xs.min()), float(xs.max())
    if lo == hi:
        lo, hi = lo / 2, hi * 2
    llo, lhi = math.log10(lo), math.log10(hi)
    pw = _W - _ML - _MR
    ph = _H - _MT - _MB

    def sx(x):
        return _ML + pw * (math.log10(x) - llo) / (lhi - llo)

    def sy(y):
        return _MT + ph * (1.0 - y)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_ML + pw / 2:.1f}" y="20" text-anchor="middle" '
        f'font-size="14">{_svg_escape(title)}</text>',
    ]
    # frame
    parts.append(f'<rect x="{_ML}" y="{_MT}" width="{pw}" height="{ph}" '
                 'fill="none" stroke="#333" stroke-width="1"/>')
    # y ticks
    for yt in (0.0, 0.25, 0.5, 0.75, 1.0):
        yy = sy(yt)
        parts.append(f'<line x1="{_ML - 4}" y1="{yy:.1f}" x2="{_ML}" y2="{yy:.1f}" '
                     'stroke="#333"/>')
        parts.append(f'<text x="{_ML - 8}" y="{yy + 4:.1f}" text-anchor="end">'
                     f'{yt:g}</text>')
    # x ticks at decades (and halfway marks when the span is short)
    k0, k1 = math.floor(llo), math.ceil(lhi)
    for k in range(k0, k1 + 1):
        xv = 10.0 ** k
        if lo <= xv <= hi:
            xx = sx(xv)
            parts.append(f'<line x1="{xx:.1f}" y1="{_MT + ph}" x2="{xx:.1f}" '
                         f'y2="{_MT + ph + 4}" stroke="#333"/>')
            parts.append(f'<text x="{xx:.1f}" y="{_MT + ph + 18}" '
                         f'text-anchor="middle">1e{k}</text>')
    parts.append(f'<text x="{_ML + pw / 2:.1f}" y="{_H - 12}" text-anchor="middle">'
                 f'{_svg_escape(xlabel)}</text>')
    parts.append(f'<text x="18" y="{_MT + ph / 2:.1f}" text-anchor="middle" '
                 f'transform="rotate(-90 18 {_MT + ph / 2:.1f})">success rate</text>')
    # curves
    for ci, c in enumerate(curves):
        color = PALETTE[ci % len(PALETTE)]
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(c.x, c.y))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     'stroke-width="1.6"/>')
        for x, y in zip(c.x, c.y):
            parts.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="2.4" '
                         f'fill="{color}"/>')
        if ambient_dim:
            label = f"d/n = {c.d / ambient_dim:.4g}"
        else:
            label = f"d = {c.d}"
        ly = _MT + 14 + 16 * ci
        lx = _ML + pw + 12
        parts.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 18}" y2="{ly - 4}" '
                     f'stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{lx + 24}" y="{ly}">{_svg_escape(label)}</text>')
    parts.append("</svg>")
    with open(path, "w") as f:
        f.write("\n".join(parts))
    return path

"""Subspaces of the ambient input space and samplers over them.

Two representations share one type: axis-aligned basis subsets (a sorted
index set) and dense orthonormal frames (an n x d matrix with orthonormal
columns). embed / pullback are exact adjoints; for basis subsets they are
lp isometries for every p, for dense frames only the l2 norm is preserved.
"""

import json
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack

from .seeding import as_rng

ORTHO_TOL = 1e-10


@dataclass(frozen=True)
class Subspace:
    """d-dimensional subspace of R^n.

    Exactly one of `indices` (basis subset) and `matrix` (dense orthonormal
    frame) is set. Construct via basis_subset() or dense().
    """

    n: int
    d: int
    indices: np.ndarray | None = None
    matrix: np.ndarray | None = None

    @classmethod
    def basis_subset(cls, n, indices):
        n = int(n)
        idx = np.asarray(indices, dtype=np.int64).ravel()
        if n < 1:
            raise ValueError(f"ambient dimension must be >= 1, got {n}")
        if idx.size < 1:
            raise ValueError("basis subset needs at least one index")
        if idx.size > n:
            raise ValueError(f"subset size {idx.size} exceeds ambient dimension {n}")
        if (idx < 0).any() or (idx >= n).any():
            raise ValueError("basis subset indices out of range")
        if np.unique(idx).size != idx.size:
            raise ValueError("basis subset indices must be distinct")
        idx = np.sort(idx)
        idx.flags.writeable = False
        return cls(n=n, d=int(idx.size), indices=idx, matrix=None)

    @classmethod
    def dense(cls, matrix, check=True):
        U = np.array(matrix, dtype=float)
        if U.ndim != 2:
            raise ValueError(f"dense frame must be 2-d, got shape {U.shape}")
        n, d = U.shape
        if d < 1 or d > n:
            raise ValueError(f"need 1 <= d <= n, got n={n}, d={d}")
        if check:
            gram = U.T @ U
            dev = float(np.max(np.abs(gram - np.eye(d))))
            if dev > ORTHO_TOL:
                raise ValueError(f"columns not orthonormal: max |U^T U - I| = {dev:.3e}")
        U.flags.writeable = False
        return cls(n=n, d=d, indices=None, matrix=U)

    @property
    def kind(self):
        return "basis" if self.indices is not None else "dense"

    def embed(self, delta):
        """Map subspace coordinates (..., d) to ambient vectors (..., n)."""
        delta = np.asarray(delta, dtype=float)
        if delta.shape[-1] != self.d:
            raise ValueError(f"embed: last axis must be {self.d}, got {delta.shape}")
        if self.indices is not None:
            out = np.zeros(delta.shape[:-1] + (self.n,), dtype=float)
            out[..., self.indices] = delta
            return out
        return delta @ self.matrix.T

    def pullback(self, v):
        """Adjoint of embed: ambient (..., n) to subspace coordinates (..., d)."""
        v = np.asarray(v, dtype=float)
        if v.shape[-1] != self.n:
            raise ValueError(f"pullback: last axis must be {self.n}, got {v.shape}")
        if self.indices is not None:
            return v[..., self.indices]
        return v @ self.matrix

    def to_record(self):
        """JSON-serializable dict; floats survive a round trip exactly."""
        if self.indices is not None:
            return {"kind": "basis", "n": self.n, "d": self.d,
                    "indices": [int(i) for i in self.indices]}
        return {"kind": "dense", "n": self.n, "d": self.d,
                "rows": [[float(x) for x in row] for row in self.matrix]}

    @classmethod
    def from_record(cls, rec):
        kind = rec.get("kind")
        if kind == "basis":
            sub = cls.basis_subset(rec["n"], rec["indices"])
        elif kind == "dense":
            sub = cls.dense(np.array(rec["rows"], dtype=float), check=True)
        else:
            raise ValueError(f"unknown subspace kind {kind!r}")
        if sub.n != int(rec["n"]) or sub.d != int(rec["d"]):
            raise ValueError("subspace record dims inconsistent with payload")
        return sub

    def to_json(self):
        return json.dumps(self.to_record())

    @classmethod
    def from_json(cls, text):
        return cls.from_record(json.loads(text))


def sample_basis_subset(n, d, seed):
    """Uniformly random d-subset of the n coordinate axes.

    seed may be an int or a numpy Generator. Indices are sorted; every
    d-subset has probability 1 / C(n, d).
    """
    n, d = int(n), int(d)
    if not (1 <= d <= n):
        raise ValueError(f"need 1 <= d <= n, got n={n}, d={d}")
    rng = as_rng(seed)
    idx = rng.choice(n, size=d, replace=False)
    return Subspace.basis_subset(n, idx)


def _qr_orthonormal(g):
    """Q factor of a thin QR with diag(R) >= 0 (unique, Haar for Gaussian g).

    Uses raw LAPACK dgeqrf/dorgqr: same result as np.linalg.qr plus the sign
    fix, but roughly twice as fast because the reflector assembly is done once
    with an optimally sized workspace.
    """
    n, d = g.shape
    a = np.asfortranarray(g)
    lwork = int(lapack.dgeqrf_lwork(n, d)[0])
    qr_, tau, _, info = lapack.dgeqrf(a, lwork=lwork, overwrite_a=1)
    if info != 0:
        raise np.linalg.LinAlgError(f"dgeqrf failed with info={info}")
    signs = np.sign(np.diag(qr_[:d, :d]))
    signs[signs == 0.0] = 1.0
    _, work, _ = lapack.dorgqr(qr_[:, :d], tau, lwork=-1)
    q, _, info = lapack.dorgqr(qr_[:, :d], tau, lwork=int(work[0]), overwrite_a=1)
    if info != 0:
        raise np.linalg.LinAlgError(f"dorgqr failed with info={info}")
    return q * signs


def sample_grassmannian(n, d, seed):
    """Rotation-invariant random d-frame in R^n.

    Orthonormalizes an n x d standard Gaussian matrix by QR and fixes signs so
    diag(R) >= 0, which makes the draw unique and invariant under left
    multiplication by any fixed orthogonal matrix.
    """
    n, d = int(n), int(d)
    if not (1 <= d <= n):
        raise ValueError(f"need 1 <= d <= n, got n={n}, d={d}")
    rng = as_rng(seed)
    g = rng.standard_normal((n, d))
    q = _qr_orthonormal(g)
    return Subspace.dense(q, check=False)

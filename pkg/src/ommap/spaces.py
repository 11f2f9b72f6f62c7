"""Truncated weighted sequence spaces and spectral operators.

Everything here works on finite truncations of sequence spaces: a vector
``u`` of length ``K`` stands for the first ``K`` coordinates of a
sequence.  Weighted p-norms, coordinate projections, and spectral
pseudoinverse operations are the primitives the measure and functional
layers are built on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InputError, ParameterError

#: An eigenvalue counts as zero iff lam_k <= RANK_TOL * max_j lam_j.
RANK_TOL = 1e-12

#: Tolerance for the orthonormality check of explicit bases.
ORTHO_TOL = 1e-10


def _as_vector(u, dim: Optional[int] = None) -> np.ndarray:
    v = np.asarray(u, dtype=float)
    if v.ndim != 1:
        raise InputError(f"expected a vector, got array of shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise InputError(f"dimension mismatch: expected {dim}, got {v.shape[0]}")
    return v


@dataclass(frozen=True)
class WeightedSeqSpace:
    """Weighted l^p space on the first ``dim`` coordinates.

    The norm of ``u`` is ``(sum_k |u_k / weights_k|^p)^(1/p)``, with the
    max of ``|u_k / weights_k|`` for ``p = inf``.
    """

    p: float
    weights: np.ndarray

    def __post_init__(self):
        w = _as_vector(self.weights)
        object.__setattr__(self, "weights", w)
        if w.size < 1:
            raise ParameterError("space dimension must be >= 1")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ParameterError("all weights must be strictly positive and finite")
        if not (self.p > 0):
            raise ParameterError(f"p must be positive, got {self.p}")

    @property
    def dim(self) -> int:
        return int(self.weights.size)

    @classmethod
    def unweighted(cls, p: float, dim: int) -> "WeightedSeqSpace":
        return cls(p=p, weights=np.ones(dim))


def weighted_norm(u, space: WeightedSeqSpace) -> float:
    """Norm of ``u`` in ``space``; may be +inf for non-finite input."""
    v = _as_vector(u, space.dim)
    scaled = np.abs(v) / space.weights
    if math.isinf(space.p):
        return float(np.max(scaled))
    if space.p == 1.0:
        return float(np.sum(scaled))
    if space.p == 2.0:
        return float(np.sqrt(np.sum(scaled * scaled)))
    # generic p: rescale by the max to avoid overflow for large p
    m = float(np.max(scaled))
    if m == 0.0 or not math.isfinite(m):
        return m
    return float(m * np.sum((scaled / m) ** space.p) ** (1.0 / space.p))


def project(u, n: int) -> np.ndarray:
    """Keep coordinates 1..n, zero the rest.  Idempotent, norm-1 in any
    weighted l^p."""
    v = _as_vector(u)
    if not (1 <= n <= v.size):
        raise InputError(f"projection dimension {n} out of range [1, {v.size}]")
    out = v.copy()
    out[n:] = 0.0
    return out


@dataclass(frozen=True)
class SpectralOperator:
    """Symmetric positive semi-definite operator stored spectrally.

    ``eigenvalues`` are the (non-negative) eigenvalues; ``basis`` holds
    the orthonormal eigenvectors as columns, or ``None`` for the
    coordinate basis.  When the operator is a covariance, the
    eigenvalues are variances.
    """

    eigenvalues: np.ndarray
    basis: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        lam = _as_vector(self.eigenvalues)
        object.__setattr__(self, "eigenvalues", lam)
        if np.any(lam < 0) or not np.all(np.isfinite(lam)):
            raise ParameterError("eigenvalues must be non-negative and finite")
        if self.basis is not None:
            b = np.asarray(self.basis, dtype=float)
            if b.shape != (lam.size, lam.size):
                raise ParameterError(
                    f"basis shape {b.shape} incompatible with {lam.size} eigenvalues"
                )
            err = np.max(np.abs(b.T @ b - np.eye(lam.size)))
            if err > ORTHO_TOL:
                raise ParameterError(f"basis not orthonormal: deviation {err:.3e}")
            object.__setattr__(self, "basis", b)

    @property
    def dim(self) -> int:
        return int(self.eigenvalues.size)

    @classmethod
    def from_dense(cls, mat) -> "SpectralOperator":
        """Spectral form of a dense SPSD matrix (symmetrised first)."""
        a = np.asarray(mat, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ParameterError(f"expected a square matrix, got shape {a.shape}")
        a = 0.5 * (a + a.T)
        lam, vec = np.linalg.eigh(a)
        floor = -1e-10 * max(1.0, float(np.max(np.abs(lam))))
        if np.any(lam < floor):
            raise ParameterError(f"matrix is not PSD: min eigenvalue {lam.min():.3e}")
        return cls(eigenvalues=np.maximum(lam, 0.0), basis=vec)

    # -- coordinate transforms -------------------------------------------
    def to_eigen(self, x) -> np.ndarray:
        v = _as_vector(x, self.dim)
        return v if self.basis is None else self.basis.T @ v

    def from_eigen(self, c) -> np.ndarray:
        v = _as_vector(c, self.dim)
        return v if self.basis is None else self.basis @ v

    def to_eigen_matrix(self, mat: np.ndarray) -> np.ndarray:
        """Rows of ``mat`` re-expressed in the eigenbasis."""
        return mat if self.basis is None else self.basis.T @ mat

    # -- applications ----------------------------------------------------
    def apply(self, x) -> np.ndarray:
        return self.from_eigen(self.eigenvalues * self.to_eigen(x))

    def sqrt_apply(self, x) -> np.ndarray:
        return self.from_eigen(np.sqrt(self.eigenvalues) * self.to_eigen(x))

    def zero_mask(self, rank_tol: float = RANK_TOL) -> np.ndarray:
        """Boolean mask of eigenvalues treated as zero at ``rank_tol``."""
        if rank_tol < 0:
            raise InputError("rank_tol must be >= 0")
        top = float(np.max(self.eigenvalues)) if self.dim else 0.0
        if top == 0.0:
            return np.ones(self.dim, dtype=bool)
        return self.eigenvalues <= rank_tol * top

    def max_eigenvalue(self) -> float:
        return float(np.max(self.eigenvalues))


def pinv_apply(op: SpectralOperator, y, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Moore-Penrose pseudoinverse applied to ``y``.

    In the eigenbasis the k-th component of the result is y_k / lam_k
    where lam_k is a nonzero eigenvalue, and 0 on the kernel directions
    (the pseudoinverse annihilates the orthogonal complement of the
    range).
    """
    c = op.to_eigen(_as_vector(y, op.dim))
    zero = op.zero_mask(rank_tol)
    out = np.zeros_like(c)
    out[~zero] = c[~zero] / op.eigenvalues[~zero]
    return op.from_eigen(out)


def sqrt_pinv_apply(op: SpectralOperator, v, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Pseudoinverse of the operator square root applied to ``v``."""
    c = op.to_eigen(_as_vector(v, op.dim))
    zero = op.zero_mask(rank_tol)
    out = np.zeros_like(c)
    out[~zero] = c[~zero] / np.sqrt(op.eigenvalues[~zero])
    return op.from_eigen(out)


def in_range_sqrt(op: SpectralOperator, v, rank_tol: float = RANK_TOL,
                  atol: float = 1e-10) -> bool:
    """Range-membership test for the operator square root.

    ``v`` lies in range(op^(1/2)) iff its components along the kernel
    directions vanish; numerically, iff their magnitude stays below
    ``atol * max(1, |v|)``.
    """
    c = op.to_eigen(_as_vector(v, op.dim))
    zero = op.zero_mask(rank_tol)
    if not np.any(zero):
        return True
    scale = max(1.0, float(np.linalg.norm(c)))
    return bool(np.max(np.abs(c[zero]), initial=0.0) <= atol * scale)

"""Singular-value machinery: low-rank factors, low-rank-plus-sparse SVD, spectral prox."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .exceptions import ConfigurationError
from .regularizers import check_step, prox_array

__all__ = [
    "LowRankFactors",
    "SparsePerturbation",
    "SVDResult",
    "lrssvd",
    "spectral_prox",
    "lazy_rank_truncation",
    "frobenius_distance",
    "fix_signs",
]


def fix_signs(U, V):
    """Flip column pairs so the first nonzero entry of each column of ``U`` is >= 0."""
    if U.shape[1] == 0:
        return U, V
    nz = np.abs(U) > 0
    first = np.argmax(nz, axis=0)
    lead = U[first, np.arange(U.shape[1])]
    flip = np.where(lead < 0, -1.0, 1.0)
    return U * flip, V * flip


@dataclass(frozen=True)
class LowRankFactors:
    """Truncated SVD triple ``U @ diag(S) @ V.T``.

    ``U`` is d1 x r and ``V`` is d2 x r, both with orthonormal columns; ``S`` is
    nonincreasing and nonnegative.
    """

    U: np.ndarray
    S: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        U = np.asarray(self.U, dtype=float)
        V = np.asarray(self.V, dtype=float)
        S = np.asarray(self.S, dtype=float).reshape(-1)
        if U.ndim != 2 or V.ndim != 2:
            raise ValueError("U and V must be 2-D")
        if not (U.shape[1] == V.shape[1] == S.shape[0]):
            raise ValueError(f"rank mismatch: U {U.shape}, S {S.shape}, V {V.shape}")
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "S", S)

    @property
    def shape(self):
        return (self.U.shape[0], self.V.shape[0])

    @property
    def rank(self):
        return self.S.shape[0]

    @classmethod
    def zeros(cls, shape):
        d1, d2 = shape
        return cls(np.zeros((d1, 0)), np.zeros(0), np.zeros((d2, 0)))

    @classmethod
    def from_dense(cls, X, rank=None, tol=0.0):
        """SVD of a dense matrix, truncated to ``rank`` and to values > ``tol``."""
        U, S, Vt = np.linalg.svd(np.asarray(X, dtype=float), full_matrices=False)
        keep = S > tol
        if rank is not None:
            keep[rank:] = False
        U, V = fix_signs(U[:, keep], Vt[keep].T)
        return cls(U, S[keep], V)

    def to_dense(self):
        return (self.U * self.S) @ self.V.T

    def entries(self, rows, cols):
        """Entries ``X[rows[k], cols[k]]`` in O(len(rows) * rank)."""
        if self.rank == 0:
            return np.zeros(len(rows))
        return np.einsum("ij,ij->i", self.U[rows] * self.S, self.V[cols])

    def frobenius_norm(self):
        return float(np.linalg.norm(self.S))

    def check(self, atol=1e-10):
        """Raise if the factor invariants do not hold to ``atol``."""
        r = self.rank
        eye = np.eye(r)
        if np.linalg.norm(self.U.T @ self.U - eye) > atol:
            raise ValueError("U columns are not orthonormal")
        if np.linalg.norm(self.V.T @ self.V - eye) > atol:
            raise ValueError("V columns are not orthonormal")
        if np.any(self.S < 0) or np.any(np.diff(self.S) > 0):
            raise ValueError("singular values must be nonnegative and nonincreasing")
        return self


@dataclass(frozen=True)
class SparsePerturbation:
    """A sparse d1 x d2 matrix in coordinate form, without duplicate entries."""

    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    shape: tuple
    check: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64).reshape(-1)
        cols = np.asarray(self.cols, dtype=np.int64).reshape(-1)
        vals = np.asarray(self.vals, dtype=float).reshape(-1)
        shape = (int(self.shape[0]), int(self.shape[1]))
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "vals", vals)
        object.__setattr__(self, "shape", shape)
        if not (len(rows) == len(cols) == len(vals)):
            raise ValueError("rows, cols and vals must have equal length")
        if self.check and len(rows):
            if rows.min() < 0 or cols.min() < 0 or rows.max() >= shape[0] or cols.max() >= shape[1]:
                raise ValueError(f"index out of range for shape {shape}")
            keys = rows * shape[1] + cols
            if np.unique(keys).size != keys.size:
                raise ValueError("duplicate (row, col) entries")

    @property
    def nnz(self):
        return len(self.vals)

    @cached_property
    def csr(self):
        return sp.csr_matrix((self.vals, (self.rows, self.cols)), shape=self.shape)

    @cached_property
    def csr_t(self):
        return self.csr.T.tocsr()

    @classmethod
    def empty(cls, shape):
        z = np.zeros(0)
        return cls(z.astype(np.int64), z.astype(np.int64), z, shape)

    def to_dense(self):
        X = np.zeros(self.shape)
        X[self.rows, self.cols] = self.vals
        return X


class SVDResult(NamedTuple):
    factors: LowRankFactors
    converged: bool
    sweeps: int
    residual: float
    basis: np.ndarray  # right block, reused as the next warm start


def _orth(X):
    Q, _ = np.linalg.qr(X)
    return Q


def lrssvd(lr, y, r0, inner_iters=3, tol=1e-10, v0=None, oversample=5, rng=None):
    """Top-``r0`` SVD of ``U diag(S) V.T + Y`` without forming the dense matrix.

    Block power iteration on the implicit operator, warm-started from ``v0``
    (default: ``lr.V``).  Each sweep costs one product with the operator and
    one with its transpose, i.e. O((d1 + d2) r k + nnz(Y) k) for block size k.
    A sweep finishes with the QR / small-SVD re-orthonormalization, and the
    loop stops early once ``||A V - U S||_F / ||S||_F <= tol``.

    Parameters
    ----------
    lr : LowRankFactors
    y : SparsePerturbation
    r0 : int
        Number of singular triplets returned.
    inner_iters : int
        Maximum number of sweeps.
    tol : float
        Residual tolerance for early exit.
    v0 : ndarray, optional
        d2 x k warm-start block. Padded with random columns if narrow.
    oversample : int
        Extra block columns beyond ``r0``; improves accuracy of the last kept triplets.
    rng : numpy.random.Generator, optional

    Returns
    -------
    SVDResult
    """
    d1, d2 = lr.shape
    if tuple(y.shape) != (d1, d2):
        raise ValueError(f"shape mismatch: factors {lr.shape}, perturbation {y.shape}")
    if r0 < 1:
        raise ConfigurationError("rank cap r0 must be >= 1")
    if inner_iters < 1:
        raise ConfigurationError("inner_iters must be >= 1")
    r0 = min(int(r0), d1, d2)
    k = min(r0 + int(oversample), d1, d2)
    rng = np.random.default_rng(0) if rng is None else rng

    U, S, V = lr.U, lr.S, lr.V
    Y, Yt = y.csr, y.csr_t

    def matmul(X):
        out = Y @ X
        if S.size:
            out += U @ (S[:, None] * (V.T @ X))
        return out

    def rmatmul(X):
        out = Yt @ X
        if S.size:
            out += V @ (S[:, None] * (U.T @ X))
        return out

    start = V if v0 is None else np.asarray(v0, dtype=float)
    start = start[:, :k]
    if start.shape[1] < k:
        start = np.hstack([start, rng.standard_normal((d2, k - start.shape[1]))])
    QV = _orth(start)

    W = matmul(QV)
    residual = np.inf
    converged = False
    sweeps = 0
    for sweeps in range(1, inner_iters + 1):
        QU = _orth(W)
        Z = rmatmul(QU)
        QV, R = np.linalg.qr(Z)
        # Q_U^T A Q_V = R^T, so its SVD finishes the sweep
        Ub, Sb, Vbt = np.linalg.svd(R.T)
        Uk = QU @ Ub[:, :r0]
        Vk = QV @ Vbt[:r0].T
        Sk = Sb[:r0]
        W = matmul(QV)
        gap = W @ Vbt[:r0].T - Uk * Sk
        scale = np.linalg.norm(Sk)
        residual = float(np.linalg.norm(gap) / scale) if scale > 0 else float(np.linalg.norm(gap))
        if residual <= tol:
            converged = True
            break
    Uk, Vk = fix_signs(Uk, Vk)
    # the rotated block is the best warm start for the next call
    basis = QV @ Vbt.T
    return SVDResult(LowRankFactors(Uk, Sk, Vk), converged, sweeps, residual, basis)


def spectral_prox(lr_tilde, spec, tau_lambda):
    """Prox of ``tau_lambda * sum_i phi(sigma_i(X))`` at ``lr_tilde``.

    Singular vectors are kept, each singular value goes through the scalar
    prox, and zeroed triplets are dropped.
    """
    check_step(spec, tau_lambda)
    S = prox_array(spec, lr_tilde.S, tau_lambda)
    keep = S > 0
    return LowRankFactors(lr_tilde.U[:, keep], S[keep], lr_tilde.V[:, keep])


def lazy_rank_truncation(singular_values, threshold):
    """Count leading values strictly above ``threshold``; stops at the first that is not.

    Values at or below the threshold are mapped to zero by every prox in this
    package, so nothing after the first one needs to be computed.
    """
    count = 0
    for s in singular_values:
        if not s > threshold:
            break
        count += 1
    return count


def frobenius_distance(A, B):
    """``||A - B||_F`` for two factored matrices, without densifying and without
    the cancellation of ``||A||^2 + ||B||^2 - 2<A, B>``."""
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch {A.shape} vs {B.shape}")
    if A.rank + B.rank == 0:
        return 0.0
    QU, RU = np.linalg.qr(np.hstack([A.U, B.U]))
    QV, RV = np.linalg.qr(np.hstack([A.V, B.V]))
    core = (RU * np.concatenate([A.S, -B.S])) @ RV.T
    return float(np.linalg.norm(core))

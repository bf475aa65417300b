"""Observation models, projections and the isometry / orthogonality diagnostics.

An :class:`ObservationSet` always observes the low-rank part through entry
sampling on ``(rows[k], cols[k])``.  Its ``kind`` selects the sparse-part
model ``A_s``:

* ``EntrySampling`` -- matrix completion, no sparse part (``d_s = 0``);
* ``Identity``      -- robust PCA, ``A_s = I_n`` and ``d_s = n``;
* ``GenericDense``  -- an explicit dense ``n x d_s`` matrix.
"""
from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field
from functools import cached_property

import numpy as np

from .spectral import LowRankFactors, SparsePerturbation

__all__ = [
    "ObservationKind",
    "ObservationSet",
    "TangentSpace",
    "DiagnosticsReport",
    "apply",
    "adjoint",
    "project_tangent",
    "project_support",
    "incoherence",
    "estimate_rip",
    "estimate_rip_sparse",
    "estimate_rop",
    "alpha_sparsity",
    "operator_norm",
]


class ObservationKind(enum.Enum):
    EntrySampling = "EntrySampling"
    Identity = "Identity"
    GenericDense = "GenericDense"

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        for k in cls:
            if k.value.lower() == str(name).lower():
                return k
        raise ValueError(f"unknown observation kind {name!r}")


@dataclass(frozen=True)
class ObservationSet:
    """Sampled entries of the low-rank part, the sparse-part model and the data ``b``."""

    rows: np.ndarray
    cols: np.ndarray
    b: np.ndarray
    shape: tuple
    kind: ObservationKind = ObservationKind.EntrySampling
    A_s: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64).reshape(-1)
        cols = np.asarray(self.cols, dtype=np.int64).reshape(-1)
        b = np.asarray(self.b, dtype=float).reshape(-1)
        shape = (int(self.shape[0]), int(self.shape[1]))
        kind = ObservationKind.parse(self.kind)
        for name, val in (("rows", rows), ("cols", cols), ("b", b), ("shape", shape), ("kind", kind)):
            object.__setattr__(self, name, val)
        if not (len(rows) == len(cols) == len(b)):
            raise ValueError("rows, cols and b must have equal length")
        if len(rows):
            if rows.min() < 0 or cols.min() < 0 or rows.max() >= shape[0] or cols.max() >= shape[1]:
                raise ValueError(f"observation index out of range for shape {shape}")
            keys = rows * shape[1] + cols
            if np.unique(keys).size != keys.size:
                raise ValueError("duplicate observed entries")
        if kind is ObservationKind.GenericDense:
            if self.A_s is None:
                raise ValueError("GenericDense observations need an A_s matrix")
            A = np.asarray(self.A_s, dtype=float)
            if A.ndim != 2 or A.shape[0] != len(b):
                raise ValueError(f"A_s must be n x d_s with n = {len(b)}, got {A.shape}")
            object.__setattr__(self, "A_s", A)
        elif self.A_s is not None:
            raise ValueError(f"A_s is only meaningful for GenericDense, not {kind.value}")

    @property
    def n(self):
        return len(self.b)

    @property
    def d_s(self):
        if self.kind is ObservationKind.EntrySampling:
            return 0
        if self.kind is ObservationKind.Identity:
            return self.n
        return self.A_s.shape[1]

    @property
    def sampling_scale(self):
        """``d1 d2 / n``, the RIP-informed step scale of the low-rank update."""
        return self.shape[0] * self.shape[1] / self.n

    @property
    def sparse_scale(self):
        """``d_s / n``, the step scale of the sparse update."""
        return self.d_s / self.n

    @cached_property
    def mask(self):
        m = np.zeros(self.shape, dtype=bool)
        m[self.rows, self.cols] = True
        return m

    def with_b(self, b):
        return ObservationSet(self.rows, self.cols, b, self.shape, self.kind, self.A_s)

    # low-rank model
    def sample(self, L):
        """``A_L(L)`` for factors or a dense matrix."""
        if isinstance(L, LowRankFactors):
            if L.shape != self.shape:
                raise ValueError(f"shape mismatch: L {L.shape}, observations {self.shape}")
            return L.entries(self.rows, self.cols)
        L = np.asarray(L, dtype=float)
        if L.shape != self.shape:
            raise ValueError(f"shape mismatch: L {L.shape}, observations {self.shape}")
        return L[self.rows, self.cols]

    def scatter(self, r):
        """``A_L^*(r)`` as a sparse matrix."""
        r = np.asarray(r, dtype=float)
        if r.shape != (self.n,):
            raise ValueError(f"expected a length-{self.n} vector, got {r.shape}")
        return SparsePerturbation(self.rows, self.cols, r, self.shape, check=False)

    # sparse model
    def apply_sparse(self, s):
        s = np.zeros(self.d_s) if s is None else np.asarray(s, dtype=float)
        if s.shape != (self.d_s,):
            raise ValueError(f"sparse part must have length {self.d_s}, got {s.shape}")
        if self.kind is ObservationKind.EntrySampling:
            return np.zeros(self.n)
        if self.kind is ObservationKind.Identity:
            return s.copy()
        return self.A_s @ s

    def apply_sparse_adjoint(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind is ObservationKind.EntrySampling:
            return np.zeros(0)
        if self.kind is ObservationKind.Identity:
            return r.copy()
        return self.A_s.T @ r


def apply(obs, L, s=None):
    """``A_L(L) + A_s s``."""
    return obs.sample(L) + obs.apply_sparse(s)


def adjoint(obs, residual):
    """Adjoints of both models: ``(A_L^*(r) as a sparse matrix, A_s^T r)``."""
    return obs.scatter(residual), obs.apply_sparse_adjoint(residual)


@dataclass(frozen=True)
class TangentSpace:
    """Tangent space ``{U A + B V^T}`` of a low-rank matrix with column-orthonormal U, V."""

    U: np.ndarray
    V: np.ndarray

    @classmethod
    def of(cls, lr):
        return cls(lr.U, lr.V)

    @classmethod
    def union(cls, *factors):
        """Smallest tangent space containing those of all given factors."""
        U = np.hstack([f.U for f in factors])
        V = np.hstack([f.V for f in factors])
        return cls(_range_basis(U), _range_basis(V))

    @property
    def shape(self):
        return (self.U.shape[0], self.V.shape[0])

    def project(self, X):
        if isinstance(X, SparsePerturbation):
            if X.shape != self.shape:
                raise ValueError(f"shape mismatch {X.shape} vs {self.shape}")
            UtX = (X.csr_t @ self.U).T
            XV = X.csr @ self.V
        else:
            X = np.asarray(X, dtype=float)
            if X.shape != self.shape:
                raise ValueError(f"shape mismatch {X.shape} vs {self.shape}")
            UtX = self.U.T @ X
            XV = X @ self.V
        U, V = self.U, self.V
        return U @ UtX + XV @ V.T - U @ ((UtX @ V) @ V.T)


def _range_basis(X, rtol=1e-10):
    if X.shape[1] == 0:
        return X
    Q, s, _ = np.linalg.svd(X, full_matrices=False)
    return Q[:, s > rtol * s[0]] if s[0] > 0 else Q[:, :0]


def project_tangent(T, X):
    """``P_T(X) = U U^T X + X V V^T - U U^T X V V^T``."""
    return T.project(X)


def project_support(omega, x):
    """Zero the entries of ``x`` outside ``omega`` (a boolean mask or index array)."""
    x = np.asarray(x, dtype=float)
    omega = np.asarray(omega)
    out = np.zeros_like(x)
    if omega.dtype == bool:
        if omega.shape != x.shape:
            raise ValueError("mask shape does not match")
        out[omega] = x[omega]
    else:
        idx = omega.astype(np.int64)
        out.reshape(-1)[idx] = x.reshape(-1)[idx]
    return out


def incoherence(lr):
    """Smallest mu with ``||U_i||^2 <= mu r / d1`` and ``||V_j||^2 <= mu r / d2``."""
    r = lr.rank if isinstance(lr, LowRankFactors) else lr.U.shape[1]
    if r == 0:
        return 0.0
    d1, d2 = lr.U.shape[0], lr.V.shape[0]
    mu_u = d1 / r * np.max(np.sum(lr.U**2, axis=1))
    mu_v = d2 / r * np.max(np.sum(lr.V**2, axis=1))
    return float(max(mu_u, mu_v))


def operator_norm(op, x0, max_iter=200, rtol=1e-9):
    """Power iteration for the norm of a self-adjoint linear map ``op``.

    Runs for ``max_iter`` steps or until the estimate changes by less than
    ``rtol`` relative. Returns ``(norm, last_unit_vector)``.
    """
    nrm = np.linalg.norm(x0)
    if nrm == 0:
        return 0.0, x0
    x = x0 / nrm
    est = 0.0
    for _ in range(max_iter):
        y = op(x)
        new = float(np.linalg.norm(y))
        if new == 0.0:
            return 0.0, x
        x = y / new
        if abs(new - est) <= rtol * new:
            est = new
            break
        est = new
    return est, x


def estimate_rip(obs, T, trials=1, tau_L=1.0, seed=0, max_iter=200, rtol=1e-9, x0=None):
    """Estimate ``|| c P_T A_L^* A_L P_T - P_T ||`` with ``c = tau_L d1 d2 / n``.

    Power iteration on the self-adjoint deviation, best of ``trials`` random
    starts (or the given ``x0``).  Returns the operator norm, i.e. the
    symmetric sandwich half-width of the sampled isometry on ``T``.
    """
    c = tau_L * obs.sampling_scale
    mask = obs.mask

    def op(X):
        Z = T.project(X)
        return T.project(c * (mask * Z) - Z)

    rng = np.random.default_rng(seed)
    best = 0.0
    starts = [x0] if x0 is not None else [rng.standard_normal(obs.shape) for _ in range(trials)]
    for X0 in starts:
        val, _ = operator_norm(op, T.project(X0), max_iter=max_iter, rtol=rtol)
        best = max(best, val)
    return best


def estimate_rip_sparse(obs, omega, tau_s=1.0, seed=0, max_iter=200, rtol=1e-9):
    """Estimate ``|| c P_Om A_s^T A_s P_Om - P_Om ||`` with ``c = tau_s d_s / n``."""
    if obs.d_s == 0:
        return 0.0
    omega = _as_mask(omega, obs.d_s)
    if not omega.any():
        return 0.0
    c = tau_s * obs.sparse_scale

    def op(v):
        z = np.where(omega, v, 0.0)
        dev = c * obs.apply_sparse_adjoint(obs.apply_sparse(z)) - z
        return np.where(omega, dev, 0.0)

    x0 = np.where(omega, np.random.default_rng(seed).standard_normal(obs.d_s), 0.0)
    val, _ = operator_norm(op, x0, max_iter=max_iter, rtol=rtol)
    return val


def estimate_rop(obs, T, omega, seed=0, max_iter=200, rtol=1e-9):
    """Restricted-orthogonality estimate for the cross term ``P_T A_L^* A_s P_Om``.

    Returns ``max(sqrt(d1 d2 / n), sqrt(d_s / n)) * ||P_T A_L^* A_s P_Om||``; for
    fully observed robust PCA this is ``||P_T P_Om||``.
    """
    if obs.d_s == 0:
        return 0.0
    omega = _as_mask(omega, obs.d_s)
    if not omega.any():
        return 0.0

    def forward(v):  # R^{d_s} -> tangent matrices
        return T.project(obs.scatter(obs.apply_sparse(np.where(omega, v, 0.0))))

    def backward(X):
        return np.where(omega, obs.apply_sparse_adjoint(obs.sample(T.project(X))), 0.0)

    x0 = np.where(omega, np.random.default_rng(seed).standard_normal(obs.d_s), 0.0)
    sq, _ = operator_norm(lambda v: backward(forward(v)), x0, max_iter=max_iter, rtol=rtol)
    scale = max(np.sqrt(obs.sampling_scale), np.sqrt(obs.sparse_scale))
    return float(scale * np.sqrt(sq))


def _as_mask(omega, size):
    omega = np.asarray(omega)
    if omega.dtype == bool:
        if omega.shape != (size,):
            raise ValueError(f"support mask must have length {size}")
        return omega
    mask = np.zeros(size, dtype=bool)
    mask[omega.astype(np.int64)] = True
    return mask


def alpha_sparsity(S):
    """Largest fraction of nonzeros in any row (over d2) or column (over d1)."""
    d1, d2 = S.shape
    nz = S.vals != 0
    if not nz.any():
        return 0.0
    rows = np.bincount(S.rows[nz], minlength=d1)
    cols = np.bincount(S.cols[nz], minlength=d2)
    return float(max(rows.max() / d2, cols.max() / d1))


@dataclass
class DiagnosticsReport:
    """Measured incoherence, isometry and orthogonality constants of an instance.

    ``kappa_L``, ``kappa_s`` and ``kappa`` are operator norms of the restricted
    deviations (with the step scalings applied); the squared values are the
    contraction factors that enter the per-iteration error recursion.
    """

    mu: float
    kappa_L: float
    kappa_s: float
    kappa: float
    alpha: float

    def to_dict(self):
        return {k: float(v) for k, v in asdict(self).items()}

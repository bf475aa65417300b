"""Alternating proximal gradient descent for low-rank plus sparse recovery.

Minimizes

    lambda_L/(d1 d2) * sum_i phi_L(sigma_i(L)) + lambda_s/d_s * sum_j phi_s(|s_j|)
        + 1/(2n) * ||A_L(L) + A_s s - b||^2

by a gradient step through the observation model followed by a prox step,
first on ``L`` and then (with the fresh ``L``) on ``s``.  The gradient steps
are ``tau_L d1 d2 / n`` and ``tau_s d_s / n``, so the prox thresholds are
``tau_L lambda_L`` and ``tau_s lambda_s``.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .exceptions import ConfigurationError
from .observe import ObservationSet
from .regularizers import RegularizerSpec, check_step, phi, prox_vector, zero_threshold
from .spectral import LowRankFactors, frobenius_distance, lazy_rank_truncation, lrssvd, spectral_prox

logger = logging.getLogger(__name__)

__all__ = [
    "Continuation",
    "SolverConfig",
    "IterationRecord",
    "SolveTrace",
    "Solution",
    "State",
    "objective",
    "step_L",
    "step_s",
    "solve",
    "default_lambdas",
    "TRACE_HEADER",
]

TRACE_HEADER = ["iter", "objective", "residual", "rank", "nnz", "err_L", "err_s", "seconds"]


@dataclass(frozen=True)
class Continuation:
    """Geometric decrease of both lambdas: ``lambda_k = lambda * max(floor, start * decay**k)``."""

    start: float = 10.0
    decay: float = 0.7
    floor: float = 1.0

    def __post_init__(self):
        if self.start < self.floor or self.floor <= 0:
            raise ConfigurationError("continuation needs start >= floor > 0")
        if not 0 < self.decay < 1:
            raise ConfigurationError("continuation decay must lie in (0, 1)")

    def multiplier(self, k):
        return max(self.floor, self.start * self.decay**k)


@dataclass(frozen=True)
class SolverConfig:
    """All tunables of the alternating proximal gradient method.

    ``tau_L`` and ``tau_s`` multiply the canonical step scales ``d1 d2 / n``
    and ``d_s / n``.  ``r0`` caps the rank of every iterate.  When ``None``
    the rank is adaptive: each step computes ``rank(L^k) + rank_margin``
    triplets and doubles that block while every computed value clears the
    prox threshold, so no surviving singular value is missed.
    """

    lambda_L: float
    lambda_s: float = 1.0
    reg_L: RegularizerSpec = field(default_factory=lambda: RegularizerSpec("L1"))
    reg_s: RegularizerSpec = field(default_factory=lambda: RegularizerSpec("L1"))
    tau_L: float = 1.0
    tau_s: float = 1.0
    r0: int | None = None
    max_iter: int = 500
    tol: float = 1e-9
    continuation: Continuation | None = None
    seed: int = 0
    inner_iters: int = 3
    svd_tol: float = 1e-10
    oversample: int = 5
    backtracking: bool = False
    rank_margin: int = 5

    def __post_init__(self):
        for name in ("lambda_L", "lambda_s", "tau_L", "tau_s", "tol", "svd_tol"):
            v = float(getattr(self, name))
            if not math.isfinite(v) or v <= 0:
                raise ConfigurationError(f"{name} must be positive, got {v}")
            object.__setattr__(self, name, v)
        if self.r0 is not None and int(self.r0) < 1:
            raise ConfigurationError("r0 must be >= 1")
        if int(self.max_iter) < 1:
            raise ConfigurationError("max_iter must be >= 1")
        if int(self.inner_iters) < 1:
            raise ConfigurationError("inner_iters must be >= 1")
        if int(self.rank_margin) < 1:
            raise ConfigurationError("rank_margin must be >= 1")
        if int(self.oversample) < 0:
            raise ConfigurationError("oversample must be >= 0")
        if isinstance(self.reg_L, dict):
            object.__setattr__(self, "reg_L", RegularizerSpec.from_dict(self.reg_L))
        if isinstance(self.reg_s, dict):
            object.__setattr__(self, "reg_s", RegularizerSpec.from_dict(self.reg_s))
        if isinstance(self.continuation, dict):
            object.__setattr__(self, "continuation", Continuation(**self.continuation))
        # the largest lambda used is the first one
        top = self.continuation.multiplier(0) if self.continuation else 1.0
        check_step(self.reg_L, self.tau_L * self.lambda_L * top)
        check_step(self.reg_s, self.tau_s * self.lambda_s * top)

    @property
    def threshold_L(self):
        return zero_threshold(self.reg_L, self.tau_L * self.lambda_L)

    def to_dict(self):
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["reg_L"] = self.reg_L.to_dict()
        d["reg_s"] = self.reg_s.to_dict()
        d["continuation"] = asdict(self.continuation) if self.continuation else None
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown solver config keys: {sorted(unknown)}")
        if "lambda_L" not in d:
            raise ConfigurationError("solver config needs lambda_L")
        return cls(**d)


def default_lambdas(obs, noise_std, c1=2.0, c2=2.0):
    """Noise-scaled lambdas ``c1 nu sqrt(d log d / p)`` and ``c2 nu sqrt(log d)``.

    ``p = n / (d1 d2)`` and ``d = max(d1, d2)``.  The sampled adjoint of the
    noise has spectral norm of order ``nu sqrt(p d log d)``; the gradient step
    multiplies it by ``d1 d2 / n = 1 / p``, and the prox threshold is compared
    against that scaled quantity.  Entries of ``A_s^T`` noise are of order
    ``nu`` with a maximum near ``nu sqrt(2 log d)``.
    """
    d1, d2 = obs.shape
    p = obs.n / (d1 * d2)
    d = max(d1, d2)
    lam_L = c1 * noise_std * math.sqrt(d * math.log(d) / p)
    lam_s = c2 * noise_std * math.sqrt(math.log(d))
    return lam_L, lam_s


@dataclass
class IterationRecord:
    iter: int
    objective: float
    residual: float
    rank: int
    nnz: int
    err_L: float | None
    err_s: float | None
    seconds: float
    svd_converged: bool = True
    svd_sweeps: int = 0


@dataclass
class SolveTrace:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def to_csv(self, path=None):
        """Write ``iter,objective,residual,rank,nnz,err_L,err_s,seconds``; returns the text."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for r in self.records:
            w.writerow([
                r.iter,
                repr(float(r.objective)),
                repr(float(r.residual)),
                r.rank,
                r.nnz,
                "" if r.err_L is None else repr(float(r.err_L)),
                "" if r.err_s is None else repr(float(r.err_s)),
                repr(float(r.seconds)),
            ])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as f:
                f.write(text)
        return text


@dataclass
class Solution:
    L: LowRankFactors
    s: np.ndarray
    trace: SolveTrace
    converged: bool
    iterations: int
    widest_block: int  # most singular triplets computed in one step
    iterates: list | None = None


@dataclass
class State:
    """Iterate plus the bookkeeping carried between alternating steps."""

    L: LowRankFactors
    s: np.ndarray
    basis: np.ndarray | None = None
    lam_mult: float = 1.0
    step_mult: float = 1.0
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))


def _residual(obs, L, s, LS=None):
    LS = obs.sample(L) if LS is None else LS
    return LS + obs.apply_sparse(s) - obs.b


def objective(obs, L, s, config):
    """Value of the regularized least-squares objective."""
    d1, d2 = obs.shape
    if not isinstance(L, LowRankFactors):
        L = LowRankFactors.from_dense(L)
    if L.shape != obs.shape:
        raise ValueError(f"shape mismatch: L {L.shape}, observations {obs.shape}")
    s = np.zeros(obs.d_s) if s is None else np.asarray(s, dtype=float)
    r = _residual(obs, L, s)
    val = config.lambda_L / (d1 * d2) * float(np.sum(phi(config.reg_L, L.S)))
    if obs.d_s:
        val += config.lambda_s / obs.d_s * float(np.sum(phi(config.reg_s, np.abs(s))))
    return val + float(r @ r) / (2 * obs.n)


def step_L(state, obs, config, r0=None, LS=None):
    """Gradient step on ``L`` through the sampled adjoint, then spectral prox.

    ``r0`` fixes the number of computed triplets; ``None`` uses the adaptive
    block described on :class:`SolverConfig`.  Returns ``(new factors, SVDResult)``.
    """
    d1, d2 = obs.shape
    dmin = min(d1, d2)
    c = state.step_mult * config.tau_L * obs.sampling_scale
    res = _residual(obs, state.L, state.s, LS)
    grad = obs.scatter(-c * res)
    step = state.step_mult * config.tau_L * config.lambda_L * state.lam_mult
    thr = zero_threshold(config.reg_L, step)
    k = r0 if r0 is not None else min(state.L.rank + config.rank_margin, dmin)
    while True:
        svd = lrssvd(
            state.L, grad, k,
            inner_iters=config.inner_iters, tol=config.svd_tol,
            v0=state.basis, oversample=config.oversample, rng=state.rng,
        )
        if r0 is not None or k >= dmin or lazy_rank_truncation(svd.factors.S, thr) < k:
            break
        k = min(2 * k, dmin)
    return spectral_prox(svd.factors, config.reg_L, step), svd


def step_s(state, obs, config, L_new, LS_new=None):
    """Gradient step on ``s`` using the freshly updated ``L``, then elementwise prox."""
    if obs.d_s == 0:
        return np.zeros(0)
    c = state.step_mult * config.tau_s * obs.sparse_scale
    res = _residual(obs, L_new, state.s, LS_new)
    s_tilde = state.s - c * obs.apply_sparse_adjoint(res)
    step = state.step_mult * config.tau_s * config.lambda_s * state.lam_mult
    s_new, _ = prox_vector(config.reg_s, s_tilde, step)
    return s_new


def _gt_errors(ground_truth, L, s):
    if ground_truth is None:
        return None, None
    L_star, s_star = ground_truth
    err_L = frobenius_distance(L_star, L)
    err_s = float(np.linalg.norm(np.asarray(s_star, dtype=float) - s)) if s_star is not None else 0.0
    return err_L, err_s


def solve(obs, config, ground_truth=None, record_iterates=False, callback=None):
    """Run the alternating proximal gradient method from ``L = 0, s = 0``.

    Parameters
    ----------
    obs : ObservationSet
    config : SolverConfig
    ground_truth : (LowRankFactors, ndarray), optional
        ``(L_star, s_star)``; when given the trace records error norms.
    record_iterates : bool
        Keep every ``(L^k, s^k)`` on the solution (for auditing).
    callback : callable, optional
        Called as ``callback(k, state)`` after each iteration.

    Returns
    -------
    Solution
    """
    if not isinstance(obs, ObservationSet):
        raise TypeError("obs must be an ObservationSet")
    d1, d2 = obs.shape
    state = State(
        L=LowRankFactors.zeros(obs.shape),
        s=np.zeros(obs.d_s),
        rng=np.random.default_rng(config.seed),
    )
    if config.continuation:
        state.lam_mult = config.continuation.multiplier(0)
    r0 = min(int(config.r0), d1, d2) if config.r0 is not None else None
    widest = 0

    t0 = time.perf_counter()
    trace = SolveTrace()
    LS = np.zeros(obs.n)
    res = _residual(obs, state.L, state.s, LS)
    obj = objective(obs, state.L, state.s, config)
    eL, es = _gt_errors(ground_truth, state.L, state.s)
    trace.records.append(IterationRecord(0, obj, float(np.linalg.norm(res)), 0, 0, eL, es, 0.0))
    iterates = [(state.L, state.s)] if record_iterates else None

    converged = False
    k = 0
    for k in range(1, config.max_iter + 1):
        if config.continuation:
            state.lam_mult = config.continuation.multiplier(k - 1)
        for _ in range(31):
            L_new, svd = step_L(state, obs, config, r0, LS)
            LS_new = obs.sample(L_new)
            s_new = step_s(state, obs, config, L_new, LS_new)
            obj_new = objective(obs, L_new, s_new, config)
            if not config.backtracking or obj_new <= obj or state.step_mult < 1e-9:
                break
            state.step_mult *= 0.5
        change_L = frobenius_distance(L_new, state.L) / (1.0 + state.L.frobenius_norm())
        change_s = (
            float(np.linalg.norm(s_new - state.s)) / (1.0 + float(np.linalg.norm(state.s)))
            if obs.d_s else 0.0
        )
        widest = max(widest, svd.factors.rank)
        state.L, state.s, state.basis = L_new, s_new, svd.basis
        LS, obj = LS_new, obj_new
        res = LS + obs.apply_sparse(s_new) - obs.b
        eL, es = _gt_errors(ground_truth, L_new, s_new)
        trace.records.append(IterationRecord(
            k, obj, float(np.linalg.norm(res)), L_new.rank, int(np.count_nonzero(s_new)),
            eL, es, time.perf_counter() - t0, svd.converged, svd.sweeps,
        ))
        if record_iterates:
            iterates.append((L_new, s_new))
        if callback is not None:
            callback(k, state)
        lam_settled = not config.continuation or state.lam_mult == config.continuation.floor
        if lam_settled and max(change_L, change_s) < config.tol:
            converged = True
            break
    if not converged:
        logger.info("stopped after %d iterations without meeting tol=%g", k, config.tol)
    return Solution(state.L, state.s, trace, converged, k, widest, iterates)

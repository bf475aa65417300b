"""Per-iteration check of the two-sided error recursion against measured constants.

For iterates ``(L^k, s^k)`` with errors ``E_L^k = ||L* - L^k||_F^2`` and
``E_s^k = ||s* - s^k||^2`` the recursion reads

    E_L^{k+1} <= kL E_L^k + k tau_L E_s^k + noise_L + lambda_L r phi_L'(sigma_r(L*))
    E_s^{k+1} <= ks E_s^k + k tau_s E_L^{k+1} + noise_s
                 + lambda_s alpha d_s phi_s'(s_min - theta_s)

where ``kL``, ``ks`` and ``k`` are the *squared* restricted deviation norms
measured on the union of the tangent spaces (and supports) of the truth and
of consecutive iterates, maximized over the run.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .observe import TangentSpace, alpha_sparsity, operator_norm
from .regularizers import phi_derivative
from .spectral import SparsePerturbation, frobenius_distance

__all__ = ["AuditReport", "contraction_audit", "measure_constants"]


@dataclass
class AuditReport:
    kappa_L: float
    kappa_s: float
    kappa: float
    noise_L: float
    noise_s: float
    bias_L: float
    bias_s: float
    err_L: np.ndarray  # squared errors, one per iterate
    err_s: np.ndarray
    slack_L: np.ndarray  # rhs - lhs for each step k -> k+1
    slack_s: np.ndarray
    per_step_kappa_L: np.ndarray = field(repr=False, default=None)

    @property
    def holds(self):
        return bool(np.all(self.slack_L >= 0) and np.all(self.slack_s >= 0))

    @property
    def worst_slack(self):
        both = np.concatenate([self.slack_L, self.slack_s])
        return float(both.min()) if both.size else 0.0

    def rates(self):
        """Observed per-step ratios ``E_L^{k+1} / E_L^k`` (nan where ``E_L^k = 0``)."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.err_L[1:] / self.err_L[:-1]

    def to_dict(self):
        return {
            "kappa_L": self.kappa_L,
            "kappa_s": self.kappa_s,
            "kappa": self.kappa,
            "noise_L": self.noise_L,
            "noise_s": self.noise_s,
            "bias_L": self.bias_L,
            "bias_s": self.bias_s,
            "holds": self.holds,
            "worst_slack": self.worst_slack,
            "steps": int(self.slack_L.size),
        }


def _support(obs, *vectors):
    mask = np.zeros(obs.d_s, dtype=bool)
    for v in vectors:
        mask |= np.asarray(v) != 0
    return mask


class _Warm:
    """Power-iteration norm with the previous top vector reused as the start."""

    def __init__(self, rng, max_iter, rtol):
        self.rng = rng
        self.max_iter = max_iter
        self.rtol = rtol
        self.last = None

    def __call__(self, op, project, shape):
        x0 = self.rng.standard_normal(shape)
        if self.last is not None:
            x0 = x0 * 1e-3 + self.last
        x0 = project(x0)
        val, self.last = operator_norm(op, x0, self.max_iter, self.rtol)
        return val


def measure_constants(obs, L_star, s_star, iterates, tau_L=1.0, tau_s=1.0, seed=0,
                      max_iter=200, rtol=1e-9):
    """Squared restricted deviation norms for every step ``k -> k+1``.

    Returns three arrays ``(kappa_L, kappa_s, kappa)`` of length ``len(iterates) - 1``.
    """
    rng = np.random.default_rng(seed)
    c_L = tau_L * obs.sampling_scale
    c_s = tau_s * obs.sparse_scale
    mask = obs.mask
    warm_L, warm_s, warm_x = (_Warm(rng, max_iter, rtol) for _ in range(3))
    kL, ks, kx = [], [], []
    for k in range(len(iterates) - 1):
        T = TangentSpace.union(L_star, iterates[k][0], iterates[k + 1][0])

        def dev_L(X, T=T):
            Z = T.project(X)
            return T.project(c_L * (mask * Z) - Z)

        kL.append(warm_L(dev_L, T.project, obs.shape) ** 2)
        if obs.d_s == 0:
            ks.append(0.0)
            kx.append(0.0)
            continue
        omega = _support(obs, s_star, iterates[k][1], iterates[k + 1][1])
        if not omega.any():
            ks.append(0.0)
            kx.append(0.0)
            continue

        def on_omega(v, omega=omega):
            return np.where(omega, v, 0.0)

        def dev_s(v, omega=omega):
            z = np.where(omega, v, 0.0)
            return np.where(omega, c_s * obs.apply_sparse_adjoint(obs.apply_sparse(z)) - z, 0.0)

        def cross(v, T=T, omega=omega):
            X = T.project(obs.scatter(obs.apply_sparse(np.where(omega, v, 0.0))))
            return np.where(omega, obs.apply_sparse_adjoint(obs.sample(T.project(X))), 0.0)

        ks.append(warm_s(dev_s, on_omega, obs.d_s) ** 2)
        scale = max(obs.sampling_scale, obs.sparse_scale)
        kx.append(scale * warm_x(cross, on_omega, obs.d_s))
    return np.array(kL), np.array(ks), np.array(kx)


def _noise_terms(obs, L_star, noise, s_star, tau_L, tau_s):
    if noise is None or not np.any(noise):
        return 0.0, 0.0
    T = TangentSpace.of(L_star)
    PE = T.project(obs.scatter(noise))
    noise_L = tau_L * obs.sampling_scale * float(np.sum(PE**2))
    noise_s = 0.0
    if obs.d_s:
        omega = np.asarray(s_star) != 0
        g = np.where(omega, obs.apply_sparse_adjoint(noise), 0.0)
        noise_s = tau_s * obs.sparse_scale * float(g @ g)
    return noise_L, noise_s


def contraction_audit(solution, instance, config, seed=0, max_iter=60, rtol=1e-6):
    """Evaluate both recursion inequalities at every iteration of ``solution``.

    ``solution`` must have been produced with ``record_iterates=True``;
    ``instance`` supplies ``L_star``, ``s_star``, ``noise`` and ``obs``.
    Power iteration approaches each norm from below, so a looser ``rtol``
    can only make the check stricter.

    Returns
    -------
    AuditReport
    """
    if solution.iterates is None:
        raise ValueError("the audit needs a solution recorded with record_iterates=True")
    obs = instance.obs
    L_star, s_star = instance.L_star, np.asarray(instance.s_star, dtype=float)
    its = solution.iterates
    err_L = np.array([frobenius_distance(L_star, L) ** 2 for L, _ in its])
    err_s = np.array([float(np.sum((s_star - s) ** 2)) for _, s in its]) if obs.d_s else np.zeros(len(its))

    kL, ks, kx = measure_constants(obs, L_star, s_star, its, config.tau_L, config.tau_s,
                                   seed=seed, max_iter=max_iter, rtol=rtol)
    kappa_L = float(kL.max()) if kL.size else 0.0
    kappa_s = float(ks.max()) if ks.size else 0.0
    kappa = float(kx.max()) if kx.size else 0.0

    noise_L, noise_s = _noise_terms(obs, L_star, instance.noise, s_star, config.tau_L, config.tau_s)
    r = L_star.rank
    bias_L = config.lambda_L * r * float(phi_derivative(config.reg_L, L_star.S[-1])) if r else 0.0
    bias_s = 0.0
    if obs.d_s and np.any(s_star):
        theta_s = config.tau_s * config.lambda_s * config.reg_s.weight
        s_min = float(np.min(np.abs(s_star[s_star != 0])))
        gap = s_min - theta_s
        slope = float(phi_derivative(config.reg_s, gap)) if gap > 0 else config.reg_s.weight
        S = SparsePerturbation(obs.rows, obs.cols, s_star, obs.shape, check=False)
        bias_s = config.lambda_s * alpha_sparsity(S) * obs.d_s * slope

    rhs_L = kappa_L * err_L[:-1] + kappa * config.tau_L * err_s[:-1] + noise_L + bias_L
    rhs_s = kappa_s * err_s[:-1] + kappa * config.tau_s * err_L[1:] + noise_s + bias_s
    return AuditReport(
        kappa_L, kappa_s, kappa, noise_L, noise_s, bias_L, bias_s,
        err_L, err_s, rhs_L - err_L[1:], rhs_s - err_s[1:], per_step_kappa_L=kL,
    )

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from apgd import (
    LowRankFactors,
    ObservationKind,
    ObservationSet,
    SparsePerturbation,
    TangentSpace,
    adjoint,
    alpha_sparsity,
    apply,
    estimate_rip,
    estimate_rip_sparse,
    estimate_rop,
    incoherence,
    project_support,
    project_tangent,
)

from oracles import dense_rip, dense_rop_full, tangent_projector


def sampled(rng, shape, frac, kind=ObservationKind.EntrySampling, d_s=None):
    d1, d2 = shape
    n = int(round(frac * d1 * d2))
    cells = np.sort(rng.choice(d1 * d2, n, replace=False))
    A_s = rng.standard_normal((n, d_s)) if kind is ObservationKind.GenericDense else None
    return ObservationSet(cells // d2, cells % d2, rng.standard_normal(n), shape, kind, A_s)


def full(shape, kind=ObservationKind.Identity):
    d1, d2 = shape
    cells = np.arange(d1 * d2)
    return ObservationSet(cells // d2, cells % d2, np.zeros(d1 * d2), shape, kind)


def random_tangent(rng, d1, d2, r):
    U, _ = np.linalg.qr(rng.standard_normal((d1, r)))
    V, _ = np.linalg.qr(rng.standard_normal((d2, r)))
    return TangentSpace(U, V)


# ----------------------------------------------------------------------------
# observation sets


def test_observation_validation():
    with pytest.raises(ValueError):
        ObservationSet([0, 0], [1, 1], [1.0, 2.0], (2, 2))
    with pytest.raises(ValueError):
        ObservationSet([2], [0], [1.0], (2, 2))
    with pytest.raises(ValueError):
        ObservationSet([0], [0], [1.0, 2.0], (2, 2))
    with pytest.raises(ValueError):
        ObservationSet([0], [0], [1.0], (2, 2), "GenericDense")
    with pytest.raises(ValueError):
        ObservationSet([0], [0], [1.0], (2, 2), "Identity", np.ones((1, 1)))
    with pytest.raises(ValueError):
        ObservationKind.parse("nope")


def test_observation_sizes_and_scales():
    obs = ObservationSet([0, 1, 2], [0, 1, 0], [1.0, 2.0, 3.0], (3, 4), "identity")
    assert obs.kind is ObservationKind.Identity
    assert obs.n == 3 and obs.d_s == 3
    assert obs.sampling_scale == pytest.approx(4.0)
    assert obs.sparse_scale == 1.0
    assert obs.mask.sum() == 3 and obs.mask[2, 0]
    comp = ObservationSet([0], [0], [1.0], (3, 4))
    assert comp.d_s == 0 and comp.sparse_scale == 0.0


def test_apply_matches_dense_sampling():
    rng = np.random.default_rng(0)
    obs = sampled(rng, (12, 9), 0.4, ObservationKind.Identity)
    X = rng.standard_normal((12, 3)) @ rng.standard_normal((3, 9))
    s = rng.standard_normal(obs.n)
    lr = LowRankFactors.from_dense(X)
    expected = X[obs.rows, obs.cols] + s
    assert np.allclose(apply(obs, X, s), expected, atol=1e-13)
    assert np.allclose(apply(obs, lr, s), expected, atol=1e-12)
    with pytest.raises(ValueError):
        apply(obs, np.zeros((9, 12)), s)
    with pytest.raises(ValueError):
        apply(obs, X, s[:-1])


@pytest.mark.parametrize("kind", list(ObservationKind))
def test_adjoint_identity(kind):
    rng = np.random.default_rng(1)
    obs = sampled(rng, (15, 11), 0.35, kind, d_s=7)
    L = rng.standard_normal(obs.shape)
    s = rng.standard_normal(obs.d_s)
    r = rng.standard_normal(obs.n)
    lhs = apply(obs, L, s) @ r
    adj_L, adj_s = adjoint(obs, r)
    rhs = np.sum(L * adj_L.to_dense()) + s @ adj_s
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


# ----------------------------------------------------------------------------
# projections


def test_tangent_projection_matches_dense_projector():
    rng = np.random.default_rng(2)
    T = random_tangent(rng, 6, 5, 2)
    X = rng.standard_normal((6, 5))
    P = tangent_projector(T.U, T.V)
    assert np.allclose(project_tangent(T, X).reshape(-1), P @ X.reshape(-1), atol=1e-13)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4))
def test_tangent_projection_is_an_orthogonal_projector(seed, r):
    rng = np.random.default_rng(seed)
    T = random_tangent(rng, 9, 7, r)
    X, Y = rng.standard_normal((9, 7)), rng.standard_normal((9, 7))
    PX = T.project(X)
    assert np.allclose(T.project(PX), PX, atol=1e-12)
    assert np.sum(PX * Y) == pytest.approx(np.sum(X * T.project(Y)), abs=1e-11)
    assert np.linalg.norm(PX) <= np.linalg.norm(X) * (1 + 1e-12)


def test_tangent_projector_norm_is_one():
    rng = np.random.default_rng(3)
    T = random_tangent(rng, 8, 6, 2)
    assert np.linalg.norm(tangent_projector(T.U, T.V), 2) == pytest.approx(1.0, abs=1e-12)


def test_tangent_projection_of_sparse_input():
    rng = np.random.default_rng(4)
    T = random_tangent(rng, 10, 8, 3)
    S = SparsePerturbation([0, 3, 9], [7, 2, 0], [1.0, -2.0, 0.5], (10, 8))
    assert np.allclose(T.project(S), T.project(S.to_dense()), atol=1e-13)


def test_union_tangent_space_contains_both():
    rng = np.random.default_rng(5)
    A = LowRankFactors.from_dense(rng.standard_normal((9, 2)) @ rng.standard_normal((2, 7)), tol=1e-10)
    B = LowRankFactors.from_dense(rng.standard_normal((9, 3)) @ rng.standard_normal((3, 7)), tol=1e-10)
    T = TangentSpace.union(A, A, B)
    assert T.U.shape[1] == 5 and T.V.shape[1] == 5
    for M in (A.to_dense(), B.to_dense()):
        assert np.allclose(T.project(M), M, atol=1e-12)


def test_project_support_examples():
    x = np.array([1.0, -2.0, 3.0, 4.0])
    assert np.array_equal(project_support(np.array([True, False, True, False]), x), [1.0, 0, 3.0, 0])
    assert np.array_equal(project_support(np.array([3, 1]), x), [0, -2.0, 0, 4.0])
    assert np.array_equal(project_support(np.array([], dtype=int), x), np.zeros(4))
    with pytest.raises(ValueError):
        project_support(np.array([True, False]), x)


# ----------------------------------------------------------------------------
# incoherence and sparsity


def test_incoherence_extremes():
    d, r = 16, 4
    H = np.array([[1.0]])
    while H.shape[0] < d:
        H = np.block([[H, H], [H, -H]])
    flat = H[:, :r] / np.sqrt(d)
    assert incoherence(TangentSpace(flat, flat)) == pytest.approx(1.0, abs=1e-12)
    spiky = np.eye(d)[:, :r]
    assert incoherence(TangentSpace(spiky, flat)) == pytest.approx(d / r)
    assert incoherence(LowRankFactors.zeros((5, 4))) == 0.0


def test_incoherence_of_random_subspace_is_moderate():
    rng = np.random.default_rng(6)
    values = []
    for _ in range(20):
        T = random_tangent(rng, 500, 500, 5)
        values.append(incoherence(T))
    assert 1.0 <= min(values) and max(values) <= 3 * np.log(500)


def test_alpha_sparsity_examples():
    S = SparsePerturbation([0, 0, 2], [0, 3, 3], [1.0, 1.0, 1.0], (4, 4))
    assert alpha_sparsity(S) == pytest.approx(0.5)
    assert alpha_sparsity(SparsePerturbation([0], [0], [0.0], (4, 4))) == 0.0
    wide = SparsePerturbation([0, 1], [5, 5], [1.0, 1.0], (2, 10))
    assert alpha_sparsity(wide) == pytest.approx(1.0)


# ----------------------------------------------------------------------------
# isometry and orthogonality constants


def test_rip_zero_under_full_sampling():
    rng = np.random.default_rng(7)
    T = random_tangent(rng, 12, 10, 2)
    assert estimate_rip(full((12, 10), ObservationKind.EntrySampling), T) <= 1e-12


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_rip_matches_dense_operator_norm(seed):
    rng = np.random.default_rng(seed)
    obs = sampled(rng, (20, 15), 0.5)
    T = random_tangent(rng, 20, 15, 2)
    expected = dense_rip(obs.mask, T.U, T.V)
    got = estimate_rip(obs, T, trials=3, seed=seed, max_iter=5000, rtol=1e-13)
    assert got == pytest.approx(expected, abs=1e-6)
    assert got <= expected * (1 + 1e-9)


def test_rip_scales_with_step():
    rng = np.random.default_rng(8)
    obs = sampled(rng, (20, 15), 0.5)
    T = random_tangent(rng, 20, 15, 2)
    got = estimate_rip(obs, T, tau_L=0.5, trials=3, max_iter=5000, rtol=1e-13)
    assert got == pytest.approx(dense_rip(obs.mask, T.U, T.V, tau=0.5), abs=1e-6)


def test_sparse_rip_identity_model():
    rng = np.random.default_rng(9)
    obs = sampled(rng, (8, 6), 0.5, ObservationKind.Identity)
    assert estimate_rip_sparse(obs, np.arange(5)) == pytest.approx(0.0, abs=1e-14)
    assert estimate_rip_sparse(obs, np.arange(5), tau_s=0.5) == pytest.approx(0.5)
    assert estimate_rip_sparse(sampled(rng, (8, 6), 0.5), np.arange(3)) == 0.0


def test_sparse_rip_generic_model_matches_dense():
    rng = np.random.default_rng(10)
    obs = sampled(rng, (8, 6), 0.5, ObservationKind.GenericDense, d_s=10)
    support = np.array([1, 4, 7])
    A = obs.A_s[:, support]
    expected = np.linalg.norm(obs.sparse_scale * A.T @ A - np.eye(3), 2)
    assert estimate_rip_sparse(obs, support, max_iter=5000, rtol=1e-14) == pytest.approx(expected, rel=1e-7)


def test_rop_empty_support_is_zero():
    rng = np.random.default_rng(11)
    obs = full((8, 6))
    T = random_tangent(rng, 8, 6, 2)
    assert estimate_rop(obs, T, np.zeros(obs.n, dtype=bool)) == 0.0


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_rop_matches_dense_full_observation(seed):
    rng = np.random.default_rng(seed)
    obs = full((10, 8))
    T = random_tangent(rng, 10, 8, 2)
    omega = rng.random(obs.n) < 0.15
    expected = dense_rop_full(T.U, T.V, omega.reshape(10, 8))
    got = estimate_rop(obs, T, omega, seed=seed, max_iter=5000, rtol=1e-14)
    assert got == pytest.approx(expected, abs=1e-6)

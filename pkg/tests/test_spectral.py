import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from apgd import ConfigurationError, LowRankFactors, RegularizerSpec, SparsePerturbation, frobenius_distance, lazy_rank_truncation, lrssvd, prox_vector, spectral_prox, weak_convexity
from apgd.spectral import fix_signs

from oracles import matrix_prox_oracle


def random_factors(rng, d1, d2, r, spread=(1.0, 10.0)):
    U, _ = np.linalg.qr(rng.standard_normal((d1, r)))
    V, _ = np.linalg.qr(rng.standard_normal((d2, r)))
    S = np.sort(rng.uniform(*spread, r))[::-1]
    return LowRankFactors(U, S, V)


def random_sparse(rng, shape, density, scale=1.0):
    d1, d2 = shape
    k = int(round(density * d1 * d2))
    cells = rng.choice(d1 * d2, k, replace=False)
    return SparsePerturbation(cells // d2, cells % d2, scale * rng.standard_normal(k), shape)


# ----------------------------------------------------------------------------
# containers


def test_factors_reject_rank_mismatch():
    with pytest.raises(ValueError):
        LowRankFactors(np.zeros((4, 2)), np.zeros(3), np.zeros((3, 2)))


def test_factor_invariants_checked():
    rng = np.random.default_rng(0)
    lr = random_factors(rng, 9, 7, 3)
    lr.check()
    with pytest.raises(ValueError):
        LowRankFactors(lr.U * 2, lr.S, lr.V).check()
    with pytest.raises(ValueError):
        LowRankFactors(lr.U, lr.S[::-1], lr.V).check()


def test_from_dense_round_trip_and_entries():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((8, 3)) @ rng.standard_normal((3, 6))
    lr = LowRankFactors.from_dense(X, tol=1e-10)
    assert lr.rank == 3
    assert np.allclose(lr.to_dense(), X, atol=1e-12)
    rows, cols = np.array([0, 7, 3]), np.array([5, 0, 2])
    assert np.allclose(lr.entries(rows, cols), X[rows, cols], atol=1e-12)


def test_zero_factors():
    z = LowRankFactors.zeros((5, 4))
    assert z.rank == 0 and z.shape == (5, 4)
    assert np.array_equal(z.to_dense(), np.zeros((5, 4)))
    assert np.array_equal(z.entries(np.array([1]), np.array([2])), [0.0])


def test_sparse_perturbation_validation():
    with pytest.raises(ValueError):
        SparsePerturbation([0, 0], [1, 1], [1.0, 2.0], (3, 3))
    with pytest.raises(ValueError):
        SparsePerturbation([3], [0], [1.0], (3, 3))
    with pytest.raises(ValueError):
        SparsePerturbation([0, 1], [0], [1.0, 2.0], (3, 3))
    S = SparsePerturbation([0, 2], [1, 0], [1.5, -2.0], (3, 2))
    assert S.nnz == 2
    assert np.array_equal(S.to_dense(), [[0, 1.5], [0, 0], [-2.0, 0]])


def test_sign_convention():
    rng = np.random.default_rng(2)
    U, _ = np.linalg.qr(rng.standard_normal((6, 3)))
    V, _ = np.linalg.qr(rng.standard_normal((5, 3)))
    U2, V2 = fix_signs(-U, -V)
    first = U2[np.argmax(np.abs(U2) > 0, axis=0), np.arange(3)]
    assert np.all(first >= 0)
    assert np.allclose(U2 @ V2.T, U @ V.T)


def test_frobenius_distance_matches_dense():
    rng = np.random.default_rng(3)
    A = random_factors(rng, 30, 20, 4)
    B = random_factors(rng, 30, 20, 6)
    expected = np.linalg.norm(A.to_dense() - B.to_dense())
    assert frobenius_distance(A, B) == pytest.approx(expected, rel=1e-12)
    assert frobenius_distance(A, A) <= 1e-12 * A.frobenius_norm()
    assert frobenius_distance(LowRankFactors.zeros((30, 20)), LowRankFactors.zeros((30, 20))) == 0.0


# ----------------------------------------------------------------------------
# low-rank plus sparse SVD


def test_lrssvd_without_perturbation_returns_input():
    rng = np.random.default_rng(4)
    lr = random_factors(rng, 40, 30, 5)
    res = lrssvd(lr, SparsePerturbation.empty(lr.shape), 5, inner_iters=5)
    assert np.allclose(res.factors.S, lr.S, rtol=1e-12)
    assert np.allclose(res.factors.to_dense(), lr.to_dense(), atol=1e-10)
    assert res.converged


def test_lrssvd_top_values_match_dense_svd():
    rng = np.random.default_rng(5)
    lr = random_factors(rng, 100, 80, 5)
    Y = random_sparse(rng, (100, 80), 0.02)
    res = lrssvd(lr, Y, 8, inner_iters=200, tol=1e-14)
    dense = np.linalg.svd(lr.to_dense() + Y.to_dense(), compute_uv=False)[:8]
    assert np.max(np.abs(res.factors.S - dense) / dense) <= 1e-8
    res.factors.check()


def test_lrssvd_is_near_eckart_young_optimal():
    rng = np.random.default_rng(6)
    for _ in range(5):
        lr = random_factors(rng, 50, 40, 4)
        Y = random_sparse(rng, (50, 40), 0.05, scale=2.0)
        A = lr.to_dense() + Y.to_dense()
        res = lrssvd(lr, Y, 6, inner_iters=100, tol=1e-13)
        U, S, Vt = np.linalg.svd(A)
        best = np.linalg.norm(A - (U[:, :6] * S[:6]) @ Vt[:6])
        assert np.linalg.norm(A - res.factors.to_dense()) <= best * (1 + 1e-6)


def test_lrssvd_singular_vectors_match_dense_up_to_sign():
    rng = np.random.default_rng(7)
    lr = random_factors(rng, 60, 45, 4, spread=(5.0, 20.0))
    Y = random_sparse(rng, (60, 45), 0.03, scale=0.5)
    A = lr.to_dense() + Y.to_dense()
    U, S, Vt = np.linalg.svd(A)
    assert np.min(-np.diff(S[:5])) > 1e-3
    res = lrssvd(lr, Y, 4, inner_iters=300, tol=1e-14)
    for i in range(4):
        cos_u = abs(U[:, i] @ res.factors.U[:, i])
        cos_v = abs(Vt[i] @ res.factors.V[:, i])
        assert np.arccos(min(cos_u, 1.0)) <= 1e-6
        assert np.arccos(min(cos_v, 1.0)) <= 1e-6


def test_lrssvd_flags_nonconvergence_and_returns_best_iterate():
    rng = np.random.default_rng(8)
    lr = random_factors(rng, 60, 50, 3)
    Y = random_sparse(rng, (60, 50), 0.3, scale=5.0)
    res = lrssvd(lr, Y, 5, inner_iters=1, tol=1e-15)
    assert not res.converged and res.sweeps == 1
    assert res.factors.rank == 5
    res.factors.check()


def test_lrssvd_warm_start_converges_faster():
    rng = np.random.default_rng(9)
    lr = random_factors(rng, 80, 60, 5)
    Y = random_sparse(rng, (80, 60), 0.02, scale=0.1)
    cold = lrssvd(LowRankFactors.zeros(lr.shape), SparsePerturbation(Y.rows, Y.cols, Y.vals, Y.shape), 5,
                  inner_iters=200, tol=1e-11, v0=rng.standard_normal((60, 10)))
    warm = lrssvd(lr, Y, 5, inner_iters=200, tol=1e-11)
    assert warm.converged and warm.sweeps <= cold.sweeps


def test_lrssvd_argument_errors():
    lr = LowRankFactors.zeros((5, 4))
    with pytest.raises(ValueError):
        lrssvd(lr, SparsePerturbation.empty((4, 5)), 2)
    with pytest.raises(ConfigurationError):
        lrssvd(lr, SparsePerturbation.empty((5, 4)), 0)
    with pytest.raises(ConfigurationError):
        lrssvd(lr, SparsePerturbation.empty((5, 4)), 2, inner_iters=0)


# ----------------------------------------------------------------------------
# spectral prox


def test_spectral_prox_l1_example():
    U = np.eye(4)[:, :3]
    V = np.eye(3)
    lr = LowRankFactors(U, np.array([3.0, 1.0, 0.2]), V)
    out = spectral_prox(lr, RegularizerSpec("L1"), 0.5)
    assert np.array_equal(out.S, [2.5, 0.5])
    assert out.rank == 2
    assert np.array_equal(out.U, U[:, :2])


def test_spectral_prox_identity_past_the_knee():
    rng = np.random.default_rng(10)
    lr = random_factors(rng, 10, 8, 3, spread=(5.0, 9.0))
    out = spectral_prox(lr, RegularizerSpec("MCP", 4.0), 1.0)
    assert np.array_equal(out.S, lr.S)
    assert np.array_equal(out.U, lr.U) and np.array_equal(out.V, lr.V)


def test_spectral_prox_rejects_bad_step():
    lr = LowRankFactors(np.eye(3)[:, :1], np.array([1.0]), np.eye(3)[:, :1])
    with pytest.raises(ConfigurationError):
        spectral_prox(lr, RegularizerSpec("MCP", 1.0), 1.5)


@pytest.mark.parametrize("family", ["L1", "MCP", "SCAD", "CappedL1"])
def test_spectral_prox_matches_direct_minimization(family):
    rng = np.random.default_rng(12)
    for _ in range(3):
        Y = rng.standard_normal((6, 5)) * rng.uniform(0.5, 3.0)
        gamma = rng.uniform(2.05, 6.0) if family == "SCAD" else rng.uniform(0.5, 5.0)
        spec = RegularizerSpec(family, gamma)
        nu = weak_convexity(spec)
        theta = rng.uniform(0.05, 0.9) / nu if nu else rng.uniform(0.05, 3.0)
        X = spectral_prox(LowRankFactors.from_dense(Y), spec, theta).to_dense()
        ref, _ = matrix_prox_oracle(family, gamma, theta, Y)
        assert np.linalg.norm(X - ref) <= 1e-6


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["L1", "MCP", "SCAD"]), st.floats(0.05, 0.9))
def test_spectral_prox_lipschitz_bound(seed, family, frac):
    rng = np.random.default_rng(seed)
    spec = RegularizerSpec(family, 3.0)
    nu = weak_convexity(spec)
    step = frac / nu if nu else frac * 3
    A = rng.standard_normal((7, 5)) * 3
    B = A + rng.standard_normal((7, 5)) * rng.uniform(0.01, 2)
    PA = spectral_prox(LowRankFactors.from_dense(A), spec, step).to_dense()
    PB = spectral_prox(LowRankFactors.from_dense(B), spec, step).to_dense()
    c = 1.0 / (1.0 - nu * step)
    assert np.linalg.norm(PA - PB) <= c * np.linalg.norm(A - B) * (1 + 1e-9)


# ----------------------------------------------------------------------------
# lazy truncation


def test_lazy_truncation_examples():
    assert lazy_rank_truncation([5.0, 3.0, 0.1], 0.5) == 2
    assert lazy_rank_truncation([0.4, 0.3], 0.5) == 0
    assert lazy_rank_truncation([], 0.5) == 0


def test_lazy_truncation_stops_at_first_small_value():
    calls = []

    def stream():
        for v in (4.0, 2.0, 0.1, 9.0):
            calls.append(v)
            yield v

    assert lazy_rank_truncation(stream(), 1.0) == 2
    assert calls == [4.0, 2.0, 0.1]


@pytest.mark.parametrize("family", ["L1", "MCP", "SCAD"])
def test_lazy_truncation_agrees_with_prox_count(family):
    rng = np.random.default_rng(13)
    spec = RegularizerSpec(family, 3.0)
    for _ in range(100):
        spectrum = np.sort(rng.exponential(2.0, 12))[::-1]
        step = rng.uniform(0.1, 1.5)
        _, support = prox_vector(spec, spectrum, step)
        assert lazy_rank_truncation(spectrum, step * spec.weight) == int(support.sum())

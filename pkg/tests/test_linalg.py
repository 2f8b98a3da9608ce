import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcland.linalg import (
    ObservationMask,
    empty_mask,
    full_mask,
    matrix_norms,
    procrustes_align,
    project_mask,
    singular_extremes,
    spectral_norm,
)


def random_orthonormal(n, rng):
    return np.linalg.qr(rng.normal(size=(n, n)))[0]


# ---------------------------------------------------------------------------
# ObservationMask


def test_mask_requires_symmetry():
    with pytest.raises(ValueError):
        ObservationMask(d=3, rows=np.array([0]), cols=np.array([1]), p=0.5)


def test_mask_rejects_duplicates():
    with pytest.raises(ValueError):
        ObservationMask(
            d=3, rows=np.array([0, 1, 0, 1]), cols=np.array([1, 0, 1, 0]), p=0.5
        )


def test_mask_rejects_out_of_range():
    with pytest.raises(ValueError):
        ObservationMask(d=3, rows=np.array([3]), cols=np.array([3]), p=0.5)


def test_mask_counts():
    m = full_mask(4, include_diagonal=True)
    assert m.n_pairs == 16
    assert m.n_unordered == 10
    assert m.has_diagonal
    m2 = full_mask(4, include_diagonal=False)
    assert m2.n_pairs == 12
    assert not m2.has_diagonal
    assert empty_mask(4).n_pairs == 0


# ---------------------------------------------------------------------------
# project_mask


def test_project_full_mask_is_identity(rng):
    A = rng.normal(size=(5, 5))
    assert np.array_equal(project_mask(A, full_mask(5, include_diagonal=True)), A)


def test_project_empty_mask_annihilates(rng):
    A = rng.normal(size=(4, 4))
    assert np.array_equal(project_mask(A, empty_mask(4)), np.zeros((4, 4)))


def test_project_single_pair():
    A = np.arange(9, dtype=float).reshape(3, 3)
    mask = ObservationMask(d=3, rows=np.array([0, 1]), cols=np.array([1, 0]), p=0.1)
    out = project_mask(A, mask)
    expected = np.zeros((3, 3))
    expected[0, 1] = A[0, 1]
    expected[1, 0] = A[1, 0]
    assert np.array_equal(out, expected)


def test_project_dimension_mismatch(rng):
    with pytest.raises(ValueError):
        project_mask(rng.normal(size=(4, 4)), full_mask(5, include_diagonal=True))
    with pytest.raises(ValueError):
        project_mask(rng.normal(size=(4, 5)), full_mask(4, include_diagonal=True))


def test_project_idempotent(rng):
    A = rng.normal(size=(6, 6))
    from mcland.instance import sample_mask

    mask = sample_mask(6, 0.5, True, seed=3)
    once = project_mask(A, mask)
    assert np.array_equal(project_mask(once, mask), once)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), a=st.floats(-5, 5), b=st.floats(-5, 5))
def test_project_exactly_linear(seed, a, b):
    from mcland.instance import sample_mask

    gen = np.random.default_rng(seed)
    A = gen.normal(size=(5, 5))
    B = gen.normal(size=(5, 5))
    mask = sample_mask(5, 0.4, True, seed=seed)
    lhs = project_mask(a * A + b * B, mask)
    rhs = a * project_mask(A, mask) + b * project_mask(B, mask)
    assert np.array_equal(lhs, rhs)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_project_contracts_frobenius(seed):
    from mcland.instance import sample_mask

    gen = np.random.default_rng(seed)
    A = gen.normal(size=(7, 7))
    mask = sample_mask(7, 0.3, True, seed=seed)
    assert np.linalg.norm(project_mask(A, mask)) <= np.linalg.norm(A) + 1e-15


# ---------------------------------------------------------------------------
# norms


def test_norms_identity():
    n = matrix_norms(np.eye(3))
    assert n.fro == pytest.approx(np.sqrt(3.0), abs=1e-12)
    assert n.spectral == pytest.approx(1.0, abs=1e-10)
    assert n.two_to_inf == pytest.approx(1.0, abs=1e-12)
    assert n.elem_inf == 1.0


def test_norms_all_ones():
    n = matrix_norms(np.ones((2, 2)))
    assert n.fro == pytest.approx(2.0, abs=1e-12)
    assert n.spectral == pytest.approx(2.0, abs=1e-10)
    assert n.two_to_inf == pytest.approx(np.sqrt(2.0), abs=1e-12)
    assert n.elem_inf == 1.0


def test_norms_zero_matrix():
    n = matrix_norms(np.zeros((3, 4)))
    assert (n.fro, n.spectral, n.two_to_inf, n.elem_inf) == (0.0, 0.0, 0.0, 0.0)


def test_spectral_matches_dense_oracle(rng):
    A = rng.normal(size=(20, 20))
    dense = np.sqrt(np.max(np.linalg.eigvalsh(A.T @ A)))
    assert spectral_norm(A) == pytest.approx(dense, abs=1e-8)


def test_norm_ordering(rng):
    for _ in range(10):
        A = rng.normal(size=(8, 6)) * rng.uniform(0.1, 10)
        n = matrix_norms(A)
        assert n.elem_inf <= n.two_to_inf + 1e-12
        assert n.two_to_inf <= n.fro + 1e-12
        assert n.spectral <= n.fro + 1e-9


# ---------------------------------------------------------------------------
# singular extremes


def test_singular_orthonormal_columns(rng):
    Q = np.linalg.qr(rng.normal(size=(8, 3)))[0]
    s = singular_extremes(Q)
    assert s.sigma_max == pytest.approx(1.0, abs=1e-10)
    assert s.sigma_min == pytest.approx(1.0, abs=1e-10)


def test_singular_diagonal_case():
    X = np.zeros((4, 2))
    X[0, 0] = 3.0
    X[1, 1] = 1.0
    s = singular_extremes(X)
    assert s.sigma_max == pytest.approx(3.0, abs=1e-12)
    assert s.sigma_min == pytest.approx(1.0, abs=1e-12)


def test_singular_matches_dense_oracle(rng):
    X = rng.normal(size=(50, 3))
    sv = np.linalg.svd(X, compute_uv=False)
    s = singular_extremes(X)
    assert s.sigma_max == pytest.approx(sv[0], abs=1e-10)
    assert s.sigma_min == pytest.approx(sv[-1], abs=1e-10)


# ---------------------------------------------------------------------------
# procrustes


def test_procrustes_self_alignment(rng):
    Z = rng.normal(size=(10, 2))
    res = procrustes_align(Z, Z)
    assert np.allclose(res.rotation, np.eye(2), atol=1e-10)
    assert res.residual <= 1e-10


def test_procrustes_recovers_rotation(rng):
    Z = rng.normal(size=(10, 3))
    R0 = random_orthonormal(3, rng)
    res = procrustes_align(Z @ R0, Z)
    assert res.residual <= 1e-10
    assert np.allclose(res.rotation, R0, atol=1e-10)


def test_procrustes_beats_sampled_rotations(rng):
    X = rng.normal(size=(10, 2))
    Z = rng.normal(size=(10, 2))
    res = procrustes_align(X, Z)
    gen = np.random.default_rng(99)
    for _ in range(10000):
        Q = np.linalg.qr(gen.normal(size=(2, 2)))[0]
        assert res.residual <= np.linalg.norm(X - Z @ Q) + 1e-10


def test_procrustes_rotation_is_orthonormal_even_rank_deficient():
    Z = np.zeros((6, 3))
    Z[:, 0] = 1.0  # rank-1 Z makes Z^T X rank deficient
    X = np.ones((6, 3))
    res = procrustes_align(X, Z)
    R = res.rotation
    assert np.allclose(R.T @ R, np.eye(3), atol=1e-10)
    assert res.residual == pytest.approx(np.linalg.norm(X - Z @ R), abs=1e-12)


def test_rotation_preserves_row_norms_and_fro(rng):
    Z = rng.normal(size=(12, 3))
    R = random_orthonormal(3, rng)
    ZR = Z @ R
    assert np.allclose(
        np.linalg.norm(ZR, axis=1), np.linalg.norm(Z, axis=1), atol=1e-12
    )
    assert np.linalg.norm(ZR) == pytest.approx(np.linalg.norm(Z), abs=1e-12)


def test_procrustes_residual_invariant_under_joint_rotation(rng):
    X = rng.normal(size=(9, 2))
    Z = rng.normal(size=(9, 2))
    Q = random_orthonormal(2, rng)
    r1 = procrustes_align(X, Z).residual
    r2 = procrustes_align(X @ Q, Z @ Q).residual
    assert r1 == pytest.approx(r2, abs=1e-10)

"""Eigensolver checks: hand-computed cases, dense self-consistency, and the
sparse iterative route cross-checked against the dense one.

The two solvers share no factorization code (Lanczos + projected small
problems on one side, Householder tridiagonalization + QL on the other), so
agreement between them is evidence, not tautology.  Degenerate spectra are
compared as subspaces because individual eigenvectors are arbitrary inside
a repeated eigenvalue's eigenspace.
"""

import numpy as np
import pytest

from fairspectral.eigen import (
    DenseLimitError,
    NoConvergenceError,
    SpectralBasis,
    basis_to_json,
    canonical_sign,
    dense_symmetric_eig,
    full_dense_eigendecomposition,
    load_basis,
    magnitude_order,
    save_basis,
    top_k_eigenpairs,
    top_k_from_dense,
)
from fairspectral.sparse import csr_from_dense

import json


def random_sparse_symmetric(rng, n, density=0.08):
    a = rng.standard_normal((n, n))
    a = a * (rng.random((n, n)) < density)
    a = (a + a.T) / 2.0
    return a


def subspace_angle(p, q):
    """Largest principal angle between the column spans, in radians."""
    s = np.linalg.svd(p.T @ q, compute_uv=False)
    return float(np.arccos(np.clip(s.min(), -1.0, 1.0)))


class TestOrderingAndSign:
    def test_magnitude_order_positive_first_on_ties(self):
        order = magnitude_order(np.array([-3.0, 1.0, 3.0, -1.0]))
        np.testing.assert_array_equal(order, [2, 0, 1, 3])

    def test_canonical_sign_flips_negative_leads(self):
        p = np.array([[0.1, -0.9], [-0.8, 0.2]])
        fixed = canonical_sign(p)
        # Column 0 led by |-0.8| at row 1, column 1 by |-0.9| at row 0.
        np.testing.assert_allclose(fixed[:, 0], [-0.1, 0.8])
        np.testing.assert_allclose(fixed[:, 1], [0.9, -0.2])

    def test_canonical_sign_tie_breaks_to_lowest_row(self):
        p = np.array([[-0.5], [0.5]])
        np.testing.assert_allclose(canonical_sign(p), [[0.5], [-0.5]])


class TestHandComputedCases:
    def test_two_by_two_exchange(self):
        a = np.array([[0.0, 1.0], [1.0, 0.0]])
        basis = top_k_eigenpairs(csr_from_dense(a), 2)
        np.testing.assert_allclose(basis.eigenvalues, [1.0, -1.0], atol=1e-12)
        r = 1.0 / np.sqrt(2.0)
        np.testing.assert_allclose(np.abs(basis.eigenvectors), r, atol=1e-10)
        # Sign convention: first maximal entry non-negative in each column.
        np.testing.assert_allclose(basis.eigenvectors[:, 0], [r, r], atol=1e-10)
        np.testing.assert_allclose(basis.eigenvectors[:, 1], [r, -r], atol=1e-10)

    def test_diagonal_top_pair(self):
        a = np.diag([3.0, 2.0, 1.0])
        basis = top_k_eigenpairs(csr_from_dense(a), 1)
        np.testing.assert_allclose(basis.eigenvalues, [3.0], atol=1e-12)
        np.testing.assert_allclose(basis.eigenvectors[:, 0], [1.0, 0.0, 0.0], atol=1e-10)

    def test_negative_dominant_ordering(self):
        basis = full_dense_eigendecomposition(np.diag([-5.0, 4.0]))
        np.testing.assert_allclose(basis.eigenvalues, [-5.0, 4.0], atol=1e-12)

    def test_all_ones_rank_one(self):
        basis = full_dense_eigendecomposition(np.ones((3, 3)))
        np.testing.assert_allclose(basis.eigenvalues, [3.0, 0.0, 0.0], atol=1e-10)


class TestDenseRoute:
    def test_reconstruction(self):
        rng = np.random.default_rng(10)
        a = random_sparse_symmetric(rng, 50, density=0.3)
        basis = full_dense_eigendecomposition(a)
        rebuilt = (basis.eigenvectors * basis.eigenvalues) @ basis.eigenvectors.T
        assert np.max(np.abs(rebuilt - a)) <= 1e-9

    def test_orthonormal_columns(self):
        rng = np.random.default_rng(11)
        a = random_sparse_symmetric(rng, 80, density=0.2)
        p = full_dense_eigendecomposition(a).eigenvectors
        assert np.max(np.abs(p.T @ p - np.eye(80))) <= 1e-10

    def test_magnitude_sorted_with_residuals(self):
        rng = np.random.default_rng(12)
        a = random_sparse_symmetric(rng, 60, density=0.2)
        basis = full_dense_eigendecomposition(a)
        mags = np.abs(basis.eigenvalues)
        assert np.all(mags[:-1] >= mags[1:] - 1e-12)
        assert np.all(basis.residuals <= 1e-9)

    def test_size_guard(self):
        with pytest.raises(DenseLimitError):
            full_dense_eigendecomposition(np.eye(21), dense_limit=20)

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            full_dense_eigendecomposition(np.ones((2, 3)))

    def test_degenerate_case_sizes(self):
        w, v = dense_symmetric_eig(np.zeros((0, 0)))
        assert w.shape == (0,) and v.shape == (0, 0)
        w, v = dense_symmetric_eig(np.array([[7.0]]))
        np.testing.assert_allclose(w, [7.0])
        np.testing.assert_allclose(v, [[1.0]])

    def test_top_k_from_dense_is_a_prefix(self):
        rng = np.random.default_rng(13)
        a = random_sparse_symmetric(rng, 40, density=0.3)
        full = full_dense_eigendecomposition(a)
        top = top_k_from_dense(a, 5)
        np.testing.assert_array_equal(top.eigenvalues, full.eigenvalues[:5])
        np.testing.assert_array_equal(top.eigenvectors, full.eigenvectors[:, :5])


class TestSparseAgainstDense:
    def test_cross_route_agreement(self):
        rng = np.random.default_rng(20)
        for n, k in ((50, 1), (120, 4), (260, 9)):
            a = random_sparse_symmetric(rng, n)
            sparse = top_k_eigenpairs(csr_from_dense(a), k, seed=int(rng.integers(1 << 30)))
            dense = full_dense_eigendecomposition(a)
            rel = np.abs(sparse.eigenvalues - dense.eigenvalues[:k]) / np.abs(dense.eigenvalues[:k])
            assert np.max(rel) <= 1e-8
            assert subspace_angle(sparse.eigenvectors, dense.eigenvectors[:, :k]) <= 1e-6

    def test_degenerate_top_cluster_as_subspace(self):
        # Top eigenvalue repeated three times; individual vectors are
        # arbitrary, the invariant subspace is not.
        rng = np.random.default_rng(21)
        q, _ = np.linalg.qr(rng.standard_normal((40, 40)))
        lam = np.concatenate([[2.0, 2.0, 2.0], rng.uniform(-1.0, 1.0, 37)])
        a = (q * lam) @ q.T
        basis = top_k_eigenpairs(csr_from_dense(a, tol=0.0), 3)
        np.testing.assert_allclose(basis.eigenvalues, 2.0, atol=1e-9)
        assert subspace_angle(basis.eigenvectors, q[:, :3]) <= 1e-6

    def test_residual_bound(self):
        rng = np.random.default_rng(22)
        a = random_sparse_symmetric(rng, 150)
        m = csr_from_dense(a)
        tol = 1e-10
        basis = top_k_eigenpairs(m, 6, tol=tol)
        bound = tol * np.maximum(1.0, np.abs(basis.eigenvalues))
        assert np.all(basis.residuals <= bound)

    def test_deterministic_per_seed(self):
        rng = np.random.default_rng(23)
        a = random_sparse_symmetric(rng, 90)
        m = csr_from_dense(a)
        b1 = top_k_eigenpairs(m, 4, seed=7)
        b2 = top_k_eigenpairs(m, 4, seed=7)
        assert b1.eigenvalues.tobytes() == b2.eigenvalues.tobytes()
        assert b1.eigenvectors.tobytes() == b2.eigenvectors.tobytes()

    def test_k_equals_n_small(self):
        rng = np.random.default_rng(24)
        a = random_sparse_symmetric(rng, 12, density=0.5)
        sparse = top_k_eigenpairs(csr_from_dense(a), 12)
        dense = full_dense_eigendecomposition(a)
        np.testing.assert_allclose(sparse.eigenvalues, dense.eigenvalues, atol=1e-9)

    def test_iteration_budget_exhaustion(self):
        rng = np.random.default_rng(25)
        a = random_sparse_symmetric(rng, 200)
        m = csr_from_dense(a)
        with pytest.raises(NoConvergenceError) as info:
            top_k_eigenpairs(m, 8, tol=1e-14, max_iter=12)
        # The best basis so far rides on the exception.
        assert info.value.basis.k == 8
        assert info.value.basis.residuals is not None

    def test_k_validation(self):
        m = csr_from_dense(np.eye(5))
        with pytest.raises(ValueError):
            top_k_eigenpairs(m, 0)
        with pytest.raises(ValueError):
            top_k_eigenpairs(m, 6)
        with pytest.raises(ValueError):
            top_k_eigenpairs(m, 2, tol=0.0)

    def test_accepts_operator_wrapper(self):
        class Wrapper:
            def __init__(self, matrix):
                self.matrix = matrix

        rng = np.random.default_rng(26)
        a = random_sparse_symmetric(rng, 30, density=0.3)
        m = csr_from_dense(a)
        b1 = top_k_eigenpairs(Wrapper(m), 2)
        b2 = top_k_eigenpairs(m, 2)
        np.testing.assert_array_equal(b1.eigenvalues, b2.eigenvalues)
        with pytest.raises(TypeError):
            top_k_eigenpairs(a, 2)


class TestBasisContainer:
    def test_shape_validation(self):
        with pytest.raises(ValueError):
            SpectralBasis(np.zeros(3), np.zeros((5, 2)))
        with pytest.raises(ValueError):
            SpectralBasis(np.zeros(2), np.zeros((5, 2)), residuals=np.zeros(3))

    def test_file_roundtrip_is_bit_exact(self, tmp_path):
        rng = np.random.default_rng(30)
        a = random_sparse_symmetric(rng, 25, density=0.4)
        basis = top_k_from_dense(a, 6)
        path = tmp_path / "basis.bin"
        save_basis(basis, path)
        loaded = load_basis(path)
        assert loaded.eigenvalues.tobytes() == basis.eigenvalues.tobytes()
        assert loaded.eigenvectors.tobytes() == basis.eigenvectors.tobytes()
        assert loaded.residuals is None

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(ValueError):
            load_basis(path)

    def test_truncated_payload_rejected(self, tmp_path):
        rng = np.random.default_rng(31)
        basis = top_k_from_dense(random_sparse_symmetric(rng, 10, density=0.5), 3)
        path = tmp_path / "basis.bin"
        save_basis(basis, path)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(ValueError):
            load_basis(path)

    def test_json_export_parses(self):
        rng = np.random.default_rng(32)
        basis = top_k_from_dense(random_sparse_symmetric(rng, 8, density=0.5), 2)
        doc = json.loads(basis_to_json(basis))
        assert doc["n"] == 8 and doc["k"] == 2
        np.testing.assert_allclose(doc["eigenvalues"], basis.eigenvalues)

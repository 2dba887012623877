import numpy as np
import pytest

from bilsyn.matrixcore import (MatrixError, inv_spd, is_pd, kron, max_eig,
                               min_eig, schur_reduce, solve_spd, symmetrize)


class TestKron:
    def test_identity(self):
        np.testing.assert_array_equal(kron(np.eye(2), np.eye(3)), np.eye(6))

    def test_scalar_scaling(self):
        out = kron([[2.0]], [[1.0, 0.0], [0.0, 3.0]])
        np.testing.assert_array_equal(out, [[2.0, 0.0], [0.0, 6.0]])

    def test_antidiagonal_blocks(self):
        # hand oracle via the index formula (i*p+k, j*q+l) = a[i,j] b[k,l]
        a = np.array([[0.0, 1.0], [1.0, 0.0]])
        b = np.array([[1.0, 2.0], [3.0, 4.0]])
        expected = np.zeros((4, 4))
        for i in range(2):
            for j in range(2):
                expected[2 * i:2 * i + 2, 2 * j:2 * j + 2] = a[i, j] * b
        np.testing.assert_array_equal(kron(a, b), expected)
        np.testing.assert_array_equal(expected[:2, 2:], b)
        np.testing.assert_array_equal(expected[:2, :2], 0.0)

    def test_mixed_product_property(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            a = rng.standard_normal((2, 3))
            b = rng.standard_normal((3, 2))
            c = rng.standard_normal((3, 2))
            d = rng.standard_normal((2, 4))
            lhs = kron(a, b) @ kron(c, d)
            rhs = kron(a @ c, b @ d)
            np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_spectral_property(self):
        # eigenvalues of kron(a, b) are all pairwise products for symmetric a, b
        rng = np.random.default_rng(1)
        for _ in range(20):
            a = rng.standard_normal((3, 3))
            a = a + a.T
            b = rng.standard_normal((2, 2))
            b = b + b.T
            ev = np.linalg.eigvalsh(kron(a, b))
            pairwise = np.sort([la * mu for la in np.linalg.eigvalsh(a)
                                for mu in np.linalg.eigvalsh(b)])
            np.testing.assert_allclose(np.sort(ev), pairwise, atol=1e-10)


class TestEig:
    def test_identity(self):
        assert min_eig(np.eye(3)) == pytest.approx(1.0)

    def test_diag(self):
        assert min_eig(np.diag([-1.0, 5.0])) == pytest.approx(-1.0)

    def test_char_poly_oracle(self):
        # [[2,1],[1,2]]: det(M - t I) = (2-t)^2 - 1, roots 1 and 3
        assert min_eig([[2.0, 1.0], [1.0, 2.0]]) == pytest.approx(1.0)
        assert max_eig([[2.0, 1.0], [1.0, 2.0]]) == pytest.approx(3.0)

    def test_rejects_asymmetric(self):
        with pytest.raises(MatrixError):
            min_eig([[0.0, 1.0], [0.0, 0.0]])

    def test_symmetrize_roundoff_ok(self):
        m = np.array([[1.0, 1e-14], [0.0, 1.0]])
        out = symmetrize(m)
        np.testing.assert_allclose(out, out.T)


class TestIsPd:
    def test_identity(self):
        assert is_pd(np.eye(2), 0.0)

    def test_zero(self):
        assert not is_pd(np.zeros((2, 2)), 0.0)

    def test_below_margin(self):
        assert not is_pd([[1e-9]], 1e-8)

    def test_negative_margin_rejected(self):
        with pytest.raises(MatrixError):
            is_pd(np.eye(2), -1.0)

    def test_principal_submatrices(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            a = rng.standard_normal((4, 4))
            m = a @ a.T + 0.1 * np.eye(4)
            assert is_pd(m, 0.0)
            for k in range(1, 4):
                assert is_pd(m[:k, :k], 0.0)


class TestSchurReduce:
    def test_block_diagonal(self):
        np.testing.assert_allclose(schur_reduce([[2.0, 0.0], [0.0, 1.0]], 1), [[2.0]])

    def test_hand_value(self):
        # 5 - 2 * 1 * 2 = 1
        np.testing.assert_allclose(schur_reduce([[5.0, 2.0], [2.0, 1.0]], 1), [[1.0]])

    def test_identity_split(self):
        np.testing.assert_allclose(schur_reduce(np.eye(3), 1), [[1.0]])

    def test_singular_trailing_block(self):
        with pytest.raises(MatrixError):
            schur_reduce([[1.0, 1.0], [1.0, 0.0]], 1)

    def test_pd_equivalence(self):
        # with trailing block PD: M PD  <=>  schur complement PD
        rng = np.random.default_rng(3)
        for _ in range(50):
            a = rng.standard_normal((4, 4))
            m = a @ a.T + rng.uniform(-0.3, 0.5) * np.eye(4)
            split = int(rng.integers(1, 4))
            if min_eig(m[split:, split:]) <= 1e-9:
                continue
            assert is_pd(m, 0.0) == is_pd(schur_reduce(m, split), 0.0)


class TestSolveSpd:
    def test_identity(self):
        np.testing.assert_allclose(solve_spd(np.eye(2), [[3.0], [4.0]]), [[3.0], [4.0]])

    def test_diag(self):
        np.testing.assert_allclose(solve_spd(np.diag([2.0, 4.0]), [[2.0], [4.0]]),
                                   [[1.0], [1.0]])

    def test_substitute_back(self):
        np.testing.assert_allclose(solve_spd([[4.0, 1.0], [1.0, 3.0]], [[5.0], [4.0]]),
                                   [[1.0], [1.0]])

    def test_not_pd(self):
        with pytest.raises(MatrixError):
            solve_spd([[0.0, 0.0], [0.0, 1.0]], [[1.0], [1.0]])

    def test_inv_spd(self):
        rng = np.random.default_rng(4)
        a = rng.standard_normal((3, 3))
        m = a @ a.T + np.eye(3)
        np.testing.assert_allclose(inv_spd(m) @ m, np.eye(3), atol=1e-10)

import numpy as np
import pytest
import scipy.linalg

from gvisid.trimat import (
    chol_vjp, expm_tril, expm_tril_vjp, logm_tril, matl, tria, vech, vech_len,
)


class TestVechMatl:
    def test_2x2_definition(self):
        L = np.array([[1.0, 0.0], [2.0, 3.0]])
        np.testing.assert_array_equal(vech(L), [1.0, 2.0, 3.0])

    def test_scalar(self):
        np.testing.assert_array_equal(vech(np.array([[5.0]])), [5.0])

    def test_matl_inverse(self):
        np.testing.assert_array_equal(matl([1.0, 2.0, 3.0]), [[1.0, 0.0], [2.0, 3.0]])
        np.testing.assert_array_equal(matl([0.0, 0.0, 0.0]), np.zeros((2, 2)))
        np.testing.assert_array_equal(matl([4.0]), [[4.0]])

    def test_round_trips(self):
        rng = np.random.default_rng(0)
        for n in range(1, 7):
            L = np.tril(rng.standard_normal((n, n)))
            np.testing.assert_array_equal(matl(vech(L)), L)
            v = rng.standard_normal(vech_len(n))
            np.testing.assert_array_equal(vech(matl(v)), v)

    def test_bad_length_rejected(self):
        with pytest.raises(ValueError):
            matl([1.0, 2.0])

    def test_batched(self):
        rng = np.random.default_rng(1)
        L = np.tril(rng.standard_normal((4, 3, 3)))
        np.testing.assert_array_equal(matl(vech(L)), L)


class TestTria:
    def test_row_vector(self):
        # S S^T must equal 3^2 + 4^2 = 25.
        np.testing.assert_allclose(tria(np.array([[3.0, 4.0]])), [[5.0]])

    def test_identity_fixed_point(self):
        np.testing.assert_allclose(tria(np.eye(2)), np.eye(2), atol=1e-15)

    def test_product_property_random(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            n = rng.integers(1, 9)
            m = rng.integers(n, 9)
            M = rng.standard_normal((n, m))
            S = tria(M)
            assert np.allclose(np.triu(S, 1), 0.0)
            assert np.all(np.diagonal(S) >= 0.0)
            err = np.linalg.norm(S @ S.T - M @ M.T) / np.linalg.norm(M @ M.T)
            assert err <= 1e-10

    def test_tall_rejected(self):
        with pytest.raises(ValueError):
            tria(np.zeros((3, 2)))


class TestExpmTril:
    def test_zero_to_identity(self):
        np.testing.assert_allclose(expm_tril(np.zeros((3, 3))), np.eye(3), atol=1e-15)

    def test_diagonal(self):
        L = np.diag([np.log(2.0), np.log(3.0)])
        np.testing.assert_allclose(expm_tril(L), np.diag([2.0, 3.0]), rtol=1e-14)

    def test_nilpotent_truncates(self):
        L = np.array([[0.0, 0.0], [1.0, 0.0]])
        np.testing.assert_allclose(expm_tril(L), [[1.0, 0.0], [1.0, 1.0]], rtol=1e-14)

    def test_det_trace_identity_and_positive_diag(self):
        rng = np.random.default_rng(3)
        for _ in range(300):
            n = rng.integers(1, 9)
            L = np.tril(rng.standard_normal((n, n)) * rng.uniform(0.1, 2.0))
            E = expm_tril(L)
            assert np.all(np.diagonal(E) > 0.0)
            det = np.prod(np.diagonal(E))
            ref = np.exp(np.trace(L))
            assert abs(det - ref) <= 1e-10 * abs(ref)

    def test_matches_scipy(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            n = rng.integers(1, 7)
            L = np.tril(rng.standard_normal((n, n)))
            np.testing.assert_allclose(expm_tril(L), np.tril(scipy.linalg.expm(L)),
                                       rtol=1e-12, atol=1e-13)

    def test_batched_matches_loop(self):
        rng = np.random.default_rng(5)
        L = np.tril(rng.standard_normal((6, 4, 4)))
        batched = expm_tril(L)
        for i in range(6):
            np.testing.assert_allclose(batched[i], expm_tril(L[i]), rtol=1e-13)

    def test_logm_inverse(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            n = rng.integers(1, 6)
            L = np.tril(rng.standard_normal((n, n)))
            S = expm_tril(L)
            np.testing.assert_allclose(logm_tril(S), L, rtol=1e-9, atol=1e-10)


def _fd_grad(f, X, h=1e-6):
    g = np.zeros_like(X)
    it = np.nditer(X, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        Xp = X.copy(); Xp[idx] += h
        Xm = X.copy(); Xm[idx] -= h
        g[idx] = (f(Xp) - f(Xm)) / (2 * h)
    return g


class TestAdjoints:
    def test_expm_tril_vjp_matches_fd(self):
        rng = np.random.default_rng(7)
        for n in (1, 2, 4):
            L = np.tril(rng.standard_normal((n, n)))
            W = np.tril(rng.standard_normal((n, n)))

            def loss(Lx):
                return float(np.sum(W * expm_tril(Lx)))

            got = expm_tril_vjp(L, W)
            np.testing.assert_allclose(got, np.tril(_fd_grad(loss, L)),
                                       rtol=1e-6, atol=1e-8)

    def test_chol_vjp_matches_fd(self):
        rng = np.random.default_rng(8)
        for n in (1, 2, 4):
            A = rng.standard_normal((n, n + 2))
            Sig = A @ A.T + 0.5 * np.eye(n)
            W = np.tril(rng.standard_normal((n, n)))

            def loss(S):
                return float(np.sum(W * np.linalg.cholesky(S)))

            L = np.linalg.cholesky(Sig)
            got = chol_vjp(L, W)
            fd = _fd_grad(loss, Sig)
            # the fd loss treats Sigma entries independently; symmetrize
            np.testing.assert_allclose(got, 0.5 * (fd + fd.T), rtol=1e-6, atol=1e-8)

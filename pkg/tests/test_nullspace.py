from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conslaw.errors import NumericalError, ValidationError
from conslaw.library import LibrarySpec, eval_gamma, expand
from conslaw.nullspace import (analyze, bounds, cai_bound, cutoff_from_noise, orthonormal_basis,
                               subspace_distance)


def rational_null_space(M):
    """Null space basis of an integer matrix by exact Gauss-Jordan elimination."""
    A = [[Fraction(int(v)) for v in row] for row in M]
    rows, cols = len(A), len(A[0])
    pivots, r = [], 0
    for c in range(cols):
        k = next((i for i in range(r, rows) if A[i][c] != 0), None)
        if k is None:
            continue
        A[r], A[k] = A[k], A[r]
        A[r] = [v / A[r][c] for v in A[r]]
        for i in range(rows):
            if i != r and A[i][c] != 0:
                A[i] = [a - A[i][c] * b for a, b in zip(A[i], A[r])]
        pivots.append(c)
        r += 1
    basis = []
    for free in (c for c in range(cols) if c not in pivots):
        v = [Fraction(0)] * cols
        v[free] = Fraction(1)
        for i, c in enumerate(pivots):
            v[c] = -A[i][free]
        basis.append([float(x) for x in v])
    return np.array(basis).T


class TestAnalyze:
    def test_identity(self):
        a = analyze(np.eye(3), 0.5)
        np.testing.assert_array_equal(a.singular_values, [1, 1, 1])
        assert a.count == 0 and a.delta is None

    def test_diagonal(self):
        a = analyze(np.diag([2.0, 1e-12]), 1e-6)
        assert a.count == 1
        assert a.delta == pytest.approx(2 - 1e-12, rel=1e-15)
        np.testing.assert_array_equal(a.null_vectors[:, 0], [0, 1])

    def test_everything_below_cutoff_has_no_gap(self):
        a = analyze(np.full((3, 2), 1e-13), 1e-10)
        assert a.count == 2 and a.delta is None

    def test_volpert_gap(self, clean_run):
        s = clean_run("volpert", 20)
        a = analyze(eval_gamma(expand(LibrarySpec(1), 3), s.states, s.derivatives), 1e-10)
        assert a.count == 1
        assert abs(a.delta - 4.0579) <= 0.05 * 4.0579
        assert a.residuals[0] <= 2.1789e-13
        v = a.null_vectors[:, 0]
        np.testing.assert_allclose(v, np.full(3, 1 / np.sqrt(3)), atol=1e-10)

    def test_sign_normalisation(self):
        a = analyze(np.array([[1.0, 1.0], [1.0, 1.0]]), 1e-8)
        V = a.right_vectors
        idx = np.argmax(np.abs(V), axis=0)
        assert np.all(V[idx, range(2)] > 0)

    def test_errors(self):
        with pytest.raises(ValidationError):
            analyze(np.zeros((0, 3)), 1.0)
        with pytest.raises(ValidationError):
            analyze(np.eye(2), -1.0)
        with pytest.raises(NumericalError):
            analyze(np.array([[1.0, np.nan]]), 1.0)

    @given(st.integers(1, 12), st.integers(1, 6), st.integers(0, 2**32 - 1))
    def test_decomposition_contract(self, N, p, seed):
        rng = np.random.default_rng(seed)
        G = rng.normal(size=(N, p)) * 10.0 ** rng.uniform(-3, 3)
        cutoff = float(np.median(np.abs(G)))
        a = analyze(G, cutoff)
        s, V = a.singular_values, a.right_vectors
        assert s.shape == (min(N, p),) and np.all(np.diff(s) <= 0) and np.all(s >= 0)
        np.testing.assert_allclose(V.T @ V, np.eye(p), atol=1e-10)
        # G V = U S: columns orthogonal with norms equal to the singular values
        GV = G @ V
        full = np.zeros(p)
        full[:s.size] = s
        gram = GV.T @ GV
        assert np.abs(gram - np.diag(full ** 2)).max() <= 1e-10 * s[0] ** 2
        assert np.linalg.norm(GV @ V.T - G, 2) <= 1e-10 * np.linalg.norm(G, 2)
        assert a.count == int(np.sum(s < cutoff))
        for j, r in zip(a.null_indices, a.residuals):
            assert abs(np.linalg.norm(G @ V[:, j]) - s[j]) <= 1e-10 * max(1.0, s[0])
            assert r == pytest.approx(np.linalg.norm(G @ V[:, j]), abs=1e-12 * max(1.0, s[0]))
        if a.count and a.null_indices[0] > 0:
            j = a.null_indices[0]
            assert a.delta == s[j - 1] - s[j]

    @given(st.integers(2, 4), st.integers(0, 2**32 - 1))
    def test_matches_rational_elimination(self, p, seed):
        rng = np.random.default_rng(seed)
        rank = int(rng.integers(1, p))
        M = rng.integers(-4, 5, size=(8, rank)) @ rng.integers(-4, 5, size=(rank, p))
        exact = rational_null_space(M)
        if exact.size == 0:
            return
        a = analyze(M.astype(float), 1e-8 * max(1.0, np.abs(M).max()))
        assert a.count == exact.shape[1]
        assert subspace_distance(a.null_vectors, orthonormal_basis(exact)) < 1e-10


class TestCutoff:
    def test_known_values(self):
        assert cutoff_from_noise(20, 3, 5.4849e-10) == pytest.approx(5.1902e-6, rel=1e-3)
        assert cutoff_from_noise(20, 9, 5.4849e-10) == pytest.approx(8.9898e-6, rel=1e-3)

    def test_floor(self):
        assert cutoff_from_noise(20, 3, 0.0) == 1e-10
        assert cutoff_from_noise(20, 3, 0.0, floor=1e-7) == 1e-7

    def test_negative_noise(self):
        with pytest.raises(ValidationError):
            cutoff_from_noise(20, 3, -1.0)

    @given(st.integers(1, 500), st.integers(1, 100), st.floats(0, 1), st.integers(1, 50),
           st.integers(1, 50), st.floats(0, 1))
    def test_monotone(self, N, p, eps, dN, dp, deps):
        base = cutoff_from_noise(N, p, eps)
        assert cutoff_from_noise(N + dN, p, eps) >= base
        assert cutoff_from_noise(N, p + dp, eps) >= base
        assert cutoff_from_noise(N, p, eps + deps) >= base


class TestBounds:
    def test_identical_matrices(self):
        G = np.random.default_rng(1).normal(size=(10, 3))
        r = bounds(G, G, 0.0, 0.0, 0.1, 1.0, 1.0, 1.0)
        assert r.weyl == 0 and r.gamma_bound == 0 and r.max_singular_value_shift == 0
        assert r.rank == 3

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            bounds(np.eye(3), np.eye(2), 0, 0, 0.1, 1, 1, 1)

    def test_formulas(self):
        G = np.eye(4)[:, :2] * 10
        r = bounds(G, G, 1e-3, 2e-3, 0.1, 2.0, 3.0, 1.0)
        root = np.sqrt(8)
        assert r.gamma_bound == pytest.approx(root * 2e-3)
        assert r.tikhonov_bound == pytest.approx(root * (2.0 * 0.01 + 6.0 * 1e-2))
        assert r.sigma_r == 10.0
        assert r.gap_ok == bool(100.0 >= root + 4)

    def test_rank_ignores_rounding_level_values(self):
        G = np.zeros((5, 3))
        G[:, 0] = 1.0
        G[:, 1] = 1.0 + 1e-15
        r = bounds(G, G, 0, 0, 0.1, 1, 1, 1)
        assert r.rank == 1

    def test_random_pairs_obey_weyl(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            N, p = rng.integers(1, 15, size=2)
            G = rng.normal(size=(N, p))
            E = rng.normal(size=(N, p)) * 10.0 ** rng.uniform(-8, 0)
            r = bounds(G, G + E, 0, 0, 0.1, 1, 1, 1)
            assert r.max_singular_value_shift <= r.weyl + 1e-12

    def test_volpert_noisy_run_respects_gamma_bound(self, clean_run):
        from conslaw.differentiation import DiffMethod, differentiate
        from conslaw.timeseries import NoiseSpec, add_noise
        clean = clean_run("volpert", 100)
        noisy, rep = add_noise(clean, NoiseSpec(1e-5, seed=11))
        est = differentiate(noisy, DiffMethod())
        terms = expand(LibrarySpec(1), 3)
        G = eval_gamma(terms, clean.states, clean.derivatives)
        Gn = eval_gamma(terms, noisy.states, est.derivatives)
        eps_dx = float(np.abs(est.derivatives - clean.derivatives).max())
        r = bounds(G, Gn, rep.max_abs, eps_dx, 0.01, 1, 1, 1)
        assert r.weyl <= r.gamma_bound


class TestSubspaces:
    def test_identical(self):
        V = np.linalg.qr(np.random.default_rng(0).normal(size=(5, 2)))[0]
        assert subspace_distance(V, V) < 1e-14

    def test_right_angle(self):
        assert subspace_distance(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 1.0

    def test_matches_cosine_formula(self):
        rng = np.random.default_rng(2)
        V1 = np.linalg.qr(rng.normal(size=(6, 2)))[0]
        V2 = np.linalg.qr(rng.normal(size=(6, 2)))[0]
        c = np.linalg.svd(V1.T @ V2, compute_uv=False).min()
        assert subspace_distance(V1, V2) == pytest.approx(np.sqrt(1 - c * c), rel=1e-10)

    def test_validation(self):
        with pytest.raises(ValidationError):
            subspace_distance(np.array([2.0, 0.0]), np.array([0.0, 1.0]))
        with pytest.raises(ValidationError):
            subspace_distance(np.eye(3)[:, :2], np.eye(3)[:, :1])

    def test_cai_bound_shape(self):
        # recovery of a planted null space improves as the signal grows,
        # tracking p (sigma^2 + N) / sigma^4 up to a constant
        rng = np.random.default_rng(5)
        N, p = 60, 6
        null = np.linalg.qr(rng.normal(size=(p, 2)))[0]
        proj = np.eye(p) - null @ null.T
        ratios = []
        for sigma in (5.0, 20.0, 80.0):
            dists = []
            for _ in range(40):
                U = np.linalg.qr(rng.normal(size=(N, p)))[0]
                G = sigma * U @ proj
                a = analyze(G + rng.normal(size=G.shape), 0.0)
                dists.append(subspace_distance(a.right_vectors[:, -2:], null) ** 2)
            shape = cai_bound(p, N, sigma, 1.0)
            ratios.append(np.mean(dists) / shape)
            assert np.mean(dists) <= cai_bound(p, N, sigma, 10.0)
        assert max(ratios) / min(ratios) < 10

    def test_cai_bound_saturates(self):
        assert cai_bound(5, 100, 0.0, 1.0) == 1.0
        assert cai_bound(5, 100, 0.5, 1.0) == 1.0
        assert cai_bound(5, 100, 1e3, 1.0) < 1e-4

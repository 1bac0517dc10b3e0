"""Pseudo-inverse, projector, spectrum, and seeded-source properties."""

import numpy as np
import pytest

from i2o.linops import (
    LinAlgInputError,
    SeededSource,
    gaussian_matrix,
    gaussian_vector,
    matrix_power,
    pinv,
    proj_range,
    rank,
    spectrum,
)


def random_matrix(rng, max_dim=30):
    """Random shape, random rank: half the draws are rank-deficient."""
    rows = rng.integers(1, max_dim + 1)
    cols = rng.integers(1, max_dim + 1)
    m = rng.standard_normal((rows, cols))
    if rng.random() < 0.5 and min(rows, cols) > 1:
        r = rng.integers(1, min(rows, cols))
        u, s, vt = np.linalg.svd(m, full_matrices=False)
        s[r:] = 0.0
        m = (u * s) @ vt
    return m


class TestPinv:
    def test_identity(self):
        np.testing.assert_allclose(pinv(np.eye(3)), np.eye(3), atol=1e-14)

    def test_diagonal_truncation(self):
        np.testing.assert_allclose(pinv(np.diag([2.0, 0.0])), np.diag([0.5, 0.0]),
                                   atol=1e-14)

    def test_row_vector(self):
        # hand value: Xᵀ(XXᵀ)⁻¹ for X = [1, 1]
        np.testing.assert_allclose(pinv([[1.0, 1.0]]), [[0.5], [0.5]], atol=1e-14)

    def test_moore_penrose_axioms(self):
        """M M† M = M, M† M M† = M†, and both products symmetric."""
        rng = np.random.default_rng(7)
        for _ in range(100):
            m = random_matrix(rng)
            mp = pinv(m)
            scale = 1.0 + np.linalg.norm(m)
            scale_p = 1.0 + np.linalg.norm(mp)
            assert np.linalg.norm(m @ mp @ m - m) <= 1e-9 * scale
            assert np.linalg.norm(mp @ m @ mp - mp) <= 1e-9 * scale_p
            assert np.linalg.norm((m @ mp).T - m @ mp) <= 1e-9
            assert np.linalg.norm((mp @ m).T - mp @ m) <= 1e-9

    def test_rejects_non_finite(self):
        with pytest.raises(LinAlgInputError):
            pinv([[np.nan, 1.0]])
        with pytest.raises(LinAlgInputError):
            pinv([[np.inf], [1.0]])


class TestProjRange:
    def test_identity_full_range(self):
        np.testing.assert_allclose(proj_range(np.eye(4)), np.eye(4), atol=1e-14)

    def test_zero_matrix_empty_range(self):
        np.testing.assert_allclose(proj_range(np.zeros((3, 2))), np.zeros((3, 3)))

    def test_unit_direction(self):
        np.testing.assert_allclose(proj_range([[1.0], [1.0]]),
                                   [[0.5, 0.5], [0.5, 0.5]], atol=1e-14)

    def test_idempotent_symmetric_and_fixes_range(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            x = random_matrix(rng, max_dim=20)
            p = proj_range(x)
            assert np.max(np.abs(p @ p - p)) <= 1e-10
            assert np.max(np.abs(p.T - p)) <= 1e-10
            w = rng.standard_normal(x.shape[1])
            xw = x @ w
            assert np.linalg.norm(p @ xw - xw) <= 1e-9 * max(np.linalg.norm(xw), 1e-30)


class TestSpectrum:
    def test_diagonal(self):
        rep = spectrum(np.diag([1.0, 2.0]))
        np.testing.assert_allclose(sorted(rep.eigenvalues.real), [1.0, 2.0])
        assert rep.spectral_radius == pytest.approx(2.0)
        assert rep.min_real_part == pytest.approx(1.0)

    def test_rotation_by_90_degrees(self):
        # characteristic polynomial lam² + 1 = 0
        rep = spectrum([[0.0, -1.0], [1.0, 0.0]])
        np.testing.assert_allclose(sorted(rep.eigenvalues.imag), [-1.0, 1.0], atol=1e-12)
        assert rep.min_real_part == pytest.approx(0.0, abs=1e-12)
        assert rep.spectral_radius == pytest.approx(1.0)

    def test_zero_matrix(self):
        rep = spectrum(np.zeros((3, 3)))
        assert rep.spectral_radius == 0.0
        np.testing.assert_allclose(rep.eigenvalues, 0.0)

    def test_eigenvalue_product_matches_determinant(self):
        rng = np.random.default_rng(13)
        checked = 0
        while checked < 50:
            n = rng.integers(2, 9)
            m = np.eye(n) + 0.5 * rng.standard_normal((n, n))
            det = np.linalg.det(m)
            if abs(det) < 1e-2:
                continue
            prod = np.prod(spectrum(m).eigenvalues)
            assert abs(prod - det) <= 1e-8 * abs(det)
            checked += 1

    def test_rejects_non_square(self):
        with pytest.raises(LinAlgInputError):
            spectrum(np.ones((2, 3)))


class TestMatrixPower:
    def test_matches_repeated_multiplication(self):
        rng = np.random.default_rng(17)
        m = 0.5 * rng.standard_normal((5, 5))
        ref = np.eye(5)
        for k in range(8):
            np.testing.assert_allclose(matrix_power(m, k), ref, rtol=1e-12, atol=1e-12)
            ref = ref @ m

    def test_rejects_negative_exponent(self):
        with pytest.raises(ValueError):
            matrix_power(np.eye(2), -1)


class TestSeededSource:
    def test_same_seed_same_stream(self):
        a = gaussian_matrix(SeededSource(123), 7, 5)
        b = gaussian_matrix(SeededSource(123), 7, 5)
        assert np.array_equal(a, b)

    def test_same_source_is_a_value(self):
        src = SeededSource(9)
        assert np.array_equal(gaussian_matrix(src, 4, 4), gaussian_matrix(src, 4, 4))

    def test_children_are_independent_streams(self):
        src = SeededSource(5)
        a = src.child(0).normals(64)
        b = src.child(1).normals(64)
        assert not np.array_equal(a, b)
        assert src.child(0).seed == src.child(0).seed

    def test_sample_mean_near_zero(self):
        z = SeededSource(2024).normals(10**5)
        assert abs(z.mean()) <= 3.0 / np.sqrt(10**5)

    def test_sample_variance_near_one(self):
        z = SeededSource(2024).normals(10**5)
        assert abs(z.var() - 1.0) <= 0.05

    def test_vector_and_matrix_agree(self):
        src = SeededSource(77)
        np.testing.assert_array_equal(gaussian_vector(src, 12),
                                      gaussian_matrix(src, 3, 4).ravel())

    def test_rejects_bad_shapes(self):
        with pytest.raises(ValueError):
            gaussian_matrix(SeededSource(0), 0, 3)


class TestProjectionExpectation:
    def test_gaussian_range_captures_d_over_p(self):
        """Monte Carlo: E‖P(X)v‖² = d/p for X Gaussian p x d and unit v."""
        p_dim = 10
        v = np.zeros(p_dim)
        v[0] = 1.0
        for d in (2, 5, 8):
            src = SeededSource(31_000 + d)
            vals = [
                float(v @ proj_range(gaussian_matrix(src.child(i), p_dim, d)) @ v)
                for i in range(2000)
            ]
            assert abs(np.mean(vals) - d / p_dim) <= 0.02

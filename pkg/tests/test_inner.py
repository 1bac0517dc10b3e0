"""Affine problem validation, iteration, and closed-form equivalence."""

import math

import numpy as np
import pytest

from i2o.inner import (
    AffineInnerProblem,
    DimensionMismatchError,
    FixedPointConfig,
    InvalidProblemError,
    ThresholdNotReachedError,
    apply,
    closed_form_limit,
    closed_form_state,
    default_step_size,
    invertibility_threshold,
    iterate,
    validate,
)
from i2o.linops import SeededSource
from i2o.theory import random_valid_instance

SCALAR = AffineInnerProblem(k_in=[[1.0]], b=[[1.0]], u=[[-1.0]], c=[0.0])


class TestValidate:
    def test_identity_problem_passes(self):
        p = AffineInnerProblem(k_in=[[1.0]], b=[[1.0]], u=[[1.0]], c=[0.0])
        diag = validate(p)
        assert diag.ok
        assert diag.k_in_rank == 1

    def test_dimension_obstruction_reported(self):
        p = AffineInnerProblem(k_in=np.ones((3, 2)), b=np.ones((3, 2)),
                               u=np.eye(3), c=np.zeros(3))
        diag = validate(p)
        assert not diag.ok
        assert any("cannot be surjective" in m for m in diag.messages)

    def test_negative_spectrum_reported(self):
        # b·k_inᵀ = −I
        p = AffineInnerProblem(k_in=np.eye(2), b=-np.eye(2), u=np.eye(2),
                               c=np.zeros(2))
        diag = validate(p)
        assert not diag.ok
        assert any("nonpositive real part" in m for m in diag.messages)

    def test_require_valid_raises(self):
        p = AffineInnerProblem(k_in=np.eye(2), b=-np.eye(2), u=np.eye(2),
                               c=np.zeros(2))
        with pytest.raises(InvalidProblemError):
            p.require_valid()

    def test_construction_rejects_inconsistent_shapes(self):
        with pytest.raises(DimensionMismatchError):
            AffineInnerProblem(k_in=np.eye(2), b=np.eye(2), u=np.eye(3),
                               c=np.zeros(2))


class TestDefaultStepSize:
    def test_scalar_identity(self):
        assert default_step_size(SCALAR) == pytest.approx(1.8)

    def test_diagonal(self):
        p = AffineInnerProblem(k_in=np.eye(2), b=np.diag([1.0, 4.0]),
                               u=np.eye(2), c=np.zeros(2))
        assert default_step_size(p) == pytest.approx(0.45)

    def test_scaled_identity(self):
        p = AffineInnerProblem(k_in=np.eye(3), b=2.0 * np.eye(3),
                               u=np.eye(3), c=np.zeros(3))
        assert default_step_size(p) == pytest.approx(0.9)

    def test_iteration_matrix_contracts(self):
        rng = np.random.default_rng(3)
        for seed in range(10):
            p, _, _, _ = random_valid_instance(SeededSource(seed))
            eta = default_step_size(p)
            m = np.eye(p.d_x) - eta * p.bk_t()
            assert np.max(np.abs(np.linalg.eigvals(m))) < 1.0


class TestIterate:
    def test_two_hand_steps(self):
        # f(z, theta) = z − theta; 0 → 1 → 1.5
        cfg = FixedPointConfig(eta=0.5, z0=[0.0], n=2)
        np.testing.assert_allclose(iterate(SCALAR, [2.0], cfg), [1.5])

    def test_zero_iterations_returns_z0(self):
        cfg = FixedPointConfig(eta=0.5, z0=[0.7], n=0)
        np.testing.assert_allclose(iterate(SCALAR, [2.0], cfg), [0.7])

    def test_fixed_point_stays_fixed(self):
        for n in (1, 3, 17):
            cfg = FixedPointConfig(eta=0.5, z0=[2.0], n=n)
            np.testing.assert_allclose(iterate(SCALAR, [2.0], cfg), [2.0])

    def test_dimension_mismatch(self):
        cfg = FixedPointConfig(eta=0.5, z0=[0.0, 0.0], n=1)
        with pytest.raises(DimensionMismatchError):
            iterate(SCALAR, [2.0], cfg)


class TestClosedFormState:
    def test_scalar_values(self):
        proc = closed_form_state(SCALAR, 0.5, [0.0], 2)
        np.testing.assert_allclose(proc.e_n, [[-0.75]])
        np.testing.assert_allclose(proc.r_n, [0.0])

    def test_zero_steps(self):
        proc = closed_form_state(SCALAR, 0.5, [0.3], 0)
        np.testing.assert_allclose(proc.e_n, [[0.0]])
        np.testing.assert_allclose(proc.r_n, [0.3])

    def test_apply_matches_hand_value(self):
        proc = closed_form_state(SCALAR, 0.5, [0.0], 2)
        np.testing.assert_allclose(apply(proc, [2.0]), [1.5])

    def test_apply_at_zero_theta_is_offset(self):
        rng = np.random.default_rng(5)
        p, _, z0, eta = random_valid_instance(SeededSource(8))
        proc = closed_form_state(p, eta, z0, 7)
        np.testing.assert_allclose(proc.apply(np.zeros(p.d_theta)), proc.r_n)

    def test_kernel_directions_do_not_move_output(self):
        p, _, z0, eta = random_valid_instance(SeededSource(12))
        proc = closed_form_state(p, eta, z0, 9)
        coeff = proc.coefficient()
        _, _, vt = np.linalg.svd(coeff)
        r = np.linalg.matrix_rank(coeff)
        if r == p.d_theta:
            pytest.skip("coefficient has trivial kernel for this draw")
        kernel_dir = vt[-1]
        theta = np.random.default_rng(0).standard_normal(p.d_theta)
        z_a = proc.apply(theta)
        z_b = proc.apply(theta + 10.0 * kernel_dir)
        np.testing.assert_allclose(z_a, z_b, atol=1e-8 * (1 + np.linalg.norm(z_a)))

    def test_matches_literal_recursion_on_random_problems(self):
        """Closed form equals the literal recursion across 50 instances."""
        for seed in range(50):
            p, _, z0, eta = random_valid_instance(SeededSource(seed))
            n = int(SeededSource(seed).child(50).uniforms(1)[0] * 200) % 200
            theta = SeededSource(seed).child(51).normals(p.d_theta)
            via_iterate = iterate(p, theta, FixedPointConfig(eta=eta, z0=z0, n=n))
            via_closed = closed_form_state(p, eta, z0, n).apply(theta)
            err = np.linalg.norm(via_closed - via_iterate)
            assert err <= 1e-9 * (1.0 + np.linalg.norm(via_iterate))

    def test_converges_to_root_with_geometric_tail(self):
        for seed in (0, 4, 9):
            p, _, z0, eta_ = random_valid_instance(SeededSource(seed))
            eta = default_step_size(p)
            radius = np.max(np.abs(np.linalg.eigvals(np.eye(p.d_x) - eta * p.bk_t())))
            horizon = min(int(np.ceil(np.log(1e-12) / np.log(radius))) + 100, 200_000)
            theta = SeededSource(seed).child(60).normals(p.d_theta)
            z = np.array(z0)
            diffs = []
            for _ in range(horizon):
                z_next = z - eta * p.residual(z, theta)
                diffs.append(np.linalg.norm(z_next - z))
                z = z_next
            assert np.linalg.norm(p.residual(z, theta)) < 1e-8
            tail = [d for d in diffs[horizon // 4:] if d > 1e-250]
            ratios = [b / a for a, b in zip(tail, tail[1:])]
            assert np.median(ratios) < 1.0

    def test_e_n_approaches_negative_inverse(self):
        for seed in (1, 6):
            p, _, z0, _ = random_valid_instance(SeededSource(seed))
            eta = default_step_size(p)
            radius = np.max(np.abs(np.linalg.eigvals(np.eye(p.d_x) - eta * p.bk_t())))
            horizon = int(np.ceil(np.log(1e-10) / np.log(radius))) + 50
            proc = closed_form_state(p, eta, z0, horizon)
            target = -np.linalg.inv(p.bk_t())
            assert np.max(np.abs(proc.e_n - target)) <= 1e-8

    def test_limit_state_matches_large_n(self):
        p, _, z0, _ = random_valid_instance(SeededSource(2))
        eta = default_step_size(p)
        lim = closed_form_limit(p, eta, z0)
        radius = np.max(np.abs(np.linalg.eigvals(np.eye(p.d_x) - eta * p.bk_t())))
        horizon = int(np.ceil(np.log(1e-12) / np.log(radius))) + 50
        far = closed_form_state(p, eta, z0, horizon)
        theta = SeededSource(2).child(61).normals(p.d_theta)
        np.testing.assert_allclose(lim.apply(theta), far.apply(theta), atol=1e-8,
                                   rtol=1e-8)
        assert math.isinf(lim.n)

    def test_apply_is_affine_in_theta(self):
        p, _, z0, eta = random_valid_instance(SeededSource(21))
        proc = closed_form_state(p, eta, z0, 11)
        rng = np.random.default_rng(1)
        t1 = rng.standard_normal(p.d_theta)
        t2 = rng.standard_normal(p.d_theta)
        base = proc.apply(np.zeros(p.d_theta))
        lhs = proc.apply(t1 + t2) - base
        rhs = (proc.apply(t1) - base) + (proc.apply(t2) - base)
        np.testing.assert_allclose(lhs, rhs, atol=1e-10 * (1 + np.linalg.norm(lhs)))

    def test_near_singular_bk_t_is_flagged(self):
        p = AffineInnerProblem(k_in=np.eye(2), b=np.diag([1.0, 1e-9]),
                               u=np.eye(2), c=np.zeros(2))
        with pytest.warns(RuntimeWarning, match="near-singular"):
            closed_form_state(p, 0.5, np.zeros(2), 3)


class TestInvertibilityThreshold:
    def test_strong_contraction_certifies_at_one(self):
        assert invertibility_threshold(SCALAR, 0.9) == 1

    def test_weak_contraction_needs_two(self):
        # 0.6 >= 0.5 > 0.6² = 0.36
        assert invertibility_threshold(SCALAR, 0.4) == 2

    def test_default_step_gives_small_threshold(self):
        for seed in range(8):
            p, _, _, _ = random_valid_instance(SeededSource(seed))
            eta = default_step_size(p)
            n0 = invertibility_threshold(p, eta)
            m = np.eye(p.d_x) - eta * p.bk_t()
            power = np.linalg.matrix_power(m, n0)
            assert np.linalg.norm(power, 2) < 0.5
            if n0 > 1:
                prev = np.linalg.matrix_power(m, n0 - 1)
                assert np.linalg.norm(prev, 2) >= 0.5
            e_n = (power - np.eye(p.d_x)) @ np.linalg.inv(p.bk_t())
            assert np.linalg.matrix_rank(e_n) == p.d_x

    def test_divergent_step_errors(self):
        with pytest.raises(ThresholdNotReachedError):
            invertibility_threshold(SCALAR, 2.5)

    def test_procedure_exposes_lazy_threshold(self):
        proc = closed_form_state(SCALAR, 0.9, [0.0], 5)
        assert proc.n0 == 1

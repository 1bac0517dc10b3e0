"""Quadratic outer losses and the three outer trainers.

The outer objective is phi(theta) = ½‖K_out z_N(theta) − omega‖² with
z_N(theta) = A_N theta + r_N the closed form of the inner solver
(A_N = k_inᵀ E_N u).  The trainers are:

* ``train_closed_form`` — the minimum-norm least-squares minimizer
  theta = −(K_out A_N)† (K_out r_N − omega);
* ``train_unrolled_gd`` — gradient descent on phi with the exact gradient;
* ``train_ift`` — the practical implicit-differentiation descent
  theta ← theta − alpha_N p_N(theta) with
  p_N(theta) = −((∂_z f)† ∂_theta f)ᵀ ∇l(z_N(theta)), where the Jacobians
  ∂_z f = k_inᵀ b and ∂_theta f = k_inᵀ u are constant for affine problems.

Every minimizer of phi satisfies the normal-equation characterization
K_out A_N theta = −P(K_out A_N)(K_out r_N − omega); trainers report how well
their output satisfies it (``characterization_residual``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import linops
from .inner import (
    AffineInnerProblem,
    DimensionMismatchError,
    LinearProcedure,
    closed_form_limit,
    closed_form_state,
)

GRAD_TOL = 1e-10
DEFAULT_OUTER_STEPS = 10**5
DIVERGENCE_PATIENCE = 100


class TrainingDivergenceError(RuntimeError):
    """The outer descent increased the loss for too many consecutive steps."""


class IftNotContractingError(RuntimeError):
    """The practical implicit-differentiation descent failed to contract."""


def _freeze(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class QuadraticOuterLoss:
    """l(z) = ½‖K_out z − omega‖²."""

    k_out: np.ndarray
    omega: np.ndarray

    def __post_init__(self) -> None:
        k_out = linops.as_matrix(self.k_out, "k_out")
        omega = linops.as_vector(self.omega, "omega")
        if omega.shape[0] != k_out.shape[0]:
            raise DimensionMismatchError(
                f"omega has length {omega.shape[0]}, expected {k_out.shape[0]}"
            )
        object.__setattr__(self, "k_out", _freeze(k_out))
        object.__setattr__(self, "omega", _freeze(omega))

    @property
    def d_omega(self) -> int:
        return self.k_out.shape[0]

    @property
    def d_z(self) -> int:
        return self.k_out.shape[1]

    @property
    def strongly_convex(self) -> bool:
        return linops.rank(self.k_out) == self.d_z


@dataclass(frozen=True)
class TrainedOuter:
    """An outer solution with its training method tag and residual."""

    theta: np.ndarray
    method: str
    n_train: int
    residual: float
    steps_taken: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "theta", _freeze(linops.as_vector(self.theta, "theta")))


def loss(l: QuadraticOuterLoss, z) -> float:
    """½‖K_out z − omega‖²."""
    z = linops.as_vector(z, "z")
    if z.shape[0] != l.d_z:
        raise DimensionMismatchError(f"z has length {z.shape[0]}, expected {l.d_z}")
    r = l.k_out @ z - l.omega
    return 0.5 * float(r @ r)


def _state(p: AffineInnerProblem, eta: float, z0, n_eval,
           n0: int | None = None) -> LinearProcedure:
    if n_eval is None or (isinstance(n_eval, float) and math.isinf(n_eval)):
        return closed_form_limit(p, eta, z0)
    return closed_form_state(p, eta, z0, int(n_eval), n0=n0)


def loss_at(p: AffineInnerProblem, l: QuadraticOuterLoss, eta: float, z0,
            theta, n_eval) -> float:
    """l(z_{n_eval}(theta)) through the closed-form state.

    ``n_eval`` may be ``math.inf`` to evaluate at the exact fixed point.
    """
    if l.d_z != p.d_z:
        raise DimensionMismatchError(f"loss expects z of length {l.d_z}, problem has d_z={p.d_z}")
    proc = _state(p, eta, z0, n_eval)
    return loss(l, proc.apply(theta))


def characterization_residual(proc: LinearProcedure, l: QuadraticOuterLoss,
                              theta) -> float:
    """Scaled residual of K_out A_N theta + P(K_out A_N)(K_out r_N − omega) = 0.

    Zero exactly at minimizers of the unrolled objective; scale-normalized by
    1 + ‖K_out r_N − omega‖.
    """
    ka = l.k_out @ proc.coefficient()
    v = l.k_out @ proc.r_n - l.omega
    res = ka @ linops.as_vector(theta, "theta") + linops.proj_range(ka) @ v
    return float(np.linalg.norm(res) / (1.0 + np.linalg.norm(v)))


def unrolled_gradient(p: AffineInnerProblem, l: QuadraticOuterLoss, eta: float,
                      z0, theta, n: int) -> np.ndarray:
    """Exact gradient of phi(theta) = l(z_N(theta)):

    (K_out A_N)ᵀ (K_out A_N theta + K_out r_N − omega).
    """
    proc = closed_form_state(p, eta, z0, n)
    ka = l.k_out @ proc.coefficient()
    v = l.k_out @ proc.r_n - l.omega
    return ka.T @ (ka @ linops.as_vector(theta, "theta") + v)


def train_closed_form(p: AffineInnerProblem, l: QuadraticOuterLoss, eta: float,
                      z0, n: int) -> TrainedOuter:
    """Minimum-norm minimizer of the unrolled objective at iteration count n."""
    proc = closed_form_state(p, eta, z0, n)
    ka = l.k_out @ proc.coefficient()
    v = l.k_out @ proc.r_n - l.omega
    theta = -linops.pinv(ka) @ v
    return TrainedOuter(
        theta=theta,
        method="closed_form",
        n_train=int(n),
        residual=characterization_residual(proc, l, theta),
        steps_taken=0,
    )


def train_unrolled_gd(p: AffineInnerProblem, l: QuadraticOuterLoss, eta: float,
                      z0, n: int, outer_steps: int = DEFAULT_OUTER_STEPS,
                      outer_lr: float | None = None,
                      theta0=None) -> TrainedOuter:
    """Gradient descent on phi(theta) = l(z_N(theta)) with the exact gradient.

    Stops when ‖∇phi‖ <= GRAD_TOL or after ``outer_steps``; raises
    :class:`TrainingDivergenceError` if the loss increases for
    ``DIVERGENCE_PATIENCE`` consecutive steps.
    """
    proc = closed_form_state(p, eta, z0, n)
    ka = l.k_out @ proc.coefficient()
    v = l.k_out @ proc.r_n - l.omega
    theta = (np.zeros(p.d_theta) if theta0 is None
             else linops.as_vector(theta0, "theta0").copy())
    if theta.shape[0] != p.d_theta:
        raise DimensionMismatchError(
            f"theta0 has length {theta.shape[0]}, expected {p.d_theta}"
        )
    if outer_lr is None:
        smax = linops.operator_norm(ka)
        outer_lr = 1.0 if smax == 0.0 else 1.0 / smax**2

    def phi(th: np.ndarray) -> float:
        r = ka @ th + v
        return 0.5 * float(r @ r)

    grad = ka.T @ (ka @ theta + v)
    prev_loss = phi(theta)
    increases = 0
    steps = 0
    for steps in range(1, outer_steps + 1):
        if np.linalg.norm(grad) <= GRAD_TOL:
            steps -= 1
            break
        theta = theta - outer_lr * grad
        grad = ka.T @ (ka @ theta + v)
        cur = phi(theta)
        increases = increases + 1 if cur > prev_loss else 0
        if increases >= DIVERGENCE_PATIENCE:
            raise TrainingDivergenceError(
                f"loss increased for {increases} consecutive steps "
                f"(lr={outer_lr:.3e}); reduce outer_lr"
            )
        prev_loss = cur
    return TrainedOuter(
        theta=theta,
        method="unrolled_gd",
        n_train=int(n),
        residual=float(np.linalg.norm(grad)),
        steps_taken=steps,
    )


def _ift_affine_parts(p: AffineInnerProblem, l: QuadraticOuterLoss, eta: float,
                      z0, n: int) -> tuple[np.ndarray, np.ndarray]:
    """p_N(theta) = x_mat @ theta - b_vec, from the pseudo-inverse Jacobians."""
    proc = closed_form_state(p, eta, z0, n)
    j_z = p.k_in.T @ p.b
    j_theta = p.k_in.T @ p.u
    w = linops.pinv(j_z) @ j_theta
    g = l.k_out.T @ l.k_out
    a_n = proc.coefficient()
    x_mat = -w.T @ (g @ a_n)
    b_vec = w.T @ (g @ proc.r_n - l.k_out.T @ l.omega)
    return x_mat, b_vec


def ift_gradient(p: AffineInnerProblem, l: QuadraticOuterLoss, theta,
                 eta: float, z0, n: int) -> np.ndarray:
    """The practical implicit-differentiation direction

    p_N(theta) = −((k_inᵀ b)† k_inᵀ u)ᵀ K_outᵀ (K_out z_N(theta) − omega),

    with z_N from the closed-form state.
    """
    theta = linops.as_vector(theta, "theta")
    x_mat, b_vec = _ift_affine_parts(p, l, eta, z0, n)
    return x_mat @ theta - b_vec


def ift_step_size(p: AffineInnerProblem, l: QuadraticOuterLoss, eta: float,
                  z0, n: int, epsilon_ratio: float = 0.1) -> float:
    """Step 1/((1 + epsilon_ratio)·rho(X_N)) for the descent on p_N.

    X_N = −(H̄⁻¹u)ᵀ k_in G k_inᵀ E_N u with G = K_outᵀK_out and H̄ = b k_inᵀ;
    past the invertibility threshold X_N has nonnegative real spectrum, so
    this step makes I − alpha·X_N a contraction on the relevant subspace.
    Returns 1 when X_N vanishes.
    """
    proc = closed_form_state(p, eta, z0, n)
    h_bar_inv_u = np.linalg.solve(p.bk_t(), np.asarray(p.u, dtype=float))
    g = l.k_out.T @ l.k_out
    x_n = -h_bar_inv_u.T @ (p.k_in @ (g @ (p.k_in.T @ (proc.e_n @ p.u))))
    radius = linops.spectrum(x_n).spectral_radius
    if radius == 0.0:
        return 1.0
    return 1.0 / ((1.0 + epsilon_ratio) * radius)


def train_ift(p: AffineInnerProblem, l: QuadraticOuterLoss, eta: float, z0,
              n: int, outer_steps: int = DEFAULT_OUTER_STEPS,
              theta0=None) -> TrainedOuter:
    """Iterate theta ← theta − alpha_N p_N(theta) to a root of p_N.

    Stops at ‖p_N‖ <= GRAD_TOL or ``outer_steps``.  If the residual grows for
    ``DIVERGENCE_PATIENCE`` consecutive steps, raises
    :class:`IftNotContractingError` with contraction diagnostics instead of
    silently returning garbage.
    """
    alpha = ift_step_size(p, l, eta, z0, n)
    x_mat, b_vec = _ift_affine_parts(p, l, eta, z0, n)
    theta = (np.zeros(p.d_theta) if theta0 is None
             else linops.as_vector(theta0, "theta0").copy())
    if theta.shape[0] != p.d_theta:
        raise DimensionMismatchError(
            f"theta0 has length {theta.shape[0]}, expected {p.d_theta}"
        )
    direction = x_mat @ theta - b_vec
    res = float(np.linalg.norm(direction))
    growth = 0
    steps = 0
    for steps in range(1, outer_steps + 1):
        if res <= GRAD_TOL:
            steps -= 1
            break
        theta = theta - alpha * direction
        direction = x_mat @ theta - b_vec
        new_res = float(np.linalg.norm(direction))
        growth = growth + 1 if new_res > res else 0
        if growth >= DIVERGENCE_PATIENCE:
            rho = linops.spectrum(np.eye(p.d_theta) - alpha * x_mat).spectral_radius
            raise IftNotContractingError(
                f"‖p_N‖ grew for {growth} consecutive steps "
                f"(residual {new_res:.3e}, rho(I - alpha·X_N) = {rho:.6f}); "
                f"increase n past the invertibility threshold"
            )
        res = new_res
    return TrainedOuter(
        theta=theta,
        method="ift_gd",
        n_train=int(n),
        residual=res,
        steps_taken=steps,
    )

"""Residual polynomials of gradient-based methods on quadratics.

A gradient-based method run on F(z) = ½‖Kz + c‖² satisfies
z_N − z* = P_N(H)(z0 − z*) with H = KᵀK, where P_N is the method's residual
polynomial: P_0 ≡ 1 and

    P_{N+1}(lam) = (1 + g_N·lam) P_N(lam) + Σ_{i<N} d_i^{(N)} (P_{i+1}(lam) − P_i(lam)),

g_N the step applied to the gradient and d_i^{(N)} the coefficients applied
to past iterate differences.  Plain gradient descent gives
P_N(lam) = (1 − eta·lam)^N; heavy-ball momentum gives the two-term recursion
P_{N+1} = (1 − eta·lam)P_N + m(P_N − P_{N−1}).

Matrix arguments are evaluated by the same recursion applied to matrices
(plain GD by repeated squaring), never by eigendecomposition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import inner, linops

N0_SCAN_CAP = 10**6


class DivergentMethodError(ValueError):
    """The method does not contract on the relevant spectrum."""


@dataclass(frozen=True)
class GradientMethod:
    """One of plain_gd(eta), momentum(eta, m), or a custom schedule.

    A custom schedule is a sequence whose N-th row holds
    [d_0^{(N)}, ..., d_{N-1}^{(N)}, g_N]: the coefficients applied to the
    iterate differences followed by the coefficient applied to the gradient.
    """

    variant: str
    eta: float = 0.0
    m: float = 0.0
    schedule: tuple[tuple[float, ...], ...] = ()

    @classmethod
    def plain_gd(cls, eta: float) -> "GradientMethod":
        if not (eta > 0 and math.isfinite(eta)):
            raise ValueError(f"plain_gd needs eta > 0, got {eta}")
        return cls(variant="plain_gd", eta=float(eta))

    @classmethod
    def momentum(cls, eta: float, m: float) -> "GradientMethod":
        if not (eta > 0 and math.isfinite(eta)):
            raise ValueError(f"momentum needs eta > 0, got {eta}")
        if not (0.0 <= m < 1.0):
            raise ValueError(f"momentum needs 0 <= m < 1, got {m}")
        return cls(variant="momentum", eta=float(eta), m=float(m))

    @classmethod
    def custom(cls, schedule: Sequence[Sequence[float]]) -> "GradientMethod":
        rows = []
        for n, row in enumerate(schedule):
            row = tuple(float(x) for x in row)
            if len(row) != n + 1:
                raise ValueError(f"schedule row {n} must have {n + 1} coefficients")
            if not all(math.isfinite(x) for x in row):
                raise ValueError(f"schedule row {n} has non-finite coefficients")
            rows.append(row)
        return cls(variant="custom", schedule=tuple(rows))


class ResidualPolynomial:
    """P_N for a given method; callable on scalars/grids, and on matrices."""

    def __init__(self, method: GradientMethod, degree: int):
        if degree < 0:
            raise ValueError(f"degree must be >= 0, got {degree}")
        if method.variant == "custom" and degree > len(method.schedule):
            raise ValueError(
                f"custom schedule has {len(method.schedule)} rows, "
                f"cannot build degree {degree}"
            )
        self.method = method
        self.degree = int(degree)

    def __call__(self, lam):
        lam = np.asarray(lam, dtype=float)
        if self.method.variant == "plain_gd":
            return (1.0 - self.method.eta * lam) ** self.degree
        out = self._by_recursion(lam)
        return out if out.shape else float(out)

    def _by_recursion(self, lam: np.ndarray) -> np.ndarray:
        ones = np.ones_like(lam)
        if self.method.variant == "momentum":
            p_prev, p = ones, ones
            for n in range(self.degree):
                step = (1.0 - self.method.eta * lam) * p
                p, p_prev = (step if n == 0 else step + self.method.m * (p - p_prev)), p
            return p
        history = [ones]
        for n in range(self.degree):
            row = self.method.schedule[n]
            nxt = (1.0 + row[-1] * lam) * history[n]
            for i in range(n):
                nxt = nxt + row[i] * (history[i + 1] - history[i])
            history.append(nxt)
        return history[self.degree]

    def of_matrix(self, h) -> np.ndarray:
        h = linops.as_matrix(h, "h")
        if h.shape[0] != h.shape[1]:
            raise ValueError("matrix argument must be square")
        eye = np.eye(h.shape[0])
        if self.method.variant == "plain_gd":
            return linops.matrix_power(eye - self.method.eta * h, self.degree)
        if self.method.variant == "momentum":
            p_prev, p = eye, eye
            for n in range(self.degree):
                step = p - self.method.eta * (h @ p)
                p, p_prev = (step if n == 0 else step + self.method.m * (p - p_prev)), p
            return p
        history = [eye]
        for n in range(self.degree):
            row = self.method.schedule[n]
            nxt = history[n] + row[-1] * (h @ history[n])
            for i in range(n):
                nxt = nxt + row[i] * (history[i + 1] - history[i])
            history.append(nxt)
        return history[self.degree]


def residual_poly(method: GradientMethod, n: int) -> ResidualPolynomial:
    """The degree-N residual polynomial of the method."""
    return ResidualPolynomial(method, n)


def quadratic_iterate(k, c, z0, poly: ResidualPolynomial) -> np.ndarray:
    """Closed-form N-th iterate of the method on F(z) = ½‖Kz + c‖².

    z_N = P_N(H) z0 + (P_N(H) − I) H† Kᵀ c with H = KᵀK; the pseudo-inverse
    handles rank-deficient K (the minimizer is then the min-norm one).
    """
    k = linops.as_matrix(k, "k")
    c = linops.as_vector(c, "c")
    z0 = linops.as_vector(z0, "z0")
    if c.shape[0] != k.shape[0]:
        raise inner.DimensionMismatchError(f"c has length {c.shape[0]}, expected {k.shape[0]}")
    if z0.shape[0] != k.shape[1]:
        raise inner.DimensionMismatchError(f"z0 has length {z0.shape[0]}, expected {k.shape[1]}")
    h = k.T @ k
    p_h = poly.of_matrix(h)
    return p_h @ z0 + (p_h - np.eye(h.shape[0])) @ (linops.pinv(h) @ (k.T @ c))


def momentum_n0(m: float) -> int:
    """Smallest N with m^(N/2)·(1 + (1−m)/(1+mN)) < 1, by linear scan."""
    if not (0.0 < m < 1.0):
        raise ValueError(f"momentum_n0 needs 0 < m < 1, got {m}")
    for n in range(1, N0_SCAN_CAP + 1):
        if m ** (n / 2.0) * (1.0 + (1.0 - m) / (1.0 + m * n)) < 1.0:
            return n
    raise RuntimeError(f"no N <= {N0_SCAN_CAP} satisfies the threshold inequality")


def _check_convergent(method: GradientMethod, lam_max: float) -> None:
    if method.variant == "plain_gd":
        if method.eta * lam_max >= 2.0:
            raise DivergentMethodError(
                f"plain GD diverges: eta={method.eta} >= 2/lam_max={2.0 / lam_max}"
            )
    elif method.variant == "momentum":
        # heavy-ball stability window eta < 2(1+m)/lam_max
        if method.eta * lam_max >= 2.0 * (1.0 + method.m):
            raise DivergentMethodError(
                f"momentum diverges: eta={method.eta} >= "
                f"2(1+m)/lam_max={2.0 * (1.0 + method.m) / lam_max}"
            )


def _custom_n0(method: GradientMethod, eigs: np.ndarray, n: int) -> int:
    for k in range(1, n + 1):
        vals = ResidualPolynomial(method, k)(eigs)
        if np.max(np.abs(vals)) < 1.0:
            return k
    return n


def procedure_from_quadratic(k_in, u, c, method: GradientMethod, z0,
                             n: int) -> inner.LinearProcedure:
    """Closed form of a gradient-based method on F(z, theta) = ½‖K_in z + U theta + c‖².

    The N-th iterate is k_inᵀ E_N U theta + r_N with
    E_N = (P_N(H̄) − I) H̄⁻¹, H̄ = K_in K_inᵀ, and
    r_N = P_N(H) z0 + (P_N(H) − I) H† K_inᵀ c, H = K_inᵀ K_in, which is the
    same affine representation produced by the fixed-point module for
    f = ∇_z F.
    """
    k_in = linops.as_matrix(k_in, "k_in")
    u = linops.as_matrix(u, "u")
    c = linops.as_vector(c, "c")
    z0 = linops.as_vector(z0, "z0")
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    if linops.rank(k_in) != k_in.shape[0]:
        raise inner.InvalidProblemError("k_in must be surjective (full row rank)")
    h_bar = k_in @ k_in.T
    eigs = np.linalg.eigvalsh(h_bar)
    _check_convergent(method, float(eigs[-1]))

    poly = ResidualPolynomial(method, int(n))
    e_n = (poly.of_matrix(h_bar) - np.eye(h_bar.shape[0])) @ np.linalg.inv(h_bar)
    h = k_in.T @ k_in
    p_h = poly.of_matrix(h)
    r_n = p_h @ z0 + (p_h - np.eye(h.shape[0])) @ (linops.pinv(h) @ (k_in.T @ c))

    problem = inner.AffineInnerProblem(k_in=k_in, b=k_in, u=u, c=c)
    if method.variant == "plain_gd":
        n0 = 1
    elif method.variant == "momentum":
        n0 = momentum_n0(method.m) if method.m > 0 else 1
    else:
        n0 = _custom_n0(method, eigs, max(int(n), 1))
    return inner.LinearProcedure(problem, method.eta, e_n, r_n, int(n), n0=n0)

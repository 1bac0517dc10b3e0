"""Affine inner problems and their fixed-point solution procedures.

An inner problem is the quadruple (k_in, b, u, c) defining the residual map

    f(z, theta) = k_inᵀ (b z + u theta + c),

whose roots the fixed-point iteration z ← z − eta·f(z, theta) approximates.
For such maps the N-th iterate is an affine function of theta,

    z_N(theta) = k_inᵀ E_N u theta + r_N,
    E_N = ((I − eta·b k_inᵀ)^N − I)(b k_inᵀ)⁻¹,
    r_N = k_inᵀ E_N (c + b z0) + z0,

represented here by :class:`LinearProcedure`.  E_N is invertible for every
N past the threshold computed by :func:`invertibility_threshold`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import linops

SPECTRAL_TOL = 1e-10
NEAR_SINGULAR_RTOL = 1e-8
DEFAULT_N_MAX = 10**6


class DimensionMismatchError(ValueError):
    """Operands whose dimensions do not agree."""


class InvalidProblemError(ValueError):
    """A problem violating the surjectivity or spectrum requirements."""


class SingularMatrixError(np.linalg.LinAlgError):
    """b·k_inᵀ numerically singular where invertibility is required."""


class ThresholdNotReachedError(RuntimeError):
    """No iteration count within the cap certifies invertibility."""


def _freeze(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class AffineInnerProblem:
    """The quadruple (k_in, b, u, c); see the module docstring.

    Construction only checks shape consistency and finiteness; the
    surjectivity and positive-spectrum requirements are reported by
    :func:`validate` and enforced by :meth:`require_valid`.
    """

    k_in: np.ndarray
    b: np.ndarray
    u: np.ndarray
    c: np.ndarray

    def __post_init__(self) -> None:
        k_in = linops.as_matrix(self.k_in, "k_in")
        b = linops.as_matrix(self.b, "b")
        u = linops.as_matrix(self.u, "u")
        c = linops.as_vector(self.c, "c")
        if b.shape != k_in.shape:
            raise DimensionMismatchError(f"b shape {b.shape} != k_in shape {k_in.shape}")
        if u.shape[0] != k_in.shape[0]:
            raise DimensionMismatchError(f"u has {u.shape[0]} rows, expected {k_in.shape[0]}")
        if c.shape[0] != k_in.shape[0]:
            raise DimensionMismatchError(f"c has length {c.shape[0]}, expected {k_in.shape[0]}")
        object.__setattr__(self, "k_in", _freeze(k_in))
        object.__setattr__(self, "b", _freeze(b))
        object.__setattr__(self, "u", _freeze(u))
        object.__setattr__(self, "c", _freeze(c))
        object.__setattr__(self, "_diagnostics", None)

    @property
    def d_x(self) -> int:
        return self.k_in.shape[0]

    @property
    def d_z(self) -> int:
        return self.k_in.shape[1]

    @property
    def d_theta(self) -> int:
        return self.u.shape[1]

    def residual(self, z: np.ndarray, theta: np.ndarray) -> np.ndarray:
        """f(z, theta) = k_inᵀ(b z + u theta + c)."""
        z = np.asarray(z, dtype=float).reshape(-1)
        theta = np.asarray(theta, dtype=float).reshape(-1)
        if z.shape[0] != self.d_z:
            raise DimensionMismatchError(f"z has length {z.shape[0]}, expected {self.d_z}")
        if theta.shape[0] != self.d_theta:
            raise DimensionMismatchError(
                f"theta has length {theta.shape[0]}, expected {self.d_theta}"
            )
        return self.k_in.T @ (self.b @ z + self.u @ theta + self.c)

    def bk_t(self) -> np.ndarray:
        """The d_x x d_x matrix b·k_inᵀ driving the iteration."""
        return self.b @ self.k_in.T

    def require_valid(self) -> None:
        diag = validate(self)
        if not diag.ok:
            raise InvalidProblemError("; ".join(diag.messages))


@dataclass(frozen=True)
class FixedPointConfig:
    """Step size, initialization and iteration count of the solver."""

    eta: float
    z0: np.ndarray
    n: int

    def __post_init__(self) -> None:
        if not (self.eta > 0 and math.isfinite(self.eta)):
            raise ValueError(f"eta must be a positive finite real, got {self.eta}")
        if self.n < 0:
            raise ValueError(f"n must be >= 0, got {self.n}")
        object.__setattr__(self, "z0", _freeze(linops.as_vector(self.z0, "z0")))
        object.__setattr__(self, "n", int(self.n))


@dataclass
class ProblemDiagnostics:
    """Per-invariant verdicts for an :class:`AffineInnerProblem`."""

    k_in_rank: int
    surjective: bool
    spectrum: linops.SpectrumReport
    positive_spectrum: bool
    messages: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.surjective and self.positive_spectrum


def validate(p: AffineInnerProblem) -> ProblemDiagnostics:
    """Check surjectivity of k_in and the spectrum of b·k_inᵀ.

    Violations are reported in the diagnostics, never raised.
    """
    cached = getattr(p, "_diagnostics", None)
    if cached is not None:
        return cached
    messages: list[str] = []
    k_rank = linops.rank(p.k_in)
    surjective = k_rank == p.d_x
    if p.d_x > p.d_z:
        messages.append(f"k_in cannot be surjective: d_x={p.d_x} > d_z={p.d_z}")
    elif not surjective:
        messages.append(f"k_in is not surjective: rank {k_rank} < d_x={p.d_x}")
    spec = linops.spectrum(p.bk_t())
    positive = spec.min_real_part > SPECTRAL_TOL
    if not positive:
        messages.append(
            f"b·k_inᵀ has an eigenvalue with nonpositive real part "
            f"(min real part {spec.min_real_part:.3e} <= {SPECTRAL_TOL})"
        )
    diag = ProblemDiagnostics(
        k_in_rank=k_rank,
        surjective=surjective,
        spectrum=spec,
        positive_spectrum=positive,
        messages=messages,
    )
    object.__setattr__(p, "_diagnostics", diag)
    return diag


def default_step_size(p: AffineInnerProblem) -> float:
    """Largest safe fixed step, damped by 0.9.

    For each eigenvalue lam of b·k_inᵀ, |1 − eta·lam| < 1 iff
    eta < 2·Re(lam)/|lam|²; the returned step is 0.9 times the smallest such
    limit, so the iteration matrix I − eta·b·k_inᵀ has spectral radius < 1.
    """
    p.require_valid()
    eigs = validate(p).spectrum.eigenvalues
    limits = 2.0 * eigs.real / np.abs(eigs) ** 2
    return float(0.9 * np.min(limits))


def iterate(p: AffineInnerProblem, theta, cfg: FixedPointConfig) -> np.ndarray:
    """Run the literal recursion z ← z − eta·f(z, theta) for cfg.n steps."""
    p.require_valid()
    theta = linops.as_vector(theta, "theta")
    z = cfg.z0.copy()
    if z.shape[0] != p.d_z:
        raise DimensionMismatchError(f"z0 has length {z.shape[0]}, expected {p.d_z}")
    for _ in range(cfg.n):
        z = z - cfg.eta * p.residual(z, theta)
    return z


class LinearProcedure:
    """The N-step solver in closed form: z_N(theta) = k_inᵀ E_N u theta + r_N.

    ``n0`` (the smallest step count certifying E_N invertible) is computed
    lazily on first access.  ``n`` may be ``math.inf`` for the exact
    fixed-point limit.
    """

    def __init__(self, problem: AffineInnerProblem, eta: float, e_n: np.ndarray,
                 r_n: np.ndarray, n, n0: int | None = None):
        self.problem = problem
        self.eta = float(eta)
        self.e_n = _freeze(e_n)
        self.r_n = _freeze(r_n)
        self.n = n
        self._n0 = n0

    @property
    def n0(self) -> int:
        if self._n0 is None:
            self._n0 = invertibility_threshold(self.problem, self.eta)
        return self._n0

    def apply(self, theta) -> np.ndarray:
        theta = linops.as_vector(theta, "theta")
        if theta.shape[0] != self.problem.d_theta:
            raise DimensionMismatchError(
                f"theta has length {theta.shape[0]}, expected {self.problem.d_theta}"
            )
        return self.problem.k_in.T @ (self.e_n @ (self.problem.u @ theta)) + self.r_n

    def coefficient(self) -> np.ndarray:
        """The d_z x d_theta linear part k_inᵀ E_N u of theta ↦ z_N(theta)."""
        return self.problem.k_in.T @ self.e_n @ self.problem.u


def apply(proc: LinearProcedure, theta) -> np.ndarray:
    """Evaluate the closed-form iterate z_N(theta)."""
    return proc.apply(theta)


def _inverse_bk_t(p: AffineInnerProblem) -> np.ndarray:
    m = p.bk_t()
    s = np.linalg.svd(m, compute_uv=False)
    cutoff = linops.RANK_REL_TOL * float(s[0]) * max(m.shape) if s[0] > 0 else 0.0
    if s[-1] <= cutoff:
        raise SingularMatrixError(
            f"b·k_inᵀ is numerically singular (smallest singular value {s[-1]:.3e})"
        )
    if s[-1] < NEAR_SINGULAR_RTOL * s[0]:
        warnings.warn(
            f"b·k_inᵀ is near-singular (condition number {s[0] / s[-1]:.3e}); "
            "closed-form state may lose accuracy",
            RuntimeWarning,
            stacklevel=3,
        )
    return np.linalg.inv(m)


def closed_form_state(p: AffineInnerProblem, eta: float, z0, n: int, *,
                      n0: int | None = None) -> LinearProcedure:
    """E_N and r_N of the N-step iteration, computed exactly.

    The matrix power uses repeated squaring, so defective iteration matrices
    are handled without eigendecomposition.
    """
    p.require_valid()
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    z0 = linops.as_vector(z0, "z0")
    if z0.shape[0] != p.d_z:
        raise DimensionMismatchError(f"z0 has length {z0.shape[0]}, expected {p.d_z}")
    bk = p.bk_t()
    eye = np.eye(p.d_x)
    m_pow = linops.matrix_power(eye - eta * bk, int(n))
    e_n = (m_pow - eye) @ _inverse_bk_t(p)
    r_n = p.k_in.T @ (e_n @ (p.c + p.b @ z0)) + z0
    return LinearProcedure(p, eta, e_n, r_n, int(n), n0=n0)


def closed_form_limit(p: AffineInnerProblem, eta: float, z0) -> LinearProcedure:
    """The exact fixed-point limit: E_inf = −(b·k_inᵀ)⁻¹."""
    p.require_valid()
    z0 = linops.as_vector(z0, "z0")
    if z0.shape[0] != p.d_z:
        raise DimensionMismatchError(f"z0 has length {z0.shape[0]}, expected {p.d_z}")
    e_inf = -_inverse_bk_t(p)
    r_inf = p.k_in.T @ (e_inf @ (p.c + p.b @ z0)) + z0
    return LinearProcedure(p, eta, e_inf, r_inf, math.inf, n0=None)


def invertibility_threshold(p: AffineInnerProblem, eta: float,
                            n_max: int = DEFAULT_N_MAX) -> int:
    """Smallest N <= n_max with ‖(I − eta·b·k_inᵀ)^N‖₂ < 0.5.

    Below operator norm 0.5 the matrix (I − eta·b·k_inᵀ)^N − I, and with it
    E_N, is invertible with a comfortable margin.  The 0.5 cutoff is a free
    choice; any value below 1 certifies invertibility.
    """
    p.require_valid()
    m = np.eye(p.d_x) - eta * p.bk_t()
    radius = linops.spectrum(m).spectral_radius
    if radius >= 1.0 - 1e-14:
        raise ThresholdNotReachedError(
            f"iteration matrix has spectral radius {radius:.6f} >= 1; "
            f"the norm ‖M^N‖ never drops below 0.5"
        )
    power = m.copy()
    for k in range(1, n_max + 1):
        if linops.operator_norm(power) < 0.5:
            return k
        power = power @ m
    raise ThresholdNotReachedError(f"norm still >= 0.5 after n_max={n_max} steps")

"""Dense linear-algebra utilities and a deterministic seeded random source.

Rank decisions everywhere in the package use one rule: a singular value is
treated as zero when it falls below ``RANK_REL_TOL * s_max * max(rows, cols)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

RANK_REL_TOL = 1e-12

_MASK64 = 0xFFFFFFFFFFFFFFFF


class LinAlgInputError(ValueError):
    """Raised when an input matrix is malformed (non-finite, wrong shape)."""


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a 2-D float64 array and reject non-finite entries."""
    m = np.asarray(a, dtype=float)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise LinAlgInputError(f"{name} must be a 2-D array with at least one entry")
    if not np.all(np.isfinite(m)):
        raise LinAlgInputError(f"{name} has non-finite entries")
    return m


def as_vector(a, name: str = "vector") -> np.ndarray:
    """Coerce to a 1-D float64 array and reject non-finite entries."""
    v = np.asarray(a, dtype=float).reshape(-1)
    if not np.all(np.isfinite(v)):
        raise LinAlgInputError(f"{name} has non-finite entries")
    return v


def _singular_value_cutoff(s: np.ndarray, shape: tuple[int, int]) -> float:
    if s.size == 0:
        return 0.0
    return RANK_REL_TOL * float(s[0]) * max(shape)


def rank(a) -> int:
    """Numerical rank under the package-wide singular value cutoff."""
    m = as_matrix(a)
    s = np.linalg.svd(m, compute_uv=False)
    return int(np.sum(s > _singular_value_cutoff(s, m.shape)))


def pinv(a) -> np.ndarray:
    """Moore-Penrose pseudo-inverse via SVD.

    Singular values below ``RANK_REL_TOL * s_max * max(rows, cols)`` are
    truncated to zero before inversion.
    """
    m = as_matrix(a)
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    keep = s > _singular_value_cutoff(s, m.shape)
    inv_s = np.zeros_like(s)
    inv_s[keep] = 1.0 / s[keep]
    return (vt.T * inv_s) @ u.T


def proj_range(a) -> np.ndarray:
    """Orthogonal projector onto the column space of ``a``.

    Returns the symmetric idempotent P = Q Qᵀ, with Q the left singular
    vectors kept by the rank rule.  A (numerically) zero matrix projects
    onto the empty range, i.e. returns the zero matrix.
    """
    m = as_matrix(a)
    u, s, _ = np.linalg.svd(m, full_matrices=False)
    r = int(np.sum(s > _singular_value_cutoff(s, m.shape)))
    if r == 0:
        return np.zeros((m.shape[0], m.shape[0]))
    q = u[:, :r]
    return q @ q.T


@dataclass(frozen=True)
class SpectrumReport:
    """Full eigenvalue list with its two summary statistics."""

    eigenvalues: np.ndarray
    spectral_radius: float
    min_real_part: float


def spectrum(a) -> SpectrumReport:
    """Eigenvalues of a square matrix plus spectral radius and min real part."""
    m = as_matrix(a)
    if m.shape[0] != m.shape[1]:
        raise LinAlgInputError(f"spectrum needs a square matrix, got {m.shape}")
    eigs = np.linalg.eigvals(m)
    return SpectrumReport(
        eigenvalues=eigs,
        spectral_radius=float(np.max(np.abs(eigs))),
        min_real_part=float(np.min(eigs.real)),
    )


def matrix_power(a, n: int) -> np.ndarray:
    """Integer matrix power by repeated squaring (n >= 0)."""
    m = as_matrix(a)
    if m.shape[0] != m.shape[1]:
        raise LinAlgInputError("matrix_power needs a square matrix")
    if n < 0:
        raise ValueError("matrix_power exponent must be >= 0")
    return np.linalg.matrix_power(m, int(n))


def operator_norm(a) -> float:
    """Largest singular value."""
    return float(np.linalg.norm(as_matrix(a), 2))


def _splitmix64(seed: int, index: int) -> int:
    """SplitMix64 finalizer; mixes (seed, index) into a child seed."""
    z = (seed + (index + 1) * 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


GAUSSIAN_ALGORITHM_ID = "philox4x32-10/box-muller"


@dataclass(frozen=True)
class SeededSource:
    """Deterministic random source: a Philox4x32-10 stream keyed by ``seed``.

    A SeededSource is a value: drawing from it never mutates it, so the same
    source always yields the same stream.  Independent streams are obtained
    with :meth:`child`, which mixes (seed, index) through SplitMix64.
    Standard normals come from the Box-Muller transform applied to Philox
    uniforms; both algorithms have fixed published constants, so identical
    seeds reproduce identical streams.
    """

    seed: int
    algorithm_id: str = field(default=GAUSSIAN_ALGORITHM_ID)

    def __post_init__(self) -> None:
        object.__setattr__(self, "seed", int(self.seed) & _MASK64)

    def child(self, index: int) -> "SeededSource":
        """Independent child source; the mixing rule is SplitMix64."""
        return SeededSource(_splitmix64(self.seed, int(index)))

    def uniforms(self, count: int) -> np.ndarray:
        """``count`` doubles uniform on (0, 1]."""
        gen = np.random.Generator(np.random.Philox(key=self.seed))
        return 1.0 - gen.random(count)

    def normals(self, count: int) -> np.ndarray:
        """``count`` i.i.d. standard normals via Box-Muller."""
        if count < 0:
            raise ValueError("count must be >= 0")
        pairs = (count + 1) // 2
        u = self.uniforms(2 * pairs)
        u1, u2 = u[:pairs], u[pairs:]
        radius = np.sqrt(-2.0 * np.log(u1))
        angle = 2.0 * np.pi * u2
        z = np.concatenate([radius * np.cos(angle), radius * np.sin(angle)])
        return z[:count]


def gaussian_matrix(src: SeededSource, rows: int, cols: int) -> np.ndarray:
    """rows x cols matrix of i.i.d. standard normals drawn from ``src``."""
    if rows < 1 or cols < 1:
        raise ValueError("gaussian_matrix needs rows, cols >= 1")
    return src.normals(rows * cols).reshape(rows, cols)


def gaussian_vector(src: SeededSource, n: int) -> np.ndarray:
    """Length-n vector of i.i.d. standard normals drawn from ``src``."""
    if n < 1:
        raise ValueError("gaussian_vector needs n >= 1")
    return src.normals(n)

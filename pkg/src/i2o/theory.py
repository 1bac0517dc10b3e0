"""Loss-gap bounds and the synthetic experiments that exercise them.

The central quantity is the training-loss change when the trained outer
variable is evaluated with a different inner iteration count,

    d_gap(N, dN) = l(z_{N+dN}(theta*)) − l(z_N(theta*)),

which for exact outer minimizers is bounded below by

    −½ ‖(P(C) − P(C E_N U)) (K_out r_N − omega)‖²,   C = K_out k_inᵀ,

independently of dN (``lower_bound``).  Two regimes follow: with U
surjective the bound is zero (no gain from extra iterations, ever), and for
Gaussian U the expected bound shrinks as d_theta approaches d_x
(``avg_case_rhs`` / ``monte_carlo_avg_case``).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import linops, outer
from .inner import (
    AffineInnerProblem,
    InvalidProblemError,
    closed_form_state,
    default_step_size,
    validate,
)
from .linops import SeededSource, gaussian_matrix, gaussian_vector
from .outer import QuadraticOuterLoss, TrainedOuter

BOUND_SLACK = 1e-7
MC_FP_SLACK = 1e-9
ZERO_MEAN_GUARD = 1e-12


class BoundViolationError(RuntimeError):
    """A report row or aggregate violates its guaranteed inequality."""


class HypothesisError(ValueError):
    """Inputs violate the hypotheses of the requested bound."""


def _map_over_seeds(fn: Callable[[int], object], seeds: Sequence[int]) -> list:
    """Apply fn per seed, optionally on a thread pool capped by I2O_THREADS.

    Results come back in input order, so parallelism never changes output.
    """
    workers = int(os.environ.get("I2O_THREADS", "1") or "1")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, seeds))
    return [fn(s) for s in seeds]


def lower_bound(p: AffineInnerProblem, l: QuadraticOuterLoss, eta: float,
                z0, n: int) -> float:
    """−½‖(P(C) − P(C E_N U))(K_out r_N − omega)‖², always <= 0."""
    proc = closed_form_state(p, eta, z0, n)
    c_mat = l.k_out @ p.k_in.T
    v = l.k_out @ proc.r_n - l.omega
    diff = linops.proj_range(c_mat) - linops.proj_range(c_mat @ proc.e_n @ p.u)
    return -0.5 * float(np.sum((diff @ v) ** 2))


def d_gap(p: AffineInnerProblem, l: QuadraticOuterLoss, eta: float, z0,
          trained: TrainedOuter, n: int, delta_n) -> float:
    """l(z_{n+delta_n}(theta)) − l(z_n(theta)) for the trained theta.

    ``delta_n`` must exceed −n; ``math.inf`` evaluates the exact fixed point.
    """
    if not (delta_n > -n):
        raise ValueError(f"delta_n must be > -n = {-n}, got {delta_n}")
    n_eval = math.inf if (isinstance(delta_n, float) and math.isinf(delta_n)) else n + delta_n
    return (outer.loss_at(p, l, eta, z0, trained.theta, n_eval)
            - outer.loss_at(p, l, eta, z0, trained.theta, n))


def optimal_loss_prediction(p: AffineInnerProblem, l: QuadraticOuterLoss,
                            eta: float, z0, n: int) -> float:
    """Projector form of the optimal unrolled loss at iteration count n:

    ½‖(P(C) − P(C E_N U)) v_N‖² + ½‖(I − P(C)) v_N‖².
    """
    proc = closed_form_state(p, eta, z0, n)
    c_mat = l.k_out @ p.k_in.T
    v = l.k_out @ proc.r_n - l.omega
    p_c = linops.proj_range(c_mat)
    p_ceu = linops.proj_range(c_mat @ proc.e_n @ p.u)
    coupled = (p_c - p_ceu) @ v
    orthogonal = v - p_c @ v
    return 0.5 * float(coupled @ coupled) + 0.5 * float(orthogonal @ orthogonal)


@dataclass(frozen=True)
class I2ORow:
    seed: int
    n: int
    delta_n: float
    loss_n: float
    loss_n_dn: float
    d_gap: float
    lower_bound: float


@dataclass
class I2OReport:
    """Sweep rows plus run metadata; row invariants checked on construction."""

    rows: list[I2ORow]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        bad = []
        for row in self.rows:
            if row.loss_n < 0 or row.loss_n_dn < 0:
                bad.append((row, "negative loss"))
            elif row.d_gap < row.lower_bound - BOUND_SLACK * (1.0 + abs(row.lower_bound)):
                bad.append((row, "d_gap below lower bound"))
        if bad:
            row, why = bad[0]
            raise BoundViolationError(
                f"{len(bad)} row(s) violate the report invariant; first: {why} at "
                f"seed={row.seed} n={row.n} delta_n={row.delta_n} "
                f"(d_gap={row.d_gap:.12e}, lower_bound={row.lower_bound:.12e})"
            )

    def min_gap_row(self) -> I2ORow:
        return min(self.rows, key=lambda r: r.d_gap)


_TRAINERS = {
    "closed_form": lambda p, l, eta, z0, n: outer.train_closed_form(p, l, eta, z0, n),
    "unrolled_gd": lambda p, l, eta, z0, n: outer.train_unrolled_gd(p, l, eta, z0, n),
    "ift_gd": lambda p, l, eta, z0, n: outer.train_ift(p, l, eta, z0, n),
}


def sweep(p: AffineInnerProblem, l: QuadraticOuterLoss, eta: float, z0,
          n: int, delta_grid: Sequence, trainer: str = "closed_form",
          seed: int = 0) -> I2OReport:
    """Train once at n, then tabulate the loss over the delta_n grid."""
    if trainer not in _TRAINERS:
        raise ValueError(f"unknown trainer {trainer!r}; pick one of {sorted(_TRAINERS)}")
    trained = _TRAINERS[trainer](p, l, eta, z0, n)
    loss_n = outer.loss_at(p, l, eta, z0, trained.theta, n)
    lb = lower_bound(p, l, eta, z0, n)
    rows = []
    for dn in delta_grid:
        if not (dn > -n):
            raise ValueError(f"delta_n must be > -n = {-n}, got {dn}")
        n_eval = math.inf if (isinstance(dn, float) and math.isinf(dn)) else n + dn
        loss_ndn = outer.loss_at(p, l, eta, z0, trained.theta, n_eval)
        rows.append(I2ORow(
            seed=seed, n=int(n), delta_n=dn, loss_n=loss_n, loss_n_dn=loss_ndn,
            d_gap=loss_ndn - loss_n, lower_bound=lb,
        ))
    meta = {"d_x": p.d_x, "d_z": p.d_z, "d_theta": p.d_theta,
            "eta": eta, "trainer": trainer}
    return I2OReport(rows=rows, metadata=meta)


def default_delta_grid(n: int, positive_points: int = 12,
                       negative_points: int = 6) -> list[int]:
    """Linear on the negative side, geometric on the positive side."""
    neg = sorted({-int(round(x)) for x in np.linspace(1, n - 1, negative_points)}) if n > 1 else []
    pos = sorted({int(round(x)) for x in np.geomspace(1, max(10 * n, 10), positive_points)})
    return [*neg, 0, *pos]


def avg_case_rhs(p_template: AffineInnerProblem, l: QuadraticOuterLoss,
                 eta: float, z0, n_grid: Sequence[int]) -> float:
    """−½(1 − min(d_x, d_theta)/d_x)(rho(K_out)·max_N‖r_N‖² + ‖omega‖²).

    Requires k_in invertible and a strongly convex (square, full-rank) outer
    loss; violations raise :class:`HypothesisError`.
    """
    p_template.require_valid()
    if p_template.d_x != p_template.d_z:
        raise HypothesisError(
            f"k_in must be invertible: d_x={p_template.d_x} != d_z={p_template.d_z}"
        )
    if l.k_out.shape[0] != l.k_out.shape[1] or not l.strongly_convex:
        raise HypothesisError("outer loss must be strongly convex with square k_out")
    if len(n_grid) == 0:
        raise HypothesisError("n_grid must be non-empty")
    r_max_sq = max(
        float(np.sum(closed_form_state(p_template, eta, z0, int(k)).r_n ** 2))
        for k in n_grid
    )
    rho = linops.spectrum(l.k_out).spectral_radius
    prefactor = 1.0 - min(p_template.d_x, p_template.d_theta) / p_template.d_x
    return -0.5 * prefactor * (rho * r_max_sq + float(l.omega @ l.omega))


@dataclass(frozen=True)
class AvgCaseSample:
    seed: int
    d_theta: int
    n: int
    magnitude: float           # −lower_bound, >= 0
    rhs_magnitude: float       # −avg_case_rhs for this seed's problem; nan if n/a


@dataclass(frozen=True)
class AvgCaseCell:
    d_theta: int
    n: int
    mean_magnitude: float
    se_magnitude: float
    rhs_magnitude: float       # seed-mean; nan when hypotheses do not apply
    n_seeds: int


@dataclass
class AvgCaseReport:
    """Seed-level bound samples aggregated per (d_theta, n)."""

    samples: list[AvgCaseSample]
    cells: list[AvgCaseCell]
    seeds: list[int]
    metadata: dict = field(default_factory=dict)

    def cell(self, d_theta: int, n: int) -> AvgCaseCell:
        for c in self.cells:
            if c.d_theta == d_theta and c.n == n:
                return c
        raise KeyError((d_theta, n))

    def mean_magnitude_by_dtheta(self) -> dict[int, float]:
        """Mean bound magnitude per d_theta, averaged over seeds and n."""
        out: dict[int, float] = {}
        dthetas = sorted({c.d_theta for c in self.cells})
        for dt in dthetas:
            vals = [c.mean_magnitude for c in self.cells if c.d_theta == dt]
            out[dt] = float(np.mean(vals))
        return out

    def cv_across_n(self, d_theta: int) -> float:
        """Coefficient of variation of the per-n means at fixed d_theta.

        An all-zero column (mean below ZERO_MEAN_GUARD) reports 0: there the
        values are pure rounding noise.
        """
        vals = np.array([c.mean_magnitude for c in self.cells if c.d_theta == d_theta])
        mean = float(np.mean(vals))
        if mean <= ZERO_MEAN_GUARD:
            return 0.0
        return float(np.std(vals) / mean)

    def check_against_rhs(self, n_sigma: float = 3.0) -> None:
        """Require mean bound >= rhs − n_sigma·SE − fp allowance, per cell."""
        for c in self.cells:
            if math.isnan(c.rhs_magnitude):
                continue
            margin = n_sigma * c.se_magnitude + MC_FP_SLACK * (1.0 + c.rhs_magnitude)
            if c.mean_magnitude > c.rhs_magnitude + margin:
                raise BoundViolationError(
                    f"average-case bound violated at d_theta={c.d_theta} n={c.n}: "
                    f"mean magnitude {c.mean_magnitude:.6e} > rhs "
                    f"{c.rhs_magnitude:.6e} + margin {margin:.6e}"
                )


def _aggregate_avg_case(samples: list[AvgCaseSample], seeds: list[int],
                        d_theta_grid: Sequence[int], n_grid: Sequence[int],
                        metadata: dict) -> AvgCaseReport:
    cells = []
    for dt in d_theta_grid:
        rhs_vals = [s.rhs_magnitude for s in samples if s.d_theta == dt]
        rhs_mean = float(np.mean(rhs_vals)) if not any(math.isnan(v) for v in rhs_vals) else math.nan
        for n in n_grid:
            mags = np.array([s.magnitude for s in samples
                             if s.d_theta == dt and s.n == n])
            se = float(np.std(mags, ddof=1) / math.sqrt(len(mags))) if len(mags) > 1 else 0.0
            cells.append(AvgCaseCell(
                d_theta=int(dt), n=int(n),
                mean_magnitude=float(np.mean(mags)), se_magnitude=se,
                rhs_magnitude=rhs_mean, n_seeds=len(mags),
            ))
    return AvgCaseReport(samples=samples, cells=cells, seeds=list(seeds),
                         metadata=metadata)


# --- random instance generators ------------------------------------------

def strongly_convex_parts(src: SeededSource, dim: int):
    """Shared pieces of a strongly convex instance: everything but U.

    k_in = I + 0.1·G resampled until numerically invertible, b = k_in (so
    b·k_inᵀ is symmetric positive definite), k_out symmetric positive
    definite with spectrum in [0.5, 1], and Gaussian c, z0, omega.
    """
    k_in = None
    for attempt in range(100):
        cand = np.eye(dim) + 0.1 * gaussian_matrix(src.child(1).child(attempt), dim, dim)
        if linops.rank(cand) == dim:
            k_in = cand
            break
    if k_in is None:
        raise RuntimeError("could not draw an invertible k_in in 100 attempts")
    c = gaussian_vector(src.child(2), dim)
    z0 = gaussian_vector(src.child(3), dim)
    omega = gaussian_vector(src.child(4), dim)
    q, _ = np.linalg.qr(gaussian_matrix(src.child(5), dim, dim))
    eigs = 0.5 + 0.5 * src.child(6).uniforms(dim)
    k_out = (q * eigs) @ q.T
    return k_in, c, z0, omega, k_out


def strongly_convex_instance(src: SeededSource, dim: int, d_theta: int):
    """A strongly convex inner/outer pair with Gaussian U of width d_theta.

    Returns (problem, loss, z0).
    """
    k_in, c, z0, omega, k_out = strongly_convex_parts(src, dim)
    u = gaussian_matrix(src.child(100 + d_theta), dim, d_theta)
    p = AffineInnerProblem(k_in=k_in, b=k_in, u=u, c=c)
    return p, QuadraticOuterLoss(k_out=k_out, omega=omega), z0


def surjective_instance(src: SeededSource, d_z: int = 5, d_x: int = 4,
                        d_theta: int = 4, outer_rank: int | None = None):
    """Overparametrized instance: U surjective, outer loss convex only.

    The inner map is the gradient of ½‖k_in z + u theta + c‖² (b = k_in);
    the outer loss is rank-deficient when outer_rank < d_z.

    Returns (problem, loss, z0).
    """
    if d_theta < d_x:
        raise ValueError("U cannot be surjective with d_theta < d_x")
    k_in = None
    for attempt in range(100):
        cand = gaussian_matrix(src.child(1).child(attempt), d_x, d_z)
        if linops.rank(cand) == d_x:
            k_in = cand
            break
    if k_in is None:
        raise RuntimeError("could not draw a surjective k_in in 100 attempts")
    u = None
    for attempt in range(100):
        cand = gaussian_matrix(src.child(7).child(attempt), d_x, d_theta)
        if linops.rank(cand) == d_x:
            u = cand
            break
    if u is None:
        raise RuntimeError("could not draw a surjective u in 100 attempts")
    c = gaussian_vector(src.child(2), d_x)
    z0 = gaussian_vector(src.child(3), d_z)
    if outer_rank is None:
        outer_rank = max(d_z - 2, 1)
    k_out = _rank_limited(gaussian_matrix(src.child(5), d_z, d_z), outer_rank)
    omega = gaussian_vector(src.child(4), d_z)
    p = AffineInnerProblem(k_in=k_in, b=k_in, u=u, c=c)
    return p, QuadraticOuterLoss(k_out=k_out, omega=omega), z0


def _rank_limited(a: np.ndarray, target_rank: int) -> np.ndarray:
    u_svd, s, vt = np.linalg.svd(a, full_matrices=False)
    s = s.copy()
    s[target_rank:] = 0.0
    return (u_svd * s) @ vt


def _spd(src: SeededSource, d: int) -> np.ndarray:
    g = gaussian_matrix(src, d, d)
    return g @ g.T / d + 0.2 * np.eye(d)


def random_valid_instance(src: SeededSource, max_dim: int = 12):
    """A random instance satisfying the inner-problem requirements.

    Shapes, ranks of U and k_out, and the symmetry of b·k_inᵀ all vary:
    b = (M + tau·S)·k_in with M symmetric positive definite and S skew,
    accepted by rejection through validate().

    Returns (problem, loss, z0, eta).
    """
    u01 = src.child(0).uniforms(8)
    d_x = 1 + int(u01[0] * max_dim) % max_dim
    d_z = d_x + int(u01[1] * (max_dim - d_x + 1)) % (max_dim - d_x + 1)
    d_theta = 1 + int(u01[2] * max_dim) % max_dim
    d_omega = 1 + int(u01[3] * max_dim) % max_dim

    k_in = None
    for attempt in range(100):
        cand = gaussian_matrix(src.child(1).child(attempt), d_x, d_z)
        if linops.rank(cand) == d_x:
            k_in = cand
            break
    if k_in is None:
        raise RuntimeError("could not draw a surjective k_in in 100 attempts")

    c = gaussian_vector(src.child(2), d_x)
    z0 = gaussian_vector(src.child(3), d_z)
    omega = gaussian_vector(src.child(4), d_omega)

    u = gaussian_matrix(src.child(7), d_x, d_theta)
    if u01[5] < 0.3 and min(d_x, d_theta) > 1:
        u = _rank_limited(u, max(1, min(d_x, d_theta) - 1))
    k_out = gaussian_matrix(src.child(5), d_omega, d_z)
    if u01[6] < 0.3 and min(d_omega, d_z) > 1:
        k_out = _rank_limited(k_out, max(1, min(d_omega, d_z) - 1))

    problem = None
    for attempt in range(50):
        mixer = src.child(8).child(attempt)
        m_spd = _spd(mixer.child(0), d_x)
        g = gaussian_matrix(mixer.child(1), d_x, d_x)
        tau = 0.3 * float(mixer.child(2).uniforms(1)[0]) if attempt > 0 else 0.0
        b = (m_spd + tau * 0.5 * (g - g.T)) @ k_in
        cand = AffineInnerProblem(k_in=k_in, b=b, u=u, c=c)
        if validate(cand).ok:
            problem = cand
            break
    if problem is None:
        problem = AffineInnerProblem(k_in=k_in, b=k_in, u=u, c=c)

    eta = default_step_size(problem) * (0.3 + 0.7 * float(src.child(9).uniforms(1)[0]))
    return problem, QuadraticOuterLoss(k_out=k_out, omega=omega), z0, eta


def trainer_equivalence_instance(src: SeededSource, dim_lo: int = 3, dim_hi: int = 8,
                      max_extra_theta: int = 3):
    """Instance in the trainer-equivalence regime: strongly convex outer
    loss and surjective U (d_theta >= d_x = d_z).

    The outer loss is overdetermined (d_omega = d_z + 2, singular values in
    [0.5, 1]), so the optimal loss is strictly positive and loss equality
    between trainers is informative.

    Returns (problem, loss, z0).
    """
    u01 = src.child(0).uniforms(2)
    span = dim_hi - dim_lo + 1
    d = dim_lo + int(u01[0] * span) % span
    d_theta = d + int(u01[1] * (max_extra_theta + 1)) % (max_extra_theta + 1)
    k_in, c, z0, _, _ = strongly_convex_parts(src, d)
    d_omega = d + 2
    omega = gaussian_vector(src.child(11), d_omega)
    q1, _ = np.linalg.qr(gaussian_matrix(src.child(12), d_omega, d))
    q2, _ = np.linalg.qr(gaussian_matrix(src.child(13), d, d))
    vals = 0.5 + 0.5 * src.child(14).uniforms(d)
    k_out = (q1 * vals) @ q2.T
    u = None
    for attempt in range(200):
        cand = gaussian_matrix(src.child(7).child(attempt), d, d_theta)
        # iterative trainers need a comfortably conditioned U, not just rank d
        if linops.rank(cand) == d and np.linalg.cond(cand) <= 10.0:
            u = cand
            break
    if u is None:
        raise RuntimeError("could not draw a well-conditioned surjective u in 200 attempts")
    p = AffineInnerProblem(k_in=k_in, b=k_in, u=u, c=c)
    return p, QuadraticOuterLoss(k_out=k_out, omega=omega), z0


def rank_deficient_instance(src: SeededSource, d_z: int, d_theta: int,
                            inner_rank: int, outer_rank: int):
    """Non-strongly-convex pair: reduced surjective k_in, kernel in k_out.

    The inner map is the gradient of ½‖k_in z + u theta + c‖² with k_in of
    shape inner_rank x d_z (the surjective reduced form of a rank-deficient
    map), and k_out has its trailing singular values zeroed.

    Returns (problem, loss, z0).
    """
    if not (1 <= inner_rank <= d_z):
        raise ValueError(f"inner_rank must be in [1, {d_z}], got {inner_rank}")
    k_in = None
    for attempt in range(100):
        cand = gaussian_matrix(src.child(1).child(attempt), inner_rank, d_z)
        if linops.rank(cand) == inner_rank:
            k_in = cand
            break
    if k_in is None:
        raise RuntimeError("could not draw a surjective k_in in 100 attempts")
    c = gaussian_vector(src.child(2), inner_rank)
    z0 = gaussian_vector(src.child(3), d_z)
    omega = gaussian_vector(src.child(4), d_z)
    k_out = _rank_limited(gaussian_matrix(src.child(5), d_z, d_z), outer_rank)
    u = gaussian_matrix(src.child(100 + d_theta), inner_rank, d_theta)
    p = AffineInnerProblem(k_in=k_in, b=k_in, u=u, c=c)
    return p, QuadraticOuterLoss(k_out=k_out, omega=omega), z0


# --- Monte Carlo experiments ----------------------------------------------

def monte_carlo_avg_case(dims: int, d_theta_grid: Sequence[int],
                         n_grid: Sequence[int], seeds: Sequence[int]) -> AvgCaseReport:
    """Average-case experiment: per seed, a strongly convex instance and a
    Gaussian U per d_theta; aggregates bound magnitudes per (d_theta, n) and
    verifies the seed-mean against the per-seed average-case RHS.
    """
    seeds = sorted(int(s) for s in seeds)
    if len(set(seeds)) != len(seeds):
        raise ValueError("seeds must be distinct")
    d_theta_grid = [int(d) for d in d_theta_grid]
    n_grid = [int(n) for n in n_grid]

    def one_seed(seed: int) -> list[AvgCaseSample]:
        src = SeededSource(seed)
        k_in, c, z0, omega, k_out = strongly_convex_parts(src, dims)
        l = QuadraticOuterLoss(k_out=k_out, omega=omega)
        out = []
        for dt in d_theta_grid:
            u = gaussian_matrix(src.child(100 + dt), dims, dt)
            p = AffineInnerProblem(k_in=k_in, b=k_in, u=u, c=c)
            eta = default_step_size(p)
            rhs_mag = -avg_case_rhs(p, l, eta, z0, n_grid)
            for n in n_grid:
                mag = -lower_bound(p, l, eta, z0, n)
                out.append(AvgCaseSample(seed=seed, d_theta=dt, n=n,
                                         magnitude=mag, rhs_magnitude=rhs_mag))
        return out

    samples = [s for chunk in _map_over_seeds(one_seed, seeds) for s in chunk]
    report = _aggregate_avg_case(samples, seeds, d_theta_grid, n_grid,
                                 {"dims": dims, "kind": "avgcase"})
    report.check_against_rhs()
    return report


def non_strongly_convex_scan(dims: int, d_theta_grid: Sequence[int],
                             seeds: Sequence[int], *,
                             n_grid: Sequence[int] = (100,),
                             inner_rank: int | None = None,
                             outer_rank: int | None = None) -> AvgCaseReport:
    """Rank-deficient variant: the bound reaches zero before U spans d_z."""
    seeds = sorted(int(s) for s in seeds)
    if len(set(seeds)) != len(seeds):
        raise ValueError("seeds must be distinct")
    d_theta_grid = [int(d) for d in d_theta_grid]
    n_grid = [int(n) for n in n_grid]
    inner_rank = dims // 2 if inner_rank is None else int(inner_rank)
    outer_rank = dims // 2 if outer_rank is None else int(outer_rank)

    def one_seed(seed: int) -> list[AvgCaseSample]:
        src = SeededSource(seed)
        out = []
        for dt in d_theta_grid:
            p, l, z0 = rank_deficient_instance(src, dims, dt, inner_rank, outer_rank)
            eta = default_step_size(p)
            for n in n_grid:
                mag = -lower_bound(p, l, eta, z0, n)
                out.append(AvgCaseSample(seed=seed, d_theta=dt, n=n,
                                         magnitude=mag, rhs_magnitude=math.nan))
        return out

    samples = [s for chunk in _map_over_seeds(one_seed, seeds) for s in chunk]
    if any(s.magnitude < -1e-12 for s in samples):
        raise BoundViolationError("a bound magnitude came out negative")
    return _aggregate_avg_case(samples, seeds, d_theta_grid, n_grid,
                               {"dims": dims, "kind": "nonconvex",
                                "inner_rank": inner_rank, "outer_rank": outer_rank})

"""Stacked affine problems for meta-learning linear models.

Each task i carries a regression training set (X_i, y_i) and a validation
set; task adaptation minimizes

    F_i(z_i, theta) = ½‖X_i z_i − y_i‖² + lam·‖z_i − theta‖²

over the task weights z_i, anchored to the shared meta-parameter theta.
Stacking z = [z_1, ..., z_n] turns the adaptation gradients into one affine
inner problem (k_in = I, b = blockdiag(X_iᵀX_i + lam·I), u = rows of
−lam·I, c = stack of −X_iᵀ y_i), and the summed validation losses into one
quadratic outer loss — so the loss-gap machinery applies unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import linops, theory
from .inner import AffineInnerProblem, default_step_size
from .outer import QuadraticOuterLoss, train_closed_form


def _freeze(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class LinearTask:
    """One regression task: training and validation pairs over R^d."""

    x_train: np.ndarray
    y_train: np.ndarray
    x_val: np.ndarray
    y_val: np.ndarray

    def __post_init__(self) -> None:
        x_train = linops.as_matrix(self.x_train, "x_train")
        y_train = linops.as_vector(self.y_train, "y_train")
        x_val = linops.as_matrix(self.x_val, "x_val")
        y_val = linops.as_vector(self.y_val, "y_val")
        if y_train.shape[0] != x_train.shape[0]:
            raise ValueError(
                f"y_train has length {y_train.shape[0]}, expected {x_train.shape[0]}"
            )
        if y_val.shape[0] != x_val.shape[0]:
            raise ValueError(f"y_val has length {y_val.shape[0]}, expected {x_val.shape[0]}")
        if x_val.shape[1] != x_train.shape[1]:
            raise ValueError(
                f"x_val has {x_val.shape[1]} features, x_train has {x_train.shape[1]}"
            )
        object.__setattr__(self, "x_train", _freeze(x_train))
        object.__setattr__(self, "y_train", _freeze(y_train))
        object.__setattr__(self, "x_val", _freeze(x_val))
        object.__setattr__(self, "y_val", _freeze(y_val))

    @property
    def dim(self) -> int:
        return self.x_train.shape[1]


@dataclass(frozen=True)
class MetaConfig:
    """Anchoring strength and the task list."""

    lam: float
    tasks: tuple[LinearTask, ...]

    def __post_init__(self) -> None:
        if not self.lam > 0:
            raise ValueError(f"lam must be > 0, got {self.lam}")
        tasks = tuple(self.tasks)
        if not tasks:
            raise ValueError("at least one task is required")
        d = tasks[0].dim
        for i, t in enumerate(tasks):
            if t.dim != d:
                raise ValueError(f"task {i} has dimension {t.dim}, expected {d}")
        object.__setattr__(self, "tasks", tasks)

    @property
    def dim(self) -> int:
        return self.tasks[0].dim

    @property
    def n_tasks(self) -> int:
        return len(self.tasks)


def build_inner(cfg: MetaConfig) -> AffineInnerProblem:
    """The stacked adaptation-gradient problem over z = [z_1, ..., z_n].

    Per task, ∇_{z_i} F_i = (X_iᵀX_i + lam·I) z_i − lam·theta − X_iᵀ y_i,
    so b is block-diagonal and symmetric positive definite for lam > 0; the
    built problem therefore always passes validation.
    """
    d, n = cfg.dim, cfg.n_tasks
    total = n * d
    b = np.zeros((total, total))
    u = np.zeros((total, d))
    c = np.zeros(total)
    eye = np.eye(d)
    for i, task in enumerate(cfg.tasks):
        sl = slice(i * d, (i + 1) * d)
        b[sl, sl] = task.x_train.T @ task.x_train + cfg.lam * eye
        u[sl, :] = -cfg.lam * eye
        c[sl] = -task.x_train.T @ task.y_train
    p = AffineInnerProblem(k_in=np.eye(total), b=b, u=u, c=c)
    p.require_valid()
    return p


def build_outer(cfg: MetaConfig) -> QuadraticOuterLoss:
    """Summed validation losses as one block-diagonal quadratic loss."""
    d, n = cfg.dim, cfg.n_tasks
    rows = sum(t.x_val.shape[0] for t in cfg.tasks)
    k_out = np.zeros((rows, n * d))
    omega = np.zeros(rows)
    r0 = 0
    for i, task in enumerate(cfg.tasks):
        m = task.x_val.shape[0]
        k_out[r0:r0 + m, i * d:(i + 1) * d] = task.x_val
        omega[r0:r0 + m] = task.y_val
        r0 += m
    return QuadraticOuterLoss(k_out=k_out, omega=omega)


def adapted_weights(cfg: MetaConfig, theta) -> list[np.ndarray]:
    """Exact per-task adaptation (X_iᵀX_i + lam·I)⁻¹(lam·theta + X_iᵀ y_i)."""
    theta = linops.as_vector(theta, "theta")
    out = []
    for task in cfg.tasks:
        h = task.x_train.T @ task.x_train + cfg.lam * np.eye(cfg.dim)
        out.append(np.linalg.solve(h, cfg.lam * theta + task.x_train.T @ task.y_train))
    return out


def meta_sweep(cfg: MetaConfig, eta: float | None, n: int,
               delta_grid: Sequence, seed: int = 0) -> theory.I2OReport:
    """Train the meta-parameter in closed form and sweep the gap grid."""
    p = build_inner(cfg)
    l = build_outer(cfg)
    if eta is None:
        eta = default_step_size(p)
    z0 = np.zeros(p.d_z)
    report = theory.sweep(p, l, eta, z0, n, delta_grid, trainer="closed_form",
                          seed=seed)
    report.metadata.update({"lam": cfg.lam, "n_tasks": cfg.n_tasks,
                            "task_dim": cfg.dim})
    return report

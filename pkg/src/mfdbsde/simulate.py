"""Forward simulation of the driving noise.

Draws are produced by a counter-based generator (see ``_kernels``): the value
for a given (seed, particle, step, stream) is a pure function of that tuple.
Ensembles are therefore reproducible bit for bit and independent of
evaluation order or parallelism degree.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import PathEnsemble

__all__ = ["SimConfig", "simulate_ensemble", "compensated_increment"]


@dataclass(frozen=True)
class SimConfig:
    """Monte-Carlo sampling configuration."""

    n_particles: int
    seed: int = 0
    antithetic: bool = False

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")


def simulate_ensemble(levy, grid, cfg):
    """Simulate Brownian increments and per-atom Poisson jump counts.

    Brownian increments are i.i.d. centered Gaussians with variance dt;
    jump counts for atom j are i.i.d. Poisson with mean lambda_j * dt.
    With ``antithetic`` enabled, odd particles mirror their even partner
    (negated Gaussian, complementary Poisson inversion).
    """
    n = cfg.n_particles
    N = grid.n_steps
    normals = _kernels.normal_fill(cfg.seed, n, N, cfg.antithetic)
    increments = normals * np.sqrt(grid.dt)
    if levy.n_atoms:
        means = levy.lams * grid.dt
        counts = _kernels.poisson_fill(cfg.seed, n, N, means, cfg.antithetic)
    else:
        counts = np.zeros((n, N, 0), dtype=np.int64)
    return PathEnsemble(grid=grid, brownian_increments=increments, jump_counts=counts)


def compensated_increment(count, lam, dt):
    """Compensated jump increment for one atom over one step: count - lambda*dt."""
    if lam <= 0:
        raise ValueError("intensity must be positive")
    if dt <= 0:
        raise ValueError("dt must be positive")
    return count - lam * dt

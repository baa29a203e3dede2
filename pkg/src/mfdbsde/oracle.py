"""Brute-force ground truth on a tiny scenario tree, plus closed-form cases.

The tree replaces the Brownian increment by +-sqrt(dt) with probability 1/2
and each atom's Poisson count by a Bernoulli(lambda_j*dt) indicator, which
matches one-step means and variances to O(dt^2) while keeping the scenario
set finite.  Backward induction then uses *exact* conditional expectations
(finite sums over branches), and the mean-field law at each level is the
exact node distribution, so the only error against the continuous equation
is time discretization.

Conventions that differ from the Monte-Carlo solver, both O(dt):

* the driver cell integral uses the right-endpoint value (plain discrete
  compounding), so linear benchmark cases have exact closed forms on the
  tree, e.g. the linear mean-field case compounds to (1 + a*dt)^N;
* Z and K are the exact L2(tree) projections on the branch increments,
  i.e. normalized by the tree increment variances dt and q_j(1 - q_j).

The solution map is iterated with frozen driver arguments until two sweeps
agree to 1e-14, giving the exact fixed point of the discretized dynamics.
"""

import math
from dataclasses import dataclass

import numpy as np

from .core import ConfigurationError, steps_for_delta
from .generators import eval_generator_windows
from .measures import EmpiricalMeasure

__all__ = ["TreeModel", "TreeSolution", "tree_solve", "closed_form", "ClosedFormCase"]

_MAX_LEAVES = 4 ** 12
_MAX_SWEEPS = 500


class TreeModel:
    """Full scenario tree for the Bernoulli-jump binomial surrogate."""

    def __init__(self, grid, levy, max_leaves=_MAX_LEAVES):
        if grid.n_steps > 12:
            raise ConfigurationError("tree oracle supports at most 12 steps")
        m = levy.n_atoms
        q = levy.lams * grid.dt
        if (q >= 1.0).any():
            raise ConfigurationError("tree oracle needs lambda_j * dt < 1")
        branching = 2 * 2 ** m
        if branching ** grid.n_steps > max_leaves:
            raise ConfigurationError(
                f"tree with {branching}^{grid.n_steps} leaves exceeds the cap")
        self.grid = grid
        self.levy = levy
        self.branching = branching
        sqdt = math.sqrt(grid.dt)
        self.branch_db = np.empty(branching)
        self.branch_jumps = np.empty((branching, m))
        self.branch_prob = np.empty(branching)
        for b in range(branching):
            sign = 1.0 if (b & 1) else -1.0
            self.branch_db[b] = sign * sqdt
            prob = 0.5
            for j in range(m):
                bit = (b >> (1 + j)) & 1
                self.branch_jumps[b, j] = bit
                prob *= q[j] if bit else 1.0 - q[j]
            self.branch_prob[b] = prob
        self.q = q
        # per-level path summaries and node probabilities
        self.b_paths = [np.zeros(1)]
        self.count_paths = [np.zeros((1, m))]
        self.probs = [np.ones(1)]
        for _ in range(grid.n_steps):
            prev_b = self.b_paths[-1]
            prev_c = self.count_paths[-1]
            prev_p = self.probs[-1]
            self.b_paths.append(
                (prev_b[:, None] + self.branch_db[None, :]).ravel())
            self.count_paths.append(
                (prev_c[:, None, :] + self.branch_jumps[None, :, :]).reshape(
                    prev_c.shape[0] * branching, m))
            self.probs.append((prev_p[:, None] * self.branch_prob[None, :]).ravel())

    def n_nodes(self, level):
        return self.branching ** level


@dataclass(frozen=True)
class TreeSolution:
    """Exact (Y, Z, K) on every tree node; ``y[i]`` is the level-i array."""

    y: list
    z: list
    k: list
    sweeps: int

    @property
    def y0(self):
        return float(self.y[0][0])


def _tree_windows(tree, frozen_y, frozen_z, frozen_k, level, lag):
    """Window arrays (nodes, lag+1, ...) along each node's unique path."""
    B = tree.branching
    N = tree.grid.n_steps
    nodes = tree.n_nodes(level)
    m = tree.levy.n_atoms
    ywin = np.empty((nodes, lag + 1))
    zwin = np.empty((nodes, lag + 1))
    kwin = np.empty((nodes, lag + 1, m))
    pre = np.zeros(lag + 1, dtype=bool)
    node_idx = np.arange(nodes)
    for c in range(lag + 1):
        l = level - lag + c
        if l < 0:
            pre[c] = True
            ywin[:, c] = frozen_y[0][0]
            zwin[:, c] = 0.0
            kwin[:, c, :] = 0.0
            continue
        prefix = node_idx // (B ** (level - l))
        ywin[:, c] = frozen_y[l][prefix]
        lz = min(l, N - 1)
        prefix_z = node_idx // (B ** (level - lz)) if lz <= level else prefix
        zwin[:, c] = frozen_z[lz][prefix_z]
        kwin[:, c, :] = frozen_k[lz][prefix_z, :]
    return ywin, zwin, kwin, pre


def tree_solve(problem, tree):
    """Exact fixed point of the discretized dynamics on the scenario tree."""
    grid = tree.grid
    levy = tree.levy
    N = grid.n_steps
    m = levy.n_atoms
    B = tree.branching
    dt = grid.dt
    lag = steps_for_delta(problem.delay.delta, dt)
    uses_driver = problem.generator.kind != "zero"

    xi = problem.terminal.sample_from_summary(
        tree.b_paths[N], tree.count_paths[N], levy, grid.T)

    frozen_y = [np.zeros(tree.n_nodes(i)) for i in range(N + 1)]
    frozen_z = [np.zeros(tree.n_nodes(i)) for i in range(N)]
    frozen_k = [np.zeros((tree.n_nodes(i), m)) for i in range(N)]

    prob = tree.branch_prob
    w_db = prob * tree.branch_db
    var_jump = tree.q * (1.0 - tree.q)
    w_jump = prob[:, None] * (tree.branch_jumps - tree.q[None, :])

    for sweep in range(1, _MAX_SWEEPS + 1):
        new_y = [None] * (N + 1)
        new_z = [None] * N
        new_k = [None] * N
        new_y[N] = xi.copy()
        if uses_driver:
            f_levels = []
            for i in range(N + 1):
                ywin, zwin, kwin, pre = _tree_windows(
                    tree, frozen_y, frozen_z, frozen_k, i, lag)
                step = min(i, N - 1)
                law = EmpiricalMeasure.triple(
                    frozen_y[i], frozen_z[step][
                        np.arange(tree.n_nodes(i)) // (B ** (i - step))],
                    frozen_k[step][
                        np.arange(tree.n_nodes(i)) // (B ** (i - step)), :],
                    weights=tree.probs[i])
                f_levels.append(eval_generator_windows(
                    problem.generator, grid.nodes[i], ywin, zwin, kwin,
                    law, problem.delay, levy, extended=pre))
        for i in range(N - 1, -1, -1):
            child = new_y[i + 1].reshape(-1, B)
            if uses_driver:
                child = child + dt * f_levels[i + 1].reshape(-1, B)
            new_y[i] = child @ prob
            new_z[i] = (new_y[i + 1].reshape(-1, B) @ w_db) / dt
            if m:
                new_k[i] = (new_y[i + 1].reshape(-1, B) @ w_jump) / var_jump[None, :]
            else:
                new_k[i] = np.zeros((tree.n_nodes(i), 0))
        gap = 0.0
        for i in range(N + 1):
            gap = max(gap, float(np.max(np.abs(new_y[i] - frozen_y[i]), initial=0.0)))
        for i in range(N):
            gap = max(gap, float(np.max(np.abs(new_z[i] - frozen_z[i]), initial=0.0)))
            if m:
                gap = max(gap, float(np.max(np.abs(new_k[i] - frozen_k[i]), initial=0.0)))
        frozen_y, frozen_z, frozen_k = new_y, new_z, new_k
        scale = 1.0 + max(float(np.max(np.abs(new_y[0]), initial=0.0)), 1.0)
        if gap <= 1e-14 * scale:
            return TreeSolution(y=frozen_y, z=frozen_z, k=frozen_k, sweeps=sweep)
        if not np.isfinite(gap):
            raise ConfigurationError("tree iteration diverged")
    raise ConfigurationError("tree iteration did not reach the fixed point")


@dataclass(frozen=True)
class ClosedFormCase:
    """Analytic benchmark solution; unused slots are None."""

    case_id: str
    y: object = None            # y(t, state) pathwise value where available
    z: object = None            # z(t)
    k: object = None            # k(t)
    mean_y: object = None       # E[Y(t)]


def closed_form(case_id, params=None):
    """Analytic solutions for the linear benchmark cases.

    ``constant``: terminal value c, zero driver.
    ``linear_mean_field``: driver a * E[Y(t)], deterministic-mean terminal.
    ``z_drift``: driver b * Z(t), terminal B(T).
    ``pure_jump``: zero driver, terminal compensated count of one atom.
    """
    params = dict(params or {})
    if case_id == "constant":
        c = float(params.get("value", 0.0))
        return ClosedFormCase(case_id=case_id,
                              y=lambda t, state=None: c,
                              z=lambda t: 0.0,
                              k=lambda t: 0.0,
                              mean_y=lambda t: c)
    if case_id == "linear_mean_field":
        a = float(params["a"])
        T = float(params["T"])
        mean_xi = float(params.get("mean_terminal", 1.0))
        return ClosedFormCase(case_id=case_id,
                              mean_y=lambda t: mean_xi * math.exp(a * (T - t)))
    if case_id == "z_drift":
        b = float(params["b"])
        T = float(params["T"])
        return ClosedFormCase(case_id=case_id,
                              y=lambda t, brownian: brownian + b * (T - t),
                              z=lambda t: 1.0,
                              mean_y=lambda t: b * (T - t))
    if case_id == "pure_jump":
        return ClosedFormCase(case_id=case_id,
                              y=lambda t, compensated: compensated,
                              z=lambda t: 0.0,
                              k=lambda t: 1.0,
                              mean_y=lambda t: 0.0)
    raise ValueError(f"unknown closed-form case {case_id!r}")

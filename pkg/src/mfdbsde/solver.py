"""Frozen-driver backward solves and the Picard fixed-point loop.

One application of the solution map takes a candidate triple, evaluates the
driver along the candidate (segments plus the candidate's empirical law),
and solves the resulting plain backward equation by backward induction with
least-squares Monte-Carlo conditional expectations:

* the conditioning state at node i is the Markov summary
  (B(t_i), cumulative jump counts up to t_i);
* Y_i is the regression estimate of E[Y_{i+1} | state_i] plus the driver
  contribution of the cell [t_i, t_{i+1}];
* Z_i and K_i(zeta_j) are the coefficient functions of the martingale
  increments, obtained by jointly regressing the centered one-step value
  Y_{i+1} - E[Y_{i+1} | state_i] on basis(state_i) x (dB_i, dN~_{i,1}, ...).
  These estimate E[Y_{i+1} dB_i | state_i]/dt and
  E[Y_{i+1} dN~_{i,j} | state_i]/(lambda_j dt); centering and the joint
  solve only reduce the estimator variance.

The driver's time integral over a cell uses the trapezoidal value of the
frozen driver at the two cell endpoints, which removes the first-order
rectangle bias from the fixed point (the tiny-tree oracle keeps the plain
right-endpoint rule so its fixed point has an exact closed form on the
benchmark cases).

Picard iteration starts from the zero triple and stops when the weighted
norm of the iterate difference falls below tolerance.  The recorded
``observed_ratios`` are quotients of successive *squared* difference norms,
the scale on which the theoretical contraction factor
(1/rho) * integral of exp(-beta*r) d mu(r) applies.
"""

import warnings
from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np

from .core import ConfigurationError, TripleProcess, beta_norm_sq
from .generators import eval_generator_windows
from .measures import EmpiricalMeasure, GAUSS_MOMENT_3D

__all__ = [
    "RegressionConfig",
    "PicardConfig",
    "PicardDiagnostics",
    "SweepRow",
    "c_prime_sq",
    "beta_choice",
    "contraction_factor",
    "apply_phi",
    "picard_solve",
    "delta_sweep",
]

_DIVERGENCE_CAP = 1e100


@dataclass(frozen=True)
class RegressionConfig:
    """Least-squares Monte-Carlo settings."""

    degree: int = 2
    ridge: float = 0.0
    min_particles_per_coeff: int = 8

    def __post_init__(self):
        if self.degree < 0:
            raise ValueError("degree must be >= 0")
        if self.ridge < 0:
            raise ValueError("ridge must be >= 0")
        if self.min_particles_per_coeff < 1:
            raise ValueError("min_particles_per_coeff must be >= 1")


@dataclass(frozen=True)
class PicardConfig:
    """Fixed-point iteration settings.

    ``rho`` must exceed the delay measure's atom at zero.  ``beta_override``
    replaces the default norm weight; the default (see ``beta_choice``)
    grows so fast with the Lipschitz constant that exp(beta*t) overflows for
    moderate problems, so practical configurations override it.
    """

    rho: float
    tol: float = 1e-6
    max_iters: int = 25
    beta_override: float = None

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.rho <= 0:
            raise ValueError("rho must be positive")


@dataclass(frozen=True)
class PicardDiagnostics:
    """Per-iteration convergence record of the fixed-point loop."""

    iterate_diff_beta_norms: np.ndarray
    observed_ratios: np.ndarray
    theoretical_factor: float
    beta_used: float
    c_prime_sq: float
    converged: bool
    iters: int


@dataclass(frozen=True)
class SweepRow:
    delta: float
    converged: bool
    iters: int
    observed_ratio: float
    theoretical_factor: float


def c_prime_sq(C):
    """Effective squared Lipschitz constant C^2 * (1 + g)^2 with
    g the third Gaussian moment integral over R^3."""
    if C < 0:
        raise ValueError("C must be nonnegative")
    return C ** 2 * (1.0 + GAUSS_MOMENT_3D) ** 2


def beta_choice(rho, cps):
    """Norm weight 1 + 12 * rho * C'^2 that makes the solution map contract."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    return 1.0 + 12.0 * rho * cps


def contraction_factor(rho, beta, delay):
    """(1/rho) * integral of exp(-beta*r) against the delay measure."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    return delay.exp_beta_integral(beta) / rho


# ---------------------------------------------------------------------------
# regression machinery
# ---------------------------------------------------------------------------

def _basis_matrix(state, degree):
    """Monomials of total degree <= degree in the state columns."""
    n, s = state.shape
    cols = [np.ones(n)]
    for d in range(1, degree + 1):
        for combo in combinations_with_replacement(range(s), d):
            col = state[:, combo[0]].copy()
            for v in combo[1:]:
                col = col * state[:, v]
            cols.append(col)
    return np.column_stack(cols)


def _fit_values(design, target, ridge):
    """Least-squares fit; returns the fitted values and coefficients."""
    if ridge > 0.0:
        gram = design.T @ design
        gram[np.diag_indices_from(gram)] += ridge
        coef = np.linalg.solve(gram, design.T @ target)
    else:
        coef = np.linalg.lstsq(design, target, rcond=None)[0]
    return design @ coef, coef


def _law_at(frozen, i, n_steps):
    step = min(i, n_steps - 1)
    return EmpiricalMeasure.triple(frozen.y[:, i], frozen.z[:, step],
                                   frozen.k[:, step, :])


def _driver_values(problem, frozen, ensemble):
    """Frozen-driver values at every node, shape (n_particles, n_steps + 1)."""
    g = problem.generator
    grid = problem.grid
    n = ensemble.n_particles
    N = grid.n_steps
    if g.kind == "zero":
        return np.zeros((n, N + 1))
    levy = problem.levy
    delay = problem.delay
    zidx = np.minimum(np.arange(N + 1), N - 1)

    if g.kind == "linear_state":
        out = g.a * frozen.y + g.b * frozen.z[:, zidx]
        for j, w in enumerate(g.k_weights):
            if w != 0.0:
                out = out + w * frozen.k[:, zidx, j]
        return out

    if g.kind == "delayed_average":
        lag = problem.lag
        out = delay.atom_at_zero * frozen.y
        if lag:
            masses = delay.cell_masses(lag)
            ypad = np.concatenate(
                [np.repeat(frozen.y[:, :1], lag, axis=1), frozen.y], axis=1)
            for c in range(lag):
                out = out + masses[c] * ypad[:, c:c + N + 1]
        return g.a * out

    if g.kind in ("mean_field_moment", "mean_field_mnorm"):
        out = np.empty((n, N + 1))
        for i in range(N + 1):
            law = _law_at(frozen, i, N)
            vals = eval_generator_windows(g, grid.nodes[i], frozen.y[:1, i:i + 1],
                                          frozen.z[:1, zidx[i]:zidx[i] + 1],
                                          frozen.k[:1, zidx[i]:zidx[i] + 1, :],
                                          law, delay, levy)
            out[:, i] = vals[0]
        return out

    # custom: full windows, one law per node
    lag = problem.lag
    out = np.empty((n, N + 1))
    for i in range(N + 1):
        idx = np.arange(i - lag, i + 1)
        pre = idx < 0
        yidx = np.where(pre, 0, idx)
        ywin = frozen.y[:, yidx]
        ywin[:, pre] = frozen.y[:, :1]
        kidx = np.clip(idx, 0, N - 1)
        zwin = frozen.z[:, kidx].copy()
        zwin[:, pre] = 0.0
        kwin = frozen.k[:, kidx, :].copy()
        kwin[:, pre, :] = 0.0
        law = _law_at(frozen, i, N)
        out[:, i] = eval_generator_windows(g, grid.nodes[i], ywin, zwin, kwin,
                                           law, delay, levy, extended=pre)
    return out


def apply_phi(problem, frozen, ensemble, reg):
    """One application of the solution map: solve the frozen-driver equation.

    The driver is evaluated along ``frozen``; the output triple matches the
    sampled terminal condition at the last node exactly.
    """
    grid = problem.grid
    N = grid.n_steps
    dt = grid.dt
    n = ensemble.n_particles
    m = problem.levy.n_atoms
    if frozen.y.shape != (n, N + 1):
        raise ValueError("frozen process does not match the ensemble")

    xi = problem.terminal.sample(ensemble, problem.levy)
    f_nodes = _driver_values(problem, frozen, ensemble)
    driver = 0.5 * (f_nodes[:, :-1] + f_nodes[:, 1:]) * dt

    b_path = ensemble.brownian_path()
    c_path = ensemble.count_paths()
    comp = ensemble.jump_counts - problem.levy.lams * dt if m else None

    n_state = 1 + m
    n_basis = 1
    for d in range(1, reg.degree + 1):
        num = 1
        den = 1
        for r in range(d):
            num *= (n_state + r)
            den *= (r + 1)
        n_basis += num // den
    needed = reg.min_particles_per_coeff * n_basis * (1 + m)
    if n < needed:
        raise ConfigurationError(
            f"{n} particles cannot support {n_basis * (1 + m)} regression "
            f"coefficients (need at least {needed})")

    y = np.empty((n, N + 1))
    z = np.empty((n, N))
    k = np.empty((n, N, m))
    y[:, N] = xi
    for i in range(N - 1, -1, -1):
        if m:
            state = np.column_stack([b_path[:, i], c_path[:, i, :]])
        else:
            state = b_path[:, i:i + 1]
        basis = _basis_matrix(state, reg.degree)
        ycond, _ = _fit_values(basis, y[:, i + 1], reg.ridge)
        resid = y[:, i + 1] - ycond
        incs = [ensemble.brownian_increments[:, i]]
        if m:
            incs.extend(comp[:, i, j] for j in range(m))
        design = np.concatenate([basis * inc[:, None] for inc in incs], axis=1)
        _, coef = _fit_values(design, resid, reg.ridge)
        p = basis.shape[1]
        z[:, i] = basis @ coef[:p]
        for j in range(m):
            k[:, i, j] = basis @ coef[(1 + j) * p:(2 + j) * p]
        y[:, i] = ycond + driver[:, i]
    return TripleProcess(y=y, z=z, k=k)


def picard_solve(problem, ensemble, reg, cfg):
    """Iterate the solution map from the zero triple until the weighted norm
    of the iterate difference falls below tolerance.

    Non-convergence within ``max_iters`` (or a diverging iteration) is
    reported through the diagnostics, not raised.
    """
    if cfg.rho <= problem.delay.atom_at_zero:
        raise ConfigurationError(
            f"rho={cfg.rho} must exceed the delay measure's atom at zero "
            f"({problem.delay.atom_at_zero})")
    cps = c_prime_sq(problem.lipschitz_C)
    beta_used = cfg.beta_override if cfg.beta_override is not None else beta_choice(cfg.rho, cps)
    theoretical = contraction_factor(cfg.rho, beta_used, problem.delay)
    if not theoretical < 1.0:
        warnings.warn(
            f"theoretical contraction factor {theoretical} is not below 1; "
            "the fixed-point iteration may not converge", RuntimeWarning,
            stacklevel=2)
    if beta_used * problem.grid.T > 700.0:
        warnings.warn(
            f"norm weight beta={beta_used} overflows exp(beta*t) on this "
            "horizon; consider beta_override", RuntimeWarning, stacklevel=2)

    current = TripleProcess.zeros(ensemble.n_particles, problem.grid,
                                  problem.levy.n_atoms)
    diffs = []
    converged = False
    iters = 0
    for _ in range(cfg.max_iters):
        nxt = apply_phi(problem, current, ensemble, reg)
        iters += 1
        d = float(np.sqrt(beta_norm_sq(nxt - current, beta_used, problem.grid,
                                       problem.levy)))
        diffs.append(d)
        current = nxt
        if not np.isfinite(d) or d > _DIVERGENCE_CAP:
            break
        if d <= cfg.tol:
            converged = True
            break
    diffs = np.array(diffs)
    ratios = []
    for a, b in zip(diffs[:-1], diffs[1:]):
        if a > 0.0 and np.isfinite(a):
            ratios.append((b / a) ** 2)
    diagnostics = PicardDiagnostics(
        iterate_diff_beta_norms=diffs,
        observed_ratios=np.array(ratios),
        theoretical_factor=theoretical,
        beta_used=float(beta_used),
        c_prime_sq=cps,
        converged=converged,
        iters=iters,
    )
    return current, diagnostics


def _rebuild_problem(problem, delay):
    from .core import ProblemSpec

    return ProblemSpec(grid=problem.grid, delay=delay, levy=problem.levy,
                       terminal=problem.terminal, generator=problem.generator,
                       lipschitz_C=problem.lipschitz_C,
                       zero_bound_c=problem.zero_bound_c)


def delta_sweep(problem, deltas, ensemble, reg, cfg):
    """Run the fixed-point solve for each delay value and tabulate outcomes.

    The delay measure keeps its atom weight and density profile, rescaled to
    each requested width; a zero width degenerates to the point mass at
    zero.  ``observed_ratio`` is the median of the recorded squared-norm
    ratios of a run.
    """
    deltas = list(deltas)
    if not deltas:
        raise ValueError("at least one delta value is required")
    rows = []
    for delta in deltas:
        delay = problem.delay.rescaled(delta)
        sub = _rebuild_problem(problem, delay)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            _, diag = picard_solve(sub, ensemble, reg, cfg)
        if diag.observed_ratios.size:
            finite = diag.observed_ratios[np.isfinite(diag.observed_ratios)]
            ratio = float(np.median(finite)) if finite.size else float("inf")
        else:
            ratio = float("nan")
        rows.append(SweepRow(delta=float(delta), converged=diag.converged,
                             iters=diag.iters, observed_ratio=ratio,
                             theoretical_factor=diag.theoretical_factor))
    return rows

import math

import numpy as np
import pytest

from mfdbsde import (DelayMeasure, GeneratorSpec, LevyModel, PicardConfig,
                     ProblemSpec, RegressionConfig, SimConfig,
                     TerminalCondition, TripleProcess, apply_phi, beta_choice,
                     c_prime_sq, contraction_factor, delta_sweep, make_grid,
                     picard_solve, simulate_ensemble)
from mfdbsde.core import ConfigurationError
from mfdbsde.measures import GAUSS_MOMENT_3D

REG = RegressionConfig(degree=2)


def _problem(grid, generator, terminal, levy=None, delay=None, C=1.0, c=2.0):
    return ProblemSpec(grid=grid, delay=delay or DelayMeasure.dirac(),
                       levy=levy if levy is not None else LevyModel.from_atoms([]),
                       terminal=terminal, generator=generator,
                       lipschitz_C=C, zero_bound_c=c)


# ---------------------------------------------------------------------------
# closed-form constants
# ---------------------------------------------------------------------------

def test_c_prime_sq_values():
    g = GAUSS_MOMENT_3D
    assert c_prime_sq(1.0) == pytest.approx((1.0 + g) ** 2, rel=1e-14)
    assert c_prime_sq(1.0) == pytest.approx(87.4691, abs=1e-3)
    assert c_prime_sq(0.0) == 0.0
    assert c_prime_sq(2.0) == pytest.approx(4.0 * c_prime_sq(1.0), rel=1e-14)


def test_beta_choice_values():
    assert beta_choice(1.0, 0.0) == 1.0
    assert beta_choice(2.0, 0.5) == 13.0
    assert beta_choice(1.0, c_prime_sq(1.0)) == pytest.approx(1050.63, abs=0.01)


def test_contraction_factor_closed_forms():
    assert contraction_factor(2.0, 5.0, DelayMeasure.dirac()) == pytest.approx(0.5)
    uni = DelayMeasure.uniform(0.1)
    expected = (math.exp(0.2) - 1.0) / (2.0 * 2.0 * 0.1)
    assert contraction_factor(2.0, 2.0, uni) == pytest.approx(expected, rel=1e-12)
    assert contraction_factor(4.0, 0.0, DelayMeasure.with_atom(0.3, 0.2)) == pytest.approx(0.25)


# ---------------------------------------------------------------------------
# one application of the solution map
# ---------------------------------------------------------------------------

def test_phi_constant_terminal():
    grid = make_grid(1.0, 10)
    prob = _problem(grid, GeneratorSpec.zero(), TerminalCondition.constant(3.0))
    ens = simulate_ensemble(prob.levy, grid, SimConfig(n_particles=500, seed=1))
    out = apply_phi(prob, TripleProcess.zeros(500, grid, 0), ens, REG)
    assert np.allclose(out.y, 3.0, atol=1e-10)
    assert np.allclose(out.z, 0.0, atol=1e-10)


def test_phi_terminal_match_is_exact():
    grid = make_grid(1.0, 10)
    levy = LevyModel.from_atoms([(1.0, 1.0)])
    prob = _problem(grid, GeneratorSpec.zero(),
                    TerminalCondition.linear(const=0.5, brownian_coeff=1.0,
                                             jump_coeffs=(0.3,)), levy=levy)
    ens = simulate_ensemble(levy, grid, SimConfig(n_particles=400, seed=2))
    out = apply_phi(prob, TripleProcess.zeros(400, grid, 1), ens, REG)
    xi = prob.terminal.sample(ens, levy)
    assert np.array_equal(out.y[:, -1], xi)


def test_phi_brownian_martingale_representation():
    grid = make_grid(1.0, 50)
    prob = _problem(grid, GeneratorSpec.zero(), TerminalCondition.brownian())
    ens = simulate_ensemble(prob.levy, grid, SimConfig(n_particles=10000, seed=42))
    out = apply_phi(prob, TripleProcess.zeros(10000, grid, 0), ens, REG)
    zbar = out.z.mean(axis=0)
    assert np.abs(zbar - 1.0).max() < 5e-2
    rms = np.sqrt(((out.y - ens.brownian_path()) ** 2).mean(axis=0))
    assert rms.max() < 5e-2


def test_phi_compensated_poisson_representation():
    grid = make_grid(1.0, 50)
    levy = LevyModel.from_atoms([(1.0, 1.0)])
    prob = _problem(grid, GeneratorSpec.zero(),
                    TerminalCondition.compensated_poisson(0), levy=levy)
    ens = simulate_ensemble(levy, grid, SimConfig(n_particles=10000, seed=11))
    out = apply_phi(prob, TripleProcess.zeros(10000, grid, 1), ens, REG)
    kbar = out.k[:, :, 0].mean(axis=0)
    assert np.abs(kbar - 1.0).max() < 5e-2
    assert np.abs(out.z.mean(axis=0)).max() < 5e-2


def test_phi_discrete_martingale_property():
    grid = make_grid(1.0, 20)
    levy = LevyModel.from_atoms([(1.0, 1.5)])
    prob = _problem(grid, GeneratorSpec.zero(),
                    TerminalCondition.linear(brownian_coeff=1.0, jump_coeffs=(1.0,)),
                    levy=levy)
    n = 20000
    ens = simulate_ensemble(levy, grid, SimConfig(n_particles=n, seed=3))
    out = apply_phi(prob, TripleProcess.zeros(n, grid, 1), ens, REG)
    comp = ens.jump_counts[:, :, 0] - levy.lams[0] * grid.dt
    for i in range(grid.n_steps):
        move = out.y[:, i + 1] - out.y[:, i]
        zpart = out.z[:, i] * ens.brownian_increments[:, i]
        kpart = out.k[:, i, 0] * comp[:, i]
        resid = move - zpart - kpart
        # each term is a zero-mean estimator; bound the mean by the sum of
        # the three sampling scales (the pathwise residual is nearly zero
        # here, so its own std would understate the fluctuation)
        se = (move.std() + zpart.std() + kpart.std()) / math.sqrt(n)
        assert abs(resid.mean()) < 4.0 * se + 1e-9


def test_phi_idempotent_for_zero_generator():
    grid = make_grid(1.0, 10)
    prob = _problem(grid, GeneratorSpec.zero(), TerminalCondition.brownian())
    ens = simulate_ensemble(prob.levy, grid, SimConfig(n_particles=1000, seed=4))
    once = apply_phi(prob, TripleProcess.zeros(1000, grid, 0), ens, REG)
    twice = apply_phi(prob, once, ens, REG)
    assert np.array_equal(once.y, twice.y)
    assert np.array_equal(once.z, twice.z)
    assert np.array_equal(once.k, twice.k)


def test_phi_scaling_equivariance():
    grid = make_grid(1.0, 20)
    levy = LevyModel.from_atoms([(1.0, 1.0)])
    ens = simulate_ensemble(levy, grid, SimConfig(n_particles=2000, seed=5))
    zero = TripleProcess.zeros(2000, grid, 1)
    base = apply_phi(_problem(grid, GeneratorSpec.zero(),
                              TerminalCondition.linear(brownian_coeff=1.0,
                                                       jump_coeffs=(0.5,)),
                              levy=levy), zero, ens, REG)
    doubled = apply_phi(_problem(grid, GeneratorSpec.zero(),
                                 TerminalCondition.linear(brownian_coeff=2.0,
                                                          jump_coeffs=(1.0,)),
                                 levy=levy), zero, ens, REG)
    assert np.abs(doubled.y - 2.0 * base.y).max() < 1e-10
    assert np.abs(doubled.z - 2.0 * base.z).max() < 1e-10
    assert np.abs(doubled.k - 2.0 * base.k).max() < 1e-10


def test_phi_rejects_underdetermined_regression():
    grid = make_grid(1.0, 4)
    prob = _problem(grid, GeneratorSpec.zero(), TerminalCondition.brownian())
    ens = simulate_ensemble(prob.levy, grid, SimConfig(n_particles=10, seed=6))
    with pytest.raises(ConfigurationError):
        apply_phi(prob, TripleProcess.zeros(10, grid, 0), ens,
                  RegressionConfig(degree=3, min_particles_per_coeff=10))


def test_driver_values_match_public_generator_eval():
    # the solver's vectorized driver paths must agree with eval_generator
    # applied to extracted segments, node by node
    from mfdbsde import EmpiricalMeasure, eval_generator, segment_at
    from mfdbsde.solver import _driver_values

    grid = make_grid(1.0, 8)
    levy = LevyModel.from_atoms([(1.0, 1.0)])
    delay = DelayMeasure.with_atom(0.375, 0.4)
    rng = np.random.default_rng(30)
    n = 6
    frozen = TripleProcess(y=rng.normal(size=(n, 9)), z=rng.normal(size=(n, 8)),
                           k=rng.normal(size=(n, 8, 1)))
    ens = simulate_ensemble(levy, grid, SimConfig(n_particles=n, seed=31))
    gens = [GeneratorSpec.linear_state(a=0.7, b=-0.4, k_weights=(0.3,)),
            GeneratorSpec.delayed_average(1.3),
            GeneratorSpec.mean_field_moment(0.9),
            GeneratorSpec.custom(lambda t, s, law, d, l: t * s.y[-1] + s.z[0])]
    for gen in gens:
        prob = _problem(grid, gen, TerminalCondition.constant(0.0), levy=levy,
                        delay=delay)
        table = _driver_values(prob, frozen, ens)
        for i in (0, 1, 4, 8):
            t = grid.nodes[i]
            step = min(i, 7)
            law = EmpiricalMeasure.triple(frozen.y[:, i], frozen.z[:, step],
                                          frozen.k[:, step, :])
            for p in (0, n - 1):
                seg = segment_at(frozen, p, t, delay, grid)
                expected = eval_generator(gen, t, seg, law, delay, levy)
                assert table[p, i] == pytest.approx(expected, rel=1e-12, abs=1e-12)


# ---------------------------------------------------------------------------
# fixed-point iteration
# ---------------------------------------------------------------------------

def test_picard_zero_generator_immediate_fixed_point():
    grid = make_grid(1.0, 10)
    prob = _problem(grid, GeneratorSpec.zero(), TerminalCondition.brownian())
    ens = simulate_ensemble(prob.levy, grid, SimConfig(n_particles=1000, seed=7))
    sol, diag = picard_solve(prob, ens, REG,
                             PicardConfig(rho=2.0, tol=1e-12, beta_override=1.0))
    assert diag.converged
    assert diag.iters == 2  # second sweep certifies the fixed point
    assert diag.iterate_diff_beta_norms[-1] == 0.0
    once = apply_phi(prob, TripleProcess.zeros(1000, grid, 0), ens, REG)
    assert np.array_equal(sol.y, once.y)


def test_picard_linear_mean_field_hits_exponential():
    grid = make_grid(1.0, 50)
    prob = _problem(grid, GeneratorSpec.mean_field_moment(1.0),
                    TerminalCondition.constant(1.0))
    ens = simulate_ensemble(prob.levy, grid, SimConfig(n_particles=10000, seed=8))
    sol, diag = picard_solve(prob, ens, REG,
                             PicardConfig(rho=2.0, tol=1e-8, max_iters=20,
                                          beta_override=1.0))
    assert diag.converged and diag.iters <= 20
    assert abs(sol.y0.mean() - math.e) < 2e-2


def test_picard_girsanov_drift():
    grid = make_grid(1.0, 50)
    prob = _problem(grid, GeneratorSpec.linear_state(b=0.5),
                    TerminalCondition.brownian())
    ens = simulate_ensemble(prob.levy, grid, SimConfig(n_particles=10000, seed=9))
    sol, diag = picard_solve(prob, ens, REG,
                             PicardConfig(rho=2.0, tol=1e-6, beta_override=1.0))
    assert diag.converged
    assert abs(sol.y0.mean() - 0.5) < 5e-2
    assert np.abs(sol.z.mean(axis=0) - 1.0).max() < 5e-2


def test_picard_default_beta_is_the_prescribed_choice():
    # small C keeps the default weight representable: beta = 1 + 24*C'^2(0.01)
    grid = make_grid(1.0, 10)
    prob = _problem(grid, GeneratorSpec.zero(), TerminalCondition.constant(1.0),
                    C=0.01)
    ens = simulate_ensemble(prob.levy, grid, SimConfig(n_particles=500, seed=10))
    _, diag = picard_solve(prob, ens, REG, PicardConfig(rho=2.0, tol=1e-10))
    assert diag.beta_used == pytest.approx(beta_choice(2.0, c_prime_sq(0.01)))
    assert diag.c_prime_sq == pytest.approx(c_prime_sq(0.01))
    assert diag.converged


def test_picard_default_beta_overflow_warns():
    grid = make_grid(1.0, 10)
    prob = _problem(grid, GeneratorSpec.zero(), TerminalCondition.constant(1.0),
                    C=1.0)
    ens = simulate_ensemble(prob.levy, grid, SimConfig(n_particles=500, seed=10))
    with pytest.warns(RuntimeWarning, match="beta"):
        _, diag = picard_solve(prob, ens, REG, PicardConfig(rho=2.0, tol=1e-10))
    assert diag.beta_used > 1000.0


def test_picard_rejects_rho_below_atom():
    grid = make_grid(1.0, 10)
    prob = _problem(grid, GeneratorSpec.zero(), TerminalCondition.constant(1.0))
    ens = simulate_ensemble(prob.levy, grid, SimConfig(n_particles=500, seed=11))
    with pytest.raises(ConfigurationError):
        picard_solve(prob, ens, REG, PicardConfig(rho=1.0, beta_override=1.0))


def test_picard_contraction_ratios_below_factor():
    grid = make_grid(1.0, 50)
    prob = _problem(grid, GeneratorSpec.linear_state(a=1.0),
                    TerminalCondition.brownian())
    ens = simulate_ensemble(prob.levy, grid, SimConfig(n_particles=4000, seed=12))
    _, diag = picard_solve(prob, ens, REG,
                           PicardConfig(rho=2.0, tol=1e-7, beta_override=1.0))
    assert diag.theoretical_factor == pytest.approx(0.5)
    assert diag.observed_ratios.size >= 2
    # geometric decay: ratios fall below factor + 0.1 and stay there
    tail = diag.observed_ratios[1:]
    assert (tail <= 0.6).all()


def test_picard_divergence_reported_not_raised():
    grid = make_grid(1.0, 25)
    delay = DelayMeasure.uniform(0.52)
    prob = _problem(grid, GeneratorSpec.delayed_average(12.0),
                    TerminalCondition.constant(1.0), delay=delay, C=144.0)
    ens = simulate_ensemble(prob.levy, grid, SimConfig(n_particles=500, seed=13))
    with pytest.warns(RuntimeWarning):
        _, diag = picard_solve(prob, ens, REG,
                               PicardConfig(rho=2.0, tol=1e-6, max_iters=12,
                                            beta_override=10.0))
    assert not diag.converged
    assert diag.theoretical_factor > 1.0


# ---------------------------------------------------------------------------
# delay sweep
# ---------------------------------------------------------------------------

def test_delta_sweep_zero_delay_matches_no_delay_solve():
    grid = make_grid(1.0, 25)
    prob = _problem(grid, GeneratorSpec.linear_state(a=1.0),
                    TerminalCondition.constant(1.0),
                    delay=DelayMeasure.uniform(0.2))
    ens = simulate_ensemble(prob.levy, grid, SimConfig(n_particles=1000, seed=14))
    cfg = PicardConfig(rho=2.0, tol=1e-6, max_iters=30, beta_override=1.0)
    rows = delta_sweep(prob, [0.0], ens, REG, cfg)
    assert len(rows) == 1
    assert rows[0].converged
    assert rows[0].theoretical_factor == pytest.approx(0.5)


def test_delta_sweep_threshold_bracketing():
    grid = make_grid(1.0, 50)
    prob = _problem(grid, GeneratorSpec.delayed_average(3.0),
                    TerminalCondition.constant(1.0),
                    delay=DelayMeasure.uniform(0.5), C=9.0)
    ens = simulate_ensemble(prob.levy, grid, SimConfig(n_particles=500, seed=15))
    cfg = PicardConfig(rho=2.0, tol=2e-4, max_iters=50, beta_override=10.0)
    deltas = [0.02, 0.1, 0.3, 0.5]
    rows = delta_sweep(prob, deltas, ens, REG, cfg)
    flags = [r.converged for r in rows]
    assert flags[0] and flags[1]
    assert not flags[-1]
    # single monotone transition
    assert sorted(flags, reverse=True) == flags
    for row, d in zip(rows, deltas):
        expected = contraction_factor(2.0, 10.0, prob.delay.rescaled(d))
        assert row.theoretical_factor == expected


def test_delta_sweep_rejects_empty_list():
    grid = make_grid(1.0, 10)
    prob = _problem(grid, GeneratorSpec.zero(), TerminalCondition.constant(1.0))
    ens = simulate_ensemble(prob.levy, grid, SimConfig(n_particles=200, seed=16))
    with pytest.raises(ValueError):
        delta_sweep(prob, [], ens, REG, PicardConfig(rho=2.0, beta_override=1.0))

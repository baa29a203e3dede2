import numpy as np
import pytest

from mfdbsde import (DelayMeasure, EmpiricalMeasure, FourierQuadrature,
                     GeneratorSpec, LevyModel, ProblemSpec, TerminalCondition,
                     TripleProcess, eval_generator, make_grid, segment_at,
                     validate_assumptions)

GRID = make_grid(1.0, 8)
LEVY = LevyModel.from_atoms([(1.0, 2.0)])


def _segment(y=None, z=None, k=None, delay=None):
    delay = delay or DelayMeasure.uniform(0.25)
    n_nodes = GRID.n_steps + 1
    rng = np.random.default_rng(0)
    proc = TripleProcess(
        y=rng.normal(size=(1, n_nodes)) if y is None else np.asarray(y, float)[None, :],
        z=rng.normal(size=(1, n_nodes - 1)) if z is None else np.asarray(z, float)[None, :],
        k=rng.normal(size=(1, n_nodes - 1, 1)) if k is None else np.asarray(k, float)[None, :, :],
    )
    return segment_at(proc, 0, 0.5, delay, GRID), delay


def _law(y_vals, z_vals=None, marks=None):
    y_vals = np.asarray(y_vals, float)
    if z_vals is None:
        z_vals = np.zeros_like(y_vals)
    if marks is None:
        marks = np.zeros((y_vals.size, 1))
    return EmpiricalMeasure.triple(y_vals, z_vals, marks)


def test_zero_generator():
    seg, delay = _segment()
    g = GeneratorSpec.zero()
    assert eval_generator(g, 0.5, seg, None, delay, LEVY) == 0.0


def test_linear_state_endpoint_values():
    seg, delay = _segment()
    g = GeneratorSpec.linear_state(a=2.0, b=-1.0, k_weights=(0.5,))
    expected = 2.0 * seg.y[-1] - 1.0 * seg.z[-1] + 0.5 * seg.k[-1, 0]
    assert eval_generator(g, 0.5, seg, None, delay, LEVY) == pytest.approx(expected)


def test_delayed_average_dirac_degeneracy():
    delay = DelayMeasure.dirac()
    rng = np.random.default_rng(1)
    n_nodes = GRID.n_steps + 1
    proc = TripleProcess(y=rng.normal(size=(1, n_nodes)),
                         z=rng.normal(size=(1, n_nodes - 1)),
                         k=rng.normal(size=(1, n_nodes - 1, 1)))
    g_delay = GeneratorSpec.delayed_average(1.0)
    g_linear = GeneratorSpec.linear_state(a=1.0)
    for t in GRID.nodes:
        seg = segment_at(proc, 0, t, delay, GRID)
        v1 = eval_generator(g_delay, t, seg, None, delay, LEVY)
        v2 = eval_generator(g_linear, t, seg, None, delay, LEVY)
        assert v1 == pytest.approx(v2, abs=1e-14)
        assert v1 == pytest.approx(proc.y[0, GRID.node_index(t)], abs=1e-14)


def test_delayed_average_uniform_measure():
    seg, delay = _segment(y=np.arange(9, dtype=float))
    g = GeneratorSpec.delayed_average(2.0)
    # window at t = 0.5 with delta = 0.25: offsets -0.25, -0.125, 0 -> wait,
    # grid dt = 0.125, delta = 0.25 -> lag 2; left cells at y-indices 2, 3
    masses = delay.cell_masses(2)
    expected = 2.0 * float(masses @ seg.y[:2])
    assert eval_generator(g, 0.5, seg, None, delay, LEVY) == pytest.approx(expected)


def test_mean_field_moment_two_particles():
    seg, delay = _segment()
    g = GeneratorSpec.mean_field_moment(2.0)
    law = _law([1.0, 3.0])
    assert eval_generator(g, 0.5, seg, law, delay, LEVY) == pytest.approx(4.0)


def test_mean_field_moment_weighted_law():
    seg, delay = _segment()
    g = GeneratorSpec.mean_field_moment(1.0)
    law = EmpiricalMeasure.triple([1.0, 3.0], [0.0, 0.0], np.zeros((2, 1)),
                                  weights=[0.75, 0.25])
    assert eval_generator(g, 0.5, seg, law, delay, LEVY) == pytest.approx(1.5)


def test_linear_kinds_are_linear_in_segment():
    rng = np.random.default_rng(2)
    for g in (GeneratorSpec.linear_state(a=0.7, b=1.3, k_weights=(0.2,)),
              GeneratorSpec.delayed_average(1.1)):
        seg, delay = _segment()
        for alpha in (-2.0, 0.0, 0.5, 3.0):
            scaled = type(seg)(y=alpha * seg.y, z=alpha * seg.z, k=alpha * seg.k,
                               base_time=seg.base_time, dt=seg.dt,
                               offsets=seg.offsets, extended=seg.extended)
            v = eval_generator(g, 0.5, seg, None, delay, LEVY)
            vs = eval_generator(g, 0.5, scaled, None, delay, LEVY)
            assert vs == pytest.approx(alpha * v, rel=1e-12, abs=1e-12)


def test_mnorm_law_permutation_invariance():
    seg, delay = _segment()
    ref = _law([0.0])
    g = GeneratorSpec.mean_field_mnorm(1.0, ref, quad=FourierQuadrature.gauss_hermite(8, 3))
    rng = np.random.default_rng(3)
    y = rng.normal(size=20)
    z = rng.normal(size=20)
    marks = rng.normal(size=(20, 1))
    law = EmpiricalMeasure.triple(y, z, marks)
    perm = rng.permutation(20)
    law_p = EmpiricalMeasure.triple(y[perm], z[perm], marks[perm])
    v1 = eval_generator(g, 0.5, seg, law, delay, LEVY)
    v2 = eval_generator(g, 0.5, seg, law_p, delay, LEVY)
    assert v1 == pytest.approx(v2, rel=1e-12)
    assert v1 > 0.0


def test_custom_callback():
    seg, delay = _segment()
    g = GeneratorSpec.custom(lambda t, s, law, d, l: t + s.y[-1])
    assert eval_generator(g, 0.5, seg, None, delay, LEVY) == pytest.approx(0.5 + seg.y[-1])


def test_generator_spec_validation():
    with pytest.raises(ValueError):
        GeneratorSpec(kind="bogus")
    with pytest.raises(ValueError):
        GeneratorSpec.linear_state(a=float("nan"))
    with pytest.raises(ValueError):
        GeneratorSpec.mean_field_moment(1.0, moment="median")
    with pytest.raises(ValueError):
        GeneratorSpec(kind="mean_field_mnorm", a=1.0)


# ---------------------------------------------------------------------------
# assumption validation
# ---------------------------------------------------------------------------

def _problem(generator, lipschitz_C, zero_bound_c=1.0, delay=None):
    return ProblemSpec(grid=GRID, delay=delay or DelayMeasure.uniform(0.25),
                       levy=LEVY, terminal=TerminalCondition.constant(0.0),
                       generator=generator, lipschitz_C=lipschitz_C,
                       zero_bound_c=zero_bound_c)


def test_validate_zero_generator_passes():
    report = validate_assumptions(GeneratorSpec.zero(), _problem(GeneratorSpec.zero(), 1.0))
    assert report.zero_bound_observed == 0.0
    assert report.max_ratio == 0.0
    assert report.passed


def test_validate_linear_state_with_analytic_constant():
    g = GeneratorSpec.linear_state(a=1.0, b=1.0, k_weights=(1.0,))
    # |df|^2 <= 3 max(a^2, b^2, sum w^2/lambda) * (dY^2 + dZ^2 + sum dK^2 lambda)
    # but the delay measure integrates the bound, so scale by 1/min cell mass
    delay = DelayMeasure.dirac()
    C = 3.0 * max(1.0, 1.0, 1.0 / 2.0)
    report = validate_assumptions(g, _problem(g, C, delay=delay), n_pairs=200, seed=4)
    assert report.max_ratio <= 1.0
    assert report.passed


def test_validate_detects_lipschitz_violation():
    g = GeneratorSpec.delayed_average(10.0)
    report = validate_assumptions(g, _problem(g, 0.1), n_pairs=50, seed=5)
    assert report.max_ratio > 1.0
    assert not report.passed


def test_validate_delayed_average_jensen_constant():
    g = GeneratorSpec.delayed_average(3.0)
    report = validate_assumptions(g, _problem(g, 9.0), n_pairs=200, seed=6)
    assert report.max_ratio <= 1.0
    assert report.passed


def test_validate_zero_bound_violation():
    g = GeneratorSpec.custom(lambda t, s, law, d, l: 5.0)
    report = validate_assumptions(g, _problem(g, 100.0, zero_bound_c=1.0),
                                  n_pairs=10, seed=7)
    assert report.zero_bound_observed == 5.0
    assert not report.passed

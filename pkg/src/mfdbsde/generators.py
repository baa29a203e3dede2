"""Driver functionals f(t, Y_t, Z_t, K_t(.), law) and assumption validators.

Built-in kinds
--------------
``zero``
    Constant zero.
``linear_state``
    a*Y(t) + b*Z(t) + sum_j w_j K(t, zeta_j), endpoint values only.
``delayed_average``
    a * integral of Y(t+r) against the problem's delay measure over
    [-delta, 0] (atom at zero plus left-rectangle cells).
``mean_field_moment``
    a * statistic of the current solution law; selectors: ``y_mean``,
    ``z_mean``, ``y_second_moment``.
``mean_field_mnorm``
    a * norm distance between the current solution law and a fixed
    reference law of (Y, Z, K) triples.
``custom``
    A user callback ``f(t, seg, law, delay, levy) -> float``; must be a pure
    function of its arguments.

The mean-field argument passed to a generator is the empirical law of the
window endpoint (Y(t), Z(t), K(t, .)); window values enter through the
segment argument.
"""

import numbers
from dataclasses import dataclass

import numpy as np

from .core import steps_for_delta
from .measures import EmpiricalMeasure, FourierQuadrature, m_dist_triple_sq

__all__ = [
    "GeneratorSpec",
    "AssumptionReport",
    "eval_generator",
    "eval_generator_windows",
    "validate_assumptions",
]

_KINDS = ("zero", "linear_state", "delayed_average", "mean_field_moment",
          "mean_field_mnorm", "custom")
_MOMENTS = ("y_mean", "z_mean", "y_second_moment")


@dataclass(frozen=True, eq=False)
class GeneratorSpec:
    """Description of a driver functional; build via the class methods."""

    kind: str
    a: float = 0.0
    b: float = 0.0
    k_weights: tuple = ()
    moment: str = "y_mean"
    reference: EmpiricalMeasure = None
    quad: FourierQuadrature = None
    callback: object = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}")
        for name in ("a", "b"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"coefficient {name} must be finite")
        if any(not np.isfinite(w) for w in self.k_weights):
            raise ValueError("k_weights must be finite")
        if self.kind == "mean_field_moment" and self.moment not in _MOMENTS:
            raise ValueError(f"unknown moment selector {self.moment!r}")
        if self.kind == "mean_field_mnorm":
            if self.reference is None:
                raise ValueError("mean_field_mnorm needs a reference measure")
            if self.quad is None:
                object.__setattr__(self, "quad", FourierQuadrature.gauss_hermite(12, 3))
        if self.kind == "custom" and not callable(self.callback):
            raise ValueError("custom generator needs a callable")

    @classmethod
    def zero(cls):
        return cls(kind="zero")

    @classmethod
    def linear_state(cls, a=0.0, b=0.0, k_weights=()):
        return cls(kind="linear_state", a=float(a), b=float(b),
                   k_weights=tuple(float(w) for w in k_weights))

    @classmethod
    def delayed_average(cls, a):
        return cls(kind="delayed_average", a=float(a))

    @classmethod
    def mean_field_moment(cls, a, moment="y_mean"):
        return cls(kind="mean_field_moment", a=float(a), moment=moment)

    @classmethod
    def mean_field_mnorm(cls, a, reference, quad=None):
        return cls(kind="mean_field_mnorm", a=float(a), reference=reference, quad=quad)

    @classmethod
    def custom(cls, callback):
        return cls(kind="custom", callback=callback)

    @property
    def uses_law(self):
        return self.kind in ("mean_field_moment", "mean_field_mnorm", "custom")


def _law_stat(law, selector):
    w = law.weights
    mass = w.sum()
    if mass <= 0:
        return 0.0
    if selector == "y_mean":
        return float(w @ law.points[:, 0] / mass)
    if selector == "z_mean":
        return float(w @ law.points[:, 1] / mass)
    return float(w @ law.points[:, 0] ** 2 / mass)


def eval_generator_windows(g, t, ywin, zwin, kwin, law, delay, levy,
                           extended=None):
    """Evaluate a generator on a batch of windows.

    ``ywin``/``zwin`` have shape (batch, lag + 1) with column c at offset
    -delta + c*dt (last column is the endpoint); ``kwin`` adds an atom axis.
    ``extended`` optionally marks pre-zero-filled columns for custom
    callbacks.  Returns a (batch,) array.
    """
    batch = ywin.shape[0]
    if g.kind == "zero":
        return np.zeros(batch)
    if g.kind == "linear_state":
        out = g.a * ywin[:, -1] + g.b * zwin[:, -1]
        for j, w in enumerate(g.k_weights):
            if w != 0.0:
                out = out + w * kwin[:, -1, j]
        return out
    if g.kind == "delayed_average":
        lag = ywin.shape[1] - 1
        out = delay.atom_at_zero * ywin[:, -1]
        if lag:
            masses = delay.cell_masses(lag)
            out = out + ywin[:, :lag] @ masses
        return g.a * out
    if g.kind == "mean_field_moment":
        return np.full(batch, g.a * _law_stat(law, g.moment))
    if g.kind == "mean_field_mnorm":
        d = np.sqrt(m_dist_triple_sq(law, g.reference, levy, g.quad))
        return np.full(batch, g.a * d)
    # custom: one scalar call per window
    from .core import SegmentTriple

    lag = ywin.shape[1] - 1
    dt = delay.delta / lag if lag else 0.0
    offsets = np.arange(-lag, 1) * dt
    if extended is None:
        extended = np.zeros(lag + 1, dtype=bool)
    out = np.empty(batch)
    for i in range(batch):
        seg = SegmentTriple(y=ywin[i], z=zwin[i], k=kwin[i], base_time=t, dt=dt,
                            offsets=offsets, extended=extended)
        val = g.callback(t, seg, law, delay, levy)
        if not isinstance(val, numbers.Real):
            raise ValueError("custom generator must return a real number")
        out[i] = val
    return out


def eval_generator(g, t, seg, law, delay, levy):
    """Evaluate a generator on one segment (and, for mean-field kinds, a law)."""
    if g.kind == "custom":
        return float(g.callback(t, seg, law, delay, levy))
    lag = seg.y.size - 1
    if g.kind == "delayed_average":
        expected = steps_for_delta(delay.delta, seg.dt) if delay.delta > 0 else 0
        if lag != expected:
            raise ValueError("segment window does not match the delay measure")
    out = eval_generator_windows(g, t, seg.y[None, :], seg.z[None, :],
                                 seg.k[None, :, :], law, delay, levy)
    return float(out[0])


@dataclass(frozen=True)
class AssumptionReport:
    """Numerical check of the generator growth and Lipschitz conditions."""

    zero_bound_observed: float
    zero_bound_c: float
    lipschitz_ratios: np.ndarray
    max_ratio: float
    passed: bool


def _dirac_law(n_atoms):
    return EmpiricalMeasure.triple([0.0], [0.0], np.zeros((1, max(n_atoms, 1))))


def validate_assumptions(g, problem, n_pairs=32, seed=0, eps_stat=0.05,
                         law_points=64, quad=None):
    """Statistically validate the zero bound and the squared Lipschitz bound.

    The zero bound evaluates f on the zero window with the point mass at the
    origin and compares against the problem's constant c.  The Lipschitz
    check draws randomized pairs of windows and per-offset law pairs,
    computes

        |f(seg1, law1) - f(seg2, law2)|^2
        <= C * sum_r mass(r) * ( |dY(r)|^2 + |dZ(r)|^2
                                 + sum_j |dK(r, j)|^2 lambda_j
                                 + dist(law1(r), law2(r))^2 )

    with the problem's constant C and delay measure, and reports the sampled
    ratios.  ``passed`` requires the zero bound and max ratio <= 1 + eps_stat.
    """
    grid = problem.grid
    levy = problem.levy
    delay = problem.delay
    m = levy.n_atoms
    lag = steps_for_delta(delay.delta, grid.dt)
    if quad is None:
        quad = FourierQuadrature.gauss_hermite(8, 3)
    rng = np.random.default_rng(seed)

    zero_y = np.zeros((1, lag + 1))
    zero_k = np.zeros((1, lag + 1, max(m, 1)))
    dirac = _dirac_law(m)
    observed = 0.0
    for t in (0.0, grid.T / 2, grid.T):
        val = eval_generator_windows(g, t, zero_y, zero_y, zero_k, dirac, delay, levy)
        observed = max(observed, abs(float(val[0])))

    masses = np.concatenate([delay.cell_masses(lag), [delay.atom_at_zero]])
    ratios = np.empty(n_pairs)
    for p in range(n_pairs):
        t = grid.nodes[rng.integers(0, grid.n_steps + 1)]
        y1, y2 = rng.normal(size=(2, 1, lag + 1))
        z1, z2 = rng.normal(size=(2, 1, lag + 1))
        k1, k2 = rng.normal(size=(2, 1, lag + 1, max(m, 1)))
        # per-offset law pairs; the generator consumes the endpoint law
        laws1 = []
        laws2 = []
        for _ in range(lag + 1):
            pts = rng.normal(size=(law_points, 2))
            marks = rng.normal(size=(law_points, max(m, 1)))
            shift = rng.normal(scale=0.3, size=2)
            laws1.append(EmpiricalMeasure(pts, marks=marks))
            laws2.append(EmpiricalMeasure(pts + shift, marks=marks))
        f1 = eval_generator_windows(g, t, y1, z1, k1, laws1[-1], delay, levy)
        f2 = eval_generator_windows(g, t, y2, z2, k2, laws2[-1], delay, levy)
        lhs = float(f1[0] - f2[0]) ** 2
        per_offset = (y1[0] - y2[0]) ** 2 + (z1[0] - z2[0]) ** 2
        if m:
            per_offset = per_offset + ((k1[0, :, :m] - k2[0, :, :m]) ** 2) @ levy.lams
        if m and g.uses_law:
            law_d = np.array([m_dist_triple_sq(laws1[c], laws2[c], levy, quad)
                              for c in range(lag + 1)])
            per_offset = per_offset + law_d
        rhs = problem.lipschitz_C * float(masses @ per_offset)
        if rhs == 0.0:
            ratios[p] = 0.0 if lhs == 0.0 else np.inf
        else:
            ratios[p] = lhs / rhs

    max_ratio = float(ratios.max()) if n_pairs else 0.0
    passed = (observed < problem.zero_bound_c) and (max_ratio <= 1.0 + eps_stat)
    return AssumptionReport(zero_bound_observed=observed,
                            zero_bound_c=problem.zero_bound_c,
                            lipschitz_ratios=ratios,
                            max_ratio=max_ratio,
                            passed=bool(passed))

"""Hilbert-space norms on measures via Gaussian-weighted characteristic functions.

A measure mu on R^d is normed by

    ||mu||^2 = integral over R^d of |mu_hat(y)|^2 exp(-|y|^2) dy,

where mu_hat(y) = integral of exp(i <x, y>) d mu(x).  The fixed sign
convention exp(+i<x,y>) is immaterial for the norms because conjugating the
characteristic function preserves its modulus.

The weighted integral is evaluated with tensorized Gauss-Hermite quadrature,
exact for polynomial integrands of degree up to 2*order - 1 per axis.  Two
useful closed forms for empirical measures follow from the Gaussian Fourier
transform and are used as independent oracles in the tests:

    ||delta_x||^2                  = pi^(d/2),
    ||delta_a - delta_b||^2 (d=1)  = 2 sqrt(pi) (1 - exp(-(a-b)^2/4)).

Laws of (Y, Z, K) triples are normed per jump atom: the three-dimensional
law of (Y, Z, K(zeta_j)) enters with the truncated weight
min(1, zeta_j^2) * lambda_j, which keeps the atom sum finite for every
jump-size measure.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import char_tensor3, charfn_flat

__all__ = [
    "GAUSS_MOMENT_3D",
    "EmpiricalMeasure",
    "FourierQuadrature",
    "char_fn",
    "m_norm_sq",
    "m_dist_sq",
    "m_norm_triple_sq",
    "m_dist_triple_sq",
    "m_delta_norm",
    "LawDistanceBoundReport",
    "law_distance_bound_check",
]

#: integral of |y|^2 exp(-|y|^2) over R^3, i.e. (3/2) * pi^(3/2)
GAUSS_MOMENT_3D = 1.5 * math.pi ** 1.5


class EmpiricalMeasure:
    """Weighted sample-point measure on R^d, optionally with jump-mark components.

    Parameters
    ----------
    points : array-like, shape (n, d)
        Sample locations.
    weights : array-like, shape (n,), optional
        Nonnegative weights; defaults to 1/n each.  Their sum is the
        measure's total mass.
    marks : array-like, shape (n, n_atoms), optional
        Per-point values of the jump-mark coordinate, one column per atom.
        Required by the triple norms when the jump model has atoms.
    """

    def __init__(self, points, weights=None, marks=None):
        points = np.asarray(points, dtype=np.float64)
        if points.ndim == 1:
            points = points[:, None]
        if points.ndim != 2:
            raise ValueError("points must be a (n, d) array")
        n = points.shape[0]
        if weights is None:
            weights = np.full(n, 1.0 / n) if n else np.zeros(0)
        else:
            weights = np.asarray(weights, dtype=np.float64).ravel()
        if weights.shape != (n,):
            raise ValueError("one weight per point is required")
        if (weights < 0).any():
            raise ValueError("weights must be nonnegative")
        if marks is not None:
            marks = np.asarray(marks, dtype=np.float64)
            if marks.ndim == 1:
                marks = marks[:, None]
            if marks.shape[0] != n:
                raise ValueError("one mark row per point is required")
        self.points = points
        self.weights = weights
        self.marks = marks

    @property
    def dimension(self):
        return self.points.shape[1]

    @property
    def n_points(self):
        return self.points.shape[0]

    @property
    def total_mass(self):
        return float(self.weights.sum())

    @classmethod
    def from_samples(cls, values, weights=None):
        return cls(np.asarray(values, dtype=np.float64), weights=weights)

    @classmethod
    def point_mass(cls, x):
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        return cls(x[None, :], weights=np.array([1.0]))

    @classmethod
    def triple(cls, y, z, marks, weights=None):
        """Law of (Y, Z) with jump-mark columns, as used for solution laws."""
        pts = np.column_stack([np.asarray(y, dtype=np.float64),
                               np.asarray(z, dtype=np.float64)])
        return cls(pts, weights=weights, marks=marks)


class FourierQuadrature:
    """Tensorized Gauss-Hermite rule for integrals against exp(-|y|^2).

    Per axis it is exact for polynomial integrands of degree up to
    2*order - 1.  ``nodes``/``weights`` expose the flattened tensor grid;
    the per-axis arrays are kept for fast tensor evaluation.
    """

    def __init__(self, axes_nodes, axes_weights, order):
        self.axes_nodes = tuple(np.asarray(a, dtype=np.float64) for a in axes_nodes)
        self.axes_weights = tuple(np.asarray(w, dtype=np.float64) for w in axes_weights)
        self.order = int(order)
        self._flat = None

    @classmethod
    def gauss_hermite(cls, order=40, dim=1):
        if order < 1:
            raise ValueError("order must be >= 1")
        if dim < 1:
            raise ValueError("dim must be >= 1")
        x, w = np.polynomial.hermite.hermgauss(int(order))
        return cls((x,) * dim, (w,) * dim, order)

    @property
    def dim(self):
        return len(self.axes_nodes)

    @property
    def n_nodes(self):
        n = 1
        for a in self.axes_nodes:
            n *= a.size
        return n

    def _flatten(self):
        if self._flat is None:
            grids = np.meshgrid(*self.axes_nodes, indexing="ij")
            nodes = np.column_stack([g.ravel() for g in grids])
            wgrids = np.meshgrid(*self.axes_weights, indexing="ij")
            weights = wgrids[0].ravel().copy()
            for g in wgrids[1:]:
                weights *= g.ravel()
            self._flat = (nodes, weights)
        return self._flat

    @property
    def nodes(self):
        return self._flatten()[0]

    @property
    def weights(self):
        return self._flatten()[1]


def char_fn(mu, y):
    """Characteristic function of an empirical measure at a single point y."""
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if y.shape != (mu.dimension,):
        raise ValueError(
            f"argument dimension {y.shape} does not match measure dimension {mu.dimension}"
        )
    if mu.n_points == 0:
        return complex(0.0)
    return complex(np.sum(mu.weights * np.exp(1j * (mu.points @ y))))


def _char_on_quad(points, weights, quad):
    """Characteristic-function values on the quadrature grid plus node weights."""
    if quad.dim == 3:
        vals = char_tensor3(points[:, 0], points[:, 1], points[:, 2], weights,
                            quad.axes_nodes[0], quad.axes_nodes[1], quad.axes_nodes[2])
        w = np.einsum("p,q,r->pqr", quad.axes_weights[0], quad.axes_weights[1],
                      quad.axes_weights[2])
        return vals, w
    nodes, w = quad._flatten()
    vals = charfn_flat(points, weights, nodes)
    return vals, w


def m_norm_sq(mu, quad):
    """Squared Gaussian-weighted norm of an empirical measure."""
    if quad.dim != mu.dimension:
        raise ValueError("quadrature and measure dimensions differ")
    if mu.n_points == 0:
        return 0.0
    vals, w = _char_on_quad(mu.points, mu.weights, quad)
    return float(np.sum(w * (vals.real ** 2 + vals.imag ** 2)))


def m_dist_sq(mu, eta, quad):
    """Squared norm distance between two empirical measures."""
    if mu.dimension != eta.dimension:
        raise ValueError("measures live on spaces of different dimension")
    if quad.dim != mu.dimension:
        raise ValueError("quadrature and measure dimensions differ")
    vmu, w = _char_on_quad(mu.points, mu.weights, quad) if mu.n_points else (0.0, None)
    veta, w2 = _char_on_quad(eta.points, eta.weights, quad) if eta.n_points else (0.0, None)
    if w is None and w2 is None:
        return 0.0
    w = w if w is not None else w2
    d = vmu - veta
    return float(np.sum(w * (d.real ** 2 + d.imag ** 2)))


def _triple_points(mu, atom):
    if mu.dimension != 2:
        raise ValueError("triple measures carry two real coordinates (Y, Z)")
    if mu.marks is None:
        raise ValueError("triple measures need one mark component per jump atom")
    if atom >= mu.marks.shape[1]:
        raise ValueError("measure has fewer mark components than jump atoms")
    return np.column_stack([mu.points, mu.marks[:, atom]])


def m_norm_triple_sq(mu, levy, quad):
    """Squared norm of the law of a (Y, Z, K) triple.

    Sums, over the jump atoms, the 3-d Gaussian-weighted norm of the law of
    (Y, Z, K(zeta_j)) with weight min(1, zeta_j^2) * lambda_j.
    """
    if levy.n_atoms == 0:
        return 0.0
    if quad.dim != 3:
        raise ValueError("triple norms need a 3-d quadrature")
    if mu.n_points == 0:
        return 0.0
    total = 0.0
    for j, wj in enumerate(levy.min_weights):
        pts = _triple_points(mu, j)
        vals, w = _char_on_quad(pts, mu.weights, quad)
        total += wj * float(np.sum(w * (vals.real ** 2 + vals.imag ** 2)))
    return total


def m_dist_triple_sq(mu, eta, levy, quad):
    """Squared norm distance between two (Y, Z, K)-triple laws."""
    if levy.n_atoms == 0:
        return 0.0
    if quad.dim != 3:
        raise ValueError("triple norms need a 3-d quadrature")
    total = 0.0
    for j, wj in enumerate(levy.min_weights):
        if mu.n_points:
            vmu, w = _char_on_quad(_triple_points(mu, j), mu.weights, quad)
        else:
            vmu, w = 0.0, None
        if eta.n_points:
            veta, w2 = _char_on_quad(_triple_points(eta, j), eta.weights, quad)
        else:
            veta, w2 = 0.0, None
        if w is None and w2 is None:
            continue
        w = w if w is not None else w2
        d = vmu - veta
        total += wj * float(np.sum(w * (d.real ** 2 + d.imag ** 2)))
    return total


def m_delta_norm(segment_of_measures, levy, quad, cell_width=None):
    """Rectangle-rule integral over window offsets of the triple-law norm.

    ``segment_of_measures`` is a list of (offset, measure) pairs whose offsets
    are the left endpoints of equal cells partitioning [-delta, 0).  The cell
    width is inferred from the offset spacing; for a single pair it equals
    -offset unless given explicitly.
    """
    pairs = sorted(segment_of_measures, key=lambda p: p[0])
    if not pairs:
        return 0.0
    offsets = np.array([p[0] for p in pairs], dtype=np.float64)
    if (offsets >= 0).any():
        raise ValueError("offsets must be negative (left cell endpoints)")
    if cell_width is None:
        if offsets.size > 1:
            widths = np.diff(offsets)
            if not np.allclose(widths, widths[0], rtol=1e-9, atol=0.0):
                raise ValueError("offsets must be equally spaced")
            cell_width = float(widths[0])
        else:
            cell_width = float(-offsets[0])
    if cell_width <= 0:
        raise ValueError("cell width must be positive")
    total = 0.0
    for _, measure in pairs:
        total += cell_width * math.sqrt(m_norm_triple_sq(measure, levy, quad))
    return total


@dataclass(frozen=True)
class LawDistanceBoundReport:
    """Outcome of the paired-sample law-distance inequality check."""

    lhs: float
    rhs: float
    constant_used: float
    holds: bool


def law_distance_bound_check(x, x_marks, x_tilde, xt_marks, levy, quad, eps_stat=0.05):
    """Check the law-distance bound on paired samples of (Y, Z, K) triples.

    The left-hand side is the squared triple-law distance of the two
    empirical laws.  The right-hand side is the explicit bound: with
    g = integral of |y|^2 exp(-|y|^2) over R^3 and S the sum of the
    truncated atom weights,

        rhs = g * ( S * (E[(X1 - X1~)^2] + E[(X2 - X2~)^2])
                    + sum_j E[(K_j - K_j~)^2] * min(1, zeta_j^2) * lambda_j ).

    ``holds`` allows a relative statistical margin ``eps_stat`` on top of rhs.
    """
    x = np.asarray(x, dtype=np.float64)
    x_tilde = np.asarray(x_tilde, dtype=np.float64)
    if x.shape != x_tilde.shape or x.ndim != 2 or x.shape[1] != 2:
        raise ValueError("paired samples must be matching (n, 2) arrays")
    n = x.shape[0]
    if levy.n_atoms:
        if x_marks is None or xt_marks is None:
            raise ValueError("mark components are required when the jump model has atoms")
        x_marks = np.asarray(x_marks, dtype=np.float64).reshape(n, -1)
        xt_marks = np.asarray(xt_marks, dtype=np.float64).reshape(n, -1)
        if x_marks.shape != xt_marks.shape or x_marks.shape[1] < levy.n_atoms:
            raise ValueError("mark components must pair up, one per atom")
    mu = EmpiricalMeasure(x, marks=x_marks)
    eta = EmpiricalMeasure(x_tilde, marks=xt_marks)
    lhs = m_dist_triple_sq(mu, eta, levy, quad)

    g = GAUSS_MOMENT_3D
    s = levy.sum_min_weight
    e1 = float(np.mean((x[:, 0] - x_tilde[:, 0]) ** 2))
    e2 = float(np.mean((x[:, 1] - x_tilde[:, 1]) ** 2))
    qnu = 0.0
    for j, wj in enumerate(levy.min_weights):
        qnu += wj * float(np.mean((x_marks[:, j] - xt_marks[:, j]) ** 2))
    rhs = g * (s * (e1 + e2) + qnu)
    holds = lhs <= rhs * (1.0 + eps_stat) or (lhs == 0.0 and rhs == 0.0)
    return LawDistanceBoundReport(lhs=lhs, rhs=rhs, constant_used=g * s, holds=holds)

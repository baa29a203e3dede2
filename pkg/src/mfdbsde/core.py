"""Problem data types, time grid, delay measure, process containers and norms.

Conventions used throughout the package:

* the time grid is uniform on [0, T] with nodes t_i = i*dt;
* Y is stored per node (N+1 values per particle), Z and K per step
  (N values per particle, K with one column per jump atom);
* a segment at time t covers the offsets r in {-delta, ..., -dt, 0} and is
  extended before time zero by Y(t) = Y(0), Z(t) = 0, K(t, .) = 0;
* time integrals over grid cells use the left-rectangle rule, matching the
  predictable convention of the stochastic integrals.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ConfigurationError",
    "TimeGrid",
    "DelayMeasure",
    "LevyModel",
    "TerminalCondition",
    "PathEnsemble",
    "TripleProcess",
    "SegmentTriple",
    "ProblemSpec",
    "make_grid",
    "steps_for_delta",
    "segment_at",
    "seg_norm_sq",
    "beta_norm_sq",
    "sup_norm_sq",
]

_ALIGN_RTOL = 1e-9


class ConfigurationError(ValueError):
    """A configuration is structurally valid but not solvable as given."""


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Uniform time grid on [0, T] with N steps and N+1 nodes."""

    T: float
    n_steps: int
    dt: float
    nodes: np.ndarray

    def node_index(self, t):
        """Index i with t_i == t; raises if t is not a grid node."""
        x = t / self.dt
        i = int(round(x))
        if i < 0 or i > self.n_steps or abs(x - i) > _ALIGN_RTOL * max(1.0, abs(x)):
            raise ValueError(f"time {t!r} is not a node of the grid (dt={self.dt!r})")
        return i


def make_grid(T, n_steps):
    """Build the uniform grid with nodes t_i = i*T/n_steps.

    Raises ValueError for nonpositive horizon or zero steps.
    """
    if not np.isfinite(T) or T <= 0.0:
        raise ValueError(f"horizon must be positive, got {T!r}")
    n_steps = int(n_steps)
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps!r}")
    nodes = np.linspace(0.0, float(T), n_steps + 1)
    return TimeGrid(T=float(T), n_steps=n_steps, dt=float(T) / n_steps, nodes=nodes)


def steps_for_delta(delta, dt):
    """Number of grid cells covered by the delay window; delta must align."""
    if delta < 0:
        raise ValueError(f"delay must be nonnegative, got {delta!r}")
    x = delta / dt
    lag = int(round(x))
    if abs(x - lag) > _ALIGN_RTOL * max(1.0, abs(x)):
        raise ValueError(
            f"delay {delta!r} is not an integer multiple of the step size {dt!r}"
        )
    return lag


@dataclass(frozen=True, eq=False)
class DelayMeasure:
    """Probability measure on [-delta, 0]: an atom at 0 plus a piecewise-constant density.

    ``density`` holds the constant value of the density on each of
    ``len(density)`` equal cells partitioning [-delta, 0).  The atom weight
    plus the density mass must equal one.
    """

    delta: float
    atom_at_zero: float
    density: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        dens = np.asarray(self.density, dtype=np.float64)
        object.__setattr__(self, "density", dens)
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")
        if not 0.0 <= self.atom_at_zero <= 1.0 + 1e-12:
            raise ValueError("atom weight must lie in [0, 1]")
        if (dens < 0).any():
            raise ValueError("density values must be nonnegative")
        if self.delta == 0.0:
            if dens.size and dens.any():
                raise ValueError("zero-delay measure cannot carry a density part")
            mass = self.atom_at_zero
        else:
            if dens.size == 0:
                mass = self.atom_at_zero
            else:
                mass = self.atom_at_zero + dens.sum() * (self.delta / dens.size)
        if abs(mass - 1.0) > 1e-12:
            raise ValueError(f"total mass must be 1, got {mass!r}")

    @classmethod
    def dirac(cls):
        """The unit point mass at offset zero (no delay)."""
        return cls(delta=0.0, atom_at_zero=1.0)

    @classmethod
    def uniform(cls, delta):
        """Uniform density on [-delta, 0], no atom."""
        if delta <= 0:
            raise ValueError("uniform delay measure needs delta > 0")
        return cls(delta=float(delta), atom_at_zero=0.0,
                   density=np.array([1.0 / delta]))

    @classmethod
    def with_atom(cls, delta, atom_at_zero):
        """Atom at zero plus a uniform density carrying the remaining mass."""
        if delta <= 0:
            raise ValueError("use dirac() for delta == 0")
        return cls(delta=float(delta), atom_at_zero=float(atom_at_zero),
                   density=np.array([(1.0 - atom_at_zero) / delta]))

    def cell_masses(self, n_cells):
        """Density mass per cell when [-delta, 0) is split into n_cells cells.

        The requested resolution must refine the stored one exactly.
        """
        if n_cells == 0:
            return np.zeros(0)
        stored = self.density.size
        if stored == 0:
            return np.zeros(n_cells)
        if n_cells % stored != 0:
            raise ValueError(
                f"cannot evaluate a {stored}-cell density on {n_cells} cells"
            )
        values = np.repeat(self.density, n_cells // stored)
        return values * (self.delta / n_cells)

    def exp_beta_integral(self, beta):
        """Closed form of the weighted mass integral of exp(-beta*r) over [-delta, 0]."""
        total = self.atom_at_zero
        ncells = self.density.size
        if ncells and self.delta > 0:
            width = self.delta / ncells
            edges = -self.delta + width * np.arange(ncells + 1)
            if beta == 0.0:
                total += float(self.density.sum() * width)
            else:
                with np.errstate(over="ignore"):
                    antider = np.exp(-beta * edges)
                    cells = (antider[:-1] - antider[1:]) / beta
                    total += float(np.sum(self.density * cells))
        return total

    def rescaled(self, new_delta):
        """Same atom weight and density profile squeezed onto [-new_delta, 0].

        A zero target delay returns the point mass at zero (the weak limit).
        """
        if new_delta < 0:
            raise ValueError("new_delta must be nonnegative")
        if new_delta == 0.0:
            return DelayMeasure.dirac()
        scale = self.delta / new_delta if self.delta > 0 else 0.0
        if self.density.size == 0 or scale == 0.0:
            return DelayMeasure.with_atom(new_delta, self.atom_at_zero)
        return DelayMeasure(delta=float(new_delta), atom_at_zero=self.atom_at_zero,
                            density=self.density * scale)


@dataclass(frozen=True, eq=False)
class LevyModel:
    """Finite-activity jump model: atoms (zeta_j, lambda_j) of the jump-size measure."""

    zetas: np.ndarray
    lams: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.zetas, dtype=np.float64).ravel()
        l = np.asarray(self.lams, dtype=np.float64).ravel()
        object.__setattr__(self, "zetas", z)
        object.__setattr__(self, "lams", l)
        if z.size != l.size:
            raise ValueError("jump sizes and intensities must pair up")
        if (z == 0.0).any():
            raise ValueError("jump sizes must be nonzero")
        if np.unique(z).size != z.size:
            raise ValueError("jump sizes must be distinct")
        if (l <= 0.0).any():
            raise ValueError("intensities must be positive")

    @classmethod
    def from_atoms(cls, atoms):
        """Build from an iterable of (zeta, lambda) pairs; may be empty."""
        atoms = list(atoms)
        if not atoms:
            return cls(zetas=np.zeros(0), lams=np.zeros(0))
        z, l = zip(*atoms)
        return cls(zetas=np.array(z, dtype=np.float64), lams=np.array(l, dtype=np.float64))

    @property
    def n_atoms(self):
        return self.zetas.size

    @property
    def min_weights(self):
        """min(1, zeta_j^2) * lambda_j, the truncated second-moment weights."""
        return np.minimum(1.0, self.zetas ** 2) * self.lams

    @property
    def sum_min_weight(self):
        return float(self.min_weights.sum())


@dataclass(frozen=True, eq=False)
class TerminalCondition:
    """Terminal value as a function of the driving-path summary at T.

    Supported kinds: ``constant`` (value), ``brownian`` (scale * B(T)),
    ``compensated_poisson`` (scale * (N_j(T) - lambda_j*T)), and ``linear``
    (const + brownian_coeff * B(T) + sum_j jump_coeffs[j] * (N_j(T) - lambda_j*T)).
    """

    kind: str
    value: float = 0.0
    scale: float = 1.0
    atom: int = 0
    const: float = 0.0
    brownian_coeff: float = 0.0
    jump_coeffs: tuple = ()

    _KINDS = ("constant", "brownian", "compensated_poisson", "linear")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown terminal kind {self.kind!r}")

    @classmethod
    def constant(cls, value):
        return cls(kind="constant", value=float(value))

    @classmethod
    def brownian(cls, scale=1.0):
        return cls(kind="brownian", scale=float(scale))

    @classmethod
    def compensated_poisson(cls, atom=0, scale=1.0):
        return cls(kind="compensated_poisson", atom=int(atom), scale=float(scale))

    @classmethod
    def linear(cls, const=0.0, brownian_coeff=0.0, jump_coeffs=()):
        return cls(kind="linear", const=float(const),
                   brownian_coeff=float(brownian_coeff),
                   jump_coeffs=tuple(float(c) for c in jump_coeffs))

    def sample_from_summary(self, b_total, counts_total, levy, T):
        """Evaluate on arrays of terminal summaries (B(T), jump counts at T)."""
        b_total = np.asarray(b_total, dtype=np.float64)
        if self.kind == "constant":
            return np.full(b_total.shape, self.value)
        if self.kind == "brownian":
            return self.scale * b_total
        if self.kind == "compensated_poisson":
            j = self.atom
            if j < 0 or j >= levy.n_atoms:
                raise ValueError(f"terminal condition refers to missing atom {j}")
            return self.scale * (counts_total[:, j] - levy.lams[j] * T)
        out = np.full(b_total.shape, self.const)
        out += self.brownian_coeff * b_total
        for j, c in enumerate(self.jump_coeffs):
            if c != 0.0:
                if j >= levy.n_atoms:
                    raise ValueError(f"terminal condition refers to missing atom {j}")
                out += c * (counts_total[:, j] - levy.lams[j] * T)
        return out

    def sample(self, ensemble, levy):
        b_total = ensemble.brownian_increments.sum(axis=1)
        counts_total = ensemble.jump_counts.sum(axis=1)
        return self.sample_from_summary(b_total, counts_total, levy, ensemble.grid.T)


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """Discretized driving noise: Brownian increments and per-atom jump counts."""

    grid: TimeGrid
    brownian_increments: np.ndarray  # (n_particles, n_steps)
    jump_counts: np.ndarray          # (n_particles, n_steps, n_atoms) int64

    def __post_init__(self):
        n, N = self.brownian_increments.shape
        if self.jump_counts.shape[0] != n or self.jump_counts.shape[1] != N:
            raise ValueError("increment and jump-count shapes disagree")
        if N != self.grid.n_steps:
            raise ValueError("ensemble and grid step counts disagree")

    @property
    def n_particles(self):
        return self.brownian_increments.shape[0]

    @property
    def n_atoms(self):
        return self.jump_counts.shape[2]

    def brownian_path(self):
        """Cumulative Brownian values at nodes, (n_particles, n_steps + 1)."""
        n = self.n_particles
        out = np.zeros((n, self.grid.n_steps + 1))
        np.cumsum(self.brownian_increments, axis=1, out=out[:, 1:])
        return out

    def count_paths(self):
        """Cumulative jump counts at nodes, (n_particles, n_steps + 1, n_atoms)."""
        n = self.n_particles
        out = np.zeros((n, self.grid.n_steps + 1, self.n_atoms))
        np.cumsum(self.jump_counts, axis=1, out=out[:, 1:, :])
        return out


@dataclass(frozen=True, eq=False)
class TripleProcess:
    """Per-particle discretized (Y, Z, K) paths.

    ``y`` has one column per node, ``z`` and ``k`` one column per step;
    ``k`` carries one layer per jump atom.
    """

    y: np.ndarray  # (n_particles, n_steps + 1)
    z: np.ndarray  # (n_particles, n_steps)
    k: np.ndarray  # (n_particles, n_steps, n_atoms)

    def __post_init__(self):
        n, n_nodes = self.y.shape
        if self.z.shape != (n, n_nodes - 1):
            raise ValueError("z shape inconsistent with y")
        if self.k.shape[:2] != (n, n_nodes - 1):
            raise ValueError("k shape inconsistent with y")

    @property
    def y0(self):
        return self.y[:, 0]

    @property
    def n_particles(self):
        return self.y.shape[0]

    @classmethod
    def zeros(cls, n_particles, grid, n_atoms):
        N = grid.n_steps
        return cls(y=np.zeros((n_particles, N + 1)),
                   z=np.zeros((n_particles, N)),
                   k=np.zeros((n_particles, N, n_atoms)))

    def __sub__(self, other):
        return TripleProcess(y=self.y - other.y, z=self.z - other.z, k=self.k - other.k)

    def scaled(self, factor):
        return TripleProcess(y=factor * self.y, z=factor * self.z, k=factor * self.k)


@dataclass(frozen=True, eq=False)
class SegmentTriple:
    """The delayed window of one particle's (Y, Z, K) around a base time.

    Index c corresponds to the offset r_c = -delta + c*dt; the last index is
    offset zero.  ``extended[c]`` is True where the entry was filled by the
    pre-zero convention rather than copied from the stored process.
    """

    y: np.ndarray          # (lag + 1,)
    z: np.ndarray          # (lag + 1,)
    k: np.ndarray          # (lag + 1, n_atoms)
    base_time: float
    dt: float
    offsets: np.ndarray    # (lag + 1,)
    extended: np.ndarray   # (lag + 1,) bool


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """One full problem instance: horizon, terminal condition, driver,
    delay measure, jump model and the constants of the growth and
    Lipschitz conditions."""

    grid: TimeGrid
    delay: DelayMeasure
    levy: LevyModel
    terminal: TerminalCondition
    generator: object  # GeneratorSpec; kept untyped to avoid a module cycle
    lipschitz_C: float
    zero_bound_c: float

    def __post_init__(self):
        if not np.isfinite(self.lipschitz_C) or self.lipschitz_C <= 0:
            raise ValueError("lipschitz_C must be positive")
        if not np.isfinite(self.zero_bound_c) or self.zero_bound_c < 0:
            raise ValueError("zero_bound_c must be nonnegative")
        # rejects delays that do not align with the grid
        steps_for_delta(self.delay.delta, self.grid.dt)

    @property
    def lag(self):
        return steps_for_delta(self.delay.delta, self.grid.dt)


def segment_at(proc, particle, t, delay, grid):
    """Extract the delayed window of one particle at a grid node.

    Entries with t + r < 0 follow the pre-zero extension: the Y value is the
    particle's node-0 value, Z and K vanish.  Z and K at the terminal node
    use the last step's values (left-limit convention).
    """
    i = grid.node_index(t)
    lag = steps_for_delta(delay.delta, grid.dt)
    N = grid.n_steps
    idx = np.arange(i - lag, i + 1)
    extended = idx < 0
    yidx = np.where(extended, 0, idx)
    y = proc.y[particle, yidx].copy()
    y[extended] = proc.y[particle, 0]
    zidx = np.clip(idx, 0, N - 1)
    z = proc.z[particle, zidx].copy()
    z[extended] = 0.0
    k = proc.k[particle, zidx, :].copy()
    k[extended, :] = 0.0
    return SegmentTriple(y=y, z=z, k=k, base_time=grid.nodes[i], dt=grid.dt,
                         offsets=(idx - i) * grid.dt, extended=extended)


def seg_norm_sq(seg, levy):
    """Squared window norms (nY, nZ, nK).

    nY and nZ integrate the squared window over [-delta, 0] with the
    left-rectangle rule; nK additionally sums the squared mark components
    against the jump intensities.
    """
    lag = seg.y.size - 1
    if lag == 0:
        return 0.0, 0.0, 0.0
    dt = seg.dt
    ny = float(np.sum(seg.y[:-1] ** 2) * dt)
    nz = float(np.sum(seg.z[:-1] ** 2) * dt)
    if levy.n_atoms:
        nk = float(np.sum((seg.k[:-1, :] ** 2) @ levy.lams) * dt)
    else:
        nk = 0.0
    return ny, nz, nk


def beta_norm_sq(proc, beta, grid, levy):
    """Squared exponentially weighted norm of a process triple.

    Monte-Carlo average over particles of |Y(0)|^2 plus the left-rectangle
    time integral of exp(beta*t) (|Y|^2 + |Z|^2 + sum_j K_j^2 lambda_j).
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    N = grid.n_steps
    with np.errstate(over="ignore"):
        w = np.exp(beta * grid.nodes[:N]) * grid.dt
    dens = proc.y[:, :N] ** 2 + proc.z ** 2
    if levy.n_atoms:
        dens = dens + proc.k ** 2 @ levy.lams
    with np.errstate(over="ignore", invalid="ignore"):
        total = proc.y[:, 0] ** 2 + dens @ w
    return float(np.mean(total))


def sup_norm_sq(proc):
    """Monte-Carlo average of the squared running maximum of |Y|."""
    return float(np.mean(np.max(proc.y ** 2, axis=1)))

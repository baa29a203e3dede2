"""Command-line interface: config parsing, experiment orchestration, CSV output.

One JSON config file describes one experiment.  Outputs are written with a
fixed column order and 17-significant-digit floats, so identical configs and
seeds produce byte-identical files.

Exit codes: 0 success, 1 assumption failure, 2 configuration error,
3 non-convergence (outputs are still written).

Environment: ``MFDBSDE_THREADS`` caps the numba thread pool (outputs do not
depend on it; the kernels are serial), ``MFDBSDE_DISABLE_NUMBA=1`` selects
the pure-numpy kernel path.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import _kernels
from .core import (ConfigurationError, DelayMeasure, LevyModel, ProblemSpec,
                   TerminalCondition, make_grid, steps_for_delta)
from .generators import GeneratorSpec, validate_assumptions
from .measures import EmpiricalMeasure
from .simulate import SimConfig, simulate_ensemble
from .solver import (PicardConfig, RegressionConfig, contraction_factor,
                     delta_sweep, picard_solve)

__all__ = ["RunConfig", "load_config", "cmd_solve", "cmd_validate",
           "cmd_sweep_delta", "main"]

EXIT_OK = 0
EXIT_ASSUMPTION = 1
EXIT_CONFIG = 2
EXIT_NO_CONVERGENCE = 3

_FMT = "%.17g"


class RunConfig:
    """Validated experiment description."""

    def __init__(self, problem, sim, reg, picard, out_dir, validation, raw):
        self.problem = problem
        self.sim = sim
        self.reg = reg
        self.picard = picard
        self.out_dir = out_dir
        self.validation = validation
        self.raw = raw


def _need(section, key, path):
    if key not in section:
        raise ConfigurationError(f"missing key {path}.{key}")
    return section[key]


def _number(section, key, path, default=None, minimum=None, strict_min=None):
    if key not in section:
        if default is None:
            raise ConfigurationError(f"missing key {path}.{key}")
        return default
    val = section[key]
    if not isinstance(val, (int, float)) or isinstance(val, bool):
        raise ConfigurationError(f"{path}.{key} must be a number")
    if minimum is not None and val < minimum:
        raise ConfigurationError(f"{path}.{key} must be >= {minimum}")
    if strict_min is not None and val <= strict_min:
        raise ConfigurationError(f"{path}.{key} must be > {strict_min}")
    return float(val)


def _parse_delay(spec, path):
    delta = _number(spec, "delta", path, minimum=0.0)
    if delta == 0.0:
        atom = _number(spec, "atom_at_zero", path, default=1.0)
        if abs(atom - 1.0) > 1e-12:
            raise ConfigurationError(f"{path}: zero delay requires atom_at_zero = 1")
        return DelayMeasure.dirac()
    atom = _number(spec, "atom_at_zero", path, default=0.0, minimum=0.0)
    cells = spec.get("cells")
    if cells is None:
        return DelayMeasure.with_atom(delta, atom)
    values = np.asarray(cells, dtype=np.float64)
    return DelayMeasure(delta=delta, atom_at_zero=atom, density=values)


def _parse_levy(spec, path):
    atoms = spec.get("atoms", [])
    if not isinstance(atoms, list):
        raise ConfigurationError(f"{path}.atoms must be a list")
    pairs = []
    for idx, atom in enumerate(atoms):
        z = _number(atom, "zeta", f"{path}.atoms[{idx}]")
        l = _number(atom, "lambda", f"{path}.atoms[{idx}]", strict_min=0.0)
        pairs.append((z, l))
    return LevyModel.from_atoms(pairs)


def _parse_terminal(spec, path, levy):
    kind = _need(spec, "kind", path)
    if kind == "constant":
        return TerminalCondition.constant(_number(spec, "value", path))
    if kind == "brownian":
        return TerminalCondition.brownian(_number(spec, "scale", path, default=1.0))
    if kind == "compensated_poisson":
        atom = int(_number(spec, "atom", path, default=0.0))
        return TerminalCondition.compensated_poisson(
            atom, _number(spec, "scale", path, default=1.0))
    if kind == "linear":
        coeffs = spec.get("jump_coeffs", [])
        return TerminalCondition.linear(
            const=_number(spec, "const", path, default=0.0),
            brownian_coeff=_number(spec, "brownian_coeff", path, default=0.0),
            jump_coeffs=coeffs)
    raise ConfigurationError(f"{path}.kind: unknown terminal kind {kind!r}")


def _parse_generator(spec, path):
    kind = _need(spec, "kind", path)
    if kind == "zero":
        return GeneratorSpec.zero()
    if kind == "linear_state":
        return GeneratorSpec.linear_state(
            a=_number(spec, "a", path, default=0.0),
            b=_number(spec, "b", path, default=0.0),
            k_weights=spec.get("k_weights", ()))
    if kind == "delayed_average":
        return GeneratorSpec.delayed_average(_number(spec, "a", path))
    if kind == "mean_field_moment":
        return GeneratorSpec.mean_field_moment(
            _number(spec, "a", path), moment=spec.get("moment", "y_mean"))
    if kind == "mean_field_mnorm":
        ref = spec.get("reference", {})
        point = (float(ref.get("y", 0.0)), float(ref.get("z", 0.0)))
        marks = np.asarray(ref.get("k", [0.0]), dtype=np.float64)[None, :]
        reference = EmpiricalMeasure.triple([point[0]], [point[1]], marks)
        return GeneratorSpec.mean_field_mnorm(_number(spec, "a", path), reference)
    raise ConfigurationError(f"{path}.kind: unknown generator kind {kind!r}")


def load_config(path):
    """Parse and validate one experiment file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(
            f"{path}:{exc.lineno}:{exc.colno}: invalid JSON ({exc.msg})") from exc

    if "problem" not in raw:
        raise ConfigurationError("missing section: problem")
    if "solver" not in raw:
        raise ConfigurationError("missing section: solver")
    p = raw["problem"]
    s = raw["solver"]

    grid = make_grid(_number(p, "T", "problem", strict_min=0.0),
                     int(_number(p, "n_steps", "problem", minimum=1)))
    try:
        delay = _parse_delay(_need(p, "delay", "problem"), "problem.delay")
        levy = _parse_levy(p.get("levy", {}), "problem.levy")
        terminal = _parse_terminal(_need(p, "terminal", "problem"),
                                   "problem.terminal", levy)
        generator = _parse_generator(_need(p, "generator", "problem"),
                                     "problem.generator")
        steps_for_delta(delay.delta, grid.dt)
        problem = ProblemSpec(
            grid=grid, delay=delay, levy=levy, terminal=terminal,
            generator=generator,
            lipschitz_C=_number(p, "lipschitz_C", "problem", strict_min=0.0),
            zero_bound_c=_number(p, "zero_bound_c", "problem", minimum=0.0))
    except ConfigurationError:
        raise
    except ValueError as exc:
        raise ConfigurationError(f"problem: {exc}") from exc

    try:
        sim = SimConfig(n_particles=int(_number(s, "n_particles", "solver", minimum=1)),
                        seed=int(_number(s, "seed", "solver", default=0.0)),
                        antithetic=bool(s.get("antithetic", False)))
        reg = RegressionConfig(
            degree=int(_number(s, "degree", "solver", default=2.0, minimum=0)),
            ridge=_number(s, "ridge", "solver", default=0.0, minimum=0.0),
            min_particles_per_coeff=int(
                _number(s, "min_particles_per_coeff", "solver", default=8.0, minimum=1)))
        beta = s.get("beta_override")
        if beta is not None:
            beta = float(beta)
        picard = PicardConfig(rho=_number(s, "rho", "solver", strict_min=0.0),
                              tol=_number(s, "tol", "solver", default=1e-6,
                                          strict_min=0.0),
                              max_iters=int(_number(s, "max_iters", "solver",
                                                    default=25.0, minimum=1)),
                              beta_override=beta)
    except ConfigurationError:
        raise
    except ValueError as exc:
        raise ConfigurationError(f"solver: {exc}") from exc

    if picard.rho <= delay.atom_at_zero:
        raise ConfigurationError(
            f"solver.rho must exceed the delay atom weight {delay.atom_at_zero}")

    out = raw.get("output", {})
    validation = raw.get("validation", {})
    return RunConfig(problem=problem, sim=sim, reg=reg, picard=picard,
                     out_dir=out.get("dir", "."), validation=validation, raw=raw)


def _apply_thread_env():
    threads = os.environ.get("MFDBSDE_THREADS")
    if threads and _kernels.HAS_NUMBA:
        try:
            import numba

            numba.set_num_threads(max(1, int(threads)))
        except (ValueError, RuntimeError):
            pass


def _apply_overrides(cfg, seed=None, particles=None, out_dir=None):
    if seed is not None:
        cfg.sim = SimConfig(n_particles=cfg.sim.n_particles, seed=int(seed),
                            antithetic=cfg.sim.antithetic)
    if particles is not None:
        cfg.sim = SimConfig(n_particles=int(particles), seed=cfg.sim.seed,
                            antithetic=cfg.sim.antithetic)
    if out_dir is not None:
        cfg.out_dir = out_dir
    return cfg


def _fmt(x):
    return _FMT % float(x)


def _write_solution_csv(path, problem, proc):
    grid = problem.grid
    m = problem.levy.n_atoms
    cols = ["step", "time", "y_mean", "y_std", "z_mean", "z_std"]
    for j in range(m):
        cols += [f"k{j + 1}_mean", f"k{j + 1}_std"]
    lines = [",".join(cols)]
    for i in range(grid.n_steps + 1):
        row = [str(i), _fmt(grid.nodes[i]),
               _fmt(proc.y[:, i].mean()), _fmt(proc.y[:, i].std())]
        if i < grid.n_steps:
            row += [_fmt(proc.z[:, i].mean()), _fmt(proc.z[:, i].std())]
            for j in range(m):
                row += [_fmt(proc.k[:, i, j].mean()), _fmt(proc.k[:, i, j].std())]
        else:
            row += ["", ""] + ["", ""] * m
        lines.append(",".join(row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_report(path, cfg, diag, proc, report):
    lines = ["mfdbsde solve report"]
    lines.append("config: " + json.dumps(cfg.raw, sort_keys=True,
                                         separators=(",", ":")))
    lines.append(f"n_particles: {cfg.sim.n_particles}")
    lines.append(f"seed: {cfg.sim.seed}")
    lines.append("beta_used: " + _fmt(diag.beta_used))
    lines.append("c_prime_sq: " + _fmt(diag.c_prime_sq))
    lines.append("theoretical_factor: " + _fmt(diag.theoretical_factor))
    lines.append(f"converged: {str(diag.converged).lower()}")
    lines.append(f"iterations: {diag.iters}")
    lines.append("beta_norm_diffs: " +
                 " ".join(_fmt(d) for d in diag.iterate_diff_beta_norms))
    lines.append("observed_ratios: " +
                 " ".join(_fmt(r) for r in diag.observed_ratios))
    lines.append("y0: " + _fmt(proc.y0.mean()))
    lines.append("assumption_zero_bound_observed: " + _fmt(report.zero_bound_observed))
    lines.append("assumption_zero_bound_c: " + _fmt(report.zero_bound_c))
    lines.append("assumption_max_ratio: " + _fmt(report.max_ratio))
    lines.append(f"assumptions_passed: {str(report.passed).lower()}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def cmd_solve(config_path, seed=None, particles=None, out_dir=None):
    """Run the fixed-point solve and write solution.csv plus report.txt."""
    try:
        cfg = _apply_overrides(load_config(config_path), seed, particles, out_dir)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _apply_thread_env()
    os.makedirs(cfg.out_dir, exist_ok=True)
    ensemble = simulate_ensemble(cfg.problem.levy, cfg.problem.grid, cfg.sim)
    import warnings

    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            proc, diag = picard_solve(cfg.problem, ensemble, cfg.reg, cfg.picard)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    report = validate_assumptions(
        cfg.problem.generator, cfg.problem,
        n_pairs=int(cfg.validation.get("n_pairs", 32)),
        seed=int(cfg.validation.get("seed", cfg.sim.seed)),
        eps_stat=float(cfg.validation.get("eps_stat", 0.05)))
    _write_solution_csv(os.path.join(cfg.out_dir, "solution.csv"), cfg.problem, proc)
    _write_report(os.path.join(cfg.out_dir, "report.txt"), cfg, diag, proc, report)
    if not diag.converged:
        print("fixed-point iteration did not converge", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


def cmd_validate(config_path, seed=None, particles=None, out_dir=None):
    """Check the generator assumptions and the contraction factor."""
    try:
        cfg = _apply_overrides(load_config(config_path), seed, particles, out_dir)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    problem = cfg.problem
    report = validate_assumptions(
        problem.generator, problem,
        n_pairs=int(cfg.validation.get("n_pairs", 32)),
        seed=int(cfg.validation.get("seed", cfg.sim.seed)),
        eps_stat=float(cfg.validation.get("eps_stat", 0.05)))
    from .solver import beta_choice, c_prime_sq

    beta = cfg.picard.beta_override
    if beta is None:
        beta = beta_choice(cfg.picard.rho, c_prime_sq(problem.lipschitz_C))
    factor = contraction_factor(cfg.picard.rho, beta, problem.delay)
    zero_ok = report.zero_bound_observed < report.zero_bound_c
    lip_ok = report.max_ratio <= 1.0 + float(cfg.validation.get("eps_stat", 0.05))
    factor_ok = factor < 1.0
    print(f"assumption (ii) zero bound: {'pass' if zero_ok else 'FAIL'} "
          f"(observed {_fmt(report.zero_bound_observed)} vs c {_fmt(report.zero_bound_c)})")
    print(f"assumption (iii) Lipschitz: {'pass' if lip_ok else 'FAIL'} "
          f"(max ratio {_fmt(report.max_ratio)})")
    print(f"contraction factor: {_fmt(factor)} ({'pass' if factor_ok else 'FAIL'})")
    return EXIT_OK if (zero_ok and lip_ok and factor_ok) else EXIT_ASSUMPTION


def cmd_sweep_delta(config_path, deltas, seed=None, particles=None, out_dir=None):
    """Run the solve across delay widths and write sweep.csv."""
    try:
        cfg = _apply_overrides(load_config(config_path), seed, particles, out_dir)
        if not deltas:
            raise ConfigurationError("at least one delta value is required")
        for d in deltas:
            if d < 0:
                raise ConfigurationError("delta values must be nonnegative")
            steps_for_delta(d, cfg.problem.grid.dt)
    except (ConfigurationError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _apply_thread_env()
    os.makedirs(cfg.out_dir, exist_ok=True)
    ensemble = simulate_ensemble(cfg.problem.levy, cfg.problem.grid, cfg.sim)
    try:
        rows = delta_sweep(cfg.problem, deltas, ensemble, cfg.reg, cfg.picard)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    lines = ["delta,converged,iters,observed_ratio,theoretical_factor"]
    for row in rows:
        lines.append(",".join([
            _fmt(row.delta), str(row.converged).lower(), str(row.iters),
            _fmt(row.observed_ratio), _fmt(row.theoretical_factor)]))
    path = os.path.join(cfg.out_dir, "sweep.csv")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return EXIT_OK


def _parse_deltas(text):
    try:
        return [float(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError as exc:
        raise ConfigurationError(f"invalid delta list {text!r}") from exc


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="mfdbsde",
        description="Particle solver for mean-field backward SDEs with "
                    "time-delayed generators and jumps")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("solve", "validate", "sweep-delta"):
        cmd = sub.add_parser(name)
        cmd.add_argument("config", help="path to a JSON experiment file")
        cmd.add_argument("--seed", type=int, default=None)
        cmd.add_argument("--out-dir", default=None)
        cmd.add_argument("--particles", type=int, default=None)
        if name == "sweep-delta":
            cmd.add_argument("--deltas", required=True,
                             help="comma-separated delay widths")
    args = parser.parse_args(argv)
    common = dict(seed=args.seed, particles=args.particles, out_dir=args.out_dir)
    if args.command == "solve":
        return cmd_solve(args.config, **common)
    if args.command == "validate":
        return cmd_validate(args.config, **common)
    try:
        deltas = _parse_deltas(args.deltas)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return cmd_sweep_delta(args.config, deltas, **common)


if __name__ == "__main__":
    sys.exit(main())

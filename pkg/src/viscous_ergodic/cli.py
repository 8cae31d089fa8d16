"""Command-line driver: config parsing, scenario commands and deterministic output.

Config files are INI-style: ``[section]`` headers and ``key = value`` lines.
Every key has a default; unknown sections or keys are errors.  Output floats
are written with 17 significant digits and fixed column and key order, so
the same config gives byte-identical files.

Exit codes: 0 success, 2 configuration error, 3 solver error.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import math
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import experiments as ex
from .diagnostics import hopf_cole
from .potential import (
    PotentialError,
    PotentialSpec,
    TabulatedPotential,
    build_potential,
    check_smoothness,
)
from .rescaled import RescaledConfigError
from .spectral import SpectralError, min_eigenpair

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3

CSV_COLUMNS = (
    ("epsilon", "epsilon"), ("provenance", "provenance"), ("E", "E"), ("E0D", "E0D"),
    ("EaD", "EaD"), ("e0", "e0"), ("ea", "ea"), ("gap", "gap"),
    ("predicted_gap", "predicted_gap"), ("omega", "omega"), ("phi_at_a", "phi_at_a"),
    ("m0", "m0"), ("ma", "ma"), ("mb", "mb"), ("log_ratio_a0", "log_ratio_a0"),
    ("agmon_res", "agmon_residual"), ("ims_res", "ims_residual"),
    ("mass0", "mass_near_0"), ("massa", "mass_near_a"), ("moment1", "first_moment"),
    ("rayleigh_ok", "rayleigh_ok"), ("rescaled", "rescaled"), ("flags", "flags"),
)


class ConfigError(ValueError):
    pass


# -- config ----------------------------------------------------------------------

@dataclass(frozen=True)
class ScheduleConfig:
    lo: float = 1e-4
    hi: float = 5e-2
    per_decade: int = 12
    n_max: int = 0
    k_max: int = 1
    witness_epsilons: tuple = ex.WITNESS_EPSILONS
    fit_lo: float = 1e-4
    fit_hi: float = 1e-2
    regularity_m: tuple = (2, 3)


@dataclass(frozen=True)
class ThresholdConfig:
    C0: float = 1.0
    delta: float = 0.01
    mass: float = 0.99
    ratio_factor: float = 5.0
    small_eps: float = 0.02


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "out"
    formats: tuple = ("csv", "json")


@dataclass(frozen=True)
class RunConfig:
    potential: PotentialSpec = field(default_factory=PotentialSpec)
    solver: ex.SolverConfig = field(default_factory=ex.SolverConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    thresholds: ThresholdConfig = field(default_factory=ThresholdConfig)
    output: OutputConfig = field(default_factory=OutputConfig)


SECTIONS = {
    "potential": PotentialSpec,
    "solver": ex.SolverConfig,
    "schedule": ScheduleConfig,
    "thresholds": ThresholdConfig,
    "output": OutputConfig,
}


def _coerce(raw: str, default, name: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            items = [s.strip() for s in raw.split(",") if s.strip()]
            proto = default[0] if default else ""
            return tuple(_coerce(s, proto, name) for s in items)
        if hasattr(default, "value"):  # enums
            return type(default)(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc


def _format_value(v) -> str:
    if isinstance(v, tuple):
        return ", ".join(_format_value(x) for x in v)
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".17g")
    if hasattr(v, "value"):
        return str(v.value)
    return str(v)


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, strict=True,
                                       inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    built = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
    for section, cls in SECTIONS.items():
        defaults = cls()
        kwargs = {}
        if parser.has_section(section):
            known = {f.name for f in dataclasses.fields(cls)}
            for key, raw in parser.items(section):
                if key not in known:
                    raise ConfigError(f"unknown key {key!r} in [{section}]")
                kwargs[key] = _coerce(raw, getattr(defaults, key), f"{section}.{key}")
        try:
            built[section] = cls(**kwargs)
        except (PotentialError, ValueError) as exc:
            raise ConfigError(f"[{section}] {exc}") from exc
    cfg = RunConfig(**built)
    validate_config(cfg)
    return cfg


def validate_config(cfg: RunConfig) -> None:
    s, sc, th = cfg.solver, cfg.schedule, cfg.thresholds
    if s.n_min < 256 or s.n_min % 2:
        raise ConfigError("solver.n_min must be even and >= 256")
    if s.n_cap < s.n_min:
        raise ConfigError("solver.n_cap must be >= solver.n_min")
    if len(s.rescaled_n_list) < 1 or any(b != 2 * a for a, b in zip(s.rescaled_n_list, s.rescaled_n_list[1:])):
        raise ConfigError("solver.rescaled_n_list must be doubling grid sizes")
    if s.workers < 1:
        raise ConfigError("solver.workers must be >= 1")
    if not (0.0 < sc.lo < sc.hi) or sc.per_decade < 1:
        raise ConfigError("schedule needs 0 < lo < hi and per_decade >= 1")
    if sc.n_max < 0 or sc.k_max < 0:
        raise ConfigError("schedule.n_max and schedule.k_max must be >= 0")
    if not (0.0 < sc.fit_lo < sc.fit_hi):
        raise ConfigError("schedule needs 0 < fit_lo < fit_hi")
    if any(m < 2 for m in sc.regularity_m):
        raise ConfigError("schedule.regularity_m entries must be >= 2")
    if any(not e > 0.0 for e in sc.witness_epsilons):
        raise ConfigError("schedule.witness_epsilons must be positive")
    if th.delta < 0.0 or th.C0 < 0.0:
        raise ConfigError("thresholds must be nonnegative")
    bad = set(cfg.output.formats) - {"csv", "json"}
    if bad:
        raise ConfigError(f"unknown output formats {sorted(bad)}")


def load_config(path: str | None) -> RunConfig:
    if path is None:
        return parse_config("")
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def dump_config(cfg: RunConfig) -> str:
    """Effective config in the same format; parsing it gives back ``cfg``."""
    lines = []
    for section in SECTIONS:
        obj = getattr(cfg, section)
        lines.append(f"[{section}]")
        for f in dataclasses.fields(obj):
            lines.append(f"{f.name} = {_format_value(getattr(obj, f.name))}")
        lines.append("")
    return "\n".join(lines)


# -- deterministic emission -------------------------------------------------------------

def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if isinstance(v, (list, tuple)):
        return ";".join(fmt(x) for x in v)
    return str(v).replace(",", ";").replace("\n", " ")


def to_json(obj, indent: int = 0) -> str:
    """JSON with 17-digit floats and insertion-ordered keys; NaN and inf become null."""
    pad, inner = "  " * indent, "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{inner}{_json_str(str(k))}: {to_json(v, indent + 1)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        return "[\n" + ",\n".join(inner + to_json(v, indent + 1) for v in obj) + "\n" + pad + "]"
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format(float(obj), ".17g") if math.isfinite(obj) else "null"
    if hasattr(obj, "value"):
        return _json_str(str(obj.value))
    return _json_str(str(obj))


def _json_str(s: str) -> str:
    out = s.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n").replace("\t", "\\t")
    return f'"{out}"'


def write_csv(path: Path, header: tuple, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def report_rows(reports) -> list[tuple]:
    rows = []
    for r in reports:
        d = r.as_dict()
        rows.append(tuple(d[key] for _, key in CSV_COLUMNS))
    return rows


def _plot_script(path: Path, csv: str, title: str, xcol: int, ycols: list, ylabel: str,
                 logy: bool = False, absy: bool = False) -> None:
    lines = [
        "# gnuplot script; run with: gnuplot -p " + path.name,
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set logscale x",
        "set xlabel 'epsilon'",
        f"set ylabel '{ylabel}'",
        f"set title '{title}'",
    ]
    if logy:
        lines.append("set logscale y")
    parts = []
    for c in ycols:
        y = f"(abs(${c}))" if absy else f"{c}"
        parts.append(f"'{csv}' using {xcol}:{y} with linespoints")
    lines.append("plot " + ", \\\n     ".join(parts))
    path.write_text("\n".join(lines) + "\n")


def _col(name: str) -> int:
    return [c for c, _ in CSV_COLUMNS].index(name) + 1


# -- commands -------------------------------------------------------------------------------

def _outdir(args, cfg: RunConfig) -> Path:
    out = Path(args.out or cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _warn_degenerate(spec: PotentialSpec) -> None:
    if spec.degenerate:
        print("warning: degenerate: no selection mechanism (A = 0)", file=sys.stderr)


def cmd_potential(args, cfg: RunConfig) -> int:
    spec = cfg.potential
    _warn_degenerate(spec)
    pot = build_potential(spec, cfg.solver.n_min)
    out = _outdir(args, cfg)
    write_csv(out / "potential.csv", ("x", "V", "F"),
              zip(pot.x, pot.values, 0.0 - pot.values))
    seams = check_smoothness(pot, 3)
    write_csv(out / "seams.csv", ("seam", "position", "jump0", "jump1", "jump2", "jump3"),
              ((s.name, s.position / pot.n, *s.jumps) for s in seams))
    (out / "plot_potential.gp").write_text(
        "set datafile separator ','\nset key autotitle columnhead\nset xlabel 'x'\n"
        "plot 'potential.csv' using 1:2 with lines\n")
    return EXIT_OK


def _zero_potential(n: int) -> TabulatedPotential:
    return TabulatedPotential.from_function(lambda x: np.zeros_like(np.asarray(x, dtype=float)), n)


def cmd_solve(args, cfg: RunConfig) -> int:
    eps = args.epsilon
    if eps is None or not (eps > 0.0 and math.isfinite(eps)):
        raise ConfigError(f"--epsilon must be a positive number, got {eps}")
    spec = cfg.potential
    if args.zero_potential:
        source = _zero_potential(cfg.solver.grid_size(eps))
    else:
        _warn_degenerate(spec)
        source = spec
    report, eig = ex.solve_and_report(source, eps, "cli", cfg.solver)
    if eig is None:
        if any("Potential" in f for f in report.flags):
            raise ConfigError("; ".join(report.flags))
        raise SpectralError("; ".join(report.flags) or "solve failed")
    phi = hopf_cole(eig, eps)
    out = _outdir(args, cfg)
    write_csv(out / "eigenfunction.csv", ("x", "U", "phi"), zip(eig.x, eig.vector, phi.values))
    (out / "report.json").write_text(to_json(report.as_dict()) + "\n")
    return EXIT_OK


def _emit_sweep(out: Path, name: str, reports, cfg: RunConfig) -> None:
    if "csv" in cfg.output.formats:
        write_csv(out / f"{name}.csv", tuple(c for c, _ in CSV_COLUMNS), report_rows(reports))
    if "json" in cfg.output.formats:
        (out / f"{name}.json").write_text(to_json([r.as_dict() for r in reports]) + "\n")
    _plot_script(out / f"plot_{name}_phi.gp", f"{name}.csv", "phi(a) against epsilon",
                 _col("epsilon"), [_col("phi_at_a")], "phi(a)")
    _plot_script(out / f"plot_{name}_gap.gp", f"{name}.csv", "rescaled gap against epsilon",
                 _col("epsilon"), [_col("gap"), _col("predicted_gap")], "|e0 - ea|",
                 logy=True, absy=True)


def _schedule(cfg: RunConfig) -> ex.EpsilonSchedule:
    sc = cfg.schedule
    return ex.epsilon_sequences(sc.n_max, sc.k_max, sc.lo, sc.hi, sc.per_decade,
                                cfg.potential.A, cfg.potential.m)


def cmd_sweep(args, cfg: RunConfig) -> int:
    _warn_degenerate(cfg.potential)
    if args.epsilon is not None:
        if not args.epsilon > 0.0:
            raise ConfigError("--epsilon must be positive")
        schedule = ex.EpsilonSchedule.from_values([args.epsilon])
    else:
        schedule = _schedule(cfg)
    reports = ex.run_sweep(cfg.potential, schedule, cfg.solver)
    _emit_sweep(_outdir(args, cfg), "sweep", reports, cfg)
    return EXIT_OK


def cmd_rescaled(args, cfg: RunConfig) -> int:
    schedule = _schedule(cfg)
    if args.epsilon is not None:
        schedule = ex.EpsilonSchedule.from_values([args.epsilon], A=cfg.potential.A,
                                                  m=cfg.potential.m)
    reports = [ex.rescaled_report(cfg.potential, e, cfg.solver) for e in schedule]
    _emit_sweep(_outdir(args, cfg), "rescaled", reports, cfg)
    return EXIT_OK


def cmd_witness(args, cfg: RunConfig) -> int:
    _warn_degenerate(cfg.potential)
    mode = args.mode or "frozen-pair"
    res = ex.nonconvergence_witness(
        cfg.potential, mode, epsilons=cfg.schedule.witness_epsilons,
        k_list=tuple(range(cfg.schedule.k_max + 1)), delta=cfg.thresholds.delta,
        config=cfg.solver, small_eps=cfg.thresholds.small_eps, paper_n_max=cfg.schedule.n_max)
    out = _outdir(args, cfg)
    (out / f"witness_{mode}.json").write_text(to_json(res.as_dict()) + "\n")
    return EXIT_OK


def _regularity_dict(rows) -> list[dict]:
    return [{"m": r.m, "fitted": r.fitted, "exact": r.exact, "rel_error": r.rel_error,
             "envelope": r.fit.envelope, "converged": r.fit.converged,
             "flags": list(r.fit.flags)} for r in rows]


def cmd_regularity(args, cfg: RunConfig) -> int:
    sc = cfg.schedule
    rows = ex.regularity_scan(sc.regularity_m, cfg.potential.A, (sc.fit_lo, sc.fit_hi),
                              sc.per_decade, cfg.solver.rescaled_n_list)
    out = _outdir(args, cfg)
    write_csv(out / "regularity.csv",
              ("m", "fitted", "exact", "rel_error", "envelope", "converged", "flags"),
              (tuple(d.values()) for d in _regularity_dict(rows)))
    return EXIT_OK


def cmd_report(args, cfg: RunConfig) -> int:
    """Schedule table, both-well coefficient fits and the effective config."""
    sc, spec = cfg.schedule, cfg.potential
    schedule = _schedule(cfg)
    eps = ex.log_sweep(sc.fit_lo, sc.fit_hi, sc.per_decade)
    fits = {}
    for well in ("zero", "a"):
        series = ex.rescaled_series(eps, spec.A, spec.m, "frozen-plus", well,
                                    cfg.solver.rescaled_n_list)
        f = ex.fit_asymptotic(series, well, (sc.fit_lo, sc.fit_hi), spec.A, spec.m, 1.0)
        fits[well] = dataclasses.asdict(f)
    doc = {
        "version": __version__,
        "schedule": [{"label": e.label, "epsilon": e.epsilon, "log_epsilon": e.log_epsilon,
                      "representable": e.representable, "flags": list(e.flags)} for e in schedule],
        "fits_frozen_plus": fits,
        "paper_sequence": ex.paper_sequence_check(spec, sc.n_max, cfg.solver.rescaled_n_list),
    }
    out = _outdir(args, cfg)
    (out / "summary.json").write_text(to_json(doc) + "\n")
    (out / "effective_config.ini").write_text(dump_config(cfg))
    return EXIT_OK


def seed_check() -> int:
    """Quick built-in oracle checks; prints one line per check."""
    from .potential import omega
    from .rescaled import RescaledProblem, fourth_moment, harmonic_ground_state, solve_rescaled
    from .spectral import laplacian_matrix

    checks = []
    checks.append(("omega anchor", abs(omega(math.exp(-math.exp(math.pi / 2))) - 1.0) < 1e-12))
    mat = laplacian_matrix(np.zeros(3), 1.0)
    checks.append(("3x3 Laplacian", abs(min_eigenpair(mat).value - (2 - math.sqrt(2))) < 1e-12))
    rng = np.random.default_rng(0)
    v = rng.random(24)
    for periodic in (False, True):
        m = laplacian_matrix(v, 3.0, periodic=periodic)
        ref = float(np.linalg.eigvalsh(m.dense())[0])
        checks.append((f"dense oracle ({'periodic' if periodic else 'dirichlet'})",
                       abs(min_eigenpair(m).value - ref) < 1e-10))
    sol = solve_rescaled(RescaledProblem(1.0, A=0.0, Z=10.0))
    checks.append(("harmonic baseline", abs(sol.e - 1.0) < 1e-6
                   and float(np.abs(sol.eig.vector - harmonic_ground_state(sol.eig.x)).max()) < 1e-4))
    checks.append(("fourth moment", fourth_moment() == 3))
    for name, ok in checks:
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    return EXIT_OK if all(ok for _, ok in checks) else EXIT_SOLVER


COMMANDS = {
    "potential": cmd_potential,
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "witness": cmd_witness,
    "rescaled": cmd_rescaled,
    "regularity": cmd_regularity,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="viscous-ergodic",
                                description="Oscillatory double-well ground states and their "
                                            "vanishing-viscosity diagnostics.")
    p.add_argument("command", nargs="?", choices=sorted(COMMANDS))
    p.add_argument("--config", help="INI-style config file")
    p.add_argument("--out", help="output directory (overrides [output] directory)")
    p.add_argument("--epsilon", type=float, help="viscosity for solve (or a single-row sweep)")
    p.add_argument("--mode", choices=("frozen-pair", "fastlog"), help="witness mode")
    p.add_argument("--zero-potential", action="store_true", help="solve with V = 0 (test)")
    p.add_argument("--seed-check", action="store_true", help="run the built-in oracle checks")
    p.add_argument("--version", action="version", version=__version__)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.seed_check:
        return seed_check()
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return COMMANDS[args.command](args, cfg)
    except SpectralError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ConfigError, PotentialError, RescaledConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ArithmeticError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER

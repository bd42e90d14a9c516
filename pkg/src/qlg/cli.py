"""``qlg`` command-line harness.

Commands::

    qlg run --config PATH [--mode M] [--out DIR]
    qlg compare A B [--tol T] [--out FILE]
    qlg plotdata TRAJ [--out FILE] [--svg FILE]

Exit codes: 0 success, 1 usage error, 2 invalid input, 3 tolerance failure.
The default output directory is taken from ``QLG_OUTPUT_DIR`` when neither
``--out`` nor ``[output] dir`` is given.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .io import (
    TrajectoryFormatError,
    read_trajectory,
    write_json,
    write_table,
    write_trajectory,
)
from .lattice import LatticeConfig, Trajectory, validate_density
from .lattice import run as lattice_run
from .reference import (
    ContinuumParams,
    GaussianProfile,
    UniformProfile,
    classical_run,
    continuum_solution,
)
from .spin.experiment import ExperimentConfig, ExperimentConfigError, simulate_experiment

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

__all__ = ["main", "RunConfig", "ConfigError", "load_config", "execute_run"]

log = logging.getLogger("qlg")

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_TOLERANCE = 0, 1, 2, 3
ENV_OUTPUT_DIR = "QLG_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "qlg-output"
MODES = ("ideal", "nmr", "oracle", "analytic")
REFERENCES = ("oracle", "analytic", "ideal")
PROFILE_KINDS = ("gaussian", "delta", "uniform", "file")
_NMR_KEYS = {f.name for f in dataclasses.fields(ExperimentConfig)} - {
    "n_sites", "steps", "initial", "center", "sigma", "peak", "seed"
}


class ConfigError(ValueError):
    """Unreadable or inconsistent run configuration."""


@dataclass
class RunConfig:
    mode: str = "ideal"
    n_sites: int = 16
    steps: int = 7
    dz: float = 1.0
    dt: float = 1.0
    seed: int | None = None
    profile: dict = field(default_factory=lambda: {"kind": "gaussian", "center": 8.0,
                                                   "sigma": 1.5, "mass": 1.0})
    nmr: dict = field(default_factory=dict)
    output_dir: str | None = None
    compare: tuple[str, ...] = ("oracle", "analytic")
    base_dir: Path = field(default_factory=Path.cwd)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        for name in ("n_sites", "steps"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int):
                raise ConfigError(f"{name} must be an integer")
        if self.n_sites < 2:
            raise ConfigError("n_sites must be at least 2")
        if self.steps < 0:
            raise ConfigError("steps must be non-negative")
        if not (self.dz > 0 and self.dt > 0):
            raise ConfigError("dz and dt must be positive")
        kind = self.profile.get("kind")
        if kind not in PROFILE_KINDS:
            raise ConfigError(f"profile kind must be one of {PROFILE_KINDS}, got {kind!r}")
        bad = [r for r in self.compare if r not in REFERENCES]
        if bad:
            raise ConfigError(f"unknown comparison reference(s) {bad}; choose from {REFERENCES}")
        unknown = set(self.nmr) - _NMR_KEYS - {"preset"}
        if unknown:
            raise ConfigError(f"unknown [nmr] key(s): {sorted(unknown)}")
        if self.nmr.get("preset", "published") not in ("published", "ideal"):
            raise ConfigError("[nmr] preset must be 'published' or 'ideal'")

    @property
    def lattice(self) -> LatticeConfig:
        return LatticeConfig(self.n_sites, self.dz, self.dt)

    def echo(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("base_dir")
        d["compare"] = list(self.compare)
        return d


def _section(doc, name):
    sec = doc.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"[{name}] must be a table")
    return dict(sec)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        doc = tomllib.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    unknown = set(doc) - {"run", "profile", "nmr", "output"}
    if unknown:
        raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
    run = _section(doc, "run")
    out = _section(doc, "output")
    kwargs = {}
    for key in ("mode", "n_sites", "steps", "dz", "dt", "seed"):
        if key in run:
            kwargs[key] = run.pop(key)
    if run:
        raise ConfigError(f"unknown [run] key(s): {sorted(run)}")
    if "profile" in doc:
        kwargs["profile"] = _section(doc, "profile")
    kwargs["nmr"] = _section(doc, "nmr")
    if "dir" in out:
        kwargs["output_dir"] = str(out.pop("dir"))
    if "compare" in out:
        kwargs["compare"] = tuple(out.pop("compare"))
    if out:
        raise ConfigError(f"unknown [output] key(s): {sorted(out)}")
    try:
        return RunConfig(base_dir=path.parent, **kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


# -- initial condition and references ----------------------------------------

def _number(prof, key, default=None):
    v = prof.get(key, default)
    if v is None:
        raise ConfigError(f"profile key {key!r} is required")
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"profile key {key!r} must be a number")
    return float(v)


def _read_profile_file(path: Path, n_sites: int) -> np.ndarray:
    if not path.is_file():
        raise ConfigError(f"profile file {path} not found")
    try:
        traj = read_trajectory(path)
        return traj.rho[0]
    except TrajectoryFormatError:
        pass
    try:
        values = np.array([float(x) for x in path.read_text().replace(",", " ").split()])
    except ValueError as exc:
        raise ConfigError(f"profile file {path}: {exc}") from exc
    if values.size != n_sites:
        raise ConfigError(f"profile file {path} has {values.size} values, n_sites is {n_sites}")
    return values


def initial_condition(cfg: RunConfig):
    """``(rho0, profile)``; ``profile`` is None when no closed form exists."""
    prof, lat = cfg.profile, cfg.lattice
    kind = prof["kind"]
    allowed = {"gaussian": {"center", "sigma", "mass"}, "delta": {"site", "mass"},
               "uniform": {"level"}, "file": {"path"}}[kind]
    extra = set(prof) - allowed - {"kind"}
    if extra:
        raise ConfigError(f"unknown key(s) for a {kind} profile: {sorted(extra)}")
    params = ContinuumParams.from_lattice(lat)
    if kind == "gaussian":
        sigma = _number(prof, "sigma")
        if not sigma > 0:
            raise ConfigError("gaussian sigma must be positive")
        profile = GaussianProfile(_number(prof, "center"), sigma, _number(prof, "mass"))
        rho0 = continuum_solution(profile, 0.0, params, lat.positions)
    elif kind == "delta":
        site = prof.get("site", 0)
        if isinstance(site, bool) or not isinstance(site, int) or not 0 <= site < cfg.n_sites:
            raise ConfigError(f"delta site must be an integer in [0, {cfg.n_sites})")
        mass = _number(prof, "mass", 1.0)
        rho0 = np.zeros(cfg.n_sites)
        rho0[site] = mass / cfg.dz
        profile = GaussianProfile(site * cfg.dz, 0.0, mass)
    elif kind == "uniform":
        level = _number(prof, "level")
        rho0 = np.full(cfg.n_sites, level)
        profile = UniformProfile(level)
    else:
        if "path" not in prof:
            raise ConfigError("file profile needs a 'path'")
        rho0 = _read_profile_file(cfg.base_dir / str(prof["path"]), cfg.n_sites)
        profile = None
    if rho0.size != cfg.n_sites:
        raise ConfigError(f"initial profile has {rho0.size} sites, n_sites is {cfg.n_sites}")
    mass = float(rho0.sum() * cfg.dz)
    if mass > 2 * cfg.n_sites * cfg.dz:
        raise ConfigError(f"profile mass {mass:g} exceeds the encodable maximum "
                          f"{2 * cfg.n_sites * cfg.dz:g}")
    try:
        validate_density(rho0)
    except ValueError as exc:
        raise ConfigError(f"initial profile cannot be encoded: {exc}") from exc
    return rho0, profile


def analytic_frames(profile, rho0, cfg: RunConfig) -> np.ndarray:
    lat = cfg.lattice
    params = ContinuumParams.from_lattice(lat)
    frames = []
    for t in np.arange(cfg.steps + 1) * cfg.dt:
        if t == 0 and isinstance(profile, GaussianProfile) and profile.sigma == 0:
            frames.append(np.asarray(rho0, dtype=float))
        else:
            frames.append(continuum_solution(profile, float(t), params, lat.positions))
    return np.stack(frames)


def _density_trajectory(rho, lat) -> Trajectory:
    rho = np.asarray(rho, dtype=float)
    return Trajectory(rho=rho, f1=0.5 * rho, f2=0.5 * rho, cfg=lat)


def _experiment_config(cfg: RunConfig, rho0) -> ExperimentConfig:
    nmr = dict(cfg.nmr)
    preset = nmr.pop("preset", "published")
    factory = ExperimentConfig.published if preset == "published" else ExperimentConfig.ideal
    try:
        return factory(n_sites=cfg.n_sites, steps=cfg.steps, initial=tuple(rho0),
                       seed=cfg.seed, **nmr)
    except (ExperimentConfigError, TypeError) as exc:
        raise ConfigError(f"[nmr]: {exc}") from exc


def _rms(a, b):
    return np.sqrt(np.mean((a - b) ** 2, axis=-1))


def execute_run(cfg: RunConfig, out_dir) -> dict:
    """Run ``cfg`` and write trajectory, comparison and manifest into ``out_dir``."""
    t_start = time.perf_counter()
    lat = cfg.lattice
    rho0, profile = initial_condition(cfg)
    refs: dict[str, np.ndarray] = {"oracle": classical_run(rho0, cfg.steps)}
    if profile is not None:
        refs["analytic"] = analytic_frames(profile, rho0, cfg)
    extra: dict = {}

    if cfg.mode == "oracle":
        traj = _density_trajectory(refs["oracle"], lat)
    elif cfg.mode == "analytic":
        if profile is None:
            raise ConfigError("analytic mode needs a gaussian, delta or uniform profile")
        traj = _density_trajectory(refs["analytic"], lat)
    elif cfg.mode == "ideal":
        traj = lattice_run(rho0, cfg.steps, cfg=lat)
    else:
        result = simulate_experiment(_experiment_config(cfg, rho0))
        t = result.trajectory
        traj = Trajectory(rho=t.rho, f1=t.f1, f2=t.f2, cfg=lat)
        refs["ideal"] = result.ideal.rho
        extra = {
            "gate_fidelities": result.gate_fidelities,
            "mass_drift": result.mass_drift,
            "encoding_error": result.encoding_error,
            "experiment": result.config.to_dict(),
        }
    if "ideal" in cfg.compare and "ideal" not in refs:
        refs["ideal"] = lattice_run(rho0, cfg.steps, cfg=lat).rho

    compared = [r for r in cfg.compare if r in refs]
    for r in cfg.compare:
        if r not in refs:
            log.warning("no %s reference for this profile; skipped", r)
    cumulative_ref = "ideal" if cfg.mode == "nmr" else "oracle"
    cumulative = _rms(traj.rho, refs[cumulative_ref])

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = {"trajectory": "trajectory.csv", "comparison": "comparison.csv",
             "manifest": "manifest.json"}
    write_trajectory(out_dir / files["trajectory"], traj)

    header = ["step", "time", "mass"]
    cols = [np.arange(len(traj)), traj.times, traj.mass]
    for r in compared:
        header += [f"rms_vs_{r}", f"maxabs_vs_{r}"]
        cols += [_rms(traj.rho, refs[r]), np.max(np.abs(traj.rho - refs[r]), axis=-1)]
    header.append("cumulative_error")
    cols.append(cumulative)
    rows = [[int(cols[0][i])] + [c[i] for c in cols[1:]] for i in range(len(traj))]
    write_table(out_dir / files["comparison"], header, rows)

    records = []
    for i in range(len(traj)):
        records.append({
            "step": i,
            "time": float(traj.times[i]),
            "mass": float(traj.mass[i]),
            "rms": {r: float(_rms(traj.rho[i], refs[r][i])) for r in refs},
            "cumulative_error": float(cumulative[i]),
        })
    manifest = {
        "version": __version__,
        "config": cfg.echo(),
        "cumulative_error_reference": cumulative_ref,
        "records": records,
        "files": files,
        "timing": {"elapsed_s": time.perf_counter() - t_start},
        **extra,
    }
    write_json(out_dir / files["manifest"], manifest)
    return manifest


# -- compare and plotdata ----------------------------------------------------

def compare_trajectories(a: Trajectory, b: Trajectory) -> dict:
    if a.rho.shape != b.rho.shape:
        raise TrajectoryFormatError(
            f"shape mismatch: {a.rho.shape[0]} steps x {a.rho.shape[1]} sites vs "
            f"{b.rho.shape[0]} x {b.rho.shape[1]}"
        )
    return {
        "rms": _rms(a.rho, b.rho),
        "max_abs": np.max(np.abs(a.rho - b.rho), axis=-1),
        "mass_a": a.mass,
        "mass_b": b.mass,
        "mass_diff": b.mass - a.mass,
    }


def plot_rows(traj: Trajectory):
    """Long-format rows ``(step, site, z, rho_norm)`` normalised by the step-0 peak."""
    if len(traj) == 0 or traj.rho.size == 0:
        raise TrajectoryFormatError("trajectory is empty")
    peak = float(np.max(traj.rho[0]))
    if not peak > 0:
        raise TrajectoryFormatError("initial density has no positive peak to normalise by")
    norm = traj.rho / peak
    z = traj.cfg.positions
    return [(t, n, z[n], norm[t, n]) for t in range(len(traj)) for n in range(traj.cfg.n_sites)]


def _write_svg(path, traj: Trajectory, peak: float):
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as exc:
        raise TrajectoryFormatError("the SVG chart needs matplotlib (pip install artifact[plot])") from exc
    matplotlib.rcParams["svg.hashsalt"] = "qlg"
    fig, ax = plt.subplots(figsize=(6, 4))
    z = traj.cfg.positions
    for t in range(len(traj)):
        ax.plot(z, traj.rho[t] / peak, marker="o", ms=3, label=f"step {t}")
    ax.set_xlabel("z")
    ax.set_ylabel("normalised mass density")
    ax.legend(fontsize="small", ncol=2)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


# -- argument parsing --------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qlg", description="Quantum lattice-gas diffusion runs and reports.")
    p.add_argument("--version", action="version", version=f"qlg {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="execute a configured run")
    r.add_argument("--config", required=True, help="TOML run configuration")
    r.add_argument("--mode", choices=MODES, help="override [run] mode")
    r.add_argument("--out", help=f"output directory (default: [output] dir, ${ENV_OUTPUT_DIR}, "
                                 f"or ./{DEFAULT_OUTPUT_DIR})")

    c = sub.add_parser("compare", help="compare two trajectory files")
    c.add_argument("a")
    c.add_argument("b")
    c.add_argument("--tol", type=float, default=1e-12,
                   help="pass iff every per-step RMS difference is <= TOL")
    c.add_argument("--out", help="also write the report as CSV")

    d = sub.add_parser("plotdata", help="emit normalised plot-ready data")
    d.add_argument("trajectory")
    d.add_argument("--out", help="long-format CSV (default: plotdata.csv next to the input)")
    d.add_argument("--svg", help="also draw an SVG chart (needs matplotlib)")
    return p


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.mode:
        cfg = dataclasses.replace(cfg, mode=args.mode)
    if args.out:
        out = Path(args.out)
    elif cfg.output_dir:
        out = cfg.base_dir / cfg.output_dir
    else:
        out = Path(os.environ.get(ENV_OUTPUT_DIR) or DEFAULT_OUTPUT_DIR)
    log.info("running mode=%s n_sites=%d steps=%d", cfg.mode, cfg.n_sites, cfg.steps)
    manifest = execute_run(cfg, out)
    last = manifest["records"][-1]
    print(f"{cfg.mode}: {len(manifest['records']) - 1} steps, final mass {last['mass']:.12g}, "
          f"output in {out}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    if not args.tol >= 0:
        raise ConfigError("--tol must be non-negative")
    a, b = read_trajectory(args.a), read_trajectory(args.b)
    rep = compare_trajectories(a, b)
    header = ["step", "rms", "max_abs", "mass_a", "mass_b", "mass_diff"]
    rows = [[i, rep["rms"][i], rep["max_abs"][i], rep["mass_a"][i], rep["mass_b"][i],
             rep["mass_diff"][i]] for i in range(len(rep["rms"]))]
    print(" ".join(f"{h:>12}" for h in header))
    for row in rows:
        print(f"{row[0]:>12d} " + " ".join(f"{x:>12.4e}" for x in row[1:]))
    if args.out:
        write_table(args.out, header, rows)
    worst = float(np.max(rep["rms"]))
    if worst > args.tol:
        print(f"FAIL: max per-step RMS {worst:.3e} exceeds tolerance {args.tol:.3e}")
        return EXIT_TOLERANCE
    print(f"OK: max per-step RMS {worst:.3e} within tolerance {args.tol:.3e}")
    return EXIT_OK


def _cmd_plotdata(args) -> int:
    traj = read_trajectory(args.trajectory)
    rows = plot_rows(traj)
    out = Path(args.out) if args.out else Path(args.trajectory).with_name("plotdata.csv")
    write_table(out, ["step", "site", "z", "rho_norm"], rows)
    if args.svg:
        _write_svg(args.svg, traj, float(np.max(traj.rho[0])))
    print(f"{len(traj)} series written to {out}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    handler = {"run": _cmd_run, "compare": _cmd_compare, "plotdata": _cmd_plotdata}[args.command]
    try:
        return handler(args)
    except (ConfigError, TrajectoryFormatError, ExperimentConfigError) as exc:
        print(f"qlg {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"qlg {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

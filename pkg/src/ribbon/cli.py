"""Batch front end: ``synth``, ``register``, ``thickness``, ``compare`` and ``export-grid``.

Every command reads one :class:`RunConfig` assembled from (in increasing
priority) built-in defaults, a JSON config file, ``--set key=value`` overrides
and explicit flags.  Outputs go to the run directory, are written atomically and
are recorded in ``manifest.json`` together with the config hash and per-stage
wall-clock times.

Exit codes: 0 success, 2 invalid configuration, 3 solver did not converge
(partial outputs are kept), 4 input/output or mesh errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .export import (
    _jsonable,
    load_trajectory,
    save_trajectory,
    write_columns,
    write_convergence,
    write_histogram,
    write_report,
    write_sheets,
)
from .mesh import MeshError, check_orientation
from .meshio import MeshParseError, atomic_write_text, load_mesh, read_sidecar, save_mesh, write_sidecar
from .solver import SolverError, SolverParams, solve
from .synth import GENERATORS, SurfacePair
from .thickness import build_report, histogram

log = logging.getLogger("ribbon")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4

# help text for every solver parameter, with the symbol it stands for
PARAM_HELP = {
    "T": "number of time steps T of the explicit Euler flow (dt = 1/T)",
    "w_D": "attachment weight w_D multiplying the varifold term D",
    "sigma_v": "width sigma_V of the Gaussian kernel of the velocity space V "
               "(unset: 0.4 x inner bounding-box diagonal)",
    "sigma_w": "width sigma_W of the varifold spatial kernel chi (unset: 2 x median outer edge length)",
    "lam": "hybrid weight lambda on the Jacobian term of the velocity norm",
    "inner_maxiter": "iteration cap of each inner quasi-Newton solve",
    "inner_gtol": "inner gradient tolerance, relative to the initial gradient sup-norm",
    "inner_ftol": "inner relative decrease tolerance",
    "lbfgs_memory": "number of stored correction pairs of the quasi-Newton inner solver",
    "rho0": "initial penalty rho of the augmented Lagrangian",
    "gamma": "penalty growth factor gamma",
    "rho_max": "upper bound on the penalty rho",
    "theta": "required shrink factor theta of the max violation before the penalty is kept",
    "ctol": "constraint tolerance: stop when max|C| / mean|v| <= ctol",
    "max_outer": "cap on augmented-Lagrangian outer iterations",
    "precondition": "inner change of variables: none, gram (kernel whitening) or full (kernel and penalty)",
    "deterministic": "single-threaded solve with fixed reduction order",
}


class ConfigError(ValueError):
    pass


def _parse_scalar(text: str):
    low = text.strip().lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("none", "null"):
        return None
    if "," in text:
        return [_parse_scalar(t) for t in text.split(",")]
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def _parse_assignments(items: list[str]) -> dict:
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"expected key=value, got {item!r}")
        out[key.strip()] = _parse_scalar(value)
    return out


@dataclass
class RunConfig:
    inner: str | None = None
    outer: str | None = None
    generator: dict | None = None
    output: str = "run"
    solver: SolverParams = field(default_factory=SolverParams)
    deterministic: bool = True
    seed: int = 0
    threads: int = 1
    rings: int = 1
    bins: int = 50
    correct: bool = True
    mesh_format: str = "off"
    label: str | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        solver = data.pop("solver", {}) or {}
        if isinstance(solver, SolverParams):
            solver = asdict(solver)
        sp_known = {f.name for f in fields(SolverParams)}
        bad = set(solver) - sp_known
        if bad:
            raise ConfigError(f"unknown solver keys: {sorted(bad)}")
        try:
            params = SolverParams(**solver)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid solver parameters: {exc}") from exc
        return cls(solver=params, **data)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["solver"] = asdict(self.solver)
        return d

    def config_hash(self) -> str:
        blob = json.dumps(_jsonable(self.to_dict()), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def validate(self, need_input: bool) -> None:
        has_paths = self.inner is not None or self.outer is not None
        if need_input:
            if has_paths == (self.generator is not None):
                raise ConfigError("give exactly one of input paths (inner and outer) or a generator spec")
            if has_paths and (self.inner is None or self.outer is None):
                raise ConfigError("both inner and outer paths are required")
        if self.generator is not None:
            kind = self.generator.get("kind")
            if kind not in GENERATORS:
                raise ConfigError(f"generator kind must be one of {sorted(GENERATORS)}, got {kind!r}")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if self.rings < 0:
            raise ConfigError("rings must be nonnegative")
        if self.bins < 1:
            raise ConfigError("bins must be positive")
        if self.mesh_format not in ("off", "ply"):
            raise ConfigError("mesh_format must be off or ply")
        self.solver = replace(self.solver, deterministic=self.deterministic)


def build_config(args: argparse.Namespace) -> RunConfig:
    data: dict = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {args.config} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
    data.setdefault("solver", {})
    for key, value in _parse_assignments(args.set or []).items():
        head, _, rest = key.partition(".")
        if head == "solver" and rest:
            data["solver"][rest] = value
        elif head == "generator" and rest:
            data.setdefault("generator", {})
            data["generator"][rest] = value
        else:
            data[key] = value
    for name in ("inner", "outer", "output", "threads", "rings", "bins", "seed", "mesh_format", "label"):
        val = getattr(args, name, None)
        if val is not None:
            data[name] = val
    if getattr(args, "deterministic", None) is not None:
        data["deterministic"] = args.deterministic
    if getattr(args, "correct", None) is not None:
        data["correct"] = args.correct
    for kind in GENERATORS:
        spec = getattr(args, kind, None)
        if spec is not None:
            data["generator"] = {"kind": kind, **_parse_assignments(spec)}
    for f in fields(SolverParams):
        val = getattr(args, f"p_{f.name}", None)
        if val is not None:
            data["solver"][f.name] = val
    return RunConfig.from_dict(data)


def _generate(gen: dict) -> SurfacePair:
    kw = {k: (tuple(v) if isinstance(v, list) else v) for k, v in gen.items() if k != "kind"}
    try:
        return GENERATORS[gen["kind"]](**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad generator arguments for {gen['kind']}: {exc}") from exc


def _load_pair(cfg: RunConfig) -> SurfacePair:
    if cfg.generator is not None:
        return _generate(cfg.generator)
    inner = load_mesh(cfg.inner)
    outer = load_mesh(cfg.outer)
    meta = {}
    side = Path(cfg.inner).with_suffix(".json")
    if side.exists():
        meta = read_sidecar(side)
    return SurfacePair(inner, outer, meta=meta)


class Manifest:
    """``manifest.json`` in the run directory, merged across commands.

    Each stage entry carries the config it ran with, since later commands of a
    run may use different settings from earlier ones.
    """

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.path = Path(cfg.output) / "manifest.json"
        self.data = {}
        if self.path.exists():
            try:
                self.data = json.loads(self.path.read_text())
            except (OSError, json.JSONDecodeError):
                self.data = {}
        self.data.update(tool="ribbon", version=__version__)
        self.data.setdefault("stages", {})

    def stage(self, name: str, seconds: float, status: str = "ok", **extra) -> None:
        self.data["stages"][name] = {
            "seconds": round(seconds, 3),
            "status": status,
            "finished": time.strftime("%Y-%m-%dT%H:%M:%S"),
            "config": _jsonable(self.cfg.to_dict()),
            "config_hash": self.cfg.config_hash(),
            **_jsonable(extra),
        }
        atomic_write_text(self.path, json.dumps(self.data, indent=2, sort_keys=True) + "\n")


def cmd_synth(cfg: RunConfig) -> int:
    if cfg.generator is None:
        raise ConfigError("synth needs a generator spec (--plate, --cap or --fold)")
    t0 = time.perf_counter()
    pair = _generate(cfg.generator)
    out = Path(cfg.output)
    ext = cfg.mesh_format
    save_mesh(pair.inner, out / f"inner.{ext}")
    save_mesh(pair.outer, out / f"outer.{ext}")
    write_sidecar(out / "inner.json", _jsonable({"units": pair.units, **pair.meta}))
    Manifest(cfg).stage("synth", time.perf_counter() - t0,
                        vertices=pair.inner.n_vertices, faces=pair.inner.n_faces)
    print(f"wrote {out}/inner.{ext}, {out}/outer.{ext} ({pair.inner.n_vertices} vertices)")
    return EXIT_OK


def cmd_register(cfg: RunConfig) -> int:
    out = Path(cfg.output)
    manifest = Manifest(cfg)
    t0 = time.perf_counter()
    pair = _load_pair(cfg)
    check_orientation(pair.inner, pair.outer)
    save_mesh(pair.inner, out / "inner.off")
    save_mesh(pair.outer, out / "outer.off")
    if pair.meta:
        write_sidecar(out / "inner.json", _jsonable(pair.meta))
    manifest.stage("load", time.perf_counter() - t0)

    t0 = time.perf_counter()
    params = cfg.solver.resolved(pair)
    traj, al, report = solve(pair, params)
    meta = {"status": report.status, "params": params.to_dict(), "version": __version__}
    save_trajectory(traj, out / "trajectory.npz", meta)
    write_convergence(report, out / "convergence.jsonl")
    final = report.final
    manifest.stage("register", time.perf_counter() - t0, status=report.status,
                   outer_iterations=report.outer_iterations,
                   rel_violation=final.get("rel_violation"), F=final.get("F"))
    print(f"register: {report.status} after {report.outer_iterations} outer iterations")
    return EXIT_OK if report.converged else EXIT_SOLVER


def _load_run(cfg: RunConfig):
    out = Path(cfg.output)
    traj, meta = load_trajectory(out / "trajectory.npz")
    outer = load_mesh(out / "outer.off")
    return traj, meta, outer


def cmd_thickness(cfg: RunConfig) -> int:
    t0 = time.perf_counter()
    traj, meta, outer = _load_run(cfg)
    rep = build_report(traj, outer, rings=cfg.rings, bins=cfg.bins, correct=cfg.correct, label=cfg.label)
    write_report(rep, cfg.output)
    Manifest(cfg).stage("thickness", time.perf_counter() - t0, solver_status=meta.get("status"))
    s = rep.summary
    print(f"thickness: mean {s['mean']:.4f} median {s['median']:.4f} over {s['count']} vertices")
    return EXIT_OK


def cmd_compare(cfg: RunConfig) -> int:
    t0 = time.perf_counter()
    traj, meta, outer = _load_run(cfg)
    rep = build_report(traj, outer, rings=cfg.rings, bins=cfg.bins, correct=cfg.correct)
    out = Path(cfg.output)
    base, col, cor, mask = rep.baseline, rep.column_length, rep.corrected_length, rep.mask
    slack = float(outer.edge_lengths().max())
    lines = ["vertex\tbaseline\tcolumn_length\tcorrected_length\tbaseline_minus_corrected\tboundary_excluded"]
    for i in range(len(base)):
        lines.append(f"{i}\t{base[i]:.17g}\t{col[i]:.17g}\t{cor[i]:.17g}\t{base[i] - cor[i]:.17g}\t{int(not mask[i])}")
    atomic_write_text(out / "compare.tsv", "\n".join(lines) + "\n")
    ok = ~rep.fallback & mask
    summary = {
        "included": int(mask.sum()),
        "mean_baseline": float(base[mask].mean()),
        "mean_column_length": float(col[mask].mean()),
        "mean_corrected_length": float(cor[mask].mean()),
        "baseline_below_column": bool(base[mask].mean() < col[mask].mean()),
        "edge_slack": slack,
        "lower_bound_fraction": float(np.mean(base[ok] <= cor[ok] + slack)) if ok.any() else float("nan"),
        "solver_status": meta.get("status"),
    }
    atomic_write_text(out / "compare_summary.json", json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    upper = float(np.percentile(np.concatenate([base[mask], cor[mask]]), 99.5))
    for name, vals in (("baseline", base[mask]), ("column", cor[mask])):
        edges, counts = histogram(vals, cfg.bins, upper)
        write_histogram(edges, counts, out / f"{name}_histogram.tsv")
    Manifest(cfg).stage("compare", time.perf_counter() - t0)
    print(f"compare: mean baseline {summary['mean_baseline']:.4f} vs mean column "
          f"{summary['mean_column_length']:.4f} (corrected {summary['mean_corrected_length']:.4f})")
    return EXIT_OK


def cmd_export_grid(cfg: RunConfig) -> int:
    t0 = time.perf_counter()
    traj, _, _ = _load_run(cfg)
    out = Path(cfg.output)
    paths = write_sheets(traj, out / "sheets")
    write_columns(traj, out / "columns.tsv")
    Manifest(cfg).stage("export-grid", time.perf_counter() - t0, sheets=len(paths))
    print(f"export-grid: {len(paths)} sheets and columns.tsv in {out}")
    return EXIT_OK


COMMANDS = {
    "synth": (cmd_synth, False),
    "register": (cmd_register, True),
    "thickness": (cmd_thickness, False),
    "compare": (cmd_compare, False),
    "export-grid": (cmd_export_grid, False),
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("-c", "--config", help="JSON config file (keys as in RunConfig; solver fields under 'solver')")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key, e.g. rings=0 or solver.T=5 (repeatable)")
    p.add_argument("-o", "--output", help="run directory (default: run)")
    p.add_argument("--threads", type=int, help="BLAS threads outside the deterministic solve (default: 1)")
    p.add_argument("--deterministic", action=argparse.BooleanOptionalAction, default=None,
                   help="single-threaded solve for bit-identical reruns (default: on)")
    p.add_argument("--seed", type=int, help="random seed recorded in the manifest (default: 0)")
    p.add_argument("-v", "--verbose", action="store_true", help="log outer iterations")


def _add_inputs(p: argparse.ArgumentParser) -> None:
    p.add_argument("--inner", help="inner surface mesh (OFF or ascii PLY)")
    p.add_argument("--outer", help="outer surface mesh (OFF or ascii PLY)")
    for kind in GENERATORS:
        p.add_argument(f"--{kind}", nargs="*", metavar="KEY=VALUE",
                       help=f"use the synthetic {kind} pair with these generator arguments")


def _add_solver(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("solver parameters")
    defaults = SolverParams()
    for f in fields(SolverParams):
        if f.name == "deterministic":
            continue
        default = getattr(defaults, f.name)
        typ = {"int": int, "float": float, "str": str}.get(type(default).__name__, float)
        flag = "--" + f.name.replace("_", "-")
        g.add_argument(flag, dest=f"p_{f.name}", type=typ, default=None,
                       help=f"{PARAM_HELP[f.name]} (default: {default})")


def _add_thickness(p: argparse.ArgumentParser) -> None:
    p.add_argument("--rings", type=int, help="boundary rings excluded from statistics (default: 1)")
    p.add_argument("--bins", type=int, help="histogram bins (default: 50)")
    p.add_argument("--correct", action=argparse.BooleanOptionalAction, default=None,
                   help="summarise endpoint-corrected lengths (default: on)")
    p.add_argument("--label", help="group label stored in the report (default: none)")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ribbon", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("synth", help="write a synthetic inner/outer pair and its ground-truth sidecar")
    _add_common(p)
    _add_inputs(p)
    p.add_argument("--mesh-format", choices=["off", "ply"], help="mesh file format (default: off)")
    p = sub.add_parser("register", help="solve the normal-flow registration and save the trajectory")
    _add_common(p)
    _add_inputs(p)
    _add_solver(p)
    for name, text in (
        ("thickness", "column-length thickness report from a saved trajectory"),
        ("compare", "nearest-vertex baseline against column lengths"),
        ("export-grid", "per-step sheet meshes and the column polyline file"),
    ):
        p = sub.add_parser(name, help=text)
        _add_common(p)
        if name != "export-grid":
            _add_thickness(p)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    func, need_input = COMMANDS[args.command]
    try:
        cfg = build_config(args)
        cfg.validate(need_input)
        if args.command == "synth" and cfg.inner is not None:
            raise ConfigError("synth takes a generator spec, not input paths")
        Path(cfg.output).mkdir(parents=True, exist_ok=True)
        with threadpool_limits(cfg.threads):
            return func(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (OSError, MeshParseError, MeshError) as exc:
        print(f"input/output error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    raise SystemExit(main())

"""Command-line driver: plan, verify, bench and export-scene.

Configuration is one INI file::

    [scene]
    mesh = courtyard.obj        ; relative paths resolve against the INI file

    [camera]                    ; CameraModel fields
    d_vis = 25
    d_safe = 2

    [sampling]                  ; SamplingParams fields (d_vis/d_safe come from [camera])
    d_max = 20

    [solver]                    ; SolverParams fields
    K = 2
    delta_d = 0.98

    [run]
    out = runs/courtyard
    verify = yes
    repeats = 10
    uavs = 1, 2, 3              ; K values for bench
    methods = greedy, BRKGA, BRKGA+
    local_improvement = yes

Exit codes: 0 feasible plan, 2 infeasible, 1 any error.
"""

from __future__ import annotations

import argparse
import colorsys
import configparser
import csv
import dataclasses
import logging
import math
import os
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import scenes
from .cprm import CPRM, CPRMBuildError, SamplingParams, build_cprm, load_cprm, polyline_length, required_count, save_cprm
from .geometry import (
    GridError,
    MeshError,
    TriangleMesh,
    dilate,
    load_mesh,
    mesh_from_arrays,
    sample_surface_patches,
    save_obj,
    segment_collision_free,
    voxelize,
)
from .solver import SolverParams, greedy_baseline, run_brkga
from .solver.baselines import InfeasibleError
from .solver.brkga import _init_worker
from .solver.decoder import DecodeTables
from .solver.io import SolutionFile, read_solution, solution_record, write_convergence, write_solution
from .visibility import CameraModel, path_visibility

log = logging.getLogger("macpp")

WORKERS_ENV = "MACPP_WORKERS"
METHODS = ("greedy", "BRKGA", "BRKGA+")
BENCH_HEADER = ["row", "method", "K", "seed", "fitness", "coverage", "wall_time"]

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# configuration


def _convert(annotation, raw: str):
    annotation = getattr(annotation, "__name__", str(annotation))
    raw = raw.strip()
    if "None" in annotation and raw.lower() in ("none", ""):
        return None
    if annotation.startswith("bool"):
        return raw.lower() in ("1", "yes", "true", "on")
    if annotation.startswith("int"):
        return int(raw)
    return float(raw)


def _section(cp: configparser.ConfigParser, name: str, cls, skip=()):
    known = {f.name.lower(): f for f in dataclasses.fields(cls)}
    out = {}
    if cp.has_section(name):
        for key, raw in cp.items(name):
            f = known.get(key.lower())
            if f is None or f.name in skip:
                raise ConfigError(f"[{name}] unknown key {key!r}")
            try:
                out[f.name] = _convert(f.type, raw)
            except ValueError as exc:
                raise ConfigError(f"[{name}] {key}: {exc}") from exc
    return out


def _bool(raw: str) -> bool:
    return raw.strip().lower() in ("1", "yes", "true", "on")


def _int_list(raw: str) -> list[int]:
    try:
        vals = [int(x) for x in raw.replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError(f"bad integer list {raw!r}") from exc
    if not vals:
        raise ConfigError("empty integer list")
    return vals


@dataclass
class RunConfig:
    mesh: Path
    camera: CameraModel = field(default_factory=CameraModel)
    sampling: SamplingParams = field(default_factory=SamplingParams)
    solver: SolverParams = field(default_factory=SolverParams)
    out: Path = Path("macpp-out")
    verify: bool = True
    repeats: int = 10
    uavs: list[int] = field(default_factory=lambda: [1, 2, 3])
    methods: list[str] = field(default_factory=lambda: list(METHODS))
    local_improvement: bool = True

    def validate(self) -> None:
        if not self.mesh.is_file():
            raise ConfigError(f"mesh file not found: {self.mesh}")
        if (self.sampling.d_vis, self.sampling.d_safe) != (self.camera.d_vis, self.camera.d_safe):
            raise ConfigError("camera and sampling disagree on d_vis / d_safe")
        if self.repeats < 1:
            raise ConfigError("repeats must be at least 1")
        if any(k < 1 for k in self.uavs):
            raise ConfigError("uavs must be positive")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown method(s) {bad}; choose from {list(METHODS)}")

    def echo(self) -> dict[str, str]:
        """Flat ``section.key -> value`` view of every parameter."""
        out = {"scene.mesh": str(self.mesh)}
        for sec, obj in (("camera", self.camera), ("sampling", self.sampling), ("solver", self.solver)):
            for f in dataclasses.fields(obj):
                v = getattr(obj, f.name)
                out[f"{sec}.{f.name}"] = "none" if v is None else repr(v)
        out["run.local_improvement"] = "yes" if self.local_improvement else "no"
        return out

    def to_ini(self) -> str:
        lines = []
        for sec in ("scene", "camera", "sampling", "solver"):
            lines.append(f"[{sec}]")
            for k, v in self.echo().items():
                # the shell distances live under [camera] only
                if k.startswith(sec + ".") and k not in ("sampling.d_vis", "sampling.d_safe"):
                    lines.append(f"{k.split('.', 1)[1]} = {v}")
            lines.append("")
        lines.append("[run]")
        lines.append(f"out = {self.out}")
        lines.append(f"verify = {'yes' if self.verify else 'no'}")
        lines.append(f"repeats = {self.repeats}")
        lines.append("uavs = " + ", ".join(map(str, self.uavs)))
        lines.append("methods = " + ", ".join(self.methods))
        lines.append(f"local_improvement = {'yes' if self.local_improvement else 'no'}")
        return "\n".join(lines) + "\n"


def parse_config(text: str, base: Path = Path(".")) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    known = {"scene", "camera", "sampling", "solver", "run"}
    extra = set(cp.sections()) - known
    if extra:
        raise ConfigError(f"unknown section(s) {sorted(extra)}")
    if not cp.has_option("scene", "mesh"):
        raise ConfigError("[scene] mesh is required")
    mesh = Path(cp.get("scene", "mesh").strip())
    if not mesh.is_absolute():
        mesh = (base / mesh).resolve()
    try:
        cam = CameraModel(**_section(cp, "camera", CameraModel))
        samp = SamplingParams(d_vis=cam.d_vis, d_safe=cam.d_safe, **_section(cp, "sampling", SamplingParams, ("d_vis", "d_safe")))
        solver = SolverParams(**_section(cp, "solver", SolverParams))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    cfg = RunConfig(mesh, cam, samp, solver)
    if cp.has_section("run"):
        run = cp["run"]
        for key in run:
            if key not in ("out", "verify", "repeats", "uavs", "methods", "local_improvement"):
                raise ConfigError(f"[run] unknown key {key!r}")
        if "out" in run:
            cfg.out = Path(run["out"].strip())
            if not cfg.out.is_absolute():
                cfg.out = base / cfg.out
        if "verify" in run:
            cfg.verify = _bool(run["verify"])
        if "repeats" in run:
            cfg.repeats = int(run["repeats"])
        if "uavs" in run:
            cfg.uavs = _int_list(run["uavs"])
        if "methods" in run:
            cfg.methods = [m.strip() for m in run["methods"].split(",") if m.strip()]
        if "local_improvement" in run:
            cfg.local_improvement = _bool(run["local_improvement"])
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(encoding="utf-8"), path.parent)


def config_from_echo(params: dict[str, str]) -> tuple[CameraModel, SamplingParams, SolverParams, Path | None]:
    """Rebuild the parameter objects echoed into a solution file."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    for key, value in params.items():
        sec, name = key.split(".", 1)
        if not cp.has_section(sec):
            cp.add_section(sec)
        cp.set(sec, name, value)
    cam = CameraModel(**_section(cp, "camera", CameraModel))
    samp = SamplingParams(**_section(cp, "sampling", SamplingParams))
    solver = SolverParams(**_section(cp, "solver", SolverParams))
    mesh = Path(params["scene.mesh"]) if "scene.mesh" in params else None
    return cam, samp, solver, mesh


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None


# --------------------------------------------------------------------------
# verification


@dataclass
class VerificationReport:
    coverage_ratio: float
    agent_lengths: list[float]
    max_length: float
    collisions: int
    delta_d: float
    passed: bool
    problems: list[str] = field(default_factory=list)

    def to_text(self) -> str:
        lines = [
            f"status {'PASS' if self.passed else 'FAIL'}",
            f"coverage {float(self.coverage_ratio)!r}",
            f"delta_d {float(self.delta_d)!r}",
            f"collisions {self.collisions}",
            f"max_length {float(self.max_length)!r}",
        ]
        lines += [f"agent {k} {float(x)!r}" for k, x in enumerate(self.agent_lengths)]
        lines += [f"problem {p}" for p in self.problems]
        return "\n".join(lines) + "\n"


def _continuity(rec: SolutionFile, problems: list[str]) -> None:
    for a in rec.agents:
        for i, leg in enumerate(a.legs):
            if i and not np.array_equal(leg.polyline[0], a.legs[i - 1].polyline[-1]):
                problems.append(f"agent {a.agent}: leg {i} does not start where leg {i - 1} ends")
        if len(a.legs) != len(a.edges):
            problems.append(f"agent {a.agent}: {len(a.legs)} legs for {len(a.edges)} edges")


def replay_context(mesh: TriangleMesh, sampling: SamplingParams):
    """Patches and safety grid rebuilt from the mesh, independent of any roadmap file."""
    patches = sample_surface_patches(mesh, sampling.target_patch_area)
    occ = voxelize(mesh, sampling.voxel_resolution, padding=sampling.d_vis)
    return patches, dilate(occ, sampling.d_safe)


def verify_solution(
    rec: SolutionFile,
    mesh: TriangleMesh,
    cam: CameraModel,
    sampling: SamplingParams,
    delta_d: float,
    context=None,
) -> VerificationReport:
    """Replay a plan against the mesh from scratch.

    Coverage is recomputed along every flown leg, every polyline segment is
    checked against the safety-dilated occupancy grid, and route lengths are
    summed from the polylines. ``context`` may carry a precomputed
    :func:`replay_context` when many plans share one mesh.
    """
    patches, safegrid = context or replay_context(mesh, sampling)
    covered = 0
    collisions = 0
    lengths = []
    problems: list[str] = []
    _continuity(rec, problems)
    for a in rec.agents:
        total = 0.0
        for leg in a.legs:
            covered |= path_visibility(leg.polyline, leg.start_dir, leg.end_dir, patches, mesh, cam, sampling.path_spacing).value
            for p0, p1 in zip(leg.polyline, leg.polyline[1:]):
                try:
                    ok = segment_collision_free(safegrid, p0, p1)
                except GridError:
                    ok = False
                if not ok:
                    collisions += 1
            total += polyline_length(leg.polyline)
        lengths.append(total)
    m = patches.m
    ratio = covered.bit_count() / m
    passed = covered.bit_count() >= required_count(delta_d, m) and collisions == 0 and not problems
    return VerificationReport(ratio, lengths, max(lengths, default=0.0), collisions, delta_d, passed, problems)


def verify_on_roadmap(rec: SolutionFile, graph: CPRM, delta_d: float) -> VerificationReport:
    """Replay against a roadmap's stored edge data, for roadmaps without a mesh.

    Every step must be a roadmap edge; coverage is the union of those edges'
    stored bits. A step that is not an edge counts as a collision.
    """
    covered = 0
    collisions = 0
    lengths = []
    problems: list[str] = []
    for a in rec.agents:
        total = 0.0
        for u, v, e in zip(a.nodes, a.nodes[1:], a.edges):
            if graph.edge_between(u, v) != e:
                collisions += 1
                continue
            covered |= graph.edge_bits[e]
            total += graph.edge_length[e]
        lengths.append(total)
        if len(a.nodes) != len(a.edges) + 1:
            problems.append(f"agent {a.agent}: {len(a.nodes)} nodes for {len(a.edges)} edges")
    m = graph.m
    passed = covered.bit_count() >= required_count(delta_d, m) and collisions == 0 and not problems
    return VerificationReport(covered.bit_count() / m, lengths, max(lengths, default=0.0), collisions, delta_d, passed, problems)


# --------------------------------------------------------------------------
# scene export


def _agent_color(k: int) -> tuple[float, float, float]:
    return colorsys.hsv_to_rgb((0.61803398875 * k) % 1.0, 0.85, 0.95)


def export_scene(graph: CPRM, rec: SolutionFile, path) -> Path:
    """OBJ + MTL: the structure, then one colored polyline object per agent.

    Each polyline runs through the agent's via-points in visiting order.
    Agents with no moves are left out.
    """
    path = Path(path)
    mtl = path.with_suffix(".mtl")
    obj_lines = [f"mtllib {mtl.name}"]
    mtl_lines = ["newmtl structure", "Kd 0.7 0.7 0.7"]
    base = 0
    if graph.mesh is not None:
        obj_lines += ["o structure", "usemtl structure"]
        obj_lines += ["v {!r} {!r} {!r}".format(*map(float, v)) for v in graph.mesh.vertices]
        obj_lines += ["f {} {} {}".format(*(int(i) + 1 for i in t)) for t in graph.mesh.triangles]
        base = len(graph.mesh.vertices)
    for a in rec.agents:
        if len(a.nodes) < 2:
            continue
        name = f"agent_{a.agent}"
        mtl_lines += ["", f"newmtl {name}", "Kd {:.4f} {:.4f} {:.4f}".format(*_agent_color(a.agent))]
        obj_lines += [f"o {name}", f"usemtl {name}"]
        obj_lines += ["v {!r} {!r} {!r}".format(*map(float, graph.nodes[v].position)) for v in a.nodes]
        obj_lines.append("l " + " ".join(str(base + i + 1) for i in range(len(a.nodes))))
        base += len(a.nodes)
    path.write_text("\n".join(obj_lines) + "\n", encoding="utf-8")
    mtl.write_text("\n".join(mtl_lines) + "\n", encoding="utf-8")
    return path


# --------------------------------------------------------------------------
# commands


def _pool(workers: int, initializer=None, initargs=()):
    if workers <= 1:
        return None
    return ProcessPoolExecutor(workers, initializer=initializer, initargs=initargs)


def _build(cfg: RunConfig, mesh: TriangleMesh, workers: int) -> CPRM:
    pool = _pool(workers)
    try:
        graph, report = build_cprm(
            mesh,
            cfg.sampling,
            cfg.camera,
            np.random.default_rng(cfg.sampling.rng_seed),
            delta_d=cfg.solver.delta_d,
            executor=pool,
        )
    finally:
        if pool:
            pool.shutdown()
    log.info("roadmap: %d nodes, %d edges, ceiling %.4f", report.n_nodes, report.n_edges, report.ceiling)
    return graph


def _solve(graph: CPRM, params: SolverParams, local: bool, workers: int):
    pool = _pool(workers, _init_worker, (DecodeTables(graph, params),))
    try:
        return run_brkga(graph, params, local, np.random.default_rng(params.rng_seed), pool, workers)
    finally:
        if pool:
            pool.shutdown()


def cmd_plan(cfg: RunConfig) -> int:
    cfg.validate()
    workers = worker_count()
    mesh = load_mesh(cfg.mesh)
    cfg.out.mkdir(parents=True, exist_ok=True)
    (cfg.out / "config.ini").write_text(cfg.to_ini(), encoding="utf-8")
    try:
        graph = _build(cfg, mesh, workers)
    except CPRMBuildError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    save_cprm(graph, cfg.out / "roadmap.cprm")
    result = _solve(graph, cfg.solver, cfg.local_improvement, workers)
    rec = solution_record(result.best, graph, cfg.solver.rng_seed, cfg.echo())
    write_solution(rec, cfg.out / "solution.txt")
    write_convergence(result, cfg.out / "convergence.csv")
    export_scene(graph, rec, cfg.out / "scene.obj")
    print(f"fitness {float(result.best.fitness)!r} coverage {float(result.best.coverage_ratio)!r} feasible {result.feasible}")
    if not result.feasible:
        print("infeasible: no chromosome reached the coverage target", file=sys.stderr)
        return EXIT_INFEASIBLE
    if cfg.verify:
        report = verify_solution(rec, mesh, cfg.camera, cfg.sampling, cfg.solver.delta_d)
        (cfg.out / "verify.txt").write_text(report.to_text(), encoding="utf-8")
        if not report.passed:
            print("verification failed:\n" + report.to_text(), file=sys.stderr)
            return EXIT_ERROR
    return EXIT_OK


def cmd_verify(solution_path, mesh_path=None, cfg: RunConfig | None = None, out=None, context=None) -> VerificationReport:
    rec = read_solution(solution_path)
    cam, samp, solver, echoed_mesh = config_from_echo(rec.params)
    if cfg is not None:
        cam, samp, solver = cfg.camera, cfg.sampling, cfg.solver
        echoed_mesh = cfg.mesh
    mesh_path = Path(mesh_path) if mesh_path else echoed_mesh
    if mesh_path is None:
        raise ConfigError("no mesh given and none echoed in the solution file")
    report = verify_solution(rec, load_mesh(mesh_path), cam, samp, solver.delta_d, context)
    if out is not None:
        Path(out).write_text(report.to_text(), encoding="utf-8")
    return report


def _run_method(method: str, graph: CPRM, params: SolverParams, workers: int):
    if method == "greedy":
        return greedy_baseline(graph, params)
    return _solve(graph, params, method == "BRKGA+", workers).best


def cmd_bench(cfg: RunConfig, out_csv) -> list[list]:
    """Seeded runs of every method for every K; returns the CSV rows."""
    cfg.validate()
    workers = worker_count()
    graph = _build(cfg, load_mesh(cfg.mesh), workers)
    rows: list[list] = []
    summary: list[list] = []
    for K in cfg.uavs:
        for method in cfg.methods:
            fits, covs, walls = [], [], []
            for r in range(cfg.repeats):
                seed = cfg.solver.rng_seed + r
                params = dataclasses.replace(cfg.solver, K=K, rng_seed=seed)
                t0 = time.perf_counter()
                try:
                    sol = _run_method(method, graph, params, workers)
                    fit, cov = sol.fitness, sol.coverage_ratio
                except InfeasibleError:
                    fit, cov = math.inf, 0.0
                wall = time.perf_counter() - t0
                rows.append([len(rows), method, K, seed, fit, cov, wall])
                fits.append(fit)
                covs.append(cov)
                walls.append(wall)
            std = statistics.stdev if len(fits) > 1 else (lambda xs: 0.0)
            summary.append(["mean", method, K, "", statistics.fmean(fits), statistics.fmean(covs), statistics.fmean(walls)])
            summary.append(["std", method, K, "", std(fits), std(covs), std(walls)])
    all_rows = rows + summary
    with open(out_csv, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BENCH_HEADER)
        for row in all_rows:
            w.writerow([repr(x) if isinstance(x, float) else x for x in row])
    return all_rows


def cmd_export_scene(cprm_path, solution_path, out) -> Path:
    return export_scene(load_cprm(cprm_path), read_solution(solution_path), out)


# --------------------------------------------------------------------------
# entry point


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if getattr(args, "seed", None) is not None:
        cfg.solver = dataclasses.replace(cfg.solver, rng_seed=args.seed)
    if getattr(args, "uavs", None):
        ks = _int_list(args.uavs)
        cfg.uavs = ks
        cfg.solver = dataclasses.replace(cfg.solver, K=ks[0])
    if getattr(args, "out", None):
        cfg.out = Path(args.out)
    if getattr(args, "no_local_improvement", False):
        cfg.local_improvement = False
        cfg.methods = [m for m in cfg.methods if m != "BRKGA+"]
    return cfg


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="macpp", description="Multi-UAV inspection path planning.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="build a roadmap and plan routes")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--uavs", help="number of UAVs")
    p.add_argument("--out", help="output directory")
    p.add_argument("--no-local-improvement", action="store_true")

    p = sub.add_parser("verify", help="replay a solution file against its mesh")
    p.add_argument("solution")
    p.add_argument("--mesh", help="mesh file (default: the one echoed in the solution)")
    p.add_argument("--config", help="take parameters from this config instead of the echo")
    p.add_argument("--out", help="write the report here")

    p = sub.add_parser("bench", help="greedy vs BRKGA vs BRKGA+ over seeds and UAV counts")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, help="first seed")
    p.add_argument("--uavs", help="comma-separated UAV counts")
    p.add_argument("--out", help="CSV path (default: <run.out>/bench.csv)")
    p.add_argument("--no-local-improvement", action="store_true")

    p = sub.add_parser("export-scene", help="write an OBJ of the mesh and routes")
    p.add_argument("cprm")
    p.add_argument("solution")
    p.add_argument("--out", required=True)

    p = sub.add_parser("scene", help="write a built-in test structure as OBJ")
    p.add_argument("name", choices=sorted(scenes.SCENES))
    p.add_argument("--out", required=True)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "plan":
            return cmd_plan(_apply_overrides(load_config(args.config), args))
        if args.command == "verify":
            cfg = load_config(args.config) if args.config else None
            report = cmd_verify(args.solution, args.mesh, cfg, args.out)
            print(report.to_text(), end="")
            return EXIT_OK if report.passed else EXIT_INFEASIBLE
        if args.command == "bench":
            cfg = load_config(args.config)
            out = Path(args.out) if args.out else cfg.out / "bench.csv"
            cfg = _apply_overrides(cfg, argparse.Namespace(**{**vars(args), "out": None}))
            out.parent.mkdir(parents=True, exist_ok=True)
            cmd_bench(cfg, out)
            print(f"wrote {out}")
            return EXIT_OK
        if args.command == "export-scene":
            print(f"wrote {cmd_export_scene(args.cprm, args.solution, args.out)}")
            return EXIT_OK
        if args.command == "scene":
            v, t = scenes.SCENES[args.name]()
            save_obj(mesh_from_arrays(v, t), args.out)
            print(f"wrote {args.out}")
            return EXIT_OK
    except (ConfigError, MeshError, GridError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

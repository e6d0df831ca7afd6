"""Command-line front end.

    sparseinv graph    --input examplef
    sparseinv solve    --input vdp_cherry3 --kind mpi --degree 8
    sparseinv all      --input vdp_cherry3_roa --kind roa --degree 6 --out run1

``--input`` takes a JSON path or the name of a bundled system.  Artifacts go to
``--out``; the exit code is 2 when any solve fell back to a trivial certificate.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import re
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import decompose, graph, oracle, sos, systems
from .decompose import SolveOptions
from .sos import OuterApprox
from .sysmodel import Subsystem, SystemDef, SystemDefError

logger = logging.getLogger("sparseinv")

COMMANDS = ("graph", "decompose", "solve", "glue", "improve", "validate", "all")
EXIT_OK, EXIT_ERROR, EXIT_DEGRADED = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    input: str
    command: str = "all"
    kind: str = sos.MPI
    degree: int = 8
    degree_for: dict[str, int] = field(default_factory=dict)
    time_horizon: float | None = None
    beta: float = 1.0
    beta1: float = 1.0
    beta2: float = 1.0
    tol: float = 1e-8
    oracle_horizon: float = oracle.DEFAULT_HORIZON
    grid: int = 41
    seed: int = 0
    mc_samples: int = 10000
    out: str = "out"
    improve: bool = False
    validate: bool = False
    threads: int | None = None

    def __post_init__(self):
        self.kind = self.kind.upper()

    def check(self, sys: SystemDef) -> None:
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.kind not in (sos.ROA, sos.MPI, sos.GA):
            raise ConfigError(f"kind must be roa, mpi or ga, not {self.kind!r}")
        for name, k in [("--degree", self.degree), *self.degree_for.items()]:
            if k < 2 or k % 2:
                raise ConfigError(f"degree for {name} must be an even integer >= 2, got {k}")
        if self.grid < 2:
            raise ConfigError("--grid needs at least 2 points per axis")
        if self.kind == sos.ROA:
            if self.horizon(sys) is None:
                raise ConfigError("roa needs --time-horizon or a horizon in the system metadata")
            if sys.target_blocks is None:
                raise ConfigError("roa needs a target set in the system file")
        elif self.wants_improvement:
            raise ConfigError("the sparse improvement is only defined for roa")

    def horizon(self, sys: SystemDef) -> float | None:
        return self.time_horizon if self.time_horizon is not None else sys.horizon

    @property
    def wants_improvement(self) -> bool:
        return self.improve or self.command == "improve"

    @property
    def wants_validation(self) -> bool:
        return self.validate or self.command in ("validate", "all")

    def solve_options(self, sys: SystemDef) -> SolveOptions:
        return SolveOptions(self.kind, self.degree, dict(self.degree_for), self.horizon(sys),
                            self.beta, self.beta1, self.beta2, self.tol)


# -- input ----------------------------------------------------------------------

def load_input(spec: str) -> tuple[SystemDef, dict]:
    """System and raw metadata from a path or a bundled name."""
    path = Path(spec)
    if path.is_file():
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise systems.SystemFormatError(
                f"{path}: invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}") from None
        where = str(path)
    else:
        try:
            data = systems.bundled_data(spec)
        except FileNotFoundError:
            raise FileNotFoundError(
                f"{spec!r} is neither a file nor a bundled system "
                f"({', '.join(systems.bundled_names())})") from None
        where = f"bundled:{spec}"
    try:
        sys_ = systems.system_from_dict(data)
    except SystemDefError as e:
        raise systems.SystemFormatError(f"{where}: {e}") from None
    return sys_, data.get("metadata", {})


def parse_system(path: str) -> SystemDef:
    return load_input(path)[0]


# -- output helpers ---------------------------------------------------------------

def _clean(obj: Any) -> Any:
    """JSON-safe copy: numpy scalars to floats, NaN/inf to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def _write_json(path: Path, obj: Any) -> None:
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name) or "subsystem"


# -- pipeline steps ---------------------------------------------------------------

def write_graph(sys_: SystemDef, out: Path) -> tuple[graph.CondensedGraph, dict]:
    g = graph.build_graph(sys_)
    cg = graph.condense(g)
    (out / "graph.dot").write_text(graph.to_dot(g, sys_.var_names, f"{sys_.name}"))
    (out / "graph_condensed.dot").write_text(
        graph.to_dot(cg, sys_.var_names, f"{sys_.name} condensed"))
    summ = graph.summary(cg, sys_.var_names)
    _write_json(out / "graph.json", summ)
    return cg, summ


def manifest(sys_: SystemDef, subs: Sequence[Subsystem], summ: dict, cfg: RunConfig) -> dict:
    names = sys_.var_names
    return {
        "system": sys_.name,
        "num_vars": sys_.n,
        "omega": summ["omega"],
        "subsystems": [
            {"name": s.name, "dim": s.dim, "variables": [names[i] for i in s.index_set],
             "blocks": [sys_.partition.names[b] for b in s.block_ids],
             "degree": cfg.degree_for.get(s.name, cfg.degree)}
            for s in subs
        ],
        "config": {k: v for k, v in asdict(cfg).items() if k not in ("out", "threads")},
    }


def section_axes(sys_: SystemDef, sub: Subsystem, cg: graph.CondensedGraph) -> list[int]:
    """Local coordinates to sweep: the first two variables of the subsystem's leaf."""
    local = {g: j for j, g in enumerate(sub.index_set)}
    leaf_vars = []
    for leaf in graph.leafs(cg):
        if cg.graph.names[leaf] == sub.name:
            leaf_vars = [local[v] for v in cg.graph.variables[leaf]]
    free = leaf_vars[:2]
    for j in reversed(range(sub.dim)):
        if len(free) >= min(2, sub.dim):
            break
        if j not in free:
            free.append(j)
    return sorted(free)


def section_fixed(sub: Subsystem, free: Sequence[int], meta: dict) -> dict[int, float]:
    pins = meta.get("section_fix", {})
    box = sub.system.box()
    names = sub.system.var_names
    fixed = {}
    for j in range(sub.dim):
        if j in free:
            continue
        fixed[j] = float(pins.get(names[j], 0.5 * (box[j][0] + box[j][1])))
    return fixed


def oracle_labels(cfg: RunConfig, target: SystemDef, pts: np.ndarray) -> oracle.SampleSet:
    if cfg.kind == sos.MPI:
        return oracle.estimate_mpi(target, pts, cfg.oracle_horizon)
    if cfg.kind == sos.ROA:
        return oracle.estimate_roa(target, pts, cfg.horizon(target))
    # no pointwise oracle for the attractor; sections only show the certificate
    return oracle.SampleSet(pts, np.full(len(pts), oracle.UNKNOWN), {"kind": "GA"})


def validate_sections(cfg: RunConfig, sys_: SystemDef, meta: dict, cg: graph.CondensedGraph,
                      subs: Sequence[Subsystem], approxs: Sequence[OuterApprox],
                      out: Path) -> list[dict]:
    from . import plotting

    sec_dir = out / "sections"
    sec_dir.mkdir(exist_ok=True)
    rows = []
    for sub, oa in zip(subs, approxs):
        free = section_axes(sys_, sub, cg)
        fixed = section_fixed(sub, free, meta)
        pts = oracle.section_points(sub.system.box(), free, fixed, cfg.grid)
        if cfg.kind == sos.ROA:
            local = sub.system
            if local.horizon is None:
                local = SystemDef(local.f, local.partition, local.constraint_blocks,
                                  local.target_blocks, cfg.horizon(sys_), local.var_names,
                                  local.name)
            samples = oracle_labels(cfg, local, pts)
        else:
            samples = oracle_labels(cfg, sub.system, pts)
        cert = oa.contains(pts)
        cons = oa.contains(pts, conservative=True)
        lab_in = samples.labels == oracle.IN
        stem = _slug(sub.name)
        samples.to_csv(sec_dir / f"{stem}.csv", sub.system.var_names,
                       {"certificate": cert, "conservative": cons})
        if len(free) == 2:
            names = sub.system.var_names
            pinned = ", ".join(f"{names[j]}={v:g}" for j, v in sorted(fixed.items()))
            plotting.section_figure(pts, (free[0], free[1]), cert,
                                    lab_in if cfg.kind != sos.GA else None, names,
                                    sec_dir / f"{stem}.png",
                                    f"{sub.name}: {cfg.kind.upper()} k={oa.degree}"
                                    + (f" ({pinned})" if pinned else ""))
        rows.append({
            "subsystem": sub.name,
            "free": [sub.system.var_names[j] for j in free],
            "fixed": {sub.system.var_names[j]: v for j, v in sorted(fixed.items())},
            "points": int(len(pts)),
            "oracle_in": int(lab_in.sum()),
            "oracle_unknown": int((samples.labels == oracle.UNKNOWN).sum()),
            "certificate_in": int(cert.sum()),
            "oracle_in_outside_certificate": int((lab_in & ~cert).sum()),
        })
    return rows


def validate_monte_carlo(cfg: RunConfig, sys_: SystemDef, glued: decompose.GluedSet,
                         improvement: sos.SparseImprovementSet | None, out: Path) -> dict:
    pts = oracle.uniform_points(sys_.box(), cfg.mc_samples, cfg.seed)
    in_s = glued.contains(pts)
    report: dict[str, Any] = {"samples": cfg.mc_samples, "seed": cfg.seed,
                              "glued_in": int(in_s.sum())}
    extra = {"glued": in_s}
    if cfg.kind == sos.GA:
        cloud = oracle.estimate_attractor(sys_, pts[: min(len(pts), 1000)],
                                          0.5 * cfg.oracle_horizon, cfg.oracle_horizon)
        hit = glued.contains(cloud.points) if len(cloud.points) else np.zeros(0, bool)
        report.update({"attractor_samples": int(len(cloud.points)),
                       "attractor_in_glued": int(hit.sum())})
        labels = np.full(len(pts), oracle.UNKNOWN)
    else:
        local = sys_
        if cfg.kind == sos.ROA and sys_.horizon is None:
            local = SystemDef(sys_.f, sys_.partition, sys_.constraint_blocks, sys_.target_blocks,
                              cfg.horizon(sys_), sys_.var_names, sys_.name)
        labels = oracle_labels(cfg, local, pts).labels
        lab_in = labels == oracle.IN
        report.update({
            "oracle_in": int(lab_in.sum()),
            "oracle_unknown": int((labels == oracle.UNKNOWN).sum()),
            "oracle_in_inside_glued": int((lab_in & in_s).sum()),
            "coverage": float((lab_in & in_s).sum() / lab_in.sum()) if lab_in.any() else 1.0,
        })
        if cfg.kind == sos.ROA:
            # the finite-horizon ROA is often too thin to be hit by uniform samples
            back = oracle.backward_reachable_samples(local, cfg.mc_samples // 10 or 1,
                                                     seed=cfg.seed)
            report.update({"backward_samples": int(len(back)),
                           "backward_inside_glued": int(glued.contains(back).sum())})
            if improvement is not None:
                report["backward_inside_intersection"] = int(
                    (glued.contains(back) & improvement.contains(back)).sum())
        if improvement is not None:
            in_y = improvement.contains(pts)
            both = in_s & in_y
            extra.update({"improvement": in_y, "intersection": both})
            report.update({
                "improvement_in": int(in_y.sum()),
                "intersection_in": int(both.sum()),
                "oracle_in_inside_improvement": int((lab_in & in_y).sum()),
                "oracle_in_inside_intersection": int((lab_in & both).sum()),
            })
    vol = decompose.total_volume(sys_)
    report["glued_volume_estimate"] = vol * report["glued_in"] / cfg.mc_samples
    if "intersection_in" in report:
        report["intersection_volume_estimate"] = vol * report["intersection_in"] / cfg.mc_samples
    oracle.SampleSet(pts, labels).to_csv(out / "monte_carlo.csv", sys_.var_names, extra)
    return report


def run(cfg: RunConfig, echo=print) -> int:
    """Execute one command; returns the process exit code."""
    sys_, meta = load_input(cfg.input)
    cfg.check(sys_)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)

    cg, summ = write_graph(sys_, out)
    echo(f"{sys_.name}: {sys_.n} variables, {len(sys_.partition)} blocks, "
         f"leafs {summ['leafs']}, omega {summ['omega']}")
    if cfg.command == "graph":
        return EXIT_OK

    subs = decompose.decouple(sys_)
    _write_json(out / "manifest.json", manifest(sys_, subs, summ, cfg))
    echo(f"{len(subs)} subsystems, dims {[s.dim for s in subs]}")
    if cfg.command == "decompose":
        return EXIT_OK

    opts = cfg.solve_options(sys_)
    t0 = time.perf_counter()
    approxs = decompose.solve_subsystems(subs, opts, cfg.threads)
    logger.info("subsystem solves took %.1f s", time.perf_counter() - t0)
    cert_dir = out / "certificates"
    cert_dir.mkdir(exist_ok=True)
    for sub, oa in zip(subs, approxs):
        d = oa.to_dict(sub.system.var_names)
        d["variables"] = list(sub.system.var_names)
        _write_json(cert_dir / f"{_slug(sub.name)}.json", d)
        echo(f"  {sub.name}: dim {sub.dim}, k={oa.degree}, "
             f"status {oa.diagnostics.get('status')}, objective {oa.objective:.6g}")
    bad = decompose.degraded(approxs)

    glued = None
    if cfg.command != "solve" or cfg.wants_validation or cfg.wants_improvement:
        glued = decompose.glue(approxs, sys_, [s.index_set for s in subs])
        _write_json(out / "glued.json", glued.to_dict())

    improvement = None
    if cfg.wants_improvement or (cfg.command == "all" and cfg.kind == sos.ROA):
        k = max([cfg.degree, *cfg.degree_for.values()])
        improvement = decompose.sparse_improvement(sys_, k, cfg.horizon(sys_), cfg.tol)
        _write_json(out / "improvement.json", improvement.to_dict())
        status = improvement.diagnostics.get("status")
        echo(f"sparse improvement: status {status}, objective {improvement.objective:.6g}")
        if status == "trivial":
            bad.append("sparse-improvement")

    if cfg.wants_validation:
        sections = validate_sections(cfg, sys_, meta, cg, subs, approxs, out)
        mc = validate_monte_carlo(cfg, sys_, glued, improvement, out)
        _write_json(out / "validation.json", {"kind": cfg.kind, "grid": cfg.grid,
                                              "oracle_horizon": cfg.oracle_horizon,
                                              "sections": sections, "monte_carlo": mc})
        for row in sections:
            echo(f"  section {row['subsystem']}: oracle-in {row['oracle_in']}, "
                 f"certificate {row['certificate_in']}/{row['points']}, "
                 f"misses {row['oracle_in_outside_certificate']}")
        if "coverage" in mc:
            echo(f"monte carlo: {mc['oracle_in']} oracle-in, coverage {mc['coverage']:.4f}")

    if bad:
        echo(f"degraded: {', '.join(bad)} fell back to trivial certificates")
        return EXIT_DEGRADED
    return EXIT_OK


# -- argument parsing ---------------------------------------------------------------

def _degree_for(items: Sequence[str]) -> dict[str, int]:
    out = {}
    for item in items:
        name, sep, k = item.partition("=")
        if not sep or not name:
            raise ConfigError(f"--degree-for expects NAME=K, got {item!r}")
        try:
            out[name] = int(k)
        except ValueError:
            raise ConfigError(f"--degree-for {item!r}: K must be an integer") from None
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sparseinv", description=__doc__.split("\n")[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--input", "-i", required=True, help="system JSON path or bundled name")
    p.add_argument("--kind", type=str.upper, choices=(sos.ROA, sos.MPI, sos.GA), default=sos.MPI,
                   help="roa, mpi or ga")
    p.add_argument("--degree", "-k", type=int, default=8)
    p.add_argument("--degree-for", action="append", default=[], metavar="NAME=K",
                   help="per-subsystem degree override (repeatable)")
    p.add_argument("--time-horizon", "-T", type=float, default=None)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--beta1", type=float, default=1.0)
    p.add_argument("--beta2", type=float, default=1.0)
    p.add_argument("--tol", type=float, default=1e-8, help="SDP solver tolerance")
    p.add_argument("--oracle-horizon", type=float, default=oracle.DEFAULT_HORIZON)
    p.add_argument("--grid", type=int, default=41, help="section grid points per axis")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mc-samples", type=int, default=10000)
    p.add_argument("--out", "-o", default="out")
    p.add_argument("--improve", action="store_true", help="add the sparse improvement (roa)")
    p.add_argument("--validate", action="store_true", help="add oracle validation")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--verbose", "-v", action="store_true")
    return p


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    return RunConfig(
        input=ns.input, command=ns.command, kind=ns.kind, degree=ns.degree,
        degree_for=_degree_for(ns.degree_for), time_horizon=ns.time_horizon, beta=ns.beta,
        beta1=ns.beta1, beta2=ns.beta2, tol=ns.tol, oracle_horizon=ns.oracle_horizon,
        grid=ns.grid, seed=ns.seed, mc_samples=ns.mc_samples, out=ns.out, improve=ns.improve,
        validate=ns.validate, threads=ns.threads)


def main(argv: Sequence[str] | None = None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(config_from_args(ns))
    except (ConfigError, SystemDefError, FileNotFoundError, decompose.GlueError,
            sos.DegreeError, sos.ProgramError) as e:
        print(f"sparseinv: error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

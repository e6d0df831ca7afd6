"""Split a sparse system into leaf subsystems, solve them, and glue the results."""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Protocol, Sequence

import numpy as np

from . import graph, sos
from .sos import OuterApprox, SparseImprovementSet
from .sysmodel import (Partition, ProductFormError, SemialgebraicBlock, Subsystem, SystemDef,
                       SystemDefError, project_subsystem, validate_product_constraints)

logger = logging.getLogger(__name__)

THREADS_ENV = "SPARSE_INV_THREADS"


class GlueError(ValueError):
    pass


class BoundUnavailable(ValueError):
    pass


class LocalSet(Protocol):
    index_set: tuple[int, ...]
    kind: str

    def contains(self, y: np.ndarray) -> np.ndarray: ...


@dataclass
class PredicateSet:
    """A subsystem set given directly by a membership function in local coordinates."""

    index_set: tuple[int, ...]
    kind: str
    predicate: Callable[[np.ndarray], np.ndarray]
    subsystem: str = ""

    def contains(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(self.predicate(np.asarray(y, dtype=float)), dtype=bool)


# -- decoupling -------------------------------------------------------------------

def refine_partition(sys: SystemDef) -> SystemDef:
    """Re-partition on the finest factorization the constraint description allows."""
    ineqs = [p for b in sys.constraint_blocks for p in b.inequalities]
    if sys.target_blocks is not None:
        ineqs += [p for b in sys.target_blocks for p in b.inequalities]
    fine = graph.minimal_factorization(ineqs, sys.n)

    def split(blocks):
        if blocks is None:
            return None
        box = {i: ab for b in blocks for i, ab in b.box.items()}
        pool = [p for b in blocks for p in b.inequalities]
        return tuple(SemialgebraicBlock(blk, tuple(p for p in pool if p.support() <= set(blk)
                                                   and p.support()),
                                        {i: box[i] for i in blk if i in box})
                     for blk in fine.blocks)

    names = tuple("+".join(sys.var_names[i] for i in blk) for blk in fine.blocks)
    return SystemDef(sys.f, Partition(fine.blocks, names), split(sys.constraint_blocks),
                     split(sys.target_blocks), sys.horizon, sys.var_names, sys.name)


def decouple(sys: SystemDef, refine: bool = False) -> list[Subsystem]:
    """One subsystem per leaf of the condensed sparsity graph.

    With ``refine`` the given partition is first replaced by the finest one
    compatible with the constraints.
    """
    check = validate_product_constraints(sys)
    if not check:
        raise ProductFormError("; ".join(check.violations))
    if refine:
        sys = refine_partition(sys)
    cg = graph.condense(graph.build_graph(sys))
    subs = []
    for leaf in graph.leafs(cg):
        idx = graph.past_variables(cg, leaf)
        subs.append(project_subsystem(sys, idx, name=cg.graph.names[leaf]))
    return subs


def leaf_scopes(sys: SystemDef) -> list[tuple[int, ...]]:
    return [s.index_set for s in decouple(sys)]


# -- glued sets -------------------------------------------------------------------

@dataclass
class GluedSet:
    """Conjunction of subsystem sets, each tested on its own coordinates."""

    parts: list[LocalSet]
    system: SystemDef
    kind: str

    @property
    def index_sets(self) -> list[tuple[int, ...]]:
        return [p.index_set for p in self.parts]

    def contains(self, x: np.ndarray, w_tol: float = 0.0) -> np.ndarray:
        """Vectorized membership; ``w_tol`` lowers the certificate threshold to ``1 - w_tol``."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.system.n:
            raise ValueError(f"points have dimension {x.shape[-1]}, system has {self.system.n}")
        ok = self.system.in_constraints(x)
        for p in self.parts:
            if not ok.any():
                break
            y = x[..., list(p.index_set)]
            ok &= p.contains(y, w_tol=w_tol) if isinstance(p, OuterApprox) else p.contains(y)
        return ok

    def to_dict(self) -> dict:
        names = self.system.var_names
        parts = []
        for p in self.parts:
            if isinstance(p, OuterApprox):
                d = p.to_dict([names[i] for i in p.index_set])
            else:
                d = {"subsystem": getattr(p, "subsystem", ""), "index_set": list(p.index_set),
                     "kind": p.kind}
            d["variables"] = [names[i] for i in p.index_set]
            parts.append(d)
        return {"system": self.system.name, "kind": self.kind, "parts": parts}


def glue(approxs: Sequence[LocalSet], sys: SystemDef,
         expected: Sequence[Sequence[int]] | None = None) -> GluedSet:
    """Glue per-leaf sets; ``expected`` defaults to the leaf index sets of ``sys``."""
    if not approxs:
        raise GlueError("nothing to glue")
    kinds = {a.kind for a in approxs}
    if len(kinds) != 1:
        raise GlueError(f"mixed set kinds {sorted(kinds)}")
    want = {tuple(sorted(s)) for s in (expected if expected is not None else leaf_scopes(sys))}
    have = [tuple(sorted(a.index_set)) for a in approxs]
    missing = want - set(have)
    if missing:
        raise GlueError(f"no set for leaf subsystem(s) {sorted(missing)}")
    extra = set(have) - want
    if extra:
        raise GlueError(f"sets for unknown index sets {sorted(extra)}")
    parts = sorted(approxs, key=lambda a: tuple(sorted(a.index_set)))
    return GluedSet(list(parts), sys, kinds.pop())


def membership(g: GluedSet, x) -> bool | np.ndarray:
    """Membership of one point (returns bool) or of a batch."""
    x = np.asarray(x, dtype=float)
    out = g.contains(x)
    return bool(out) if x.ndim == 1 else out


def error_bound(per_sub_errors: Sequence[float], sys: SystemDef,
                subsystems: Sequence[Subsystem] | None = None) -> float:
    """Sum of subsystem errors, each scaled by the volume of the blocks it does not see."""
    subs = list(subsystems) if subsystems is not None else decouple(sys)
    if len(per_sub_errors) != len(subs):
        raise ValueError("one error per subsystem required")
    total = 0.0
    for e, sub in zip(per_sub_errors, subs):
        if e < 0:
            raise ValueError("errors must be nonnegative")
        vol = 1.0
        for b, cb in enumerate(sys.constraint_blocks):
            if b in sub.block_ids:
                continue
            try:
                vol *= cb.volume()
            except SystemDefError:
                raise BoundUnavailable(
                    f"block {sys.partition.names[b]} has no box; bound unavailable") from None
        total += e * vol
    return total


@dataclass
class IntersectedSet:
    glued: GluedSet
    improvement: SparseImprovementSet

    @property
    def kind(self) -> str:
        return self.glued.kind

    def contains(self, x: np.ndarray) -> np.ndarray:
        return self.glued.contains(x) & self.improvement.contains(x)


def intersect_with_sparse_improvement(g: GluedSet, y: SparseImprovementSet) -> IntersectedSet:
    if g.kind != y.kind:
        raise GlueError(f"cannot intersect a {g.kind} set with a {y.kind} set")
    if g.system.n != y.system.n:
        raise GlueError("sets live on different systems")
    return IntersectedSet(g, y)


# -- solving ----------------------------------------------------------------------

@dataclass
class SolveOptions:
    kind: str = sos.MPI
    degree: int = 8
    degree_for: Mapping[str, int] = field(default_factory=dict)
    horizon: float | None = None
    beta: float = 1.0
    beta1: float = 1.0
    beta2: float = 1.0
    tol: float = 1e-8
    max_iter: int = 200


def thread_count(default: int | None = None) -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            logger.warning("ignoring non-integer %s=%r", THREADS_ENV, raw)
    return default or max(1, os.cpu_count() or 1)


def solve_subsystem(sub: Subsystem, opts: SolveOptions) -> OuterApprox:
    """Build, solve and extract one certificate, degrading to ``w = 2`` on failure."""
    k = opts.degree_for.get(sub.name, opts.degree)
    try:
        prog = sos.build_program(opts.kind, sub, k, T=opts.horizon, beta=opts.beta,
                                 beta1=opts.beta1, beta2=opts.beta2)
        sol = sos.solve_program(prog, tol=opts.tol, max_iter=opts.max_iter)
        oa = sos.extract_certificate(prog, sol, sub, name=sub.name)
        oa.diagnostics["multiplier_sizes"] = max(prog.multiplier_sizes().values())
        return oa
    except (sos.CertificateError, np.linalg.LinAlgError) as e:
        logger.warning("subsystem %s: %s; using the trivial certificate", sub.name, e)
        oa = OuterApprox.trivial(sub.name, sub.index_set, opts.kind.upper(), k,
                                 sub.system.constraint_blocks, str(e))
        if isinstance(e, sos.CertificateError):
            oa.diagnostics["report"] = e.report
        return oa


def solve_subsystems(subs: Sequence[Subsystem], opts: SolveOptions,
                     threads: int | None = None) -> list[OuterApprox]:
    n = min(len(subs), thread_count(threads)) if subs else 1
    if n <= 1:
        return [solve_subsystem(s, opts) for s in subs]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(lambda s: solve_subsystem(s, opts), subs))


def degraded(approxs: Sequence[OuterApprox]) -> list[str]:
    return [a.subsystem for a in approxs if a.diagnostics.get("status") == "trivial"]


def sparse_improvement(sys: SystemDef, k: int, T: float | None = None, tol: float = 1e-8,
                       strict: bool = False) -> SparseImprovementSet:
    """Solve the joint per-leaf ROA program; falls back to the whole box on failure."""
    scopes = leaf_scopes(sys)
    prog = sos.build_sparse_roa_program(sys, scopes, T, k)
    sol = sos.solve_program(prog, tol=tol)
    try:
        return sos.extract_sparse_improvement(prog, sol, sys)
    except sos.CertificateError as e:
        if strict:
            raise
        logger.warning("sparse improvement failed (%s); using the whole box", e)
        y = SparseImprovementSet.trivial(sys)
        y.diagnostics["report"] = e.report
        return y


def run_pipeline(sys: SystemDef, opts: SolveOptions, threads: int | None = None
                 ) -> tuple[list[Subsystem], list[OuterApprox], GluedSet]:
    subs = decouple(sys)
    approxs = solve_subsystems(subs, opts, threads)
    return subs, approxs, glue(approxs, sys, [s.index_set for s in subs])


def total_volume(sys: SystemDef) -> float:
    return math.prod(b.volume() for b in sys.constraint_blocks)

"""Dynamical systems with a block partition and product-form constraint sets."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .poly import Polynomial, PolyVector


class SystemDefError(ValueError):
    """Base class for malformed system definitions."""


class PartitionError(SystemDefError):
    pass


class ClosureError(SystemDefError):
    """Raised when an index set is not closed under the dynamics."""

    def __init__(self, message: str, variable: int):
        super().__init__(message)
        self.variable = variable


class ProductFormError(SystemDefError):
    pass


@dataclass(frozen=True)
class Partition:
    blocks: tuple[tuple[int, ...], ...]
    names: tuple[str, ...] = ()

    def __post_init__(self):
        blocks = tuple(tuple(sorted(int(i) for i in b)) for b in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        if not self.names:
            object.__setattr__(self, "names", tuple(f"B{j + 1}" for j in range(len(blocks))))
        if len(self.names) != len(blocks):
            raise PartitionError("one name per block required")
        seen: set[int] = set()
        for b in blocks:
            if not b:
                raise PartitionError("partition blocks must be nonempty")
            overlap = seen.intersection(b)
            if overlap:
                raise PartitionError(f"variables {sorted(overlap)} appear in two blocks")
            seen.update(b)
        n = len(seen)
        if seen != set(range(n)):
            missing = sorted(set(range(max(seen, default=-1) + 1)) - seen)
            raise PartitionError(f"partition does not cover variables {missing}")

    @property
    def num_vars(self) -> int:
        return sum(len(b) for b in self.blocks)

    @property
    def weights(self) -> tuple[int, ...]:
        return tuple(len(b) for b in self.blocks)

    def __len__(self) -> int:
        return len(self.blocks)

    def block_of(self) -> dict[int, int]:
        return {v: j for j, b in enumerate(self.blocks) for v in b}

    @classmethod
    def singletons(cls, n: int) -> Partition:
        return cls(tuple((i,) for i in range(n)))


@dataclass(frozen=True)
class SemialgebraicBlock:
    """``{x : lo_i <= x_i <= hi_i, p_j(x) >= 0}`` over the block's variables.

    Inequalities are stored over the ambient variables of the owning system.
    """

    var_indices: tuple[int, ...]
    inequalities: tuple[Polynomial, ...] = ()
    box: dict[int, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "var_indices", tuple(sorted(self.var_indices)))
        object.__setattr__(self, "inequalities", tuple(self.inequalities))
        for i, (lo, hi) in self.box.items():
            if not lo < hi:
                raise SystemDefError(f"degenerate interval [{lo}, {hi}] for variable {i}")

    def is_box(self) -> bool:
        return not self.inequalities and set(self.box) == set(self.var_indices)

    def has_full_box(self) -> bool:
        return set(self.var_indices) <= set(self.box)

    def generators(self, num_vars: int) -> list[Polynomial]:
        """Polynomials g with the block equal to ``{g >= 0}``; boxes give (x-lo)(hi-x)."""
        gens = []
        for i in self.var_indices:
            if i in self.box:
                lo, hi = self.box[i]
                xi = Polynomial.variable(num_vars, i)
                gens.append((xi - lo) * (hi - xi))
        gens.extend(self.inequalities)
        return gens

    def contains(self, x: np.ndarray, tol: float = 0.0) -> np.ndarray:
        """Vectorized membership of points (shape ``(..., n)``) in this block."""
        x = np.asarray(x, dtype=float)
        ok = np.ones(x.shape[:-1], dtype=bool)
        for i, (lo, hi) in self.box.items():
            ok &= (x[..., i] >= lo - tol) & (x[..., i] <= hi + tol)
        for p in self.inequalities:
            ok &= np.asarray(p(x)) >= -tol
        return ok

    def slack(self, x: np.ndarray) -> np.ndarray:
        """Smallest constraint value (negative outside the block)."""
        x = np.asarray(x, dtype=float)
        vals = [np.full(x.shape[:-1], np.inf)]
        for i, (lo, hi) in self.box.items():
            vals.append(np.minimum(x[..., i] - lo, hi - x[..., i]))
        for p in self.inequalities:
            vals.append(np.asarray(p(x), dtype=float) * np.ones(x.shape[:-1]))
        return np.min(np.stack(vals), axis=0)

    def volume(self) -> float:
        if not self.has_full_box():
            raise SystemDefError("block volume needs box bounds on every variable")
        return float(np.prod([self.box[i][1] - self.box[i][0] for i in self.var_indices]))

    def remap(self, mapping: dict[int, int]) -> SemialgebraicBlock:
        """Translate to new variable indices (global -> local, say)."""
        order = sorted(mapping, key=mapping.get)
        return SemialgebraicBlock(
            tuple(mapping[i] for i in self.var_indices),
            tuple(p.restrict(order) for p in self.inequalities),
            {mapping[i]: b for i, b in self.box.items()},
        )


@dataclass(frozen=True)
class ProductCheck:
    ok: bool
    violations: tuple[str, ...] = ()

    def __bool__(self) -> bool:
        return self.ok


@dataclass(frozen=True)
class SystemDef:
    f: PolyVector
    partition: Partition
    constraint_blocks: tuple[SemialgebraicBlock, ...]
    target_blocks: tuple[SemialgebraicBlock, ...] | None = None
    horizon: float | None = None
    var_names: tuple[str, ...] = ()
    name: str = "system"

    def __post_init__(self):
        n = len(self.f)
        if self.f.num_vars != n:
            raise SystemDefError("vector field must have one component per variable")
        if self.partition.num_vars != n:
            raise PartitionError(
                f"partition covers {self.partition.num_vars} variables, system has {n}")
        object.__setattr__(self, "constraint_blocks", tuple(self.constraint_blocks))
        if len(self.constraint_blocks) != len(self.partition):
            raise SystemDefError("need one constraint block per partition block")
        for blk, cb in zip(self.partition.blocks, self.constraint_blocks):
            if tuple(cb.var_indices) != blk:
                raise SystemDefError(f"constraint block variables {cb.var_indices} != {blk}")
        if self.target_blocks is not None:
            object.__setattr__(self, "target_blocks", tuple(self.target_blocks))
            if len(self.target_blocks) != len(self.partition):
                raise SystemDefError("need one target block per partition block")
        if self.horizon is not None and not self.horizon > 0:
            raise SystemDefError("horizon T must be positive")
        if not self.var_names:
            object.__setattr__(self, "var_names", tuple(f"x{i + 1}" for i in range(n)))
        if len(self.var_names) != n:
            raise SystemDefError("one variable name per state required")

    @property
    def n(self) -> int:
        return len(self.f)

    @property
    def targets(self) -> tuple[SemialgebraicBlock, ...]:
        """Target blocks, defaulting to the constraint set."""
        return self.target_blocks if self.target_blocks is not None else self.constraint_blocks

    def generators(self) -> list[Polynomial]:
        return [g for b in self.constraint_blocks for g in b.generators(self.n)]

    def target_generators(self) -> list[Polynomial]:
        return [g for b in self.targets for g in b.generators(self.n)]

    def box(self) -> list[tuple[float, float]]:
        bounds: dict[int, tuple[float, float]] = {}
        for b in self.constraint_blocks:
            bounds.update(b.box)
        if set(bounds) != set(range(self.n)):
            raise SystemDefError("box bounds missing for some variables")
        return [bounds[i] for i in range(self.n)]

    def in_constraints(self, x, tol: float = 0.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        ok = np.ones(x.shape[:-1], dtype=bool)
        for b in self.constraint_blocks:
            ok &= b.contains(x, tol)
        return ok

    def in_target(self, x, tol: float = 0.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        ok = np.ones(x.shape[:-1], dtype=bool)
        for b in self.targets:
            ok &= b.contains(x, tol)
        return ok

    def constraint_slack(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.min(np.stack([b.slack(x) for b in self.constraint_blocks]), axis=0)

    def block_names(self) -> tuple[str, ...]:
        return self.partition.names

    def with_partition(self, partition: Partition) -> SystemDef:
        """Regroup constraint/target blocks under a coarser partition."""
        def regroup(blocks):
            if blocks is None:
                return None
            out = []
            for blk in partition.blocks:
                ineqs, box = [], {}
                for cb in blocks:
                    if set(cb.var_indices) <= set(blk):
                        ineqs.extend(cb.inequalities)
                        box.update(cb.box)
                    elif set(cb.var_indices) & set(blk):
                        raise PartitionError("new partition must coarsen the old one")
                out.append(SemialgebraicBlock(blk, tuple(ineqs), box))
            return tuple(out)

        return SystemDef(self.f, partition, regroup(self.constraint_blocks),
                         regroup(self.target_blocks), self.horizon, self.var_names, self.name)


@dataclass(frozen=True)
class Subsystem:
    """A closed set of states together with its re-indexed local system."""

    index_set: tuple[int, ...]
    system: SystemDef
    block_ids: tuple[int, ...]
    name: str = ""

    @property
    def dim(self) -> int:
        return len(self.index_set)

    def project(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x)[..., list(self.index_set)]


def is_subsystem(sys: SystemDef, index_set: Iterable[int]) -> bool:
    I = set(index_set)
    return all(sys.f[i].support() <= I for i in I)


def _closure_violation(sys: SystemDef, I: set[int]) -> tuple[int, int] | None:
    for i in sorted(I):
        outside = sys.f[i].support() - I
        if outside:
            return i, min(outside)
    return None


def project_subsystem(sys: SystemDef, index_set: Iterable[int], name: str = "") -> Subsystem:
    """Restrict ``sys`` to a closed, block-aligned index set and re-index it."""
    I = set(int(i) for i in index_set)
    if not I <= set(range(sys.n)):
        raise PartitionError(f"indices {sorted(I - set(range(sys.n)))} out of range")
    bad = _closure_violation(sys, I)
    if bad is not None:
        i, j = bad
        raise ClosureError(
            f"{sys.var_names[i]} depends on {sys.var_names[j]}, which is outside the index set", j)
    block_ids = []
    for b, blk in enumerate(sys.partition.blocks):
        inter = I.intersection(blk)
        if inter and inter != set(blk):
            raise PartitionError(f"index set splits block {sys.partition.names[b]}")
        if inter:
            block_ids.append(b)
    order = sorted(I)
    local = {g: j for j, g in enumerate(order)}
    m = len(order)
    f_loc = PolyVector([sys.f[g].restrict(order) for g in order], m)
    part = Partition(tuple(tuple(local[g] for g in sys.partition.blocks[b]) for b in block_ids),
                     tuple(sys.partition.names[b] for b in block_ids))
    cons = tuple(sys.constraint_blocks[b].remap(local) for b in block_ids)
    tgt = None
    if sys.target_blocks is not None:
        tgt = tuple(sys.target_blocks[b].remap(local) for b in block_ids)
    local_sys = SystemDef(f_loc, part, cons, tgt, sys.horizon,
                          tuple(sys.var_names[g] for g in order), name or sys.name)
    return Subsystem(tuple(order), local_sys, tuple(block_ids), name)


def validate_product_constraints(sys: SystemDef) -> ProductCheck:
    """Check that every constraint (and target) inequality stays inside its block."""
    problems = []
    for label, blocks in (("constraint", sys.constraint_blocks), ("target", sys.target_blocks)):
        if blocks is None:
            continue
        for bname, cb in zip(sys.partition.names, blocks):
            own = set(cb.var_indices)
            for p in cb.inequalities:
                extra = p.support() - own
                if extra:
                    names = ", ".join(sys.var_names[i] for i in sorted(extra))
                    problems.append(
                        f"{label} '{p.to_string(sys.var_names, 6)} >= 0' of block {bname} "
                        f"reads {names}")
            stray = set(cb.box) - own
            if stray:
                problems.append(f"{label} box of block {bname} bounds foreign variables")
    return ProductCheck(not problems, tuple(problems))


def box_system(f: Sequence[Polynomial] | PolyVector, partition: Partition,
               bounds: Sequence[tuple[float, float]],
               target: Sequence[tuple[float, float]] | None = None,
               horizon: float | None = None, var_names: Sequence[str] = (),
               name: str = "system") -> SystemDef:
    """Convenience constructor for box-constrained systems."""
    fv = f if isinstance(f, PolyVector) else PolyVector(f)
    cons = tuple(SemialgebraicBlock(b, (), {i: tuple(bounds[i]) for i in b})
                 for b in partition.blocks)
    tgt = None
    if target is not None:
        tgt = tuple(SemialgebraicBlock(b, (), {i: tuple(target[i]) for i in b})
                    for b in partition.blocks)
    return SystemDef(fv, partition, cons, tgt, horizon, tuple(var_names), name)

"""JSON system files and the bundled example systems."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

from .poly import Polynomial, PolynomialError, PolyVector, parse_polynomial
from .sysmodel import (Partition, SemialgebraicBlock, SystemDef, SystemDefError,
                       validate_product_constraints)

VDP_BOX = (-1.2, 1.2)


class SystemFormatError(SystemDefError):
    pass


def _parse(expr: str, names: Sequence[str], where: str) -> Polynomial:
    if not isinstance(expr, str):
        raise SystemFormatError(f"{where}: expected a polynomial string, got {expr!r}")
    try:
        return parse_polynomial(expr, names)
    except PolynomialError as e:
        raise SystemFormatError(f"{where}: {e}") from None


# -- JSON format ----------------------------------------------------------------

def _block_from_json(spec: dict, blk: tuple[int, ...], names: Sequence[str],
                     where: str = "block") -> SemialgebraicBlock:
    index = {nm: i for i, nm in enumerate(names)}
    box = {}
    for nm, ab in (spec.get("box") or {}).items():
        if nm not in index:
            raise SystemFormatError(f"{where}.box: unknown variable {nm!r}")
        if len(ab) != 2:
            raise SystemFormatError(f"{where}.box.{nm}: needs two numbers")
        box[index[nm]] = (float(ab[0]), float(ab[1]))
    ineqs = tuple(_parse(s, names, f"{where}.inequalities[{j}]")
                  for j, s in enumerate(spec.get("inequalities", ())))
    return SemialgebraicBlock(blk, ineqs, box)


def system_from_dict(data: dict[str, Any]) -> SystemDef:
    """Build a system from the JSON layout described in the README."""
    try:
        names = tuple(data["variables"])
        dyn = data["dynamics"]
    except KeyError as e:
        raise SystemFormatError(f"missing field {e.args[0]!r}") from None
    index = {nm: i for i, nm in enumerate(names)}
    if len(index) != len(names):
        raise SystemFormatError("duplicate variable names")
    if isinstance(dyn, dict):
        missing = [nm for nm in names if nm not in dyn]
        if missing:
            raise SystemFormatError(f"no dynamics for {missing}")
        dyn = [dyn[nm] for nm in names]
    if len(dyn) != len(names):
        raise SystemFormatError("one dynamics entry per variable required")
    f = PolyVector([_parse(s, names, f"dynamics[{names[i]}]") for i, s in enumerate(dyn)],
                   len(names))

    blocks_spec = data.get("blocks")
    if blocks_spec is None:
        blocks_spec = {nm: [nm] for nm in names}
    if isinstance(blocks_spec, list):
        blocks_spec = {f"B{i + 1}": b for i, b in enumerate(blocks_spec)}
    bnames, blocks = [], []
    for bname, members in blocks_spec.items():
        try:
            blocks.append(tuple(index[m] for m in members))
        except KeyError as e:
            raise SystemFormatError(f"block {bname} names unknown variable {e.args[0]!r}") from None
        bnames.append(bname)
    try:
        part = Partition(tuple(blocks), tuple(bnames))
    except SystemDefError as e:
        raise SystemFormatError(f"blocks: {e}") from None
    covered = {i for b in blocks for i in b}
    if len(covered) != len(names):
        missing = [nm for i, nm in enumerate(names) if i not in covered]
        raise SystemFormatError(f"blocks: no block for {missing}")

    def blockset(spec, field):
        if spec is None:
            return None
        out = []
        for bname, blk in zip(bnames, blocks):
            if bname in spec:
                out.append(_block_from_json(spec[bname], blk, names, f"{field}.{bname}"))
            else:
                # allow a flat {"box": {...}} covering all variables
                sub = {"box": {names[i]: spec.get("box", {}).get(names[i]) for i in blk
                               if names[i] in spec.get("box", {})}}
                out.append(_block_from_json(sub, blk, names, field))
        return tuple(out)

    cons = blockset(data.get("constraints", {}), "constraints")
    tgt = blockset(data.get("target"), "target")
    meta = data.get("metadata", {})
    try:
        sys = SystemDef(f, part, cons, tgt, meta.get("horizon"), names, meta.get("name", "system"))
    except SystemDefError as e:
        raise SystemFormatError(str(e)) from None
    check = validate_product_constraints(sys)
    if not check:
        raise SystemFormatError("constraints are not in product form: " + "; ".join(check.violations))
    return sys


def system_to_dict(sys: SystemDef, metadata: dict | None = None) -> dict[str, Any]:
    names = sys.var_names

    def blockset(blocks):
        out = {}
        for bname, b in zip(sys.partition.names, blocks):
            entry = {}
            if b.box:
                entry["box"] = {names[i]: list(ab) for i, ab in sorted(b.box.items())}
            if b.inequalities:
                entry["inequalities"] = [p.to_string(names) for p in b.inequalities]
            out[bname] = entry
        return out

    meta = {"name": sys.name}
    if sys.horizon is not None:
        meta["horizon"] = sys.horizon
    meta.update(metadata or {})
    data = {
        "variables": list(names),
        "blocks": {bn: [names[i] for i in blk] for bn, blk in zip(sys.partition.names,
                                                                   sys.partition.blocks)},
        "dynamics": [p.to_string(names) for p in sys.f],
        "constraints": blockset(sys.constraint_blocks),
        "metadata": meta,
    }
    if sys.target_blocks is not None:
        data["target"] = blockset(sys.target_blocks)
    return data


def load_system(path: str | Path) -> SystemDef:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise SystemFormatError(f"{path}: invalid JSON at line {e.lineno}, column {e.colno}: "
                                f"{e.msg}") from None
    try:
        return system_from_dict(data)
    except SystemFormatError as e:
        raise SystemFormatError(f"{path}: {e}") from None


def save_system(sys: SystemDef, path: str | Path, metadata: dict | None = None) -> None:
    Path(path).write_text(json.dumps(system_to_dict(sys, metadata), indent=2) + "\n")


def bundled_names() -> list[str]:
    root = resources.files("sparseinv") / "data"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def bundled_data(name: str) -> dict[str, Any]:
    fname = name if name.endswith(".json") else name + ".json"
    ref = resources.files("sparseinv") / "data" / fname
    if not ref.is_file():
        raise FileNotFoundError(f"no bundled system {name!r}")
    return json.loads(ref.read_text())


def bundled(name: str) -> SystemDef:
    """Load one of the JSON systems shipped in ``sparseinv/data``."""
    return system_from_dict(bundled_data(name))


# -- builders -------------------------------------------------------------------

def _box_blocks(part: Partition, bounds: Sequence[tuple[float, float]]):
    return tuple(SemialgebraicBlock(b, (), {i: tuple(bounds[i]) for i in b}) for b in part.blocks)


def examplef() -> SystemDef:
    """Ten-state polynomial field with five blocks of sizes 2, 1, 2, 2, 3."""
    names = tuple(f"y{i}" for i in range(1, 11))
    exprs = ["y1^2*y2", "y1*y2", "y3*y2 + y3^2", "y7 - y4^4", "y1*y5^2",
             "y2*y6", "y2^3*y6*y7", "y3^2*y6*y8^2", "y6*y9^5", "y7^2"]
    f = PolyVector([parse_polynomial(e, names) for e in exprs], 10)
    part = Partition(((0, 1), (2,), (3, 4), (5, 6), (7, 8, 9)), ("x1", "x2", "x3", "x4", "x5"))
    bounds = [(-1.0, 1.0)] * 10
    return SystemDef(f, part, _box_blocks(part, bounds), None, None, names, "examplef")


def _vdp_pair(n: int, i: int, coupling: Sequence[tuple[int, float]]) -> list[Polynomial]:
    x1 = Polynomial.variable(n, i)
    x2 = Polynomial.variable(n, i + 1)
    f1 = 2.0 * x2
    f2 = -0.8 * x1 - 10.0 * (x1 * x1 - 0.21) * x2
    for j, delta in coupling:
        f2 = f2 + delta * Polynomial.variable(n, j)
    return [f1, f2]


def vdp_network(edges: Sequence[tuple[int, int]], num_nodes: int, delta: float = 0.1,
                box: tuple[float, float] = VDP_BOX, target: tuple[float, float] | None = None,
                horizon: float | None = None, name: str = "vdp") -> SystemDef:
    """Van der Pol oscillators; edge (a, b) feeds the first state of node a into node b."""
    n = 2 * num_nodes
    incoming: dict[int, list[tuple[int, float]]] = {b: [] for b in range(num_nodes)}
    for a, b in edges:
        incoming[b].append((2 * a, delta))
    comps: list[Polynomial] = []
    for node in range(num_nodes):
        comps.extend(_vdp_pair(n, 2 * node, incoming[node]))
    names = tuple(f"x{node + 1}_{c}" for node in range(num_nodes) for c in (1, 2))
    part = Partition(tuple((2 * k, 2 * k + 1) for k in range(num_nodes)),
                     tuple(f"x{k + 1}" for k in range(num_nodes)))
    cons = _box_blocks(part, [box] * n)
    tgt = _box_blocks(part, [target] * n) if target is not None else None
    return SystemDef(PolyVector(comps, n), part, cons, tgt, horizon, names, name)


def vdp_cherry(N: int = 10, delta: float = 0.1, **kw) -> SystemDef:
    """Root oscillator driving N-1 leaf oscillators."""
    if N < 2:
        raise ValueError("a cherry needs at least two oscillators")
    return vdp_network([(0, i) for i in range(1, N)], N, delta, name=f"vdp_cherry{N}", **kw)


TREE_EDGES = ((0, 1), (0, 2), (1, 3), (1, 4))


def vdp_tree(delta: float = 0.1, **kw) -> SystemDef:
    """Five oscillators: 1 feeds 2 and 3, 2 feeds 4 and 5."""
    return vdp_network(TREE_EDGES, 5, delta, name="vdp_tree", **kw)


def shift_counterexample() -> SystemDef:
    """x1' = x2' = 0, x3' = 1 on [0,1]^3 with singleton blocks.

    Every point drifts out through x3 = 1, so the MPI set is empty while the
    subsystems (x1) and (x1, x2) are entirely invariant.
    """
    f = PolyVector([Polynomial.zero(3), Polynomial.zero(3), Polynomial.constant(3, 1.0)], 3)
    part = Partition(((0,), (1,), (2,)), ("x1", "x2", "x3"))
    return SystemDef(f, part, _box_blocks(part, [(0.0, 1.0)] * 3), None, None,
                     ("x1", "x2", "x3"), "shift")


def prototype_cherry(n1: int = 1, n2: int = 1, n3: int = 1) -> SystemDef:
    """Linear three-block cherry: x1' = -x1, x2' = -x2 + x1/2, x3' = -x3 + x1/2 on [-1,1]^n."""
    n = n1 + n2 + n3
    blocks = (tuple(range(n1)), tuple(range(n1, n1 + n2)), tuple(range(n1 + n2, n)))
    comps = []
    for i in range(n):
        p = -Polynomial.variable(n, i)
        if i >= n1:
            p = p + 0.5 * Polynomial.variable(n, 0)
        comps.append(p)
    part = Partition(blocks, ("x1", "x2", "x3"))
    return SystemDef(PolyVector(comps, n), part, _box_blocks(part, [(-1.0, 1.0)] * n), None, None,
                     (), "prototype")


def decoupled_linear(dims: Sequence[int], bound: float = 1.0) -> SystemDef:
    """Blockwise x' = -x on centered boxes."""
    n = sum(dims)
    blocks, start = [], 0
    for d in dims:
        blocks.append(tuple(range(start, start + d)))
        start += d
    comps = [-Polynomial.variable(n, i) for i in range(n)]
    part = Partition(tuple(blocks))
    return SystemDef(PolyVector(comps, n), part, _box_blocks(part, [(-bound, bound)] * n), None,
                     None, (), "decoupled")


BUILDERS = {
    "examplef": examplef,
    "vdp_cherry": vdp_cherry,
    "vdp_tree": vdp_tree,
    "shift": shift_counterexample,
    "prototype": prototype_cherry,
}

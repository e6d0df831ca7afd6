"""Random sparse systems shared by property tests and the acceptance suite."""

import numpy as np

from sparseinv.poly import Polynomial, PolyVector
from sparseinv.systems import _box_blocks
from sparseinv.sysmodel import Partition, SystemDef


def random_sparse_system(seed: int, max_vars: int = 8, bound: float = 2.0) -> SystemDef:
    """Dissipative cascade: f_i = -x_i - x_i^3 + low-degree terms of earlier blocks.

    Blocks are visited in order and each may read any earlier block, so the
    sparsity graph is a random DAG.
    """
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, max_vars + 1))
    cuts = sorted(rng.choice(np.arange(1, n), size=int(rng.integers(1, n)), replace=False))
    bounds = [0, *cuts, n]
    blocks = tuple(tuple(range(a, b)) for a, b in zip(bounds, bounds[1:]))
    comps = []
    for bi, blk in enumerate(blocks):
        parents = [b for b in range(bi) if rng.random() < 0.5]
        pool = [v for b in parents for v in blocks[b]] + list(blk)
        for i in blk:
            x = Polynomial.variable(n, i)
            p = -x - x ** 3
            for _ in range(int(rng.integers(0, 3))):
                a, b = rng.choice(pool, size=2)
                term = Polynomial.variable(n, int(a))
                if rng.random() < 0.5:
                    term = term * Polynomial.variable(n, int(b))
                p = p + float(rng.uniform(-0.5, 0.5)) * term
            comps.append(p)
    part = Partition(blocks)
    return SystemDef(PolyVector(comps, n), part, _box_blocks(part, [(-bound, bound)] * n),
                     None, None, (), f"random{seed}")

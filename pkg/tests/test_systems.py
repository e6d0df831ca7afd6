import json

import numpy as np
import pytest

from sparseinv import systems
from sparseinv.poly import Polynomial, PolyVector
from sparseinv.sysmodel import (ClosureError, Partition, PartitionError, SemialgebraicBlock,
                                SystemDef, is_subsystem, project_subsystem,
                                validate_product_constraints)


def test_bundled_fixtures():
    ex = systems.bundled("examplef")
    assert ex.n == 10 and len(ex.partition) == 5
    assert ex.partition.weights == (2, 1, 2, 2, 3)
    cherry = systems.bundled("vdp_cherry")
    assert cherry.n == 20 and len(cherry.partition) == 10
    # coupling of leaf 2 to the root first state
    assert cherry.f[3].coeff((1,) + (0,) * 19) == pytest.approx(0.1)
    assert systems.bundled("vdp_tree").n == 10


@pytest.mark.parametrize("name", ["examplef", "vdp_cherry", "vdp_tree", "shift", "prototype"])
def test_json_roundtrip(name, tmp_path):
    sys = systems.bundled(name)
    systems.save_system(sys, tmp_path / "s.json")
    back = systems.load_system(tmp_path / "s.json")
    assert back.f == sys.f and back.partition.blocks == sys.partition.blocks
    assert back.box() == sys.box()


def test_bundled_matches_builders():
    assert systems.bundled("vdp_cherry").f == systems.vdp_cherry(10).f
    assert systems.bundled("examplef").f == systems.examplef().f


def base_dict():
    return {"variables": ["a", "b"], "blocks": {"A": ["a"], "B": ["b"]},
            "dynamics": ["-a", "a - b^3"],
            "constraints": {"A": {"box": {"a": [-1, 1]}}, "B": {"box": {"b": [-1, 1]}}}}


def test_missing_block_is_reported():
    d = base_dict()
    d["blocks"] = {"A": ["a"]}
    with pytest.raises(systems.SystemFormatError, match="no block for"):
        systems.system_from_dict(d)


def test_bad_polynomial_names_field():
    d = base_dict()
    d["dynamics"][1] = "a +* 2"
    with pytest.raises(systems.SystemFormatError, match=r"dynamics\[b\]"):
        systems.system_from_dict(d)


def test_non_product_constraint_rejected():
    d = base_dict()
    d["constraints"]["A"]["inequalities"] = ["1 - a^2 - b^2"]
    with pytest.raises(systems.SystemFormatError, match="product form"):
        systems.system_from_dict(d)


def test_invalid_json_has_line(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "variables": [\n}')
    with pytest.raises(systems.SystemFormatError, match="line 3"):
        systems.load_system(p)


def test_dict_dynamics_and_list_blocks():
    d = base_dict()
    d["dynamics"] = {"b": "a - b", "a": "-a"}
    d["blocks"] = [["a"], ["b"]]
    d["constraints"] = {"box": {"a": [-1, 1], "b": [0, 2]}}
    sys = systems.system_from_dict(d)
    assert sys.partition.names == ("B1", "B2")
    assert sys.box() == [(-1.0, 1.0), (0.0, 2.0)]


def test_partition_validation():
    with pytest.raises(PartitionError):
        Partition(((0, 1), (1, 2)))
    with pytest.raises(PartitionError):
        Partition(((0,), (2,)))


def test_projection_and_closure():
    sys = systems.bundled("examplef")
    assert is_subsystem(sys, [0, 1, 3, 4, 5, 6])
    sub = project_subsystem(sys, [0, 1, 3, 4, 5, 6], "x3")
    assert sub.dim == 6 and sub.block_ids == (0, 2, 3)
    x = np.random.default_rng(0).uniform(-1, 1, (5, 10))
    assert np.allclose(sub.system.f(sub.project(x)), sys.f(x)[:, list(sub.index_set)])
    with pytest.raises(ClosureError):
        project_subsystem(sys, [3, 4])
    with pytest.raises(PartitionError):
        project_subsystem(systems.decoupled_linear([2, 1]), [0])


def test_semialgebraic_block():
    n = 2
    x, y = Polynomial.variable(n, 0), Polynomial.variable(n, 1)
    blk = SemialgebraicBlock((0, 1), (1 - x * x - y * y,), {0: (-1, 1), 1: (-1, 1)})
    pts = np.array([[0, 0], [0.8, 0.8], [1.5, 0]])
    assert blk.contains(pts).tolist() == [True, False, False]
    assert blk.volume() == 4.0
    assert len(blk.generators(n)) == 3


def test_product_check_reports_foreign_variables():
    n = 2
    x, y = Polynomial.variable(n, 0), Polynomial.variable(n, 1)
    f = PolyVector([-x, -y])
    cons = (SemialgebraicBlock((0,), (1 - x * y,), {0: (-1, 1)}),
            SemialgebraicBlock((1,), (), {1: (-1, 1)}))
    sys = SystemDef(f, Partition(((0,), (1,))), cons, None, None, ("x", "y"))
    check = validate_product_constraints(sys)
    assert not check and "reads y" in check.violations[0]

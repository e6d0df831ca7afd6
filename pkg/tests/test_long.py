"""Full-size runs; skipped unless SPARSE_INV_LONG=1."""

import json

import numpy as np
import pytest

from sparseinv import cli, decompose, oracle, sos, systems
from sparseinv.decompose import SolveOptions

pytestmark = pytest.mark.slow


def test_cherry10_mpi_cli(tmp_path):
    out = tmp_path / "cherry10"
    code = cli.main(["validate", "-i", "vdp_cherry", "--kind", "mpi", "-k", "8",
                     "--mc-samples", "2000", "--out", str(out)])
    assert code == 0
    man = json.loads((out / "manifest.json").read_text())
    assert len(man["subsystems"]) == 9 and man["omega"] == 4
    val = json.loads((out / "validation.json").read_text())
    assert all(r["fixed"] == {"x1_1": 0.5, "x1_2": -0.1} for r in val["sections"])
    assert all(r["oracle_in_outside_certificate"] == 0 for r in val["sections"])
    assert val["monte_carlo"]["coverage"] >= 0.999


def test_tree_mpi_k8():
    sys = systems.bundled("vdp_tree")
    # each 6-D solve needs about 3 GB, so run them one at a time
    subs, approxs, glued = decompose.run_pipeline(sys, SolveOptions(kind=sos.MPI, degree=8),
                                                  threads=1)
    assert sorted(s.dim for s in subs) == [4, 6, 6]
    assert not decompose.degraded(approxs)
    pts = oracle.uniform_points(sys.box(), 3000, 0)
    inside = oracle.estimate_mpi(sys, pts, 100.0).inside
    assert glued.contains(inside, w_tol=1e-6).mean() >= 0.999


def test_cherry26_mpi_k8():
    sys = systems.vdp_cherry(26)
    subs, approxs, glued = decompose.run_pipeline(sys, SolveOptions(kind=sos.MPI, degree=8))
    assert len(subs) == 25 and {s.dim for s in subs} == {4}
    assert not decompose.degraded(approxs)
    pts = oracle.uniform_points(sys.box(), 2000, 0)
    inside = oracle.estimate_mpi(sys, pts, 100.0).inside
    if len(inside):
        assert glued.contains(inside, w_tol=1e-6).mean() >= 0.999
    assert np.isfinite([a.objective for a in approxs]).all()

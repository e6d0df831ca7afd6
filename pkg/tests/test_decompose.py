import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparseinv import decompose, graph, oracle, sos, systems
from sparseinv.decompose import GlueError, PredicateSet, SolveOptions
from sparseinv.sysmodel import ProductFormError, is_subsystem

from helpers import random_sparse_system


def test_cherry_and_tree_dimensions():
    subs = decompose.decouple(systems.bundled("vdp_cherry"))
    assert len(subs) == 9 and {s.dim for s in subs} == {4}
    tree = decompose.decouple(systems.bundled("vdp_tree"))
    assert sorted(s.dim for s in tree) == [4, 6, 6]


@settings(max_examples=30)
@given(st.integers(0, 10**6))
def test_subsystems_are_closed_and_cover(seed):
    sys = random_sparse_system(seed)
    subs = decompose.decouple(sys)
    covered = set()
    for s in subs:
        assert is_subsystem(sys, s.index_set)
        covered |= set(s.index_set)
    assert covered == set(range(sys.n))
    cg = graph.condense(graph.build_graph(sys))
    assert max(s.dim for s in subs) == graph.omega(cg)


@settings(max_examples=10)
@given(st.integers(0, 10**6))
def test_flows_commute_with_projection(seed):
    sys = random_sparse_system(seed)
    x0 = oracle.uniform_points(sys.box(), 10, seed)
    full = oracle.integrate_batch(sys.f, x0, 1.0)
    for sub in decompose.decouple(sys):
        part = oracle.integrate_batch(sub.system.f, sub.project(x0), 1.0)
        assert np.abs(part.states - sub.project(full.states)).max() <= 1e-6


def test_refine_partition_splits_boxes():
    sys = systems.vdp_cherry(3)
    fine = decompose.refine_partition(sys)
    assert len(fine.partition) == 6
    # oscillators are strongly connected, so condensation gives back the pairs
    assert sorted(s.dim for s in decompose.decouple(sys, refine=True)) == [4, 4]


def test_non_product_system_rejected():
    from sparseinv.poly import Polynomial
    from sparseinv.sysmodel import SemialgebraicBlock, SystemDef
    sys = systems.prototype_cherry()
    x = [Polynomial.variable(3, i) for i in range(3)]
    blocks = list(sys.constraint_blocks)
    blocks[0] = SemialgebraicBlock((0,), (1 - x[0] * x[1],), {0: (-1, 1)})
    bad = SystemDef(sys.f, sys.partition, tuple(blocks), None, None, sys.var_names)
    with pytest.raises(ProductFormError):
        decompose.decouple(bad)


def shift_parts(sys):
    # (x1): always invariant; (x1, x2): always invariant; (x1, x2, x3) is the only leaf
    return [PredicateSet((0, 1, 2), "MPI", lambda y: np.zeros(y.shape[:-1], bool), "x3")]


def test_glue_rejects_bad_sets():
    sys = systems.shift_counterexample()
    with pytest.raises(GlueError):
        decompose.glue([], sys)
    with pytest.raises(GlueError):
        decompose.glue([PredicateSet((0,), "MPI", lambda y: y[..., 0] > 0)], sys)
    with pytest.raises(GlueError):
        decompose.glue(shift_parts(sys) + [PredicateSet((0, 1, 2), "ROA", lambda y: y[..., 0] > 0)],
                       sys)


def _half_spaces(sys):
    subs = decompose.decouple(sys)
    return [PredicateSet(s.index_set, "MPI", (lambda c: (lambda y: y.sum(-1) < c))(0.2 * j),
                         s.name) for j, s in enumerate(subs)]


@given(st.permutations(range(2)), st.integers(0, 1000))
def test_glue_is_order_independent(perm, seed):
    sys = systems.prototype_cherry()
    parts = _half_spaces(sys)
    x = oracle.uniform_points(sys.box(), 200, seed)
    a = decompose.glue(parts, sys).contains(x)
    b = decompose.glue([parts[i] for i in perm], sys).contains(x)
    assert np.array_equal(a, b)
    # conjunction of per-leaf memberships on their own coordinates
    expect = np.ones(len(x), bool)
    for p in parts:
        expect &= p.contains(x[:, list(p.index_set)])
    assert np.array_equal(a, expect)
    assert decompose.membership(decompose.glue(parts, sys), x[0]) == bool(expect[0])


def test_error_bound_scales_by_missing_volume():
    sys = systems.bundled("vdp_cherry")
    subs = decompose.decouple(sys)
    assert decompose.error_bound([0.01] * 9, sys, subs) == pytest.approx(9 * 0.01 * 2.4 ** 16)
    with pytest.raises(ValueError):
        decompose.error_bound([0.01], sys, subs)


def test_solve_subsystem_falls_back(monkeypatch):
    sys = systems.prototype_cherry()
    sub = decompose.decouple(sys)[0]

    def boom(*a, **k):
        raise sos.CertificateError("forced", {"residual": 1.0})

    monkeypatch.setattr(sos, "extract_certificate", boom)
    oa = decompose.solve_subsystem(sub, SolveOptions(kind=sos.MPI, degree=4))
    assert oa.diagnostics["status"] == "trivial"
    assert decompose.degraded([oa]) == [sub.name]
    assert oa.contains(np.zeros((1, sub.dim))).all()


def test_thread_count_env(monkeypatch):
    monkeypatch.setenv(decompose.THREADS_ENV, "3")
    assert decompose.thread_count() == 3
    monkeypatch.setenv(decompose.THREADS_ENV, "zero")
    assert decompose.thread_count(2) == 2


def test_prototype_pipeline_is_sound():
    sys = systems.prototype_cherry()
    subs, approxs, glued = decompose.run_pipeline(sys, SolveOptions(kind=sos.MPI, degree=4))
    assert not decompose.degraded(approxs)
    x = oracle.uniform_points(sys.box(), 300, 0)
    # the box is invariant for this contracting system, so everything must be kept
    assert glued.contains(x, w_tol=1e-6).all()
    assert decompose.total_volume(sys) == 8.0
    d = glued.to_dict()
    assert [p["subsystem"] for p in d["parts"]] == [s.name for s in subs]


def test_intersection_kind_check():
    sys = systems.prototype_cherry()
    parts = _half_spaces(sys)
    g = decompose.glue(parts, sys)
    y = sos.SparseImprovementSet.trivial(sys)
    with pytest.raises(GlueError):
        decompose.intersect_with_sparse_improvement(g, y)
    y.kind = "MPI"
    both = decompose.intersect_with_sparse_improvement(g, y)
    x = oracle.uniform_points(sys.box(), 50, 1)
    assert np.array_equal(both.contains(x), g.contains(x))

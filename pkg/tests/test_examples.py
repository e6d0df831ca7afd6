"""Worked examples with hand-checkable answers, one per documented case."""

import math

import numpy as np
import pytest

from sparseinv import decompose, graph, oracle, sdp, sos, systems
from sparseinv.decompose import PredicateSet, SolveOptions
from sparseinv.poly import Polynomial, PolyVector, lie_derivative, parse_polynomial
from sparseinv.sysmodel import (Partition, SemialgebraicBlock, SystemDef, is_subsystem,
                                project_subsystem, validate_product_constraints)

from test_graph import make_graph
from test_sos import one_dim

Y = tuple(f"y{i}" for i in range(1, 11))


# -- polynomials ------------------------------------------------------------------

def test_evaluations():
    assert Polynomial.zero(2).eval(np.array([3.7, -1.0])) == 0.0
    p = parse_polynomial("y1^2*y2", Y)
    assert p.eval(np.array([1.0, 2.0] + [0.0] * 8)) == 2.0
    q = parse_polynomial("x1*x3*(1 - x3)", ("x1", "x2", "x3"))
    assert q.eval(np.array([1.0, 0.0, 0.5])) == 0.25


def test_partials():
    x = Polynomial.variable(1, 0)
    assert (x * x).partial(0) == 2.0 * x
    p = parse_polynomial("y1^2*y2", Y)
    assert p.partial(1) == parse_polynomial("y1^2", Y)
    assert parse_polynomial("y1*y2", Y).partial(2).is_zero()


def test_lie_derivative_cases():
    x = Polynomial.variable(1, 0)
    assert lie_derivative(x * x, PolyVector([-x])) == -2.0 * x * x
    assert lie_derivative(Polynomial.constant(1, 3.0), PolyVector([x * x * x])).is_zero()
    leaf = systems.vdp_network([], 1, 0.0)
    v = parse_polynomial("x1_1^2 + x1_2^2", leaf.var_names)
    lv = lie_derivative(v, leaf.f)
    assert lv.coeff((2, 2)) == pytest.approx(-20.0)


def test_supports():
    assert parse_polynomial("y3*y2 + y3^2", Y).support() == {1, 2}
    assert Polynomial.constant(10, 4.0).support() == set()
    assert parse_polynomial("y2^3*y6*y7", Y).support() == {1, 5, 6}


# -- systems and subsystems -----------------------------------------------------------

def test_subsystem_predicate_on_examplef():
    ex = systems.bundled("examplef")
    assert is_subsystem(ex, [0, 1])
    assert not is_subsystem(ex, [3, 4])
    assert is_subsystem(ex, range(10))


def test_projection_cases():
    proto = systems.prototype_cherry()
    sub = project_subsystem(proto, [0, 1])
    assert sub.system.f == PolyVector([proto.f[0].restrict([0, 1]), proto.f[1].restrict([0, 1])])
    assert sub.system.box() == [(-1.0, 1.0), (-1.0, 1.0)]
    cherry = systems.bundled("vdp_cherry")
    assert project_subsystem(cherry, [0, 1, 4, 5]).dim == 4
    whole = project_subsystem(proto, range(3))
    assert whole.system.f == proto.f and whole.index_set == (0, 1, 2)


def test_product_form_cases():
    assert validate_product_constraints(systems.bundled("vdp_cherry"))
    names = ("x1", "x2", "x3")
    x = [Polynomial.variable(3, i) for i in range(3)]
    f = PolyVector([x[0] * 0, x[0] * 0, Polynomial.constant(3, 1.0)])
    part = Partition(((0,), (1,), (2,)))
    cons = (SemialgebraicBlock((0,), (), {0: (0, 1)}),
            SemialgebraicBlock((1,), (x[1] - x[2] + 0.5,), {1: (0, 1)}),
            SemialgebraicBlock((2,), (), {2: (0, 1)}))
    assert not validate_product_constraints(SystemDef(f, part, cons, None, None, names))
    assert validate_product_constraints(systems.shift_counterexample())


# -- graphs -----------------------------------------------------------------------

def test_examplef_edges():
    g = graph.build_graph(systems.bundled("examplef"))
    named = {(g.names[a], g.names[b]) for a, b in g.edges}
    assert {("x1", "x2"), ("x1", "x4"), ("x4", "x3"), ("x2", "x5"), ("x4", "x5")} <= named
    assert not g.predecessors(g.index("x1"))


def test_prototype_and_decoupled_edges():
    g = graph.build_graph(systems.prototype_cherry())
    assert g.edges == {(0, 1), (0, 2)}
    assert not graph.build_graph(systems.decoupled_linear([1, 2, 1])).edges


def test_three_cycle_collapses():
    g = make_graph(3, {(0, 1), (1, 2), (2, 0)}, [1, 2, 3])
    cg = graph.condense(g)
    assert len(cg.graph) == 1 and cg.graph.weights == (6,)


def test_acyclic_condensation_is_isomorphic():
    g = make_graph(4, {(0, 1), (0, 2), (2, 3)})
    cg = graph.condense(g)
    mapped = {(cg.node_of[a], cg.node_of[b]) for a, b in g.edges}
    assert len(cg.graph) == 4 and mapped == set(cg.graph.edges)


def test_straight_with_circles_becomes_chain():
    # a -> b <-> c -> d <-> e: every branching sits inside a cycle
    g = make_graph(5, {(0, 1), (1, 2), (2, 1), (2, 3), (3, 4), (4, 3)})
    cg = graph.condense(g)
    dag = cg.graph
    assert len(dag) == 3
    assert all(dag.out_degree(i) <= 1 and len(dag.predecessors(i)) <= 1 for i in range(3))
    assert len(graph.leafs(cg)) == 1


def test_leaf_and_past_cases():
    cg = graph.condense(graph.build_graph(systems.prototype_cherry()))
    assert [cg.graph.names[i] for i in graph.leafs(cg)] == ["x2", "x3"]
    single = make_graph(1, set())
    assert graph.leafs(single) == [0] and graph.past(single, 0) == {0}
    ex = graph.condense(graph.build_graph(systems.bundled("examplef")))
    assert graph.past(ex, "x1") == {ex.graph.index("x1")}


def test_omega_cases():
    assert graph.omega(graph.condense(graph.build_graph(systems.bundled("vdp_cherry")))) == 4
    dec = graph.build_graph(systems.decoupled_linear([1, 3, 2]))
    assert graph.omega(dec) == 3


def test_minimal_factorization_cases():
    n = 3
    x = [Polynomial.variable(n, i) for i in range(n)]
    cons = [1 - x[0] * x[0], 1 - x[1] * x[1], 1 - x[1] * x[2]]
    assert graph.minimal_factorization(cons, n).blocks == ((0,), (1, 2))
    boxes = [1 - xi * xi for xi in x]
    assert graph.minimal_factorization(boxes, n).blocks == ((0,), (1,), (2,))
    assert graph.minimal_factorization([1 - x[0] * x[1] * x[2]], n).blocks == ((0, 1, 2),)


# -- decomposition ----------------------------------------------------------------

def coupled_pair():
    names = ("a", "b")
    f = PolyVector([parse_polynomial(s, names) for s in ("-a + 0.5*b", "-b + 0.5*a")])
    part = Partition(((0,), (1,)))
    cons = tuple(SemialgebraicBlock((i,), (), {i: (-1.0, 1.0)}) for i in range(2))
    return SystemDef(f, part, cons, None, None, names, "pair")


def test_fully_coupled_is_one_subsystem():
    sys = coupled_pair()
    subs = decompose.decouple(sys)
    assert len(subs) == 1 and subs[0].index_set == (0, 1)
    p = PredicateSet((0, 1), "MPI", lambda y: y[..., 0] > y[..., 1])
    pts = oracle.uniform_points(sys.box(), 100, 0)
    assert np.array_equal(decompose.glue([p], sys).contains(pts), p.contains(pts))


def test_exact_oracle_sets_glue_to_full_box():
    sys = systems.decoupled_linear([1, 2, 1])
    pts = oracle.grid_points(sys.box(), 5)
    parts = []
    for sub in decompose.decouple(sys):
        parts.append(PredicateSet(sub.index_set, "MPI", (lambda s: lambda y: oracle.estimate_mpi(
            s.system, y.reshape(-1, s.dim), 5.0).labels == oracle.IN)(sub)))
    assert decompose.glue(parts, sys).contains(pts).all()


def test_membership_edge_cases():
    sys = systems.prototype_cherry()
    parts = [sos.OuterApprox.trivial(s.name, s.index_set, "MPI", 4,
                                     s.system.constraint_blocks)
             for s in decompose.decouple(sys)]
    g = decompose.glue(parts, sys)
    assert decompose.membership(g, [0.2, -0.3, 0.9]) is True
    assert decompose.membership(g, [1.5, 0.0, 0.0]) is False


def test_glued_cherry_mpi_contains_origin():
    sys = systems.bundled("vdp_cherry3")
    _, approxs, glued = decompose.run_pipeline(sys, SolveOptions(kind=sos.MPI, degree=4))
    assert decompose.membership(glued, np.zeros(6))


def test_error_bound_edge_cases():
    sys = systems.prototype_cherry()
    assert decompose.error_bound([0.0, 0.0], sys) == 0.0
    pair = coupled_pair()
    assert decompose.error_bound([0.3], pair) == pytest.approx(0.3)


def test_intersection_with_trivial_sets():
    sys = systems.bundled("vdp_cherry3_roa")
    pts = oracle.uniform_points(sys.box(), 300, 2)
    y_all = sos.SparseImprovementSet.trivial(sys)
    half = [PredicateSet(s.index_set, "ROA", lambda y: y[..., -1] > 0) for s in
            decompose.decouple(sys)]
    g = decompose.glue(half, sys)
    assert np.array_equal(decompose.intersect_with_sparse_improvement(g, y_all).contains(pts),
                          g.contains(pts))
    g_all = decompose.glue([PredicateSet(s.index_set, "ROA", lambda y: np.ones(y.shape[:-1], bool))
                            for s in decompose.decouple(sys)], sys)
    y = sos.SparseImprovementSet([(0,)], [Polynomial.variable(1, 0) + 1.0], 1.0, "ROA", 2, 0.0,
                                 sys)
    both = decompose.intersect_with_sparse_improvement(g_all, y)
    assert np.array_equal(both.contains(pts), y.contains(pts))


# -- SOS programs -----------------------------------------------------------------

def test_moment_cases():
    sq = sos.lebesgue_moments([(-1, 1), (-1, 1)], 2)
    assert sq.moment((0, 0)) == 4.0 and sq.moment((1, 0)) == 0.0
    assert sos.lebesgue_moments([(-1.2, 1.2)], 2).moment((2,)) == pytest.approx(2 * 1.2 ** 3 / 3)


def test_line_roa_k4_contains_exact():
    sys = one_dim()
    prog = sos.build_roa_program(sys, 1.0, 4)
    sol = sos.solve_program(prog)
    oa = sos.extract_certificate(prog, sol, sys)
    assert oa.contains(np.linspace(-0.1 * math.e, 0.1 * math.e, 101)[:, None], w_tol=1e-6).all()


def test_ga_cases():
    sys = one_dim("-x", target=None)
    prog = sos.build_ga_program(sys, 1.0, 1.0, 6)
    oa = sos.extract_certificate(prog, sos.solve_program(prog), sys)
    grid = np.linspace(-1, 1, 2001)[:, None]
    assert oa.contains(np.zeros((1, 1)), w_tol=1e-6).all()
    assert 2.0 * oa.contains(grid).mean() <= 0.6
    still = one_dim("0", target=None)
    prog = sos.build_ga_program(still, 1.0, 1.0, 4)
    sol = sos.solve_program(prog)
    assert sol.primal_objective == pytest.approx(2.0, abs=1e-5)
    with pytest.raises(sos.ProgramError):
        sos.build_ga_program(still, 0.0, 1.0, 4)
    with pytest.raises(sos.ProgramError):
        sos.build_mpi_program(still, -1.0, 4)


def test_single_scope_sparse_program_matches_dense():
    sys = one_dim()
    dense = sos.solve_program(sos.build_roa_program(sys, 1.0, 4))
    sparse = sos.solve_program(sos.build_sparse_roa_program(sys, [(0,)], 1.0, 4))
    assert sparse.primal_objective == pytest.approx(dense.primal_objective, abs=1e-6)


def test_trivial_superlevel_is_whole_box():
    sys = systems.prototype_cherry()
    oa = sos.OuterApprox.trivial("all", range(3), "MPI", 4, sys.constraint_blocks)
    assert oa.contains(oracle.grid_points(sys.box(), 5)).all()


def test_single_identity_assembly():
    b = sos._Builder(1, 2)
    c = b.decision("c", (), 0)
    x = Polynomial.variable(1, 0)
    b.identity("id", sos.AffinePoly.of(c) + x * x, b.multipliers("id", (0,), []))
    prog = sos.SosProgram("TEST", 1, ("x",), b.decisions, b.identities, {}, 2)
    p = prog.to_sdp()
    assert p.block_dims == [2] and p.n_free == 1 and p.m == 3


def test_empty_program_assembles():
    prog = sos.SosProgram("TEST", 1, ("x",), {}, [], {}, 2)
    p = prog.to_sdp()
    assert p.m == 0 and p.block_dims == []
    s = sdp.solve(p)
    assert s.primal_objective == 0.0


def test_cherry_roa_largest_block():
    sub = decompose.decouple(systems.vdp_cherry(10, target=(-0.2, 0.2), horizon=1.0))[0]
    assert max(sos.build_roa_program(sub, 1.0, 8).to_sdp().block_dims) == 126


# -- SDP ----------------------------------------------------------------------------

def trace_problem(n=3):
    # min tr X s.t. X11 = 2
    return sdp.SdpProblem.from_entries([n], 0, [2.0], [(0, 0, 0, 0, 1.0)],
                                       [(0, i, i, 1.0) for i in range(n)])


def test_trace_problem():
    s = sdp.solve(trace_problem())
    assert s.primal_objective == pytest.approx(2.0, abs=1e-7)
    assert s.X[0][0, 0] == pytest.approx(2.0, abs=1e-6)


def exact_solution(n=3):
    X = np.zeros((n, n))
    X[0, 0] = 2.0
    Z = np.eye(n)
    Z[0, 0] = 0.0
    return sdp.SdpSolution([X], np.zeros(0), np.array([1.0]), [Z], 2.0, 2.0, 0.0, 0.0, 0.0, 0,
                           sdp.OPTIMAL)


def test_verify_exact_and_perturbed():
    p = trace_problem()
    rep = sdp.verify(p, exact_solution())
    assert rep.worst() < 1e-12 and rep.gap < 1e-12
    bad = exact_solution()
    bad.X[0][0, 0] += 1e-3
    assert sdp.verify(p, bad).primal_residual >= 1e-4


def test_rank_deficiency_flagged_without_presolve():
    p = sdp.SdpProblem.from_entries([2], 0, [1.0, 1.0], [(0, 0, 0, 0, 1.0), (1, 0, 0, 0, 1.0)],
                                    [(0, 0, 0, 1.0), (0, 1, 1, 1.0)])
    s = sdp.solve(p, presolve=False)
    assert sdp.verify(p, s).rank_deficient


# -- oracle -----------------------------------------------------------------------

def test_integration_cases():
    res = oracle.integrate_batch(PolyVector([-Polynomial.variable(1, 0)]), [[1.0]], 1.0)
    assert abs(res.states[0, 0] - math.exp(-1)) < 1e-7
    zero = PolyVector([Polynomial.zero(2), Polynomial.zero(2)])
    assert np.array_equal(oracle.integrate_batch(zero, [[0.3, -0.4]], 7.0).states, [[0.3, -0.4]])
    drift = one_dim("1", box=(0.0, 1.0), target=None)
    tr = oracle.integrate(drift.f, [0.5], 3.0, system=drift)
    assert abs(tr.exit_time - 0.5) < 1e-6


def test_roa_labels():
    sys = one_dim()
    grid = np.linspace(-1, 1, 401)[:, None]
    lab = oracle.estimate_roa(sys, grid).labels == oracle.IN
    assert np.array_equal(lab, np.abs(grid[:, 0]) <= 0.1 * math.e)
    still = one_dim("0", target=(-1.0, 1.0))
    assert (oracle.estimate_roa(still, grid).labels == oracle.IN).all()
    far = one_dim("-x", box=(-1.0, 1.0), target=(0.9, 1.0), T=5.0)
    assert not (oracle.estimate_roa(far, grid).labels == oracle.IN).any()


def test_mpi_labels():
    shift = systems.shift_counterexample()
    pts = oracle.grid_points(shift.box(), 6)
    assert (oracle.estimate_mpi(shift, pts, 2.0).labels == oracle.OUT).all()
    still = one_dim("0", target=None)
    assert (oracle.estimate_mpi(still, np.linspace(-1, 1, 9)[:, None], 10).labels
            == oracle.IN).all()
    leaf = systems.vdp_network([], 1, 0.0)
    pts = oracle.grid_points(leaf.box(), 21)
    lab = oracle.estimate_mpi(leaf, pts, 100.0).labels == oracle.IN
    assert lab.any() and lab[np.all(pts == 0, axis=1)].all()


def test_attractor_samples():
    sys = one_dim("-x", target=None)
    pts = np.linspace(-1, 1, 21)[:, None]
    assert np.abs(oracle.estimate_attractor(sys, pts, 20.0, 25.0).points).max() < 1e-8
    still = one_dim("0", target=None)
    cloud = oracle.estimate_attractor(still, pts, 1.0, 2.0, n_per_traj=1)
    assert np.array_equal(np.sort(cloud.points[:, 0]), pts[:, 0])


def test_vdp_leaf_attractor_is_cycle_or_empty():
    leaf = systems.vdp_network([], 1, 0.0)
    starts = oracle.uniform_points([(0.3, 0.6), (0.3, 0.6)], 20, 0)
    cloud = oracle.estimate_attractor(leaf, starts, 50.0, 60.0).points
    if len(cloud):
        r = np.linalg.norm(cloud, axis=1)
        assert r.min() > 0.05


def test_dlambda_cases():
    box = [(0.0, 1.0), (0.0, 1.0)]
    a = lambda x: np.ones(len(x), bool)  # noqa: E731
    same = oracle.dlambda_estimate(a, a, box, 1000)
    assert same.value == 0.0 and same.low <= 0.0
    half = oracle.dlambda_estimate(a, lambda x: x[:, 0] <= 0.5, box, 20000)
    assert half.low <= 0.5 <= half.high


def test_glued_and_direct_oracle_agree_on_shift():
    sys = systems.shift_counterexample()
    subs = decompose.decouple(sys)

    def direct(x):
        return oracle.estimate_mpi(sys, x, 2.0).labels == oracle.IN

    def glued(x):
        ok = np.ones(len(x), bool)
        for s in subs:
            ok &= oracle.estimate_mpi(s.system, s.project(x), 2.0).labels == oracle.IN
        return ok

    est = oracle.dlambda_estimate(direct, glued, sys.box(), 500)
    assert est.value == 0.0

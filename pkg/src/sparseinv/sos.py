"""Sum-of-squares programs for outer approximations of ROA, MPI and GA sets.

A program has polynomial decision variables (free coefficients) and a list
of identities ``lhs = sigma_0 + sum_j sigma_j g_j``.  Each multiplier
``sigma`` is a Gram form ``m^T Q m`` over a monomial basis and becomes one
PSD block of the semidefinite program.  Objectives integrate ``w`` against
Lebesgue measure on the constraint box.

Programs live in an "ambient" variable space.  For the time-dependent ROA
program variable 0 is time and variables 1..n are the states.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from . import sdp
from .poly import Monomial, Polynomial, PolyVector, lie_derivative, monomials_up_to
from .sysmodel import SemialgebraicBlock, Subsystem, SystemDef

ROA = "ROA"
MPI = "MPI"
GA = "GA"
KINDS = (ROA, MPI, GA)


class DegreeError(ValueError):
    pass


class ProgramError(ValueError):
    pass


class CertificateError(RuntimeError):
    """Raised when a solve cannot be turned into a certificate; carries the residual report."""

    def __init__(self, message: str, report: dict | None = None):
        super().__init__(message)
        self.report = report or {}


# -- moments ------------------------------------------------------------------

class MomentVector(dict):
    """Exponent tuple -> integral of the monomial over a box."""

    def __init__(self, box: Sequence[tuple[float, float]], data: Mapping = ()):
        super().__init__(data)
        self.box = [tuple(map(float, ab)) for ab in box]

    def integrate(self, p: Polynomial) -> float:
        return float(sum(c * self.moment(a) for a, c in p.terms.items()))

    def moment(self, alpha: Monomial) -> float:
        if alpha not in self:
            self[alpha] = _box_moment(self.box, alpha)
        return self[alpha]


def _box_moment(box, alpha) -> float:
    out = 1.0
    for (a, b), e in zip(box, alpha):
        out *= (b ** (e + 1) - a ** (e + 1)) / (e + 1)
    return out


def lebesgue_moments(box: Sequence[tuple[float, float]], max_degree: int) -> MomentVector:
    """Moments of Lebesgue measure on a box for all monomials up to ``max_degree``."""
    if max_degree < 0:
        raise ValueError("max_degree must be nonnegative")
    for a, b in box:
        if not (math.isfinite(a) and math.isfinite(b)) or a >= b:
            raise ValueError(f"degenerate or unbounded interval [{a}, {b}]")
    mv = MomentVector(box)
    for alpha in monomials_up_to(len(box), max_degree):
        mv.moment(alpha)
    return mv


# -- program building blocks ------------------------------------------------

@dataclass
class Decision:
    """Polynomial with free coefficients over the monomials of ``scope`` up to ``degree``."""

    name: str
    num_vars: int
    scope: tuple[int, ...]
    degree: int
    offset: int
    monomials: list[Monomial] = field(default_factory=list)

    def __post_init__(self):
        if not self.monomials:
            self.monomials = _scoped_monomials(self.num_vars, self.scope, self.degree)

    @property
    def size(self) -> int:
        return len(self.monomials)

    def polynomial(self, u: np.ndarray) -> Polynomial:
        coeffs = u[self.offset:self.offset + self.size]
        return Polynomial(self.num_vars, dict(zip(self.monomials, map(float, coeffs))))


@dataclass
class Multiplier:
    name: str
    generator: Polynomial
    scope: tuple[int, ...]
    basis: list[Monomial]

    @property
    def size(self) -> int:
        return len(self.basis)

    def gram_polynomial(self, Q: np.ndarray) -> Polynomial:
        """Expand ``m^T Q m`` term by term."""
        out: dict[Monomial, float] = {}
        for p, a in enumerate(self.basis):
            for q, b in enumerate(self.basis):
                c = a_plus(a, b)
                out[c] = out.get(c, 0.0) + float(Q[p, q])
        return Polynomial(self.generator.num_vars, out)


def a_plus(a: Monomial, b: Monomial) -> Monomial:
    return tuple(x + y for x, y in zip(a, b))


class AffinePoly:
    """Polynomial whose coefficients are affine in the decision vector."""

    def __init__(self, num_vars: int, const: Polynomial | None = None,
                 lin: dict[Monomial, dict[int, float]] | None = None):
        self.num_vars = num_vars
        self.const = const if const is not None else Polynomial.zero(num_vars)
        self.lin = lin or {}

    @classmethod
    def of(cls, d: Decision, transform=None) -> AffinePoly:
        """Image of a decision polynomial under a linear map on polynomials."""
        lin: dict[Monomial, dict[int, float]] = {}
        for k, alpha in enumerate(d.monomials):
            img = Polynomial.monomial(alpha)
            if transform is not None:
                img = transform(img)
            for beta, c in img.terms.items():
                lin.setdefault(beta, {})
                lin[beta][d.offset + k] = lin[beta].get(d.offset + k, 0.0) + c
        return cls(d.num_vars, None, lin)

    def __add__(self, other) -> AffinePoly:
        if isinstance(other, (int, float, Polynomial)):
            other = AffinePoly(self.num_vars,
                               other if isinstance(other, Polynomial)
                               else Polynomial.constant(self.num_vars, other))
        lin = {a: dict(r) for a, r in self.lin.items()}
        for a, row in other.lin.items():
            tgt = lin.setdefault(a, {})
            for j, c in row.items():
                tgt[j] = tgt.get(j, 0.0) + c
        return AffinePoly(self.num_vars, self.const + other.const, lin)

    def __radd__(self, other) -> AffinePoly:
        return self + other

    def __mul__(self, s: float) -> AffinePoly:
        return AffinePoly(self.num_vars, self.const * s,
                          {a: {j: c * s for j, c in r.items()} for a, r in self.lin.items()})

    __rmul__ = __mul__

    def __neg__(self) -> AffinePoly:
        return self * -1.0

    def __sub__(self, other) -> AffinePoly:
        return self + (-1.0) * (other if isinstance(other, AffinePoly) else
                                AffinePoly(self.num_vars, other if isinstance(other, Polynomial)
                                           else Polynomial.constant(self.num_vars, other)))

    def monomials(self) -> set[Monomial]:
        return set(self.const.terms) | set(self.lin)

    def degree(self) -> int:
        return max((sum(a) for a in self.monomials()), default=0)

    def evaluate(self, u: np.ndarray) -> Polynomial:
        terms: dict[Monomial, float] = dict(self.const.terms)
        for a, row in self.lin.items():
            terms[a] = terms.get(a, 0.0) + sum(c * u[j] for j, c in row.items())
        return Polynomial(self.num_vars, terms)


@dataclass
class Identity:
    name: str
    lhs: AffinePoly
    multipliers: list[Multiplier]


@dataclass
class SosProgram:
    kind: str
    num_vars: int
    var_names: tuple[str, ...]
    decisions: dict[str, Decision]
    identities: list[Identity]
    objective: dict[int, float]
    degree: int
    meta: dict = field(default_factory=dict)
    _sdp: sdp.SdpProblem | None = field(default=None, repr=False)

    @property
    def n_free(self) -> int:
        return sum(d.size for d in self.decisions.values())

    def multipliers(self) -> list[Multiplier]:
        return [m for ident in self.identities for m in ident.multipliers]

    def multiplier_sizes(self) -> dict[str, int]:
        return {m.name: m.size for m in self.multipliers()}

    def to_sdp(self) -> sdp.SdpProblem:
        if self._sdp is None:
            self._sdp = _assemble(self)
        return self._sdp

    def describe(self) -> dict:
        """JSON-friendly structural dump for debugging."""
        return {
            "kind": self.kind, "degree": self.degree, "variables": list(self.var_names),
            "decisions": {n: {"scope": list(d.scope), "degree": d.degree, "size": d.size}
                          for n, d in self.decisions.items()},
            "identities": [{"name": i.name, "degree": i.lhs.degree(),
                            "multipliers": [{"name": m.name, "size": m.size,
                                             "scope": list(m.scope),
                                             "generator": m.generator.to_string(self.var_names)}
                                            for m in i.multipliers]}
                           for i in self.identities],
            "meta": self.meta,
        }

    def dump_json(self) -> str:
        return json.dumps(self.describe(), indent=2, sort_keys=True, default=str)


def _scoped_monomials(num_vars: int, scope: Sequence[int], degree: int) -> list[Monomial]:
    out = []
    for local in monomials_up_to(len(scope), degree):
        a = [0] * num_vars
        for i, e in zip(scope, local):
            a[i] = e
        out.append(tuple(a))
    return out


class _Builder:
    def __init__(self, num_vars: int, degree: int):
        self.num_vars = num_vars
        self.k = degree
        self.decisions: dict[str, Decision] = {}
        self.offset = 0
        self.identities: list[Identity] = []

    def decision(self, name: str, scope: Sequence[int], degree: int,
                 keep=None) -> Decision:
        monos = _scoped_monomials(self.num_vars, scope, degree)
        if keep is not None:
            monos = [a for a in monos if keep(a)]
        d = Decision(name, self.num_vars, tuple(scope), degree, self.offset, monos)
        self.offset += d.size
        self.decisions[name] = d
        return d

    def multipliers(self, tag: str, scope: Sequence[int],
                    generators: Sequence[Polynomial]) -> list[Multiplier]:
        out = [self._multiplier(f"{tag}.s0", scope, Polynomial.constant(self.num_vars, 1.0))]
        for j, g in enumerate(generators):
            out.append(self._multiplier(f"{tag}.g{j + 1}", scope, g))
        return out

    def _multiplier(self, name, scope, g: Polynomial) -> Multiplier:
        dg = g.degree()
        if dg > self.k:
            raise DegreeError(f"generator of degree {dg} exceeds relaxation degree {self.k}")
        half = (self.k - dg) // 2
        if not set(g.support()) <= set(scope):
            raise ProgramError(f"generator for {name} leaves the multiplier scope")
        return Multiplier(name, g, tuple(scope), _scoped_monomials(self.num_vars, scope, half))

    def identity(self, name: str, lhs: AffinePoly, multipliers: list[Multiplier]) -> None:
        if lhs.degree() > self.k:
            raise DegreeError(f"identity {name} has degree {lhs.degree()} > {self.k}")
        self.identities.append(Identity(name, lhs, multipliers))


def _check_degree(k: int, f: PolyVector) -> int:
    """Validate the relaxation order and return the degree cap for v."""
    if k % 2:
        raise DegreeError(f"relaxation degree must be even, got {k}")
    df = max(f.degree(), 1)
    if k < df + 1:
        raise DegreeError(f"relaxation degree {k} too small for vector field of degree {df}")
    return k + 1 - df


def _box_of(blocks: Sequence[SemialgebraicBlock], n: int, what: str) -> list[tuple[float, float]]:
    bounds: dict[int, tuple[float, float]] = {}
    for b in blocks:
        bounds.update(b.box)
    if set(bounds) != set(range(n)):
        raise ProgramError(f"{what} must carry box bounds on every variable for the moment objective")
    return [bounds[i] for i in range(n)]


def _objective(w: Decision, box_moments: MomentVector, positions: Sequence[int]) -> dict[int, float]:
    """Map coefficients of ``w`` to Lebesgue moments; ``positions`` lists its state variables."""
    obj = {}
    for k, alpha in enumerate(w.monomials):
        local = tuple(alpha[i] for i in positions)
        obj[w.offset + k] = box_moments.moment(local)
    return obj


def _lift(blocks: Sequence[SemialgebraicBlock], n: int, shift: int) -> list[Polynomial]:
    """Block generators re-expressed with states shifted by ``shift`` ambient slots."""
    return [g.embed(range(shift, n + shift), n + shift) for b in blocks for g in b.generators(n)]


def _system_of(sub: Subsystem | SystemDef) -> SystemDef:
    return sub.system if isinstance(sub, Subsystem) else sub


def build_roa_program(sub: Subsystem | SystemDef, T: float | None, k: int) -> SosProgram:
    """Finite-horizon region of attraction: v on [0,T] x X, w on X."""
    sys = _system_of(sub)
    T = T if T is not None else sys.horizon
    if T is None or not T > 0:
        raise ProgramError("ROA needs a positive time horizon")
    if sys.target_blocks is None:
        raise ProgramError("ROA needs a target set")
    dv = _check_degree(k, sys.f)
    n = sys.n
    N = n + 1
    states = tuple(range(1, N))
    every = tuple(range(N))
    b = _Builder(N, k)
    v = b.decision("v", every, dv)
    w = b.decision("w", states, k)
    X = _lift(sys.constraint_blocks, n, 1)
    XT = _lift(sys.target_blocks, n, 1)
    t = Polynomial.variable(N, 0)
    time_gen = t * (T - t)

    b.identity("decrease", AffinePoly.of(v, lambda m: -lie_derivative(m, sys.f, True)),
               b.multipliers("decrease", every, X + [time_gen]))
    b.identity("terminal", AffinePoly.of(v, lambda m: m.substitute(0, T)),
               b.multipliers("terminal", states, XT))
    b.identity("w_nonneg", AffinePoly.of(w), b.multipliers("w_nonneg", states, X))
    b.identity("w_bound", AffinePoly.of(w) - AffinePoly.of(v, lambda m: m.substitute(0, 0.0)) - 1.0,
               b.multipliers("w_bound", states, X))
    moments = MomentVector(_box_of(sys.constraint_blocks, n, "X"))
    return SosProgram(ROA, N, ("t",) + sys.var_names, b.decisions, b.identities,
                      _objective(w, moments, states), k,
                      {"T": T, "certificate": "w", "state_positions": list(states),
                       "volume": moments.moment((0,) * n)})


def build_mpi_program(sub: Subsystem | SystemDef, beta: float, k: int) -> SosProgram:
    """Discounted maximal positively invariant set program."""
    if not beta > 0:
        raise ProgramError("discount factor beta must be positive")
    sys = _system_of(sub)
    dv = _check_degree(k, sys.f)
    n = sys.n
    every = tuple(range(n))
    b = _Builder(n, k)
    v = b.decision("v", every, dv)
    w = b.decision("w", every, k)
    X = _lift(sys.constraint_blocks, n, 0)
    b.identity("discounted", AffinePoly.of(v, lambda m: beta * m - lie_derivative(m, sys.f)),
               b.multipliers("discounted", every, X))
    b.identity("w_nonneg", AffinePoly.of(w), b.multipliers("w_nonneg", every, X))
    b.identity("w_bound", AffinePoly.of(w) - AffinePoly.of(v) - 1.0,
               b.multipliers("w_bound", every, X))
    moments = MomentVector(_box_of(sys.constraint_blocks, n, "X"))
    return SosProgram(MPI, n, sys.var_names, b.decisions, b.identities,
                      _objective(w, moments, every), k,
                      {"beta": beta, "certificate": "w", "state_positions": list(every),
                       "volume": moments.moment((0,) * n)})


def build_ga_program(sub: Subsystem | SystemDef, beta1: float, beta2: float, k: int) -> SosProgram:
    """Global attractor program: forward-invariant p, backward-invariant q."""
    if not (beta1 > 0 and beta2 > 0):
        raise ProgramError("discount factors beta1 and beta2 must be positive")
    sys = _system_of(sub)
    dv = _check_degree(k, sys.f)
    n = sys.n
    every = tuple(range(n))
    b = _Builder(n, k)
    p = b.decision("p", every, dv)
    q = b.decision("q", every, dv)
    w = b.decision("w", every, k)
    X = _lift(sys.constraint_blocks, n, 0)
    b.identity("w_bound", AffinePoly.of(w) - AffinePoly.of(p) - AffinePoly.of(q) - 1.0,
               b.multipliers("w_bound", every, X))
    b.identity("w_nonneg", AffinePoly.of(w), b.multipliers("w_nonneg", every, X))
    b.identity("forward", AffinePoly.of(p, lambda m: beta1 * m - lie_derivative(m, sys.f)),
               b.multipliers("forward", every, X))
    b.identity("backward", AffinePoly.of(q, lambda m: beta2 * m + lie_derivative(m, sys.f)),
               b.multipliers("backward", every, X))
    moments = MomentVector(_box_of(sys.constraint_blocks, n, "X"))
    return SosProgram(GA, n, sys.var_names, b.decisions, b.identities,
                      _objective(w, moments, every), k,
                      {"beta1": beta1, "beta2": beta2, "certificate": "w",
                       "state_positions": list(every), "volume": moments.moment((0,) * n)})


def build_program(kind: str, sub: Subsystem | SystemDef, k: int, *, T: float | None = None,
                  beta: float = 1.0, beta1: float = 1.0, beta2: float = 1.0) -> SosProgram:
    kind = kind.upper()
    if kind == ROA:
        return build_roa_program(sub, T, k)
    if kind == MPI:
        return build_mpi_program(sub, beta, k)
    if kind == GA:
        return build_ga_program(sub, beta1, beta2, k)
    raise ProgramError(f"unknown set kind {kind!r}")


def build_sparse_roa_program(sys: SystemDef, scopes: Sequence[Sequence[int]], T: float | None,
                             k: int) -> SosProgram:
    """Joint ROA program with per-leaf decision functions that are summed.

    ``scopes`` lists the raw state indices of each leaf's past.  Every
    multiplier acts on one scope only (plus time where relevant).
    """
    T = T if T is not None else sys.horizon
    if T is None or not T > 0:
        raise ProgramError("ROA needs a positive time horizon")
    if sys.target_blocks is None:
        raise ProgramError("ROA needs a target set")
    if not scopes:
        raise ProgramError("need at least one leaf scope")
    dv = _check_degree(k, sys.f)
    n = sys.n
    N = n + 1
    scopes = [tuple(sorted(set(s))) for s in scopes]
    covered = set().union(*scopes)
    if covered != set(range(n)):
        raise ProgramError("leaf scopes must cover every state")
    for s in scopes:
        for i in s:
            if not sys.f[i].support() <= set(s):
                raise ProgramError(f"scope {s} is not closed under the dynamics")
    l = len(scopes)
    b = _Builder(N, k)
    t = Polynomial.variable(N, 0)
    time_gen = t * (T - t)

    def gens(blocks, scope):
        out = []
        for blk in blocks:
            if set(blk.var_indices) <= set(scope):
                out.extend(g.embed(range(1, N), N) for g in blk.generators(n))
        return out

    # Only sums of the per-leaf functions enter the program, so a monomial
    # that fits in an earlier scope is owned by that scope alone.
    vs, ws, amb = [], [], []
    for r, s in enumerate(scopes):
        amb.append(tuple(i + 1 for i in s))
        earlier = [set(a) for a in amb[:r]]

        def fresh(alpha, earlier=earlier):
            used = {i for i, e in enumerate(alpha) if e and i > 0}
            return not any(used <= e for e in earlier)

        vs.append(b.decision(f"v{r + 1}", (0,) + amb[r], dv, fresh))
        ws.append(b.decision(f"w{r + 1}", amb[r], k, fresh))

    def summed(parts):
        out = AffinePoly(N)
        for p in parts:
            out = out + p
        return out

    def scoped(tag, with_time, blocks):
        ms = []
        for r, s in enumerate(scopes):
            scope = ((0,) if with_time else ()) + amb[r]
            g = gens(blocks, s) + ([time_gen] if with_time else [])
            ms.extend(b.multipliers(f"{tag}.r{r + 1}", scope, g))
        return ms

    b.identity("decrease", summed(AffinePoly.of(v, lambda m: -lie_derivative(m, sys.f, True))
                                  for v in vs),
               scoped("decrease", True, sys.constraint_blocks))
    b.identity("terminal", summed(AffinePoly.of(v, lambda m: m.substitute(0, T)) for v in vs),
               scoped("terminal", False, sys.target_blocks))
    b.identity("w_nonneg", summed(AffinePoly.of(w) for w in ws),
               scoped("w_nonneg", False, sys.constraint_blocks))
    b.identity("w_bound",
               summed(AffinePoly.of(w) - AffinePoly.of(v, lambda m: m.substitute(0, 0.0))
                      for v, w in zip(vs, ws)) - float(l),
               scoped("w_bound", False, sys.constraint_blocks))
    # integrate the summed certificate over all of X; with per-scope
    # integrals shared monomials would carry scope-dependent weights
    moments = MomentVector(_box_of(sys.constraint_blocks, n, "X"))
    objective: dict[int, float] = {}
    for w in ws:
        objective.update(_objective(w, moments, tuple(range(1, N))))
    return SosProgram(ROA, N, ("t",) + sys.var_names, b.decisions, b.identities, objective, k,
                      {"T": T, "sparse": True, "scopes": [list(s) for s in scopes],
                       "threshold": float(l)})


# -- assembly into an SDP -----------------------------------------------------

def _assemble(prog: SosProgram) -> sdp.SdpProblem:
    """Coefficient matching: one equality row per (identity, monomial)."""
    nv = prog.num_vars
    radix = prog.degree + 1
    if radix ** nv * (len(prog.identities) + 1) >= 2 ** 62:
        raise ProgramError("too many variables for monomial encoding")
    base = np.array([radix ** i for i in range(nv)], dtype=np.int64)
    row_keys: list[np.ndarray] = []
    block_data = []
    free_rows, free_cols, free_vals = [], [], []
    consts = []
    for idn, ident in enumerate(prog.identities):
        for mult in ident.multipliers:
            s = mult.size
            B = np.array(mult.basis, dtype=np.int64).reshape(s, nv)
            iu, ju = np.triu_indices(s)
            pair = B[iu] + B[ju]
            keys, ii, jj, vals = [], [], [], []
            for gamma, c in mult.generator.terms.items():
                keys.append((pair + np.array(gamma, dtype=np.int64)) @ base)
                ii.append(iu)
                jj.append(ju)
                vals.append(np.full(iu.size, c))
            block_data.append((idn, np.concatenate(keys), np.concatenate(ii),
                               np.concatenate(jj), np.concatenate(vals), s, mult.name))
        for alpha, row in ident.lhs.lin.items():
            key = int(np.array(alpha, dtype=np.int64) @ base)
            for j, c in row.items():
                free_rows.append((idn, key))
                free_cols.append(j)
                free_vals.append(-c)
        for alpha, c in ident.lhs.const.terms.items():
            consts.append(((idn, int(np.array(alpha, dtype=np.int64) @ base)), c))

    # global row numbering over (identity, monomial key)
    big = radix ** nv
    all_codes = [idn * big + keys for idn, keys, *_ in block_data]
    all_codes += [np.array([i * big + k for i, k in free_rows], dtype=np.int64)]
    all_codes += [np.array([i * big + k for (i, k), _ in consts], dtype=np.int64)]
    uniq = np.unique(np.concatenate(all_codes))
    m = uniq.size

    def rows_of(codes):
        return np.searchsorted(uniq, codes)

    b_vec = np.zeros(m)
    for (i, k), c in consts:
        b_vec[rows_of(np.array([i * big + k]))[0]] += c
    A_blocks, dims, names = [], [], []
    for idn, keys, ii, jj, vals, s, name in block_data:
        r = rows_of(idn * big + keys)
        # symmetric expansion: off-diagonal pairs fill both (i,j) and (j,i)
        off = ii != jj
        rr = np.concatenate([r, r[off]])
        cc = np.concatenate([ii * s + jj, jj[off] * s + ii[off]])
        vv = np.concatenate([vals, vals[off]])
        A = sp.csr_matrix((vv, (rr, cc)), shape=(m, s * s))
        A.sum_duplicates()
        A_blocks.append(A)
        dims.append(s)
        names.append(name)
    frow = rows_of(np.array([i * big + k for i, k in free_rows], dtype=np.int64))
    Bm = sp.csr_matrix((free_vals, (frow, free_cols)), shape=(m, prog.n_free))
    Bm.sum_duplicates()
    c_free = np.zeros(prog.n_free)
    for j, c in prog.objective.items():
        c_free[j] += c
    C = [np.zeros((d, d)) for d in dims]
    return sdp.SdpProblem(dims, prog.n_free, b_vec, A_blocks, Bm, C, c_free, names)


def solve_program(prog: SosProgram, tol: float = 1e-8, max_iter: int = 200) -> sdp.SdpSolution:
    return sdp.solve(prog.to_sdp(), tol=tol, max_iter=max_iter)


# -- certificates ---------------------------------------------------------------

@dataclass
class OuterApprox:
    """Superlevel set ``{y in X_I : w(y) >= 1}`` of one subsystem."""

    subsystem: str
    index_set: tuple[int, ...]
    w: Polynomial
    kind: str
    degree: int
    objective: float
    constraint_blocks: tuple[SemialgebraicBlock, ...]
    diagnostics: dict = field(default_factory=dict)
    margin: float = 0.0

    def contains(self, y: np.ndarray, conservative: bool = False, w_tol: float = 0.0) -> np.ndarray:
        """Membership for points in local coordinates; vectorized over leading axes.

        The raw set uses ``w >= 1 - w_tol``; the conservative set ``w >= 1 + margin``.
        """
        y = np.asarray(y, dtype=float)
        ok = np.ones(y.shape[:-1], dtype=bool)
        for b in self.constraint_blocks:
            ok &= b.contains(y)
        level = 1.0 + self.margin if conservative else 1.0 - w_tol
        return ok & (np.asarray(self.w(y)) >= level)

    @classmethod
    def trivial(cls, subsystem: str, index_set: Sequence[int], kind: str, degree: int,
                constraint_blocks: Sequence[SemialgebraicBlock], reason: str = "") -> OuterApprox:
        """Whole-box certificate ``w = 2``."""
        n = len(index_set)
        return cls(subsystem, tuple(index_set), Polynomial.constant(n, 2.0), kind, degree,
                   math.nan, tuple(constraint_blocks), {"status": "trivial", "reason": reason})

    def to_dict(self, var_names: Sequence[str] | None = None) -> dict:
        return {"subsystem": self.subsystem, "index_set": list(self.index_set),
                "kind": self.kind, "degree": self.degree, "objective": self.objective,
                "w": self.w.to_string(var_names), "margin": self.margin,
                "diagnostics": self.diagnostics}


def identity_residuals(prog: SosProgram, sol: sdp.SdpSolution) -> dict[str, float]:
    """Max coefficient mismatch of each identity, rebuilt symbolically from Gram matrices."""
    out = {}
    grams = iter(sol.X)
    for ident in prog.identities:
        rhs = Polynomial.zero(prog.num_vars)
        for mult in ident.multipliers:
            rhs = rhs + mult.generator * mult.gram_polynomial(next(grams))
        lhs = ident.lhs.evaluate(sol.u)
        diff = lhs - rhs
        scale = 1.0 + max(lhs.max_abs_coeff(), rhs.max_abs_coeff())
        out[ident.name] = diff.max_abs_coeff() / scale
    return out


def _identity_terms(prog: SosProgram) -> int:
    counts = []
    for ident in prog.identities:
        monos = set(ident.lhs.monomials())
        for m in ident.multipliers:
            for g in m.generator.terms:
                for a in m.basis:
                    for b in m.basis:
                        monos.add(tuple(x + y + z for x, y, z in zip(a, b, g)))
        counts.append(len(monos))
    return max(counts, default=1)


def certificate_report(prog: SosProgram, sol: sdp.SdpSolution) -> dict:
    res = identity_residuals(prog, sol)
    gram_min = min((float(np.linalg.eigvalsh(Q)[0]) for Q in sol.X), default=0.0)
    r = max(res.values(), default=0.0)
    return {"identity_residuals": res, "residual": r, "gram_min_eig": gram_min,
            "solver": sol.diagnostics()}


def extract_certificate(prog: SosProgram, sol: sdp.SdpSolution, subsystem: Subsystem | SystemDef,
                        name: str = "", strict: bool = True) -> OuterApprox:
    """Turn a solved ROA/MPI/GA program into an ``OuterApprox``.

    Raises ``CertificateError`` with the residual report if the solve did not
    converge or the rebuilt identities do not hold.
    """
    report = certificate_report(prog, sol)
    if strict and not sol.converged:
        raise CertificateError(f"solver status {sol.status}: {sol.message}", report)
    if strict and (report["residual"] > 1e-6 or report["gram_min_eig"] < -1e-8):
        raise CertificateError("identity reconstruction failed", report)
    if prog.meta.get("sparse"):
        raise ProgramError("use extract_sparse_improvement for the joint program")
    sys = _system_of(subsystem)
    positions = prog.meta["state_positions"]
    w_amb = prog.decisions["w"].polynomial(sol.u)
    w = w_amb.restrict(positions)
    index_set = subsystem.index_set if isinstance(subsystem, Subsystem) else tuple(range(sys.n))
    margin = report["residual"] * _identity_terms(prog)
    diag = dict(report)
    diag["status"] = sol.status
    return OuterApprox(name or sys.name, tuple(index_set), w, prog.kind, prog.degree,
                       sol.primal_objective, sys.constraint_blocks, diag, margin)


@dataclass
class SparseImprovementSet:
    """``{x in X : sum_r w_r(x_{I_r}) >= threshold}`` from the joint sparse program."""

    scopes: list[tuple[int, ...]]
    ws: list[Polynomial]
    threshold: float
    kind: str
    degree: int
    objective: float
    system: SystemDef
    diagnostics: dict = field(default_factory=dict)

    def score(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        total = np.zeros(x.shape[:-1])
        for s, w in zip(self.scopes, self.ws):
            total = total + w(x[..., list(s)])
        return total

    def contains(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.system.in_constraints(x) & (self.score(x) >= self.threshold)

    @classmethod
    def trivial(cls, system: SystemDef, kind: str = ROA) -> SparseImprovementSet:
        return cls([tuple(range(system.n))], [Polynomial.constant(system.n, 2.0)], 1.0, kind, 0,
                   math.nan, system, {"status": "trivial"})

    def to_dict(self) -> dict:
        names = self.system.var_names
        return {"kind": self.kind, "degree": self.degree, "threshold": self.threshold,
                "objective": self.objective,
                "terms": [{"scope": [names[i] for i in s],
                           "w": w.to_string([names[i] for i in s])}
                          for s, w in zip(self.scopes, self.ws)],
                "diagnostics": self.diagnostics}


def extract_sparse_improvement(prog: SosProgram, sol: sdp.SdpSolution, sys: SystemDef,
                               strict: bool = True) -> SparseImprovementSet:
    report = certificate_report(prog, sol)
    if strict and not sol.converged:
        raise CertificateError(f"solver status {sol.status}: {sol.message}", report)
    if strict and (report["residual"] > 1e-6 or report["gram_min_eig"] < -1e-8):
        raise CertificateError("identity reconstruction failed", report)
    scopes = [tuple(s) for s in prog.meta["scopes"]]
    ws = []
    for r, s in enumerate(scopes):
        w = prog.decisions[f"w{r + 1}"].polynomial(sol.u)
        ws.append(w.restrict([i + 1 for i in s]))
    diag = dict(report)
    diag["status"] = sol.status
    return SparseImprovementSet(scopes, ws, prog.meta["threshold"], prog.kind, prog.degree,
                                sol.primal_objective, sys, diag)

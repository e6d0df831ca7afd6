"""Standard-form semidefinite programs and a dense primal-dual interior-point solver.

Problem form (``X_b`` symmetric PSD blocks, ``u`` free)::

    minimize    sum_b <C_b, X_b> + c_free . u
    subject to  sum_b <A_ib, X_b> + (B u)_i = b_i     i = 1..m

with dual ``maximize b.y  s.t.  Z_b = C_b - sum_i y_i A_ib >= 0,  B^T y = c_free``.

The solver follows the usual infeasible path-following scheme with
Nesterov-Todd scaling and a Mehrotra predictor-corrector step.  Free
variables stay in the Newton system as an augmented block instead of being
split into differences of nonnegative parts.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

logger = logging.getLogger(__name__)

OPTIMAL = "optimal"
NEAR_OPTIMAL = "near-optimal"
INFEASIBLE = "infeasible"
DUAL_INFEASIBLE = "dual-infeasible"
FAILED = "failed"


class SdpFormatError(ValueError):
    pass


@dataclass
class SdpProblem:
    """Equality-form SDP; block constraint matrices are stored row-wise on vec(X_b)."""

    block_dims: list[int]
    n_free: int
    b: np.ndarray
    A_blocks: list[sp.csr_matrix]
    B: sp.csr_matrix
    C_blocks: list[np.ndarray]
    c_free: np.ndarray
    block_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        self.c_free = np.asarray(self.c_free, dtype=float).reshape(-1)
        m = self.b.size
        if any(d <= 0 for d in self.block_dims):
            raise SdpFormatError("block sizes must be positive")
        for A, d in zip(self.A_blocks, self.block_dims):
            if A.shape != (m, d * d):
                raise SdpFormatError("block constraint matrix has wrong shape")
        if self.B.shape != (m, self.n_free) or self.c_free.size != self.n_free:
            raise SdpFormatError("free-variable data has wrong shape")
        if not self.block_names:
            self.block_names = [f"block{j}" for j in range(len(self.block_dims))]

    @property
    def m(self) -> int:
        return self.b.size

    @classmethod
    def from_entries(cls, block_dims: Sequence[int], n_free: int, b: Sequence[float],
                     entries: Sequence[tuple[int, int, int, int, float]],
                     objective: Sequence[tuple[int, int, int, float]] = (),
                     block_names: Sequence[str] = ()) -> SdpProblem:
        """Build from SDPA-style entries.

        ``entries`` are ``(row, block, i, j, value)``; block ``-1`` is the
        free-variable block (``i == j`` is the variable index).  For PSD
        blocks the entry sets both ``A[i, j]`` and ``A[j, i]``.  Repeated
        entries accumulate.  ``objective`` entries are ``(block, i, j, value)``.
        """
        m = len(b)
        rows = [[] for _ in block_dims]
        cols = [[] for _ in block_dims]
        vals = [[] for _ in block_dims]
        frows, fcols, fvals = [], [], []
        for r, blk, i, j, v in entries:
            if not 0 <= r < m:
                raise SdpFormatError(f"constraint index {r} out of range")
            if blk < 0:
                if not 0 <= i < n_free:
                    raise SdpFormatError(f"free variable {i} out of range")
                frows.append(r)
                fcols.append(i)
                fvals.append(v)
                continue
            if blk >= len(block_dims):
                raise SdpFormatError(f"block {blk} out of range")
            d = block_dims[blk]
            if not (0 <= i < d and 0 <= j < d):
                raise SdpFormatError(f"entry ({i}, {j}) outside block {blk} of size {d}")
            rows[blk].append(r)
            cols[blk].append(i * d + j)
            vals[blk].append(v)
            if i != j:
                rows[blk].append(r)
                cols[blk].append(j * d + i)
                vals[blk].append(v)
        A_blocks = [sp.csr_matrix((vals[k], (rows[k], cols[k])), shape=(m, d * d))
                    for k, d in enumerate(block_dims)]
        for A in A_blocks:
            A.sum_duplicates()
        B = sp.csr_matrix((fvals, (frows, fcols)), shape=(m, n_free))
        B.sum_duplicates()
        C_blocks = [np.zeros((d, d)) for d in block_dims]
        c_free = np.zeros(n_free)
        for blk, i, j, v in objective:
            if blk < 0:
                c_free[i] += v
            else:
                C_blocks[blk][i, j] += v
                if i != j:
                    C_blocks[blk][j, i] += v
        return cls(list(block_dims), n_free, np.asarray(b, float), A_blocks, B,
                   C_blocks, c_free, list(block_names))

    # -- linear maps ------------------------------------------------------

    def apply_A(self, X: Sequence[np.ndarray], u: np.ndarray) -> np.ndarray:
        out = self.B @ u if self.n_free else np.zeros(self.m)
        for A, Xb in zip(self.A_blocks, X):
            out = out + A @ Xb.reshape(-1)
        return out

    def apply_AT(self, y: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
        mats = []
        for A, d in zip(self.A_blocks, self.block_dims):
            S = (A.T @ y).reshape(d, d)
            mats.append(0.5 * (S + S.T))
        return mats, (self.B.T @ y if self.n_free else np.zeros(0))

    def objective(self, X: Sequence[np.ndarray], u: np.ndarray) -> float:
        val = float(self.c_free @ u) if self.n_free else 0.0
        return val + sum(float(np.vdot(C, Xb)) for C, Xb in zip(self.C_blocks, X))

    def constraint_matrix(self) -> sp.csr_matrix:
        return sp.hstack(self.A_blocks + [self.B], format="csr")

    def select_rows(self, rows: np.ndarray) -> SdpProblem:
        return SdpProblem(self.block_dims, self.n_free, self.b[rows],
                          [A[rows] for A in self.A_blocks], self.B[rows],
                          self.C_blocks, self.c_free, self.block_names)

    def permute_rows(self, perm: np.ndarray) -> SdpProblem:
        return self.select_rows(np.asarray(perm))

    # -- sparse text format ----------------------------------------------

    def to_text(self) -> str:
        lines = ["# sparse SDP: constraint block row col value",
                 "# constraint 0 is the objective; block 0 holds free variables",
                 f"constraints {self.m}",
                 "blocks " + " ".join(str(d) for d in self.block_dims),
                 f"free {self.n_free}",
                 "rhs " + " ".join(repr(float(v)) for v in self.b)]
        for j, c in enumerate(self.c_free):
            if c != 0.0:
                lines.append(f"0 0 {j} {j} {float(c)!r}")
        for k, C in enumerate(self.C_blocks):
            ii, jj = np.nonzero(np.triu(C))
            for i, j in zip(ii, jj):
                lines.append(f"0 {k + 1} {i} {j} {float(C[i, j])!r}")
        Bc = self.B.tocoo()
        for r, j, v in sorted(zip(Bc.row, Bc.col, Bc.data)):
            lines.append(f"{r + 1} 0 {j} {j} {float(v)!r}")
        for k, (A, d) in enumerate(zip(self.A_blocks, self.block_dims)):
            Ac = A.tocoo()
            for r, c, v in sorted(zip(Ac.row, Ac.col, Ac.data)):
                i, j = divmod(int(c), d)
                if i <= j:
                    lines.append(f"{r + 1} {k + 1} {i} {j} {float(v)!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> SdpProblem:
        m = dims = n_free = rhs = None
        entries, objective = [], []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            head, *rest = line.split()
            try:
                if head == "constraints":
                    m = int(rest[0])
                elif head == "blocks":
                    dims = [int(t) for t in rest]
                elif head == "free":
                    n_free = int(rest[0])
                elif head == "rhs":
                    rhs = [float(t) for t in rest]
                else:
                    r, k, i, j = (int(t) for t in (head, *rest[:3]))
                    v = float(rest[3])
                    blk = k - 1
                    if r == 0:
                        objective.append((blk, i, j, v))
                    else:
                        entries.append((r - 1, blk, i, j, v))
            except (ValueError, IndexError):
                raise SdpFormatError(f"line {lineno}: cannot parse {raw!r}") from None
        if m is None or dims is None or n_free is None:
            raise SdpFormatError("missing header line")
        rhs = rhs if rhs is not None else [0.0] * m
        if len(rhs) != m:
            raise SdpFormatError("rhs length does not match constraint count")
        return cls.from_entries(dims, n_free, rhs, entries, objective)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def read(cls, path: str | Path) -> SdpProblem:
        return cls.from_text(Path(path).read_text())


@dataclass
class SdpSolution:
    X: list[np.ndarray]
    u: np.ndarray
    y: np.ndarray
    Z: list[np.ndarray]
    primal_objective: float
    dual_objective: float
    gap: float
    primal_infeasibility: float
    dual_infeasibility: float
    iterations: int
    status: str
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.status in (OPTIMAL, NEAR_OPTIMAL)

    def diagnostics(self) -> dict:
        return {"status": self.status, "iterations": self.iterations,
                "primal_objective": self.primal_objective,
                "dual_objective": self.dual_objective, "gap": self.gap,
                "primal_infeasibility": self.primal_infeasibility,
                "dual_infeasibility": self.dual_infeasibility, "message": self.message}


def relative_gap(pobj: float, dobj: float) -> float:
    return abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))


# -- presolve ---------------------------------------------------------------

def independent_rows(p: SdpProblem, threshold: float = 1e-10) -> np.ndarray:
    """Indices of a maximal set of linearly independent equality rows.

    Rows owning a column no other row touches are independent of everything
    else, so only the remaining rows go through pivoted QR.
    """
    if p.m == 0:
        return np.arange(0)
    A = p.constraint_matrix().tocsc()
    col_nnz = np.diff(A.indptr)
    private_cols = np.flatnonzero(col_nnz == 1)
    certain = np.zeros(p.m, dtype=bool)
    if private_cols.size:
        sub = A[:, private_cols].tocoo()
        certain[sub.row] = True
    rest = np.flatnonzero(~certain)
    if rest.size == 0:
        return np.arange(p.m)
    R = A.tocsr()[rest]
    cols = np.unique(R.indices)
    R = R[:, cols]
    if cols.size > 2 * rest.size:
        # wide rows: a Gaussian sketch keeps the row rank without densifying R
        omega = np.random.default_rng(0).standard_normal((cols.size, 2 * rest.size))
        dense = np.asarray(R @ omega)
    else:
        dense = R.toarray()
    norms = np.linalg.norm(dense, axis=1)
    nonzero = norms > 0
    keep = []
    if nonzero.any():
        dense = dense[nonzero] / norms[nonzero, None]
        idx = rest[nonzero]
        _, Rq, piv = sla.qr(dense.T, mode="economic", pivoting=True)
        diag = np.abs(np.diag(Rq))
        rank = int(np.sum(diag > threshold * max(1.0, diag[0] if diag.size else 1.0)))
        keep = idx[piv[:rank]]
    # zero rows are dependent (consistent only if b is zero there)
    return np.sort(np.concatenate([np.flatnonzero(certain), np.asarray(keep, dtype=int)]))


# -- interior-point solver --------------------------------------------------

def _nt_scaling(X: np.ndarray, Z: np.ndarray):
    Lx = np.linalg.cholesky(X)
    Lz = np.linalg.cholesky(Z)
    U, d, Vt = np.linalg.svd(Lz.T @ Lx)
    G = Lx @ Vt.T / np.sqrt(d)
    Ginv = (np.sqrt(d)[:, None] * Vt) @ np.linalg.inv(Lx)
    return G, Ginv, d, Lx, Lz


def _max_step(L: np.ndarray, D: np.ndarray) -> float:
    """Largest alpha in (0, inf] with L L^T + alpha D still PSD."""
    M = sla.solve_triangular(L, D, lower=True)
    M = sla.solve_triangular(L, M.T, lower=True)
    lam = np.linalg.eigvalsh(0.5 * (M + M.T))[0]
    return math.inf if lam >= 0 else -1.0 / lam


_SCHUR_CHUNK = 1 << 24  # floats per scratch block


class _SchurBuilder:
    """Assembles M_ij = <A_i, W A_j W> block by block from sparse rows."""

    def __init__(self, p: SdpProblem):
        self.p = p
        self.parts = []
        for A, d in zip(p.A_blocks, p.block_dims):
            A = A.tocsr()
            rows = np.flatnonzero(np.diff(A.indptr))
            sub = A[rows]
            per_row = []
            for k in range(len(rows)):
                lo, hi = sub.indptr[k], sub.indptr[k + 1]
                ii, jj = np.divmod(sub.indices[lo:hi], d)
                per_row.append((ii, jj, sub.data[lo:hi]))
            self.parts.append((rows, sub, per_row, d))

    def build(self, Ws: Sequence[np.ndarray], out: np.ndarray | None = None) -> np.ndarray:
        """Schur matrix, written into the leading m x m corner of ``out`` when given."""
        m = self.p.m
        M = np.zeros((m, m)) if out is None else out[:m, :m]
        M[...] = 0.0
        for (rows, sub, per_row, d), W in zip(self.parts, Ws):
            if rows.size == 0:
                continue
            chunk = max(1, _SCHUR_CHUNK // (d * d))
            for lo in range(0, len(rows), chunk):
                hi = min(lo + chunk, len(rows))
                G = np.empty((hi - lo, d * d))
                for k in range(lo, hi):
                    ii, jj, vals = per_row[k]
                    G[k - lo] = ((W[:, ii] * vals) @ W[jj, :]).reshape(-1)
                M[np.ix_(rows, rows[lo:hi])] += sub @ G.T
        _symmetrize(M)
        return M


def _symmetrize(M: np.ndarray, step: int = 512) -> None:
    """In-place M <- (M + M^T) / 2 without a full-size temporary."""
    m = M.shape[0]
    for i in range(0, m, step):
        j = min(i + step, m)
        d = 0.5 * (M[i:j, i:j] + M[i:j, i:j].T)
        M[i:j, i:j] = d
        a = 0.5 * (M[i:j, j:] + M[j:, i:j].T)
        M[i:j, j:] = a
        M[j:, i:j] = a.T


def solve(p: SdpProblem, tol: float = 1e-8, max_iter: int = 200, step_fraction: float = 0.98,
          presolve: bool = True, verbose: bool = False) -> SdpSolution:
    """Solve ``p`` with a Mehrotra predictor-corrector NT interior-point method.

    Deterministic: the start point depends only on problem norms.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    full = p
    rows = independent_rows(p) if presolve else np.arange(p.m)
    if rows.size < p.m:
        logger.debug("presolve dropped %d dependent rows", p.m - rows.size)
        p = p.select_rows(rows)

    nblk = len(p.block_dims)
    nu = max(1, sum(p.block_dims))
    m, nf = p.m, p.n_free

    if m == 0:
        X = [np.zeros((d, d)) for d in p.block_dims]
        Z = [C.copy() for C in p.C_blocks]
        ok = all(np.linalg.eigvalsh(Zb)[0] >= -tol for Zb in Z) and not np.any(p.c_free)
        return SdpSolution(X, np.zeros(nf), np.zeros(full.m), Z, 0.0, 0.0, 0.0, 0.0, 0.0, 0,
                           OPTIMAL if ok else DUAL_INFEASIBLE, "no constraints")

    # row and objective scaling; reported quantities are unscaled
    Acat = p.constraint_matrix()
    rnorm = np.sqrt(np.asarray(Acat.multiply(Acat).sum(axis=1)).ravel())
    rnorm[rnorm == 0] = 1.0
    Dr = sp.diags(1.0 / rnorm)
    bs = p.b / rnorm
    As = [(Dr @ A).tocsr() for A in p.A_blocks]
    Bs = (Dr @ p.B).tocsr()
    cnorm = max(1.0, max([np.linalg.norm(C) for C in p.C_blocks] + [np.linalg.norm(p.c_free)]))
    sp_ = SdpProblem(p.block_dims, nf, bs, As, Bs, [C / cnorm for C in p.C_blocks],
                     p.c_free / cnorm, p.block_names)

    bnorm = np.linalg.norm(sp_.b)
    Cnorm = math.sqrt(sum(np.linalg.norm(C) ** 2 for C in sp_.C_blocks)
                      + np.linalg.norm(sp_.c_free) ** 2)
    X, Z = [], []
    for k, d in enumerate(p.block_dims):
        Ak = As[k]
        an = np.sqrt(np.asarray(Ak.multiply(Ak).sum(axis=1)).ravel())
        xi = max(10.0, math.sqrt(d), float(np.max((1 + np.abs(bs)) / (1 + an))) if m else 1.0)
        eta = max(10.0, math.sqrt(d), np.linalg.norm(sp_.C_blocks[k]), float(an.max(initial=0)))
        X.append(xi * np.eye(d))
        Z.append(eta * np.eye(d))
    u = np.zeros(nf)
    y = np.zeros(m)

    schur = _SchurBuilder(sp_)
    K = np.zeros((m + nf, m + nf))
    if nf:
        Bd = sp_.B.toarray()
        K[:m, m:] = Bd
        K[m:, :m] = Bd.T
        del Bd
    LU = np.empty_like(K, order="F")
    status, message = FAILED, "iteration limit reached"
    it = 0
    best = None
    history = []

    def measures(X, u, y, Z):
        rp = sp_.b - sp_.apply_A(X, u)
        ATy, BTy = sp_.apply_AT(y)
        Rd = [C - a - z for C, a, z in zip(sp_.C_blocks, ATy, Z)]
        rdu = sp_.c_free - BTy
        pobj = sp_.objective(X, u)
        dobj = float(sp_.b @ y)
        pinf = np.linalg.norm(rp) / (1 + bnorm)
        dinf = math.sqrt(sum(np.linalg.norm(R) ** 2 for R in Rd) + np.linalg.norm(rdu) ** 2) \
            / (1 + Cnorm)
        return rp, Rd, rdu, pobj, dobj, pinf, dinf

    for it in range(max_iter + 1):
        rp, Rd, rdu, pobj, dobj, pinf, dinf = measures(X, u, y, Z)
        gap = relative_gap(pobj, dobj)
        mu = sum(float(np.vdot(a, b)) for a, b in zip(X, Z)) / nu
        score = max(gap, pinf, dinf)
        history.append(score)
        if best is None or score < best[0]:
            best = (score, [x.copy() for x in X], u.copy(), y.copy(), [z.copy() for z in Z])
        if verbose:
            logger.info("it %3d pobj %+.8e dobj %+.8e gap %.1e pinf %.1e dinf %.1e mu %.1e",
                        it, pobj, dobj, gap, pinf, dinf, mu)
        if gap <= tol and pinf <= tol and dinf <= tol:
            status, message = OPTIMAL, "converged"
            break
        # infeasibility certificates
        if dobj > 0:
            ATy, BTy = sp_.apply_AT(y)
            res = math.sqrt(sum(np.linalg.norm(a + z) ** 2 for a, z in zip(ATy, Z))
                            + np.linalg.norm(BTy) ** 2)
            if res / dobj <= tol and dobj > 1e3 * (1 + Cnorm):
                status, message = INFEASIBLE, "primal infeasibility certificate found"
                break
        if pobj < 0:
            res = np.linalg.norm(sp_.apply_A(X, u))
            if res / -pobj <= tol and -pobj > 1e3 * (1 + bnorm):
                status, message = DUAL_INFEASIBLE, "dual infeasibility certificate found"
                break
        if it == max_iter:
            break
        try:
            scal = [_nt_scaling(Xb, Zb) for Xb, Zb in zip(X, Z)]
        except np.linalg.LinAlgError:
            message = "lost positive definiteness"
            break
        Ws = [G @ G.T for G, *_ in scal]
        schur.build(Ws, out=K)
        # Fortran order lets LAPACK factor the reused buffer in place
        LU[...] = K
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            try:
                lu = sla.lu_factor(LU, overwrite_a=True, check_finite=True)
            except (ValueError, sla.LinAlgError):
                message = "Newton system breakdown"
                break
        if not np.all(np.isfinite(lu[0])) or np.min(np.abs(np.diag(lu[0]))) == 0.0:
            lu = None  # singular: fall back to least squares

        def newton_solve(rhs):
            if lu is None:
                return np.linalg.lstsq(K, rhs, rcond=None)[0]
            sol = sla.lu_solve(lu, rhs)
            # one step of iterative refinement
            return sol + sla.lu_solve(lu, rhs - K @ sol)

        WRdW = [W @ R @ W for W, R in zip(Ws, Rd)]

        def direction(Rc):
            h = rp - sp_.apply_A([r - w for r, w in zip(Rc, WRdW)], np.zeros(nf))
            rhs = np.concatenate([h, rdu])
            sol = newton_solve(rhs)
            dy, du = sol[:m], sol[m:]
            ATdy, _ = sp_.apply_AT(dy)
            dZ = [R - a for R, a in zip(Rd, ATdy)]
            dX = [Rc_b - W @ dz @ W for Rc_b, W, dz in zip(Rc, Ws, dZ)]
            dX = [0.5 * (d + d.T) for d in dX]
            return dX, du, dy, dZ

        def steps(dX, dZ):
            ap = min([_max_step(s[3], d) for s, d in zip(scal, dX)] + [math.inf])
            ad = min([_max_step(s[4], d) for s, d in zip(scal, dZ)] + [math.inf])
            return min(1.0, step_fraction * ap), min(1.0, step_fraction * ad)

        # predictor
        dX, du, dy, dZ = direction([-Xb for Xb in X])
        if not all(np.all(np.isfinite(d)) for d in dX):
            message = "non-finite search direction"
            break
        ap, ad = steps(dX, dZ)
        mu_aff = sum(float(np.vdot(Xb + ap * a, Zb + ad * b))
                     for Xb, Zb, a, b in zip(X, Z, dX, dZ)) / nu
        sigma = min(1.0, (mu_aff / mu) ** 3) if mu > 0 else 0.0

        # corrector in the scaled space
        Rc = []
        for (G, Ginv, dd, _, _), a, b in zip(scal, dX, dZ):
            ax = Ginv @ a @ Ginv.T
            bz = G.T @ b @ G
            T = sigma * mu * np.eye(dd.size) - np.diag(dd * dd) - 0.5 * (ax @ bz + bz @ ax)
            R = 2.0 * T / (dd[:, None] + dd[None, :])
            Rc.append(G @ R @ G.T)
        dX, du, dy, dZ = direction(Rc)
        if not all(np.all(np.isfinite(d)) for d in dX):
            message = "non-finite search direction"
            break
        ap, ad = steps(dX, dZ)
        X = [Xb + ap * d for Xb, d in zip(X, dX)]
        u = u + ap * du
        y = y + ad * dy
        Z = [Zb + ad * d for Zb, d in zip(Z, dZ)]
        if max(ap, ad) < 1e-10:
            message = "step length underflow"
            break

    if status == FAILED and best is not None:
        _, X, u, y, Z = best
        rp, Rd, rdu, pobj, dobj, pinf, dinf = measures(X, u, y, Z)
        gap = relative_gap(pobj, dobj)
        loose = max(1e-6, 1e3 * tol)
        if gap <= loose and pinf <= loose and dinf <= loose:
            status = NEAR_OPTIMAL

    # unscale
    y_full = np.zeros(full.m)
    y_full[rows] = y / rnorm * cnorm
    Xo = [0.5 * (Xb + Xb.T) for Xb in X]
    Zo = [0.5 * (Zb + Zb.T) * cnorm for Zb in Z]
    pobj_u = full.objective(Xo, u)
    dobj_u = float(full.b @ y_full)
    sol = SdpSolution(Xo, u, y_full, Zo, pobj_u, dobj_u, relative_gap(pobj_u, dobj_u),
                      float(pinf), float(dinf), it, status, message)
    logger.debug("sdp %s after %d iterations: pobj %.8e dobj %.8e", status, it, pobj_u, dobj_u)
    return sol


@dataclass
class ResidualReport:
    primal_residual: float
    dual_residual: float
    min_eig_X: list[float]
    min_eig_Z: list[float]
    gap: float
    rank_deficient: bool

    def worst(self) -> float:
        return max(self.primal_residual, self.dual_residual,
                   -min(self.min_eig_X + [0.0]), -min(self.min_eig_Z + [0.0]))

    def as_dict(self) -> dict:
        return {"primal_residual": self.primal_residual, "dual_residual": self.dual_residual,
                "min_eig_X": self.min_eig_X, "min_eig_Z": self.min_eig_Z, "gap": self.gap,
                "rank_deficient": self.rank_deficient}


def verify(p: SdpProblem, s: SdpSolution) -> ResidualReport:
    """Recompute residuals from the problem data alone."""
    rp = p.apply_A(s.X, s.u) - p.b
    ATy, BTy = p.apply_AT(s.y)
    dres = [C - a - z for C, a, z in zip(p.C_blocks, ATy, s.Z)]
    dual = max([float(np.max(np.abs(R))) for R in dres if R.size]
               + [float(np.max(np.abs(p.c_free - BTy))) if p.n_free else 0.0, 0.0])
    pobj, dobj = p.objective(s.X, s.u), float(p.b @ s.y)
    return ResidualReport(
        primal_residual=float(np.max(np.abs(rp))) if rp.size else 0.0,
        dual_residual=dual,
        min_eig_X=[float(np.linalg.eigvalsh(Xb)[0]) for Xb in s.X],
        min_eig_Z=[float(np.linalg.eigvalsh(Zb)[0]) for Zb in s.Z],
        gap=relative_gap(pobj, dobj),
        rank_deficient=bool(independent_rows(p).size < p.m),
    )

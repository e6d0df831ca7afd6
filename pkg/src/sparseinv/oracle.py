"""Trajectory-based ground truth for ROA, MPI and attractor sets.

Integration uses an embedded Dormand-Prince 5(4) pair vectorized over many
initial conditions, each with its own step size.  Leaving the constraint
set is detected after every accepted step and the exit time is refined by
bisection on single Runge-Kutta steps from the last inside state.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .poly import PolyVector
from .sysmodel import SystemDef

IN, OUT, UNKNOWN = 1, 0, -1
EXIT_TOL = 1e-9
DEFAULT_HORIZON = 100.0

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


class IntegrationError(RuntimeError):
    def __init__(self, message: str, last_state: np.ndarray | None = None):
        super().__init__(message)
        self.last_state = last_state


Field = Callable[[np.ndarray], np.ndarray]


def _as_field(f: PolyVector | Field) -> Field:
    return f if not isinstance(f, PolyVector) else (lambda x: f(x))


def _dopri_step(f: Field, x: np.ndarray, h: np.ndarray, k1: np.ndarray):
    """One step for a batch; ``h`` has shape (N, 1).  Returns (x_new, err, k_last)."""
    ks = [k1]
    for i in range(1, 7):
        acc = x.copy()
        for a, k in zip(_A[i], ks):
            if a:
                acc += h * a * k
        ks.append(f(acc))
    x_new = acc  # stage 7 is evaluated at the 5th-order solution (FSAL)
    err = h * sum(e * k for e, k in zip(_E, ks) if e)
    return x_new, err, ks[-1]


def rk_fixed(f: PolyVector | Field, x0, t_end: float, n_steps: int) -> np.ndarray:
    """Fixed-step fifth-order Dormand-Prince integration (used for order checks)."""
    fn = _as_field(f)
    x = np.atleast_2d(np.asarray(x0, dtype=float)).copy()
    h = np.full((x.shape[0], 1), t_end / n_steps)
    k = fn(x)
    for _ in range(n_steps):
        x, _, k = _dopri_step(fn, x, h, k)
    return x


@dataclass
class BatchResult:
    """Final states of a batch integration.

    ``exit_time`` is ``inf`` for trajectories that never left the constraint
    set; ``states`` holds the state at ``t_end`` (or at exit) and
    ``samples[j]`` the states at ``t_eval[j]`` (NaN after an exit).
    """

    states: np.ndarray
    exit_time: np.ndarray
    failed: np.ndarray
    samples: np.ndarray
    t_eval: np.ndarray
    steps: int

    @property
    def exited(self) -> np.ndarray:
        return np.isfinite(self.exit_time)


def integrate_batch(f: PolyVector | Field, x0, t_end: float, tol: float = 1e-9,
                    inside: Callable[[np.ndarray], np.ndarray] | None = None,
                    t_eval: Sequence[float] = (), max_steps: int = 1_000_000,
                    h_min: float = 1e-12, backward: bool = False) -> BatchResult:
    """Integrate many initial conditions at once with per-trajectory adaptive steps.

    ``inside(x) -> bool array`` defines the constraint set; when given,
    trajectories stop at their refined exit time.  Negative time is handled
    with ``backward=True``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if t_end < 0:
        raise ValueError("t_end must be nonnegative")
    base = _as_field(f)
    fn = (lambda x: -base(x)) if backward else base
    x = np.atleast_2d(np.asarray(x0, dtype=float)).copy()
    N, n = x.shape
    stops = np.unique(np.concatenate([np.asarray(t_eval, float), [t_end]]))
    if stops.size and stops[0] < 0:
        raise ValueError("t_eval must be nonnegative")
    samples = np.full((len(t_eval), N, n), np.nan)
    eval_index = {float(s): j for j, s in enumerate(t_eval)}
    t = np.zeros(N)
    exit_time = np.full(N, np.inf)
    failed = np.zeros(N, dtype=bool)
    active = np.ones(N, dtype=bool)
    if inside is not None:
        out0 = ~inside(x)
        exit_time[out0] = 0.0
        active &= ~out0
    for j, s in enumerate(t_eval):
        if s == 0:
            samples[j][active] = x[active]
    k = np.zeros_like(x)
    if active.any():
        k[active] = fn(x[active])
    scale0 = tol + tol * np.abs(x).max(axis=1)
    d0 = np.abs(k).max(axis=1)
    h = np.where(d0 > 0, 0.01 * scale0 ** 0.2 / np.maximum(d0, 1e-300), 0.01)
    h = np.clip(h, 1e-6, max(t_end, 1e-6))
    next_stop = np.searchsorted(stops, 0.0, side="right") * np.ones(N, dtype=int)
    done = ~active | (t_end == 0)
    steps = 0
    while True:
        live = np.flatnonzero(~done)
        if live.size == 0:
            break
        steps += 1
        if steps > max_steps:
            failed[live] = True
            break
        target = stops[next_stop[live]]
        hs = np.minimum(h[live], target - t[live])
        hl = hs[:, None]
        xl = x[live]
        xn, err, kn = _dopri_step(fn, xl, hl, k[live])
        sc = tol + tol * np.maximum(np.abs(xl), np.abs(xn))
        en = np.max(np.abs(err) / sc, axis=1)
        en = np.where(np.isfinite(en), en, np.inf)
        ok = en <= 1.0
        fac = np.where(en > 0, 0.9 * np.power(np.maximum(en, 1e-300), -0.2), 5.0)
        fac = np.clip(fac, 0.2, 5.0)
        fac = np.where(ok, fac, np.minimum(fac, 1.0))
        h[live] = hs * fac
        too_small = ~ok & (h[live] < h_min)
        if too_small.any():
            failed[live[too_small]] = True
            done[live[too_small]] = True
        acc = live[ok]
        if acc.size == 0:
            continue
        xa = xn[ok]
        ha = hs[ok]
        if inside is not None:
            left = ~inside(xa)
            if left.any():
                idx = acc[left]
                te, xe = _refine_exit(fn, x[idx], k[idx], ha[left], inside)
                exit_time[idx] = t[idx] + te
                done[idx] = True
                xa[left] = xe
        x[acc] = xa
        k[acc] = kn[ok]
        t[acc] = t[acc] + ha
        reached = np.abs(t[acc] - stops[next_stop[acc]]) <= 1e-12 * max(1.0, t_end)
        for i in acc[reached]:
            if done[i]:
                continue
            t[i] = stops[next_stop[i]]
            j = eval_index.get(float(t[i]))
            if j is not None:
                samples[j, i] = x[i]
            next_stop[i] += 1
            if next_stop[i] >= stops.size:
                done[i] = True
    return BatchResult(x, exit_time, failed, samples, np.asarray(t_eval, float), steps)


def _refine_exit(fn: Field, x: np.ndarray, k: np.ndarray, h: np.ndarray,
                 inside: Callable[[np.ndarray], np.ndarray],
                 tol: float = EXIT_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Bisect the exit time within the last accepted step for each trajectory."""
    lo = np.zeros(len(x))
    hi = h.astype(float).copy()
    x_hi, _, _ = _dopri_step(fn, x, hi[:, None], k)
    while np.max(hi - lo) > tol:
        mid = 0.5 * (lo + hi)
        xm, _, _ = _dopri_step(fn, x, mid[:, None], k)
        ins = inside(xm)
        lo = np.where(ins, mid, lo)
        hi = np.where(ins, hi, mid)
        x_hi = np.where(ins[:, None], x_hi, xm)
    return hi, x_hi


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    exited: bool
    exit_time: float

    def to_csv(self, path: str | Path, names: Sequence[str] | None = None) -> None:
        names = list(names) if names else [f"x{i + 1}" for i in range(self.states.shape[1])]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", *names])
            for t, s in zip(self.times, self.states):
                w.writerow([repr(float(t)), *(repr(float(v)) for v in s)])


def integrate(f: PolyVector | Field, x0, t_end: float, tol: float = 1e-9,
              system: SystemDef | None = None, n_out: int = 201) -> Trajectory:
    """Single trajectory sampled at ``n_out`` uniform times, stopping at the exit of X."""
    inside = (lambda x: system.in_constraints(x, EXIT_TOL)) if system is not None else None
    ts = np.linspace(0.0, t_end, n_out)
    res = integrate_batch(f, np.atleast_2d(x0), t_end, tol, inside, ts)
    if res.failed[0]:
        raise IntegrationError("step size underflow", res.states[0])
    te = float(res.exit_time[0])
    keep = ts <= te if math.isfinite(te) else np.ones_like(ts, dtype=bool)
    times = ts[keep]
    states = res.samples[keep, 0, :]
    if math.isfinite(te):
        times = np.append(times, te)
        states = np.vstack([states, res.states[0]])
    return Trajectory(times, states, math.isfinite(te), te)


# -- sample sets ----------------------------------------------------------------

@dataclass
class SampleSet:
    points: np.ndarray
    labels: np.ndarray
    provenance: dict = field(default_factory=dict)

    @property
    def inside(self) -> np.ndarray:
        return self.points[self.labels == IN]

    def fraction_in(self) -> float:
        return float(np.mean(self.labels == IN)) if self.labels.size else 0.0

    def to_csv(self, path: str | Path, names: Sequence[str] | None = None,
               extra: dict[str, np.ndarray] | None = None) -> None:
        names = list(names) if names else [f"x{i + 1}" for i in range(self.points.shape[1])]
        extra = extra or {}
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([*names, "label", *extra])
            for i, p in enumerate(self.points):
                row = [f"{v:.10g}" for v in p] + [int(self.labels[i])]
                row += [int(v) if isinstance(v, (bool, np.bool_)) else v
                        for v in (col[i] for col in extra.values())]
                w.writerow(row)


def grid_points(box: Sequence[tuple[float, float]], n: int = 41) -> np.ndarray:
    axes = [np.linspace(a, b, n) for a, b in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def section_points(sys_box: Sequence[tuple[float, float]], free: Sequence[int],
                   fixed: dict[int, float], n: int = 41) -> np.ndarray:
    """Grid over the ``free`` coordinates with the others pinned to ``fixed``."""
    g = grid_points([sys_box[i] for i in free], n)
    pts = np.zeros((g.shape[0], len(sys_box)))
    for j, i in enumerate(free):
        pts[:, i] = g[:, j]
    for i, v in fixed.items():
        pts[:, i] = v
    return pts


def uniform_points(box: Sequence[tuple[float, float]], n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    lo = np.array([a for a, _ in box])
    hi = np.array([b for _, b in box])
    return lo + (hi - lo) * rng.random((n, len(box)))


def _labels(res: BatchResult, ok: np.ndarray) -> np.ndarray:
    lab = np.where(ok, IN, OUT)
    lab[res.failed] = UNKNOWN
    return lab


def _chunks(points: np.ndarray, size: int = 4096):
    for s in range(0, len(points), size):
        yield points[s:s + size]


def estimate_mpi(sys: SystemDef, points: np.ndarray, horizon: float = DEFAULT_HORIZON,
                 tol: float = 1e-9) -> SampleSet:
    """Label points "in" when the trajectory stays in X up to ``horizon``."""
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    inside = lambda x: sys.in_constraints(x, EXIT_TOL)  # noqa: E731
    labels = []
    for chunk in _chunks(np.asarray(points, float)):
        res = integrate_batch(sys.f, chunk, horizon, tol, inside)
        labels.append(_labels(res, ~res.exited))
    return SampleSet(np.asarray(points, float), np.concatenate(labels) if labels else
                     np.zeros(0, int), {"kind": "MPI", "horizon": horizon, "tol": tol})


def estimate_roa(sys: SystemDef, points: np.ndarray, T: float | None = None,
                 tol: float = 1e-9) -> SampleSet:
    """Label points "in" when the trajectory stays in X on [0,T] and ends in X_T."""
    T = T if T is not None else sys.horizon
    if T is None or not T > 0:
        raise ValueError("ROA needs a positive horizon")
    if sys.target_blocks is None:
        raise ValueError("ROA needs a target set")
    inside = lambda x: sys.in_constraints(x, EXIT_TOL)  # noqa: E731
    labels = []
    for chunk in _chunks(np.asarray(points, float)):
        res = integrate_batch(sys.f, chunk, T, tol, inside)
        ok = ~res.exited & sys.in_target(res.states, EXIT_TOL)
        labels.append(_labels(res, ok))
    return SampleSet(np.asarray(points, float), np.concatenate(labels) if labels else
                     np.zeros(0, int), {"kind": "ROA", "T": T, "tol": tol})


def estimate_attractor(sys: SystemDef, points: np.ndarray, t_burn: float, t_sample: float,
                       n_per_traj: int = 10, tol: float = 1e-9) -> SampleSet:
    """Post-burn-in states of trajectories that survive in X until ``t_sample``."""
    if not 0 <= t_burn < t_sample:
        raise ValueError("need 0 <= t_burn < t_sample")
    inside = lambda x: sys.in_constraints(x, EXIT_TOL)  # noqa: E731
    ts = np.linspace(t_burn, t_sample, n_per_traj)
    clouds = []
    for chunk in _chunks(np.asarray(points, float)):
        res = integrate_batch(sys.f, chunk, t_sample, tol, inside, ts)
        keep = ~res.exited & ~res.failed
        clouds.append(res.samples[:, keep, :].reshape(-1, sys.n))
    cloud = np.concatenate(clouds) if clouds else np.zeros((0, sys.n))
    return SampleSet(cloud, np.full(len(cloud), IN),
                     {"kind": "GA", "t_burn": t_burn, "t_sample": t_sample, "tol": tol})


def backward_reachable_samples(sys: SystemDef, n: int, T: float | None = None, seed: int = 0,
                               tol: float = 1e-9) -> np.ndarray:
    """Points of the finite-horizon ROA obtained by integrating target samples backward.

    Useful when the ROA is a thin sliver of X that uniform sampling misses.
    """
    T = T if T is not None else sys.horizon
    tbox = []
    for i in range(sys.n):
        for b in sys.targets:
            if i in b.box:
                tbox.append(b.box[i])
    starts = uniform_points(tbox, n, seed)
    starts = starts[sys.in_target(starts)]
    res = integrate_batch(sys.f, starts, T, tol, lambda x: sys.in_constraints(x, EXIT_TOL),
                          backward=True)
    keep = ~res.exited & ~res.failed
    return res.states[keep]


# -- discrepancies ----------------------------------------------------------------

@dataclass(frozen=True)
class Estimate:
    value: float
    low: float
    high: float
    n_samples: int

    def as_dict(self) -> dict:
        return {"value": self.value, "ci95": [self.low, self.high], "n_samples": self.n_samples}


def dlambda_estimate(a: Callable[[np.ndarray], np.ndarray], b: Callable[[np.ndarray], np.ndarray],
                     box: Sequence[tuple[float, float]], n_samples: int = 10000,
                     seed: int = 0) -> Estimate:
    """Monte-Carlo estimate of the Lebesgue measure of the symmetric difference."""
    if n_samples < 100:
        raise ValueError("need at least 100 samples")
    pts = uniform_points(box, n_samples, seed)
    diff = np.asarray(a(pts), bool) ^ np.asarray(b(pts), bool)
    vol = float(np.prod([hi - lo for lo, hi in box]))
    p = float(diff.mean())
    half = 1.96 * math.sqrt(max(p * (1 - p), 0.0) / n_samples)
    if p == 0.0:
        # rule of three for an empty sample
        return Estimate(0.0, 0.0, vol * 3.0 / n_samples, n_samples)
    return Estimate(vol * p, vol * max(0.0, p - half), vol * min(1.0, p + half), n_samples)


def hausdorff(a: np.ndarray, b: np.ndarray) -> float:
    """Symmetric Hausdorff distance between two finite point clouds."""
    a, b = np.atleast_2d(a), np.atleast_2d(b)
    if len(a) == 0 or len(b) == 0:
        return 0.0 if len(a) == len(b) else math.inf
    dab = cKDTree(b).query(a)[0].max()
    dba = cKDTree(a).query(b)[0].max()
    return float(max(dab, dba))

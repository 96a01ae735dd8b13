"""Flows, lifted transport for Frobenius and Darboux systems, holonomy and rescaling."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from . import exprlang as el
from .errors import (DomainError, LoopNotClosed, NotInvolutive, NotRich, StepFailure)
from .exprlang import Coords, ScalarField
from .geometry import PartialFrame, VectorField, complete_frame

ODE_TOL = 1e-10
SHOOT_TOL = 1e-9
SHOOT_MAXIT = 50
GRID_N = 17


# ---------------------------------------------------------------- ODE core

def _rk4(f, y, h):
    k1 = f(y)
    k2 = f(y + 0.5 * h * k1)
    k3 = f(y + 0.5 * h * k2)
    k4 = f(y + h * k3)
    return y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate_autonomous(f: Callable, y0: np.ndarray, T: float, tol: float = ODE_TOL) -> np.ndarray:
    """Solve y' = f(y) over [0, T] by RK4 with step-doubling error control.

    y0 may be a batch of shape (N, d); the step is shared across the batch.
    """
    y = np.array(y0, dtype=float)
    if T == 0.0:
        return y
    if not np.all(np.isfinite(y)) or not np.all(np.isfinite(f(y))):
        raise DomainError("start point outside the domain of the vector field")
    sign = 1.0 if T > 0 else -1.0
    total = abs(T)
    t = 0.0
    h = min(total, 0.05)
    hmin = 1e-13 * max(1.0, total)
    while t < total:
        h = min(h, total - t)
        y1 = _rk4(f, y, sign * h)
        ym = _rk4(f, y, 0.5 * sign * h)
        y2 = _rk4(f, ym, 0.5 * sign * h)
        if not (np.all(np.isfinite(y1)) and np.all(np.isfinite(y2))):
            h *= 0.25
            if h < hmin:
                raise DomainError("trajectory leaves the domain")
            continue
        err = float(np.max(np.abs(y2 - y1))) / 15.0
        scale = 1.0 + float(np.max(np.abs(y2)))
        if err <= tol * scale:
            y = y2 + (y2 - y1) / 15.0
            t += h
            fac = 4.0 if err == 0 else min(4.0, 0.9 * (tol * scale / err) ** 0.2)
            h *= max(fac, 1.0)
        else:
            h *= max(0.1, 0.9 * (tol * scale / err) ** 0.2)
            if h < hmin:
                raise StepFailure(f"step size underflow at t = {t}")
    return y


class _Evaluator:
    """Compiled evaluation of a list of fields at batches of points."""

    def __init__(self, fields: Sequence[ScalarField]):
        self.nodes = [f.node for f in fields]
        self.func = el.compile_nodes(self.nodes)

    def __call__(self, Y: np.ndarray) -> np.ndarray:
        Y = np.atleast_2d(Y)
        cols = [Y[:, k] for k in range(Y.shape[1])]
        with np.errstate(all="ignore"):
            vals = self.func(cols)
        out = np.empty((Y.shape[0], len(self.nodes)))
        for j, v in enumerate(vals):
            out[:, j] = v
        out[~np.isfinite(out)] = np.nan
        return out


# ---------------------------------------------------------------- systems and data

@dataclass(frozen=True)
class FrobeniusSystem:
    """r_j(phi^i) = h^i_j(u, phi); rhs[i][j] lives on coords extended by the unknowns."""
    fields: tuple
    unknowns: tuple
    rhs: tuple

    def __init__(self, fields: Sequence[VectorField], unknowns: Sequence[str], rhs):
        fields = tuple(fields)
        unknowns = tuple(unknowns)
        coords = fields[0].coords
        ext = coords.extend(unknowns)
        rows = []
        for i in range(len(unknowns)):
            row = []
            for j in range(len(fields)):
                h = rhs[i][j]
                if isinstance(h, (int, float)):
                    h = ScalarField.constant(float(h), ext)
                elif isinstance(h, str):
                    h = el.parse(h, ext)
                elif h.coords == coords:
                    h = h.rebase(ext)
                elif h.coords != ext:
                    raise ValueError("right-hand side uses undeclared coordinates")
                row.append(h)
            rows.append(tuple(row))
        if len(fields) > coords.dim:
            raise ValueError("more fields than dimensions")
        object.__setattr__(self, "fields", fields)
        object.__setattr__(self, "unknowns", unknowns)
        object.__setattr__(self, "rhs", tuple(rows))

    @property
    def coords(self) -> Coords:
        return self.fields[0].coords

    @property
    def ext_coords(self) -> Coords:
        return self.coords.extend(self.unknowns)

    @property
    def n(self) -> int:
        return self.coords.dim

    @property
    def m(self) -> int:
        return len(self.fields)

    @property
    def p(self) -> int:
        return len(self.unknowns)

    def lifted(self) -> "_Lifted":
        return _Lifted(self)


class _Lifted:
    """Evaluator of the lifted fields s_j = r_j + sum_i h^i_j d/dphi^i."""

    def __init__(self, sys: FrobeniusSystem):
        self.n, self.m, self.p = sys.n, sys.m, sys.p
        ext = sys.ext_coords
        comps = [c.rebase(ext) for r in sys.fields for c in r.components]
        comps += [sys.rhs[i][j] for j in range(self.m) for i in range(self.p)]
        self.ev = _Evaluator(comps)

    def __call__(self, Z: np.ndarray, a: np.ndarray) -> np.ndarray:
        vals = self.ev(Z)
        N = vals.shape[0]
        n, m, p = self.n, self.m, self.p
        R = vals[:, : n * m].reshape(N, m, n)
        H = vals[:, n * m:].reshape(N, m, p)
        return np.concatenate([np.einsum("j,Njk->Nk", a, R), np.einsum("j,Njk->Nk", a, H)], axis=1)


@dataclass(frozen=True)
class DataSlice:
    """Coordinate slice through a basepoint; ``free`` lists the coordinates left free."""
    free: tuple
    basepoint: tuple
    data: tuple = ()

    def __init__(self, free: Sequence[int], basepoint, data: Sequence[ScalarField] = ()):
        bp = tuple(float(x) for x in np.asarray(basepoint, dtype=float).reshape(-1))
        free = tuple(sorted(int(k) for k in free))
        if any(not 0 <= k < len(bp) for k in free):
            raise ValueError("free coordinate index out of range")
        object.__setattr__(self, "free", free)
        object.__setattr__(self, "basepoint", bp)
        object.__setattr__(self, "data", tuple(data))

    @property
    def fixed(self) -> tuple:
        return tuple(k for k in range(len(self.basepoint)) if k not in self.free)

    def point(self, sigma) -> np.ndarray:
        """Slice points from free-coordinate values; sigma has shape (..., len(free))."""
        sigma = np.asarray(sigma, dtype=float)
        out = np.broadcast_to(np.asarray(self.basepoint), sigma.shape[:-1] + (len(self.basepoint),)).copy()
        out[..., list(self.free)] = sigma
        return out

    def contains(self, p, tol: float = 1e-12) -> bool:
        p = np.asarray(p, dtype=float)
        bp = np.asarray(self.basepoint)
        return all(abs(p[k] - bp[k]) <= tol * max(1.0, abs(bp[k])) for k in self.fixed)

    def transversal(self, fields: Sequence[VectorField]) -> bool:
        bp = np.asarray(self.basepoint)
        n = bp.shape[0]
        cols = [f.eval(bp) for f in fields] + [np.eye(n)[k] for k in self.free]
        M = np.column_stack(cols)
        sv = np.linalg.svd(M, compute_uv=False)
        return M.shape[1] >= n and sv[n - 1] > 1e-7 * sv[0]

    def values(self, pts: np.ndarray) -> np.ndarray:
        if not self.data:
            return np.zeros((np.atleast_2d(pts).shape[0], 0))
        return el.eval_fields(list(self.data), np.atleast_2d(pts))


def slice_for(fields: Sequence[VectorField], basepoint, data=()) -> DataSlice:
    """Coordinate slice transversal to the fields: fixes the rows of the dominant minor."""
    bp = np.asarray(basepoint, dtype=float)
    n = bp.shape[0]
    M = np.column_stack([f.eval(bp) for f in fields])
    k = M.shape[1]
    best, best_val = None, -1.0
    for rows in itertools.combinations(range(n), k):
        val = abs(np.linalg.det(M[list(rows), :]))
        if val > best_val * (1 + 1e-12) + 1e-300:
            best, best_val = rows, val
    return DataSlice([i for i in range(n) if i not in best], bp, data)


@dataclass(frozen=True)
class PathSpec:
    """Piecewise-constant controls: each segment is (field index or coefficients, duration)."""
    segments: tuple
    start: tuple
    loop: bool = False

    def __init__(self, segments, start, loop: bool = False):
        segs = []
        for ctrl, dur in segments:
            if dur <= 0:
                raise ValueError("segment durations must be positive")
            ctrl = int(ctrl) if isinstance(ctrl, (int, np.integer)) else tuple(float(x) for x in ctrl)
            segs.append((ctrl, float(dur)))
        object.__setattr__(self, "segments", tuple(segs))
        object.__setattr__(self, "start", tuple(float(x) for x in np.asarray(start, float).reshape(-1)))
        object.__setattr__(self, "loop", bool(loop))

    def coefficients(self, m: int) -> list[tuple[np.ndarray, float]]:
        out = []
        for ctrl, dur in self.segments:
            if isinstance(ctrl, int):
                if not 0 <= ctrl < m:
                    raise ValueError(f"field index {ctrl} out of range")
                a = np.zeros(m)
                a[ctrl] = 1.0
            else:
                a = np.asarray(ctrl, dtype=float)
                if a.shape != (m,):
                    raise ValueError("coefficient vector has the wrong length")
            out.append((a, dur))
        if self.loop:
            net = sum(a * dur for a, dur in out)
            if np.max(np.abs(net)) > 1e-12:
                raise ValueError("loop controls do not close in control space")
        return out


def staircase(times: Sequence[float], start, order: Sequence[int] | None = None) -> PathSpec:
    """Flow along r_j for times[j], in the given order; negative times reverse the field."""
    m = len(times)
    order = range(m) if order is None else order
    segs = []
    for j in order:
        t = float(times[j])
        if t == 0.0:
            continue
        a = np.zeros(m)
        a[j] = 1.0 if t > 0 else -1.0
        segs.append((tuple(a), abs(t)))
    return PathSpec(segs, start)


# ---------------------------------------------------------------- operations

def flow(r: VectorField, p, eps: float, tol: float = ODE_TOL) -> np.ndarray:
    ev = _Evaluator(list(r.components))
    y = integrate_autonomous(ev, np.asarray(p, dtype=float)[None, :], float(eps), tol)
    return y[0]


def _run_path(lift: _Lifted, Z0: np.ndarray, path_coeffs, tol: float = ODE_TOL) -> np.ndarray:
    Z = Z0
    for a, dur in path_coeffs:
        Z = integrate_autonomous(lambda Y, a=a: lift(Y, a), Z, dur, tol)
    return Z


def transport(sys: FrobeniusSystem, data: DataSlice, path: PathSpec,
              tol: float = ODE_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Integrate the lifted ODE from the path start; returns (endpoint, phi values)."""
    start = np.asarray(path.start)
    if not data.contains(start):
        raise ValueError("path start is not on the data slice")
    phi0 = data.values(start)[0]
    if phi0.shape[0] != sys.p:
        raise ValueError("slice data does not match the number of unknowns")
    if not np.all(np.isfinite(phi0)):
        raise DomainError("slice data undefined at the path start")
    Z0 = np.concatenate([start, phi0])[None, :]
    Z = _run_path(sys.lifted(), Z0, path.coefficients(sys.m), tol)[0]
    return Z[: sys.n], Z[sys.n:]


def holonomy_residual(sys: FrobeniusSystem, data: DataSlice, loop: PathSpec,
                      tol: float = ODE_TOL) -> float:
    end, phi = transport(sys, data, loop, tol)
    start = np.asarray(loop.start)
    gap = float(np.max(np.abs(end - start)))
    if gap > 1e-9:
        raise LoopNotClosed(f"loop endpoint misses the start by {gap:.3e}")
    return float(np.linalg.norm(phi - data.values(start)[0]))


def square_loop(i: int, j: int, m: int, side: float, start) -> PathSpec:
    e = np.eye(m)
    segs = [(tuple(e[i]), side), (tuple(e[j]), side), (tuple(-e[i]), side), (tuple(-e[j]), side)]
    return PathSpec(segs, start, loop=True)


def integrability_expressions(sys: FrobeniusSystem, fr) -> list[ScalarField]:
    """Expanded conditions on coords extended by the unknowns, per unknown then field pair.

    ``fr`` is a completed frame whose first m fields are sys.fields.
    """
    n, m, p = sys.n, sys.m, sys.p
    c = fr.tensors.c
    ext = sys.ext_coords
    R = [[comp.rebase(ext) for comp in r.components] for r in sys.fields]
    h = sys.rhs

    def r_of(j, f):
        out = ScalarField.constant(0.0, ext)
        for a in range(n):
            out = out + R[j][a] * f.derive(a)
        return out

    exprs = []
    for i in range(p):
        for j, k in itertools.combinations(range(m), 2):
            e = r_of(j, h[i][k]) - r_of(k, h[i][j])
            for q in range(p):
                e = e + h[i][k].derive(n + q) * h[q][j] - h[i][j].derive(n + q) * h[q][k]
            # components along completion fields vanish for involutive fields
            for l in range(m):
                e = e - c[j][k][l].rebase(ext) * h[i][l]
            exprs.append(e)
    return exprs


def integrability_residual(sys: FrobeniusSystem, reg, phi_half_width: float = 1.0,
                           tol: float = 1e-8) -> float:
    """Max over the region (and a box of unknown values) of the expanded conditions."""
    from .classify import involutivity_report  # local to avoid a cycle
    p = sys.p
    if sys.m == 1:
        return 0.0
    pf = PartialFrame(sys.fields, reg.center)
    if not involutivity_report(pf, reg, tol).holds:
        raise NotInvolutive("fields are not in involution")
    exprs = integrability_expressions(sys, complete_frame(pf))
    pts_u = reg.points()
    rng = np.random.default_rng(reg.seed + 1)
    phis = rng.uniform(-phi_half_width, phi_half_width, size=(pts_u.shape[0], p))
    vals = el.eval_fields(exprs, np.hstack([pts_u, phis]))
    ok = np.all(np.isfinite(vals), axis=1)
    if ok.sum() * 2 < ok.shape[0]:
        raise DomainError("most sample points are outside the domain")
    return float(np.max(np.abs(vals[ok]))) if vals.shape[1] else 0.0


# ---------------------------------------------------------------- shooting

def _endpoints(u_lift: _Lifted, sl: DataSlice, X: np.ndarray, order, m: int) -> np.ndarray:
    """Endpoints of staircases: X = (sigma, t) per row."""
    k = len(sl.free)
    Z = sl.point(X[:, :k])
    for j in order:
        t = X[:, k + j]
        a = np.zeros(m)
        a[j] = 1.0
        # scale time per row: integrate y' = t * r_j(y) over [0, 1]
        Z = integrate_autonomous(lambda Y, a=a, t=t: t[:, None] * u_lift(Y, a), Z, 1.0)
    return Z


def shoot(fields: Sequence[VectorField], sl: DataSlice, targets: np.ndarray,
          order: Sequence[int] | None = None) -> np.ndarray:
    """Newton on (slice coordinates, flow times) so staircases end at the targets.

    Returns X of shape (N, n) with X = (sigma, t).
    """
    fields = list(fields)
    m = len(fields)
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    N, n = targets.shape
    k = len(sl.free)
    if k + m != n:
        raise ValueError("slice dimension plus field count must equal the ambient dimension")
    order = list(range(m)) if order is None else list(order)
    lift = _Lifted(FrobeniusSystem(fields, (), []))
    bp = np.asarray(sl.basepoint)
    B = np.column_stack([np.eye(n)[q] for q in sl.free] + [f.eval(bp) for f in fields])
    X = np.linalg.solve(B, (targets - bp).T).T
    X[:, :k] += bp[list(sl.free)]
    for _ in range(SHOOT_MAXIT):
        E = _endpoints(lift, sl, X, order, m)
        res = E - targets
        if np.max(np.abs(res)) < SHOOT_TOL:
            return X
        J = np.empty((N, n, n))
        hs = 1e-6
        for q in range(n):
            Xp = X.copy()
            Xm = X.copy()
            Xp[:, q] += hs
            Xm[:, q] -= hs
            J[:, :, q] = (_endpoints(lift, sl, Xp, order, m) - _endpoints(lift, sl, Xm, order, m)) / (2 * hs)
        X = X - np.linalg.solve(J, res[:, :, None])[:, :, 0]
    E = _endpoints(lift, sl, X, order, m)
    if np.max(np.abs(E - targets)) < SHOOT_TOL:
        return X
    raise StepFailure("shooting did not reach the targets")


def transport_to(sys: FrobeniusSystem, sl: DataSlice, targets, order=None) -> np.ndarray:
    """Values of the unknowns at targets, reached by staircases from the slice."""
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    m = sys.m
    order = list(range(m)) if order is None else list(order)
    X = shoot(sys.fields, sl, targets, order)
    k = len(sl.free)
    lift = sys.lifted()
    Z = np.hstack([sl.point(X[:, :k]), sl.values(sl.point(X[:, :k]))])
    for j in order:
        t = X[:, k + j]
        a = np.zeros(m)
        a[j] = 1.0
        Z = integrate_autonomous(lambda Y, a=a, t=t: t[:, None] * lift(Y, a), Z, 1.0)
    return Z[:, sys.n:]


# ---------------------------------------------------------------- Darboux staging

@dataclass(frozen=True)
class DarbouxStage:
    """One unknown transported along a subset of the fields from its own slice."""
    name: str
    directions: tuple
    rhs: tuple          # one ScalarField per direction, in base coordinates
    slice: DataSlice


def darboux_transport(fields: Sequence[VectorField], stages: Sequence[DarbouxStage],
                      targets) -> np.ndarray:
    """Solve decoupled Darboux stages; returns (N, len(stages))."""
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    out = np.empty((targets.shape[0], len(stages)))
    for s, st in enumerate(stages):
        sub = [fields[d] for d in st.directions]
        sys = FrobeniusSystem(sub, (st.name,), [list(st.rhs)])
        out[:, s] = transport_to(sys, st.slice, targets)[:, 0]
    return out


# ---------------------------------------------------------------- commuting rescale

class GridField:
    """Scalar function known on a tensor grid; cubic interpolation between nodes."""

    def __init__(self, axes: Sequence[np.ndarray], values: np.ndarray, exact: Callable):
        self.axes = tuple(np.asarray(a) for a in axes)
        self.values = values
        self._interp = RegularGridInterpolator(self.axes, values, method="cubic")
        self._exact = exact

    def __call__(self, points) -> np.ndarray:
        return self._interp(np.atleast_2d(points))

    def eval(self, point) -> float:
        return float(self(point)[0])

    def exact(self, points) -> np.ndarray:
        """Recompute by transport instead of interpolation."""
        return self._exact(np.atleast_2d(points))


def rescaling_stages(pf: PartialFrame) -> list[DarbouxStage]:
    """r_j(beta^i) = c^i_{ij} for j != i, data beta^i = 0 on a slice transversal to {r_j}."""
    m = pf.m
    fr = complete_frame(pf)
    c = fr.tensors.c
    stages = []
    for i in range(m):
        dirs = tuple(j for j in range(m) if j != i)
        rhs = tuple(c[i][j][i] for j in dirs)
        sl = slice_for([pf[j] for j in dirs], pf.basepoint,
                       [ScalarField.constant(0.0, pf.coords)])
        stages.append(DarbouxStage(f"beta{i + 1}", dirs, rhs, sl))
    return stages


def rescale_commuting(pf: PartialFrame, reg, grid_n: int = GRID_N,
                      tol: float = 1e-8) -> list:
    """Positive alpha^i with [alpha^i r_i, alpha^j r_j] = 0, as grid-backed fields."""
    from .classify import richness_report
    if not richness_report(pf, reg, tol).holds:
        raise NotRich("commuting rescaling needs a rich frame")
    if grid_n < 4:
        raise ValueError("cubic interpolation needs at least 4 nodes per axis")
    m = pf.m
    c0 = np.asarray(reg.center)
    axes = [np.linspace(x - reg.half_width, x + reg.half_width, grid_n) for x in c0]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    pts = mesh.reshape(-1, c0.shape[0])
    if m == 1:
        def one(q):
            return np.ones(np.atleast_2d(q).shape[0])
        return [GridField(axes, np.ones(mesh.shape[:-1]), one)]
    stages = rescaling_stages(pf)
    out = []
    for st in stages:
        def exact(q, st=st):
            return np.exp(darboux_transport(pf.fields, [st], q)[:, 0])
        vals = exact(pts).reshape(mesh.shape[:-1])
        out.append(GridField(axes, vals, exact))
    return out

"""Vector fields, frames, brackets and the flat connection of the affine chart."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from . import exprlang as el
from .errors import DegenerateFrame, DomainError
from .exprlang import Coords, ScalarField, parse

RANK_TOL = 1e-7


class VectorField:
    """Column of n scalar fields in the fixed affine coordinates."""

    __slots__ = ("components", "coords")

    def __init__(self, components: Sequence[ScalarField], coords: Coords | None = None):
        comps = tuple(components)
        if coords is None:
            coords = comps[0].coords
        if len(comps) != coords.dim:
            raise ValueError(f"expected {coords.dim} components, got {len(comps)}")
        for c in comps:
            if c.coords != coords:
                raise ValueError("components must share coordinates")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "coords", coords)

    def __setattr__(self, key, value):
        raise AttributeError("VectorField is immutable")

    @staticmethod
    def parse(texts: Sequence[str], coords: Coords) -> "VectorField":
        return VectorField([parse(t, coords) for t in texts], coords)

    @staticmethod
    def coordinate(k: int, coords: Coords) -> "VectorField":
        return VectorField([ScalarField.constant(1.0 if i == k else 0.0, coords)
                            for i in range(coords.dim)], coords)

    @property
    def dim(self) -> int:
        return self.coords.dim

    def __getitem__(self, k) -> ScalarField:
        return self.components[k]

    def __iter__(self):
        return iter(self.components)

    def __add__(self, o: "VectorField") -> "VectorField":
        return VectorField([a + b for a, b in zip(self, o)], self.coords)

    def __sub__(self, o: "VectorField") -> "VectorField":
        return VectorField([a - b for a, b in zip(self, o)], self.coords)

    def __neg__(self) -> "VectorField":
        return VectorField([-a for a in self], self.coords)

    def scale(self, f) -> "VectorField":
        return VectorField([f * a for a in self], self.coords)

    def is_zero(self) -> bool:
        return all(c.is_zero() for c in self.components)

    def eval(self, point) -> np.ndarray:
        return eval_vf(self, point)

    def eval_many(self, points) -> np.ndarray:
        return el.eval_fields(list(self.components), points)

    def __str__(self):
        return "[" + ", ".join(str(c) for c in self.components) + "]"

    __repr__ = __str__


def eval_vf(r: VectorField, p) -> np.ndarray:
    vals = r.eval_many(np.asarray(p, dtype=float)[None, :])[0]
    if not np.all(np.isfinite(vals)):
        raise DomainError(f"{r} is undefined at {tuple(np.asarray(p, float).tolist())}")
    return vals


def directional(r: VectorField, f: ScalarField) -> ScalarField:
    """r(f) = sum_k R^k df/du^k."""
    if r.coords != f.coords:
        raise ValueError("field and function live on different coordinates")
    node = el.ZERO
    for k, rk in enumerate(r.components):
        dk = el.d(f.node, k)
        if el._is(dk, 0.0) or rk.is_zero():
            continue
        node = el.add(node, el.mul(rk.node, dk))
    return ScalarField(node, f.coords)


def covariant(r: VectorField, s: VectorField) -> VectorField:
    """Flat connection of the chart: components r(S^k)."""
    return VectorField([directional(r, sk) for sk in s.components], s.coords)


def bracket(r: VectorField, s: VectorField) -> VectorField:
    return VectorField([directional(r, sk) - directional(s, rk)
                        for rk, sk in zip(r.components, s.components)], r.coords)


# ---------------------------------------------------------------- frames

def _matrix_at(fields: Sequence[VectorField], point) -> np.ndarray:
    return np.column_stack([eval_vf(f, point) for f in fields])


@dataclass(frozen=True)
class PartialFrame:
    fields: tuple
    basepoint: np.ndarray = field(compare=False)

    def __init__(self, fields: Sequence[VectorField], basepoint):
        fields = tuple(fields)
        if not fields:
            raise ValueError("a partial frame needs at least one field")
        coords = fields[0].coords
        for f in fields:
            if f.coords != coords:
                raise ValueError("frame fields must share coordinates")
        bp = np.asarray(basepoint, dtype=float).reshape(-1)
        if bp.shape[0] != coords.dim:
            raise ValueError("basepoint dimension mismatch")
        if len(fields) > coords.dim:
            raise ValueError("more fields than the ambient dimension")
        object.__setattr__(self, "fields", fields)
        object.__setattr__(self, "basepoint", bp)
        sv = np.linalg.svd(_matrix_at(fields, bp), compute_uv=False)
        if sv[-1] <= RANK_TOL * max(sv[0], 1e-300):
            raise DegenerateFrame(f"fields are dependent at the basepoint (singular values {sv})")

    @property
    def coords(self) -> Coords:
        return self.fields[0].coords

    @property
    def dim(self) -> int:
        return self.coords.dim

    @property
    def m(self) -> int:
        return len(self.fields)

    def __getitem__(self, i) -> VectorField:
        return self.fields[i]

    def __len__(self):
        return len(self.fields)

    def matrix_at(self, point) -> np.ndarray:
        return _matrix_at(self.fields, point)

    def with_basepoint(self, bp) -> "PartialFrame":
        return type(self)(self.fields, bp)


class Frame(PartialFrame):
    """Partial frame with m = n; caches the symbolic inverse data."""

    def __init__(self, fields: Sequence[VectorField], basepoint):
        super().__init__(fields, basepoint)
        if self.m != self.dim:
            raise ValueError("a frame needs exactly n fields")

    @cached_property
    def _cramer(self):
        n = self.dim
        if n > 4:
            return None
        A = [[self.fields[j].components[i].node for j in range(n)] for i in range(n)]
        det = _det(A)
        adj = [[_cofactor(A, j, i) for j in range(n)] for i in range(n)]
        return det, adj

    @cached_property
    def det(self) -> ScalarField:
        n = self.dim
        A = [[self.fields[j].components[i].node for j in range(n)] for i in range(n)]
        return ScalarField(_det(A), self.coords)

    @cached_property
    def tensors(self) -> "FrameTensors":
        return _frame_tensors(self)


def _minor(A, rows, cols):
    return [[A[r][c] for c in cols] for r in rows]


def _det(A) -> el.Node:
    n = len(A)
    if n == 1:
        return A[0][0]
    if n == 2:
        return el.sub(el.mul(A[0][0], A[1][1]), el.mul(A[0][1], A[1][0]))
    total = el.ZERO
    for j in range(n):
        if el._is(A[0][j], 0.0):
            continue
        sub = _minor(A, range(1, n), [c for c in range(n) if c != j])
        term = el.mul(A[0][j], _det(sub))
        total = el.add(total, term) if j % 2 == 0 else el.sub(total, term)
    return total


def _cofactor(A, i, j) -> el.Node:
    n = len(A)
    if n == 1:
        return el.ONE
    sub = _minor(A, [r for r in range(n) if r != i], [c for c in range(n) if c != j])
    m = _det(sub)
    return m if (i + j) % 2 == 0 else el.neg(m)


def complete_frame(pf: PartialFrame) -> Frame:
    """Adjoin coordinate fields complementary to the dominant m x m minor."""
    if isinstance(pf, Frame):
        return pf
    n, m = pf.dim, pf.m
    if m == n:
        return Frame(pf.fields, pf.basepoint)
    M = pf.matrix_at(pf.basepoint)
    best = None
    best_val = -1.0
    for rows in itertools.combinations(range(n), m):
        val = abs(np.linalg.det(M[list(rows), :]))
        # strict comparison keeps the lexicographically first among ties
        if val > best_val * (1 + 1e-12) + 1e-300:
            best, best_val = rows, val
    sv = np.linalg.svd(M, compute_uv=False)
    if sv[-1] <= RANK_TOL * sv[0]:
        raise DegenerateFrame("partial frame is degenerate at the basepoint")
    extra = [VectorField.coordinate(k, pf.coords) for k in range(n) if k not in best]
    return Frame(tuple(pf.fields) + tuple(extra), pf.basepoint)


def frame_coefficients(fr: Frame, x: VectorField) -> list[ScalarField]:
    """Coefficients X^k with x = sum_k X^k r_k."""
    n = fr.dim
    cram = fr._cramer
    if cram is not None:
        det, adj = cram
        out = []
        for k in range(n):
            num = el.ZERO
            for j in range(n):
                if el._is(adj[k][j], 0.0) or x.components[j].is_zero():
                    continue
                num = el.add(num, el.mul(adj[k][j], x.components[j].node))
            out.append(ScalarField(el.div(num, det), fr.coords))
        return out
    A = [fr.fields[j].components[i].node for i in range(n) for j in range(n)]
    b = [c.node for c in x.components]
    return [ScalarField(el.solve_node(A, b, k), fr.coords) for k in range(n)]


@dataclass(frozen=True)
class FrameTensors:
    """c[i][j][k] and gamma[i][j][k], zero-based, relative to ``frame``."""
    c: tuple
    gamma: tuple
    frame: Frame


def _frame_tensors(fr: Frame) -> FrameTensors:
    n = fr.dim
    zero = ScalarField.constant(0.0, fr.coords)
    gamma = [[frame_coefficients(fr, covariant(fr[i], fr[j])) for j in range(n)] for i in range(n)]
    c = [[None] * n for _ in range(n)]
    for i in range(n):
        c[i][i] = [zero] * n
        for j in range(i + 1, n):
            cij = frame_coefficients(fr, bracket(fr[i], fr[j]))
            c[i][j] = cij
            c[j][i] = [-x for x in cij]
    return FrameTensors(tuple(tuple(tuple(r) for r in row) for row in c),
                        tuple(tuple(tuple(r) for r in row) for row in gamma), fr)


def frame_tensors(fr: Frame) -> FrameTensors:
    return fr.tensors


# ---------------------------------------------------------------- identities

def symmetry_residuals(t: FrameTensors) -> list[ScalarField]:
    n = t.frame.dim
    return [t.gamma[i][j][k] - t.gamma[j][i][k] - t.c[i][j][k]
            for i in range(n) for j in range(n) for k in range(n)]


def flatness_residuals(t: FrameTensors) -> list[ScalarField]:
    fr, G, c = t.frame, t.gamma, t.c
    n = fr.dim
    out = []
    for s in range(n):
        for k in range(n):
            if k == s:
                continue
            for i in range(n):
                for j in range(n):
                    lhs = directional(fr[s], G[k][i][j]) - directional(fr[k], G[s][i][j])
                    rhs = ScalarField.constant(0.0, fr.coords)
                    for l in range(n):
                        rhs = rhs + G[k][l][j] * G[s][i][l] - G[s][l][j] * G[k][i][l] \
                            - c[k][s][l] * G[l][i][j]
                    out.append(lhs - rhs)
    return out


def jacobi_residuals(t: FrameTensors) -> list[ScalarField]:
    fr, c = t.frame, t.c
    n = fr.dim
    out = []
    for i in range(n):
        for j, k, l in itertools.combinations(range(n), 3):
            expr = (directional(fr[l], c[j][k][i]) + directional(fr[k], c[l][j][i])
                    + directional(fr[j], c[k][l][i]))
            for s in range(n):
                expr = expr + c[j][k][s] * c[l][s][i] + c[l][j][s] * c[k][s][i] \
                    + c[k][l][s] * c[j][s][i]
            out.append(expr)
    return out

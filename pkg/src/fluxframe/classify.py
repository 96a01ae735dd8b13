"""Region-sampled verdicts on partial frames."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import exprlang as el
from .errors import (DegenerateCoefficient, DomainError, NotApplicable, NotRich,
                     UnsupportedCase)
from .exprlang import ScalarField
from .geometry import (RANK_TOL, Frame, PartialFrame, VectorField, bracket,
                       complete_frame, covariant, directional)

DEFAULT_TOL = 1e-8


@dataclass(frozen=True)
class Region:
    center: tuple
    half_width: float = 0.1
    samples: int = 64
    seed: int = 42

    def __init__(self, center, half_width: float = 0.1, samples: int = 64, seed: int = 42):
        c = tuple(float(x) for x in np.asarray(center, dtype=float).reshape(-1))
        if half_width <= 0 or samples < 1 or seed < 0:
            raise ValueError("invalid region parameters")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "half_width", float(half_width))
        object.__setattr__(self, "samples", int(samples))
        object.__setattr__(self, "seed", int(seed))

    def points(self) -> np.ndarray:
        """The center first, then uniform draws from the box."""
        c = np.asarray(self.center)
        rng = np.random.default_rng(self.seed)
        extra = rng.uniform(-1.0, 1.0, size=(self.samples - 1, c.shape[0]))
        return np.vstack([c[None, :], c + self.half_width * extra])


def region_for(pf: PartialFrame, **kw) -> Region:
    return Region(pf.basepoint, **kw)


@dataclass
class Verdict:
    """Outcome of a sampled test.

    For ``kind == "vanishing"`` the test holds when ``max_residual < tol``.
    For ``kind == "nonvanishing"`` ``max_residual`` stores the smallest
    observed magnitude and the test holds when it is at least ``tol``.
    """
    name: str
    holds: bool
    max_residual: float
    witness: tuple | None = None
    indeterminate: bool = False
    kind: str = "vanishing"
    skipped: int = 0
    note: str = ""

    def as_dict(self) -> dict:
        return {"name": self.name, "holds": bool(self.holds),
                "max_residual": float(self.max_residual),
                "witness": None if self.witness is None else [float(x) for x in self.witness]}


# ---------------------------------------------------------------- sampling

def sample_fields(fields: Sequence[ScalarField], reg: Region):
    """Evaluate at region samples; drops points where anything is undefined."""
    pts = reg.points()
    vals = el.eval_fields(list(fields), pts)
    ok = np.all(np.isfinite(vals), axis=1)
    skipped = int((~ok).sum())
    if skipped * 2 > pts.shape[0]:
        raise DomainError(f"{skipped} of {pts.shape[0]} sample points are outside the domain")
    return pts[ok], vals[ok], skipped


def _vectors(vals: np.ndarray, start: int, n: int) -> np.ndarray:
    return vals[:, start:start + n]


def out_of_span(x: np.ndarray, span: Sequence[np.ndarray], scale: np.ndarray) -> np.ndarray:
    """Normalized norm of the part of x orthogonal to span, per sample.

    x: (N, n); span: list of (N, n). Vectors with norm below 1e-12 * scale are
    treated as zero and give residual 0.
    """
    N = x.shape[0]
    out = np.zeros(N)
    S = np.stack(span, axis=2)  # (N, n, k)
    for p in range(N):
        nx = np.linalg.norm(x[p])
        if nx <= 1e-12 * max(1.0, scale[p]):
            continue
        Q, _ = np.linalg.qr(S[p])
        r = x[p] - Q @ (Q.T @ x[p])
        out[p] = np.linalg.norm(r) / nx
    return out


def _fields_flat(vfs: Sequence[VectorField]) -> list[ScalarField]:
    return [c for v in vfs for c in v.components]


def _verdict_vanishing(name, pts, res, tol, skipped=0, indeterminate=False):
    if res.size == 0:
        return Verdict(name, True, 0.0, None, indeterminate, "vanishing", skipped)
    k = int(np.argmax(res))
    return Verdict(name, bool(res[k] < tol), float(res[k]), tuple(pts[k].tolist()),
                   indeterminate, "vanishing", skipped)


def _verdict_nonvanishing(name, pts, res, tol, skipped=0):
    if res.size == 0:
        return Verdict(name, True, np.inf, None, False, "nonvanishing", skipped)
    k = int(np.argmin(res))
    return Verdict(name, bool(res[k] >= tol), float(res[k]), tuple(pts[k].tolist()),
                   bool(tol <= res[k] < 10 * tol), "nonvanishing", skipped)


def _pair_data(pf: PartialFrame, reg: Region):
    """Frame fields, brackets and covariant derivatives sampled on the region."""
    m, n = pf.m, pf.dim
    pairs = [(i, j) for i in range(m) for j in range(m) if i != j]
    vfs = list(pf.fields)
    vfs += [bracket(pf[i], pf[j]) for i, j in pairs]
    vfs += [covariant(pf[i], pf[j]) for i, j in pairs]
    pts, vals, skipped = sample_fields(_fields_flat(vfs), reg)
    R = [_vectors(vals, k * n, n) for k in range(m)]
    P = len(pairs)
    B = {pr: _vectors(vals, (m + t) * n, n) for t, pr in enumerate(pairs)}
    C = {pr: _vectors(vals, (m + P + t) * n, n) for t, pr in enumerate(pairs)}
    return pts, R, B, C, pairs, skipped


def _scale(R, i, j):
    return np.linalg.norm(R[i], axis=1) * np.linalg.norm(R[j], axis=1) + 1.0


# ---------------------------------------------------------------- reports

def involutivity_report(pf: PartialFrame, reg: Region, tol: float = DEFAULT_TOL) -> Verdict:
    m = pf.m
    if m == 1:
        return Verdict("involutive", True, 0.0)
    pts, R, B, _, pairs, skipped = _pair_data(pf, reg)
    res = np.zeros(pts.shape[0])
    for i, j in pairs:
        if i < j:
            res = np.maximum(res, out_of_span(B[(i, j)], R, _scale(R, i, j)))
    return _verdict_vanishing("involutive", pts, res, tol, skipped)


def richness_report(pf: PartialFrame, reg: Region, tol: float = DEFAULT_TOL) -> Verdict:
    if pf.m == 1:
        return Verdict("rich", True, 0.0)
    pts, R, B, _, pairs, skipped = _pair_data(pf, reg)
    res = np.zeros(pts.shape[0])
    for i, j in pairs:
        if i < j:
            res = np.maximum(res, out_of_span(B[(i, j)], [R[i], R[j]], _scale(R, i, j)))
    return _verdict_vanishing("rich", pts, res, tol, skipped)


def commuting_report(pf: PartialFrame, reg: Region, tol: float = DEFAULT_TOL) -> Verdict:
    if pf.m == 1:
        return Verdict("commuting", True, 0.0)
    pts, R, B, _, pairs, skipped = _pair_data(pf, reg)
    res = np.zeros(pts.shape[0])
    for i, j in pairs:
        if i < j:
            res = np.maximum(res, np.linalg.norm(B[(i, j)], axis=1) / np.maximum(1.0, _scale(R, i, j)))
    return _verdict_vanishing("commuting", pts, res, tol, skipped)


def frame_class(pf: PartialFrame, reg: Region, tol: float = DEFAULT_TOL) -> str:
    if richness_report(pf, reg, tol).holds:
        return "rich"
    if involutivity_report(pf, reg, tol).holds:
        return "involutive"
    return "noninvolutive"


def sh_necessary(pf: PartialFrame, reg: Region, tol: float = DEFAULT_TOL) -> tuple[Verdict, str]:
    """Necessary condition for strictly hyperbolic fluxes; returns (verdict, case)."""
    m, n = pf.m, pf.dim
    if m == 1:
        return Verdict("sh_necessary", True, 0.0), "single"
    cls = frame_class(pf, reg, tol)
    pts, R, B, C, pairs, skipped = _pair_data(pf, reg)
    N = pts.shape[0]
    if cls == "rich":
        res = np.zeros(N)
        for i, j in pairs:
            res = np.maximum(res, out_of_span(C[(i, j)], [R[i], R[j]], _scale(R, i, j)))
        ind = bool(np.any((res >= tol) & (res < 10 * tol)))
        return _verdict_vanishing("sh_necessary", pts, res, tol, skipped, ind), "rich"
    if cls == "noninvolutive":
        if m == 2 and n == 3:
            a = out_of_span(C[(0, 1)], R, _scale(R, 0, 1))
            b = out_of_span(C[(1, 0)], R, _scale(R, 1, 0))
            return (_verdict_nonvanishing("sh_necessary", pts, np.minimum(a, b), tol, skipped),
                    "noninvolutive_m2n3")
        if m >= 3:
            raise UnsupportedCase("non-involutive frames with m >= 3: analysis not covered")
    # general biconditional, used for involutive frames and non-involutive m = 2, n > 3
    res = np.zeros(N)
    ind = False
    for i, j in pairs:
        sc = _scale(R, i, j)
        A = out_of_span(C[(i, j)], [R[i], R[j]], sc)
        Bv = out_of_span(B[(i, j)], [R[i], R[j]], sc)
        mismatch = (A < tol) != (Bv < tol)
        res = np.maximum(res, np.where(mismatch, np.maximum(A, Bv), 0.0))
        ind = ind or bool(np.any(((A >= tol) & (A < 10 * tol)) | ((Bv >= tol) & (Bv < 10 * tol))))
    case = "general"
    if cls == "involutive":
        case = "involutive"
        for i, j in pairs:
            A = out_of_span(C[(i, j)], R, _scale(R, i, j))
            res = np.maximum(res, A)
            ind = ind or bool(np.any((A >= tol) & (A < 10 * tol)))
    return _verdict_vanishing("sh_necessary", pts, res, tol, skipped, ind), case


# ---------------------------------------------------------------- m = 3, involutive

def _tensors_of(pf: PartialFrame):
    fr = complete_frame(pf)
    return fr, fr.tensors


def _require_inv_nonrich_m3(pf: PartialFrame, reg: Region, tol: float):
    if pf.m != 3:
        raise NotApplicable("needs exactly three fields")
    if not involutivity_report(pf, reg, tol).holds:
        raise NotApplicable("frame is not involutive")
    if richness_report(pf, reg, tol).holds:
        raise NotApplicable("frame is rich")


def a_lambda_matrix(pf: PartialFrame) -> list[list[ScalarField]]:
    _, t = _tensors_of(pf)
    c, G = t.c, t.gamma
    return [[c[1][2][0], G[2][1][0], -G[1][2][0]],
            [G[2][0][1], c[0][2][1], -G[0][2][1]],
            [G[1][0][2], -G[0][1][2], c[0][1][2]]]


@dataclass
class ALambdaReport:
    matrix: list
    rank: int
    singular_values: tuple
    column_identity_residual: float
    forced: str
    sh_holds: bool
    detail: dict = field(default_factory=dict)


def a_lambda_analysis(pf: PartialFrame, reg: Region, tol: float = DEFAULT_TOL) -> ALambdaReport:
    _require_inv_nonrich_m3(pf, reg, tol)
    A = a_lambda_matrix(pf)
    flat = [e for row in A for e in row]
    pts, vals, _ = sample_fields(flat, reg)
    Av = vals.reshape(-1, 3, 3)
    col_res = float(np.max(np.abs(Av[:, :, 0] + Av[:, :, 1] + Av[:, :, 2])))
    A0 = np.array([[e.eval(pf.basepoint) for e in row] for row in A])
    sv = np.linalg.svd(A0, compute_uv=False)
    rank = int(np.sum(sv > max(tol, RANK_TOL * sv[0])))
    sh, _ = sh_necessary(pf, reg, tol)
    detail: dict = {}
    if sh.holds:
        if rank >= 2:
            forced = "all_equal"
        else:
            perm, val = best_c231_permutation(pf)
            forced = "lambda1_eliminable"
            detail = {"permutation": perm, "c23_1": val}
    else:
        forced, detail = _two_possibility_split(pf, reg, tol)
    return ALambdaReport(A, rank, tuple(sv.tolist()), col_res, forced, sh.holds, detail)


def _two_possibility_split(pf: PartialFrame, reg: Region, tol: float):
    _, t = _tensors_of(pf)
    c, G = t.c, t.gamma
    for i, j, k in [(0, 1, 2), (0, 2, 1), (1, 2, 0)]:
        conds = [c[i][j][k], G[i][k][j], G[j][k][i]]
        _, vals, _ = sample_fields(conds + [G[j][k][j] - G[i][k][i]], reg)
        if np.max(np.abs(vals[:, :3])) < tol:
            if np.max(np.abs(vals[:, 3])) < tol:
                return "two_equal", {"equal_pair": (i + 1, j + 1), "free": k + 1}
            return "all_equal", {"equal_pair": (i + 1, j + 1),
                                 "reason": "second and fourth equations force the third"}
    return "all_equal", {}


def best_c231_permutation(pf: PartialFrame) -> tuple[tuple, float]:
    """Permutation of the three fields maximizing |c_23^1| at the basepoint."""
    best, best_val = None, -1.0
    for perm in itertools.permutations(range(3)):
        q = _permuted(pf, perm)
        _, t = _tensors_of(q)
        v = t.c[1][2][0].eval(pf.basepoint)
        if abs(v) > best_val * (1 + 1e-12) + 1e-300:
            best, best_val = perm, abs(v)
    return best, best_val


def _permuted(pf: PartialFrame, perm) -> PartialFrame:
    fields = [pf[p] for p in perm] + list(pf.fields[3:])
    return type(pf)(fields, pf.basepoint) if not isinstance(pf, Frame) else Frame(fields, pf.basepoint)


def m3_phi(pf: PartialFrame) -> list[list[ScalarField]]:
    """phi[i][s] with r_i(lambda^s) = phi_i^s (lambda^2 - lambda^3), s in {2, 3}.

    Returned as phi[i][0] for s=2 and phi[i][1] for s=3, i zero-based.
    """
    fr, t = _tensors_of(pf)
    c, G = t.c, t.gamma
    r = fr.fields
    c321 = c[2][1][0]
    G231, G321 = G[1][2][0], G[2][1][0]
    phi12 = G[1][0][1] * G231 / c321
    phi22 = G231 / G321 * (G[2][1][2] - G[0][1][0]) - c321 / G321 * directional(r[1], G321 / c321)
    phi32 = -G[1][2][1]
    phi13 = G[2][0][2] * G321 / c321
    phi23 = G[2][1][2]
    phi33 = G321 / G231 * (G[0][2][0] - G[1][2][1]) + c321 / G231 * directional(r[2], G231 / c321)
    return [[phi12, phi13], [phi22, phi23], [phi32, phi33]]


def m3_compat_expressions(pf: PartialFrame) -> list[ScalarField]:
    """The six compatibility expressions, ordered (i<j) then s = 2, 3."""
    fr, t = _tensors_of(pf)
    phi = m3_phi(pf)
    r = fr.fields
    out = []
    for s in range(2):
        for i, j in [(0, 1), (0, 2), (1, 2)]:
            e = directional(r[i], phi[j][s]) - directional(r[j], phi[i][s]) \
                - (phi[j][0] * phi[i][1] - phi[i][0] * phi[j][1])
            for k in range(3):
                e = e - t.c[i][j][k] * phi[k][s]
            out.append(e)
    return out


def m3_compat_residuals(pf: PartialFrame, reg: Region, tol: float = DEFAULT_TOL) -> list[float]:
    rep = a_lambda_analysis(pf, reg, tol)
    if rep.rank != 1:
        raise NotApplicable(f"A_lambda has rank {rep.rank}, the conditions need rank 1")
    perm, _ = best_c231_permutation(pf)
    q = _permuted(pf, perm)
    _, t = _tensors_of(q)
    _, dv, _ = sample_fields([t.c[1][2][0], t.gamma[1][2][0], t.gamma[2][1][0]], reg)
    if np.min(np.abs(dv)) < tol:
        raise DegenerateCoefficient("c_23^1, Gamma_23^1 or Gamma_32^1 vanishes in the region")
    _, vals, _ = sample_fields(m3_compat_expressions(q), reg)
    return [float(x) for x in np.max(np.abs(vals), axis=0)]


# ---------------------------------------------------------------- rich multiplicity

def multiplicity_partition(pf: PartialFrame, reg: Region, tol: float = DEFAULT_TOL) -> list[set]:
    if not richness_report(pf, reg, tol).holds:
        raise NotRich("multiplicity partition needs a rich frame")
    m = pf.m
    fr, t = _tensors_of(pf)
    n = fr.dim
    parent = list(range(m))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i in range(m):
        for j in range(m):
            if i == j:
                continue
            others = [t.gamma[i][j][l] for l in range(n) if l not in (i, j)]
            if not others:
                continue
            _, vals, _ = sample_fields(others, reg)
            if np.max(np.abs(vals)) > tol:
                parent[find(i)] = find(j)
    groups: dict = {}
    for i in range(m):
        groups.setdefault(find(i), set()).add(i + 1)
    return sorted((g for g in groups.values() if len(g) >= 2), key=min)


# ---------------------------------------------------------------- m = 2, n = 3, non-involutive

def bracket_completion(pf: PartialFrame) -> Frame:
    return Frame([pf[0], pf[1], bracket(pf[0], pf[1])], pf.basepoint)


def nonhyp_expression(fr: Frame) -> ScalarField:
    t = fr.tensors
    G, c = t.gamma, t.c
    return G[0][1][2] * G[1][0][2] - 2 * c[0][1][2] * c[0][1][2] - G[0][0][2] * G[1][1][2]


def generic_expression(fr: Frame) -> ScalarField:
    G = fr.tensors.gamma
    return G[1][1][2] * G[0][0][2] - 9 * G[0][1][2] * G[1][0][2]


@dataclass
class M2N3Identities:
    nonhyp_identity: Verdict
    generic: Verdict
    completion_agreement: bool
    second: tuple = ()


def _identity_verdicts(fr: Frame, reg: Region, tol: float, tag: str):
    nh = nonhyp_expression(fr)
    ge = generic_expression(fr)
    pts, vals, skipped = sample_fields([nh], reg)
    v_nh = _verdict_vanishing(f"nonhyp_identity{tag}", pts, np.abs(vals[:, 0]), tol, skipped)
    g0 = abs(ge.eval(reg.center))
    v_g = Verdict(f"generic{tag}", bool(g0 > tol), g0, tuple(reg.center), False, "nonvanishing")
    return v_nh, v_g


def noninv_m2n3_identities(pf: PartialFrame, reg: Region, tol: float = DEFAULT_TOL) -> M2N3Identities:
    if pf.m != 2 or pf.dim != 3:
        raise NotApplicable("needs two fields in three dimensions")
    if involutivity_report(pf, reg, tol).holds:
        raise NotApplicable("frame is involutive")
    sh, _ = sh_necessary(pf, reg, tol)
    if not sh.holds:
        raise NotApplicable("necessary condition for strict hyperbolicity fails")
    v_nh, v_g = _identity_verdicts(bracket_completion(pf), reg, tol, "")
    w_nh, w_g = _identity_verdicts(complete_frame(pf), reg, tol, "_coordinate_completion")
    agree = (v_nh.holds == w_nh.holds) and (v_g.holds == w_g.holds)
    return M2N3Identities(v_nh, v_g, agree, (w_nh, w_g))

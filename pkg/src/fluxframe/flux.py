"""Fluxes: Jacobians, eigenstructure, verification, construction and the lambda-a prolongation."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import exprlang as el
from .classify import (DEFAULT_TOL, Region, Verdict, _verdict_vanishing, bracket_completion,
                       generic_expression, involutivity_report, region_for, richness_report,
                       sample_fields, sh_necessary)
from .errors import (ConditionFailed, DomainError, Inconsistent, NonGeneric, NotApplicable,
                     NotIntegrable, NotInvolutive, RankUnstable, UnsupportedCase)
from .exprlang import ScalarField
from .geometry import (Frame, PartialFrame, VectorField, _cofactor, _det,
                       complete_frame, covariant, directional)
from .integrate import (DarbouxStage, DataSlice, FrobeniusSystem, darboux_transport,
                        integrate_autonomous, slice_for, transport_to)

SV_TOL = 1e-6
CLUSTER_TOL = 1e-7
REAL_TOL = 1e-8
PATH_TOL = 1e-6
HOLONOMY_TOL = 1e-5


# ---------------------------------------------------------------- Jacobians

@dataclass(frozen=True)
class FluxCandidate:
    F: VectorField
    lambdas: tuple | None = None

    def __init__(self, F: VectorField, lambdas: Sequence[ScalarField] | None = None):
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "lambdas", None if lambdas is None else tuple(lambdas))


def jacobian_fields(F: VectorField) -> list[list[ScalarField]]:
    n = F.dim
    return [[F[i].derive(j) for j in range(n)] for i in range(n)]


def jacobian(F: VectorField, p) -> np.ndarray:
    p = np.asarray(p, dtype=float).reshape(-1)
    n = F.dim
    flat = [f for row in jacobian_fields(F) for f in row]
    vals = el.eval_fields(flat, p[None, :])[0]
    if not np.all(np.isfinite(vals)):
        raise DomainError(f"Jacobian undefined at {tuple(p.tolist())}")
    return vals.reshape(n, n)


def grad_along(r: VectorField, F: VectorField) -> VectorField:
    """Flat covariant derivative of F along r, i.e. [D F] r."""
    return covariant(r, F)


def recovered_lambdas(F: VectorField, pf: PartialFrame) -> list[ScalarField]:
    """<[DF] r_i, r_i> / <r_i, r_i> as expressions."""
    out = []
    for r in pf.fields:
        v = grad_along(r, F)
        num = sum((a * b for a, b in zip(v, r)), ScalarField.constant(0.0, F.coords))
        den = sum((b * b for b in r), ScalarField.constant(0.0, F.coords))
        out.append(num / den)
    return out


# ---------------------------------------------------------------- verification

@dataclass
class FluxVerification:
    verdict: Verdict
    residuals: np.ndarray        # (N, m)
    lambdas: np.ndarray          # (N, m)
    points: np.ndarray
    lambda_error: float | None = None


def verify_flux(cand: FluxCandidate, pf: PartialFrame, reg: Region | None = None,
                tol: float = DEFAULT_TOL) -> FluxVerification:
    F = cand.F
    if F.dim != pf.dim or F.coords != pf.coords:
        raise ValueError("flux and frame live on different spaces")
    if cand.lambdas is not None and len(cand.lambdas) != pf.m:
        raise ValueError("need one eigenvalue per frame field")
    reg = reg or region_for(pf)
    m, n = pf.m, pf.dim
    vs = [grad_along(r, F) for r in pf.fields]
    flat = [c for v in vs for c in v] + [c for r in pf.fields for c in r]
    flat += [f for row in jacobian_fields(F) for f in row]
    if cand.lambdas is not None:
        flat += list(cand.lambdas)
    pts, vals, skipped = sample_fields(flat, reg)
    V = vals[:, : m * n].reshape(-1, m, n)
    R = vals[:, m * n: 2 * m * n].reshape(-1, m, n)
    rr = np.einsum("pik,pik->pi", R, R)
    lam = np.einsum("pik,pik->pi", V, R) / rr
    perp = V - lam[:, :, None] * R
    Jn = np.linalg.norm(vals[:, 2 * m * n: 2 * m * n + n * n], axis=1)
    nv = np.linalg.norm(V, axis=2)
    # round-off sized images count as zero
    live = nv > 1e-12 * Jn[:, None] * np.sqrt(rr)
    res = np.where(live, np.linalg.norm(perp, axis=2) / np.where(live, nv, 1.0), 0.0)
    verdict = _verdict_vanishing("flux_eigenvectors", pts, res.max(axis=1), tol, skipped)
    lam_err = None
    if cand.lambdas is not None:
        given = vals[:, 2 * m * n + n * n:]
        lam_err = float(np.max(np.abs(given - lam))) if lam.size else 0.0
    return FluxVerification(verdict, res, lam, pts, lam_err)


# ---------------------------------------------------------------- eigenstructure

@dataclass
class Eigenstructure:
    eigenvalues: list
    classification: str
    eigenvectors: list = field(default_factory=list)
    generalized_eigenvector: np.ndarray | None = None
    multiplicities: list = field(default_factory=list)
    defective: list = field(default_factory=list)


def charpoly(A: np.ndarray) -> np.ndarray:
    """Faddeev-LeVerrier: monic coefficients [1, c1, ..., cn] of det(x I - A)."""
    n = A.shape[0]
    coeffs = np.zeros(n + 1)
    coeffs[0] = 1.0
    Mk = np.zeros_like(A)
    eye = np.eye(n)
    for k in range(1, n + 1):
        Mk = A @ Mk + coeffs[k - 1] * eye
        coeffs[k] = -np.trace(A @ Mk) / k
    return coeffs


def aberth(coeffs: np.ndarray, maxit: int = 500) -> np.ndarray:
    """All roots of a monic polynomial by simultaneous Aberth-Ehrlich iteration."""
    c = np.asarray(coeffs, dtype=complex)
    n = c.shape[0] - 1
    if n == 0:
        return np.zeros(0, dtype=complex)
    radius = 1.0 + np.max(np.abs(c[1:]))
    z = radius * 0.5 * np.exp(1j * (2 * np.pi * np.arange(n) / n + 0.4))
    dc = np.polyder(c)
    for _ in range(maxit):
        p = np.polyval(c, z)
        dp = np.polyval(dc, z)
        with np.errstate(all="ignore"):
            ratio = p / dp
            diff = z[:, None] - z[None, :]
            np.fill_diagonal(diff, 1.0)
            inv = 1.0 / diff
            np.fill_diagonal(inv, 0.0)
            w = ratio / (1.0 - ratio * inv.sum(axis=1))
        w = np.where(np.isfinite(w), w, 0.0)
        z = z - w
        if np.all(np.abs(w) <= 1e-15 * (1.0 + np.abs(z))):
            break
    return z


def _refine_cluster(coeffs: np.ndarray, z0: complex, k: int) -> complex:
    """Newton on the (k-1)-th derivative, whose root near a k-fold cluster is simple."""
    c = np.asarray(coeffs, dtype=complex)
    for _ in range(k - 1):
        c = np.polyder(c)
    dc = np.polyder(c)
    z = z0
    for _ in range(30):
        d = np.polyval(dc, z)
        if d == 0:
            break
        step = np.polyval(c, z) / d
        z = z - step
        if abs(step) <= 1e-16 * (1 + abs(z)):
            break
    return z


def _is_multiple_root(coeffs: np.ndarray, z: complex, k: int) -> bool:
    """p and its first k-1 derivatives vanish at z up to evaluation round-off."""
    c = np.asarray(coeffs, dtype=complex)
    for _ in range(k):
        bound = np.polyval(np.abs(c), abs(z))
        if abs(np.polyval(c, z)) > 1e-14 * max(bound, 1e-300):
            return False
        c = np.polyder(c)
    return True


def _cluster_roots(coeffs: np.ndarray, roots: np.ndarray) -> list[tuple[complex, int]]:
    """Group Aberth roots into (value, multiplicity).

    A k-fold root comes out of the iteration split by about eps^(1/k), so
    candidates are gathered loosely and kept together only when the refined
    center annihilates the first k-1 derivatives.
    """
    loose: list[list[complex]] = []
    for z in sorted(roots, key=lambda x: (x.real, x.imag)):
        for grp in loose:
            if min(abs(z - y) for y in grp) < 1e-3 * (1 + abs(z)):
                grp.append(z)
                break
        else:
            loose.append([z])
    out = []
    for grp in loose:
        k = len(grp)
        if k > 1:
            zc = _refine_cluster(coeffs, complex(np.mean(grp)), k)
            if abs(zc - np.mean(grp)) < 1e-3 * (1 + abs(zc)) and _is_multiple_root(coeffs, zc, k):
                out.append((zc, k))
                continue
        strict: list[list[complex]] = []
        for z in grp:
            for cl in strict:
                if abs(z - np.mean(cl)) < CLUSTER_TOL * (1 + abs(z)):
                    cl.append(z)
                    break
            else:
                strict.append([z])
        out.extend((complex(np.mean(cl)), len(cl)) for cl in strict)
    return out


def _rank(A: np.ndarray, scale: float) -> int:
    sv = np.linalg.svd(A, compute_uv=False)
    return int(np.sum(sv > SV_TOL * max(scale, 1e-300)))


def _null_basis(A: np.ndarray, scale: float) -> np.ndarray:
    _, sv, vt = np.linalg.svd(A)
    r = int(np.sum(sv > SV_TOL * max(scale, 1e-300)))
    return vt[r:].T


def eigen_classify(F: VectorField, p) -> Eigenstructure:
    A = jacobian(F, p)
    n = A.shape[0]
    coeffs = charpoly(A)
    roots = aberth(coeffs)
    scale = max(1.0, float(np.max(np.abs(A))))
    vals, mults, defect, vecs = [], [], [], []
    genvec = None
    real_all = True
    for z, k in _cluster_roots(coeffs, roots):
        if abs(z.imag) < REAL_TOL * (1 + abs(z)):
            z = complex(z.real, 0.0)
        else:
            real_all = False
        vals.extend([z] * k)
        mults.append(k)
        if z.imag == 0.0:
            B = A - z.real * np.eye(n)
            rk = _rank(B, scale)
            is_def = rk > n - k
            defect.append(is_def)
            vecs.extend(list(_null_basis(B, scale).T))
            if is_def and genvec is None:
                B2 = B @ B
                N2 = _null_basis(B2, scale * scale)
                for v in N2.T:
                    if np.linalg.norm(B @ v) > SV_TOL * scale:
                        genvec = v
                        break
        else:
            defect.append(False)
    if not real_all:
        cls = "Complex"
    elif any(defect):
        cls = "NonHyperbolic"
    elif all(k == 1 for k in mults):
        cls = "StrictlyHyperbolic"
    else:
        cls = "Hyperbolic"
    return Eigenstructure(vals, cls, vecs, genvec, mults, defect)


# ---------------------------------------------------------------- lambda-system (involutive)

def lambda_system_expressions(pf: PartialFrame, lambdas: Sequence[ScalarField]) -> list[ScalarField]:
    fr = complete_frame(pf)
    t = fr.tensors
    G, c = t.gamma, t.c
    m, n = pf.m, pf.dim
    lam = list(lambdas)
    out = []
    for i in range(m):
        for j in range(m):
            if i == j:
                continue
            out.append(directional(pf[i], lam[j]) - G[j][i][j] * (lam[i] - lam[j]))
    for i in range(m):
        for j in range(m):
            for k in range(m):
                if len({i, j, k}) == 3:
                    out.append(lam[j] * G[i][j][k] - lam[i] * G[j][i][k] - c[i][j][k] * lam[k])
    for i in range(m):
        for j in range(m):
            if i != j:
                for l in range(m, n):
                    out.append((lam[j] - lam[i]) * G[j][i][l])
    return out


def lambda_system_residual(pf: PartialFrame, lambdas: Sequence[ScalarField],
                           reg: Region | None = None, tol: float = DEFAULT_TOL) -> Verdict:
    reg = reg or region_for(pf)
    if not involutivity_report(pf, reg, tol).holds:
        raise NotInvolutive("the eigenvalue system needs an involutive frame")
    if len(lambdas) != pf.m:
        raise ValueError("need one eigenvalue per frame field")
    exprs = lambda_system_expressions(pf, lambdas)
    if not exprs:
        return Verdict("lambda_system", True, 0.0)
    pts, vals, skipped = sample_fields(exprs, reg)
    return _verdict_vanishing("lambda_system", pts, np.max(np.abs(vals), axis=1), tol, skipped)


# ---------------------------------------------------------------- construction (involutive)

@dataclass
class Construction:
    values: np.ndarray          # (N, n)
    path_agreement: float
    targets: np.ndarray


def flux_system(pf: PartialFrame, lambdas: Sequence[ScalarField]) -> FrobeniusSystem:
    """r_i(F^j) = lambda^i R_i^j."""
    n, m = pf.dim, pf.m
    names = [f"_F{j + 1}" for j in range(n)]
    rhs = [[lambdas[i] * pf[i][j] for i in range(m)] for j in range(n)]
    return FrobeniusSystem(pf.fields, names, rhs)


def construct_flux(pf: PartialFrame, lambdas: Sequence[ScalarField], data: DataSlice,
                   targets, reg: Region | None = None, tol: float = DEFAULT_TOL) -> Construction:
    """Transport F from the slice along two staircase orders and cross-check."""
    reg = reg or Region(data.basepoint)
    lv = lambda_system_residual(pf, lambdas, reg, tol)
    if not lv.holds:
        raise ConditionFailed(f"eigenvalues violate their system (residual {lv.max_residual:.3e})")
    if not data.transversal(pf.fields):
        raise ValueError("data slice is not transversal to the frame")
    if len(data.data) != pf.dim:
        raise ValueError("slice data must give every flux component")
    sys = flux_system(pf, lambdas)
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    order = list(range(pf.m))
    a = transport_to(sys, data, targets, order)
    if pf.m > 1:
        b = transport_to(sys, data, targets, order[::-1])
        gap = float(np.max(np.abs(a - b)))
    else:
        gap = 0.0
    if gap > HOLONOMY_TOL:
        raise NotIntegrable(f"two transport orders disagree by {gap:.3e}")
    return Construction(a, gap, targets)


# ---------------------------------------------------------------- rich frames

def rich_lambda_solve(pf: PartialFrame, data: Sequence[ScalarField], targets,
                      reg: Region | None = None, tol: float = DEFAULT_TOL) -> Construction:
    """Each lambda^j is transported along the fields r_i, i != j, from its own slice.

    Only the decoupled case (Gamma^j_{ji} = 0 for i != j) is staged; there the
    equations reduce to r_i(lambda^j) = 0.
    """
    reg = reg or region_for(pf)
    if not richness_report(pf, reg, tol).holds:
        from .errors import NotRich
        raise NotRich("frame is not rich")
    sh, case = sh_necessary(pf, reg, tol)
    if not sh.holds:
        raise ConditionFailed("covariant derivatives leave the span; use the multiplicity partition")
    m = pf.m
    if len(data) != m:
        raise ValueError("need one data function per eigenvalue")
    fr = complete_frame(pf)
    G = fr.tensors.gamma
    coupling = [G[j][i][j] for i in range(m) for j in range(m) if i != j]
    if coupling:
        _, vals, _ = sample_fields(coupling, reg)
        if np.max(np.abs(vals)) >= tol:
            raise UnsupportedCase("eigenvalue equations are coupled in this frame")
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    zero = ScalarField.constant(0.0, pf.coords)
    if m == 1:
        return Construction(el.eval_fields([data[0]], targets), 0.0, targets)

    def run(rev: bool) -> np.ndarray:
        stages = []
        for j in range(m):
            dirs = tuple(i for i in range(m) if i != j)
            if rev:
                dirs = dirs[::-1]
            sl = slice_for([pf[i] for i in dirs], pf.basepoint, [data[j]])
            stages.append(DarbouxStage(f"_lam{j + 1}", dirs, tuple(zero for _ in dirs), sl))
        return darboux_transport(pf.fields, stages, targets)

    a = run(False)
    gap = float(np.max(np.abs(a - run(True)))) if m > 2 else 0.0
    if gap > HOLONOMY_TOL:
        raise NotIntegrable(f"two transport orders disagree by {gap:.3e}")
    return Construction(a, gap, targets)


# ---------------------------------------------------------------- lambda-a system (m = 2, n = 3)
#
# Unknowns y = (lambda^1, lambda^2, a^1, a^2, tau) with tau = s(lambda^2) and
# e = (r1, r2, s), s = [r1, r2].  Linear forms are dicts from symbols to
# coefficient fields; a symbol is either an index q of y or ("d", j, q) for
# the not yet resolved derivative e_j(y_q).

LAM1, LAM2, A1, A2, TAU = range(5)
NY = 5


def _lin_add(*forms) -> dict:
    out: dict = {}
    for f in forms:
        for k, v in f.items():
            out[k] = out[k] + v if k in out else v
    return {k: v for k, v in out.items() if not v.is_zero()}


def _lin_scale(c, f: dict) -> dict:
    return {k: c * v for k, v in f.items()}


class _Derivation:
    """Table of e_j(y_q) as linear forms, filled in by the prolongation steps."""

    def __init__(self, fr: Frame):
        self.fr = fr
        self.known: dict = {}

    def sym(self, j: int, q: int) -> dict:
        got = self.known.get((j, q))
        if got is not None:
            return got
        return {("d", j, q): ScalarField.constant(1.0, self.fr.coords)}

    def apply(self, j: int, form: dict) -> dict:
        """e_j of a linear form in y, with resolved derivatives substituted."""
        parts = []
        for key, coef in form.items():
            if not isinstance(key, int):
                raise ValueError("second derivatives are not tracked")
            dc = directional(self.fr[j], coef)
            if not dc.is_zero():
                parts.append({key: dc})
            parts.append(_lin_scale(coef, self.sym(j, key)))
        return _lin_add(*parts)

    def commutator(self, j: int, k: int, q: int) -> dict:
        """e_j(e_k y_q) - e_k(e_j y_q) - sum_l c^l_jk e_l(y_q); vanishes on solutions."""
        c = self.fr.tensors.c
        parts = [self.apply(j, self.sym(k, q)), _lin_scale(-1.0, self.apply(k, self.sym(j, q)))]
        for l in range(3):
            if not c[j][k][l].is_zero():
                parts.append(_lin_scale(-c[j][k][l], self.sym(l, q)))
        return _lin_add(*parts)


def _solve_for(eq: dict, key) -> dict:
    """Solve eq = 0 for one symbol."""
    coef = eq[key]
    rest = {k: v for k, v in eq.items() if k != key}
    return _lin_scale(-1.0 / coef, rest)


def _substitute(eq: dict, key, value: dict) -> dict:
    if key not in eq:
        return eq
    coef = eq[key]
    rest = {k: v for k, v in eq.items() if k != key}
    return _lin_add(rest, _lin_scale(coef, value))


@dataclass
class LambdaASystem:
    frame: Frame
    upsilon: tuple
    M1: list
    M2: list
    M3: list
    det4: ScalarField
    consistency: dict          # second s(lambda) relation; vanishes identically
    abc: tuple                 # (A1, B1, C1, A2, B2, C2)

    @property
    def tensors(self):
        return self.frame.tensors

    @property
    def matrices(self) -> tuple:
        return (self.M1, self.M2, self.M3)

    def a_fields(self, lam1: ScalarField, lam2: ScalarField) -> tuple:
        G = self.tensors.gamma
        D = lam1 - lam2
        a1 = -directional(self.frame[1], lam1) - G[0][1][0] * D
        a2 = directional(self.frame[0], lam2) - G[1][0][1] * D
        return a1, a2


def _first_order(fr: Frame):
    """First-order relations of the six-equation lemma, with Upsilon."""
    G, c = fr.tensors.gamma, fr.tensors.c
    one = ScalarField.constant(1.0, fr.coords)
    r1, r2 = fr[0], fr[1]
    g = lambda i, j, k: G[i - 1][j - 1][k - 1]          # Gamma^k_{ij}, 1-based
    cc = lambda i, j, k: c[i - 1][j - 1][k - 1]
    ups1 = g(1, 2, 3) * (g(2, 1, 2) - g(3, 1, 3)) - directional(r1, g(1, 2, 3))
    ups2 = g(2, 1, 3) * (g(3, 2, 3) - g(1, 2, 1)) + directional(r2, g(1, 2, 3))

    def D(coef):
        return {LAM1: coef, LAM2: -coef}

    known = {}
    known[(1, LAM1)] = _lin_add(D(-g(1, 2, 1)), {A1: -one})
    known[(0, LAM2)] = _lin_add(D(g(2, 1, 2)), {A2: one})
    known[(0, LAM1)] = _lin_scale(1.0 / g(2, 1, 3), _lin_add(D(ups1), {A1: g(1, 1, 3), A2: 2 * g(1, 2, 3)}))
    known[(1, LAM2)] = _lin_scale(1.0 / g(1, 2, 3), _lin_add(D(ups2), {A1: -2 * g(2, 1, 3), A2: -g(2, 2, 3)}))
    known[(1, A1)] = _lin_add(D(g(2, 3, 1) * g(1, 2, 3) - g(3, 2, 1)),
                              {A1: cc(2, 3, 3) - g(2, 1, 1), A2: -g(2, 2, 1)})
    known[(0, A2)] = _lin_add(D(g(1, 3, 2) * g(2, 1, 3) + g(3, 1, 2)),
                              {A1: -g(1, 1, 2), A2: cc(1, 3, 3) - g(1, 2, 2)})
    # r1(a1) - s(lam1) and r2(a2) - s(lam2); the s-derivatives stay symbolic for now
    r1a1 = _lin_add(D(g(1, 3, 1) * g(1, 2, 3)), {A1: cc(1, 3, 3) - g(1, 1, 1), A2: -g(1, 2, 1)})
    r2a2 = _lin_add(D(g(2, 3, 2) * g(2, 1, 3)), {A1: -g(2, 1, 2), A2: cc(2, 3, 3) - g(2, 2, 2)})
    return (ups1, ups2), known, r1a1, r2a2


def build_lambda_a(pf: PartialFrame, reg: Region | None = None,
                   tol: float = DEFAULT_TOL, check: bool = True) -> LambdaASystem:
    if pf.m != 2 or pf.dim != 3:
        raise NotApplicable("needs two fields in three dimensions")
    reg = reg or region_for(pf)
    if check:
        if involutivity_report(pf, reg, tol).holds:
            raise NotApplicable("frame is involutive")
        sh, _ = sh_necessary(pf, reg, tol)
        if not sh.holds:
            raise ConditionFailed("necessary condition for strict hyperbolicity fails")
    fr = bracket_completion(pf)
    G, c = fr.tensors.gamma, fr.tensors.c
    c12 = [c[0][1][k].eval(pf.basepoint) for k in range(3)]
    if max(abs(c12[0]), abs(c12[1]), abs(c12[2] - 1.0)) > 1e-9:
        raise ConditionFailed(f"bracket completion gives c_12 = {c12}")
    gen = generic_expression(fr).eval(pf.basepoint)
    g123 = G[0][1][2].eval(pf.basepoint)
    if abs(gen) < tol or abs(g123) < tol:
        raise NonGeneric(f"prolongation matrix is singular at the basepoint ({gen:.3e})")

    ups, known, r1a1, r2a2 = _first_order(fr)
    der = _Derivation(fr)
    der.known.update(known)
    one = ScalarField.constant(1.0, fr.coords)
    der.known[(2, LAM2)] = {TAU: one}
    s_lam1 = ("d", 2, LAM1)
    der.known[(0, A1)] = _lin_add(r1a1, {s_lam1: one})
    der.known[(1, A2)] = _lin_add(r2a2, {TAU: one})

    # s(lambda^1) from [r1, r2] lambda^1 = s(lambda^1)
    eq1 = der.commutator(0, 1, LAM1)
    sol = _solve_for(eq1, s_lam1)
    der.known[(2, LAM1)] = sol
    der.known[(0, A1)] = _lin_add(r1a1, sol)
    # the same commutator on lambda^2 must then vanish identically
    eq2 = der.commutator(0, 1, LAM2)
    abc = _abc(eq1, _raw_commutator_lam2(fr, known, r1a1, r2a2), s_lam1)

    # four commutators with s determine r1(tau), r2(tau), s(a1), s(a2)
    unknowns = [("d", 0, TAU), ("d", 1, TAU), ("d", 2, A1), ("d", 2, A2)]
    eqs = [der.commutator(0, 2, LAM2), der.commutator(1, 2, LAM2),
           der.commutator(1, 2, LAM1), der.commutator(0, 2, LAM1)]
    A = [[e.get(u, ScalarField.constant(0.0, fr.coords)).node for u in unknowns] for e in eqs]
    det = _det(A)
    det_f = ScalarField(det, fr.coords)
    for e in eqs:
        extra = [k for k in e if not isinstance(k, int) and k not in unknowns]
        if extra:
            raise ConditionFailed(f"unexpected derivative symbols {extra}")
    for ui, u in enumerate(unknowns):
        form: dict = {}
        for k, e in enumerate(eqs):
            cof = ScalarField(_cofactor(A, k, ui), fr.coords)
            if cof.is_zero():
                continue
            rest = {q: v for q, v in e.items() if isinstance(q, int)}
            form = _lin_add(form, _lin_scale(-cof / det_f, rest))
        der.known[(u[1], u[2])] = form
    # s(tau) from [r1, r2] tau = s(tau)
    eq_tau = der.commutator(0, 1, TAU)
    der.known[(2, TAU)] = _solve_for(eq_tau, ("d", 2, TAU))

    zero = ScalarField.constant(0.0, fr.coords)
    Ms = []
    for j in range(3):
        M = []
        for q in range(NY):
            form = der.known[(j, q)]
            bad = [k for k in form if not isinstance(k, int)]
            if bad:
                raise ConditionFailed(f"unresolved derivative {bad} in e_{j + 1}(y_{q + 1})")
            M.append([form.get(p, zero) for p in range(NY)])
        Ms.append(M)
    return LambdaASystem(fr, ups, Ms[0], Ms[1], Ms[2], det_f, eq2, abc)


def _raw_commutator_lam2(fr: Frame, known: dict, r1a1: dict, r2a2: dict) -> dict:
    """[r1, r2] lambda^2 - s(lambda^2) with s(lambda^1) and tau kept symbolic."""
    der = _Derivation(fr)
    der.known.update(known)
    one = ScalarField.constant(1.0, fr.coords)
    der.known[(2, LAM2)] = {TAU: one}
    der.known[(0, A1)] = _lin_add(r1a1, {("d", 2, LAM1): one})
    der.known[(1, A2)] = _lin_add(r2a2, {TAU: one})
    return der.commutator(0, 1, LAM2)


def _abc(eq1: dict, eq2: dict, s_lam1) -> tuple:
    """Normalize both s(lambda) relations to s(lambda^1) = -(G^3_12/G^3_21) tau + (A D + B a1 + C a2)/2."""
    out = []
    for e in (eq1, eq2):
        k = e[s_lam1]
        A = e.get(LAM1)
        B = e.get(A1)
        C = e.get(A2)
        zero = ScalarField.constant(0.0, k.coords)
        out += [-2 * (A or zero) / k, -2 * (B or zero) / k, -2 * (C or zero) / k]
    return tuple(out)


def lambda_a_expressions(sysla, lam1: ScalarField, lam2: ScalarField) -> list[ScalarField]:
    """The six first-order relations, as expressions vanishing on solutions.

    ``sysla`` is a LambdaASystem or a two-field partial frame in three dimensions;
    the relations themselves need no genericity.
    """
    fr = sysla.frame if isinstance(sysla, LambdaASystem) else bracket_completion(sysla)
    G = fr.tensors.gamma
    D = lam1 - lam2
    a1 = -directional(fr[1], lam1) - G[0][1][0] * D
    a2 = directional(fr[0], lam2) - G[1][0][1] * D
    y = {LAM1: lam1, LAM2: lam2, A1: a1, A2: a2}
    _, known, r1a1, r2a2 = _first_order(fr)

    def ev(form: dict) -> ScalarField:
        return sum((coef * y[q] for q, coef in form.items()), ScalarField.constant(0.0, fr.coords))

    s_lam1 = directional(fr[2], lam1)
    s_lam2 = directional(fr[2], lam2)
    return [
        directional(fr[0], lam1) - ev(known[(0, LAM1)]),
        directional(fr[1], lam2) - ev(known[(1, LAM2)]),
        directional(fr[1], a1) - ev(known[(1, A1)]),
        directional(fr[0], a2) - ev(known[(0, A2)]),
        directional(fr[0], a1) - s_lam1 - ev(r1a1),
        directional(fr[1], a2) - s_lam2 - ev(r2a2),
    ]


def lambda_a_residual(sysla, lam1: ScalarField, lam2: ScalarField,
                      reg: Region | None = None, tol: float = DEFAULT_TOL) -> Verdict:
    reg = reg or Region(sysla.frame.basepoint if isinstance(sysla, LambdaASystem) else sysla.basepoint)
    exprs = lambda_a_expressions(sysla, lam1, lam2)
    pts, vals, skipped = sample_fields(exprs, reg)
    return _verdict_vanishing("lambda_a_system", pts, np.max(np.abs(vals), axis=1), tol, skipped)


# ---------------------------------------------------------------- prolongation and dimension

MAX_ROUNDS = 6
AUX_DIST = 1e-2
ABS_FLOOR = 1e-9


def _mat_mul(A: list, B: list) -> list:
    n = len(A)
    zero = ScalarField.constant(0.0, A[0][0].coords)
    out = []
    for i in range(n):
        row = []
        for j in range(n):
            acc = zero
            for k in range(n):
                if A[i][k].is_zero() or B[k][j].is_zero():
                    continue
                acc = acc + A[i][k] * B[k][j]
            row.append(acc)
        out.append(row)
    return out


def curvature(sysla: LambdaASystem, j: int, k: int) -> list:
    """R_jk = e_j(M_k) - e_k(M_j) + M_k M_j - M_j M_k - sum_l c^l_jk M_l."""
    fr = sysla.frame
    Ms = sysla.matrices
    c = fr.tensors.c
    MkMj = _mat_mul(Ms[k], Ms[j])
    MjMk = _mat_mul(Ms[j], Ms[k])
    out = []
    for a in range(NY):
        row = []
        for b in range(NY):
            x = (directional(fr[j], Ms[k][a][b]) - directional(fr[k], Ms[j][a][b])
                 + MkMj[a][b] - MjMk[a][b])
            for l in range(3):
                if not c[j][k][l].is_zero():
                    x = x - c[j][k][l] * Ms[l][a][b]
            row.append(x)
        out.append(row)
    return out


def _derived_row(sysla: LambdaASystem, row: list, j: int) -> list:
    """Differentiating C y = 0 along e_j gives (e_j(C) + C M_j) y = 0."""
    fr = sysla.frame
    Mj = sysla.matrices[j]
    out = []
    for b in range(NY):
        x = directional(fr[j], row[b])
        for a in range(NY):
            if row[a].is_zero() or Mj[a][b].is_zero():
                continue
            x = x + row[a] * Mj[a][b]
        out.append(x)
    return out


def _aux_transports(sysla: LambdaASystem, bp: np.ndarray):
    """Points near the basepoint with fundamental matrices mapping y(bp) to y(p)."""
    fr = sysla.frame
    dirs = np.array([[1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0], [1.0, -1.0, 1.0]])
    E = fr.matrix_at(bp)
    speeds = np.linalg.norm(dirs @ E.T, axis=1)
    flat = [c for f in fr.fields for c in f] + [x for M in sysla.matrices for row in M for x in row]
    Y0 = np.hstack([np.tile(bp, (len(dirs), 1)), np.tile(np.eye(NY).reshape(-1), (len(dirs), 1))])
    A = dirs / speeds[:, None]

    def rhs(Y):
        vals = el.eval_fields(flat, Y[:, :3])
        Ef = vals[:, :9].reshape(-1, 3, 3)          # field k, component i
        Mf = vals[:, 9:].reshape(-1, 3, NY, NY)
        du = np.einsum("nk,nki->ni", A, Ef)
        Ma = np.einsum("nk,nkab->nab", A, Mf)
        Phi = Y[:, 3:].reshape(-1, NY, NY)
        return np.hstack([du, (Ma @ Phi).reshape(len(Y), -1)])

    Y = integrate_autonomous(rhs, Y0, AUX_DIST)
    return Y[:, :3], Y[:, 3:].reshape(-1, NY, NY)


@dataclass
class DimensionReport:
    dimension: int
    lambda_dimension: int
    rank: int
    rounds: int
    singular_values: list
    ranks_by_round: list


def _instances(rows: list, bp, aux_pts, aux_phi) -> tuple[np.ndarray, np.ndarray]:
    """Each row's constraints at the basepoint and at the transported auxiliary points.

    Rows are normalized by their largest instance; row scaling leaves the
    constraint space unchanged but keeps later rounds from swamping earlier ones.
    Returns (len(rows), 1 + len(aux_pts), NY) and the norms.
    """
    pts = np.vstack([bp[None, :], aux_pts])
    vals = el.eval_fields([x for r in rows for x in r], pts).reshape(len(pts), len(rows), NY)
    if not np.all(np.isfinite(vals)):
        raise DomainError("prolongation constraints undefined near the basepoint")
    inst = np.stack([vals[0]] + [vals[k + 1] @ aux_phi[k] for k in range(len(aux_pts))], axis=1)
    norms = np.max(np.linalg.norm(inst, axis=2), axis=1)
    return inst / np.where(norms > 0, norms, 1.0)[:, None, None], norms


def _numeric_rank(C: np.ndarray) -> tuple[int, np.ndarray]:
    if C.shape[0] == 0:
        return 0, np.zeros(0)
    sv = np.linalg.svd(C, compute_uv=False)
    return int(np.sum(sv > SV_TOL * sv[0])), sv


def flux_dimension_report(pf: PartialFrame, basepoint=None, reg: Region | None = None,
                          tol: float = DEFAULT_TOL) -> DimensionReport:
    """dim F(R)/F^triv from the rank of the prolonged lambda-a system.

    Solutions y span lambda(R) of dimension 5 - rank.  Each admissible pair
    (lambda^1, lambda^2) fixes the flux up to an additive constant vector
    (3 dimensions), so dim F(R) = dim lambda(R) + 3; trivial fluxes form a
    4-dimensional subspace, whence dim F(R)/F^triv = dim lambda(R) - 1.
    """
    if basepoint is not None:
        pf = pf.with_basepoint(basepoint)
    reg = reg or region_for(pf)
    sysla = build_lambda_a(pf, reg, tol)
    bp = np.asarray(pf.basepoint, dtype=float)
    aux_pts, aux_phi = _aux_transports(sysla, bp)
    M0 = el.eval_fields([x for M in sysla.matrices for row in M for x in row], bp[None, :])
    scale = max(1.0, float(np.max(np.abs(M0))))
    kept: list = []
    new: list = []
    for j, k in ((0, 1), (0, 2), (1, 2)):
        new.extend(curvature(sysla, j, k))
    ranks = []
    rank, sv = 0, np.zeros(0)
    for rnd in range(MAX_ROUNDS + 1):
        added = []
        new = [row for row in new if not all(x.is_zero() for x in row)]
        insts, norms = _instances(new, bp, aux_pts, aux_phi) if new else ([], [])
        for row, inst, norm in zip(new, insts, norms):
            # rows that vanish up to round-off carry no constraint
            if norm <= ABS_FLOOR * scale ** (rnd + 2):
                continue
            trial, tsv = _numeric_rank(np.vstack(kept + [inst]))
            if trial > rank:
                kept.append(inst)
                added.append(row)
                rank, sv = trial, tsv
        ranks.append(rank)
        if not added or rank == NY:
            break
        if rnd == MAX_ROUNDS:
            raise RankUnstable(f"rank still growing after {MAX_ROUNDS} rounds: {ranks}")
        new = [_derived_row(sysla, row, j) for row in added for j in range(3)]
    lam_dim = NY - rank
    return DimensionReport(lam_dim - 1, lam_dim, rank, len(ranks), sv.tolist(), ranks)


def flux_dimension(pf: PartialFrame, basepoint=None, reg: Region | None = None,
                   tol: float = DEFAULT_TOL) -> int:
    return flux_dimension_report(pf, basepoint, reg, tol).dimension


# ---------------------------------------------------------------- non-hyperbolic analysis

@dataclass
class NonHypReport:
    classification: str
    equal_eigenvalues: bool
    eigenvalue_gap: float
    nonconstant: bool | None
    genvec_residual: float | None
    eigen_class: str
    consistent: bool


def generalized_eigenvector_expressions(F: VectorField, pf: PartialFrame,
                                        lam: ScalarField) -> list[ScalarField]:
    """grad_s F - (a^1 r1 + a^2 r2 + lambda s), with a^1 = -r2(lambda), a^2 = r1(lambda)."""
    fr = bracket_completion(pf)
    s = fr[2]
    a1 = -directional(pf[1], lam)
    a2 = directional(pf[0], lam)
    g = grad_along(s, F)
    return [g[k] - a1 * pf[0][k] - a2 * pf[1][k] - lam * s[k] for k in range(pf.dim)]


def nonhyp_analysis(pf: PartialFrame, F: VectorField, reg: Region | None = None,
                    tol: float = DEFAULT_TOL) -> NonHypReport:
    if pf.m != 2 or pf.dim != 3:
        raise NotApplicable("needs two fields in three dimensions")
    reg = reg or region_for(pf)
    ver = verify_flux(FluxCandidate(F), pf, reg, tol)
    if not ver.verdict.holds:
        raise ConditionFailed(f"flux does not verify (residual {ver.verdict.max_residual:.3e})")
    lam = ver.lambdas
    scale = 1.0 + np.max(np.abs(lam))
    gap = float(np.max(np.abs(lam[:, 0] - lam[:, 1])))
    es = eigen_classify(F, pf.basepoint)
    if gap >= tol * scale:
        return NonHypReport("StrictlyHyperbolic", False, gap, None, None, es.classification,
                            es.classification == "StrictlyHyperbolic")
    lam_f = recovered_lambdas(F, pf)[0]
    fr = bracket_completion(pf)
    grads = [directional(fr[k], lam_f) for k in range(3)]
    gexpr = generalized_eigenvector_expressions(F, pf, lam_f)
    pts, vals, _ = sample_fields(grads + gexpr, reg)
    slope = float(np.max(np.abs(vals[:, :3])))
    if slope < tol * scale:
        raise Inconsistent("equal eigenvalues must be non-constant for a non-trivial flux")
    Fn = np.max(np.abs(ver.lambdas)) + 1.0
    res = float(np.max(np.linalg.norm(vals[:, 3:], axis=1))) / Fn
    return NonHypReport("NonHyperbolic", True, gap, True, res, es.classification,
                        bool(es.classification == "NonHyperbolic" and res < tol))

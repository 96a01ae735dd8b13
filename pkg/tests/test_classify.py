
import numpy as np
import pytest

from fluxframe import classify as C
from fluxframe import corpus as K
from fluxframe.errors import DegenerateCoefficient, NotApplicable, NotRich, UnsupportedCase
from fluxframe.exprlang import eval_fields
from fluxframe.geometry import Frame, PartialFrame, bracket
from fluxframe.integrate import FrobeniusSystem, integrability_expressions

from conftest import UVW, pframe, sf, vf


def reg_of(pf, **kw):
    return C.region_for(pf, **kw)


def test_involutivity_examples():
    pf = pframe([("1", "0", "0"), ("0", "1", "0")], (0.5, 0.5, 0.5))
    v = C.involutivity_report(pf, reg_of(pf))
    assert v.holds and v.max_residual == 0.0
    pf = pframe([("1", "0", "v"), ("0", "1", "-u")], (0, 0, 0))
    v = C.involutivity_report(pf, reg_of(pf))
    assert not v.holds and v.max_residual > 0.5


def test_involutivity_cross_checked_by_determinant():
    # the bracket completion degenerates exactly at (1,2,3); nearby samples are independent
    pf = pframe([("v", "u", "w"), ("u", "w", "v")], (1, 2, 3))
    reg = reg_of(pf)
    v = C.involutivity_report(pf, reg)
    assert not v.holds
    b = bracket(pf[0], pf[1])
    dets = [abs(np.linalg.det(np.column_stack([pf[0].eval(p), pf[1].eval(p), b.eval(p)])))
            for p in reg.points()]
    assert dets[0] < 1e-12 and max(dets) > 1e-3
    assert v.max_residual > 1e-3


def test_richness_examples():
    pf = pframe([("u*v", "1", "w")], (1, 1, 1))
    assert C.richness_report(pf, reg_of(pf)).holds
    pf = pframe([("1", "-sqrt(u)", "0"), ("1", "sqrt(u)", "0")], (1, 0.5, 0.5))
    assert C.richness_report(pf, reg_of(pf)).holds
    pf = pframe([("0", "1", "u"), ("w", "0", "1")], (0.5, 0.5, 0.5))
    r = C.richness_report(pf, reg_of(pf))
    assert not r.holds
    b = C.bracket_completion(pf)
    assert abs(np.linalg.det(b.matrix_at(pf.basepoint))) > 1e-3


def test_commuting_report():
    pf = pframe([("1", "0", "0"), ("w", "1", "0")], (1, 1, 2))
    assert C.commuting_report(pf, reg_of(pf)).holds
    pf = pframe([("1", "-sqrt(u)", "0"), ("1", "sqrt(u)", "0")], (1, 0.5, 0.5))
    assert not C.commuting_report(pf, reg_of(pf)).holds


def test_sh_necessary_examples():
    pf = pframe([("1", "0", "0"), ("0", "1", "0")], (0.5, 0.5, 0.5))
    v, case = C.sh_necessary(pf, reg_of(pf))
    assert v.holds and case == "rich"
    pf = pframe([("1", "0", "w"), ("0", "1", "-9/8*ln(w) + u")], (1, 1, 1))
    v, case = C.sh_necessary(pf, reg_of(pf))
    assert v.holds and case == "noninvolutive_m2n3"
    pf = pframe([("1", "0", "0"), ("w", "1", "0")], (1, 1, 2))
    v, case = C.sh_necessary(pf, reg_of(pf))
    assert v.holds and case == "rich"


def test_sh_necessary_rejects_noninvolutive_triples():
    pf = PartialFrame([vf("1", "0", "0")], (0, 0, 0))
    v, case = C.sh_necessary(pf, reg_of(pf))
    assert v.holds and case == "single"
    from fluxframe.exprlang import Coords
    from fluxframe.geometry import VectorField
    co = Coords(("x", "y", "z", "t"))
    fields = [VectorField.parse(t, co) for t in
              (("1", "0", "0", "y"), ("0", "1", "0", "-x"), ("0", "0", "1", "x"))]
    pf4 = PartialFrame(fields, (0.1, 0.2, 0.3, 0.4))
    with pytest.raises(UnsupportedCase):
        C.sh_necessary(pf4, reg_of(pf4))


SHEAR = [("1", "0", "0"), ("0", "1", "0"), ("v", "0", "1")]


def test_a_lambda_shear_frame():
    pf = pframe(SHEAR, (0.1, 0.2, 0.3))
    rep = C.a_lambda_analysis(pf, reg_of(pf))
    A0 = np.array([[e.eval(pf.basepoint) for e in row] for row in rep.matrix])
    assert np.allclose(A0, [[1, 0, -1], [0, 0, 0], [0, 0, 0]])
    assert rep.rank == 1
    assert rep.column_identity_residual < 1e-9


def test_a_lambda_rich_frame_not_applicable():
    pf = pframe([("1", "0", "0"), ("0", "1", "0"), ("0", "0", "1")], (0, 0, 0))
    with pytest.raises(NotApplicable):
        C.a_lambda_analysis(pf, reg_of(pf))


def test_m3_compat_shear_degenerate():
    pf = pframe(SHEAR, (0.1, 0.2, 0.3))
    with pytest.raises(DegenerateCoefficient):
        C.m3_compat_residuals(pf, reg_of(pf))


RANK1 = [("1", "0", "0"), ("exp(w)", "1", "0"), ("v^3*w", "0", "1")]


def test_m3_compat_rank_one_frame():
    pf = pframe(RANK1, (0.1, 1.5, 0.3))
    reg = reg_of(pf)
    rep = C.a_lambda_analysis(pf, reg)
    assert rep.rank == 1 and rep.forced == "lambda1_eliminable"
    res = C.m3_compat_residuals(pf, reg)
    assert len(res) == 6 and max(res) < 1e-8


@pytest.mark.parametrize("fields", [RANK1, [("1", "0", "v*w"), ("w*v", "1", "0"), ("v^2+w^3", "u", "1")]])
def test_m3_compat_matches_generic_integrability(fields):
    # r_i(L^s) = phi_i^s (L2 - L3); its expanded conditions are (L2 - L3) times the six expressions
    pf = pframe(fields, (0.1, 1.5, 0.3))
    fr = Frame(pf.fields, pf.basepoint)
    phi = C.m3_phi(fr)
    co = UVW.extend(("L2", "L3"))
    D = (C.ScalarField.coordinate("L2", co) - C.ScalarField.coordinate("L3", co))
    rhs = [[phi[i][s].rebase(co) * D for i in range(3)] for s in range(2)]
    sys = FrobeniusSystem(fr.fields, ("L2", "L3"), rhs)
    generic = integrability_expressions(sys, fr)
    six = C.m3_compat_expressions(fr)
    rng = np.random.default_rng(0)
    pts = np.hstack([pf.basepoint + 0.1 * rng.uniform(-1, 1, (16, 3)), rng.uniform(-1, 1, (16, 2))])
    g = eval_fields(generic, pts)
    e = eval_fields(six, pts[:, :3])
    scale = 1 + np.max(np.abs(g))
    assert np.max(np.abs(g - (pts[:, 3] - pts[:, 4])[:, None] * e)) / scale < 1e-9


def test_multiplicity_partition():
    pf = pframe([("1", "0", "0"), ("0", "1", "0")], (0.5, 0.5, 0.5))
    assert C.multiplicity_partition(pf, reg_of(pf)) == []
    pf = pframe([("1", "0", "0"), ("w", "1", "0")], (1, 1, 2))
    assert C.multiplicity_partition(pf, reg_of(pf)) == []
    pf = pframe([("1", "0", "v"), ("0", "1", "u")], (0.3, 0.2, 0.1))
    assert C.multiplicity_partition(pf, reg_of(pf)) == [{1, 2}]
    pf = pframe([("0", "1", "u"), ("w", "0", "1")], (0.5, 0.5, 0.5))
    with pytest.raises(NotRich):
        C.multiplicity_partition(pf, reg_of(pf))


def test_noninv_identities_examples():
    pf = K.get("dim3").partial_frame()
    ids = C.noninv_m2n3_identities(pf, reg_of(pf))
    assert ids.nonhyp_identity.holds and ids.completion_agreement
    pf = pframe([("v", "u", "w"), ("u", "w", "v")], (1, 2, 4))
    ids = C.noninv_m2n3_identities(pf, reg_of(pf))
    assert not ids.nonhyp_identity.holds and ids.completion_agreement
    pf = K.get("nomist").partial_frame()
    ids = C.noninv_m2n3_identities(pf, reg_of(pf))
    assert not ids.generic.holds and ids.completion_agreement
    _, vals, _ = C.sample_fields([C.generic_expression(C.bracket_completion(pf))], reg_of(pf))
    assert np.max(np.abs(vals)) < 1e-9


def test_noninv_identities_not_applicable():
    pf = pframe([("1", "0", "0"), ("0", "1", "0")], (0, 0, 0))
    with pytest.raises(NotApplicable):
        C.noninv_m2n3_identities(pf, reg_of(pf))


def _scaled(case, rng):
    pf = case.partial_frame()
    fields = []
    for r in pf.fields:
        a = rng.uniform(0.5, 1.5, 4)
        alpha = sf(" + ".join(f"{float(x)!r}*{t}" for x, t in zip(a, ("1", "u^2", "v^2", "w^2"))))
        fields.append(r.scale(alpha))
    return PartialFrame(fields, pf.basepoint)


@pytest.mark.parametrize("case", K.CASES + K.AUXILIARY, ids=lambda c: c.name)
def test_scaling_invariance(case):
    rng = np.random.default_rng(42)
    pf = case.partial_frame()
    q = _scaled(case, rng)
    reg = reg_of(pf)
    assert C.involutivity_report(pf, reg).holds == C.involutivity_report(q, reg).holds
    assert C.richness_report(pf, reg).holds == C.richness_report(q, reg).holds
    a, ca = C.sh_necessary(pf, reg)
    b, cb = C.sh_necessary(q, reg)
    assert (a.holds, ca) == (b.holds, cb)


@pytest.mark.parametrize("seed", range(3))
def test_full_frames_always_involutive(seed):
    from conftest import random_frame
    rng = np.random.default_rng(seed)
    pf = pframe(random_frame(rng), (0, 0, 0))
    assert C.involutivity_report(pf, reg_of(pf)).holds


@pytest.mark.parametrize("seed", range(3))
def test_a_lambda_column_identity_random(seed):
    rng = np.random.default_rng(50 + seed)
    from conftest import random_frame
    pf = pframe(random_frame(rng), (0, 0, 0))
    A = C.a_lambda_matrix(pf)
    _, vals, _ = C.sample_fields([e for row in A for e in row], reg_of(pf))
    Av = vals.reshape(-1, 3, 3)
    assert np.max(np.abs(Av.sum(axis=2))) < 1e-9


def test_region_points_deterministic():
    r = C.Region((0, 0, 0), 0.1, 8, 3)
    assert np.array_equal(r.points(), C.Region((0, 0, 0), 0.1, 8, 3).points())
    assert np.array_equal(r.points()[0], [0, 0, 0])
    with pytest.raises(ValueError):
        C.Region((0, 0, 0), -1.0)

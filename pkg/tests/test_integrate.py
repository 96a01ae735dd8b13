import numpy as np
import pytest

from fluxframe import classify as C
from fluxframe.errors import DomainError, LoopNotClosed, NotInvolutive, NotRich
from fluxframe.flux import flux_system
from fluxframe.geometry import PartialFrame, bracket
from fluxframe.integrate import (DataSlice, FrobeniusSystem, PathSpec, flow, holonomy_residual,
                                 integrability_residual, rescale_commuting, slice_for,
                                 square_loop, staircase, transport, transport_to)

from conftest import pframe, sf, vf

E1, E2 = vf("1", "0", "0"), vf("0", "1", "0")


def test_flow_closed_form():
    r = vf("0", "1", "u")
    for p, eps in [((0.3, -0.2, 1.0), 0.7), ((2.0, 1.0, -1.0), -0.4)]:
        q = flow(r, p, eps)
        assert np.allclose(q, (p[0], p[1] + eps, p[2] + p[0] * eps), atol=1e-12)


def test_flow_zero_time():
    p = np.array([0.1, 0.2, 0.3])
    assert np.array_equal(flow(vf("v", "u^2", "1"), p, 0.0), p)


def test_flow_semigroup():
    r = vf("v", "-u + w/3", "sin(u)")
    p = (0.2, 0.1, -0.3)
    assert np.allclose(flow(r, flow(r, p, 0.4), 0.35), flow(r, p, 0.75), atol=1e-9)


@pytest.mark.parametrize("eps", [0.1, 0.5, 1.0])
def test_flow_linear_accuracy(eps):
    # u' = v, v' = -u, w' = 2w
    r = vf("v", "-u", "2*w")
    p = np.array([0.7, -0.4, 0.3])
    c, s = np.cos(eps), np.sin(eps)
    exact = (p[0] * c + p[1] * s, -p[0] * s + p[1] * c, p[2] * np.exp(2 * eps))
    assert np.max(np.abs(flow(r, p, eps) - exact)) < 1e-9


def test_flow_leaving_domain():
    with pytest.raises(DomainError):
        flow(vf("-1", "sqrt(u)", "0"), (0.5, 0, 0), 1.0)


def test_transport_zero_rhs_constant():
    sys = FrobeniusSystem([E1, E2], ("phi",), [[0, 0]])
    sl = DataSlice([2], (0.1, 0.2, 0.3), [sf("w^2 + 1")])
    end, phi = transport(sys, sl, staircase([0.4, -0.3], (0.1, 0.2, 0.3)))
    assert np.allclose(end, (0.5, -0.1, 0.3), atol=1e-12)
    assert phi[0] == pytest.approx(0.3 ** 2 + 1, abs=1e-12)


def test_transport_basis_lambda_independent_of_v():
    # r2(lambda^1) = 0: data on the slice v = 0.5 carries over unchanged
    sys = FrobeniusSystem([E2], ("lam1",), [[0]])
    sl = DataSlice([0, 2], (0.5, 0.5, 0.5), [sf("sin(3*w) + u*w")])
    for t in (-0.4, 0.2, 0.9):
        start = (0.7, 0.5, 0.2)
        end, phi = transport(sys, sl, PathSpec([(0, abs(t)) if t > 0 else ((-1.0,), -t)], start))
        assert end[1] == pytest.approx(0.5 + t, abs=1e-12)
        assert phi[0] == pytest.approx(np.sin(0.6) + 0.14, abs=1e-10)


def test_transport_start_must_be_on_slice():
    sys = FrobeniusSystem([E1], ("phi",), [[0]])
    sl = DataSlice([1, 2], (0, 0, 0), [sf("1")])
    with pytest.raises(ValueError):
        transport(sys, sl, staircase([0.1], (0.5, 0, 0)))


def test_holonomy_zero_rhs():
    sys = FrobeniusSystem([E1, E2], ("phi",), [[0, 0]])
    sl = DataSlice([2], (0, 0, 0), [sf("w")])
    assert holonomy_residual(sys, sl, square_loop(0, 1, 2, 0.1, (0, 0, 0))) == 0.0


def test_holonomy_potential_system():
    # h_j = r_j(P) for the potential P = sin(u) v + w u^2 on commuting fields
    r1, r2 = vf("1", "0", "0"), vf("0", "1", "v")
    sys = FrobeniusSystem([r1, r2], ("phi",),
                          [["cos(u)*v + 2*u*w", "sin(u) + v*u^2"]])
    sl = DataSlice([2], (0.2, 0.1, 0.3), [sf("0")])
    assert C.commuting_report(PartialFrame([r1, r2], (0.2, 0.1, 0.3)),
                              C.Region((0.2, 0.1, 0.3))).holds
    res = holonomy_residual(sys, sl, square_loop(0, 1, 2, 0.3, (0.2, 0.1, 0.3)))
    assert res < 1e-8


def test_holonomy_area_law():
    sys = FrobeniusSystem([E1, E2], ("phi",), [["v", "0"]])
    sl = DataSlice([2], (0, 0, 0), [sf("0")])
    eps = np.array([0.02, 0.04, 0.08])
    d = [holonomy_residual(sys, sl, square_loop(0, 1, 2, e, (0, 0, 0))) for e in eps]
    assert np.allclose(d, eps ** 2, rtol=1e-6)
    slope = np.polyfit(np.log(eps), np.log(d), 1)[0]
    assert abs(slope - 2) < 0.1


def test_holonomy_open_loop():
    sys = FrobeniusSystem([E1, vf("0", "1", "u")], ("phi",), [[0, 0]])
    sl = DataSlice([2], (0.5, 0, 0), [sf("0")])
    # flows of non-commuting fields do not close a control-space square
    with pytest.raises(LoopNotClosed):
        holonomy_residual(sys, sl, square_loop(0, 1, 2, 0.2, (0.5, 0, 0)))


def test_integrability_zero_rhs():
    sys = FrobeniusSystem([E1, E2], ("phi",), [[0, 0]])
    assert integrability_residual(sys, C.Region((0, 0, 0))) == 0.0


def test_integrability_flux_system_ex1():
    pf = pframe([("1", "0", "0"), ("w", "1", "0")], (1, 1, 2))
    sys = flux_system(pf, [sf("-1/w"), sf("0")])
    assert integrability_residual(sys, C.region_for(pf)) < 1e-8
    bad = flux_system(pf, [sf("v"), sf("0")])
    assert integrability_residual(bad, C.region_for(pf)) > 0.5


def test_integrability_needs_involution():
    sys = FrobeniusSystem([vf("1", "0", "v"), vf("0", "1", "-u")], ("phi",), [[0, 0]])
    with pytest.raises(NotInvolutive):
        integrability_residual(sys, C.Region((0, 0, 0)))


def test_path_independence_integrable_system():
    pf = pframe([("1", "0", "0"), ("w", "1", "0")], (1, 1, 2))
    sys = flux_system(pf, [sf("-1/w"), sf("0")])
    sl = slice_for(pf.fields, pf.basepoint, [sf("0")] * 3)
    targets = pf.basepoint + np.array([[0.1, -0.05, 0.08], [-0.07, 0.09, -0.04]])
    a = transport_to(sys, sl, targets, [0, 1])
    b = transport_to(sys, sl, targets, [1, 0])
    assert np.max(np.abs(a - b)) < 1e-7


def _rescaled_bracket_residual(pf, alphas, pts, h=1e-4):
    out = 0.0
    for p in pts:
        a = [al.exact(p[None, :])[0] for al in alphas]
        R = [r.eval(p) for r in pf.fields]

        def d(al, r):
            return (al.exact((p + h * r)[None, :])[0] - al.exact((p - h * r)[None, :])[0]) / (2 * h)

        B = bracket(pf[0], pf[1]).eval(p)
        val = a[0] * a[1] * B + a[0] * d(alphas[1], R[0]) * R[1] - a[1] * d(alphas[0], R[1]) * R[0]
        out = max(out, float(np.max(np.abs(val))))
    return out


def test_rescale_commuting_ex2():
    pf = pframe([("1", "-sqrt(u)", "0"), ("1", "sqrt(u)", "0")], (1, 0.5, 0.5))
    reg = C.Region(pf.basepoint, 0.05, 8, 1)
    alphas = rescale_commuting(pf, reg, grid_n=5)
    assert all(np.all(a.values > 0) for a in alphas)
    res = _rescaled_bracket_residual(pf, alphas, reg.points())
    assert res < 1e-6
    # the raw bracket is far from zero
    assert np.max(np.abs(bracket(pf[0], pf[1]).eval(pf.basepoint))) > 0.5


def test_rescale_commuting_trivial_cases():
    pf = pframe([("1", "0", "0"), ("w", "1", "0")], (1, 1, 2))
    reg = C.Region(pf.basepoint, 0.05, 4, 0)
    for a in rescale_commuting(pf, reg, grid_n=4):
        assert np.allclose(a.values, 1.0, atol=1e-12)
    pf1 = pframe([("u", "1", "w")], (1, 1, 1))
    (a,) = rescale_commuting(pf1, C.Region(pf1.basepoint, 0.05, 4, 0), grid_n=4)
    assert np.allclose(a.values, 1.0)


def test_rescale_commuting_requires_rich():
    pf = pframe([("0", "1", "u"), ("w", "0", "1")], (0.5, 0.5, 0.5))
    with pytest.raises(NotRich):
        rescale_commuting(pf, C.region_for(pf))


def test_slice_transversality():
    sl = slice_for([E1, E2], (0, 0, 0))
    assert sl.free == (2,) and sl.transversal([E1, E2])
    assert not DataSlice([0], (0, 0, 0)).transversal([E1, E2])


def test_pathspec_validation():
    with pytest.raises(ValueError):
        PathSpec([(0, -1.0)], (0, 0, 0))
    with pytest.raises(ValueError):
        PathSpec([(0, 1.0)], (0, 0, 0), loop=True).coefficients(2)

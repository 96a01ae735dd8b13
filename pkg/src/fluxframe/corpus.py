"""Built-in example frames with expected results.

Provenance tags: [PUBLISHED] values are transcribed from the source
examples; [DERIVED] values were computed independently here.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exprlang import Coords
from .geometry import PartialFrame, VectorField

UVW = Coords(("u", "v", "w"))


@dataclass(frozen=True)
class FluxFamily:
    """Linear family sum_k c_k F_k with eigenvalues linear in the c_k."""
    name: str
    basis: tuple            # tuple of 3-tuples of expression strings
    lambdas: tuple          # per basis flux: tuple of m eigenvalue strings
    third: tuple | None = None   # per basis flux: third eigenvalue string
    provenance: str = "[PUBLISHED]"


@dataclass(frozen=True)
class NonHypFamily:
    """c * F with lambda^1 = lambda^2 = c * lam; s is the generalized eigenvector."""
    name: str
    flux: tuple
    lam: str
    s: tuple
    s_coeffs: tuple          # (mu, k1, k2): grad_s F = c*(mu s + k1 r1 + k2 r2)
    provenance: str = "[PUBLISHED]"


@dataclass(frozen=True)
class CorpusCase:
    name: str
    frame: tuple
    basepoint: tuple
    expected: dict
    families: tuple = ()
    nonhyp: tuple = ()
    note: str = ""
    coords: Coords = field(default=UVW)

    def partial_frame(self) -> PartialFrame:
        return PartialFrame([VectorField.parse(r, self.coords) for r in self.frame],
                            self.basepoint)


def _c(**kw):
    return kw


CASES: tuple[CorpusCase, ...] = (
    CorpusCase(
        "basis", (("1", "0", "0"), ("0", "1", "0")), (0.5, 0.5, 0.5),
        _c(involutive=True, rich=True, commuting=True, sh_case="rich", sh_necessary=True,
           multiplicity=[]),
        families=(FluxFamily("quadratic", (("u^2/2", "v^2/2", "0"),), (("u", "v"),), ("0",),
                             "[DERIVED]"),),
        note="[PUBLISHED] rich frame; lambda^1 depends on (u, w) only"),
    CorpusCase(
        "ex1", (("1", "0", "0"), ("w", "1", "0")), (1.0, 1.0, 2.0),
        _c(involutive=True, rich=True, commuting=True, sh_case="rich", sh_necessary=True,
           multiplicity=[]),
        families=(FluxFamily("strict", (("v - u/w", "0", "-1/w - ln(w)"),),
                             (("-1/w", "0"),), ("(1-w)/w^2",)),),
        note="[PUBLISHED] w != 0; lambda^1 = phi(w, v - u/w)"),
    CorpusCase(
        "ex2", (("1", "-sqrt(u)", "0"), ("1", "sqrt(u)", "0")), (1.0, 0.5, 0.5),
        _c(involutive=True, rich=True, commuting=False, sh_case="rich", sh_necessary=True,
           multiplicity=[]),
        families=(FluxFamily("strict", (("v", "u^2/2 + w", "0"),),
                             (("-sqrt(u)", "sqrt(u)"),), ("0",)),),
        note="[PUBLISHED] second field sign corrected to +sqrt(u); u > 0"),
    CorpusCase(
        "dim0", (("0", "1", "u"), ("w", "0", "1")), (0.5, 0.5, 0.5),
        _c(involutive=False, rich=False, sh_case="noninvolutive_m2n3", sh_necessary=True,
           dimension=0, nonhyp_identity=False, generic=True),
        note="[PUBLISHED] all fluxes trivial"),
    CorpusCase(
        "dim1", (("v", "u", "w"), ("u", "w", "v")), (1.0, 2.0, 4.0),
        _c(involutive=False, rich=False, sh_case="noninvolutive_m2n3", sh_necessary=True,
           dimension=1, nonhyp_identity=False, generic=True),
        families=(FluxFamily(
            "strict",
            (("(-(u^2)/2 - u*v)/(u+v+w)^2", "(-(u+v)*(u+w) - v^2/2)/(u+v+w)^2",
              "(v*w + w^2/2)/(u+v+w)^2"),),
            (("(u-v)/(u+v+w)^2", "(v-w)/(u+v+w)^2"),), ("0",)),),
        note="[PUBLISHED] one-parameter family"),
    CorpusCase(
        "dim2", (("-1", "0", "v+1"), ("w/(v^2-1)", "-1", "u")), (0.5, 2.0, 0.5),
        _c(involutive=False, rich=False, sh_case="noninvolutive_m2n3", sh_necessary=True,
           dimension=2, nonhyp_identity=False, generic=True),
        families=(FluxFamily(
            "strict",
            (("((v-1)*u + w)*expint(v-1) - exp(1-v)*u",
              "((v-1)^2*expint(v-1) - (3*v+2)*exp(1-v))/2",
              "(v+1)*((1-v)*u - w)*expint(v-1) + (2*(v+1)*u + w)*exp(1-v)"),
             ("u*v + w", "v^2/2", "u*(1-v^2) - v*w")),
            (("-(2*expint(v-1) + exp(1-v))", "(v-1)*expint(v-1) + v*exp(1-v)"),
             ("-1", "v")),
            ("exp(1-v)", "1")),),
        note="[PUBLISHED] expint is int_1^inf exp(-t x)/t dt; basepoint needs v > 1"),
    CorpusCase(
        "dim3", (("1", "sqrt(w)", "0"), ("u", "0", "-w")), (0.5, 0.5, 1.0),
        _c(involutive=False, rich=False, sh_case="noninvolutive_m2n3", sh_necessary=True,
           dimension=3, nonhyp_identity=True, generic=True),
        families=(FluxFamily(
            "strict",
            (("3*u*v*sqrt(w) - v^2 - u^2*w", "u*v*w", "v*w^(3/2) - u*w^2"),
             ("v", "u*w", "0"),
             ("u*sqrt(w) - v", "0", "w^(3/2)/3")),
            (("v*sqrt(w) + u*w", "3/2*v*sqrt(w) - u*w"),
             ("sqrt(w)", "0"),
             ("0", "sqrt(w)/2")),
            ("2*v*sqrt(w) - 3*u*w", "-sqrt(w)", "sqrt(w)")),),
        nonhyp=(NonHypFamily("nonhyp", ("u*sqrt(w) - v/2", "u*w/2", "w^(3/2)/3"),
                             "sqrt(w)/2", ("1", "sqrt(w)/2", "0"), ("sqrt(w)/2", "sqrt(w)/4", "0")),),
        note="[PUBLISHED] w > 0; non-hyperbolic member c1 = 0, c2 = c3/2"),
    CorpusCase(
        "dim4a", (("1", "0", "v"), ("0", "1", "-u")), (0.3, 0.2, 0.1),
        _c(involutive=False, rich=False, sh_case="noninvolutive_m2n3", sh_necessary=True,
           dimension=4, nonhyp_identity=False, generic=True),
        families=(FluxFamily(
            "strict",
            (("2*u*(w + u*v)", "2*v*(w - u*v)", "w^2 + 3*u^2*v^2"),
             ("2*u^2", "w - u*v", "2*u^2*v"),
             ("u*v + w", "-2*v^2", "2*u*v^2"),
             ("0", "2*v", "w - u*v")),
            (("2*(w + 3*u*v)", "2*(w - 3*u*v)"), ("4*u", "-2*u"), ("2*v", "-4*v"), ("0", "2")),
            ("2*w", "u", "-v", "1")),),
        note="[PUBLISHED] all non-trivial fluxes strictly hyperbolic; "
             "lambda^1 of the third member sign-corrected to +2v by the trace"),
    CorpusCase(
        "dim4b", (("1", "0", "2*v"), ("0", "1", "u")), (0.3, 0.2, 0.1),
        _c(involutive=False, rich=False, sh_case="noninvolutive_m2n3", sh_necessary=True,
           dimension=4, nonhyp_identity=True, generic=True),
        families=(FluxFamily(
            "strict",
            (("u*(u*v - w)", "-2*v*(2*u*v - w)", "-6*u*v*(u*v - w) - 2*w^2"),
             ("u^2", "2*(2*u*v - w)", "2*u^2*v"),
             ("w - u*v", "2*v^2", "2*u*v^2"),
             ("0", "v", "2*u*v - w")),
            (("-w", "2*(w - 3*u*v)"), ("2*u", "2*u"), ("v", "4*v"), ("0", "1")),
            ("2*(3*u*v - 2*w)", "2*u", "-2*v", "-1")),),
        nonhyp=(NonHypFamily("nonhyp", ("u^2", "2*(2*u*v - w)", "2*u^2*v"), "2*u",
                             ("0", "0", "-1"), ("2*u", "0", "2"), "[DERIVED]"),),
        note="[PUBLISHED] non-hyperbolic member c2 alone; generalized eigenvector data [DERIVED]"),
    CorpusCase(
        "nomist", (("1", "0", "w"), ("0", "1", "-9/8*ln(w) + u")), (1.0, 1.0, 1.0),
        _c(involutive=False, rich=False, sh_case="noninvolutive_m2n3", sh_necessary=True,
           dimension="NonGeneric", nonhyp_identity=False, generic=False),
        families=(FluxFamily(
            "strict",
            (("exp(-u)/8", "exp(-u)*w", "exp(-u)*w*(u - 9/8*ln(w) + 9/8)"),),
            (("-exp(-u)/8", "exp(-u)*(u - 9/8*ln(w))"),), ("0",)),),
        note="[PUBLISHED] w > 0; genericity identity vanishes identically"),
)

AUXILIARY: tuple[CorpusCase, ...] = (
    CorpusCase(
        "rich_multiplicity", (("1", "0", "v"), ("0", "1", "u")), (0.3, 0.2, 0.1),
        _c(involutive=True, rich=True, commuting=True, sh_case="rich", sh_necessary=False,
           multiplicity=[{1, 2}]),
        note="[DERIVED] commuting pair whose covariant derivatives leave the span"),
    CorpusCase(
        "m3_shear", (("1", "0", "0"), ("0", "1", "0"), ("v", "0", "1")), (0.1, 0.2, 0.3),
        _c(involutive=True, rich=False, a_lambda_rank=1),
        note="[DERIVED] full non-rich frame; A_lambda rank 1"),
)


def get(name: str) -> CorpusCase:
    for c in CASES + AUXILIARY:
        if c.name == name:
            return c
    raise KeyError(name)


def family_flux(case: CorpusCase, fam: FluxFamily, coeffs) -> tuple[VectorField, list, object]:
    """Combination sum_k c_k F_k with its eigenvalue fields."""
    from .exprlang import ScalarField, parse
    co = case.coords
    coeffs = [float(c) for c in np.atleast_1d(coeffs)]
    zero = ScalarField.constant(0.0, co)
    F = [zero] * 3
    lam = [zero] * len(case.frame)
    third = zero
    for k, ck in enumerate(coeffs):
        F = [a + ck * parse(t, co) for a, t in zip(F, fam.basis[k])]
        lam = [a + ck * parse(t, co) for a, t in zip(lam, fam.lambdas[k])]
        if fam.third is not None:
            third = third + ck * parse(fam.third[k], co)
    return VectorField(F, co), lam, (third if fam.third is not None else None)

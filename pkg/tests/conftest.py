import numpy as np
import pytest

from fluxframe.exprlang import Coords, ScalarField, parse
from fluxframe.geometry import PartialFrame, VectorField

UVW = Coords(("u", "v", "w"))


def vf(*texts):
    return VectorField.parse(texts, UVW)


def sf(text):
    return parse(text, UVW)


def pframe(fields, bp):
    return PartialFrame([vf(*r) for r in fields], bp)


def random_poly(rng, degree=2, scale=0.5):
    """Random polynomial in u, v, w of total degree <= degree, as text."""
    terms = []
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            for c in range(degree + 1 - a - b):
                coef = rng.uniform(-scale, scale)
                terms.append(f"({coef!r})*u^{a}*v^{b}*w^{c}")
    return " + ".join(terms)


def random_frame(rng):
    """Polynomial perturbation of the identity: invertible near the origin."""
    rows = []
    for i in range(3):
        comps = []
        for k in range(3):
            p = random_poly(rng, 2, 0.3)
            comps.append(f"{int(i == k)} + {p}" if i == k else p)
        rows.append(tuple(comps))
    return rows


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def const(x):
    return ScalarField.constant(float(x), UVW)


ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")

"""Command line front end: job configs, commands, corpus runs and JSON reports."""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import __version__
from . import classify as C
from . import corpus as K
from . import flux as X
from .errors import (ConfigError, ExprSyntaxError, FluxFrameError, NonGeneric,
                     UnknownIdentifier)
from .exprlang import Coords, ScalarField, parse
from .geometry import PartialFrame, VectorField
from .integrate import slice_for

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 2, 3
SECTIONS = ("frame", "flux", "lambda", "region")


# ---------------------------------------------------------------- configs

@dataclass(frozen=True)
class JobConfig:
    coords: tuple
    basepoint: tuple
    frame: tuple                 # tuple of expression tuples
    flux: tuple | None = None
    lambdas: tuple | None = None
    half_width: float = 0.1
    samples: int = 64
    seed: int = 42
    tol: float = C.DEFAULT_TOL

    @property
    def dim(self) -> int:
        return len(self.coords)

    def coord_obj(self) -> Coords:
        return Coords(self.coords)

    def partial_frame(self) -> PartialFrame:
        co = self.coord_obj()
        return PartialFrame([VectorField.parse(r, co) for r in self.frame], self.basepoint)

    def flux_field(self) -> VectorField | None:
        return None if self.flux is None else VectorField.parse(self.flux, self.coord_obj())

    def lambda_fields(self) -> list[ScalarField] | None:
        if self.lambdas is None:
            return None
        return [parse(t, self.coord_obj()) for t in self.lambdas]

    def region(self) -> C.Region:
        return C.Region(self.basepoint, self.half_width, self.samples, self.seed)


def _split_top(text: str, line: int, col0: int) -> list[tuple[str, int]]:
    """Split on commas outside parentheses; returns (piece, column) pairs."""
    out, depth, start = [], 0, 0
    for k, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise ConfigError("unbalanced ')'", line, col0 + k)
        elif ch == "," and depth == 0:
            out.append((text[start:k], col0 + start))
            start = k + 1
    if depth != 0:
        raise ConfigError("unbalanced '('", line, col0 + len(text))
    out.append((text[start:], col0 + start))
    return [(p.strip(), c + len(p) - len(p.lstrip())) for p, c in out]


def _vector(value: str, line: int, col: int) -> list[tuple[str, int]]:
    v = value.strip()
    col += len(value) - len(value.lstrip())
    if not (v.startswith("[") and v.endswith("]")):
        raise ConfigError("expected a bracketed list [a, b, ...]", line, col)
    items = _split_top(v[1:-1], line, col + 1)
    if any(not p for p, _ in items):
        raise ConfigError("empty entry in list", line, col)
    return items


def _check_expr(text: str, coords: Coords, line: int, col: int) -> str:
    try:
        parse(text, coords)
    except ExprSyntaxError as e:
        raise ConfigError(f"{e}", line, col + e.position) from None
    except UnknownIdentifier as e:
        raise ConfigError(f"{e}", line, col + e.position) from None
    return text


def _number(text: str, kind, line: int, col: int):
    try:
        return kind(text)
    except ValueError:
        raise ConfigError(f"expected {kind.__name__}, found {text!r}", line, col) from None


def parse_config(text: str) -> JobConfig:
    section = None
    entries: dict = {s: {} for s in SECTIONS}
    for ln, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].rstrip()
        if not body.strip():
            continue
        lead = len(body) - len(body.lstrip())
        stripped = body.strip()
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ConfigError("unterminated section header", ln, lead + 1)
            name = stripped[1:-1].strip()
            if name not in SECTIONS:
                raise ConfigError(f"unknown section [{name}]", ln, lead + 1)
            section = name
            continue
        if "=" not in body:
            raise ConfigError("expected key = value", ln, lead + 1)
        if section is None:
            raise ConfigError("entry outside of a section", ln, lead + 1)
        key, value = body.split("=", 1)
        vcol = len(key) + 2
        key = key.strip()
        if key in entries[section]:
            raise ConfigError(f"duplicate key {key!r}", ln, lead + 1)
        entries[section][key] = (value, ln, vcol)
    fr = entries["frame"]
    if not fr:
        raise ConfigError("missing [frame] section", 1, 1)
    if "coords" in fr:
        v, ln, col = fr["coords"]
        names = tuple(p for p, _ in _split_top(v, ln, col))
        try:
            coords = Coords(names)
        except ValueError as e:
            raise ConfigError(str(e), ln, col) from None
    else:
        coords = Coords(("u", "v", "w"))
        names = coords.names
    if "basepoint" not in fr:
        raise ConfigError("[frame] needs a basepoint", 1, 1)
    v, ln, col = fr["basepoint"]
    bp = tuple(_number(p, float, ln, c) for p, c in _split_top(v, ln, col))
    if len(bp) != coords.dim:
        raise ConfigError(f"basepoint needs {coords.dim} entries", ln, col)
    fields = []
    k = 1
    while f"r{k}" in fr:
        v, ln, col = fr[f"r{k}"]
        items = _vector(v, ln, col)
        if len(items) != coords.dim:
            raise ConfigError(f"r{k} needs {coords.dim} components", ln, col)
        fields.append(tuple(_check_expr(p, coords, ln, c) for p, c in items))
        k += 1
    for key, (v, ln, col) in fr.items():
        if key not in ("coords", "basepoint") and not (key[:1] == "r" and key[1:].isdigit()
                                                       and 1 <= int(key[1:]) < k):
            raise ConfigError(f"unexpected key {key!r} in [frame]", ln, 1)
    if not fields:
        raise ConfigError("[frame] needs at least r1", 1, 1)
    flux = None
    if entries["flux"]:
        for key, (v, ln, col) in entries["flux"].items():
            if key != "F":
                raise ConfigError(f"unexpected key {key!r} in [flux]", ln, 1)
            items = _vector(v, ln, col)
            if len(items) != coords.dim:
                raise ConfigError(f"F needs {coords.dim} components", ln, col)
            flux = tuple(_check_expr(p, coords, ln, c) for p, c in items)
    lambdas = None
    if entries["lambda"]:
        lam = []
        for i in range(1, len(fields) + 1):
            if f"lambda{i}" not in entries["lambda"]:
                raise ConfigError(f"[lambda] needs lambda1 .. lambda{len(fields)}", 1, 1)
            v, ln, col = entries["lambda"][f"lambda{i}"]
            lam.append(_check_expr(v.strip(), coords, ln, col + len(v) - len(v.lstrip())))
        for key, (v, ln, col) in entries["lambda"].items():
            if not (key.startswith("lambda") and key[6:].isdigit() and 1 <= int(key[6:]) <= len(fields)):
                raise ConfigError(f"unexpected key {key!r} in [lambda]", ln, 1)
        lambdas = tuple(lam)
    opts = {}
    kinds = {"half_width": float, "samples": int, "seed": int, "tol": float}
    for key, (v, ln, col) in entries["region"].items():
        if key not in kinds:
            raise ConfigError(f"unexpected key {key!r} in [region]", ln, 1)
        opts[key] = _number(v.strip(), kinds[key], ln, col)
    cfg = JobConfig(tuple(names), bp, tuple(fields), flux, lambdas, **opts)
    try:
        cfg.region()
        cfg.partial_frame()
    except ValueError as e:
        raise ConfigError(str(e), 1, 1) from None
    except FluxFrameError as e:
        raise ConfigError(str(e), 1, 1) from None
    return cfg


def serialize_config(cfg: JobConfig) -> str:
    lines = ["[frame]", "coords = " + ", ".join(cfg.coords),
             "basepoint = " + ", ".join(repr(float(x)) for x in cfg.basepoint)]
    for k, r in enumerate(cfg.frame, start=1):
        lines.append(f"r{k} = [" + ", ".join(r) + "]")
    if cfg.flux is not None:
        lines += ["", "[flux]", "F = [" + ", ".join(cfg.flux) + "]"]
    if cfg.lambdas is not None:
        lines += ["", "[lambda]"] + [f"lambda{k} = {t}" for k, t in enumerate(cfg.lambdas, start=1)]
    lines += ["", "[region]", f"half_width = {cfg.half_width!r}", f"samples = {cfg.samples}",
              f"seed = {cfg.seed}", f"tol = {cfg.tol!r}"]
    return "\n".join(lines) + "\n"


def load_config(path: str) -> JobConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e.strerror}", 0, 0) from None
    return parse_config(text)


def config_from_case(case: K.CorpusCase, **opts) -> JobConfig:
    return JobConfig(case.coords.names, tuple(case.basepoint), tuple(case.frame), **opts)


# ---------------------------------------------------------------- reports

@dataclass
class Report:
    config_digest: str = ""
    verdicts: list = field(default_factory=list)
    eigen: dict | None = None
    dimension: int | None = None
    errors: list = field(default_factory=list)
    details: dict = field(default_factory=dict)
    failed: bool = False

    def add(self, v: C.Verdict, check: bool = True):
        self.verdicts.append(v)
        if check and not v.holds:
            self.failed = True

    def error(self, exc: Exception):
        self.errors.append({"type": type(exc).__name__, "message": str(exc)})
        self.failed = True

    def as_dict(self) -> dict:
        return {"tool_version": __version__, "config_digest": self.config_digest,
                "verdicts": [v.as_dict() for v in self.verdicts], "eigen": self.eigen,
                "dimension": self.dimension, "errors": self.errors, "details": self.details}


def _json(obj) -> str:
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return format(x, ".17g") if math.isfinite(x) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_json(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_json(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def emit_report(report: Report) -> str:
    return _json(report.as_dict())


REPORT_KEYS = ("tool_version", "config_digest", "verdicts", "eigen", "dimension", "errors", "details")


def validate_report(doc: dict) -> None:
    """Raise ValueError unless doc follows the report schema."""
    if tuple(doc.keys()) != REPORT_KEYS:
        raise ValueError(f"report keys {tuple(doc.keys())}")
    if not isinstance(doc["verdicts"], list) or not isinstance(doc["errors"], list):
        raise ValueError("verdicts and errors must be lists")
    for v in doc["verdicts"]:
        if tuple(v.keys()) != ("name", "holds", "max_residual", "witness"):
            raise ValueError(f"verdict keys {tuple(v.keys())}")
        if not isinstance(v["holds"], bool):
            raise ValueError("holds must be boolean")
    if doc["dimension"] is not None and not isinstance(doc["dimension"], int):
        raise ValueError("dimension must be an integer or null")


def _eigen_dict(es: X.Eigenstructure) -> dict:
    return {"class": es.classification,
            "eigenvalues": [[z.real, z.imag] for z in es.eigenvalues],
            "multiplicities": list(es.multiplicities),
            "generalized_eigenvector": None if es.generalized_eigenvector is None
            else [float(x) for x in es.generalized_eigenvector]}


def _digest(cfg: JobConfig | None, extra: str = "") -> str:
    text = (serialize_config(cfg) if cfg is not None else "") + extra
    return hashlib.sha256(text.encode()).hexdigest()


# ---------------------------------------------------------------- commands

def cmd_classify(cfg: JobConfig, rep: Report, **_):
    pf, reg, tol = cfg.partial_frame(), cfg.region(), cfg.tol
    inv = C.involutivity_report(pf, reg, tol)
    rep.add(inv, check=False)
    if inv.holds:
        rep.add(C.richness_report(pf, reg, tol), check=False)
        rep.add(C.commuting_report(pf, reg, tol), check=False)
    sh, case = C.sh_necessary(pf, reg, tol)
    sh.note = case
    rep.add(sh)
    rep.details["case"] = case
    if case == "rich":
        rep.details["multiplicity_partition"] = [sorted(g) for g in C.multiplicity_partition(pf, reg, tol)]
    if case == "noninvolutive_m2n3" and sh.holds:
        ids = C.noninv_m2n3_identities(pf, reg, tol)
        rep.add(ids.nonhyp_identity, check=False)
        rep.add(ids.generic, check=False)
        rep.details["completion_agreement"] = ids.completion_agreement


def cmd_verify(cfg: JobConfig, rep: Report, **_):
    pf, reg, tol = cfg.partial_frame(), cfg.region(), cfg.tol
    F = cfg.flux_field()
    if F is None:
        raise ConfigError("verify needs a [flux] section", 1, 1)
    lam = cfg.lambda_fields()
    ver = X.verify_flux(X.FluxCandidate(F, lam), pf, reg, tol)
    rep.add(ver.verdict)
    if ver.lambda_error is not None:
        rep.add(C.Verdict("lambda_match", ver.lambda_error < tol, ver.lambda_error))
    rep.eigen = _eigen_dict(X.eigen_classify(F, pf.basepoint))


def cmd_lambda_check(cfg: JobConfig, rep: Report, **_):
    pf, reg, tol = cfg.partial_frame(), cfg.region(), cfg.tol
    lam = cfg.lambda_fields()
    if lam is None:
        raise ConfigError("lambda-check needs a [lambda] section", 1, 1)
    if C.involutivity_report(pf, reg, tol).holds:
        rep.add(X.lambda_system_residual(pf, lam, reg, tol))
    elif pf.m == 2 and pf.dim == 3:
        rep.add(X.lambda_a_residual(pf, lam[0], lam[1], reg, tol))
    else:
        raise X.UnsupportedCase("eigenvalue checks cover involutive frames and two fields in 3D")


def cmd_flux_dim(cfg: JobConfig, rep: Report, **_):
    pf, reg, tol = cfg.partial_frame(), cfg.region(), cfg.tol
    try:
        r = X.flux_dimension_report(pf, reg=reg, tol=tol)
    except NonGeneric as e:
        rep.add(C.Verdict("generic", False, 0.0, tuple(cfg.basepoint), kind="nonvanishing"))
        rep.error(e)
        return
    rep.dimension = r.dimension
    rep.details.update({"lambda_dimension": r.lambda_dimension, "rank": r.rank,
                        "ranks_by_round": r.ranks_by_round, "singular_values": r.singular_values})


def cmd_construct(cfg: JobConfig, rep: Report, targets=(), **_):
    pf, reg, tol = cfg.partial_frame(), cfg.region(), cfg.tol
    lam = cfg.lambda_fields()
    F = cfg.flux_field()
    if lam is None or F is None:
        raise ConfigError("construct needs [lambda] and [flux] (slice data) sections", 1, 1)
    if not targets:
        raise ConfigError("construct needs at least one --target", 0, 0)
    sl = slice_for(pf.fields, pf.basepoint, list(F))
    res = X.construct_flux(pf, lam, sl, np.asarray(targets, dtype=float), reg, tol)
    rep.add(C.Verdict("path_independence", res.path_agreement < X.PATH_TOL, res.path_agreement))
    rep.details.update({"slice_free": list(sl.free), "targets": res.targets.tolist(),
                        "values": res.values.tolist()})


# ---------------------------------------------------------------- corpus

def _expect(rep_list, name, actual, expected, residual=0.0, witness=None):
    rep_list.append(C.Verdict(name, actual == expected, float(residual), witness,
                              note=f"expected {expected!r}, got {actual!r}"))


def genvec_relation_residual(case: K.CorpusCase, nh: K.NonHypFamily, c: float,
                             reg: C.Region) -> float:
    """Max |grad_s F - c (mu s + k1 r1 + k2 r2)| for the scaled non-hyperbolic flux."""
    co = case.coords
    pf = case.partial_frame()
    F = VectorField.parse(nh.flux, co).scale(c)
    s = VectorField.parse(nh.s, co)
    mu, k1, k2 = (parse(t, co) for t in nh.s_coeffs)
    g = X.grad_along(s, F)
    exprs = [g[k] - c * (mu * s[k] + k1 * pf[0][k] + k2 * pf[1][k]) for k in range(3)]
    _, vals, _ = C.sample_fields(exprs, reg)
    return float(np.max(np.abs(vals)))


def check_case(case: K.CorpusCase, samples: int = 64, seed: int = 42,
               tol: float = C.DEFAULT_TOL) -> list[C.Verdict]:
    """Compare one corpus case against its recorded expectations."""
    pf = case.partial_frame()
    reg = C.region_for(pf, samples=samples, seed=seed)
    exp = case.expected
    out: list[C.Verdict] = []
    tag = case.name
    inv = C.involutivity_report(pf, reg, tol)
    if "involutive" in exp:
        _expect(out, f"{tag}.involutive", inv.holds, exp["involutive"], inv.max_residual)
    if "rich" in exp:
        v = C.richness_report(pf, reg, tol)
        _expect(out, f"{tag}.rich", v.holds, exp["rich"], v.max_residual)
    if "commuting" in exp:
        v = C.commuting_report(pf, reg, tol)
        _expect(out, f"{tag}.commuting", v.holds, exp["commuting"], v.max_residual)
    if "sh_necessary" in exp or "sh_case" in exp:
        sh, shcase = C.sh_necessary(pf, reg, tol)
        if "sh_case" in exp:
            _expect(out, f"{tag}.sh_case", shcase, exp["sh_case"])
        if "sh_necessary" in exp:
            _expect(out, f"{tag}.sh_necessary", sh.holds, exp["sh_necessary"], sh.max_residual)
    if "multiplicity" in exp:
        part = C.multiplicity_partition(pf, reg, tol)
        _expect(out, f"{tag}.multiplicity", [set(g) for g in part], exp["multiplicity"])
    if "a_lambda_rank" in exp:
        rep = C.a_lambda_analysis(pf, reg, tol)
        _expect(out, f"{tag}.a_lambda_rank", rep.rank, exp["a_lambda_rank"],
                rep.column_identity_residual)
    if "nonhyp_identity" in exp or "generic" in exp:
        ids = C.noninv_m2n3_identities(pf, reg, tol)
        _expect(out, f"{tag}.nonhyp_identity", ids.nonhyp_identity.holds,
                exp.get("nonhyp_identity"), ids.nonhyp_identity.max_residual)
        _expect(out, f"{tag}.generic", ids.generic.holds, exp.get("generic"),
                ids.generic.max_residual)
        _expect(out, f"{tag}.completion_agreement", ids.completion_agreement, True)
    if "dimension" in exp:
        try:
            dim = X.flux_dimension(pf, reg=reg, tol=tol)
        except NonGeneric:
            dim = "NonGeneric"
        _expect(out, f"{tag}.dimension", dim, exp["dimension"])
    rng = np.random.default_rng(seed)
    for fam in case.families:
        coeffs = rng.uniform(0.5, 1.5, len(fam.basis)) * rng.choice([-1.0, 1.0], len(fam.basis))
        F, lam, _ = K.family_flux(case, fam, coeffs)
        ver = X.verify_flux(X.FluxCandidate(F, lam), pf, reg, tol)
        out.append(replace(ver.verdict, name=f"{tag}.{fam.name}.verify"))
        out.append(C.Verdict(f"{tag}.{fam.name}.lambdas", ver.lambda_error < tol, ver.lambda_error))
    for nh in case.nonhyp:
        c = float(rng.uniform(0.5, 2.0))
        F = VectorField.parse(nh.flux, case.coords).scale(c)
        r = X.nonhyp_analysis(pf, F, reg, tol)
        _expect(out, f"{tag}.{nh.name}.class", r.classification, "NonHyperbolic",
                r.genvec_residual or 0.0)
        res = genvec_relation_residual(case, nh, c, reg)
        out.append(C.Verdict(f"{tag}.{nh.name}.genvec_relation", res < tol, res))
    return out


def cmd_corpus(cfg, rep: Report, **_):
    samples = rep.details.pop("_samples", 64)
    seed = rep.details.pop("_seed", 42)
    tol = rep.details.pop("_tol", C.DEFAULT_TOL)
    cases = []
    for case in K.CASES + K.AUXILIARY:
        try:
            vs = check_case(case, samples, seed, tol)
        except FluxFrameError as e:
            rep.error(e)
            cases.append({"name": case.name, "passed": False, "failures": [type(e).__name__]})
            continue
        for v in vs:
            rep.add(v)
        fails = [v.name for v in vs if not v.holds]
        cases.append({"name": case.name, "passed": not fails, "failures": fails,
                      "max_residual": max((v.max_residual for v in vs if v.holds
                                           and v.kind == "vanishing"), default=0.0)})
    rep.details["cases"] = cases


COMMANDS = {"classify": cmd_classify, "verify": cmd_verify, "lambda-check": cmd_lambda_check,
            "flux-dim": cmd_flux_dim, "construct": cmd_construct, "corpus": cmd_corpus}


# ---------------------------------------------------------------- entry point

def _parse_target(text: str) -> tuple:
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad target {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fluxframe", description=__doc__)
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("config", nargs="?")
    p.add_argument("--tol", type=float)
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--half-width", type=float, dest="half_width")
    p.add_argument("--json", action="store_true")
    p.add_argument("--target", type=_parse_target, action="append", default=[])
    return p


def _text(rep: Report, command: str) -> str:
    lines = []
    for v in rep.verdicts:
        if v.name in ("involutive", "rich", "commuting"):
            lines.append(f"{v.name}: {'yes' if v.holds else 'no'}")
        else:
            state = "holds" if v.holds else "fails"
            lines.append(f"{v.name}: {state} (residual {v.max_residual:.3e})")
    if rep.eigen is not None:
        vals = ", ".join(f"{a:.10g}" + (f"{b:+.3g}i" if b else "") for a, b in rep.eigen["eigenvalues"])
        lines.append(f"eigenvalues: {vals} ({rep.eigen['class']})")
    if command == "flux-dim" and rep.dimension is not None:
        lines.append(f"dimension: {rep.dimension}")
    if command == "construct":
        for t, val in zip(rep.details["targets"], rep.details["values"]):
            lines.append(f"F({', '.join(f'{x:.6g}' for x in t)}) = "
                         f"[{', '.join(f'{x:.12g}' for x in val)}]")
    if command == "corpus":
        lines = [f"{c['name']}: {'pass' if c['passed'] else 'FAIL ' + ', '.join(c['failures'])}"
                 for c in rep.details["cases"]]
    for e in rep.errors:
        lines.append(f"error: {e['type']}: {e['message']}")
    return "\n".join(lines)


def run(argv: Sequence[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    rep = Report()
    cfg = None
    try:
        if args.command != "corpus":
            if not args.config:
                raise ConfigError(f"{args.command} needs a config file", 0, 0)
            cfg = load_config(args.config)
            over = {k: getattr(args, k) for k in ("tol", "samples", "seed", "half_width")
                    if getattr(args, k) is not None}
            if over:
                cfg = replace(cfg, **over)
                cfg.region()
        else:
            rep.details.update({"_samples": args.samples or 64, "_seed": 42 if args.seed is None
                                else args.seed, "_tol": args.tol or C.DEFAULT_TOL})
        rep.config_digest = _digest(cfg, args.command + "".join(f"|{t}" for t in args.target))
        COMMANDS[args.command](cfg, rep, targets=args.target)
    except ConfigError as e:
        rep.errors.append({"type": "ConfigError", "message": str(e), "line": e.line, "column": e.column})
        print(emit_report(rep) if args.json else f"config error: {e}", file=out)
        return EXIT_CONFIG
    except ValueError as e:
        if cfg is None:
            rep.errors.append({"type": "ConfigError", "message": str(e), "line": 0, "column": 0})
            print(emit_report(rep) if args.json else f"config error: {e}", file=out)
            return EXIT_CONFIG
        rep.error(e)
    except FluxFrameError as e:
        rep.error(e)
    print(emit_report(rep) if args.json else _text(rep, args.command), file=out)
    return EXIT_FAIL if rep.failed else EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

import io
import json
from pathlib import Path

import pytest

from fluxframe import cli
from fluxframe import corpus as K
from fluxframe.errors import ConfigError

CONFIGS = Path(__file__).resolve().parent.parent / "demos" / "configs"


def run(*argv):
    out = io.StringIO()
    code = cli.run([str(a) for a in argv], out)
    return code, out.getvalue()


def test_classify_basis():
    code, text = run("classify", CONFIGS / "ex_basis.cfg")
    assert code == 0
    lines = text.splitlines()
    assert "involutive: yes" in lines and "rich: yes" in lines
    assert any(line.startswith("sh_necessary: holds") for line in lines)


def test_flux_dim_four():
    code, text = run("flux-dim", CONFIGS / "ex_dim4.cfg")
    assert code == 0 and "dimension: 4" in text.splitlines()


def test_flux_dim_nongeneric_exit_2():
    code, text = run("flux-dim", CONFIGS / "ex_nomist.cfg", "--json")
    doc = json.loads(text)
    cli.validate_report(doc)
    assert code == 2 and doc["dimension"] is None
    assert doc["errors"][0]["type"] == "NonGeneric"


def test_verify_and_eigen():
    code, text = run("verify", CONFIGS / "ex1.cfg", "--json")
    doc = json.loads(text)
    assert code == 0 and doc["eigen"]["class"] == "StrictlyHyperbolic"
    assert all(v["holds"] for v in doc["verdicts"])


def test_lambda_check():
    assert run("lambda-check", CONFIGS / "ex_dim4.cfg")[0] == 0
    assert run("lambda-check", CONFIGS / "ex_basis.cfg")[0] == 0


def test_verdict_failure_exit_2(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("[frame]\nbasepoint = 1, 1, 2\nr1 = [1, 0, 0]\nr2 = [w, 1, 0]\n"
                   "[flux]\nF = [u*v, w, u]\n")
    assert run("verify", cfg)[0] == 2


def test_construct_targets():
    code, text = run("construct", CONFIGS / "ex_basis.cfg", "--json",
                     "--target", "0.55,0.45,0.5", "--target", "0.45,0.6,0.52")
    doc = json.loads(text)
    assert code == 0
    vals = doc["details"]["values"]
    for (u, v, _), F in zip(doc["details"]["targets"], vals):
        assert F[0] == pytest.approx(u * u / 2 - 1 / 8, abs=1e-6)
        assert F[1] == pytest.approx(v * v / 2 - 1 / 8, abs=1e-6)


def test_corpus_all_pass():
    code, text = run("corpus")
    assert code == 0
    names = [line.split(":")[0] for line in text.splitlines()]
    assert names == [c.name for c in K.CASES + K.AUXILIARY]
    assert all(line.endswith(": pass") for line in text.splitlines())


def test_json_determinism():
    a = run("classify", CONFIGS / "ex_dim1.cfg", "--json", "--seed", "7")
    b = run("classify", CONFIGS / "ex_dim1.cfg", "--json", "--seed", "7")
    assert a == b
    c = run("classify", CONFIGS / "ex_dim1.cfg", "--json", "--seed", "8")
    assert json.loads(a[1])["config_digest"] != json.loads(c[1])["config_digest"]


def test_report_schema_and_empty_report():
    text = cli.emit_report(cli.Report())
    doc = json.loads(text)
    assert doc["verdicts"] == [] and tuple(doc) == cli.REPORT_KEYS
    cli.validate_report(doc)
    _, text = run("classify", CONFIGS / "ex_basis.cfg", "--json")
    cli.validate_report(json.loads(text))
    with pytest.raises(ValueError):
        cli.validate_report({"verdicts": []})


def test_floats_have_17_digits():
    rep = cli.Report()
    rep.details["x"] = 0.1
    rep.details["y"] = float("nan")
    doc = cli.emit_report(rep)
    assert '"x": 0.10000000000000001' in doc and '"y": null' in doc


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.cfg")), ids=lambda p: p.name)
def test_config_round_trip(path):
    cfg = cli.load_config(str(path))
    text = cli.serialize_config(cfg)
    again = cli.parse_config(text)
    assert again == cfg
    assert cli.serialize_config(again) == text


@pytest.mark.parametrize("text,line,marker", [
    ("[frame]\nbasepoint = 0, 0, 0\nr1 = [1, 0, 0]\nr2 = [0, 1, u+*v]\n", 4, "*"),
    ("[frame]\nbasepoint = 0, 0, 0\nr1 = [1, q, 0]\n", 3, "q"),
    ("[frame]\nbasepoint = 0, zero, 0\nr1 = [1, 0, 0]\n", 2, "z"),
    ("[frame]\nbasepoint = 0, 0, 0\nr1 = [1, (0, 0]\n", 3, "]"),
])
def test_config_error_position(text, line, marker):
    with pytest.raises(ConfigError) as ei:
        cli.parse_config(text)
    assert ei.value.line == line
    src = text.splitlines()[line - 1]
    assert src[ei.value.column - 1] == marker


def test_config_errors_structural():
    with pytest.raises(ConfigError):
        cli.parse_config("r1 = [1, 0, 0]\n")
    with pytest.raises(ConfigError):
        cli.parse_config("[nope]\n")
    with pytest.raises(ConfigError):
        cli.parse_config("[frame]\nbasepoint = 0, 0, 0\nr1 = [1, 0, 0]\nr2 = [2, 0, 0]\n")


def test_config_error_exit_3(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("[frame]\nbasepoint = 0, 0\nr1 = [1, 0, 0]\n")
    code, text = run("classify", cfg, "--json")
    doc = json.loads(text)
    assert code == 3 and doc["errors"][0]["type"] == "ConfigError" and doc["errors"][0]["line"] == 2
    assert run("classify", tmp_path / "missing.cfg")[0] == 3


def test_config_from_case():
    cfg = cli.config_from_case(K.get("dim3"))
    assert cli.parse_config(cli.serialize_config(cfg)) == cfg

from __future__ import annotations

import json
import stat
import sys
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pmicert import cli, config
from pmicert.certcore import CertTerm, SOSCertificate, SOSGram
from pmicert.io import (SchemaError, certificate_from_json, certificate_to_json, load_json,
                        measure_from_json, measure_to_json, moments_from_json, moments_to_json,
                        polymatrix_from_json, polymatrix_to_json, problem_from_json, problem_to_json)
from pmicert.measures import MeasureSpec
from pmicert.momentside import MomentSeq
from pmicert.polyalg import Poly, PolyMatrix


# -- serialisation round trips -----------------------------------------------------------

@given(st.lists(st.fractions(-5, 5, max_denominator=7), min_size=3, max_size=3))
def test_polymatrix_round_trip(c):
    t, y = Poly.x(0, 1, 1), Poly.y(0, 1, 1)
    H = PolyMatrix([[c[0] + t * y, c[1] * t], [c[1] * t, c[2] * y ** 2]])
    assert polymatrix_from_json(json.loads(json.dumps(polymatrix_to_json(H)))) == H


@pytest.mark.parametrize("nu", [MeasureSpec.box([-1, 0], [1, 2], "lebesgue"), MeasureSpec.gaussian(2),
                                MeasureSpec.discrete([[Fraction(1, 3)]], [2]), MeasureSpec.trivial()])
def test_measure_round_trip(nu):
    back = measure_from_json(measure_to_json(nu))
    assert back.identifier() == nu.identifier()
    assert back.moment((2,) * nu.m) == nu.moment((2,) * nu.m)


def test_problem_round_trip(data_dir):
    prob, order = problem_from_json(load_json(data_dir / "chain.json"))
    again, order2 = problem_from_json(json.loads(json.dumps(problem_to_json(prob, order))))
    assert again.F == prob.F and again.G == prob.G and order2 == order
    assert again.cliques.assignments == [[1], [2]]


def test_certificate_round_trip():
    g = SOSGram(1, 0, [(0,), (1,)], [], 1, np.array([[1.5, 0.25], [0.25, 2.0]]), shift=(1,))
    e = SOSGram(1, 0, [(0,)], [], 1, [[Fraction(1, 3)]])
    cert = SOSCertificate([CertTerm("sigma0", g), CertTerm("sigma", e, 0, 1)], {"hierarchy": "polya", "N": 1})
    back = certificate_from_json(json.loads(json.dumps(certificate_to_json(cert))))
    assert back.meta == cert.meta
    assert np.array_equal(back.terms[0].gram.Z, g.Z) and back.terms[0].gram.shift == (1,)
    assert back.terms[1].gram.Z[0, 0] == Fraction(1, 3) and back.terms[1].clique == 1


def test_moments_round_trip():
    S = MomentSeq.from_atoms([[0.5, -0.25]], [np.eye(2)], 1)
    back = moments_from_json(json.loads(json.dumps(moments_to_json(S))))
    assert all(np.allclose(back[a], S[a]) for a in S.S)


# -- schema errors -------------------------------------------------------------------------

def test_decode_error_is_line_anchored(data_dir):
    with pytest.raises(SchemaError, match=r"line 2:1"):
        load_json(data_dir / "malformed.json")


@pytest.mark.parametrize("obj,where", [
    ({"n": 1, "size": 1, "entries": [[[{"ax": [0], "c": 0.5}]]]}, "$.entries[0][0][0].c"),
    ({"n": 1, "size": 2, "entries": [[[], [{"ax": [1], "c": "1"}]], [[], []]]}, "$"),
    ({"n": 1, "size": 1, "entries": [[[{"ax": [0, 0], "c": "1"}]]]}, "$.entries[0][0][0].ax"),
    ({"n": 1, "entries": []}, "$.size"),
])
def test_polymatrix_schema_errors(obj, where):
    with pytest.raises(SchemaError) as exc:
        polymatrix_from_json(obj)
    assert exc.value.path == where


def test_problem_needs_consistent_dimensions(data_dir):
    obj = load_json(data_dir / "two_minus_x2.json")
    obj["measure"] = {"kind": "gaussian", "m": 2}
    with pytest.raises(SchemaError, match="measure has m = 2"):
        problem_from_json(obj)
    obj = load_json(data_dir / "chain.json")
    obj["cliques"]["assignments"] = [[1]]
    with pytest.raises(SchemaError, match="one list per clique"):
        problem_from_json(obj)


# -- command line --------------------------------------------------------------------------

def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_certify_and_verify(data_dir, tmp_path, capsys):
    cert = tmp_path / "cert.json"
    code, out, _ = run(["certify", data_dir / "two_minus_x2.json", "--out", cert], capsys)
    assert code == 0 and json.loads(out)["status"] == "certified"
    code, out, _ = run(["verify", data_dir / "two_minus_x2.json", cert], capsys)
    assert code == 0 and json.loads(out)["result"] == "PASS"
    obj = json.loads(cert.read_text())
    obj["terms"][0]["Z"][0][0] = 5.0
    cert.write_text(json.dumps(obj))
    code, out, _ = run(["verify", data_dir / "two_minus_x2.json", cert], capsys)
    assert code == 2 and json.loads(out)["result"] == "FAIL"


def test_certify_is_idempotent(data_dir, tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    run(["certify", data_dir / "membership_2x2.json", "--out", a], capsys)
    run(["certify", data_dir / "membership_2x2.json", "--out", b], capsys)
    assert a.read_bytes() == b.read_bytes()


def test_exit_codes(data_dir, capsys):
    assert run(["certify", data_dir / "minus_identity.json"], capsys)[0] == 2
    code, _, err = run(["certify", data_dir / "malformed.json"], capsys)
    assert code == 64 and "line 2" in err
    assert run([], capsys)[0] == 64
    assert run(["certify", data_dir / "robust_toy.json"], capsys)[0] == 64


def test_sparse_hierarchy_from_file(data_dir, capsys):
    code, out, _ = run(["certify", data_dir / "chain.json", "--hierarchy", "sparse"], capsys)
    assert code == 0 and json.loads(out)["residual"] <= 1e-6


def test_optimize_schedule(data_dir, capsys):
    code, out, _ = run(["optimize", data_dir / "robust_toy.json", "--schedule", "1..3"], capsys)
    rows = [ln.split() for ln in out.splitlines()[1:]]
    vals = [float(r[2]) for r in rows]
    assert code == 0 and [r[0] for r in rows] == ["1", "2", "3"]
    assert all(b <= a + 1e-8 for a, b in zip(vals, vals[1:]))
    assert "monotonicity" not in out
    code2, out2, _ = run(["optimize", data_dir / "robust_toy.json", "--schedule", "1..3", "--jobs", "2"], capsys)
    assert out2 == out


def test_moments_check(tmp_path, capsys):
    S = MomentSeq.from_atoms([[0.5], [-0.2]], [np.eye(2), np.diag([1.0, 3.0])], 2)
    good = tmp_path / "good.json"
    good.write_text(json.dumps(moments_to_json(S)))
    assert run(["moments", "check", good, "--C", "1", "--d", "2"], capsys)[0] == 0
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(moments_to_json(S.scaled_entry((2,), -1.0))))
    code, out, _ = run(["moments", "check", bad, "--C", "1", "--d", "2"], capsys)
    assert code == 2 and json.loads(out)["verdict"] == "fail"


def test_export_golden_and_file(data_dir, tmp_path, capsys):
    code, out, _ = run(["export", data_dir / "toy_conic.json"], capsys)
    assert code == 0 and out == (data_dir / "toy.dat-s").read_text()
    dest = tmp_path / "p.dat-s"
    run(["export", data_dir / "two_minus_x2.json", "--out", dest], capsys)
    assert dest.read_text().splitlines()[0].isdigit()


def test_external_solver_hook(data_dir, tmp_path, capsys, monkeypatch):
    monkeypatch.delenv(cli.SDPA_ENV, raising=False)
    assert run(["export", data_dir / "toy_conic.json", "--solve-external", "--out", tmp_path / "t"], capsys)[0] == 3
    fake = tmp_path / "fake_solver"
    fake.write_text(f"#!{sys.executable}\nimport shutil, sys\n"
                    f"shutil.copy({str(data_dir / 'toy.result')!r}, sys.argv[2])\n")
    fake.chmod(fake.stat().st_mode | stat.S_IEXEC)
    monkeypatch.setenv(cli.SDPA_ENV, str(fake))
    code, out, _ = run(["export", data_dir / "toy_conic.json", "--solve-external", "--out", tmp_path / "t"], capsys)
    rep = json.loads(out)
    assert code == 0 and max(rep["residuals"]["primal_feas"], rep["residuals"]["gap"]) <= 1e-9


def test_propmain_command(data_dir, capsys):
    code, out, _ = run(["propmain", data_dir / "membership_2x2.json", "--C", "1.5", "--kmax", "3",
                        "--density", "21"], capsys)
    assert code == 0 and json.loads(out)["k_bar"] is not None


def test_config_override(data_dir, tmp_path, capsys, monkeypatch):
    monkeypatch.setattr(config, "DEFAULTS", config.DEFAULTS)
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"nonsense": 1}))
    assert run(["--config", bad, "certify", data_dir / "two_minus_x2.json"], capsys)[0] == 64
    good = tmp_path / "good.json"
    good.write_text(json.dumps({"verification": 1e-3}))
    code, _, _ = run(["--config", good, "certify", data_dir / "two_minus_x2.json"], capsys)
    assert code == 0 and config.DEFAULTS.verification == 1e-3

import json
import math
import re
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
import yaml

from aphomog.lab.cli import main
from aphomog.lab.config import load_spec, make_source, spec_from_dict
from aphomog.lab.experiments import run_experiment
from aphomog.lab.report import (
    SCHEMA_VERSION,
    ExperimentReport,
    csv_text,
    emit,
    json_text,
    load_report,
    report_from_dict,
)

ROOT = Path(__file__).resolve().parents[1]
PERIODIC = {"name": "periodic", "d": 1, "m": 1, "n": 1, "mu": 1 / 3, "constant": 2.0,
            "modes": [{"wavenumber": 1.0, "amplitude": 1.0}]}


def write(tmp_path, spec, name="spec.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(spec))
    return p


def small_growth():
    return {"kind": "corrector_growth", "name": "tiny", "field": PERIODIC, "T_list": [4, 8, 16, 32],
            "h": 0.0625, "solver": {"rel_tol": 1e-9}}


def test_spec_validation():
    with pytest.raises(ValueError, match="unknown experiment kind"):
        spec_from_dict({"kind": "nope", "field": PERIODIC})
    with pytest.raises(ValueError, match="dyadic"):
        spec_from_dict({"kind": "converge", "field": PERIODIC, "eps_list": [0.1, 0.05, 0.02, 0.01]})
    with pytest.raises(ValueError, match="at least 4"):
        spec_from_dict({"kind": "corrector_growth", "field": PERIODIC, "T_list": [4, 8]})
    with pytest.raises(ValueError, match="two octaves"):
        spec_from_dict({"kind": "rho_decay", "field": PERIODIC, "L_list": [1, 1.5, 2]})
    with pytest.raises(ValueError, match="unknown config keys"):
        spec_from_dict({**small_growth(), "colour": "red"})
    with pytest.raises(ValueError, match="needs a field"):
        spec_from_dict({"kind": "converge", "eps_list": [0.1, 0.05, 0.025, 0.0125]})


def test_shipped_configs_parse():
    paths = sorted((ROOT / "configs").glob("*.yaml"))
    assert len(paths) >= 6
    kinds = {load_spec(p).kind for p in paths}
    assert kinds == {"converge", "corrector_growth", "rho_decay", "perturb", "holder_profile", "flux_identity"}


def test_make_source():
    f = make_source({"constant": 1.0, "sine": [[2.0, 1]]}, 1)
    assert f(np.array([[0.5]]))[0] == pytest.approx(3.0)
    assert make_source(4.0, 2)(np.zeros((3, 2))).tolist() == [4.0, 4.0, 4.0]


def test_empty_report_header_only_csv():
    rep = ExperimentReport("converge", columns=["eps", "diff_Hm1"])
    lines = csv_text(rep).splitlines()
    assert lines == ["schema_version,row,status,eps,diff_Hm1,error"]


def test_report_status_and_exit_codes():
    rep = ExperimentReport("x")
    assert rep.exit_code == 0
    rep.add_check("info", False, asserted=False)
    assert rep.exit_code == 0
    rep.add_check("maybe", None)
    assert rep.status == "inconclusive" and rep.exit_code == 2
    rep.add_check("bad", False)
    assert rep.exit_code == 1
    rep2 = ExperimentReport("x", rows=[{"status": "failed"}])
    assert rep2.exit_code == 2


def test_json_roundtrip(tmp_path):
    rep = run_experiment(spec_from_dict(small_growth()))
    txt = json_text(rep)
    assert json_text(report_from_dict(json.loads(txt))) == txt
    paths = emit(rep, tmp_path, ("json",))
    assert json_text(load_report(paths["json"])) == txt
    assert json.loads(txt)["schema_version"] == SCHEMA_VERSION


def test_non_finite_values_serialize():
    rep = ExperimentReport("x", columns=["v"], rows=[{"v": math.inf}])
    rep.add_fit("theta", status="degenerate", theta=math.inf)
    d = json.loads(json_text(rep))
    assert d["rows"][0]["v"] == "inf" and d["fits"][0]["theta"] == "inf"


def test_rows_carry_numerics():
    rep = run_experiment(spec_from_dict(small_growth()))
    for r in rep.rows:
        assert {"h", "extent", "rel_tol"} <= set(r)


def test_growth_svg_series(tmp_path):
    for m in (1, 2):
        spec = small_growth()
        spec["field"] = {**PERIODIC, "m": m}
        rep = run_experiment(spec_from_dict(spec))
        svg = (emit(rep, tmp_path, ("svg",), stem=f"g{m}")["svg"]).read_text()
        series = set(re.findall(r'id="series-(norm_l\d)"', svg))
        assert series == {f"norm_l{l}" for l in range(m + 1)}
        assert 'id="fit-cauchy"' in svg


def test_determinism(tmp_path):
    p = write(tmp_path, small_growth())
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert main(["growth", "--config", str(p), "--out", str(out), "--threads", str(1 + 2 * k)]) == 0
        outs.append(out)
    for fmt in ("csv", "json"):
        assert (outs[0] / f"corrector_growth.{fmt}").read_bytes() == (outs[1] / f"corrector_growth.{fmt}").read_bytes()
    svg = [re.findall(r'id="([^"]+)"', (o / "corrector_growth.svg").read_text()) for o in outs]
    assert svg[0] == svg[1]


def test_seed_changes_only_sampler(tmp_path):
    spec = load_spec(ROOT / "configs" / "rho_synthetic.yaml").with_seed(7)
    assert spec.seed == 7 and spec.sampler.seed == 7


def test_cli_exit_codes(tmp_path, capsys):
    ok = write(tmp_path, {"kind": "rho_decay", "synthetic": {"C": 3.0, "theta": 2.0}, "L_list": [1, 2, 4, 8],
                          "checks": {"expect_theta": 2.0}}, "ok.yaml")
    assert main(["rho", "--config", str(ok), "--out", str(tmp_path / "a")]) == 0
    assert "PASS" in capsys.readouterr().out
    bad = write(tmp_path, {"kind": "rho_decay", "synthetic": {"C": 3.0, "theta": 1.0}, "L_list": [1, 2, 4, 8],
                           "checks": {"expect_theta": 2.0}}, "bad.yaml")
    assert main(["rho", "--config", str(bad), "--out", str(tmp_path / "b")]) == 1
    inc = write(tmp_path, {"kind": "rho_decay", "synthetic": {"C": 0.0, "theta": 2.0}, "L_list": [1, 2, 4, 8],
                           "checks": {"expect_theta": 2.0}}, "inc.yaml")
    assert main(["rho", "--config", str(inc), "--out", str(tmp_path / "c")]) == 2
    # wrong subcommand for the config kind and a missing file are hard failures
    assert main(["growth", "--config", str(ok), "--out", str(tmp_path / "d")]) == 1
    assert main(["rho", "--config", str(tmp_path / "missing.yaml")]) == 1


def test_failed_rows_do_not_abort():
    spec = spec_from_dict({"kind": "converge", "field": PERIODIC, "eps_list": [0.25, 0.125, 0.0625, 0.03125],
                           "resolution": 16, "h": 0.01})
    spec.resolution = 4  # too coarse for h <= eps/16: every row fails, the sweep still returns
    rep = run_experiment(spec)
    assert len(rep.rows) == 4
    assert all(r["status"] == "failed" and "ResolutionTooCoarse" in r["error"] for r in rep.rows)
    assert rep.exit_code != 0


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "aphomog.lab", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "flux" in out.stdout

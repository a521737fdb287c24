import json
import math

import pytest

from breuer_major.cli import main
from breuer_major.config import load_config
from breuer_major.errors import ConfigError
from oracles import V_H2_GAUSSIAN

SMALL = """\
[functional]
name = product
m = 2

[model]
kind = spectral
family = hermite_gaussian
n = 1
m = 2
length_scale = 1.0

[chaos]
q_max = 2

[grid]
s = 16
N = 256

[seeds]
base = 7
replicates = 500

[verify]
variance_rel_tol = 0.25
levels = 2
"""


@pytest.fixture
def small(tmp_path):
    path = tmp_path / "small.ini"
    path.write_text(SMALL)
    return path


def _report(out):
    return json.loads((out / "report.json").read_text())


def _strip_created(out):
    return "\n".join(l for l in (out / "report.json").read_text().splitlines() if '"created"' not in l)


def test_variance_gaussian_h2(tmp_path, capsys):
    out = tmp_path / "v"
    assert main(["variance", "--config", "configs/gaussian_h2.ini", "--out", str(out)]) == 0
    rep = _report(out)
    assert rep["V"] == pytest.approx(V_H2_GAUSSIAN, abs=1e-5)
    assert rep["variance"]["V_per_chaos"] == {"2": pytest.approx(V_H2_GAUSSIAN, abs=1e-5)}
    assert (out / "variance_s.csv").read_text().splitlines()[0] == "s,V_s"
    assert "V = 3.54490770" in capsys.readouterr().out


def test_rank_product(small, tmp_path, capsys):
    assert main(["rank", "--config", str(small), "--out", str(tmp_path)]) == 0
    assert capsys.readouterr().out.strip() == "2"
    assert _report(tmp_path)["rank"] == 2


def test_verify_clt_too_few_replicates(small, tmp_path, capsys):
    assert main(["verify-clt", "--config", str(small), "--replicates", "10", "--out", str(tmp_path)]) == 1
    assert "replicates" in capsys.readouterr().err


def test_expand_and_second_chaos(small, tmp_path):
    assert main(["expand", "--config", str(small), "--out", str(tmp_path / "e")]) == 0
    assert _report(tmp_path / "e")["rank"] == 2
    assert main(["second-chaos", "--config", str(small), "--out", str(tmp_path / "c")]) == 0
    sc = _report(tmp_path / "c")["second_chaos"]
    assert sc["V2_trace"] == pytest.approx(0.75 * math.sqrt(math.pi), rel=1e-6)
    assert all(sc["checks"].values())


def test_covcheck(small, tmp_path):
    assert main(["covcheck", "--config", str(small), "--out", str(tmp_path / "ok")]) == 0
    bad = ["--override", "model.kind=power", "--override", "model.exponent=0.3",
           "--override", "functional.name=coordinate", "--override", "functional.m=1",
           "--override", "covcheck.R=10"]
    assert main(["covcheck", "--out", str(tmp_path / "bad"), *bad]) == 2
    assert _report(tmp_path / "bad")["c1"]["passed"] is False


def test_variance_refuses_without_c1(tmp_path):
    args = ["variance", "--out", str(tmp_path), "--override", "functional.name=coordinate",
            "--override", "functional.m=1", "--override", "model.kind=power",
            "--override", "model.decay_radius=10", "--override", "model.exponent=0.3"]
    assert main(args) == 2
    assert "refused" in _report(tmp_path)


def test_simulate_writes_fields(small, tmp_path):
    out = tmp_path / "sim"
    code = main(["simulate", "--config", str(small), "--replicates", "40",
                 "--override", "simulate.save_fields=2", "--out", str(out)])
    assert code == 0
    assert sorted(p.name for p in (out / "fields").iterdir()) == [
        "field_00000.bin", "field_00000.bin.json", "field_00001.bin", "field_00001.bin.json"]
    assert _report(out)["covariance"]["passed"]


def test_verify_clt_and_fclt_reproducible(small, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    code_a = main(["verify-clt", "--config", str(small), "--out", str(a), "--threads", "1"])
    code_b = main(["verify-clt", "--config", str(small), "--out", str(b), "--threads", "3"])
    assert code_a == code_b
    assert _strip_created(a) == _strip_created(b)
    assert (a / "observations.csv").read_bytes() == (b / "observations.csv").read_bytes()
    rep = _report(a)
    assert set(rep["clt"]["thresholds"]) >= {"variance_band", "ks_critical", "ks_level"}
    assert rep["config"]["seeds"] == {"base": 7, "replicates": 500}

    f = tmp_path / "f"
    assert main(["verify-fclt", "--config", str(small), "--out", str(f), "--threads", "2"]) in (0, 2)
    fr = _report(f)
    assert {"clt_per_y", "fdd", "increments"} <= set(fr)
    assert (f / "paths.csv").read_text().splitlines()[0] == "seed,y,Z"


@pytest.mark.parametrize("override, field", [
    ("chaos.q_max=x", "chaos.q_max"),
    ("grid.s=abc", "grid.s"),
    ("verify.ks_level=-1", "verify.ks_level"),
    ("bogus.key=1", "bogus"),
    ("grid.unknown=1", "grid.unknown"),
])
def test_malformed_config_names_field(small, tmp_path, capsys, override, field):
    assert main(["rank", "--config", str(small), "--override", override, "--out", str(tmp_path)]) == 1
    assert field in capsys.readouterr().err


def test_errors_exit_one(tmp_path, capsys):
    assert main(["rank", "--config", str(tmp_path / "missing.ini")]) == 1
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == 1
    bad = tmp_path / "bad.ini"
    bad.write_text("[functional\nname = x\n")
    assert main(["rank", "--config", str(bad), "--out", str(tmp_path)]) == 1
    m_mismatch = ["variance", "--out", str(tmp_path), "--config", "configs/gaussian_h2.ini",
                  "--override", "functional.name=product", "--override", "functional.m=2",
                  "--override", "functional.degree=none"]
    assert main(m_mismatch) == 1


def test_config_echo_includes_defaults(small):
    cfg = load_config(small)
    echo = cfg.echo()
    assert echo["verify"]["ks_level"] == 0.01
    assert echo["model"]["length_scale"] == 1.0
    assert echo["output"] == {}
    with pytest.raises(ConfigError):
        load_config(small, ["nodot=1"])

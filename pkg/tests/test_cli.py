import json
import math

import pytest

from fichera import cli


def test_parse_range():
    assert cli.parse_range("1:4") == [1.0, 2.0, 3.0, 4.0]
    assert cli.parse_range("0.5:3") == [0.5, 1.0, 2.0, 3.0]
    assert cli.parse_range("1,2.5,7") == [1.0, 2.5, 7.0]
    with pytest.raises(cli.UsageError):
        cli.parse_range("4:1")
    with pytest.raises(cli.UsageError):
        cli.parse_range("a:b")


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# sweep\np = 5\nR = 1:3\nratio=0.2\n")
    args = cli.make_parser().parse_args(["guide-sweep", "--config", str(cfg), "--p", "4"])
    conf = cli.build_config(args)
    assert conf.p == 4 and conf.R == [1.0, 2.0, 3.0] and conf.ratio == 0.2
    cfg.write_text("bogus = 1\n")
    with pytest.raises(cli.UsageError):
        cli.build_config(args)


def test_usage_errors_exit_1(tmp_path):
    assert cli.main(["guide-sweep", "--p", "0", "--out", str(tmp_path)]) == 1
    with pytest.raises(SystemExit) as e:
        cli.main(["nonsense"])
    assert e.value.code == 1


def test_guide_sweep_is_reproducible(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"o{k}"
        rc = cli.main(["guide-sweep", "--geometry", "broken", "--R", "1:3", "--p", "4",
                       "--out", str(out), "--cache", str(tmp_path / f"c{k}")])
        assert rc == 0
        outs.append(out)
    a = (outs[0] / "guide_broken.csv").read_bytes()
    assert a == (outs[1] / "guide_broken.csv").read_bytes()
    rec = json.loads((outs[0] / "guide_broken.json").read_text())
    assert rec["config"]["p"] == 4 and len(rec["config_hash"]) == 16
    assert a.startswith(b"# config_hash=" + rec["config_hash"].encode())


def test_lambda_curve_point_query(tmp_path, capsys):
    assert cli.main(["lambda-curve", "--x3", "0", "--out", str(tmp_path)]) == 0
    assert "0.500000000000 pi^2" in capsys.readouterr().out


def test_sturm_needs_curve(tmp_path):
    assert cli.main(["sturm", "--cache", str(tmp_path / "empty"), "--out", str(tmp_path)]) == 1


def test_certify_exit_codes(tmp_path):
    args = ["certify", "--p", "5", "--base", "2", "--out", str(tmp_path)]
    assert cli.main(args) == 0
    rec = json.loads((tmp_path / "certificate.json").read_text())
    assert rec["verdict"] is True and rec["J_psi0"] < 0
    assert cli.main(args + ["--data", "zero"]) == 2


def test_reproduce_single_criterion(tmp_path):
    rc = cli.main(["reproduce", "--criterion", "mixed-square", "--criterion", "2",
                   "--out", str(tmp_path)])
    assert rc == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert [c["number"] for c in rep["criteria"]] == [1, 2]
    assert "unverified" in (tmp_path / "report.md").read_text()
    assert cli.main(["reproduce", "--criterion", "99", "--out", str(tmp_path)]) == 1

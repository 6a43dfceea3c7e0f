import pytest

from gradedrt import cli
from gradedrt.quadrature import QuadratureError


def test_mesh_command_prints_report(capsys, tmp_path):
    out = tmp_path / "m.txt"
    assert cli.main(["mesh", "--domain", "square", "--N", "2", "--beta", "1", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "h_max = 0.7071067811865476" in text
    assert out.read_text().startswith("# gradedrt mesh v1")


def test_mesh_command_rejects_bad_values(capsys):
    assert cli.main(["mesh", "--N", "0"]) == 2
    assert "config error" in capsys.readouterr().err


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        cli.main(["interp", "--no-such-flag"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        cli.main([])
    assert exc.value.code == 2


def test_invalid_config_value_exit_code(capsys):
    assert cli.main(["interp", "--beta", "5"]) == 2
    assert "beta" in capsys.readouterr().err


def test_study_needs_config(capsys):
    assert cli.main(["study"]) == 2


def test_interp_to_csv(tmp_path, capsys):
    out = tmp_path / "e.csv"
    assert cli.main(["interp", "--beta", "1,2", "--N", "2,4,8", "--alpha", "0.3",
                     "--out", str(out)]) == 0
    assert "eoc[beta=2]" in capsys.readouterr().out
    assert out.read_text().startswith("# gradedrt")


def test_interp_to_stdout(capsys):
    assert cli.main(["interp", "--beta", "2", "--N", "2,4,8"]) == 0
    assert capsys.readouterr().out.startswith("# gradedrt")


def test_study_from_config(tmp_path, capsys):
    ini = tmp_path / "s.ini"
    ini.write_text("[study]\nkind = infsup\nbeta = 2\nN = 2, 4\ndomain = triangle\n")
    assert cli.main(["study", "--config", str(ini), "--out", str(tmp_path / "o.csv")]) == 0
    assert "inf_sup_min" in capsys.readouterr().out


def test_quadrature_failure_exit_code(monkeypatch, capsys):
    def boom(cfg, threads=None):
        raise QuadratureError("edge flux quadrature did not converge on 1 edges")
    monkeypatch.setattr(cli, "run_study", boom)
    assert cli.main(["interp", "--beta", "2", "--N", "2,4,8"]) == 3
    assert "did not converge" in capsys.readouterr().err

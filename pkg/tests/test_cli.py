"""Command line stages end to end on small two-dimensional configs."""

import pytest

from cmclab.cli import main

DISK = """\
[shape]
kind = ball
center = 0, 0

[grid]
origin = -1.3, -1.3
extents = 126, 126
h = 1/48

[family]
param = radius
values = 0.8, 1.0

[output]
dir = {out}
"""


def write_ini(tmp_path, text, name="exp.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_analyze_stage(tmp_path, capsys):
    ini = write_ini(tmp_path, DISK.format(out=tmp_path / "run"))
    assert main(["analyze", ini]) == 0
    lines = (tmp_path / "run" / "analyze.csv").read_text().splitlines()
    assert lines[3].startswith("param,volume,perimeter,H0,delta")
    assert len(lines) == 4 + 2
    assert "ok" in capsys.readouterr().out


def test_torsion_stage(tmp_path):
    ini = write_ini(tmp_path, DISK.format(out=tmp_path / "run"))
    assert main(["torsion", ini]) == 0
    lines = (tmp_path / "run" / "torsion.csv").read_text().splitlines()
    assert lines[3].startswith("param,f_min,grad_sup")
    # disk of radius r: f = (|x|^2 - r^2)/4, so the minimum is -r^2/4
    cells = lines[4].split(",")
    assert float(cells[1]) == pytest.approx(-0.16, abs=0.002)


def test_decompose_stage_writes_member_files(tmp_path):
    ini = write_ini(tmp_path, DISK.format(out=tmp_path / "run"))
    assert main(["decompose", ini]) == 0
    for tag in ("0p8", "1"):
        assert (tmp_path / "run" / f"balls_{tag}.csv").exists()
        assert (tmp_path / "run" / f"metrics_{tag}.csv").exists()
    assert not list((tmp_path / "run").glob("*.svg"))


def test_sweep_stage_with_three_members(tmp_path, capsys):
    text = DISK.format(out=tmp_path / "run").replace(
        "values = 0.8, 1.0", "values = 0.8, 0.9, 1.0"
    )
    ini = write_ini(tmp_path, text)
    assert main(["sweep", ini]) == 0
    out = capsys.readouterr().out
    assert "slope" in out and "sym_diff_rel" in out
    assert (tmp_path / "run" / "fits.csv").exists()
    assert (tmp_path / "run" / "sweep_sym_diff_rel.svg").exists()


def test_capillarity_stage(tmp_path):
    text = DISK.format(out=tmp_path / "run").replace(
        "[output]", "[pipeline]\ntorsion = false\ndecompose = false\n\n[capillarity]\ng = 2.0\n\n[output]"
    )
    ini = write_ini(tmp_path, text)
    assert main(["capillarity", ini]) == 0
    lines = (tmp_path / "run" / "capillarity.csv").read_text().splitlines()
    assert lines[3].startswith("param,lam,lam_boundary")
    # constant potential shifts the multiplier off H0 = 1/r by exactly c
    lam = float(lines[4].split(",")[1])
    assert lam == pytest.approx(1 / 0.8 + 2.0, abs=0.01)


def test_config_error_exits_one(tmp_path, capsys):
    ini = write_ini(tmp_path, DISK.format(out=tmp_path / "run") + "\n[bogus]\nk = 1\n")
    assert main(["analyze", ini]) == 1
    assert "config error" in capsys.readouterr().err


def test_member_failure_exits_two(tmp_path):
    text = DISK.format(out=tmp_path / "run").replace(
        "values = 0.8, 1.0", "values = 0.9, 1.29"
    )
    ini = write_ini(tmp_path, text)
    assert main(["analyze", ini]) == 2
    rows = (tmp_path / "run" / "analyze.csv").read_text().splitlines()[4:]
    assert rows[0].endswith(",") and "OutOfBox" in rows[1]


def test_dump_field_without_stage_exits_one(tmp_path, capsys):
    text = DISK.format(out=tmp_path / "run").replace(
        "[output]", "[pipeline]\ntorsion = false\ndecompose = false\n\n[output]"
    )
    ini = write_ini(tmp_path, text)
    assert main(["analyze", ini, "--dump-field", "f"]) == 1
    assert "torsion stage" in capsys.readouterr().err


def test_dump_and_overrides(tmp_path):
    ini = write_ini(tmp_path, DISK.format(out=tmp_path / "ignored"))
    out = tmp_path / "elsewhere"
    code = main(
        ["torsion", ini, "--out", str(out), "--h", "0.025", "--dump-field", "phi", "--dump-surface"]
    )
    assert code == 0
    assert (out / "phi_0p8.csv").exists()
    assert (out / "surface_1.csv").exists()
    assert "# h 0.025" in (out / "torsion.csv").read_text().splitlines()[1]

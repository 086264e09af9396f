from __future__ import annotations

import csv
import json
import subprocess
import sys
from pathlib import Path

import jsonschema
import pytest

from jumpgen import cli
from jumpgen.grid import read_field_csv

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _write(tmp_path: Path, data: dict, name: str = "cfg.json") -> Path:
    path = tmp_path / name
    path.write_text(json.dumps(data, indent=2))
    return path


def _files(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_resolvent_value_at_origin(tmp_path, capsys):
    out = tmp_path / "out"
    code = cli.main(["resolvent", "--config", str(CONFIGS / "resolvent_laplace.json"), "--lambda", "1",
                     "--out", str(out)])
    assert code == 0
    g = read_field_csv(out / "resolvent_spectral_lambda_1.csv")
    x = g.grid.axis()
    assert abs(g.values[x == 0][0] - 0.353553) < 1e-4
    side = json.loads((out / "resolvent_neumann_lambda_1.json").read_text())
    assert side["lambda"] == 1.0 and side["method"] == "neumann"
    report = json.loads((out / "report.json").read_text())
    assert report["lambda_grid"] == [1.0]
    assert all(c["pass"] for c in report["checks"])
    assert "[PASS] mass_identity" in capsys.readouterr().out


def test_missing_potential_is_usage_error(tmp_path, capsys):
    code = cli.main(["groundstate", "--config", str(CONFIGS / "groundstate_missing_potential.json"),
                     "--out", str(tmp_path)])
    assert code == 2
    err = capsys.readouterr().err
    assert "potential" in err
    # every message names the file and a line
    assert "groundstate_missing_potential.json:1: <root>:" in err
    assert "groundstate_missing_potential.json:4: lambdas[0]:" in err


def test_invalid_json_reports_line(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "grid": {"dim": 1,\n  "extent": 40\n')
    assert cli.main(["resolvent", "--config", str(path)]) == 2
    assert "bad.json:4: invalid JSON" in capsys.readouterr().err


def test_command_mismatch(tmp_path, capsys):
    data = json.loads((CONFIGS / "resolvent_laplace.json").read_text())
    data["command"] = "evolve"
    path = _write(tmp_path, data)
    assert cli.main(["resolvent", "--config", str(path)]) == 2
    assert "not 'resolvent'" in capsys.readouterr().err


@pytest.mark.parametrize("patch, needle", [
    ({"grid": {"dim": 1, "extent": 40, "points": 511}}, "points"),
    ({"lambdas": []}, "lambdas"),
    ({"tolerances": {"mass": 0}}, "tolerances.mass"),
    ({"kernel": {"family": "laplace"}}, "delta"),
])
def test_schema_rejections(tmp_path, capsys, patch, needle):
    data = json.loads((CONFIGS / "resolvent_laplace.json").read_text())
    data.update(patch)
    assert cli.main(["resolvent", "--config", str(_write(tmp_path, data))]) == 2
    assert needle in capsys.readouterr().err


def test_override_validation(tmp_path, capsys):
    cfg = str(CONFIGS / "resolvent_laplace.json")
    assert cli.main(["resolvent", "--config", cfg, "--lambda", "-1", "--out", str(tmp_path)]) == 2
    assert cli.main(["resolvent", "--config", cfg, "--seed", "3", "--out", str(tmp_path)]) == 2


def test_idempotent_outputs(tmp_path):
    data = json.loads((CONFIGS / "mc_laplace.json").read_text())
    data["grid"]["points"] = 512
    data["mc"]["n_walks"] = 20_000
    data["mc"]["walk_tails"] = [{"n": 4, "radii": [4, 5, 6, 7]}]
    path = _write(tmp_path, data)
    first, second = tmp_path / "a", tmp_path / "b"
    cli.main(["mc-oracle", "--config", str(path), "--out", str(first)])
    snap = _files(first)
    cli.main(["mc-oracle", "--config", str(path), "--out", str(first)])
    assert _files(first) == snap
    # a different seed changes the histogram
    cli.main(["mc-oracle", "--config", str(path), "--out", str(second), "--seed", "7"])
    assert _files(second) != snap


def test_report_schema_and_plot_data(tmp_path):
    out = tmp_path / "gs"
    assert cli.main(["groundstate", "--config", str(CONFIGS / "groundstate_laplace.json"), "--out", str(out)]) == 0
    schema = json.loads((Path(cli.__file__).parent / "schema" / "report.json").read_text())
    jsonschema.validate(json.loads((out / "report.json").read_text()), schema)
    plots = list((out / "plot_data").glob("*.csv"))
    assert plots
    with plots[0].open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x", "value", "log10_1p_abs_x", "log10_value"]
    assert len(rows) == 513


def test_evolve_and_verify_laplace(tmp_path):
    assert cli.main(["evolve", "--config", str(CONFIGS / "evolve_laplace.json"), "--out", str(tmp_path / "e")]) == 0
    manifest = json.loads((tmp_path / "e" / "trace" / "manifest.json").read_text())
    assert manifest["m"] == 0.5
    assert cli.main(["verify", "--config", str(CONFIGS / "verify_laplace.json"), "--out", str(tmp_path / "v")]) == 0


def test_verify_polynomial_passes(tmp_path, capsys):
    code = cli.main(["verify", "--config", str(CONFIGS / "verify_polynomial.json"), "--out", str(tmp_path)])
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["lambda_grid"] == [0.4, 0.2, 0.1, 0.05]
    assert code == 0, capsys.readouterr().err


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "jumpgen.cli", "groundstate", "--config",
         str(CONFIGS / "groundstate_missing_potential.json"), "--out", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 2
    assert "jumpgen: error:" in proc.stderr

import json
import shutil
from pathlib import Path

import pandas as pd
import pytest
import yaml

from farmtfp.cli import STEPS, main
from farmtfp.report import parse


def write_config(root: Path, **extra) -> Path:
    cfg = {"output": "out", "seed": 3,
           "input": {"records": "out/simulate/records.csv", "price_index": "out/simulate/prices.csv"},
           "simulate": {"countries": ["DE"], "N": 150, "T": 6}}
    cfg.update(extra)
    path = root / "cfg.yaml"
    path.write_text(yaml.safe_dump(cfg))
    return path


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipeline")
    path = write_config(root)
    for step in STEPS:
        assert main([step, "--config", str(path)]) == 0, step
    return root, path


def test_all_steps_write_manifests(pipeline):
    root, _ = pipeline
    for step in STEPS:
        man = json.loads((root / "out" / step / "manifest.json").read_text())
        assert man["step"] == step and man["outputs"]
    names = {p.name for p in (root / "out" / "report").iterdir()}
    for t in ("table2_production", "table2_structural", "table3_tfp_means", "table4_impact",
              "table5_synthesis", "tableA4_tfp_variation"):
        assert {f"{t}.csv", f"{t}.txt"} <= names


def test_table_cells_round_trip(pipeline):
    root, _ = pipeline
    md = json.loads((root / "out" / "step2" / "md.json").read_text())["DE"]
    table = pd.read_csv(root / "out" / "report" / "table2_structural.csv", dtype=str).set_index("Country")
    for f, b in md["beta"].items():
        cell = table.loc["DE", f"beta_{f}"]
        assert parse(cell.split(" ")[0]) == pytest.approx(b, abs=5e-4)
    assert parse(table.loc["DE", "rho"].split(" ")[0]) == pytest.approx(md["rho"], abs=5e-4)


def test_stale_artifact_refused(pipeline, tmp_path, capsys):
    root, _ = pipeline
    copy = tmp_path / "copy"
    shutil.copytree(root, copy)
    panel = copy / "out" / "construct" / "panel.csv"
    panel.write_text(panel.read_text() + "\n")
    assert main(["step1", "--config", str(copy / "cfg.yaml")]) == 2
    err = capsys.readouterr().err
    assert "hash mismatch" in err and "construct" in err


def test_missing_predecessor(tmp_path, capsys):
    path = write_config(tmp_path)
    assert main(["step1", "--config", str(path)]) == 2
    assert "run 'construct' first" in capsys.readouterr().err


def test_nothing_to_report(tmp_path, capsys):
    path = write_config(tmp_path)
    assert main(["report", "--config", str(path)]) == 2
    assert "nothing to report" in capsys.readouterr().err


def test_unknown_config_key(tmp_path, capsys):
    path = write_config(tmp_path, colapsed=True)
    assert main(["simulate", "--config", str(path)]) == 2
    assert "unknown config keys" in capsys.readouterr().err


def test_missing_config(tmp_path, capsys):
    assert main(["simulate", "--config", str(tmp_path / "nope.yaml")]) == 2


def test_bad_level(tmp_path, capsys):
    path = write_config(tmp_path)
    assert main(["simulate", "--config", str(path), "--level", "1.5"]) == 2


def test_unknown_country(pipeline, tmp_path, capsys):
    root, _ = pipeline
    copy = tmp_path / "copy"
    shutil.copytree(root, copy)
    assert main(["step1", "--config", str(copy / "cfg.yaml"), "--country", "XX"]) == 2
    assert "XX" in capsys.readouterr().err

import csv
import json

import pytest

from mergedindex.__main__ import main

SMALL = ["--warehouses", "1", "--items-per-warehouse", "30", "--orderlines-per-warehouse", "200"]


def test_run_prints_json(capsys):
    assert main(["run", "--structure", "traditional", "--ops", "10", *SMALL]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["structure"] == "traditional"
    assert float(report["traversals_per_op"]) == 2


def test_run_rejects_bad_combination(capsys):
    assert main(["run", "--structure", "matview", "--view-jt", "inner", "--jt", "full_outer", *SMALL]) == 2
    assert "inner view" in capsys.readouterr().err


def test_grid_writes_outputs(tmp_path, capsys):
    grid = tmp_path / "g.grid"
    grid.write_text("structure = merged, traditional\nphase = point\nops = 5\n"
                    "warehouses = 1\nitems_per_warehouse = 20\norderlines_per_warehouse = 100\n")
    assert main(["grid", str(grid), "--out", str(tmp_path / "out"), "--seed", "3", "--quiet"]) == 0
    with open(tmp_path / "out" / "results.csv") as f:
        rows = list(csv.DictReader(f))
    assert [r["structure"] for r in rows] == ["merged", "traditional"]
    assert {r["seed"] for r in rows} == {"3"}
    assert (tmp_path / "out" / "ratios.csv").exists()


def test_grid_parse_error_exit_code(tmp_path, capsys):
    grid = tmp_path / "bad.grid"
    grid.write_text("phase = point\nwat\n")
    assert main(["grid", str(grid), "--out", str(tmp_path)]) == 2
    assert "bad.grid:2:" in capsys.readouterr().err


def test_dump_default_grid_round_trips(capsys):
    from mergedindex.bench import DEFAULT_GRID
    assert main(["grid", "--dump-default"]) == 0
    assert capsys.readouterr().out == DEFAULT_GRID


def test_space_table(capsys):
    assert main(["space", *SMALL]) == 0
    rows = list(csv.DictReader(capsys.readouterr().out.splitlines()))
    assert [r["structure"] for r in rows] == ["merged", "traditional", "matview"]
    assert int(rows[2]["net_addition_bytes"]) > 0


def test_verify_exit_code(capsys):
    assert main(["verify", "--seeds", "2", "--deltas", "5"]) == 0
    assert "checks passed" in capsys.readouterr().out


def test_unknown_subcommand():
    with pytest.raises(SystemExit):
        main(["explode"])

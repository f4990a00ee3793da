import csv
import json
import shutil

import pytest

from reserve_game import formats
from reserve_game.cli import (
    EXIT_DIVERGENCE,
    EXIT_INFEASIBLE,
    EXIT_PARSE,
    EXIT_VALIDATION,
    main,
)
from reserve_game.model import ValidationError


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def fx(fixture_path):
    return lambda name: str(fixture_path(name))


def test_allocate_thirteen_node(tmp_path, fx):
    rc = main(["allocate", "--fleet", fx("fleet_13node.json"), "--plr-table", fx("plr_13node.json"), "--out", str(tmp_path)])
    assert rc == 0
    rows = read_csv(tmp_path / "allocation.csv")
    assert [r["der_id"] for r in rows] == ["1", "2", "3"]
    for row, df, ar, u in zip(rows, [0.2729, 0.2185, 0.5086], [34.09, 8.28, 57.63], [0.1965, 0.1265, 0.1402]):
        assert float(row["df"]) == pytest.approx(df, abs=0.002)
        assert float(row["allocated_reserve_kw"]) == pytest.approx(ar, abs=0.05)
        assert float(row["utility"]) == pytest.approx(u, abs=0.002)
    assert rows[0]["cost_usd"] == "49.10"  # cents in CSV
    assert not (tmp_path / "comparison.csv").exists()
    doc = json.loads((tmp_path / "allocation.json").read_text())
    assert doc["tucar_kw"] == 85.0
    assert doc["characteristic_tables"]["plr"]["values"]["1,2,3"] == 25.91
    assert len(doc["shapley"]["plr"]) == 3
    assert doc["allocation"]["regime"] == "priced"


def test_allocate_with_baseline(tmp_path, fx):
    rc = main(
        ["allocate", "--fleet", fx("fleet_13node.json"), "--plr-table", fx("plr_13node.json"), "--baseline", "--axioms", "--out", str(tmp_path)]
    )
    assert rc == 0
    rows = {r["der_id"]: r for r in read_csv(tmp_path / "comparison.csv")}
    assert float(rows["total"]["proposed_cost_usd"]) == pytest.approx(174.57, abs=1.0)
    assert rows["total"]["baseline_cost_usd"] == "425.00"
    assert float(rows["utility_stddev"]["proposed_utility"]) == pytest.approx(0.0371, abs=0.002)
    assert float(rows["utility_stddev"]["baseline_utility"]) == pytest.approx(0.6316, abs=0.002)
    assert float(rows["2"]["baseline_reserve_kw"]) == pytest.approx(33.33, abs=0.005)
    doc = json.loads((tmp_path / "allocation.json").read_text())
    assert doc["baseline"]["total_cost_usd"] == 425.0
    assert doc["axioms"]["wi"]["passed"] is True
    assert doc["axioms"]["plr"]["superadditive"] is False


def test_empty_fleet_writes_nothing(tmp_path, fx):
    empty = tmp_path / "fleet.json"
    empty.write_text("")
    out = tmp_path / "out"
    rc = main(["allocate", "--fleet", str(empty), "--plr-table", fx("plr_13node.json"), "--out", str(out)])
    assert rc == EXIT_VALIDATION
    assert not out.exists() or not any(out.iterdir())


@pytest.mark.parametrize(
    "extra, code",
    [
        (["--reserve-kw", "10000"], EXIT_INFEASIBLE),
        (["--alpha-c", "1.5"], EXIT_VALIDATION),
    ],
)
def test_exit_codes(tmp_path, fx, extra, code):
    out = tmp_path / "out"
    argv = ["allocate", "--fleet", fx("fleet_13node.json"), "--plr-table", fx("plr_13node.json"), "--out", str(out)]
    assert main(argv + extra) == code
    assert not out.exists() or not any(out.iterdir())


def test_parse_error(tmp_path, fx):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["allocate", "--fleet", str(bad), "--plr-table", fx("plr_13node.json"), "--out", str(tmp_path / "o")]) == EXIT_PARSE
    assert main(["allocate", "--fleet", str(tmp_path / "missing.json"), "--plr-table", fx("plr_13node.json"), "--out", str(tmp_path / "o")]) == EXIT_PARSE


def test_divergence_exit(tmp_path, fx):
    net = json.loads(open(fx("network_4bus.json")).read())
    net["buses"][3]["load_p"] = 1e5
    path = tmp_path / "net.json"
    path.write_text(json.dumps(net))
    out = tmp_path / "out"
    assert main(["allocate", "--fleet", fx("fleet_4bus.json"), "--network", str(path), "--out", str(out)]) == EXIT_DIVERGENCE
    assert not out.exists() or not any(out.iterdir())


def test_needs_exactly_one_plr_source(tmp_path, fx):
    base = ["allocate", "--fleet", fx("fleet_4bus.json"), "--out", str(tmp_path)]
    assert main(base) == EXIT_VALIDATION
    assert main(base + ["--plr-table", fx("plr_13node.json"), "--network", fx("network_4bus.json")]) == EXIT_VALIDATION


def test_plr_table_size_mismatch(tmp_path, fx):
    rc = main(["allocate", "--fleet", fx("fleet_34node.json"), "--plr-table", fx("plr_13node.json"), "--out", str(tmp_path)])
    assert rc == EXIT_VALIDATION


def test_out_dir_from_environment(tmp_path, fx, monkeypatch):
    monkeypatch.setenv("RESERVE_OUT_DIR", str(tmp_path / "env"))
    assert main(["allocate", "--fleet", fx("fleet_13node.json"), "--plr-table", fx("plr_13node.json")]) == 0
    assert (tmp_path / "env" / "allocation.json").exists()


def test_charfun_prose_parameters(tmp_path, fx):
    assert main(["charfun", "--fleet", fx("fleet_13node_prose.json"), "--out", str(tmp_path)]) == 0
    wi = formats.read_table(tmp_path / "wi_table.json")
    expected = {"1": 10.99, "2": 7.88, "3": 13.79, "1,2": 18.88, "1,3": 24.78, "2,3": 21.67, "1,2,3": 32.67}
    data = json.loads((tmp_path / "wi_table.json").read_text())
    for key, value in expected.items():
        assert data["values"][key] == pytest.approx(value, abs=0.01)
    assert wi.n == 3
    assert not (tmp_path / "plr_table.json").exists()


def test_charfun_single_der(tmp_path):
    fleet = tmp_path / "f.json"
    fleet.write_text(json.dumps({"alpha_c": 0.5, "p_r": 10, "ders": [{"id": 1, "node": "a", "p_c_kw": 50, "p_e_kw": 40, "rbp": 5, "pi": 1}]}))
    assert main(["charfun", "--fleet", str(fleet), "--out", str(tmp_path)]) == 0
    data = json.loads((tmp_path / "wi_table.json").read_text())
    assert data == {"n": 1, "values": {"1": 4.0}}


def test_charfun_network(tmp_path, fx):
    assert main(["charfun", "--fleet", fx("fleet_4bus.json"), "--network", fx("network_4bus.json"), "--out", str(tmp_path)]) == 0
    table = formats.read_table(tmp_path / "plr_table.json")
    assert table.values.shape == (4,) and table[0] == 0.0
    assert table[1] > 0


def test_round_trip_is_byte_identical(tmp_path, fx):
    direct, tables, again = tmp_path / "direct", tmp_path / "tables", tmp_path / "again"
    common = ["--fleet", fx("fleet_4bus.json"), "--baseline"]
    assert main(["allocate", *common, "--network", fx("network_4bus.json"), "--out", str(direct)]) == 0
    assert main(["charfun", "--fleet", fx("fleet_4bus.json"), "--network", fx("network_4bus.json"), "--out", str(tables)]) == 0
    rc = main(
        ["allocate", *common, "--plr-table", str(tables / "plr_table.json"), "--wi-table", str(tables / "wi_table.json"), "--out", str(again)]
    )
    assert rc == 0
    for name in ("allocation.json", "allocation.csv", "comparison.csv"):
        assert (direct / name).read_bytes() == (again / name).read_bytes()


def test_parallel_flag_same_output(tmp_path, fx):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["allocate", "--fleet", fx("fleet_4bus.json"), "--network", fx("network_4bus.json")]
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--parallel", "--out", str(b)]) == 0
    assert (a / "allocation.json").read_bytes() == (b / "allocation.json").read_bytes()


def test_pi_command(tmp_path, fx):
    rc = main(["pi", "--fleet", fx("fleet_13node_nopi.json"), "--history", fx("history_13node.csv"), "--out", str(tmp_path)])
    assert rc == 0
    rows = read_csv(tmp_path / "pi.csv")
    assert [r["der_id"] for r in rows] == ["1", "2", "3"]
    assert rows[0] == {"der_id": "1", "record_count": "3", "ess": "300.000000", "tss": "20000.000000", "pi": "0.985000"}
    assert rows[1]["pi"] == "1.000000"
    # DER 3: ESS = 0 + 400 + 100 + 100, TSS = 2 * 150^2 + 2 * 50^2
    assert rows[2]["pi"] == f"{1 - 600 / 50000:.6f}"


def test_pi_unknown_der(tmp_path, fx):
    hist = tmp_path / "h.csv"
    hist.write_text("der_id,committed_kw,supplied_kw\n9,1,1\n9,2,2\n")
    assert main(["pi", "--fleet", fx("fleet_13node_nopi.json"), "--history", str(hist), "--out", str(tmp_path)]) == EXIT_VALIDATION


def test_pi_insufficient_history(tmp_path, fx, caplog):
    hist = tmp_path / "h.csv"
    hist.write_text("der_id,committed_kw,supplied_kw\n2,5,5\n2,5,4\n")
    rc = main(["pi", "--fleet", fx("fleet_13node_nopi.json"), "--history", str(hist), "--out", str(tmp_path)])
    assert rc == EXIT_VALIDATION
    assert "DER 2: insufficient history" in caplog.text


def test_allocate_from_history(tmp_path, fx):
    rc = main(
        ["allocate", "--fleet", fx("fleet_13node_nopi.json"), "--history", fx("history_13node.csv"), "--plr-table", fx("plr_13node.json"), "--out", str(tmp_path)]
    )
    assert rc == 0
    doc = json.loads((tmp_path / "allocation.json").read_text())
    assert [d["pi"] for d in doc["ders"]] == [0.985, 1.0, 0.988]


def test_history_and_direct_pi_conflict(tmp_path, fx):
    rc = main(
        ["allocate", "--fleet", fx("fleet_13node.json"), "--history", fx("history_13node.csv"), "--plr-table", fx("plr_13node.json"), "--out", str(tmp_path)]
    )
    assert rc == EXIT_VALIDATION


def test_missing_pi(tmp_path, fx):
    rc = main(["allocate", "--fleet", fx("fleet_13node_nopi.json"), "--plr-table", fx("plr_13node.json"), "--out", str(tmp_path)])
    assert rc == EXIT_VALIDATION


# -- formats -------------------------------------------------------------------


def test_table_format_round_trip(plr34):
    again = formats.table_from_dict(json.loads(formats.dump_json(formats.table_to_dict(plr34))))
    assert again == plr34


def test_table_format_accepts_spaced_keys():
    t = formats.table_from_dict({"n": 2, "values": {"1": 1.0, "2": 2.0, "2, 1": 4.0}})
    assert t[3] == 4.0


def test_table_format_errors():
    with pytest.raises(ValidationError, match="missing value"):
        formats.table_from_dict({"n": 2, "values": {"1": 1.0, "2": 2.0}})
    with pytest.raises(ValidationError, match="given twice"):
        formats.table_from_dict({"n": 2, "values": {"1": 1.0, "2": 2.0, "1,2": 3.0, "2,1": 3.0}})
    with pytest.raises(formats.ParseError):
        formats.table_from_dict({"values": {}})
    with pytest.raises(formats.ParseError):
        formats.table_from_dict({"n": 1, "values": {"1": "x"}})


def test_fleet_format_round_trip(fleet34):
    assert formats.fleet_from_dict(formats.fleet_to_dict(fleet34)) == fleet34


def test_fleet_format_errors():
    with pytest.raises(formats.ParseError, match="p_c_kw"):
        formats.fleet_from_dict({"ders": [{"id": 1, "p_e_kw": 1, "rbp": 1}]})
    with pytest.raises(formats.ParseError, match="integer 'id'"):
        formats.fleet_from_dict({"ders": [{"id": "one"}]})


def test_history_timestamp_optional(tmp_path):
    path = tmp_path / "h.csv"
    path.write_text("der_id,supplied_kw,committed_kw\n1,9,10\n")
    (rec,) = formats.read_history(path)
    assert rec.committed == 10 and rec.supplied == 9
    path.write_text("der_id,committed_kw\n1,9\n")
    with pytest.raises(formats.ParseError, match="supplied_kw"):
        formats.read_history(path)


def test_write_bundle_leaves_no_staging(tmp_path):
    formats.write_bundle(tmp_path, {"a.txt": "1", "b.txt": "2"})
    assert sorted(p.name for p in tmp_path.iterdir()) == ["a.txt", "b.txt"]


def test_console_script_installed():
    assert shutil.which("reserve-game") is not None

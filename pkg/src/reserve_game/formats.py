"""Readers and writers for fleet, history, coalition-table and network files."""

from __future__ import annotations

import csv
import json
import os
import tempfile
from pathlib import Path
from typing import Any

from .model import (
    CoalitionTable,
    DerParams,
    FleetConfig,
    ReserveGameError,
    ValidationError,
    coalition_key,
    parse_coalition_key,
)
from .performance import HistoryRecord
from .powerflow import Branch, Bus, NetworkModel


class ParseError(ReserveGameError):
    """A file could not be read or has the wrong shape."""


def _load_json(path: Path) -> Any:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None


def _number(obj: dict, key: str, where: str, default=None) -> float:
    if key not in obj:
        if default is not None:
            return default
        raise ParseError(f"{where}: missing field {key!r}")
    x = obj[key]
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ParseError(f"{where}: field {key!r} must be a number, got {x!r}")
    return float(x)


# -- fleet -------------------------------------------------------------------


def fleet_from_dict(data: Any) -> FleetConfig:
    if not isinstance(data, dict):
        raise ParseError("fleet file must hold a JSON object")
    ders_raw = data.get("ders", [])
    if not isinstance(ders_raw, list):
        raise ParseError("fleet: 'ders' must be a list")
    ders = []
    for k, d in enumerate(ders_raw):
        if not isinstance(d, dict):
            raise ParseError(f"fleet: entry {k} of 'ders' is not an object")
        if not isinstance(d.get("id"), int) or isinstance(d.get("id"), bool):
            raise ParseError(f"fleet: entry {k} needs an integer 'id'")
        where = f"DER {d['id']}"
        pi = d.get("pi")
        if pi is not None:
            pi = _number(d, "pi", where)
        ders.append(
            DerParams(
                id=d["id"],
                node=str(d.get("node", "")),
                p_c=_number(d, "p_c_kw", where),
                p_e=_number(d, "p_e_kw", where),
                rbp=_number(d, "rbp", where),
                pi=pi,
            )
        )
    return FleetConfig(
        tuple(ders),
        alpha_c=_number(data, "alpha_c", "fleet", default=0.5),
        p_r=_number(data, "p_r", "fleet", default=0.0),
    )


def read_fleet(path: Path) -> FleetConfig:
    """Parse a fleet file. Validation is left to the caller; an empty file yields an empty fleet."""
    if Path(path).exists() and not Path(path).read_text().strip():
        return FleetConfig(())
    return fleet_from_dict(_load_json(path))


def fleet_to_dict(fleet: FleetConfig) -> dict:
    ders = []
    for d in fleet.ders:
        row = {"id": d.id, "node": d.node, "p_c_kw": d.p_c, "p_e_kw": d.p_e, "rbp": d.rbp}
        if d.pi is not None:
            row["pi"] = d.pi
        ders.append(row)
    return {"alpha_c": fleet.alpha_c, "p_r": fleet.p_r, "ders": ders}


# -- history -----------------------------------------------------------------


def read_history(path: Path) -> list[HistoryRecord]:
    """Read ``der_id,committed_kw,supplied_kw`` rows; extra columns such as a timestamp are ignored."""
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            fields = reader.fieldnames or []
            missing = {"der_id", "committed_kw", "supplied_kw"} - set(fields)
            if missing:
                raise ParseError(f"{path}: history header lacks {sorted(missing)}")
            out = []
            for line, row in enumerate(reader, start=2):
                try:
                    out.append(
                        HistoryRecord(int(row["der_id"]), float(row["committed_kw"]), float(row["supplied_kw"]))
                    )
                except (TypeError, ValueError) as exc:
                    if isinstance(exc, ValidationError):
                        raise
                    raise ParseError(f"{path}:{line}: bad history row") from None
            return out
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from None


# -- coalition tables --------------------------------------------------------


def table_from_dict(data: Any) -> CoalitionTable:
    if not isinstance(data, dict) or "n" not in data or "values" not in data:
        raise ParseError("coalition table must be an object with 'n' and 'values'")
    n = data["n"]
    if not isinstance(n, int) or isinstance(n, bool):
        raise ParseError("coalition table: 'n' must be an integer")
    if not isinstance(data["values"], dict):
        raise ParseError("coalition table: 'values' must be an object")
    values = {}
    for key, x in data["values"].items():
        mask = parse_coalition_key(key, n)
        if mask in values:
            raise ValidationError(f"coalition {{{coalition_key(mask)}}} given twice")
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise ParseError(f"coalition table: value for {key!r} must be a number")
        values[mask] = float(x)
    return CoalitionTable.from_mapping(n, values)


def read_table(path: Path) -> CoalitionTable:
    return table_from_dict(_load_json(path))


def table_to_dict(table: CoalitionTable) -> dict:
    # full float precision so re-reading gives identical values
    return {"n": table.n, "values": {coalition_key(m): float(table.values[m]) for m in range(1, 1 << table.n)}}


# -- network -----------------------------------------------------------------


def network_from_dict(data: Any) -> NetworkModel:
    if not isinstance(data, dict):
        raise ParseError("network file must hold a JSON object")
    for key in ("buses", "branches", "slack", "v_base"):
        if key not in data:
            raise ParseError(f"network: missing field {key!r}")
    buses = []
    for b in data["buses"]:
        if "id" not in b:
            raise ParseError("network: bus without 'id'")
        where = f"bus {b['id']}"
        buses.append(Bus(str(b["id"]), _number(b, "load_p", where, 0.0), _number(b, "load_q", where, 0.0)))
    branches = []
    for br in data["branches"]:
        if "from" not in br or "to" not in br:
            raise ParseError("network: branch needs 'from' and 'to'")
        where = f"branch {br['from']}-{br['to']}"
        branches.append(Branch(str(br["from"]), str(br["to"]), _number(br, "r", where), _number(br, "x", where)))
    try:
        sites = {int(k): str(v) for k, v in data.get("der_sites", {}).items()}
    except (ValueError, AttributeError):
        raise ParseError("network: 'der_sites' must map DER ids to bus ids") from None
    v_slack = data.get("v_slack")
    return NetworkModel(
        tuple(buses),
        tuple(branches),
        slack=str(data["slack"]),
        v_base=_number(data, "v_base", "network"),
        der_sites=sites,
        v_slack=None if v_slack is None else _number(data, "v_slack", "network"),
    )


def read_network(path: Path) -> NetworkModel:
    return network_from_dict(_load_json(path))


# -- output ------------------------------------------------------------------


def dump_json(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def write_bundle(out_dir: Path, files: dict[str, str]) -> list[Path]:
    """Write every file or none: stage in a temp dir, then rename into place."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=".staging-", dir=out_dir))
    try:
        for name, text in files.items():
            (staging / name).write_text(text)
        written = []
        for name in files:
            target = out_dir / name
            os.replace(staging / name, target)
            written.append(target)
        return written
    finally:
        for leftover in staging.iterdir():
            leftover.unlink()
        staging.rmdir()

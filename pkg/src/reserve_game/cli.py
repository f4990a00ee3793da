"""Command-line entry point: ``reserve-game {allocate,charfun,pi}``."""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import formats
from .allocation import AllocationResult, build_wi_table, capacity_split
from .model import FleetConfig, InfeasibleError, ValidationError, validate_fleet
from .performance import PiStats
from .pipeline import PipelineResult, apply_history, run
from .powerflow import DivergenceError, plr_table

log = logging.getLogger("reserve_game")

EXIT_OK = 0
EXIT_USAGE = 2  # argparse's own code
EXIT_PARSE = 3
EXIT_VALIDATION = 4
EXIT_INFEASIBLE = 5
EXIT_DIVERGENCE = 6


@dataclass(frozen=True)
class RunConfig:
    fleet: Path
    out_dir: Path
    plr_table: Path | None = None
    network: Path | None = None
    wi_table: Path | None = None
    history: Path | None = None
    alpha_c: float | None = None
    p_r: float | None = None
    baseline: bool = False
    axioms: bool = False
    parallel: bool = False


def _r6(x: float) -> float:
    return round(float(x), 6) + 0.0  # + 0.0 folds -0.0 into 0.0


def _vec(a) -> list[float]:
    return [_r6(x) for x in a]


def _table_json(table) -> dict:
    d = formats.table_to_dict(table)
    return {"n": d["n"], "values": {k: _r6(v) for k, v in d["values"].items()}}


def _allocation_json(res: AllocationResult) -> dict:
    return {
        "regime": res.regime,
        "distribution_factors": _vec(res.df),
        "allocated_reserve_kw": _vec(res.allocated_reserve),
        "priced_reserve_kw": _vec(res.priced_reserve),
        "set_point_kw": _vec(res.set_point),
        "utilities": _vec(res.utilities),
        "utility_stddev": _r6(res.utility_stddev),
        "total_cost_usd": _r6(res.total_cost),
    }


def _load_fleet(cfg: RunConfig) -> tuple[FleetConfig, list[PiStats]]:
    fleet = formats.read_fleet(cfg.fleet)
    if cfg.alpha_c is not None:
        fleet = replace(fleet, alpha_c=cfg.alpha_c)
    if cfg.p_r is not None:
        fleet = replace(fleet, p_r=cfg.p_r)
    validate_fleet(fleet)
    stats: list[PiStats] = []
    if cfg.history is not None:
        fleet, stats = apply_history(fleet, formats.read_history(cfg.history))
    return validate_fleet(fleet), stats


def _plr(cfg: RunConfig, fleet: FleetConfig):
    if cfg.plr_table is not None:
        return formats.read_table(cfg.plr_table)
    return plr_table(formats.read_network(cfg.network), fleet, parallel=cfg.parallel)


def build_report(res: PipelineResult) -> dict[str, str]:
    """Render allocation.json, allocation.csv and (with a baseline) comparison.csv."""
    fleet, split, alloc = res.fleet, res.split, res.allocation
    ders = []
    for k, d in enumerate(fleet.ders):
        ders.append(
            {
                "id": d.id,
                "node": d.node,
                "p_c_kw": _r6(d.p_c),
                "p_e_kw": _r6(d.p_e),
                "rbp": _r6(d.rbp),
                "pi": _r6(d.pi),
                "ucar_kw": _r6(split.ucar[k]),
                "pcar_kw": _r6(split.pcar[k]),
                "wi": _r6(res.wi[k]),
            }
        )
    notes = []
    if alloc.regime == "unpriced-pro-rata":
        notes.append("reserve command within unpriced capacity; split pro rata over unpriced capacity")
    doc = {
        "n": fleet.n,
        "alpha_c": _r6(fleet.alpha_c),
        "p_r_kw": _r6(fleet.p_r),
        "tucar_kw": _r6(split.tucar),
        "ders": ders,
        "shapley": {
            "wi": _vec(res.wi_shapley.values),
            "plr": _vec(res.plr_shapley.values),
            "wi_normalized": _vec(res.wi_normalized),
            "plr_normalized": _vec(res.plr_normalized),
            "equivalent": _vec(res.equivalent),
            "efficiency_residual": {
                "wi": _r6(res.wi_shapley.efficiency_residual),
                "plr": _r6(res.plr_shapley.efficiency_residual),
            },
        },
        "allocation": _allocation_json(alloc),
        "characteristic_tables": {"wi": _table_json(res.wi_table), "plr": _table_json(res.plr_table)},
        "notes": notes,
    }
    if res.baseline is not None:
        doc["baseline"] = _allocation_json(res.baseline)
    if res.axioms is not None:
        doc["axioms"] = {k: r.as_dict() for k, r in res.axioms.items()}

    files = {"allocation.json": formats.dump_json(doc), "allocation.csv": _allocation_csv(res)}
    if res.baseline is not None:
        files["comparison.csv"] = _comparison_csv(fleet, alloc, res.baseline)
    return files


def _csv(rows: list[list]) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _f6(x) -> str:
    return f"{float(x):.6f}"


def _cents(x) -> str:
    return f"{float(x):.2f}"


def _allocation_csv(res: PipelineResult) -> str:
    fleet, split, a = res.fleet, res.split, res.allocation
    rbp = fleet.column("rbp")
    rows = [
        [
            "der_id", "node", "p_c_kw", "p_e_kw", "ucar_kw", "pcar_kw", "rbp", "pi", "wi",
            "shapley_wi", "shapley_plr", "df", "allocated_reserve_kw", "priced_reserve_kw",
            "set_point_kw", "cost_usd", "utility",
        ]
    ]
    for k, d in enumerate(fleet.ders):
        rows.append(
            [
                d.id, d.node, _f6(d.p_c), _f6(d.p_e), _f6(split.ucar[k]), _f6(split.pcar[k]), _f6(d.rbp),
                _f6(d.pi), _f6(res.wi[k]), _f6(res.wi_shapley.values[k]), _f6(res.plr_shapley.values[k]),
                _f6(a.df[k]), _f6(a.allocated_reserve[k]), _f6(a.priced_reserve[k]), _f6(a.set_point[k]),
                _cents(rbp[k] * a.priced_reserve[k]), _f6(a.utilities[k]),
            ]
        )
    return _csv(rows)


def _comparison_csv(fleet: FleetConfig, prop: AllocationResult, base: AllocationResult) -> str:
    rbp = fleet.column("rbp")
    rows = [
        [
            "der_id", "proposed_df", "proposed_reserve_kw", "proposed_cost_usd", "proposed_utility",
            "baseline_df", "baseline_reserve_kw", "baseline_cost_usd", "baseline_utility",
        ]
    ]
    for k, d in enumerate(fleet.ders):
        rows.append(
            [
                d.id,
                _f6(prop.df[k]), _f6(prop.allocated_reserve[k]), _cents(rbp[k] * prop.priced_reserve[k]),
                _f6(prop.utilities[k]),
                _f6(base.df[k]), _f6(base.allocated_reserve[k]), _cents(rbp[k] * base.priced_reserve[k]),
                _f6(base.utilities[k]),
            ]
        )
    rows.append(
        [
            "total",
            _f6(np.sum(prop.df)), _f6(np.sum(prop.allocated_reserve)), _cents(prop.total_cost), "",
            _f6(np.sum(base.df)), _f6(np.sum(base.allocated_reserve)), _cents(base.total_cost), "",
        ]
    )
    rows.append(["utility_stddev", "", "", "", _f6(prop.utility_stddev), "", "", "", _f6(base.utility_stddev)])
    return _csv(rows)


# -- commands ----------------------------------------------------------------


def run_allocate(cfg: RunConfig) -> list[Path]:
    if (cfg.plr_table is None) == (cfg.network is None):
        raise ValidationError("give exactly one PLR source: --plr-table or --network")
    fleet, _ = _load_fleet(cfg)
    wi_table = formats.read_table(cfg.wi_table) if cfg.wi_table is not None else None
    res = run(fleet, _plr(cfg, fleet), wi_table=wi_table, baseline=cfg.baseline, axioms=cfg.axioms)
    return formats.write_bundle(cfg.out_dir, build_report(res))


def run_charfun(cfg: RunConfig) -> list[Path]:
    if cfg.plr_table is not None and cfg.network is not None:
        raise ValidationError("give at most one PLR source: --plr-table or --network")
    fleet, _ = _load_fleet(cfg)
    files = {"wi_table.json": formats.dump_json(formats.table_to_dict(build_wi_table(fleet, capacity_split(fleet))))}
    if cfg.plr_table is not None or cfg.network is not None:
        table = _plr(cfg, fleet)
        if table.n != fleet.n:
            raise ValidationError(f"PLR table has {table.n} players, fleet has {fleet.n}")
        files["plr_table.json"] = formats.dump_json(formats.table_to_dict(table))
    return formats.write_bundle(cfg.out_dir, files)


def run_pi(cfg: RunConfig) -> list[Path]:
    if cfg.history is None:
        raise ValidationError("the pi command needs --history")
    fleet = formats.read_fleet(cfg.fleet)
    validate_fleet(fleet)
    _, stats = apply_history(fleet, formats.read_history(cfg.history))
    rows = [["der_id", "record_count", "ess", "tss", "pi"]]
    for s in stats:
        rows.append([s.der_id, s.record_count, _f6(s.ess), _f6(s.tss), _f6(s.pi)])
    return formats.write_bundle(cfg.out_dir, {"pi.csv": _csv(rows)})


COMMANDS = {"allocate": run_allocate, "charfun": run_charfun, "pi": run_pi}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reserve-game", description="Shapley-value spinning reserve allocation among DERs"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("-v", "--verbose", action="store_true", help="log progress")
        p.add_argument("--fleet", type=Path, required=True, help="fleet JSON file")
        p.add_argument("--history", type=Path, help="committed/supplied power history CSV")
        p.add_argument("--out", type=Path, help="output directory (default $RESERVE_OUT_DIR or .)")
        p.add_argument("--alpha-c", type=float, help="critical load factor, overrides the fleet file")
        p.add_argument("--reserve-kw", type=float, help="reserve command P_R in kW, overrides the fleet file")

    def sources(p):
        p.add_argument("--plr-table", type=Path, help="loss-reduction coalition table JSON")
        p.add_argument("--network", type=Path, help="radial network JSON; PLR from power flow")
        p.add_argument("--wi-table", type=Path, help="worthiness coalition table JSON (default: computed)")
        p.add_argument("--parallel", action="store_true", help="solve coalitions in a process pool")

    p = sub.add_parser("allocate", help="allocate the reserve command")
    common(p)
    sources(p)
    p.add_argument("--baseline", action="store_true", help="also run the capacity-based baseline")
    p.add_argument("--axioms", action="store_true", help="add Shapley axiom checks to the report")

    p = sub.add_parser("charfun", help="write both characteristic tables")
    common(p)
    sources(p)

    p = sub.add_parser("pi", help="performance indices from history")
    common(p)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    out = args.out or Path(os.environ.get("RESERVE_OUT_DIR") or ".")
    return RunConfig(
        fleet=args.fleet,
        out_dir=out,
        plr_table=getattr(args, "plr_table", None),
        network=getattr(args, "network", None),
        wi_table=getattr(args, "wi_table", None),
        history=args.history,
        alpha_c=args.alpha_c,
        p_r=args.reserve_kw,
        baseline=getattr(args, "baseline", False),
        axioms=getattr(args, "axioms", False),
        parallel=getattr(args, "parallel", False),
    )


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    cfg = config_from_args(args)
    try:
        written = COMMANDS[args.command](cfg)
    except formats.ParseError as exc:
        log.error("parse error: %s", exc)
        return EXIT_PARSE
    except ValidationError as exc:
        log.error("validation error: %s", exc)
        return EXIT_VALIDATION
    except InfeasibleError as exc:
        log.error("%s", exc)
        return EXIT_INFEASIBLE
    except DivergenceError as exc:
        log.error("power flow divergence: %s", exc)
        return EXIT_DIVERGENCE
    for path in written:
        log.info("wrote %s", path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

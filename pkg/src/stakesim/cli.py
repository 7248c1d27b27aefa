"""Command line interface.

Verbs:
  run       simulate one scenario, write trace + machine + human reports
  sweep     run a scenario template across a parameter grid
  analyze   recompute a trace's report from its raw records and diff them
  validate  parse a scenario and print its diagnostics

Exit codes: 0 ok, 1 bad input, 2 invariant breach during simulation,
3 analyze found a mismatch between a trace and its embedded report.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .econ import PfcKind
from .engine import run as run_engine
from .engine import sweep as run_sweep
from .errors import InvariantBreachError, ScenarioError, StakesimError
from .rational import frac_str
from .report import (
    BOUND_ALIASES,
    compare_trace_to_report,
    parse_trace,
    render_text,
)
from .resolution import classify_reveal
from .scenario import canonical_json, load_scenario, scenario_hash
from .version import __version__


def _bound(name: str) -> PfcKind:
    return BOUND_ALIASES[name]


def _write_trace(path: Path, lines: list[str]) -> None:
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_run(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        trace = run_engine(scenario, seed=args.seed, bound_kind=_bound(args.bound))
    except InvariantBreachError as exc:
        records = getattr(exc, "trace_records", None)
        if records is not None:
            _write_trace(
                out / "trace-partial.jsonl",
                [canonical_json({"tick": r.tick, "kind": r.kind, **r.payload}) for r in records],
            )
        raise
    _write_trace(out / "trace.jsonl", trace.to_lines())
    (out / "report.json").write_text(trace.report.to_json() + "\n", encoding="utf-8")
    text = render_text(trace.report.doc)
    (out / "report.txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def _grid_from_args(args: argparse.Namespace) -> dict[str, list]:
    grid: dict[str, list] = {}
    if args.grid:
        doc = json.loads(Path(args.grid).read_text(encoding="utf-8"))
        if not isinstance(doc, dict):
            raise ScenarioError("grid file must be a JSON object", path=args.grid)
        for key, values in doc.items():
            if not isinstance(values, list) or not values:
                raise ScenarioError("grid values must be non-empty lists", path=f"{args.grid}.{key}")
            grid[key] = values
    for setting in args.set or []:
        if "=" not in setting:
            raise ScenarioError(f"--set needs path=v1,v2,... (got {setting!r})", path="--set")
        key, _, raw = setting.partition("=")
        values: list = []
        for chunk in raw.split(","):
            try:
                values.append(int(chunk))
            except ValueError:
                values.append(chunk)
        if not values:
            raise ScenarioError(f"--set {key} has no values", path="--set")
        grid[key] = values
    if not grid:
        raise ScenarioError("sweep needs --grid or at least one --set", path="--grid")
    return grid


def cmd_sweep(args: argparse.Namespace) -> int:
    doc = json.loads(Path(args.scenario).read_text(encoding="utf-8"))
    grid = _grid_from_args(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = run_sweep(doc, grid, seed=args.seed, bound_kind=_bound(args.bound))
    index = []
    for res in results:
        row = {"point": res["point"], "overrides": res["overrides"], "ok": res["ok"], "error": res["error"]}
        if res["ok"]:
            name = f"report-{res['point']:04d}.json"
            (out / name).write_text(
                canonical_json(res["report"]) + "\n", encoding="utf-8"
            )
            row["report"] = name
            v = res["report"]["verdict"]
            row["cryptoeconomically_safe"] = v["cryptoeconomically_safe"]
            row["strong_safety"] = v["strong_safety"]
        index.append(row)
    (out / "sweep.json").write_text(canonical_json({"points": index}) + "\n", encoding="utf-8")
    ok = sum(1 for r in index if r["ok"])
    sys.stdout.write(f"swept {len(index)} points ({ok} ok, {len(index) - ok} failed) -> {out}\n")
    for row in index:
        if not row["ok"]:
            sys.stdout.write(f"  point {row['point']} {row['overrides']}: {row['error']}\n")
    return 0


def cmd_analyze(args: argparse.Namespace) -> int:
    path = Path(args.trace)
    records = parse_trace(path.read_text(encoding="utf-8").splitlines(), source=str(path))
    mismatch = compare_trace_to_report(records, source=str(path))
    if mismatch is None:
        sys.stdout.write(f"{path}: report verified against trace\n")
        return 0
    sys.stdout.write(f"{path}: MISMATCH at {mismatch}\n")
    return 3


def cmd_validate(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    tl, tp, ep = scenario.timeline, scenario.timing, scenario.econ
    lines = [
        f"scenario {scenario_hash(scenario)[:16]} (schema 1, tool {__version__})",
        f"  horizon {tl.horizon}, seed {scenario.seed}",
        f"  timing: t_fin={tp.t_fin} t_rev={tp.t_rev} t_ws={tp.t_ws} t_cr={tp.t_cr} slash_delay={tp.slash_delay}",
        f"  econ: {ep.n_validators} validators x stake {frac_str(ep.stake_per_validator)}"
        f" (total {frac_str(ep.s_tot)}), gamma {frac_str(ep.gamma)}, tvl {frac_str(ep.tvl)}",
        f"  {len(tl.transactions)} transactions, {len(tl.fork_events)} fork events,"
        f" {len(scenario.bids)} insurance bids",
    ]
    if scenario.policies:
        policies = ", ".join(f"{tr}={p.value}" for tr, p in sorted(scenario.policies.items()))
        lines.append(f"  policies: {policies} (default {scenario.default_policy.value})")
    else:
        lines.append(f"  policies: default {scenario.default_policy.value}")
    for ev in tl.fork_events:
        cls = classify_reveal(ev, tp)
        lines.append(
            f"  fork {ev.id}: diverges@{ev.diverges_from_block_finalized_at}"
            f" revealed@{ev.revealed_at} -> {cls.value}"
            f" ({len(ev.double_signers)} signers, stake {frac_str(ev.double_signer_stake)})"
        )
    if scenario.strategy.kind.value != "none":
        lines.append(f"  adversary strategy: {scenario.strategy.kind.value}")
    lines.append("ok")
    sys.stdout.write("\n".join(lines) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stakesim",
        description="Simulate hybrid-transaction safety under slashing, insurance and reorg attacks.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="simulate one scenario")
    p_run.add_argument("--scenario", required=True, help="scenario JSON file")
    p_run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p_run.add_argument("--out", default="out", help="output directory (default: out)")
    p_run.add_argument(
        "--bound",
        choices=sorted(BOUND_ALIASES),
        default="secure",
        help="profit bound the verdict is judged against (default: secure)",
    )
    p_run.set_defaults(fn=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a scenario across a parameter grid")
    p_sweep.add_argument("--scenario", required=True, help="scenario template JSON file")
    p_sweep.add_argument("--grid", help="JSON file mapping dotted paths to value lists")
    p_sweep.add_argument(
        "--set",
        action="append",
        metavar="PATH=V1,V2,...",
        help="inline grid axis, repeatable (e.g. --set econ.gamma=0,1/2,1)",
    )
    p_sweep.add_argument("--seed", type=int, default=None)
    p_sweep.add_argument("--out", default="sweep-out", help="output directory")
    p_sweep.add_argument("--bound", choices=sorted(BOUND_ALIASES), default="secure")
    p_sweep.set_defaults(fn=cmd_sweep)

    p_an = sub.add_parser("analyze", help="verify a trace's embedded report by recomputation")
    p_an.add_argument("--trace", required=True, help="trace.jsonl produced by run")
    p_an.set_defaults(fn=cmd_analyze)

    p_val = sub.add_parser("validate", help="parse a scenario and print diagnostics")
    p_val.add_argument("--scenario", required=True)
    p_val.set_defaults(fn=cmd_validate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except InvariantBreachError as exc:
        sys.stderr.write(f"{exc}\n")
        return 2
    except StakesimError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except FileNotFoundError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except json.JSONDecodeError as exc:
        sys.stderr.write(f"error: invalid JSON: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())

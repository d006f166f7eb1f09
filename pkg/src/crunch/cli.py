"""Command-line entry point: ``crunch {run,example,calibrate,dump-cag}``."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from .baselines import ApproachPolicy, degradation_weighted_path, lp_only_decide, standard_approaches, sp_greedy_decide
from .cag import VIEWS, Cag
from .decision import Context, DecisionRecord
from .net import gbps, kbps
from .provisioner import provision
from .sim import CalibrationError, ScenarioConfig, bundled_scenario, calibrate, compare, load_scenario
from .worked import load_snapshot, worked_example


class UsageError(Exception):
    pass


def _need_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} not found: {path}")
    return p


def _scenario(ref: str) -> ScenarioConfig:
    if ref.lower() in ("a", "b", "c"):
        return bundled_scenario(ref)
    return load_scenario(_need_file(ref, "scenario file"))


def _write_csv(path: Path, rows: list[dict]) -> None:
    if not rows:
        path.write_text("")
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


def load_manifest(path: str) -> dict:
    data = json.loads(_need_file(path, "manifest").read_text())
    base = Path(path).parent
    for key in ("scenario", "topology"):
        val = data.get(key)
        if val and val.lower() not in ("a", "b", "c", "usnet24") and not Path(val).is_absolute():
            data[key] = str(base / val)
    return data


def cmd_run(args) -> int:
    man = load_manifest(args.manifest)
    cfg = _scenario(man.get("scenario", "a"))
    topo = man.get("topology")
    if topo and topo != "usnet24":
        _need_file(topo, "topology file")
        cfg = replace(cfg, topology=topo)
    if args.days is not None:
        cfg = replace(cfg, days=args.days)
    if args.warmup_days is not None:
        cfg = replace(cfg, warmup_days=args.warmup_days)
    pol = man.get("policies", "all")
    policies = standard_approaches(cfg.capacity_gbps) if pol == "all" else [ApproachPolicy.from_dict(p) for p in pol]
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else list(man.get("seeds", [0]))
    out = Path(args.out or man.get("out", "crunch-out"))
    out.mkdir(parents=True, exist_ok=True)
    cmp = compare(cfg, policies, seeds, keep_records=True)
    day_rows = [r for frames in cmp.frames.values() for f in frames for r in f.day_rows(cmp.windows[f.seed])]
    _write_csv(out / "days.csv", day_rows)
    _write_csv(out / "summary.csv", cmp.summary_rows())
    with open(out / "decisions.jsonl", "w") as fh:
        for frames in cmp.frames.values():
            for f in frames:
                for rec in f.records:
                    fh.write(json.dumps({"seed": f.seed, **rec}) + "\n")
    (out / "scenario.json").write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")
    print(f"wrote {out}/summary.csv ({len(policies)} policies, {len(seeds)} seeds)")
    return 0


def _describe(rec: DecisionRecord) -> str:
    parts = ", ".join(f"{cid} by {d:g} Gbps" for cid, d in rec.degraded) or "nothing"
    gain = rec.revenue + (rec.blocking_cost if rec.served else 0)
    if rec.served:
        return f"degrade {parts}, cost ${rec.cost:g}, serve at {rec.bw_gbps:g} Gbps via {rec.path}"
    if rec.degraded:
        return f"degrade {parts}, cost ${rec.cost:g} > ${rec.revenue + rec.blocking_cost:g} -> block (fine ${rec.blocking_cost:g})"
    return f"no candidate -> block (fine ${rec.blocking_cost:g})" if gain >= 0 else ""


def example_lines() -> list[str]:
    lines = []
    snap = worked_example()
    r = snap.request
    lines.append(
        f"request {r.id}: {r.source}->{r.destination}, B_req {r.b_req:g} Gbps, B_min {r.b_min:g} Gbps, "
        f"r_c(b) = {r.unit_value:g}b, F_c = ${r.blocking_cost:g}"
    )
    for name, fn in (
        ("SP-k1", lambda ctx, cag: sp_greedy_decide(ctx, r, 1)),
        ("LP-k1", lambda ctx, cag: lp_only_decide(ctx, r, 1)),
        ("PROVISIONER", lambda ctx, cag: provision(ctx, cag, r, 1)),
    ):
        snap = worked_example()
        ctx = Context.fresh(snap.state, snap.horizon)
        cag = Cag(snap.state, snap.horizon, "zero")
        rec = fn(ctx, cag)
        lines.append(f"{name:12s} {_describe(rec)}")
    snap = worked_example()
    got = degradation_weighted_path(snap.state, r.source, r.destination, r.min, snap.horizon)
    if got is not None:
        path, link_sum, cost = got
        lines.append(f"{'weighted':12s} degradation-weighted path {path} (link sum ${link_sum:g}), path cost ${cost:g}")
    return lines


def cmd_example(args) -> int:
    for line in example_lines():
        print(line)
    return 0


def cmd_calibrate(args) -> int:
    tmpl = _scenario(args.template) if args.template else ScenarioConfig(lam_peak=0.14, amplitude=0.5)
    try:
        seeds = [int(x) for x in args.seeds.split(",")] if args.seeds else args.seed
        cfg, trace = calibrate(tmpl, args.peak / 100.0, args.duration * 60.0, days=args.days, seed=seeds)
    except CalibrationError as exc:
        print(f"calibration failed: {exc}", file=sys.stderr)
        for row in exc.trace:
            print(json.dumps(row), file=sys.stderr)
        return 1
    data = cfg.to_dict()
    data["calibration_trace"] = trace
    text = json.dumps(data, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_dump_cag(args) -> int:
    if args.src == args.dst:
        raise UsageError("--src and --dst must differ")
    snap = load_snapshot(_need_file(args.state, "state snapshot")) if args.state else worked_example()
    topo = snap.state.topology
    for n in (args.src, args.dst):
        if n not in topo.rank:
            raise UsageError(f"unknown node {n!r}")
    cag = Cag(snap.state, snap.horizon, args.free_policy or snap.free_policy)
    sys.stdout.write(cag.to_dot(args.src, args.dst, kbps(args.bw), args.view))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="crunch", description="Resource-crunch provisioning simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a manifest (policies x seeds) and write CSV/JSONL artifacts")
    p.add_argument("--manifest", required=True)
    p.add_argument("--seeds", help="comma-separated seeds (overrides the manifest)")
    p.add_argument("--out", help="output directory (overrides the manifest)")
    p.add_argument("--days", type=int, help="recorded days per run (overrides the scenario)")
    p.add_argument("--warmup-days", type=int, help="unrecorded leading days (overrides the scenario)")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("example", help="print the seven-node worked example decisions")
    p.set_defaults(fn=cmd_example)

    p = sub.add_parser("calibrate", help="fit arrival parameters to a target baseline crunch")
    p.add_argument("--peak", type=float, required=True, help="peak crunched share, percent")
    p.add_argument("--duration", type=float, required=True, help="minutes above the 2%% threshold")
    p.add_argument("--template", help="scenario file or bundled name (a, b, c)")
    p.add_argument("--days", type=int, default=40)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", help="comma-separated seeds; peak and duration are averaged over them")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_calibrate)

    p = sub.add_parser("dump-cag", help="DOT export of a CAG view")
    p.add_argument("--state", help="snapshot JSON (default: bundled worked example)")
    p.add_argument("--src", required=True)
    p.add_argument("--dst", required=True)
    p.add_argument("--view", choices=VIEWS, default="relaxed-min")
    p.add_argument("--bw", type=float, required=True, help="request bandwidth, Gbps")
    p.add_argument("--free-policy", choices=("zero", "mean-rate"))
    p.set_defaults(fn=cmd_dump_cag)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"crunch: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"crunch: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

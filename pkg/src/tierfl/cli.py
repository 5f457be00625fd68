"""Command-line front end.

Verbs:

* ``run``: one experiment from a JSON config; writes metrics.csv,
  ledger.csv, embeddings.csv, and summary.json into the output dir.
* ``sweep``: a labeled family of runs over one swept axis; per-point
  artifacts plus a sweep.csv overview.
* ``cost``: closed-form traffic prediction for a config, optionally
  reconciled against a real run.
* ``check``: fast self-test battery.

Exit codes: 0 on success, 2 on configuration errors (a JSON error list
goes to stderr), 1 on anything unexpected. Relative output paths are
rooted at $TIERFL_OUTPUT_ROOT when that variable is set.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from pathlib import Path
from typing import Optional

from .config import RunConfig, parse_config, parse_sweep, sweep_points
from .errors import ConfigError, TierflError
from .ledger import GB, KINDS, analytic_cost, reconcile
from .protocols import RunResult, Simulation

OUTPUT_ROOT_VAR = "TIERFL_OUTPUT_ROOT"


def _resolve_out(out: str) -> Path:
    path = Path(out)
    root = os.environ.get(OUTPUT_ROOT_VAR)
    if root and not path.is_absolute():
        path = Path(root) / path
    path.mkdir(parents=True, exist_ok=True)
    return path


def _cell(value) -> str:
    """Lossless, locale-free cell text; None becomes an empty field."""
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_artifacts(out_dir: Path, cfg: RunConfig, result: RunResult) -> None:
    with open(out_dir / "metrics.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["round", "loss", "macro_f1", "silhouette", "iou", "dice"])
        for m in result.metrics:
            writer.writerow([_cell(v) for v in (m.round, m.loss, m.macro_f1, m.silhouette, m.iou, m.dice)])

    with open(out_dir / "ledger.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["round", "kind", "src", "dst", "bytes"])
        for row in result.ledger.csv_rows():
            writer.writerow([_cell(v) for v in row])

    emb = result.embeddings
    with open(out_dir / "embeddings.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"e{i}" for i in range(emb.shape[1])] + ["label"])
        for row, label in zip(emb, result.embedding_labels):
            writer.writerow([repr(float(v)) for v in row] + [str(int(label))])

    summary = {
        "config": dataclasses.asdict(cfg),
        "rounds": len(result.metrics),
        "ledger": {**{k: result.ledger.summary().get(k) for k in KINDS}, "total": result.ledger.summary().total},
    }
    if result.metrics:
        last = result.metrics[-1]
        summary["final"] = {
            "loss": last.loss,
            "macro_f1": last.macro_f1,
            "silhouette": last.silhouette,
            "iou": last.iou,
            "dice": last.dice,
        }
    with open(out_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_config(path: Optional[str]) -> RunConfig:
    if path is None:
        return parse_config("{}")
    return parse_config(Path(path).read_text())


def _cmd_run(args) -> int:
    cfg = _load_config(args.config)
    out_dir = _resolve_out(args.out)
    result = Simulation(cfg).run()
    _write_artifacts(out_dir, cfg, result)
    total = result.ledger.summary().total
    print(f"{cfg.strategy.kind}: {len(result.metrics)} rounds, {total} bytes moved, artifacts in {out_dir}")
    return 0


def _cmd_sweep(args) -> int:
    spec = parse_sweep(Path(args.config).read_text())
    out_dir = _resolve_out(args.out)
    rows = []
    for label, cfg in sweep_points(spec):
        point_dir = out_dir / label
        try:
            point_dir.mkdir(parents=True, exist_ok=True)
            result = Simulation(cfg).run()
            _write_artifacts(point_dir, cfg, result)
            last = result.metrics[-1] if result.metrics else None
            rows.append(
                {
                    "label": label,
                    "status": "ok",
                    "final_loss": _cell(last.loss if last else None),
                    "final_macro_f1": _cell(last.macro_f1 if last else None),
                    "total_bytes": result.ledger.summary().total,
                    "error": "",
                }
            )
            print(f"{label}: ok")
        except TierflError as exc:
            rows.append(
                {"label": label, "status": "error", "final_loss": "", "final_macro_f1": "", "total_bytes": "", "error": str(exc)}
            )
            print(f"{label}: error ({exc})")
    with open(out_dir / "sweep.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["label", "status", "final_loss", "final_macro_f1", "total_bytes", "error"])
        writer.writeheader()
        writer.writerows(rows)
    print(f"sweep artifacts in {out_dir}")
    return 0


def _cmd_cost(args) -> int:
    cfg = _load_config(args.config)
    sim = Simulation(cfg)
    predicted = analytic_cost(sim.cost_input())
    payload = {
        "per_kind_gb": predicted.in_gb(),
        "total_gb": predicted.total / GB,
    }
    if args.reconcile:
        actual = sim.run().ledger.summary()
        report = reconcile(actual, predicted)
        payload["reconcile"] = {
            "passed": report.passed,
            "max_rel_diff": max(report.diffs.values()),
            "actual_total_gb": actual.total / GB,
        }
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0 if (not args.reconcile or payload["reconcile"]["passed"]) else 1


def _cmd_check(args) -> int:
    from .check import run_checks

    return 0 if run_checks() else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tierfl", description="Tiered federated learning simulator.")
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="run one experiment")
    p_run.add_argument("--config", help="JSON config path (defaults apply when omitted)")
    p_run.add_argument("--out", default="tierfl-run", help="output directory")
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a one-axis sweep")
    p_sweep.add_argument("--config", required=True, help="JSON sweep spec path")
    p_sweep.add_argument("--out", default="tierfl-sweep", help="output directory")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_cost = sub.add_parser("cost", help="predict communication volume")
    p_cost.add_argument("--config", help="JSON config path (defaults apply when omitted)")
    p_cost.add_argument("--reconcile", action="store_true", help="also run and compare against the ledger")
    p_cost.set_defaults(func=_cmd_cost)

    p_check = sub.add_parser("check", help="run the built-in invariant battery")
    p_check.set_defaults(func=_cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(json.dumps({"errors": exc.errors}), file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {exc!r}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

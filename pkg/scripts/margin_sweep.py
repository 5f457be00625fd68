"""Sweep the contrastive margin and report the final metrics per point.

Writes a sweep spec to a scratch directory, drives the command line
entry point on it, and echoes the resulting summary table. The run
directories (per-round metrics, ledger, embeddings) stay on disk for
inspection.
"""
import argparse
import csv
import json
import pathlib
import sys
import tempfile

from tierfl.cli import main as tierfl_main

BASE = {
    "strategy": {"kind": "sherl", "lr": 0.01, "optimizer": "adam", "margin": 0.5},
    "schedule": {"rounds": 20, "t1": 2, "t2": 4, "sample_rate": 0.5},
    "topology": {"n_clients": 6, "n_edges": 2},
    "model": {"hidden_dims": [8, 8, 6, 6], "cut1": 2, "cut2": 4},
    "data": {"classes": 3, "per_class": 8, "test_per_class": 6, "dim": 6,
             "batch_size": 4, "pairs_per_batch": 4},
    "seed": 11,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--margins", type=float, nargs="+",
                        default=[0.2, 0.5, 1.0, 1.5, 2.0])
    parser.add_argument("--rounds", type=int, default=BASE["schedule"]["rounds"])
    parser.add_argument("--out", type=pathlib.Path, default=None,
                        help="sweep output directory (default: a fresh temp dir)")
    args = parser.parse_args(argv)

    out = args.out or pathlib.Path(tempfile.mkdtemp(prefix="margin_sweep_"))
    base = json.loads(json.dumps(BASE))
    base["schedule"]["rounds"] = args.rounds
    spec = {"base": base, "margins": args.margins}
    spec_path = out / "sweep_spec.json"
    out.mkdir(parents=True, exist_ok=True)
    spec_path.write_text(json.dumps(spec, indent=2))

    code = tierfl_main(["sweep", "--config", str(spec_path), "--out", str(out / "runs")])
    if code != 0:
        return code

    with open(out / "runs" / "sweep.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    print(f"\n{'label':>12} {'status':>7} {'loss':>10} {'macro_f1':>9} {'bytes':>11}")
    for row in rows:
        print(f"{row['label']:>12} {row['status']:>7} {float(row['final_loss']):>10.4f} "
              f"{float(row['final_macro_f1']):>9.4f} {int(row['total_bytes']):>11,}")
    print(f"\nartifacts under {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

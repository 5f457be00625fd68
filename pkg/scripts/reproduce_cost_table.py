"""Rebuild the reference communication table from the analytic model.

Each row freezes per-category gigabyte figures for a 200-client,
10-edge deployment over 200 rounds at 10% sampling. Per-category unit
sizes are inverted from the row, fed back through the closed-form cost
model, and printed next to the expected totals. Every predicted total
should land within 0.01 GB of its reference value.
"""
import argparse
import sys

from tierfl.ledger import GB, KINDS, CostModelInput, analytic_cost, units_from_row

DEPLOYMENT = dict(n_clients=200, n_edges=10, rounds=200, sample_rate=0.1)

# (strategy, t1, t2, per-category GB, reference total GB)
ROWS = [
    ("fedavg", 1, 1, {"client_model_up": 351.40, "client_model_down": 3513.95}, 3865.35),
    ("fedsgd", 1, 1, {"client_model_up": 351.40, "client_model_down": 3513.95}, 3865.35),
    ("fednova", 1, 1, {"client_model_up": 351.40, "client_model_down": 3513.95}, 3865.35),
    ("fedprox", 1, 1, {"client_model_up": 351.40, "client_model_down": 3513.95}, 3865.35),
    ("hierfl", 1, 1,
     {"client_model_up": 351.40, "client_model_down": 3865.34,
      "edge_model_up": 175.70, "edge_model_down": 0.0}, 4392.44),
    ("splitfed", 1, 1,
     {"client_smashed_up": 6.87, "client_model_up": 1.09,
      "client_model_down": 216.82, "grad_from_cloud": 3.73}, 228.51),
    ("hsfl", 5, 10,
     {"client_smashed_up": 54.93, "edge_smashed_up": 13.74,
      "client_model_up": 0.22, "client_model_down": 0.93,
      "edge_model_up": 1.34, "edge_model_down": 1.34,
      "grad_from_cloud": 12.22, "grad_from_edge": 31.25}, 115.97),
    ("hsfl", 10, 20,
     {"client_smashed_up": 54.93, "edge_smashed_up": 13.74,
      "client_model_up": 0.11, "client_model_down": 0.48,
      "edge_model_up": 0.67, "edge_model_down": 0.67,
      "grad_from_cloud": 12.22, "grad_from_edge": 31.25}, 114.07),
    ("hsfl", 25, 50,
     {"client_smashed_up": 54.93, "edge_smashed_up": 13.74,
      "client_model_up": 0.06, "client_model_down": 0.24,
      "edge_model_up": 0.34, "edge_model_down": 0.34,
      "grad_from_cloud": 12.22, "grad_from_edge": 31.25}, 113.12),
    ("sherl", 5, 10,
     {"client_smashed_up": 54.93, "edge_smashed_up": 13.74,
      "client_model_up": 0.22, "client_model_down": 0.93,
      "edge_model_up": 1.34, "edge_model_down": 1.34,
      "grad_from_edge": 31.25}, 103.75),
    ("sherl", 10, 20,
     {"client_smashed_up": 54.93, "edge_smashed_up": 13.74,
      "client_model_up": 0.11, "client_model_down": 0.48,
      "edge_model_up": 0.67, "edge_model_down": 0.67,
      "grad_from_edge": 31.25}, 101.85),
    ("sherl", 25, 50,
     {"client_smashed_up": 54.93, "edge_smashed_up": 13.74,
      "client_model_up": 0.06, "client_model_down": 0.24,
      "edge_model_up": 0.34, "edge_model_down": 0.34,
      "grad_from_edge": 31.25}, 100.90),
]

SHORT = {
    "client_smashed_up": "c-smash",
    "edge_smashed_up": "e-smash",
    "client_model_up": "cm-up",
    "client_model_down": "cm-down",
    "edge_model_up": "em-up",
    "edge_model_down": "em-down",
    "grad_from_cloud": "g-cloud",
    "grad_from_edge": "g-edge",
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--tolerance", type=float, default=0.01,
                        help="allowed |predicted - reference| in GB")
    args = parser.parse_args(argv)

    header = ["method", "t1", "t2"] + [SHORT[k] for k in KINDS] + ["total", "reference", "ok"]
    print(" ".join(f"{h:>9}" for h in header))
    worst = 0.0
    for strategy, t1, t2, row, want in ROWS:
        base = CostModelInput(strategy=strategy, t1=t1, t2=t2, **DEPLOYMENT)
        predicted = analytic_cost(units_from_row(base, row))
        total = predicted.total / GB
        diff = abs(total - want)
        worst = max(worst, diff)
        cells = [f"{strategy:>9}", f"{t1:>9}", f"{t2:>9}"]
        cells += [f"{predicted.get(k) / GB:>9.2f}" for k in KINDS]
        cells += [f"{total:>9.2f}", f"{want:>9.2f}", f"{'yes' if diff <= args.tolerance else 'NO':>9}"]
        print(" ".join(cells))
    print(f"\nworst |predicted - reference| = {worst:.6f} GB")
    return 0 if worst <= args.tolerance else 1


if __name__ == "__main__":
    sys.exit(main())

"""Simulate five protocols on one topology and compare measured traffic.

Runs the split hierarchical strategy, its gradient-relaying variant,
split learning with model exchange, plain FedAvg, and two-level model
averaging on the same synthetic deployment, then prints the per-kind
byte ledger of each run. The two split hierarchical variants sync
models on a slow cadence; the baselines sync every round.
"""
import argparse
import sys

from tierfl.config import (
    DataSettings,
    ModelSettings,
    RunConfig,
    Schedule,
    StrategyConfig,
    TopologySettings,
)
from tierfl.ledger import KINDS
from tierfl.protocols import Simulation

# (strategy, client-sync cadence t1, edge-sync cadence t2)
ARMS = [
    ("sherl", 5, 10),
    ("hsfl", 5, 10),
    ("splitfed", 1, 1),
    ("hierfl", 1, 1),
    ("fedavg", 1, 1),
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


def build_config(kind: str, t1: int, t2: int, args) -> RunConfig:
    return RunConfig(
        strategy=StrategyConfig(kind=kind, lr=0.05, optimizer="sgd"),
        schedule=Schedule(rounds=args.rounds, t1=t1, t2=t2, sample_rate=args.sample_rate),
        topology=TopologySettings(n_clients=args.clients, n_edges=args.edges),
        model=ModelSettings(hidden_dims=(8, 8, 6, 6), cut1=2, cut2=4),
        data=DataSettings(classes=4, per_class=50, test_per_class=10, dim=8,
                          batch_size=4, pairs_per_batch=4),
        seed=args.seed,
    )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--clients", type=int, default=200)
    parser.add_argument("--edges", type=int, default=10)
    parser.add_argument("--rounds", type=int, default=200)
    parser.add_argument("--sample-rate", type=float, default=0.1)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    totals = {}
    print(f"{'method':>9} {'t1':>3} {'t2':>3} " +
          " ".join(f"{SHORT[k]:>11}" for k in KINDS) + f" {'total':>13}")
    for kind, t1, t2 in ARMS:
        result = Simulation(build_config(kind, t1, t2, args)).run()
        summary = result.ledger.summary()
        totals[kind] = summary.total
        cells = [f"{summary.get(k):>11,}" for k in KINDS]
        print(f"{kind:>9} {t1:>3} {t2:>3} " + " ".join(cells) + f" {summary.total:>13,}")

    ordered = sorted(totals, key=totals.get)
    print("\ncheapest to dearest:", " < ".join(ordered))
    return 0 if ordered[0] == "sherl" else 1


if __name__ == "__main__":
    sys.exit(main())

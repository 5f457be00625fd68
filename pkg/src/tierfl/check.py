"""Built-in invariant battery behind ``tierfl check``.

Each check is cheap enough to run on every install; together they cover
the gradient engine, the split/flatten round trips, partition exactness,
aggregation equivalences, and the ledger/cost-model agreement without
needing the test suite installed.
"""
from __future__ import annotations

import numpy as np

from .autodiff import Tape, Tensor, add_bias, gradient_check, matmul, mean_all, relu
from .config import DataSettings, ModelSettings, RunConfig, TopologySettings
from .data import PartitionSpec, make_blobs, partition
from .ledger import KINDS, analytic_cost, reconcile
from .protocols import (
    Schedule,
    StrategyConfig,
    Simulation,
    aggregate_fednova,
    aggregate_weighted,
)
from .segments import SegmentParams, build_segment, forward_segment, role_aware_split


def _check_gradients() -> None:
    rng = np.random.default_rng(7)
    w1 = rng.normal(size=(5, 4))
    b1 = rng.normal(size=4)

    def f(x: Tensor) -> Tensor:
        return mean_all(relu(add_bias(matmul(x, Tensor(w1)), Tensor(b1))))

    err = gradient_check(f, Tensor(rng.normal(size=(3, 5)) + 0.5, requires_grad=True))
    assert err < 1e-6, f"finite-difference mismatch {err}"


def _split_transparency() -> None:
    from .segments import LayerSpec

    layers = (
        LayerSpec(6, 8, "relu"),
        LayerSpec(8, 8, "relu"),
        LayerSpec(8, 5, "relu"),
        LayerSpec(5, 5, "relu"),
        LayerSpec(5, 3, "none"),
    )
    full = build_segment(layers, seed=11)
    plan = role_aware_split(layers, 2, 4)
    arrays = full.layer_arrays()
    client = SegmentParams.from_arrays(plan.client, arrays[:2])
    edge = SegmentParams.from_arrays(plan.edge, arrays[2:4])
    cloud = SegmentParams.from_arrays(plan.cloud, arrays[4:])
    x = Tensor(np.random.default_rng(3).normal(size=(4, 6)))
    with Tape():
        whole = forward_segment(full, layers, x)
        piecewise = forward_segment(
            cloud, plan.cloud, forward_segment(edge, plan.edge, forward_segment(client, plan.client, x))
        )
    assert np.array_equal(whole.data, piecewise.data), "split forward is not transparent"

    rebuilt = SegmentParams.from_arrays(layers, full.layer_arrays())
    assert np.array_equal(rebuilt.flat.data, full.flat.data), "flatten round trip drifted"


def _check_partition() -> None:
    ds = make_blobs(n_classes=3, per_class=11, dim=4, spread=1.0, seed=5)
    for mode in ("iid", "dirichlet", "shards"):
        shards = partition(ds, PartitionSpec(mode=mode, n_clients=5, seed=9))
        merged = np.sort(np.concatenate(shards))
        assert np.array_equal(merged, np.arange(ds.n)), f"{mode} partition lost or duplicated rows"


def _check_fednova_reduction() -> None:
    from .segments import LayerSpec

    layers = (LayerSpec(3, 2, "none"),)
    base = build_segment(layers, seed=2)
    rng = np.random.default_rng(4)
    clients = [SegmentParams(Tensor(base.flat.data + rng.normal(size=base.n_params)), base.layout) for _ in range(3)]
    weights = [2.0, 1.0, 1.0]
    updates = [(base.flat.data - c.flat.data, 1) for c in clients]
    nova = aggregate_fednova(base, updates, weights)
    avg = aggregate_weighted(clients, weights)
    assert np.allclose(nova.flat.data, avg.flat.data, atol=1e-12), "single-step fednova differs from weighted mean"


def _tiny_config(kind: str, **overrides) -> RunConfig:
    base = dict(
        strategy=StrategyConfig(kind=kind, lr=0.01, optimizer="sgd"),
        schedule=Schedule(rounds=3, t1=1, t2=1, sample_rate=1.0),
        topology=TopologySettings(n_clients=4, n_edges=1),
        model=ModelSettings(hidden_dims=(8, 8, 6, 6), cut1=2, cut2=4),
        data=DataSettings(classes=3, per_class=8, test_per_class=4, dim=6, batch_size=4, pairs_per_batch=4),
        seed=13,
    )
    base.update(overrides)
    return RunConfig(**base)


def _check_hierfl_collapse() -> None:
    flat = Simulation(_tiny_config("fedavg")).run()
    hier = Simulation(_tiny_config("hierfl")).run()
    for a, b in zip(flat.metrics, hier.metrics):
        assert a.loss == b.loss and a.macro_f1 == b.macro_f1, "one-edge hierarchy diverged from flat averaging"


def _check_sherl_traffic() -> None:
    cfg = _tiny_config(
        "sherl",
        strategy=StrategyConfig(kind="sherl", lr=0.01, optimizer="sgd"),
        topology=TopologySettings(n_clients=4, n_edges=2),
        schedule=Schedule(rounds=4, t1=2, t2=4, sample_rate=1.0),
    )
    sim = Simulation(cfg)
    result = sim.run()
    summary = result.ledger.summary()
    assert summary.get("grad_from_cloud") == 0, "representation strategy leaked a cloud gradient"
    report = reconcile(summary, analytic_cost(sim.cost_input()))
    assert report.passed, f"ledger disagrees with the cost model: {report.diffs}"
    assert summary.total == sum(summary.get(k) for k in KINDS), "total identity broke"


CHECKS = (
    ("gradient engine vs finite differences", _check_gradients),
    ("split forward transparency and flatten round trip", _split_transparency),
    ("partition exactness", _check_partition),
    ("fednova reduces to weighted averaging at one step", _check_fednova_reduction),
    ("one-edge hierarchy matches flat averaging", _check_hierfl_collapse),
    ("representation strategy traffic and cost model", _check_sherl_traffic),
)


def run_checks(verbose: bool = True) -> bool:
    ok = True
    for name, fn in CHECKS:
        try:
            fn()
            if verbose:
                print(f"pass: {name}")
        except Exception as exc:
            ok = False
            if verbose:
                print(f"FAIL: {name}: {exc}")
    return ok

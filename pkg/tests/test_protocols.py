"""Round engine: sampling, aggregation, strategy equivalences, traffic."""
import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import tiny_config
from tierfl.autodiff import Tensor
from tierfl.config import DataSettings, TopologySettings
from tierfl.errors import ConfigError, ContractError
from tierfl.ledger import KINDS, analytic_cost, reconcile
from tierfl.protocols import (
    Schedule,
    Simulation,
    StrategyConfig,
    Topology,
    aggregate_fednova,
    aggregate_weighted,
    select_clients,
)
from tierfl.segments import LayerSpec, SegmentParams, build_segment

SPEC1 = (LayerSpec(1, 1, "none"),)


def scalar_params(w: float, b: float = 0.0) -> SegmentParams:
    return SegmentParams.from_arrays(SPEC1, [(np.array([[w]]), np.array([b]))])


# ---- topology and schedule ---- #


def test_contiguous_topology_blocks():
    topo = Topology.contiguous(7, 3)
    assert topo.assignment == (0, 0, 0, 1, 1, 2, 2)
    assert topo.clients_of(1) == [3, 4]


def test_topology_validation():
    with pytest.raises(ConfigError):
        Topology(n_clients=2, n_edges=2, assignment=(0, 0))
    with pytest.raises(ConfigError):
        Topology(n_clients=2, n_edges=1, assignment=(0, 1))
    with pytest.raises(ConfigError):
        Topology.contiguous(2, 3)


def test_schedule_and_strategy_validation():
    with pytest.raises(ConfigError):
        Schedule(rounds=5, t1=0, t2=1)
    with pytest.raises(ConfigError):
        Schedule(rounds=5, t1=1, t2=1, sample_rate=0.0)
    with pytest.raises(ConfigError):
        StrategyConfig(kind="fednova", optimizer="adam")
    with pytest.raises(ConfigError):
        StrategyConfig(kind="sherl", margin=2.5)
    with pytest.raises(ConfigError):
        StrategyConfig(kind="mystery")


@given(
    st.integers(min_value=1, max_value=40),
    st.floats(min_value=0.05, max_value=1.0),
    st.integers(min_value=1, max_value=50),
)
@settings(max_examples=40, deadline=None)
def test_select_clients_contract(n, rate, round_idx):
    topo = Topology.contiguous(n, 1)
    sched = Schedule(rounds=50, t1=1, t2=1, sample_rate=rate)
    picked = select_clients(topo, sched, round_idx, seed=5)
    assert len(picked) == math.ceil(rate * n)
    assert picked == sorted(picked)
    assert len(set(picked)) == len(picked)
    assert all(0 <= c < n for c in picked)
    assert picked == select_clients(topo, sched, round_idx, seed=5)


def test_select_clients_varies_with_round():
    topo = Topology.contiguous(30, 1)
    sched = Schedule(rounds=10, t1=1, t2=1, sample_rate=0.2)
    draws = {tuple(select_clients(topo, sched, r, seed=1)) for r in range(1, 11)}
    assert len(draws) > 1


# ---- aggregation ---- #


def test_aggregate_weighted_oracle():
    out = aggregate_weighted([scalar_params(2.0), scalar_params(4.0)], [1.0, 3.0])
    assert out.flat.data[0] == pytest.approx(3.5)


def test_aggregate_single_is_bit_exact_copy():
    src = scalar_params(0.1 + 0.2)  # value with no short float representation
    out = aggregate_weighted([src], [3.0])
    assert np.array_equal(out.flat.data, src.flat.data)
    assert out.flat.data is not src.flat.data


def test_aggregate_weighted_errors():
    with pytest.raises(ContractError):
        aggregate_weighted([], [])
    with pytest.raises(ContractError):
        aggregate_weighted([scalar_params(1.0)], [1.0, 2.0])
    with pytest.raises(ContractError):
        aggregate_weighted([scalar_params(1.0), scalar_params(2.0)], [0.0, 0.0])
    with pytest.raises(ContractError):
        aggregate_weighted([scalar_params(1.0), scalar_params(2.0)], [-1.0, 2.0])


def test_fednova_oracle():
    initial = scalar_params(10.0, b=10.0)
    delta = np.array([4.0, 4.0])
    out = aggregate_fednova(initial, [(delta, 1), (delta, 4)], [1.0, 1.0])
    # tau_eff = 2.5, normalized step = 2.5, total 6.25.
    assert np.allclose(out.flat.data, np.array([3.75, 3.75]))


def test_fednova_homogeneous_matches_weighted_mean():
    initial = scalar_params(1.0, b=-1.0)
    rng = np.random.default_rng(0)
    ends = [SegmentParams(Tensor(initial.flat.data + rng.normal(size=2)), initial.layout) for _ in range(4)]
    weights = [1.0, 2.0, 3.0, 4.0]
    updates = [(initial.flat.data - e.flat.data, 3) for e in ends]
    nova = aggregate_fednova(initial, updates, weights)
    avg = aggregate_weighted(ends, weights)
    assert np.allclose(nova.flat.data, avg.flat.data, atol=1e-12)


def test_fednova_validation():
    with pytest.raises(ContractError):
        aggregate_fednova(scalar_params(1.0), [(np.zeros(2), 0)], [1.0])
    with pytest.raises(ContractError):
        aggregate_fednova(scalar_params(1.0), [(np.zeros(3), 1)], [1.0])


# ---- full runs ---- #


def run_metrics(cfg):
    return Simulation(cfg).run()


def test_run_is_deterministic():
    a = run_metrics(tiny_config("sherl"))
    b = run_metrics(tiny_config("sherl"))
    assert a.metrics == b.metrics
    assert a.ledger.csv_rows() == b.ledger.csv_rows()
    assert np.array_equal(a.embeddings, b.embeddings)


def test_seed_changes_trajectory():
    a = run_metrics(tiny_config("sherl"))
    b = run_metrics(tiny_config("sherl", seed=12))
    assert a.metrics != b.metrics


@pytest.mark.parametrize("kind", ["fedavg", "fedsgd", "fedprox", "fednova", "hierfl", "splitfed", "hsfl", "sherl"])
def test_ledger_reconciles_exactly(kind):
    sim = Simulation(tiny_config(kind))
    result = sim.run()
    predicted = analytic_cost(sim.cost_input())
    report = reconcile(result.ledger.summary(), predicted, tol=0.0)
    assert report.passed, report.diffs


def test_sherl_never_ships_cloud_gradients():
    result = run_metrics(tiny_config("sherl", schedule=Schedule(rounds=6, t1=2, t2=3, sample_rate=0.5)))
    assert result.ledger.count("grad_from_cloud") == 0
    assert all(r.kind != "grad_from_cloud" for r in result.ledger.records)


def test_hsfl_and_sherl_differ_only_in_cloud_gradient_bytes():
    a = run_metrics(tiny_config("hsfl")).ledger.summary()
    b = run_metrics(tiny_config("sherl")).ledger.summary()
    assert a.get("grad_from_cloud") > 0
    assert b.get("grad_from_cloud") == 0
    for kind in KINDS:
        if kind != "grad_from_cloud":
            assert a.get(kind) == b.get(kind), kind


def test_fedprox_zero_mu_collapses_to_fedavg():
    prox = tiny_config("fedprox", strategy=StrategyConfig(kind="fedprox", lr=0.01, optimizer="sgd", mu=0.0))
    avg = tiny_config("fedavg")
    assert run_metrics(prox).metrics == run_metrics(avg).metrics


def test_fedprox_single_step_equals_fedavg():
    """With one local step the pull-back term has zero gradient (the
    model still sits at the round-start point), so mu cannot matter."""
    prox = tiny_config("fedprox")
    avg = tiny_config("fedavg")
    assert run_metrics(prox).metrics == run_metrics(avg).metrics


def test_fedprox_positive_mu_changes_training():
    prox = tiny_config("fedprox", strategy=StrategyConfig(
        kind="fedprox", lr=0.01, optimizer="sgd", mu=0.1, local_epochs=2))
    avg = tiny_config("fedavg", strategy=StrategyConfig(
        kind="fedavg", lr=0.01, optimizer="sgd", local_epochs=2))
    assert run_metrics(prox).metrics != run_metrics(avg).metrics


def test_splitfed_traffic_kinds():
    result = run_metrics(tiny_config("splitfed", schedule=Schedule(rounds=4, t1=1, t2=1, sample_rate=0.5)))
    seen = {r.kind for r in result.ledger.records}
    assert seen == {"client_smashed_up", "grad_from_cloud", "client_model_up", "client_model_down"}
    assert all(r.dst == "cloud" or r.src == "cloud" for r in result.ledger.records)


def test_embeddings_come_from_the_second_cut():
    cfg = tiny_config("sherl")
    result = run_metrics(cfg)
    hidden = cfg.model.hidden_dims
    assert result.embeddings.shape == (cfg.data.classes * cfg.data.test_per_class, hidden[cfg.model.cut2 - 1])
    assert np.array_equal(result.embedding_labels, np.repeat(np.arange(3), 6))


def test_round_callback_sees_every_round():
    seen = []
    Simulation(tiny_config("fedavg"), on_round_end=lambda sim, r: seen.append(r)).run()
    assert seen == [1, 2, 3, 4]


def test_masks_populate_overlap_metrics():
    with_m = run_metrics(tiny_config("fedavg", data=DataSettings(
        classes=3, per_class=8, test_per_class=6, dim=6, batch_size=4, pairs_per_batch=4, with_masks=True)))
    without = run_metrics(tiny_config("fedavg"))
    assert all(m.iou is not None and m.dice is not None for m in with_m.metrics)
    assert all(0.0 <= m.iou <= 1.0 and 0.0 <= m.dice <= 1.0 for m in with_m.metrics)
    assert all(m.iou is None and m.dice is None for m in without.metrics)


def test_zero_rounds_still_reports_initial_embeddings():
    result = run_metrics(tiny_config("sherl", schedule=Schedule(rounds=0, t1=1, t2=1, sample_rate=0.5)))
    assert result.metrics == []
    assert result.embeddings is not None and result.embeddings.shape[0] == 18


def test_client_sync_toggle_shrinks_edge_messages():
    on = Simulation(tiny_config("sherl"))
    off = Simulation(tiny_config("sherl", sync_clients_at_t2=False))
    up_on = on.run().ledger
    up_off = off.run().ledger
    on_bytes = [r.bytes for r in up_on.records if r.kind == "edge_model_up"]
    off_bytes = [r.bytes for r in up_off.records if r.kind == "edge_model_up"]
    assert len(on_bytes) == len(off_bytes) > 0
    assert all(a > b for a, b in zip(on_bytes, off_bytes))


def test_client_sync_toggle_aligns_edges_at_t2():
    cfg = tiny_config("sherl", schedule=Schedule(rounds=4, t1=2, t2=4, sample_rate=1.0))
    snapshots = {}

    def grab(sim, r):
        snapshots[r] = [e.segments["client_agg"].flat.data.copy() for e in sim.edges]

    Simulation(cfg, on_round_end=grab).run()
    assert not np.array_equal(snapshots[2][0], snapshots[2][1]), "edges train apart between cloud syncs"
    assert np.array_equal(snapshots[4][0], snapshots[4][1]), "cloud sync must align client segments"


def test_dirichlet_runs_end_to_end():
    cfg = tiny_config("sherl", data=DataSettings(
        classes=3, per_class=8, test_per_class=6, dim=6, batch_size=4,
        pairs_per_batch=4, partition="dirichlet", alpha=0.3))
    result = run_metrics(cfg)
    assert len(result.metrics) == 4


def test_fednova_heterogeneous_epochs_still_reconcile():
    cfg = tiny_config("fednova", strategy=StrategyConfig(kind="fednova", lr=0.01, optimizer="sgd", local_epochs=2))
    sim = Simulation(cfg)
    result = sim.run()
    report = reconcile(result.ledger.summary(), analytic_cost(sim.cost_input()), tol=0.0)
    assert report.passed, report.diffs

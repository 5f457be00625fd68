"""Shared fixtures: small fast run configurations."""
from tierfl.config import DataSettings, ModelSettings, RunConfig, TopologySettings
from tierfl.protocols import Schedule, StrategyConfig


def tiny_config(kind: str, **overrides) -> RunConfig:
    """A seconds-scale config: 6 clients, 2 edges, 24 train points.

    Client datasets are equal-sized so the closed-form cost model is
    exact for every strategy.
    """
    strategy_kwargs = dict(kind=kind, lr=0.01, optimizer="sgd")
    if kind == "fedprox":
        strategy_kwargs["mu"] = 0.1
    base = dict(
        strategy=StrategyConfig(**strategy_kwargs),
        schedule=Schedule(rounds=4, t1=2, t2=4, sample_rate=0.5),
        topology=TopologySettings(n_clients=6, n_edges=2),
        model=ModelSettings(hidden_dims=(8, 8, 6, 6), cut1=2, cut2=4),
        data=DataSettings(
            classes=3, per_class=8, test_per_class=6, dim=6,
            batch_size=4, pairs_per_batch=4,
        ),
        seed=11,
    )
    base.update(overrides)
    return RunConfig(**base)

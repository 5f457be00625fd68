"""Round-based execution of federated training strategies.

Eight strategy kinds share one engine:

* ``fedavg`` / ``fedsgd`` / ``fedprox`` / ``fednova``: single-tier
  strategies. Full models train locally and a server aggregate is
  rebuilt every round.
* ``hierfl``: full models on clients, aggregated at edges every t1
  rounds and across edges at the cloud every t2 rounds.
* ``splitfed``: two-way split. Clients run the lower layers, the server
  runs the rest and returns activation gradients each round; client
  segments are aggregated every t1 rounds.
* ``hsfl``: three-way split (client / edge / cloud). The cloud computes
  the task loss and backpropagates through the edge down to clients.
* ``sherl``: same three-way topology, but the edge trains on a pairwise
  embedding objective and is the only source of client gradients. The
  cloud trains its head on detached edge outputs, so no gradient ever
  leaves the cloud.

Every transfer between tiers goes through the communication ledger.
All randomness derives from the master seed keyed by stream, node, and
round, so a (config, seed) pair fully determines the run, including
ledger bytes and emitted metrics.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, TYPE_CHECKING

import numpy as np

from . import seeding
from .autodiff import Tape, Tensor, add, mul, sum_all
from .data import Dataset, PartitionSpec, class_mask, make_blobs, make_pairs, partition, with_masks
from .errors import ConfigError, ContractError, NumericError
from .ledger import (
    CLIENT,
    CLOUD,
    EDGE,
    FLAT_KINDS,
    SPLIT3_KINDS,
    STRATEGY_KINDS,
    CostModelInput,
    Ledger,
)
from .losses import (
    contrastive_loss_rows,
    cross_entropy,
    embedding_separation,
    iou_dice,
    macro_f1,
    proximal_term,
    validate_margin,
)
from .optim import Adam, Optimizer, Sgd
from .segments import (
    LayerSpec,
    SegmentParams,
    SplitPlan,
    build_segment,
    forward_segment,
    param_bytes,
    role_aware_split,
)

if TYPE_CHECKING:  # pragma: no cover
    from .config import RunConfig

LABEL_BYTES = 4

OPTIMIZERS = ("sgd", "adam")


@dataclass(frozen=True)
class Topology:
    """Static client-to-edge assignment."""

    n_clients: int
    n_edges: int
    assignment: tuple[int, ...]

    def __post_init__(self):
        errors = []
        if self.n_clients < 1:
            errors.append(f"n_clients: must be >= 1, got {self.n_clients}")
        if self.n_edges < 1:
            errors.append(f"n_edges: must be >= 1, got {self.n_edges}")
        if len(self.assignment) != self.n_clients:
            errors.append("assignment: one edge id per client required")
        elif self.n_clients and self.n_edges:
            if any(not 0 <= e < self.n_edges for e in self.assignment):
                errors.append("assignment: edge ids out of range")
            elif len(set(self.assignment)) < self.n_edges:
                errors.append("assignment: every edge needs at least one client")
        if errors:
            raise ConfigError(errors)

    @classmethod
    def contiguous(cls, n_clients: int, n_edges: int) -> "Topology":
        """Clients in contiguous, near-equal blocks per edge."""
        if n_edges > n_clients:
            raise ConfigError([f"n_edges: {n_edges} edges cannot all receive one of {n_clients} clients"])
        assignment = tuple(i * n_edges // n_clients for i in range(n_clients))
        return cls(n_clients=n_clients, n_edges=n_edges, assignment=assignment)

    def clients_of(self, edge: int) -> list[int]:
        return [c for c, e in enumerate(self.assignment) if e == edge]


@dataclass(frozen=True)
class Schedule:
    """Round budget, sync cadences, and per-round client sampling rate."""

    rounds: int
    t1: int
    t2: int
    sample_rate: float = 0.1

    def __post_init__(self):
        errors = []
        if self.rounds < 0:
            errors.append(f"rounds: must be >= 0, got {self.rounds}")
        if self.t1 < 1:
            errors.append(f"t1: must be >= 1, got {self.t1}")
        if self.t2 < 1:
            errors.append(f"t2: must be >= 1, got {self.t2}")
        if not (0.0 < self.sample_rate <= 1.0):
            errors.append(f"sample_rate: must lie in (0, 1], got {self.sample_rate}")
        if errors:
            raise ConfigError(errors)


@dataclass(frozen=True)
class StrategyConfig:
    """Which strategy runs and how nodes optimize locally."""

    kind: str
    margin: float = 0.5
    lr: float = 1e-4
    local_epochs: int = 1
    optimizer: str = "adam"
    mu: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        errors = []
        if self.kind not in STRATEGY_KINDS:
            errors.append(f"kind: unknown strategy {self.kind!r}")
        if not (0.0 <= self.margin <= 2.0):
            errors.append(f"margin: {self.margin} outside [0, 2]")
        if self.lr <= 0:
            errors.append(f"lr: must be positive, got {self.lr}")
        if self.local_epochs < 0:
            errors.append(f"local_epochs: must be >= 0, got {self.local_epochs}")
        if self.optimizer not in OPTIMIZERS:
            errors.append(f"optimizer: unknown optimizer {self.optimizer!r}")
        if self.mu < 0:
            errors.append(f"mu: must be >= 0, got {self.mu}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            errors.append("beta1/beta2: must lie in [0, 1)")
        if self.eps <= 0:
            errors.append(f"eps: must be positive, got {self.eps}")
        if self.kind == "fednova":
            if self.optimizer != "sgd":
                errors.append("optimizer: fednova requires plain sgd local steps")
            if self.local_epochs < 1:
                errors.append("local_epochs: fednova needs at least one local step")
        if errors:
            raise ConfigError(errors)


@dataclass
class NodeState:
    """One simulated node: hosted segments, their optimizers, a base seed."""

    tier: str
    node_id: int
    segments: dict[str, SegmentParams]
    optimizers: dict[str, Optimizer]
    seed: int


def select_clients(topology: Topology, schedule: Schedule, round_idx: int, seed: int) -> list[int]:
    """ceil(sample_rate * n_clients) client ids, seeded by (seed, round),
    drawn without replacement and returned in ascending id order."""
    k = math.ceil(schedule.sample_rate * topology.n_clients)
    rng = seeding.spawn_rng(seed, seeding.SELECT, round_idx)
    picked = rng.permutation(topology.n_clients)[:k]
    return sorted(int(c) for c in picked)


def aggregate_weighted(params_list: Sequence[SegmentParams], weights: Sequence[float]) -> SegmentParams:
    """Weighted mean of parameter vectors, reduced in list order.

    A single entry is returned as an exact copy (no multiply/divide), so
    degenerate aggregations are bit-transparent.
    """
    if not params_list:
        raise ContractError("aggregate of an empty list")
    if len(weights) != len(params_list):
        raise ContractError(f"{len(weights)} weights for {len(params_list)} models")
    layout = params_list[0].layout
    for p in params_list[1:]:
        if p.layout != layout:
            raise ContractError("aggregate across mismatched parameter layouts")
    w = [float(x) for x in weights]
    if any(x < 0 for x in w):
        raise ContractError("weights must be non-negative")
    total = sum(w)
    if total <= 0:
        raise ContractError("weights must not sum to zero")
    if len(params_list) == 1:
        return params_list[0].copy()
    acc = np.zeros_like(params_list[0].flat.data)
    for p, x in zip(params_list, w):
        acc += x * p.flat.data
    return SegmentParams(Tensor(acc / total), layout)


def aggregate_fednova(
    initial: SegmentParams,
    updates: Sequence[tuple[np.ndarray, int]],
    weights: Sequence[float],
) -> SegmentParams:
    """Normalized aggregation of heterogeneous-length local updates.

    ``updates`` holds (delta, tau) per client with delta = start - end
    over tau local SGD steps. The new model is
    w - tau_eff * sum_i p_i * delta_i / tau_i with p_i the normalized
    weights and tau_eff = sum_i p_i * tau_i.
    """
    if not updates:
        raise ContractError("aggregate of an empty update list")
    if len(weights) != len(updates):
        raise ContractError(f"{len(weights)} weights for {len(updates)} updates")
    w = [float(x) for x in weights]
    if any(x < 0 for x in w):
        raise ContractError("weights must be non-negative")
    total = sum(w)
    if total <= 0:
        raise ContractError("weights must not sum to zero")
    size = initial.flat.data.shape[0]
    for delta, tau in updates:
        if tau < 1:
            raise ContractError(f"tau must be >= 1, got {tau}")
        if delta.shape != (size,):
            raise ContractError("update length does not match the model")
    p = [x / total for x in w]
    tau_eff = sum(pi * tau for pi, (_, tau) in zip(p, updates))
    step = np.zeros(size)
    for pi, (delta, tau) in zip(p, updates):
        step += pi * (delta / tau)
    return SegmentParams(Tensor(initial.flat.data - tau_eff * step), initial.layout)


def local_train_flat(
    node: NodeState,
    ds: Dataset,
    spec: Sequence[LayerSpec],
    strategy: StrategyConfig,
    batch_size: int,
    master_seed: int,
    round_idx: int,
) -> tuple[np.ndarray, int]:
    """Local training of a full model hosted under the ``full`` key.

    Runs ``local_epochs`` epochs of seeded mini-batch steps (``fedsgd``
    stops after exactly one step). With zero epochs the parameters are
    untouched. Returns (round-start parameter vector, step count).
    """
    params = node.segments["full"]
    opt = node.optimizers["full"]
    start = params.flat.data.copy()
    start_ref = SegmentParams(Tensor(start), params.layout)
    steps = 0
    for epoch in range(strategy.local_epochs):
        perm = seeding.spawn_rng(master_seed, seeding.BATCH, node.node_id, round_idx, epoch).permutation(ds.n)
        for lo in range(0, ds.n, batch_size):
            chunk = perm[lo:lo + batch_size]
            x = Tensor(ds.features.data[chunk])
            y = ds.labels[chunk]
            train = params.training_copy()
            with Tape() as tape:
                loss = cross_entropy(forward_segment(train, spec, x), y)
                if strategy.kind == "fedprox" and strategy.mu > 0:
                    loss = add(loss, proximal_term(train, start_ref, strategy.mu))
                tape.backward(loss)
            params = SegmentParams(Tensor(opt.step(params.flat.data, train.flat.grad)), params.layout)
            steps += 1
            if strategy.kind == "fedsgd":
                break
        if strategy.kind == "fedsgd":
            break
    node.segments["full"] = params
    return start, steps


@dataclass(frozen=True)
class RoundMetrics:
    """Held-out evaluation after one round. Mask scores appear only when
    the dataset carries masks; silhouette only when it is defined."""

    round: int
    loss: float
    macro_f1: float
    silhouette: Optional[float] = None
    iou: Optional[float] = None
    dice: Optional[float] = None


@dataclass
class RunResult:
    metrics: list[RoundMetrics]
    ledger: Ledger
    embeddings: np.ndarray
    embedding_labels: np.ndarray


class Simulation:
    """One experiment: topology, data, node states, and the round loop.

    ``on_round_end(sim, round_idx)`` runs after each round's evaluation;
    tests use it to observe node trajectories.
    """

    def __init__(self, cfg: "RunConfig", on_round_end: Optional[Callable[["Simulation", int], None]] = None):
        self.cfg = cfg
        self.strategy = cfg.strategy
        self.schedule = cfg.schedule
        self.master_seed = cfg.seed
        self.bytes_per_scalar = cfg.bytes_per_scalar
        self.on_round_end = on_round_end
        validate_margin(self.strategy.margin)

        self.topology = Topology.contiguous(cfg.topology.n_clients, cfg.topology.n_edges)
        self.train, self.test = self._build_data()
        shards = partition(
            self.train,
            PartitionSpec(
                mode=cfg.data.partition,
                n_clients=self.topology.n_clients,
                seed=seeding.spawn_seed(self.master_seed, seeding.PARTITION),
                alpha=cfg.data.alpha,
                shards_per_client=cfg.data.shards_per_client,
            ),
        )
        self.client_data = [self.train.subset(idx) for idx in shards]
        self.edge_weights = [
            sum(self.client_data[c].n for c in self.topology.clients_of(e))
            for e in range(self.topology.n_edges)
        ]

        dims = [cfg.data.dim] + list(cfg.model.hidden_dims) + [cfg.data.classes]
        layers = tuple(
            LayerSpec(a, b, "relu" if i < len(dims) - 2 else "none")
            for i, (a, b) in enumerate(zip(dims, dims[1:]))
        )
        self.full_spec = layers
        self.cut1, self.cut2 = cfg.model.cut1, cfg.model.cut2
        kind = self.strategy.kind
        if kind in SPLIT3_KINDS:
            self.plan = role_aware_split(layers, self.cut1, self.cut2)
        elif kind == "splitfed":
            if not 0 < self.cut1 < len(layers):
                raise ConfigError([f"model.cut1: must satisfy 0 < cut1 < {len(layers)}"])
            self.plan = SplitPlan(client=layers[:self.cut1], edge=(), cloud=layers[self.cut1:])
        else:
            self.plan = SplitPlan(client=layers, edge=(), cloud=())
        if not 0 < self.cut2 < len(layers):
            raise ConfigError([f"model.cut2: must satisfy 0 < cut2 < {len(layers)}"])

        self._init_nodes()
        self.ledger = Ledger()
        self._last_embeddings: Optional[np.ndarray] = None

    # ---- setup ---- #

    def _build_data(self) -> tuple[Dataset, Dataset]:
        d = self.cfg.data
        if d.csv_path:
            from .data import load_csv

            ds = load_csv(d.csv_path)
            rng = seeding.spawn_rng(self.master_seed, seeding.DATA)
            perm = rng.permutation(ds.n)
            n_test = max(1, int(round(ds.n * d.test_fraction)))
            if n_test >= ds.n:
                raise ConfigError(["data.test_fraction: leaves no training samples"])
            test_idx, train_idx = np.sort(perm[:n_test]), np.sort(perm[n_test:])
            train, test = ds.subset(train_idx), ds.subset(test_idx)
        else:
            total = make_blobs(
                n_classes=d.classes,
                per_class=d.per_class + d.test_per_class,
                dim=d.dim,
                spread=d.spread,
                seed=seeding.spawn_seed(self.master_seed, seeding.DATA),
            )
            block = d.per_class + d.test_per_class
            train_idx = np.concatenate(
                [np.arange(c * block, c * block + d.per_class) for c in range(d.classes)]
            )
            test_idx = np.concatenate(
                [np.arange(c * block + d.per_class, (c + 1) * block) for c in range(d.classes)]
            )
            train, test = total.subset(train_idx), total.subset(test_idx)
        if d.with_masks:
            train, test = with_masks(train), with_masks(test)
        return train, test

    def _make_optimizer(self) -> Optimizer:
        s = self.strategy
        if s.optimizer == "sgd":
            return Sgd(lr=s.lr)
        return Adam(lr=s.lr, beta1=s.beta1, beta2=s.beta2, eps=s.eps)

    def _init_nodes(self) -> None:
        kind = self.strategy.kind
        master = self.master_seed
        client_init = build_segment(self.plan.client, seeding.spawn_seed(master, seeding.INIT, 0))
        edge_init = (
            build_segment(self.plan.edge, seeding.spawn_seed(master, seeding.INIT, 1))
            if self.plan.edge
            else None
        )
        cloud_init = (
            build_segment(self.plan.cloud, seeding.spawn_seed(master, seeding.INIT, 2))
            if self.plan.cloud
            else None
        )

        self.clients: list[NodeState] = []
        for c in range(self.topology.n_clients):
            seg_key = "full" if kind in FLAT_KINDS or kind == "hierfl" else "client"
            self.clients.append(
                NodeState(
                    tier=CLIENT,
                    node_id=c,
                    segments={seg_key: client_init.copy()},
                    optimizers={seg_key: self._make_optimizer()},
                    seed=seeding.spawn_seed(master, 9, 0, c),
                )
            )

        self.edges: list[NodeState] = []
        if kind == "hierfl":
            for e in range(self.topology.n_edges):
                self.edges.append(
                    NodeState(
                        tier=EDGE,
                        node_id=e,
                        segments={"full_agg": client_init.copy()},
                        optimizers={},
                        seed=seeding.spawn_seed(master, 9, 1, e),
                    )
                )
        elif kind in SPLIT3_KINDS:
            for e in range(self.topology.n_edges):
                self.edges.append(
                    NodeState(
                        tier=EDGE,
                        node_id=e,
                        segments={"edge": edge_init.copy(), "client_agg": client_init.copy()},
                        optimizers={"edge": self._make_optimizer()},
                        seed=seeding.spawn_seed(master, 9, 1, e),
                    )
                )

        if kind in FLAT_KINDS or kind == "hierfl":
            segments = {"full": client_init.copy()}
            optimizers = {}
        elif kind == "splitfed":
            segments = {"server": cloud_init.copy(), "client_agg": client_init.copy()}
            optimizers = {"server": self._make_optimizer()}
        else:
            segments = {"head": cloud_init.copy()}
            optimizers = {"head": self._make_optimizer()}
        self.cloud = NodeState(
            tier=CLOUD,
            node_id=0,
            segments=segments,
            optimizers=optimizers,
            seed=seeding.spawn_seed(master, 9, 2, 0),
        )
        # Evaluation fallback before the first hierfl sync.
        self._hierfl_view = client_init.copy()

    # ---- byte helpers ---- #

    def _seg_bytes(self, params: SegmentParams) -> int:
        return param_bytes(params, self.bytes_per_scalar)

    def _act_bytes(self, n_values: int) -> int:
        return n_values * self.bytes_per_scalar

    def _edge_model_message_bytes(self, edge: NodeState) -> int:
        """Edge-cloud model sync; carries the client aggregate when
        cross-edge client sync rides along."""
        size = self._seg_bytes(edge.segments["edge"])
        if self.cfg.sync_clients_at_t2:
            size += self._seg_bytes(edge.segments["client_agg"])
        return size

    # ---- round bodies ---- #

    def _round_flat(self, r: int, actives: list[int]) -> None:
        s = self.strategy
        batch = self.cfg.data.batch_size
        starts: dict[int, np.ndarray] = {}
        taus: dict[int, int] = {}
        for cid in actives:
            node = self.clients[cid]
            starts[cid], taus[cid] = local_train_flat(
                node, self.client_data[cid], self.plan.client, s, batch, self.master_seed, r
            )
            self.ledger.record(r, "client_model_up", CLIENT, CLOUD, self._seg_bytes(node.segments["full"]))
        weights = [self.client_data[cid].n for cid in actives]
        if s.kind == "fednova":
            updates = [
                (starts[cid] - self.clients[cid].segments["full"].flat.data, taus[cid])
                for cid in actives
            ]
            new_global = aggregate_fednova(self.cloud.segments["full"], updates, weights)
        else:
            new_global = aggregate_weighted(
                [self.clients[cid].segments["full"] for cid in actives], weights
            )
        self.cloud.segments["full"] = new_global
        down_bytes = self._seg_bytes(new_global)
        for node in self.clients:
            node.segments["full"] = new_global.copy()
            self.ledger.record(r, "client_model_down", CLOUD, CLIENT, down_bytes)

    def _round_hierfl(self, r: int, actives: list[int]) -> None:
        s = self.strategy
        batch = self.cfg.data.batch_size
        for cid in actives:
            local_train_flat(
                self.clients[cid], self.client_data[cid], self.plan.client, s, batch, self.master_seed, r
            )
        sync1 = r % self.schedule.t1 == 0
        sync2 = r % self.schedule.t2 == 0
        if sync1:
            for e, edge in enumerate(self.edges):
                members = [cid for cid in actives if self.topology.assignment[cid] == e]
                for cid in members:
                    self.ledger.record(
                        r, "client_model_up", CLIENT, EDGE,
                        self._seg_bytes(self.clients[cid].segments["full"]),
                    )
                if members:
                    edge.segments["full_agg"] = aggregate_weighted(
                        [self.clients[cid].segments["full"] for cid in members],
                        [self.client_data[cid].n for cid in members],
                    )
        if sync2:
            for edge in self.edges:
                self.ledger.record(
                    r, "edge_model_up", EDGE, CLOUD, self._seg_bytes(edge.segments["full_agg"])
                )
            new_global = aggregate_weighted(
                [edge.segments["full_agg"] for edge in self.edges], self.edge_weights
            )
            self.cloud.segments["full"] = new_global
            for edge in self.edges:
                edge.segments["full_agg"] = new_global.copy()
                self.ledger.record(r, "edge_model_down", CLOUD, EDGE, self._seg_bytes(new_global))
            self._hierfl_view = new_global
        if sync1:
            for e, edge in enumerate(self.edges):
                agg = edge.segments["full_agg"]
                down_bytes = self._seg_bytes(agg)
                for cid in self.topology.clients_of(e):
                    self.clients[cid].segments["full"] = agg.copy()
                    self.ledger.record(r, "client_model_down", EDGE, CLIENT, down_bytes)
            if not sync2:
                self._hierfl_view = self.edges[0].segments["full_agg"]

    def _task_batch(self, cid: int, r: int) -> tuple[Tensor, np.ndarray]:
        """One seeded mini-batch (without replacement) from a client's data."""
        ds = self.client_data[cid]
        perm = seeding.spawn_rng(self.master_seed, seeding.BATCH, cid, r, 0).permutation(ds.n)
        chunk = perm[: self.cfg.data.batch_size]
        return Tensor(ds.features.data[chunk]), ds.labels[chunk]

    def _round_splitfed(self, r: int, actives: list[int]) -> None:
        for cid in actives:
            node = self.clients[cid]
            x, y = self._task_batch(cid, r)
            ctrain = node.segments["client"].training_copy()
            ctape = Tape()
            with ctape:
                f = forward_segment(ctrain, self.plan.client, x)
            self.ledger.record(
                r, "client_smashed_up", CLIENT, CLOUD,
                self._act_bytes(f.size) + len(y) * LABEL_BYTES,
            )
            # Server trains on the received activations and returns their gradient.
            received = Tensor(f.data.copy(), requires_grad=True)
            strain = self.cloud.segments["server"].training_copy()
            with Tape() as stape:
                loss = cross_entropy(forward_segment(strain, self.plan.cloud, received), y)
                stape.backward(loss)
            self.cloud.segments["server"] = SegmentParams(
                Tensor(self.cloud.optimizers["server"].step(
                    self.cloud.segments["server"].flat.data, strain.flat.grad
                )),
                strain.layout,
            )
            self.ledger.record(r, "grad_from_cloud", CLOUD, CLIENT, self._act_bytes(f.size))
            with ctape:
                pseudo = sum_all(mul(f, Tensor(received.grad)))
            ctape.backward(pseudo)
            node.segments["client"] = SegmentParams(
                Tensor(node.optimizers["client"].step(node.segments["client"].flat.data, ctrain.flat.grad)),
                ctrain.layout,
            )
        if r % self.schedule.t1 == 0:
            for cid in actives:
                self.ledger.record(
                    r, "client_model_up", CLIENT, CLOUD,
                    self._seg_bytes(self.clients[cid].segments["client"]),
                )
            if actives:
                self.cloud.segments["client_agg"] = aggregate_weighted(
                    [self.clients[cid].segments["client"] for cid in actives],
                    [self.client_data[cid].n for cid in actives],
                )
            agg = self.cloud.segments["client_agg"]
            down_bytes = self._seg_bytes(agg)
            for node in self.clients:
                node.segments["client"] = agg.copy()
                self.ledger.record(r, "client_model_down", CLOUD, CLIENT, down_bytes)

    def _client_pair_forward(self, cid: int, r: int):
        """Client half of a split pair round: forward both pair sides."""
        node = self.clients[cid]
        pb = make_pairs(
            self.client_data[cid],
            self.cfg.data.pairs_per_batch,
            self.cfg.data.pos_fraction,
            seeding.spawn_seed(self.master_seed, seeding.PAIRS, cid, r),
        )
        ctrain = node.segments["client"].training_copy()
        ctape = Tape()
        with ctape:
            f1 = forward_segment(ctrain, self.plan.client, pb.x1)
            f2 = forward_segment(ctrain, self.plan.client, pb.x2)
        self.ledger.record(
            r, "client_smashed_up", CLIENT, EDGE,
            self._act_bytes(f1.size + f2.size) + (len(pb.y1) + len(pb.y2)) * LABEL_BYTES,
        )
        return node, pb, ctrain, ctape, f1, f2

    def _client_pair_backward(self, node, ctrain, ctape, f1, f2, g1, g2) -> None:
        with ctape:
            pseudo = add(sum_all(mul(f1, Tensor(g1))), sum_all(mul(f2, Tensor(g2))))
        ctape.backward(pseudo)
        key = "client"
        node.segments[key] = SegmentParams(
            Tensor(node.optimizers[key].step(node.segments[key].flat.data, ctrain.flat.grad)),
            ctrain.layout,
        )

    def _cloud_head_step(self, emb: np.ndarray, labels: np.ndarray, want_grad: bool):
        """Train the cloud head on one batch of edge embeddings. Returns
        the embedding gradient when the task gradient flows downward."""
        received = Tensor(emb, requires_grad=want_grad)
        htrain = self.cloud.segments["head"].training_copy()
        with Tape() as tape:
            loss = cross_entropy(forward_segment(htrain, self.plan.cloud, received), labels)
            tape.backward(loss)
        self.cloud.segments["head"] = SegmentParams(
            Tensor(self.cloud.optimizers["head"].step(self.cloud.segments["head"].flat.data, htrain.flat.grad)),
            htrain.layout,
        )
        return received.grad if want_grad else None

    def _round_sherl(self, r: int, actives: list[int]) -> None:
        """Edge-supervised representation round: the edge trains on the
        pair objective and returns gradients to clients; the cloud head
        trains on detached embeddings only."""
        margin = self.strategy.margin
        buffers: dict[int, list[tuple[np.ndarray, np.ndarray]]] = {e: [] for e in range(len(self.edges))}
        for cid in actives:
            e = self.topology.assignment[cid]
            edge = self.edges[e]
            node, pb, ctrain, ctape, f1, f2 = self._client_pair_forward(cid, r)
            received1 = Tensor(f1.data.copy(), requires_grad=True)
            received2 = Tensor(f2.data.copy(), requires_grad=True)
            etrain = edge.segments["edge"].training_copy()
            with Tape() as etape:
                c1 = forward_segment(etrain, self.plan.edge, received1)
                c2 = forward_segment(etrain, self.plan.edge, received2)
                loss = contrastive_loss_rows(c1, c2, pb.y_ij, margin)
                etape.backward(loss)
            edge.segments["edge"] = SegmentParams(
                Tensor(edge.optimizers["edge"].step(edge.segments["edge"].flat.data, etrain.flat.grad)),
                etrain.layout,
            )
            self.ledger.record(
                r, "grad_from_edge", EDGE, CLIENT, self._act_bytes(received1.size + received2.size)
            )
            buffers[e].append((np.vstack([c1.data, c2.data]), np.concatenate([pb.y1, pb.y2])))
            self._client_pair_backward(node, ctrain, ctape, f1, f2, received1.grad, received2.grad)
        for e in range(len(self.edges)):
            if not buffers[e]:
                continue
            emb = np.vstack([chunk for chunk, _ in buffers[e]])
            labels = np.concatenate([y for _, y in buffers[e]])
            self.ledger.record(
                r, "edge_smashed_up", EDGE, CLOUD,
                self._act_bytes(emb.size) + len(labels) * LABEL_BYTES,
            )
            self._cloud_head_step(emb, labels, want_grad=False)

    def _round_hsfl(self, r: int, actives: list[int]) -> None:
        """Task-gradient round: identical message topology, but the only
        training signal is the cloud task loss relayed through the edge."""
        pending: dict[int, list] = {e: [] for e in range(len(self.edges))}
        edge_tapes: dict[int, Tape] = {}
        edge_trains: dict[int, SegmentParams] = {}
        for cid in actives:
            e = self.topology.assignment[cid]
            node, pb, ctrain, ctape, f1, f2 = self._client_pair_forward(cid, r)
            if e not in edge_tapes:
                edge_tapes[e] = Tape()
                edge_trains[e] = self.edges[e].segments["edge"].training_copy()
            received1 = Tensor(f1.data.copy(), requires_grad=True)
            received2 = Tensor(f2.data.copy(), requires_grad=True)
            with edge_tapes[e]:
                c1 = forward_segment(edge_trains[e], self.plan.edge, received1)
                c2 = forward_segment(edge_trains[e], self.plan.edge, received2)
            pending[e].append((node, pb, ctrain, ctape, f1, f2, received1, received2, c1, c2))
        for e in range(len(self.edges)):
            if not pending[e]:
                continue
            emb = np.vstack([np.vstack([c1.data, c2.data]) for *_, c1, c2 in pending[e]])
            labels = np.concatenate([np.concatenate([p[1].y1, p[1].y2]) for p in pending[e]])
            self.ledger.record(
                r, "edge_smashed_up", EDGE, CLOUD,
                self._act_bytes(emb.size) + len(labels) * LABEL_BYTES,
            )
            head_grad = self._cloud_head_step(emb, labels, want_grad=True)
            self.ledger.record(r, "grad_from_cloud", CLOUD, EDGE, self._act_bytes(head_grad.size))
            # Relay the task gradient through the edge graph in one sweep.
            tape, etrain = edge_tapes[e], edge_trains[e]
            offset = 0
            with tape:
                pseudo = None
                for *_, c1, c2 in pending[e]:
                    b = c1.shape[0]
                    g1 = head_grad[offset:offset + b]
                    g2 = head_grad[offset + b:offset + 2 * b]
                    offset += 2 * b
                    term = add(sum_all(mul(c1, Tensor(g1))), sum_all(mul(c2, Tensor(g2))))
                    pseudo = term if pseudo is None else add(pseudo, term)
            tape.backward(pseudo)
            edge = self.edges[e]
            edge.segments["edge"] = SegmentParams(
                Tensor(edge.optimizers["edge"].step(edge.segments["edge"].flat.data, etrain.flat.grad)),
                etrain.layout,
            )
            for node, pb, ctrain, ctape, f1, f2, received1, received2, _, _ in pending[e]:
                self.ledger.record(
                    r, "grad_from_edge", EDGE, CLIENT,
                    self._act_bytes(received1.size + received2.size),
                )
                self._client_pair_backward(node, ctrain, ctape, f1, f2, received1.grad, received2.grad)

    def _split3_sync(self, r: int, actives: list[int]) -> None:
        sync1 = r % self.schedule.t1 == 0
        sync2 = r % self.schedule.t2 == 0
        if sync1:
            for e, edge in enumerate(self.edges):
                members = [cid for cid in actives if self.topology.assignment[cid] == e]
                for cid in members:
                    self.ledger.record(
                        r, "client_model_up", CLIENT, EDGE,
                        self._seg_bytes(self.clients[cid].segments["client"]),
                    )
                if members:
                    edge.segments["client_agg"] = aggregate_weighted(
                        [self.clients[cid].segments["client"] for cid in members],
                        [self.client_data[cid].n for cid in members],
                    )
        if sync2:
            for edge in self.edges:
                self.ledger.record(
                    r, "edge_model_up", EDGE, CLOUD, self._edge_model_message_bytes(edge)
                )
            new_edge = aggregate_weighted(
                [edge.segments["edge"] for edge in self.edges], self.edge_weights
            )
            new_clients = (
                aggregate_weighted(
                    [edge.segments["client_agg"] for edge in self.edges], self.edge_weights
                )
                if self.cfg.sync_clients_at_t2
                else None
            )
            for edge in self.edges:
                edge.segments["edge"] = new_edge.copy()
                if new_clients is not None:
                    edge.segments["client_agg"] = new_clients.copy()
                self.ledger.record(
                    r, "edge_model_down", CLOUD, EDGE, self._edge_model_message_bytes(edge)
                )
        if sync1:
            for e, edge in enumerate(self.edges):
                agg = edge.segments["client_agg"]
                down_bytes = self._seg_bytes(agg)
                for cid in self.topology.clients_of(e):
                    self.clients[cid].segments["client"] = agg.copy()
                    self.ledger.record(r, "client_model_down", EDGE, CLIENT, down_bytes)

    # ---- evaluation ---- #

    def _eval_layer_arrays(self) -> list[tuple[np.ndarray, np.ndarray]]:
        kind = self.strategy.kind
        if kind in FLAT_KINDS:
            return self.cloud.segments["full"].layer_arrays()
        if kind == "hierfl":
            return self._hierfl_view.layer_arrays()
        if kind == "splitfed":
            return (
                self.cloud.segments["client_agg"].layer_arrays()
                + self.cloud.segments["server"].layer_arrays()
            )
        return (
            self.edges[0].segments["client_agg"].layer_arrays()
            + self.edges[0].segments["edge"].layer_arrays()
            + self.cloud.segments["head"].layer_arrays()
        )

    def _evaluate(self, r: int) -> RoundMetrics:
        arrays = self._eval_layer_arrays()
        spec = self.full_spec
        rep = SegmentParams.from_arrays(spec[: self.cut2], arrays[: self.cut2])
        head = SegmentParams.from_arrays(spec[self.cut2:], arrays[self.cut2:])
        emb = forward_segment(rep, spec[: self.cut2], Tensor(self.test.features.data)).data
        logits = forward_segment(head, spec[self.cut2:], Tensor(emb))
        labels = self.test.labels
        loss = cross_entropy(logits, labels).item()
        preds = np.argmax(logits.data, axis=1)
        f1 = macro_f1(preds, labels, self.test.n_classes)
        try:
            sil = embedding_separation(emb, labels)
        except (ContractError, NumericError):
            sil = None
        iou = dice = None
        if self.test.masks is not None:
            scores = [
                iou_dice(class_mask(int(p), self.test.n_classes), mask)
                for p, mask in zip(preds, self.test.masks)
            ]
            iou = float(np.mean([s[0] for s in scores]))
            dice = float(np.mean([s[1] for s in scores]))
        self._last_embeddings = emb
        return RoundMetrics(round=r, loss=loss, macro_f1=f1, silhouette=sil, iou=iou, dice=dice)

    # ---- driver ---- #

    def run(self) -> RunResult:
        kind = self.strategy.kind
        metrics: list[RoundMetrics] = []
        for r in range(1, self.schedule.rounds + 1):
            actives = select_clients(self.topology, self.schedule, r, self.master_seed)
            if kind in FLAT_KINDS:
                self._round_flat(r, actives)
            elif kind == "hierfl":
                self._round_hierfl(r, actives)
            elif kind == "splitfed":
                self._round_splitfed(r, actives)
            elif kind == "sherl":
                self._round_sherl(r, actives)
                self._split3_sync(r, actives)
            else:
                self._round_hsfl(r, actives)
                self._split3_sync(r, actives)
            metrics.append(self._evaluate(r))
            if self.on_round_end is not None:
                self.on_round_end(self, r)
        if self._last_embeddings is None:
            self._evaluate(0)
        return RunResult(
            metrics=metrics,
            ledger=self.ledger,
            embeddings=self._last_embeddings,
            embedding_labels=self.test.labels.copy(),
        )

    # ---- analytic reconciliation ---- #

    def cost_input(self) -> CostModelInput:
        """Unit sizes of this run for the closed-form cost model.

        Exact when clients hold equal-size local datasets (the unit for
        a task mini-batch is then the same for every client); pair
        batches have a fixed size by construction.
        """
        kind = self.strategy.kind
        bps = self.bytes_per_scalar
        k = math.ceil(self.schedule.sample_rate * self.topology.n_clients)
        client_seg = sum(l.n_params for l in self.plan.client) * bps
        edge_seg = sum(l.n_params for l in self.plan.edge) * bps
        cloud_seg = sum(l.n_params for l in self.plan.cloud) * bps
        kwargs = dict(
            strategy=kind,
            n_clients=self.topology.n_clients,
            n_edges=self.topology.n_edges,
            rounds=self.schedule.rounds,
            sample_rate=self.schedule.sample_rate,
            t1=self.schedule.t1,
            t2=self.schedule.t2,
        )
        if kind in FLAT_KINDS or kind == "hierfl":
            kwargs["client_model"] = float(client_seg)
            if kind == "hierfl":
                kwargs["edge_model"] = float(client_seg)
            return CostModelInput(**kwargs)
        if kind == "splitfed":
            b = float(np.mean([min(self.cfg.data.batch_size, ds.n) for ds in self.client_data]))
            d1 = self.plan.client[-1].out_dim
            kwargs["client_model"] = float(client_seg)
            kwargs["smashed_per_client_round"] = b * d1 * bps + b * LABEL_BYTES
            kwargs["cloud_grad_per_edge_round"] = b * d1 * bps
            return CostModelInput(**kwargs)
        b = self.cfg.data.pairs_per_batch
        d1 = self.plan.client[-1].out_dim
        d2 = self.plan.edge[-1].out_dim
        per_edge = k / self.topology.n_edges
        kwargs["client_model"] = float(client_seg)
        kwargs["edge_model"] = float(edge_seg + (client_seg if self.cfg.sync_clients_at_t2 else 0))
        kwargs["smashed_per_client_round"] = 2 * b * d1 * bps + 2 * b * LABEL_BYTES
        kwargs["grad_per_client_round"] = 2 * b * d1 * bps
        kwargs["edge_smashed_per_edge_round"] = per_edge * (2 * b * d2 * bps + 2 * b * LABEL_BYTES)
        kwargs["cloud_grad_per_edge_round"] = per_edge * 2 * b * d2 * bps
        return CostModelInput(**kwargs)


def run_experiment(cfg: "RunConfig", on_round_end: Optional[Callable[[Simulation, int], None]] = None) -> RunResult:
    """Build and run one simulation from a validated config."""
    return Simulation(cfg, on_round_end=on_round_end).run()

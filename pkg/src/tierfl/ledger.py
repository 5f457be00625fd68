"""Byte-exact communication accounting.

Every simulated transfer is recorded as one message with a traffic
kind, source and destination tiers, and a payload size in bytes. The
same kinds drive a closed-form cost model that predicts per-kind totals
for a full run from message counts and unit sizes, so simulated runs
can be reconciled against the analytic prediction.

Counting conventions: uploads are counted once per participating
(sampled) client, downloads fan out to every client. GB in reports
means 10**9 bytes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

from .errors import ContractError

GB = 1e9

CLIENT, EDGE, CLOUD = "client", "edge", "cloud"

KINDS = (
    "client_smashed_up",
    "edge_smashed_up",
    "client_model_up",
    "client_model_down",
    "edge_model_up",
    "edge_model_down",
    "grad_from_cloud",
    "grad_from_edge",
)

# Allowed (src, dst) tier routes per traffic kind.
ROUTES: dict[str, tuple[tuple[str, str], ...]] = {
    "client_smashed_up": ((CLIENT, EDGE), (CLIENT, CLOUD)),
    "edge_smashed_up": ((EDGE, CLOUD),),
    "client_model_up": ((CLIENT, EDGE), (CLIENT, CLOUD)),
    "client_model_down": ((EDGE, CLIENT), (CLOUD, CLIENT)),
    "edge_model_up": ((EDGE, CLOUD),),
    "edge_model_down": ((CLOUD, EDGE),),
    "grad_from_cloud": ((CLOUD, EDGE), (CLOUD, CLIENT)),
    "grad_from_edge": ((EDGE, CLIENT),),
}

FLAT_KINDS = ("fedavg", "fedsgd", "fedprox", "fednova")
SPLIT3_KINDS = ("hsfl", "sherl")
STRATEGY_KINDS = FLAT_KINDS + ("splitfed", "hierfl") + SPLIT3_KINDS


@dataclass(frozen=True)
class MessageRecord:
    """One transfer: round index, route, kind, and payload size."""

    round: int
    kind: str
    src: str
    dst: str
    bytes: int

    def __post_init__(self):
        if self.kind not in ROUTES:
            raise ContractError(f"unknown message kind {self.kind!r}")
        if (self.src, self.dst) not in ROUTES[self.kind]:
            raise ContractError(
                f"kind {self.kind!r} cannot travel {self.src} -> {self.dst}"
            )
        if self.round < 0 or self.bytes < 0:
            raise ContractError("round and bytes must be non-negative")


@dataclass(frozen=True)
class LedgerSummary:
    """Per-kind byte totals. The grand total is their sum by construction."""

    by_kind: Mapping[str, float]

    def __post_init__(self):
        unknown = set(self.by_kind) - set(KINDS)
        if unknown:
            raise ContractError(f"unknown kinds in summary: {sorted(unknown)}")

    @property
    def total(self) -> float:
        return sum(self.by_kind.get(k, 0) for k in KINDS)

    def get(self, kind: str) -> float:
        if kind not in KINDS:
            raise ContractError(f"unknown kind {kind!r}")
        return self.by_kind.get(kind, 0)

    def in_gb(self) -> dict[str, float]:
        return {k: self.by_kind.get(k, 0) / GB for k in KINDS}


class Ledger:
    """Append-only message log with running per-kind totals."""

    def __init__(self):
        self.records: list[MessageRecord] = []
        self._totals: dict[str, int] = {k: 0 for k in KINDS}

    def record(self, round: int, kind: str, src: str, dst: str, bytes: int) -> MessageRecord:
        msg = MessageRecord(round=round, kind=kind, src=src, dst=dst, bytes=int(bytes))
        self.records.append(msg)
        self._totals[msg.kind] += msg.bytes
        return msg

    def summary(self) -> LedgerSummary:
        return LedgerSummary(by_kind=dict(self._totals))

    def count(self, kind: str) -> int:
        return sum(1 for r in self.records if r.kind == kind)

    def csv_rows(self) -> list[tuple[int, str, str, str, int]]:
        return [(r.round, r.kind, r.src, r.dst, r.bytes) for r in self.records]


@dataclass(frozen=True)
class CostModelInput:
    """Closed-form cost model parameters.

    Unit sizes are bytes per message. ``client_model`` covers model
    uploads; downloads may use a separate unit (reported tables round
    uploads and downloads independently, so exact reproduction of a
    published row can need per-direction units). ``None`` down units
    default to the matching up unit.
    """

    strategy: str
    n_clients: int
    n_edges: int
    rounds: int
    sample_rate: float
    t1: int
    t2: int
    client_model: float = 0.0
    edge_model: float = 0.0
    smashed_per_client_round: float = 0.0
    edge_smashed_per_edge_round: float = 0.0
    grad_per_client_round: float = 0.0
    cloud_grad_per_edge_round: float = 0.0
    client_model_down: Optional[float] = None
    edge_model_down: Optional[float] = None

    def __post_init__(self):
        if self.strategy not in STRATEGY_KINDS:
            raise ContractError(f"unknown strategy {self.strategy!r}")
        if self.n_clients < 1 or self.n_edges < 1 or self.rounds < 0:
            raise ContractError("topology and rounds must be positive")
        if not (0.0 < self.sample_rate <= 1.0):
            raise ContractError(f"sample_rate must lie in (0, 1], got {self.sample_rate}")
        if self.t1 < 1 or self.t2 < 1:
            raise ContractError("sync intervals must be >= 1")


def _counts(inp: CostModelInput) -> tuple[int, int, int]:
    """(sampled clients per round, t1 events, t2 events)."""
    k = math.ceil(inp.sample_rate * inp.n_clients)
    return k, inp.rounds // inp.t1, inp.rounds // inp.t2


def analytic_cost(inp: CostModelInput) -> LedgerSummary:
    """Predicted per-kind byte totals for a full run.

    Uploads count the sampled clients; model downloads fan out to all
    clients (and all edges for edge-model sync). Split strategies with
    an edge tier exchange smashed activations every round and sync
    client segments every t1 rounds, edge segments every t2 rounds.
    """
    k, a1, a2 = _counts(inp)
    n, e, r = inp.n_clients, inp.n_edges, inp.rounds
    cm_down = inp.client_model if inp.client_model_down is None else inp.client_model_down
    em_down = inp.edge_model if inp.edge_model_down is None else inp.edge_model_down
    totals = {kind: 0.0 for kind in KINDS}
    if inp.strategy in FLAT_KINDS:
        totals["client_model_up"] = r * k * inp.client_model
        totals["client_model_down"] = r * n * cm_down
    elif inp.strategy == "hierfl":
        totals["client_model_up"] = a1 * k * inp.client_model
        totals["client_model_down"] = a1 * n * cm_down
        totals["edge_model_up"] = a2 * e * inp.edge_model
        totals["edge_model_down"] = a2 * e * em_down
    elif inp.strategy == "splitfed":
        totals["client_smashed_up"] = r * k * inp.smashed_per_client_round
        totals["grad_from_cloud"] = r * k * inp.cloud_grad_per_edge_round
        totals["client_model_up"] = a1 * k * inp.client_model
        totals["client_model_down"] = a1 * n * cm_down
    else:  # hsfl / sherl
        totals["client_smashed_up"] = r * k * inp.smashed_per_client_round
        totals["edge_smashed_up"] = r * e * inp.edge_smashed_per_edge_round
        totals["client_model_up"] = a1 * k * inp.client_model
        totals["client_model_down"] = a1 * n * cm_down
        totals["edge_model_up"] = a2 * e * inp.edge_model
        totals["edge_model_down"] = a2 * e * em_down
        totals["grad_from_edge"] = r * k * inp.grad_per_client_round
        if inp.strategy == "hsfl":
            totals["grad_from_cloud"] = r * e * inp.cloud_grad_per_edge_round
    return LedgerSummary(by_kind=totals)


def _message_counts(inp: CostModelInput) -> dict[str, float]:
    """Message count per kind, mirroring :func:`analytic_cost`."""
    k, a1, a2 = _counts(inp)
    n, e, r = inp.n_clients, inp.n_edges, inp.rounds
    counts = {kind: 0.0 for kind in KINDS}
    if inp.strategy in FLAT_KINDS:
        counts["client_model_up"] = r * k
        counts["client_model_down"] = r * n
    elif inp.strategy == "hierfl":
        counts["client_model_up"] = a1 * k
        counts["client_model_down"] = a1 * n
        counts["edge_model_up"] = a2 * e
        counts["edge_model_down"] = a2 * e
    elif inp.strategy == "splitfed":
        counts["client_smashed_up"] = r * k
        counts["grad_from_cloud"] = r * k
        counts["client_model_up"] = a1 * k
        counts["client_model_down"] = a1 * n
    else:
        counts["client_smashed_up"] = r * k
        counts["edge_smashed_up"] = r * e
        counts["client_model_up"] = a1 * k
        counts["client_model_down"] = a1 * n
        counts["edge_model_up"] = a2 * e
        counts["edge_model_down"] = a2 * e
        counts["grad_from_edge"] = r * k
        if inp.strategy == "hsfl":
            counts["grad_from_cloud"] = r * e
    return counts


def units_from_row(base: CostModelInput, row_gb: Mapping[str, float]) -> CostModelInput:
    """Invert per-kind unit sizes from a published per-kind row (in GB).

    For each kind with a nonzero entry, the unit is the printed bytes
    divided by the message count implied by ``base``. Feeding the result
    back through :func:`analytic_cost` reproduces the row.
    """
    unknown = set(row_gb) - set(KINDS)
    if unknown:
        raise ContractError(f"unknown kinds in row: {sorted(unknown)}")
    counts = _message_counts(base)
    units: dict[str, float] = {}
    for kind, gb in row_gb.items():
        if gb == 0:
            # An explicit zero overrides the down-defaults-to-up rule.
            units[kind] = 0.0
            continue
        if counts[kind] == 0:
            raise ContractError(f"row has {kind} traffic but the model predicts no messages")
        units[kind] = gb * GB / counts[kind]
    kwargs = dict(
        strategy=base.strategy,
        n_clients=base.n_clients,
        n_edges=base.n_edges,
        rounds=base.rounds,
        sample_rate=base.sample_rate,
        t1=base.t1,
        t2=base.t2,
        client_model=units.get("client_model_up", 0.0),
        client_model_down=units.get("client_model_down"),
        edge_model=units.get("edge_model_up", 0.0),
        edge_model_down=units.get("edge_model_down"),
        smashed_per_client_round=units.get("client_smashed_up", 0.0),
        edge_smashed_per_edge_round=units.get("edge_smashed_up", 0.0),
        grad_per_client_round=units.get("grad_from_edge", 0.0),
        # For splitfed this slot holds the per-client cloud gradient unit.
        cloud_grad_per_edge_round=units.get("grad_from_cloud", 0.0),
    )
    return CostModelInput(**kwargs)


@dataclass(frozen=True)
class ReconcileReport:
    """Per-kind relative differences between two summaries."""

    diffs: Mapping[str, float]
    tolerance: float
    passed: bool


def reconcile(actual: LedgerSummary, predicted: LedgerSummary, tol: float = 0.01) -> ReconcileReport:
    """Compare an empirical summary against an analytic prediction.

    The per-kind relative difference is |a - p| / max(a, p), taken as 0
    when both are 0. Passes when every kind is within ``tol``.
    """
    if tol < 0:
        raise ContractError("tolerance must be non-negative")
    diffs = {}
    for kind in KINDS:
        a = actual.get(kind)
        p = predicted.get(kind)
        top = max(a, p)
        diffs[kind] = 0.0 if top == 0 else abs(a - p) / top
    return ReconcileReport(diffs=diffs, tolerance=tol, passed=all(d <= tol for d in diffs.values()))

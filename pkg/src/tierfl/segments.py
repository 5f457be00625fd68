"""Fully-connected model segments with a flat parameter representation.

A model is a chain of dense layers. Parameters of a segment (a
contiguous run of layers) live in one flat 1-D tensor plus a layout
table of offsets, so segments can be serialized, aggregated, and
optimized as plain vectors. The forward pass slices weights out of the
flat vector on the tape, which makes d(loss)/d(flat) directly available
after backward.

A three-way split assigns a prefix of layers to clients, a middle run
to edge servers, and the remainder (including the task head) to the
cloud.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .autodiff import Tensor, add_bias, matmul, relu, reshape, slice_1d
from .errors import ConfigError, ContractError, DimensionError

ACTIVATIONS = ("relu", "none")


@dataclass(frozen=True)
class LayerSpec:
    """One dense layer: (in_dim, out_dim) weights, a bias, an activation."""

    in_dim: int
    out_dim: int
    activation: str = "relu"

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise ConfigError([f"layer dims must be positive, got {self.in_dim}x{self.out_dim}"])
        if self.activation not in ACTIVATIONS:
            raise ConfigError([f"unknown activation {self.activation!r}"])

    @property
    def n_params(self) -> int:
        return self.in_dim * self.out_dim + self.out_dim


def validate_chain(spec: Sequence[LayerSpec]) -> None:
    """Adjacent layers must agree on width."""
    for prev, cur in zip(spec, spec[1:]):
        if prev.out_dim != cur.in_dim:
            raise ConfigError(
                [f"layer chain broken: out_dim {prev.out_dim} feeds in_dim {cur.in_dim}"]
            )


@dataclass(frozen=True)
class SplitPlan:
    """Assignment of a layer chain to the client / edge / cloud tiers.

    Edge and cloud runs may be empty for strategies that do not use the
    corresponding tier (single-tier training keeps every layer on the
    client).
    """

    client: tuple[LayerSpec, ...]
    edge: tuple[LayerSpec, ...]
    cloud: tuple[LayerSpec, ...]

    def __post_init__(self):
        validate_chain(self.full)

    @property
    def full(self) -> tuple[LayerSpec, ...]:
        return self.client + self.edge + self.cloud


def role_aware_split(full: Sequence[LayerSpec], cut1: int, cut2: int) -> SplitPlan:
    """Three-way split at layer indices cut1 and cut2 (0 < cut1 < cut2 < len)."""
    if not (0 < cut1 < cut2 < len(full)):
        raise ConfigError(
            [f"cuts must satisfy 0 < cut1 < cut2 < {len(full)}, got ({cut1}, {cut2})"]
        )
    validate_chain(full)
    full = tuple(full)
    return SplitPlan(client=full[:cut1], edge=full[cut1:cut2], cloud=full[cut2:])


@dataclass(frozen=True)
class LayerSlot:
    """Where one layer's weights and bias sit inside the flat vector."""

    w_offset: int
    w_shape: tuple[int, int]
    b_offset: int
    b_len: int


def layout_for(spec: Sequence[LayerSpec]) -> tuple[tuple[LayerSlot, ...], int]:
    slots = []
    offset = 0
    for layer in spec:
        w_size = layer.in_dim * layer.out_dim
        slots.append(
            LayerSlot(
                w_offset=offset,
                w_shape=(layer.in_dim, layer.out_dim),
                b_offset=offset + w_size,
                b_len=layer.out_dim,
            )
        )
        offset += w_size + layer.out_dim
    return tuple(slots), offset


@dataclass
class SegmentParams:
    """Flat parameter vector plus the layout that maps it back to layers."""

    flat: Tensor
    layout: tuple[LayerSlot, ...]

    def __post_init__(self):
        if self.flat.data.ndim != 1:
            raise ContractError(f"segment params must be 1-D, got shape {self.flat.shape}")
        expected = self.layout[-1].b_offset + self.layout[-1].b_len if self.layout else 0
        if self.flat.data.shape[0] != expected:
            raise ContractError(
                f"flat length {self.flat.data.shape[0]} does not match layout size {expected}"
            )

    @property
    def n_params(self) -> int:
        return int(self.flat.data.shape[0])

    def copy(self) -> "SegmentParams":
        return SegmentParams(Tensor(self.flat.data.copy()), self.layout)

    def training_copy(self) -> "SegmentParams":
        """Fresh grad-enabled leaf for one optimization step."""
        return SegmentParams(Tensor(self.flat.data.copy(), requires_grad=True), self.layout)

    def layer_arrays(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Per-layer (weights, bias) copies, in declaration order."""
        flat = self.flat.data
        out = []
        for slot in self.layout:
            w = flat[slot.w_offset:slot.w_offset + slot.w_shape[0] * slot.w_shape[1]]
            b = flat[slot.b_offset:slot.b_offset + slot.b_len]
            out.append((w.reshape(slot.w_shape).copy(), b.copy()))
        return out

    @classmethod
    def from_arrays(
        cls, spec: Sequence[LayerSpec], layers: Sequence[tuple[np.ndarray, np.ndarray]]
    ) -> "SegmentParams":
        if len(spec) != len(layers):
            raise ContractError(f"{len(layers)} layer arrays for {len(spec)} layer specs")
        slots, total = layout_for(spec)
        flat = np.empty(total)
        for layer, slot, (w, b) in zip(spec, slots, layers):
            w = np.asarray(w, dtype=np.float64)
            b = np.asarray(b, dtype=np.float64)
            if w.shape != slot.w_shape or b.shape != (slot.b_len,):
                raise ContractError(
                    f"array shapes {w.shape}/{b.shape} do not match layer "
                    f"{layer.in_dim}x{layer.out_dim}"
                )
            flat[slot.w_offset:slot.b_offset] = w.ravel()
            flat[slot.b_offset:slot.b_offset + slot.b_len] = b
        return cls(Tensor(flat), slots)


def build_segment(spec: Sequence[LayerSpec], seed: int) -> SegmentParams:
    """Initialize a segment with seeded uniform(-a, a), a = sqrt(6 / (in + out)).

    Draw order is fixed (weights then bias, layer by layer) so a seed
    fully determines the parameter vector.
    """
    validate_chain(spec)
    slots, total = layout_for(spec)
    rng = np.random.default_rng(seed)
    flat = np.empty(total)
    for layer, slot in zip(spec, slots):
        a = math.sqrt(6.0 / (layer.in_dim + layer.out_dim))
        w_size = layer.in_dim * layer.out_dim
        flat[slot.w_offset:slot.w_offset + w_size] = rng.uniform(-a, a, w_size)
        flat[slot.b_offset:slot.b_offset + slot.b_len] = rng.uniform(-a, a, slot.b_len)
    return SegmentParams(Tensor(flat), slots)


def forward_segment(params: SegmentParams, spec: Sequence[LayerSpec], x: Tensor) -> Tensor:
    """Run a batch through the segment's layers.

    ``x`` is (batch, in_dim). Differentiation w.r.t. the flat parameter
    vector (and w.r.t. ``x``, for relaying gradients across a split) is
    recorded when a tape is active.
    """
    if len(params.layout) != len(spec):
        raise ContractError(f"params hold {len(params.layout)} layers, spec has {len(spec)}")
    if x.data.ndim != 2:
        raise DimensionError(f"segment input must be 2-D (batch, features), got {x.shape}")
    if spec and x.shape[1] != spec[0].in_dim:
        raise DimensionError(f"input width {x.shape[1]} does not match in_dim {spec[0].in_dim}")
    h = x
    for layer, slot in zip(spec, params.layout):
        if slot.w_shape != (layer.in_dim, layer.out_dim):
            raise ContractError("layout does not match layer spec")
        w_size = layer.in_dim * layer.out_dim
        w = reshape(slice_1d(params.flat, slot.w_offset, w_size), slot.w_shape)
        b = slice_1d(params.flat, slot.b_offset, slot.b_len)
        h = add_bias(matmul(h, w), b)
        if layer.activation == "relu":
            h = relu(h)
    return h


def param_bytes(params: SegmentParams, bytes_per_scalar: int = 4) -> int:
    """Serialized size of the segment at the given scalar width."""
    if bytes_per_scalar not in (4, 8):
        raise ContractError(f"bytes_per_scalar must be 4 or 8, got {bytes_per_scalar}")
    return params.n_params * bytes_per_scalar

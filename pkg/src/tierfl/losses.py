"""Training objectives and evaluation metrics.

The pair objective drives same-class embeddings toward high cosine
alignment and pushes different-class embeddings below a margin. The
pair label convention is 0 for a same-class pair and 1 otherwise; the
margin lives in [0, 2].

Note the per-pair term for a different-class pair is the raw cosine
value, so batches whose different-class pairs are already anti-aligned
can yield a negative total. The hinge applies to same-class pairs only.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .autodiff import Tensor, add, mean_all, mul, record_op, relu, scale, sub, sum_all
from .errors import ContractError, NumericError
from .segments import SegmentParams

MARGIN_RANGE = (0.0, 2.0)


def validate_margin(m: float) -> float:
    m = float(m)
    if not (MARGIN_RANGE[0] <= m <= MARGIN_RANGE[1]):
        raise ContractError(f"margin {m} outside [{MARGIN_RANGE[0]}, {MARGIN_RANGE[1]}]")
    return m


def pair_labels(y1: np.ndarray, y2: np.ndarray) -> np.ndarray:
    """0 where the two class ids agree, 1 where they differ."""
    y1 = np.asarray(y1)
    y2 = np.asarray(y2)
    if y1.shape != y2.shape:
        raise ContractError(f"label arrays differ in shape: {y1.shape} vs {y2.shape}")
    return (y1 != y2).astype(np.int64)


def cosine_measure(ci: Tensor, cj: Tensor) -> Tensor:
    """Normalized inner product of two vectors, recorded as one primitive."""
    if ci.data.ndim != 1 or cj.data.ndim != 1 or ci.shape != cj.shape:
        raise ContractError(f"cosine_measure needs two equal-length vectors, got {ci.shape} and {cj.shape}")
    u, v = ci.data, cj.data
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise NumericError("cosine of a zero-norm vector")
    cos = float(u @ v) / (nu * nv)

    def grad_fn(g: np.ndarray):
        gs = float(g.reshape(()))
        gu = gs * (v / (nu * nv) - cos * u / (nu * nu)) if ci.requires_grad else None
        gv = gs * (u / (nu * nv) - cos * v / (nv * nv)) if cj.requires_grad else None
        return gu, gv

    return record_op((ci, cj), np.asarray(cos), grad_fn)


def contrastive_loss(pairs: Sequence[tuple[Tensor, Tensor, int]], m: float) -> Tensor:
    """Mean over pairs of  y*cos + (1-y)*max(0, m - cos).

    Composed from :func:`cosine_measure` and the hinge; gradients flow
    to every embedding. The hinge subgradient at the kink is zero.
    """
    m = validate_margin(m)
    if not pairs:
        raise ContractError("contrastive_loss needs at least one pair")
    margin = Tensor(m)
    total: Tensor | None = None
    for ci, cj, y in pairs:
        if y not in (0, 1):
            raise ContractError(f"pair label must be 0 or 1, got {y!r}")
        d = cosine_measure(ci, cj)
        term = d if y == 1 else relu(sub(margin, d))
        total = term if total is None else add(total, term)
    return scale(total, 1.0 / len(pairs))


def contrastive_loss_rows(c1: Tensor, c2: Tensor, y: np.ndarray, m: float) -> Tensor:
    """Batched form of :func:`contrastive_loss` over row-paired matrices.

    Row k of ``c1`` pairs with row k of ``c2``; ``y[k]`` is the pair
    label. One fused primitive with an analytic gradient, equal to the
    listwise composition up to float roundoff.
    """
    m = validate_margin(m)
    if c1.data.ndim != 2 or c1.shape != c2.shape:
        raise ContractError(f"paired embeddings must be equal 2-D shapes, got {c1.shape} and {c2.shape}")
    y = np.asarray(y).astype(np.int64)
    b = c1.shape[0]
    if y.shape != (b,) or not np.isin(y, (0, 1)).all():
        raise ContractError("pair labels must be a vector of 0/1 matching the batch")
    if b == 0:
        raise ContractError("contrastive_loss_rows needs at least one pair")
    u, v = c1.data, c2.data
    nu = np.linalg.norm(u, axis=1)
    nv = np.linalg.norm(v, axis=1)
    if np.any(nu == 0.0) or np.any(nv == 0.0):
        raise NumericError("cosine of a zero-norm vector")
    cos = np.einsum("ij,ij->i", u, v) / (nu * nv)
    hinge = np.maximum(0.0, m - cos)
    loss = float(np.mean(y * cos + (1 - y) * hinge))

    def grad_fn(g: np.ndarray):
        gs = float(g.reshape(()))
        # d(term)/d(cos): y pairs contribute +1, hinge pairs -1 while open.
        dcos = (y - (1 - y) * (m - cos > 0.0)) * (gs / b)
        gu = dcos[:, None] * (v / (nu * nv)[:, None] - (cos / nu**2)[:, None] * u)
        gv = dcos[:, None] * (u / (nu * nv)[:, None] - (cos / nv**2)[:, None] * v)
        return (gu if c1.requires_grad else None, gv if c2.requires_grad else None)

    return record_op((c1, c2), np.asarray(loss), grad_fn)


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-softmax of the true class, stabilized by
    row-max subtraction. Gradient is (softmax - onehot) / batch."""
    if logits.data.ndim != 2:
        raise ContractError(f"logits must be (batch, classes), got {logits.shape}")
    b, c = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (b,):
        raise ContractError(f"labels shape {labels.shape} does not match batch {b}")
    if not np.issubdtype(labels.dtype, np.integer):
        raise ContractError("labels must be integers")
    if labels.min() < 0 or labels.max() >= c:
        raise ContractError(f"labels must lie in [0, {c})")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    expz = np.exp(z)
    softmax = expz / expz.sum(axis=1, keepdims=True)
    rows = np.arange(b)
    logp = z[rows, labels] - np.log(expz.sum(axis=1))
    loss = float(-logp.mean())

    def grad_fn(g: np.ndarray):
        gs = float(g.reshape(()))
        grad = softmax.copy()
        grad[rows, labels] -= 1.0
        return (grad * (gs / b),)

    return record_op((logits,), np.asarray(loss), grad_fn)


def proximal_term(w: SegmentParams, w_global: SegmentParams, mu: float) -> Tensor:
    """(mu / 2) * squared L2 distance between two parameter vectors.

    Differentiable w.r.t. ``w.flat``; the gradient contribution is
    mu * (w - w_global).
    """
    mu = float(mu)
    if mu < 0:
        raise ContractError(f"mu must be non-negative, got {mu}")
    if w.layout != w_global.layout:
        raise ContractError("proximal term across mismatched parameter layouts")
    diff = sub(w.flat, Tensor(w_global.flat.data))
    return scale(sum_all(mul(diff, diff)), 0.5 * mu)


# ---- evaluation metrics (plain numpy, no gradients) ---- #


def macro_f1(predictions: np.ndarray, labels: np.ndarray, n_classes: int) -> float:
    """Unweighted mean over classes of the per-class F1 score.

    Classes absent from both predictions and labels contribute 0.
    """
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape or predictions.ndim != 1 or predictions.size == 0:
        raise ContractError("predictions and labels must be equal nonempty vectors")
    if n_classes < 1:
        raise ContractError("n_classes must be positive")
    for name, arr in (("predictions", predictions), ("labels", labels)):
        if arr.min() < 0 or arr.max() >= n_classes:
            raise ContractError(f"{name} outside [0, {n_classes})")
    scores = []
    for c in range(n_classes):
        tp = int(np.sum((predictions == c) & (labels == c)))
        fp = int(np.sum((predictions == c) & (labels != c)))
        fn = int(np.sum((predictions != c) & (labels == c)))
        denom = 2 * tp + fp + fn
        scores.append(2.0 * tp / denom if denom else 0.0)
    return float(np.mean(scores))


def iou_dice(pred_mask: np.ndarray, true_mask: np.ndarray) -> tuple[float, float]:
    """Intersection-over-union and DICE for two boolean masks.

    Two empty masks agree perfectly: both scores are 1.
    """
    pred_mask = np.asarray(pred_mask)
    true_mask = np.asarray(true_mask)
    if pred_mask.shape != true_mask.shape:
        raise ContractError(f"mask shapes differ: {pred_mask.shape} vs {true_mask.shape}")
    p = pred_mask.astype(bool)
    t = true_mask.astype(bool)
    inter = int(np.sum(p & t))
    union = int(np.sum(p | t))
    total = int(p.sum()) + int(t.sum())
    if union == 0:
        return 1.0, 1.0
    return inter / union, 2.0 * inter / total


def embedding_separation(embeddings: np.ndarray, labels: np.ndarray) -> float:
    """Mean silhouette coefficient of the embedding clusters, measured
    in cosine distance.

    The pair objective shapes directions, not magnitudes, so the
    separation diagnostic works in the same angular geometry. Needs at
    least two classes and at least two points per class. Values near 1
    mean tight, well-separated class clusters; values near 0 mean
    overlapping classes.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels)
    if x.ndim != 2 or labels.shape != (x.shape[0],):
        raise ContractError("embeddings must be (n, d) with one label per row")
    classes, counts = np.unique(labels, return_counts=True)
    if len(classes) < 2 or counts.min() < 2:
        raise ContractError("silhouette needs >= 2 classes with >= 2 points each")
    norms = np.linalg.norm(x, axis=1)
    if np.any(norms == 0.0):
        raise NumericError("cosine separation undefined for a zero-norm embedding")
    unit = x / norms[:, None]
    dist = np.clip(1.0 - unit @ unit.T, 0.0, 2.0)
    np.fill_diagonal(dist, 0.0)
    n = x.shape[0]
    # Mean distance from every point to every class.
    class_sums = np.stack([dist[:, labels == c].sum(axis=1) for c in classes], axis=1)
    class_counts = counts[None, :]
    own = np.searchsorted(classes, labels)
    rows = np.arange(n)
    a = class_sums[rows, own] / (counts[own] - 1)
    other = class_sums / class_counts
    other[rows, own] = np.inf
    b = other.min(axis=1)
    denom = np.maximum(a, b)
    safe = np.where(denom > 0, denom, 1.0)
    s = np.where(denom > 0, (b - a) / safe, 0.0)
    return float(s.mean())

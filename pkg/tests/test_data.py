"""Synthetic data, partitioning, pair sampling, CSV loading."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tierfl.data import (
    Dataset,
    PartitionSpec,
    _largest_remainder,
    class_mask,
    load_csv,
    make_blobs,
    make_pairs,
    partition,
    toy_masks,
    with_masks,
)
from tierfl.errors import ConfigError, ContractError


def test_make_blobs_shape_and_determinism():
    a = make_blobs(n_classes=3, per_class=5, dim=4, spread=1.0, seed=9)
    b = make_blobs(n_classes=3, per_class=5, dim=4, spread=1.0, seed=9)
    c = make_blobs(n_classes=3, per_class=5, dim=4, spread=1.0, seed=10)
    assert a.n == 15 and a.dim == 4 and a.n_classes == 3
    assert np.array_equal(a.features.data, b.features.data)
    assert not np.array_equal(a.features.data, c.features.data)
    assert np.array_equal(a.labels, np.repeat(np.arange(3), 5))


def test_blobs_spread_controls_scatter():
    tight = make_blobs(n_classes=2, per_class=50, dim=3, spread=0.01, seed=1)
    loose = make_blobs(n_classes=2, per_class=50, dim=3, spread=2.0, seed=1)
    spread_of = lambda ds: np.mean(
        [ds.features.data[ds.labels == c].std(axis=0).mean() for c in range(2)]
    )
    assert spread_of(tight) < spread_of(loose)


def test_largest_remainder_is_exact():
    out = _largest_remainder(np.array([0.5, 0.3, 0.2]), 7)
    assert out.sum() == 7
    assert np.array_equal(out, np.array([4, 2, 1]))


@given(
    st.sampled_from(["iid", "dirichlet", "shards"]),
    st.integers(min_value=1, max_value=8),
    st.integers(min_value=0, max_value=100),
)
@settings(max_examples=40, deadline=None)
def test_partition_is_an_exact_cover(mode, n_clients, seed):
    ds = make_blobs(n_classes=3, per_class=12, dim=3, spread=1.0, seed=4)
    shards = partition(ds, PartitionSpec(mode=mode, n_clients=n_clients, seed=seed))
    assert len(shards) == n_clients
    merged = np.concatenate(shards)
    assert len(merged) == ds.n
    assert np.array_equal(np.sort(merged), np.arange(ds.n))
    if mode == "dirichlet":
        assert all(len(s) > 0 for s in shards), "dirichlet repair must fill empty clients"


def test_partition_is_seed_deterministic():
    ds = make_blobs(n_classes=4, per_class=10, dim=3, spread=1.0, seed=0)
    spec = PartitionSpec(mode="dirichlet", n_clients=5, seed=7)
    a = partition(ds, spec)
    b = partition(ds, spec)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_dirichlet_alpha_skews_labels():
    ds = make_blobs(n_classes=4, per_class=100, dim=3, spread=1.0, seed=0)

    def skew(alpha):
        shards = partition(ds, PartitionSpec(mode="dirichlet", n_clients=8, seed=3, alpha=alpha))
        # Mean share of the dominant label per client; 0.25 means balanced.
        tops = []
        for idx in shards:
            counts = np.bincount(ds.labels[idx], minlength=4)
            tops.append(counts.max() / counts.sum())
        return float(np.mean(tops))

    assert skew(0.1) > skew(100.0)


def test_shards_mode_needs_enough_rows():
    ds = make_blobs(n_classes=2, per_class=2, dim=2, spread=1.0, seed=0)
    with pytest.raises(ContractError):
        partition(ds, PartitionSpec(mode="shards", n_clients=4, seed=0, shards_per_client=2))


def test_partition_spec_validation():
    with pytest.raises(ConfigError):
        PartitionSpec(mode="random", n_clients=2, seed=0)
    with pytest.raises(ConfigError):
        PartitionSpec(mode="iid", n_clients=0, seed=0)
    with pytest.raises(ConfigError):
        PartitionSpec(mode="dirichlet", n_clients=2, seed=0, alpha=0.0)


@given(st.integers(min_value=1, max_value=16), st.integers(min_value=0, max_value=50))
@settings(max_examples=30, deadline=None)
def test_make_pairs_contract(b, seed):
    ds = make_blobs(n_classes=3, per_class=4, dim=3, spread=1.0, seed=2)
    batch = make_pairs(ds, b, pos_fraction=0.5, seed=seed)
    assert batch.x1.shape == (b, 3) and batch.x2.shape == (b, 3)
    assert np.array_equal(batch.y_ij, (batch.y1 != batch.y2).astype(int))
    assert not batch.single_class_warning


def test_make_pairs_single_class_fallback():
    ds = make_blobs(n_classes=2, per_class=3, dim=2, spread=1.0, seed=1)
    only_zero = ds.subset(np.where(ds.labels == 0)[0])
    batch = make_pairs(only_zero, 6, pos_fraction=0.5, seed=0)
    assert batch.single_class_warning
    assert np.all(batch.y_ij == 0), "one-class data can only produce same-class pairs"


def test_make_pairs_is_seed_deterministic():
    ds = make_blobs(n_classes=3, per_class=5, dim=2, spread=1.0, seed=8)
    a = make_pairs(ds, 10, 0.5, seed=3)
    b = make_pairs(ds, 10, 0.5, seed=3)
    assert np.array_equal(a.x1.data, b.x1.data) and np.array_equal(a.y_ij, b.y_ij)


def test_pos_fraction_extremes():
    ds = make_blobs(n_classes=3, per_class=5, dim=2, spread=1.0, seed=8)
    same = make_pairs(ds, 12, pos_fraction=1.0, seed=1)
    diff = make_pairs(ds, 12, pos_fraction=0.0, seed=1)
    assert np.all(same.y_ij == 0)
    assert np.all(diff.y_ij == 1)


def test_toy_masks_nested_by_class():
    masks = toy_masks(np.array([0, 1, 2]), n_classes=3)
    areas = masks.sum(axis=(1, 2))
    assert areas[0] < areas[1] < areas[2], "later classes get larger masks"
    assert np.array_equal(masks[1], class_mask(1, 3))


def test_with_masks_round_trip():
    ds = with_masks(make_blobs(n_classes=2, per_class=3, dim=2, spread=1.0, seed=0))
    assert ds.masks is not None and ds.masks.shape[0] == ds.n
    sub = ds.subset(np.array([0, 4]))
    assert np.array_equal(sub.masks, ds.masks[[0, 4]])


def test_load_csv_round_trip(tmp_path):
    path = tmp_path / "points.csv"
    path.write_text("f0,f1,label\n0.5,1.5,0\n-1.0,2.0,1\n0.0,0.0,2\n")
    ds = load_csv(str(path))
    assert ds.n == 3 and ds.dim == 2 and ds.n_classes == 3
    assert np.array_equal(ds.labels, np.array([0, 1, 2]))
    assert ds.features.data[1, 0] == -1.0


def test_load_csv_reports_line_numbers(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("f0,f1,label\n0.5,oops,0\n")
    with pytest.raises(ContractError, match=r"bad\.csv:2:"):
        load_csv(str(path))
    path.write_text("f0,f1,target\n0.5,1.0,0\n")
    with pytest.raises(ContractError):
        load_csv(str(path))


def test_dataset_validation():
    from tierfl.autodiff import Tensor

    with pytest.raises(ContractError):
        Dataset(features=Tensor(np.ones((2, 2))), labels=np.array([0, 5]), n_classes=3)
    with pytest.raises(ContractError):
        Dataset(features=Tensor(np.ones((2, 2))), labels=np.array([0]), n_classes=2)

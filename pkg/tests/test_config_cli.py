"""Config parsing and command-line round trips."""
import json
import os

import pytest

from tierfl.config import (
    COMPONENTS,
    RunConfig,
    component_config,
    parse_config,
    parse_sweep,
    sweep_points,
)
from tierfl.cli import OUTPUT_ROOT_VAR, main
from tierfl.errors import ConfigError


# ---- parse_config ---- #


def test_empty_object_gives_full_defaults():
    cfg = parse_config("{}")
    assert cfg == RunConfig()
    assert cfg.strategy.kind == "sherl"
    assert cfg.strategy.margin == 0.5
    assert cfg.strategy.lr == 1e-4
    assert cfg.schedule.rounds == 20
    assert (cfg.schedule.t1, cfg.schedule.t2) == (5, 10)
    assert cfg.schedule.sample_rate == 0.1
    assert cfg.model.hidden_dims == (64, 64, 32, 32)
    assert (cfg.model.cut1, cfg.model.cut2) == (2, 4)
    assert cfg.bytes_per_scalar == 4
    assert cfg.sync_clients_at_t2 is True


def test_partial_override_keeps_other_defaults():
    cfg = parse_config('{"strategy": {"kind": "hsfl", "lr": 0.01}, "seed": 7}')
    assert cfg.strategy.kind == "hsfl"
    assert cfg.strategy.lr == 0.01
    assert cfg.strategy.margin == 0.5
    assert cfg.schedule.rounds == 20
    assert cfg.seed == 7


def test_unknown_keys_reported_with_paths():
    with pytest.raises(ConfigError) as exc:
        parse_config('{"strtegy": {}, "schedule": {"t3": 1}}')
    joined = "\n".join(exc.value.errors)
    assert "strtegy: unknown key" in joined
    assert "schedule.t3: unknown key" in joined


def test_type_errors_reported_with_paths():
    with pytest.raises(ConfigError) as exc:
        parse_config('{"schedule": {"rounds": "many"}, "data": {"dim": true}}')
    joined = "\n".join(exc.value.errors)
    assert "schedule.rounds: expected an integer" in joined
    assert "data.dim: expected an integer" in joined


def test_range_errors_carry_section_prefix():
    with pytest.raises(ConfigError) as exc:
        parse_config('{"strategy": {"margin": 3.0}, "schedule": {"sample_rate": 0.0}}')
    joined = "\n".join(exc.value.errors)
    assert "strategy.margin: 3.0 outside [0, 2]" in joined
    assert "schedule.sample_rate" in joined


def test_multiple_errors_collected_in_one_pass():
    with pytest.raises(ConfigError) as exc:
        parse_config('{"seed": -1, "bytes_per_scalar": 3, "topology": {"n_clients": 0}}')
    joined = "\n".join(exc.value.errors)
    assert "seed: must be >= 0" in joined
    assert "bytes_per_scalar: must be 4 or 8" in joined
    assert "topology.n_clients" in joined


def test_invalid_json_is_a_config_error():
    with pytest.raises(ConfigError) as exc:
        parse_config("{not json")
    assert any("invalid JSON" in e for e in exc.value.errors)


def test_non_object_top_level_rejected():
    with pytest.raises(ConfigError):
        parse_config("[1, 2]")


# ---- sweeps ---- #


def test_margin_sweep_points_labeled_by_value():
    spec = parse_sweep('{"margins": [0.2, 0.5, 1.0]}')
    points = sweep_points(spec)
    assert [label for label, _ in points] == ["margin_0.2", "margin_0.5", "margin_1"]
    assert [cfg.strategy.margin for _, cfg in points] == [0.2, 0.5, 1.0]


def test_schedule_sweep_points_labeled_alphabetically():
    spec = parse_sweep('{"schedules": [{"t1": 5, "t2": 10}, {"t1": 10, "t2": 20}]}')
    points = sweep_points(spec)
    assert [label for label, _ in points] == ["A", "B"]
    assert [(c.schedule.t1, c.schedule.t2) for _, c in points] == [(5, 10), (10, 20)]
    # Base rounds and sampling carry through untouched.
    assert all(c.schedule.rounds == 20 for _, c in points)


def test_component_sweep_maps_to_strategy_and_cut():
    spec = parse_sweep(json.dumps({"components": list(COMPONENTS)}))
    by_label = dict(sweep_points(spec))
    assert by_label["full"].strategy.kind == "sherl"
    assert by_label["no_contrastive"].strategy.kind == "hsfl"
    assert by_label["no_role_split"].strategy.kind == "sherl"
    assert by_label["no_role_split"].model.cut1 == 1
    assert by_label["neither"].strategy.kind == "hsfl"
    assert by_label["neither"].model.cut1 == 1
    assert by_label["full"].model.cut1 == RunConfig().model.cut1


def test_component_config_rejects_unknown_name():
    with pytest.raises(ConfigError):
        component_config(RunConfig(), "everything")


def test_sweep_requires_exactly_one_axis():
    with pytest.raises(ConfigError):
        parse_sweep('{"margins": [0.5], "components": ["full"]}')
    with pytest.raises(ConfigError):
        parse_sweep('{"base": {}}')


def test_sweep_base_errors_prefixed():
    with pytest.raises(ConfigError) as exc:
        parse_sweep('{"base": {"seed": -2}, "margins": [0.5]}')
    assert any(e.startswith("base.seed") for e in exc.value.errors)


# ---- CLI ---- #

FAST_RUN = {
    "strategy": {"kind": "sherl", "lr": 0.01, "optimizer": "sgd"},
    "schedule": {"rounds": 2, "t1": 1, "t2": 2, "sample_rate": 0.5},
    "topology": {"n_clients": 4, "n_edges": 2},
    "model": {"hidden_dims": [8, 8, 6, 6], "cut1": 2, "cut2": 4},
    "data": {"classes": 3, "per_class": 6, "test_per_class": 4, "dim": 5,
             "batch_size": 4, "pairs_per_batch": 4},
    "seed": 3,
}


def write_config(tmp_path, payload, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def test_run_writes_all_artifacts(tmp_path, capsys):
    cfg = write_config(tmp_path, FAST_RUN)
    out = tmp_path / "out"
    assert main(["run", "--config", cfg, "--out", str(out)]) == 0
    for name in ("metrics.csv", "ledger.csv", "embeddings.csv", "summary.json"):
        assert (out / name).is_file(), name
    summary = json.loads((out / "summary.json").read_text())
    assert summary["rounds"] == 2
    assert summary["config"]["seed"] == 3
    assert summary["ledger"]["total"] > 0
    assert summary["final"]["macro_f1"] is not None
    assert "artifacts in" in capsys.readouterr().out


def test_run_repeats_are_byte_identical(tmp_path):
    cfg = write_config(tmp_path, FAST_RUN)
    first, second = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", cfg, "--out", str(first)]) == 0
    assert main(["run", "--config", cfg, "--out", str(second)]) == 0
    for name in ("metrics.csv", "ledger.csv", "embeddings.csv", "summary.json"):
        assert (first / name).read_bytes() == (second / name).read_bytes(), name


def test_bad_config_exits_2_with_json_errors(tmp_path, capsys):
    cfg = write_config(tmp_path, {"strategy": {"kind": "mystery"}})
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "out")]) == 2
    payload = json.loads(capsys.readouterr().err)
    assert any("strategy.kind" in e for e in payload["errors"])


def test_relative_out_lands_under_output_root(tmp_path, monkeypatch):
    cfg = write_config(tmp_path, FAST_RUN)
    monkeypatch.setenv(OUTPUT_ROOT_VAR, str(tmp_path / "root"))
    assert main(["run", "--config", cfg, "--out", "nested/run1"]) == 0
    assert (tmp_path / "root" / "nested" / "run1" / "metrics.csv").is_file()


def test_absolute_out_ignores_output_root(tmp_path, monkeypatch):
    cfg = write_config(tmp_path, FAST_RUN)
    monkeypatch.setenv(OUTPUT_ROOT_VAR, str(tmp_path / "root"))
    out = tmp_path / "abs"
    assert main(["run", "--config", cfg, "--out", str(out)]) == 0
    assert (out / "metrics.csv").is_file()
    assert not (tmp_path / "root").exists()


def test_cost_reconcile_passes_on_real_run(tmp_path, capsys):
    cfg = write_config(tmp_path, FAST_RUN)
    assert main(["cost", "--config", cfg, "--reconcile"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["reconcile"]["passed"] is True
    assert payload["total_gb"] > 0
    assert set(payload["per_kind_gb"]) >= {"client_smashed_up", "grad_from_edge"}


def test_sweep_writes_overview_and_point_dirs(tmp_path, capsys):
    spec = {"base": FAST_RUN, "margins": [0.2, 1.0]}
    cfg = write_config(tmp_path, spec, "sweep.json")
    out = tmp_path / "sweep-out"
    assert main(["sweep", "--config", cfg, "--out", str(out)]) == 0
    rows = (out / "sweep.csv").read_text().strip().splitlines()
    assert rows[0] == "label,status,final_loss,final_macro_f1,total_bytes,error"
    assert len(rows) == 3
    assert all(",ok," in row for row in rows[1:])
    for label in ("margin_0.2", "margin_1"):
        assert (out / label / "metrics.csv").is_file()


def test_check_verb_passes(capsys):
    assert main(["check"]) == 0

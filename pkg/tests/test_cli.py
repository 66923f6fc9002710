from __future__ import annotations

import csv
import json
import struct

import pytest

from semiweak_mil import cli
from semiweak_mil.data import save_feature_store
from semiweak_mil.data.bags import Bag, Dataset

_FAST = [
    "--set",
    "rounds=1",
    "--set",
    "epochs_per_round=1",
    "--set",
    "warmup_epochs=1",
    "--set",
    "hidden_dim=8",
    "--set",
    "num_pseudo_bags=3",
    "--set",
    "max_labels=2",
    "--set",
    "seed=5",
]


@pytest.fixture()
def panels(mocker):
    return mocker.patch("semiweak_mil.cli._print_panel")


@pytest.fixture()
def store(tmp_path, small_dataset):
    path = tmp_path / "store"
    save_feature_store(small_dataset, path)
    return path


@pytest.fixture()
def trained(tmp_path, store, panels):
    out = tmp_path / "run"
    assert cli.main(["train", str(store), str(out), *_FAST]) == 0
    return out


def test_synth_writes_the_requested_spec(tmp_path, panels) -> None:
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"num_train": 4, "num_val": 2, "num_test": 2, "dim": 3, "seed": 1}), encoding="utf-8")
    out = tmp_path / "synth"

    assert cli.main(["synth", str(spec), str(out)]) == 0

    manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    assert len(manifest["bags"]) == 8
    assert manifest["dim"] == 3
    panels.assert_called_once()
    assert "8 bags" in panels.call_args[0][1]


@pytest.mark.failure_mode
def test_synth_rejects_a_negative_noise_sigma(tmp_path, panels) -> None:
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"noise_sigma": -1.0}), encoding="utf-8")

    assert cli.main(["synth", str(spec), str(tmp_path / "out")]) == 2
    assert "domain_error" in panels.call_args[0][1]
    assert not (tmp_path / "out").exists()


@pytest.mark.failure_mode
def test_synth_usage_errors_exit_with_two(tmp_path, panels) -> None:
    assert cli.main(["synth", "--default", str(tmp_path / "a"), str(tmp_path / "b")]) == 2
    assert "config_error" in panels.call_args[0][1]


def test_train_writes_every_artifact(trained) -> None:
    report = json.loads((trained / "report.json").read_text(encoding="utf-8"))

    assert (trained / "best.ckpt").is_file()
    assert report["method"] == "adapse"
    assert report["config"]["rounds"] == 1
    assert report["best"]["checkpoint"] == "best.ckpt"
    with (trained / "pseacc.csv").open(encoding="utf-8") as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["round", "method", "pseacc"]
    assert [row[1] for row in rows[1:]] == ["adapse"]


def test_train_keeps_the_plan_of_every_round(trained) -> None:
    plan = json.loads((trained / "plans" / "round_01.json").read_text(encoding="utf-8"))

    assert plan["round"] == 1
    assert plan["method"] == "adapse"
    assert plan["labeled"] + plan["unlabeled"] + plan["discarded"] == len(plan["pseudo_bags"])
    assert {entry["status"] for entry in plan["pseudo_bags"]} <= {"labeled", "unlabeled", "discarded"}


def test_single_pseudo_bag_round_plan_is_whole_bag_supervision(tmp_path, store, small_dataset, panels) -> None:
    out = tmp_path / "whole"
    overrides = ["rounds=1", "epochs_per_round=1", "warmup_epochs=0", "num_pseudo_bags=1", "gamma_0=0", "hidden_dim=4"]

    assert cli.main(["train", str(store), str(out), *[arg for item in overrides for arg in ("--set", item)]]) == 0

    plan = json.loads((out / "plans" / "round_01.json").read_text(encoding="utf-8"))
    train_bags = {bag.id: bag for bag in small_dataset.subset("train")}
    assert plan["gamma_ada"] == 0.0
    assert plan["labeled"] == len(train_bags)
    assert plan["unlabeled"] == 0 and plan["discarded"] == 0
    assert sorted(entry["parent"] for entry in plan["pseudo_bags"]) == sorted(train_bags)
    for entry in plan["pseudo_bags"]:
        parent = train_bags[entry["parent"]]
        assert entry["status"] == "labeled"
        assert entry["size"] == parent.num_instances
        assert entry["inherited"] == parent.label
        assert entry["prediction"] is None
    assert plan["recycle_log"] == []


def test_eval_reproduces_the_reported_test_metrics(trained, store, panels, capsys) -> None:
    capsys.readouterr()
    predictions = trained / "predictions.csv"

    code = cli.main(["eval", str(trained / "best.ckpt"), str(store), "--predictions", str(predictions)])

    assert code == 0
    printed = json.loads(capsys.readouterr().out)
    report = json.loads((trained / "report.json").read_text(encoding="utf-8"))
    assert printed["acc"] == report["test"]["acc"]
    assert printed["auc"] == report["test"]["auc"]
    with predictions.open(encoding="utf-8") as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["bag_id", "true", "pred", "prob_normal", "prob_tumor"]
    assert len(rows) == 1 + 6


@pytest.mark.failure_mode
def test_eval_with_missing_checkpoint_exits_with_two(tmp_path, store, panels) -> None:
    assert cli.main(["eval", str(tmp_path / "absent.ckpt"), str(store)]) == 2
    assert "checkpoint_error" in panels.call_args[0][1]


@pytest.mark.failure_mode
def test_eval_with_a_malformed_checkpoint_shape_exits_with_two(trained, store, panels) -> None:
    checkpoint = trained / "best.ckpt"
    raw = checkpoint.read_bytes()
    (length,) = struct.unpack_from("<Q", raw)
    header = json.loads(raw[8 : 8 + length])
    header["params"][0]["shape"] = [4]
    encoded = json.dumps(header).encode("utf-8")
    checkpoint.write_bytes(struct.pack("<Q", len(encoded)) + encoded + raw[8 + length :])

    assert cli.main(["eval", str(checkpoint), str(store)]) == 2
    assert "checkpoint_error" in panels.call_args[0][1]


@pytest.mark.failure_mode
def test_synth_with_a_scalar_positive_ratio_exits_with_two(tmp_path, panels) -> None:
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"positive_ratio": 0.1}), encoding="utf-8")

    assert cli.main(["synth", str(spec), str(tmp_path / "out")]) == 2
    assert "domain_error" in panels.call_args[0][1]


def test_heatmap_exports_attention_and_oracle_labels(trained, store, small_dataset, panels) -> None:
    bag = small_dataset.subset("test")[0]
    out = trained / "heatmap.csv"

    assert cli.main(["heatmap", str(trained / "best.ckpt"), str(store), bag.id, str(out)]) == 0

    with out.open(encoding="utf-8") as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["instance_index", "attention_score", "oracle_label"]
    assert len(rows) == 1 + bag.num_instances
    assert sum(float(row[1]) for row in rows[1:]) == pytest.approx(1.0)


def test_heatmap_with_shapley_adds_a_column(trained, store, small_dataset, panels) -> None:
    bag = small_dataset.subset("val")[0]
    out = trained / "shapley.csv"

    argv = ["heatmap", str(trained / "best.ckpt"), str(store), bag.id, str(out), "--iis", "shapley"]
    assert cli.main([*argv, "--samples-per-instance", "5"]) == 0

    with out.open(encoding="utf-8") as handle:
        header = next(csv.reader(handle))
    assert header == ["instance_index", "attention_score", "shapley_score", "oracle_label"]


@pytest.mark.failure_mode
def test_heatmap_with_unknown_bag_exits_with_two(trained, store, panels) -> None:
    code = cli.main(["heatmap", str(trained / "best.ckpt"), str(store), "nope", str(trained / "h.csv")])

    assert code == 2
    assert "data_error" in panels.call_args[0][1]


@pytest.mark.failure_mode
def test_pseacc_requires_oracle_labels(tmp_path, small_dataset, panels) -> None:
    stripped = Dataset(
        bags=tuple(Bag(id=bag.id, features=bag.features, label=bag.label) for bag in small_dataset.bags),
        priority=small_dataset.priority,
        split=small_dataset.split,
    )
    save_feature_store(stripped, tmp_path / "blind")

    assert cli.main(["pseacc", str(tmp_path / "blind"), str(tmp_path / "p.csv")]) == 2
    assert "oracle_error" in panels.call_args[0][1]


@pytest.mark.failure_mode
def test_pseacc_rejects_unknown_methods(tmp_path, store, panels) -> None:
    assert cli.main(["pseacc", str(store), str(tmp_path / "p.csv"), "--methods", "adapse,magic"]) == 2
    assert "magic" in panels.call_args[0][1]


@pytest.mark.failure_mode
def test_unknown_override_key_exits_with_two(tmp_path, store, panels) -> None:
    assert cli.main(["train", str(store), str(tmp_path / "run"), "--set", "warp=9"]) == 2
    assert "config_error" in panels.call_args[0][1]


def test_cv_writes_a_summary(tmp_path, store, panels) -> None:
    out = tmp_path / "cv"

    assert cli.main(["cv", str(store), str(out), "--folds", "2", *_FAST]) == 0

    summary = json.loads((out / "cv_summary.json").read_text(encoding="utf-8"))
    assert [fold["fold"] for fold in summary["folds"]] == [0, 1]
    assert set(summary["summary"]) >= {"acc", "f1"}
    assert (out / "fold_1" / "report.json").is_file()


def test_metrics_file_comes_from_the_environment(tmp_path, store, panels, monkeypatch) -> None:
    target = tmp_path / "train.prom"
    monkeypatch.setenv("SEMIWEAK_MIL_METRICS_FILE", str(target))

    assert cli.main(["train", str(store), str(tmp_path / "run"), *_FAST]) == 0

    assert "semiweak_mil_rounds_completed_total" in target.read_text(encoding="utf-8")


@pytest.mark.failure_mode
def test_non_integer_worker_count_is_a_config_error(tmp_path, store, panels, monkeypatch) -> None:
    monkeypatch.setenv("SEMIWEAK_MIL_WORKERS", "many")

    assert cli.main(["train", str(store), str(tmp_path / "run")]) == 2
    assert "config_error" in panels.call_args[0][1]

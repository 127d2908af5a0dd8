import itertools
import json

import numpy as np
import pytest

import fatlab


def test_primitives():
    assert fatlab.euclidean_distance([0.0, 0.0], [3.0, 4.0]) == 5.0
    np.testing.assert_allclose(fatlab.softmax([0.0, 0.0, 0.0, 0.0]), [0.25] * 4)
    assert fatlab.entropy([0.5, 0.5, 0.0, 0.0]) == pytest.approx(np.log(2.0), rel=1e-15)


def test_triplet_matches_enumeration():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(9, 3))
    labels = [0, 0, 0, 1, 1, 1, 2, 2, 2]
    terms = [
        max(0.0, np.linalg.norm(x[a] - x[p]) + 1.0 - np.linalg.norm(x[a] - x[n]))
        for a, p, n in itertools.product(range(9), repeat=3)
        if a != p and labels[a] == labels[p] and labels[a] != labels[n]
    ]
    out = fatlab.triplet_batch_all(x, labels, 1.0)
    assert out["value"] == pytest.approx(np.mean(terms), rel=1e-12)
    assert out["embedding_grad"].shape == (9, 3)


def test_fat_bounds_batch_hard():
    rng = np.random.default_rng(1)
    centres = rng.normal(scale=3.0, size=(4, 5))
    x = np.repeat(centres, 5, axis=0) + rng.normal(size=(20, 5))
    labels = list(np.repeat(np.arange(4), 5))
    fat = fatlab.fat_batch(x, labels, margin=1.0, negative="ctrdAll")
    p2s = fatlab.fat_batch(x, labels, margin=1.0, negative="ctrdAll", with_radii=False)
    assert fat["value"] >= p2s["value"]
    assert fat["value"] - p2s["value"] == pytest.approx(fat["radii_term"], rel=1e-12)
    clusters = fatlab.compute_centroids(x, labels, "C1")
    assert sorted(clusters) == [0, 1, 2, 3]
    np.testing.assert_allclose(clusters[0]["centroid"], x[:5].mean(axis=0), atol=1e-12)


def test_retrieval_and_counts():
    q = np.array([[0.0]])
    g = np.array([[1.0], [2.0], [3.0], [4.0]])
    report = fatlab.evaluate_retrieval(q, [1], g, [0, 1, 0, 1])
    assert report["mAP"] == pytest.approx(0.5)
    assert fatlab.count_triplets_vanilla(2, 2) == 8
    assert fatlab.count_triplets_vanilla(1, 5) == 0


def test_errors_map_to_python_exceptions():
    with pytest.raises(fatlab.ConfigError):
        fatlab.train({"train_config": {"no_such_key": 1}})
    with pytest.raises(fatlab.ValidationError):
        fatlab.fat_batch(np.zeros((4, 2)), [0, 0, 1, 1], normalized=True, centroid="C1")
    assert issubclass(fatlab.ConfigError, fatlab.FatlabError)


def test_train_end_to_end():
    out = fatlab.train({"seed": 3, "train_config": {"epochs": 20}})
    assert out["report"]["top1"] >= 0.9
    assert len(out["log"]["loss"]) == 20


def test_distill_small():
    out = fatlab.distill({"seed": 2, "noise_spec": {"flip_rate": 0.2}, "train_config": {"epochs": 10}})
    # Measured over the training split, so only near the injected 20%.
    assert 0.1 < out["full_corruption"] < 0.3
    assert 0.0 <= out["distilled"]["mAP"] <= 1.0


def test_generate_dataset_is_seeded():
    a = fatlab.generate_dataset({"seed": 5, "noise_spec": {"flip_rate": 0.1}})
    b = fatlab.generate_dataset({"seed": 5, "noise_spec": {"flip_rate": 0.1}})
    np.testing.assert_array_equal(a["features"], b["features"])
    assert a["labels"] == b["labels"]
    assert a["features"].shape == (200, 32)
    assert a["provenance"].count("flip") == 20


def test_cli_run_in_process(tmp_path):
    code, _, err = fatlab.run("train", out=str(tmp_path / "a"), seed=1, overrides=["train_config.epochs=3"])
    assert code == 0, err
    report = json.loads((tmp_path / "a" / "eval_report.json").read_text())
    code, _, _ = fatlab.run("train", config_path=str(tmp_path / "a" / "eval_report.json"), out=str(tmp_path / "b"))
    assert code == 0
    assert (tmp_path / "b" / "eval_report.json").read_bytes() == (tmp_path / "a" / "eval_report.json").read_bytes()
    assert report["config"]["seed"] == 1
    code, _, err = fatlab.run("train", out=str(tmp_path / "c"), overrides=["loss_config.margin=-1"])
    assert code == 1
    assert "margin" in err


def test_benchmark_report():
    rep = fatlab.benchmark_loss_scaling("FAT", [128, 256, 512], repeats=2)
    assert rep["loss"] == "FAT"
    assert len(rep["points"]) == 3

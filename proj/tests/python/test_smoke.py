import numpy as np
import pytest

import metadse

TINY = {
    "data.workloads": "4",
    "split.train": "2",
    "split.val": "1",
    "split.test": "1",
    "data.samples_per_workload": "200",
    "meta.epochs": "1",
    "meta.tasks_per_workload": "4",
    "meta.val_tasks_per_workload": "2",
    "eval.tasks": "6",
    "model.embed_dim": "8",
    "model.heads": "2",
    "model.layers": "1",
    "model.mlp_hidden": "8",
}


def test_design_space():
    space = metadse.DesignSpace.canonical()
    assert space.dims == 20
    assert space.cardinality == 76859228160000
    assert len(space.candidates(space.names().index("ROB Size"))) == 15
    for point in space.sample(50, 3):
        assert space.decode(space.encode(point)) == point


def test_metrics_and_distance():
    assert metadse.rmse([1, 1], [0, 2]) == 1.0
    assert metadse.mape([2, 3], [4, 2]) == 50.0
    assert metadse.explained_variance([10, 10], [0, 1]) < 0
    assert metadse.wasserstein_1d([0], [1]) == 1.0
    mean, half, n = metadse.mean_ci([1, 2, 3])
    assert (mean, n) == (2.0, 3)
    assert half == pytest.approx(1.96 / np.sqrt(3))
    with pytest.raises(metadse.NumericError, match="DivisionByZero"):
        metadse.mape([1], [0])


def test_family_is_deterministic():
    space = metadse.DesignSpace.canonical()
    a = metadse.gen_family(3, 0.5, 0.02, 8, 11)
    b = metadse.gen_family(3, 0.5, 0.02, 8, 11)
    point = space.sample(1, 2)[0]
    assert [w.id for w in a] == ["w00", "w01", "w02"]
    assert a[1].evaluate(space, point, 4) == b[1].evaluate(space, point, 4)


def test_config_errors_are_usage_errors():
    with pytest.raises(metadse.UsageError):
        metadse.RunConfig({"meta.epoch": "3"})
    cfg = metadse.RunConfig(TINY)
    other = metadse.RunConfig(TINY)
    other.threads = 4
    assert cfg.hash() == other.hash()


def test_pipeline(tmp_path):
    cfg = metadse.RunConfig(TINY)
    data, run = str(tmp_path / "data"), str(tmp_path / "run")
    metadse.gen_data(cfg, data)
    summary = metadse.pretrain(cfg, data, run)
    assert len(summary["test"]) == 1
    assert metadse.extract_mask(cfg, run + "/checkpoint.mdse", run + "/candidates.txt", run + "/metadse.mdse") > 0

    predictor = metadse.Predictor(run + "/metadse.mdse")
    space = metadse.DesignSpace.canonical()
    x = np.array([space.encode(p) for p in space.sample(5, 1)])
    y = predictor.predict(x)
    assert y.shape == (5, 1)
    assert np.all(np.isfinite(y))
    assert predictor.mask.shape == (20, 20)
    with pytest.raises(metadse.UsageError, match="ShapeError"):
        predictor.predict(np.zeros((2, 3)))

    arm, report, markdown = metadse.evaluate(cfg, run + "/checkpoint.mdse", run + "/metadse.mdse", data, out_dir=run)
    assert arm == "metadse"
    (workload,) = report
    assert report[workload]["tasks"] == 6
    assert "GEOMEAN" in markdown

    arms, markdown = metadse.ablate(cfg, run + "/checkpoint.mdse", identity_mask=True, data_dir=data, out_dir=run)
    assert arms["metadse-identity-mask"] == arms["metadse-no-wam"]
    assert "identical" in markdown

    ids, dist, mean = metadse.similarity(cfg, data, run)
    assert ids == ["w00", "w01", "w02", "w03"]
    assert np.allclose(dist, dist.T)
    assert mean > 0

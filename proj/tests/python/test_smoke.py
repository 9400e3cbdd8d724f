import math

import numpy as np
import pytest

import sxgeo


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    path = tmp_path_factory.mktemp("synth") / "data.csv"
    sxgeo.generate_synthetic(str(path), n=120, seed=3)
    return sxgeo.zscore(sxgeo.load_csv(str(path)))


def test_dataset_roundtrip(data):
    assert data.n == 120
    assert data.p == 8
    assert data.feature_names[:2] == ["x", "y"]
    assert data.standardized
    assert np.allclose(data.X.mean(axis=0), 0.0, atol=1e-12)


def test_morans_i_checkerboard_cycle():
    # 4 points on a square; k=2 neighbours form the cycle
    loc = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    w = sxgeo.knn_weights(loc, 2)
    assert sxgeo.morans_i(np.array([1.0, -1.0, 1.0, -1.0]), w) == pytest.approx(-1.0, abs=1e-12)


def test_modularity_two_triangles():
    a = np.zeros((6, 6))
    for i, j in [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]:
        a[i, j] = a[j, i] = 1.0
    labels, q = sxgeo.maximize_modularity(a)
    assert q == pytest.approx(0.5)
    assert labels[0] == labels[1] == labels[2] != labels[3] == labels[4] == labels[5]
    assert sxgeo.modularity_score(a, [0, 0, 0, 1, 1, 1]) == pytest.approx(0.5)


def test_experiment_shap_efficiency(data):
    tree, metrics = sxgeo.run_experiment(
        data, model="sx", md=3, eval_size=50, background_size=20, shortlist_k=4, audit_size=60, seed=1
    )
    for key in ("r2_test", "rmse_test", "residual_moran_i", "modularity"):
        assert key in metrics
    phi, base = sxgeo.shap_values(tree, data.X[:10], data.X[10:40])
    assert np.allclose(base + phi.sum(axis=1), tree.predict(data.X[:10]), atol=1e-9)
    clone = sxgeo.GeoTree.from_json(tree.to_json())
    assert np.array_equal(clone.predict(data.X), tree.predict(data.X))


def test_gwr_and_dispersion(data):
    b = sxgeo.fit_gwr(data, 1.0)
    assert b.shape == (120, 9)
    assert sxgeo.attribution_entropy([1.0] * 8) == pytest.approx(math.log(8))
    assert sxgeo.gini_coefficient([0, 0, 0, 1, 0, 0, 0, 0]) == pytest.approx(0.875)


def test_errors_and_commands(tmp_path):
    with pytest.raises(sxgeo.SxgeoError):
        sxgeo.GeoTree.from_json('{"format_version": 1}')
    with pytest.raises(ValueError):
        sxgeo.load_csv(str(tmp_path / "missing.csv"))
    assert sxgeo.run_command("synth", f"out = {tmp_path}\nn = 60\nseed = 2\n") == 0
    assert (tmp_path / "data.csv").exists()
    assert sxgeo.run_command("train", f"data = {tmp_path / 'data.csv'}\nout = {tmp_path}\n") == 2

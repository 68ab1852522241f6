import math
import os
from pathlib import Path

import numpy as np
import pytest

import ftl

CONFIGS = Path(os.environ.get("FTL_CONFIG_DIR", Path(__file__).resolve().parents[2] / "configs"))


def random_spd(rng, n, cond=10.0):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return q @ np.diag(np.geomspace(1.0, cond, n)) @ q.T


def test_sym_eig_reconstructs():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((6, 6))
    m = (a + a.T) / 2
    values, vectors = ftl.sym_eig(m)
    assert np.all(np.diff(values) >= 0)
    np.testing.assert_allclose(vectors @ np.diag(values) @ vectors.T, m, atol=1e-12)
    np.testing.assert_allclose(values, np.linalg.eigvalsh(m), atol=1e-12)


def test_log_exp_and_distance():
    rng = np.random.default_rng(1)
    p = random_spd(rng, 5, 100.0)
    np.testing.assert_allclose(ftl.spd_exp(ftl.spd_log(p)), p, rtol=1e-10, atol=1e-10)
    assert ftl.geodesic_distance(np.eye(2), math.e**2 * np.eye(2)) == pytest.approx(2 * math.sqrt(2), rel=1e-12)
    root, inv_root = ftl.spd_sqrt(p)
    np.testing.assert_allclose(root @ root, p, rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(root @ inv_root, np.eye(5), atol=1e-10)


def test_frechet_mean_commuting():
    mean = ftl.frechet_mean([np.eye(2), math.e**2 * np.eye(2)])
    np.testing.assert_allclose(mean, math.e * np.eye(2), rtol=1e-8)


def test_covariance_is_spd():
    rng = np.random.default_rng(2)
    c = ftl.covariance(rng.standard_normal((4, 64)))
    assert np.allclose(c, c.T)
    assert np.linalg.eigvalsh(c).min() > 0


def test_mmd2_closed_form():
    a = [np.eye(2)]
    b = [np.diag([1.0, 3.0])]
    assert ftl.mmd2(a, b, 2.0) == pytest.approx(2 - 2 * math.exp(-0.5), abs=1e-12)
    assert abs(ftl.mmd2(a + b, a + b)) <= 1e-12


def test_fedavg():
    out = ftl.fedavg({0: [np.array([[1.0, 2.0]]), np.array([0.5])], 1: [np.array([[3.0, 4.0]]), np.array([1.5])]})
    np.testing.assert_array_equal(out[0], [[2.0, 3.0]])
    np.testing.assert_array_equal(out[1], [1.0])
    with pytest.raises(ValueError):
        ftl.fedavg({0: [np.zeros(2)], 1: [np.zeros(3)]})


def test_trials_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    signals = rng.standard_normal((4, 3, 16))
    path = tmp_path / "s.eegtrials"
    ftl.save_trials(path, "s", 2, signals, [0, 1, 0, 1])
    back = ftl.load_trials(path)
    assert back["subject"] == "s"
    assert back["labels"] == [0, 1, 0, 1]
    np.testing.assert_array_equal(back["signals"], signals)
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(ftl.FormatError):
        ftl.load_trials(path)


def test_baselines():
    rng = np.random.default_rng(4)
    covs, labels = [], []
    for k in range(20):
        y = k % 2
        d = np.array([4, 4, 1, 1] if y == 0 else [1, 1, 4, 4], dtype=float)
        covs.append(np.diag(d * np.exp(0.1 * rng.standard_normal(4))))
        labels.append(y)
    mdm = ftl.mdm_train(covs, labels)
    assert len(mdm.means) == 2
    assert [mdm.predict(c) for c in covs] == labels
    tsm = ftl.tsm_train(covs, labels)
    assert np.all(tsm.features(tsm.reference) == 0.0)
    assert [tsm.predict(c) for c in covs] == labels


def test_commands(tmp_path):
    data = ftl.synth(CONFIGS / "synth_subject.ini", 42, tmp_path / "data")
    assert Path(data).name == "synth01.eegtrials"
    config = tmp_path / "specific.ini"
    text = (CONFIGS / "specific.ini").read_text().replace("../data/synth01.eegtrials", str(data))
    config.write_text(text)
    result = ftl.train_specific(config, 42, tmp_path / "run")
    assert result["mean_accuracy"]["ftl"] >= 0.95
    assert len(result["folds"]) == 5
    assert (tmp_path / "run" / "metrics.csv").read_text().startswith("run_id,method,subject,fold,step,loss,accuracy")
    again = ftl.train_specific(config, 42, tmp_path / "run2")
    assert again == result
    assert (tmp_path / "run" / "summary.csv").read_bytes() == (tmp_path / "run2" / "summary.csv").read_bytes()

    base = ftl.baseline(config, "mdm", 42, tmp_path / "mdm")
    assert base["mean_accuracy"]["mdm"] >= 0.95
    with pytest.raises(ValueError):
        ftl.baseline(config, "lda", 42, tmp_path / "x")
    with pytest.raises(ftl.ConfigError):
        ftl.train_specific(tmp_path / "missing.ini", 1, tmp_path / "y")

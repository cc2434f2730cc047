import json
import math

import numpy as np
import pytest

import virlab


def test_weight_functions():
    assert virlab.s_v(0.5, 7.0, 10.0) == pytest.approx(7.0 * math.exp(-5.0), rel=1e-12)
    kl = virlab.s_d([0.75, 0.25], [0.25, 0.75])
    assert kl == pytest.approx(0.5 * math.log(3.0), rel=1e-12)
    assert virlab.vir_weight(7.0, 0.5, 0.007) == pytest.approx(3.507, rel=1e-12)
    assert virlab.gairat_weight(10, 10, -1.0) == pytest.approx(6.1441746022147178e-6, rel=1e-9)
    assert virlab.mail_margin([0.6, 0.3, 0.1], 0) == pytest.approx(0.3)
    assert virlab.mail_weight(1.0, 10.0, 0.0) == pytest.approx(1.0 / (1.0 + math.exp(10.0)), rel=1e-12)


def test_softmax_rows_sum_to_one():
    p = virlab.softmax(np.array([[1.0, 2.0, 3.0], [1000.0, 0.0, -1000.0]]))
    assert p.shape == (2, 3)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)


def test_invalid_probability_raises():
    with pytest.raises(ValueError):
        virlab.s_v(1.5)


def test_theory_closed_forms():
    r_minus, r_plus = virlab.theorem_risks(4, 1.0, 2.0, 2.0)
    assert r_minus == pytest.approx(0.1079351917301015, rel=1e-9)
    assert r_plus == pytest.approx(0.35152444002085828, rel=1e-9)
    c_plus, c_minus = virlab.thresholds(4, 1.0, 2.0, 2.0)
    assert c_plus == pytest.approx(c_minus, abs=1e-12)
    row = virlab.theory_row(4, 1.0, 2.0, 2.0, n=20000, seed=3)
    assert row["pass_ordering"] and row["pass_threshold"]


def test_classifier_roundtrip(tmp_path):
    model = virlab.Classifier([4, 8, 3], seed=1)
    assert model.parameter_count == 4 * 8 + 8 + 8 * 3 + 3
    x = np.random.default_rng(0).uniform(size=(5, 4))
    path = tmp_path / "m.ckpt"
    model.save(path)
    loaded = virlab.Classifier.load(path)
    np.testing.assert_array_equal(model.forward(x), loaded.forward(x))


def test_attack_stays_in_ball():
    model = virlab.Classifier([6, 16, 3], seed=2)
    x = np.random.default_rng(1).uniform(size=(10, 6))
    y = [i % 3 for i in range(10)]
    eps = 0.05
    adv = virlab.attack(model, x, y, family="PGD", epsilon=eps, step_size=0.01, iterations=5)
    assert np.max(np.abs(adv - x)) <= eps + 1e-12
    assert adv.min() >= 0.0 and adv.max() <= 1.0
    again = virlab.attack(model, x, y, family="PGD", epsilon=eps, step_size=0.01, iterations=5)
    np.testing.assert_array_equal(adv, again)


def test_short_training_run(tmp_path):
    cfg = virlab.default_config("desk")
    assert cfg["epochs"] == 30
    override = {
        "epochs": 3,
        "optimizer": {"milestones": [2]},
        "objective": {"weights": {"burn_in_epoch": 1}},
        "data": {"multiclass": {"train_per_class": 60, "test_per_class": 30}},
    }
    out = virlab.train(json.dumps(override), out_dir=str(tmp_path / "run"))
    assert 0.0 <= out["clean_acc"] <= 1.0
    assert set(out["robust_acc"]) == {"fgsm", "pgd20"}
    assert out["metrics_csv"].startswith("epoch,lr,train_loss")
    assert (tmp_path / "run" / "model.ckpt").exists()
    assert all(math.isfinite(v) for v in out["step_losses"])


def test_unknown_config_key_rejected():
    with pytest.raises(ValueError):
        virlab.train({"epochz": 3})

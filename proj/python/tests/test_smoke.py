import math

import numpy as np
import pytest

import freeent


def test_ball_volume():
    assert freeent.log_ball_volume(1, 2.0) == pytest.approx(math.log(4.0), abs=1e-15)
    value, stderr = freeent.ball_volume_hit_or_miss(2, 1.0, 100000, seed=3)
    assert abs(value - freeent.log_ball_volume(2, 1.0)) < 3 * stderr


def test_moment_specs():
    s = freeent.semicircle_moments(1.0, 4)
    m = {tuple(e["word"]): e["re"] for e in s["entries"]}
    assert m[(1, 1)] == pytest.approx(1.0)
    assert m[(1, 1, 1, 1)] == pytest.approx(2.0)
    pair = freeent.free_product_moments([s, s], 4)
    assert pair["n"] == 2
    assert freeent.moment_distance(s, s, 4) == 0.0


def test_sample_spectra_shape():
    blocks, acceptance = freeent.sample_spectra(2, 3, 1.0, "X1^2 + X2^2", steps=600, burnin=100, seed=1)
    assert len(blocks) == 2
    assert blocks[0].shape == (500, 3)
    assert np.all(np.abs(blocks[1]) <= 1.0)
    assert np.all(np.diff(blocks[0], axis=1) >= 0)
    assert 0.0 < acceptance < 1.0


def test_hciz_scalar_case():
    # N = 1: the integral is exp(t a b).
    assert freeent.log_hciz(np.array([0.7]), np.array([-1.3]), 0.5) == pytest.approx(0.5 * 0.7 * -1.3)


def test_scalar_maxent_uniform():
    r = freeent.scalar_maxent([(1, 0.0), (2, 1.0 / 3.0)], 1.0)
    assert r["entropy"] == pytest.approx(math.log(2.0), abs=1e-6)
    assert r["gap"] < 1e-6


def test_run_experiment_and_tables():
    cfg = {"kind": "volume", "seed": 1, "params": {"N": 1, "R": 2.0}}
    records = freeent.run_experiment(cfg)
    assert records[0]["value"] == pytest.approx(math.log(4.0))
    assert freeent.run_experiment("kind: volume\nseed: 1\nparams: {N: 1, R: 2.0}\n") == records
    parsed = freeent.parse_config("params: {R: 2.0, N: 1}\nseed: 1\nkind: volume\n")
    assert freeent.config_hash(parsed) == freeent.config_hash(cfg)
    header, rows = freeent.plot_table(records, "chi-tilde")
    assert header == ["N", "value", "stderr"] and rows == []


def test_errors():
    with pytest.raises(freeent.ConfigError):
        freeent.run_experiment({"kind": "nope", "seed": 1})
    with pytest.raises(freeent.InfeasibleTarget):
        freeent.scalar_maxent([(2, 3.0)], 1.0)
    assert issubclass(freeent.InfeasibleTarget, freeent.Error)

"""Training-map contracts: determinism, invariance, divergence handling."""

import numpy as np
import pytest

import basinlab as bl
from basinlab.dynamics import STATUS_DIVERGED


def p_plus_point(rng, scale=1.0):
    a, b = rng.standard_normal(2) * scale
    return np.array([a, a, b, b])


def test_gd_step_fixed_point_at_origin(canonical):
    assert np.array_equal(bl.gd_step(np.zeros(4), canonical, 1.3), np.zeros(4))


def test_gd_step_zero_eta(canonical, rng):
    th = rng.standard_normal(4)
    assert np.array_equal(bl.gd_step(th, canonical, 0.0), th)


def test_gd_step_stays_on_plane_bitwise(canonical, rng):
    for _ in range(20):
        th = p_plus_point(rng)
        nxt = bl.gd_step(th, canonical, 2.5)
        assert nxt[0] == nxt[1] and nxt[2] == nxt[3]
        assert bl.dist_metric(nxt, "+") == 0.0


def test_train_zero_start(canonical):
    out = bl.train(np.zeros(4), canonical, bl.TrainConfig(eta=1.0, epochs=50))
    assert out.status == "finite"
    assert np.array_equal(out.final_theta, np.zeros(4))


def test_train_invariant_closure_thousand_steps(canonical, rng):
    th0 = p_plus_point(rng)
    out = bl.train(th0, canonical,
                   bl.TrainConfig(eta=2.5, epochs=1000, record_every=1))
    assert out.status == "finite"
    for _, th in out.samples():
        assert th[0] == th[1] and th[2] == th[3]


def test_train_record_bookkeeping(canonical, rng):
    out = bl.train(rng.standard_normal(4) * 0.1, canonical,
                   bl.TrainConfig(eta=0.5, epochs=10, record_every=2))
    assert len(out.samples_epochs) == 5
    assert list(out.samples_epochs) == [2, 4, 6, 8, 10]


def test_train_divergence_flagged_and_monotone(canonical, rng):
    # a huge learning rate escapes immediately
    out = bl.train(rng.standard_normal(4) + 1.0, canonical,
                   bl.TrainConfig(eta=1e8, epochs=100, record_every=1))
    assert out.status == STATUS_DIVERGED
    assert out.diverged_at is not None
    assert np.all(out.samples_epochs < out.diverged_at)


def test_train_determinism_bitwise(canonical, rng):
    th0 = rng.standard_normal(4)
    cfg = bl.TrainConfig(eta=2.5, epochs=300, record_every=7)
    a = bl.train(th0, canonical, cfg)
    b = bl.train(th0, canonical, cfg)
    assert np.array_equal(a.final_theta, b.final_theta)
    assert np.array_equal(a.samples_thetas, b.samples_thetas)
    assert a.status == b.status


def test_train_permutation_equivariance_bitwise(canonical, rng):
    cfg = bl.TrainConfig(eta=2.5, epochs=200, record_every=11)
    for _ in range(20):
        th0 = rng.standard_normal(4)
        direct = bl.train(bl.permute(th0), canonical, cfg)
        mapped = bl.train(th0, canonical, cfg)
        assert np.array_equal(direct.final_theta, bl.permute(mapped.final_theta))
        for (_, a), (_, b) in zip(direct.samples(), mapped.samples()):
            assert np.array_equal(a, bl.permute(b))


def test_train_signflip_equivariance_bitwise(canonical, rng):
    cfg = bl.TrainConfig(eta=2.5, epochs=200, record_every=11)
    for _ in range(20):
        th0 = rng.standard_normal(4)
        direct = bl.train(bl.signflip(th0, 1), canonical, cfg)
        mapped = bl.train(th0, canonical, cfg)
        assert np.array_equal(direct.final_theta,
                              bl.signflip(mapped.final_theta, 1))
        for (_, a), (_, b) in zip(direct.samples(), mapped.samples()):
            assert np.array_equal(a, bl.signflip(b, 1))


def test_attractor_trace_zero_start(canonical):
    pts = bl.attractor_trace(np.zeros(4), canonical,
                             bl.TrainConfig(eta=1.0, epochs=100),
                             discard_tail=10)
    assert pts.shape[1] == 2
    assert np.all(pts == 0.0)


def test_attractor_trace_requires_plane(canonical):
    with pytest.raises(ValueError, match="equal-neuron"):
        bl.attractor_trace(np.array([0.1, 0.2, 0.0, 0.0]), canonical,
                           bl.TrainConfig(eta=1.0, epochs=10))


def test_attractor_trace_transverse_projection_zero(canonical, rng):
    from basinlab.dynamics import project_transverse_coords

    th0 = p_plus_point(rng)
    cfg = bl.TrainConfig(eta=2.5, epochs=400, record_every=1)
    out = bl.train(th0, canonical, cfg)
    c3, c4 = project_transverse_coords(out.samples_thetas)
    assert np.all(c3 == 0.0) and np.all(c4 == 0.0)


def test_attractor_trace_regression(canonical, theta0_plane, datadir):
    pts = bl.attractor_trace(theta0_plane, canonical,
                             bl.TrainConfig(eta=2.5, epochs=800),
                             discard_tail=400)
    ref = np.loadtxt(datadir / "trace_eta2.5_800.txt")
    assert pts.shape == ref.shape
    assert np.array_equal(pts, ref)


def test_trajectory_csv_round_trip(canonical, rng, tmp_path):
    out = bl.train(rng.standard_normal(4), canonical,
                   bl.TrainConfig(eta=1.5, epochs=50, record_every=5))
    path = tmp_path / "traj.csv"
    bl.save_trajectory(out, path)
    epochs, thetas = bl.load_trajectory(path)
    assert np.array_equal(epochs, out.samples_epochs)
    assert np.array_equal(thetas, out.samples_thetas)

"""Distance metrics, reflections, and destination classification."""

import math

import numpy as np
import pytest

import basinlab as bl
from basinlab.dynamics import TrainOutcome
from basinlab.symmetry import DestinationLabel


def finite_outcome(theta):
    return TrainOutcome(final_theta=np.asarray(theta, dtype=float),
                        status="finite")


def diverged_outcome():
    return TrainOutcome(final_theta=np.full(4, np.inf), status="diverged",
                        diverged_at=7)


def test_dist_metric_plus_plane_point():
    th = np.array([1.0, 1.0, 2.0, 2.0])
    assert bl.dist_metric(th, "+") == 0.0
    assert bl.dist_metric(th, "-") == pytest.approx(20.0)  # ||(2,4)||^2


def test_dist_metric_minus_plane_point():
    assert bl.dist_metric(np.array([1.0, -1.0, 2.0, -2.0]), "-") == 0.0


def test_dist_metric_transverse_basis_vector():
    # w1 - w2 = sqrt(2) * (1, 0): squared norm 2
    assert bl.dist_metric(bl.E3, "+") == pytest.approx(2.0, abs=1e-15)


def test_dist_metric_rejects_nonfinite():
    with pytest.raises(ValueError, match="non-finite"):
        bl.dist_metric(np.array([np.inf, 0, 0, 0]), "+")


def test_euclid_dist_plane_membership():
    assert bl.euclid_dist_to_plane(np.array([0.3, 0.3, -2.0, -2.0]), "+") == 0.0


def test_euclid_dist_unit_transverse(rng):
    for _ in range(10):
        g = rng.uniform(0, 2 * math.pi)
        th = math.cos(g) * bl.E3 + math.sin(g) * bl.E4
        assert bl.euclid_dist_to_plane(th, "+") == pytest.approx(1.0, abs=1e-12)
    assert bl.euclid_dist_to_plane(bl.E3, "+") == pytest.approx(1.0, abs=1e-15)


def test_metric_identity(rng):
    # squared metric = 2 * (euclidean distance)^2
    for _ in range(50):
        th = rng.standard_normal(4) * 2
        for sign in "+-":
            d = bl.dist_metric(th, sign)
            e = bl.euclid_dist_to_plane(th, sign)
            assert d == pytest.approx(2.0 * e * e, rel=1e-12)


def test_permute_involution(rng):
    th = rng.standard_normal(4)
    assert np.array_equal(bl.permute(bl.permute(th)), th)


def test_signflip_maps_between_planes(rng):
    for _ in range(20):
        th = rng.standard_normal(4)
        assert bl.dist_metric(bl.signflip(th, 1), "-") == pytest.approx(
            bl.dist_metric(th, "+"), rel=1e-15)
        assert bl.dist_metric(bl.signflip(th, 2), "-") == pytest.approx(
            bl.dist_metric(th, "+"), rel=1e-15)


def test_classify_origin_is_tie():
    res = bl.classify(finite_outcome(np.zeros(4)))
    assert res.label == DestinationLabel.PLUS_PLANE
    assert res.tie


def test_classify_diverged():
    res = bl.classify(diverged_outcome())
    assert res.label == DestinationLabel.DIVERGENT
    assert not res.tie


def test_classify_plain_cases():
    # near plus plane only (w1 ~ w2, far from -w2)
    th = np.array([2.0, 2.0, 1.5, 1.5])
    assert bl.classify(finite_outcome(th)).label == DestinationLabel.PLUS_PLANE
    # near minus plane only
    th = np.array([2.0, -2.0, 1.5, -1.5])
    assert bl.classify(finite_outcome(th)).label == DestinationLabel.MINUS_PLANE
    # near neither
    th = np.array([4.0, 0.0, 0.0, 0.0])
    assert bl.classify(finite_outcome(th)).label == DestinationLabel.OTHER


def test_classify_threshold_strictness():
    # metric exactly at the threshold is not "near"
    th = np.array([math.sqrt(3.0), 0.0, 0.0, 0.0])
    d_plus = bl.dist_metric(th, "+")
    res = bl.classify(finite_outcome(th), threshold_D=d_plus)
    assert res.label in (DestinationLabel.MINUS_PLANE, DestinationLabel.OTHER)


def test_destination_equivariance_under_signflip(canonical, rng):
    # Flipping one neuron of the start exchanges the two distance metrics of
    # the final point exactly, so non-tie labels swap and ties stay ties
    # (the tie rule resolves to the plus label on both sides).
    cfg = bl.TrainConfig(eta=2.5, epochs=1000)
    swap = {DestinationLabel.PLUS_PLANE: DestinationLabel.MINUS_PLANE,
            DestinationLabel.MINUS_PLANE: DestinationLabel.PLUS_PLANE,
            DestinationLabel.DIVERGENT: DestinationLabel.DIVERGENT,
            DestinationLabel.OTHER: DestinationLabel.OTHER}
    for i in range(12):
        th0 = bl.sample_shell(np.random.default_rng([4, i]))
        base_out = bl.train(th0, canonical, cfg)
        flip_out = bl.train(bl.signflip(th0, 1), canonical, cfg)
        base = bl.classify(base_out)
        flipped = bl.classify(flip_out)
        if not base_out.diverged:
            # exact metric exchange at the final point
            assert bl.dist_metric(flip_out.final_theta, "+") == \
                bl.dist_metric(base_out.final_theta, "-")
            assert bl.dist_metric(flip_out.final_theta, "-") == \
                bl.dist_metric(base_out.final_theta, "+")
        assert flipped.tie == base.tie
        if base.tie:
            assert flipped.label == base.label == DestinationLabel.PLUS_PLANE
        else:
            assert flipped.label == swap[base.label]


def test_destination_invariance_under_permute(canonical, rng):
    cfg = bl.TrainConfig(eta=2.5, epochs=1000)
    for i in range(12):
        th0 = bl.sample_shell(np.random.default_rng([5, i]))
        base = bl.classify(bl.train(th0, canonical, cfg)).label
        perm = bl.classify(bl.train(bl.permute(th0), canonical, cfg)).label
        assert perm == base


def test_vanished_neurons():
    assert bl.vanished_neurons(np.zeros(4)) == (1, 2)
    assert bl.vanished_neurons(np.array([0.0, 1.0, 0.0, 1.0])) == (1,)
    assert bl.vanished_neurons(np.array([0.5, 1.0, 0.5, 1.0])) == ()

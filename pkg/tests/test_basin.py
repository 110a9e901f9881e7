"""Plane construction, grid sweeps, reflection shortcut, file round trips."""

import math

import numpy as np
import pytest

import basinlab as bl
from basinlab.basin import grid_axis
from basinlab.symmetry import DestinationLabel


def small_plane(seed=3, n=17, extent=2.0):
    return bl.make_plane(seed, extents=(-extent, extent, -extent, extent),
                         resolution=(n, n))


def test_make_plane_orthonormal_invariants():
    for seed in range(6):
        p = bl.make_plane(seed)
        e_par = p.e_par_array()
        e_perp = p.e_perp_array()
        assert abs(np.linalg.norm(e_par) - 1.0) < 1e-12
        assert abs(np.linalg.norm(e_perp) - 1.0) < 1e-12
        # orthogonality is exact by the component layout
        assert float(e_par @ e_perp) == 0.0
        # subspace membership: e_par has equal neuron pairs, e_perp opposite
        assert e_par[0] == e_par[1] and e_par[2] == e_par[3]
        assert e_perp[0] == -e_perp[1] and e_perp[2] == -e_perp[3]


def test_make_plane_deterministic():
    assert bl.make_plane(42) == bl.make_plane(42)


def test_make_plane_exact_transverse_orthogonality():
    p = bl.make_plane(7)
    e_par = p.e_par_array()
    for vec in (bl.E3, bl.E4):
        assert float(e_par @ vec) == 0.0


def test_grid_axis_symmetric_bitwise():
    vals = grid_axis(-1.7, 1.7, 33)
    assert vals[16] == 0.0
    for i in range(33):
        assert vals[i] == -vals[32 - i]


def test_magnify_identity_and_composition():
    p = small_plane()
    same = bl.magnify(p, (0.0, 0.0), 1.0)
    assert same.extents == p.extents
    a = bl.magnify(bl.magnify(p, (0.25, -0.5), 2.0), (0.25, -0.5), 4.0)
    b = bl.magnify(p, (0.25, -0.5), 8.0)
    assert a.extents == pytest.approx(b.extents, rel=1e-15)
    with pytest.raises(ValueError):
        bl.magnify(p, (0, 0), 0.5)


def test_magnify_shrinks_about_center():
    p = small_plane(extent=2.0)
    z = bl.magnify(p, (0.5, 0.5), 10.0)
    u_min, u_max, v_min, v_max = z.extents
    assert u_max - u_min == pytest.approx(0.4)
    assert (u_min + u_max) / 2 == pytest.approx(0.5)


def test_sweep_all_divergent_at_huge_eta(canonical):
    plane = small_plane(n=5)
    grid = bl.sweep(plane, canonical, bl.TrainConfig(eta=1e8, epochs=20))
    assert np.all(grid.labels == int(DestinationLabel.DIVERGENT))


def test_sweep_center_row_never_minus(canonical):
    # v = 0 starts lie in the equal-neuron plane
    plane = small_plane(seed=5, n=9)
    grid = bl.sweep(plane, canonical, bl.TrainConfig(eta=2.5, epochs=300))
    center = grid.labels[9 // 2, :]
    assert int(DestinationLabel.MINUS_PLANE) not in center


def test_sweep_quadrant_shortcut_matches_full(canonical):
    plane = small_plane(seed=11, n=17)
    cfg = bl.TrainConfig(eta=2.5, epochs=400)
    full = bl.sweep(plane, canonical, cfg, quadrant_shortcut=False)
    fast = bl.sweep(plane, canonical, cfg, quadrant_shortcut=True)
    assert np.array_equal(full.labels, fast.labels)


def test_sweep_reflection_symmetry_direct(canonical):
    # labels are invariant under u and v reflection, both sides computed
    plane = small_plane(seed=13, n=11)
    cfg = bl.TrainConfig(eta=2.5, epochs=400)
    grid = bl.sweep(plane, canonical, cfg).labels
    assert np.array_equal(grid, grid[:, ::-1])
    assert np.array_equal(grid, grid[::-1, :])


def test_sweep_shortcut_preconditions(canonical):
    cfg = bl.TrainConfig(eta=2.5, epochs=10)
    even = bl.make_plane(1, resolution=(8, 9))
    with pytest.raises(ValueError, match="odd resolution"):
        bl.sweep(even, canonical, cfg, quadrant_shortcut=True)
    shifted = bl.make_plane(1, extents=(-1.0, 2.0, -1.0, 1.0),
                            resolution=(9, 9))
    with pytest.raises(ValueError, match="symmetric extents"):
        bl.sweep(shifted, canonical, cfg, quadrant_shortcut=True)
    from dataclasses import replace
    off = replace(bl.make_plane(1, resolution=(9, 9)),
                  origin=(0.1, 0.0, 0.0, 0.0))
    with pytest.raises(ValueError, match="zero origin"):
        bl.sweep(off, canonical, cfg, quadrant_shortcut=True)


def test_sweep_worker_invariance(canonical):
    plane = small_plane(seed=2, n=9)
    cfg = bl.TrainConfig(eta=2.5, epochs=200)
    a = bl.sweep(plane, canonical, cfg, workers=1)
    b = bl.sweep(plane, canonical, cfg, workers=2)
    assert np.array_equal(a.labels, b.labels)


def test_sweep_determinism(canonical):
    plane = small_plane(seed=4, n=7)
    cfg = bl.TrainConfig(eta=3.0, epochs=150)
    a = bl.sweep(plane, canonical, cfg)
    b = bl.sweep(plane, canonical, cfg)
    assert np.array_equal(a.labels, b.labels)


def test_regime_sweep_duplicate_etas_identical(canonical):
    plane = small_plane(seed=6, n=5)
    cfg = bl.TrainConfig(eta=1.0, epochs=100)
    grids = bl.regime_sweep([0.5, 0.5], plane, canonical, cfg)
    assert np.array_equal(grids[0].labels, grids[1].labels)


def test_regime_sweep_empty_rejected(canonical):
    with pytest.raises(ValueError):
        bl.regime_sweep([], small_plane(), canonical,
                        bl.TrainConfig(eta=1.0, epochs=10))


def test_regime_sweep_eta3_majority_divergent(canonical):
    plane = small_plane(seed=8, n=9)
    cfg = bl.TrainConfig(eta=1.0, epochs=1000)
    (grid,) = bl.regime_sweep([3.0], plane, canonical, cfg)
    frac_div = np.mean(grid.labels == int(DestinationLabel.DIVERGENT))
    assert frac_div > 0.5


def test_regime_sweep_eta01_no_divergence(canonical):
    plane = small_plane(seed=8, n=9)
    cfg = bl.TrainConfig(eta=1.0, epochs=1000)
    (grid,) = bl.regime_sweep([0.1], plane, canonical, cfg)
    assert np.mean(grid.labels == int(DestinationLabel.DIVERGENT)) == 0.0


def test_convergence_map_basics(canonical):
    plane = small_plane(seed=9, n=7)
    cm = bl.convergence_map(plane, canonical, bl.TrainConfig(eta=1.5, epochs=1000))
    div = cm.nearest == int(DestinationLabel.DIVERGENT)
    assert np.all(np.isnan(cm.distance[div]))
    ok = ~div
    assert np.all(cm.distance[ok] >= 0.0)
    labels = set(np.unique(cm.nearest[ok]))
    assert labels <= {int(DestinationLabel.PLUS_PLANE),
                      int(DestinationLabel.MINUS_PLANE)}
    # center row starts on the plus plane and stays there
    mid = cm.nearest[7 // 2, :]
    mid_ok = mid != int(DestinationLabel.DIVERGENT)
    assert np.all(mid[mid_ok] == int(DestinationLabel.PLUS_PLANE))
    assert np.all(cm.distance[7 // 2, :][mid_ok] == 0.0)


def test_convergence_map_regression_counts(canonical, datadir):
    import json

    plane = bl.make_plane(17, extents=(-2, 2, -2, 2), resolution=(16, 16))
    cm = bl.convergence_map(plane, canonical, bl.TrainConfig(eta=1.5, epochs=1000))
    got = {str(int(k)): int(np.sum(cm.nearest == int(k)))
           for k in (DestinationLabel.PLUS_PLANE, DestinationLabel.MINUS_PLANE,
                     DestinationLabel.DIVERGENT)}
    want = json.loads((datadir / "convergence_eta1.5_16x16.json").read_text())
    assert got == want


def test_grid_file_round_trip(canonical, tmp_path):
    plane = small_plane(seed=10, n=7)
    grid = bl.sweep(plane, canonical, bl.TrainConfig(eta=2.5, epochs=100))
    path = tmp_path / "grid.txt"
    bl.save_grid(grid, path)
    again = bl.load_grid(path)
    assert np.array_equal(again.labels, grid.labels)
    assert again.plane == grid.plane
    assert again.eta == grid.eta
    assert again.epochs == grid.epochs
    assert again.threshold_D == grid.threshold_D
    assert again.dataset_sha == grid.dataset_sha


def test_write_image_p3(canonical, tmp_path):
    plane = small_plane(seed=10, n=5)
    grid = bl.sweep(plane, canonical, bl.TrainConfig(eta=2.5, epochs=50))
    path = tmp_path / "grid.ppm"
    bl.write_image(grid, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "P3"
    assert lines[1] == "5 5"
    assert lines[2] == "255"
    assert len(lines) == 3 + 5
    first_row = [int(v) for v in lines[3].split()]
    assert len(first_row) == 5 * 3

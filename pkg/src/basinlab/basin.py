"""Destination maps over 2-D planes of initializations.

A plane is spanned by a random unit vector in the equal-neuron directions
(e_par) and a random unit vector orthogonal to them (e_perp).  Every grid
cell is trained independently and labeled by its destination, so sweeps
distribute trivially over workers and worker count cannot change a single
label.

The u axis of a zero-origin plane lies inside the equal-neuron plane and
the v axis inside the opposite-neuron plane.  Reflecting either coordinate
composes the training map with exact network symmetries that preserve all
destination labels, which is what the quadrant shortcut exploits.
"""

import hashlib
import math
import multiprocessing
from dataclasses import dataclass, replace

import numpy as np

from .dynamics import E1, E2, E3, E4, TrainConfig, train
from .model import Dataset, make_dataset
from .symmetry import DEFAULT_THRESHOLD_D, DestinationLabel, classify, dist_metric

_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class PlaneSpec:
    """Geometry of one initialization plane; all floats stored exactly."""

    origin: tuple
    e_par: tuple
    e_perp: tuple
    extents: tuple                 # (u_min, u_max, v_min, v_max)
    resolution: tuple              # (n_u, n_v)
    seed: int
    angles: tuple = (0.0, 0.0)

    def origin_array(self) -> np.ndarray:
        return np.array(self.origin)

    def e_par_array(self) -> np.ndarray:
        return np.array(self.e_par)

    def e_perp_array(self) -> np.ndarray:
        return np.array(self.e_perp)

    def axis_values(self):
        u_min, u_max, v_min, v_max = self.extents
        n_u, n_v = self.resolution
        return grid_axis(u_min, u_max, n_u), grid_axis(v_min, v_max, n_v)

    def point(self, u: float, v: float) -> np.ndarray:
        return self.origin_array() + u * self.e_par_array() + v * self.e_perp_array()


def grid_axis(lo: float, hi: float, n: int) -> np.ndarray:
    """Grid coordinates, built mirror-symmetrically when lo == -hi and n is odd.

    The symmetric construction makes axis[i] == -axis[n-1-i] bitwise, which
    the quadrant shortcut relies on.
    """
    if n < 2:
        raise ValueError("need at least 2 grid points per axis")
    if lo == -hi and n % 2 == 1:
        half = n // 2
        step = hi / half
        return np.array([k * step for k in range(-half, half + 1)])
    return np.linspace(lo, hi, n)


def make_plane(seed: int, extents=(-2.0, 2.0, -2.0, 2.0),
               resolution=(257, 257)) -> PlaneSpec:
    """Random plane through the origin with seeded direction angles.

    e_par = cos(a) E1 + sin(a) E2 and e_perp = cos(b) E3 + sin(b) E4; the
    component layout guarantees exact orthogonality of the two axes and the
    pairwise equalities the reflection rules need.
    """
    n_u, n_v = resolution
    if n_u < 2 or n_v < 2:
        raise ValueError("resolution must be >= 2 per axis")
    rng = np.random.default_rng(seed)
    a = rng.uniform(0.0, 2.0 * math.pi)
    b = rng.uniform(0.0, 2.0 * math.pi)
    ca, sa = math.cos(a), math.sin(a)
    cb, sb = math.cos(b), math.sin(b)
    e_par = np.array([ca, ca, sa, sa]) / _SQRT2
    e_perp = np.array([cb, -cb, sb, -sb]) / _SQRT2
    return PlaneSpec(origin=(0.0, 0.0, 0.0, 0.0),
                     e_par=tuple(float(c) for c in e_par),
                     e_perp=tuple(float(c) for c in e_perp),
                     extents=tuple(float(e) for e in extents),
                     resolution=(int(n_u), int(n_v)),
                     seed=int(seed),
                     angles=(float(a), float(b)))


def magnify(plane: PlaneSpec, center, zoom: float,
            resolution=None) -> PlaneSpec:
    """Zoomed window around a (u, v) center; same axes, shrunk extents."""
    if not zoom >= 1.0:
        raise ValueError("zoom must be >= 1")
    u_c, v_c = center
    u_min, u_max, v_min, v_max = plane.extents
    hu = (u_max - u_min) / (2.0 * zoom)
    hv = (v_max - v_min) / (2.0 * zoom)
    return replace(plane,
                   extents=(u_c - hu, u_c + hu, v_c - hv, v_c + hv),
                   resolution=plane.resolution if resolution is None
                   else tuple(resolution))


@dataclass
class BasinGrid:
    """Destination labels over a plane; labels[iv, iu] follows axis order."""

    labels: np.ndarray
    plane: PlaneSpec
    eta: float
    epochs: int
    threshold_D: float
    dataset_sha: str

    def label_counts(self) -> dict:
        return {lab: int(np.sum(self.labels == int(lab)))
                for lab in DestinationLabel}


def _config_sha(cfg: TrainConfig, threshold_D: float) -> str:
    text = (f"eta={cfg.eta!r};epochs={cfg.epochs};thr={cfg.divergence_threshold!r};"
            f"D={threshold_D!r}")
    return hashlib.sha256(text.encode()).hexdigest()


# Worker globals for sweeps; set once per worker by the pool initializer so
# tasks stay small.
_SWEEP_STATE: dict = {}


def _sweep_init(plane: PlaneSpec, pairs, cfg: TrainConfig, threshold_D: float):
    _SWEEP_STATE["plane"] = plane
    _SWEEP_STATE["data"] = make_dataset(pairs)
    _SWEEP_STATE["cfg"] = cfg
    _SWEEP_STATE["threshold_D"] = threshold_D


def _sweep_cell(task):
    iu, iv, u, v = task
    plane = _SWEEP_STATE["plane"]
    theta0 = plane.point(u, v)
    out = train(theta0, _SWEEP_STATE["data"], _SWEEP_STATE["cfg"])
    return iu, iv, int(classify(out, _SWEEP_STATE["threshold_D"]).label)


def _run_cells(tasks, plane, data, cfg, threshold_D, workers):
    if workers <= 1:
        _sweep_init(plane, data.pairs, cfg, threshold_D)
        return [_sweep_cell(t) for t in tasks]
    with multiprocessing.Pool(
            workers, initializer=_sweep_init,
            initargs=(plane, data.pairs, cfg, threshold_D)) as pool:
        return pool.map(_sweep_cell, tasks, chunksize=max(1, len(tasks) // (8 * workers)))


def sweep(plane: PlaneSpec, data: Dataset, cfg: TrainConfig,
          quadrant_shortcut: bool = False,
          threshold_D: float = DEFAULT_THRESHOLD_D,
          workers: int = 1) -> BasinGrid:
    """Train and classify every cell of the plane's grid.

    With quadrant_shortcut only cells with u >= 0 and v >= 0 are trained;
    the other quadrants are filled by reflection, which preserves labels
    exactly (u-reflection composes a neuron swap with a global sign flip,
    v-reflection is a neuron swap; both are exact symmetries of the map and
    of the distance metrics).  The shortcut needs a zero origin, symmetric
    extents and odd resolution so the mirrored coordinates exist bitwise.
    """
    us, vs = plane.axis_values()
    n_u, n_v = plane.resolution
    if quadrant_shortcut:
        u_min, u_max, v_min, v_max = plane.extents
        if any(c != 0.0 for c in plane.origin):
            raise ValueError("quadrant shortcut requires a zero origin")
        if n_u % 2 == 0 or n_v % 2 == 0:
            raise ValueError("quadrant shortcut requires odd resolution "
                             "(no center row/column)")
        if u_min != -u_max or v_min != -v_max:
            raise ValueError("quadrant shortcut requires symmetric extents")

    labels = np.full((n_v, n_u), -1, dtype=np.int16)
    if quadrant_shortcut:
        c_u, c_v = n_u // 2, n_v // 2
        tasks = [(iu, iv, us[iu], vs[iv])
                 for iv in range(c_v, n_v) for iu in range(c_u, n_u)]
    else:
        tasks = [(iu, iv, us[iu], vs[iv])
                 for iv in range(n_v) for iu in range(n_u)]

    for iu, iv, lab in _run_cells(tasks, plane, data, cfg, threshold_D, workers):
        labels[iv, iu] = lab

    if quadrant_shortcut:
        c_u, c_v = n_u // 2, n_v // 2
        for iv in range(c_v, n_v):
            for iu in range(c_u):
                labels[iv, iu] = labels[iv, n_u - 1 - iu]
        for iv in range(c_v):
            labels[iv, :] = labels[n_v - 1 - iv, :]

    return BasinGrid(labels=labels, plane=plane, eta=cfg.eta,
                     epochs=cfg.epochs, threshold_D=threshold_D,
                     dataset_sha=data.sha)


def regime_sweep(etas, plane: PlaneSpec, data: Dataset, cfg: TrainConfig,
                 quadrant_shortcut: bool = False,
                 threshold_D: float = DEFAULT_THRESHOLD_D,
                 workers: int = 1):
    """One grid per learning rate, identical plane and dataset."""
    if len(etas) == 0:
        raise ValueError("need at least one learning rate")
    return [sweep(plane, data, cfg.with_eta(eta), quadrant_shortcut,
                  threshold_D, workers) for eta in etas]


@dataclass
class ConvergenceMap:
    """Per-cell nearest invariant plane and the distance metric value."""

    nearest: np.ndarray            # DestinationLabel ints; DIVERGENT flagged
    distance: np.ndarray           # metric value; NaN where diverged
    plane: PlaneSpec
    eta: float
    dataset_sha: str


def _convergence_cell(task):
    iu, iv, u, v = task
    plane = _SWEEP_STATE["plane"]
    out = train(plane.point(u, v), _SWEEP_STATE["data"], _SWEEP_STATE["cfg"])
    if out.diverged:
        return iu, iv, int(DestinationLabel.DIVERGENT), math.nan
    d_plus = dist_metric(out.final_theta, "+")
    d_minus = dist_metric(out.final_theta, "-")
    if d_plus <= d_minus:
        return iu, iv, int(DestinationLabel.PLUS_PLANE), d_plus
    return iu, iv, int(DestinationLabel.MINUS_PLANE), d_minus


def convergence_map(plane: PlaneSpec, data: Dataset, cfg: TrainConfig,
                    workers: int = 1) -> ConvergenceMap:
    """Map each cell to its nearest invariant plane after training."""
    us, vs = plane.axis_values()
    n_u, n_v = plane.resolution
    tasks = [(iu, iv, us[iu], vs[iv])
             for iv in range(n_v) for iu in range(n_u)]
    nearest = np.full((n_v, n_u), -1, dtype=np.int16)
    distance = np.full((n_v, n_u), math.nan)
    if workers <= 1:
        _sweep_init(plane, data.pairs, cfg, DEFAULT_THRESHOLD_D)
        results = [_convergence_cell(t) for t in tasks]
    else:
        with multiprocessing.Pool(
                workers, initializer=_sweep_init,
                initargs=(plane, data.pairs, cfg, DEFAULT_THRESHOLD_D)) as pool:
            results = pool.map(_convergence_cell, tasks,
                               chunksize=max(1, len(tasks) // (8 * workers)))
    for iu, iv, lab, dist in results:
        nearest[iv, iu] = lab
        distance[iv, iu] = dist
    return ConvergenceMap(nearest=nearest, distance=distance, plane=plane,
                          eta=cfg.eta, dataset_sha=data.sha)


# ---------------------------------------------------------------------------
# Grid file format: '#'-prefixed header with hex-float metadata, then one
# row of space-separated integer labels per line (row iv = 0 first).

def _fmt_floats(values) -> str:
    return ",".join(float.hex(float(v)) for v in values)


def _parse_floats(text) -> tuple:
    return tuple(float.fromhex(tok) for tok in text.split(","))


def save_grid(grid: BasinGrid, path) -> None:
    p = grid.plane
    with open(path, "w") as fh:
        fh.write("# basinlab destination grid\n")
        fh.write("# labels: 0=plus_plane 1=minus_plane 2=divergent 3=other\n")
        fh.write(f"# plane: origin={_fmt_floats(p.origin)}, "
                 f"e_par={_fmt_floats(p.e_par)}, "
                 f"e_perp={_fmt_floats(p.e_perp)}, "
                 f"extents={_fmt_floats(p.extents)}, "
                 f"resolution={p.resolution[0]}x{p.resolution[1]}, "
                 f"seed={p.seed}, "
                 f"angles={_fmt_floats(p.angles)}\n")
        fh.write(f"# train: eta={float.hex(float(grid.eta))}, "
                 f"epochs={grid.epochs}, "
                 f"threshold_D={float.hex(float(grid.threshold_D))}, "
                 f"dataset_sha={grid.dataset_sha}\n")
        for row in grid.labels:
            fh.write(" ".join(str(int(v)) for v in row) + "\n")


def load_grid(path) -> BasinGrid:
    meta = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("plane:") or body.startswith("train:"):
                    for item in body.split(":", 1)[1].split(", "):
                        key, val = item.split("=", 1)
                        meta[key.strip()] = val.strip()
                continue
            rows.append([int(tok) for tok in line.split()])
    n_u, n_v = (int(t) for t in meta["resolution"].split("x"))
    plane = PlaneSpec(origin=_parse_floats(meta["origin"]),
                      e_par=_parse_floats(meta["e_par"]),
                      e_perp=_parse_floats(meta["e_perp"]),
                      extents=_parse_floats(meta["extents"]),
                      resolution=(n_u, n_v),
                      seed=int(meta["seed"]),
                      angles=_parse_floats(meta["angles"]))
    labels = np.array(rows, dtype=np.int16)
    if labels.shape != (n_v, n_u):
        raise ValueError("label block does not match stated resolution")
    return BasinGrid(labels=labels, plane=plane,
                     eta=float.fromhex(meta["eta"]),
                     epochs=int(meta["epochs"]),
                     threshold_D=float.fromhex(meta["threshold_D"]),
                     dataset_sha=meta["dataset_sha"])


PALETTE = {
    int(DestinationLabel.PLUS_PLANE): (31, 119, 180),    # blue
    int(DestinationLabel.MINUS_PLANE): (255, 127, 14),   # orange
    int(DestinationLabel.DIVERGENT): (255, 255, 255),    # white
    int(DestinationLabel.OTHER): (0, 0, 0),              # black
}


def write_image(grid: BasinGrid, path, palette=None) -> None:
    """Plain-text P3 pixmap; top image row is the largest v row."""
    palette = PALETTE if palette is None else palette
    n_v, n_u = grid.labels.shape
    with open(path, "w") as fh:
        fh.write("P3\n")
        fh.write(f"{n_u} {n_v}\n255\n")
        for iv in range(n_v - 1, -1, -1):
            fh.write(" ".join(
                f"{r} {g} {b}"
                for r, g, b in (palette[int(v)] for v in grid.labels[iv])) + "\n")

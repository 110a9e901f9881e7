"""Uncertainty-fraction estimation and the power-law exponent fit.

f(eps) is the probability that two trainings whose initializations differ
by at most eps reach different destinations.  Near-flat f over many decades
(exponent near zero) is the signature of a riddled basin: more precision in
the initialization buys almost no outcome predictability.

Pairs are independent units of work keyed by (seed, pair index), so the
curve is a pure function of its configuration and worker scheduling cannot
change any value.
"""

import math
import multiprocessing
import warnings
from dataclasses import dataclass

import numpy as np

from .dynamics import E1, E2, E3, E4, TrainConfig, train
from .model import Dataset, make_dataset
from .seeds import rng_for
from .stats import bootstrap_fraction, wls
from .symmetry import DEFAULT_THRESHOLD_D, classify

MODE_TORUS_SHELL = "torus_shell"
MODE_FIXED_CUBE = "fixed_reference_cube"
MODE_BIT_FLIP = "bit_flip"


def _as_rng(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def sample_shell(seed_or_rng) -> np.ndarray:
    """Point at unit Euclidean distance from both invariant planes.

    Coefficients on (E1, E2) and (E3, E4) are independent uniform points on
    unit circles, so the longitudinal and transverse parts each have norm 1.
    """
    rng = _as_rng(seed_or_rng)
    a = rng.uniform(0.0, 2.0 * math.pi)
    b = rng.uniform(0.0, 2.0 * math.pi)
    return (math.cos(a) * E1 + math.sin(a) * E2
            + math.cos(b) * E3 + math.sin(b) * E4)


def perturb(theta, eps: float, seed_or_rng) -> np.ndarray:
    """Shift every coordinate by an independent draw from (-eps, eps)."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    rng = _as_rng(seed_or_rng)
    delta = rng.uniform(-eps, eps, size=4)
    # uniform() is half-open; redraw the measure-zero boundary hits so the
    # deviation is strictly below eps.
    bad = np.abs(delta) >= eps
    while bad.any():
        delta[bad] = rng.uniform(-eps, eps, size=int(bad.sum()))
        bad = np.abs(delta) >= eps
    return np.asarray(theta, dtype=float) + delta


@dataclass(frozen=True)
class UncertaintyPoint:
    epsilon: float
    f: float
    stderr: float
    n_pairs: int


@dataclass
class UncertaintyCurve:
    points: list
    mode: str
    seed: int
    dataset_sha: str

    def epsilons(self) -> np.ndarray:
        return np.array([p.epsilon for p in self.points])

    def fractions(self) -> np.ndarray:
        return np.array([p.f for p in self.points])


_UNC_STATE: dict = {}


def _unc_init(pairs, cfg, threshold_D, seed, eps, mode, theta_ref):
    _UNC_STATE.update(data=make_dataset(pairs), cfg=cfg,
                      threshold_D=threshold_D, seed=seed, eps=eps,
                      mode=mode, theta_ref=theta_ref)


def _label_of(theta0):
    out = train(theta0, _UNC_STATE["data"], _UNC_STATE["cfg"])
    return int(classify(out, _UNC_STATE["threshold_D"]).label)


def _torus_pair(i):
    rng = rng_for(_UNC_STATE["seed"], "pair", i)
    base = sample_shell(rng)
    partner = perturb(base, _UNC_STATE["eps"], rng)
    return _label_of(base) != _label_of(partner)


def _cube_draw(i):
    rng = rng_for(_UNC_STATE["seed"], "draw", i)
    eps = _UNC_STATE["eps"]
    theta = perturb(_UNC_STATE["theta_ref"], eps / 2.0, rng)
    return _label_of(theta)


def _map_indices(fn, n, workers, init_args):
    if workers <= 1:
        _unc_init(*init_args)
        return [fn(i) for i in range(n)]
    with multiprocessing.Pool(workers, initializer=_unc_init,
                              initargs=init_args) as pool:
        return pool.map(fn, range(n), chunksize=max(1, n // (8 * workers)))


def uncertain_fraction(eps: float, n_pairs: int, data: Dataset,
                       cfg: TrainConfig, mode: str = MODE_TORUS_SHELL,
                       seed: int = 0, theta_ref=None,
                       threshold_D: float = DEFAULT_THRESHOLD_D,
                       workers: int = 1,
                       n_boot: int = 500) -> UncertaintyPoint:
    """Fraction of eps-separated initialization pairs with differing outcomes.

    torus_shell mode draws base points at unit distance from both invariant
    planes and perturbs each coordinate by U(-eps, eps); the standard error
    is the binomial formula.  fixed_reference_cube mode draws n_pairs
    independent points in an eps-cube around theta_ref, pairs them at
    random, and bootstraps the standard error.
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    if mode == MODE_TORUS_SHELL:
        init_args = (data.pairs, cfg, threshold_D, seed, eps, mode, None)
        flags = _map_indices(_torus_pair, n_pairs, workers, init_args)
        f = sum(flags) / n_pairs
        stderr = math.sqrt(f * (1.0 - f) / n_pairs)
        return UncertaintyPoint(eps, f, stderr, n_pairs)
    if mode == MODE_FIXED_CUBE:
        if theta_ref is None:
            raise ValueError("fixed_reference_cube mode needs theta_ref")
        init_args = (data.pairs, cfg, threshold_D, seed, eps, mode,
                     np.asarray(theta_ref, dtype=float))
        labels = _map_indices(_cube_draw, n_pairs, workers, init_args)
        f, stderr = bootstrap_fraction(labels, n_boot,
                                       seed=_bootstrap_seed(seed, eps))
        return UncertaintyPoint(eps, f, stderr, n_pairs)
    raise ValueError(f"unknown sampling mode {mode!r}")


def _bootstrap_seed(seed: int, eps: float) -> int:
    return int(rng_for(seed, "bootstrap", float.hex(eps)).integers(2**63))


def log_spaced_eps(eps_min: float, eps_max: float,
                   points_per_decade: float = 2.0) -> np.ndarray:
    """Logarithmically spaced eps grid, descending from eps_max."""
    if not (0 < eps_min < eps_max):
        raise ValueError("need 0 < eps_min < eps_max")
    decades = math.log10(eps_max / eps_min)
    n = max(2, int(round(decades * points_per_decade)) + 1)
    return np.geomspace(eps_max, eps_min, n)


def uncertainty_curve(eps_values, n_pairs: int, data: Dataset,
                      cfg: TrainConfig, mode: str = MODE_TORUS_SHELL,
                      seed: int = 0, theta_ref=None,
                      threshold_D: float = DEFAULT_THRESHOLD_D,
                      workers: int = 1) -> UncertaintyCurve:
    """f(eps) over a grid of eps values, one independent batch per value."""
    points = []
    for k, eps in enumerate(eps_values):
        pt = uncertain_fraction(float(eps), n_pairs, data, cfg, mode=mode,
                                seed=int(rng_for(seed, "eps", k).integers(2**63)),
                                theta_ref=theta_ref, threshold_D=threshold_D,
                                workers=workers)
        points.append(pt)
    return UncertaintyCurve(points=points, mode=mode, seed=seed,
                            dataset_sha=data.sha)


def save_curve(curve: UncertaintyCurve, path) -> None:
    with open(path, "w") as fh:
        fh.write("epsilon,f,stderr,n_pairs\n")
        for p in curve.points:
            fh.write(f"{p.epsilon!r},{p.f!r},{p.stderr!r},{p.n_pairs}\n")


def load_curve(path, mode: str = "", seed: int = 0,
               dataset_sha: str = "") -> UncertaintyCurve:
    points = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "epsilon,f,stderr,n_pairs":
            raise ValueError("missing curve header")
        for line in fh:
            eps_s, f_s, se_s, n_s = line.strip().split(",")
            points.append(UncertaintyPoint(float(eps_s), float(f_s),
                                           float(se_s), int(n_s)))
    return UncertaintyCurve(points=points, mode=mode, seed=seed,
                            dataset_sha=dataset_sha)


@dataclass(frozen=True)
class PowerLawFit:
    phi: float
    phi_stderr: float
    intercept: float
    fit_range: tuple
    n_used: int


def fit_uncertainty_exponent(curve: UncertaintyCurve,
                             fit_range=None) -> PowerLawFit:
    """Weighted log-log fit of f(eps) ~ eps^phi.

    Weights are inverse delta-method variances of ln f, floored at the
    half-count level so exact-zero standard errors cannot dominate.  Points
    with f = 0 are excluded with a warning; if nothing is left the basin
    boundary was never sampled.
    """
    pts = curve.points
    if fit_range is not None:
        lo, hi = fit_range
        pts = [p for p in pts if lo <= p.epsilon <= hi]
    kept = [p for p in pts if p.f > 0.0]
    dropped = len(pts) - len(kept)
    if dropped:
        warnings.warn(f"excluding {dropped} f=0 point(s) from the power-law fit",
                      stacklevel=2)
    if not kept:
        raise ValueError("no boundary sampled: all f values are zero")
    if len(kept) < 3:
        raise ValueError("need at least 3 points with f > 0")
    x = np.array([math.log(p.epsilon) for p in kept])
    y = np.array([math.log(p.f) for p in kept])
    var = np.array([max((p.stderr / p.f) ** 2,
                        (0.5 / (p.n_pairs * p.f)) ** 2) for p in kept])
    res = wls(x, y, 1.0 / var)
    eps_vals = [p.epsilon for p in kept]
    return PowerLawFit(phi=res.slope, phi_stderr=res.slope_stderr,
                       intercept=res.intercept,
                       fit_range=(min(eps_vals), max(eps_vals)),
                       n_used=len(kept))


# ---------------------------------------------------------------------------
# Single-bit perturbation ensembles.

def flip_lsb(values: np.ndarray, flat_index: int) -> np.ndarray:
    """Copy of the array with the mantissa LSB of one entry flipped."""
    out = np.array(values, dtype=np.float64, copy=True)
    bits = out.reshape(-1).view(np.int64)
    bits[flat_index] ^= 1
    return out


@dataclass
class BitflipReport:
    p: float                       # modal destination share
    f_pred: float                  # 2 p (1 - p)
    f_emp: float                   # sampled pairwise disagreement
    n_members: int
    n_pairs: int
    destination_counts: dict

    @property
    def binomial_stderr(self) -> float:
        return math.sqrt(max(self.f_pred * (1.0 - self.f_pred), 0.0)
                         / self.n_pairs)


def _minimal_member_label(args):
    theta_flat, pairs, cfg, threshold_D = args
    out = train(np.asarray(theta_flat), make_dataset(pairs), cfg)
    return int(classify(out, threshold_D).label)


def bitflip_ensemble(theta_ref, data, cfg, n_members: int = 200,
                     seed: int = 0, n_pairs: int = 4000,
                     threshold_D: float = DEFAULT_THRESHOLD_D,
                     workers: int = 1) -> BitflipReport:
    """Destinations of every least-significant-bit flip of a reference point.

    Each ensemble member flips the mantissa LSB of one parameter.  When the
    parameter count exceeds n_members the flipped indices are sampled
    without replacement.  p is the modal destination share; the analytic
    disagreement prediction 2 p (1 - p) is compared against disagreement
    counted over randomly sampled member pairs (modal vs rest).
    """
    from . import mlp as mlp_mod

    if isinstance(theta_ref, mlp_mod.MlpParams):
        flat = theta_ref.flatten()
        labeler = _MlpLabeler(theta_ref, data, cfg)
    else:
        flat = np.asarray(theta_ref, dtype=float).reshape(-1)
        labeler = _MinimalLabeler(data, cfg, threshold_D)
    d = flat.size
    total = d
    rng = rng_for(seed, "members")
    if n_members >= total:
        indices = np.arange(total)
    else:
        indices = np.sort(rng.choice(total, size=n_members, replace=False))
    if indices.size < 2:
        raise ValueError("need at least 2 ensemble members")

    members = [flip_lsb(flat, int(i)) for i in indices]
    destinations = labeler.label_many(members, workers)

    counts: dict = {}
    for dest in destinations:
        counts[dest] = counts.get(dest, 0) + 1
    modal = max(counts, key=lambda k: (counts[k], str(k)))
    p = counts[modal] / len(destinations)
    f_pred = 2.0 * p * (1.0 - p)

    pair_rng = rng_for(seed, "pairs")
    idx_a = pair_rng.integers(0, len(destinations), n_pairs)
    idx_b = pair_rng.integers(0, len(destinations), n_pairs)
    is_modal = np.array([dest == modal for dest in destinations])
    f_emp = float(np.mean(is_modal[idx_a] != is_modal[idx_b]))

    return BitflipReport(p=p, f_pred=f_pred, f_emp=f_emp,
                         n_members=len(destinations), n_pairs=n_pairs,
                         destination_counts={str(k): v for k, v in counts.items()})


class _MinimalLabeler:
    def __init__(self, data, cfg, threshold_D):
        self.data = data
        self.cfg = cfg
        self.threshold_D = threshold_D

    def label_many(self, members, workers):
        tasks = [(m, self.data.pairs, self.cfg, self.threshold_D)
                 for m in members]
        if workers <= 1:
            return [_minimal_member_label(t) for t in tasks]
        with multiprocessing.Pool(workers) as pool:
            return pool.map(_minimal_member_label, tasks)


class _MlpLabeler:
    def __init__(self, params_ref, data, cfg):
        self.params_ref = params_ref
        self.data = data
        self.cfg = cfg

    def label_many(self, members, workers):
        from . import mlp as mlp_mod

        shapes = self.params_ref.shapes()
        tasks = [(m, shapes, self.data, self.cfg) for m in members]
        if workers <= 1:
            return [mlp_mod._bitflip_member_destination(t) for t in tasks]
        with multiprocessing.Pool(workers) as pool:
            return pool.map(mlp_mod._bitflip_member_destination, tasks)

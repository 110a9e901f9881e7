"""Training dynamics for the minimal model.

Full-batch gradient descent iterated as a discrete-time map, with early
stopping when the parameter norm escapes past a divergence threshold.
Escape to infinity is a legitimate training destination here, not an error.

Two calls with identical inputs produce bitwise-identical outcomes.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .model import DEFAULT_CONFIG, Dataset, ModelConfig, as_theta, grad_scalar

STATUS_FINITE = "finite"
STATUS_DIVERGED = "diverged"

# Orthonormal symmetry-adapted basis of parameter space.  The first two
# vectors span the equal-neuron plane, the last two are orthogonal to it.
_INV_SQRT2 = 1.0 / math.sqrt(2.0)
E1 = np.array([1.0, 1.0, 0.0, 0.0]) * _INV_SQRT2
E2 = np.array([0.0, 0.0, 1.0, 1.0]) * _INV_SQRT2
E3 = np.array([1.0, -1.0, 0.0, 0.0]) * _INV_SQRT2
E4 = np.array([0.0, 0.0, 1.0, -1.0]) * _INV_SQRT2


def basis_matrix() -> np.ndarray:
    """Columns (E1, E2, E3, E4); longitudinal first, transverse last."""
    return np.column_stack([E1, E2, E3, E4])


@dataclass(frozen=True)
class TrainConfig:
    eta: float
    epochs: int
    divergence_threshold: float = 1e6
    record_every: int = 0  # <= 0 records nothing
    momentum: float = 0.0
    weight_decay: float = 0.0
    batch_size: object = "full"
    shuffle_seed: int = 0

    def __post_init__(self):
        if not self.eta >= 0:
            raise ValueError("eta must be non-negative")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.divergence_threshold > 0:
            raise ValueError("divergence_threshold must be positive")

    def with_eta(self, eta: float) -> "TrainConfig":
        return replace(self, eta=eta)


@dataclass
class TrainOutcome:
    final_theta: np.ndarray
    status: str
    diverged_at: int | None = None
    samples_epochs: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    samples_thetas: np.ndarray = field(default_factory=lambda: np.empty((0, 4)))

    @property
    def diverged(self) -> bool:
        return self.status == STATUS_DIVERGED

    def samples(self):
        """Iterate recorded (epoch, theta) pairs."""
        for e, th in zip(self.samples_epochs, self.samples_thetas):
            yield int(e), th


def gd_step(theta, data: Dataset, eta: float,
            cfg: ModelConfig = DEFAULT_CONFIG) -> np.ndarray:
    """One full-batch gradient descent update theta - eta * grad."""
    th0, th1, th2, th3 = as_theta(theta)
    g0, g1, g2, g3 = grad_scalar(th0, th1, th2, th3, data.pairs,
                                 cfg.alpha1, cfg.alpha2)
    return np.array([th0 - eta * g0, th1 - eta * g1,
                     th2 - eta * g2, th3 - eta * g3])


def train(theta0, data: Dataset, cfg: TrainConfig,
          model_cfg: ModelConfig = DEFAULT_CONFIG) -> TrainOutcome:
    """Iterate gd_step for cfg.epochs, stopping early on divergence.

    Divergence means the Euclidean norm exceeds cfg.divergence_threshold or
    any entry goes non-finite; the first offending epoch is reported and no
    further updates are applied.
    """
    th0, th1, th2, th3 = as_theta(theta0)
    pairs = data.pairs
    a1, a2 = model_cfg.alpha1, model_cfg.alpha2
    eta = cfg.eta
    thr_sq = cfg.divergence_threshold * cfg.divergence_threshold

    record = cfg.record_every > 0
    if record:
        n_rec = cfg.epochs // cfg.record_every
        rec_epochs = np.empty(n_rec, dtype=np.int64)
        rec_thetas = np.empty((n_rec, 4))
        k = 0

    status = STATUS_FINITE
    diverged_at = None
    for epoch in range(1, cfg.epochs + 1):
        g0, g1, g2, g3 = grad_scalar(th0, th1, th2, th3, pairs, a1, a2)
        th0 -= eta * g0
        th1 -= eta * g1
        th2 -= eta * g2
        th3 -= eta * g3
        nsq = th0 * th0 + th1 * th1 + th2 * th2 + th3 * th3
        if not nsq <= thr_sq:  # catches inf and NaN
            status = STATUS_DIVERGED
            diverged_at = epoch
            break
        if record and epoch % cfg.record_every == 0:
            rec_epochs[k] = epoch
            rec_thetas[k, 0] = th0
            rec_thetas[k, 1] = th1
            rec_thetas[k, 2] = th2
            rec_thetas[k, 3] = th3
            k += 1

    out = TrainOutcome(final_theta=np.array([th0, th1, th2, th3]),
                       status=status, diverged_at=diverged_at)
    if record:
        out.samples_epochs = rec_epochs[:k]
        out.samples_thetas = rec_thetas[:k]
    return out


def attractor_trace(theta0, data: Dataset, cfg: TrainConfig,
                    discard_tail: int = 6000) -> np.ndarray:
    """Trace of the in-plane dynamics as (E1, E2) coordinates.

    Requires a start with bitwise-equal neurons, runs the full training,
    drops everything after divergence plus the final discard_tail epochs,
    and keeps every second remaining iterate.
    """
    th = as_theta(theta0)
    if not (th[0] == th[1] and th[2] == th[3]):
        raise ValueError("attractor_trace requires a start on the equal-neuron plane")
    out = train(th, data, replace(cfg, record_every=1))
    end_epoch = (out.diverged_at if out.diverged else cfg.epochs) - discard_tail
    keep = out.samples_epochs <= end_epoch
    thetas = out.samples_thetas[keep][::2]
    c1, c2 = project_plane_coords(thetas)
    return np.column_stack([c1, c2])


def project_plane_coords(thetas: np.ndarray):
    """(E1, E2) coordinates via elementwise arithmetic.

    Deliberately avoids matrix products: fused multiply-adds inside BLAS
    would turn the exact cancellations of symmetric inputs into roundoff.
    """
    t = np.atleast_2d(thetas)
    c1 = t[:, 0] * _INV_SQRT2 + t[:, 1] * _INV_SQRT2
    c2 = t[:, 2] * _INV_SQRT2 + t[:, 3] * _INV_SQRT2
    return c1, c2


def project_transverse_coords(thetas: np.ndarray):
    """(E3, E4) coordinates; exact zeros for equal-neuron inputs."""
    t = np.atleast_2d(thetas)
    c3 = t[:, 0] * _INV_SQRT2 - t[:, 1] * _INV_SQRT2
    c4 = t[:, 2] * _INV_SQRT2 - t[:, 3] * _INV_SQRT2
    return c3, c4


def save_trajectory(outcome: TrainOutcome, path) -> None:
    """CSV dump of the recorded samples at full round-trip precision."""
    with open(path, "w") as fh:
        fh.write("epoch,p1,p2,p3,p4\n")
        for e, th in outcome.samples():
            vals = ",".join(repr(float(v)) for v in th)
            fh.write(f"{e},{vals}\n")


def load_trajectory(path):
    """Read a trajectory CSV back into (epochs, thetas) arrays."""
    epochs = []
    thetas = []
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("epoch,"):
            raise ValueError("missing trajectory header")
        for line in fh:
            fields = line.strip().split(",")
            epochs.append(int(fields[0]))
            thetas.append([float(v) for v in fields[1:]])
    return np.array(epochs, dtype=np.int64), np.array(thetas)

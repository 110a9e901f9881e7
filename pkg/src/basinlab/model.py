"""Minimal two-neuron tanh regression model.

The network is f(theta, x) = sum_i a2 * w2_i * tanh(a1 * w1_i * x) with two
hidden neurons, mean-field scaling factors a1 = sqrt(2), a2 = 1/2, and a
four-dimensional parameter vector laid out as

    theta = (w1_1, w1_2, w2_1, w2_2)

i.e. first-layer weights of neurons 1 and 2, then second-layer weights.
Neuron i owns the pair (theta[i-1], theta[i+1]).

All sums over the dataset run in dataset order with plain scalar arithmetic.
This is deliberate: the downstream experiments rely on bitwise-identical
results across repeated runs, and on exact symmetry of the two neurons'
update formulas.
"""

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

ALPHA1 = math.sqrt(2.0)
ALPHA2 = 0.5

N_PARAMS = 4


@dataclass(frozen=True)
class ModelConfig:
    """Mean-field scaling factors of the two layers."""

    alpha1: float = ALPHA1
    alpha2: float = ALPHA2

    def __post_init__(self):
        if not (self.alpha1 > 0 and self.alpha2 > 0):
            raise ValueError("scaling factors must be positive")


DEFAULT_CONFIG = ModelConfig()


@dataclass(frozen=True)
class Dataset:
    """Ordered regression pairs.  Pair order is part of the contract."""

    pairs: tuple
    sha: str = field(default="", compare=False)

    def __post_init__(self):
        if len(self.pairs) == 0:
            raise ValueError("empty dataset")

    def __len__(self):
        return len(self.pairs)

    @property
    def xs(self):
        return np.array([p[0] for p in self.pairs])

    @property
    def ys(self):
        return np.array([p[1] for p in self.pairs])


def _dataset_sha(pairs) -> str:
    h = hashlib.sha256()
    for x, y in pairs:
        h.update(np.float64(x).tobytes())
        h.update(np.float64(y).tobytes())
    return h.hexdigest()


def make_dataset(pairs) -> Dataset:
    pairs = tuple((float(x), float(y)) for x, y in pairs)
    return Dataset(pairs=pairs, sha=_dataset_sha(pairs))


def generate_dataset(seed: int, n: int = 8) -> Dataset:
    """Standard-normal (x, y) pairs from a seeded PCG64 generator."""
    rng = np.random.default_rng(seed)
    xs = rng.standard_normal(n)
    ys = rng.standard_normal(n)
    return make_dataset(zip(xs, ys))


def save_dataset(data: Dataset, path) -> None:
    """Write pairs as C99 hexadecimal float literals, one "x y" per line."""
    with open(path, "w") as fh:
        fh.write("# training pairs: x y (hexadecimal float64)\n")
        for x, y in data.pairs:
            fh.write(f"{float.hex(x)} {float.hex(y)}\n")


def load_dataset(path, expected_n: int | None = None) -> Dataset:
    """Load a hex-float dataset file written by save_dataset."""
    pairs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            if len(fields) != 2:
                raise ValueError(f"{path}:{lineno}: expected two columns")
            try:
                pairs.append((float.fromhex(fields[0]), float.fromhex(fields[1])))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: bad float literal") from exc
    if expected_n is not None and len(pairs) != expected_n:
        raise ValueError(f"expected {expected_n} pairs, found {len(pairs)}")
    return make_dataset(pairs)


def load_canonical_dataset(path=None) -> Dataset:
    """The committed 8-pair dataset used by every regression fixture."""
    if path is None:
        from importlib.resources import files

        path = files("basinlab.data") / "minimal_dataset.txt"
    return load_dataset(path, expected_n=8)


def as_theta(theta) -> np.ndarray:
    arr = np.asarray(theta, dtype=np.float64)
    if arr.shape != (N_PARAMS,):
        raise ValueError(f"parameter vector must have shape ({N_PARAMS},)")
    return arr


def _check_finite(th0, th1, th2, th3):
    if not (math.isfinite(th0) and math.isfinite(th1)
            and math.isfinite(th2) and math.isfinite(th3)):
        raise ValueError("non-finite parameters")


def forward(theta, x: float, cfg: ModelConfig = DEFAULT_CONFIG) -> float:
    """Network output at input x."""
    th0, th1, th2, th3 = as_theta(theta)
    _check_finite(th0, th1, th2, th3)
    a1, a2 = cfg.alpha1, cfg.alpha2
    t1 = math.tanh(a1 * th0 * x)
    t2 = math.tanh(a1 * th1 * x)
    return a2 * (th2 * t1 + th3 * t2)


def loss(theta, data: Dataset, cfg: ModelConfig = DEFAULT_CONFIG) -> float:
    """Mean squared error over the dataset, summed in dataset order."""
    th0, th1, th2, th3 = as_theta(theta)
    _check_finite(th0, th1, th2, th3)
    a1, a2 = cfg.alpha1, cfg.alpha2
    acc = 0.0
    for x, y in data.pairs:
        t1 = math.tanh(a1 * th0 * x)
        t2 = math.tanh(a1 * th1 * x)
        r = a2 * (th2 * t1 + th3 * t2) - y
        acc += r * r
    return acc / len(data.pairs)


def grad_scalar(th0, th1, th2, th3, pairs, a1, a2):
    """Gradient as four floats; hot path shared by the training loop.

    The two neurons' contributions use identical expression shapes, so
    bitwise-equal neuron parameters produce bitwise-equal gradient entries.
    """
    g0 = g1 = g2 = g3 = 0.0
    c = 2.0 / len(pairs)
    for x, y in pairs:
        ax = a1 * x
        t1 = math.tanh(ax * th0)
        t2 = math.tanh(ax * th1)
        r = c * (a2 * (th2 * t1 + th3 * t2) - y)
        g0 += r * (a2 * th2 * (1.0 - t1 * t1) * ax)
        g1 += r * (a2 * th3 * (1.0 - t2 * t2) * ax)
        g2 += r * (a2 * t1)
        g3 += r * (a2 * t2)
    return g0, g1, g2, g3


def grad(theta, data: Dataset, cfg: ModelConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Analytic gradient of the loss."""
    th0, th1, th2, th3 = as_theta(theta)
    _check_finite(th0, th1, th2, th3)
    return np.array(grad_scalar(th0, th1, th2, th3, data.pairs,
                                cfg.alpha1, cfg.alpha2))


def hessian(theta, data: Dataset, cfg: ModelConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Analytic 4x4 Hessian of the loss.

    Built from the upper triangle and mirrored, so the result is symmetric
    bitwise.  Entry formulas for the two neurons mirror each other exactly,
    which makes the longitudinal/transverse block structure exact for
    parameter vectors with bitwise-equal neurons.
    """
    th0, th1, th2, th3 = as_theta(theta)
    _check_finite(th0, th1, th2, th3)
    (h00, h01, h02, h03, h11, h12, h13, h22, h23, h33) = hessian_scalar(
        th0, th1, th2, th3, data.pairs, cfg.alpha1, cfg.alpha2)
    return np.array([[h00, h01, h02, h03],
                     [h01, h11, h12, h13],
                     [h02, h12, h22, h23],
                     [h03, h13, h23, h33]])


def hessian_scalar(th0, th1, th2, th3, pairs, a1, a2):
    """Upper-triangle Hessian entries as floats; hot path for streams."""
    c = 2.0 / len(pairs)
    h00 = h01 = h02 = h03 = h11 = h12 = h13 = h22 = h23 = h33 = 0.0
    for x, y in pairs:
        ax = a1 * x
        t1 = math.tanh(ax * th0)
        t2 = math.tanh(ax * th1)
        s1 = 1.0 - t1 * t1
        s2 = 1.0 - t2 * t2
        r = a2 * (th2 * t1 + th3 * t2) - y
        d0 = a2 * th2 * s1 * ax
        d1 = a2 * th3 * s2 * ax
        d2 = a2 * t1
        d3 = a2 * t2
        # second derivatives of the network output (sparse)
        q00 = -2.0 * a2 * th2 * (ax * ax) * (t1 * s1)
        q11 = -2.0 * a2 * th3 * (ax * ax) * (t2 * s2)
        m02 = a2 * s1 * ax
        m13 = a2 * s2 * ax
        h00 += c * (d0 * d0 + r * q00)
        h01 += c * (d0 * d1)
        h02 += c * (d0 * d2 + r * m02)
        h03 += c * (d0 * d3)
        h11 += c * (d1 * d1 + r * q11)
        h12 += c * (d1 * d2)
        h13 += c * (d1 * d3 + r * m13)
        h22 += c * (d2 * d2)
        h23 += c * (d2 * d3)
        h33 += c * (d3 * d3)
    return h00, h01, h02, h03, h11, h12, h13, h22, h23, h33

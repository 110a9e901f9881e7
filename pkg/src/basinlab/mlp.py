"""Desk-scale multilayer analog: bias-free tanh network, mini-batch SGD.

Trains a small fully-connected classifier with momentum and weight decay on
a noisy two-blob task, and identifies which symmetry-induced subspace the
run collapsed into by the set of hidden neurons whose incoming weights
vanish.

Reflection helpers implement the two network symmetries used throughout:
flipping one hidden neuron's incoming and outgoing weights never changes
the function (odd activation), and flipping everything *except* a chosen
neuron set's weights is a symmetry exactly when the number of weight layers
is even.
"""

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import STATUS_DIVERGED, STATUS_FINITE, TrainConfig

PARITY_THRESHOLD = 1e-2


@dataclass
class MlpParams:
    """Per-layer weight matrices, each (n_out, n_in); no biases anywhere."""

    weights: tuple

    def __post_init__(self):
        self.weights = tuple(np.asarray(w, dtype=np.float64) for w in self.weights)
        for a, b in zip(self.weights[:-1], self.weights[1:]):
            if b.shape[1] != a.shape[0]:
                raise ValueError("inconsistent layer shapes")

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def n_hidden_layers(self) -> int:
        return len(self.weights) - 1

    def widths(self) -> tuple:
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)

    def shapes(self) -> tuple:
        return tuple(w.shape for w in self.weights)

    @property
    def n_params(self) -> int:
        return sum(w.size for w in self.weights)

    def flatten(self) -> np.ndarray:
        return np.concatenate([w.reshape(-1) for w in self.weights])

    @classmethod
    def from_flat(cls, flat, shapes) -> "MlpParams":
        flat = np.asarray(flat, dtype=np.float64)
        out = []
        k = 0
        for shape in shapes:
            n = int(shape[0]) * int(shape[1])
            out.append(flat[k:k + n].reshape(int(shape[0]), int(shape[1])).copy())
            k += n
        if k != flat.size:
            raise ValueError("flat vector does not match shapes")
        return cls(tuple(out))

    def copy(self) -> "MlpParams":
        return MlpParams(tuple(w.copy() for w in self.weights))

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(w)) for w in self.weights)


def init_params(widths, seed: int) -> MlpParams:
    """Gaussian init with std 1/sqrt(fan_in) per layer."""
    rng = np.random.default_rng(seed)
    weights = []
    for n_in, n_out in zip(widths[:-1], widths[1:]):
        weights.append(rng.standard_normal((n_out, n_in)) / math.sqrt(n_in))
    return MlpParams(tuple(weights))


def mlp_forward(params: MlpParams, x) -> np.ndarray:
    """Logits for a batch (n, d_in) or a single input (d_in,)."""
    h = np.asarray(x, dtype=np.float64)
    single = h.ndim == 1
    if single:
        h = h[None, :]
    if h.shape[1] != params.weights[0].shape[1]:
        raise ValueError("input dimension mismatch")
    for W in params.weights[:-1]:
        h = np.tanh(h @ W.T)
    logits = h @ params.weights[-1].T
    return logits[0] if single else logits


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def mlp_loss(params: MlpParams, X, y) -> float:
    """Mean cross-entropy of softmax outputs against integer labels."""
    probs = _softmax(mlp_forward(params, X))
    n = probs.shape[0]
    return float(-np.mean(np.log(probs[np.arange(n), y])))


def mlp_grad(params: MlpParams, X, y):
    """Reverse-accumulation gradient of the mean cross-entropy."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    n = X.shape[0]
    acts = [X]
    h = X
    for W in params.weights[:-1]:
        h = np.tanh(h @ W.T)
        acts.append(h)
    logits = h @ params.weights[-1].T

    delta = _softmax(logits)
    delta[np.arange(n), y] -= 1.0
    delta /= n

    grads = [None] * params.n_layers
    for li in range(params.n_layers - 1, -1, -1):
        grads[li] = delta.T @ acts[li]
        if li > 0:
            back = delta @ params.weights[li]
            delta = back * (1.0 - acts[li] * acts[li])
    return grads


@dataclass
class MlpTrainOutcome:
    final_params: MlpParams
    status: str
    diverged_at: int | None = None
    loss_history: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def diverged(self) -> bool:
        return self.status == STATUS_DIVERGED


def mlp_train(params0: MlpParams, data, cfg: TrainConfig) -> MlpTrainOutcome:
    """Mini-batch SGD with momentum and weight decay.

    Update order per step: v <- momentum * v + g + weight_decay * theta,
    theta <- theta - eta * v.  The batch schedule is a pure function of
    cfg.shuffle_seed; partial trailing batches are dropped so every step
    averages over exactly batch_size samples.
    """
    X, y = data.X, data.y
    n = X.shape[0]
    params = params0.copy()
    vel = [np.zeros_like(w) for w in params.weights]
    full_batch = cfg.batch_size == "full" or cfg.batch_size is None
    if not full_batch:
        b = int(cfg.batch_size)
        if b < 1 or b > n:
            raise ValueError("batch_size out of range")
    rng = np.random.default_rng(cfg.shuffle_seed)
    thr_sq = cfg.divergence_threshold * cfg.divergence_threshold

    record = cfg.record_every > 0
    losses = [] if record else None
    status = STATUS_FINITE
    diverged_at = None
    for epoch in range(1, cfg.epochs + 1):
        if full_batch:
            batches = [(X, y)]
        else:
            order = rng.permutation(n)
            batches = [(X[order[k:k + b]], y[order[k:k + b]])
                       for k in range(0, n - b + 1, b)]
        for bx, by in batches:
            grads = mlp_grad(params, bx, by)
            for w, v, g in zip(params.weights, vel, grads):
                v *= cfg.momentum
                v += g
                if cfg.weight_decay:
                    v += cfg.weight_decay * w
                w -= cfg.eta * v
        nsq = sum(float(np.sum(w * w)) for w in params.weights)
        if not nsq <= thr_sq or not params.all_finite():
            status = STATUS_DIVERGED
            diverged_at = epoch
            break
        if record and epoch % cfg.record_every == 0:
            losses.append(mlp_loss(params, X, y))
    return MlpTrainOutcome(
        final_params=params, status=status, diverged_at=diverged_at,
        loss_history=np.array(losses) if record else np.empty(0))


# ---------------------------------------------------------------------------
# Parity destinations.

@dataclass(frozen=True)
class LayerParity:
    layer: int                     # hidden layer index, 1-based
    vanished: tuple                # neuron indices with small incoming norms
    norms: tuple                   # incoming-weight norm of every neuron


@dataclass(frozen=True)
class ParityDestination:
    per_layer: tuple

    @property
    def signature(self) -> tuple:
        return tuple((lp.layer, lp.vanished) for lp in self.per_layer)

    @property
    def nonempty(self) -> bool:
        return any(lp.vanished for lp in self.per_layer)

    def report_text(self) -> str:
        lines = []
        for lp in self.per_layer:
            inner = ",".join(str(j) for j in lp.vanished)
            lines.append(f"layer:{lp.layer} neurons:{{{inner}}}")
        return "\n".join(lines) + "\n"


def detect_parity(params: MlpParams,
                  threshold: float = PARITY_THRESHOLD) -> ParityDestination:
    """Vanished-neuron sets per hidden layer (strict norm < threshold).

    Identity is based on incoming weights only: a dead neuron's outgoing
    weights are irrelevant to the function and need not shrink.
    """
    per_layer = []
    for l in range(1, params.n_layers):
        W_in = params.weights[l - 1]
        norms = np.sqrt(np.sum(W_in * W_in, axis=1))
        vanished = tuple(int(j) for j in range(W_in.shape[0])
                         if norms[j] < threshold)
        per_layer.append(LayerParity(layer=l, vanished=vanished,
                                     norms=tuple(float(v) for v in norms)))
    return ParityDestination(per_layer=tuple(per_layer))


def destination_of(outcome: MlpTrainOutcome,
                   threshold: float = PARITY_THRESHOLD):
    """Comparable training destination: parity signature or 'diverged'."""
    if outcome.diverged:
        return "diverged"
    return detect_parity(outcome.final_params, threshold).signature


def _bitflip_member_destination(task):
    flat, shapes, data, cfg = task
    params = MlpParams.from_flat(flat, shapes)
    return destination_of(mlp_train(params, data, cfg))


# ---------------------------------------------------------------------------
# Reflections.

def _as_index_set(J, width):
    J = sorted(set(int(j) for j in (J if hasattr(J, "__iter__") else [J])))
    if not J:
        raise ValueError("empty neuron set")
    if J[0] < 0 or J[-1] >= width:
        raise ValueError("neuron index out of range")
    return J


def reflect_neuron(params: MlpParams, layer: int, J) -> MlpParams:
    """Flip incoming and outgoing weights of neurons J in a hidden layer."""
    if not 1 <= layer <= params.n_hidden_layers:
        raise ValueError("layer must index a hidden layer")
    J = _as_index_set(J, params.weights[layer - 1].shape[0])
    out = params.copy()
    out.weights[layer - 1][J, :] *= -1.0
    out.weights[layer][:, J] *= -1.0
    return out


def reflect_complement(params: MlpParams, layer: int, J) -> MlpParams:
    """Flip every weight except those belonging to neurons J in one layer.

    A neuron's weights are its incoming row and outgoing column.  This is a
    network symmetry exactly when the number of weight layers is even.
    """
    if not 1 <= layer <= params.n_hidden_layers:
        raise ValueError("layer must index a hidden layer")
    J = _as_index_set(J, params.weights[layer - 1].shape[0])
    flipped = [-w for w in params.weights]
    flipped[layer - 1][J, :] = params.weights[layer - 1][J, :]
    flipped[layer][:, J] = params.weights[layer][:, J]
    return MlpParams(tuple(flipped))


# ---------------------------------------------------------------------------
# Synthetic task.

@dataclass(frozen=True)
class MlpData:
    X: np.ndarray
    y: np.ndarray
    sha: str = ""

    @property
    def n(self) -> int:
        return self.X.shape[0]


def _data_sha(X, y) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(X, dtype=np.float64).tobytes())
    h.update(np.ascontiguousarray(y, dtype=np.int64).tobytes())
    return h.hexdigest()


def make_mlp_data(X, y) -> MlpData:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    return MlpData(X=X, y=y, sha=_data_sha(X, y))


def make_blobs(n_per_class: int = 100, seed: int = 0,
               centers=((-1.5, 0.0), (1.5, 0.0)), spread: float = 1.0) -> MlpData:
    """Two Gaussian blobs in 2-D with integer class labels."""
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    for label, center in enumerate(centers):
        pts = rng.standard_normal((n_per_class, len(center))) * spread
        xs.append(pts + np.asarray(center))
        ys.append(np.full(n_per_class, label, dtype=np.int64))
    return make_mlp_data(np.vstack(xs), np.concatenate(ys))


def inject_label_noise(data: MlpData, fraction: float, seed: int,
                       n_classes: int | None = None) -> MlpData:
    """Resample round(fraction * N) labels uniformly among wrong classes."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must be in [0, 1]")
    if n_classes is None:
        n_classes = int(data.y.max()) + 1
    rng = np.random.default_rng(seed)
    n_flip = int(round(fraction * data.n))
    idx = rng.choice(data.n, size=n_flip, replace=False)
    y = data.y.copy()
    for i in idx:
        wrong = [c for c in range(n_classes) if c != y[i]]
        y[i] = wrong[int(rng.integers(len(wrong)))]
    return make_mlp_data(data.X, y)


def accuracy(params: MlpParams, data: MlpData) -> float:
    pred = np.argmax(mlp_forward(params, data.X), axis=1)
    return float(np.mean(pred == data.y))


# ---------------------------------------------------------------------------
# Checkpoints: raw float64 buffer plus a JSON sidecar with shapes and hash.

def save_checkpoint(params: MlpParams, path) -> None:
    flat = params.flatten()
    payload = flat.tobytes()
    with open(path, "wb") as fh:
        fh.write(payload)
    sidecar = {
        "shapes": [list(s) for s in params.shapes()],
        "dtype": "float64",
        "sha256": hashlib.sha256(payload).hexdigest(),
    }
    with open(str(path) + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=1)
        fh.write("\n")


def load_checkpoint(path) -> MlpParams:
    with open(str(path) + ".json") as fh:
        sidecar = json.load(fh)
    with open(path, "rb") as fh:
        payload = fh.read()
    digest = hashlib.sha256(payload).hexdigest()
    if digest != sidecar["sha256"]:
        raise ValueError("checkpoint hash mismatch")
    flat = np.frombuffer(payload, dtype=np.float64)
    return MlpParams.from_flat(flat, [tuple(s) for s in sidecar["shapes"]])

"""Lyapunov spectra of the training map via a streamed QR iteration.

The tangent map of one gradient-descent step is J(theta) = I - eta * H(theta)
with H the loss Hessian.  Exponents come from the staircase scheme: at each
step QR-decompose J Q, keep the orthonormal factor, and accumulate logs of
the R diagonal.  Starting the stream in the symmetry-adapted basis keeps the
first two columns longitudinal to the equal-neuron plane and the last two
transverse, so the exponent labels come for free.

Post-divergence steps never enter the statistics: the stream stops as soon
as the trajectory leaves the bounded region.
"""

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import basis_matrix
from .model import (DEFAULT_CONFIG, Dataset, ModelConfig, as_theta, grad_scalar,
                    hessian, hessian_scalar)
from .stats import wls_through_origin

LABELS = ("longitudinal", "longitudinal", "transverse", "transverse")


class LyapunovError(RuntimeError):
    """Raised when a stream cannot produce usable statistics.

    A partial report, when one exists, rides along in .partial.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


def jacobian(theta, eta: float, data: Dataset,
             cfg: ModelConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Tangent map I - eta * H(theta) of one training step."""
    H = hessian(theta, data, cfg)
    J = -eta * H
    J[0, 0] += 1.0
    J[1, 1] += 1.0
    J[2, 2] += 1.0
    J[3, 3] += 1.0
    return J


def qr_positive(a: np.ndarray):
    """QR factorization with the R diagonal forced non-negative."""
    q, r = np.linalg.qr(a)
    neg = np.diag(r) < 0.0
    if neg.any():
        q = q.copy()
        r = r.copy()
        q[:, neg] = -q[:, neg]
        r[neg, :] = -r[neg, :]
    return q, r


def treppen_step(Q: np.ndarray, J: np.ndarray):
    """One staircase update: QR-decompose J Q and return (Q', log|diag R|)."""
    q, r = qr_positive(J @ Q)
    diag = np.diag(r)
    if not np.all(np.isfinite(diag)) or np.any(diag == 0.0):
        raise LyapunovError("degenerate tangent flow")
    return q, np.log(np.abs(diag))


@dataclass
class TreppenStream:
    """Per-step log |R_ii| records for one trajectory."""

    logdiags: np.ndarray           # (usable, 4)
    Q_final: np.ndarray
    diverged_at: int | None
    eta: float
    r_product: np.ndarray | None = None

    @property
    def usable(self) -> int:
        return self.logdiags.shape[0]

    def exponents(self) -> np.ndarray:
        return self.logdiags.mean(axis=0)


_INV_SQRT2 = 1.0 / math.sqrt(2.0)


def _qr2(z00, z01, z10, z11):
    """Hand-rolled 2x2 QR with a non-negative R diagonal.

    Returns (q00, q01, q10, q11, r11, r22, r12).
    """
    r11 = math.hypot(z00, z10)
    if r11 == 0.0 or not math.isfinite(r11):
        raise LyapunovError("degenerate tangent flow")
    c = z00 / r11
    s = z10 / r11
    r12 = c * z01 + s * z11
    r22 = c * z11 - s * z01
    if r22 >= 0.0:
        return c, -s, s, c, r11, r22, r12
    return c, s, s, -c, r11, -r22, r12


def _project_blocks(Q0):
    """Split an orthonormal 4x4 start into longitudinal/transverse blocks.

    Returns (QL, QS) as flat tuples, or None when Q0 mixes the blocks.
    """
    Q0 = np.asarray(Q0, dtype=float)
    L = np.empty((2, 2))
    S = np.empty((2, 2))
    for k in range(2):
        q = Q0[:, k]
        L[0, k] = q[0] * _INV_SQRT2 + q[1] * _INV_SQRT2
        L[1, k] = q[2] * _INV_SQRT2 + q[3] * _INV_SQRT2
        if (q[0] * _INV_SQRT2 - q[1] * _INV_SQRT2) != 0.0 or \
           (q[2] * _INV_SQRT2 - q[3] * _INV_SQRT2) != 0.0:
            return None
    for k in range(2):
        q = Q0[:, 2 + k]
        S[0, k] = q[0] * _INV_SQRT2 - q[1] * _INV_SQRT2
        S[1, k] = q[2] * _INV_SQRT2 - q[3] * _INV_SQRT2
        if (q[0] * _INV_SQRT2 + q[1] * _INV_SQRT2) != 0.0 or \
           (q[2] * _INV_SQRT2 + q[3] * _INV_SQRT2) != 0.0:
            return None
    return L, S


def _assemble_q(QL, QS) -> np.ndarray:
    """Full-space Q from block coordinates (columns L1, L2, S1, S2)."""
    Q = np.zeros((4, 4))
    for k in range(2):
        Q[0, k] = QL[0][k] * _INV_SQRT2
        Q[1, k] = QL[0][k] * _INV_SQRT2
        Q[2, k] = QL[1][k] * _INV_SQRT2
        Q[3, k] = QL[1][k] * _INV_SQRT2
        Q[0, 2 + k] = QS[0][k] * _INV_SQRT2
        Q[1, 2 + k] = -QS[0][k] * _INV_SQRT2
        Q[2, 2 + k] = QS[1][k] * _INV_SQRT2
        Q[3, 2 + k] = -QS[1][k] * _INV_SQRT2
    return Q


def treppen_stream(theta0, eta: float, data: Dataset, T: int,
                   divergence_threshold: float = 1e6,
                   collect_r_product: bool = False,
                   Q0: np.ndarray | None = None,
                   model_cfg: ModelConfig = DEFAULT_CONFIG) -> TreppenStream:
    """Run the QR stream alongside the trajectory for up to T steps.

    The stream ends early if the trajectory diverges; only the bounded part
    contributes.  With collect_r_product the running upper-triangular
    product of R factors is kept (only sensible for short horizons).  Q0
    defaults to the symmetry-adapted basis; any orthonormal start whose
    first two columns are longitudinal preserves the exponent labels.

    For a start with bitwise-equal neurons the tangent map is exactly
    block-diagonal in the symmetry-adapted basis, and the run reduces to
    two independent 2x2 QR streams.  Taking that reduction literally is
    load-bearing: a generic 4x4 matrix product would seed the longitudinal
    columns with rounding-level transverse components, and the positive
    finite-time fluctuations of the transverse exponent can amplify such
    seeds to order one.
    """
    th = as_theta(theta0)
    on_plane = th[0] == th[1] and th[2] == th[3]
    if Q0 is None:
        blocks = (np.eye(2), np.eye(2)) if on_plane else None
        Q_start = basis_matrix()
    else:
        Q_start = np.array(Q0, dtype=float)
        blocks = _project_blocks(Q_start) if on_plane else None
    if blocks is not None:
        return _treppen_stream_blockwise(th, eta, data, T, blocks,
                                         divergence_threshold,
                                         collect_r_product, model_cfg)
    return _treppen_stream_generic(th, eta, data, T, Q_start,
                                   divergence_threshold, collect_r_product,
                                   model_cfg)


def _treppen_stream_generic(th, eta, data, T, Q, divergence_threshold,
                            collect_r_product, model_cfg):
    th0, th1, th2, th3 = th
    pairs = data.pairs
    a1, a2 = model_cfg.alpha1, model_cfg.alpha2
    thr_sq = divergence_threshold * divergence_threshold

    logdiags = np.empty((T, 4))
    r_prod = np.eye(4) if collect_r_product else None
    diverged_at = None
    n = 0
    for j in range(T):
        theta_j = np.array([th0, th1, th2, th3])
        J = jacobian(theta_j, eta, data, model_cfg)
        q, r = qr_positive(J @ Q)
        diag = np.diag(r)
        if not np.all(np.isfinite(diag)) or np.any(diag == 0.0):
            raise LyapunovError("degenerate tangent flow",
                                partial=logdiags[:n].copy())
        logdiags[n] = np.log(np.abs(diag))
        Q = q
        if collect_r_product:
            r_prod = r @ r_prod
        n += 1
        g0, g1, g2, g3 = grad_scalar(th0, th1, th2, th3, pairs, a1, a2)
        th0 -= eta * g0
        th1 -= eta * g1
        th2 -= eta * g2
        th3 -= eta * g3
        nsq = th0 * th0 + th1 * th1 + th2 * th2 + th3 * th3
        if not nsq <= thr_sq:
            diverged_at = j + 1
            break
    return TreppenStream(logdiags=logdiags[:n], Q_final=Q,
                         diverged_at=diverged_at, eta=eta, r_product=r_prod)


def _treppen_stream_blockwise(th, eta, data, T, blocks, divergence_threshold,
                              collect_r_product, model_cfg):
    th0, th1, th2, th3 = th
    pairs = data.pairs
    a1, a2 = model_cfg.alpha1, model_cfg.alpha2
    thr_sq = divergence_threshold * divergence_threshold

    (ql00, ql01), (ql10, ql11) = np.asarray(blocks[0])
    (qs00, qs01), (qs10, qs11) = np.asarray(blocks[1])

    logdiags = np.empty((T, 4))
    if collect_r_product:
        pl00 = pl11 = ps00 = ps11 = 1.0
        pl01 = ps01 = 0.0
    diverged_at = None
    n = 0
    for j in range(T):
        (h00, h01, h02, h03, h11, h12, h13,
         h22, h23, h33) = hessian_scalar(th0, th1, th2, th3, pairs, a1, a2)
        # exact 2x2 blocks of I - eta H in the symmetry-adapted basis
        jl00 = 1.0 - eta * (h00 + h01)
        jl01 = -eta * (h02 + h03)
        jl11 = 1.0 - eta * (h22 + h23)
        js00 = 1.0 - eta * (h00 - h01)
        js01 = -eta * (h02 - h03)
        js11 = 1.0 - eta * (h22 - h23)

        zl00 = jl00 * ql00 + jl01 * ql10
        zl01 = jl00 * ql01 + jl01 * ql11
        zl10 = jl01 * ql00 + jl11 * ql10
        zl11 = jl01 * ql01 + jl11 * ql11
        try:
            (ql00, ql01, ql10, ql11,
             rl11, rl22, rl12) = _qr2(zl00, zl01, zl10, zl11)
        except LyapunovError:
            raise LyapunovError("degenerate tangent flow",
                                partial=logdiags[:n].copy())

        zs00 = js00 * qs00 + js01 * qs10
        zs01 = js00 * qs01 + js01 * qs11
        zs10 = js01 * qs00 + js11 * qs10
        zs11 = js01 * qs01 + js11 * qs11
        try:
            (qs00, qs01, qs10, qs11,
             rs11, rs22, rs12) = _qr2(zs00, zs01, zs10, zs11)
        except LyapunovError:
            raise LyapunovError("degenerate tangent flow",
                                partial=logdiags[:n].copy())

        if rl22 == 0.0 or rs22 == 0.0:
            raise LyapunovError("degenerate tangent flow",
                                partial=logdiags[:n].copy())
        logdiags[n, 0] = math.log(rl11)
        logdiags[n, 1] = math.log(rl22)
        logdiags[n, 2] = math.log(rs11)
        logdiags[n, 3] = math.log(rs22)
        if collect_r_product:
            pl00, pl01, pl11 = rl11 * pl00, rl11 * pl01 + rl12 * pl11, rl22 * pl11
            ps00, ps01, ps11 = rs11 * ps00, rs11 * ps01 + rs12 * ps11, rs22 * ps11
        n += 1
        g0, g1, g2, g3 = grad_scalar(th0, th1, th2, th3, pairs, a1, a2)
        th0 -= eta * g0
        th1 -= eta * g1
        th2 -= eta * g2
        th3 -= eta * g3
        nsq = th0 * th0 + th1 * th1 + th2 * th2 + th3 * th3
        if not nsq <= thr_sq:
            diverged_at = j + 1
            break

    r_prod = None
    if collect_r_product:
        r_prod = np.zeros((4, 4))
        r_prod[0, 0], r_prod[0, 1], r_prod[1, 1] = pl00, pl01, pl11
        r_prod[2, 2], r_prod[2, 3], r_prod[3, 3] = ps00, ps01, ps11
    Q_final = _assemble_q(((ql00, ql01), (ql10, ql11)),
                          ((qs00, qs01), (qs10, qs11)))
    return TreppenStream(logdiags=logdiags[:n], Q_final=Q_final,
                         diverged_at=diverged_at, eta=eta, r_product=r_prod)


def stream_singular_exponents(stream: TreppenStream) -> np.ndarray:
    """Finite-time exponents from the stream's accumulated triangular factor.

    (1/T) ln of the singular values of the R product, sorted descending.
    The triangular accumulation keeps the full singular spectrum of the
    T-step tangent map to machine precision even when an explicitly
    multiplied Jacobian product would have lost the small values.  The
    double-precision SVD used here resolves the smallest value only to
    about (sigma_max/sigma_min) * eps relative; decompose r_product in
    extended precision when that matters.
    """
    if stream.r_product is None:
        raise ValueError("stream was run without collect_r_product")
    svals = np.linalg.svd(stream.r_product, compute_uv=False)
    return np.log(np.sort(svals)[::-1]) / stream.usable


@dataclass
class LyapunovReport:
    lambdas: np.ndarray            # ordered as the Q columns, not sorted
    labels: tuple
    T_total: int
    eta: float
    diverged_at: int | None
    dataset_sha: str
    logdiags: np.ndarray | None = None

    @property
    def longitudinal(self) -> np.ndarray:
        return self.lambdas[:2]

    @property
    def transverse(self) -> np.ndarray:
        return self.lambdas[2:]

    def to_dict(self) -> dict:
        return {
            "lambdas": [float(v) for v in self.lambdas],
            "labels": list(self.labels),
            "T_total": int(self.T_total),
            "eta": float(self.eta),
            "diverged_at": self.diverged_at,
            "dataset_sha": self.dataset_sha,
        }


def spectrum(theta0, eta: float, data: Dataset, T: int,
             min_steps: int = 100,
             require_invariant: bool = True,
             retain_stream: bool = False,
             divergence_threshold: float = 1e6,
             stream: TreppenStream | None = None) -> LyapunovReport:
    """Full Lyapunov spectrum with longitudinal/transverse labels.

    theta0 must lie bitwise on the equal-neuron plane for the labels to be
    meaningful (disable via require_invariant for exploratory use).  Raises
    LyapunovError with a partial report if the trajectory diverges before
    min_steps usable stream steps.
    """
    th = as_theta(theta0)
    if require_invariant and not (th[0] == th[1] and th[2] == th[3]):
        raise ValueError("theta0 is not on the equal-neuron plane")
    if stream is None:
        stream = treppen_stream(th, eta, data, T,
                                divergence_threshold=divergence_threshold)
    report = LyapunovReport(
        lambdas=stream.exponents() if stream.usable else np.full(4, np.nan),
        labels=LABELS,
        T_total=stream.usable,
        eta=eta,
        diverged_at=stream.diverged_at,
        dataset_sha=data.sha,
        logdiags=stream.logdiags if retain_stream else None,
    )
    if stream.usable < min(min_steps, T):
        raise LyapunovError(
            f"trajectory diverged after {stream.usable} steps, "
            f"before the minimum usable length {min(min_steps, T)}",
            partial=report)
    return report


@dataclass
class FtleSeries:
    """Finite-time exponents over non-overlapping windows of one stream."""

    T: int
    exponent_index: int
    values: np.ndarray
    lambda_ref: float              # full-stream exponent of the same column
    stream_length: int

    @property
    def n_windows(self) -> int:
        return self.values.size

    @property
    def mean(self) -> float:
        return float(self.values.mean())

    @property
    def msf(self) -> float:
        """Mean squared fluctuation about the full-stream exponent."""
        d = self.values - self.lambda_ref
        return float(np.mean(d * d))

    @property
    def positive_fraction(self) -> float:
        return float(np.mean(self.values > 0.0))

    def squared_deviations(self) -> np.ndarray:
        d = self.values - self.lambda_ref
        return d * d


def ftle_windows(theta0, eta: float, data: Dataset, T: int,
                 exponent_index: int = 2,
                 stream: TreppenStream | None = None,
                 stream_length: int = 100_000,
                 divergence_threshold: float = 1e6) -> FtleSeries:
    """Window the QR stream into length-T finite-time exponents.

    One continuous stream is windowed without overlap.  Pass a precomputed
    stream to window the same trajectory at several T without recomputing.
    """
    if stream is None:
        stream = treppen_stream(theta0, eta, data, stream_length,
                                divergence_threshold=divergence_threshold)
    return ftle_windows_from_stream(stream, T, exponent_index)


def ftle_windows_from_stream(stream: TreppenStream, T: int,
                             exponent_index: int = 2) -> FtleSeries:
    usable = stream.usable
    if T < 1 or T > usable:
        raise LyapunovError(
            f"window length {T} exceeds usable stream length {usable}")
    col = stream.logdiags[:, exponent_index]
    n_win = usable // T
    values = col[:n_win * T].reshape(n_win, T).mean(axis=1)
    return FtleSeries(T=T, exponent_index=exponent_index, values=values,
                      lambda_ref=float(col.mean()), stream_length=usable)


@dataclass
class DiffusionFit:
    D: float
    stderr: float
    r2_weighted: float
    Ts: np.ndarray
    msf: np.ndarray
    inv_msf: np.ndarray
    weights: np.ndarray


def diffusion_fit(series_by_T, T_range, n_boot: int = 200,
                  seed: int = 0) -> DiffusionFit:
    """Fit the diffusive fluctuation law msf = 2 D / T.

    The inverse mean squared fluctuation is regressed on T through the
    origin (the model is T / (2 D)), weighted by inverse bootstrap variance
    of each point.  Entries of series_by_T sharing the same T are pooled.
    The returned standard error is scaled by the reduced chi-square, so
    data lying exactly on the model report stderr 0.
    """
    lo, hi = T_range
    by_T: dict[int, list] = {}
    for s in series_by_T:
        if lo <= s.T <= hi:
            by_T.setdefault(s.T, []).append(s)
    if len(by_T) < 3:
        raise ValueError("need at least 3 distinct window lengths in range")

    rng = np.random.default_rng(seed)
    Ts, msfs, variances = [], [], []
    for T in sorted(by_T):
        sq = np.concatenate([s.squared_deviations() for s in by_T[T]])
        m = float(sq.mean())
        if not m > 0.0:
            raise ValueError("non-positive fluctuations")
        boots = np.empty(n_boot)
        for b in range(n_boot):
            boots[b] = sq[rng.integers(0, sq.size, sq.size)].mean()
        Ts.append(float(T))
        msfs.append(m)
        variances.append(float(boots.var()))
    Ts = np.array(Ts)
    msfs = np.array(msfs)
    variances = np.array(variances)

    inv_msf = 1.0 / msfs
    var_inv = variances / msfs**4  # delta method for 1/msf
    if np.all(var_inv == 0.0):
        weights = np.ones_like(var_inv)
    else:
        floor = var_inv[var_inv > 0.0].min()
        weights = 1.0 / np.maximum(var_inv, floor)

    fit = wls_through_origin(Ts, inv_msf, weights)
    slope = fit.slope
    if not slope > 0.0:
        raise ValueError("fluctuations do not shrink with T; no diffusive fit")
    D = 1.0 / (2.0 * slope)
    stderr = fit.slope_stderr / (2.0 * slope * slope)

    resid = inv_msf - slope * Ts
    ybar = np.average(inv_msf, weights=weights)
    ss_res = float(np.sum(weights * resid**2))
    ss_tot = float(np.sum(weights * (inv_msf - ybar) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else math.nan
    return DiffusionFit(D=D, stderr=stderr, r2_weighted=r2, Ts=Ts, msf=msfs,
                        inv_msf=inv_msf, weights=weights)


def ftle_table(series_list) -> str:
    """Plain CSV body for window dumps: window_index,T,lambda."""
    lines = ["window_index,T,lambda"]
    for s in series_list:
        for i, v in enumerate(s.values):
            lines.append(f"{i},{s.T},{v!r}")
    return "\n".join(lines) + "\n"

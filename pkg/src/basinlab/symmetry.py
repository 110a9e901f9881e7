"""Invariant-subspace geometry: distances, reflections, destination labels.

The two-neuron model has an equal-neuron plane (w1 = w2), an opposite-neuron
plane (w1 = -w2) and two single-neuron-zero planes.  Training runs are
classified by which plane the final parameters settle near, with escape to
infinity as its own label.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np

from .dynamics import TrainOutcome
from .model import as_theta

DEFAULT_THRESHOLD_D = 3.0


class DestinationLabel(enum.IntEnum):
    """Grid file encoding: 0=plus, 1=minus, 2=divergent, 3=other."""

    PLUS_PLANE = 0
    MINUS_PLANE = 1
    DIVERGENT = 2
    OTHER = 3


@dataclass(frozen=True)
class Classification:
    label: DestinationLabel
    tie: bool = False


def permute(theta) -> np.ndarray:
    """Swap the two neurons."""
    th = as_theta(theta)
    return th[[1, 0, 3, 2]].copy()


def signflip(theta, neuron: int) -> np.ndarray:
    """Negate all parameters of one neuron (1 or 2)."""
    th = as_theta(theta).copy()
    if neuron == 1:
        th[0] = -th[0]
        th[2] = -th[2]
    elif neuron == 2:
        th[1] = -th[1]
        th[3] = -th[3]
    else:
        raise ValueError("neuron must be 1 or 2")
    return th


def dist_metric(theta, sign: str) -> float:
    """Squared-norm distance metric ||w1 -+ w2||^2 used for classification."""
    th0, th1, th2, th3 = as_theta(theta)
    if not (math.isfinite(th0) and math.isfinite(th1)
            and math.isfinite(th2) and math.isfinite(th3)):
        raise ValueError("non-finite parameters")
    if sign == "+":
        d1 = th0 - th1
        d2 = th2 - th3
    elif sign == "-":
        d1 = th0 + th1
        d2 = th2 + th3
    else:
        raise ValueError("sign must be '+' or '-'")
    return d1 * d1 + d2 * d2


def euclid_dist_to_plane(theta, sign: str) -> float:
    """Euclidean distance ||w1 -+ w2|| / sqrt(2) to the chosen plane."""
    return math.sqrt(dist_metric(theta, sign) / 2.0)


def vanished_neurons(theta, tol: float = 1e-2):
    """Neurons whose weight pairs have Euclidean norm below tol."""
    th0, th1, th2, th3 = as_theta(theta)
    out = []
    if math.hypot(th0, th2) < tol:
        out.append(1)
    if math.hypot(th1, th3) < tol:
        out.append(2)
    return tuple(out)


def classify(outcome: TrainOutcome,
             threshold_D: float = DEFAULT_THRESHOLD_D) -> Classification:
    """Label a completed run by its final proximity to the invariant planes.

    Divergent runs keep their own label.  If the final point is within
    threshold_D of both planes (essentially only near the origin) the plus
    plane wins and the tie is flagged.
    """
    if outcome.diverged:
        return Classification(DestinationLabel.DIVERGENT)
    d_plus = dist_metric(outcome.final_theta, "+")
    d_minus = dist_metric(outcome.final_theta, "-")
    near_plus = d_plus < threshold_D
    near_minus = d_minus < threshold_D
    if near_plus and near_minus:
        return Classification(DestinationLabel.PLUS_PLANE, tie=True)
    if near_plus:
        return Classification(DestinationLabel.PLUS_PLANE)
    if near_minus:
        return Classification(DestinationLabel.MINUS_PLANE)
    return Classification(DestinationLabel.OTHER)

"""Committed run fixtures: the equal-neuron-plane start and regime rates."""

import json
from importlib.resources import files

import numpy as np


def _raw() -> dict:
    return json.loads((files("basinlab.data") / "fixtures.json").read_text())


def fixture_theta0() -> np.ndarray:
    """Committed initialization on the equal-neuron plane (bit-exact)."""
    return np.array([float.fromhex(h) for h in _raw()["p_plus_theta0_hex"]])


def eta_riddled() -> float:
    return float(_raw()["eta_riddled"])


def eta_smooth() -> float:
    return float(_raw()["eta_smooth"])

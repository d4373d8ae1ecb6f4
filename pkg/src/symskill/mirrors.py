"""Sign-flip symmetry group acting on states, actions, and skill vectors.

The planar agent has a Klein four-group of exact reflections: identity (1),
left-right (2), front-back (3), and their composition, an in-place 180 degree
turn (4). Because heading is stored as a unit vector (cos, sin), every group
element acts on the 10-dim state and 6-dim action purely by sign flips, so
applying a mirror commutes bitwise with the dynamics.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError

MIRROR_IDS = (1, 2, 3, 4)

STATE_DIM = 10
ACTION_DIM = 6

# State layout: [px, py, cos(th), sin(th), vx, vy, wz, h, roll, pitch]
STATE_LABELS = (
    "px", "py", "head_c", "head_s", "vx", "vy", "wz", "h", "roll", "pitch",
)
# Action layout: [fwd, lat, yaw_rate, h_rate, roll_rate, pitch_rate]
ACTION_LABELS = ("fwd", "lat", "yaw", "h_rate", "roll_rate", "pitch_rate")

_ONES_S = np.ones(STATE_DIM)
_ONES_A = np.ones(ACTION_DIM)

STATE_SIGNS = {
    1: _ONES_S.copy(),
    # left-right: y-axis quantities and roll-like quantities flip
    2: np.array([+1, -1, +1, -1, +1, -1, -1, +1, -1, +1], dtype=np.float64),
    # front-back: forward-axis quantities flip, heading angle maps th -> pi - th
    3: np.array([+1, -1, -1, +1, -1, +1, -1, +1, +1, -1], dtype=np.float64),
    # in-place 180 turn: composition of the two reflections
    4: np.array([+1, +1, -1, -1, -1, -1, +1, +1, -1, -1], dtype=np.float64),
}

ACTION_SIGNS = {
    1: _ONES_A.copy(),
    2: np.array([+1, -1, -1, +1, -1, +1], dtype=np.float64),
    3: np.array([-1, +1, -1, +1, +1, -1], dtype=np.float64),
    4: np.array([-1, -1, +1, +1, -1, -1], dtype=np.float64),
}

# Klein four-group: every element is its own inverse, any two non-identity
# elements compose to the third.
COMPOSITION = {
    (1, 1): 1, (1, 2): 2, (1, 3): 3, (1, 4): 4,
    (2, 1): 2, (2, 2): 1, (2, 3): 4, (2, 4): 3,
    (3, 1): 3, (3, 2): 4, (3, 3): 1, (3, 4): 2,
    (4, 1): 4, (4, 2): 3, (4, 3): 2, (4, 4): 1,
}


def _check_id(k: int) -> int:
    if k not in STATE_SIGNS:
        raise ConfigError(f"unknown mirror id {k!r}; expected one of {MIRROR_IDS}")
    return k


def mirror_state(state: np.ndarray, k: int) -> np.ndarray:
    """Apply mirror k to a state array; last axis must be the state dim."""
    _check_id(k)
    state = np.asarray(state)
    if state.shape[-1] != STATE_DIM:
        raise ConfigError(
            f"state last axis is {state.shape[-1]}, expected {STATE_DIM}"
        )
    return state * STATE_SIGNS[k].astype(state.dtype)


def mirror_action(action: np.ndarray, k: int) -> np.ndarray:
    """Apply mirror k to an action array; last axis must be the action dim."""
    _check_id(k)
    action = np.asarray(action)
    if action.shape[-1] != ACTION_DIM:
        raise ConfigError(
            f"action last axis is {action.shape[-1]}, expected {ACTION_DIM}"
        )
    return action * ACTION_SIGNS[k].astype(action.dtype)


def compose(a: int, b: int) -> int:
    """Group composition: the element equal to applying b, then a."""
    _check_id(a)
    _check_id(b)
    return COMPOSITION[(a, b)]


def inverse(k: int) -> int:
    """Every reflection is an involution, so each element is its own inverse."""
    _check_id(k)
    return k


def state_sign_table() -> dict[int, list[float]]:
    """JSON-friendly copy of the state sign table, keyed by mirror id."""
    return {k: [float(v) for v in STATE_SIGNS[k]] for k in MIRROR_IDS}


def action_sign_table() -> dict[int, list[float]]:
    """JSON-friendly copy of the action sign table, keyed by mirror id."""
    return {k: [float(v) for v in ACTION_SIGNS[k]] for k in MIRROR_IDS}

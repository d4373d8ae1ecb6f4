"""Planar "point-quad" agent with exact four-fold mirror symmetry.

A desk-scale analytic stand-in for a quadruped base: body-frame planar
velocity with drag, first-order lag on the heading rate, rate-integrated
height and tilt with hard clamps. All dynamics terms are built from
sign-symmetric primitives so that mirroring the state and the action
commutes with stepping bitwise, not just within tolerance.

State layout (10): [px, py, cos(th), sin(th), vx, vy, wz, h, roll, pitch]
Action layout (6): [fwd accel, lat accel, yaw rate, h rate, roll rate, pitch rate]
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import ConfigError, NumericError
from .mirrors import ACTION_DIM, STATE_DIM, STATE_LABELS

F32 = np.float32


@dataclass
class EnvConfig:
    dt: float = 0.02
    episode_len: int = 1500
    v_max: float = 2.0
    w_max: float = 2.0
    accel_gain: float = 4.0
    yaw_gain: float = 2.0
    yaw_lag: float = 5.0
    height_rate_gain: float = 0.4
    tilt_rate_gain: float = 1.5
    h_min: float = 0.2
    h_max: float = 0.8
    h_target: float = 0.55
    tilt_bound: float = 0.6
    drag_base: float = 0.5
    drag_slope: float = 0.25
    flip_hold_steps: int = 25
    curriculum_up: float = 10.0
    curriculum_down: float = 5.0

    def validate(self) -> "EnvConfig":
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.episode_len <= 0:
            raise ConfigError("episode_len must be positive")
        if not (self.h_min < self.h_target < self.h_max):
            raise ConfigError("height target must sit inside [h_min, h_max]")
        if self.tilt_bound <= 0 or self.v_max <= 0 or self.w_max <= 0:
            raise ConfigError("bounds must be positive")
        if self.drag_base <= 0 or self.drag_slope < 0:
            raise ConfigError("drag must be positive with nonnegative slope")
        if self.curriculum_down >= self.curriculum_up:
            raise ConfigError("curriculum thresholds must satisfy down < up")
        return self


@dataclass
class StyleRegConfig:
    """Weights for the always-on shaping streams. Penalties only: all <= 0."""

    speed: float = -0.1
    height: float = -10.0
    flat: float = -10.0
    action_norm: float = -0.4
    action_rate: float = -0.2
    tilt_contact: float = -1.0
    flip: float = -50.0

    def validate(self) -> "StyleRegConfig":
        for f in fields(self):
            v = getattr(self, f.name)
            if v > 0:
                raise ConfigError(
                    f"style/reg weight {f.name}={v} is positive; penalties must be <= 0"
                )
        return self


def drag_coefficient(level, cfg: EnvConfig):
    """Difficulty knob: higher level, more drag, harder traversal."""
    lv = np.asarray(level, dtype=F32)
    return F32(cfg.drag_base) * (F32(1.0) + F32(cfg.drag_slope) * lv)


def curriculum_update(distance: float, level: int, cfg: EnvConfig | None = None) -> int:
    """Per-episode level update from traversed distance in meters."""
    cfg = cfg or EnvConfig()
    if distance < 0:
        raise ConfigError("distance must be nonnegative")
    if distance > cfg.curriculum_up:
        return level + 1
    if distance < cfg.curriculum_down:
        return max(level - 1, 0)
    return level


def step_core(states: np.ndarray, actions: np.ndarray, levels: np.ndarray, cfg: EnvConfig) -> np.ndarray:
    """Pure dynamics on a batch: clamped actions in, next states out.

    Every operation here is sign-symmetric (products, sums, symmetric
    clips, norm factors from even terms, sign-split trig), which is what
    makes the mirror equivariance exact rather than approximate.
    """
    s = np.asarray(states, dtype=F32)
    a = np.asarray(actions, dtype=F32)
    if s.shape[-1] != STATE_DIM or a.shape[-1] != ACTION_DIM:
        raise ConfigError("bad state/action width")
    dt = F32(cfg.dt)
    px, py = s[..., 0], s[..., 1]
    hc, hs = s[..., 2], s[..., 3]
    vx, vy = s[..., 4], s[..., 5]
    wz = s[..., 6]
    h, rl, pt = s[..., 7], s[..., 8], s[..., 9]

    drag = drag_coefficient(levels, cfg)
    gain = F32(cfg.accel_gain)
    vx1 = vx + dt * (gain * a[..., 0] - drag * vx)
    vy1 = vy + dt * (gain * a[..., 1] - drag * vy)
    vmax = F32(cfg.v_max)
    n2 = vx1 * vx1 + vy1 * vy1
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(n2 > vmax * vmax, vmax / np.sqrt(n2), F32(1.0))
    vx1 = vx1 * scale
    vy1 = vy1 * scale

    wcmd = F32(cfg.yaw_gain) * a[..., 2]
    wz1 = wz + dt * F32(cfg.yaw_lag) * (wcmd - wz)
    wz1 = np.clip(wz1, -F32(cfg.w_max), F32(cfg.w_max))

    # world-frame translation from body-frame velocity, pre-rotation heading
    dx = dt * (hc * vx1 - hs * vy1)
    dy = dt * (hs * vx1 + hc * vy1)
    px1 = px + dx
    py1 = py + dy

    # heading rotation with sign-split trig so cos/sin evaluate on |phi|
    phi = dt * wz1
    aphi = np.abs(phi)
    c = np.cos(aphi)
    sn = np.sign(phi) * np.sin(aphi)
    hc1 = hc * c - hs * sn
    hs1 = hs * c + hc * sn
    # drift correction only when a rotation happened, so a zero-rate step
    # preserves the heading bitwise; the mask is mirror-invariant
    norm = np.sqrt(hc1 * hc1 + hs1 * hs1)
    rot = aphi > 0
    hc1 = np.where(rot, hc1 / norm, hc1)
    hs1 = np.where(rot, hs1 / norm, hs1)

    h1 = np.clip(h + dt * F32(cfg.height_rate_gain) * a[..., 3], F32(cfg.h_min), F32(cfg.h_max))
    tb = F32(cfg.tilt_bound)
    tg = F32(cfg.tilt_rate_gain)
    rl1 = np.clip(rl + dt * tg * a[..., 4], -tb, tb)
    pt1 = np.clip(pt + dt * tg * a[..., 5], -tb, tb)

    return np.stack([px1, py1, hc1, hs1, vx1, vy1, wz1, h1, rl1, pt1], axis=-1)


def tilt_contact_mask(states: np.ndarray, cfg: EnvConfig) -> np.ndarray:
    """True where any tilt coordinate sits at its clamp bound."""
    tb = F32(cfg.tilt_bound)
    rl = states[..., 8]
    pt = states[..., 9]
    return (np.abs(rl) >= tb) | (np.abs(pt) >= tb)


def style_reward(
    next_states: np.ndarray,
    actions_pre: np.ndarray,
    prev_actions_pre: np.ndarray,
    cfg: EnvConfig,
    weights: StyleRegConfig,
) -> tuple[np.ndarray, np.ndarray]:
    """Raw style reward (sum of even-in-mirror penalties) and contact mask."""
    s = np.asarray(next_states, dtype=F32)
    ap = np.asarray(actions_pre, dtype=F32)
    pp = np.asarray(prev_actions_pre, dtype=F32)
    vx, vy = s[..., 4], s[..., 5]
    h, rl, pt = s[..., 7], s[..., 8], s[..., 9]
    contact = tilt_contact_mask(s, cfg)
    dh = h - F32(cfg.h_target)
    da = ap - pp
    r = (
        F32(weights.speed) * (vx * vx + vy * vy)
        + F32(weights.height) * (dh * dh)
        + F32(weights.flat) * (rl * rl + pt * pt)
        + F32(weights.action_norm) * np.sum(ap * ap, axis=-1)
        + F32(weights.action_rate) * np.sum(da * da, axis=-1)
        + F32(weights.tilt_contact) * contact.astype(F32)
    )
    return r.astype(F32), contact


def state_theta(states: np.ndarray) -> np.ndarray:
    """Heading angle in (−pi, pi] recovered from the stored unit vector."""
    return np.arctan2(states[..., 3], states[..., 2])


@dataclass
class StepResult:
    next_states: np.ndarray
    r_style: np.ndarray
    r_reg: np.ndarray
    terminated: np.ndarray
    truncated: np.ndarray
    info: dict = field(default_factory=dict)


class PointQuadEnv:
    """Vectorized batch of independent point-quad environments.

    Done rows auto-reset after the terminal transition is reported; the
    returned next_states always hold the pre-reset terminal states.
    """

    def __init__(
        self,
        num_envs: int,
        cfg: EnvConfig | None = None,
        style: StyleRegConfig | None = None,
        seed: int = 0,
        difficulty: int = 0,
        auto_reset: bool = True,
        curriculum: bool = True,
    ):
        if num_envs <= 0:
            raise ConfigError("num_envs must be positive")
        self.num_envs = num_envs
        self.cfg = (cfg or EnvConfig()).validate()
        self.style = (style or StyleRegConfig()).validate()
        self.auto_reset = auto_reset
        self.curriculum = curriculum
        self.states = np.zeros((num_envs, STATE_DIM), dtype=F32)
        self.levels = np.zeros(num_envs, dtype=np.int64)
        self.step_count = np.zeros(num_envs, dtype=np.int64)
        self.prev_action = np.zeros((num_envs, ACTION_DIM), dtype=F32)
        self.hold_counter = np.zeros(num_envs, dtype=np.int64)
        self._rng = np.random.Generator(np.random.Philox(seed))
        self.reset_all(seed=seed, difficulty=difficulty)

    def reset_all(self, seed: int | None = None, difficulty: int | None = None) -> np.ndarray:
        if seed is not None:
            self._rng = np.random.Generator(np.random.Philox(seed))
        if difficulty is not None:
            if difficulty < 0:
                raise ConfigError("difficulty must be >= 0")
            self.levels[:] = difficulty
        self._reset_rows(np.ones(self.num_envs, dtype=bool))
        return self.states.copy()

    def _reset_rows(self, mask: np.ndarray) -> None:
        n = int(mask.sum())
        if n == 0:
            return
        th = self._rng.uniform(-np.pi, np.pi, size=n)
        rows = np.zeros((n, STATE_DIM), dtype=F32)
        rows[:, 2] = np.cos(th)
        rows[:, 3] = np.sin(th)
        rows[:, 7] = F32(self.cfg.h_target)
        self.states[mask] = rows
        self.step_count[mask] = 0
        self.prev_action[mask] = 0.0
        self.hold_counter[mask] = 0

    def observe(self) -> np.ndarray:
        return self.states.copy()

    def step(self, actions_pre: np.ndarray) -> StepResult:
        ap = np.asarray(actions_pre, dtype=F32)
        if ap.shape != (self.num_envs, ACTION_DIM):
            raise ConfigError(
                f"actions shape {ap.shape} != {(self.num_envs, ACTION_DIM)}"
            )
        if not np.isfinite(ap).all():
            raise NumericError("non-finite action")
        a = np.clip(ap, F32(-1.0), F32(1.0))
        nxt = step_core(self.states, a, self.levels, self.cfg)
        if not np.isfinite(nxt).all():
            raise NumericError("non-finite state after step")

        r_style, contact = style_reward(nxt, ap, self.prev_action, self.cfg, self.style)

        tb = F32(self.cfg.tilt_bound)
        rl, pt = nxt[:, 8], nxt[:, 9]
        outward = ((np.abs(rl) >= tb) & (rl * a[:, 4] > 0)) | (
            (np.abs(pt) >= tb) & (pt * a[:, 5] > 0)
        )
        self.hold_counter = np.where(outward, self.hold_counter + 1, 0)
        terminated = self.hold_counter > self.cfg.flip_hold_steps
        r_reg = np.where(terminated, F32(self.style.flip), F32(0.0)).astype(F32)

        self.step_count += 1
        truncated = (self.step_count >= self.cfg.episode_len) & ~terminated
        done = terminated | truncated

        out_states = nxt.copy()
        displacement = np.sqrt(nxt[:, 0] ** 2 + nxt[:, 1] ** 2)
        info = {
            "tilt_contact": contact.copy(),
            "flip": terminated.copy(),
            "displacement": displacement,
            "level": self.levels.copy(),
        }

        self.states = nxt
        self.prev_action = ap.copy()
        if self.auto_reset and done.any():
            if self.curriculum:
                for i in np.nonzero(done)[0]:
                    self.levels[i] = curriculum_update(
                        float(displacement[i]), int(self.levels[i]), self.cfg
                    )
            self._reset_rows(done)
        return StepResult(out_states, r_style, r_reg, terminated, truncated, info)

    def snapshot(self) -> dict:
        return {
            "states": self.states.copy(),
            "levels": self.levels.copy(),
            "step_count": self.step_count.copy(),
            "prev_action": self.prev_action.copy(),
            "hold_counter": self.hold_counter.copy(),
            "rng": self._rng.bit_generator.state,
        }

    def restore(self, snap: dict) -> None:
        self.states = np.array(snap["states"], dtype=F32)
        self.levels = np.array(snap["levels"], dtype=np.int64)
        self.step_count = np.array(snap["step_count"], dtype=np.int64)
        self.prev_action = np.array(snap["prev_action"], dtype=F32)
        self.hold_counter = np.array(snap["hold_counter"], dtype=np.int64)
        self._rng.bit_generator.state = snap["rng"]


def sample_goal(rng: np.random.Generator, max_dist: float = 15.0) -> tuple[float, float, float]:
    """Uniform goal in the radius-max_dist disk plus a uniform target heading.

    Rejection sampling from the bounding square; a draw landing outside the
    disk is discarded and redrawn.
    """
    while True:
        x, y = rng.uniform(-max_dist, max_dist, size=2)
        if x * x + y * y <= max_dist * max_dist:
            break
    th = float(rng.uniform(-np.pi, np.pi))
    return float(x), float(y), th


def wrap_angle(a: np.ndarray) -> np.ndarray:
    return np.arctan2(np.sin(a), np.cos(a))


class NavTask:
    """Goal-conditioned wrapper: track a position and heading goal."""

    def __init__(
        self,
        env: PointQuadEnv,
        max_goal_dist: float = 15.0,
        pos_tol: float = 0.5,
        head_tol: float = 0.3,
        w_pos: float = 0.1,
        w_head: float = 0.05,
        success_bonus: float = 10.0,
        seed: int = 0,
    ):
        self.env = env
        self.max_goal_dist = max_goal_dist
        self.pos_tol = pos_tol
        self.head_tol = head_tol
        self.w_pos = w_pos
        self.w_head = w_head
        self.success_bonus = success_bonus
        self._rng = np.random.Generator(np.random.Philox(seed))
        self.goals = np.zeros((env.num_envs, 3), dtype=np.float64)
        self.resample_goals(np.ones(env.num_envs, dtype=bool))

    def resample_goals(self, mask: np.ndarray) -> None:
        for i in np.nonzero(mask)[0]:
            self.goals[i] = sample_goal(self._rng, self.max_goal_dist)

    def errors(self, states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        d = self.goals[:, :2] - states[:, :2].astype(np.float64)
        dist = np.linalg.norm(d, axis=-1)
        herr = np.abs(wrap_angle(state_theta(states) - self.goals[:, 2]))
        return dist, herr

    def step(self, actions_pre: np.ndarray) -> tuple[StepResult, np.ndarray, dict]:
        res = self.env.step(actions_pre)
        dist, herr = self.errors(res.next_states)
        success = (dist < self.pos_tol) & (herr < self.head_tol)
        reward = (
            -self.w_pos * dist - self.w_head * herr + self.success_bonus * success
        )
        flags = {
            "success": success,
            "collision": res.terminated.copy(),
            "timeout": res.truncated.copy(),
            "dist": dist,
            "heading_err": herr,
        }
        done = success | res.terminated | res.truncated
        if done.any():
            self.env._reset_rows(done)
            self.resample_goals(done)
        return res, reward, flags


class TrajectoryWriter:
    """Line-delimited JSON trajectory dump for offline plotting."""

    def __init__(self, path):
        self._fh = open(path, "w")

    def append(self, step: int, state_row: np.ndarray, r_style: float, r_reg: float,
               terminated: bool, truncated: bool, extra: dict | None = None) -> None:
        rec = {"step": int(step)}
        for name, val in zip(STATE_LABELS, np.asarray(state_row, dtype=float)):
            rec[name] = float(val)
        rec["r_style"] = float(r_style)
        rec["r_reg"] = float(r_reg)
        rec["terminated"] = bool(terminated)
        rec["truncated"] = bool(truncated)
        if extra:
            rec.update({k: (float(v) if isinstance(v, (int, float, np.floating)) else v)
                        for k, v in extra.items()})
        self._fh.write(json.dumps(rec) + "\n")

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

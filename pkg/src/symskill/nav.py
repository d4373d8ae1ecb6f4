"""Hierarchical waypoint navigation: a small goal-conditioned PPO policy
acting every H low-level steps through one of three command channels.

direct: the high-level action is a raw env action held for the block.
oracle: the high-level action is a planar velocity + yaw-rate command tracked
        by a scripted proportional controller with steady-state feedforward.
skill:  the high-level action is a (z, lambda) command for a frozen skill
        bundle, projected into the valid command set before use.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .env import EnvConfig, NavTask, PointQuadEnv, state_theta, wrap_angle
from .errors import ConfigError
from .nets import Adam, DenseNet
from .policy import Actor, PolicyBundle
from .ppo import (
    PpoConfig,
    gae_advantages,
    ppo_actor_loss_and_grads,
    ppo_critic_loss_and_grads,
)
from .skills import PriorState, project_skill, project_weights

NAV_MODES = ("direct", "oracle", "skill")
NAV_OBS_DIM = 6
NAV_H = 25


@dataclass
class NavConfig:
    mode: str = "skill"
    seed: int = 0
    iterations: int = 200
    num_envs: int = 16
    h_period: int = NAV_H
    hl_horizon: int = 16
    episode_len: int = 400
    max_goal_dist: float = 6.0
    hidden: tuple = (64, 64)
    lr: float = 1e-3
    difficulty: int = 0
    ppo: PpoConfig = field(default_factory=PpoConfig)

    def validate(self) -> "NavConfig":
        if self.mode not in NAV_MODES:
            raise ConfigError(f"mode must be one of {NAV_MODES}")
        if min(self.iterations, self.num_envs, self.h_period,
               self.hl_horizon, self.episode_len) < 1:
            raise ConfigError("nav sizes must be >= 1")
        self.ppo.validate()
        return self

    @property
    def env_cfg(self) -> EnvConfig:
        return dataclasses.replace(EnvConfig(), episode_len=self.episode_len)


def action_dim_for(mode: str, bundle: PolicyBundle | None) -> int:
    if mode == "direct":
        return 6
    if mode == "oracle":
        return 3
    if bundle is None:
        raise ConfigError("skill mode needs a frozen policy bundle")
    reg = bundle.registry
    return reg.total_dim + reg.num_factors + 1


def highlevel_obs(task: NavTask, states: np.ndarray,
                  env_cfg: EnvConfig) -> np.ndarray:
    """(goal vector in body frame, signed heading error, body velocity),
    each scaled by its natural bound."""
    s = np.asarray(states, dtype=np.float64)
    d = task.goals[:, :2] - s[:, :2]
    hc, hs = s[:, 2], s[:, 3]
    gx = hc * d[:, 0] + hs * d[:, 1]
    gy = -hs * d[:, 0] + hc * d[:, 1]
    herr = wrap_angle(task.goals[:, 2] - state_theta(s))
    obs = np.stack([
        gx / task.max_goal_dist,
        gy / task.max_goal_dist,
        herr / np.pi,
        s[:, 4] / env_cfg.v_max,
        s[:, 5] / env_cfg.v_max,
        s[:, 6] / env_cfg.w_max,
    ], axis=-1)
    return obs.astype(np.float32)


def oracle_actions(states: np.ndarray, v_cmd: np.ndarray, w_cmd: np.ndarray,
                   env_cfg: EnvConfig, kp_v: float = 0.5, kp_h: float = 2.0,
                   kp_t: float = 2.0) -> np.ndarray:
    """Proportional tracking of a body-frame velocity and yaw-rate command,
    with drag feedforward and flat-and-level posture holds."""
    s = np.asarray(states, dtype=np.float64)
    b = s.shape[0]
    a = np.zeros((b, 6))
    ff = env_cfg.drag_base / env_cfg.accel_gain
    a[:, 0] = ff * v_cmd[:, 0] + kp_v * (v_cmd[:, 0] - s[:, 4])
    a[:, 1] = ff * v_cmd[:, 1] + kp_v * (v_cmd[:, 1] - s[:, 5])
    a[:, 2] = w_cmd / env_cfg.yaw_gain
    a[:, 3] = kp_h * (env_cfg.h_target - s[:, 7])
    a[:, 4] = -kp_t * s[:, 8]
    a[:, 5] = -kp_t * s[:, 9]
    return np.clip(a, -1.0, 1.0).astype(np.float32)


def skill_command_from_action(hl_action: np.ndarray, bundle: PolicyBundle,
                              prior: PriorState) -> tuple[np.ndarray, np.ndarray]:
    """Split a raw high-level action into per-factor skills and weights and
    project every piece into the valid command set."""
    reg = bundle.registry
    hl = np.asarray(hl_action, dtype=np.float64)
    zs = []
    off = 0
    for f in reg.factors:
        zs.append(project_skill(f, prior, hl[:, off:off + f.dim]))
        off += f.dim
    lam_raw = np.abs(hl[:, off:])
    norms = np.linalg.norm(lam_raw, axis=-1, keepdims=True)
    n_w = reg.num_factors + 1
    uniform = np.full(n_w, 1.0 / np.sqrt(n_w))
    lam = np.where(norms > 1e-12, lam_raw / np.maximum(norms, 1e-12), uniform)
    return np.concatenate(zs, axis=-1), lam


class BlockRunner:
    """Advances the nav task H low-level steps under one held high-level
    action, accumulating reward until each row's first episode boundary."""

    def __init__(self, task: NavTask, cfg: NavConfig,
                 bundle: PolicyBundle | None, prior: PriorState | None):
        self.task = task
        self.cfg = cfg
        self.env_cfg = cfg.env_cfg
        self.bundle = bundle
        self.prior = prior
        self.ep_reward = np.zeros(task.env.num_envs)
        self.ep_dist_sum = np.zeros(task.env.num_envs)
        self.ep_herr_sum = np.zeros(task.env.num_envs)
        self.ep_steps = np.zeros(task.env.num_envs, dtype=np.int64)
        self.episodes: list[dict] = []

    def _low_actions(self, mode: str, hl_action: np.ndarray, z_cat, lam):
        states = self.task.env.states
        if mode == "direct":
            return np.clip(hl_action, -1.0, 1.0).astype(np.float32)
        if mode == "oracle":
            cmd = np.clip(hl_action, -1.0, 1.0)
            v_cmd = cmd[:, :2] * self.env_cfg.v_max
            w_cmd = cmd[:, 2] * self.env_cfg.w_max
            return oracle_actions(states, v_cmd, w_cmd, self.env_cfg)
        x = self.bundle.input_for(states.copy(), z_cat, lam)
        return self.bundle.actor.mean_action(x)

    def run_block(self, hl_action: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Returns (block reward, terminated, truncated) per env; terminated
        covers goal success and the collision analog, truncated the timeout."""
        cfg = self.cfg
        mode = cfg.mode
        n = self.task.env.num_envs
        z_cat = lam = None
        if mode == "skill":
            z_cat, lam = skill_command_from_action(hl_action, self.bundle,
                                                   self.prior)
        r_block = np.zeros(n)
        terminated = np.zeros(n, dtype=bool)
        truncated = np.zeros(n, dtype=bool)
        settled = np.zeros(n, dtype=bool)
        for _ in range(cfg.h_period):
            a = self._low_actions(mode, hl_action, z_cat, lam)
            res, reward, flags = self.task.step(a)
            live = ~settled
            r_block[live] += reward[live]
            self.ep_reward[live] += reward[live]
            self.ep_dist_sum[live] += flags["dist"][live]
            self.ep_herr_sum[live] += flags["heading_err"][live]
            self.ep_steps[live] += 1
            done = flags["success"] | flags["collision"] | flags["timeout"]
            ending = done & live
            for i in np.nonzero(ending)[0]:
                outcome = ("goal" if flags["success"][i] else
                           "collision" if flags["collision"][i] else "timeout")
                self.episodes.append({
                    "outcome": outcome,
                    "reward": float(self.ep_reward[i]),
                    "steps": int(self.ep_steps[i]),
                    "mean_dist": float(self.ep_dist_sum[i] / self.ep_steps[i]),
                    "mean_heading_err": float(self.ep_herr_sum[i] / self.ep_steps[i]),
                    "final_dist": float(flags["dist"][i]),
                })
                self.ep_reward[i] = self.ep_dist_sum[i] = self.ep_herr_sum[i] = 0.0
                self.ep_steps[i] = 0
            terminated |= (flags["success"] | flags["collision"]) & live
            truncated |= flags["timeout"] & live & ~terminated
            settled |= ending
        return r_block, terminated, truncated


def _make_task(cfg: NavConfig, seed_shift: int = 0) -> NavTask:
    env_cfg = cfg.env_cfg
    env = PointQuadEnv(cfg.num_envs, cfg=env_cfg, seed=cfg.seed + seed_shift,
                       difficulty=cfg.difficulty, auto_reset=False,
                       curriculum=False)
    return NavTask(env, max_goal_dist=cfg.max_goal_dist,
                   seed=cfg.seed + seed_shift + 1)


def _update_highlevel(actor: Actor, critic: DenseNet, copt: Adam, batch: dict,
                      cfg: PpoConfig, rng: np.random.Generator) -> dict:
    x, total = batch["x"], batch["x"].shape[0]
    kls, epochs_run = [], 0
    for _ in range(cfg.epochs):
        perm = rng.permutation(total)
        for mb in np.array_split(perm, cfg.minibatches):
            _, grads, _ = ppo_actor_loss_and_grads(
                actor.net, x[mb], batch["a"][mb], batch["logp"][mb],
                batch["adv"][mb], cfg.clip, cfg.entropy_coef)
            actor.opt.step(actor.net.params(), grads)
            _, cgrads = ppo_critic_loss_and_grads(
                critic, x[mb], batch["ret"][mb], batch["v_old"][mb],
                cfg.value_clip)
            copt.step(critic.params(), cgrads)
        epochs_run += 1
        logp_new = actor.logp(x, batch["a"])
        logr = logp_new.astype(np.float64) - batch["logp"]
        kl = float(np.mean(np.exp(logr) - 1.0 - logr))
        kls.append(kl)
        if kl > cfg.kl_target:
            break
    return {"approx_kl": kls[-1], "epochs_run": epochs_run}


def train_nav(cfg: NavConfig, bundle: PolicyBundle | None = None,
              prior: PriorState | None = None) -> tuple[Actor, list[dict]]:
    """High-level PPO training; returns the trained policy and per-iteration
    diagnostic records."""
    cfg.validate()
    if cfg.mode == "skill":
        if bundle is None:
            raise ConfigError("skill mode needs a frozen policy bundle")
        prior = prior or PriorState.initial(bundle.registry)
    rng = np.random.default_rng(cfg.seed)
    act_dim = action_dim_for(cfg.mode, bundle)
    actor = Actor(NAV_OBS_DIM, action_dim=act_dim, hidden=tuple(cfg.hidden),
                  lr=cfg.lr, grad_clip=cfg.ppo.grad_clip, rng=rng)
    critic = DenseNet([NAV_OBS_DIM, *cfg.hidden, 1],
                      ["elu"] * len(cfg.hidden) + ["identity"], rng=rng)
    copt = Adam(critic.params(), lr=cfg.lr, clip=cfg.ppo.grad_clip)

    task = _make_task(cfg)
    runner = BlockRunner(task, cfg, bundle, prior)
    history = []
    t_hl, b = cfg.hl_horizon, cfg.num_envs
    for _ in range(cfg.iterations):
        obs = np.zeros((t_hl, b, NAV_OBS_DIM), dtype=np.float32)
        acts = np.zeros((t_hl, b, act_dim), dtype=np.float32)
        logps = np.zeros((t_hl, b))
        rewards = np.zeros((t_hl, b))
        terms = np.zeros((t_hl, b), dtype=bool)
        truncs = np.zeros((t_hl, b), dtype=bool)
        values = np.zeros((t_hl, b))
        boots = np.zeros((t_hl, b))
        for t in range(t_hl):
            o = highlevel_obs(task, task.env.states, cfg.env_cfg)
            a, lp = actor.act(o, rng)
            r, te, tr = runner.run_block(a)
            obs[t], acts[t], logps[t] = o, a, lp
            rewards[t], terms[t], truncs[t] = r, te, tr
            values[t] = critic.forward(o)[:, 0].astype(np.float64)
            o2 = highlevel_obs(task, task.env.states, cfg.env_cfg)
            boots[t] = critic.forward(o2)[:, 0].astype(np.float64)
        adv, ret = gae_advantages(rewards, values, boots, terms, truncs,
                                  cfg.ppo.gamma, cfg.ppo.gae_lambda)
        flat = t_hl * b
        adv_f = adv.reshape(flat)
        adv_f = (adv_f - adv_f.mean()) / (adv_f.std() + 1e-8)
        batch = {
            "x": obs.reshape(flat, NAV_OBS_DIM),
            "a": acts.reshape(flat, act_dim),
            "logp": logps.reshape(flat),
            "adv": adv_f,
            "ret": ret.reshape(flat),
            "v_old": values.reshape(flat),
        }
        stats = _update_highlevel(actor, critic, copt, batch, cfg.ppo, rng)
        recent = runner.episodes[-200:]
        history.append({
            "mode": cfg.mode,
            "reward_mean": float(rewards.sum(axis=0).mean()),
            "goal_rate_recent": (np.mean([e["outcome"] == "goal" for e in recent])
                                 if recent else 0.0),
            **stats,
        })
    return actor, history


def evaluate_nav(cfg: NavConfig, actor: Actor,
                 bundle: PolicyBundle | None = None,
                 prior: PriorState | None = None,
                 n_episodes: int = 200, seed_shift: int = 10_000) -> dict:
    """Greedy evaluation until n_episodes finish; Table-style summary with
    the flip termination standing in for a base collision."""
    cfg.validate()
    if cfg.mode == "skill":
        if bundle is None:
            raise ConfigError("skill mode needs a frozen policy bundle")
        prior = prior or PriorState.initial(bundle.registry)
    task = _make_task(cfg, seed_shift=seed_shift)
    runner = BlockRunner(task, cfg, bundle, prior)
    guard = 0
    while len(runner.episodes) < n_episodes:
        o = highlevel_obs(task, task.env.states, cfg.env_cfg)
        runner.run_block(actor.mean_action(o))
        guard += 1
        if guard > 100_000:
            raise ConfigError("nav evaluation failed to finish episodes")
    eps = runner.episodes[:n_episodes]
    total = len(eps)

    def ratio(kind):
        return sum(e["outcome"] == kind for e in eps) / total

    return {
        "mode": cfg.mode,
        "episodes": total,
        "reward_mean": float(np.mean([e["reward"] for e in eps])),
        "pos_err_mean": float(np.mean([e["mean_dist"] for e in eps])),
        "heading_err_mean": float(np.mean([e["mean_heading_err"] for e in eps])),
        "goal_reached": ratio("goal"),
        "base_collision_flip": ratio("collision"),
        "timeout": ratio("timeout"),
    }


def format_nav_table(records: list[dict]) -> str:
    """Aligned text table over the evaluation records; the collision column
    is the flip-termination analog."""
    cols = [
        ("mode", "Mode"),
        ("reward_mean", "Reward"),
        ("pos_err_mean", "PosErr[m]"),
        ("heading_err_mean", "HeadErr[rad]"),
        ("goal_reached", "GoalReached"),
        ("base_collision_flip", "BaseCollision(flip)"),
        ("timeout", "TimeOut"),
    ]
    rows = [[h for _, h in cols]]
    for r in records:
        rows.append([
            f"{r[k]:.3f}" if isinstance(r[k], float) else str(r[k])
            for k, _ in cols
        ])
    widths = [max(len(row[i]) for row in rows) for i in range(len(cols))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip()
             for row in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)

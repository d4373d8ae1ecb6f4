"""Policy evaluation: per-factor metric scores in [-1, 1], skill diversity,
safety counters, the mirror-symmetry audit, and the mid-episode skill-flip
responsiveness probe.

All evaluators roll the deterministic mean action under a frozen bundle with
one fixed skill per rollout and the uniform weight vector, so numbers are
reproducible given a seed and never depend on exploration noise.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .env import EnvConfig, PointQuadEnv, StyleRegConfig
from .errors import ConfigError, NumericError
from .mirrors import STATE_DIM, mirror_state
from .policy import PolicyBundle
from .skills import PriorState, sample_skills

MIN_SCORE_ROLLOUTS = 100
MIN_DIVERSITY_ROLLOUTS = 1000
DEFAULT_EVAL_SKILLS = 2000

ZERO_NORM_EPS = 1e-12


def uniform_lambda(num_factors: int, rows: int) -> np.ndarray:
    n = num_factors + 1
    return np.full((rows, n), 1.0 / np.sqrt(n))


def style_worst(style: StyleRegConfig, env_cfg: EnvConfig) -> float:
    """Sum of maximal per-term style penalties at nominal bounds; the fixed
    scale of the affine style-score map."""
    dh = max(env_cfg.h_max - env_cfg.h_target, env_cfg.h_target - env_cfg.h_min)
    per_term = (
        abs(style.speed) * env_cfg.v_max ** 2
        + abs(style.height) * dh ** 2
        + abs(style.flat) * 2.0 * env_cfg.tilt_bound ** 2
        + abs(style.action_norm) * 6.0
        + abs(style.action_rate) * 24.0
        + abs(style.tilt_contact) * 1.0
    )
    return float(per_term)


def style_score(mean_r_style: float, worst: float) -> float | None:
    if worst <= 0.0:
        return None
    return float(np.clip(1.0 + mean_r_style / worst, -1.0, 1.0))


def world_velocity(states: np.ndarray) -> np.ndarray:
    """Planar velocity rotated from the body frame into the world frame."""
    hc, hs = states[..., 2], states[..., 3]
    vx, vy = states[..., 4], states[..., 5]
    return np.stack([hc * vx - hs * vy, hs * vx + hc * vy], axis=-1)


def _masked_cos(a: np.ndarray, b: np.ndarray) -> tuple[float, int]:
    """Cosine sum over rows where both vectors have nonzero norm."""
    na = np.linalg.norm(a, axis=-1)
    nb = np.linalg.norm(b, axis=-1)
    keep = (na > ZERO_NORM_EPS) & (nb > ZERO_NORM_EPS)
    if not keep.any():
        return 0.0, 0
    cos = np.sum(a[keep] * b[keep], axis=-1) / (na[keep] * nb[keep])
    return float(cos.sum()), int(keep.sum())


@dataclass
class RolloutStats:
    mean_states: np.ndarray
    score_sum: dict
    score_count: dict
    style_sum: float
    reg_sum: float
    tilt_steps: int
    flip_events: int
    total_steps: int
    final_states: np.ndarray


def skill_rollout_stats(
    bundle: PolicyBundle,
    zs: np.ndarray,
    lam: np.ndarray,
    *,
    env_cfg: EnvConfig,
    style_cfg: StyleRegConfig,
    steps: int,
    seed: int,
    difficulty: int = 0,
    batch: int = 64,
    with_scores: bool = True,
    init_states: np.ndarray | None = None,
) -> RolloutStats:
    """Roll each skill for `steps` deterministic steps and accumulate every
    evaluation statistic in one streaming pass."""
    registry = bundle.registry
    zs = np.asarray(zs, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    n = zs.shape[0]
    if zs.shape[1] != registry.total_dim or lam.shape != (n, registry.num_factors + 1):
        raise ConfigError("skill/weight table shape mismatch")
    if steps < 1:
        raise ConfigError("steps must be >= 1")

    mean_states = np.zeros((n, STATE_DIM))
    final_states = np.zeros((n, STATE_DIM), dtype=np.float32)
    score_sum = {f.name: 0.0 for f in registry.factors}
    score_count = {f.name: 0 for f in registry.factors}
    style_sum = 0.0
    reg_sum = 0.0
    tilt_steps = 0
    flip_events = 0
    total_steps = 0

    for lo in range(0, n, batch):
        hi = min(lo + batch, n)
        b = hi - lo
        env = PointQuadEnv(b, cfg=env_cfg, style=style_cfg,
                           seed=seed + 7919 * (lo // batch),
                           difficulty=difficulty, curriculum=False)
        if init_states is not None:
            env.states = np.asarray(init_states[lo:hi], dtype=np.float32).copy()
        z_b = zs[lo:hi]
        z_parts = registry.split(z_b)
        lam_b = lam[lo:hi]
        acc = np.zeros((b, STATE_DIM))
        for _ in range(steps):
            s = env.states.copy()
            x = bundle.input_for(s, z_b, lam_b)
            a = bundle.actor.mean_action(x)
            res = env.step(a)
            s2 = res.next_states
            acc += s2
            style_sum += float(res.r_style.sum())
            reg_sum += float(res.r_reg.sum())
            tilt_steps += int(res.info["tilt_contact"].sum())
            flip_events += int(res.info["flip"].sum())
            total_steps += b
            if with_scores:
                for f, z_i in zip(registry.factors, z_parts):
                    model = bundle.models[f.name]
                    if f.algorithm == "metra":
                        cs, cn = _masked_cos(model.delta_phi(s, s2), z_i)
                    else:
                        cs, cn = _masked_cos(z_i, model.posterior_mean(s2))
                    score_sum[f.name] += cs
                    score_count[f.name] += cn
        mean_states[lo:hi] = acc / steps
        final_states[lo:hi] = env.states

    return RolloutStats(mean_states, score_sum, score_count, style_sum,
                        reg_sum, tilt_steps, flip_events, total_steps,
                        final_states)


def diversity_from_means(mean_states: np.ndarray, state_slice) -> float:
    """Per-factor diversity: population std across skills of each slice
    coordinate's rollout-mean, aggregated by Frobenius norm."""
    block = np.asarray(mean_states)[:, list(state_slice)]
    return float(np.linalg.norm(block.std(axis=0)))


@dataclass
class EvalReport:
    n_skills: int
    steps: int
    seed: int
    scores: dict = field(default_factory=dict)
    diversity: dict = field(default_factory=dict)
    safety: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        return {
            "n_skills": self.n_skills,
            "steps": self.steps,
            "seed": self.seed,
            "scores": dict(self.scores),
            "diversity": dict(self.diversity),
            "safety": dict(self.safety),
        }


def evaluate_bundle(
    bundle: PolicyBundle,
    prior: PriorState,
    *,
    env_cfg: EnvConfig | None = None,
    style_cfg: StyleRegConfig | None = None,
    n_skills: int = DEFAULT_EVAL_SKILLS,
    steps: int | None = None,
    seed: int = 0,
    difficulty: int = 0,
    batch: int = 64,
    allow_small: bool = False,
) -> EvalReport:
    """Full evaluation pass: one fixed skill per rollout, then per-factor
    scores, per-factor diversity, and safety counters in a single report."""
    env_cfg = env_cfg or EnvConfig()
    style_cfg = style_cfg or StyleRegConfig()
    if not allow_small:
        if n_skills < MIN_SCORE_ROLLOUTS:
            raise ConfigError(
                f"metric scores need >= {MIN_SCORE_ROLLOUTS} rollouts")
        if n_skills < MIN_DIVERSITY_ROLLOUTS:
            raise ConfigError(
                f"diversity needs >= {MIN_DIVERSITY_ROLLOUTS} rollouts")
    steps = env_cfg.episode_len if steps is None else steps
    registry = bundle.registry
    rng = np.random.default_rng(seed)
    zs = sample_skills(prior, registry, rng, n_skills)
    lam = uniform_lambda(registry.num_factors, n_skills)

    st = skill_rollout_stats(
        bundle, zs, lam, env_cfg=env_cfg, style_cfg=style_cfg, steps=steps,
        seed=seed, difficulty=difficulty, batch=batch)

    scores: dict = {}
    for f in registry.factors:
        cnt = st.score_count[f.name]
        scores[f.name] = None if cnt == 0 else st.score_sum[f.name] / cnt
    scores["style"] = style_score(st.style_sum / st.total_steps,
                                  style_worst(style_cfg, env_cfg))
    for name, v in scores.items():
        if v is not None and not (-1.0 - 1e-9 <= v <= 1.0 + 1e-9):
            raise NumericError(f"score {name}={v} escaped [-1, 1]")

    diversity = {f.name: diversity_from_means(st.mean_states, f.state_slice)
                 for f in registry.factors}
    safety = {
        "tilt_violation_pct_per_step": 100.0 * st.tilt_steps / st.total_steps,
        "flips_per_rollout": st.flip_events / n_skills,
    }
    return EvalReport(n_skills=n_skills, steps=steps, seed=seed,
                      scores=scores, diversity=diversity, safety=safety)


def symmetry_audit(
    bundle: PolicyBundle,
    prior: PriorState,
    factor_name: str,
    *,
    env_cfg: EnvConfig | None = None,
    style_cfg: StyleRegConfig | None = None,
    n_skills: int = 64,
    steps: int = 200,
    seed: int = 0,
    ks: tuple = (2, 3, 4),
    batch: int = 64,
) -> dict:
    """Mirror-consistency gap: roll z and its mirrored skill from mirrored
    starts; an equivariant policy makes the unmirrored mean state match the
    mirror-inverted mean state of the pair exactly.

    The reported gap is measured on the audited factor's state slice; the
    full-state gap is included alongside.
    """
    env_cfg = env_cfg or EnvConfig()
    style_cfg = style_cfg or StyleRegConfig()
    registry = bundle.registry
    spec = next((f for f in registry.factors if f.name == factor_name), None)
    if spec is None:
        raise ConfigError(f"no factor named {factor_name!r}")
    if spec.mirror == "none":
        raise ConfigError(f"factor {factor_name!r} has no nontrivial mirrors")

    rng = np.random.default_rng(seed)
    zs = sample_skills(prior, registry, rng, n_skills)
    lam = uniform_lambda(registry.num_factors, n_skills)

    probe = PointQuadEnv(n_skills, cfg=env_cfg, style=style_cfg, seed=seed + 1,
                         curriculum=False)
    init = probe.states.copy()

    base = skill_rollout_stats(
        bundle, zs, lam, env_cfg=env_cfg, style_cfg=style_cfg, steps=steps,
        seed=seed, batch=batch, with_scores=False, init_states=init)

    cols = list(spec.state_slice)
    gap_slice, gap_full = [], []
    for k in ks:
        z_m = registry.mirror_cat(k, zs)
        mirrored = skill_rollout_stats(
            bundle, z_m, lam, env_cfg=env_cfg, style_cfg=style_cfg,
            steps=steps, seed=seed, batch=batch, with_scores=False,
            init_states=mirror_state(init, k))
        # each mirror is an involution, so the inverse map is itself
        back = mirror_state(mirrored.mean_states, k)
        diff = base.mean_states - back
        gap_slice.append(np.linalg.norm(diff[:, cols], axis=-1).mean())
        gap_full.append(np.linalg.norm(diff, axis=-1).mean())

    return {
        "factor": factor_name,
        "ks": list(ks),
        "gap": float(np.mean(gap_slice)),
        "gap_full_state": float(np.mean(gap_full)),
        "gap_per_k": {int(k): float(g) for k, g in zip(ks, gap_slice)},
        "n_skills": n_skills,
        "steps": steps,
    }


def skill_flip_response(
    bundle: PolicyBundle,
    prior: PriorState,
    factor_name: str,
    *,
    env_cfg: EnvConfig | None = None,
    style_cfg: StyleRegConfig | None = None,
    n_trials: int = 100,
    pre_steps: int = 100,
    post_steps: int = 50,
    window: int = 10,
    seed: int = 0,
) -> dict:
    """Mid-episode z -> -z flip probe for a direction factor: fraction of
    trials whose windowed mean world velocity turns against the pre-switch
    mean within the post-switch horizon."""
    env_cfg = env_cfg or EnvConfig()
    style_cfg = style_cfg or StyleRegConfig()
    registry = bundle.registry
    spec = next((f for f in registry.factors if f.name == factor_name), None)
    if spec is None:
        raise ConfigError(f"no factor named {factor_name!r}")
    if spec.algorithm != "metra":
        raise ConfigError("skill flip probe applies to direction factors")
    idx = [f.name for f in registry.factors].index(factor_name)
    lo = registry.offsets[idx]
    hi = lo + spec.dim

    rng = np.random.default_rng(seed)
    zs = sample_skills(prior, registry, rng, n_trials)
    lam = uniform_lambda(registry.num_factors, n_trials)
    env = PointQuadEnv(n_trials, cfg=env_cfg, style=style_cfg, seed=seed + 3,
                       curriculum=False)

    def step_once(z_tab):
        x = bundle.input_for(env.states.copy(), z_tab, lam)
        res = env.step(bundle.actor.mean_action(x))
        return world_velocity(res.next_states)

    pre_v = np.zeros((n_trials, 2))
    tail = max(1, min(window, pre_steps))
    for t in range(pre_steps):
        v = step_once(zs)
        if t >= pre_steps - tail:
            pre_v += v
    pre_v /= tail

    z_flip = zs.copy()
    z_flip[:, lo:hi] = -z_flip[:, lo:hi]
    reversed_mask = np.zeros(n_trials, dtype=bool)
    recent = []
    for _ in range(post_steps):
        recent.append(step_once(z_flip))
        if len(recent) > window:
            recent.pop(0)
        v_win = np.mean(recent, axis=0)
        reversed_mask |= np.sum(v_win * pre_v, axis=-1) < 0.0
    return {
        "factor": factor_name,
        "fraction_reversed": float(reversed_mask.mean()),
        "n_trials": n_trials,
        "pre_steps": pre_steps,
        "post_steps": post_steps,
    }

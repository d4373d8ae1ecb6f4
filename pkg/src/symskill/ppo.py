"""On-policy learning core: rollout collection with in-episode skill
resampling, mirror batch augmentation, per-stream GAE, weighted advantage
aggregation, and the clipped-surrogate update.

Reward streams stay separate end to end; the only scalar ever formed is the
aggregated advantage fed to the policy loss.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import heads
from .env import PointQuadEnv
from .errors import ConfigError, NumericError
from .mirrors import MIRROR_IDS, mirror_action, mirror_state
from .policy import CriticBank, ObsNormalizer, PolicyBundle, policy_input
from .skills import (
    PriorState,
    SkillRegistry,
    resample_mask,
    sample_skills,
    sample_weights,
)
from .usd import DiaynFactorModel, exploration_bonus, symmetrized_reward

F32 = np.float32

RESAMPLE_PERIOD = 150
RATIO_LOG_CLAMP = 20.0
TRUST_GRAD_BOUND = 100.0


@dataclass
class PpoConfig:
    clip: float = 0.2
    value_clip: float = 0.2
    horizon: int = 24
    epochs: int = 5
    minibatches: int = 4
    lr: float = 1e-3
    gamma: float = 0.99
    gae_lambda: float = 0.95
    kl_target: float = 0.01
    grad_clip: float = 1.0
    entropy_coef: float = 0.005
    resample_period: int = RESAMPLE_PERIOD

    def validate(self) -> "PpoConfig":
        if not 0.0 < self.clip < 1.0:
            raise ConfigError(f"clip must be in (0,1), got {self.clip}")
        if self.value_clip <= 0.0:
            raise ConfigError("value_clip must be positive")
        for name in ("horizon", "epochs", "minibatches", "resample_period"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.lr <= 0.0 or self.grad_clip <= 0.0 or self.kl_target <= 0.0:
            raise ConfigError("lr, grad_clip and kl_target must be positive")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError(f"gamma must be in (0,1], got {self.gamma}")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ConfigError(f"gae_lambda must be in [0,1], got {self.gae_lambda}")
        if self.entropy_coef < 0.0:
            raise ConfigError("entropy_coef must be >= 0")
        return self


# ------------------------------------------------------------- pure losses

def trust_mask(raw, actions, bound=TRUST_GRAD_BOUND):
    """Rows whose single-sample likelihood gradient stays below `bound`.

    Mirror replicas are evaluated under a policy that never sampled them, so
    an action can sit thousands of sigmas from the mean once the policy has
    sharpened. Such a row's log-prob gradient (z/sigma per mean coordinate,
    z^2-1 per log-std coordinate) dwarfs the rest of the batch combined and
    the global norm clip then preserves only its direction. Rows past the
    bound carry no usable on-policy signal and are dropped from the
    surrogate; they rejoin it as soon as the policy symmetrizes or widens.
    """
    mean, log_std = heads.gaussian_split(raw)
    z = (np.asarray(actions, dtype=np.float64) - mean) * np.exp(
        -np.asarray(log_std, dtype=np.float64))
    g2 = (z * np.exp(-np.asarray(log_std, dtype=np.float64))) ** 2
    g2 = g2 + (z * z - 1.0) ** 2
    return np.sqrt(g2.sum(axis=-1)) <= bound


def ppo_actor_loss_and_grads(net, x, actions, logp_old, adv, clip, ent_coef,
                             trust=None):
    """Clipped-surrogate policy loss with entropy bonus.

    Returns (loss, grads, stats). Gradient flows only through the branch the
    min picks; ties resolve to the unclipped branch, whose derivative is the
    correct one there because inside the trust band both branches coincide.
    `trust` (optional bool row mask) restricts the surrogate and its stats to
    rows with bounded influence; the entropy bonus always covers every row so
    a degenerate batch still receives pressure back toward exploration.
    """
    raw = net.forward(x)
    mean, log_std = heads.gaussian_split(raw)
    logp = heads.gaussian_logprob(mean, log_std, actions)
    logr = np.asarray(logp, dtype=np.float64) - np.asarray(logp_old,
                                                           dtype=np.float64)
    # saturate ratios far outside the trust band so gradients stay f32-finite
    logr = np.clip(logr, -RATIO_LOG_CLAMP, RATIO_LOG_CLAMP)
    ratio = np.exp(logr)
    adv = np.asarray(adv, dtype=np.float64)
    s1 = ratio * adv
    s2 = np.clip(ratio, 1.0 - clip, 1.0 + clip) * adv
    ent = np.asarray(heads.gaussian_entropy(log_std), dtype=np.float64)
    b = x.shape[0]
    if trust is None:
        trust = np.ones(b, dtype=bool)
    nt = max(int(trust.sum()), 1)
    surr = np.where(trust, np.minimum(s1, s2), 0.0)
    loss = -surr.sum() / nt - ent_coef * ent.mean()
    if not np.isfinite(loss):
        raise NumericError("non-finite actor loss")
    pick1 = trust & (s1 <= s2)
    dloss_dlogp = np.where(pick1, -s1, 0.0) / nt
    up = heads.gaussian_logprob_grad(raw, actions, dloss_dlogp)
    up = up + heads.gaussian_entropy_grad(raw, np.full(b, -ent_coef / b))
    grads, _ = net.backward(x, up)
    kl_rows = (ratio - 1.0 - logr)[trust]
    clip_rows = (np.abs(ratio - 1.0) > clip)[trust]
    stats = {
        "approx_kl": float(kl_rows.mean()) if kl_rows.size else 0.0,
        "clip_fraction": float(clip_rows.mean()) if clip_rows.size else 0.0,
        "entropy": float(ent.mean()),
    }
    return float(loss), grads, stats


def ppo_critic_loss_and_grads(net, x, returns, v_old, clip):
    """Value-clipped regression: max of clipped and unclipped squared error."""
    v = np.asarray(net.forward(x)[..., 0], dtype=np.float64)
    returns = np.asarray(returns, dtype=np.float64)
    v_old = np.asarray(v_old, dtype=np.float64)
    v_clip = v_old + np.clip(v - v_old, -clip, clip)
    e1 = v - returns
    e2 = v_clip - returns
    per = np.maximum(e1 * e1, e2 * e2)
    loss = per.mean()
    if not np.isfinite(loss):
        raise NumericError("non-finite critic loss")
    b = x.shape[0]
    pick1 = (e1 * e1) >= (e2 * e2)
    in_band = np.abs(v - v_old) < clip
    dper_dv = np.where(pick1, 2.0 * e1, np.where(in_band, 2.0 * e2, 0.0))
    grads, _ = net.backward(x, (dper_dv / b)[:, None])
    return float(loss), grads


# ---------------------------------------------------------------- GAE

def gae_advantages(rewards, values, boot_values, terminated, truncated,
                   gamma, lam, resampled=None):
    """Per-stream GAE over a (T, ...) rollout.

    boot_values holds V(s'_t) under the transition's own conditioning, so the
    bootstrap stays correct across auto-resets. Termination kills the
    bootstrap; truncation keeps it. The recursive carry additionally breaks
    where the next step redrew skills, because advantages conditioned on
    different skills must not mix.
    """
    r = np.asarray(rewards, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    bv = np.asarray(boot_values, dtype=np.float64)
    term = np.asarray(terminated, dtype=bool)
    trunc = np.asarray(truncated, dtype=bool)
    if not (r.shape == v.shape == bv.shape == term.shape == trunc.shape):
        raise ConfigError("gae stream shapes differ")
    t_len = r.shape[0]
    adv = np.zeros_like(r)
    delta = r + gamma * bv * (~term) - v
    carry = np.zeros(r.shape[1:], dtype=np.float64)
    for t in range(t_len - 1, -1, -1):
        if t == t_len - 1:
            link = np.zeros(r.shape[1:], dtype=bool)
        else:
            link = ~(term[t] | trunc[t])
            if resampled is not None:
                link &= ~np.asarray(resampled[t + 1], dtype=bool)
        carry = delta[t] + gamma * lam * np.where(link, carry, 0.0)
        adv[t] = carry
    return adv, adv + v


def gae_stack(rewards, values, boot_values, terminated, truncated,
              gamma, lam, resampled=None):
    """GAE over (T, B, ...) streams sharing (T, B) flags."""
    r = np.asarray(rewards, dtype=np.float64)
    extra = r.shape[2:]
    if extra:
        reps = int(np.prod(extra))

        def fan(a):
            a = np.asarray(a)
            return np.repeat(a[..., None], reps, axis=-1).reshape(
                a.shape[0], -1)

        flat = lambda a: np.asarray(a, dtype=np.float64).reshape(r.shape[0], -1)
        adv, ret = gae_advantages(
            flat(rewards), flat(values), flat(boot_values),
            fan(terminated), fan(truncated), gamma, lam,
            resampled=None if resampled is None else fan(resampled))
        return adv.reshape(r.shape), ret.reshape(r.shape)
    return gae_advantages(rewards, values, boot_values, terminated,
                          truncated, gamma, lam, resampled=resampled)


def aggregate_advantage(adv_factors, adv_style, lam, lam_ucb=0.0,
                        standardize=True, eps=1e-8):
    """Weighted combination of per-factor ensemble advantages plus style.

    adv_factors: (B, N, E); adv_style: (B,); lam: (B, N+1) with style last.
    """
    af = np.asarray(adv_factors, dtype=np.float64)
    ast = np.asarray(adv_style, dtype=np.float64)
    w = np.asarray(lam, dtype=np.float64)
    if af.ndim != 3 or w.ndim != 2:
        raise ConfigError("aggregate expects (B,N,E) advantages, (B,N+1) weights")
    n = af.shape[1]
    if w.shape[1] != n + 1:
        raise ConfigError(
            f"weight width {w.shape[1]} != factors+style {n + 1}")
    mu = af.mean(axis=-1)
    sigma = af.std(axis=-1)
    raw = np.sum(w[:, :n] * (mu + lam_ucb * sigma), axis=-1) + w[:, n] * ast
    if not standardize:
        return raw
    return (raw - raw.mean()) / (raw.std() + eps)


# ------------------------------------------------------------- collection

@dataclass
class SkillState:
    """Per-env skill assignment carried across rollouts.

    fixed_lam pins every weight vector to one constant (the no-weighting
    ablation); None means per-draw random weights.
    """
    z: np.ndarray
    lam: np.ndarray
    phases: np.ndarray
    fixed_lam: np.ndarray | None = None

    @classmethod
    def initial(cls, registry: SkillRegistry, prior: PriorState, num_envs: int,
                rng: np.random.Generator, period: int = RESAMPLE_PERIOD,
                fixed_lam=None):
        st = cls(
            z=sample_skills(prior, registry, rng, num_envs),
            lam=sample_weights(registry.num_factors + 1, rng, num_envs),
            phases=rng.integers(0, period, size=num_envs),
            fixed_lam=None if fixed_lam is None
            else np.asarray(fixed_lam, dtype=np.float64),
        )
        if st.fixed_lam is not None:
            if st.fixed_lam.shape != (registry.num_factors + 1,):
                raise ConfigError(
                    f"fixed_lam shape {st.fixed_lam.shape} != "
                    f"({registry.num_factors + 1},)")
            st.lam[:] = st.fixed_lam
        return st

    def redraw(self, rows, registry, prior, rng, period, new_phase=False):
        n = int(np.sum(rows))
        if n == 0:
            return
        self.z[rows] = sample_skills(prior, registry, rng, n)
        if self.fixed_lam is None:
            self.lam[rows] = sample_weights(registry.num_factors + 1, rng, n)
        else:
            self.lam[rows] = self.fixed_lam
        if new_phase:
            self.phases[rows] = rng.integers(0, period, size=n)

    def to_dict(self):
        return {"z": self.z.tolist(), "lam": self.lam.tolist(),
                "phases": self.phases.tolist(),
                "fixed_lam": None if self.fixed_lam is None
                else self.fixed_lam.tolist()}

    @classmethod
    def from_dict(cls, d):
        fl = d.get("fixed_lam")
        return cls(z=np.asarray(d["z"], dtype=np.float64),
                   lam=np.asarray(d["lam"], dtype=np.float64),
                   phases=np.asarray(d["phases"], dtype=np.int64),
                   fixed_lam=None if fl is None
                   else np.asarray(fl, dtype=np.float64))


@dataclass
class RolloutBuffer:
    s: np.ndarray
    a: np.ndarray
    s2: np.ndarray
    z: np.ndarray
    lam: np.ndarray
    logp: np.ndarray
    r_factors: np.ndarray
    r_factors_raw: np.ndarray
    r_style: np.ndarray
    r_style_raw: np.ndarray
    r_reg: np.ndarray
    terminated: np.ndarray
    truncated: np.ndarray
    resampled: np.ndarray
    v_factors: np.ndarray
    v_style: np.ndarray
    boot_factors: np.ndarray
    boot_style: np.ndarray
    info: dict = field(default_factory=dict)

    @property
    def horizon(self):
        return self.s.shape[0]

    @property
    def num_envs(self):
        return self.s.shape[1]

    def flat(self, name):
        a = getattr(self, name)
        return a.reshape(a.shape[0] * a.shape[1], *a.shape[2:])


def _factor_rewards(bundle: PolicyBundle, prior: PriorState, s, a, s2, zs,
                    sym_reward=False):
    """Raw per-factor intrinsic rewards for one step batch."""
    out = []
    for f, z_i in zip(bundle.registry.factors, zs):
        model = bundle.models[f.name]
        if f.algorithm == "metra":
            if sym_reward:
                fn = lambda s_, a_, s2_, z_: model.mixed(s_, s2_, z_)
                r = symmetrized_reward(fn, s, a, s2, z_i, f)
            else:
                r = model.mixed(s, s2, z_i)
        else:
            alpha = prior.alpha[f.name]
            dusdi = model.q_not is not None
            if sym_reward:
                fn = lambda s_, a_, s2_, z_: model.reward(
                    s2_, z_, alpha, dusdi=dusdi)
                r = symmetrized_reward(fn, s, a, s2, z_i, f)
            else:
                r = model.reward(s2, z_i, alpha, dusdi=dusdi)
        out.append(np.asarray(r, dtype=np.float64))
    return out


def collect_rollout(bundle: PolicyBundle, env: PointQuadEnv, prior: PriorState,
                    skill_state: SkillState, horizon: int,
                    rng: np.random.Generator, period: int = RESAMPLE_PERIOD,
                    explore_mode: str = "none", explore_coef: float = 1.0,
                    sym_reward: bool = False) -> RolloutBuffer:
    """Step the vectorized env for `horizon` steps under the current policy.

    Skills and weights are redrawn on each env's schedule and on episode
    resets; the resampled flags mark where the GAE carry must break. The
    observation normalizer is frozen for the whole rollout so stored
    log-probs replay bitwise during the update.
    """
    reg = bundle.registry
    n, b = reg.num_factors, env.num_envs
    t_len = int(horizon)
    if t_len < 1:
        raise ConfigError("horizon must be >= 1")
    zdim = reg.total_dim
    s_dim = env.states.shape[1]

    s_buf = np.zeros((t_len, b, s_dim), dtype=F32)
    a_buf = np.zeros((t_len, b, bundle.actor.action_dim), dtype=F32)
    s2_buf = np.zeros_like(s_buf)
    z_buf = np.zeros((t_len, b, zdim), dtype=F32)
    lam_buf = np.zeros((t_len, b, n + 1), dtype=F32)
    logp_buf = np.zeros((t_len, b), dtype=np.float64)
    term_buf = np.zeros((t_len, b), dtype=bool)
    trunc_buf = np.zeros((t_len, b), dtype=bool)
    resamp_buf = np.zeros((t_len, b), dtype=bool)
    r_style_raw = np.zeros((t_len, b), dtype=np.float64)
    r_reg_buf = np.zeros((t_len, b), dtype=np.float64)
    r_f_raw = np.zeros((t_len, b, n), dtype=np.float64)
    contact_buf = np.zeros((t_len, b), dtype=bool)
    level_buf = np.zeros((t_len, b), dtype=np.int64)
    disp_buf = np.zeros((t_len, b), dtype=np.float64)

    for t in range(t_len):
        due = resample_mask(env.step_count, period, skill_state.phases)
        skill_state.redraw(due, reg, prior, rng, period)
        resamp_buf[t] = due

        s = env.states.copy()
        z_cat = skill_state.z.astype(F32)
        lam = skill_state.lam.astype(F32)
        x = bundle.input_for(s, z_cat, lam)
        a, logp = bundle.actor.act(x, rng)
        res = env.step(a)
        s2 = res.next_states

        zs = reg.split(skill_state.z)
        r_f = _factor_rewards(bundle, prior, s, a, s2, zs, sym_reward=sym_reward)
        if explore_mode != "none":
            for i, f in enumerate(reg.factors):
                model = bundle.models[f.name]
                if explore_mode == "ensemble":
                    if not isinstance(model, DiaynFactorModel):
                        continue
                    bonus = exploration_bonus("ensemble", model=model,
                                              states=s2, z=zs[i])
                else:
                    bonus = exploration_bonus("rnd", rnd=bundle.rnd, states=s2)
                r_f[i] = r_f[i] + explore_coef * bonus

        s_buf[t] = s
        a_buf[t] = a
        s2_buf[t] = s2
        z_buf[t] = z_cat
        lam_buf[t] = lam
        logp_buf[t] = logp
        term_buf[t] = res.terminated
        trunc_buf[t] = res.truncated
        r_style_raw[t] = np.asarray(res.r_style, dtype=np.float64)
        r_reg_buf[t] = np.asarray(res.r_reg, dtype=np.float64)
        for i in range(n):
            r_f_raw[t, :, i] = r_f[i]
        contact_buf[t] = res.info["tilt_contact"]
        level_buf[t] = res.info["level"]
        disp_buf[t] = res.info["displacement"]

        done = res.terminated | res.truncated
        if done.any():
            skill_state.redraw(done, reg, prior, rng, period, new_phase=True)

    r_f_norm = np.zeros_like(r_f_raw)
    for i, f in enumerate(reg.factors):
        nm = bundle.reward_norms[f.name]
        nm.update(r_f_raw[:, :, i])
        r_f_norm[:, :, i] = nm.normalize(r_f_raw[:, :, i])
    style_total = r_style_raw + r_reg_buf
    nm = bundle.reward_norms["style"]
    nm.update(style_total)
    r_style_norm = nm.normalize(style_total)

    flat_s = s_buf.reshape(t_len * b, s_dim)
    flat_s2 = s2_buf.reshape(t_len * b, s_dim)
    flat_z = z_buf.reshape(t_len * b, zdim)
    flat_lam = lam_buf.reshape(t_len * b, n + 1)
    x_all = policy_input(bundle.obs_norm, flat_s, flat_z, flat_lam)
    x2_all = policy_input(bundle.obs_norm, flat_s2, flat_z, flat_lam)
    e = bundle.critics.ensemble
    v_f = bundle.critics.factor_values(x_all).reshape(t_len, b, n, e)
    v_s = bundle.critics.style_value(x_all).reshape(t_len, b)
    b_f = bundle.critics.factor_values(x2_all).reshape(t_len, b, n, e)
    b_s = bundle.critics.style_value(x2_all).reshape(t_len, b)

    return RolloutBuffer(
        s=s_buf, a=a_buf, s2=s2_buf, z=z_buf, lam=lam_buf, logp=logp_buf,
        r_factors=r_f_norm, r_factors_raw=r_f_raw, r_style=r_style_norm,
        r_style_raw=r_style_raw, r_reg=r_reg_buf, terminated=term_buf,
        truncated=trunc_buf, resampled=resamp_buf,
        v_factors=v_f.astype(np.float64), v_style=v_s.astype(np.float64),
        boot_factors=b_f.astype(np.float64), boot_style=b_s.astype(np.float64),
        info={"tilt_contact": contact_buf, "level": level_buf,
              "displacement": disp_buf},
    )


def compute_advantages(buffer: RolloutBuffer, cfg: PpoConfig, lam_ucb=0.0):
    """Per-stream GAE, then the weighted scalar advantage for the update.

    Returns (batch dict with flat arrays, diagnostics dict).
    """
    adv_f, ret_f = gae_stack(
        buffer.r_factors[:, :, :, None] * np.ones(
            (1, 1, 1, buffer.v_factors.shape[-1])),
        buffer.v_factors, buffer.boot_factors,
        buffer.terminated, buffer.truncated, cfg.gamma, cfg.gae_lambda,
        resampled=buffer.resampled)
    adv_s, ret_s = gae_advantages(
        buffer.r_style, buffer.v_style, buffer.boot_style,
        buffer.terminated, buffer.truncated, cfg.gamma, cfg.gae_lambda,
        resampled=buffer.resampled)

    t_len, b = buffer.horizon, buffer.num_envs
    flat = t_len * b
    n, e = buffer.v_factors.shape[2], buffer.v_factors.shape[3]
    batch = {
        "s": buffer.flat("s"), "a": buffer.flat("a"), "s2": buffer.flat("s2"),
        "z": buffer.flat("z"), "lam": buffer.flat("lam"),
        "logp": buffer.flat("logp"),
        "adv": aggregate_advantage(
            adv_f.reshape(flat, n, e), adv_s.reshape(flat),
            buffer.flat("lam"), lam_ucb=lam_ucb),
        "ret_f": ret_f.reshape(flat, n, e), "ret_style": ret_s.reshape(flat),
        "v_old_f": buffer.v_factors.reshape(flat, n, e),
        "v_old_style": buffer.v_style.reshape(flat),
    }
    diag = {
        "reward_factors_raw": buffer.r_factors_raw.mean(axis=(0, 1)),
        "reward_style_raw": float(buffer.r_style_raw.mean()),
        "reward_reg": float(buffer.r_reg.mean()),
        "tilt_contact_rate": float(buffer.info["tilt_contact"].mean()),
        "level_mean": float(buffer.info["level"].mean()),
    }
    return batch, diag


def augment_batch(batch: dict, registry: SkillRegistry, actor, critics,
                  obs_norm: ObsNormalizer, ks=MIRROR_IDS) -> dict:
    """Replicate every transition under each mirror.

    Rewards, advantages, and return targets are invariants and copy straight
    over; log-probs and value baselines are recomputed on the mirrored
    inputs so the first update epoch starts at ratio one for every replica.
    """
    xs, acts, logps, advs = [], [], [], []
    rets_f, rets_s, vo_f, vo_s = [], [], [], []
    ss, s2s, zs = [], [], []
    for k in ks:
        s_k = mirror_state(batch["s"], k)
        a_k = mirror_action(batch["a"], k)
        z_k = registry.mirror_cat(k, batch["z"])
        x_k = policy_input(obs_norm, s_k, z_k, batch["lam"])
        xs.append(x_k)
        zs.append(z_k)
        ss.append(s_k)
        s2s.append(mirror_state(batch["s2"], k))
        acts.append(a_k)
        logps.append(actor.logp(x_k, a_k))
        advs.append(batch["adv"])
        rets_f.append(batch["ret_f"])
        rets_s.append(batch["ret_style"])
        vo_f.append(np.stack(
            [np.stack([net.forward(x_k)[..., 0] for net in row], axis=-1)
             for row in critics.factor_nets], axis=-2))
        vo_s.append(critics.style_net.forward(x_k)[..., 0])
    return {
        "x": np.concatenate(xs, axis=0),
        "s": np.concatenate(ss, axis=0),
        "s2": np.concatenate(s2s, axis=0),
        "z": np.concatenate(zs, axis=0),
        "a": np.concatenate(acts, axis=0),
        "logp": np.concatenate(logps, axis=0).astype(np.float64),
        "adv": np.concatenate(advs, axis=0),
        "ret_f": np.concatenate(rets_f, axis=0),
        "ret_style": np.concatenate(rets_s, axis=0),
        "v_old_f": np.concatenate(vo_f, axis=0).astype(np.float64),
        "v_old_style": np.concatenate(vo_s, axis=0).astype(np.float64),
    }


def ppo_update(actor, critics: CriticBank, batch: dict, cfg: PpoConfig,
               rng: np.random.Generator) -> dict:
    """Epoch/minibatch loop with whole-batch KL early stopping.

    The influence mask is fixed once per update from the pre-update policy,
    so every epoch optimizes (and the KL stop measures) the same population.
    """
    x = batch["x"]
    total = x.shape[0]
    if total < cfg.minibatches:
        raise ConfigError("batch smaller than minibatch count")
    n, e = batch["ret_f"].shape[1], batch["ret_f"].shape[2]
    trust = trust_mask(actor.net.forward(x), batch["a"])

    actor_losses, critic_losses, kls, clip_fracs, entropies = [], [], [], [], []
    epochs_run = 0
    for _ in range(cfg.epochs):
        perm = rng.permutation(total)
        for mb in np.array_split(perm, cfg.minibatches):
            loss, grads, stats = ppo_actor_loss_and_grads(
                actor.net, x[mb], batch["a"][mb], batch["logp"][mb],
                batch["adv"][mb], cfg.clip, cfg.entropy_coef, trust=trust[mb])
            actor.opt.step(actor.net.params(), grads)
            actor_losses.append(loss)
            clip_fracs.append(stats["clip_fraction"])
            entropies.append(stats["entropy"])
            for i in range(n):
                for j in range(e):
                    closs, cgrads = ppo_critic_loss_and_grads(
                        critics.factor_nets[i][j], x[mb],
                        batch["ret_f"][mb, i, j], batch["v_old_f"][mb, i, j],
                        cfg.value_clip)
                    critics.factor_opts[i][j].step(
                        critics.factor_nets[i][j].params(), cgrads)
                    critic_losses.append(closs)
            sloss, sgrads = ppo_critic_loss_and_grads(
                critics.style_net, x[mb], batch["ret_style"][mb],
                batch["v_old_style"][mb], cfg.value_clip)
            critics.style_opt.step(critics.style_net.params(), sgrads)
            critic_losses.append(sloss)
        epochs_run += 1
        logp_new = np.asarray(actor.logp(x, batch["a"]), dtype=np.float64)
        logr = np.clip(logp_new - batch["logp"],
                       -RATIO_LOG_CLAMP, RATIO_LOG_CLAMP)[trust]
        kl = float(np.mean(np.exp(logr) - 1.0 - logr)) if logr.size else 0.0
        if not np.isfinite(kl):
            raise NumericError("non-finite approx KL")
        kls.append(kl)
        if kl > cfg.kl_target:
            break
    return {
        "actor_loss": float(np.mean(actor_losses)),
        "critic_loss": float(np.mean(critic_losses)),
        "approx_kl": kls[-1],
        "clip_fraction": float(np.mean(clip_fracs)),
        "entropy": float(np.mean(entropies)),
        "epochs_run": epochs_run,
        "trust_fraction": float(trust.mean()),
    }

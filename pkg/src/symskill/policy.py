"""Actor, per-stream critic bank, observation scaling, and the bundle that
groups everything checkpointable about the agent.

The actor and critics all consume the same flat input: scaled state, the
concatenated skill vector, and the factor weights. Observation scaling is
division by a running per-dimension RMS with no centering, so it commutes
exactly with the sign-flip mirrors.
"""
from __future__ import annotations

import numpy as np

from . import heads
from .errors import ConfigError, NumericError
from .mirrors import ACTION_DIM, STATE_DIM
from .nets import Adam, DenseNet, net_from_bytes, net_to_bytes
from .skills import SkillRegistry
from .usd import DiaynFactorModel, EmaNormalizer, MetraFactorModel, RndBonus

F32 = np.float32

OBS_BETA = 0.01
OBS_CLIP = 10.0
OBS_EPS = 1e-6


class ObsNormalizer:
    """Scale-only observation whitening: x / sqrt(ema second moment).

    No mean subtraction: a nonzero center would break the exact sign-flip
    equivariance that the mirror augmentation relies on.
    """

    def __init__(self, dim=STATE_DIM, beta=OBS_BETA, clip=OBS_CLIP, eps=OBS_EPS):
        if not 0.0 < beta < 1.0:
            raise ConfigError(f"obs beta must be in (0,1), got {beta}")
        if clip <= 0.0:
            raise ConfigError("obs clip must be positive")
        self.dim = int(dim)
        self.beta = float(beta)
        self.clip = float(clip)
        self.eps = float(eps)
        self.m2 = np.ones(self.dim, dtype=np.float64)

    def update(self, states):
        s = np.asarray(states, dtype=np.float64).reshape(-1, self.dim)
        if not np.isfinite(s).all():
            raise NumericError("non-finite states in normalizer update")
        batch = np.mean(s * s, axis=0)
        self.m2 = (1.0 - self.beta) * self.m2 + self.beta * batch

    def scale(self):
        return np.sqrt(self.m2 + self.eps).astype(F32)

    def normalize(self, states):
        s = np.asarray(states, dtype=F32)
        out = s / self.scale()
        c = F32(self.clip)
        return np.clip(out, -c, c)

    def to_dict(self):
        return {
            "dim": self.dim, "beta": self.beta, "clip": self.clip,
            "eps": self.eps, "m2": self.m2.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        n = cls(dim=d["dim"], beta=d["beta"], clip=d["clip"], eps=d["eps"])
        n.m2 = np.asarray(d["m2"], dtype=np.float64)
        if n.m2.shape != (n.dim,):
            raise ConfigError("normalizer state shape mismatch")
        return n


def policy_input(obs_norm: ObsNormalizer, states, z_cat, lam):
    """Flat network input (B, state + skills + weights)."""
    s = np.asarray(states, dtype=F32)
    z = np.asarray(z_cat, dtype=F32)
    w = np.asarray(lam, dtype=F32)
    if s.shape[-1] != obs_norm.dim:
        raise ConfigError(f"state width {s.shape[-1]} != {obs_norm.dim}")
    return np.concatenate([obs_norm.normalize(s), z, w], axis=-1)


class Actor:
    """Gaussian policy: one trunk emitting per-dimension mean and log std."""

    def __init__(self, in_dim, action_dim=ACTION_DIM, hidden=(64, 64),
                 lr=1e-3, grad_clip=1.0, rng=None):
        acts = ["elu"] * len(hidden) + ["identity"]
        self.action_dim = int(action_dim)
        self.net = DenseNet([in_dim, *hidden, 2 * self.action_dim], acts, rng=rng)
        self.opt = Adam(self.net.params(), lr=lr, clip=grad_clip)

    @property
    def in_dim(self):
        return self.net.in_dim

    def dist(self, x):
        return heads.gaussian_split(self.net.forward(x))

    def act(self, x, rng):
        mean, log_std = self.dist(x)
        a = heads.gaussian_sample(mean, log_std, rng)
        logp = heads.gaussian_logprob(mean, log_std, a)
        if not np.isfinite(logp).all():
            raise NumericError("non-finite action log-prob")
        return a, logp

    def mean_action(self, x):
        return self.dist(x)[0]

    def logp(self, x, actions):
        mean, log_std = self.dist(x)
        return heads.gaussian_logprob(mean, log_std, actions)

    def entropy(self, x):
        return heads.gaussian_entropy(self.dist(x)[1])

    def state_dict(self):
        return {"net": net_to_bytes(self.net), "opt": self.opt.state_dict(),
                "action_dim": self.action_dim}

    def load_state_dict(self, d):
        net = net_from_bytes(d["net"])
        if net.sizes != self.net.sizes:
            raise ConfigError("actor architecture mismatch in checkpoint")
        self.net = net
        self.opt.load_state_dict(d["opt"])
        self.action_dim = int(d["action_dim"])


class CriticBank:
    """One value-net ensemble per factor plus a single style critic.

    Stream order everywhere: factors in registry order, style last, matching
    the weight vector layout.
    """

    def __init__(self, in_dim, num_factors, ensemble=1, hidden=(64, 64),
                 lr=1e-3, grad_clip=1.0, lam_ucb=0.0, rng=None):
        if ensemble < 1:
            raise ConfigError("critic ensemble size must be >= 1")
        if num_factors < 1:
            raise ConfigError("need at least one factor critic")
        if rng is None:
            rng = np.random.default_rng(0)
        self.num_factors = int(num_factors)
        self.ensemble = int(ensemble)
        self.lam_ucb = float(lam_ucb)
        acts = ["elu"] * len(hidden) + ["identity"]
        sizes = [in_dim, *hidden, 1]

        def make():
            return DenseNet(sizes, acts, rng=rng)

        self.factor_nets = [[make() for _ in range(ensemble)]
                            for _ in range(num_factors)]
        self.style_net = make()
        self.factor_opts = [[Adam(n.params(), lr=lr, clip=grad_clip)
                             for n in row] for row in self.factor_nets]
        self.style_opt = Adam(self.style_net.params(), lr=lr, clip=grad_clip)

    def factor_values(self, x):
        """(B, N, E) value predictions."""
        cols = [[n.forward(x)[..., 0] for n in row] for row in self.factor_nets]
        return np.stack([np.stack(r, axis=-1) for r in cols], axis=-2)

    def style_value(self, x):
        return self.style_net.forward(x)[..., 0]

    def state_dict(self):
        return {
            "factors": [[net_to_bytes(n) for n in row] for row in self.factor_nets],
            "style": net_to_bytes(self.style_net),
            "factor_opts": [[o.state_dict() for o in row] for row in self.factor_opts],
            "style_opt": self.style_opt.state_dict(),
            "lam_ucb": self.lam_ucb,
        }

    def load_state_dict(self, d):
        rows = d["factors"]
        if len(rows) != self.num_factors or any(len(r) != self.ensemble for r in rows):
            raise ConfigError("critic bank shape mismatch in checkpoint")
        self.factor_nets = [[net_from_bytes(b) for b in row] for row in rows]
        self.style_net = net_from_bytes(d["style"])
        for orow, srow in zip(self.factor_opts, d["factor_opts"]):
            for o, s in zip(orow, srow):
                o.load_state_dict(s)
        self.style_opt.load_state_dict(d["style_opt"])
        self.lam_ucb = float(d["lam_ucb"])


class PolicyBundle:
    """Everything the agent needs at decision time, checkpointable as one.

    models maps factor name to its skill-discovery model; reward_norms has
    one EMA normalizer per factor plus "style".
    """

    def __init__(self, registry: SkillRegistry, actor: Actor, critics: CriticBank,
                 obs_norm: ObsNormalizer, models: dict, reward_norms: dict,
                 rnd: RndBonus | None = None):
        self.registry = registry
        self.actor = actor
        self.critics = critics
        self.obs_norm = obs_norm
        self.models = models
        self.reward_norms = reward_norms
        self.rnd = rnd
        for f in registry.factors:
            if f.name not in models:
                raise ConfigError(f"missing skill model for factor {f.name!r}")
            if f.name not in reward_norms:
                raise ConfigError(f"missing reward normalizer for {f.name!r}")
        if "style" not in reward_norms:
            raise ConfigError("missing style reward normalizer")

    def input_for(self, states, z_cat, lam):
        return policy_input(self.obs_norm, states, z_cat, lam)

    def act(self, states, z_cat, lam, rng):
        return self.actor.act(self.input_for(states, z_cat, lam), rng)

    def mean_action(self, states, z_cat, lam):
        return self.actor.mean_action(self.input_for(states, z_cat, lam))

    def state_dict(self):
        d = {
            "actor": self.actor.state_dict(),
            "critics": self.critics.state_dict(),
            "obs_norm": self.obs_norm.to_dict(),
            "models": {k: m.state_dict() for k, m in self.models.items()},
            "reward_norms": {k: n.to_dict() for k, n in self.reward_norms.items()},
        }
        if self.rnd is not None:
            d["rnd"] = self.rnd.state_dict()
        return d

    def load_state_dict(self, d):
        self.actor.load_state_dict(d["actor"])
        self.critics.load_state_dict(d["critics"])
        self.obs_norm = ObsNormalizer.from_dict(d["obs_norm"])
        for k, m in self.models.items():
            m.load_state_dict(d["models"][k])
        self.reward_norms = {k: EmaNormalizer.from_dict(v)
                             for k, v in d["reward_norms"].items()}
        if self.rnd is not None:
            self.rnd.load_state_dict(d["rnd"])


def make_bundle(registry: SkillRegistry, *, hidden=(64, 64), critic_hidden=(64, 64),
                usd_hidden=(64, 64), lr=1e-3, usd_lr=1e-4, grad_clip=1.0,
                ensemble=1, lam_ucb=0.0, dusdi=False, explore="none",
                seed=0) -> PolicyBundle:
    """Construct a fresh bundle wired for the given factor registry."""
    rng = np.random.default_rng(seed)
    n = registry.num_factors
    in_dim = STATE_DIM + registry.total_dim + (n + 1)
    actor = Actor(in_dim, hidden=hidden, lr=lr, grad_clip=grad_clip, rng=rng)
    critics = CriticBank(in_dim, n, ensemble=ensemble, hidden=critic_hidden,
                         lr=lr, grad_clip=grad_clip, lam_ucb=lam_ucb, rng=rng)
    models = {}
    ens = max(ensemble, 2) if explore == "ensemble" else 1
    for i, f in enumerate(registry.factors):
        if f.algorithm == "metra":
            models[f.name] = MetraFactorModel(f, hidden=usd_hidden, lr=usd_lr,
                                              rng=rng)
        else:
            comp = registry.complement_indices(i) if dusdi else ()
            models[f.name] = DiaynFactorModel(f, comp_idx=comp, hidden=usd_hidden,
                                              ensemble=ens, lr=usd_lr, rng=rng)
    norms = {f.name: EmaNormalizer() for f in registry.factors}
    norms["style"] = EmaNormalizer()
    rnd = RndBonus(STATE_DIM, rng=rng) if explore == "rnd" else None
    return PolicyBundle(registry, actor, critics, ObsNormalizer(), models,
                        norms, rnd=rnd)

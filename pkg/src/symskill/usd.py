"""Intrinsic-reward machinery for unsupervised skill discovery.

Per-factor models come in two kinds: discriminator factors score skills by
posterior log-density over a Dirichlet head (with an optional second
discriminator penalizing information leakage from the other factors), and
encoder factors score latent transitions against a commanded direction,
blending an alignment inner product with a norm-matching objective as the
encoder matures. Both train on plain arrays; slices into the state vector
are taken internally from the factor spec.
"""

from __future__ import annotations

import numpy as np

from . import heads
from .errors import ConfigError, NumericError
from .nets import Adam, DenseNet, net_from_bytes, net_to_bytes
from .skills import FactorSpec

KAPPA_INIT = 30.0
KAPPA_LR = 1e-4
KAPPA_SLACK = 1e-5
KAPPA_ABORT = 1e4
NM_SIGMA = 10.0
MIX_LO = 0.5
MIX_HI = 0.7
COS_EMA_DECAY = 0.9
DISC_LR = 1e-4
GAMMA_D = 0.1


def log_ratio_reward(log_q: np.ndarray, log_p: np.ndarray) -> np.ndarray:
    """The discriminability reward: posterior log-density minus prior's."""
    return np.asarray(log_q) - np.asarray(log_p)


def compute_alpha_mix(score: float) -> float:
    """Objective mix weight from the alignment score, switching over
    [0.5, 0.7]: pure alignment below, pure norm-matching above."""
    return float(np.clip((score - MIX_LO) / (MIX_HI - MIX_LO), 0.0, 1.0))


class EmaNormalizer:
    """Running-magnitude normalizer: r_hat = r / (m + eps), m an EMA of
    the batch mean |r|. Magnitude (not variance) form preserves sign."""

    def __init__(self, decay: float = 0.995, eps: float = 1e-6, init: float = 1.0):
        if not (0.0 < decay < 1.0):
            raise ConfigError("EMA decay must be in (0, 1)")
        self.decay = decay
        self.eps = eps
        self.m = float(init)

    def update(self, r: np.ndarray) -> None:
        r = np.asarray(r, dtype=np.float64)
        if not np.isfinite(r).all():
            raise NumericError("non-finite reward in normalizer update")
        self.m = self.decay * self.m + (1.0 - self.decay) * float(np.abs(r).mean())

    def normalize(self, r: np.ndarray) -> np.ndarray:
        return np.asarray(r, dtype=np.float64) / (self.m + self.eps)

    def to_dict(self) -> dict:
        return {"decay": self.decay, "eps": self.eps, "m": self.m}

    @classmethod
    def from_dict(cls, d: dict) -> "EmaNormalizer":
        out = cls(decay=d["decay"], eps=d["eps"])
        out.m = float(d["m"])
        return out


def _slice_cols(states: np.ndarray, idx: tuple[int, ...]) -> np.ndarray:
    states = np.asarray(states)
    if not np.isfinite(states).all():
        raise NumericError("non-finite state input")
    return states[..., list(idx)].astype(np.float32)


def diayn_nll_and_grads(net: DenseNet, x: np.ndarray, z: np.ndarray):
    """Mean negative posterior log-density and its parameter gradients."""
    raw = net.forward(x)
    conc = heads.concentration(raw)
    logp = heads.dirichlet_logprob(conc, z)
    b = x.shape[0]
    up = -(heads.dirichlet_logprob_grad_conc(conc, z)
           * heads.concentration_grad(raw).astype(np.float64)) / b
    grads, _ = net.backward(x, up.astype(raw.dtype))
    return float(-logp.mean()), grads


def metra_primal_loss_and_grads(encoder: DenseNet, x: np.ndarray, x2: np.ndarray,
                                z: np.ndarray, alpha: float, kappa: float,
                                slack: float = KAPPA_SLACK):
    """Negated dual-gradient primal objective with parameter gradients.

    Objective (maximized): (1-alpha) E[u.z] - alpha E[|u-z|^2]
    + kappa E[min(slack, 1 - |u|^2)], u = phi(s') - phi(s).
    """
    z = np.asarray(z, dtype=np.float64)
    p1 = encoder.forward(x).astype(np.float64)
    p2 = encoder.forward(x2).astype(np.float64)
    u = p2 - p1
    un2 = np.sum(u * u, axis=-1)
    b = x.shape[0]
    align = float(np.mean(np.sum(u * z, axis=-1)))
    sq = float(np.mean(np.sum((u - z) ** 2, axis=-1)))
    cons = float(np.mean(np.minimum(slack, 1.0 - un2)))
    loss = -((1.0 - alpha) * align - alpha * sq + kappa * cons)

    g = (1.0 - alpha) * z - alpha * 2.0 * (u - z)
    active = (1.0 - un2) < slack
    g = g + kappa * np.where(active[:, None], -2.0 * u, 0.0)
    g = g / b
    up = -g
    g2, _ = encoder.backward(x2, up)
    g1, _ = encoder.backward(x, -up)
    grads = [a2 + a1 for a2, a1 in zip(g2, g1)]
    extras = {"u": u, "un2": un2, "align": align, "sq": sq, "constraint_term": cons}
    return loss, grads, extras


class DiaynFactorModel:
    """Discriminator factor: ensemble posterior q(z_i|s_i) plus an optional
    leakage discriminator q(z_i|s_{not i})."""

    def __init__(
        self,
        factor: FactorSpec,
        comp_idx: tuple[int, ...] = (),
        hidden: tuple[int, ...] = (64, 64),
        ensemble: int = 1,
        lr: float = DISC_LR,
        gamma_d: float = GAMMA_D,
        rng: np.random.Generator | None = None,
    ):
        if factor.algorithm != "diayn":
            raise ConfigError("DiaynFactorModel wraps a diayn factor")
        if ensemble < 1:
            raise ConfigError("ensemble size must be >= 1")
        rng = rng or np.random.default_rng(0)
        self.factor = factor
        self.comp_idx = tuple(comp_idx)
        self.gamma_d = gamma_d
        in_dim = len(factor.state_slice)
        sizes = [in_dim, *hidden, factor.dim]
        acts = ["elu"] * len(hidden) + ["identity"]
        self.members = [DenseNet(sizes, acts, rng=rng) for _ in range(ensemble)]
        self.opts = [Adam(m.params(), lr=lr) for m in self.members]
        if self.comp_idx:
            nsizes = [len(self.comp_idx), *hidden, factor.dim]
            self.q_not = DenseNet(nsizes, acts, rng=rng)
            self.opt_not = Adam(self.q_not.params(), lr=lr)
        else:
            self.q_not = None
            self.opt_not = None

    @property
    def ensemble_size(self) -> int:
        return len(self.members)

    def _conc(self, net: DenseNet, x: np.ndarray) -> np.ndarray:
        return heads.concentration(net.forward(x))

    def member_log_densities(self, states: np.ndarray, z: np.ndarray) -> np.ndarray:
        """(E, B) per-member posterior log-densities."""
        x = _slice_cols(states, self.factor.state_slice)
        return np.stack(
            [heads.dirichlet_logprob(self._conc(m, x), z) for m in self.members]
        )

    def log_q(self, states: np.ndarray, z: np.ndarray) -> np.ndarray:
        return self.member_log_densities(states, z).mean(axis=0)

    def log_q_not(self, states: np.ndarray, z: np.ndarray) -> np.ndarray:
        if self.q_not is None:
            return np.zeros(np.asarray(states).shape[0])
        x = _slice_cols(states, self.comp_idx)
        return heads.dirichlet_logprob(self._conc(self.q_not, x), z)

    def posterior_mean(self, states: np.ndarray) -> np.ndarray:
        x = _slice_cols(states, self.factor.state_slice)
        means = [heads.dirichlet_mean(self._conc(m, x)) for m in self.members]
        return np.mean(means, axis=0)

    def log_prior(self, z: np.ndarray, alpha: float) -> np.ndarray:
        conc = np.full(self.factor.dim, float(alpha))
        return heads.dirichlet_logprob(conc, z)

    def reward(self, states: np.ndarray, z: np.ndarray, alpha: float,
               dusdi: bool = False) -> np.ndarray:
        r = log_ratio_reward(self.log_q(states, z), self.log_prior(z, alpha))
        if dusdi and self.q_not is not None and self.gamma_d != 0.0:
            r = r - self.gamma_d * self.log_q_not(states, z)
        if not np.isfinite(r).all():
            raise NumericError("non-finite discriminability reward")
        return r

    def accuracy(self, states: np.ndarray, z: np.ndarray) -> float:
        """Skill recovery score: mean cosine between z and posterior mean."""
        return float(np.mean(heads.cosine_rows(np.asarray(z), self.posterior_mean(states))))

    def _ascent_step(self, net: DenseNet, opt: Adam, x: np.ndarray,
                     z: np.ndarray) -> float:
        loss, grads = diayn_nll_and_grads(net, x, z)
        opt.step(net.params(), grads)
        return loss

    def update(self, states: np.ndarray, z: np.ndarray) -> dict:
        """One likelihood-ascent step on all discriminators.

        Accuracy is evaluated before the step, so the reported number is on
        data the current parameters have not fit yet.
        """
        z = np.asarray(z, dtype=np.float64)
        if z.ndim != 2 or z.shape[0] == 0:
            raise ConfigError("update needs a nonempty (B, dim) skill batch")
        acc = self.accuracy(states, z)
        x = _slice_cols(states, self.factor.state_slice)
        losses = [self._ascent_step(m, o, x, z)
                  for m, o in zip(self.members, self.opts)]
        diag = {"accuracy": acc, "disc_loss": float(np.mean(losses))}
        if self.q_not is not None:
            xn = _slice_cols(states, self.comp_idx)
            diag["leak_loss"] = self._ascent_step(self.q_not, self.opt_not, xn, z)
        return diag

    def state_dict(self) -> dict:
        d = {
            "members": [net_to_bytes(m) for m in self.members],
            "opts": [o.state_dict() for o in self.opts],
            "gamma_d": self.gamma_d,
        }
        if self.q_not is not None:
            d["q_not"] = net_to_bytes(self.q_not)
            d["opt_not"] = self.opt_not.state_dict()
        return d

    def load_state_dict(self, d: dict) -> None:
        self.members = [net_from_bytes(b) for b in d["members"]]
        self.opts = [Adam(m.params(), lr=DISC_LR) for m in self.members]
        for o, s in zip(self.opts, d["opts"]):
            o.load_state_dict(s)
        self.gamma_d = float(d["gamma_d"])
        if "q_not" in d and self.q_not is not None:
            self.q_not = net_from_bytes(d["q_not"])
            self.opt_not = Adam(self.q_not.params(), lr=DISC_LR)
            self.opt_not.load_state_dict(d["opt_not"])


class MetraFactorModel:
    """Encoder factor: phi maps the factor's state slice to R^d; reward is
    the latent transition scored against the commanded skill."""

    def __init__(
        self,
        factor: FactorSpec,
        hidden: tuple[int, ...] = (64, 64),
        lr: float = DISC_LR,
        kappa: float = KAPPA_INIT,
        lr_kappa: float = KAPPA_LR,
        slack: float = KAPPA_SLACK,
        sigma: float = NM_SIGMA,
        cos_decay: float = COS_EMA_DECAY,
        rng: np.random.Generator | None = None,
    ):
        if factor.algorithm != "metra":
            raise ConfigError("MetraFactorModel wraps a metra factor")
        rng = rng or np.random.default_rng(0)
        self.factor = factor
        sizes = [len(factor.state_slice), *hidden, factor.dim]
        acts = ["elu"] * len(hidden) + ["identity"]
        self.encoder = DenseNet(sizes, acts, rng=rng)
        self.opt = Adam(self.encoder.params(), lr=lr)
        self.kappa = float(kappa)
        self.lr_kappa = lr_kappa
        self.slack = slack
        self.sigma = sigma
        self.cos_decay = cos_decay
        self.cos_ema = 0.0

    @property
    def alpha_mix(self) -> float:
        return compute_alpha_mix(self.cos_ema)

    def phi(self, states: np.ndarray) -> np.ndarray:
        return self.encoder.forward(_slice_cols(states, self.factor.state_slice))

    def delta_phi(self, states: np.ndarray, next_states: np.ndarray) -> np.ndarray:
        return (self.phi(next_states).astype(np.float64)
                - self.phi(states).astype(np.float64))

    def alignment(self, states, next_states, z) -> np.ndarray:
        return np.sum(self.delta_phi(states, next_states) * np.asarray(z), axis=-1)

    def nm(self, states, next_states, z) -> np.ndarray:
        err = self.delta_phi(states, next_states) - np.asarray(z)
        return 1.0 / (1.0 + self.sigma * np.sum(err * err, axis=-1))

    def mixed(self, states, next_states, z) -> np.ndarray:
        a = self.alpha_mix
        if a <= 0.0:
            return self.alignment(states, next_states, z)
        if a >= 1.0:
            return self.nm(states, next_states, z)
        return (1.0 - a) * self.alignment(states, next_states, z) \
            + a * self.nm(states, next_states, z)

    def update(self, states, next_states, z) -> dict:
        """Dual-gradient step: primal ascent on the mixed objective under
        the unit-latent-speed constraint, then a projected dual step."""
        z = np.asarray(z, dtype=np.float64)
        x = _slice_cols(states, self.factor.state_slice)
        x2 = _slice_cols(next_states, self.factor.state_slice)
        u_pre = (self.encoder.forward(x2).astype(np.float64)
                 - self.encoder.forward(x).astype(np.float64))
        cos_batch = float(np.mean(heads.cosine_rows(u_pre, z)))
        self.cos_ema = self.cos_decay * self.cos_ema + (1.0 - self.cos_decay) * cos_batch
        a = self.alpha_mix

        loss, grads, ex = metra_primal_loss_and_grads(
            self.encoder, x, x2, z, a, self.kappa, self.slack
        )
        self.opt.step(self.encoder.params(), grads)

        satisfaction = float(np.mean(1.0 - ex["un2"]))
        self.kappa = max(0.0, self.kappa - self.lr_kappa * (satisfaction - self.slack))
        if self.kappa > KAPPA_ABORT:
            raise NumericError(
                f"dual multiplier diverged: kappa={self.kappa:.1f}, "
                f"constraint={satisfaction:.4f}"
            )
        u = ex["u"]
        nm = float(np.mean(1.0 / (1.0 + self.sigma * np.sum((u - z) ** 2, axis=-1))))
        return {
            "loss": loss,
            "align": ex["align"],
            "nm": nm,
            "constraint": satisfaction,
            "kappa": self.kappa,
            "alpha_mix": a,
            "cos_ema": self.cos_ema,
            "cos_batch": cos_batch,
        }

    def state_dict(self) -> dict:
        return {
            "encoder": net_to_bytes(self.encoder),
            "opt": self.opt.state_dict(),
            "kappa": self.kappa,
            "cos_ema": self.cos_ema,
        }

    def load_state_dict(self, d: dict) -> None:
        self.encoder = net_from_bytes(d["encoder"])
        self.opt = Adam(self.encoder.params(), lr=self.opt.lr)
        self.opt.load_state_dict(d["opt"])
        self.kappa = float(d["kappa"])
        self.cos_ema = float(d["cos_ema"])


def symmetrized_reward(reward_fn, s, a, s2, z, factor: FactorSpec) -> np.ndarray:
    """Group-average of a reward over the four mirrored transitions."""
    from .mirrors import MIRROR_IDS, mirror_action, mirror_state
    from .skills import mirror_skill

    total = None
    for k in MIRROR_IDS:
        r = reward_fn(
            mirror_state(np.asarray(s), k),
            mirror_action(np.asarray(a), k),
            mirror_state(np.asarray(s2), k),
            mirror_skill(k, factor, np.asarray(z)),
        )
        total = r if total is None else total + r
    return total / len(MIRROR_IDS)


class RndBonus:
    """Novelty bonus: squared error of a trained predictor against a frozen
    random target network."""

    def __init__(self, in_dim: int, out_dim: int = 16,
                 hidden: tuple[int, ...] = (64, 64), lr: float = 1e-3,
                 rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        sizes = [in_dim, *hidden, out_dim]
        acts = ["elu"] * len(hidden) + ["identity"]
        self.target = DenseNet(sizes, acts, rng=rng, out_scale=1.0)
        self.predictor = DenseNet(sizes, acts, rng=rng, out_scale=1.0)
        self.opt = Adam(self.predictor.params(), lr=lr)
        self.running_mean = 0.0

    def bonus(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float32)
        err = self.predictor.forward(x).astype(np.float64) \
            - self.target.forward(x).astype(np.float64)
        return np.sum(err * err, axis=-1)

    def update(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=np.float32)
        pred = self.predictor.forward(x)
        targ = self.target.forward(x)
        err = (pred - targ).astype(np.float64)
        b = x.shape[0]
        up = (2.0 * err / b).astype(np.float32)
        grads, _ = self.predictor.backward(x, up)
        self.opt.step(self.predictor.params(), grads)
        mean_bonus = float(np.sum(err * err, axis=-1).mean())
        self.running_mean = 0.99 * self.running_mean + 0.01 * mean_bonus
        return mean_bonus

    def state_dict(self) -> dict:
        return {
            "target": net_to_bytes(self.target),
            "predictor": net_to_bytes(self.predictor),
            "opt": self.opt.state_dict(),
            "running_mean": self.running_mean,
        }

    def load_state_dict(self, d: dict) -> None:
        self.target = net_from_bytes(d["target"])
        self.predictor = net_from_bytes(d["predictor"])
        self.opt.load_state_dict(d["opt"])
        self.running_mean = float(d["running_mean"])


def exploration_bonus(mode: str, *, model: DiaynFactorModel | None = None,
                      rnd: RndBonus | None = None, states: np.ndarray | None = None,
                      z: np.ndarray | None = None) -> np.ndarray:
    """Optional novelty stream: disagreement of the posterior ensemble or
    random-network distillation error."""
    if mode == "none":
        n = 0 if states is None else np.asarray(states).shape[0]
        return np.zeros(n)
    if mode == "ensemble":
        if model is None or model.ensemble_size < 2:
            raise ConfigError("ensemble bonus needs a model with >= 2 members")
        logs = model.member_log_densities(states, z)
        return np.var(logs, axis=0)
    if mode == "rnd":
        if rnd is None:
            raise ConfigError("rnd bonus needs a RndBonus instance")
        return rnd.bonus(states)
    raise ConfigError(f"unknown exploration bonus mode {mode!r}")

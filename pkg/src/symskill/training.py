"""Training driver: one object owning the environment, policy bundle, prior
curricula, and per-env skill assignments, advancing them one iteration at a
time and checkpointing the whole state for exact resume.

Iteration order: collect a rollout under frozen normalizers, compute
per-stream advantages on the original transitions, replicate the batch under
the mirror group, fit the skill-discovery models and critics and policy on
the replicated batch, then let the observation normalizer and priors advance.
"""
from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np

from .checkpoint import bundle_meta, load_checkpoint, rebuild_bundle, save_checkpoint
from .config import RunConfig, save_config
from .env import PointQuadEnv
from .errors import ConfigError
from .mirrors import MIRROR_IDS
from .policy import PolicyBundle, make_bundle
from .ppo import (
    SkillState,
    augment_batch,
    collect_rollout,
    compute_advantages,
    ppo_update,
)
from .skills import PriorState, advance_prior

IDENTITY_ONLY = (1,)


class Trainer:
    def __init__(self, cfg: RunConfig, out_dir=None):
        cfg.validate()
        self.cfg = cfg
        self.registry = cfg.registry()
        self.rng = np.random.default_rng(cfg.seed)
        self.env = PointQuadEnv(
            cfg.num_envs, cfg=cfg.env, style=cfg.effective_style(),
            seed=cfg.seed, difficulty=cfg.difficulty)
        self.bundle = make_bundle(
            self.registry,
            hidden=tuple(cfg.nets.actor_hidden),
            critic_hidden=tuple(cfg.nets.critic_hidden),
            usd_hidden=tuple(cfg.nets.usd_hidden),
            lr=cfg.nets.lr,
            usd_lr=cfg.nets.usd_lr,
            grad_clip=cfg.ppo.grad_clip,
            ensemble=cfg.ensemble,
            lam_ucb=cfg.lam_ucb,
            dusdi=cfg.dusdi,
            explore=cfg.explore,
            seed=cfg.seed,
        )
        self.prior = PriorState.initial(self.registry)
        n_w = self.registry.num_factors + 1
        fixed = None if cfg.weighting else np.full(n_w, 1.0 / np.sqrt(n_w))
        self.skill_state = SkillState.initial(
            self.registry, self.prior, cfg.num_envs, self.rng,
            cfg.ppo.resample_period, fixed_lam=fixed)
        self.iteration = 0
        self.out_dir = Path(out_dir) if out_dir is not None else cfg.resolve_out_dir()
        self._metrics_fh = None

    # ------------------------------------------------------------- steps

    def train_iteration(self) -> dict:
        cfg = self.cfg
        t0 = time.perf_counter()
        buf = collect_rollout(
            self.bundle, self.env, self.prior, self.skill_state,
            cfg.ppo.horizon, self.rng, period=cfg.ppo.resample_period,
            explore_mode=cfg.explore, explore_coef=cfg.explore_coef,
            sym_reward=cfg.sym_reward)
        batch, diag = compute_advantages(buf, cfg.ppo, lam_ucb=cfg.lam_ucb)
        ks = MIRROR_IDS if cfg.symmetry else IDENTITY_ONLY
        aug = augment_batch(batch, self.registry, self.bundle.actor,
                            self.bundle.critics, self.bundle.obs_norm, ks=ks)
        usd_diag, prior_metrics = self._update_usd(aug)
        pd = ppo_update(self.bundle.actor, self.bundle.critics, aug,
                        cfg.ppo, self.rng)
        if self.bundle.rnd is not None:
            self.bundle.rnd.update(aug["s2"])
        self.bundle.obs_norm.update(batch["s"])
        self.prior = advance_prior(self.prior, self.registry, prior_metrics)
        self.iteration += 1

        record = {
            "iteration": self.iteration,
            "reward_factors": {
                f.name: float(m) for f, m in
                zip(self.registry.factors, diag["reward_factors_raw"])},
            "reward_style": diag["reward_style_raw"],
            "reward_reg": diag["reward_reg"],
            "tilt_contact_rate": diag["tilt_contact_rate"],
            "level_mean": diag["level_mean"],
            "approx_kl": pd["approx_kl"],
            "clip_fraction": pd["clip_fraction"],
            "entropy": pd["entropy"],
            "epochs_run": pd["epochs_run"],
            "trust_fraction": pd["trust_fraction"],
            "actor_loss": pd["actor_loss"],
            "critic_loss": pd["critic_loss"],
            "usd": usd_diag,
            "seconds": time.perf_counter() - t0,
        }
        return record

    def _update_usd(self, aug: dict) -> tuple[dict, dict]:
        """Fit skill-discovery models on the mirror-replicated transitions.

        Returns per-factor diagnostics plus the scalar each prior curriculum
        consumes (posterior accuracy for simplex factors, reward-mix
        coefficient for direction factors).
        """
        zs = self.registry.split(aug["z"])
        usd_diag, prior_metrics = {}, {}
        for f, z_i in zip(self.registry.factors, zs):
            model = self.bundle.models[f.name]
            for _ in range(int(self.cfg.nets.usd_updates)):
                if f.algorithm == "diayn":
                    d = model.update(aug["s2"], z_i)
                    prior_metrics[f.name] = d["accuracy"]
                else:
                    d = model.update(aug["s"], aug["s2"], z_i)
                    prior_metrics[f.name] = d["alpha_mix"]
            usd_diag[f.name] = d
        return usd_diag, prior_metrics

    # --------------------------------------------------------------- run

    def run(self, iterations: int | None = None) -> dict:
        """Train for the configured number of iterations, appending one JSON
        line per iteration and checkpointing periodically. On failure a
        checkpoint of the crashed state is written before re-raising."""
        total = self.cfg.iterations if iterations is None else iterations
        self.out_dir.mkdir(parents=True, exist_ok=True)
        cfg_path = self.out_dir / "config.yaml"
        if not cfg_path.exists():
            save_config(self.cfg, cfg_path)
        last = {}
        with open(self.out_dir / "metrics.jsonl", "a") as fh:
            self._metrics_fh = fh
            try:
                while self.iteration < total:
                    last = self.train_iteration()
                    fh.write(json.dumps(last) + "\n")
                    fh.flush()
                    if self.iteration % self.cfg.checkpoint_every == 0:
                        self.save(self.ckpt_path(self.iteration))
                        self.save(self.out_dir / "checkpoint.json")
            except Exception:
                self.save(self.out_dir / "checkpoint_failure.json")
                raise
            finally:
                self._metrics_fh = None
        self.save(self.out_dir / "checkpoint.json")
        return last

    def ckpt_path(self, iteration: int) -> Path:
        return self.out_dir / "checkpoints" / f"iter_{iteration:06d}.json"

    # -------------------------------------------------------- persistence

    def _meta(self) -> dict:
        n = self.cfg.nets
        return bundle_meta(
            self.registry, hidden=tuple(n.actor_hidden),
            critic_hidden=tuple(n.critic_hidden),
            usd_hidden=tuple(n.usd_hidden), lr=n.lr, usd_lr=n.usd_lr,
            grad_clip=self.cfg.ppo.grad_clip, ensemble=self.cfg.ensemble,
            lam_ucb=self.cfg.lam_ucb, dusdi=self.cfg.dusdi,
            explore=self.cfg.explore)

    def save(self, path) -> None:
        extras = {
            "config": self.cfg.to_dict(),
            "iteration": self.iteration,
            "prior": self.prior.to_dict(),
            "skill_state": self.skill_state.to_dict(),
            "env": self.env.snapshot(),
            "rng": self.rng.bit_generator.state,
        }
        save_checkpoint(path, kind="train", meta=self._meta(),
                        state=self.bundle.state_dict(), extras=extras)

    @classmethod
    def resume(cls, path, out_dir=None) -> "Trainer":
        ck = load_checkpoint(path)
        if ck["kind"] != "train":
            raise ConfigError(
                f"checkpoint kind {ck['kind']!r} cannot resume training")
        extras = ck["extras"]
        cfg = RunConfig.from_dict(extras["config"]).validate()
        tr = cls(cfg, out_dir=out_dir)
        tr.bundle.load_state_dict(ck["state"])
        tr.prior = PriorState.from_dict(extras["prior"])
        tr.skill_state = SkillState.from_dict(extras["skill_state"])
        tr.env.restore(extras["env"])
        tr.rng.bit_generator.state = extras["rng"]
        tr.iteration = int(extras["iteration"])
        return tr

    def export_bundle(self, path) -> None:
        """Inference checkpoint: bundle parameters plus the frozen prior."""
        extras = {
            "config": self.cfg.to_dict(),
            "iteration": self.iteration,
            "prior": self.prior.to_dict(),
        }
        save_checkpoint(path, kind="bundle", meta=self._meta(),
                        state=self.bundle.state_dict(), extras=extras)


def load_inference(path) -> tuple[PolicyBundle, PriorState, dict]:
    """Rebuild a bundle and its prior from any checkpoint kind."""
    ck = load_checkpoint(path)
    bundle = rebuild_bundle(ck["meta"])
    bundle.load_state_dict(ck["state"])
    prior_d = ck["extras"].get("prior")
    registry = bundle.registry
    prior = (PriorState.from_dict(prior_d) if prior_d
             else PriorState.initial(registry))
    return bundle, prior, ck["extras"]

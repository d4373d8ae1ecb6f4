"""Evaluation metric tests: score maps, diversity, safety counters,
symmetry audit, and the skill-flip probe."""
from types import SimpleNamespace

import numpy as np
import pytest

from symskill.env import EnvConfig, PointQuadEnv, StyleRegConfig
from symskill.errors import ConfigError
from symskill.evaluation import (
    _masked_cos,
    diversity_from_means,
    evaluate_bundle,
    skill_flip_response,
    skill_rollout_stats,
    style_score,
    style_worst,
    symmetry_audit,
    uniform_lambda,
    world_velocity,
)
from symskill.mirrors import mirror_state
from symskill.policy import make_bundle
from symskill.skills import FactorSpec, PriorState, SkillRegistry, sample_skills
from symskill.usd import MetraFactorModel

# Monte-Carlo chance line for a 4-way simplex skill against a pinned uniform
# posterior mean: E[cos(z, u)] = E[1/(2||z||)] over z ~ Dir(1,1,1,1),
# estimated at 2e6 draws (sem 6.7e-5).
CHANCE_COS_D4_UNIFORM = 0.80885


def make_registry():
    return SkillRegistry([
        FactorSpec("position", (0, 1), "metra", 2, "geometric"),
        FactorSpec("heading_rate", (6,), "diayn", 4, "latin4"),
    ])


def make_setup(seed=0, **kw):
    reg = make_registry()
    bundle = make_bundle(reg, seed=seed, **kw)
    return reg, bundle, PriorState.initial(reg)


def small_eval(bundle, prior, **kw):
    kw.setdefault("n_skills", 8)
    kw.setdefault("steps", 10)
    kw.setdefault("allow_small", True)
    kw.setdefault("batch", 8)
    return evaluate_bundle(bundle, prior, **kw)


# -------------------------------------------------------------- score maps

def test_style_worst_desk_defaults():
    w = style_worst(StyleRegConfig(), EnvConfig())
    # 0.1*4 + 10*0.35^2 + 10*2*0.36 + 0.4*6 + 0.2*24 + 1.0
    assert w == pytest.approx(0.4 + 1.225 + 7.2 + 2.4 + 4.8 + 1.0, abs=1e-12)


def test_style_score_affine_map():
    assert style_score(0.0, 17.025) == 1.0
    assert style_score(-17.025, 17.025) == pytest.approx(0.0, abs=1e-12)
    assert style_score(-100.0, 17.025) == -1.0
    assert style_score(5.0, 17.025) == 1.0
    assert style_score(-1.0, 0.0) is None


def test_masked_cos_exclusions():
    a = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 2.0]])
    b = np.array([[2.0, 0.0], [1.0, 1.0], [0.0, -1.0]])
    s, n = _masked_cos(a, b)
    assert n == 2
    assert s == pytest.approx(1.0 - 1.0)
    s0, n0 = _masked_cos(np.zeros((4, 3)), np.ones((4, 3)))
    assert (s0, n0) == (0.0, 0)


def test_diayn_chance_baseline_matches_frozen_oracle():
    rng = np.random.default_rng(11)
    z = rng.dirichlet(np.ones(4), size=50_000)
    means = np.full_like(z, 0.25)
    s, n = _masked_cos(z, means)
    assert n == z.shape[0]
    assert s / n == pytest.approx(CHANCE_COS_D4_UNIFORM, abs=3e-3)


def test_metra_perfect_alignment_scores_one():
    f = FactorSpec("position", (0, 1), "metra", 2, "geometric")
    model = MetraFactorModel(f, hidden=())
    w, b = model.encoder.params()
    w[:] = np.eye(2, dtype=np.float32)
    b[:] = 0.0
    rng = np.random.default_rng(3)
    z = rng.standard_normal((64, 2))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    s = np.zeros((64, 10), dtype=np.float32)
    s2 = s.copy()
    s2[:, :2] = 0.37 * z
    cs, cn = _masked_cos(model.delta_phi(s, s2), z)
    assert cn == 64
    assert cs / cn == pytest.approx(1.0, abs=1e-6)


def test_world_velocity_frames():
    s = np.zeros((2, 10), dtype=np.float32)
    s[0, 2:6] = [1.0, 0.0, 0.5, -0.2]   # heading +x: world = body
    s[1, 2:6] = [0.0, 1.0, 0.5, -0.2]   # heading +y: 90 degree rotation
    v = world_velocity(s)
    assert np.allclose(v[0], [0.5, -0.2])
    assert np.allclose(v[1], [0.2, 0.5])


# -------------------------------------------------------------- diversity

def test_diversity_hand_example():
    means = np.zeros((2, 10))
    means[1, 0] = 2.0
    assert diversity_from_means(means, (0, 1)) == pytest.approx(1.0)


def test_diversity_identical_rollouts_zero():
    means = np.tile(np.arange(10.0), (7, 1))
    assert diversity_from_means(means, (0, 1)) == 0.0


def test_diversity_translation_invariance_and_scaling():
    rng = np.random.default_rng(5)
    means = rng.standard_normal((30, 10))
    base = diversity_from_means(means, (0, 1))
    shifted = means.copy()
    shifted[:, :2] += [13.0, -4.0]
    assert diversity_from_means(shifted, (0, 1)) == pytest.approx(base)
    assert diversity_from_means(means * 3.0, (0, 1)) == pytest.approx(3.0 * base)


# -------------------------------------------------------- evaluate_bundle

def test_eval_report_schema_and_bounds():
    _, bundle, prior = make_setup(seed=1)
    rep = small_eval(bundle, prior, seed=4)
    assert set(rep.scores) == {"position", "heading_rate", "style"}
    for v in rep.scores.values():
        assert v is None or -1.0 <= v <= 1.0
    assert set(rep.diversity) == {"position", "heading_rate"}
    assert all(d >= 0.0 for d in rep.diversity.values())
    assert 0.0 <= rep.safety["tilt_violation_pct_per_step"] <= 100.0
    assert rep.safety["flips_per_rollout"] >= 0.0
    rec = rep.to_record()
    assert rec["n_skills"] == 8 and rec["steps"] == 10


def test_eval_deterministic():
    _, bundle, prior = make_setup(seed=2)
    r1 = small_eval(bundle, prior, seed=9).to_record()
    _, bundle2, prior2 = make_setup(seed=2)
    r2 = small_eval(bundle2, prior2, seed=9).to_record()
    assert r1 == r2


def test_eval_precondition_gates():
    _, bundle, prior = make_setup()
    with pytest.raises(ConfigError):
        evaluate_bundle(bundle, prior, n_skills=50)
    with pytest.raises(ConfigError):
        evaluate_bundle(bundle, prior, n_skills=500)


def test_eval_style_missing_when_unweighted():
    _, bundle, prior = make_setup()
    zero = StyleRegConfig(speed=0, height=0, flat=0, action_norm=0,
                          action_rate=0, tilt_contact=0, flip=0)
    rep = small_eval(bundle, prior, style_cfg=zero)
    assert rep.scores["style"] is None


def test_rollout_stats_shape_gate():
    reg, bundle, prior = make_setup()
    zs = np.zeros((4, reg.total_dim + 1))
    with pytest.raises(ConfigError):
        skill_rollout_stats(bundle, zs, uniform_lambda(2, 4),
                            env_cfg=EnvConfig(), style_cfg=StyleRegConfig(),
                            steps=2, seed=0)


def test_safety_counter_saturating_roll():
    reg, bundle, prior = make_setup()
    const = np.zeros(6, dtype=np.float32)
    const[4] = 1.0
    bundle.actor = SimpleNamespace(
        mean_action=lambda x: np.tile(const, (x.shape[0], 1)))
    rng = np.random.default_rng(0)
    zs = sample_skills(prior, reg, rng, 4)
    lam = uniform_lambda(2, 4)
    short = skill_rollout_stats(bundle, zs, lam, env_cfg=EnvConfig(),
                                style_cfg=StyleRegConfig(), steps=100, seed=1,
                                with_scores=False)
    rate = short.tilt_steps / short.total_steps
    assert rate > 0.5
    longer = skill_rollout_stats(bundle, zs, lam, env_cfg=EnvConfig(),
                                 style_cfg=StyleRegConfig(), steps=300, seed=1,
                                 with_scores=False)
    assert longer.tilt_steps / longer.total_steps > rate


# --------------------------------------------------------- symmetry audit

def zero_action_bundle(seed=0):
    reg, bundle, prior = make_setup(seed=seed)
    params = bundle.actor.net.params()
    params[-2][:] = 0.0
    params[-1][:] = 0.0
    return reg, bundle, prior


def test_symmetry_audit_zero_for_equivariant_policy():
    _, bundle, prior = zero_action_bundle()
    out = symmetry_audit(bundle, prior, "position", n_skills=6, steps=40,
                         seed=2)
    assert out["gap"] == 0.0
    assert out["gap_full_state"] == 0.0
    assert set(out["gap_per_k"]) == {2, 3, 4}


def test_symmetry_audit_orientation_symmetric():
    reg, bundle, prior = make_setup(seed=7)
    rng = np.random.default_rng(1)
    zs = sample_skills(prior, reg, rng, 6)
    lam = uniform_lambda(2, 6)
    probe = PointQuadEnv(6, seed=5)
    init = probe.states.copy()
    k = 2
    a = skill_rollout_stats(bundle, zs, lam, env_cfg=EnvConfig(),
                            style_cfg=StyleRegConfig(), steps=30, seed=3,
                            with_scores=False, init_states=init)
    b = skill_rollout_stats(bundle, reg.mirror_cat(k, zs), lam,
                            env_cfg=EnvConfig(), style_cfg=StyleRegConfig(),
                            steps=30, seed=3, with_scores=False,
                            init_states=mirror_state(init, k))
    fwd = np.linalg.norm(a.mean_states - mirror_state(b.mean_states, k),
                         axis=-1)
    rev = np.linalg.norm(b.mean_states - mirror_state(a.mean_states, k),
                         axis=-1)
    assert np.allclose(fwd, rev)
    assert fwd.mean() > 0.0


def test_symmetry_audit_input_gates():
    _, bundle, prior = make_setup()
    with pytest.raises(ConfigError):
        symmetry_audit(bundle, prior, "nope")
    reg2 = SkillRegistry([FactorSpec("position", (0, 1), "metra", 2, "none")])
    bundle2 = make_bundle(reg2, seed=0)
    with pytest.raises(ConfigError):
        symmetry_audit(bundle2, PriorState.initial(reg2), "position")


# ------------------------------------------------------------- flip probe

def test_skill_flip_response_smoke_and_gates():
    _, bundle, prior = make_setup(seed=4)
    out = skill_flip_response(bundle, prior, "position", n_trials=8,
                              pre_steps=20, post_steps=15, seed=6)
    assert 0.0 <= out["fraction_reversed"] <= 1.0
    out2 = skill_flip_response(bundle, prior, "position", n_trials=8,
                               pre_steps=20, post_steps=15, seed=6)
    assert out == out2
    with pytest.raises(ConfigError):
        skill_flip_response(bundle, prior, "heading_rate")
    with pytest.raises(ConfigError):
        skill_flip_response(bundle, prior, "missing")

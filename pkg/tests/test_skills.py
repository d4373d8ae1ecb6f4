import numpy as np
import pytest

from symskill import heads
from symskill.errors import ConfigError
from symskill.mirrors import MIRROR_IDS, compose
from symskill.skills import (
    ALPHA_LO,
    FactorSpec,
    PriorState,
    SkillCommand,
    SkillRegistry,
    advance_prior,
    factor_from_dict,
    mirror_consistency_check,
    mirror_skill,
    project_norm_range,
    project_simplex,
    project_weights,
    resample_mask,
    resample_schedule,
    sample_skill,
    sample_skills,
    sample_weights,
)


def make_registry():
    return SkillRegistry([
        FactorSpec("position", (0, 1), "metra", 2, "geometric"),
        FactorSpec("heading_rate", (6,), "diayn", 2, "latin2"),
        FactorSpec("posture", (8, 9), "diayn", 8, "latin4"),
        FactorSpec("free", (7,), "diayn", 3, "none"),
    ])


def test_factor_validation():
    with pytest.raises(ConfigError):
        FactorSpec("a", (0, 1, 4, 5), "metra", 4, "geometric")  # metra dim > 3
    with pytest.raises(ConfigError):
        FactorSpec("a", (0,), "diayn", 6, "latin4")  # not divisible by 4
    with pytest.raises(ConfigError):
        FactorSpec("a", (0,), "diayn", 3, "latin2")  # not divisible by 2
    with pytest.raises(ConfigError):
        FactorSpec("a", (0, 1), "metra", 3, "geometric")  # dim != slice len
    with pytest.raises(ConfigError):
        FactorSpec("a", (0, 1), "diayn", 4, "geometric")  # geometric needs metra
    with pytest.raises(ConfigError):
        FactorSpec("a", (0, 99), "metra", 2, "geometric")  # bad index
    with pytest.raises(ConfigError):
        FactorSpec("a", (0,), "diayn", 4, "spin")  # unknown mirror


def test_factor_dict_roundtrip():
    f = FactorSpec("position", (0, 1), "metra", 2, "geometric")
    assert factor_from_dict(f.to_dict()) == f
    with pytest.raises(ConfigError):
        factor_from_dict({"name": "x"})


@pytest.mark.parametrize("a", MIRROR_IDS)
@pytest.mark.parametrize("b", MIRROR_IDS)
def test_mirror_composition_all_modes(a, b):
    rng = np.random.default_rng(3)
    for f in make_registry().factors:
        z = rng.standard_normal((16, f.dim))
        lhs = mirror_skill(a, f, mirror_skill(b, f, z))
        rhs = mirror_skill(compose(a, b), f, z)
        assert np.array_equal(lhs, rhs)


def test_mirror_identity():
    rng = np.random.default_rng(4)
    for f in make_registry().factors:
        z = rng.standard_normal(f.dim)
        assert np.array_equal(mirror_skill(1, f, z), z)


def test_latin4_block_layout():
    f = FactorSpec("posture", (8, 9), "diayn", 8, "latin4")
    z = np.arange(8.0)  # blocks a=[0,1] b=[2,3] c=[4,5] d=[6,7]
    assert list(mirror_skill(2, f, z)) == [4, 5, 6, 7, 0, 1, 2, 3]  # [c,d,a,b]
    assert list(mirror_skill(3, f, z)) == [2, 3, 0, 1, 6, 7, 4, 5]  # [b,a,d,c]
    assert list(mirror_skill(4, f, z)) == [6, 7, 4, 5, 2, 3, 0, 1]  # [d,c,b,a]


def test_latin2_swap():
    f = FactorSpec("heading_rate", (6,), "diayn", 2, "latin2")
    z = np.array([0.7, 0.3])
    assert np.array_equal(mirror_skill(2, f, z), [0.3, 0.7])
    assert np.array_equal(mirror_skill(3, f, z), [0.3, 0.7])
    assert np.array_equal(mirror_skill(4, f, z), z)


def test_geometric_uses_state_signs():
    f = FactorSpec("position", (0, 1), "metra", 2, "geometric")
    z = np.array([0.5, -0.2])
    # k=2 flips py -> second component sign flips
    assert np.array_equal(mirror_skill(2, f, z), [0.5, 0.2])
    # k=3 flips py as well, px kept
    assert np.array_equal(mirror_skill(3, f, z), [0.5, 0.2])
    # k=4 keeps both position components
    assert np.array_equal(mirror_skill(4, f, z), z)


def test_mirror_preserves_symmetric_dirichlet_density_exactly():
    rng = np.random.default_rng(9)
    for f in [FactorSpec("p", (8, 9), "diayn", 8, "latin4"),
              FactorSpec("h", (6,), "diayn", 4, "latin2")]:
        z = heads.dirichlet_sample(0.3, (32, f.dim), rng)
        base = heads.dirichlet_logprob(np.full(f.dim, 0.3), z)
        for k in MIRROR_IDS:
            m = heads.dirichlet_logprob(np.full(f.dim, 0.3), mirror_skill(k, f, z))
            assert np.array_equal(base, m)


def test_geometric_mirror_preserves_norm_exactly():
    rng = np.random.default_rng(10)
    f = FactorSpec("position", (0, 1), "metra", 2, "geometric")
    z = rng.standard_normal((64, 2))
    for k in MIRROR_IDS:
        m = mirror_skill(k, f, z)
        assert np.array_equal(np.sum(m * m, axis=-1), np.sum(z * z, axis=-1))


def test_registry_split_concat_roundtrip():
    reg = make_registry()
    rng = np.random.default_rng(0)
    z = rng.standard_normal((5, reg.total_dim))
    parts = reg.split(z)
    assert [p.shape[-1] for p in parts] == [2, 2, 8, 3]
    assert np.array_equal(reg.concat(parts), z)
    with pytest.raises(ConfigError):
        reg.split(z[:, :-1])


def test_registry_complement_indices():
    reg = make_registry()
    assert reg.complement_indices(0) == (6, 7, 8, 9)
    assert reg.complement_indices(1) == (0, 1, 7, 8, 9)


def test_registry_rejects_duplicates():
    f = FactorSpec("a", (0,), "diayn", 2, "none")
    with pytest.raises(ConfigError):
        SkillRegistry([f, f])
    with pytest.raises(ConfigError):
        SkillRegistry([])


def test_registry_dict_for_ui():
    d = make_registry().to_registry_dict()
    assert d["total_dim"] == 15
    assert d["num_weights"] == 5
    assert d["factors"][0]["mirror"] == "geometric"


def test_metra_phase1_unit_norm():
    reg = make_registry()
    prior = PriorState.initial(reg)
    f = reg.factor("position")
    z = sample_skill(prior, f, np.random.default_rng(1), n=2000)
    assert np.allclose(np.linalg.norm(z, axis=-1), 1.0, atol=1e-9)


def test_metra_phase2_norm_range():
    reg = make_registry()
    prior = PriorState.initial(reg)
    prior.norm_lo["position"] = 0.3
    prior.norm_hi["position"] = 1.5
    z = sample_skill(prior, reg.factor("position"), np.random.default_rng(2), n=5000)
    norms = np.linalg.norm(z, axis=-1)
    assert norms.min() >= 0.3 - 1e-9
    assert norms.max() <= 1.5 + 1e-9
    assert norms.std() > 0.1  # actually spread across the range


def test_diayn_sparse_alpha_concentrates():
    # frozen 1e6-draw oracle: P(max > 0.9) = 0.7245, P(max > 0.5) = 0.9903
    f = FactorSpec("p", (0, 1), "diayn", 4, "latin4")
    prior = PriorState(alpha={"p": 0.05})
    z = sample_skill(prior, f, np.random.default_rng(3), n=200_000)
    mx = z.max(axis=-1)
    frac9 = (mx > 0.9).mean()
    assert 0.717 < frac9 < 0.732
    assert (mx > 0.5).mean() > 0.95


def test_diayn_uniform_alpha_mean():
    f = FactorSpec("p", (0, 1), "diayn", 4, "latin4")
    prior = PriorState(alpha={"p": 1.0})
    z = sample_skill(prior, f, np.random.default_rng(4), n=100_000)
    # Dir(1, d=4): per-coordinate mean 1/4, var 3/80; 3 sigma of the mean
    sigma = np.sqrt((3.0 / 80.0) / 100_000)
    assert np.all(np.abs(z.mean(axis=0) - 0.25) < 3 * sigma)


def test_sample_skills_concatenated_shape_and_validity():
    reg = make_registry()
    prior = PriorState.initial(reg)
    rng = np.random.default_rng(5)
    z = sample_skills(prior, reg, rng, n=100)
    assert z.shape == (100, reg.total_dim)
    lam = sample_weights(reg.num_factors + 1, rng, n=100)
    for i in range(10):
        SkillCommand(zs=reg.split(z[i]), lam=lam[i]).validate(reg, prior)


def test_sample_weights_invariants():
    rng = np.random.default_rng(6)
    lam = sample_weights(5, rng, n=10_000)
    assert np.all(lam > 0)
    assert np.allclose(np.linalg.norm(lam, axis=-1), 1.0, atol=1e-9)
    one = sample_weights(1, rng, n=3)
    assert np.allclose(one, 1.0)
    # exchangeability of the first two components
    d = lam[:, 0].mean() - lam[:, 1].mean()
    s = np.sqrt(lam[:, 0].var() / len(lam) + lam[:, 1].var() / len(lam))
    assert abs(d) < 3 * s


def test_advance_prior_diayn_ramp():
    reg = make_registry()
    prior = PriorState.initial(reg)
    # below threshold forever: alpha pinned at the sparse start
    for _ in range(50):
        prior = advance_prior(prior, reg, {"posture": 0.5})
    assert prior.alpha["posture"] == ALPHA_LO
    # trigger, then 250 iterations of ramp
    prior = advance_prior(prior, reg, {"posture": 0.8})
    assert prior.triggered["posture"]
    for _ in range(250):
        prior = advance_prior(prior, reg, {"posture": 0.2})  # ramp continues regardless
    assert abs(prior.alpha["posture"] - 0.525) < 1e-12
    for _ in range(400):
        prior = advance_prior(prior, reg, {"posture": 0.0})
    assert prior.alpha["posture"] == 1.0


def test_advance_prior_alpha_nondecreasing():
    reg = make_registry()
    prior = PriorState.initial(reg)
    rng = np.random.default_rng(7)
    last = prior.alpha["posture"]
    for _ in range(600):
        prior = advance_prior(prior, reg, {"posture": float(rng.uniform(0, 1))})
        assert prior.alpha["posture"] >= last
        assert ALPHA_LO <= prior.alpha["posture"] <= 1.0
        last = prior.alpha["posture"]


def test_advance_prior_metra_norm_range():
    reg = make_registry()
    prior = PriorState.initial(reg)
    assert (prior.norm_lo["position"], prior.norm_hi["position"]) == (1.0, 1.0)
    prior = advance_prior(prior, reg, {"position": 0.5})
    assert abs(prior.norm_lo["position"] - 0.65) < 1e-12
    assert abs(prior.norm_hi["position"] - 1.25) < 1e-12
    prior = advance_prior(prior, reg, {"position": 1.0})
    assert abs(prior.norm_lo["position"] - 0.3) < 1e-12
    assert abs(prior.norm_hi["position"] - 1.5) < 1e-12


def test_resample_schedule():
    assert resample_schedule(0, 150, 0)
    assert resample_schedule(150, 150, 0)
    assert resample_schedule(300, 150, 0)
    assert not any(resample_schedule(s, 150, 0) for s in range(1, 150))
    # different phases resample on different steps
    a = [s for s in range(300) if resample_schedule(s, 150, 0)]
    b = [s for s in range(300) if resample_schedule(s, 150, 37)]
    assert a != b
    # 1500-step episode gets exactly 10 resamples for any phase
    for phase in (0, 1, 74, 149):
        hits = sum(resample_schedule(s, 150, phase) for s in range(1500))
        assert hits == 10
    with pytest.raises(ConfigError):
        resample_schedule(0, 0, 0)


def test_resample_mask_vectorized():
    steps = np.array([0, 5, 10, 15])
    phases = np.array([0, 0, 5, 5])
    assert list(resample_mask(steps, 5, phases)) == [True, True, True, True]
    assert list(resample_mask(steps + 1, 5, phases)) == [False] * 4


def test_project_simplex_known_case():
    out = project_simplex(np.array([0.5, 0.5, 1.5]))
    assert np.allclose(out, [0.0, 0.0, 1.0], atol=1e-12)
    v = np.array([0.2, 0.3, 0.5])
    assert np.allclose(project_simplex(v), v, atol=1e-12)
    rng = np.random.default_rng(8)
    batch = rng.normal(0, 2, (50, 6))
    p = project_simplex(batch)
    assert np.all(p >= 0)
    assert np.allclose(p.sum(axis=-1), 1.0, atol=1e-9)
    assert np.allclose(project_simplex(p), p, atol=1e-9)  # idempotent


def test_project_norm_range():
    z = np.array([3.0, 4.0])  # norm 5
    out = project_norm_range(z, 0.3, 1.5)
    assert np.isclose(np.linalg.norm(out), 1.5)
    assert np.allclose(out / np.linalg.norm(out), z / 5.0)
    tiny = project_norm_range(np.array([0.01, 0.0]), 0.5, 1.5)
    assert np.isclose(np.linalg.norm(tiny), 0.5)
    mid = np.array([0.6, 0.0])
    assert np.allclose(project_norm_range(mid, 0.3, 1.5), mid)
    zero = project_norm_range(np.zeros(2), 0.3, 1.5)
    assert np.isclose(np.linalg.norm(zero), 0.3)


def test_project_weights():
    out = project_weights(np.array([-0.3, 0.4]))
    assert np.allclose(out, [0.6, 0.8])
    with pytest.raises(ConfigError):
        project_weights(np.zeros(3))


def test_skill_command_validation_errors():
    reg = make_registry()
    prior = PriorState.initial(reg)
    rng = np.random.default_rng(9)
    z = reg.split(sample_skills(prior, reg, rng, n=1)[0])
    lam = sample_weights(reg.num_factors + 1, rng)[0]
    SkillCommand(z, lam).validate(reg, prior)
    with pytest.raises(ConfigError):
        SkillCommand(z, lam * 2).validate(reg, prior)  # norm != 1
    with pytest.raises(ConfigError):
        SkillCommand(z, -lam).validate(reg, prior)  # negative
    bad = [np.array(v) for v in z]
    bad[0] = bad[0] * 3.0  # metra norm outside [1, 1]
    with pytest.raises(ConfigError):
        SkillCommand(bad, lam).validate(reg, prior)
    bad2 = [np.array(v) for v in z]
    bad2[1] = np.array([0.9, 0.9])  # off the simplex
    with pytest.raises(ConfigError):
        SkillCommand(bad2, lam).validate(reg, prior)


def test_mirror_consistency_check_runs():
    mirror_consistency_check(make_registry(), np.random.default_rng(11))

"""Factor registry, skill priors and curricula, skill mirroring, weights.

A skill command is a set of per-factor latent vectors plus a weight vector
over factors (the extra last weight belongs to the style stream). Factors
are either discriminator-driven (Dirichlet simplex skills) or
direction-driven (bounded-norm continuous skills). Each factor declares how
its skill transforms under the four environment mirrors so that augmented
transitions keep (state, skill) consistent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import heads
from .errors import ConfigError
from .mirrors import MIRROR_IDS, STATE_DIM, STATE_SIGNS, compose

ALGORITHMS = ("diayn", "metra")
MIRROR_MODES = ("latin4", "latin2", "geometric", "none")

ALPHA_LO = 0.05
ALPHA_HI = 1.0
ALPHA_RAMP_ITERS = 500
ACC_TRIGGER = 0.7
NORM_LO_END = 0.3
NORM_HI_END = 1.5

# block permutations, mirror id -> order the input blocks appear in the output
_LATIN4 = {1: (0, 1, 2, 3), 2: (2, 3, 0, 1), 3: (1, 0, 3, 2), 4: (3, 2, 1, 0)}
_LATIN2 = {1: (0, 1), 2: (1, 0), 3: (1, 0), 4: (0, 1)}


@dataclass(frozen=True)
class FactorSpec:
    name: str
    state_slice: tuple[int, ...]
    algorithm: str
    dim: int
    mirror: str

    def __post_init__(self):
        if not self.name:
            raise ConfigError("factor name must be nonempty")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if self.mirror not in MIRROR_MODES:
            raise ConfigError(f"unknown mirror mode {self.mirror!r}")
        if self.dim < 1:
            raise ConfigError("skill dim must be >= 1")
        sl = tuple(int(i) for i in self.state_slice)
        if len(sl) == 0 or len(set(sl)) != len(sl):
            raise ConfigError("state slice must be nonempty without repeats")
        if any(i < 0 or i >= STATE_DIM for i in sl):
            raise ConfigError("state slice index out of range")
        object.__setattr__(self, "state_slice", sl)
        if self.algorithm == "metra" and self.dim > 3:
            raise ConfigError("direction-metric factors use dim <= 3")
        if self.mirror == "latin4" and self.dim % 4 != 0:
            raise ConfigError("latin4 mirror needs dim divisible by 4")
        if self.mirror == "latin2" and self.dim % 2 != 0:
            raise ConfigError("latin2 mirror needs dim divisible by 2")
        if self.mirror == "geometric":
            if self.algorithm != "metra":
                raise ConfigError("geometric mirror applies to metra factors")
            if self.dim != len(sl):
                raise ConfigError("geometric mirror needs dim == slice length")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "state_slice": list(self.state_slice),
            "algorithm": self.algorithm,
            "dim": self.dim,
            "mirror": self.mirror,
        }


def factor_from_dict(d: dict) -> FactorSpec:
    try:
        return FactorSpec(
            name=d["name"],
            state_slice=tuple(d["state_slice"]),
            algorithm=d["algorithm"],
            dim=int(d["dim"]),
            mirror=d["mirror"],
        )
    except KeyError as e:
        raise ConfigError(f"factor spec missing field {e.args[0]!r}")


def mirror_skill(k: int, factor: FactorSpec, z: np.ndarray) -> np.ndarray:
    """Transform a factor's skill vector under mirror k. Pure permutation
    or sign flips, so composition is exact."""
    if k not in MIRROR_IDS:
        raise ConfigError(f"unknown mirror id {k!r}")
    z = np.asarray(z)
    if z.shape[-1] != factor.dim:
        raise ConfigError(f"skill width {z.shape[-1]} != factor dim {factor.dim}")
    if factor.mirror == "none" or k == 1:
        return z.copy()
    if factor.mirror == "geometric":
        signs = STATE_SIGNS[k][list(factor.state_slice)].astype(z.dtype)
        return z * signs
    if factor.mirror == "latin4":
        n = factor.dim // 4
        order = _LATIN4[k]
    else:
        n = factor.dim // 2
        order = _LATIN2[k]
    blocks = [z[..., i * n:(i + 1) * n] for i in order]
    return np.concatenate(blocks, axis=-1)


class SkillRegistry:
    """Ordered factor collection with slicing into the concatenated skill."""

    def __init__(self, factors: list[FactorSpec]):
        if not factors:
            raise ConfigError("registry needs at least one factor")
        names = [f.name for f in factors]
        if len(set(names)) != len(names):
            raise ConfigError("factor names must be unique")
        self.factors = list(factors)
        self.offsets = []
        off = 0
        for f in self.factors:
            self.offsets.append(off)
            off += f.dim
        self.total_dim = off

    @property
    def num_factors(self) -> int:
        return len(self.factors)

    def factor(self, name: str) -> FactorSpec:
        for f in self.factors:
            if f.name == name:
                return f
        raise ConfigError(f"no factor named {name!r}")

    def split(self, z_cat: np.ndarray) -> list[np.ndarray]:
        z_cat = np.asarray(z_cat)
        if z_cat.shape[-1] != self.total_dim:
            raise ConfigError(
                f"skill width {z_cat.shape[-1]} != total dim {self.total_dim}"
            )
        return [
            z_cat[..., o:o + f.dim] for o, f in zip(self.offsets, self.factors)
        ]

    def concat(self, zs: list[np.ndarray]) -> np.ndarray:
        if len(zs) != self.num_factors:
            raise ConfigError("wrong number of per-factor skills")
        return np.concatenate([np.asarray(z) for z in zs], axis=-1)

    def mirror_cat(self, k: int, z_cat: np.ndarray) -> np.ndarray:
        parts = self.split(z_cat)
        return self.concat(
            [mirror_skill(k, f, z) for f, z in zip(self.factors, parts)]
        )

    def complement_indices(self, i: int) -> tuple[int, ...]:
        """State indices covered by every factor except factor i."""
        rest: set[int] = set()
        for j, f in enumerate(self.factors):
            if j != i:
                rest.update(f.state_slice)
        rest -= set(self.factors[i].state_slice)
        return tuple(sorted(rest))

    def to_registry_dict(self) -> dict:
        return {
            "factors": [f.to_dict() for f in self.factors],
            "total_dim": self.total_dim,
            "num_weights": self.num_factors + 1,
        }


@dataclass
class PriorState:
    """Per-factor prior curriculum state. Advanced between update phases."""

    alpha: dict = field(default_factory=dict)
    ramp_progress: dict = field(default_factory=dict)
    triggered: dict = field(default_factory=dict)
    norm_lo: dict = field(default_factory=dict)
    norm_hi: dict = field(default_factory=dict)

    @classmethod
    def initial(cls, registry: SkillRegistry) -> "PriorState":
        p = cls()
        for f in registry.factors:
            if f.algorithm == "diayn":
                p.alpha[f.name] = ALPHA_LO
                p.ramp_progress[f.name] = 0
                p.triggered[f.name] = False
            else:
                p.norm_lo[f.name] = 1.0
                p.norm_hi[f.name] = 1.0
        return p

    def copy(self) -> "PriorState":
        return PriorState(
            alpha=dict(self.alpha),
            ramp_progress=dict(self.ramp_progress),
            triggered=dict(self.triggered),
            norm_lo=dict(self.norm_lo),
            norm_hi=dict(self.norm_hi),
        )

    def to_dict(self) -> dict:
        return {
            "alpha": dict(self.alpha),
            "ramp_progress": dict(self.ramp_progress),
            "triggered": dict(self.triggered),
            "norm_lo": dict(self.norm_lo),
            "norm_hi": dict(self.norm_hi),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PriorState":
        return cls(
            alpha=dict(d.get("alpha", {})),
            ramp_progress={k: int(v) for k, v in d.get("ramp_progress", {}).items()},
            triggered={k: bool(v) for k, v in d.get("triggered", {}).items()},
            norm_lo=dict(d.get("norm_lo", {})),
            norm_hi=dict(d.get("norm_hi", {})),
        )


def advance_prior(prior: PriorState, registry: SkillRegistry, metrics: dict) -> PriorState:
    """One training-iteration tick of the prior curricula.

    metrics per factor name: discriminator held-out accuracy for simplex
    factors; current reward-mix coefficient (alpha_mix in [0,1]) for
    direction factors.
    """
    out = prior.copy()
    for f in registry.factors:
        m = float(metrics.get(f.name, 0.0))
        if f.algorithm == "diayn":
            if not out.triggered[f.name] and m > ACC_TRIGGER:
                out.triggered[f.name] = True
            elif out.triggered[f.name]:
                out.ramp_progress[f.name] = min(
                    out.ramp_progress[f.name] + 1, ALPHA_RAMP_ITERS
                )
            frac = out.ramp_progress[f.name] / ALPHA_RAMP_ITERS
            new_alpha = ALPHA_LO + (ALPHA_HI - ALPHA_LO) * frac
            out.alpha[f.name] = max(out.alpha[f.name], new_alpha)
        else:
            mix = min(max(m, 0.0), 1.0)
            out.norm_lo[f.name] = 1.0 + (NORM_LO_END - 1.0) * mix
            out.norm_hi[f.name] = 1.0 + (NORM_HI_END - 1.0) * mix
    return out


def _uniform_directions(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    x = rng.standard_normal((n, d))
    norm = np.linalg.norm(x, axis=-1, keepdims=True)
    bad = norm[:, 0] < 1e-12
    if bad.any():
        x[bad] = 0.0
        x[bad, 0] = 1.0
        norm = np.linalg.norm(x, axis=-1, keepdims=True)
    return x / norm


def sample_skill(prior: PriorState, factor: FactorSpec, rng: np.random.Generator,
                 n: int = 1) -> np.ndarray:
    """Draw n skills for one factor from its current prior."""
    if factor.algorithm == "diayn":
        a = prior.alpha.get(factor.name, ALPHA_LO)
        return heads.dirichlet_sample(a, (n, factor.dim), rng)
    lo = prior.norm_lo.get(factor.name, 1.0)
    hi = prior.norm_hi.get(factor.name, 1.0)
    dirs = _uniform_directions(rng, n, factor.dim)
    if hi > lo:
        norms = rng.uniform(lo, hi, size=(n, 1))
    else:
        norms = np.full((n, 1), lo)
    return dirs * norms


def sample_skills(prior: PriorState, registry: SkillRegistry,
                  rng: np.random.Generator, n: int = 1) -> np.ndarray:
    """Concatenated skill draws for every factor: shape (n, total_dim)."""
    return np.concatenate(
        [sample_skill(prior, f, rng, n) for f in registry.factors], axis=-1
    )


def sample_weights(m: int, rng: np.random.Generator, n: int = 1) -> np.ndarray:
    """Factor weights: i.i.d. N(0.5, 0.25^2) truncated to (0, 1], then
    L2-normalized. Shape (n, m); squeeze at call sites if needed."""
    if m < 1:
        raise ConfigError("weight vector needs at least one component")
    out = np.empty((n, m))
    pending = np.ones((n, m), dtype=bool)
    while pending.any():
        draw = rng.normal(0.5, 0.25, size=(n, m))
        ok = (draw > 0.0) & (draw <= 1.0) & pending
        out[ok] = draw[ok]
        pending &= ~ok
    return out / np.linalg.norm(out, axis=-1, keepdims=True)


def resample_schedule(step: int, period: int, phase: int) -> bool:
    """True on the steps where skills and weights should be redrawn."""
    if period < 1:
        raise ConfigError("resample period must be >= 1")
    return (step + phase) % period == 0


def resample_mask(steps: np.ndarray, period: int, phases: np.ndarray) -> np.ndarray:
    if period < 1:
        raise ConfigError("resample period must be >= 1")
    return (np.asarray(steps) + np.asarray(phases)) % period == 0


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of each row onto the probability simplex."""
    v = np.asarray(v, dtype=np.float64)
    single = v.ndim == 1
    if single:
        v = v[None]
    u = np.sort(v, axis=-1)[:, ::-1]
    css = np.cumsum(u, axis=-1) - 1.0
    j = np.arange(1, v.shape[-1] + 1)
    cond = u - css / j > 0
    rho = cond.sum(axis=-1)
    tau = css[np.arange(v.shape[0]), rho - 1] / rho
    out = np.maximum(v - tau[:, None], 0.0)
    return out[0] if single else out


def project_norm_range(z: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Clamp the vector norm into [lo, hi], keeping the direction."""
    z = np.asarray(z, dtype=np.float64)
    n = np.linalg.norm(z, axis=-1, keepdims=True)
    safe = np.maximum(n, 1e-12)
    target = np.clip(n, lo, hi)
    out = z / safe * target
    # a zero vector has no direction; pin it to the first axis at lo norm
    zero = (n < 1e-12)[..., 0]
    if np.any(zero):
        out = np.array(out)
        out[zero] = 0.0
        out[zero, ..., 0] = lo
    return out


def project_weights(lam: np.ndarray) -> np.ndarray:
    """Nonnegative, unit-L2 weight vector from an arbitrary one."""
    lam = np.abs(np.asarray(lam, dtype=np.float64))
    n = np.linalg.norm(lam, axis=-1, keepdims=True)
    if np.any(n < 1e-12):
        raise ConfigError("weight vector must be nonzero")
    return lam / n


def project_skill(factor: FactorSpec, prior: PriorState, z: np.ndarray) -> np.ndarray:
    """Project an arbitrary vector into the factor's valid skill set."""
    if factor.algorithm == "diayn":
        return project_simplex(z)
    lo = prior.norm_lo.get(factor.name, 1.0)
    hi = prior.norm_hi.get(factor.name, 1.0)
    return project_norm_range(z, lo, hi)


@dataclass
class SkillCommand:
    """Per-factor skills plus factor weights (style weight last)."""

    zs: list
    lam: np.ndarray

    def validate(self, registry: SkillRegistry, prior: PriorState,
                 tol: float = 1e-6) -> "SkillCommand":
        if len(self.zs) != registry.num_factors:
            raise ConfigError("wrong number of skill vectors")
        lam = np.asarray(self.lam, dtype=np.float64)
        if lam.shape != (registry.num_factors + 1,):
            raise ConfigError(
                f"weights shape {lam.shape} != ({registry.num_factors + 1},)"
            )
        if np.any(lam < -tol):
            raise ConfigError("weights must be nonnegative")
        if abs(np.linalg.norm(lam) - 1.0) > tol:
            raise ConfigError("weights must have unit L2 norm")
        for f, z in zip(registry.factors, self.zs):
            z = np.asarray(z, dtype=np.float64)
            if z.shape != (f.dim,):
                raise ConfigError(f"skill for {f.name} has shape {z.shape}")
            if f.algorithm == "diayn":
                if np.any(z < -tol) or abs(z.sum() - 1.0) > 1e-4:
                    raise ConfigError(f"skill for {f.name} is off the simplex")
            else:
                lo = prior.norm_lo.get(f.name, 1.0)
                hi = prior.norm_hi.get(f.name, 1.0)
                nz = np.linalg.norm(z)
                if nz < lo - 1e-4 or nz > hi + 1e-4:
                    raise ConfigError(
                        f"skill norm {nz:.4f} for {f.name} outside [{lo}, {hi}]"
                    )
        return self


def mirror_consistency_check(registry: SkillRegistry, rng: np.random.Generator,
                             trials: int = 64) -> None:
    """Assert mirror_skill realizes the group composition table exactly."""
    for f in registry.factors:
        z = rng.standard_normal((trials, f.dim))
        for a in MIRROR_IDS:
            for b in MIRROR_IDS:
                lhs = mirror_skill(a, f, mirror_skill(b, f, z))
                rhs = mirror_skill(compose(a, b), f, z)
                if not np.array_equal(lhs, rhs):
                    raise ConfigError(
                        f"mirror composition broken for factor {f.name} ({a},{b})"
                    )

"""Gaussian and Dirichlet heads over raw network outputs.

These are stateless function collections; the nets they sit on are plain
DenseNets whose final layer is identity. Gradients are supplied explicitly
(grad wrt the raw head input) so ppo/usd can chain them through
DenseNet.backward.
"""
from __future__ import annotations

import numpy as np
from scipy.special import digamma, gammaln

from .errors import ConfigError

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
LOG_2PI = float(np.log(2.0 * np.pi))

CONC_FLOOR = 1e-3   # epsilon_c
SIMPLEX_EPS = 1e-6  # epsilon_z


# ---------------------------------------------------------------- gaussian

def gaussian_split(raw):
    """Split raw head output (…, 2A) into mean and clamped log_std."""
    a = raw.shape[-1] // 2
    mean = raw[..., :a]
    log_std = np.clip(raw[..., a:], LOG_STD_MIN, LOG_STD_MAX)
    return mean, log_std


def gaussian_sample(mean, log_std, rng):
    std = np.exp(log_std)
    noise = rng.standard_normal(mean.shape).astype(mean.dtype)
    return mean + std * noise


def gaussian_logprob(mean, log_std, action):
    z = (action - mean) * np.exp(-log_std)
    return -0.5 * np.sum(z * z + 2.0 * log_std + LOG_2PI, axis=-1)


def gaussian_entropy(log_std):
    return np.sum(log_std + 0.5 * (1.0 + LOG_2PI), axis=-1)


def _log_std_grad_project(raw_tail, grad):
    """Clamp treated as a projection, not a wall: strictly inside the range
    the gradient passes untouched; on or past a bound only the component
    that moves the raw value back inside survives. A plain hard-clip mask
    makes the bounds absorbing (a pinned head never receives the gradient
    that would free it, entropy bonus included)."""
    inside = (raw_tail > LOG_STD_MIN) & (raw_tail < LOG_STD_MAX)
    inward_lo = (raw_tail <= LOG_STD_MIN) & (grad < 0.0)
    inward_hi = (raw_tail >= LOG_STD_MAX) & (grad > 0.0)
    return grad * (inside | inward_lo | inward_hi)


def gaussian_logprob_grad(raw, action, upstream):
    """d(upstream · logprob)/d(raw). upstream has shape (B,)."""
    mean, log_std = gaussian_split(raw)
    a = mean.shape[-1]
    inv_var = np.exp(-2.0 * log_std)
    diff = action - mean
    u = upstream[..., None]
    dmean = u * diff * inv_var
    dlogstd = _log_std_grad_project(raw[..., a:],
                                    u * (diff * diff * inv_var - 1.0))
    return np.concatenate([dmean, dlogstd], axis=-1)


def gaussian_entropy_grad(raw, upstream):
    """d(upstream · entropy)/d(raw); entropy only touches log_std."""
    a = raw.shape[-1] // 2
    out = np.zeros_like(raw)
    tail = np.broadcast_to(upstream[..., None], raw[..., a:].shape)
    out[..., a:] = _log_std_grad_project(raw[..., a:], tail.astype(raw.dtype))
    return out


def gaussian_kl(mean0, log_std0, mean1, log_std1):
    """Exact diagonal-Gaussian KL(p0 || p1) per sample."""
    var0 = np.exp(2.0 * log_std0)
    var1 = np.exp(2.0 * log_std1)
    term = log_std1 - log_std0 + (var0 + (mean0 - mean1) ** 2) / (2.0 * var1) - 0.5
    return np.sum(term, axis=-1)


# ---------------------------------------------------------------- dirichlet

def softplus(x):
    return np.logaddexp(0.0, x)


def concentration(raw, floor=CONC_FLOOR):
    """Map raw net output to strictly positive Dirichlet concentrations."""
    return softplus(raw) + floor


def concentration_grad(raw):
    """d softplus / d raw = sigmoid(raw)."""
    out = np.empty_like(raw, dtype=np.float64)
    np.exp(-np.abs(raw), out=out)
    out /= 1.0 + out
    return np.where(raw >= 0, 1.0 - out, out).astype(raw.dtype)


def _canon_sum(x, keepdims=False):
    """Sum over the last axis in sorted order.

    Makes the reduction bitwise invariant under coordinate permutations,
    which the skill-mirroring maps rely on for exact prior invariance.
    """
    return np.sum(np.sort(x, axis=-1), axis=-1, keepdims=keepdims)


def clamp_simplex(z, eps=SIMPLEX_EPS):
    """Clamp to the open simplex interior and renormalize."""
    z = np.clip(z, eps, 1.0 - eps)
    return z / _canon_sum(z, keepdims=True)


def dirichlet_logprob(conc, z, eps=SIMPLEX_EPS):
    """log Dir(z | conc) with z clamped strictly inside the simplex."""
    conc = np.asarray(conc)
    if np.any(conc <= 0):
        raise ConfigError("Dirichlet concentrations must be positive")
    z = clamp_simplex(np.asarray(z), eps)
    conc_b = np.broadcast_to(conc, z.shape)
    return (gammaln(_canon_sum(conc_b))
            - _canon_sum(gammaln(conc_b))
            + _canon_sum((conc_b - 1.0) * np.log(z)))


def dirichlet_logprob_grad_conc(conc, z, eps=SIMPLEX_EPS):
    """d log Dir(z|conc) / d conc."""
    z = clamp_simplex(np.asarray(z), eps)
    return (digamma(conc.sum(axis=-1, keepdims=True))
            - digamma(conc) + np.log(z))


def dirichlet_mean(conc):
    return conc / conc.sum(axis=-1, keepdims=True)


def dirichlet_sample(alpha, shape, rng, eps=SIMPLEX_EPS):
    """Sample symmetric-or-not Dirichlet via normalized gammas (batch-safe)."""
    g = rng.standard_gamma(np.broadcast_to(alpha, shape))
    bad = g.sum(axis=-1, keepdims=True) <= 0.0
    if np.any(bad):
        # gamma underflow at tiny alpha: degrade that row to the uniform point
        g = np.where(bad, 1.0, g)
    return clamp_simplex(g / g.sum(axis=-1, keepdims=True), eps)


def cosine_rows(a, b, eps=1e-12):
    """Row-wise cosine similarity; zero rows give 0."""
    num = np.sum(a * b, axis=-1)
    den = np.linalg.norm(a, axis=-1) * np.linalg.norm(b, axis=-1)
    return np.where(den > eps, num / np.maximum(den, eps), 0.0)

"""Dense-network engine: forward/backward, Adam, parameter serialization.

Everything trains in float32; tests build float64 shadows for finite-difference
checks. Forward is pure, backward recomputes its own activations so callers
never manage caches.
"""
from __future__ import annotations

import io

import numpy as np

from .errors import ConfigError, NumericError

ACTIVATIONS = ("elu", "tanh", "identity")

FORMAT_VERSION = 1


def _elu(x):
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def _elu_grad(x):
    return np.where(x > 0, np.ones_like(x), np.exp(np.minimum(x, 0.0)))


def _apply_act(name, x):
    if name == "elu":
        return _elu(x)
    if name == "tanh":
        return np.tanh(x)
    return x


def _act_grad(name, pre):
    if name == "elu":
        return _elu_grad(pre)
    if name == "tanh":
        t = np.tanh(pre)
        return 1.0 - t * t
    return np.ones_like(pre)


def orthogonal_init(shape, rng, gain=1.0, dtype=np.float32):
    """Orthogonal-like matrix via QR of a Gaussian draw, sign-fixed."""
    rows, cols = shape
    flat = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(flat)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return (gain * q[:rows, :cols]).astype(dtype)


class DenseNet:
    """Fully connected net. weights[i] has shape (n_in, n_out); x @ W + b.

    sizes = [d_in, h1, ..., d_out]; activations has one name per layer.
    Output layer weights are scaled down (out_scale) for policy-gradient
    stability; hidden layers get an orthogonal init with activation gain.
    """

    def __init__(self, sizes, activations, rng=None, dtype=np.float32,
                 out_scale=0.01):
        if len(sizes) < 2:
            raise ConfigError("DenseNet needs at least input and output sizes")
        if any(int(s) <= 0 for s in sizes):
            raise ConfigError(f"layer sizes must be positive, got {sizes}")
        if len(activations) != len(sizes) - 1:
            raise ConfigError(
                f"need {len(sizes) - 1} activations for sizes {sizes}, "
                f"got {len(activations)}")
        for a in activations:
            if a not in ACTIVATIONS:
                raise ConfigError(f"unknown activation {a!r}")
        self.sizes = [int(s) for s in sizes]
        self.activations = list(activations)
        self.dtype = np.dtype(dtype)
        self.weights = []
        self.biases = []
        if rng is None:
            rng = np.random.default_rng(0)
        n_layers = len(sizes) - 1
        for i in range(n_layers):
            shape = (self.sizes[i], self.sizes[i + 1])
            last = i == n_layers - 1
            if last:
                w = orthogonal_init(shape, rng, gain=out_scale, dtype=self.dtype)
            else:
                gain = np.sqrt(2.0) if self.activations[i] == "elu" else 1.0
                w = orthogonal_init(shape, rng, gain=gain, dtype=self.dtype)
            self.weights.append(w)
            self.biases.append(np.zeros(self.sizes[i + 1], dtype=self.dtype))

    @property
    def in_dim(self):
        return self.sizes[0]

    @property
    def out_dim(self):
        return self.sizes[-1]

    def params(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def set_params(self, arrays):
        expect = len(self.weights) * 2
        if len(arrays) != expect:
            raise ConfigError(f"expected {expect} parameter arrays, got {len(arrays)}")
        for i in range(len(self.weights)):
            w, b = arrays[2 * i], arrays[2 * i + 1]
            if w.shape != self.weights[i].shape or b.shape != self.biases[i].shape:
                raise ConfigError(f"parameter shape mismatch at layer {i}")
            self.weights[i] = w.astype(self.dtype)
            self.biases[i] = b.astype(self.dtype)

    def forward(self, x):
        x = np.asarray(x, dtype=self.dtype)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.shape[-1] != self.sizes[0]:
            raise ConfigError(
                f"input width {h.shape[-1]} != first layer size {self.sizes[0]}")
        for w, b, act in zip(self.weights, self.biases, self.activations):
            h = _apply_act(act, h @ w + b)
        return h[0] if single else h

    def backward(self, x, upstream_grad):
        """Parameter gradients of sum(upstream_grad * forward(x)).

        Returns (grads, input_grad); grads is a flat list matching params().
        """
        x = np.asarray(x, dtype=self.dtype)
        single = x.ndim == 1
        h = x[None, :] if single else x
        g = np.asarray(upstream_grad, dtype=self.dtype)
        if single:
            g = g[None, :]
        acts = [h]
        pres = []
        for w, b, act in zip(self.weights, self.biases, self.activations):
            pre = acts[-1] @ w + b
            pres.append(pre)
            acts.append(_apply_act(act, pre))
        grads = [None] * (2 * len(self.weights))
        for i in range(len(self.weights) - 1, -1, -1):
            g = g * _act_grad(self.activations[i], pres[i])
            gw = acts[i].T @ g
            gb = g.sum(axis=0)
            if not (np.isfinite(gw).all() and np.isfinite(gb).all()):
                raise NumericError(f"non-finite gradient at layer {i}")
            grads[2 * i] = gw
            grads[2 * i + 1] = gb
            g = g @ self.weights[i].T
        gin = g[0] if single else g
        return grads, gin


def clip_global_norm(grads, max_norm):
    """Scale the whole gradient list so its global L2 norm is <= max_norm."""
    total = 0.0
    for g in grads:
        total += float(np.sum(np.asarray(g, dtype=np.float64) ** 2))
    norm = np.sqrt(total)
    if norm > max_norm and norm > 0.0:
        scale = np.float32(max_norm / norm)
        grads = [g * scale for g in grads]
    return grads, norm


class Adam:
    """Adam with bias correction and global-norm gradient clipping."""

    def __init__(self, params, lr, clip=1.0, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = float(lr)
        self.clip = float(clip)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        if len(grads) != len(params):
            raise ConfigError("params/grads length mismatch")
        grads, _ = clip_global_norm(grads, self.clip)
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for i, (p, g) in enumerate(zip(params, grads)):
            g = g.astype(p.dtype)
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * (g * g)
            mhat = self.m[i] / b1t
            vhat = self.v[i] / b2t
            p -= (self.lr * mhat / (np.sqrt(vhat) + self.eps)).astype(p.dtype)
            if not np.isfinite(p).all():
                raise NumericError(
                    f"non-finite parameter after optimizer step {self.t} (array {i})")
        return params

    def state_dict(self):
        return {
            "lr": self.lr, "clip": self.clip, "beta1": self.beta1,
            "beta2": self.beta2, "eps": self.eps, "t": self.t,
            "m": [a.copy() for a in self.m], "v": [a.copy() for a in self.v],
        }

    def load_state_dict(self, d):
        self.lr = float(d["lr"])
        self.clip = float(d["clip"])
        self.beta1 = float(d["beta1"])
        self.beta2 = float(d["beta2"])
        self.eps = float(d["eps"])
        self.t = int(d["t"])
        self.m = [np.asarray(a) for a in d["m"]]
        self.v = [np.asarray(a) for a in d["v"]]


def net_manifest(net):
    return {"sizes": list(net.sizes), "activations": list(net.activations)}


def save_net(net, fh):
    """Versioned human-readable header, then flat little-endian float32 arrays."""
    header = (
        f"densenet v{FORMAT_VERSION}\n"
        f"sizes {' '.join(str(s) for s in net.sizes)}\n"
        f"activations {' '.join(net.activations)}\n"
        f"end\n"
    )
    fh.write(header.encode("utf-8"))
    for p in net.params():
        fh.write(np.ascontiguousarray(p, dtype="<f4").tobytes())


def load_net(fh):
    line = fh.readline().decode("utf-8").strip()
    parts = line.split()
    if len(parts) != 2 or parts[0] != "densenet":
        raise ConfigError(f"bad net header: {line!r}")
    if parts[1] != f"v{FORMAT_VERSION}":
        raise ConfigError(f"unsupported net format version {parts[1]}")
    sizes_line = fh.readline().decode("utf-8").split()
    acts_line = fh.readline().decode("utf-8").split()
    endline = fh.readline().decode("utf-8").strip()
    if sizes_line[0] != "sizes" or acts_line[0] != "activations" or endline != "end":
        raise ConfigError("malformed net header block")
    sizes = [int(s) for s in sizes_line[1:]]
    acts = acts_line[1:]
    net = DenseNet(sizes, acts, rng=np.random.default_rng(0))
    arrays = []
    for p in net.params():
        buf = fh.read(p.size * 4)
        if len(buf) != p.size * 4:
            raise ConfigError("truncated parameter block")
        arrays.append(np.frombuffer(buf, dtype="<f4").reshape(p.shape).copy())
    net.set_params(arrays)
    return net


def net_to_bytes(net):
    buf = io.BytesIO()
    save_net(net, buf)
    return buf.getvalue()


def net_from_bytes(data):
    return load_net(io.BytesIO(data))

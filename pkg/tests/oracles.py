"""Independent oracles shared by unit and acceptance tests.

These deliberately avoid the library's own vectorized code paths: the forward
oracle is pure-Python scalar loops, the gradient oracle is central finite
differences on a float64 shadow copy.
"""
import math

import numpy as np


def scalar_forward(sizes, activations, weights, biases, x):
    """Straight-line scalar-loop evaluation of a dense net."""
    h = [float(v) for v in x]
    for li in range(len(sizes) - 1):
        w, b = weights[li], biases[li]
        out = []
        for j in range(sizes[li + 1]):
            acc = float(b[j])
            for i in range(sizes[li]):
                acc += h[i] * float(w[i][j])
            act = activations[li]
            if act == "elu":
                acc = acc if acc > 0 else math.exp(acc) - 1.0
            elif act == "tanh":
                acc = math.tanh(acc)
            out.append(acc)
        h = out
    return np.array(h)


def fd_param_grads(loss_fn, params, h=1e-3):
    """Central finite differences of loss_fn() wrt each float64 param array.

    loss_fn takes no arguments and must read the (mutated) params in place.
    """
    grads = []
    for p in params:
        g = np.zeros_like(p, dtype=np.float64)
        it = np.nditer(p, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = p[idx]
            p[idx] = orig + h
            f_plus = loss_fn()
            p[idx] = orig - h
            f_minus = loss_fn()
            p[idx] = orig
            g[idx] = (f_plus - f_minus) / (2.0 * h)
            it.iternext()
        grads.append(g)
    return grads


def max_rel_err(analytic, numeric, zero_floor=1e-6):
    """Worst per-tensor relative error ||a - n|| / max(||a||, ||n||).

    Norm-relative comparison keeps the check well conditioned: elementwise
    ratios divide finite-difference noise by near-zero true gradients and
    report spurious mismatches.  Tensors where both norms sit below
    zero_floor count as matching: a structurally zero gradient against
    pure truncation noise is agreement, not a unit relative error.
    """
    worst = 0.0
    for a, n in zip(analytic, numeric):
        a = np.asarray(a, dtype=np.float64).ravel()
        n = np.asarray(n, dtype=np.float64).ravel()
        denom = max(np.linalg.norm(a), np.linalg.norm(n))
        if denom < zero_floor:
            continue
        worst = max(worst, float(np.linalg.norm(a - n) / denom))
    return worst

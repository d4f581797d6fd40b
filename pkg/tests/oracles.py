"""Independent reference implementations used as test oracles.

These deliberately avoid the library's vectorized code paths: convolution and
dense products are scalar loops, Adam is a scalar recurrence, and gradients
come from central finite differences.
"""

import numpy as np


def conv2d_forward_oracle(x, w, b, stride, padding):
    """Naive loop convolution (correlation) with explicit zero padding."""
    n, c, h, wid = x.shape
    f, _, k, _ = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    ho = (h + 2 * padding - k) // stride + 1
    wo = (wid + 2 * padding - k) // stride + 1
    out = np.zeros((n, f, ho, wo), dtype=np.float64)
    for ni in range(n):
        for fi in range(f):
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    for ci in range(c):
                        for ki in range(k):
                            for kj in range(k):
                                acc += float(xp[ni, ci, i * stride + ki, j * stride + kj]) \
                                    * float(w[fi, ci, ki, kj])
                    out[ni, fi, i, j] = acc + float(b[fi])
    return out


def dense_forward_oracle(x, w, b):
    """Scalar-loop affine map for W shaped (out, in)."""
    n, din = x.shape
    dout = w.shape[0]
    out = np.zeros((n, dout), dtype=np.float64)
    for ni in range(n):
        for oi in range(dout):
            acc = 0.0
            for ii in range(din):
                acc += float(x[ni, ii]) * float(w[oi, ii])
            out[ni, oi] = acc + float(b[oi])
    return out


def adam_reference_trajectory(p0, grads, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Scalar Adam recurrence; returns the parameter value after each step."""
    m = 0.0
    v = 0.0
    p = float(p0)
    history = []
    for t, g in enumerate(grads, start=1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)
        history.append(p)
    return history


def gae_reference(rewards, values, dones, gamma, lam, bootstrap):
    """Direct scalar recursion for a single trajectory (1-D arrays)."""
    t_len = len(rewards)
    adv = [0.0] * t_len
    last = 0.0
    for t in reversed(range(t_len)):
        nonterminal = 0.0 if dones[t] else 1.0
        next_value = bootstrap if t == t_len - 1 else values[t + 1]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        last = delta + gamma * lam * nonterminal * last
        adv[t] = last
    returns = [a + v for a, v in zip(adv, values)]
    return adv, returns


def finite_difference_param_grads(eval_loss, params, h=1e-3):
    """Central finite differences of eval_loss() w.r.t. every coordinate of
    the given parameter arrays (perturbed in place)."""
    fd_grads = []
    for p in params:
        g = np.zeros_like(p, dtype=np.float64)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = eval_loss()
            flat[i] = orig - h
            f_minus = eval_loss()
            flat[i] = orig
            gflat[i] = (f_plus - f_minus) / (2 * h)
        fd_grads.append(g)
    return fd_grads


def relative_agreement(analytic, fd, tol=1e-3, dead_zone=1e-8):
    """Fraction of coordinates where the two gradients agree within tol
    relative error (coordinates where both are ~0 count as agreeing)."""
    a = np.concatenate([np.asarray(x, dtype=np.float64).ravel() for x in analytic])
    f = np.concatenate([np.asarray(x, dtype=np.float64).ravel() for x in fd])
    denom = np.maximum(np.abs(a), np.abs(f))
    both_zero = denom < dead_zone
    rel = np.zeros_like(a)
    nz = ~both_zero
    rel[nz] = np.abs(a[nz] - f[nz]) / denom[nz]
    ok = both_zero | (rel <= tol)
    return ok.mean()

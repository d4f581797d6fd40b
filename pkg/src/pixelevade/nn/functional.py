"""Stateless numeric ops: stabilized softmax, log-softmax, cross-entropy."""

import numpy as np


def softmax(logits, axis=-1):
    """Max-subtracted softmax; valid distribution for any finite input."""
    z = logits - np.max(logits, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(logits, axis=-1):
    z = logits - np.max(logits, axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def cross_entropy(logits, labels):
    """Mean negative log-likelihood and its gradient w.r.t. the logits.

    Returns (loss, dlogits) with dlogits already divided by the batch size.
    """
    n = logits.shape[0]
    logp = log_softmax(logits, axis=1)
    loss = -logp[np.arange(n), labels].mean()
    dlogits = softmax(logits, axis=1)
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    return loss, dlogits.astype(logits.dtype, copy=False)

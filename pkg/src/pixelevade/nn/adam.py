"""Bias-corrected Adam over a network's parameter list."""

import numpy as np


class AdamState:
    """Optimizer state: zero-initialized moments shaped like the parameters,
    a step counter incremented once per update, and the scalar hyperparameters.
    """

    def __init__(self, net, learning_rate=3e-4, beta1=0.9, beta2=0.999,
                 epsilon=1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.step_count = 0
        params = net.parameters()
        self.first_moment = [np.zeros_like(p) for p in params]
        self.second_moment = [np.zeros_like(p) for p in params]


def adam_step(net, state):
    """One Adam update in place. Gradients are left intact; callers clear
    them via net.zero_grads() when starting the next accumulation."""
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    lr, eps = state.learning_rate, state.epsilon
    bias1 = 1.0 - b1 ** t
    bias2 = 1.0 - b2 ** t
    for p, g, m, v in zip(net.parameters(), net.gradients(),
                          state.first_moment, state.second_moment):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        m_hat = m / bias1
        v_hat = v / bias2
        p -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.dtype)

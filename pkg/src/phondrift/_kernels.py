"""numba kernels for the per-frame recursions (CTC lattice, RNN time loop)."""

import math

import numpy as np
from numba import njit

NEG_INF = -np.inf


@njit(cache=True)
def _logaddexp(a, b):
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


@njit(cache=True)
def ctc_alpha(emit, skip):
    """Forward variables; alpha[t, s] includes frame t's emission."""
    n_frames, n_states = emit.shape
    alpha = np.full((n_frames, n_states), NEG_INF)
    alpha[0, 0] = emit[0, 0]
    if n_states > 1:
        alpha[0, 1] = emit[0, 1]
    for t in range(1, n_frames):
        for s in range(n_states):
            acc = alpha[t - 1, s]
            if s >= 1:
                acc = _logaddexp(acc, alpha[t - 1, s - 1])
            if skip[s]:
                acc = _logaddexp(acc, alpha[t - 1, s - 2])
            if acc != NEG_INF:
                alpha[t, s] = acc + emit[t, s]
    return alpha


@njit(cache=True)
def ctc_beta(emit, skip):
    """Backward variables; beta[t, s] excludes frame t's emission."""
    n_frames, n_states = emit.shape
    beta = np.full((n_frames, n_states), NEG_INF)
    beta[n_frames - 1, n_states - 1] = 0.0
    if n_states > 1:
        beta[n_frames - 1, n_states - 2] = 0.0
    for t in range(n_frames - 2, -1, -1):
        for s in range(n_states):
            acc = beta[t + 1, s] + emit[t + 1, s]
            if s + 1 < n_states:
                acc = _logaddexp(acc, beta[t + 1, s + 1] + emit[t + 1, s + 1])
            if s + 2 < n_states and skip[s + 2]:
                acc = _logaddexp(acc, beta[t + 1, s + 2] + emit[t + 1, s + 2])
            beta[t, s] = acc
    return beta


@njit(cache=True)
def rnn_forward(pre, W_h):
    """h[t] = tanh(pre[t] + W_h @ h[t-1]), h[-1] = 0."""
    n, hidden = pre.shape
    h = np.empty((n, hidden))
    prev = np.zeros(hidden)
    for t in range(n):
        prev = np.tanh(pre[t] + W_h @ prev)
        h[t] = prev
    return h


@njit(cache=True)
def rnn_backward(g_h, h, W_h):
    """Gradient wrt the pre-activations of rnn_forward, given dL/dh."""
    n, hidden = h.shape
    g_pre = np.empty((n, hidden))
    carry = np.zeros(hidden)
    W_hT = np.ascontiguousarray(W_h.T)
    for t in range(n - 1, -1, -1):
        g_pre[t] = (g_h[t] + carry) * (1.0 - h[t] * h[t])
        carry = W_hT @ g_pre[t]
    return g_pre

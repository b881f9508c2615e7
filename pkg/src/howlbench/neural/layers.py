"""Single-step numpy layers: dense, GRU cell, 1-D convolution along the
frequency axis, causal single-head attention."""

from __future__ import annotations

import numpy as np


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def linear(x, weight, bias=None):
    y = weight @ x
    return y if bias is None else y + bias


def gru_cell(x, h, w_ih, w_hh, b_ih, b_hh):
    """One GRU step with gates stacked as (reset, update, new).

    r = s(W_ir x + b_ir + W_hr h + b_hr)
    z = s(W_iz x + b_iz + W_hz h + b_hz)
    n = tanh(W_in x + b_in + r * (W_hn h + b_hn))
    h' = (1 - z) * n + z * h
    """
    hs = h.size
    gi = w_ih @ x + b_ih
    gh = w_hh @ h + b_hh
    r = sigmoid(gi[:hs] + gh[:hs])
    z = sigmoid(gi[hs:2 * hs] + gh[hs:2 * hs])
    n = np.tanh(gi[2 * hs:] + r * gh[2 * hs:])
    return (1.0 - z) * n + z * h


def conv1d_same(x, weight, bias):
    """Single-input-channel convolution (cross-correlation) with zero 'same' padding.

    ``x`` has length L, ``weight`` is (C_out, 1, k) with k odd; returns C_out x L.
    """
    c_out, _, k = weight.shape
    pad = k // 2
    xp = np.pad(x, (pad, pad))
    # column j of win holds xp[j : j + k]
    win = np.lib.stride_tricks.sliding_window_view(xp, k)
    return weight[:, 0, :] @ win.T + bias[:, None]


class CausalAttention:
    """Single-head dot-product attention over every frame up to the current one.

    Keys and values are cached, so each step costs O(t).
    """

    def __init__(self, wq, bq, wk, bk, wv, bv):
        self.wq, self.bq, self.wk, self.bk, self.wv, self.bv = wq, bq, wk, bk, wv, bv
        self.scale = 1.0 / np.sqrt(wq.shape[0])
        self.reset()

    def reset(self):
        self.keys: list[np.ndarray] = []
        self.values: list[np.ndarray] = []

    def step(self, x):
        q = self.wq @ x + self.bq
        self.keys.append(self.wk @ x + self.bk)
        self.values.append(self.wv @ x + self.bv)
        scores = np.array(self.keys) @ q * self.scale
        scores -= scores.max()
        p = np.exp(scores)
        p /= p.sum()
        return p @ np.array(self.values)

"""Temporal-semantic context block: two-axis gated recurrence over the
(attribute x time) lattice, context memory, attention scores, and the
attention-weighted second pass with per-attribute classification heads."""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from .nn import Linear, Module


class TSGRUCell(Module):
    """Gated cell with separate attribute and temporal update/reset gates.

    Gates are sigmoids of affine maps of [predecessor, input]; the candidate
    is tanh of an affine map of [rA . h_attr, rT . h_time, input]. Biases are
    included in every affine map.
    """

    def __init__(self, input_dim, hidden_dim):
        d, din = hidden_dim, input_dim
        self.Wz_A = Linear(d + din, d)
        self.Wz_T = Linear(d + din, d)
        self.Wr_A = Linear(d + din, d)
        self.Wr_T = Linear(d + din, d)
        self.Wh = Linear(2 * d + din, d)
        self.hidden_dim = d

    def gates(self, v, h_attr, h_time):
        xa = ag.concat([h_attr, v], axis=1)
        xt = ag.concat([h_time, v], axis=1)
        z_a = ag.sigmoid(self.Wz_A(xa))
        z_t = ag.sigmoid(self.Wz_T(xt))
        r_a = ag.sigmoid(self.Wr_A(xa))
        r_t = ag.sigmoid(self.Wr_T(xt))
        h_cand = ag.tanh(self.Wh(ag.concat([r_a * h_attr, r_t * h_time, v], axis=1)))
        return z_a, z_t, r_a, r_t, h_cand


def ts_gru_step(cell, v, h_attr, h_time, normalize_gates=False):
    """One lattice step: h = zA.h_attr + zT.h_time + (1 - zA - zT).h_cand.

    The (1 - zA - zT) coefficient is kept exactly as written (it may go
    negative); normalize_gates optionally rescales (zA, zT) by their sum
    whenever it exceeds 1.
    """
    z_a, z_t, _, _, h_cand = cell.gates(v, h_attr, h_time)
    if normalize_gates:
        z_a, z_t = _rescale_gates(z_a, z_t)
    one = ag.constant(1.0, like=v)
    h = z_a * h_attr + z_t * h_time + (one - z_a - z_t) * h_cand
    if not np.all(np.isfinite(h.data)):
        raise ag.NonFiniteError("ts_gru_step")
    return h


def _rescale_gates(z_a, z_t):
    total = z_a + z_t
    one = ag.constant(1.0, like=z_a)
    denom = ag.hinge(total - one) + one  # max(zA + zT, 1)
    return z_a / denom, z_t / denom


def _zero_state(B, d, dtype):
    return ag.zeros((B, d), dtype=dtype)


def first_pass(cell, v):
    """Fill the lattice in raster order; boundary states are zero vectors.

    v: (B, N, T, d_v) -> hidden grid (B, N, T, d). Any topological order
    gives the same result; raster over a then t is used.
    """
    B, N, T, _ = v.shape
    d = cell.hidden_dim
    zero = _zero_state(B, d, v.dtype)
    grid = [[None] * T for _ in range(N)]
    for a in range(N):
        for t in range(T):
            h_attr = grid[a - 1][t] if a > 0 else zero
            h_time = grid[a][t - 1] if t > 0 else zero
            try:
                grid[a][t] = ts_gru_step(cell, v[:, a, t, :], h_attr, h_time)
            except ag.NonFiniteError:
                raise ag.NonFiniteError(f"first_pass step (a={a}, t={t})") from None
    return _stack_grid(grid)


def _stack_grid(grid):
    rows = [ag.stack(row, axis=1) for row in grid]  # each (B, T, d)
    return ag.stack(rows, axis=1)  # (B, N, T, d)


def build_context(h):
    """Semantic memory F_S (temporal mean per attribute) and temporal memory
    F_T (attribute mean per frame) from the hidden grid (B, N, T, d)."""
    f_s = ag.tmean(h, axis=2)  # (B, N, d)
    f_t = ag.tmean(h, axis=1)  # (B, T, d)
    return f_s, f_t


class AttentionScorer(Module):
    """Scalar energies from [h_at, memory] -> softmaxed scores.

    Semantic scores normalize over attributes per frame, temporal scores over
    frames per attribute.
    """

    def __init__(self, d, hidden):
        self.Wa2 = Linear(2 * d, hidden)
        self.Wa1 = Linear(hidden, 1)
        self.Wt2 = Linear(2 * d, hidden)
        self.Wt1 = Linear(hidden, 1)

    def __call__(self, h, f_s, f_t):
        B, N, T, d = h.shape
        fs_full = ag.stack([f_s] * T, axis=2)  # (B, N, T, d)
        ft_full = ag.stack([f_t] * N, axis=1)  # (B, N, T, d)
        e_s = self.Wa1(ag.relu(self.Wa2(ag.concat([h, fs_full], axis=3))))
        e_t = self.Wt1(ag.relu(self.Wt2(ag.concat([h, ft_full], axis=3))))
        e_s = e_s.reshape((B, N, T))
        e_t = e_t.reshape((B, N, T))
        a_s = ag.softmax(e_s, axis=1)  # over attributes, per frame
        a_t = ag.softmax(e_t, axis=2)  # over frames, per attribute
        return a_s, a_t, e_s, e_t


def second_pass(cell, v, a_s, a_t, normalize_gates=False):
    """Attention-weighted lattice: h' = aS.zA.h'_attr + aT.zT.h'_time
    + (1 - aS.zA - aT.zT).h_cand, with gates computed from the second pass's
    own predecessor states.

    v: (B, N, T, din) input per step (the first-pass hidden states by
    default); a_s, a_t: (B, N, T) scores.
    """
    B, N, T, _ = v.shape
    d = cell.hidden_dim
    zero = _zero_state(B, d, v.dtype)
    one = ag.constant(1.0, like=v)
    grid = [[None] * T for _ in range(N)]
    for a in range(N):
        for t in range(T):
            h_attr = grid[a - 1][t] if a > 0 else zero
            h_time = grid[a][t - 1] if t > 0 else zero
            z_a, z_t, _, _, h_cand = cell.gates(v[:, a, t, :], h_attr, h_time)
            if normalize_gates:
                z_a, z_t = _rescale_gates(z_a, z_t)
            w_a = a_s[:, a, t].reshape((B, 1)) * z_a
            w_t = a_t[:, a, t].reshape((B, 1)) * z_t
            h = w_a * h_attr + w_t * h_time + (one - w_a - w_t) * h_cand
            if not np.all(np.isfinite(h.data)):
                raise ag.NonFiniteError(f"second_pass step (a={a}, t={t})")
            grid[a][t] = h
    return _stack_grid(grid)


def attribute_readout(hgrid):
    """Last-frame hidden state per attribute: (B, N, T, d) -> (B, N, d)."""
    T = hgrid.shape[2]
    return hgrid[:, :, T - 1, :]


class AttributeHeads(Module):
    """One m_n-way linear classifier per attribute."""

    def __init__(self, d, category_counts):
        self.heads = [Linear(d, m) for m in category_counts]

    def __call__(self, readout):
        """readout: (B, N, d) -> list of (B, m_n) logits."""
        return [head(readout[:, n, :]) for n, head in enumerate(self.heads)]


class TemporalSemanticBlock(Module):
    """Two TS-GRUs around the context-memory attention scorer."""

    def __init__(self, d_v, d, attention_hidden, category_counts,
                 second_pass_input="hidden", normalize_gates=False,
                 use_context_memory=True):
        self.cell1 = TSGRUCell(d_v, d)
        cell2_in = d if second_pass_input == "hidden" else d_v
        self.cell2 = TSGRUCell(cell2_in, d)
        self.scorer = AttentionScorer(d, attention_hidden)
        self.heads = AttributeHeads(d, category_counts)
        self.second_pass_input = second_pass_input
        self.normalize_gates = normalize_gates
        self.use_context_memory = use_context_memory

    def __call__(self, v):
        """v: (B, N, T, d_v) -> (readout (B,N,d), attribute logits, scores)."""
        h1 = first_pass(self.cell1, v)
        if not self.use_context_memory:
            readout = attribute_readout(h1)
            return readout, self.heads(readout), None
        f_s, f_t = build_context(h1)
        a_s, a_t, e_s, e_t = self.scorer(h1, f_s, f_t)
        v2 = h1 if self.second_pass_input == "hidden" else v
        h2 = second_pass(self.cell2, v2, a_s, a_t, normalize_gates=self.normalize_gates)
        readout = attribute_readout(h2)
        return readout, self.heads(readout), (a_s, a_t, e_s, e_t)

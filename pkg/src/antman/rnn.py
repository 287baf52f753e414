"""LSTM inference over compressed linear operators.

The input and hidden transforms of each cell are CompressedLinear operators
producing all four gate pre-activations at once (out_dim = 4 * hidden_dim).
Gate order is fixed: input, forget, cell candidate, output. Biases stay
dense and uncompressed.

Two execution strategies are provided: ``naive`` applies the input transform
step by step, ``fused`` applies it to all timesteps as one batched operation
before running the sequential recurrence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .operators import (
    CompressedLinear,
    CompressionConfig,
    ConfigError,
    DenseLinear,
    ShapeError,
    cast_operator,
    init_weights,
)

__all__ = [
    "GATE_ORDER",
    "LSTMCellSpec",
    "LSTMState",
    "LSTMModel",
    "lstm_step",
    "lstm_sequence",
    "build_model",
    "dense_equivalent",
]

GATE_ORDER = ("input", "forget", "cell", "output")

MODE_FUSED = "fused"
MODE_NAIVE = "naive"


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class LSTMCellSpec:
    """One LSTM layer: compressed gate transforms plus a dense bias."""

    def __init__(self, w_input: CompressedLinear, w_hidden: CompressedLinear,
                 bias: np.ndarray):
        if w_input.out_dim != w_hidden.out_dim:
            raise ConfigError("w_input and w_hidden must share out_dim = 4 * hidden_dim")
        if w_input.out_dim % 4 != 0:
            raise ConfigError(f"gate transform out_dim must be 4 * hidden_dim, got {w_input.out_dim}")
        hidden = w_input.out_dim // 4
        if w_hidden.in_dim != hidden:
            raise ConfigError(
                f"w_hidden in_dim {w_hidden.in_dim} does not match hidden_dim {hidden}")
        bias = np.asarray(bias, dtype=np.float64)
        if bias.shape != (4 * hidden,):
            raise ConfigError(f"bias must have shape (4*hidden_dim,), got {bias.shape}")
        if not np.all(np.isfinite(bias)):
            raise ConfigError("bias values must all be finite")
        self.w_input = w_input
        self.w_hidden = w_hidden
        self.bias = bias
        self.input_dim = w_input.in_dim
        self.hidden_dim = hidden


@dataclass
class LSTMState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, hidden_dim: int) -> "LSTMState":
        return cls(np.zeros(hidden_dim), np.zeros(hidden_dim))


@dataclass
class LSTMModel:
    """Stacked LSTM layers; layer k+1 consumes layer k's hidden sequence."""

    layers: list[LSTMCellSpec]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for k in range(1, len(self.layers)):
            lower, upper = self.layers[k - 1], self.layers[k]
            if upper.input_dim != lower.hidden_dim:
                raise ConfigError(
                    f"layer {k} input_dim {upper.input_dim} != layer {k - 1} "
                    f"hidden_dim {lower.hidden_dim}")


def _gates_to_state(cell: LSTMCellSpec, pre: np.ndarray, state: LSTMState) -> LSTMState:
    h = cell.hidden_dim
    gi = _sigmoid(pre[0:h])
    gf = _sigmoid(pre[h:2 * h])
    gc = np.tanh(pre[2 * h:3 * h])
    go = _sigmoid(pre[3 * h:4 * h])
    c_new = gf * state.c + gi * gc
    return LSTMState(go * np.tanh(c_new), c_new)


def lstm_step(cell: LSTMCellSpec, x: np.ndarray, state: LSTMState) -> LSTMState:
    """One recurrence step: gate pre-activations, squashing, state update."""
    x = np.asarray(x)
    if x.shape != (cell.input_dim,):
        raise ShapeError(f"x has shape {x.shape}, expected ({cell.input_dim},)")
    if state.h.shape != (cell.hidden_dim,) or state.c.shape != (cell.hidden_dim,):
        raise ShapeError("state dims do not match hidden_dim")
    pre = cell.w_input.apply(x) + cell.w_hidden.apply(state.h) + cell.bias
    return _gates_to_state(cell, pre, state)


def lstm_sequence(model: LSTMModel, inputs: Sequence[np.ndarray],
                  mode: str = MODE_FUSED) -> list[np.ndarray]:
    """Run a sequence through all layers; returns the top layer's h per step.

    Fused mode applies each layer's input transform to every timestep in one
    batched pass; naive mode applies it step by step. The recurrence itself
    is sequential in both modes.
    """
    if mode not in (MODE_FUSED, MODE_NAIVE):
        raise ValueError(f"mode must be 'fused' or 'naive', got {mode!r}")
    if len(inputs) == 0:
        return []
    seq = [np.asarray(x) for x in inputs]
    for t, x in enumerate(seq):
        if x.shape != (model.layers[0].input_dim,):
            raise ShapeError(
                f"input {t} has shape {x.shape}, expected ({model.layers[0].input_dim},)")
    for cell in model.layers:
        seq = _run_layer(cell, seq, mode)
    return seq


def _run_layer(cell: LSTMCellSpec, seq: list[np.ndarray], mode: str) -> list[np.ndarray]:
    steps = len(seq)
    state = LSTMState.zeros(cell.hidden_dim)
    if mode == MODE_FUSED:
        stacked = np.stack(seq, axis=1)           # (input_dim, steps)
        pre_in = cell.w_input.apply_matrix(stacked)
    outputs = []
    for t in range(steps):
        if mode == MODE_FUSED:
            pre = pre_in[:, t] + cell.w_hidden.apply(state.h) + cell.bias
        else:
            pre = cell.w_input.apply(seq[t]) + cell.w_hidden.apply(state.h) + cell.bias
        state = _gates_to_state(cell, pre, state)
        outputs.append(state.h)
    return outputs


def _resolve(cfg_like, m: int, n: int) -> CompressionConfig:
    if isinstance(cfg_like, CompressionConfig):
        if cfg_like.m != m or cfg_like.n != n:
            raise ConfigError(f"config dims {cfg_like.m}x{cfg_like.n} != expected {m}x{n}")
        return cfg_like
    params = dict(cfg_like)
    kind = params.pop("kind")
    return CompressionConfig(kind, m, n, **params)


def build_model(input_dim: int, hidden_dims: Sequence[int], gate_config,
                seed: int = 0, name: str = "lstm", dtype=np.float64) -> LSTMModel:
    """Seeded model with the same gate compression on every transform.

    ``gate_config`` is a dict like {"kind": "lgp-shuffle", "g": 10} (dims are
    filled in per transform) or a full CompressionConfig for single-layer
    models.
    """
    rng = np.random.default_rng(seed)
    layers = []
    prev = input_dim
    for h in hidden_dims:
        w_in = init_weights(_resolve(gate_config, 4 * h, prev), rng=rng)
        w_hid = init_weights(_resolve(gate_config, 4 * h, h), rng=rng)
        if np.dtype(dtype) == np.float32:
            w_in = cast_operator(w_in, np.float32)
            w_hid = cast_operator(w_hid, np.float32)
        layers.append(LSTMCellSpec(w_in, w_hid, np.zeros(4 * h)))
        prev = h
    meta = {
        "name": name,
        "seed": seed,
        "creation": {
            "input_dim": input_dim,
            "hidden_dims": list(hidden_dims),
            "gate_config": dict(gate_config) if not isinstance(gate_config, CompressionConfig)
            else gate_config.__dict__,
        },
    }
    return LSTMModel(layers, meta)


def dense_equivalent(model: LSTMModel) -> LSTMModel:
    """Replace every operator by its dense materialization (oracle model)."""
    layers = [
        LSTMCellSpec(DenseLinear(cell.w_input.materialize()),
                     DenseLinear(cell.w_hidden.materialize()),
                     cell.bias)
        for cell in model.layers
    ]
    return LSTMModel(layers, dict(model.metadata))

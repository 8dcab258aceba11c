"""Multi-kernel CNN -> GRU -> attention network with an optional rate branch."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .layers import (GRU, AttentionPool, Conv1d, Dense, Dropout, LastStep, ReLU,
                     sigmoid, softmax)

N_TIMING = 6
N_RATES = 7


class NonFiniteInput(FloatingPointError):
    pass


@dataclass
class ModelConfig:
    length: int = 250
    kernel_sizes: list[int] = field(default_factory=lambda: [2, 2, 2])
    out_channels: int = 32          # per branch
    conv_depth: int = 1             # conv+ReLU blocks; only the first is multi-kernel
    gru_hidden: int = 8
    attention: bool = True
    attention_dim: int | None = None
    rate_width: int = 8             # 0 = timing-only
    n_outputs: int = 1              # 1 = binary head, K = multiclass
    dropout: float = 0.0
    in_channels: int = N_TIMING

    def __post_init__(self):
        self.kernel_sizes = [int(k) for k in self.kernel_sizes]
        if not self.kernel_sizes or any(k < 1 or k > self.length for k in self.kernel_sizes):
            raise ValueError(f"kernel sizes must lie in [1, {self.length}]")
        if self.conv_depth < 1 or self.gru_hidden < 1 or self.n_outputs < 1:
            raise ValueError("conv_depth, gru_hidden and n_outputs must be >= 1")

    @property
    def fusion(self) -> bool:
        return self.rate_width > 0

    @property
    def conv_width(self) -> int:
        return self.out_channels * len(self.kernel_sizes)

    @property
    def head_inputs(self) -> int:
        return self.gru_hidden + self.rate_width

    def to_dict(self) -> dict:
        return asdict(self)


class KeystrokeNet:
    """Parameters live in the layers; ``parameters()`` exposes them by name."""

    def __init__(self, config: ModelConfig, seed: int = 0, dtype=np.float32):
        self.config = c = config
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        self.branches = [Conv1d(c.in_channels, c.out_channels, k, rng, dtype)
                         for k in c.kernel_sizes]
        self.branch_relu = [ReLU() for _ in c.kernel_sizes]
        self.blocks = [(Conv1d(c.conv_width, c.conv_width, c.kernel_sizes[0], rng, dtype), ReLU())
                       for _ in range(c.conv_depth - 1)]
        self.gru = GRU(c.conv_width, c.gru_hidden, rng, dtype)
        self.pool = (AttentionPool(c.gru_hidden, c.attention_dim or c.gru_hidden, rng, dtype)
                     if c.attention else LastStep())
        self.rate = Dense(N_RATES, c.rate_width, rng, dtype) if c.fusion else None
        self.drop = Dropout(c.dropout, np.random.default_rng(rng.integers(2**63)))
        self.head = Dense(c.head_inputs, c.n_outputs, rng, dtype)

    # -- parameter bookkeeping ------------------------------------------------
    def layers(self) -> dict[str, object]:
        out = {f"branch{i}": b for i, b in enumerate(self.branches)}
        out.update({f"conv{i + 1}": blk[0] for i, blk in enumerate(self.blocks)})
        out["gru"] = self.gru
        if self.config.attention:
            out["attn"] = self.pool
        if self.rate is not None:
            out["rate"] = self.rate
        out["head"] = self.head
        return out

    def parameters(self) -> dict[str, np.ndarray]:
        return {f"{ln}.{pn}": p for ln, layer in self.layers().items()
                for pn, p in layer.params.items()}

    def gradients(self) -> dict[str, np.ndarray]:
        return {f"{ln}.{pn}": layer.grads[pn] for ln, layer in self.layers().items()
                for pn in layer.params}

    def zero_grad(self):
        for layer in self.layers().values():
            layer.zero_grad()

    def n_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters().values()))

    def head_names(self) -> list[str]:
        return [n for n in self.parameters() if n.startswith("head.")]

    def backbone_names(self) -> list[str]:
        return [n for n in self.parameters() if not n.startswith("head.")]

    def replace_head(self, n_outputs: int, seed: int = 0) -> None:
        self.config.n_outputs = n_outputs
        self.head = Dense(self.config.head_inputs, n_outputs,
                          np.random.default_rng(seed), self.dtype)

    def load_parameters(self, values: dict[str, np.ndarray]) -> None:
        mine = self.parameters()
        for name, v in values.items():
            if name not in mine:
                raise KeyError(f"unknown parameter {name}")
            if mine[name].shape != v.shape:
                raise ValueError(f"{name}: shape {v.shape} != {mine[name].shape}")
            mine[name][...] = v

    def copy(self) -> "KeystrokeNet":
        twin = KeystrokeNet(ModelConfig(**self.config.to_dict()), dtype=self.dtype)
        twin.load_parameters(self.parameters())
        twin.drop.rng = np.random.default_rng(self.drop.rng.integers(2**63))
        return twin

    # -- forward / backward ------------------------------------------------------
    def forward(self, timing, rates=None, training=False):
        x = np.asarray(timing, dtype=self.dtype)
        if not np.all(np.isfinite(x)):
            raise NonFiniteInput("timing input contains NaN/Inf")
        if x.ndim != 3 or x.shape[2] != self.config.in_channels:
            raise ValueError(f"timing input must be (B, L, {self.config.in_channels}), got {x.shape}")
        feats = [relu.forward(conv.forward(x, training), training)
                 for conv, relu in zip(self.branches, self.branch_relu)]
        h = np.concatenate(feats, axis=2)
        assert h.shape[2] == self.config.conv_width
        for conv, relu in self.blocks:
            h = relu.forward(conv.forward(h, training), training)
        h = self.pool.forward(self.gru.forward(h, training), training)
        if self.rate is not None:
            if rates is None:
                raise ValueError("fusion model needs rate features")
            r = np.asarray(rates, dtype=self.dtype)
            if not np.all(np.isfinite(r)):
                raise NonFiniteInput("rate input contains NaN/Inf")
            h = np.concatenate([h, self.rate.forward(r, training)], axis=1)
        logits = self.head.forward(self.drop.forward(h, training), training)
        if not np.all(np.isfinite(logits)):
            raise NonFiniteInput("network produced non-finite logits")
        return logits

    def backward(self, dlogits) -> np.ndarray:
        """Backpropagate d loss / d logits; returns d loss / d timing input."""
        g = np.asarray(dlogits, dtype=self.dtype).reshape(-1, self.config.n_outputs)
        d = self.drop.backward(self.head.backward(g))
        H = self.config.gru_hidden
        if self.rate is not None:
            self.rate.backward(d[:, H:])
            d = d[:, :H]
        d = self.gru.backward(self.pool.backward(d))
        for conv, relu in reversed(self.blocks):
            d = conv.backward(relu.backward(d))
        O = self.config.out_channels
        dx = 0
        for i, (conv, relu) in enumerate(zip(self.branches, self.branch_relu)):
            dx = dx + conv.backward(relu.backward(d[:, :, i * O:(i + 1) * O]))
        return dx

    def predict_logits(self, timing, rates=None, batch_size=256) -> np.ndarray:
        outs = [self.forward(timing[i:i + batch_size],
                             None if rates is None else rates[i:i + batch_size])
                for i in range(0, len(timing), batch_size)]
        return np.concatenate(outs) if outs else np.zeros((0, self.config.n_outputs))

    def predict_proba(self, timing, rates=None, batch_size=256) -> np.ndarray:
        """Positive-class probability (binary) or class distribution (multiclass)."""
        z = self.predict_logits(timing, rates, batch_size).astype(np.float64)
        return sigmoid(z[:, 0]) if self.config.n_outputs == 1 else softmax(z, axis=1)

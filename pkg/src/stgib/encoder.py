"""Compact spatio-temporal encoder producing per-node embeddings.

Each block mixes node information through the symmetrically normalized
adjacency and then applies a causal dilated temporal convolution, so the
time axis shrinks by (kernel - 1) * dilation per block.  The window is
first restricted to the encoder's receptive field, which keeps embeddings
independent of older steps, then the surviving frames are averaged into a
single (N, hidden_dim) matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn


class EncoderError(Exception):
    pass


@dataclass(frozen=True)
class EncoderConfig:
    in_features: int = 1
    hidden_dim: int = 32
    n_blocks: int = 2
    temporal_kernel: int = 3
    dilations: tuple[int, ...] = (1, 2)
    dropout: float = 0.0

    @property
    def receptive_field(self) -> int:
        return 1 + (self.temporal_kernel - 1) * sum(self.dilations)

    def validate(self) -> "EncoderConfig":
        if self.hidden_dim < 1 or self.in_features < 1:
            raise EncoderError("hidden_dim and in_features must be >= 1")
        if self.n_blocks != len(self.dilations):
            raise EncoderError("need one dilation per block")
        if self.temporal_kernel < 1 or any(d < 1 for d in self.dilations):
            raise EncoderError("kernel and dilations must be >= 1")
        return self


def normalized_adjacency(adjacency: np.ndarray) -> np.ndarray:
    """Symmetric normalization with self-loops: D^{-1/2} (A + I) D^{-1/2}."""
    a = np.asarray(adjacency, dtype=np.float64) + np.eye(adjacency.shape[0])
    deg = a.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(deg)
    return inv_sqrt[:, None] * a * inv_sqrt[None, :]


class EncoderBlock(nn.Module):
    """One graph-mixing + causal dilated temporal convolution stage."""

    def __init__(self, hidden_dim: int, kernel: int, dilation: int, dropout: float = 0.0):
        super().__init__()
        self.dilation = dilation
        self.kernel = kernel
        self.dropout = dropout
        self.graph_mix = nn.Linear(hidden_dim, hidden_dim)
        self.temporal = nn.Conv1d(hidden_dim, hidden_dim, kernel, dilation=dilation)

    @property
    def shrink(self) -> int:
        return (self.kernel - 1) * self.dilation

    def forward(self, hidden: torch.Tensor, adj_norm: torch.Tensor) -> torch.Tensor:
        # hidden: (..., N, C, tau)
        tau = hidden.shape[-1]
        if tau <= self.shrink:
            raise EncoderError(
                f"temporal length {tau} too small for kernel {self.kernel} "
                f"with dilation {self.dilation}"
            )
        mixed = torch.einsum("vw,...wct->...vct", adj_norm, hidden)
        mixed = self.graph_mix(mixed.transpose(-1, -2)).transpose(-1, -2)
        mixed = torch.relu(mixed)
        flat = mixed.reshape(-1, *mixed.shape[-2:])
        out = self.temporal(flat).reshape(*mixed.shape[:-1], tau - self.shrink)
        out = torch.relu(out)
        if self.dropout > 0:
            out = nn.functional.dropout(out, self.dropout, self.training)
        return out


class GraphTemporalEncoder(nn.Module):
    """Window (N, D, W) -> node embeddings (N, hidden_dim)."""

    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.config = config.validate()
        self.input_proj = nn.Linear(config.in_features, config.hidden_dim)
        self.blocks = nn.ModuleList(
            EncoderBlock(config.hidden_dim, config.temporal_kernel, d, config.dropout)
            for d in config.dilations
        )

    def forward(self, x: torch.Tensor, adj_norm: torch.Tensor) -> torch.Tensor:
        rf = self.config.receptive_field
        if x.shape[-1] < rf:
            raise EncoderError(
                f"window length {x.shape[-1]} is below the receptive field {rf}"
            )
        x = x[..., -rf:]
        hidden = self.input_proj(x.transpose(-1, -2)).transpose(-1, -2)
        for index, block in enumerate(self.blocks):
            hidden = block(hidden, adj_norm)
            if not torch.isfinite(hidden).all():
                raise EncoderError(f"non-finite activations after block {index}")
        return hidden.mean(dim=-1)


def encode(x: torch.Tensor, adj_norm: torch.Tensor, encoder: GraphTemporalEncoder) -> torch.Tensor:
    """Functional alias for the encoder forward pass."""
    return encoder(x, adj_norm)


def init_parameters(module: nn.Module, seed: int) -> None:
    """Deterministic init: Glorot-uniform weights, zero biases.

    Parameters are visited in sorted name order with one seeded generator,
    so identical (module, seed) pairs always produce identical tensors.
    """
    generator = torch.Generator().manual_seed(seed)
    for name, param in sorted(module.named_parameters()):
        with torch.no_grad():
            if param.ndim >= 2:
                fan_in = param.shape[1] * int(np.prod(param.shape[2:], dtype=np.int64))
                fan_out = param.shape[0] * int(np.prod(param.shape[2:], dtype=np.int64))
                bound = float(np.sqrt(6.0 / (fan_in + fan_out)))
                values = torch.rand(param.shape, generator=generator, dtype=param.dtype)
                param.copy_(values * 2.0 * bound - bound)
            else:
                param.zero_()

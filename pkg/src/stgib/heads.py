"""Forecast and pseudo-class heads over (noised embedding, similarity) features.

Every node shares the same head parameters.  The similarity scores are a
graph-level signal, so they are broadcast onto each node and concatenated
with that node's gated embedding.  The regression head predicts z-scores
of the target channel and rescales them to physical units through stored
target statistics (identity by default).
"""

from __future__ import annotations

import torch
from torch import nn


def build_features(z: torch.Tensor, gamma: torch.Tensor) -> torch.Tensor:
    """Per-node concatenation of z_i with the shared similarity scores."""
    n = z.shape[-2]
    expanded = gamma.unsqueeze(-2).expand(*gamma.shape[:-1], n, gamma.shape[-1])
    return torch.cat([z, expanded], dim=-1)


class RegressionHead(nn.Module):
    """Two-layer perceptron per node -> horizon outputs in physical units."""

    def __init__(self, in_features: int, hidden_dim: int, horizon: int):
        super().__init__()
        self.lin1 = nn.Linear(in_features, hidden_dim)
        self.lin2 = nn.Linear(hidden_dim, horizon)
        self.register_buffer("target_offset", torch.zeros(()))
        self.register_buffer("target_scale", torch.ones(()))

    def set_target_stats(self, mean: float, std: float) -> None:
        with torch.no_grad():
            self.target_offset.fill_(mean)
            self.target_scale.fill_(std)

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        out = self.lin2(torch.relu(self.lin1(features)))
        return out * self.target_scale + self.target_offset


class ClassificationHead(nn.Module):
    """Two-layer perceptron per node -> pseudo-class logits."""

    def __init__(self, in_features: int, hidden_dim: int, n_classes: int):
        super().__init__()
        self.lin1 = nn.Linear(in_features, hidden_dim)
        self.lin2 = nn.Linear(hidden_dim, n_classes)

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        return self.lin2(torch.relu(self.lin1(features)))


def regression_loss(y_hat: torch.Tensor, y_reg: torch.Tensor) -> torch.Tensor:
    """Mean squared error over all node-horizon entries."""
    return ((y_hat - y_reg) ** 2).mean()


def classification_loss(logits: torch.Tensor, y_cls: torch.Tensor) -> torch.Tensor:
    """Mean per-node softmax cross-entropy in natural log units."""
    log_probs = torch.log_softmax(logits, dim=-1)
    picked = torch.gather(log_probs, -1, y_cls.long().unsqueeze(-1)).squeeze(-1)
    return -picked.mean()

"""Learnable prototype bank and its similarity / alignment machinery.

Prototypes are latent vectors partitioned across pseudo-classes (J per
class).  Similarity to each prototype is a bounded log-ratio of squared
distances, used both as a predictive feature and as the interpretability
anchor; the alignment loss ties the pooled subgraph embedding to the bank
through a single-layer estimator.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

SIMILARITY_EPS = 1e-4


class PrototypeBank(nn.Module):
    """M = K * J learnable vectors with a fixed class layout (J per class)."""

    def __init__(self, n_classes: int, per_class: int, hidden_dim: int):
        super().__init__()
        if min(n_classes, per_class, hidden_dim) < 1:
            raise ValueError("n_classes, per_class and hidden_dim must be >= 1")
        self.n_classes = n_classes
        self.per_class = per_class
        self.vectors = nn.Parameter(torch.zeros(n_classes * per_class, hidden_dim))
        self.register_buffer(
            "class_of",
            torch.arange(n_classes).repeat_interleave(per_class),
        )

    @property
    def n_prototypes(self) -> int:
        return self.vectors.shape[0]


def fill_prototypes(bank: PrototypeBank, seed: int) -> None:
    """In-place seeded draw: vectors uniform(-1, 1) / sqrt(hidden_dim)."""
    generator = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        raw = torch.rand(bank.vectors.shape, generator=generator, dtype=bank.vectors.dtype)
        bank.vectors.copy_((raw * 2.0 - 1.0) / np.sqrt(bank.vectors.shape[1]))


def init_prototypes(
    n_classes: int,
    per_class: int,
    hidden_dim: int,
    seed: int,
    dtype: torch.dtype = torch.float32,
) -> PrototypeBank:
    """Bank with vectors drawn uniform(-1, 1) / sqrt(hidden_dim), seeded."""
    bank = PrototypeBank(n_classes, per_class, hidden_dim).to(dtype)
    fill_prototypes(bank, seed)
    return bank


def similarity(z_sub: torch.Tensor, bank: PrototypeBank) -> torch.Tensor:
    """log((d^2 + 1) / (d^2 + eps)) against every prototype.

    Peaks at log(1/eps) when z_sub hits a prototype and decays to 0 with
    distance; strictly decreasing in d^2.
    """
    diff = z_sub.unsqueeze(-2) - bank.vectors
    d2 = (diff ** 2).sum(dim=-1)
    return torch.log((d2 + 1.0) / (d2 + SIMILARITY_EPS))


class AlignmentHead(nn.Module):
    """Single-layer estimator of the concatenated bank from z_sub."""

    def __init__(self, hidden_dim: int, n_prototypes: int):
        super().__init__()
        self.lin = nn.Linear(hidden_dim, n_prototypes * hidden_dim)

    def forward(self, z_sub: torch.Tensor) -> torch.Tensor:
        return self.lin(z_sub)


def alignment_loss(
    z_sub: torch.Tensor, bank: PrototypeBank, head: AlignmentHead
) -> torch.Tensor:
    """MSE between the estimator output and the flattened prototype bank."""
    target = bank.vectors.reshape(-1)
    predicted = head(z_sub)
    return ((predicted - target) ** 2).mean()


def nearest_training_subgraph(
    gammas: np.ndarray,
    window_starts: np.ndarray,
    node_sets: list[np.ndarray],
) -> list[dict]:
    """Ground each prototype in its most similar training window.

    ``gammas`` is (n_windows, M) similarity scores, ``node_sets`` the
    per-window explanation node indices.  Ties resolve to the earliest
    window.  Model-facing callers assemble these inputs with a trained
    model; see ``model.collect_explanations``.
    """
    if gammas.size == 0:
        raise ValueError("nearest_training_subgraph needs at least one window")
    records = []
    for m in range(gammas.shape[1]):
        best = int(np.argmax(gammas[:, m]))
        records.append(
            {
                "prototype": m,
                "window_start": int(window_starts[best]),
                "gamma": float(gammas[best, m]),
                "nodes": [int(i) for i in node_sets[best]],
            }
        )
    return records

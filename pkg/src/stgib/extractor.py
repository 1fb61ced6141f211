"""Stochastic explanatory-subgraph extraction.

Node keep-probabilities come from a small MLP over the embeddings.  Gates
are Bernoulli draws (hard mode, straight-through gradient) or their
binary-concrete relaxation (soft mode).  Gated-off nodes are replaced by
Gaussian noise matched to the batch statistics of the embeddings; the
compression loss bounds how much of the input graph survives into the
subgraph, and the connectivity loss pushes the keep-probabilities to align
with connected components of the adjacency.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

P_CLAMP = 1e-6
SIGMA_FLOOR = 1e-6
S_FLOOR = 1e-6
ROW_SUM_FLOOR = 1e-9


class ClampCounter:
    """Counts numeric-floor activations so tests and logs can inspect them."""

    def __init__(self) -> None:
        self.s_floor = 0
        self.sigma_floor = 0
        self.zero_rows = 0
        self.empty_pool = 0

    def reset(self) -> None:
        self.__init__()


CLAMP_EVENTS = ClampCounter()


@dataclass
class NodeSelection:
    """Keep-probabilities, sampled gates and noised embeddings for one window."""

    p: torch.Tensor
    lam: torch.Tensor
    z: torch.Tensor
    mu_h: torch.Tensor
    sigma_h: torch.Tensor


@dataclass
class SubgraphEmbedding:
    z_sub: torch.Tensor
    selected_nodes: np.ndarray


class NodeGate(nn.Module):
    """Embedding -> inclusion probability, sigmoid output clamped to (0, 1)."""

    def __init__(self, hidden_dim: int):
        super().__init__()
        self.lin1 = nn.Linear(hidden_dim, hidden_dim)
        self.lin2 = nn.Linear(hidden_dim, 1)

    def forward(self, embeddings: torch.Tensor) -> torch.Tensor:
        score = self.lin2(torch.relu(self.lin1(embeddings))).squeeze(-1)
        return torch.sigmoid(score).clamp(P_CLAMP, 1.0 - P_CLAMP)


def node_probabilities(embeddings: torch.Tensor, gate: NodeGate) -> torch.Tensor:
    return gate(embeddings)


def sample_gates(
    p: torch.Tensor,
    mode: str = "hard",
    temperature: float = 1.0,
    *,
    generator: torch.Generator | None = None,
    uniforms: torch.Tensor | None = None,
) -> torch.Tensor:
    """Draw per-node gates from the keep-probabilities.

    hard: Bernoulli(p) with a straight-through gradient to p.
    soft: binary-concrete relaxation
          sigmoid((logit p + logit u) / temperature), u ~ U(0, 1).
    ``uniforms`` injects the random draws (for frozen-noise gradient checks).
    """
    if uniforms is None:
        uniforms = torch.rand(p.shape, generator=generator, dtype=p.dtype)
    if mode == "hard":
        bern = (uniforms < p.detach()).to(p.dtype)
        return p + (bern - p).detach()
    if mode == "soft":
        if temperature <= 0:
            raise ValueError("soft mode needs temperature > 0")
        u = uniforms.clamp(P_CLAMP, 1.0 - P_CLAMP)
        logits = torch.log(p) - torch.log1p(-p) + torch.log(u) - torch.log1p(-u)
        return torch.sigmoid(logits / temperature)
    raise ValueError(f"unknown gate mode {mode!r}")


def embedding_stats(embeddings: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Detached per-dimension mean/std over the node axis, std floored."""
    if embeddings.shape[-2] < 2:
        raise ValueError("need at least 2 nodes to estimate noise statistics")
    mu = embeddings.mean(dim=-2).detach()
    sigma = embeddings.std(dim=-2, unbiased=False).detach()
    if bool((sigma < SIGMA_FLOOR).any()):
        CLAMP_EVENTS.sigma_floor += 1
    return mu, sigma.clamp_min(SIGMA_FLOOR)


def noised_embeddings(
    embeddings: torch.Tensor,
    lam: torch.Tensor,
    *,
    generator: torch.Generator | None = None,
    noise: torch.Tensor | None = None,
    stats: tuple[torch.Tensor, torch.Tensor] | None = None,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """z_i = lam_i * h_i + (1 - lam_i) * eps_i with eps ~ N(mu_h, sigma_h^2).

    ``noise`` injects the standard-normal draws; ``stats`` injects frozen
    (mu, sigma).  Statistics never carry gradients.
    """
    mu, sigma = stats if stats is not None else embedding_stats(embeddings)
    if noise is None:
        noise = torch.randn(embeddings.shape, generator=generator, dtype=embeddings.dtype)
    eps = mu.unsqueeze(-2) + sigma.unsqueeze(-2) * noise
    gate = lam.unsqueeze(-1)
    z = gate * embeddings + (1.0 - gate) * eps
    return z, mu, sigma


def compression_loss(
    lam: torch.Tensor,
    embeddings: torch.Tensor,
    *,
    stats: tuple[torch.Tensor, torch.Tensor] | None = None,
) -> torch.Tensor:
    """Upper bound on the input/subgraph information overlap.

    -1/2 log S + S / (2N) + M^2 / (2N) with S = sum_i (1 - lam_i)^2 and
    M = mean over embedding dimensions of sum_i lam_i (h_i - mu_h) / sigma_h.
    Averaged over any leading batch axes.
    """
    n = lam.shape[-1]
    mu, sigma = stats if stats is not None else embedding_stats(embeddings)
    s_raw = ((1.0 - lam) ** 2).sum(dim=-1)
    if bool((s_raw < S_FLOOR).any()):
        CLAMP_EVENTS.s_floor += 1
    s = s_raw.clamp_min(S_FLOOR)
    standardized = (embeddings - mu.unsqueeze(-2)) / sigma.unsqueeze(-2)
    m = (lam.unsqueeze(-1) * standardized).sum(dim=-2).mean(dim=-1)
    per_sample = -0.5 * torch.log(s) + s / (2 * n) + m ** 2 / (2 * n)
    return per_sample.mean()


def connectivity_loss(p: torch.Tensor, adjacency: torch.Tensor) -> torch.Tensor:
    """Frobenius distance between row-normalized P^T A P and the 2x2 identity.

    P has rows (p_i, 1 - p_i).  Rows of P^T A P whose sum falls below 1e-9
    are left unnormalized (and counted); an empty graph therefore scores
    sqrt(2).  Averaged over any leading batch axes.
    """
    assign = torch.stack([p, 1.0 - p], dim=-1)
    block = torch.einsum("...vi,vw,...wj->...ij", assign, adjacency, assign)
    row_sum = block.sum(dim=-1, keepdim=True)
    safe = row_sum > ROW_SUM_FLOOR
    if not bool(safe.all()):
        CLAMP_EVENTS.zero_rows += 1
    normalized = torch.where(safe, block / row_sum.clamp_min(ROW_SUM_FLOOR), block)
    eye = torch.eye(2, dtype=p.dtype)
    per_sample = torch.linalg.matrix_norm(normalized - eye, ord="fro")
    return per_sample.mean()


def pool_subgraph(
    z: torch.Tensor,
    lam: torch.Tensor,
    p: torch.Tensor | None = None,
) -> SubgraphEmbedding:
    """Gate-weighted mean pooling of the noised embeddings.

    Falls back to a plain mean when the gates sum to ~0 (counted).  The
    selected-node ordering uses descending p (descending lam when p is not
    supplied), ties broken by ascending index.
    """
    if z.ndim != 2:
        raise ValueError("pool_subgraph is per-sample; use pooled_embedding for batches")
    z_sub = pooled_embedding(z, lam)
    score = (p if p is not None else lam).detach().cpu().numpy()
    order = np.lexsort((np.arange(score.shape[0]), -score))
    return SubgraphEmbedding(z_sub=z_sub, selected_nodes=order)


def pooled_embedding(z: torch.Tensor, lam: torch.Tensor) -> torch.Tensor:
    """Tensor-only pooling used inside the training graph."""
    total = lam.sum(dim=-1, keepdim=True)
    safe = total > 1e-6
    if not bool(safe.all()):
        CLAMP_EVENTS.empty_pool += 1
    weighted = (lam.unsqueeze(-1) * z).sum(dim=-2) / total.clamp_min(1e-6)
    fallback = z.mean(dim=-2)
    return torch.where(safe, weighted, fallback)


def top_k(p: np.ndarray | torch.Tensor, k: int) -> np.ndarray:
    """Indices of the k largest probabilities, ties by ascending index."""
    if isinstance(p, torch.Tensor):
        p = p.detach().cpu().numpy()
    p = np.asarray(p, dtype=np.float64)
    n = p.shape[-1]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    order = np.lexsort((np.arange(n), -p))
    return np.sort(order[:k])

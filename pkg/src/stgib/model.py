"""Full forecasting model: encoder -> node gates -> prototypes -> heads.

The model owns the graph (raw and normalized adjacency), the input
z-score statistics and the target statistics as buffers, so a checkpoint
plus a config fully reconstructs inference.  All sampling is routed
through per-window RNG streams derived from (seed, window_start), which
makes results independent of batch composition and processing order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .checkpoint import CheckpointError
from .encoder import EncoderConfig, GraphTemporalEncoder, init_parameters, normalized_adjacency
from .extractor import (
    NodeGate,
    node_probabilities,
    pooled_embedding,
    sample_gates,
    noised_embeddings,
    top_k,
)
from .heads import ClassificationHead, RegressionHead, build_features
from .prototypes import AlignmentHead, PrototypeBank, fill_prototypes, similarity

GATE_STREAM = 101
NOISE_STREAM = 202


def stream_seed(*parts: int) -> int:
    """Stable 63-bit seed derived from integer key parts."""
    state = np.random.SeedSequence([int(p) for p in parts]).generate_state(1, np.uint64)
    return int(state[0] >> np.uint64(1))


def stream_generator(*parts: int) -> torch.Generator:
    generator = torch.Generator()
    generator.manual_seed(stream_seed(*parts))
    return generator


@dataclass(frozen=True)
class ModelConfig:
    n_nodes: int
    in_features: int = 1
    window: int = 12
    horizon: int = 12
    hidden_dim: int = 32
    n_blocks: int = 2
    temporal_kernel: int = 3
    dilations: tuple[int, ...] = (1, 2)
    dropout: float = 0.0
    n_classes: int = 2
    per_class: int = 3
    seed: int = 0

    @property
    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            in_features=self.in_features,
            hidden_dim=self.hidden_dim,
            n_blocks=self.n_blocks,
            temporal_kernel=self.temporal_kernel,
            dilations=tuple(self.dilations),
            dropout=self.dropout,
        )

    @property
    def n_prototypes(self) -> int:
        return self.n_classes * self.per_class

    def validate(self) -> "ModelConfig":
        self.encoder_config.validate()
        if self.encoder_config.receptive_field > self.window:
            raise ValueError(
                f"receptive field {self.encoder_config.receptive_field} exceeds "
                f"window {self.window}"
            )
        if min(self.horizon, self.n_classes, self.per_class, self.n_nodes) < 1:
            raise ValueError("horizon, n_classes, per_class, n_nodes must be >= 1")
        return self


@dataclass
class ForwardOutput:
    """Intermediate and final tensors of one forward pass (batched or single)."""

    embeddings: torch.Tensor
    p: torch.Tensor
    lam: torch.Tensor
    z: torch.Tensor
    mu_h: torch.Tensor
    sigma_h: torch.Tensor
    z_sub: torch.Tensor
    gamma: torch.Tensor
    y_hat: torch.Tensor
    logits: torch.Tensor


class InterpretableForecaster(nn.Module):
    def __init__(self, config: ModelConfig, adjacency: np.ndarray):
        super().__init__()
        self.config = config.validate()
        if adjacency.shape != (config.n_nodes, config.n_nodes):
            raise ValueError(
                f"adjacency {adjacency.shape} does not match n_nodes {config.n_nodes}"
            )
        self.encoder = GraphTemporalEncoder(config.encoder_config)
        self.gate = NodeGate(config.hidden_dim)
        self.bank = PrototypeBank(config.n_classes, config.per_class, config.hidden_dim)
        self.align_head = AlignmentHead(config.hidden_dim, config.n_prototypes)
        feature_dim = config.hidden_dim + config.n_prototypes
        self.reg_head = RegressionHead(feature_dim, config.hidden_dim, config.horizon)
        self.cls_head = ClassificationHead(feature_dim, config.hidden_dim, config.n_classes)

        self.register_buffer("adjacency", torch.tensor(adjacency, dtype=torch.get_default_dtype()))
        self.register_buffer(
            "adj_norm", torch.tensor(normalized_adjacency(adjacency), dtype=torch.get_default_dtype())
        )
        self.register_buffer("input_offset", torch.zeros(config.in_features))
        self.register_buffer("input_scale", torch.ones(config.in_features))
        self.register_buffer("epochs_trained", torch.zeros(()))
        self.initialize(config.seed)

    def initialize(self, seed: int) -> None:
        """Deterministic re-initialization of every learnable tensor."""
        named = [self.encoder, self.gate, self.align_head, self.reg_head, self.cls_head]
        for index, module in enumerate(named):
            init_parameters(module, stream_seed(seed, index))
        fill_prototypes(self.bank, stream_seed(seed, len(named)))
        with torch.no_grad():
            self.epochs_trained.zero_()

    def set_input_stats(self, mean: np.ndarray, std: np.ndarray) -> None:
        with torch.no_grad():
            self.input_offset.copy_(torch.as_tensor(mean, dtype=self.input_offset.dtype))
            self.input_scale.copy_(torch.as_tensor(std, dtype=self.input_scale.dtype))
        self.reg_head.set_target_stats(float(mean[0]), float(std[0]))

    # ------------------------------------------------------------------
    # forward
    # ------------------------------------------------------------------

    def _draws(
        self, batch_shape: tuple[int, ...], window_starts: np.ndarray, seed: int,
        dtype: torch.dtype,
    ) -> tuple[torch.Tensor, torch.Tensor]:
        n, d_h = self.config.n_nodes, self.config.hidden_dim
        uniforms, noise = [], []
        for start in window_starts:
            g_gate = stream_generator(seed, int(start), GATE_STREAM)
            g_noise = stream_generator(seed, int(start), NOISE_STREAM)
            uniforms.append(torch.rand(n, generator=g_gate, dtype=dtype))
            noise.append(torch.randn((n, d_h), generator=g_noise, dtype=dtype))
        u = torch.stack(uniforms).reshape(*batch_shape, n)
        eps = torch.stack(noise).reshape(*batch_shape, n, d_h)
        return u, eps

    def forward(
        self,
        x: torch.Tensor,
        window_starts: np.ndarray | None = None,
        *,
        mode: str = "hard",
        temperature: float = 1.0,
        seed: int = 0,
        uniforms: torch.Tensor | None = None,
        noise: torch.Tensor | None = None,
        frozen_stats: tuple[torch.Tensor, torch.Tensor] | None = None,
    ) -> ForwardOutput:
        """Run the full pipeline on raw-unit windows (N,D,W) or (B,N,D,W).

        ``uniforms``/``noise``/``frozen_stats`` override the per-window RNG
        streams; gradient checks use them to pin the stochastic draws.
        """
        single = x.ndim == 3
        if single:
            x = x.unsqueeze(0)
            if uniforms is not None:
                uniforms = uniforms.unsqueeze(0)
            if noise is not None:
                noise = noise.unsqueeze(0)
        if window_starts is None:
            window_starts = np.zeros(x.shape[0], dtype=int)
        window_starts = np.asarray(window_starts).reshape(-1)
        if window_starts.shape[0] != x.shape[0]:
            raise ValueError("need one window_start per sample")

        xn = (x - self.input_offset[:, None]) / self.input_scale[:, None]
        h = self.encoder(xn, self.adj_norm)
        p = node_probabilities(h, self.gate)
        if uniforms is None or noise is None:
            u, eps = self._draws((x.shape[0],), window_starts, seed, x.dtype)
            uniforms = u if uniforms is None else uniforms
            noise = eps if noise is None else noise
        lam = sample_gates(p, mode, temperature, uniforms=uniforms)
        z, mu_h, sigma_h = noised_embeddings(h, lam, noise=noise, stats=frozen_stats)
        z_sub = pooled_embedding(z, lam)
        gamma = similarity(z_sub, self.bank)
        features = build_features(z, gamma)
        y_hat = self.reg_head(features)
        logits = self.cls_head(features)

        out = ForwardOutput(h, p, lam, z, mu_h, sigma_h, z_sub, gamma, y_hat, logits)
        if single:
            for name in vars(out):
                setattr(out, name, getattr(out, name).squeeze(0))
        return out

    # ------------------------------------------------------------------
    # persistence
    # ------------------------------------------------------------------

    def export_tensors(self) -> dict[str, np.ndarray]:
        return {
            name: tensor.detach().cpu().numpy().astype(np.float32)
            for name, tensor in self.state_dict().items()
        }

    def load_tensors(self, tensors: dict[str, np.ndarray]) -> None:
        state = self.state_dict()
        missing = sorted(set(state) - set(tensors))
        extra = sorted(set(tensors) - set(state))
        if missing or extra:
            raise CheckpointError(
                f"checkpoint does not match model (missing {missing}, extra {extra})"
            )
        for name, current in state.items():
            incoming = tensors[name]
            if tuple(incoming.shape) != tuple(current.shape):
                raise CheckpointError(
                    f"shape mismatch for {name}: checkpoint {incoming.shape} "
                    f"vs model {tuple(current.shape)}"
                )
        converted = {
            name: torch.as_tensor(value).to(state[name].dtype)
            for name, value in tensors.items()
        }
        self.load_state_dict(converted)


def predict(
    model: InterpretableForecaster,
    x: torch.Tensor,
    window_starts: np.ndarray,
    seed: int,
) -> ForwardOutput:
    """Deterministic inference pass: hard gates, no gradients."""
    with torch.no_grad():
        return model(x, window_starts, mode="hard", seed=seed)


def collect_explanations(
    model: InterpretableForecaster,
    x: torch.Tensor,
    window_starts: np.ndarray,
    seed: int,
    k: int,
) -> dict:
    """Per-window keep-probabilities, top-k node sets and prototype scores."""
    out = predict(model, x, window_starts, seed)
    p = out.p.detach().cpu().numpy()
    gammas = out.gamma.detach().cpu().numpy()
    node_sets = [top_k(row, k) for row in p]
    return {
        "window_starts": np.asarray(window_starts, dtype=int),
        "p": p,
        "gamma": gammas,
        "node_sets": node_sets,
    }

"""Objective composition, adaptive loss weighting and the training loop.

The total objective is a convex combination of exactly five terms:
forecast MSE, subgraph compression bound, prototype alignment MSE,
connectivity penalty and pseudo-class cross-entropy.  Weights adapt once
per epoch from the coefficient of variation of each loss's epoch-to-epoch
ratio over a sliding window; degenerate statistics fall back to uniform
weights.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace

import numpy as np
import torch

from .extractor import compression_loss, connectivity_loss
from .heads import classification_loss, regression_loss
from .model import ForwardOutput, InterpretableForecaster, ModelConfig, stream_seed
from .prototypes import alignment_loss

LOSS_NAMES = ("l_reg", "l_sub", "l_var", "l_con", "l_cls")
N_LOSSES = len(LOSS_NAMES)


class NumericError(Exception):
    """A loss or gradient became non-finite; names the offending component."""


@dataclass
class LossVector:
    l_reg: torch.Tensor
    l_sub: torch.Tensor
    l_var: torch.Tensor
    l_con: torch.Tensor
    l_cls: torch.Tensor

    def values(self) -> tuple[torch.Tensor, ...]:
        return (self.l_reg, self.l_sub, self.l_var, self.l_con, self.l_cls)

    def as_floats(self) -> np.ndarray:
        return np.array([float(v.detach()) for v in self.values()])

    def check_finite(self) -> "LossVector":
        bad = [name for name, v in zip(LOSS_NAMES, self.values()) if not torch.isfinite(v)]
        if bad:
            raise NumericError(f"non-finite loss component(s): {', '.join(bad)}")
        return self


def loss_vector(
    model: InterpretableForecaster,
    output: ForwardOutput,
    y_reg: torch.Tensor,
    y_cls: torch.Tensor,
) -> LossVector:
    """All five loss terms for one (possibly batched) forward pass."""
    return LossVector(
        l_reg=regression_loss(output.y_hat, y_reg),
        l_sub=compression_loss(
            output.lam, output.embeddings, stats=(output.mu_h, output.sigma_h)
        ),
        l_var=alignment_loss(output.z_sub, model.bank, model.align_head),
        l_con=connectivity_loss(output.p, model.adjacency),
        l_cls=classification_loss(output.logits, y_cls),
    )


def total_loss(lv: LossVector, weights: np.ndarray) -> torch.Tensor:
    if not np.isclose(weights.sum(), 1.0, atol=1e-9) or np.any(weights < 0):
        raise ValueError(f"weights must lie on the simplex, got {weights}")
    terms = lv.values()
    return sum(float(w) * term for w, term in zip(weights, terms))


# ---------------------------------------------------------------------------
# coefficient-of-variation weighting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeightState:
    """Per-component history of loss ratios and the current simplex weights."""

    window: int = 10
    warmup_epochs: int = 2
    prev: tuple[float, ...] | None = None
    history: tuple[tuple[float, ...], ...] = tuple(() for _ in LOSS_NAMES)
    weights: np.ndarray = field(default_factory=lambda: np.full(N_LOSSES, 1.0 / N_LOSSES))
    epochs_seen: int = 0
    used_fallback: bool = True


def update_weights(state: WeightState, losses: np.ndarray) -> WeightState:
    """Fold one epoch of mean losses into the ratio history and reweight.

    c_i = std/|mean| of the ratio history per component; weights are the
    normalized c.  Uniform during warmup or when every c is ~0.
    """
    losses = np.asarray(losses, dtype=np.float64)
    history = state.history
    if state.prev is not None:
        prev = np.asarray(state.prev)
        ratios = np.where(np.abs(prev) > 1e-12, losses / np.where(prev == 0, 1, prev), 1.0)
        history = tuple(
            (h + (float(r),))[-state.window:] for h, r in zip(history, ratios)
        )
    epochs_seen = state.epochs_seen + 1

    cvs = np.zeros(N_LOSSES)
    for i, h in enumerate(history):
        if len(h) >= 2:
            arr = np.asarray(h)
            cvs[i] = arr.std() / max(np.abs(arr.mean()), 1e-12)
    total = cvs.sum()
    if epochs_seen <= state.warmup_epochs or total < 1e-9:
        weights = np.full(N_LOSSES, 1.0 / N_LOSSES)
        fallback = True
    else:
        weights = cvs / total
        fallback = False
    return replace(
        state,
        prev=tuple(float(v) for v in losses),
        history=history,
        weights=weights,
        epochs_seen=epochs_seen,
        used_fallback=fallback,
    )


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 64
    lr: float = 1e-3
    seed: int = 0
    gate_mode: str = "soft"
    temp_start: float = 1.0
    temp_end: float = 0.1
    weight_window: int = 10
    warmup_epochs: int = 2
    patience: int | None = 15
    restore_best: bool = True

    def validate(self) -> "TrainConfig":
        if self.epochs < 0 or self.batch_size < 1 or self.lr < 0:
            raise ValueError("epochs must be >= 0, batch_size >= 1, lr >= 0")
        if self.temp_start <= 0 or self.temp_end <= 0:
            raise ValueError("temperatures must be positive")
        if self.gate_mode not in ("soft", "hard"):
            raise ValueError(f"unknown gate mode {self.gate_mode!r}")
        return self

    def temperature(self, epoch: int) -> float:
        if self.epochs <= 1:
            return self.temp_start
        frac = epoch / (self.epochs - 1)
        return self.temp_start + (self.temp_end - self.temp_start) * frac


@dataclass
class TrainResult:
    history: list[dict]
    best_val_mae: float
    best_epoch: int
    stopped_epoch: int


def samples_to_tensors(samples, dtype: torch.dtype = torch.float32):
    x = torch.as_tensor(np.stack([s.x for s in samples]), dtype=dtype)
    y_reg = torch.as_tensor(np.stack([s.y_reg for s in samples]), dtype=dtype)
    y_cls = torch.as_tensor(np.stack([s.y_cls for s in samples]), dtype=torch.long)
    starts = np.array([s.window_start for s in samples], dtype=int)
    return x, y_reg, y_cls, starts


def validation_mae(
    model: InterpretableForecaster,
    x: torch.Tensor,
    y_reg: torch.Tensor,
    starts: np.ndarray,
    seed: int,
    chunk: int = 512,
) -> float:
    model.eval()
    errors = []
    with torch.no_grad():
        for lo in range(0, x.shape[0], chunk):
            out = model(x[lo:lo + chunk], starts[lo:lo + chunk], mode="hard", seed=seed)
            errors.append((out.y_hat - y_reg[lo:lo + chunk]).abs().reshape(-1))
    return float(torch.cat(errors).mean())


def train(
    model: InterpretableForecaster,
    train_samples,
    val_samples,
    config: TrainConfig,
) -> TrainResult:
    """Optimize all parameters with Adam under adaptive loss weights.

    Input statistics are taken from the train split.  Deterministic for a
    fixed (model init, config, data) triple; early-stops on validation MAE
    and restores the best parameters unless configured otherwise.
    """
    config = config.validate()
    dtype = next(model.parameters()).dtype
    x, y_reg, y_cls, starts = samples_to_tensors(train_samples, dtype)
    xv, yv_reg, _, vstarts = samples_to_tensors(val_samples, dtype)

    stacked = x.numpy().reshape(-1, x.shape[2], x.shape[3])
    mean = stacked.mean(axis=(0, 2))
    std = stacked.std(axis=(0, 2))
    std[std == 0] = 1.0
    model.set_input_stats(mean, std)

    optimizer = torch.optim.Adam(
        model.parameters(), lr=config.lr, betas=(0.9, 0.999), eps=1e-8
    )
    state = WeightState(window=config.weight_window, warmup_epochs=config.warmup_epochs)
    shuffle_rng = np.random.default_rng(stream_seed(config.seed, 9001))
    n = x.shape[0]

    history: list[dict] = []
    best_val = float("inf")
    best_epoch = -1
    best_state = copy.deepcopy(model.state_dict())
    stopped = -1

    for epoch in range(config.epochs):
        model.train()
        temperature = config.temperature(epoch)
        order = shuffle_rng.permutation(n)
        sums = np.zeros(N_LOSSES)
        weights_used = state.weights.copy()
        for lo in range(0, n, config.batch_size):
            idx = order[lo:lo + config.batch_size]
            out = model(
                x[idx], starts[idx],
                mode=config.gate_mode, temperature=temperature, seed=config.seed,
            )
            lv = loss_vector(model, out, y_reg[idx], y_cls[idx]).check_finite()
            loss = total_loss(lv, weights_used)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            sums += lv.as_floats() * len(idx)
        epoch_means = sums / n
        state = update_weights(state, epoch_means)

        val_mae = validation_mae(model, xv, yv_reg, vstarts, config.seed)
        row = {"epoch": epoch}
        row.update({name: float(v) for name, v in zip(LOSS_NAMES, epoch_means)})
        row.update({f"w{i + 1}": float(w) for i, w in enumerate(weights_used)})
        row["val_mae"] = val_mae
        history.append(row)

        with torch.no_grad():
            model.epochs_trained += 1

        if val_mae < best_val:
            best_val = val_mae
            best_epoch = epoch
            best_state = copy.deepcopy(model.state_dict())
        elif config.patience is not None and epoch - best_epoch >= config.patience:
            stopped = epoch
            break

    if config.restore_best and best_epoch >= 0:
        model.load_state_dict(best_state)
    return TrainResult(
        history=history,
        best_val_mae=best_val,
        best_epoch=best_epoch,
        stopped_epoch=stopped,
    )


# ---------------------------------------------------------------------------
# gradient verification
# ---------------------------------------------------------------------------

def grad_check(
    model: InterpretableForecaster,
    sample: tuple[torch.Tensor, torch.Tensor, torch.Tensor],
    *,
    step: float = 1e-5,
    temperature: float = 0.7,
    seed: int = 0,
) -> dict[str, float]:
    """Max relative error of analytic vs. central-difference gradients.

    Runs in soft gate mode with frozen uniforms, noise draws and embedding
    statistics so both gradient routes see the same deterministic function.
    The model must be float64.
    """
    if next(model.parameters()).dtype != torch.float64:
        raise ValueError("grad_check requires a float64 model")
    x, y_reg, y_cls = sample
    params = [p for _, p in sorted(model.named_parameters())]

    n, d_h = model.config.n_nodes, model.config.hidden_dim
    g = torch.Generator().manual_seed(stream_seed(seed, 4242))
    uniforms = torch.rand(n, generator=g, dtype=torch.float64)
    noise = torch.randn((n, d_h), generator=g, dtype=torch.float64)
    with torch.no_grad():
        base = model(x, mode="soft", temperature=temperature, uniforms=uniforms, noise=noise)
        frozen_stats = (base.mu_h.clone(), base.sigma_h.clone())

    def losses() -> LossVector:
        out = model(
            x, mode="soft", temperature=temperature,
            uniforms=uniforms, noise=noise, frozen_stats=frozen_stats,
        )
        return loss_vector(model, out, y_reg, y_cls)

    analytic: dict[str, list[np.ndarray]] = {name: [] for name in LOSS_NAMES}
    lv = losses()
    for name, term in zip(LOSS_NAMES, lv.values()):
        grads = torch.autograd.grad(term, params, retain_graph=True, allow_unused=True)
        analytic[name] = [
            (torch.zeros_like(p) if g_ is None else g_).detach().numpy().copy()
            for p, g_ in zip(params, grads)
        ]

    report = {name: 0.0 for name in LOSS_NAMES}
    with torch.no_grad():
        for p_index, param in enumerate(params):
            flat = param.reshape(-1)
            for j in range(flat.shape[0]):
                keep = float(flat[j])
                flat[j] = keep + step
                plus = losses().as_floats()
                flat[j] = keep - step
                minus = losses().as_floats()
                flat[j] = keep
                fd = (plus - minus) / (2.0 * step)
                for name_index, name in enumerate(LOSS_NAMES):
                    a = analytic[name][p_index].reshape(-1)[j]
                    err = abs(a - fd[name_index]) / max(abs(a), abs(fd[name_index]), 1e-6)
                    report[name] = max(report[name], float(err))
    return report


def make_check_instance(
    seed: int = 0,
    n_nodes: int = 6,
    hidden_dim: int = 8,
    n_classes: int = 2,
    per_class: int = 2,
    window: int = 7,
    horizon: int = 3,
):
    """Small float64 model + random sample for gradient verification."""
    rng = np.random.default_rng(seed)
    adjacency = rng.uniform(0.0, 1.0, size=(n_nodes, n_nodes))
    adjacency = (adjacency + adjacency.T) / 2.0
    np.fill_diagonal(adjacency, 0.0)
    config = ModelConfig(
        n_nodes=n_nodes,
        window=window,
        horizon=horizon,
        hidden_dim=hidden_dim,
        n_classes=n_classes,
        per_class=per_class,
        seed=seed,
    )
    model = InterpretableForecaster(config, adjacency).double()
    x = torch.as_tensor(rng.standard_normal((n_nodes, 1, window)), dtype=torch.float64)
    y_reg = torch.as_tensor(rng.standard_normal((n_nodes, horizon)), dtype=torch.float64)
    y_cls = torch.as_tensor(rng.integers(0, n_classes, size=n_nodes), dtype=torch.long)
    return model, (x, y_reg, y_cls)

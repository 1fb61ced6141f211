"""Forecast metrics, explanation fidelity and information-theoretic oracles.

Fidelity masks node input features with the train-split mean (stored on
the model), keeping the graph intact, and reports the mean absolute change
of the scalarized prediction, in percent.  The ``standard`` convention
scores "plus" by removing the explanation nodes and "minus" by keeping
only them; the ``paper`` convention swaps the two labels.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import torch

from .extractor import top_k
from .model import InterpretableForecaster, predict
from .training import samples_to_tensors


@dataclass(frozen=True)
class MetricReport:
    mae: float
    rmse: float
    mape_percent: float | None
    n_evaluated: int

    def to_dict(self) -> dict:
        return {
            "mae": self.mae,
            "rmse": self.rmse,
            "mape_percent": self.mape_percent,
            "n_evaluated": self.n_evaluated,
        }


def forecast_metrics(y_hat: np.ndarray, y_true: np.ndarray) -> MetricReport:
    """MAE/RMSE over all entries; MAPE over entries with |y| > 1e-6."""
    y_hat = np.asarray(y_hat, dtype=np.float64)
    y_true = np.asarray(y_true, dtype=np.float64)
    if y_hat.shape != y_true.shape:
        raise ValueError(f"shape mismatch: {y_hat.shape} vs {y_true.shape}")
    delta = y_hat - y_true
    mae = float(np.abs(delta).mean())
    rmse = float(np.sqrt((delta ** 2).mean()))
    valid = np.abs(y_true) > 1e-6
    n_valid = int(valid.sum())
    if n_valid:
        mape = float(100.0 * (np.abs(delta[valid]) / np.abs(y_true[valid])).mean())
    else:
        mape = None
    return MetricReport(mae=mae, rmse=rmse, mape_percent=mape, n_evaluated=n_valid)


# ---------------------------------------------------------------------------
# fidelity / sparsity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FidelityCurve:
    ks: tuple[int, ...]
    fidelity_plus: tuple[float, ...]
    fidelity_minus: tuple[float, ...]

    def csv_text(self) -> str:
        lines = ["k,fidelity_plus,fidelity_minus"]
        for k, fp, fm in zip(self.ks, self.fidelity_plus, self.fidelity_minus):
            lines.append(f"{k},{fp:.10g},{fm:.10g}")
        return "\n".join(lines) + "\n"


def _masked_inputs(
    x: torch.Tensor, node_sets: list[np.ndarray], mask_value: torch.Tensor
) -> torch.Tensor:
    masked = x.clone()
    for b, nodes in enumerate(node_sets):
        masked[b, nodes] = mask_value
    return masked


def fidelity(
    model: InterpretableForecaster,
    samples,
    k: int,
    variant: str,
    *,
    seed: int = 0,
    nodes: np.ndarray | None = None,
    convention: str = "standard",
) -> float:
    """Mean absolute change (x100) of the per-window scalarized forecast.

    The scalar f is the mean over all node-horizon outputs of a window.
    ``nodes`` pins the masked explanation set; otherwise each window uses
    the top-k nodes of its own keep-probabilities.
    """
    if variant not in ("plus", "minus"):
        raise ValueError(f"variant must be 'plus' or 'minus', got {variant!r}")
    if convention not in ("standard", "paper"):
        raise ValueError(f"unknown fidelity convention {convention!r}")
    n = model.config.n_nodes
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    if float(model.epochs_trained) == 0:
        warnings.warn("computing fidelity on an untrained model", stacklevel=2)
    dtype = next(model.parameters()).dtype
    x, _, _, starts = samples_to_tensors(samples, dtype)
    base = predict(model, x, starts, seed)
    f_base = base.y_hat.reshape(x.shape[0], -1).mean(dim=1)

    if nodes is not None:
        explanation = [np.asarray(nodes, dtype=int)] * x.shape[0]
    else:
        explanation = [top_k(row, k) for row in base.p.detach().cpu().numpy()]

    remove_explanation = (variant == "plus") == (convention == "standard")
    if remove_explanation:
        node_sets = explanation
    else:
        node_sets = [np.setdiff1d(np.arange(n), e) for e in explanation]

    mask_value = model.input_offset.to(dtype)[:, None]  # broadcast over time
    masked = _masked_inputs(x, node_sets, mask_value)
    out = predict(model, masked, starts, seed)
    f_masked = out.y_hat.reshape(x.shape[0], -1).mean(dim=1)
    return float(100.0 * (f_base - f_masked).abs().mean())


def sparsity_sweep(
    model: InterpretableForecaster,
    samples,
    ks,
    *,
    seed: int = 0,
    convention: str = "standard",
) -> FidelityCurve:
    """Fidelity at each sparsity level; output is sorted by ascending k."""
    ordered = sorted(set(int(k) for k in ks))
    plus, minus = [], []
    for k in ordered:
        plus.append(fidelity(model, samples, k, "plus", seed=seed, convention=convention))
        minus.append(fidelity(model, samples, k, "minus", seed=seed, convention=convention))
    return FidelityCurve(
        ks=tuple(ordered), fidelity_plus=tuple(plus), fidelity_minus=tuple(minus)
    )


# ---------------------------------------------------------------------------
# discrete mutual information oracles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiscreteJoint:
    """Finite joint distribution table p(x, y), normalized to 1."""

    table: np.ndarray

    def validate(self) -> "DiscreteJoint":
        t = np.asarray(self.table, dtype=np.float64)
        if t.ndim != 2 or np.any(t < 0):
            raise ValueError("joint table must be a non-negative matrix")
        if abs(t.sum() - 1.0) > 1e-12:
            raise ValueError(f"joint table sums to {t.sum()!r}, expected 1")
        return self

    @property
    def marginal_x(self) -> np.ndarray:
        return self.table.sum(axis=1)

    @property
    def marginal_y(self) -> np.ndarray:
        return self.table.sum(axis=0)


def mutual_information_discrete(joint: DiscreteJoint) -> float:
    """Exact sum of p(x,y) ln(p(x,y) / (p(x) p(y))), with 0 ln 0 = 0."""
    joint.validate()
    t = np.asarray(joint.table, dtype=np.float64)
    product = joint.marginal_x[:, None] * joint.marginal_y[None, :]
    mask = t > 0  # whenever p(x,y) > 0 both marginals are > 0
    return float((t[mask] * np.log(t[mask] / product[mask])).sum())


@dataclass(frozen=True)
class BoundSanityReport:
    mi: float
    bound_true_posterior: float
    max_perturbed_bound: float
    n_perturbations: int

    @property
    def gap(self) -> float:
        return self.mi - self.bound_true_posterior

    @property
    def perturbed_never_exceed(self) -> bool:
        return self.max_perturbed_bound <= self.mi + 1e-12


def _variational_bound(joint: DiscreteJoint, q_posterior: np.ndarray) -> float:
    """E[ln q(y|x)] - E[ln p(y)] under the joint; -inf if q is 0 on support."""
    t = joint.table
    py = joint.marginal_y
    mask = t > 0
    if np.any(q_posterior[mask] <= 0):
        return float("-inf")
    e_lnq = float((t[mask] * np.log(q_posterior[mask])).sum())
    ymask = py > 0
    e_lnpy = float((py[ymask] * np.log(py[ymask])).sum())
    return e_lnq - e_lnpy


def true_posterior(joint: DiscreteJoint) -> np.ndarray:
    px = joint.marginal_x[:, None]
    with np.errstate(invalid="ignore", divide="ignore"):
        post = np.where(px > 0, joint.table / np.where(px == 0, 1, px), 0.0)
    return post


def bound_sanity(joint: DiscreteJoint, delta: float = 0.1) -> BoundSanityReport:
    """Check the variational classification bound on a finite joint.

    With the true posterior the bound equals the mutual information; every
    perturbed posterior (one cell shifted by +-delta, row renormalized)
    scores strictly lower whenever the row actually changes.
    """
    joint = joint.validate()
    mi = mutual_information_discrete(joint)
    post = true_posterior(joint)
    bound_true = _variational_bound(joint, post)

    n_x, n_y = joint.table.shape
    max_perturbed = float("-inf")
    count = 0
    for i in range(n_x):
        for j in range(n_y):
            for sign in (1.0, -1.0):
                q = post.copy()
                q[i, j] = max(q[i, j] + sign * delta, 1e-12)
                row_sum = q[i].sum()
                if row_sum <= 0:
                    continue
                q[i] = q[i] / row_sum
                if np.allclose(q[i], post[i], atol=1e-12):
                    continue
                count += 1
                max_perturbed = max(max_perturbed, _variational_bound(joint, q))
    return BoundSanityReport(
        mi=mi,
        bound_true_posterior=bound_true,
        max_perturbed_bound=max_perturbed,
        n_perturbations=count,
    )


# ---------------------------------------------------------------------------
# historical-average baseline
# ---------------------------------------------------------------------------

def historical_average_table(
    train_samples, window: int, steps_per_day: int, n_nodes: int
) -> np.ndarray:
    """Per-node mean target for each time-of-day slot, from train windows."""
    sums = np.zeros((n_nodes, steps_per_day))
    counts = np.zeros((n_nodes, steps_per_day))
    for s in train_samples:
        horizon = s.y_reg.shape[1]
        for h in range(horizon):
            slot = (s.window_start + window + h) % steps_per_day
            sums[:, slot] += s.y_reg[:, h]
            counts[:, slot] += 1
    node_mean = np.divide(
        sums.sum(axis=1), counts.sum(axis=1),
        out=np.zeros(n_nodes), where=counts.sum(axis=1) > 0,
    )
    table = np.where(counts > 0, sums / np.where(counts == 0, 1, counts),
                     node_mean[:, None])
    return table


def historical_average_predict(
    table: np.ndarray, samples, window: int, steps_per_day: int
) -> np.ndarray:
    """Forecast each sample by reading the time-of-day table."""
    out = []
    for s in samples:
        horizon = s.y_reg.shape[1]
        slots = [(s.window_start + window + h) % steps_per_day for h in range(horizon)]
        out.append(table[:, slots])
    return np.stack(out)

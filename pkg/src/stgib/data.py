"""Temporal graph datasets: loading, windowing, pseudo-labels, synthesis.

The portable on-disk layout is a directory with
    graph.csv   header ``src,dst,weight``, zero-based node indices
    signal.bin  magic ``GTDS1`` | u32 N | u32 D | u32 T | u32 step_seconds |
                N*D*T float32 little-endian, node-major / feature-next /
                time-last (C order of an (N, D, T) array)
    meta.json   optional: node_ids, impute_zeros flag, free-form extras
"""

from __future__ import annotations

import json
import math
import struct
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

SIGNAL_MAGIC = b"GTDS1"


class DatasetError(Exception):
    """Raised for malformed or inconsistent dataset inputs."""


class ShapeMismatchError(DatasetError):
    def __init__(self, n_graph: int, n_signal: int):
        self.n_graph = n_graph
        self.n_signal = n_signal
        super().__init__(
            f"adjacency refers to {n_graph} nodes but signal has {n_signal}"
        )


@dataclass(frozen=True)
class StaticGraph:
    """Static weighted graph over N nodes (no self-loops, weights >= 0)."""

    adjacency: np.ndarray
    node_ids: tuple[str, ...]
    meta: dict = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]

    def validate(self) -> "StaticGraph":
        a = self.adjacency
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DatasetError(f"adjacency must be square, got {a.shape}")
        if a.shape[0] < 2:
            raise DatasetError("graph needs at least 2 nodes")
        if not np.all(np.isfinite(a)):
            raise DatasetError("adjacency has non-finite entries")
        if np.any(a < 0):
            raise DatasetError("adjacency has negative weights")
        if np.any(np.diag(a) != 0):
            raise DatasetError("adjacency diagonal must be zero")
        if len(self.node_ids) != a.shape[0]:
            raise DatasetError("node_ids length does not match adjacency")
        return self


@dataclass(frozen=True)
class TemporalSignal:
    """Node-feature tensor over time, shape (N, D, T_total)."""

    values: np.ndarray
    step_seconds: int = 300
    meta: dict = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    @property
    def n_steps(self) -> int:
        return self.values.shape[2]

    def validate(self) -> "TemporalSignal":
        if self.values.ndim != 3:
            raise DatasetError(f"signal must be (N, D, T), got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise DatasetError("signal has non-finite entries after load")
        return self


@dataclass(frozen=True)
class PseudoLabelSpec:
    """Per-node congestion thresholds: the q-quantile of feature 0."""

    quantile: float
    thresholds: np.ndarray
    positive_class_is_congested: bool = True
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class WindowSample:
    """One sliding-window sample.

    x       (N, D, W) input window
    y_reg   (N, T') future feature-0 values, original units
    y_cls   (N,) pseudo-class in {0, 1}; 1 means window mean below threshold
    """

    x: np.ndarray
    y_reg: np.ndarray
    y_cls: np.ndarray
    window_start: int


@dataclass(frozen=True)
class NormalizationStats:
    """Per-feature z-score statistics, computed on the train split only."""

    mean: np.ndarray
    std: np.ndarray
    computed_on: str = "train"
    constant_features: tuple[int, ...] = ()


@dataclass(frozen=True)
class PlantedSpec:
    """Synthetic dataset with a known informative node set."""

    n_nodes: int
    informative_set: tuple[int, ...]
    noise_sigma: float
    window: int
    horizon: int
    n_steps: int
    seed: int

    def validate(self) -> "PlantedSpec":
        inf = tuple(sorted(set(self.informative_set)))
        if not inf:
            raise DatasetError("informative_set must be nonempty")
        if len(inf) >= self.n_nodes:
            raise DatasetError("informative_set must be a strict subset of nodes")
        if min(inf) < 0 or max(inf) >= self.n_nodes:
            raise DatasetError("informative_set index out of range")
        if self.n_steps < self.window + self.horizon:
            raise DatasetError("n_steps too small for one window")
        if self.noise_sigma < 0:
            raise DatasetError("noise_sigma must be >= 0")
        return replace(self, informative_set=inf)


# ---------------------------------------------------------------------------
# binary signal + edge-list io
# ---------------------------------------------------------------------------

def write_signal(path: str | Path, signal: TemporalSignal) -> None:
    values = np.ascontiguousarray(signal.values, dtype="<f4")
    n, d, t = values.shape
    with open(path, "wb") as fh:
        fh.write(SIGNAL_MAGIC)
        fh.write(struct.pack("<4I", n, d, t, signal.step_seconds))
        fh.write(values.tobytes())


def read_signal(path: str | Path) -> TemporalSignal:
    raw = Path(path).read_bytes()
    if raw[:5] != SIGNAL_MAGIC:
        raise DatasetError(f"{path}: bad magic {raw[:5]!r}, expected {SIGNAL_MAGIC!r}")
    n, d, t, step = struct.unpack_from("<4I", raw, 5)
    payload = raw[5 + 16:]
    expect = n * d * t * 4
    if len(payload) != expect:
        raise DatasetError(
            f"{path}: payload is {len(payload)} bytes, expected {expect}"
        )
    values = np.frombuffer(payload, dtype="<f4").reshape(n, d, t)
    return TemporalSignal(values=values.copy(), step_seconds=step)


def write_graph_csv(path: str | Path, adjacency: np.ndarray) -> None:
    lines = ["src,dst,weight"]
    n = adjacency.shape[0]
    for i in range(n):
        for j in range(n):
            w = adjacency[i, j]
            if w != 0:
                lines.append(f"{i},{j},{w:.10g}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_graph_csv(path: str | Path, n_nodes: int) -> tuple[np.ndarray, int]:
    """Parse an edge list into a dense adjacency; returns (A, self_loops_stripped)."""
    text = Path(path).read_text().strip().splitlines()
    if not text or text[0].strip().lower() not in ("src,dst,weight", "from,to,cost"):
        raise DatasetError(f"{path}: expected header 'src,dst,weight'")
    adjacency = np.zeros((n_nodes, n_nodes), dtype=np.float64)
    max_index = -1
    self_loops = 0
    for lineno, line in enumerate(text[1:], start=2):
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise DatasetError(f"{path}:{lineno}: expected 3 columns")
        src, dst, w = int(parts[0]), int(parts[1]), float(parts[2])
        max_index = max(max_index, src, dst)
        if src < 0 or dst < 0:
            raise DatasetError(f"{path}:{lineno}: negative node index")
        if max(src, dst) >= n_nodes:
            continue  # counted below through max_index
        if src == dst:
            self_loops += 1
            continue
        adjacency[src, dst] = w
    if max_index >= n_nodes:
        raise ShapeMismatchError(max_index + 1, n_nodes)
    return adjacency, self_loops


def _impute(values: np.ndarray, treat_zero_as_missing: bool) -> tuple[np.ndarray, dict]:
    """Fill missing entries by last-observation-carried-forward, then node mean."""
    out = values.astype(np.float64, copy=True)
    missing = ~np.isfinite(out)
    nan_density = float(missing.mean())
    if nan_density > 0.2:
        raise DatasetError(
            f"refusing to load: {nan_density:.1%} of entries are NaN/Inf (limit 20%)"
        )
    if treat_zero_as_missing:
        missing |= out == 0.0
    n_missing = int(missing.sum())
    if n_missing:
        out[missing] = np.nan
        n, d, t = out.shape
        for i in range(n):
            for j in range(d):
                row = out[i, j]
                bad = np.isnan(row)
                if not bad.any():
                    continue
                # carry the previous observation forward
                idx = np.where(~bad, np.arange(t), -1)
                np.maximum.accumulate(idx, out=idx)
                row[:] = np.where(idx >= 0, row[np.maximum(idx, 0)], np.nan)
                still = np.isnan(row)
                if still.any():
                    observed = row[~still]
                    row[still] = observed.mean() if observed.size else 0.0
    report = {"nan_density": nan_density, "imputed_entries": n_missing}
    return out.astype(np.float32), report


def load_dataset(
    signal_path: str | Path,
    adjacency_path: str | Path,
    meta_path: str | Path | None = None,
) -> tuple[StaticGraph, TemporalSignal]:
    """Load the portable format and return a validated (graph, signal) pair.

    ``meta_path`` defaults to meta.json next to the signal when present.
    Zeros are treated as missing only when the metadata sets
    ``"impute_zeros": true`` (sensor archives); NaN/Inf are always imputed.
    """
    signal_path = Path(signal_path)
    for p in (signal_path, Path(adjacency_path)):
        if not p.exists():
            raise DatasetError(f"dataset file not found: {p}")
    meta: dict = {}
    if meta_path is None:
        candidate = signal_path.parent / "meta.json"
        meta_path = candidate if candidate.exists() else None
    if meta_path is not None:
        meta = json.loads(Path(meta_path).read_text())

    signal = read_signal(signal_path)
    values, impute_report = _impute(
        signal.values, treat_zero_as_missing=bool(meta.get("impute_zeros", False))
    )
    adjacency, self_loops = read_graph_csv(adjacency_path, signal.n_nodes)

    node_ids = meta.get("node_ids")
    if node_ids is None:
        node_ids = [str(i) for i in range(signal.n_nodes)]
    if len(node_ids) != signal.n_nodes:
        raise DatasetError(
            f"meta.json lists {len(node_ids)} node_ids for {signal.n_nodes} nodes"
        )

    graph = StaticGraph(
        adjacency=adjacency,
        node_ids=tuple(str(x) for x in node_ids),
        meta={"self_loops_stripped": self_loops, **{k: v for k, v in meta.items() if k != "node_ids"}},
    ).validate()
    out_signal = TemporalSignal(
        values=values, step_seconds=signal.step_seconds, meta=impute_report
    ).validate()
    return graph, out_signal


def save_dataset(out_dir: str | Path, graph: StaticGraph, signal: TemporalSignal,
                 extra_meta: dict | None = None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_signal(out / "signal.bin", signal)
    write_graph_csv(out / "graph.csv", graph.adjacency)
    meta = {"node_ids": list(graph.node_ids)}
    if extra_meta:
        meta.update(extra_meta)
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# pseudo-labels and windowing
# ---------------------------------------------------------------------------

def compute_thresholds(signal: TemporalSignal, q: float = 0.1) -> PseudoLabelSpec:
    """Per-node pseudo-class thresholds: the q-quantile of the feature-0 series.

    Uses linear interpolation between order statistics.  Constant series keep
    the constant as threshold, so every window lands in class 0; this is
    reported through the returned spec's warnings.
    """
    if not 0.0 < q < 1.0:
        raise DatasetError(f"quantile must lie in (0, 1), got {q}")
    series = signal.values[:, 0, :].astype(np.float64)
    thresholds = np.quantile(series, q, axis=1)
    notes = []
    constant = np.where(series.max(axis=1) == series.min(axis=1))[0]
    if constant.size:
        notes.append(
            f"{constant.size} node(s) have constant series; all their windows "
            "fall in class 0"
        )
    return PseudoLabelSpec(
        quantile=q, thresholds=thresholds, warnings=tuple(notes)
    )


def make_windows(
    signal: TemporalSignal,
    spec: PseudoLabelSpec,
    window: int,
    horizon: int,
    stride: int = 1,
) -> list[WindowSample]:
    """Slide a (window, horizon) pair across the signal.

    Yields floor((T - W - T') / stride) + 1 samples.  The pseudo-class of a
    node is 1 exactly when its feature-0 window mean falls below its
    threshold.
    """
    if window < 1 or horizon < 1 or stride < 1:
        raise DatasetError("window, horizon and stride must all be >= 1")
    t_total = signal.n_steps
    if window + horizon > t_total:
        raise DatasetError(
            f"window + horizon = {window + horizon} exceeds T_total = {t_total}"
        )
    values = signal.values
    samples = []
    for start in range(0, t_total - window - horizon + 1, stride):
        x = values[:, :, start:start + window]
        y_reg = values[:, 0, start + window:start + window + horizon]
        window_mean = x[:, 0, :].mean(axis=1)
        congested = window_mean < spec.thresholds
        if not spec.positive_class_is_congested:
            congested = ~congested
        samples.append(
            WindowSample(
                x=x.astype(np.float32),
                y_reg=y_reg.astype(np.float32),
                y_cls=congested.astype(np.int64),
                window_start=start,
            )
        )
    return samples


def split_chronological(
    samples: list[WindowSample],
    ratios: tuple[float, float, float] = (0.6, 0.2, 0.2),
) -> tuple[list[WindowSample], list[WindowSample], list[WindowSample]]:
    """Contiguous train/val/test split in window_start order.

    Sizes are floor(ratio * n) for train and val; the remainder goes to test.
    """
    if not math.isclose(sum(ratios), 1.0, abs_tol=1e-9):
        raise DatasetError(f"split ratios must sum to 1, got {ratios}")
    ordered = sorted(samples, key=lambda s: s.window_start)
    n = len(ordered)
    n_train = int(n * ratios[0])
    n_val = int(n * ratios[1])
    train, val, test = (
        ordered[:n_train],
        ordered[n_train:n_train + n_val],
        ordered[n_train + n_val:],
    )
    if not train or not val or not test:
        raise DatasetError(
            f"{n} samples are too few for nonempty splits with ratios {ratios}"
        )
    return train, val, test


def split_is_leak_free(
    train: list[WindowSample],
    test: list[WindowSample],
    window: int,
    horizon: int,
) -> bool:
    """True when no test window overlaps any train window's target range."""
    max_train_start = max(s.window_start for s in train)
    min_test_start = min(s.window_start for s in test)
    return max_train_start + window + horizon <= min_test_start


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------

def compute_stats(samples: list[WindowSample], computed_on: str = "train") -> NormalizationStats:
    x = np.concatenate(
        [s.x.reshape(s.x.shape[0], s.x.shape[1], -1) for s in samples], axis=2
    ).astype(np.float64)
    mean = x.mean(axis=(0, 2))
    std = x.std(axis=(0, 2))
    constant = tuple(int(i) for i in np.where(std < 1e-12)[0])
    std = np.where(std < 1e-12, 1.0, std)
    return NormalizationStats(
        mean=mean.astype(np.float64),
        std=std.astype(np.float64),
        computed_on=computed_on,
        constant_features=constant,
    )


def normalize(samples: list[WindowSample], stats: NormalizationStats) -> list[WindowSample]:
    """Z-score the input channels; regression targets stay in original units."""
    mean = stats.mean[None, :, None]
    std = stats.std[None, :, None]
    return [
        replace(s, x=((s.x - mean) / std).astype(np.float32)) for s in samples
    ]


def denormalize(samples: list[WindowSample], stats: NormalizationStats) -> list[WindowSample]:
    mean = stats.mean[None, :, None]
    std = stats.std[None, :, None]
    return [
        replace(s, x=(s.x * std + mean).astype(np.float32)) for s in samples
    ]


# ---------------------------------------------------------------------------
# planted synthetic datasets
# ---------------------------------------------------------------------------

def generate_synthetic(
    spec: PlantedSpec,
) -> tuple[StaticGraph, TemporalSignal, tuple[int, ...]]:
    """Synthesize a dataset whose targets depend only on the planted nodes.

    Informative node i carries a persistent level plus a sinusoid,
    clean_i(t) = L_i + a_i cos(2 pi t / P_g(i) + phi_i), with at most
    (n_inf - 1) // 2 shared periods, so the clean signals span a space of
    dimension <= n_inf.  Window means of the informative set then form a
    (generically exact) linear basis for every node's future values at all
    horizons; non-informative coefficients are zero.  Gaussian
    noise(noise_sigma) is added to every series, leaving non-informative
    rows as independent noise.  Levels have balanced signs so the
    population mean stays near zero.  The graph is a cycle through the
    informative set, a cycle through the rest, and one weak bridge.
    """
    spec = spec.validate()
    rng = np.random.default_rng(spec.seed)
    n, t_total, w = spec.n_nodes, spec.n_steps, spec.window
    informative = np.array(spec.informative_set, dtype=int)
    n_inf = informative.size

    n_freqs = max(0, (n_inf - 1) // 2)
    periods = [2 * w + 7 + 6 * g for g in range(n_freqs)]
    signs = np.resize([1.0, -1.0], n_inf)
    rng.shuffle(signs)
    levels = signs * rng.uniform(1.0, 2.0, size=n_inf)

    t = np.arange(t_total)
    clean = np.zeros((n, t_total), dtype=np.float64)
    for rank, node in enumerate(informative):
        amplitude = rng.uniform(0.4, 0.6)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        clean[node] = levels[rank]
        if n_freqs:
            period = periods[rank % n_freqs]
            clean[node] += amplitude * np.cos(2.0 * np.pi * t / period + phase)

    values = clean + spec.noise_sigma * rng.standard_normal((n, t_total))
    signal = TemporalSignal(
        values=values[:, None, :].astype(np.float32),
        step_seconds=300,
        meta={"planted": True},
    ).validate()

    adjacency = np.zeros((n, n), dtype=np.float64)

    def ring(nodes: np.ndarray, weight: float) -> None:
        if nodes.size == 2:
            adjacency[nodes[0], nodes[1]] = adjacency[nodes[1], nodes[0]] = weight
        elif nodes.size > 2:
            for a, b in zip(nodes, np.roll(nodes, -1)):
                adjacency[a, b] = adjacency[b, a] = weight

    rest = np.array(sorted(set(range(n)) - set(informative.tolist())), dtype=int)
    ring(informative, 1.0)
    ring(rest, 1.0)
    if rest.size:
        adjacency[informative[0], rest[0]] = adjacency[rest[0], informative[0]] = 0.1

    graph = StaticGraph(
        adjacency=adjacency,
        node_ids=tuple(str(i) for i in range(n)),
        meta={"informative_set": [int(i) for i in informative]},
    ).validate()
    return graph, signal, tuple(int(i) for i in informative)

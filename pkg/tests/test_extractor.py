import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from stgib.extractor import (
    CLAMP_EVENTS,
    NodeGate,
    compression_loss,
    connectivity_loss,
    node_probabilities,
    noised_embeddings,
    pool_subgraph,
    pooled_embedding,
    sample_gates,
    top_k,
)


def t64(values):
    return torch.as_tensor(np.asarray(values), dtype=torch.float64)


# ---------------------------------------------------------------------------
# node probabilities
# ---------------------------------------------------------------------------

def test_zero_gate_gives_half():
    gate = NodeGate(4).double()
    with torch.no_grad():
        for p in gate.parameters():
            p.zero_()
    p = node_probabilities(torch.randn(5, 4, dtype=torch.float64), gate)
    torch.testing.assert_close(p, torch.full((5,), 0.5, dtype=torch.float64))


def test_large_bias_saturates_to_clamp():
    gate = NodeGate(4).double()
    with torch.no_grad():
        for p in gate.parameters():
            p.zero_()
        gate.lin2.bias.fill_(50.0)
    p = node_probabilities(torch.randn(3, 4, dtype=torch.float64), gate)
    torch.testing.assert_close(p, torch.full((3,), 1.0 - 1e-6, dtype=torch.float64))


def test_probabilities_permutation_equivariant():
    gate = NodeGate(6).double()
    h = torch.randn(7, 6, dtype=torch.float64)
    perm = np.random.default_rng(0).permutation(7)
    p = node_probabilities(h, gate)
    p_perm = node_probabilities(h[perm], gate)
    torch.testing.assert_close(p_perm, p[perm])


# ---------------------------------------------------------------------------
# gates
# ---------------------------------------------------------------------------

def test_hard_gate_monte_carlo_mean():
    p = torch.full((100_000,), 0.7, dtype=torch.float64)
    lam = sample_gates(p, "hard", generator=torch.Generator().manual_seed(0))
    assert set(torch.unique(lam).tolist()) <= {0.0, 1.0}
    assert abs(float(lam.mean()) - 0.7) < 0.01


def test_hard_gate_extreme_probability():
    p = torch.full((100_000,), 1.0 - 1e-6, dtype=torch.float64)
    lam = sample_gates(p, "hard", generator=torch.Generator().manual_seed(1))
    assert abs(float(lam.mean()) - 1.0) < 0.01


def test_soft_gate_low_temperature_limit():
    p = t64([0.3, 0.7])
    u = torch.full((2,), 0.5, dtype=torch.float64)
    lam = sample_gates(p, "soft", temperature=1e-4, uniforms=u)
    torch.testing.assert_close(lam, t64([0.0, 1.0]), atol=1e-12, rtol=0)


def test_gates_deterministic_given_seed():
    p = torch.rand(10, dtype=torch.float64)
    a = sample_gates(p, "hard", generator=torch.Generator().manual_seed(3))
    b = sample_gates(p, "hard", generator=torch.Generator().manual_seed(3))
    torch.testing.assert_close(a, b, rtol=0, atol=0)


def test_soft_gate_needs_positive_temperature():
    with pytest.raises(ValueError):
        sample_gates(t64([0.5]), "soft", temperature=0.0)


def test_straight_through_gradient():
    p = t64([0.4, 0.6]).requires_grad_()
    lam = sample_gates(p, "hard", uniforms=t64([0.9, 0.1]))
    lam.sum().backward()
    torch.testing.assert_close(p.grad, torch.ones(2, dtype=torch.float64))


# ---------------------------------------------------------------------------
# noised embeddings
# ---------------------------------------------------------------------------

def test_lambda_one_keeps_embedding():
    h = torch.randn(4, 3, dtype=torch.float64)
    z, _, _ = noised_embeddings(h, torch.ones(4, dtype=torch.float64),
                                generator=torch.Generator().manual_seed(0))
    torch.testing.assert_close(z, h)


def test_lambda_zero_monte_carlo_matches_stats():
    rng = torch.Generator().manual_seed(0)
    h = torch.randn(8, 2, dtype=torch.float64, generator=rng)
    mu = h.mean(dim=0)
    draws = []
    for i in range(10_000):
        z, mu_h, sigma_h = noised_embeddings(
            h, torch.zeros(8, dtype=torch.float64),
            generator=torch.Generator().manual_seed(i),
        )
        draws.append(z[0])
    mean = torch.stack(draws).mean(dim=0)
    sigma = h.std(dim=0, unbiased=False)
    assert torch.all((mean - mu).abs() <= 3 * sigma / 100)


def test_equal_rows_noise_is_the_mean():
    h = torch.ones(3, 4, dtype=torch.float64) * 2.5
    z, mu, sigma = noised_embeddings(
        h, torch.full((3,), 0.5, dtype=torch.float64),
        generator=torch.Generator().manual_seed(0),
    )
    # sigma floors at 1e-6, so the noise is the shared row up to 1e-6 scale
    torch.testing.assert_close(z, h, atol=1e-4, rtol=0)


def test_single_node_rejected():
    with pytest.raises(ValueError, match="2 nodes"):
        noised_embeddings(torch.randn(1, 3, dtype=torch.float64),
                          torch.ones(1, dtype=torch.float64))


def test_monotone_retention_toward_embedding():
    h = torch.randn(5, 4, dtype=torch.float64)
    noise = torch.randn(5, 4, dtype=torch.float64)
    distances = []
    for lam_value in (0.2, 0.5, 0.8, 1.0):
        lam = torch.full((5,), lam_value, dtype=torch.float64)
        z, _, _ = noised_embeddings(h, lam, noise=noise)
        distances.append(torch.linalg.vector_norm(z - h, dim=1))
    stacked = torch.stack(distances)
    assert torch.all(stacked[1:] <= stacked[:-1] + 1e-12)


# ---------------------------------------------------------------------------
# compression loss
# ---------------------------------------------------------------------------

def test_compression_all_zero_gates():
    h = torch.randn(4, 8, dtype=torch.float64)
    value = compression_loss(torch.zeros(4, dtype=torch.float64), h)
    assert float(value) == pytest.approx(-0.5 * np.log(4) + 0.5, abs=1e-9)
    assert float(value) == pytest.approx(-0.1931471805, abs=1e-6)


def test_compression_all_one_gates_clamped():
    CLAMP_EVENTS.reset()
    h = torch.randn(4, 8, dtype=torch.float64)
    value = compression_loss(torch.ones(4, dtype=torch.float64), h)
    expected = -0.5 * np.log(1e-6) + 1e-6 / 8.0
    assert float(value) == pytest.approx(expected, abs=1e-9)
    assert CLAMP_EVENTS.s_floor == 1


def test_compression_equal_rows_hand_value():
    h = torch.ones(2, 3, dtype=torch.float64)
    value = compression_loss(t64([1.0, 0.0]), h)
    assert float(value) == pytest.approx(0.25, abs=1e-12)


def test_compression_gradients_match_finite_differences():
    rng = torch.Generator().manual_seed(0)
    h = torch.randn(6, 8, dtype=torch.float64, generator=rng)
    lam = torch.rand(6, dtype=torch.float64, generator=rng)
    mu = h.mean(dim=0).detach()
    sigma = h.std(dim=0, unbiased=False).detach().clamp_min(1e-6)
    stats = (mu, sigma)

    lam_v = lam.clone().requires_grad_()
    h_v = h.clone().requires_grad_()
    loss = compression_loss(lam_v, h_v, stats=stats)
    loss.backward()

    step = 1e-6
    for var, grad in ((lam_v, lam_v.grad), (h_v, h_v.grad)):
        flat = var.detach().reshape(-1)
        gflat = grad.reshape(-1)
        for j in range(flat.shape[0]):
            keep = float(flat[j])
            flat[j] = keep + step
            plus = float(compression_loss(lam_v.detach(), h_v.detach(), stats=stats))
            flat[j] = keep - step
            minus = float(compression_loss(lam_v.detach(), h_v.detach(), stats=stats))
            flat[j] = keep
            fd = (plus - minus) / (2 * step)
            a = float(gflat[j])
            assert abs(fd - a) / max(abs(fd), abs(a), 1e-6) < 1e-4


# ---------------------------------------------------------------------------
# connectivity loss
# ---------------------------------------------------------------------------

def test_connectivity_two_disjoint_edges():
    a = torch.zeros(4, 4, dtype=torch.float64)
    a[0, 1] = a[1, 0] = 1.0
    a[2, 3] = a[3, 2] = 1.0
    loss = connectivity_loss(t64([1.0, 1.0, 0.0, 0.0]), a)
    assert float(loss) <= 1e-6


def test_connectivity_complete_graph_uniform():
    a = torch.ones(4, 4, dtype=torch.float64) - torch.eye(4, dtype=torch.float64)
    loss = connectivity_loss(torch.full((4,), 0.5, dtype=torch.float64), a)
    assert float(loss) == pytest.approx(1.0, abs=1e-6)


def test_connectivity_empty_graph_flag_path():
    CLAMP_EVENTS.reset()
    loss = connectivity_loss(t64([1.0, 0.0, 0.5]), torch.zeros(3, 3, dtype=torch.float64))
    assert float(loss) == pytest.approx(np.sqrt(2.0), abs=1e-12)
    assert CLAMP_EVENTS.zero_rows == 1


def test_connectivity_two_component_indicator_is_zero():
    rng = np.random.default_rng(4)
    blocks = []
    for size in (3, 4):
        block = rng.uniform(0.5, 1.0, (size, size))
        block = (block + block.T) / 2
        np.fill_diagonal(block, 0)
        blocks.append(block)
    a = np.zeros((7, 7))
    a[:3, :3] = blocks[0]
    a[3:, 3:] = blocks[1]
    p = t64([1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0])
    assert float(connectivity_loss(p, torch.as_tensor(a))) <= 1e-6
    uniform = torch.full((7,), 0.5, dtype=torch.float64)
    assert float(connectivity_loss(uniform, torch.as_tensor(a))) > 1e-3


def test_connectivity_gradient_flows():
    a = torch.ones(4, 4, dtype=torch.float64) - torch.eye(4, dtype=torch.float64)
    p = torch.full((4,), 0.4, dtype=torch.float64, requires_grad=True)
    connectivity_loss(p, a).backward()
    assert p.grad is not None and torch.isfinite(p.grad).all()


# ---------------------------------------------------------------------------
# pooling and top-k
# ---------------------------------------------------------------------------

def test_pool_all_ones_is_column_mean():
    z = torch.randn(5, 3, dtype=torch.float64)
    out = pool_subgraph(z, torch.ones(5, dtype=torch.float64))
    torch.testing.assert_close(out.z_sub, z.mean(dim=0))


def test_pool_one_hot_selects_row():
    z = torch.randn(4, 3, dtype=torch.float64)
    lam = t64([0.0, 0.0, 1.0, 0.0])
    out = pool_subgraph(z, lam)
    torch.testing.assert_close(out.z_sub, z[2])


def test_pool_half_half():
    z = torch.arange(12, dtype=torch.float64).reshape(4, 3)
    lam = t64([0.5, 0.5, 0.0, 0.0])
    out = pool_subgraph(z, lam)
    torch.testing.assert_close(out.z_sub, z[:2].mean(dim=0))


def test_pool_empty_gates_falls_back_to_mean():
    CLAMP_EVENTS.reset()
    z = torch.randn(4, 3, dtype=torch.float64)
    out = pool_subgraph(z, torch.zeros(4, dtype=torch.float64))
    torch.testing.assert_close(out.z_sub, z.mean(dim=0))
    assert CLAMP_EVENTS.empty_pool == 1


def test_pool_selected_nodes_ordered_by_p():
    z = torch.randn(4, 3, dtype=torch.float64)
    out = pool_subgraph(z, torch.ones(4, dtype=torch.float64), p=t64([0.3, 0.9, 0.1, 0.9]))
    np.testing.assert_array_equal(out.selected_nodes, [1, 3, 0, 2])


@given(st.integers(min_value=0, max_value=2 ** 20))
@settings(max_examples=25, deadline=None)
def test_pool_permutation_invariant(seed):
    r = np.random.default_rng(seed)
    z = torch.as_tensor(r.standard_normal((6, 4)))
    lam = torch.as_tensor(r.uniform(0.1, 1.0, 6))
    perm = r.permutation(6)
    torch.testing.assert_close(
        pooled_embedding(z, lam), pooled_embedding(z[perm], lam[perm]),
        atol=1e-12, rtol=1e-12,
    )


def test_top_k_basic():
    np.testing.assert_array_equal(top_k(np.array([0.9, 0.1, 0.5]), 2), [0, 2])


def test_top_k_tie_breaks_ascending():
    np.testing.assert_array_equal(top_k(np.array([0.5, 0.5, 0.5]), 2), [0, 1])


def test_top_k_full():
    np.testing.assert_array_equal(top_k(np.array([0.2, 0.8]), 2), [0, 1])


def test_top_k_out_of_range():
    with pytest.raises(ValueError):
        top_k(np.array([0.2, 0.8]), 3)
    with pytest.raises(ValueError):
        top_k(np.array([0.2, 0.8]), 0)

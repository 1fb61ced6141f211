from pathlib import Path

import numpy as np
import pytest
import torch

torch.set_num_threads(1)

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(autouse=True)
def _seed_global_rngs():
    # keep results independent of test execution order
    torch.manual_seed(0)
    np.random.seed(0)


@pytest.fixture(scope="session")
def toy4_dir() -> Path:
    return FIXTURES / "toy4"


@pytest.fixture(scope="session")
def planted():
    """Small planted dataset shared across tests (seed 0)."""
    from stgib import data

    spec = data.PlantedSpec(
        n_nodes=12, informative_set=(1, 4, 7), noise_sigma=0.1,
        window=8, horizon=4, n_steps=160, seed=0,
    )
    graph, signal, truth = data.generate_synthetic(spec)
    return graph, signal, truth, spec


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)

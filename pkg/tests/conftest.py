import numpy as np
import pytest

from picsb.fields import ExperimentConfig, RngStream, default_trainer
from picsb.pde.dataset import gen_dataset

SMOKE_TRAINER = dict(
    default_trainer(),
    enc_channels=[8, 16],
    dec_channels=[16, 8],
    learning_rate=3e-4,
    iterations=300,
    refresh_period=50,
)


def smoke_burgers_config(seed: int = 11) -> ExperimentConfig:
    return ExperimentConfig(
        benchmark="burgers",
        grid=[32],
        frames=32,
        regime="R3",
        ratio=0.1,
        solver={"nu_hf": 0.01, "nu_lf": 0.1, "refine": 4},
        trainer=dict(SMOKE_TRAINER),
        seed=seed,
    )


@pytest.fixture(scope="session")
def smoke_burgers(tmp_path_factory):
    """32x32 Burgers dataset, 32 train + 4 test; shared across tests."""
    root = tmp_path_factory.mktemp("burgers_smoke")
    return gen_dataset(smoke_burgers_config(), root, n_train=32, n_test=4)


@pytest.fixture(scope="session")
def micro_burgers(tmp_path_factory):
    """16x16 Burgers dataset with 8 train samples, for fast trainer property tests."""
    cfg = ExperimentConfig(
        benchmark="burgers",
        grid=[16],
        frames=16,
        regime="R2",
        ratio=0.1,
        solver={"nu_hf": 0.01, "nu_lf": 0.1, "refine": 4},
        trainer=dict(SMOKE_TRAINER, enc_channels=[4, 8], dec_channels=[8, 4]),
        seed=41,
    )
    root = tmp_path_factory.mktemp("burgers_micro")
    return gen_dataset(cfg, root, n_train=8, n_test=2)


@pytest.fixture(scope="session")
def tiny_darcy(tmp_path_factory):
    cfg = ExperimentConfig(
        benchmark="darcy",
        grid=[32, 32],
        frames=1,
        regime="R3",
        ratio=0.1,
        solver={"a_low": 3.0, "a_high": 12.0, "forcing": 1.0, "cg_rtol": 1e-10},
        trainer=dict(SMOKE_TRAINER, learning_rate=1e-6, clip_norm=1e-5),
        seed=21,
    )
    root = tmp_path_factory.mktemp("darcy_tiny")
    return gen_dataset(cfg, root, n_train=6, n_test=2)


@pytest.fixture(scope="session")
def tiny_kolmogorov(tmp_path_factory):
    cfg = ExperimentConfig(
        benchmark="kolmogorov",
        grid=[16, 16],
        frames=4,
        regime="R2",
        ratio=0.1,
        solver={"re": 1000.0, "horizon": 1.25, "cfl": 0.4},
        trainer=dict(SMOKE_TRAINER),
        seed=31,
    )
    root = tmp_path_factory.mktemp("kolmogorov_tiny")
    return gen_dataset(cfg, root, n_train=4, n_test=2)

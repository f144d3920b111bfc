"""Shared fixtures: small scenarios and maps reused across test modules."""

import numpy as np
import pytest

from ckmsched import ScenarioConfig, build_ckm, build_scenario


def desk_config(**overrides):
    """Small two-cell scenario that keeps map builds fast."""
    base = dict(
        n_cells=2,
        users_per_cell=5,
        kbar=2,
        kprime=4,
        n_h=2,
        n_v=2,
        cell_radius_m=60.0,
        grid_edge_m=15.0,
        samples_per_grid=5,
        alpha=0.5,
        eta=0.7,
        target_snr_db=20.0,
        dynamic_grid_fraction=0.25,
        rng_seed=7,
        static_clusters_per_cell=6,
        scatter_range_m=30.0,
        scatter_falloff=2.0,
        phase_length_m=120.0,
    )
    base.update(overrides)
    return ScenarioConfig(**base)


@pytest.fixture(scope="session")
def small_scenario():
    return build_scenario(desk_config())

@pytest.fixture(scope="session")
def small_ckm(small_scenario):
    return build_ckm(small_scenario)


@pytest.fixture(scope="session")
def static_scenario():
    return build_scenario(desk_config(dynamic_grid_fraction=0.0))


def rng(seed=0):
    return np.random.default_rng(seed)

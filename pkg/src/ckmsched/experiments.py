"""Seeded Monte-Carlo trials tying geometry, map, schedulers, and
evaluation together."""

from __future__ import annotations

import time
from functools import lru_cache

import numpy as np

from .ckm import UsCkm, build_ckm
from .errors import ScheduleError
from .evaluation import (
    ChannelSet,
    OverheadModel,
    ScheduleResult,
    brute_force_optimum,
    calibrate_noise,
    evaluate_group,
    overhead_counts,
)
from .geometry import Position, Scenario, ScenarioConfig, build_scenario, channel_rows
from .groups import UserRecord
from .scheduling import greedy_schedule, random_schedule, robust_two_stage, sus_schedule

ALGORITHMS = (
    "greedy",
    "random",
    "sus",
    "two_stage_aes",
    "two_stage_gis",
    "robust_aes",
    "robust_gis",
    "brute_force",
)

_TAG_USERS = 31
_TAG_RANDOM_PICK = 41


@lru_cache(maxsize=8)
def cached_scenario(config: ScenarioConfig) -> Scenario:
    return build_scenario(config)


@lru_cache(maxsize=8)
def cached_ckm(config: ScenarioConfig) -> UsCkm:
    return build_ckm(cached_scenario(config))


@lru_cache(maxsize=64)
def cached_noise(config: ScenarioConfig, target_snr_db: float) -> float:
    return calibrate_noise(cached_scenario(config), target_snr_db)


def _rng(config: ScenarioConfig, tag: int, trial_seed: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence([config.rng_seed, tag, int(trial_seed)])
    )


def place_users(scenario: Scenario, trial_seed: int) -> list[UserRecord]:
    """Draw users_per_cell positions per cell inside its coverage grids.

    "uniform" picks a grid uniformly; "clustered" concentrates picks
    around a few per-cell hotspot grids.
    """
    cfg = scenario.config
    rng = _rng(cfg, _TAG_USERS, trial_seed)
    edge = cfg.grid_edge_m
    users: list[UserRecord] = []
    uid = 0
    for cell in range(cfg.n_cells):
        grids = scenario.grids_of_cell[cell]
        if cfg.placement == "clustered":
            anchors = rng.choice(grids, size=min(cfg.hotspots_per_cell, len(grids)),
                                 replace=False)
            centers = scenario.grid_centers[grids]
            spread = 2.0 * edge
            weights = np.zeros(len(grids))
            for a in anchors:
                d2 = np.sum((centers - scenario.grid_centers[a]) ** 2, axis=1)
                weights += np.exp(-d2 / (2.0 * spread**2))
            weights /= weights.sum()
        else:
            weights = None
        for _ in range(cfg.users_per_cell):
            g = int(rng.choice(grids, p=weights))
            pos = scenario.grid_centers[g] + (rng.random(2) - 0.5) * edge
            grid = scenario.locate(pos)
            users.append(
                UserRecord(
                    id=uid,
                    cell=grid.cell,
                    position=Position(float(pos[0]), float(pos[1])),
                    grid=grid,
                )
            )
            uid += 1
    return users


def trial_channels(
    scenario: Scenario, users: list[UserRecord], realization: int
) -> ChannelSet:
    """True channels of every user toward every BS at one realization."""
    ordered = sorted(users, key=lambda u: u.id)
    pos = np.array([u.position for u in ordered])
    ids = np.array([u.id for u in ordered], dtype=np.int64)
    cells = np.array([u.cell for u in ordered], dtype=np.int64)
    L = scenario.config.n_cells
    h = np.stack(
        [channel_rows(scenario, l, pos, np.full(len(ordered), realization))
         for l in range(L)]
    )
    return ChannelSet(ids=ids, cell_of=cells, h=h)


def _mult_estimate(config: ScenarioConfig, algorithm: str, ckm: UsCkm | None) -> int:
    if algorithm == "brute_force":
        # Not table-modeled: combinations times one MMSE solve per user.
        import math

        combos = math.comb(config.users_per_cell, config.kbar) ** config.n_cells
        return combos * config.n_cells * config.kbar * config.n_antennas**3
    eta = None
    if algorithm.startswith("robust"):
        eta = config.eta if config.eta is not None else ckm.realized_eta()
    model = OverheadModel(
        algorithm=algorithm,
        n_cells=config.n_cells,
        users_per_cell=config.users_per_cell,
        kbar=config.kbar,
        kprime=config.kprime,
        n_antennas=config.n_antennas,
        eta=eta,
    )
    return overhead_counts(model)["mults"]


def run_trial(config: ScenarioConfig, algorithm: str, trial_seed: int) -> ScheduleResult:
    """One seeded scheduling trial, genie-evaluated with true channels.

    Identical (config, algorithm, trial_seed) invocations reproduce the
    result exactly; wall_ms is diagnostic.
    """
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    if trial_seed < 0:
        raise ValueError("trial_seed must be >= 0")
    scenario = cached_scenario(config)
    noise = cached_noise(config, config.target_snr_db)
    users = place_users(scenario, trial_seed)
    realization = int(trial_seed) + 1
    chans = trial_channels(scenario, users, realization)
    needs_map = algorithm.startswith(("two_stage", "robust"))
    ckm = cached_ckm(config) if needs_map or algorithm.startswith("robust") else None

    t0 = time.perf_counter()
    counters = None
    if algorithm == "greedy":
        group = greedy_schedule(chans, config.kbar, noise)
    elif algorithm == "random":
        seed = int(_rng(config, _TAG_RANDOM_PICK, trial_seed).integers(2**63))
        group = random_schedule(chans.ids_by_cell(), config.kbar, seed)
    elif algorithm == "sus":
        per_cell = {
            l: {u: chans.vector(l, u) for u in ids}
            for l, ids in chans.ids_by_cell().items()
        }
        group = sus_schedule(per_cell, config.kbar, config.alpha)
    elif algorithm == "brute_force":
        group, _ = brute_force_optimum(chans, config.kbar, noise)
    else:
        first_stage = "gis" if algorithm.endswith("gis") else "aes"
        mode = "auto" if algorithm.startswith("robust") else "scsi"
        provider = (lambda u: chans.h[:, chans.index[u.id], :]) if mode == "auto" else None
        # Users are re-placed fresh each trial; clear stale acquisitions.
        for u in users:
            u.icsi = None
        group, counters = robust_two_stage(
            scenario, ckm, users, config.kprime, config.kbar, config.alpha,
            first_stage=first_stage, icsi_provider=provider, csi_mode=mode,
        )
    wall_ms = (time.perf_counter() - t0) * 1e3

    rate, gammas = evaluate_group(group, chans, noise)
    if group.size() != config.n_cells * config.kbar:
        raise ScheduleError("scheduler returned a wrong-sized group")
    L, K, N = config.n_cells, config.users_per_cell, config.n_antennas
    if counters is None:
        if algorithm in ("greedy", "brute_force"):
            counters = {"csi_acquisitions": L * L * K, "info_exchange": L * L * K * N}
        elif algorithm == "sus":
            counters = {"csi_acquisitions": L * K, "info_exchange": 0}
        else:
            counters = {"csi_acquisitions": 0, "info_exchange": 0}
    return ScheduleResult(
        algorithm=algorithm,
        sum_rate=float(rate),
        per_user_sinr=gammas,
        csi_acquisitions=int(counters["csi_acquisitions"]),
        info_exchange=int(counters["info_exchange"]),
        multiplication_estimate=int(_mult_estimate(config, algorithm, ckm)),
        group=group,
        wall_ms=wall_ms,
    )

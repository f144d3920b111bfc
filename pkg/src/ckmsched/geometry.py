"""Multi-cell scenario geometry and the clustered geometric channel model.

A scenario is a set of base stations with dual-polarized uniform planar
arrays, a square-grid partition of the joint coverage area, a field of
static scatterer clusters (deterministic per seed, so channels are
spatially consistent), and optional dynamic clusters that add seeded
per-realization jitter inside the grids they are attached to.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.stats import qmc

from .errors import ConfigError, GeometryError, OutOfClusterError, ZeroNormError

SPEED_OF_LIGHT = 299792458.0

# Seed-stream tags so every random ingredient draws from its own
# SeedSequence and stays independent of the others.
_TAG_STATIC = 11
_TAG_DYNAMIC_PICK = 13
_TAG_DYNAMIC_PLACE = 17
_TAG_JITTER = 19
_TAG_SHADOW = 23
_TAG_SAMPLES = 29


class Position(NamedTuple):
    x: float
    y: float


class GridIndex(NamedTuple):
    """A coverage grid: serving cell plus cluster-wide grid id."""

    cell: int
    g: int


@dataclass(frozen=True)
class ScenarioConfig:
    """Scenario parameters. Defaults follow the reference three-cell setup.

    kbar is the number of users scheduled per cell, kprime the active-set
    size produced by the first selection stage, alpha the correlation
    threshold used by that stage. delta is an absolute reliability
    threshold on the per-grid correlation variance; eta instead derives
    delta as a quantile so that roughly that fraction of (BS, grid)
    entries is classified reliable. Set at most one of delta / eta.
    """

    n_cells: int = 3
    users_per_cell: int = 50
    kbar: int = 10
    kprime: int = 20
    n_h: int = 4
    n_v: int = 4
    fc_hz: float = 6.7e9
    bs_height_m: float = 25.0
    user_height_m: float = 1.5
    cell_radius_m: float = 250.0
    grid_edge_m: float = 25.0
    samples_per_grid: int = 9
    alpha: float = 0.5
    delta: float | None = None
    eta: float | None = None
    target_snr_db: float = 20.0
    dynamic_grid_fraction: float = 0.0
    rng_seed: int = 0
    # Propagation / scatterer model knobs.
    inter_site_distance_m: float | None = None
    path_loss_exponent: float = 3.0
    path_loss_offset_db: float | None = None
    shadowing_std_db: float = 4.0
    static_clusters_per_cell: int = 12
    dynamic_clusters_per_grid: int = 2
    dynamic_gain: float = 0.35
    dynamic_jitter_scale: float = 1.0
    phase_length_m: float = 60.0
    scatter_range_m: float = 80.0
    scatter_falloff: float = 2.0
    placement: str = "uniform"
    hotspots_per_cell: int = 2

    def __post_init__(self):
        if self.n_cells < 1:
            raise ConfigError("n_cells must be >= 1")
        if not (1 <= self.kbar <= self.kprime <= self.users_per_cell):
            raise ConfigError(
                "need 1 <= kbar <= kprime <= users_per_cell, got "
                f"kbar={self.kbar} kprime={self.kprime} K={self.users_per_cell}"
            )
        if self.n_h < 1 or self.n_v < 1:
            raise ConfigError("array dimensions must be >= 1")
        if self.n_cells * self.kbar > self.n_antennas:
            raise ConfigError(
                f"n_cells*kbar = {self.n_cells * self.kbar} exceeds the "
                f"{self.n_antennas} receive antennas"
            )
        if self.grid_edge_m <= 0:
            raise ConfigError("grid_edge_m must be positive")
        if self.grid_edge_m > 2.0 * self.cell_radius_m:
            raise ConfigError("grid_edge_m exceeds the cell diameter")
        if self.samples_per_grid < 1:
            raise ConfigError("samples_per_grid must be >= 1")
        if not (0.0 < self.alpha <= 1.0):
            raise ConfigError("alpha must lie in (0, 1]")
        if self.delta is not None and self.delta < 0.0:
            raise ConfigError("delta must be >= 0")
        if self.eta is not None and not (0.0 <= self.eta <= 1.0):
            raise ConfigError("eta must lie in [0, 1]")
        if self.delta is not None and self.eta is not None:
            raise ConfigError("set at most one of delta / eta")
        if not (0.0 <= self.dynamic_grid_fraction <= 1.0):
            raise ConfigError("dynamic_grid_fraction must lie in [0, 1]")
        if self.fc_hz <= 0 or self.cell_radius_m <= 0:
            raise ConfigError("fc_hz and cell_radius_m must be positive")
        if self.bs_height_m <= 0 or self.user_height_m <= 0:
            raise ConfigError("antenna heights must be positive")
        if self.rng_seed < 0:
            raise ConfigError("rng_seed must be a non-negative integer")
        if self.placement not in ("uniform", "clustered"):
            raise ConfigError(f"unknown placement mode {self.placement!r}")
        if self.static_clusters_per_cell < 1:
            raise ConfigError("static_clusters_per_cell must be >= 1")
        if self.dynamic_clusters_per_grid < 1:
            raise ConfigError("dynamic_clusters_per_grid must be >= 1")
        if self.phase_length_m <= 0 or self.scatter_range_m <= 0:
            raise ConfigError("phase_length_m and scatter_range_m must be positive")
        if self.scatter_falloff <= 0:
            raise ConfigError("scatter_falloff must be positive")

    @property
    def n_antennas(self) -> int:
        return 2 * self.n_h * self.n_v

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.fc_hz

    @property
    def isd_m(self) -> float:
        if self.inter_site_distance_m is not None:
            return self.inter_site_distance_m
        return math.sqrt(3.0) * self.cell_radius_m


@dataclass
class ChannelVector:
    """Complex channel with provenance metadata."""

    entries: np.ndarray
    observing_bs: int
    source_cell: int
    source_position: Position


@dataclass
class ScattererField:
    """Static clusters plus per-grid dynamic clusters."""

    static_positions: np.ndarray   # (C, 2)
    static_gains: np.ndarray       # (C, 2) complex, one column per polarization
    static_delays: np.ndarray      # (C,) seconds, cluster to its home BS
    dynamic_grid_ids: np.ndarray   # (A,) sorted grid ids
    dynamic_positions: np.ndarray  # (A, D, 2)
    dynamic_gains: np.ndarray      # (A, D, 2) complex
    jitter_scale: float
    affected_grids: frozenset = field(default_factory=frozenset)


def _seeded(seed: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, tags)]))


def array_response(
    n_h: int,
    n_v: int,
    azimuth: float,
    elevation: float,
    polarization: int,
    wavelength: float,
    spacing: float | None = None,
) -> np.ndarray:
    """Steering vector of a dual-polarized n_h x n_v planar array.

    Returns a unit-norm length 2*n_h*n_v vector whose active half is the
    block of the requested polarization. Element spacing defaults to half
    the wavelength. Boresight (azimuth=elevation=0) gives co-phased
    entries.
    """
    if polarization not in (0, 1):
        raise ValueError("polarization must be 0 or 1")
    if wavelength <= 0:
        raise ValueError("wavelength must be positive")
    if spacing is None:
        spacing = 0.5 * wavelength
    k = 2.0 * math.pi * spacing / wavelength
    ph = k * np.arange(n_h) * math.sin(azimuth) * math.cos(elevation)
    pv = k * np.arange(n_v) * math.sin(elevation)
    block = np.exp(1j * (ph[:, None] + pv[None, :])).ravel() / math.sqrt(n_h * n_v)
    out = np.zeros(2 * n_h * n_v, dtype=np.complex128)
    size = n_h * n_v
    out[polarization * size : (polarization + 1) * size] = block
    return out


def path_loss_db(
    distance_3d: float,
    fc: float,
    bs_height: float,
    user_height: float,
    exponent: float = 3.0,
    offset_db: float | None = None,
    ref_distance: float = 1.0,
) -> float:
    """Single-slope log-distance path loss in dB.

    offset_db defaults to the free-space loss at ref_distance for the
    given carrier. The antenna heights are accepted for interface
    completeness (a single-slope model does not use them) and validated
    only.
    """
    if distance_3d <= 0:
        raise ValueError("distance_3d must be positive")
    if fc <= 0:
        raise ValueError("fc must be positive")
    if bs_height <= 0 or user_height <= 0:
        raise ValueError("antenna heights must be positive")
    if offset_db is None:
        offset_db = 20.0 * math.log10(4.0 * math.pi * ref_distance * fc / SPEED_OF_LIGHT)
    return offset_db + 10.0 * exponent * math.log10(distance_3d / ref_distance)


class Scenario:
    """Immutable output of build_scenario; all arrays are precomputed."""

    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.n_antennas = config.n_antennas
        self.wavelength = config.wavelength_m
        self.bs_xy = _bs_layout(config)
        self._build_grids()
        self._build_scatterers()
        rng = _seeded(config.rng_seed, _TAG_SHADOW)
        self.shadow_db = rng.normal(
            0.0, config.shadowing_std_db, size=(config.n_cells, self.n_grids)
        )
        rng = _seeded(config.rng_seed, _TAG_SAMPLES)
        self.halton_shift = rng.random(size=(self.n_grids, 2))
        self._freeze()

    # -- construction -------------------------------------------------

    def _build_grids(self):
        cfg = self.config
        edge = cfg.grid_edge_m
        radius = cfg.cell_radius_m
        x0 = float(self.bs_xy[:, 0].min() - radius)
        y0 = float(self.bs_xy[:, 1].min() - radius)
        x1 = float(self.bs_xy[:, 0].max() + radius)
        y1 = float(self.bs_xy[:, 1].max() + radius)
        n_ix = max(1, math.ceil((x1 - x0) / edge - 1e-9))
        n_iy = max(1, math.ceil((y1 - y0) / edge - 1e-9))
        centers = []
        serving = []
        lattice = {}
        for iy in range(n_iy):
            cy = y0 + (iy + 0.5) * edge
            for ix in range(n_ix):
                cx = x0 + (ix + 0.5) * edge
                d = np.hypot(self.bs_xy[:, 0] - cx, self.bs_xy[:, 1] - cy)
                best = int(np.argmin(d))  # argmin keeps the lowest BS id on ties
                if d[best] <= radius + 1e-9:
                    lattice[(ix, iy)] = len(centers)
                    centers.append((cx, cy))
                    serving.append(best)
        if not centers:
            raise GeometryError("no grid center falls inside any cell")
        self.origin = np.array([x0, y0])
        self.grid_centers = np.array(centers, dtype=float)
        self.grid_serving = np.array(serving, dtype=np.int64)
        self.n_grids = len(centers)
        self._lattice = lattice
        self.grids_of_cell = [
            np.flatnonzero(self.grid_serving == l) for l in range(cfg.n_cells)
        ]
        for l, grids in enumerate(self.grids_of_cell):
            if len(grids) < cfg.users_per_cell:
                raise GeometryError(
                    f"cell {l} has {len(grids)} grids, fewer than "
                    f"users_per_cell={cfg.users_per_cell}; shrink grid_edge_m"
                )

    def _build_scatterers(self):
        cfg = self.config
        rng = _seeded(cfg.rng_seed, _TAG_STATIC)
        pos = []
        for l in range(cfg.n_cells):
            # Uniform over the cell disc, keeping clusters off the mast.
            r = cfg.cell_radius_m * np.sqrt(
                rng.uniform(0.01, 1.0, cfg.static_clusters_per_cell)
            )
            th = rng.uniform(0.0, 2.0 * math.pi, cfg.static_clusters_per_cell)
            pos.append(self.bs_xy[l] + np.stack([r * np.cos(th), r * np.sin(th)], axis=1))
        static_positions = np.concatenate(pos, axis=0)
        n_static = static_positions.shape[0]
        static_gains = (
            rng.standard_normal((n_static, 2)) + 1j * rng.standard_normal((n_static, 2))
        ) / math.sqrt(2.0)
        home = np.repeat(np.arange(cfg.n_cells), cfg.static_clusters_per_cell)
        static_delays = (
            np.hypot(
                static_positions[:, 0] - self.bs_xy[home, 0],
                static_positions[:, 1] - self.bs_xy[home, 1],
            )
            / SPEED_OF_LIGHT
        )

        n_dyn = int(round(cfg.dynamic_grid_fraction * self.n_grids))
        pick = _seeded(cfg.rng_seed, _TAG_DYNAMIC_PICK)
        dyn_ids = np.sort(pick.choice(self.n_grids, size=n_dyn, replace=False))
        d = cfg.dynamic_clusters_per_grid
        dyn_pos = np.zeros((n_dyn, d, 2))
        dyn_gain = np.zeros((n_dyn, d, 2), dtype=np.complex128)
        for a, gid in enumerate(dyn_ids):
            grng = _seeded(cfg.rng_seed, _TAG_DYNAMIC_PLACE, int(gid))
            offs = (grng.random((d, 2)) - 0.5) * cfg.grid_edge_m
            dyn_pos[a] = self.grid_centers[gid] + offs
            dyn_gain[a] = (
                cfg.dynamic_gain
                * (grng.standard_normal((d, 2)) + 1j * grng.standard_normal((d, 2)))
                / math.sqrt(2.0)
            )
        self.scatterers = ScattererField(
            static_positions=static_positions,
            static_gains=static_gains,
            static_delays=static_delays,
            dynamic_grid_ids=dyn_ids,
            dynamic_positions=dyn_pos,
            dynamic_gains=dyn_gain,
            jitter_scale=cfg.dynamic_jitter_scale,
            affected_grids=frozenset(int(g) for g in dyn_ids),
        )
        self._dyn_row = {int(g): a for a, g in enumerate(dyn_ids)}
        # Per-BS mixed steering rows: row c of static_mix[l] is the
        # polarization-weighted array response toward static cluster c.
        L, N = cfg.n_cells, self.n_antennas
        self.static_mix = np.zeros((L, n_static, N), dtype=np.complex128)
        for l in range(L):
            self.static_mix[l] = self._mix_rows(l, static_positions, static_gains)
        self.dyn_mix = np.zeros((L, n_dyn, d, N), dtype=np.complex128)
        for l in range(L):
            for a in range(n_dyn):
                self.dyn_mix[l, a] = self._mix_rows(l, dyn_pos[a], dyn_gain[a])

    def _mix_rows(self, l: int, positions: np.ndarray, gains: np.ndarray) -> np.ndarray:
        cfg = self.config
        rows = np.zeros((positions.shape[0], self.n_antennas), dtype=np.complex128)
        bs = self.bs_xy[l]
        for c, p in enumerate(positions):
            d2 = math.hypot(p[0] - bs[0], p[1] - bs[1])
            az = math.atan2(p[1] - bs[1], p[0] - bs[0])
            el = math.atan2(cfg.user_height_m - cfg.bs_height_m, max(d2, 1e-6))
            a0 = array_response(cfg.n_h, cfg.n_v, az, el, 0, self.wavelength)
            a1 = array_response(cfg.n_h, cfg.n_v, az, el, 1, self.wavelength)
            rows[c] = gains[c, 0] * a0 + gains[c, 1] * a1
        return rows

    def _freeze(self):
        for arr in (
            self.bs_xy,
            self.grid_centers,
            self.grid_serving,
            self.shadow_db,
            self.halton_shift,
            self.static_mix,
            self.dyn_mix,
        ):
            arr.setflags(write=False)

    # -- queries ------------------------------------------------------

    def locate(self, position) -> GridIndex:
        """Map a position to its grid (half-open square convention)."""
        x, y = float(position[0]), float(position[1])
        edge = self.config.grid_edge_m
        ix = math.floor((x - self.origin[0]) / edge)
        iy = math.floor((y - self.origin[1]) / edge)
        g = self._lattice.get((ix, iy))
        if g is None:
            raise OutOfClusterError(f"position ({x:.2f}, {y:.2f}) is outside the cluster")
        return GridIndex(cell=int(self.grid_serving[g]), g=g)

    def grid_sample_positions(self, g: int, count: int) -> np.ndarray:
        """First `count` low-discrepancy positions inside grid g.

        The layout is a fixed Halton sequence with a per-grid seeded
        toroidal shift, so the S-point set is a prefix of the 2S-point
        set and every point stays strictly inside the grid square.
        """
        pts = qmc.Halton(d=2, scramble=False).random(count)
        pts = np.mod(pts + self.halton_shift[g], 1.0)
        return self.grid_centers[g] + (pts - 0.5) * self.config.grid_edge_m

    def export_csv(self, path):
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["grid_id", "center_x", "center_y", "serving_bs", "dynamic"])
            for g in range(self.n_grids):
                w.writerow(
                    [
                        g,
                        f"{self.grid_centers[g, 0]:.6f}",
                        f"{self.grid_centers[g, 1]:.6f}",
                        int(self.grid_serving[g]),
                        int(g in self.scatterers.affected_grids),
                    ]
                )


def _bs_layout(cfg: ScenarioConfig) -> np.ndarray:
    """BS coordinates: origin for L=1, else a ring with adjacent sites
    spaced by the inter-site distance (an equilateral triangle for L=3)."""
    L = cfg.n_cells
    if L == 1:
        return np.zeros((1, 2))
    circum = cfg.isd_m / (2.0 * math.sin(math.pi / L))
    ang = math.pi / 2.0 + 2.0 * math.pi * np.arange(L) / L
    return circum * np.stack([np.cos(ang), np.sin(ang)], axis=1)


def build_scenario(config: ScenarioConfig) -> Scenario:
    """Construct the deterministic scenario for a config (pure in the seed)."""
    return Scenario(config)


def _jitter(scenario: Scenario, gid: int, realization: int) -> np.ndarray:
    """Per-realization complex jitter for the dynamic clusters of a grid.

    Realization 0 is the jitter-free reference state.
    """
    d = scenario.config.dynamic_clusters_per_grid
    if realization == 0:
        return np.zeros(d, dtype=np.complex128)
    rng = _seeded(scenario.config.rng_seed, _TAG_JITTER, int(gid), int(realization))
    z = (rng.standard_normal(d) + 1j * rng.standard_normal(d)) / math.sqrt(2.0)
    return scenario.scatterers.jitter_scale * z


def channel_rows(
    scenario: Scenario,
    observing_bs: int,
    positions: np.ndarray,
    realizations: np.ndarray,
) -> np.ndarray:
    """Channels from a batch of positions to one BS, one row per position.

    The small-scale direction is the attenuation/phase-weighted sum over
    static clusters (plus jittered dynamic clusters when the position's
    grid is dynamic and the realization is nonzero); the row norm equals
    the path-loss plus shadowing amplitude exactly.
    """
    cfg = scenario.config
    if not (0 <= observing_bs < cfg.n_cells):
        raise ValueError(f"observing_bs {observing_bs} out of range")
    pos = np.atleast_2d(np.asarray(positions, dtype=float))
    real = np.broadcast_to(np.asarray(realizations, dtype=np.int64), (pos.shape[0],))
    gids = np.array([scenario.locate(p).g for p in pos], dtype=np.int64)

    bs = scenario.bs_xy[observing_bs]
    d2 = np.hypot(pos[:, 0] - bs[0], pos[:, 1] - bs[1])
    d3 = np.hypot(d2, cfg.bs_height_m - cfg.user_height_m)
    pl = np.array(
        [
            path_loss_db(
                d,
                cfg.fc_hz,
                cfg.bs_height_m,
                cfg.user_height_m,
                exponent=cfg.path_loss_exponent,
                offset_db=cfg.path_loss_offset_db,
            )
            for d in d3
        ]
    )
    amp = 10.0 ** (-(pl + scenario.shadow_db[observing_bs, gids]) / 20.0)

    sp = scenario.scatterers.static_positions
    duc = np.hypot(pos[:, 0, None] - sp[None, :, 0], pos[:, 1, None] - sp[None, :, 1])
    w = np.exp(2j * math.pi * duc / cfg.phase_length_m) / (
        1.0 + duc / cfg.scatter_range_m
    ) ** cfg.scatter_falloff
    v = w @ scenario.static_mix[observing_bs]

    for i, gid in enumerate(gids):
        a = scenario._dyn_row.get(int(gid))
        if a is None or real[i] == 0:
            continue
        zeta = _jitter(scenario, int(gid), int(real[i]))
        dp = scenario.scatterers.dynamic_positions[a]
        dud = np.hypot(pos[i, 0] - dp[:, 0], pos[i, 1] - dp[:, 1])
        dw = (
            np.exp(2j * math.pi * dud / cfg.phase_length_m)
            / (1.0 + dud / cfg.scatter_range_m) ** cfg.scatter_falloff
            * zeta
        )
        v[i] += dw @ scenario.dyn_mix[observing_bs, a]

    norms = np.linalg.norm(v, axis=1)
    if np.any(norms < 1e-250):
        raise ZeroNormError("degenerate small-scale channel (zero cluster sum)")
    return v * (amp / norms)[:, None]


def generate_channel(
    scenario: Scenario, observing_bs: int, position, realization: int
) -> ChannelVector:
    """Channel from one position to one BS at a given realization index."""
    pos = np.asarray(position, dtype=float).reshape(1, 2)
    idx = scenario.locate(pos[0])
    row = channel_rows(scenario, observing_bs, pos, np.array([realization]))[0]
    return ChannelVector(
        entries=row,
        observing_bs=observing_bs,
        source_cell=idx.cell,
        source_position=Position(float(pos[0, 0]), float(pos[0, 1])),
    )


def sample_grid(
    scenario: Scenario, observing_bs: int, grid: int, s: int, realization: int
) -> tuple[list[ChannelVector], ChannelVector]:
    """S sampled channels inside a grid plus the grid-center channel.

    Sample i is generated at realization index realization+1+i so the
    correlation spread across samples reflects temporal jitter in
    dynamic grids; the center uses the stable realization 0.
    """
    if s < 1:
        raise ValueError("s must be >= 1")
    if not (0 <= grid < scenario.n_grids):
        raise ValueError(f"grid {grid} out of range")
    pts = scenario.grid_sample_positions(grid, s)
    center = scenario.grid_centers[grid]
    pos = np.vstack([pts, center[None, :]])
    reals = np.concatenate(
        [np.arange(1, s + 1, dtype=np.int64) + int(realization), [0]]
    )
    rows = channel_rows(scenario, observing_bs, pos, reals)
    cell = int(scenario.grid_serving[grid])
    samples = [
        ChannelVector(rows[i], observing_bs, cell, Position(*pos[i])) for i in range(s)
    ]
    center_cv = ChannelVector(rows[s], observing_bs, cell, Position(*center))
    return samples, center_cv

"""Grid channel knowledge map: statistical gains, cross-grid statistical
correlations, and per-grid reliability classification.

For every observing BS and every coverage grid the map stores the mean
sampled channel, the mean channel gain, the variance of the
sample-to-center correlations, and a reliability flag (variance at or
below a threshold). Cross-grid correlations are the normalized inner
products of the mean channels.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .errors import ZeroNormError
from .geometry import GridIndex, Scenario, sample_grid

_FORMAT_MAGIC = b"CKMAP"
_FORMAT_VERSION = 1


def _entries(v) -> np.ndarray:
    arr = getattr(v, "entries", v)
    return np.asarray(arr, dtype=np.complex128)


def statistical_channel(samples) -> np.ndarray:
    """Mean of the sampled channel vectors."""
    rows = np.stack([_entries(s) for s in samples])
    if rows.shape[0] < 1:
        raise ValueError("need at least one sample")
    return rows.mean(axis=0)


def statistical_gain(samples) -> float:
    """Mean squared norm of the sampled channel vectors.

    By Jensen's inequality this is never below the squared norm of the
    mean channel.
    """
    rows = np.stack([_entries(s) for s in samples])
    if rows.shape[0] < 1:
        raise ValueError("need at least one sample")
    return float(np.mean(np.sum(np.abs(rows) ** 2, axis=1)))


def statistical_correlation(a, b) -> float:
    """Normalized inner-product magnitude of two vectors, in [0, 1]."""
    va, vb = _entries(a), _entries(b)
    na, nb = np.linalg.norm(va), np.linalg.norm(vb)
    if na == 0.0 or nb == 0.0:
        raise ZeroNormError("correlation undefined for a zero-norm vector")
    return float(min(abs(np.vdot(va, vb)) / (na * nb), 1.0))


def sample_center_correlation(sample, center) -> float:
    """Correlation of one sampled channel against the grid-center channel."""
    return statistical_correlation(sample, center)


def grid_variance(correlations) -> float:
    """Population variance of the sample-to-center correlations."""
    vals = np.asarray(list(correlations), dtype=float)
    if vals.size < 1:
        raise ValueError("need at least one correlation value")
    return float(np.var(vals))


def reliability_indicator(sigma: float, delta: float) -> int:
    """1 when the correlation variance stays within the threshold."""
    if sigma < 0.0:
        raise ValueError("sigma must be >= 0")
    return 1 if sigma <= delta else 0


@dataclass
class GridStats:
    """Per (observing BS, grid) entry of the map."""

    h_bar: np.ndarray
    epsilon: float
    sigma: float
    reliable: int


def _corr_matrix(rows: np.ndarray) -> np.ndarray:
    """|normalized Gram matrix| with unit diagonal, clipped to [0, 1]."""
    norms = np.linalg.norm(rows, axis=1)
    if np.any(norms == 0.0):
        raise ZeroNormError("zero-norm mean channel in correlation table")
    unit = rows / norms[:, None]
    corr = np.abs(unit @ unit.conj().T)
    np.clip(corr, 0.0, 1.0, out=corr)
    np.fill_diagonal(corr, 1.0)
    return corr


class UsCkm:
    """Channel knowledge map over a scenario's grid partition."""

    def __init__(self, scenario, s, delta, h_bar, epsilon, sigma, reliable, corr):
        self.scenario = scenario
        self.samples_per_grid = int(s)
        self.delta = float(delta)
        self.h_bar = h_bar        # (L, G, N) complex
        self.epsilon = epsilon    # (L, G)
        self.sigma = sigma        # (L, G)
        self.reliable = reliable  # (L, G) uint8
        self.corr = corr          # (L, G, G)
        for arr in (h_bar, epsilon, sigma, reliable, corr):
            arr.setflags(write=False)

    @property
    def n_grids(self) -> int:
        return self.h_bar.shape[1]

    @property
    def n_cells(self) -> int:
        return self.h_bar.shape[0]

    def stats(self, observing_bs: int, grid: int) -> GridStats:
        return GridStats(
            h_bar=self.h_bar[observing_bs, grid],
            epsilon=float(self.epsilon[observing_bs, grid]),
            sigma=float(self.sigma[observing_bs, grid]),
            reliable=int(self.reliable[observing_bs, grid]),
        )

    def corr_value(self, observing_bs: int, grid_a: int, grid_b: int) -> float:
        return float(self.corr[observing_bs, grid_a, grid_b])

    def realized_eta(self) -> float:
        """Fraction of (BS, grid) entries classified reliable."""
        return float(np.mean(self.reliable))

    # -- serialization ------------------------------------------------

    def save(self, path):
        header = {
            "version": _FORMAT_VERSION,
            "scenario_hash": scenario_hash(self.scenario),
            "samples_per_grid": self.samples_per_grid,
            "delta": self.delta,
            "arrays": [],
        }
        payload = []
        for name in ("h_bar", "epsilon", "sigma", "reliable", "corr"):
            arr = np.ascontiguousarray(getattr(self, name))
            header["arrays"].append(
                {"name": name, "dtype": str(arr.dtype), "shape": list(arr.shape)}
            )
            payload.append(arr.tobytes())
        blob = json.dumps(header, sort_keys=True).encode()
        with open(path, "wb") as fh:
            fh.write(_FORMAT_MAGIC)
            fh.write(_FORMAT_VERSION.to_bytes(2, "little"))
            fh.write(len(blob).to_bytes(8, "little"))
            fh.write(blob)
            for chunk in payload:
                fh.write(chunk)

    @classmethod
    def load(cls, path, scenario=None) -> "UsCkm":
        with open(path, "rb") as fh:
            magic = fh.read(len(_FORMAT_MAGIC))
            if magic != _FORMAT_MAGIC:
                raise ValueError(f"{path}: not a channel map file")
            version = int.from_bytes(fh.read(2), "little")
            if version != _FORMAT_VERSION:
                raise ValueError(f"{path}: unsupported format version {version}")
            hlen = int.from_bytes(fh.read(8), "little")
            header = json.loads(fh.read(hlen).decode())
            if scenario is not None and header["scenario_hash"] != scenario_hash(scenario):
                raise ValueError(f"{path}: map was built for a different scenario")
            arrays = {}
            for desc in header["arrays"]:
                dtype = np.dtype(desc["dtype"])
                count = int(np.prod(desc["shape"])) if desc["shape"] else 1
                buf = fh.read(count * dtype.itemsize)
                arrays[desc["name"]] = np.frombuffer(buf, dtype=dtype).reshape(
                    desc["shape"]
                ).copy()
        return cls(
            scenario,
            header["samples_per_grid"],
            header["delta"],
            arrays["h_bar"],
            arrays["epsilon"],
            arrays["sigma"],
            arrays["reliable"],
            arrays["corr"],
        )

    def export_csv(self, directory):
        """Per-BS gains.csv plus the upper triangle of each corr table."""
        import csv
        import os

        centers = self.scenario.grid_centers
        for l in range(self.n_cells):
            with open(os.path.join(directory, f"gains_bs{l}.csv"), "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(
                    ["grid_id", "center_x", "center_y", "epsilon", "sigma", "reliable"]
                )
                for g in range(self.n_grids):
                    w.writerow(
                        [
                            g,
                            f"{centers[g, 0]:.6f}",
                            f"{centers[g, 1]:.6f}",
                            f"{self.epsilon[l, g]:.12e}",
                            f"{self.sigma[l, g]:.12e}",
                            int(self.reliable[l, g]),
                        ]
                    )
            with open(os.path.join(directory, f"corr_bs{l}.csv"), "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["grid_a", "grid_b", "rho"])
                for a in range(self.n_grids):
                    for b in range(a + 1, self.n_grids):
                        w.writerow([a, b, f"{self.corr[l, a, b]:.12e}"])


def scenario_hash(scenario: Scenario) -> str:
    """Stable digest of the scenario configuration."""
    return hashlib.sha256(repr(scenario.config).encode()).hexdigest()


def lookup_grid(ckm: UsCkm, position) -> GridIndex:
    """Map a position to its grid index through the map's scenario."""
    return ckm.scenario.locate(position)


def build_ckm(
    scenario: Scenario,
    s: int | None = None,
    delta: float | None = None,
    eta: float | None = None,
) -> UsCkm:
    """Survey every (observing BS, grid) pair and assemble the map.

    s defaults to the scenario's samples_per_grid. The reliability
    threshold is either the absolute delta or, when eta is given, the
    eta-quantile of all correlation variances (eta=0 and eta=1 force
    all-unreliable / all-reliable classifications). With neither set the
    scenario config's delta/eta apply (eta=0.7 as a last resort).
    """
    cfg = scenario.config
    if s is None:
        s = cfg.samples_per_grid
    if delta is None and eta is None:
        delta, eta = cfg.delta, cfg.eta
        if delta is None and eta is None:
            eta = 0.7
    if delta is not None and eta is not None:
        raise ValueError("set at most one of delta / eta")

    L, G, N = cfg.n_cells, scenario.n_grids, scenario.n_antennas
    h_bar = np.zeros((L, G, N), dtype=np.complex128)
    epsilon = np.zeros((L, G))
    sigma = np.zeros((L, G))
    corr = np.zeros((L, G, G))
    for l in range(L):
        for g in range(G):
            samples, center = sample_grid(scenario, l, g, s, realization=0)
            h_bar[l, g] = statistical_channel(samples)
            epsilon[l, g] = statistical_gain(samples)
            corrs = [sample_center_correlation(sv, center) for sv in samples]
            sigma[l, g] = grid_variance(corrs)
        corr[l] = _corr_matrix(h_bar[l])

    if eta is not None:
        if eta <= 0.0:
            reliable = np.zeros((L, G), dtype=np.uint8)
            delta = -np.inf
        elif eta >= 1.0:
            reliable = np.ones((L, G), dtype=np.uint8)
            delta = float(sigma.max())
        else:
            delta = float(np.quantile(sigma.ravel(), eta, method="lower"))
            reliable = (sigma <= delta).astype(np.uint8)
    else:
        reliable = (sigma <= delta).astype(np.uint8)
    return UsCkm(scenario, s, delta, h_bar, epsilon, sigma, reliable, corr)

"""Uplink MMSE evaluation, exhaustive oracle, and overhead accounting.

All rate evaluation is genie-aided: whatever information a scheduler
consumed, the resulting group is scored with the true channels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations, product

import numpy as np

from .errors import EnumerationGuardError
from .geometry import Scenario, channel_rows
from .groups import SelectionRecord, UserGroup

_RESIDUAL_TOL = 1e-10


@dataclass
class ChannelSet:
    """True channels of a trial: one row per (observing BS, user).

    h has shape (n_cells, n_users, n_antennas); row order follows ids.
    """

    ids: np.ndarray       # (n,) global user ids
    cell_of: np.ndarray   # (n,)
    h: np.ndarray         # (L, n, N) complex

    def __post_init__(self):
        self.index = {int(u): i for i, u in enumerate(self.ids)}

    @property
    def n_cells(self) -> int:
        return self.h.shape[0]

    def ids_by_cell(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {l: [] for l in range(self.n_cells)}
        for u, c in zip(self.ids, self.cell_of):
            out[int(c)].append(int(u))
        return {l: sorted(v) for l, v in out.items()}

    def vector(self, observing_bs: int, user: int) -> np.ndarray:
        return self.h[observing_bs, self.index[int(user)]]


@dataclass
class ReceiveBeamformer:
    weights: np.ndarray
    target: tuple[int, int] | None = None


def _require_finite(name, arr):
    if not np.all(np.isfinite(np.asarray(arr).view(float))):
        raise ValueError(f"{name} contains non-finite entries")


def mmse_receiver(desired, interferers, noise_power: float) -> ReceiveBeamformer:
    """MMSE receive filter: solves (sum_i h_i h_i^H + d d^H + s2 I) w = d.

    The defining linear system is verified to a 1e-10 relative residual,
    with one step of iterative refinement before giving up.
    """
    d = np.asarray(desired, dtype=np.complex128)
    _require_finite("desired", d.view(np.float64))
    if noise_power <= 0 or not math.isfinite(noise_power):
        raise ValueError("noise_power must be positive and finite")
    n = d.shape[0]
    cov = noise_power * np.eye(n, dtype=np.complex128)
    cov += np.outer(d, d.conj())
    for h in interferers:
        hv = np.asarray(h, dtype=np.complex128)
        _require_finite("interferer", hv.view(np.float64))
        cov += np.outer(hv, hv.conj())
    w = np.linalg.solve(cov, d)
    dn = np.linalg.norm(d)
    if dn == 0.0:
        raise ValueError("desired channel must be nonzero")
    if np.linalg.norm(cov @ w - d) > _RESIDUAL_TOL * dn:
        w = w + np.linalg.solve(cov, d - cov @ w)
        if np.linalg.norm(cov @ w - d) > _RESIDUAL_TOL * dn:
            raise ArithmeticError("MMSE system residual exceeds tolerance")
    return ReceiveBeamformer(weights=w)


def sinr(w, desired, intra_interferers, inter_interferers, noise_power: float) -> float:
    """Post-combining SINR of one user."""
    wv = np.asarray(w, dtype=np.complex128)
    wn = np.linalg.norm(wv)
    if wn == 0.0:
        raise ValueError("combiner must be nonzero")
    if noise_power <= 0:
        raise ValueError("noise_power must be positive")
    num = abs(np.vdot(wv, np.asarray(desired, dtype=np.complex128))) ** 2
    den = noise_power * wn**2
    for h in list(intra_interferers) + list(inter_interferers):
        den += abs(np.vdot(wv, np.asarray(h, dtype=np.complex128))) ** 2
    return float(num / den)


def evaluate_group(
    group: UserGroup, chans: ChannelSet, noise_power: float
) -> tuple[float, dict[int, float]]:
    """Sum rate and per-user SINR of a group under per-cell MMSE combining.

    Every scheduled user (own cell and other cells) contributes
    interference at every BS; each BS solves one MMSE system per served
    user against the full scheduled set.
    """
    # Canonical (cell, id) order so the rate is bit-identical for any
    # member ordering of the same group.
    sched: list[tuple[int, int]] = []
    for cell in sorted(group.members):
        for uid in sorted(group.members[cell]):
            sched.append((cell, uid))
    if not sched:
        return 0.0, {}
    rows = np.array([chans.index[uid] for _, uid in sched])
    gammas: dict[int, float] = {}
    total = 0.0
    for cell in sorted(group.members):
        served = sorted(group.members[cell])
        if not served:
            continue
        s = chans.h[cell][rows]  # (m, N), all scheduled users seen at this BS
        n = s.shape[1]
        cov = s.T @ s.conj() + noise_power * np.eye(n, dtype=np.complex128)
        local = [sched.index((cell, uid)) for uid in served]
        d = s[local].T  # (N, served)
        w = np.linalg.solve(cov, d)
        cross = w.conj().T @ s.T  # (served, m): cross[j, i] = w_j^H h_i
        p = np.abs(cross) ** 2
        wn2 = np.sum(np.abs(w) ** 2, axis=0)
        for j, uid in enumerate(served):
            num = p[j, local[j]]
            den = p[j].sum() - num + noise_power * wn2[j]
            g = float(num / den)
            gammas[uid] = g
            total += math.log2(1.0 + g)
    return total, gammas


def sum_rate(group: UserGroup, chans: ChannelSet, noise_power: float) -> float:
    """Sum of log2(1+SINR) over all scheduled users; empty group gives 0."""
    return evaluate_group(group, chans, noise_power)[0]


def brute_force_optimum(
    chans: ChannelSet,
    kbar: int,
    noise_power: float,
    max_combinations: int = 1_000_000,
) -> tuple[UserGroup, float]:
    """Exhaustive search over all per-cell kbar-subsets.

    Guarded by max_combinations on the product of per-cell subset
    counts. Ties keep the lexicographically lowest selection.
    """
    bycell = chans.ids_by_cell()
    cells = sorted(bycell)
    n_combos = 1
    for l in cells:
        if len(bycell[l]) < kbar:
            raise ValueError(f"cell {l} has fewer than kbar={kbar} users")
        n_combos *= math.comb(len(bycell[l]), kbar)
    if n_combos > max_combinations:
        raise EnumerationGuardError(
            f"{n_combos} combinations exceed the budget of {max_combinations}"
        )
    best_rate = -1.0
    best = None
    for pick in product(*(combinations(bycell[l], kbar) for l in cells)):
        group = UserGroup(members={l: list(p) for l, p in zip(cells, pick)})
        rate = sum_rate(group, chans, noise_power)
        if rate > best_rate:
            best_rate, best = rate, group
    rate, gammas = evaluate_group(best, chans, noise_power)
    best.meta = [
        SelectionRecord(uid, cell, slot, gammas[uid], "icsi")
        for cell in cells
        for slot, uid in enumerate(best.members[cell])
    ]
    return best, float(rate)


@dataclass
class OverheadModel:
    """Inputs of the closed-form complexity/overhead accounting."""

    algorithm: str
    n_cells: int
    users_per_cell: int
    kbar: int
    kprime: int
    n_antennas: int
    eta: float | None = None


_OVERHEAD_ALGOS = (
    "greedy",
    "sus",
    "random",
    "two_stage_aes",
    "two_stage_gis",
    "robust_aes",
    "robust_gis",
)


def overhead_counts(model: OverheadModel) -> dict[str, int]:
    """Exact multiplication / CSI-acquisition / information-exchange counts.

    Evaluates the closed forms for the seven table algorithms; robust
    variants require eta.
    """
    algo = model.algorithm
    if algo not in _OVERHEAD_ALGOS:
        raise ValueError(f"no closed-form overhead model for {algo!r}")
    L = model.n_cells
    k = model.users_per_cell
    kb = model.kbar
    kp = model.kprime
    n = model.n_antennas
    if algo == "greedy":
        return {
            "mults": L * k * kb**2 * (n**3 + k * n**2 + kb * n**2),
            "csi_acquisitions": L**2 * k,
            "info_exchange": L**2 * k * n,
        }
    if algo == "sus":
        return {"mults": L * k * kb * n, "csi_acquisitions": L * k, "info_exchange": 0}
    if algo == "random":
        return {"mults": 1, "csi_acquisitions": 0, "info_exchange": 0}
    stage2 = L**2 * kb**2 * kp + L**2 * kb**3
    aes = L * k * kp**2 + stage2
    gis = L * k**3 + stage2
    if algo == "two_stage_aes":
        return {"mults": aes, "csi_acquisitions": 0, "info_exchange": L * kp}
    if algo == "two_stage_gis":
        return {"mults": gis, "csi_acquisitions": 0, "info_exchange": L * kp}
    if model.eta is None:
        raise ValueError("robust overhead models require eta")
    miss = 1.0 - model.eta
    extra = L**2 * miss * k + L**3 * miss**2 * k**2
    base = aes if algo == "robust_aes" else gis
    return {
        "mults": int(round(base + extra)),
        "csi_acquisitions": int(round(L**2 * miss * k)),
        "info_exchange": int(round((2.0 - model.eta) * L * kp + L**3 * miss * kp)),
    }


def calibrate_noise(scenario: Scenario, target_snr_db: float) -> float:
    """Noise power making the median grid-center matched-filter SNR hit
    the target.

    The reference population is one interference-free user at every grid
    center toward its serving BS (realization 0), so the calibration is
    a deterministic function of the scenario.
    """
    gains = []
    for l in range(scenario.config.n_cells):
        grids = scenario.grids_of_cell[l]
        if len(grids) == 0:
            continue
        rows = channel_rows(
            scenario, l, scenario.grid_centers[grids], np.zeros(len(grids), dtype=int)
        )
        gains.append(np.sum(np.abs(rows) ** 2, axis=1))
    med = float(np.median(np.concatenate(gains)))
    return med / 10.0 ** (target_snr_db / 10.0)


@dataclass
class ScheduleResult:
    """Outcome of one scheduling trial. Wall time is diagnostic only and
    excluded from equality."""

    algorithm: str
    sum_rate: float
    per_user_sinr: dict[int, float]
    csi_acquisitions: int
    info_exchange: int
    multiplication_estimate: int
    group: UserGroup
    wall_ms: float = field(default=0.0, compare=False)

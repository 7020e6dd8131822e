"""Two-regime hybrid processes and excursion decomposition.

A hybrid process follows a homogeneous kernel Y while inside a region K and
a (possibly time-indexed) kernel Z outside it; Z's local clock resets to 0
on every exit from K, with the step taken *from* the exit state drawn at
clock 0.  Excursion bookkeeping decomposes any trajectory into the entry
times tau_i into K, exit times sigma_i, and the per-time backward/forward
hitting indices g_t and h_t, with the usual empty-set sentinels
(-inf for suprema, +inf for infima).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import _accel, _rng
from .chains import FiniteKernel, FiniteKernelFamily, KernelSpec, Trajectory, TrajectoryBatch
from .errors import KernelError, SimulationError

NEG_INF = float("-inf")
POS_INF = float("inf")


def format_sentinel(v: float) -> str:
    """Render a time value for CSV export; infinities become '+inf'/'-inf'."""
    if v == POS_INF:
        return "+inf"
    if v == NEG_INF:
        return "-inf"
    return repr(int(v)) if float(v).is_integer() else repr(float(v))


# ---------------------------------------------------------------------------
# regions


class RegionSpec:
    """Membership test over a state space; total and deterministic."""

    kind = "abstract"

    def contains(self, x) -> bool:
        raise NotImplementedError

    def member_mask(self, labels) -> np.ndarray:
        return np.array([self.contains(s) for s in labels], dtype=bool)


class FiniteSetRegion(RegionSpec):
    """Region given by an explicit set of states."""

    kind = "finite_set"

    def __init__(self, members):
        self.members = set(members)
        if not self.members:
            # empty regions are legal (degenerate hybrid = pure Z)
            pass

    def contains(self, x) -> bool:
        if isinstance(x, np.integer):
            x = int(x)
        elif isinstance(x, np.floating):
            x = float(x)
        return x in self.members


class BallRegion(RegionSpec):
    """Closed Euclidean ball; works for scalar and vector states."""

    kind = "ball"

    def __init__(self, radius: float, center=0.0):
        if radius < 0:
            raise ValueError(f"radius must be >= 0, got {radius}")
        self.radius = float(radius)
        self.center = np.atleast_1d(np.asarray(center, dtype=np.float64))

    def contains(self, x) -> bool:
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        return bool(np.linalg.norm(x - self.center) <= self.radius)

    def contains_many(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.float64)
        if xs.ndim == 1:
            xs = xs[:, None]
        return np.linalg.norm(xs - self.center[None, :], axis=-1) <= self.radius


class PredicateTableRegion(RegionSpec):
    """Explicit membership table over a finite state space."""

    kind = "predicate_table"

    def __init__(self, table: dict):
        self.table = dict(table)

    def contains(self, x) -> bool:
        if isinstance(x, np.integer):
            x = int(x)
        try:
            return bool(self.table[x])
        except KeyError:
            raise KernelError(f"state {x!r} missing from the membership table")


# ---------------------------------------------------------------------------
# excursion decomposition


@dataclass
class ExcursionRecord:
    """Entry/exit times and per-time hitting indices for one trajectory.

    ``tau`` and ``sigma`` alternate as tau_1 <= sigma_1 <= tau_2 <= ...;
    if the path ends inside K the final sigma is +inf.  ``g[t]`` is the last
    time <= t spent in K (-inf if none) and ``h[t]`` the first time >= t in
    K (+inf if none).
    """

    tau: np.ndarray
    sigma: np.ndarray
    g: np.ndarray
    h: np.ndarray
    membership: np.ndarray

    @property
    def n_excursions_into_region(self) -> int:
        return len(self.tau)


def membership_sequence(states, region: RegionSpec) -> np.ndarray:
    """Boolean membership per time for a single path's state sequence."""
    if isinstance(region, BallRegion) and np.asarray(states).dtype != object:
        return region.contains_many(np.asarray(states, dtype=np.float64))
    return np.array([region.contains(s) for s in states], dtype=bool)


def excursion_decompose(traj: Trajectory | np.ndarray, region: RegionSpec,
                        labels=None) -> ExcursionRecord:
    """Decompose a trajectory relative to K.

    Accepts a :class:`Trajectory` (states are label values or lattice/vector
    states) or a raw state sequence.  ``labels`` decodes index-coded states.
    """
    states = traj.states if isinstance(traj, Trajectory) else np.asarray(traj)
    if labels is not None:
        states = np.asarray(labels, dtype=object)[np.asarray(states, dtype=np.int64)]
    member = membership_sequence(states, region)
    n = len(member)
    times = np.arange(n, dtype=np.float64)

    g = np.where(member, times, NEG_INF)
    g = np.maximum.accumulate(g)
    h = np.where(member, times, POS_INF)
    h = np.minimum.accumulate(h[::-1])[::-1]

    prev = np.concatenate(([False], member[:-1]))
    tau = times[member & ~prev]
    sigma_times = times[~member & prev]
    if len(tau) and (not len(sigma_times) or sigma_times[-1] < tau[-1]):
        sigma_times = np.concatenate([sigma_times, [POS_INF]])
    return ExcursionRecord(tau=tau, sigma=sigma_times, g=g, h=h, membership=member)


def first_hit_time(traj: Trajectory | np.ndarray, region: RegionSpec,
                   labels=None) -> float:
    """Smallest t >= 1 with X_t in K, else +inf (time 0 never counts)."""
    states = traj.states if isinstance(traj, Trajectory) else np.asarray(traj)
    if labels is not None:
        states = np.asarray(labels, dtype=object)[np.asarray(states, dtype=np.int64)]
    member = membership_sequence(states, region)
    hits = np.nonzero(member[1:])[0]
    return float(hits[0] + 1) if len(hits) else POS_INF


def first_hit_times(batch: TrajectoryBatch, region: RegionSpec) -> np.ndarray:
    """Vectorized :func:`first_hit_time` over a batch (float array, +inf capable)."""
    member = batch_membership(batch, region)
    any_hit = member[:, 1:].any(axis=1)
    idx = member[:, 1:].argmax(axis=1) + 1
    return np.where(any_hit, idx.astype(np.float64), POS_INF)


def batch_membership(batch: TrajectoryBatch, region: RegionSpec) -> np.ndarray:
    """Boolean (n, T+1) membership matrix for a batch."""
    if batch.state_kind == "finite" and batch.labels is not None:
        mask = region.member_mask(batch.labels)
        return mask[batch.states]
    if batch.state_kind == "vector" and isinstance(region, BallRegion):
        n, tp1, d = batch.states.shape
        return region.contains_many(batch.states.reshape(-1, d)).reshape(n, tp1)
    out = np.empty(batch.states.shape[:2], dtype=bool)
    for j in range(batch.states.shape[0]):
        out[j] = membership_sequence(batch.states[j], region)
    return out


# ---------------------------------------------------------------------------
# hybrid simulation


@dataclass
class HybridSpec:
    """Kernels for the two regimes plus the region K.

    ``Y_kernel`` must be time-homogeneous; ``Z_kernel`` may be a
    time-indexed family (indexed by the local clock).  Both kernels must be
    finite-state over the same label set.
    """

    Y_kernel: KernelSpec
    Z_kernel: KernelSpec
    K: RegionSpec

    def __post_init__(self):
        if not isinstance(self.Y_kernel, FiniteKernel):
            raise KernelError("Y kernel must be a homogeneous finite-state kernel")
        if not isinstance(self.Z_kernel, (FiniteKernel, FiniteKernelFamily)):
            raise KernelError("Z kernel must be finite-state (matrix or family)")
        if list(self.Y_kernel.states) != list(self.Z_kernel.states):
            raise KernelError("Y and Z kernels must share one state space")

    @property
    def states(self):
        return self.Y_kernel.states


def _z_cums(spec: HybridSpec, T: int) -> np.ndarray:
    z = spec.Z_kernel
    if isinstance(z, FiniteKernel):
        return np.repeat(z.cum[None, :, :], max(T, 1), axis=0)
    horizon = T if z.horizon is None else min(z.horizon, T)
    return z.cums_up_to(max(horizon, 1))


def simulate_hybrid(
    spec: HybridSpec, x0, T: int, n: int, seed: int
) -> TrajectoryBatch:
    """Simulate the two-regime process; the mode column records the regime
    active at each time (0 = inside K following Y, 1 = outside following Z).

    Raises :class:`SimulationError` if an excursion outlives the declared
    horizon of the Z family (no extrapolation).
    """
    if T < 0:
        raise KernelError(f"horizon must be >= 0, got {T}")
    if n < 1:
        raise KernelError(f"path count must be >= 1, got {n}")
    seed = _rng.check_seed(seed)
    i0 = spec.Y_kernel.state_index(x0)
    member = spec.K.member_mask(spec.states)
    U = _rng.uniform_block(seed, _rng.DOMAIN_CHAIN, n, T)
    states, err = _accel.hybrid_sim(spec.Y_kernel.cum, _z_cums(spec, T), member, i0, U)
    if (err >= 0).any():
        j = int(np.argmax(err >= 0))
        raise SimulationError(
            f"excursion on path {j} exceeded the Z kernel horizon at time "
            f"{int(err[j])}; extend the Z family instead of extrapolating"
        )
    mode = np.where(member[states], 0, 1).astype(np.int64)
    return TrajectoryBatch(seed, states, "finite", labels=list(spec.states), mode=mode)


def local_clocks(member: np.ndarray) -> np.ndarray:
    """Per-time local clock implied by a membership matrix (n, T+1).

    clock[t] = t - sigma_i for times outside K (0 on the exit state itself,
    counting the whole pre-first-entry stretch from 0) and 0 inside K.
    """
    member = np.atleast_2d(member)
    n, tp1 = member.shape
    times = np.arange(tp1, dtype=np.float64)
    g = np.where(member, times[None, :], NEG_INF)
    g = np.maximum.accumulate(g, axis=1)
    sigma = np.where(g == NEG_INF, 0.0, g + 1.0)
    clock = np.where(member, 0.0, times[None, :] - sigma)
    return np.maximum(clock, 0.0).astype(np.int64)


@dataclass
class MarkovScanReport:
    """Outcome of the history-dependence test at one probe state."""

    probe_state: object
    counts: np.ndarray  # (2, successors): clock-0 row, clock>=1 row
    successor_labels: list
    chi2: float
    p_value: float
    non_markov_at: float
    verdict: bool  # True = history dependence demonstrated


def markov_inhomogeneity_test(
    spec: HybridSpec,
    x0,
    probe_state,
    T: int,
    n: int,
    seed: int,
    alpha: float = 0.01,
) -> MarkovScanReport:
    """Test whether the one-step law out of ``probe_state`` depends on the
    excursion's local clock (class 0 vs class >= 1).

    A small p-value demonstrates that the composite process is not Markov in
    the state alone; with a homogeneous Z the test must not reject.
    """
    from scipy.stats import chi2_contingency

    batch = simulate_hybrid(spec, x0, T, n, seed)
    member = batch_membership(batch, spec.K)
    clocks = local_clocks(member)
    probe_idx = spec.Y_kernel.state_index(probe_state)

    at_probe = batch.states[:, :-1] == probe_idx
    outside = ~member[:, :-1]
    sel = at_probe & outside
    succ = batch.states[:, 1:]
    clock0 = sel & (clocks[:, :-1] == 0)
    clock1 = sel & (clocks[:, :-1] >= 1)

    n_states = len(spec.states)
    row0 = np.bincount(succ[clock0], minlength=n_states)
    row1 = np.bincount(succ[clock1], minlength=n_states)
    seen = (row0 + row1) > 0
    table = np.stack([row0[seen], row1[seen]])
    labels = [spec.states[i] for i in np.nonzero(seen)[0]]
    if table.shape[1] < 2 or table.sum(axis=1).min() == 0:
        return MarkovScanReport(probe_state, table, labels, 0.0, 1.0, alpha, False)
    chi2, p, _, _ = chi2_contingency(table)
    return MarkovScanReport(
        probe_state=probe_state,
        counts=table,
        successor_labels=labels,
        chi2=float(chi2),
        p_value=float(p),
        non_markov_at=alpha,
        verdict=bool(p < alpha),
    )


# ---------------------------------------------------------------------------
# CSV export


def export_excursions(batch: TrajectoryBatch, region: RegionSpec, prefix) -> None:
    """Write excursion records: ``<prefix>_excursions.csv`` with one row per
    (path, interval) and ``<prefix>_hitting.csv`` with per-time g_t/h_t."""
    with open(f"{prefix}_excursions.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path_id", "i", "tau_i", "sigma_i"])
        for j in range(batch.n_paths):
            rec = excursion_decompose(batch.states[j], region, labels=batch.labels)
            for i in range(len(rec.tau)):
                writer.writerow(
                    [j, i + 1, format_sentinel(rec.tau[i]), format_sentinel(rec.sigma[i])]
                )
    with open(f"{prefix}_hitting.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path_id", "t", "g_t", "h_t"])
        for j in range(batch.n_paths):
            rec = excursion_decompose(batch.states[j], region, labels=batch.labels)
            for t in range(len(rec.g)):
                writer.writerow([j, t, format_sentinel(rec.g[t]), format_sentinel(rec.h[t])])

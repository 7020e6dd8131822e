"""Markov transition kernels and seeded trajectory batches.

A kernel is either a finite-state row-stochastic matrix (possibly a
time-indexed family) or a named generative sampler on an integer lattice or
on R^d.  Row stochasticity is checked when a kernel is built, so a bad
matrix is a construction error rather than a runtime surprise.

All simulation is reproducible: a batch is fully determined by the kernel,
the start point, the horizon, and one 64-bit master seed.  Per-path streams
are derived from the master seed through counter-based Philox keys (see
``_rng``), so paths are mutually independent and parallel-safe.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _accel, _rng
from .errors import KernelError

ROW_SUM_TOL = 1e-12


def _validate_matrix(P: np.ndarray, what: str) -> np.ndarray:
    P = np.asarray(P, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise KernelError(f"{what} must be square, got shape {P.shape}")
    if (P < 0).any():
        i, j = np.argwhere(P < 0)[0]
        raise KernelError(f"{what} has negative entry at row {i}, column {j}")
    sums = P.sum(axis=1)
    bad = np.abs(sums - 1.0) > ROW_SUM_TOL
    if bad.any():
        i = int(np.argmax(bad))
        raise KernelError(
            f"{what} row {i} sums to {sums[i]!r}, expected 1 within {ROW_SUM_TOL}"
        )
    return P


def _cumulative(P: np.ndarray) -> np.ndarray:
    cum = np.cumsum(P, axis=1)
    cum[:, -1] = 1.0  # pin so inverse-CDF draws can never overflow the row
    return cum


class KernelSpec:
    """Base interface for transition kernels.

    Concrete kinds: :class:`FiniteKernel`, :class:`FiniteKernelFamily`,
    :class:`BiasedWalkKernel`, :class:`LinearGaussianKernel`, plus the
    switched-system joint kernel provided by :mod:`driftbound.switched`.
    """

    kind: str = "abstract"
    #: "finite" (label indices), "int" (integer lattice), "vector" (R^d)
    state_kind: str = "abstract"
    time_homogeneous: bool = True

    def sample_step(self, t: int, x, rng: np.random.Generator):
        raise NotImplementedError

    def contains_state(self, x) -> bool:
        raise NotImplementedError


class FiniteKernel(KernelSpec):
    """Homogeneous finite-state kernel given by one row-stochastic matrix."""

    kind = "finite_matrix"
    state_kind = "finite"
    time_homogeneous = True

    def __init__(self, matrix, states: Sequence | None = None):
        self.matrix = _validate_matrix(matrix, "transition matrix")
        n = self.matrix.shape[0]
        self.states = list(states) if states is not None else list(range(n))
        if len(self.states) != n:
            raise KernelError(
                f"{len(self.states)} state labels for a {n}-state matrix"
            )
        self.index = {s: i for i, s in enumerate(self.states)}
        self.cum = _cumulative(self.matrix)

    def matrix_at(self, t: int) -> np.ndarray:
        return self.matrix

    def state_index(self, x) -> int:
        try:
            return self.index[x]
        except KeyError:
            raise KernelError(f"state {x!r} not in the kernel state space")

    def contains_state(self, x) -> bool:
        return x in self.index

    def sample_step(self, t, x, rng):
        i = self.state_index(x)
        u = rng.random()
        j = int((self.cum[i] <= u).sum())
        return self.states[j]


class FiniteKernelFamily(KernelSpec):
    """Time-inhomogeneous finite-state kernel.

    Built either from an explicit list of matrices (defined for
    ``t < horizon``; queries past the horizon are errors, never silent
    extrapolation) or from a closed-form rule ``t -> matrix`` declared
    total on all of t >= 0.
    """

    kind = "finite_matrix_family"
    state_kind = "finite"
    time_homogeneous = False

    def __init__(
        self,
        matrices: Sequence[np.ndarray] | None = None,
        rule: Callable[[int], np.ndarray] | None = None,
        horizon: int | None = None,
        states: Sequence | None = None,
        cache_horizon: int = 512,
    ):
        if (matrices is None) == (rule is None):
            raise KernelError("provide exactly one of matrices= or rule=")
        if matrices is not None:
            mats = [
                _validate_matrix(m, f"transition matrix at t={t}")
                for t, m in enumerate(matrices)
            ]
            if not mats:
                raise KernelError("matrix family must not be empty")
            self.horizon = len(mats) if horizon is None else int(horizon)
            if self.horizon > len(mats):
                raise KernelError(
                    f"declared horizon {self.horizon} exceeds the "
                    f"{len(mats)} supplied matrices"
                )
            self._mats = mats[: self.horizon]
            self._rule = None
            n = mats[0].shape[0]
        else:
            self._rule = rule
            self.horizon = horizon  # None = defined for all t
            self._mats = []
            n = _validate_matrix(rule(0), "transition matrix at t=0").shape[0]
            self._cache: dict[int, np.ndarray] = {}
            self._cache_horizon = cache_horizon
        self.states = list(states) if states is not None else list(range(n))
        if len(self.states) != n:
            raise KernelError(
                f"{len(self.states)} state labels for a {n}-state matrix"
            )
        self.index = {s: i for i, s in enumerate(self.states)}

    def matrix_at(self, t: int) -> np.ndarray:
        if t < 0:
            raise KernelError(f"negative time index {t}")
        if self._rule is None:
            if t >= self.horizon:
                raise KernelError(
                    f"time index {t} beyond the declared horizon "
                    f"{self.horizon} of the kernel family"
                )
            return self._mats[t]
        if self.horizon is not None and t >= self.horizon:
            raise KernelError(
                f"time index {t} beyond the declared horizon {self.horizon}"
            )
        if t not in self._cache:
            m = _validate_matrix(self._rule(t), f"transition matrix at t={t}")
            if len(self._cache) < self._cache_horizon:
                self._cache[t] = m
            return m
        return self._cache[t]

    def cums_up_to(self, T: int) -> np.ndarray:
        """Stacked cumulative matrices for t = 0..T-1 (shape (T, S, S))."""
        return np.stack([_cumulative(self.matrix_at(t)) for t in range(T)])

    def state_index(self, x) -> int:
        try:
            return self.index[x]
        except KeyError:
            raise KernelError(f"state {x!r} not in the kernel state space")

    def contains_state(self, x) -> bool:
        return x in self.index

    def sample_step(self, t, x, rng):
        i = self.state_index(x)
        cum = _cumulative(self.matrix_at(t))
        u = rng.random()
        return self.states[int((cum[i] <= u).sum())]


class BiasedWalkKernel(KernelSpec):
    """+/-1 walk on the integer lattice: up with probability ``p_up``,
    down otherwise, optionally clamped at ``floor`` and/or ``ceiling``."""

    kind = "builtin_sampler"
    builtin = "biased_walk"
    state_kind = "int"
    time_homogeneous = True

    def __init__(self, p_up: float, floor: int | None = None, ceiling: int | None = None):
        if not 0.0 < p_up < 1.0:
            raise KernelError(f"p_up must be in (0, 1), got {p_up}")
        if floor is not None and ceiling is not None and floor >= ceiling:
            raise KernelError(f"floor {floor} must be below ceiling {ceiling}")
        self.p_up = float(p_up)
        self.floor = floor
        self.ceiling = ceiling

    def contains_state(self, x) -> bool:
        if not isinstance(x, (int, np.integer)):
            return False
        if self.floor is not None and x < self.floor:
            return False
        if self.ceiling is not None and x > self.ceiling:
            return False
        return True

    def sample_step(self, t, x, rng):
        if not self.contains_state(x):
            raise KernelError(f"state {x!r} outside the walk's lattice")
        u = rng.random()
        if u < self.p_up:
            y = x + 1
            if self.ceiling is not None and y > self.ceiling:
                y = self.ceiling
        else:
            y = x - 1
            if self.floor is not None and y < self.floor:
                y = self.floor
        return int(y)


class LinearGaussianKernel(KernelSpec):
    """Linear map plus isotropic Gaussian noise: x' = A x + sigma * xi."""

    kind = "builtin_sampler"
    builtin = "linear_gaussian"
    state_kind = "vector"
    time_homogeneous = True

    def __init__(self, A, noise_scale: float):
        self.A = np.asarray(A, dtype=np.float64)
        if self.A.ndim != 2 or self.A.shape[0] != self.A.shape[1]:
            raise KernelError(f"A must be square, got shape {self.A.shape}")
        if noise_scale < 0:
            raise KernelError(f"noise_scale must be >= 0, got {noise_scale}")
        self.noise_scale = float(noise_scale)
        self.dim = self.A.shape[0]

    def contains_state(self, x) -> bool:
        x = np.asarray(x, dtype=np.float64)
        return x.shape == (self.dim,) and bool(np.isfinite(x).all())

    def sample_step(self, t, x, rng):
        x = np.asarray(x, dtype=np.float64)
        if not self.contains_state(x):
            raise KernelError(f"state {x!r} is not a finite vector of dim {self.dim}")
        return self.A @ x + self.noise_scale * rng.standard_normal(self.dim)


def sample_step(kernel: KernelSpec, t: int, x, rng: np.random.Generator):
    """Draw one transition from the kernel's time-t law at state x."""
    return kernel.sample_step(t, x, rng)


# ---------------------------------------------------------------------------
# trajectories


@dataclass
class Trajectory:
    """One simulated path (a view into its batch)."""

    seed: int
    path_id: int
    times: np.ndarray
    states: np.ndarray
    mode: np.ndarray | None = None
    disturbance: np.ndarray | None = None


@dataclass
class TrajectoryBatch:
    """Seeded batch of simulated paths.

    ``states`` has shape (n, T+1) for finite/integer state spaces (label
    indices for finite kernels) or (n, T+1, d) for vector spaces.
    """

    seed: int
    states: np.ndarray
    state_kind: str
    labels: list | None = None
    mode: np.ndarray | None = None
    disturbance: np.ndarray | None = None

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    @property
    def horizon(self) -> int:
        return self.states.shape[1] - 1

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.states.shape[1])

    def state_values(self) -> np.ndarray:
        """States with finite-kernel indices decoded to their labels."""
        if self.state_kind == "finite" and self.labels is not None:
            return np.asarray(self.labels, dtype=object)[self.states]
        return self.states

    def trajectory(self, j: int) -> Trajectory:
        return Trajectory(
            seed=self.seed,
            path_id=j,
            times=self.times,
            states=self.states[j],
            mode=None if self.mode is None else self.mode[j],
            disturbance=self.disturbance,
        )


@dataclass
class StatSummary:
    """Per-time Monte Carlo summary of a scalar functional."""

    times: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    count: int
    confidence: float = 0.99


def simulate_batch(
    kernel: KernelSpec, x0, T: int, n: int, seed: int
) -> TrajectoryBatch:
    """Simulate ``n`` independent paths of length ``T`` from ``x0``.

    Identical (kernel, x0, T, n, seed) inputs reproduce the batch exactly.
    """
    if T < 0:
        raise KernelError(f"horizon must be >= 0, got {T}")
    if n < 1:
        raise KernelError(f"path count must be >= 1, got {n}")
    seed = _rng.check_seed(seed)

    if isinstance(kernel, FiniteKernel):
        i0 = kernel.state_index(x0)
        U = _rng.uniform_block(seed, _rng.DOMAIN_CHAIN, n, T)
        states = _accel.chain_sim(kernel.cum, i0, U)
        return TrajectoryBatch(seed, states, "finite", labels=kernel.states)

    if isinstance(kernel, FiniteKernelFamily):
        i0 = kernel.state_index(x0)
        cums = kernel.cums_up_to(T) if T > 0 else np.zeros((0, len(kernel.states), len(kernel.states)))
        U = _rng.uniform_block(seed, _rng.DOMAIN_CHAIN, n, T)
        states = _accel.chain_family_sim(cums, i0, U)
        return TrajectoryBatch(seed, states, "finite", labels=kernel.states)

    if isinstance(kernel, BiasedWalkKernel):
        if not kernel.contains_state(x0):
            raise KernelError(f"start state {x0!r} outside the walk's lattice")
        U = _rng.uniform_block(seed, _rng.DOMAIN_CHAIN, n, T)
        states = _accel.walk_sim(kernel.p_up, kernel.floor, kernel.ceiling, x0, U)
        return TrajectoryBatch(seed, states, "int")

    if isinstance(kernel, LinearGaussianKernel):
        x0 = np.asarray(x0, dtype=np.float64)
        if not kernel.contains_state(x0):
            raise KernelError(f"start state {x0!r} invalid for dim {kernel.dim}")
        flat = _rng.normal_block(seed, _rng.DOMAIN_NOISE, n, T * kernel.dim)
        normals = flat.reshape(n, T, kernel.dim)
        states = _accel.lingauss_sim(kernel.A, kernel.noise_scale, x0, normals)
        return TrajectoryBatch(seed, states, "vector")

    return _simulate_batch_generic(kernel, x0, T, n, seed)


def _simulate_batch_generic(kernel, x0, T, n, seed):
    """Fallback path for kernel kinds without a dedicated fast kernel."""
    first = kernel.sample_step(0, x0, _rng.child_stream(seed, _rng.DOMAIN_CHAIN, 0))
    vector = isinstance(first, np.ndarray)
    if vector:
        d = first.shape[0]
        states = np.empty((n, T + 1, d), dtype=np.float64)
    else:
        states = np.empty((n, T + 1), dtype=np.float64)
    for j in range(n):
        rng = _rng.child_stream(seed, _rng.DOMAIN_CHAIN, j + 1)
        x = x0
        states[j, 0] = x
        for t in range(T):
            x = kernel.sample_step(t, x, rng)
            states[j, t + 1] = x
    kind = "vector" if vector else "int"
    return TrajectoryBatch(seed, states, kind)


def estimate_functional(
    batch: TrajectoryBatch,
    g: Callable,
    confidence: float = 0.99,
) -> StatSummary:
    """Per-time mean and standard error of g(X_t) across paths.

    ``g`` maps a state to a nonnegative real; it is applied to label values
    for finite kernels.  A vectorized ``g`` (accepting arrays) is used
    directly; otherwise it is applied elementwise.
    """
    vals = _apply_functional(batch, g)
    if not np.isfinite(vals).all():
        raise ValueError("functional produced non-finite values on the batch")
    n = vals.shape[0]
    mean = vals.mean(axis=0)
    if n > 1:
        se = vals.std(axis=0, ddof=1) / np.sqrt(n)
    else:
        se = np.zeros(vals.shape[1])
    return StatSummary(
        times=np.arange(vals.shape[1]), mean=mean, se=se, count=n,
        confidence=confidence,
    )


def _apply_functional(batch: TrajectoryBatch, g: Callable) -> np.ndarray:
    if batch.state_kind == "finite" and batch.labels is not None:
        table = np.array([float(g(lbl)) for lbl in batch.labels])
        return table[batch.states]
    if batch.state_kind == "vector":
        n, tp1, d = batch.states.shape
        flat = batch.states.reshape(n * tp1, d)
        try:
            vals = np.asarray(g(flat), dtype=np.float64)
            if vals.shape == (n * tp1,):
                return vals.reshape(n, tp1)
        except Exception:
            pass
        out = np.empty(n * tp1)
        for i in range(n * tp1):
            out[i] = float(g(flat[i]))
        return out.reshape(n, tp1)
    try:
        vals = np.asarray(g(batch.states), dtype=np.float64)
        if vals.shape == batch.states.shape:
            return vals
    except Exception:
        pass
    vec = np.vectorize(lambda s: float(g(s)), otypes=[np.float64])
    return vec(batch.states)


# ---------------------------------------------------------------------------
# CSV export


def export_trajectories(batch: TrajectoryBatch, path) -> None:
    """Write the batch as CSV rows (path_id, t, state..., mode, disturbance...)."""
    values = batch.state_values()
    vector = batch.state_kind == "vector"
    d = values.shape[2] if vector else 1
    header = ["path_id", "t"]
    header += [f"state_{k}" for k in range(d)] if vector else ["state"]
    if batch.mode is not None:
        header.append("mode")
    if batch.disturbance is not None:
        dist = np.asarray(batch.disturbance)
        wd = dist.shape[1] if dist.ndim == 2 else 1
        header += [f"disturbance_{k}" for k in range(wd)] if wd > 1 else ["disturbance"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for j in range(batch.n_paths):
            for t in range(batch.horizon + 1):
                row = [j, t]
                if vector:
                    row += [repr(float(v)) for v in values[j, t]]
                else:
                    v = values[j, t]
                    row.append(repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                if batch.mode is not None:
                    row.append(int(batch.mode[j, t]))
                if batch.disturbance is not None:
                    dist = np.asarray(batch.disturbance)
                    w = dist[t] if t < dist.shape[0] else dist[-1]
                    row += [repr(float(x)) for x in np.atleast_1d(w)]
                writer.writerow(row)

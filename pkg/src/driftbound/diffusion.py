"""Squared-radius diffusions and sampled-chain certificates at desk scale.

The one-dimensional nonnegative diffusion dY = 2 sqrt(Y) db + delta dt is
simulated with full-truncation Euler (the root argument is clamped below at
0 and the state clamped after every step), which keeps paths nonnegative by
construction.  Conditioning a nonnegative increasing convex payoff F on the
terminal value defines phi(t, y) = E[F(Y_S) | Y_t = y]; phi is Monte Carlo
only (never a PDE solve), its monotonicity/convexity are checked with
common random numbers, and the generator relation

    d(phi)/dt + delta phi' + 2 y phi'' = 0,    phi(S, y) = F(y)

appears as a finite-difference residual diagnostic with a wide tolerance.

For a d-dimensional unit diffusion dX = b(t, X) dt + dW whose drift points
inward outside a compact region (the sector condition <x, b(t,x)> < 0),
the process phi(t, ||X_t||^2) with delta = d is a supermartingale up to the
region-hitting time and a bounded horizon; sampling at integer times then
feeds the certificate machinery.  Hitting is detected at step resolution
with no bridge correction (the bias is disclosed in reports).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _accel, _rng
from .certificates import IncrementTestReport, one_sided_increment_test
from .errors import KernelError, SimulationError


@dataclass
class BesqSpec:
    """Squared-radius diffusion: dimension parameter, start, horizon, step."""

    delta: float
    y0: float
    S: float
    dt: float = 1e-3
    n_paths: int = 10_000

    def __post_init__(self):
        if self.delta < 0:
            raise KernelError(f"dimension parameter must be >= 0, got {self.delta}")
        if self.y0 < 0:
            raise KernelError(f"y0 must be >= 0, got {self.y0}")
        if self.S <= 0 or self.dt <= 0:
            raise KernelError("S and dt must be positive")
        steps = self.S / self.dt
        if abs(steps - round(steps)) > 1e-9:
            raise KernelError(f"S/dt must be integral, got {steps}")
        self.n_steps = int(round(steps))
        if self.n_paths < 1:
            raise KernelError("n_paths must be >= 1")


@dataclass
class BesqResult:
    terminal: np.ndarray
    snapshots: np.ndarray | None = None  # (n, len(snapshot_steps))
    snapshot_steps: np.ndarray | None = None

    @property
    def mean(self) -> float:
        return float(self.terminal.mean())

    @property
    def se(self) -> float:
        n = len(self.terminal)
        return float(self.terminal.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0


def besq_simulate(
    spec: BesqSpec,
    seed: int,
    snapshot_steps: np.ndarray | None = None,
    y0: float | None = None,
    n_steps: int | None = None,
) -> BesqResult:
    """Simulate terminal samples (and optional snapshots) of the diffusion.

    Randomness is streamed in path chunks, so memory stays bounded for
    large path counts; identical (spec, seed) reproduce the run exactly.
    """
    seed = _rng.check_seed(seed)
    y_start = spec.y0 if y0 is None else float(y0)
    steps = spec.n_steps if n_steps is None else int(n_steps)
    snap = (
        np.asarray([], dtype=np.int64)
        if snapshot_steps is None
        else np.asarray(snapshot_steps, dtype=np.int64)
    )
    if snap.size and (snap.min() < 0 or snap.max() > steps or (np.diff(snap) <= 0).any()):
        raise KernelError("snapshot steps must be strictly increasing in [0, steps]")
    n = spec.n_paths
    terminal = np.empty(n, dtype=np.float64)
    snaps = np.empty((n, snap.size), dtype=np.float64) if snap.size else None
    for start, block in _rng.iter_normal_chunks(seed, _rng.DOMAIN_BESQ, n, steps):
        term, sn, _ = _accel.besq_chunk(y_start, spec.delta, spec.dt, block, snap)
        terminal[start : start + len(term)] = term
        if snaps is not None:
            snaps[start : start + len(term)] = sn
    return BesqResult(terminal=terminal, snapshots=snaps, snapshot_steps=snap if snap.size else None)


@dataclass
class MeanIdentityReport:
    """Terminal-mean check E[Y_S] = y0 + delta*S with a discretization
    budget taken from a dt vs dt/2 comparison."""

    expected: float
    mean: float
    se: float
    mean_half_dt: float
    se_half_dt: float
    bias_budget: float
    ok: bool


def besq_mean_report(spec: BesqSpec, seed: int) -> MeanIdentityReport:
    """|mean(Y_S) - (y0 + delta*S)| <= 3 SE + bias budget, where the budget
    is |mean_dt - mean_{dt/2}| + 3 SE of the finer run."""
    expected = spec.y0 + spec.delta * spec.S
    coarse = besq_simulate(spec, seed)
    fine_spec = BesqSpec(spec.delta, spec.y0, spec.S, spec.dt / 2.0, spec.n_paths)
    fine = besq_simulate(fine_spec, seed + 1)
    budget = abs(coarse.mean - fine.mean) + 3.0 * fine.se
    ok = abs(coarse.mean - expected) <= 3.0 * coarse.se + budget
    return MeanIdentityReport(
        expected=expected,
        mean=coarse.mean,
        se=coarse.se,
        mean_half_dt=fine.mean,
        se_half_dt=fine.se,
        bias_budget=budget,
        ok=ok,
    )


def phi_estimate(
    t: float, y: float, F: Callable, spec: BesqSpec, seed: int
) -> tuple[float, float]:
    """Monte Carlo phi(t, y) = E[F(Y_S) | Y_t = y] with its standard error.

    Time homogeneity restarts the diffusion at 0 over the horizon S - t;
    t = S returns F(y) exactly (terminal consistency, SE 0).
    """
    if not 0.0 <= t <= spec.S:
        raise KernelError(f"need 0 <= t <= S, got t={t}")
    steps = int(round((spec.S - t) / spec.dt))
    if steps == 0:
        return float(F(np.asarray([y]))[0] if _vectorized(F) else F(y)), 0.0
    res = besq_simulate(spec, seed, y0=y, n_steps=steps)
    vals = _apply_payoff(F, res.terminal)
    se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
    return float(vals.mean()), se


def _vectorized(F) -> bool:
    try:
        out = F(np.asarray([0.0, 1.0]))
        return np.asarray(out).shape == (2,)
    except Exception:
        return False


def _apply_payoff(F, ys: np.ndarray) -> np.ndarray:
    if _vectorized(F):
        vals = np.asarray(F(ys), dtype=np.float64)
    else:
        vals = np.array([float(F(v)) for v in ys])
    if not np.isfinite(vals).all():
        raise SimulationError("payoff overflowed on simulated terminal values")
    if (vals < 0).any():
        raise KernelError("payoff must be nonnegative")
    return vals


@dataclass
class ShapeReport:
    ys: np.ndarray
    phi: np.ndarray
    se: np.ndarray
    monotone_ok: bool
    monotone_worst_z: float
    convex_ok: bool
    convex_worst_z: float
    coupling_violations: int
    coupling_excluded_pairs: int
    coupling_pairs_checked: int
    pde_residuals: np.ndarray | None
    pde_residual_se: np.ndarray | None
    pde_scale: float | None

    @property
    def ok(self) -> bool:
        return self.monotone_ok and self.convex_ok and self.coupling_violations == 0


def phi_shape_check(
    F: Callable,
    spec: BesqSpec,
    ys: np.ndarray,
    t: float = 0.0,
    seed: int = 0,
    pde_step_frac: float = 0.1,
) -> ShapeReport:
    """Monotonicity, midpoint convexity, and the PDE residual of phi(t, .).

    All grid points share one driver stream (common random numbers), so the
    pairwise comparisons are paired tests: monotonicity uses the paired
    difference's SE, midpoint convexity (on a uniform grid) the paired
    second difference's.  The shared driver also yields the pathwise
    coupling check: a pathwise pair starting lower must end no higher.
    Exact ordering can only be asserted while the one-step map stays
    monotone, i.e. away from the clamp zone y < (dW)^2; pairs that visited
    the zone are excluded from the strict count and reported.  The PDE
    residual d(phi)/dt + delta phi' + 2y phi'' is central-differenced per
    path and reported with its SE (informational, wide tolerance).
    """
    ys = np.asarray(ys, dtype=np.float64)
    if len(ys) < 5:
        raise KernelError("shape check needs a grid of at least 5 points")
    if (np.diff(ys) <= 0).any():
        raise KernelError("grid must be strictly increasing")
    gaps = np.diff(ys)
    uniform = bool(np.allclose(gaps, gaps[0], rtol=1e-9))
    steps = int(round((spec.S - t) / spec.dt))
    if steps < 2:
        raise KernelError("horizon too short for the shape check")

    dk = max(int(round(steps * pde_step_frac)), 1)
    # simulate dk steps past the horizon so d(phi)/dt is a central difference
    snap = np.asarray([steps - dk, steps, steps + dk], dtype=np.int64)
    n = spec.n_paths
    m = len(ys)
    at_tau = np.empty((m, n), dtype=np.float64)
    before = np.empty((m, n), dtype=np.float64)
    after = np.empty((m, n), dtype=np.float64)
    flagged = np.empty((m, n), dtype=np.bool_)
    for start, block in _rng.iter_normal_chunks(seed, _rng.DOMAIN_BESQ, n, steps + dk):
        for gi, y in enumerate(ys):
            _, s_chunk, f_chunk = _accel.besq_chunk(
                float(y), spec.delta, spec.dt, block, snap
            )
            rows = slice(start, start + s_chunk.shape[0])
            before[gi, rows] = s_chunk[:, 0]
            at_tau[gi, rows] = s_chunk[:, 1]
            after[gi, rows] = s_chunk[:, 2]
            flagged[gi, rows] = f_chunk[:, 1]

    vals = np.stack([_apply_payoff(F, at_tau[gi]) for gi in range(m)])
    phi = vals.mean(axis=1)
    se = vals.std(axis=1, ddof=1) / math.sqrt(n)

    def _z(diffs: np.ndarray) -> float:
        mean = float(diffs.mean())
        sd = float(diffs.std(ddof=1) / math.sqrt(n))
        if sd == 0.0:
            return -np.inf if mean <= 0 else np.inf
        return mean / sd

    mono_z = max(_z(vals[i] - vals[i + 1]) for i in range(m - 1))
    if uniform:
        conv_z = max(
            _z(2.0 * vals[i + 1] - vals[i] - vals[i + 2]) for i in range(m - 2)
        )
    else:
        conv_z = -np.inf  # midpoint test needs the uniform grid

    violations = 0
    excluded = 0
    for i in range(m - 1):
        affected = flagged[i] | flagged[i + 1]
        excluded += int(affected.sum())
        violations += int((at_tau[i][~affected] > at_tau[i + 1][~affected]).sum())

    pde = None
    pde_se = None
    scale = None
    if m >= 3 and uniform:
        h = gaps[0]
        vals_before = np.stack([_apply_payoff(F, before[gi]) for gi in range(m)])
        vals_after = np.stack([_apply_payoff(F, after[gi]) for gi in range(m)])
        # phi(t, y) = u(S - t, y), so d(phi)/dt = -du/dtau, centrally differenced
        dphi_dt = (vals_before - vals_after) / (2.0 * dk * spec.dt)
        d1 = (vals[2:] - vals[:-2]) / (2.0 * h)
        d2 = (vals[2:] - 2.0 * vals[1:-1] + vals[:-2]) / h**2
        resid = dphi_dt[1:-1] + spec.delta * d1 + 2.0 * ys[1:-1, None] * d2
        pde = resid.mean(axis=1)
        pde_se = resid.std(axis=1, ddof=1) / math.sqrt(n)
        scale = float(np.abs(phi).max())

    return ShapeReport(
        ys=ys,
        phi=phi,
        se=se,
        monotone_ok=bool(mono_z <= 3.0),
        monotone_worst_z=float(mono_z),
        convex_ok=bool(conv_z <= 3.0),
        convex_worst_z=float(conv_z),
        coupling_violations=violations,
        coupling_excluded_pairs=excluded,
        coupling_pairs_checked=(m - 1) * n,
        pde_residuals=pde,
        pde_residual_se=pde_se,
        pde_scale=scale,
    )


# ---------------------------------------------------------------------------
# drifted diffusions


class DriftSpec:
    """Named drift families for dX = b(t, x) dt + dW."""

    def __init__(self, form: str, **params):
        self.form = form
        self.params = params
        if form == "linear":
            self.coeff = float(params["coeff"])  # b = coeff * x
        elif form == "radial_shift":
            self.coeff = float(params["coeff"])
            self.shift = float(params["shift"])  # b = coeff*x + shift*x/||x||
        else:
            raise KernelError(f"unknown drift form {form!r}")

    def __call__(self, t: float, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.form == "linear":
            return self.coeff * x
        nrm = np.linalg.norm(x, axis=-1, keepdims=True)
        nrm = np.where(nrm == 0, 1.0, nrm)
        return self.coeff * x + self.shift * x / nrm

    def inner_products(self, t: float, xs: np.ndarray) -> np.ndarray:
        """<x, b(t, x)> rowwise."""
        b = self(t, xs)
        return (xs * b).sum(axis=-1)


@dataclass
class DriftedDiffusionSpec:
    """Unit-diffusion SDE with named drift, region, and step size."""

    drift: DriftSpec
    dim: int
    region_radius: float  # K = closed ball of this radius at the origin
    dt: float = 1e-2
    horizon: float = 6.0

    def __post_init__(self):
        if self.dim < 1:
            raise KernelError("dimension must be >= 1")
        if self.dt <= 0 or self.horizon <= 0:
            raise KernelError("dt and horizon must be positive")
        steps = self.horizon / self.dt
        if abs(steps - round(steps)) > 1e-9:
            raise KernelError("horizon/dt must be integral")
        self.n_steps = int(round(steps))
        per_unit = 1.0 / self.dt
        if abs(per_unit - round(per_unit)) > 1e-9:
            raise KernelError("1/dt must be integral so integer times sit on the grid")
        self.steps_per_unit = int(round(per_unit))


@dataclass
class SectorReport:
    ok: bool
    worst_inner_product: float
    worst_point: np.ndarray
    n_checked: int


def sector_check(
    spec: DriftedDiffusionSpec,
    grid: np.ndarray | None = None,
    time_samples: np.ndarray | None = None,
    margin: float = 0.0,
) -> SectorReport:
    """Verify <x, b(t, x)> < -margin on sample points outside the region."""
    if grid is None:
        rng = np.random.default_rng(3)
        radii = np.linspace(spec.region_radius * 1.01, spec.region_radius * 5 + 5, 40)
        dirs = rng.standard_normal((40, spec.dim))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        grid = (radii[:, None, None] * dirs[None, :, :]).reshape(-1, spec.dim)
    grid = np.asarray(grid, dtype=np.float64)
    inside = np.linalg.norm(grid, axis=1) <= spec.region_radius
    if inside.any():
        raise KernelError("sector grid must exclude the region K")
    if time_samples is None:
        time_samples = np.linspace(0.0, spec.horizon, 5)
    worst = -np.inf
    worst_pt = grid[0]
    for t in np.asarray(time_samples, dtype=np.float64):
        ips = spec.drift.inner_products(float(t), grid)
        i = int(np.argmax(ips))
        if ips[i] > worst:
            worst = float(ips[i])
            worst_pt = grid[i]
    return SectorReport(
        ok=bool(worst < -margin),
        worst_inner_product=worst,
        worst_point=worst_pt,
        n_checked=grid.shape[0] * len(np.atleast_1d(time_samples)),
    )


@dataclass
class SampledChain:
    """Integer-time samples Z_i = X_{i ^ tau_K} of a drifted diffusion.

    ``tau_int`` is the integer ceiling of the step-resolution hitting time
    (+inf when the path never enters K within the horizon).
    """

    Z: np.ndarray  # (n, T_int + 1, d)
    tau_int: np.ndarray
    hit_fraction: float
    dt: float


def sampled_chain(
    spec: DriftedDiffusionSpec, x0, n: int, seed: int, noise: bool = True
) -> SampledChain:
    """Simulate the diffusion and keep the integer-time stopped chain.

    Only the linear drift family has a streaming fast path; hitting is
    detected at step resolution (no bridge correction) and the path is
    frozen from the hit on.
    """
    if spec.drift.form != "linear":
        raise KernelError("sampled-chain simulation supports the linear drift family")
    kappa = -spec.drift.coeff
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.shape != (spec.dim,):
        raise KernelError(f"x0 shape {x0.shape} does not match dim {spec.dim}")
    seed = _rng.check_seed(seed)
    T_int = int(spec.horizon)
    snap = np.arange(0, T_int + 1, dtype=np.int64) * spec.steps_per_unit
    steps = spec.n_steps
    Z = np.empty((n, T_int + 1, spec.dim), dtype=np.float64)
    hit = np.empty(n, dtype=np.int64)
    for start, block in _rng.iter_normal_chunks(
        seed, _rng.DOMAIN_DIFFUSION, n, steps * spec.dim
    ):
        rows = block.shape[0]
        normals = block.reshape(rows, steps, spec.dim)
        snaps, hit_step = _accel.em_linear_drift(
            kappa, spec.dt, 1.0 if noise else 0.0, spec.region_radius, x0, normals, snap
        )
        Z[start : start + rows] = snaps
        hit[start : start + rows] = hit_step
    tau_int = np.where(hit >= 0, np.ceil(hit / spec.steps_per_unit), np.inf)
    return SampledChain(
        Z=Z,
        tau_int=tau_int,
        hit_fraction=float((hit >= 0).mean()),
        dt=spec.dt,
    )


def zeta_supermartingale_test(
    spec: DriftedDiffusionSpec,
    x0,
    n: int,
    seed: int,
    payoff: str = "linear",
    confidence: float = 0.99,
    min_alive: int = 25,
) -> IncrementTestReport:
    """Statistical supermartingale test for zeta_i = phi(i, ||Z_i||^2).

    phi comes from the squared-radius construction with the diffusion's
    dimension as the parameter; for the shipped payoffs it has a closed
    form (F(y) = y gives y + d (S - t), validated independently by the
    terminal-mean identity; F(y) = y^2 follows from the first two moment
    equations).  The chain is stopped at the region and the horizon.
    """
    chain = sampled_chain(spec, x0, n, seed, noise=True)
    T_int = chain.Z.shape[1] - 1
    S = float(T_int)
    d = float(spec.dim)
    y = (chain.Z**2).sum(axis=2)
    times = np.arange(T_int + 1, dtype=np.float64)
    if payoff == "linear":
        phi = y + d * (S - times)[None, :]
    elif payoff == "square":
        rem = (S - times)[None, :]
        phi = y**2 + (2.0 * d + 4.0) * (y * rem + d * rem**2 / 2.0)
    else:
        raise KernelError(f"unknown payoff {payoff!r}")
    # stop the time index with the state so increments vanish after the hit
    tau = np.where(np.isfinite(chain.tau_int), chain.tau_int, T_int + 1)
    stop_idx = np.minimum(times[None, :], tau[:, None]).astype(np.int64)
    rows = np.arange(phi.shape[0])[:, None]
    phi_stopped = phi[rows, stop_idx]
    alive = times[None, :] < np.where(np.isfinite(chain.tau_int), chain.tau_int, np.inf)[:, None]
    return one_sided_increment_test(phi_stopped, alive, confidence, min_alive)

"""Randomly switched systems (iterated function systems) and their
stability analysis.

The system is X_{t+1} = f_{mode_t}(X_t) with the mode process an
irreducible finite Markov chain.  The Markov state is always the pair
(mode, X); every certificate-module reuse goes through this product space.
Stability hypotheses come as a family of Lyapunov functions V_i with
class-K envelopes (V1), linear comparability with factor mu off a ball of
radius r (V2), and per-map contraction factors: a single lambda0 (V3) or a
matrix lambda_ij bounding V_i(f_j(x)) <= lambda_ij V_i(x) (V3').

Two scalar conditions make the discounted truncated Lyapunov process a
supermartingale up to the hitting time of the r-ball:

    (S1)  lambda0 * (p_hat + mu * p_tilde) < 1
    (S2)  mu * max_i sum_j p_ij * lambda_ji < 1

where p_hat = max_i p_ii and p_tilde = max_{i != j} p_ij.  Any discount
rate alpha with (condition value) * e^alpha < 1 works; this module returns
alpha_star = -ln(value)/2, which leaves exactly half the slack.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _accel, _rng
from .certificates import IncrementTestReport, one_sided_increment_test
from .chains import TrajectoryBatch, _validate_matrix
from .classk import ClassKFunction
from .errors import KernelError, SimulationError

EQUILIBRIUM_TOL = 1e-10


# ---------------------------------------------------------------------------
# switching chain


@dataclass
class SwitchingChainSpec:
    """Irreducible mode chain with initial law pi0.

    ``p_hat`` and ``p_tilde`` are always recomputed from P, never supplied.
    """

    P: np.ndarray
    pi0: np.ndarray | None = None

    def __post_init__(self):
        self.P = _validate_matrix(self.P, "switching matrix")
        n = self.P.shape[0]
        if self.pi0 is None:
            self.pi0 = np.full(n, 1.0 / n)
        self.pi0 = np.asarray(self.pi0, dtype=np.float64)
        if self.pi0.shape != (n,) or (self.pi0 < 0).any() or abs(self.pi0.sum() - 1.0) > 1e-12:
            raise KernelError("pi0 must be a probability vector matching P")
        if not self._irreducible():
            raise KernelError("switching matrix is not irreducible")

    def _irreducible(self) -> bool:
        n = self.P.shape[0]
        reach = (self.P > 0) | np.eye(n, dtype=bool)
        for _ in range(n):
            reach = reach @ reach
        return bool(reach.all())

    @property
    def n_modes(self) -> int:
        return self.P.shape[0]

    @property
    def p_hat(self) -> float:
        return float(np.diag(self.P).max())

    @property
    def p_tilde(self) -> float:
        off = self.P[~np.eye(self.n_modes, dtype=bool)]
        return float(off.max()) if off.size else 0.0


# ---------------------------------------------------------------------------
# map families


class MapSpec:
    """One subsystem map f: R^d -> R^d with a known zero x* (f(x*) = 0)."""

    def __call__(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def apply_batch(self, X: np.ndarray) -> np.ndarray:
        return np.stack([self(x) for x in X])

    def equilibrium(self) -> np.ndarray:
        raise NotImplementedError

    def lipschitz_on(self, radius: float) -> float:
        raise NotImplementedError


class LinearMap(MapSpec):
    family = "linear"

    def __init__(self, A):
        self.A = np.asarray(A, dtype=np.float64)
        if self.A.ndim != 2 or self.A.shape[0] != self.A.shape[1]:
            raise KernelError(f"linear map matrix must be square, got {self.A.shape}")

    def __call__(self, x):
        return self.A @ np.asarray(x, dtype=np.float64)

    def apply_batch(self, X):
        d = self.A.shape[0]
        out = np.zeros_like(X)
        for k in range(d):
            acc = np.zeros(X.shape[0])
            for l in range(d):
                acc += self.A[k, l] * X[:, l]
            out[:, k] = acc
        return out

    def equilibrium(self):
        return np.zeros(self.A.shape[0])

    def lipschitz_on(self, radius):
        return float(np.linalg.norm(self.A, 2))


class AffineMap(MapSpec):
    family = "affine"

    def __init__(self, A, b):
        self.A = np.asarray(A, dtype=np.float64)
        self.b = np.asarray(b, dtype=np.float64)
        if self.A.shape[0] != self.A.shape[1] or self.b.shape != (self.A.shape[0],):
            raise KernelError("affine map needs square A and matching b")
        try:
            self._zero = np.linalg.solve(self.A, -self.b)
        except np.linalg.LinAlgError:
            raise KernelError("affine map has no isolated zero (singular A)")

    def __call__(self, x):
        return self.A @ np.asarray(x, dtype=np.float64) + self.b

    def apply_batch(self, X):
        d = self.A.shape[0]
        out = np.zeros_like(X)
        for k in range(d):
            acc = np.zeros(X.shape[0])
            for l in range(d):
                acc += self.A[k, l] * X[:, l]
            out[:, k] = acc + self.b[k]
        return out

    def equilibrium(self):
        return self._zero

    def lipschitz_on(self, radius):
        return float(np.linalg.norm(self.A, 2))


class ScalarTanhMap(MapSpec):
    """f(x) = a * tanh(x) on R^1; globally Lipschitz with constant |a|."""

    family = "scalar_tanh"

    def __init__(self, a: float):
        self.a = float(a)

    def __call__(self, x):
        return self.a * np.tanh(np.asarray(x, dtype=np.float64).reshape(1))

    def apply_batch(self, X):
        return self.a * np.tanh(X)

    def equilibrium(self):
        return np.zeros(1)

    def lipschitz_on(self, radius):
        return abs(self.a)


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass
class SwitchedSystemSpec:
    """Maps, equilibria, and the switching chain."""

    maps: list
    chain: SwitchingChainSpec

    def __post_init__(self):
        if len(self.maps) != self.chain.n_modes:
            raise KernelError(
                f"{len(self.maps)} maps for a {self.chain.n_modes}-mode chain"
            )
        dims = {m.equilibrium().shape[0] for m in self.maps}
        if len(dims) != 1:
            raise KernelError(f"maps disagree on state dimension: {dims}")
        self.dim = dims.pop()
        for i, m in enumerate(self.maps):
            resid = float(np.linalg.norm(m(m.equilibrium())))
            if resid > EQUILIBRIUM_TOL:
                raise KernelError(
                    f"map {i} does not vanish at its equilibrium (residual {resid:g})"
                )

    @property
    def is_linear(self) -> bool:
        return all(isinstance(m, LinearMap) for m in self.maps)


# ---------------------------------------------------------------------------
# Lyapunov family


@dataclass
class LyapunovFamilySpec:
    """Per-mode Lyapunov functions with their comparison data.

    The stock family is the weighted norm V_i(x) = c_i * ||x||, for which
    (V2) holds with mu = max c / min c and the alpha envelopes are linear.
    Supply either the scalar ``lambda0`` (V3) or the matrix ``Lambda``
    with Lambda[i, j] bounding V_i(f_j(x))/V_i(x) (V3').
    """

    weights: np.ndarray
    mu: float
    r: float = 0.0
    lambda0: float | None = None
    Lambda: np.ndarray | None = None
    alpha1: ClassKFunction | None = None
    alpha2: ClassKFunction | None = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if (self.weights <= 0).any():
            raise KernelError("Lyapunov weights must be positive")
        if self.mu <= 1.0:
            raise KernelError(f"mu must exceed 1, got {self.mu}")
        if self.r < 0:
            raise KernelError(f"r must be >= 0, got {self.r}")
        if (self.lambda0 is None) == (self.Lambda is None):
            raise KernelError("provide exactly one of lambda0= or Lambda=")
        if self.lambda0 is not None and not 0 < self.lambda0 < 1:
            raise KernelError(f"lambda0 must be in (0, 1), got {self.lambda0}")
        if self.Lambda is not None:
            self.Lambda = np.asarray(self.Lambda, dtype=np.float64)
            n = len(self.weights)
            if self.Lambda.shape != (n, n):
                raise KernelError(
                    f"Lambda shape {self.Lambda.shape} does not match {n} modes"
                )
            if (self.Lambda < 0).any():
                raise KernelError("Lambda entries must be nonnegative")
        if self.alpha1 is None:
            self.alpha1 = ClassKFunction.linear(float(self.weights.min()))
        if self.alpha2 is None:
            self.alpha2 = ClassKFunction.linear(float(self.weights.max()))

    @property
    def n_modes(self) -> int:
        return len(self.weights)

    def value(self, i: int, x: np.ndarray) -> float:
        return float(self.weights[i] * np.linalg.norm(x))

    def values(self, modes: np.ndarray, norms: np.ndarray) -> np.ndarray:
        """V_{modes}(x) from precomputed state norms (matching shapes)."""
        return self.weights[modes] * norms

    def truncated_values(self, modes: np.ndarray, norms: np.ndarray) -> np.ndarray:
        """V' = V * 1{||x|| > r}."""
        return np.where(norms > self.r, self.weights[modes] * norms, 0.0)


# ---------------------------------------------------------------------------
# conditions (S1) / (S2) and the switching-count law


@dataclass
class ConditionResult:
    ok: bool
    value: float
    alpha_star: float | None
    detail: dict = field(default_factory=dict)


def check_S1(lambda0: float, mu: float, chain: SwitchingChainSpec) -> ConditionResult:
    """Condition lambda0 * (p_hat + mu * p_tilde) < 1; on success returns
    alpha_star = -ln(value)/2 > 0, which satisfies value * e^alpha < 1."""
    if not 0 < lambda0 < 1:
        raise KernelError(f"lambda0 must be in (0, 1), got {lambda0}")
    if mu <= 1:
        raise KernelError(f"mu must exceed 1, got {mu}")
    p_hat, p_tilde = chain.p_hat, chain.p_tilde
    value = lambda0 * (p_hat + mu * p_tilde)
    ok = value < 1.0
    alpha = -math.log(value) / 2.0 if ok else None
    return ConditionResult(ok, value, alpha, {"p_hat": p_hat, "p_tilde": p_tilde})


def check_S2(Lambda, mu: float, chain: SwitchingChainSpec) -> ConditionResult:
    """Condition mu * max_i sum_j p_ij * lambda_ji < 1.

    Mind the index order: the factor paired with p_ij is lambda_ji, the
    contraction of the next mode's Lyapunov function along the current
    mode's map."""
    Lambda = np.asarray(Lambda, dtype=np.float64)
    if Lambda.shape != chain.P.shape:
        raise KernelError(
            f"Lambda shape {Lambda.shape} does not match P shape {chain.P.shape}"
        )
    if (Lambda < 0).any():
        raise KernelError("Lambda entries must be nonnegative")
    if mu <= 1:
        raise KernelError(f"mu must exceed 1, got {mu}")
    row_vals = (chain.P * Lambda.T).sum(axis=1)
    value = float(mu * row_vals.max())
    ok = value < 1.0
    alpha = -math.log(value) / 2.0 if ok else None
    return ConditionResult(ok, value, alpha, {"row_values": row_vals.tolist()})


def switching_count_bound(chain: SwitchingChainSpec, s: int, t: int, k: int) -> float:
    """Upper bound on P(N_t - N_s = k | sigma_s): the binomial-shaped
    estimate capped at 1, and exactly 0 outside 0 <= k <= t - s."""
    if s >= t:
        raise ValueError(f"need s < t, got s={s}, t={t}")
    span = t - s
    if k < 0 or k > span:
        return 0.0
    raw = math.comb(span, k) * chain.p_hat ** (span - k) * chain.p_tilde ** k
    return min(raw, 1.0)


# ---------------------------------------------------------------------------
# simulation


@dataclass
class SwitchedBatch:
    """Simulated switched trajectories with mode and switch-count columns."""

    seed: int
    states: np.ndarray  # (n, T+1, d)
    modes: np.ndarray  # (n, T+1)
    nswitch: np.ndarray  # (n, T+1), running count of mode changes
    disturbance: np.ndarray | None = None  # (T, m) shared across paths

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    @property
    def horizon(self) -> int:
        return self.states.shape[1] - 1

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.states, axis=2)

    def log_norms(self) -> np.ndarray:
        """log ||X_t|| accumulated per step so products like mu^N lambda^t
        can be compared entirely in the log domain."""
        with np.errstate(divide="ignore"):
            return np.log(self.norms())

    def recount_switches(self) -> np.ndarray:
        """Switch counts recomputed by scanning the mode sequence."""
        changes = self.modes[:, 1:] != self.modes[:, :-1]
        out = np.zeros_like(self.nswitch)
        out[:, 1:] = np.cumsum(changes, axis=1)
        return out

    def to_trajectory_batch(self) -> TrajectoryBatch:
        return TrajectoryBatch(
            seed=self.seed, states=self.states, state_kind="vector",
            mode=self.modes, disturbance=self.disturbance,
        )


def simulate_modes(chain: SwitchingChainSpec, T: int, n: int, seed: int) -> np.ndarray:
    """Mode paths sigma_0..sigma_T (sigma_0 from pi0) as an (n, T+1) array."""
    U = _rng.uniform_block(_rng.check_seed(seed), _rng.DOMAIN_MODES, n, T + 1)
    pi0_cum = np.cumsum(chain.pi0)
    pi0_cum[-1] = 1.0
    P_cum = np.cumsum(chain.P, axis=1)
    P_cum[:, -1] = 1.0
    modes = np.empty((n, T + 1), dtype=np.int64)
    m = (pi0_cum[None, :] <= U[:, 0, None]).sum(axis=1)
    modes[:, 0] = m
    for t in range(T):
        m = (P_cum[m] <= U[:, t + 1, None]).sum(axis=1)
        modes[:, t + 1] = m
    return modes


def simulate_switched(
    sys: SwitchedSystemSpec, x0, T: int, n: int, seed: int
) -> SwitchedBatch:
    """Simulate X_{t+1} = f_{mode_t}(X_t); raises on numeric overflow with
    the first overflow time in the message."""
    if T < 0:
        raise KernelError(f"horizon must be >= 0, got {T}")
    if n < 1:
        raise KernelError(f"path count must be >= 1, got {n}")
    seed = _rng.check_seed(seed)
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.shape != (sys.dim,):
        raise KernelError(f"x0 shape {x0.shape} does not match dimension {sys.dim}")

    if sys.is_linear:
        As = np.stack([m.A for m in sys.maps])
        U = _rng.uniform_block(seed, _rng.DOMAIN_MODES, n, T + 1)
        pi0_cum = np.cumsum(sys.chain.pi0)
        pi0_cum[-1] = 1.0
        P_cum = np.cumsum(sys.chain.P, axis=1)
        P_cum[:, -1] = 1.0
        states, modes, nswitch = _accel.switched_linear_sim(As, pi0_cum, P_cum, x0, U)
    else:
        modes = simulate_modes(sys.chain, T, n, seed)
        states = np.empty((n, T + 1, sys.dim), dtype=np.float64)
        states[:, 0, :] = x0
        for t in range(T):
            nxt = np.empty((n, sys.dim))
            for i, f in enumerate(sys.maps):
                mask = modes[:, t] == i
                if mask.any():
                    nxt[mask] = f.apply_batch(states[mask, t, :])
            states[:, t + 1, :] = nxt
        changes = modes[:, 1:] != modes[:, :-1]
        nswitch = np.zeros((n, T + 1), dtype=np.int64)
        nswitch[:, 1:] = np.cumsum(changes, axis=1)

    if not np.isfinite(states).all():
        bad = np.argwhere(~np.isfinite(states))
        j, t = int(bad[0, 0]), int(bad[0, 1])
        raise SimulationError(
            f"state overflow on path {j} at time {t}; the system is numerically "
            "unstable at this horizon"
        )
    return SwitchedBatch(seed=seed, states=states, modes=modes, nswitch=nswitch)


# ---------------------------------------------------------------------------
# verification grids


@dataclass
class RadialGrid:
    """Deterministic log-radial grid: radii x unit directions."""

    dim: int
    r_min: float
    r_max: float
    n_radii: int = 12
    n_dirs: int = 16

    def points(self) -> np.ndarray:
        if self.r_min <= 0:
            raise ValueError("r_min must be positive for a log-radial grid")
        radii = np.geomspace(self.r_min, self.r_max, self.n_radii)
        if self.dim == 1:
            dirs = np.array([[1.0], [-1.0]])
        elif self.dim == 2:
            ang = np.linspace(0.0, 2.0 * math.pi, self.n_dirs, endpoint=False)
            dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        else:
            rng = np.random.default_rng(7)
            dirs = rng.standard_normal((self.n_dirs, self.dim))
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        return (radii[:, None, None] * dirs[None, :, :]).reshape(-1, self.dim)


@dataclass
class FamilyCheckReport:
    items: dict  # name -> worst relative violation (<= tol passes)
    tol: float

    @property
    def ok(self) -> bool:
        return all(v <= self.tol for v in self.items.values())

    def item_ok(self, name: str) -> bool:
        return self.items[name] <= self.tol


def verify_lyapunov_family(
    lyap: LyapunovFamilySpec,
    sys: SwitchedSystemSpec,
    grid: RadialGrid | np.ndarray,
    tol: float = 1e-9,
) -> FamilyCheckReport:
    """Grid evidence for (V1), (V2), and (V3) or (V3').

    Reports the worst relative violation per item over grid points and mode
    pairs; grid checks are evidence, not proof, and the resolution is the
    caller's choice.
    """
    pts = grid.points() if isinstance(grid, RadialGrid) else np.asarray(grid)
    norms = np.linalg.norm(pts, axis=1)
    items: dict[str, float] = {}

    worst = -np.inf
    for i, f in enumerate(sys.maps):
        eq = f.equilibrium()
        dist = np.linalg.norm(pts - eq[None, :], axis=1)
        v = lyap.weights[i] * norms
        lo = lyap.alpha1(dist) - v
        hi = v - lyap.alpha2(dist)
        scale = np.maximum(v, 1e-300)
        worst = max(worst, float((lo / scale).max()), float((hi / scale).max()))
    items["V1"] = worst

    off = norms > lyap.r
    worst = -np.inf
    for i in range(lyap.n_modes):
        for j in range(lyap.n_modes):
            vi = lyap.weights[i] * norms[off]
            vj = lyap.weights[j] * norms[off]
            gap = (vi - lyap.mu * vj) / np.maximum(lyap.mu * vj, 1e-300)
            if gap.size:
                worst = max(worst, float(gap.max()))
    items["V2"] = worst

    if lyap.lambda0 is not None:
        worst = -np.inf
        for i, f in enumerate(sys.maps):
            fx = f.apply_batch(pts)
            lhs = lyap.weights[i] * np.linalg.norm(fx, axis=1)
            rhs = lyap.lambda0 * lyap.weights[i] * norms
            gap = (lhs - rhs) / np.maximum(rhs, 1e-300)
            worst = max(worst, float(gap.max()))
        items["V3"] = worst
    else:
        worst = -np.inf
        for j, f in enumerate(sys.maps):
            fx = f.apply_batch(pts)
            fx_norm = np.linalg.norm(fx, axis=1)
            for i in range(lyap.n_modes):
                lhs = lyap.weights[i] * fx_norm
                rhs = lyap.Lambda[i, j] * lyap.weights[i] * norms
                gap = (lhs - rhs) / np.maximum(rhs, 1e-300)
                worst = max(worst, float(gap.max()))
        items["V3'"] = worst

    return FamilyCheckReport(items=items, tol=tol)


# ---------------------------------------------------------------------------
# pathwise inequality and diagnostics


@dataclass
class PathwiseReport:
    ok: bool
    precondition_ok: bool
    n_checked: int
    violations: list
    worst_log_gap: float
    family_report: FamilyCheckReport | None = None


def first_ball_hit(norms: np.ndarray, r: float) -> np.ndarray:
    """First time ||X_t|| <= r per path (+inf if never), including t = 0."""
    inside = norms <= r
    any_hit = inside.any(axis=1)
    idx = inside.argmax(axis=1).astype(np.float64)
    return np.where(any_hit, idx, np.inf)


def pathwise_inequality_check(
    batch: SwitchedBatch,
    lyap: LyapunovFamilySpec,
    sys: SwitchedSystemSpec | None = None,
    rel_tol: float = 1e-9,
    max_violations: int = 100,
) -> PathwiseReport:
    """Check V'_{mode_t}(X_t) <= mu^{N_t} lambda0^t V'_{mode_0}(x0) for
    every path and every t before the r-ball is hit.

    When the system is supplied, (V1)/(V2)/(V3) are first spot-checked on a
    data-driven grid; a failing family makes this a precondition failure and
    the inequality is not asserted.
    """
    if lyap.lambda0 is None:
        raise KernelError("the pathwise inequality uses the scalar lambda0 form")
    family_report = None
    if sys is not None:
        norms_all = np.linalg.norm(batch.states, axis=2)
        r_lo = max(float(norms_all[norms_all > 0].min()) * 0.5, 1e-12)
        r_hi = float(norms_all.max()) * 2.0 + 1e-9
        grid = RadialGrid(dim=sys.dim, r_min=r_lo, r_max=r_hi)
        family_report = verify_lyapunov_family(lyap, sys, grid)
        if not family_report.ok:
            return PathwiseReport(False, False, 0, [], np.nan, family_report)

    norms = batch.norms()
    tau_r = first_ball_hit(norms, lyap.r)
    times = np.arange(batch.horizon + 1, dtype=np.float64)
    active = times[None, :] < tau_r[:, None]

    logs = batch.log_norms()
    log_w = np.log(lyap.weights)
    log_v = log_w[batch.modes] + logs  # log V (norms > r wherever active)
    log_env = (
        batch.nswitch * math.log(lyap.mu)
        + times[None, :] * math.log(lyap.lambda0)
        + log_v[:, :1]
    )
    gap = log_v - log_env - math.log1p(rel_tol)
    bad = active & (gap > 0)
    violations = [
        (int(j), int(t), float(gap[j, t])) for j, t in np.argwhere(bad)[:max_violations]
    ]
    checked = int(active.sum())
    worst = float(np.where(active, gap, -np.inf).max()) if checked else -np.inf
    return PathwiseReport(
        ok=not violations,
        precondition_ok=True,
        n_checked=checked,
        violations=violations,
        worst_log_gap=worst,
        family_report=family_report,
    )


@dataclass
class DiagnosticsReport:
    discounted_means: np.ndarray
    discounted_monotone: bool
    decay_ratio: float
    decay_ok: bool
    divergent: bool
    max_terminal_norm: float
    log_bound_worst_gap: float
    log_bound_ok: bool
    sup_mean_alpha1: float
    alpha1_bound: float | None
    alpha1_ok: bool | None

    @property
    def ok(self) -> bool:
        items = [self.discounted_monotone, self.decay_ok, self.log_bound_ok,
                 not self.divergent]
        if self.alpha1_ok is not None:
            items.append(self.alpha1_ok)
        return all(items)


def stability_diagnostics(
    batch: SwitchedBatch,
    lyap: LyapunovFamilySpec,
    alpha_star: float,
    decay_target: float = 1e-6,
    alpha1_bound: float | None = None,
    rel_tol: float = 1e-9,
) -> DiagnosticsReport:
    """Empirical stability evidence on a simulated batch.

    Items: (a) the discounted Lyapunov mean e^{alpha* t} V_{mode_t}(X_t)
    must be nonincreasing and fall below ``decay_target`` times its initial
    value; (b) every path must satisfy the switching envelope at the final
    time, checked in the log domain; (c) sup_t mean alpha1(||X_t||) is
    compared against the product-space certificate bound when supplied
    (r = 0 systems get the exact default max_i V_i(x0)).
    """
    if lyap.lambda0 is None:
        raise KernelError("diagnostics use the scalar lambda0 form")
    norms = batch.norms()
    times = np.arange(batch.horizon + 1, dtype=np.float64)
    v = lyap.values(batch.modes, norms)
    disc = np.exp(alpha_star * times)[None, :] * v
    means = disc.mean(axis=0)

    finite = bool(np.isfinite(means).all())
    monotone = finite and bool((np.diff(means) <= means[:-1] * rel_tol + 1e-300).all())
    decay_ratio = float(means[-1] / means[0]) if finite and means[0] > 0 else np.inf
    decay_ok = finite and decay_ratio <= decay_target
    divergent = (not finite) or means[-1] > means[0]

    T = batch.horizon
    log_env = (
        batch.nswitch[:, T] * math.log(lyap.mu)
        + T * math.log(lyap.lambda0)
        + batch.log_norms()[:, 0]
    )
    log_gap = batch.log_norms()[:, T] - log_env - math.log1p(rel_tol)
    log_ok = bool((log_gap <= 0).all())

    a1 = np.asarray(lyap.alpha1(norms.ravel())).reshape(norms.shape)
    mean_a1 = a1.mean(axis=0)
    sup_a1 = float(mean_a1.max())
    if alpha1_bound is None and lyap.r == 0.0:
        x0 = batch.states[0, 0]
        alpha1_bound = float(lyap.weights.max() * np.linalg.norm(x0))
    a1_ok = None if alpha1_bound is None else bool(sup_a1 <= alpha1_bound + 1e-12)

    return DiagnosticsReport(
        discounted_means=means,
        discounted_monotone=monotone,
        decay_ratio=decay_ratio,
        decay_ok=decay_ok,
        divergent=divergent,
        max_terminal_norm=float(norms[:, T].max()),
        log_bound_worst_gap=float(log_gap.max()),
        log_bound_ok=log_ok,
        sup_mean_alpha1=sup_a1,
        alpha1_bound=alpha1_bound,
        alpha1_ok=a1_ok,
    )


def handoff_supermartingale_test(
    batch: SwitchedBatch,
    lyap: LyapunovFamilySpec,
    alpha_star: float,
    confidence: float = 0.99,
    min_alive: int = 25,
) -> IncrementTestReport:
    """Statistical supermartingale test of the discounted truncated
    Lyapunov process on the product space, stopped at the r-ball."""
    norms = batch.norms()
    tau_r = first_ball_hit(norms, lyap.r)
    n, tp1 = norms.shape
    times = np.arange(tp1)
    stop_idx = np.minimum(times[None, :], np.where(np.isfinite(tau_r), tau_r, tp1)[:, None]).astype(np.int64)
    rows = np.arange(n)[:, None]
    vprime = lyap.truncated_values(batch.modes, norms)
    phi_all = np.exp(alpha_star * times)[None, :] * vprime
    phi_stopped = phi_all[rows, stop_idx]
    alive = times[None, :] < np.where(np.isfinite(tau_r), tau_r, np.inf)[:, None]
    return one_sided_increment_test(phi_stopped, alive, confidence, min_alive)


# ---------------------------------------------------------------------------
# joint-space kernel (product of mode and state)


class SwitchedJointKernel:
    """The (mode, X) product chain packaged as a kernel sampler.

    States are vectors [mode, x_1..x_d] with the mode stored as a float
    index; the certificate machinery can then treat the switched system as
    an ordinary Markov chain on R^{1+d}.
    """

    kind = "builtin_sampler"
    builtin = "switched_joint"
    state_kind = "vector"
    time_homogeneous = True

    def __init__(self, sys: SwitchedSystemSpec):
        self.sys = sys
        self.dim = sys.dim + 1
        cum = np.cumsum(sys.chain.P, axis=1)
        cum[:, -1] = 1.0
        self._cum = cum

    def contains_state(self, z) -> bool:
        z = np.asarray(z, dtype=np.float64)
        if z.shape != (self.dim,):
            return False
        mode = int(z[0])
        return 0 <= mode < self.sys.chain.n_modes and float(z[0]) == mode

    def sample_step(self, t, z, rng):
        z = np.asarray(z, dtype=np.float64)
        if not self.contains_state(z):
            raise KernelError(f"invalid joint state {z!r}")
        i = int(z[0])
        x_next = self.sys.maps[i](z[1:])
        u = rng.random()
        j = int((self._cum[i] <= u).sum())
        return np.concatenate(([float(j)], x_next))

    def one_step_law(self, z):
        """Finite one-step law [(prob, next_state), ...] from a joint state."""
        z = np.asarray(z, dtype=np.float64)
        i = int(z[0])
        x_next = self.sys.maps[i](z[1:])
        return [
            (float(p), np.concatenate(([float(j)], x_next)))
            for j, p in enumerate(self.sys.chain.P[i])
            if p > 0
        ]

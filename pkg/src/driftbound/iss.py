"""Disturbed switched systems and the input-to-state stability check in L1.

The disturbed system is X_{t+1} = f_{mode_t}(X_t, w_t) with a *deterministic*
bounded disturbance sequence (not modeled as a random process; adversarial
presets such as bang-bang at +/- w_max are provided).  Under per-map
contraction factors lambda_ij valid wherever ||x|| > rho(||w||) and the
condition mu * max_i sum_j p_ij lambda_ji < 1, the expected Lyapunov value
obeys the envelope

    E[V_{mode_t}(X_t)] <= alpha2(||x0||) e^{-alpha t}
                          + beta / (1 - e^{-alpha}) + delta,

with beta and delta computed over the compact set K = {||x|| <=
sup_s rho(||w_s||)} through the certificate machinery on the (mode, state)
product space.  The gain constant beta/(1-e^{-alpha}) + delta is reported
as the concrete computed number rather than fitted to a class-K-infinity
form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _rng
from .certificates import BetaResult, CallablePhi, compute_beta
from .classk import ClassKFunction
from .errors import KernelError, SimulationError
from .hybrid import BallRegion
from .switched import (
    ConditionResult,
    SwitchedBatch,
    SwitchingChainSpec,
    check_S2,
    simulate_modes,
)


class DisturbedMapSpec:
    """One subsystem map f: R^d x R^m -> R^d with f(0, 0) = 0."""

    def apply_batch(self, X: np.ndarray, w: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def dim(self) -> int:
        raise NotImplementedError


class ScalarAffineDisturbedMap(DisturbedMapSpec):
    """f(x, w) = a x + w on R^1."""

    family = "scalar_affine"

    def __init__(self, a: float):
        self.a = float(a)

    def apply_batch(self, X, w):
        return self.a * X + w

    @property
    def dim(self) -> int:
        return 1


class DisturbanceSpec:
    """Deterministic disturbance sequence with a declared bound w_max.

    Kinds: ``constant`` (w_t = value), ``sinusoid``, ``bang_bang``
    (+w_max / -w_max alternating with the given period), ``table``.
    """

    def __init__(self, kind: str, w_max: float, dim: int = 1, **params):
        if w_max < 0:
            raise KernelError(f"w_max must be >= 0, got {w_max}")
        self.kind = kind
        self.w_max = float(w_max)
        self.dim = dim
        self.params = params
        if kind not in ("constant", "sinusoid", "bang_bang", "table"):
            raise KernelError(f"unknown disturbance kind {kind!r}")

    def sequence(self, T: int) -> np.ndarray:
        t = np.arange(T, dtype=np.float64)
        if self.kind == "constant":
            value = np.asarray(self.params.get("value", self.w_max), dtype=np.float64)
            w = np.tile(np.atleast_1d(value), (T, 1))
        elif self.kind == "sinusoid":
            amp = self.params.get("amplitude", self.w_max)
            period = self.params["period"]
            w = (amp * np.sin(2.0 * math.pi * t / period))[:, None]
        elif self.kind == "bang_bang":
            period = self.params.get("period", 2)
            sign = np.where((t // max(period // 2, 1)) % 2 == 0, 1.0, -1.0)
            w = (self.w_max * sign)[:, None]
        else:
            w = np.asarray(self.params["values"], dtype=np.float64)
            if w.ndim == 1:
                w = w[:, None]
            if w.shape[0] < T:
                raise KernelError(
                    f"disturbance table has {w.shape[0]} entries, horizon needs {T}"
                )
            w = w[:T]
        return w

    def validate_bound(self, T: int) -> None:
        w = self.sequence(T)
        norms = np.linalg.norm(w, axis=1)
        if (norms > self.w_max + 1e-12).any():
            t = int(np.argmax(norms > self.w_max + 1e-12))
            raise KernelError(
                f"disturbance exceeds its declared bound at t={t}: "
                f"||w_t|| = {norms[t]!r} > w_max = {self.w_max!r}"
            )


@dataclass
class DisturbedSystemSpec:
    """Maps with disturbance input, the mode chain, and the gain data."""

    maps: list
    chain: SwitchingChainSpec
    disturbance: DisturbanceSpec
    rho: ClassKFunction
    Lambda: np.ndarray
    mu: float
    weights: np.ndarray | None = None  # V_i(x) = weights[i] * ||x||
    alpha1: ClassKFunction | None = None
    alpha2: ClassKFunction | None = None

    def __post_init__(self):
        if len(self.maps) != self.chain.n_modes:
            raise KernelError(
                f"{len(self.maps)} maps for a {self.chain.n_modes}-mode chain"
            )
        dims = {m.dim for m in self.maps}
        if len(dims) != 1:
            raise KernelError(f"maps disagree on dimension: {dims}")
        self.dim = dims.pop()
        if self.weights is None:
            self.weights = np.ones(self.chain.n_modes)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.alpha1 is None:
            self.alpha1 = ClassKFunction.linear(float(self.weights.min()))
        if self.alpha2 is None:
            self.alpha2 = ClassKFunction.linear(float(self.weights.max()))
        if not self.rho.unbounded:
            raise KernelError("rho must be class-K-infinity")
        zero = np.zeros((1, self.dim))
        for i, f in enumerate(self.maps):
            resid = float(np.abs(f.apply_batch(zero, np.zeros((1, self.dim)))).max())
            if resid > 1e-10:
                raise KernelError(f"map {i} violates f(0, 0) = 0 (residual {resid:g})")

    def condition(self) -> ConditionResult:
        return check_S2(self.Lambda, self.mu, self.chain)


def simulate_disturbed(
    sys: DisturbedSystemSpec, x0, T: int, n: int, seed: int,
    disturbance: DisturbanceSpec | None = None,
) -> SwitchedBatch:
    """Simulate the disturbed system; the mode draws consume the same stream
    as the undisturbed simulator, so w = 0 reproduces it exactly."""
    dist = sys.disturbance if disturbance is None else disturbance
    dist.validate_bound(T)
    w = dist.sequence(T)
    seed = _rng.check_seed(seed)
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.shape != (sys.dim,):
        raise KernelError(f"x0 shape {x0.shape} does not match dimension {sys.dim}")
    modes = simulate_modes(sys.chain, T, n, seed)
    states = np.empty((n, T + 1, sys.dim), dtype=np.float64)
    states[:, 0, :] = x0
    for t in range(T):
        nxt = np.empty((n, sys.dim))
        for i, f in enumerate(sys.maps):
            mask = modes[:, t] == i
            if mask.any():
                nxt[mask] = f.apply_batch(states[mask, t, :], w[t][None, :])
        states[:, t + 1, :] = nxt
    if not np.isfinite(states).all():
        raise SimulationError("state overflow while simulating the disturbed system")
    changes = modes[:, 1:] != modes[:, :-1]
    nswitch = np.zeros((n, T + 1), dtype=np.int64)
    nswitch[:, 1:] = np.cumsum(changes, axis=1)
    return SwitchedBatch(
        seed=seed, states=states, modes=modes, nswitch=nswitch, disturbance=w
    )


# ---------------------------------------------------------------------------
# the ISS envelope


@dataclass
class IssEnvelope:
    alpha_star: float
    radius: float  # K = {||x|| <= radius}
    beta: BetaResult
    delta: float
    gain_constant: float  # beta/(1 - e^{-alpha}) + delta
    alpha2_x0: float
    condition: ConditionResult

    def at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        return self.alpha2_x0 * np.exp(-self.alpha_star * t) + self.gain_constant


def iss_bound(
    sys: DisturbedSystemSpec,
    x0,
    alpha_star: float | None = None,
    grid_points: int = 201,
) -> IssEnvelope:
    """Per-time envelope alpha2(||x0||) e^{-alpha t} + beta/(1-e^{-alpha}) + delta.

    Requires the S2-type condition; beta and delta are evaluated over the
    compact set K = {||x|| <= rho(w_max)} on a deterministic grid over
    (mode, state, extreme disturbance) candidates.  The grid stands in for
    the continuous suprema as disclosed evidence, not proof.
    """
    cond = sys.condition()
    if not cond.ok:
        raise KernelError(
            f"ISS condition fails: mu * max_i sum_j p_ij lambda_ji = "
            f"{cond.value!r} >= 1; no envelope exists"
        )
    if alpha_star is None:
        alpha_star = cond.alpha_star

    radius = float(sys.rho(sys.disturbance.w_max))
    x0 = np.asarray(x0, dtype=np.float64)
    alpha2_x0 = float(sys.alpha2(np.linalg.norm(x0)))

    if radius == 0.0:
        xs = np.zeros((1, sys.dim))
    elif sys.dim == 1:
        xs = np.linspace(-radius, radius, grid_points)[:, None]
    else:
        n_r = max(int(round(grid_points ** 0.5)), 2)
        radii = np.linspace(0.0, radius, n_r)
        rng = np.random.default_rng(11)
        dirs = rng.standard_normal((n_r, sys.dim))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        xs = (radii[:, None, None] * dirs[None, :, :]).reshape(-1, sys.dim)

    delta = float((sys.weights.max() * np.linalg.norm(xs, axis=1)).max())

    w_ext = [np.full(sys.dim, s * sys.disturbance.w_max) for s in (-1.0, 0.0, 1.0)]
    region = BallRegion(radius=radius, center=np.zeros(sys.dim))

    def phi_fn(t, z):
        # z = [mode, x...]; V_mode(x) discounted as e^{alpha t} V
        i = int(z[0])
        return math.exp(alpha_star * t) * sys.weights[i] * np.linalg.norm(z[1:])

    class _JointBall:
        def contains(self, z):
            return region.contains(np.asarray(z)[1:])

    candidates = []
    for i in range(sys.chain.n_modes):
        for x in xs:
            for w in w_ext:
                x_next = sys.maps[i].apply_batch(x[None, :], w[None, :])[0]
                law = [
                    (float(p), np.concatenate(([float(j)], x_next)))
                    for j, p in enumerate(sys.chain.P[i])
                    if p > 0
                ]
                candidates.append(((i, tuple(x), tuple(w)), law))
    beta = compute_beta(
        None, CallablePhi(phi_fn), _JointBall(), mode="candidates",
        candidates=candidates,
    )
    gain = beta.value / (1.0 - math.exp(-alpha_star)) + delta
    return IssEnvelope(
        alpha_star=float(alpha_star),
        radius=radius,
        beta=beta,
        delta=delta,
        gain_constant=gain,
        alpha2_x0=alpha2_x0,
        condition=cond,
    )


@dataclass
class IssReport:
    ok: bool
    envelope: IssEnvelope
    mean_alpha1: np.ndarray
    se_alpha1: np.ndarray
    envelope_values: np.ndarray
    worst_margin_se: float
    batch: SwitchedBatch


def iss_check(
    sys: DisturbedSystemSpec, x0, T: int, n: int, seed: int,
    envelope: IssEnvelope | None = None,
) -> IssReport:
    """Empirical ISS-in-L1 check: mean alpha1(||X_t||) <= envelope(t) + 3 SE
    at every t <= T.  The declared disturbance bound is validated before
    simulation; violating it flags the precondition instead of running."""
    if envelope is None:
        envelope = iss_bound(sys, x0)
    batch = simulate_disturbed(sys, x0, T, n, seed)
    norms = batch.norms()
    a1 = np.asarray(sys.alpha1(norms.ravel())).reshape(norms.shape)
    mean = a1.mean(axis=0)
    se = a1.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(T + 1)
    env = envelope.at(np.arange(T + 1))
    ok = bool((mean <= env + 3.0 * se + 1e-12).all())
    with np.errstate(divide="ignore", invalid="ignore"):
        margins = np.where(se > 0, (env - mean) / se,
                           np.where(mean <= env, np.inf, -np.inf))
    return IssReport(
        ok=ok,
        envelope=envelope,
        mean_alpha1=mean,
        se_alpha1=se,
        envelope_values=env,
        worst_margin_se=float(margins.min()),
        batch=batch,
    )

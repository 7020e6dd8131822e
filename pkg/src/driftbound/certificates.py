"""Supermartingale certificates and the uniform L1 bound.

A certificate is the quadruple (phi, V, theta, K): a nonnegative
time-state function phi dominating V(x)/theta(t), a nonnegative state
functional V, a summable positive weight sequence theta, and the region K.
From it the toolkit computes the four constants

    C = sum_t theta(t),   gamma = sup_t theta(t),
    delta = sup_{x in K} V(x),
    beta  = sup_{x0 in K} E[phi(0, X_1) 1{X_1 not in K} | X_0 = x0],

and the uniform bound  sup_t E[V(X_t)] <= C*beta + delta + gamma*phi(0,x0).
The supermartingale condition is verified exactly on finite state spaces
(stopped-process semantics: mass entering K contributes phi once and is then
frozen) or statistically on simulated batches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import zeta as _zeta
from scipy.stats import norm as _norm

from .chains import (
    FiniteKernel,
    FiniteKernelFamily,
    KernelSpec,
    StatSummary,
    TrajectoryBatch,
    estimate_functional,
)
from .errors import CertificateError
from .hybrid import RegionSpec, batch_membership, first_hit_times
from . import _rng

EXACT_SLACK_TOL = 1e-12


# ---------------------------------------------------------------------------
# theta


class ThetaSpec:
    """Positive summable weight sequence theta(t).

    Named families: ``exponential`` (e^{-alpha t}, alpha > 0), ``power``
    ((t+1)^{-p}, p > 1), and ``table`` (explicit finite table continued by a
    certified geometric tail).  Summability is validated at construction;
    a non-summable request (alpha <= 0, p <= 1, tail ratio >= 1) is rejected
    with a "not summable" error.
    """

    def __init__(self, form: str, **params):
        self.form = form
        self.params = params
        if form == "exponential":
            alpha = params["alpha"]
            if not alpha > 0:
                raise CertificateError(
                    f"theta not summable: exponential form needs alpha > 0, got {alpha}"
                )
        elif form == "power":
            p = params["p"]
            if not p > 1:
                raise CertificateError(
                    f"theta not summable: power form needs p > 1, got {p}"
                )
        elif form == "table":
            values = np.asarray(params["values"], dtype=np.float64)
            ratio = params["tail_ratio"]
            if len(values) == 0 or (values <= 0).any():
                raise CertificateError("theta table must be nonempty and positive")
            if not 0 < ratio < 1:
                raise CertificateError(
                    f"theta not summable: tail ratio must be in (0, 1), got {ratio}"
                )
            self.params = {"values": values, "tail_ratio": float(ratio)}
        else:
            raise CertificateError(f"unknown theta form {form!r}")

    @classmethod
    def exponential(cls, alpha: float) -> "ThetaSpec":
        return cls("exponential", alpha=float(alpha))

    @classmethod
    def power(cls, p: float) -> "ThetaSpec":
        return cls("power", p=float(p))

    @classmethod
    def table(cls, values, tail_ratio: float) -> "ThetaSpec":
        return cls("table", values=values, tail_ratio=tail_ratio)

    def __call__(self, t) -> np.ndarray | float:
        t = np.asarray(t, dtype=np.float64)
        if self.form == "exponential":
            out = np.exp(-self.params["alpha"] * t)
        elif self.form == "power":
            out = (t + 1.0) ** (-self.params["p"])
        else:
            values = self.params["values"]
            ratio = self.params["tail_ratio"]
            m = len(values)
            ti = t.astype(np.int64)
            inside = np.clip(ti, 0, m - 1)
            out = np.where(
                ti < m,
                values[inside],
                values[m - 1] * ratio ** np.maximum(ti - m + 1, 0),
            )
        return float(out) if out.ndim == 0 else out

    def series_sum(self) -> float:
        if self.form == "exponential":
            return 1.0 / (1.0 - math.exp(-self.params["alpha"]))
        if self.form == "power":
            return float(_zeta(self.params["p"]))
        values = self.params["values"]
        ratio = self.params["tail_ratio"]
        return float(values.sum() + values[-1] * ratio / (1.0 - ratio))

    def supremum(self) -> float:
        if self.form in ("exponential", "power"):
            return 1.0  # theta(0), both families decrease
        return float(self.params["values"].max())


def compute_C_gamma(
    theta: ThetaSpec, truncation: int = 10_000, tail_tol: float = 1e-9
) -> tuple[float, float]:
    """C = sum theta(t) and gamma = sup theta(t).

    Named families use their closed forms; the closed form is cross-checked
    against a partial sum plus certified tail so a broken evaluator cannot
    slip through.  Non-summable specs are rejected at construction.
    """
    C = theta.series_sum()
    gamma = theta.supremum()
    partial = float(np.sum(theta(np.arange(truncation))))
    tail_hi = C - partial
    if tail_hi < -tail_tol or partial > C + tail_tol:
        raise CertificateError(
            f"theta series inconsistent: partial sum {partial!r} vs closed form {C!r}"
        )
    return C, gamma


# ---------------------------------------------------------------------------
# phi forms and the certificate


class PhiForm:
    """Time-state evaluator phi(t, x) >= 0."""

    kind = "abstract"

    def value(self, t: float, x) -> float:
        raise NotImplementedError

    def values(self, t: float, xs: Sequence) -> np.ndarray:
        return np.array([self.value(t, x) for x in xs], dtype=np.float64)


class ExponentialPhi(PhiForm):
    """phi(t, x) = e^{alpha t} V(x); the paired theta is e^{-alpha t}, so
    phi(t, x) * theta(t) = V(x) exactly."""

    kind = "exponential"

    def __init__(self, alpha: float, V: Callable):
        if not alpha > 0:
            raise CertificateError(f"exponential phi needs alpha > 0, got {alpha}")
        self.alpha = float(alpha)
        self.V = V

    def value(self, t, x) -> float:
        return math.exp(self.alpha * t) * float(self.V(x))

    def values(self, t, xs) -> np.ndarray:
        v = np.array([float(self.V(x)) for x in xs], dtype=np.float64)
        return math.exp(self.alpha * t) * v


class TablePhi(PhiForm):
    """phi from a finite-horizon value table, clamped at the table horizon.

    Beyond the horizon N the last row is reused; the envelope property is
    then only guaranteed for t <= N (truncation is reported, not hidden).
    """

    kind = "table"

    def __init__(self, times: int, states: Sequence, table: np.ndarray):
        self.horizon = int(times)
        self.states = list(states)
        self.index = {s: i for i, s in enumerate(self.states)}
        self.table = np.asarray(table, dtype=np.float64)
        if self.table.shape != (self.horizon + 1, len(self.states)):
            raise CertificateError(
                f"table shape {self.table.shape} does not match "
                f"(horizon+1, n_states) = {(self.horizon + 1, len(self.states))}"
            )

    def value(self, t, x) -> float:
        n = min(int(t), self.horizon)
        try:
            return float(self.table[n, self.index[x]])
        except KeyError:
            raise CertificateError(f"state {x!r} not covered by the phi table")

    def values(self, t, xs) -> np.ndarray:
        n = min(int(t), self.horizon)
        return np.array([self.table[n, self.index[x]] for x in xs])


class CallablePhi(PhiForm):
    """phi given directly as a callable (t, x) -> float."""

    kind = "callable"

    def __init__(self, fn: Callable):
        self.fn = fn

    def value(self, t, x) -> float:
        return float(self.fn(t, x))


@dataclass
class CertificateSpec:
    """The (phi, V, theta, K) certificate."""

    phi: PhiForm
    V: Callable
    theta: ThetaSpec
    K: RegionSpec

    @classmethod
    def exponential(cls, alpha: float, V: Callable, K: RegionSpec) -> "CertificateSpec":
        return cls(ExponentialPhi(alpha, V), V, ThetaSpec.exponential(alpha), K)

    def envelope_check(self, times: Sequence[int], states: Sequence) -> float:
        """Worst violation of phi(t,x) >= V(x)/theta(t) on a grid (<= 0 passes)."""
        worst = -np.inf
        for t in times:
            th = float(self.theta(t))
            for x in states:
                gap = float(self.V(x)) / th - self.phi.value(t, x)
                worst = max(worst, gap)
        return worst


@dataclass
class CertificateConstants:
    """The four bound ingredients with provenance per entry."""

    C: float
    gamma: float
    delta: float
    beta: float
    beta_se: float = 0.0
    provenance: dict = field(default_factory=dict)

    def validate(self) -> None:
        vals = [self.C, self.gamma, self.delta, self.beta]
        if any(not np.isfinite(v) or v < 0 for v in vals):
            raise CertificateError(f"constants must be finite and nonnegative: {self}")
        if self.C < self.gamma:
            raise CertificateError(f"C = {self.C} cannot be below gamma = {self.gamma}")


# ---------------------------------------------------------------------------
# delta and beta


@dataclass
class DeltaResult:
    value: float
    provenance: str


def compute_delta(
    V: Callable,
    K: RegionSpec,
    members: Sequence | None = None,
    search_budget: int = 2001,
    lipschitz: float | None = None,
) -> DeltaResult:
    """sup_{x in K} V(x).

    Exact max for finite regions (or when ``members`` enumerates K).  For a
    ball the max is taken over a deterministic grid that includes the
    boundary; a supplied Lipschitz constant adds the grid-gap slack,
    otherwise the resolution is disclosed in the provenance string.
    """
    from .hybrid import BallRegion, FiniteSetRegion, PredicateTableRegion

    if members is None:
        if isinstance(K, FiniteSetRegion):
            members = sorted(K.members, key=repr)
        elif isinstance(K, PredicateTableRegion):
            members = [s for s, inside in sorted(K.table.items(), key=lambda kv: repr(kv[0])) if inside]
    if members is not None:
        members = list(members)
        if not members:
            raise CertificateError("delta undefined: K is empty")
        vals = np.array([float(V(x)) for x in members])
        if not np.isfinite(vals).all():
            bad = members[int(np.argmax(~np.isfinite(vals)))]
            raise CertificateError(f"V is not finite on K at state {bad!r}")
        return DeltaResult(float(vals.max()), "exact")

    if isinstance(K, BallRegion):
        d = K.center.shape[0]
        if d == 1:
            lo, hi = K.center[0] - K.radius, K.center[0] + K.radius
            grid = np.linspace(lo, hi, search_budget)
            pts = grid[:, None]
            mesh = (hi - lo) / max(search_budget - 1, 1)
        else:
            n_r = max(int(round(search_budget ** 0.5)), 2)
            radii = np.linspace(0.0, K.radius, n_r)
            rng = np.random.default_rng(0)
            dirs = rng.standard_normal((n_r, d))
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
            pts = (radii[:, None, None] * dirs[None, :, :]).reshape(-1, d) + K.center
            mesh = K.radius / max(n_r - 1, 1)
        vals = np.array([float(V(p if d > 1 else p[0])) for p in pts])
        if not np.isfinite(vals).all():
            raise CertificateError("V is not finite somewhere on the K grid")
        best = float(vals.max())
        if lipschitz is not None:
            return DeltaResult(best + lipschitz * mesh / 2.0, f"grid+lipschitz(mesh={mesh:.2e})")
        return DeltaResult(best, f"grid(points={len(pts)}, mesh={mesh:.2e})")

    raise CertificateError(
        "delta over this region kind needs an explicit member enumeration"
    )


@dataclass
class BetaResult:
    value: float
    se: float
    provenance: str
    per_start: dict = field(default_factory=dict)


def compute_beta(
    kernel_from_K: KernelSpec | None,
    phi: PhiForm,
    K: RegionSpec,
    mode: str = "exact",
    n: int = 100_000,
    seed: int = 0,
    candidates: Sequence[tuple] | None = None,
) -> BetaResult:
    """beta = sup over starts in K of E[phi(0, X_1) 1{X_1 not in K}].

    Modes:
      - ``exact``: finite kernel; the one-step sum is evaluated for every
        state of the kernel inside K.
      - ``mc``: Monte Carlo per start (n draws each); reports the max and
        the standard error attached to the argmax.
      - ``candidates``: explicit one-step laws [(x0, [(prob, y), ...]), ...]
        for continuous K (grid evidence; the restriction is disclosed).
    """
    if mode == "candidates" or candidates is not None:
        if not candidates:
            raise CertificateError("candidate mode needs a nonempty candidate list")
        per = {}
        for x0, law in candidates:
            total = 0.0
            for prob, y in law:
                if not K.contains(y):
                    total += prob * phi.value(0, y)
            per[repr(x0)] = total
        best = max(per.values())
        return BetaResult(best, 0.0, f"grid(candidates={len(per)})", per)

    if not isinstance(kernel_from_K, (FiniteKernel, FiniteKernelFamily)):
        raise CertificateError(
            "exact/mc beta needs a finite-state kernel; supply candidates= "
            "for continuous regions"
        )
    labels = kernel_from_K.states
    inside = [s for s in labels if K.contains(s)]
    if not inside:
        raise CertificateError("beta undefined: K contains no kernel state")
    P = kernel_from_K.matrix_at(0)
    outside_mask = ~K.member_mask(labels)
    phi0 = phi.values(0, labels)
    if not np.isfinite(phi0[outside_mask]).all():
        raise CertificateError("phi(0, y) is infinite at a reachable state outside K")

    if mode == "exact":
        per = {}
        for s in inside:
            i = kernel_from_K.state_index(s)
            per[repr(s)] = float(P[i] @ (phi0 * outside_mask))
        best = max(per.values())
        return BetaResult(best, 0.0, "exact", per)

    if mode == "mc":
        per = {}
        ses = {}
        for k, s in enumerate(inside):
            rng = _rng.child_stream(seed, _rng.DOMAIN_BETA_MC, k)
            i = kernel_from_K.state_index(s)
            cum = np.cumsum(P[i])
            cum[-1] = 1.0
            draws = (cum[None, :] <= rng.random(n)[:, None]).sum(axis=1)
            vals = phi0[draws] * outside_mask[draws]
            per[repr(s)] = float(vals.mean())
            ses[repr(s)] = float(vals.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        arg = max(per, key=per.get)
        return BetaResult(per[arg], ses[arg], f"monte_carlo(n={n})", per)

    raise CertificateError(f"unknown beta mode {mode!r}")


def theorem_bound(constants: CertificateConstants, phi0: float) -> float:
    """The uniform L1 bound C*beta + delta + gamma*phi(0, x0)."""
    constants.validate()
    if not np.isfinite(phi0) or phi0 < 0:
        raise CertificateError(f"phi(0, x0) must be finite and >= 0, got {phi0}")
    return constants.C * constants.beta + constants.delta + constants.gamma * phi0


# ---------------------------------------------------------------------------
# exact supermartingale verification


@dataclass
class ExactReport:
    ok: bool
    min_slack: float
    worst_t: int
    worst_state: object
    horizon: int
    n_checked: int
    violations: list = field(default_factory=list)


def verify_supermartingale_exact(
    Z_kernel: KernelSpec,
    cert: CertificateSpec,
    horizon: int,
    slack_tol: float = EXACT_SLACK_TOL,
    max_violations: int = 50,
) -> ExactReport:
    """Check sum_y P_t(x, y) phi(t+1, y) <= phi(t, x) for every t < horizon
    and every state x outside K (finite state spaces only).

    Mass landing inside K contributes phi(t+1, .) once and is then frozen,
    which is exactly the stopped-process semantics: the recursion is only
    applied at states outside K.
    """
    if not isinstance(Z_kernel, (FiniteKernel, FiniteKernelFamily)):
        raise CertificateError("exact verification needs a finite state space")
    labels = Z_kernel.states
    outside = np.nonzero(~cert.K.member_mask(labels))[0]
    if len(outside) == 0:
        return ExactReport(True, np.inf, -1, None, horizon, 0)

    min_slack = np.inf
    worst = (-1, None)
    violations = []
    phi_next = cert.phi.values(0, labels)
    for t in range(horizon):
        phi_now = phi_next
        phi_next = cert.phi.values(t + 1, labels)
        P = Z_kernel.matrix_at(t)
        lhs = P[outside] @ phi_next
        slack = phi_now[outside] - lhs
        i = int(np.argmin(slack))
        if slack[i] < min_slack:
            min_slack = float(slack[i])
            worst = (t, labels[outside[i]])
        for k in np.nonzero(slack < -slack_tol)[0]:
            if len(violations) < max_violations:
                violations.append((t, labels[outside[k]], float(slack[k])))
    ok = min_slack >= -slack_tol
    return ExactReport(
        ok=ok,
        min_slack=min_slack,
        worst_t=worst[0],
        worst_state=worst[1],
        horizon=horizon,
        n_checked=horizon * len(outside),
        violations=violations,
    )


# ---------------------------------------------------------------------------
# statistical supermartingale verification


@dataclass
class IncrementTestReport:
    ok: bool
    confidence: float
    rejected_times: list
    skipped_times: list
    worst_z: float
    worst_t: int
    alive_counts: np.ndarray


def one_sided_increment_test(
    phi_stopped: np.ndarray,
    alive: np.ndarray,
    confidence: float = 0.99,
    min_alive: int = 25,
) -> IncrementTestReport:
    """One-sided z-test that stopped-process increments have mean <= 0.

    ``phi_stopped`` holds phi(t ^ tau, X_{t ^ tau}) per path and time;
    ``alive[j, t]`` marks paths with tau > t (times with fewer than
    ``min_alive`` survivors are skipped and reported).  This is a
    statistical surrogate for the supermartingale property, not a proof.
    """
    n, tp1 = phi_stopped.shape
    z_crit = float(_norm.ppf(confidence))
    rejected, skipped = [], []
    worst_z, worst_t = -np.inf, -1
    alive_counts = alive.sum(axis=0)
    for t in range(tp1 - 1):
        if alive_counts[t] < min_alive:
            skipped.append(t)
            continue
        inc = phi_stopped[:, t + 1] - phi_stopped[:, t]
        mean = float(inc.mean())
        se = float(inc.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        if se == 0.0:
            z = np.inf if mean > EXACT_SLACK_TOL else -np.inf
        else:
            z = mean / se
        if z > worst_z:
            worst_z, worst_t = z, t
        if z > z_crit:
            rejected.append((t, mean, se))
    return IncrementTestReport(
        ok=not rejected,
        confidence=confidence,
        rejected_times=rejected,
        skipped_times=skipped,
        worst_z=worst_z,
        worst_t=worst_t,
        alive_counts=alive_counts,
    )


@dataclass
class McReport:
    increment_test: IncrementTestReport
    lemma_ok: bool
    lemma_worst_margin: float
    tau_finite_fraction: float

    @property
    def ok(self) -> bool:
        return self.increment_test.ok and self.lemma_ok


def verify_supermartingale_mc(
    batch: TrajectoryBatch,
    cert: CertificateSpec,
    confidence: float = 0.99,
    min_alive: int = 25,
) -> McReport:
    """Statistical check of the stopped supermartingale property on a batch.

    Also checks the optional-sampling consequence
    E[V(X_s) 1{tau > s}] <= phi(0, x0) * theta(s) within 3 SE at every s.
    All paths must share the start state, which must lie outside K.
    """
    states0 = batch.states[:, 0]
    if batch.state_kind == "vector":
        if not (states0 == states0[0]).all():
            raise CertificateError("batch paths must share one start state")
    elif len(np.unique(states0)) != 1:
        raise CertificateError("batch paths must share one start state")

    member = batch_membership(batch, cert.K)
    if member[:, 0].any():
        raise CertificateError("MC verification requires x0 outside K")
    tau = first_hit_times(batch, cert.K)
    n, tp1 = member.shape
    times = np.arange(tp1)

    phi_t = _phi_matrix(batch, cert)
    stop_idx = np.minimum(times[None, :], np.where(np.isfinite(tau), tau, tp1)[:, None]).astype(np.int64)
    rows = np.arange(n)[:, None]
    phi_stopped = phi_t[rows, stop_idx]
    alive = times[None, :] < np.where(np.isfinite(tau), tau, np.inf)[:, None]

    inc_report = one_sided_increment_test(phi_stopped, alive, confidence, min_alive)

    v_vals = _v_matrix(batch, cert.V)
    if batch.state_kind == "finite":
        x0 = batch.labels[batch.states[0, 0]]
    else:
        x0 = batch.states[0, 0]
    phi00 = cert.phi.value(0, x0)
    theta_s = np.asarray(cert.theta(times), dtype=np.float64)
    masked = v_vals * alive
    mean_s = masked.mean(axis=0)
    se_s = masked.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(tp1)
    margin = phi00 * theta_s + 3.0 * se_s - mean_s
    lemma_ok = bool((margin >= -EXACT_SLACK_TOL).all())
    return McReport(
        increment_test=inc_report,
        lemma_ok=lemma_ok,
        lemma_worst_margin=float(margin.min()),
        tau_finite_fraction=float(np.isfinite(tau).mean()),
    )


def _phi_matrix(batch: TrajectoryBatch, cert: CertificateSpec) -> np.ndarray:
    n, tp1 = batch.states.shape[:2]
    out = np.empty((n, tp1), dtype=np.float64)
    if batch.state_kind == "finite":
        for t in range(tp1):
            col = cert.phi.values(t, batch.labels)
            out[:, t] = col[batch.states[:, t]]
        return out
    for t in range(tp1):
        xs = batch.states[:, t]
        out[:, t] = [cert.phi.value(t, x) for x in xs]
    return out


def _v_matrix(batch: TrajectoryBatch, V: Callable) -> np.ndarray:
    from .chains import _apply_functional

    return _apply_functional(batch, V)


# ---------------------------------------------------------------------------
# empirical bound check


@dataclass
class BoundReport:
    ok: bool
    bound: float
    sup_mean: float
    sup_time: int
    margin_se: float
    summary: StatSummary


def empirical_bound_check(
    batch: TrajectoryBatch, V: Callable, bound: float
) -> BoundReport:
    """Per-time mean of V(X_t) against the theorem bound.

    Flags failure if any mean exceeds bound + 3 SE; the reported margin is
    the minimum over t of (bound - mean_t)/SE_t (inf where SE_t = 0 and the
    mean is below the bound).
    """
    summary = estimate_functional(batch, V)
    mean, se = summary.mean, summary.se
    over = mean > bound + 3.0 * se
    with np.errstate(divide="ignore", invalid="ignore"):
        margins = np.where(se > 0, (bound - mean) / se,
                           np.where(mean <= bound, np.inf, -np.inf))
    sup_t = int(np.argmax(mean))
    return BoundReport(
        ok=not bool(over.any()),
        bound=float(bound),
        sup_mean=float(mean[sup_t]),
        sup_time=sup_t,
        margin_se=float(margins.min()),
        summary=summary,
    )

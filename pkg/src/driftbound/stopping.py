"""Certificate synthesis by finite-horizon backward induction.

The tightest certificate for a chain, a state functional V, a weight
sequence theta, and a region K is the optimal-stopping value of the reward
h(t, x) = V(x)/theta(t) outside K (0 inside K, where the reward process is
absorbed).  Backward induction over a finite horizon N with terminal
condition phi(N, .) = h(N, .) produces the full value table; the essential
supremum over stopping rules reduces to plain maximization on finite trees.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .certificates import CertificateSpec, TablePhi, ThetaSpec
from .chains import FiniteKernel, FiniteKernelFamily, KernelSpec
from .errors import CertificateError
from .hybrid import RegionSpec


@dataclass
class RewardSpec:
    """Reward h(t, x) = V(x)/theta(t) outside K, 0 inside K."""

    V: callable
    theta: ThetaSpec
    K: RegionSpec

    def h(self, t: int, x) -> float:
        if self.K.contains(x):
            return 0.0
        return float(self.V(x)) / float(self.theta(t))

    def h_values(self, t: int, labels, member: np.ndarray) -> np.ndarray:
        v = np.array([float(self.V(x)) for x in labels])
        # overflow here surfaces as non-finite entries, which the caller
        # reports as certificate-infeasible
        with np.errstate(divide="ignore", over="ignore"):
            out = v / float(self.theta(t))
        out[member] = 0.0
        return out


@dataclass
class ValueTable:
    """Value function phi(n, x) for 0 <= n <= N over a finite state list."""

    horizon: int
    states: list
    phi: np.ndarray  # (N+1, S)

    def value(self, n: int, x) -> float:
        return float(self.phi[n, self.states.index(x)])

    def envelope_gap(self, reward: RewardSpec) -> float:
        """max over the table of h(n,x) - phi(n,x); <= 0 means phi dominates."""
        member = reward.K.member_mask(self.states)
        worst = -np.inf
        for n in range(self.horizon + 1):
            gap = reward.h_values(n, self.states, member) - self.phi[n]
            worst = max(worst, float(gap.max()))
        return worst

    def one_step_gap(self, kernel: KernelSpec, region: RegionSpec) -> float:
        """max over n < N, x outside K of E[phi(n+1, .)] - phi(n, x)."""
        member = region.member_mask(self.states)
        outside = ~member
        worst = -np.inf
        for n in range(self.horizon):
            P = kernel.matrix_at(n)
            lhs = P[outside] @ self.phi[n + 1]
            gap = lhs - self.phi[n, outside]
            if gap.size:
                worst = max(worst, float(gap.max()))
        return worst


def value_iterate(kernel: KernelSpec, reward: RewardSpec, N: int) -> ValueTable:
    """Backward induction phi(n, x) = h(n, x) v E[phi(n+1, X')], with K
    absorbing at value 0 and terminal condition phi(N, .) = h(N, .).

    A non-finite reward (V(x)/theta(n) overflowing) marks the certificate
    synthesis infeasible and raises.
    """
    if not isinstance(kernel, (FiniteKernel, FiniteKernelFamily)):
        raise CertificateError("value iteration needs a finite state space")
    if N < 0:
        raise CertificateError(f"horizon must be >= 0, got {N}")
    labels = kernel.states
    member = reward.K.member_mask(labels)
    S = len(labels)
    phi = np.zeros((N + 1, S), dtype=np.float64)
    phi[N] = reward.h_values(N, labels, member)
    if not np.isfinite(phi[N]).all():
        raise CertificateError(
            "certificate-infeasible: reward V(x)/theta(N) overflowed at the horizon"
        )
    outside = ~member
    for n in range(N - 1, -1, -1):
        stop = reward.h_values(n, labels, member)
        if not np.isfinite(stop).all():
            raise CertificateError(
                f"certificate-infeasible: reward V(x)/theta({n}) overflowed"
            )
        cont = kernel.matrix_at(n) @ phi[n + 1]
        phi[n] = np.where(outside, np.maximum(stop, cont), 0.0)
    return ValueTable(horizon=N, states=list(labels), phi=phi)


def table_to_certificate(table: ValueTable, reward: RewardSpec) -> CertificateSpec:
    """Wrap a value table as a certificate.

    phi is looked up with the time clamped at the table horizon N, so the
    certificate's envelope and supermartingale properties are guaranteed for
    t <= N only (finite-horizon truncation: callers should verify with
    horizon <= N).
    """
    if not np.isfinite(table.phi).all():
        raise CertificateError("value table has non-finite entries")
    phi = TablePhi(table.horizon, table.states, table.phi)
    return CertificateSpec(phi=phi, V=reward.V, theta=reward.theta, K=reward.K)


def truncation_gap(
    kernel: KernelSpec, reward: RewardSpec, N: int, extra: int = 5
) -> float:
    """sup_x (phi_{N+extra}(0, x) - phi_N(0, x)): the monotone-in-horizon
    increment users can inspect to judge truncation error."""
    short = value_iterate(kernel, reward, N)
    long = value_iterate(kernel, reward, N + extra)
    return float((long.phi[0] - short.phi[0]).max())


# ---------------------------------------------------------------------------
# independent oracles (exponential-cost; used by the test-suite and shipped
# scenario checks on small instances)


def tree_value(kernel: KernelSpec, reward: RewardSpec, N: int, x0,
               _n: int = 0, _budget: list | None = None) -> float:
    """Optimal stopping value by explicit recursion over the outcome tree.

    Walks every history without merging states, so it is exponential in N:
    only meaningful for tiny instances (the state-space recursion being
    checked collapses histories; this one deliberately does not).
    """
    if _budget is None:
        S = len(kernel.states)
        if S ** (N + 1) > 2_000_000:
            raise CertificateError(f"tree too large: {S}^{N + 1} histories")
        _budget = [0]
    if reward.K.contains(x0):
        return 0.0
    stop = reward.h(_n, x0)
    if _n == N:
        return stop
    P = kernel.matrix_at(_n)
    i = kernel.state_index(x0)
    cont = 0.0
    for j, y in enumerate(kernel.states):
        p = P[i, j]
        if p > 0.0:
            cont += p * tree_value(kernel, reward, N, y, _n + 1, _budget)
    return max(stop, cont)


def enumerate_rule_value(kernel: KernelSpec, reward: RewardSpec, N: int, x0,
                         max_nodes: int = 22) -> float:
    """Optimal stopping value by exhaustive enumeration of adapted rules.

    Builds the reachable history tree, enumerates every stop/continue
    assignment on its decision nodes (2^#nodes rules), evaluates each rule's
    expected reward by summing over histories, and returns the maximum.
    Exponential in the node count; instances with more than ``max_nodes``
    decision nodes are rejected.
    """
    nodes = []  # (time, state, prob_of_history, parent_index)
    children: dict[int, list[int]] = {}

    def build(t, x, prob, parent):
        idx = len(nodes)
        nodes.append((t, x, prob, parent))
        children[idx] = []
        if parent >= 0:
            children[parent].append(idx)
        if reward.K.contains(x) or t == N:
            return
        P = kernel.matrix_at(t)
        i = kernel.state_index(x)
        for j, y in enumerate(kernel.states):
            if P[i, j] > 0.0:
                build(t + 1, y, prob * P[i, j], idx)

    build(0, x0, 1.0, -1)
    decision = [
        k for k, (t, x, _, _) in enumerate(nodes)
        if t < N and not reward.K.contains(x)
    ]
    if len(decision) > max_nodes:
        raise CertificateError(
            f"{len(decision)} decision nodes exceed the enumeration cap {max_nodes}"
        )

    best = -np.inf
    for mask in range(1 << len(decision)):
        stop_at = {decision[b] for b in range(len(decision)) if mask >> b & 1}
        total = 0.0

        def walk(idx):
            nonlocal total
            t, x, prob, _ = nodes[idx]
            if reward.K.contains(x):
                return  # reward 0, absorbed
            if idx in stop_at or t == N or not children[idx]:
                total += prob * reward.h(t, x)
                return
            for c in children[idx]:
                walk(c)

        walk(0)
        best = max(best, total)
    return float(best)

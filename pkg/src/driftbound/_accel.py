"""Hot simulation kernels: numba ``@njit`` loops with pure-numpy twins.

Every public function here dispatches on the active backend.  The two
implementations of each kernel consume the same pre-drawn random blocks and
evaluate the same arithmetic expressions in the same order, so results are
bitwise identical across backends (asserted in the test suite).

Conventions:
  - ``U`` uniform blocks have shape (n_paths, n_steps), row = path.
  - finite-state draws use the exhaustive inverse CDF against a cumulative
    row whose last entry is pinned to 1.0, so a draw can never overflow the
    state range.
  - kernels never raise; they record per-path error times in an ``err``
    array (-1 = clean) and the caller turns those into exceptions.
"""

from __future__ import annotations

import numpy as np

from ._backend import NUMBA_AVAILABLE, active_backend

if NUMBA_AVAILABLE:
    from numba import njit
else:  # pragma: no cover - stripped installs only

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


def _use_jit() -> bool:
    return active_backend() == "numba" and NUMBA_AVAILABLE


# ---------------------------------------------------------------------------
# finite-state chains


@njit(cache=True)
def _chain_loop(cum, x0, U, states):
    n, T = U.shape
    S = cum.shape[1]
    for j in range(n):
        x = x0
        states[j, 0] = x
        for t in range(T):
            u = U[j, t]
            y = 0
            for s in range(S):
                if cum[x, s] <= u:
                    y += 1
                else:
                    break
            x = y
            states[j, t + 1] = x


def _chain_vec(cum, x0, U, states):
    n, T = U.shape
    x = np.full(n, x0, dtype=np.int64)
    states[:, 0] = x
    for t in range(T):
        x = (cum[x] <= U[:, t, None]).sum(axis=1)
        states[:, t + 1] = x


def chain_sim(cum: np.ndarray, x0: int, U: np.ndarray) -> np.ndarray:
    """Simulate a homogeneous finite-state chain; returns (n, T+1) indices."""
    states = np.empty((U.shape[0], U.shape[1] + 1), dtype=np.int64)
    if _use_jit():
        _chain_loop(cum, x0, U, states)
    else:
        _chain_vec(cum, x0, U, states)
    return states


@njit(cache=True)
def _chain_family_loop(cums, x0, U, states):
    n, T = U.shape
    S = cums.shape[2]
    for j in range(n):
        x = x0
        states[j, 0] = x
        for t in range(T):
            u = U[j, t]
            y = 0
            for s in range(S):
                if cums[t, x, s] <= u:
                    y += 1
                else:
                    break
            x = y
            states[j, t + 1] = x


def _chain_family_vec(cums, x0, U, states):
    n, T = U.shape
    x = np.full(n, x0, dtype=np.int64)
    states[:, 0] = x
    for t in range(T):
        x = (cums[t][x] <= U[:, t, None]).sum(axis=1)
        states[:, t + 1] = x


def chain_family_sim(cums: np.ndarray, x0: int, U: np.ndarray) -> np.ndarray:
    """Simulate a time-indexed finite-state chain (cums has shape (T, S, S))."""
    states = np.empty((U.shape[0], U.shape[1] + 1), dtype=np.int64)
    if _use_jit():
        _chain_family_loop(cums, x0, U, states)
    else:
        _chain_family_vec(cums, x0, U, states)
    return states


# ---------------------------------------------------------------------------
# hybrid two-regime chain


@njit(cache=True)
def _hybrid_loop(y_cum, z_cums, member, x0, U, states, err):
    n, T = U.shape
    S = y_cum.shape[1]
    H = z_cums.shape[0]
    for j in range(n):
        x = x0
        clock = 0
        states[j, 0] = x
        err[j] = -1
        for t in range(T):
            u = U[j, t]
            if member[x]:
                y = 0
                for s in range(S):
                    if y_cum[x, s] <= u:
                        y += 1
                    else:
                        break
            else:
                if clock >= H:
                    err[j] = t
                    for rest in range(t, T):
                        states[j, rest + 1] = x
                    break
                y = 0
                for s in range(S):
                    if z_cums[clock, x, s] <= u:
                        y += 1
                    else:
                        break
            if member[y]:
                clock = 0
            elif member[x]:
                clock = 0
            else:
                clock += 1
            x = y
            states[j, t + 1] = x


def _hybrid_vec(y_cum, z_cums, member, x0, U, states, err):
    n, T = U.shape
    H = z_cums.shape[0]
    x = np.full(n, x0, dtype=np.int64)
    clock = np.zeros(n, dtype=np.int64)
    frozen = np.zeros(n, dtype=bool)
    states[:, 0] = x
    err[:] = -1
    for t in range(T):
        inside = member[x]
        over = (~inside) & (clock >= H) & (~frozen)
        if over.any():
            err[over] = t
            frozen |= over
        live = ~frozen
        u = U[:, t]
        # rows for frozen paths stay > 1 so their (discarded) draw is in range
        rows = np.full((n, y_cum.shape[1]), 2.0)
        rows[inside] = y_cum[x[inside]]
        out = live & ~inside
        rows[out] = z_cums[clock[out], x[out]]
        nxt = x.copy()
        nxt[live] = (rows[live] <= u[live, None]).sum(axis=1)
        new_inside = member[nxt]
        clock = np.where(new_inside | inside, 0, clock + 1)
        x = np.where(live, nxt, x)
        states[:, t + 1] = x


def hybrid_sim(
    y_cum: np.ndarray,
    z_cums: np.ndarray,
    member: np.ndarray,
    x0: int,
    U: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Two-regime simulation: in-region steps use ``y_cum``, out-of-region
    steps use ``z_cums`` indexed by the local clock (0 on the step taken from
    the exit state).  Returns (states, err) with err[j] = first time the
    local clock exceeded the Z horizon, else -1."""
    n, T = U.shape
    states = np.empty((n, T + 1), dtype=np.int64)
    err = np.empty(n, dtype=np.int64)
    if _use_jit():
        _hybrid_loop(y_cum, z_cums, member, x0, U, states, err)
    else:
        _hybrid_vec(y_cum, z_cums, member, x0, U, states, err)
    return states, err


# ---------------------------------------------------------------------------
# biased integer walk


@njit(cache=True)
def _walk_loop(p_up, has_floor, floor, has_ceil, ceil, x0, U, states):
    n, T = U.shape
    for j in range(n):
        x = x0
        states[j, 0] = x
        for t in range(T):
            if U[j, t] < p_up:
                x = x + 1
                if has_ceil and x > ceil:
                    x = ceil
            else:
                x = x - 1
                if has_floor and x < floor:
                    x = floor
            states[j, t + 1] = x


def _walk_vec(p_up, has_floor, floor, has_ceil, ceil, x0, U, states):
    n, T = U.shape
    x = np.full(n, x0, dtype=np.int64)
    states[:, 0] = x
    for t in range(T):
        up = U[:, t] < p_up
        x = np.where(up, x + 1, x - 1)
        if has_ceil:
            x = np.where(up & (x > ceil), ceil, x)
        if has_floor:
            x = np.where(~up & (x < floor), floor, x)
        states[:, t + 1] = x


def walk_sim(
    p_up: float,
    floor: int | None,
    ceil: int | None,
    x0: int,
    U: np.ndarray,
) -> np.ndarray:
    """Simulate the +/-1 biased walk with optional clamping bounds."""
    states = np.empty((U.shape[0], U.shape[1] + 1), dtype=np.int64)
    has_floor = floor is not None
    has_ceil = ceil is not None
    f = np.int64(floor if has_floor else 0)
    c = np.int64(ceil if has_ceil else 0)
    if _use_jit():
        _walk_loop(p_up, has_floor, f, has_ceil, c, np.int64(x0), U, states)
    else:
        _walk_vec(p_up, has_floor, f, has_ceil, c, np.int64(x0), U, states)
    return states


# ---------------------------------------------------------------------------
# linear map with additive Gaussian noise


@njit(cache=True)
def _lingauss_loop(A, sigma, x0, normals, states):
    n, T, d = normals.shape
    for j in range(n):
        for k in range(d):
            states[j, 0, k] = x0[k]
        for t in range(T):
            for k in range(d):
                acc = 0.0
                for l in range(d):
                    acc += A[k, l] * states[j, t, l]
                states[j, t + 1, k] = acc + sigma * normals[j, t, k]


def _lingauss_vec(A, sigma, x0, normals, states):
    n, T, d = normals.shape
    states[:, 0, :] = x0
    for t in range(T):
        for k in range(d):
            acc = np.zeros(n)
            for l in range(d):
                acc += A[k, l] * states[:, t, l]
            states[:, t + 1, k] = acc + sigma * normals[:, t, k]


def lingauss_sim(
    A: np.ndarray, sigma: float, x0: np.ndarray, normals: np.ndarray
) -> np.ndarray:
    """Simulate x' = A x + sigma * xi; normals has shape (n, T, d)."""
    n, T, d = normals.shape
    states = np.empty((n, T + 1, d), dtype=np.float64)
    if _use_jit():
        _lingauss_loop(A, sigma, x0, normals, states)
    else:
        _lingauss_vec(A, sigma, x0, normals, states)
    return states


# ---------------------------------------------------------------------------
# randomly switched linear system


@njit(cache=True)
def _switched_linear_loop(As, pi0_cum, P_cum, x0, U, states, modes, nswitch):
    n, Tp1 = U.shape
    T = Tp1 - 1
    d = As.shape[1]
    M = pi0_cum.shape[0]
    for j in range(n):
        m = 0
        for s in range(M):
            if pi0_cum[s] <= U[j, 0]:
                m += 1
            else:
                break
        modes[j, 0] = m
        nswitch[j, 0] = 0
        for k in range(d):
            states[j, 0, k] = x0[k]
        for t in range(T):
            for k in range(d):
                acc = 0.0
                for l in range(d):
                    acc += As[m, k, l] * states[j, t, l]
                states[j, t + 1, k] = acc
            m2 = 0
            for s in range(M):
                if P_cum[m, s] <= U[j, t + 1]:
                    m2 += 1
                else:
                    break
            modes[j, t + 1] = m2
            nswitch[j, t + 1] = nswitch[j, t] + (1 if m2 != m else 0)
            m = m2


def _switched_linear_vec(As, pi0_cum, P_cum, x0, U, states, modes, nswitch):
    n, Tp1 = U.shape
    T = Tp1 - 1
    d = As.shape[1]
    m = (pi0_cum[None, :] <= U[:, 0, None]).sum(axis=1)
    modes[:, 0] = m
    nswitch[:, 0] = 0
    states[:, 0, :] = x0
    for t in range(T):
        for k in range(d):
            acc = np.zeros(n)
            for l in range(d):
                acc += As[m, k, l] * states[:, t, l]
            states[:, t + 1, k] = acc
        m2 = (P_cum[m] <= U[:, t + 1, None]).sum(axis=1)
        modes[:, t + 1] = m2
        nswitch[:, t + 1] = nswitch[:, t] + (m2 != m)
        m = m2


def switched_linear_sim(
    As: np.ndarray,
    pi0_cum: np.ndarray,
    P_cum: np.ndarray,
    x0: np.ndarray,
    U: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Simulate X_{t+1} = A_{mode_t} X_t with Markov mode switching.

    ``U`` has shape (n, T+1): column 0 draws the initial mode, column t+1
    draws mode_{t+1} given mode_t.  Returns (states, modes, switch_counts).
    """
    n, Tp1 = U.shape
    d = As.shape[1]
    states = np.empty((n, Tp1, d), dtype=np.float64)
    modes = np.empty((n, Tp1), dtype=np.int64)
    nswitch = np.empty((n, Tp1), dtype=np.int64)
    if _use_jit():
        _switched_linear_loop(As, pi0_cum, P_cum, x0, U, states, modes, nswitch)
    else:
        _switched_linear_vec(As, pi0_cum, P_cum, x0, U, states, modes, nswitch)
    return states, modes, nswitch


# ---------------------------------------------------------------------------
# squared-radius diffusion (Euler-Maruyama, full truncation)


@njit(cache=True)
def _besq_loop(y0, delta, dt, sqrt_dt, normals, terminal, snaps, snap_steps, flags):
    n, steps = normals.shape
    n_snaps = snap_steps.shape[0]
    for j in range(n):
        y = y0
        flag = False
        si = 0
        if n_snaps > 0 and snap_steps[0] == 0:
            snaps[j, 0] = y
            flags[j, 0] = flag
            si = 1
        for k in range(steps):
            w = normals[j, k] * sqrt_dt
            if y < w * w:
                flag = True
            y = y + 2.0 * np.sqrt(max(y, 0.0)) * w + delta * dt
            if y < 0.0:
                y = 0.0
            if si < n_snaps and snap_steps[si] == k + 1:
                snaps[j, si] = y
                flags[j, si] = flag
                si += 1
        terminal[j] = y


def _besq_vec(y0, delta, dt, sqrt_dt, normals, terminal, snaps, snap_steps, flags):
    n, steps = normals.shape
    y = np.full(n, y0, dtype=np.float64)
    flag = np.zeros(n, dtype=np.bool_)
    si = 0
    if snap_steps.shape[0] > 0 and snap_steps[0] == 0:
        snaps[:, 0] = y
        flags[:, 0] = flag
        si = 1
    for k in range(steps):
        w = normals[:, k] * sqrt_dt
        flag |= y < w * w
        y = y + 2.0 * np.sqrt(np.maximum(y, 0.0)) * w + delta * dt
        y = np.maximum(y, 0.0)
        if si < snap_steps.shape[0] and snap_steps[si] == k + 1:
            snaps[:, si] = y
            flags[:, si] = flag
            si += 1
    terminal[:] = y


def besq_chunk(
    y0: float,
    delta: float,
    dt: float,
    normals: np.ndarray,
    snap_steps: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Advance one chunk of squared-radius paths; returns
    (terminal, snaps, clamp_flags).

    ``snap_steps`` is a sorted int64 array of step indices (0..steps) at
    which to record the state; pass an empty array to keep terminals only.
    Nonnegativity is enforced by the scheme: the root argument is clamped
    below at 0 and the state is clamped after every step.  ``clamp_flags``
    marks, per snapshot, paths that have visited the near-zero zone
    y < (dW)^2 where the one-step map is not monotone in y (shared-driver
    order comparisons are only meaningful for unflagged paths).
    """
    n, steps = normals.shape
    terminal = np.empty(n, dtype=np.float64)
    snaps = np.empty((n, snap_steps.shape[0]), dtype=np.float64)
    flags = np.zeros((n, snap_steps.shape[0]), dtype=np.bool_)
    sqrt_dt = np.sqrt(dt)
    if _use_jit():
        _besq_loop(y0, delta, dt, sqrt_dt, normals, terminal, snaps, snap_steps, flags)
    else:
        _besq_vec(y0, delta, dt, sqrt_dt, normals, terminal, snaps, snap_steps, flags)
    return terminal, snaps, flags


# ---------------------------------------------------------------------------
# linear-drift diffusion with region-hit freezing at step resolution


@njit(cache=True)
def _em_lin_loop(
    kappa, dt, sqrt_dt, noise_on, radius, x0, normals, snap_steps, snaps, hit_step
):
    n, steps, d = normals.shape
    n_snaps = snap_steps.shape[0]
    r2 = radius * radius
    for j in range(n):
        x = np.empty(d)
        for k in range(d):
            x[k] = x0[k]
        hit = -1
        nrm2 = 0.0
        for k in range(d):
            nrm2 += x[k] * x[k]
        if nrm2 <= r2:
            hit = 0
        si = 0
        if n_snaps > 0 and snap_steps[0] == 0:
            for k in range(d):
                snaps[j, 0, k] = x[k]
            si = 1
        for step in range(steps):
            if hit < 0:
                for k in range(d):
                    x[k] = x[k] + (-kappa * x[k]) * dt + noise_on * (
                        normals[j, step, k] * sqrt_dt
                    )
                nrm2 = 0.0
                for k in range(d):
                    nrm2 += x[k] * x[k]
                if nrm2 <= r2:
                    hit = step + 1
            if si < n_snaps and snap_steps[si] == step + 1:
                for k in range(d):
                    snaps[j, si, k] = x[k]
                si += 1
        hit_step[j] = hit


def _em_lin_vec(
    kappa, dt, sqrt_dt, noise_on, radius, x0, normals, snap_steps, snaps, hit_step
):
    n, steps, d = normals.shape
    r2 = radius * radius
    x = np.tile(np.asarray(x0, dtype=np.float64), (n, 1))
    hit = np.full(n, -1, dtype=np.int64)
    nrm2 = (x * x).sum(axis=1)
    hit[nrm2 <= r2] = 0
    si = 0
    if snap_steps.shape[0] > 0 and snap_steps[0] == 0:
        snaps[:, 0, :] = x
        si = 1
    for step in range(steps):
        live = hit < 0
        for k in range(d):
            xk = x[live, k]
            x[live, k] = xk + (-kappa * xk) * dt + noise_on * (
                normals[live, step, k] * sqrt_dt
            )
        nrm2 = (x[live] * x[live]).sum(axis=1)
        newly = np.zeros(n, dtype=bool)
        newly[live] = nrm2 <= r2
        hit[newly] = step + 1
        if si < snap_steps.shape[0] and snap_steps[si] == step + 1:
            snaps[:, si, :] = x
            si += 1
    hit_step[:] = hit


def em_linear_drift(
    kappa: float,
    dt: float,
    noise_on: float,
    radius: float,
    x0: np.ndarray,
    normals: np.ndarray,
    snap_steps: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Euler-Maruyama for dX = -kappa X dt + dW, frozen on entering the
    centered ball of ``radius`` (hit detected at step resolution).

    Returns (snaps, hit_step): snaps has shape (n, len(snap_steps), d) and
    holds the frozen state after the hit; hit_step[j] = -1 if never inside.
    ``noise_on`` is 1.0 or 0.0 (0 disables the diffusion term for the ODE
    limit check).
    """
    n, steps, d = normals.shape
    snaps = np.empty((n, snap_steps.shape[0], d), dtype=np.float64)
    hit_step = np.empty(n, dtype=np.int64)
    sqrt_dt = np.sqrt(dt)
    x0 = np.asarray(x0, dtype=np.float64)
    if _use_jit():
        _em_lin_loop(
            kappa, dt, sqrt_dt, noise_on, radius, x0, normals, snap_steps, snaps, hit_step
        )
    else:
        _em_lin_vec(
            kappa, dt, sqrt_dt, noise_on, radius, x0, normals, snap_steps, snaps, hit_step
        )
    return snaps, hit_step

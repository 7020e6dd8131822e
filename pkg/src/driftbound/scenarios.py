"""End-to-end scenario pipelines tying the modules into reproducible runs.

Each scenario kind resolves its components from the config document, runs
its pipeline with the document's seed, and emits a :class:`Report` plus CSV
artifacts.  Identical config + seed produce byte-identical artifact files;
wall-clock data never enters them.
"""

from __future__ import annotations

import contextlib
import importlib.resources
import math
import time
from pathlib import Path

import numpy as np

from . import certificates as cert
from . import chains, config, diffusion, hybrid, iss, stopping, switched
from .errors import ConfigError, DriftboundError, SimulationError
from .reporting import CheckRow, Report, write_per_time_stats

TRAJ_EXPORT_PATHS = 50  # cap on paths written to trajectory CSVs


@contextlib.contextmanager
def _guard(report: Report, name: str):
    """Capture a numeric failure as a failed check so independent checks
    still run; config errors propagate (the run cannot mean anything)."""
    try:
        yield
    except ConfigError:
        raise
    except (DriftboundError, FloatingPointError, ValueError) as exc:
        report.add(CheckRow(name, "fail", detail=f"error: {exc}"))


def shipped_scenarios() -> dict[str, Path]:
    """Name -> path of the scenario files shipped with the package."""
    root = importlib.resources.files("driftbound").joinpath("data/scenarios")
    out = {}
    for entry in sorted(root.iterdir(), key=lambda e: e.name):
        if entry.name.endswith(".json"):
            out[entry.name[: -len(".json")]] = Path(str(entry))
    return out


def list_scenarios() -> list[tuple[str, str, str]]:
    """(name, kind, description) for every shipped scenario."""
    rows = []
    for name, path in shipped_scenarios().items():
        doc = config.load_document(path)
        rows.append((name, doc.get("kind", "?"), doc.get("description", "")))
    return rows


def resolve_config(source) -> dict:
    """Accept a dict, a path, or a shipped scenario name."""
    if isinstance(source, dict):
        return source
    p = Path(str(source))
    if p.exists():
        return config.load_document(p)
    shipped = shipped_scenarios()
    if str(source) in shipped:
        return config.load_document(shipped[str(source)])
    raise ConfigError(
        f"{source!r} is neither a config file nor a shipped scenario name "
        f"(shipped: {sorted(shipped)})"
    )


def validate_scenario(source) -> dict:
    """Structural + semantic validation without running any simulation."""
    doc = resolve_config(source)
    config.validate_document(doc)
    comps = config.ComponentSet(doc)
    comps.build_all()
    _RESOLVERS[doc["kind"]](doc, comps)
    return doc


def apply_overrides(doc: dict, seed=None, paths=None, horizon=None) -> dict:
    doc = {**doc, "params": dict(doc["params"])}
    if seed is not None:
        doc["seed"] = seed
    if paths is not None and "paths" in config._PARAM_KEYS[doc["kind"]]:
        doc["params"]["paths"] = paths
    if horizon is not None and "horizon" in config._PARAM_KEYS[doc["kind"]]:
        doc["params"]["horizon"] = horizon
    return doc


def run_scenario(source, out_dir=None, seed=None, paths=None, horizon=None) -> Report:
    doc = apply_overrides(resolve_config(source), seed, paths, horizon)
    config.validate_document(doc)
    comps = config.ComponentSet(doc)
    report = Report(
        scenario_name=doc["name"],
        kind=doc["kind"],
        seed=doc["seed"],
        config_echo={k: doc[k] for k in ("name", "kind", "seed", "params")},
    )
    t0 = time.perf_counter()
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    _PIPELINES[doc["kind"]](doc, comps, report, out)
    report.runtime_s = time.perf_counter() - t0
    if out is not None:
        report.write(out)
    return report


def _artifact(report: Report, out: Path | None, name: str) -> Path | None:
    if out is None:
        return None
    report.artifacts.append(name)
    return out / name


# ---------------------------------------------------------------------------
# certificate-verify / bound


def _resolve_certificate_verify(doc, comps):
    p = doc["params"]
    kernel = comps.ref(p, "kernel_ref", expect=(chains.FiniteKernel, chains.FiniteKernelFamily))
    certificate = comps.ref(p, "certificate_ref", expect=cert.CertificateSpec)
    if "x0" not in p:
        raise ConfigError("params.x0 is required")
    return kernel, certificate


def _certificate_constants(kernel, certificate, report):
    C, gamma = cert.compute_C_gamma(certificate.theta)
    members = [s for s in kernel.states if certificate.K.contains(s)]
    delta = cert.compute_delta(certificate.V, certificate.K, members=members)
    beta = cert.compute_beta(kernel, certificate.phi, certificate.K, mode="exact")
    report.constants.update(
        {
            "C": C,
            "gamma": gamma,
            "delta": delta.value,
            "beta": beta.value,
            "delta_provenance": delta.provenance,
            "beta_provenance": beta.provenance,
        }
    )
    return C, gamma, delta, beta


def _bound_from(certificate, C, gamma, delta, beta, x0, report):
    constants = cert.CertificateConstants(
        C=C, gamma=gamma, delta=delta.value, beta=beta.value, beta_se=beta.se
    )
    # the initial-condition term enters only for starts outside K
    phi0 = certificate.phi.value(0, x0) if not certificate.K.contains(x0) else 0.0
    bound = cert.theorem_bound(constants, phi0)
    report.constants["phi0"] = phi0
    report.constants["bound"] = bound
    return bound


def _pipeline_bound(doc, comps, report, out):
    kernel, certificate = _resolve_certificate_verify(doc, comps)
    p = doc["params"]
    C, gamma, delta, beta = _certificate_constants(kernel, certificate, report)
    bound = _bound_from(certificate, C, gamma, delta, beta, p["x0"], report)
    report.add(CheckRow("bound-computed", "info", value=bound))
    report.add(
        CheckRow.from_bool(
            "constants-finite",
            all(np.isfinite(v) for v in (C, gamma, delta.value, beta.value, bound)),
        )
    )


def _pipeline_certificate_verify(doc, comps, report, out):
    kernel, certificate = _resolve_certificate_verify(doc, comps)
    p = doc["params"]
    x0, T, n = p["x0"], p["horizon"], p["paths"]
    confidence = p.get("confidence", 0.99)
    verify_T = p.get("verify_horizon", T)

    exact = cert.verify_supermartingale_exact(kernel, certificate, verify_T)
    report.add(
        CheckRow.from_bool(
            "supermartingale-exact", exact.ok, value=exact.min_slack,
            detail=f"worst at (t={exact.worst_t}, x={exact.worst_state})",
        )
    )
    C, gamma, delta, beta = _certificate_constants(kernel, certificate, report)
    bound = _bound_from(certificate, C, gamma, delta, beta, x0, report)

    batch = chains.simulate_batch(kernel, x0, T, n, doc["seed"])
    with _guard(report, "supermartingale-mc"):
        mc = cert.verify_supermartingale_mc(batch, certificate, confidence=confidence)
        report.add(
            CheckRow.from_bool(
                "supermartingale-mc", mc.increment_test.ok,
                value=mc.increment_test.worst_z,
                detail=f"confidence={confidence}, skipped={len(mc.increment_test.skipped_times)} times",
            )
        )
        report.add(
            CheckRow.from_bool(
                "optional-sampling-lemma", mc.lemma_ok, value=mc.lemma_worst_margin,
                detail="E[V(X_s)1{tau>s}] <= phi(0,x0) theta(s) + 3 SE",
            )
        )
    with _guard(report, "uniform-bound-empirical"):
        bc = cert.empirical_bound_check(batch, certificate.V, bound)
        report.add(
            CheckRow.from_bool(
                "uniform-bound-empirical", bc.ok and bc.margin_se >= 3.0,
                value=bc.sup_mean, margin=bc.margin_se,
                detail=f"sup mean V at t={bc.sup_time} vs bound={bound!r}",
            )
        )
        path = _artifact(report, out, "per_time_stats.csv")
        if path:
            write_per_time_stats(
                path, bc.summary.times,
                {"mean_V": bc.summary.mean, "se_V": bc.summary.se,
                 "bound": np.full_like(bc.summary.mean, bound)},
            )
    path = _artifact(report, out, "trajectories.csv")
    if path:
        sample = chains.TrajectoryBatch(
            batch.seed, batch.states[:TRAJ_EXPORT_PATHS], batch.state_kind,
            labels=batch.labels,
        )
        chains.export_trajectories(sample, path)


# ---------------------------------------------------------------------------
# hybrid-sim


def _resolve_hybrid(doc, comps):
    p = doc["params"]
    y_kernel = comps.ref(p, "y_kernel_ref", expect=chains.FiniteKernel)
    z_kernel = comps.ref(p, "z_kernel_ref",
                         expect=(chains.FiniteKernel, chains.FiniteKernelFamily))
    certificate = comps.ref(p, "certificate_ref", expect=cert.CertificateSpec)
    spec = hybrid.HybridSpec(Y_kernel=y_kernel, Z_kernel=z_kernel, K=certificate.K)
    return spec, certificate


def _pipeline_hybrid(doc, comps, report, out):
    spec, certificate = _resolve_hybrid(doc, comps)
    p = doc["params"]
    x0, T, n = p["x0"], p["horizon"], p["paths"]
    confidence = p.get("confidence", 0.99)
    verify_T = p.get("verify_horizon", T)

    exact = cert.verify_supermartingale_exact(spec.Z_kernel, certificate, verify_T)
    report.add(
        CheckRow.from_bool(
            "supermartingale-exact-Z", exact.ok, value=exact.min_slack,
            detail="checked per local-clock index",
        )
    )
    C, gamma = cert.compute_C_gamma(certificate.theta)
    members = [s for s in spec.states if certificate.K.contains(s)]
    delta = cert.compute_delta(certificate.V, certificate.K, members=members)
    # the hybrid bound draws beta from the inside-region kernel Y
    beta = cert.compute_beta(spec.Y_kernel, certificate.phi, certificate.K, mode="exact")
    report.constants.update(
        {"C": C, "gamma": gamma, "delta": delta.value, "beta": beta.value,
         "beta_provenance": "exact (Y kernel)"}
    )
    bound = _bound_from(certificate, C, gamma, delta, beta, x0, report)

    batch = hybrid.simulate_hybrid(spec, x0, T, n, doc["seed"])

    member = hybrid.batch_membership(batch, certificate.K)
    regime_consistent = bool((batch.mode == np.where(member, 0, 1)).all())
    report.add(
        CheckRow.from_bool(
            "regime-matches-excursions", regime_consistent,
            detail="mode column equals membership-derived regime",
        )
    )

    probe = p["probe_state"]
    scan = hybrid.markov_inhomogeneity_test(
        spec, x0, probe, T, n, doc["seed"], alpha=p.get("markov_alpha", 0.01)
    )
    report.add(
        CheckRow.from_bool(
            "non-markov-demonstrated", scan.verdict, value=scan.p_value,
            detail=f"chi2={scan.chi2!r} at probe state {probe!r}, clock 0 vs >=1",
        )
    )
    bc = cert.empirical_bound_check(batch, certificate.V, bound)
    report.add(
        CheckRow.from_bool(
            "uniform-bound-empirical", bc.ok and bc.margin_se >= 3.0,
            value=bc.sup_mean, margin=bc.margin_se,
        )
    )
    path = _artifact(report, out, "per_time_stats.csv")
    if path:
        write_per_time_stats(
            path, bc.summary.times,
            {"mean_V": bc.summary.mean, "se_V": bc.summary.se,
             "bound": np.full_like(bc.summary.mean, bound)},
        )
    if out is not None:
        sample = chains.TrajectoryBatch(
            batch.seed, batch.states[:TRAJ_EXPORT_PATHS], batch.state_kind,
            labels=batch.labels, mode=batch.mode[:TRAJ_EXPORT_PATHS],
        )
        hybrid.export_excursions(sample, certificate.K, str(out / "hybrid"))
        report.artifacts += ["hybrid_excursions.csv", "hybrid_hitting.csv"]
        chains.export_trajectories(sample, out / "trajectories.csv")
        report.artifacts.append("trajectories.csv")


# ---------------------------------------------------------------------------
# value-iterate


def _resolve_value_iterate(doc, comps):
    p = doc["params"]
    kernel = comps.ref(p, "kernel_ref",
                       expect=(chains.FiniteKernel, chains.FiniteKernelFamily))
    V = comps.ref(p, "V_ref")
    theta = comps.ref(p, "theta_ref", expect=cert.ThetaSpec)
    region = comps.ref(p, "region_ref", expect=hybrid.RegionSpec)
    reward = stopping.RewardSpec(V=V, theta=theta, K=region)
    return kernel, reward


def _pipeline_value_iterate(doc, comps, report, out):
    kernel, reward = _resolve_value_iterate(doc, comps)
    p = doc["params"]
    N = p["N"]
    table = stopping.value_iterate(kernel, reward, N)

    env_gap = table.envelope_gap(reward)
    report.add(CheckRow.from_bool("envelope-dominates-reward", env_gap <= 1e-12,
                                  value=env_gap))
    step_gap = table.one_step_gap(kernel, reward.K)
    report.add(CheckRow.from_bool("one-step-supermartingale", step_gap <= 1e-12,
                                  value=step_gap))

    for item in p.get("expected_values", []):
        n_t, state, expected = item["n"], item["state"], item["value"]
        got = table.value(n_t, state)
        report.add(
            CheckRow.from_bool(
                f"pinned-value-n{n_t}-{state}", abs(got - expected) <= 1e-12,
                value=got, detail=f"expected {expected!r}",
            )
        )

    oracle = p.get("oracle", "tree")
    if oracle in ("tree", "both"):
        worst = 0.0
        for x in kernel.states:
            tv = stopping.tree_value(kernel, reward, N, x)
            worst = max(worst, abs(tv - table.value(0, x)))
        report.add(CheckRow.from_bool("tree-oracle-match", worst <= 1e-12, value=worst))
    if oracle in ("rules", "both"):
        worst = 0.0
        for x in kernel.states:
            rv = stopping.enumerate_rule_value(kernel, reward, N, x)
            worst = max(worst, abs(rv - table.value(0, x)))
        report.add(CheckRow.from_bool("rule-enumeration-match", worst <= 1e-12,
                                      value=worst))

    certificate = stopping.table_to_certificate(table, reward)
    exact = cert.verify_supermartingale_exact(kernel, certificate, N)
    report.add(
        CheckRow.from_bool("table-certificate-exact", exact.ok, value=exact.min_slack,
                           detail=f"verified for t < {N} (table horizon)")
    )
    gap = stopping.truncation_gap(kernel, reward, N, extra=p.get("convergence_extra", 5))
    report.add(CheckRow("truncation-gap", "info", value=gap,
                        detail="sup_x phi_{N+extra}(0,x) - phi_N(0,x)"))
    report.constants["value_x_first"] = float(table.phi[0, 0])

    path = _artifact(report, out, "value_table.csv")
    if path:
        import csv as _csv

        with open(path, "w", newline="") as fh:
            writer = _csv.writer(fh)
            writer.writerow(["n", "state", "phi"])
            for n_t in range(N + 1):
                for si, s in enumerate(table.states):
                    writer.writerow([n_t, s, repr(float(table.phi[n_t, si]))])


# ---------------------------------------------------------------------------
# switched


def _resolve_switched(doc, comps):
    p = doc["params"]
    system = comps.ref(p, "system_ref", expect=switched.SwitchedSystemSpec)
    lyap = comps.ref(p, "lyapunov_ref", expect=switched.LyapunovFamilySpec)
    return system, lyap


def _pipeline_switched(doc, comps, report, out):
    system, lyap = _resolve_switched(doc, comps)
    p = doc["params"]
    checks = p.get("checks", ["s1", "family", "pathwise", "gas"])
    seed = doc["seed"]
    alpha_star = None

    if "s1" in checks:
        res = switched.check_S1(lyap.lambda0, lyap.mu, system.chain)
        report.constants.update(
            {"s1_product": res.value, "p_hat": res.detail["p_hat"],
             "p_tilde": res.detail["p_tilde"]}
        )
        if res.alpha_star is not None:
            report.constants["alpha_star"] = res.alpha_star
            alpha_star = res.alpha_star
        report.add(CheckRow.from_bool("condition-S1", res.ok, value=res.value,
                                      detail="lambda0 (p_hat + mu p_tilde) < 1"))
    if "s2" in checks:
        res = switched.check_S2(lyap.Lambda, lyap.mu, system.chain)
        report.constants["s2_value"] = res.value
        if res.alpha_star is not None:
            report.constants.setdefault("alpha_star", res.alpha_star)
            alpha_star = alpha_star or res.alpha_star
        report.add(CheckRow.from_bool("condition-S2", res.ok, value=res.value,
                                      detail="mu max_i sum_j p_ij lambda_ji < 1"))

    if "family" in checks:
        x0 = np.asarray(p["x0"], dtype=np.float64)
        nx0 = float(np.linalg.norm(x0))
        grid = switched.RadialGrid(
            dim=system.dim, r_min=max(lyap.r, nx0 * 1e-3) or nx0 * 1e-3,
            r_max=3.0 * nx0,
        )
        fam = switched.verify_lyapunov_family(lyap, system, grid)
        for item, worst in fam.items.items():
            report.add(CheckRow.from_bool(f"family-{item}", worst <= fam.tol,
                                          value=worst))

    if "switch-law" in checks:
        window = p.get("window", 10)
        wn = p.get("window_paths", p.get("paths", 10_000))
        modes = switched.simulate_modes(system.chain, window, wn, seed)
        changes = (modes[:, 1:] != modes[:, :-1]).sum(axis=1)
        counts = np.bincount(changes, minlength=window + 1)
        freq = counts / wn
        se = np.sqrt(freq * (1.0 - freq) / wn)
        bounds = np.array(
            [switched.switching_count_bound(system.chain, 0, window, k)
             for k in range(window + 1)]
        )
        excess = freq - (bounds + 3.0 * se)
        ok = bool((excess <= 0).all()) and len(counts) == window + 1
        report.add(
            CheckRow.from_bool(
                "switching-count-law", ok, value=float(excess.max()),
                detail=f"window={window}, paths={wn}, all k in 0..{window}",
            )
        )
        path = _artifact(report, out, "switch_law.csv")
        if path:
            write_per_time_stats(path, np.arange(window + 1),
                                 {"empirical": freq, "bound": bounds, "se": se})

    batch = None
    if {"pathwise", "gas", "handoff", "counterexample"} & set(checks):
        x0 = np.asarray(p["x0"], dtype=np.float64)
        with _guard(report, "simulate-switched"):
            batch = switched.simulate_switched(
                system, x0, p["horizon"], p["paths"], seed
            )
        if batch is not None:
            recount_ok = bool(np.array_equal(batch.nswitch, batch.recount_switches()))
            report.add(CheckRow.from_bool("switch-count-bookkeeping", recount_ok))
        else:
            for name in {"pathwise", "gas", "handoff"} & set(checks):
                report.add(CheckRow(name, "skip", detail="simulation failed"))
            checks = [c for c in checks
                      if c not in ("pathwise", "gas", "handoff")]

    if "pathwise" in checks:
        rep = switched.pathwise_inequality_check(batch, lyap, system)
        report.add(
            CheckRow.from_bool(
                "pathwise-inequality", rep.ok and rep.precondition_ok,
                value=len(rep.violations),
                detail=f"checked {rep.n_checked} (path,t) pairs at tol 1+1e-9",
            )
        )

    if "gas" in checks:
        if alpha_star is None:
            raise ConfigError("gas diagnostics need s1 or s2 in checks")
        diag = switched.stability_diagnostics(
            batch, lyap, alpha_star, decay_target=p.get("decay_target", 1e-6)
        )
        report.add(
            CheckRow.from_bool(
                "gas-discounted-decay", diag.discounted_monotone and diag.decay_ok,
                value=diag.decay_ratio,
                detail="mean e^{a* t} V monotone and below target by t=T",
            )
        )
        report.add(
            CheckRow.from_bool(
                "gas-terminal-log-bound", diag.log_bound_ok,
                value=diag.log_bound_worst_gap,
                detail="log||X_T|| <= N_T log mu + T log lambda0 + log||x0||",
            )
        )
        report.add(
            CheckRow.from_bool(
                "gas-alpha1-bound", bool(diag.alpha1_ok),
                value=diag.sup_mean_alpha1,
                detail=f"sup_t mean alpha1 vs product-space bound {diag.alpha1_bound!r}",
            )
        )
        report.add(CheckRow.from_bool("gas-not-divergent", not diag.divergent,
                                      value=diag.max_terminal_norm))
        report.constants["max_terminal_norm"] = diag.max_terminal_norm
        path = _artifact(report, out, "discounted_mean.csv")
        if path:
            write_per_time_stats(
                path, np.arange(batch.horizon + 1),
                {"mean_discounted_V": diag.discounted_means},
            )

    if "handoff" in checks:
        if alpha_star is None:
            raise ConfigError("the handoff test needs s1 or s2 in checks")
        hand = switched.handoff_supermartingale_test(
            batch, lyap, alpha_star, confidence=p.get("confidence", 0.99)
        )
        report.add(
            CheckRow.from_bool(
                "handoff-supermartingale-mc", hand.ok, value=hand.worst_z,
                detail="e^{a* t} V' on the (mode,state) product space",
            )
        )

    if "counterexample" in checks:
        bad_sys = comps.ref(p, "counterexample_ref",
                            expect=switched.SwitchedSystemSpec)
        x0_bad = np.ones(bad_sys.dim)
        try:
            bad_batch = switched.simulate_switched(
                bad_sys, x0_bad, min(p["horizon"], 60), min(p["paths"], 200), seed
            )
            bad_lyap = switched.LyapunovFamilySpec(
                weights=np.ones(bad_sys.chain.n_modes), mu=lyap.mu,
                lambda0=lyap.lambda0,
            )
            diag = switched.stability_diagnostics(
                bad_batch, bad_lyap, alpha_star if alpha_star else 0.1
            )
            divergent = diag.divergent
            max_norm = diag.max_terminal_norm
        except SimulationError:
            divergent = True  # state overflow is divergence by itself
            max_norm = math.inf
        report.add(
            CheckRow.from_bool(
                "counterexample-flagged-divergent", divergent,
                value=max_norm,
                detail="expanding system must not pass the diagnostics",
            )
        )

    if "epsilon-delta" in checks:
        if alpha_star is None:
            raise ConfigError("the epsilon-delta check needs s1 or s2 in checks")
        worst_ratio = -np.inf
        for eps in p.get("epsilon_grid", [0.5, 0.1]):
            delta_r = float(lyap.alpha2.inverse(eps))
            x0e = np.zeros(system.dim)
            x0e[0] = 0.999 * delta_r
            be = switched.simulate_switched(
                system, x0e, p["horizon"], p.get("epsilon_paths", 400), seed
            )
            a1 = np.asarray(lyap.alpha1(be.norms().ravel())).reshape(be.norms().shape)
            worst_ratio = max(worst_ratio, float(a1.mean(axis=0).max()) / eps)
        report.add(
            CheckRow.from_bool(
                "epsilon-delta-L1-stability", worst_ratio < 1.0, value=worst_ratio,
                detail="delta = alpha2^{-1}(eps): sup_t mean alpha1 < eps",
            )
        )

    if batch is not None and out is not None:
        chains.export_trajectories(
            switched.SwitchedBatch(
                batch.seed, batch.states[:TRAJ_EXPORT_PATHS],
                batch.modes[:TRAJ_EXPORT_PATHS], batch.nswitch[:TRAJ_EXPORT_PATHS],
            ).to_trajectory_batch(),
            out / "trajectories.csv",
        )
        report.artifacts.append("trajectories.csv")


# ---------------------------------------------------------------------------
# iss


def _resolve_iss(doc, comps):
    p = doc["params"]
    system = comps.ref(p, "system_ref", expect=iss.DisturbedSystemSpec)
    return system


def _pipeline_iss(doc, comps, report, out):
    system = _resolve_iss(doc, comps)
    p = doc["params"]
    x0 = np.asarray(p["x0"], dtype=np.float64)
    T, n, seed = p["horizon"], p["paths"], doc["seed"]

    cond = system.condition()
    report.constants["condition_value"] = cond.value
    report.add(CheckRow.from_bool("iss-condition", cond.ok, value=cond.value,
                                  detail="mu max_i sum_j p_ij lambda_ji < 1"))
    env = iss.iss_bound(system, x0)
    report.constants.update(
        {"alpha_star": env.alpha_star, "region_radius": env.radius,
         "beta": env.beta.value, "delta": env.delta,
         "gain_constant": env.gain_constant}
    )
    rep = iss.iss_check(system, x0, T, n, seed, envelope=env)
    report.add(
        CheckRow.from_bool(
            "iss-envelope-empirical", rep.ok, value=float(rep.mean_alpha1.max()),
            margin=rep.worst_margin_se,
            detail="mean alpha1(||X_t||) <= envelope + 3 SE for all t",
        )
    )

    # with w = 0 the run must coincide with the undisturbed diagnostics
    zero = iss.DisturbanceSpec("constant", w_max=0.0, value=[0.0] * system.dim)
    b0 = iss.simulate_disturbed(system, x0, T, n, seed, disturbance=zero)
    twin = switched.SwitchedSystemSpec(
        maps=[switched.LinearMap(np.array([[m.a]])) for m in system.maps],
        chain=system.chain,
    )
    b1 = switched.simulate_switched(twin, x0, T, n, seed)
    coincide = bool(
        np.array_equal(b0.states, b1.states) and np.array_equal(b0.modes, b1.modes)
    )
    report.add(
        CheckRow.from_bool(
            "zero-disturbance-coincidence", coincide,
            detail="w=0 run equals the switched-module simulation, same seed",
        )
    )

    path = _artifact(report, out, "iss_envelope.csv")
    if path:
        write_per_time_stats(
            path, np.arange(T + 1),
            {"mean_alpha1": rep.mean_alpha1, "se": rep.se_alpha1,
             "envelope": rep.envelope_values},
        )
    if out is not None:
        chains.export_trajectories(
            switched.SwitchedBatch(
                rep.batch.seed, rep.batch.states[:TRAJ_EXPORT_PATHS],
                rep.batch.modes[:TRAJ_EXPORT_PATHS],
                rep.batch.nswitch[:TRAJ_EXPORT_PATHS],
                disturbance=rep.batch.disturbance,
            ).to_trajectory_batch(),
            out / "trajectories.csv",
        )
        report.artifacts.append("trajectories.csv")


# ---------------------------------------------------------------------------
# diffusion


def _resolve_diffusion(doc, comps):
    p = doc["params"]
    besq = comps.ref(p, "besq_ref", expect=diffusion.BesqSpec)
    comps.ref(p, "sector_pass_ref", expect=diffusion.DriftedDiffusionSpec,
              required=False)
    comps.ref(p, "sector_fail_ref", expect=diffusion.DriftedDiffusionSpec,
              required=False)
    comps.ref(p, "zeta_ref", expect=diffusion.DriftedDiffusionSpec, required=False)
    return besq


def _pipeline_diffusion(doc, comps, report, out):
    besq = _resolve_diffusion(doc, comps)
    p = doc["params"]
    seed = doc["seed"]

    with _guard(report, "besq-mean-identity"):
        mean_rep = diffusion.besq_mean_report(besq, seed)
        report.constants.update(
            {"besq_mean": mean_rep.mean, "besq_expected": mean_rep.expected,
             "besq_bias_budget": mean_rep.bias_budget}
        )
        report.add(
            CheckRow.from_bool(
                "besq-mean-identity", mean_rep.ok, value=mean_rep.mean,
                se=mean_rep.se,
                detail=f"target {mean_rep.expected!r} within 3 SE + "
                       f"budget {mean_rep.bias_budget!r} (dt vs dt/2)",
            )
        )

    F = lambda y: y**2  # noqa: E731
    terminal_val, terminal_se = diffusion.phi_estimate(besq.S, 2.5, F, besq, seed)
    report.add(
        CheckRow.from_bool(
            "phi-terminal-consistency",
            terminal_val == 6.25 and terminal_se == 0.0,
            value=terminal_val, detail="phi(S, y) = F(y) exactly",
        )
    )

    grid = np.asarray(p.get("grid", [1.0, 2.0, 3.0, 4.0, 5.0]), dtype=np.float64)
    shape_spec = diffusion.BesqSpec(
        besq.delta, besq.y0, besq.S, besq.dt, p.get("shape_paths", 4000)
    )
    shape = None
    with _guard(report, "phi-shape-checks"):
        shape = diffusion.phi_shape_check(F, shape_spec, grid, t=0.0, seed=seed + 2)
        report.add(CheckRow.from_bool("phi-monotone", shape.monotone_ok,
                                      value=shape.monotone_worst_z,
                                      detail="paired one-sided z <= 3"))
        report.add(CheckRow.from_bool("phi-midpoint-convex", shape.convex_ok,
                                      value=shape.convex_worst_z,
                                      detail="paired one-sided z <= 3"))
        report.add(
            CheckRow.from_bool(
                "shared-driver-coupling", shape.coupling_violations == 0,
                value=shape.coupling_violations,
                detail=f"{shape.coupling_excluded_pairs} clamp-zone pairs excluded "
                       f"of {shape.coupling_pairs_checked}",
            )
        )
        worst = float(np.abs(shape.pde_residuals).max())
        tol = 3.0 * float(shape.pde_residual_se.max()) + 0.01 * shape.pde_scale
        report.add(
            CheckRow(
                "pde-residual", "info", value=worst,
                detail=f"generator relation residual; scale {shape.pde_scale!r}, "
                       f"3SE+1% = {tol!r}",
            )
        )

    sector_pass = comps.ref(p, "sector_pass_ref",
                            expect=diffusion.DriftedDiffusionSpec, required=False)
    if sector_pass is not None:
        rep = diffusion.sector_check(sector_pass)
        report.add(CheckRow.from_bool("sector-inward-drift", rep.ok,
                                      value=rep.worst_inner_product))
    sector_fail = comps.ref(p, "sector_fail_ref",
                            expect=diffusion.DriftedDiffusionSpec, required=False)
    if sector_fail is not None:
        rep = diffusion.sector_check(sector_fail)
        report.add(
            CheckRow.from_bool(
                "sector-outward-drift-rejected", not rep.ok,
                value=rep.worst_inner_product,
                detail="outward drift must fail the sector condition",
            )
        )

    zeta_spec = comps.ref(p, "zeta_ref", expect=diffusion.DriftedDiffusionSpec,
                          required=False)
    if zeta_spec is not None:
        with _guard(report, "sampled-chain-supermartingale"):
            zeta = diffusion.zeta_supermartingale_test(
                zeta_spec, np.asarray(p["zeta_x0"], dtype=np.float64),
                n=p.get("zeta_paths", 10_000), seed=seed + 3,
                confidence=p.get("confidence", 0.99),
            )
            report.add(
                CheckRow.from_bool(
                    "sampled-chain-supermartingale", zeta.ok, value=zeta.worst_z,
                    detail=f"skipped {len(zeta.skipped_times)} thin times "
                           "(stopped chain, integer sampling)",
                )
            )

    if shape is not None:
        path = _artifact(report, out, "phi_grid.csv")
        if path:
            write_per_time_stats(path, np.arange(len(grid)),
                                 {"y": grid, "phi": shape.phi, "se": shape.se})
    path = _artifact(report, out, "besq_terminal_sample.csv")
    if path:
        res = diffusion.besq_simulate(
            diffusion.BesqSpec(besq.delta, besq.y0, besq.S, besq.dt, 200), seed
        )
        write_per_time_stats(path, np.arange(len(res.terminal)),
                             {"terminal": res.terminal})
    path = _artifact(report, out, "besq_paths.csv")
    if path:
        snap = np.linspace(0, besq.n_steps, 21, dtype=np.int64)
        res = diffusion.besq_simulate(
            diffusion.BesqSpec(besq.delta, besq.y0, besq.S, besq.dt, 10), seed,
            snapshot_steps=snap,
        )
        cols = {f"path_{j}": res.snapshots[j] for j in range(10)}
        write_per_time_stats(path, snap, cols)


def simulate_scenario(source, out_dir=None, seed=None, paths=None, horizon=None) -> Report:
    """Simulate the scenario's process and export trajectories; no checks."""
    doc = apply_overrides(resolve_config(source), seed, paths, horizon)
    config.validate_document(doc)
    comps = config.ComponentSet(doc)
    p = doc["params"]
    kind = doc["kind"]
    report = Report(
        scenario_name=doc["name"], kind=kind, seed=doc["seed"],
        config_echo={k: doc[k] for k in ("name", "kind", "seed", "params")},
    )
    t0 = time.perf_counter()
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    if kind in ("certificate-verify", "bound"):
        kernel, _ = _resolve_certificate_verify(doc, comps)
        batch = chains.simulate_batch(
            kernel, p["x0"], p.get("horizon", 100), p.get("paths", 100), doc["seed"]
        )
    elif kind == "hybrid-sim":
        spec, _ = _resolve_hybrid(doc, comps)
        batch = hybrid.simulate_hybrid(
            spec, p["x0"], p["horizon"], p["paths"], doc["seed"]
        )
    elif kind == "switched":
        system, _ = _resolve_switched(doc, comps)
        sb = switched.simulate_switched(
            system, np.asarray(p["x0"], dtype=np.float64), p["horizon"],
            p["paths"], doc["seed"],
        )
        batch = sb.to_trajectory_batch()
    elif kind == "iss":
        system = _resolve_iss(doc, comps)
        sb = iss.simulate_disturbed(
            system, np.asarray(p["x0"], dtype=np.float64), p["horizon"],
            p["paths"], doc["seed"],
        )
        batch = sb.to_trajectory_batch()
    else:
        raise ConfigError(f"scenario kind {kind!r} has no trajectory simulation")

    report.add(CheckRow("simulated", "info",
                        value=f"{batch.n_paths} paths x {batch.horizon} steps"))
    path = _artifact(report, out, "trajectories.csv")
    if path:
        sample = chains.TrajectoryBatch(
            batch.seed, batch.states[:TRAJ_EXPORT_PATHS], batch.state_kind,
            labels=batch.labels,
            mode=None if batch.mode is None else batch.mode[:TRAJ_EXPORT_PATHS],
            disturbance=batch.disturbance,
        )
        chains.export_trajectories(sample, path)
    report.runtime_s = time.perf_counter() - t0
    if out is not None:
        report.write(out)
    return report


_RESOLVERS = {
    "certificate-verify": _resolve_certificate_verify,
    "bound": _resolve_certificate_verify,
    "hybrid-sim": _resolve_hybrid,
    "value-iterate": _resolve_value_iterate,
    "switched": _resolve_switched,
    "iss": _resolve_iss,
    "diffusion": _resolve_diffusion,
}

_PIPELINES = {
    "certificate-verify": _pipeline_certificate_verify,
    "bound": _pipeline_bound,
    "hybrid-sim": _pipeline_hybrid,
    "value-iterate": _pipeline_value_iterate,
    "switched": _pipeline_switched,
    "iss": _pipeline_iss,
    "diffusion": _pipeline_diffusion,
}

import math

import numpy as np
import pytest

from driftbound import certificates as cert
from driftbound import chains, hybrid
from driftbound.errors import CertificateError


def walk_kernel(p_up=0.25, size=41):
    P = np.zeros((size, size))
    for x in range(size):
        P[x, min(x + 1, size - 1)] += p_up
        P[x, max(x - 1, 0)] += 1 - p_up
    return chains.FiniteKernel(P)


def sqrt3_pow(x):
    return 3.0 ** (0.5 * np.asarray(x, dtype=np.float64))


K_WALK = hybrid.FiniteSetRegion({0, 1, 2, 3})
ONE_STEP_FACTOR = 0.25 * math.sqrt(3.0) + 0.75 / math.sqrt(3.0)  # ~0.8660


class TestTheta:
    def test_geometric_series(self):
        C, gamma = cert.compute_C_gamma(cert.ThetaSpec.exponential(math.log(2)))
        assert abs(C - 2.0) < 1e-12 and gamma == 1.0

    def test_basel_sum(self):
        C, gamma = cert.compute_C_gamma(cert.ThetaSpec.power(2.0))
        assert abs(C - math.pi**2 / 6) < 1e-12 and gamma == 1.0

    def test_table_with_geometric_tail(self):
        th = cert.ThetaSpec.table([1.0, 0.5], tail_ratio=0.5)
        C, gamma = cert.compute_C_gamma(th)
        # 1 + 0.5 + 0.5*(0.25 + 0.125 + ...) = 1.5 + 0.5
        assert abs(C - 2.0) < 1e-12 and gamma == 1.0
        assert th(0) == 1.0 and th(1) == 0.5 and abs(th(3) - 0.125) < 1e-15

    @pytest.mark.parametrize(
        "factory",
        [
            lambda: cert.ThetaSpec.exponential(0.0),
            lambda: cert.ThetaSpec.exponential(-0.3),
            lambda: cert.ThetaSpec.power(1.0),
            lambda: cert.ThetaSpec.table([1.0, 1.0], tail_ratio=1.0),
        ],
    )
    def test_not_summable_rejected(self, factory):
        with pytest.raises(CertificateError, match="not summable"):
            factory()

    def test_positive_values_required(self):
        with pytest.raises(CertificateError):
            cert.ThetaSpec.table([1.0, 0.0], tail_ratio=0.5)


class TestDelta:
    def test_finite_max(self):
        res = cert.compute_delta(lambda x: x**2, hybrid.FiniteSetRegion({0, 1, 2}))
        assert res.value == 4.0 and res.provenance == "exact"

    def test_zero_functional(self):
        res = cert.compute_delta(lambda x: 0.0, hybrid.FiniteSetRegion({3, 7}))
        assert res.value == 0.0

    def test_ball_boundary_on_symmetric_grid(self):
        res = cert.compute_delta(lambda x: abs(x), hybrid.BallRegion(1.0))
        assert res.value == 1.0
        assert res.provenance.startswith("grid")

    def test_lipschitz_slack_added(self):
        plain = cert.compute_delta(lambda x: abs(x), hybrid.BallRegion(1.0),
                                   search_budget=11)
        slacked = cert.compute_delta(lambda x: abs(x), hybrid.BallRegion(1.0),
                                     search_budget=11, lipschitz=1.0)
        assert slacked.value == plain.value + 1.0 * 0.2 / 2
        assert "lipschitz" in slacked.provenance

    def test_infinite_v_rejected(self):
        with pytest.raises(CertificateError, match="not finite"):
            cert.compute_delta(
                lambda x: math.inf if x == 1 else 0.0,
                hybrid.FiniteSetRegion({0, 1}),
            )

    def test_empty_region_rejected(self):
        with pytest.raises(CertificateError, match="empty"):
            cert.compute_delta(lambda x: 1.0, hybrid.FiniteSetRegion(set()))


def beta_fixture():
    P = np.array([[0.5, 0.3, 0.2], [0, 1, 0], [0, 0, 1]])
    kernel = chains.FiniteKernel(P)
    K = hybrid.FiniteSetRegion({0})
    phi = cert.CallablePhi(lambda t, x: {0: 0.0, 1: 2.0, 2: 4.0}[x])
    return kernel, phi, K


class TestBeta:
    def test_exact_three_state(self):
        kernel, phi, K = beta_fixture()
        res = cert.compute_beta(kernel, phi, K, mode="exact")
        assert abs(res.value - 1.4) < 1e-15
        assert res.provenance == "exact"

    def test_absorbing_region_gives_zero(self):
        P = np.array([[1.0, 0.0], [0.5, 0.5]])
        kernel = chains.FiniteKernel(P)
        res = cert.compute_beta(
            kernel, cert.CallablePhi(lambda t, x: 10.0), hybrid.FiniteSetRegion({0}),
            mode="exact",
        )
        assert res.value == 0.0

    def test_monte_carlo_matches_exact(self):
        kernel, phi, K = beta_fixture()
        res = cert.compute_beta(kernel, phi, K, mode="mc", n=100_000, seed=5)
        assert res.se > 0
        assert abs(res.value - 1.4) <= 3 * res.se

    def test_candidates_mode(self):
        _, phi, K = beta_fixture()
        law = [(0.5, 0), (0.3, 1), (0.2, 2)]
        res = cert.compute_beta(None, phi, K, mode="candidates",
                                candidates=[(0, law)])
        assert abs(res.value - 1.4) < 1e-15


class TestTheoremBound:
    def test_stated_arithmetic(self):
        c = cert.CertificateConstants(C=2, gamma=1, delta=3, beta=1)
        assert cert.theorem_bound(c, 5.0) == 10.0

    def test_zero_beta(self):
        c = cert.CertificateConstants(C=2, gamma=1, delta=3, beta=0)
        assert cert.theorem_bound(c, 5.0) == 8.0

    def test_delta_only(self):
        c = cert.CertificateConstants(C=2, gamma=1, delta=3, beta=0)
        assert cert.theorem_bound(c, 0.0) == 3.0

    def test_monotone_in_each_constant(self):
        base = dict(C=2.0, gamma=1.0, delta=3.0, beta=1.0)
        b0 = cert.theorem_bound(cert.CertificateConstants(**base), 5.0)
        for key in base:
            up = dict(base)
            up[key] = base[key] * 1.1 + 0.1
            bu = cert.theorem_bound(cert.CertificateConstants(**up), 5.0)
            assert bu >= b0
        assert cert.theorem_bound(cert.CertificateConstants(**base), 6.0) >= b0

    def test_c_below_gamma_rejected(self):
        with pytest.raises(CertificateError):
            cert.theorem_bound(
                cert.CertificateConstants(C=0.5, gamma=1.0, delta=0, beta=0), 1.0
            )


class TestExponentialCoherence:
    def test_phi_times_theta_equals_v(self):
        spec = cert.CertificateSpec.exponential(0.37, sqrt3_pow, K_WALK)
        for t in range(0, 40, 7):
            for x in range(0, 12):
                assert spec.phi.value(t, x) * spec.theta(t) == pytest.approx(
                    sqrt3_pow(x), rel=1e-12
                )

    def test_envelope_spot_check(self):
        spec = cert.CertificateSpec.exponential(0.2, sqrt3_pow, K_WALK)
        assert spec.envelope_check(range(10), range(10)) <= 1e-9


class TestExactVerification:
    def test_constant_phi_is_a_martingale(self):
        kernel = walk_kernel()
        spec = cert.CertificateSpec(
            phi=cert.CallablePhi(lambda t, x: 3.0),
            V=lambda x: 0.0,
            theta=cert.ThetaSpec.exponential(1.0),
            K=K_WALK,
        )
        rep = cert.verify_supermartingale_exact(kernel, spec, horizon=10)
        assert rep.ok and abs(rep.min_slack) < 1e-12

    def test_biased_walk_alpha01_passes(self):
        spec = cert.CertificateSpec.exponential(0.1, sqrt3_pow, K_WALK)
        rep = cert.verify_supermartingale_exact(walk_kernel(), spec, horizon=30)
        assert rep.ok
        # one-step factor e^0.1 * 0.8660 < 1 so slack is positive at x=4
        assert rep.min_slack > 0

    def test_biased_walk_alpha02_fails_everywhere_interior(self):
        spec = cert.CertificateSpec.exponential(0.2, sqrt3_pow, K_WALK)
        rep = cert.verify_supermartingale_exact(
            walk_kernel(size=21), spec, horizon=3, max_violations=1000
        )
        assert not rep.ok
        violating_states = {x for (_, x, _) in rep.violations}
        # every interior state outside K violates (the clamped top state gains
        # slack from the truncation and is exempt)
        assert set(range(4, 20)).issubset(violating_states)

    def test_worst_slack_is_reported(self):
        spec = cert.CertificateSpec.exponential(0.2, sqrt3_pow, K_WALK)
        rep = cert.verify_supermartingale_exact(walk_kernel(size=21), spec, horizon=3)
        assert rep.worst_t == 2  # absolute slack worst at the largest time
        assert rep.worst_state == 19

    def test_undefined_family_time_is_an_error(self):
        fam = chains.FiniteKernelFamily(matrices=[walk_kernel().matrix] * 2)
        spec = cert.CertificateSpec.exponential(0.1, sqrt3_pow, K_WALK)
        from driftbound.errors import KernelError

        with pytest.raises(KernelError, match="beyond the declared horizon"):
            cert.verify_supermartingale_exact(fam, spec, horizon=5)


class TestMcVerification:
    def make_batch(self, alpha, seed=3, n=10_000, T=80):
        kernel = walk_kernel(size=61)
        spec = cert.CertificateSpec.exponential(alpha, sqrt3_pow, K_WALK)
        batch = chains.simulate_batch(kernel, 8, T, n, seed)
        return batch, spec

    def test_exact_implies_statistical(self):
        batch, spec = self.make_batch(0.1)
        rep = cert.verify_supermartingale_mc(batch, spec, confidence=0.99)
        if not rep.ok:  # flaky tolerance: one repeat on a fresh seed
            batch, spec = self.make_batch(0.1, seed=4)
            rep = cert.verify_supermartingale_mc(batch, spec, confidence=0.99)
        assert rep.increment_test.ok and rep.lemma_ok

    def test_failing_certificate_is_rejected(self):
        batch, spec = self.make_batch(0.2)
        rep = cert.verify_supermartingale_mc(batch, spec, confidence=0.99)
        assert not rep.increment_test.ok

    def test_deterministic_contraction_negative_pathwise(self):
        kernel = chains.LinearGaussianKernel(np.array([[0.5]]), noise_scale=0.0)
        batch = chains.simulate_batch(kernel, np.array([8.0]), 20, 50, seed=6)
        spec = cert.CertificateSpec.exponential(
            0.3, lambda x: float(np.linalg.norm(x)), hybrid.BallRegion(0.0)
        )
        rep = cert.verify_supermartingale_mc(batch, spec, confidence=0.99)
        assert rep.increment_test.ok
        # e^0.3 / 2 < 1: increments are negative path by path, with the
        # cross-path spread at float-epsilon scale (all paths identical)
        phi = np.exp(0.3 * np.arange(21))[None, :] * np.abs(batch.states[:, :, 0])
        inc = np.diff(phi, axis=1)
        assert (inc < 0).all()
        assert np.ptp(inc, axis=0).max() == 0.0

    def test_x0_inside_region_rejected(self):
        kernel = walk_kernel()
        spec = cert.CertificateSpec.exponential(0.1, sqrt3_pow, K_WALK)
        batch = chains.simulate_batch(kernel, 2, 10, 20, seed=1)
        with pytest.raises(CertificateError, match="outside K"):
            cert.verify_supermartingale_mc(batch, spec)


class TestEmpiricalBound:
    def test_absorbing_start_inside(self):
        P = np.array([[1.0, 0.0], [0.3, 0.7]])
        batch = chains.simulate_batch(chains.FiniteKernel(P), 0, 30, 50, seed=8)
        V = lambda x: 2.0 if x == 0 else 5.0  # noqa: E731
        rep = cert.empirical_bound_check(batch, V, bound=2.0)
        assert rep.ok and rep.sup_mean == 2.0

    def test_violation_is_flagged(self):
        P = np.array([[1.0, 0.0], [0.3, 0.7]])
        batch = chains.simulate_batch(chains.FiniteKernel(P), 0, 10, 50, seed=9)
        rep = cert.empirical_bound_check(batch, lambda x: 2.0, bound=1.0)
        assert not rep.ok and rep.margin_se == -np.inf

    def test_zero_functional_below_any_bound(self):
        P = np.array([[1.0]])
        batch = chains.simulate_batch(chains.FiniteKernel(P), 0, 10, 10, seed=10)
        rep = cert.empirical_bound_check(batch, lambda x: 0.0, bound=0.5)
        assert rep.ok and rep.margin_se == np.inf

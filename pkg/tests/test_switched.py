import math

import numpy as np
import pytest

from driftbound import switched as sw
from driftbound.classk import ClassKFunction
from driftbound.errors import KernelError, SimulationError


def sym_chain(p=0.5):
    return sw.SwitchingChainSpec(P=np.array([[1 - p, p], [p, 1 - p]]))


def rotation_system(scale=0.5, chain=None):
    chain = chain or sw.SwitchingChainSpec(P=np.array([[0.6, 0.4], [0.4, 0.6]]))
    return sw.SwitchedSystemSpec(
        maps=[sw.LinearMap(scale * sw.rotation(0.7)),
              sw.LinearMap(scale * sw.rotation(2.1))],
        chain=chain,
    )


class TestChainSpec:
    def test_p_hat_p_tilde_recomputed(self):
        chain = sw.SwitchingChainSpec(P=np.array([[0.6, 0.4], [0.4, 0.6]]))
        assert chain.p_hat == 0.6 and chain.p_tilde == 0.4

    def test_reducible_chain_rejected(self):
        with pytest.raises(KernelError, match="irreducible"):
            sw.SwitchingChainSpec(P=np.array([[1.0, 0.0], [0.5, 0.5]]))

    def test_single_mode_chain_is_fine(self):
        chain = sw.SwitchingChainSpec(P=np.array([[1.0]]))
        assert chain.p_hat == 1.0 and chain.p_tilde == 0.0


class TestConditions:
    def test_s1_worked_example(self):
        res = sw.check_S1(0.5, 2.0, sw.SwitchingChainSpec(P=np.array([[0.6, 0.4], [0.4, 0.6]])))
        assert res.ok
        assert res.value == pytest.approx(0.7, abs=1e-15)
        assert res.alpha_star == pytest.approx(-math.log(0.7) / 2, abs=1e-12)
        # the discounted product stays strictly below 1
        assert res.value * math.exp(res.alpha_star) < 1.0

    def test_s1_fails_when_product_reaches_one(self):
        res = sw.check_S1(0.999999, 2.0, sym_chain(0.5))
        # p_hat + mu p_tilde = 0.5 + 1.0 = 1.5 -> product ~ 1.5
        assert not res.ok and res.alpha_star is None

    def test_s1_identity_chain_degenerates_to_lambda0(self):
        chain = sw.SwitchingChainSpec(P=np.array([[1.0]]))
        res = sw.check_S1(0.8, 2.0, chain)
        assert res.value == pytest.approx(0.8, abs=1e-15) and res.ok

    def test_s2_symmetric_example(self):
        res = sw.check_S2(np.full((2, 2), 0.4), 2.0, sym_chain(0.5))
        assert res.ok and res.value == pytest.approx(0.8, abs=1e-15)

    def test_s2_identity_chain_degenerates_to_mu_lambda(self):
        chain = sw.SwitchingChainSpec(P=np.array([[1.0]]))
        res = sw.check_S2(np.array([[0.4]]), 2.0, chain)
        assert res.value == pytest.approx(0.8, abs=1e-15)

    def test_s2_asymmetric_hand_computed(self):
        chain = sw.SwitchingChainSpec(P=np.array([[0.9, 0.1], [0.2, 0.8]]))
        Lam = np.array([[0.5, 2.0], [0.1, 0.5]])
        res = sw.check_S2(Lam, 1.5, chain)
        assert not res.ok
        assert res.value == pytest.approx(1.2, abs=1e-12)
        assert res.detail["row_values"] == pytest.approx([0.46, 0.8], abs=1e-12)

    def test_s2_dimension_mismatch(self):
        with pytest.raises(KernelError, match="does not match"):
            sw.check_S2(np.zeros((3, 3)), 1.5, sym_chain())


class TestSwitchingCountBound:
    def test_out_of_range_is_zero(self):
        assert sw.switching_count_bound(sym_chain(), 0, 2, 5) == 0.0
        assert sw.switching_count_bound(sym_chain(), 0, 2, -1) == 0.0

    def test_small_case(self):
        assert sw.switching_count_bound(sym_chain(), 0, 2, 1) == 0.5

    def test_capped_at_one(self):
        # 3 modes so p_hat + p_tilde can exceed 1 and the raw product caps
        chain = sw.SwitchingChainSpec(
            P=np.array([[0.9, 0.1, 0.0], [0.0, 0.9, 0.1], [0.9, 0.0, 0.1]])
        )
        assert chain.p_hat == 0.9 and chain.p_tilde == 0.9
        vals = [sw.switching_count_bound(chain, 0, 8, k) for k in range(9)]
        assert max(vals) == 1.0

    def test_requires_s_before_t(self):
        with pytest.raises(ValueError):
            sw.switching_count_bound(sym_chain(), 3, 3, 0)

    def test_empirical_dominance_three_se(self):
        chain = sym_chain(0.5)
        n, window = 100_000, 10
        modes = sw.simulate_modes(chain, window, n, seed=20240814)
        counts = np.bincount((modes[:, 1:] != modes[:, :-1]).sum(axis=1),
                             minlength=window + 1)
        freq = counts / n
        for k in range(window + 1):
            bound = sw.switching_count_bound(chain, 0, window, k)
            se = math.sqrt(max(freq[k] * (1 - freq[k]), 1e-12) / n)
            assert freq[k] <= bound + 3 * se


class TestSimulation:
    def test_single_mode_halving_exact(self):
        chain = sw.SwitchingChainSpec(P=np.array([[1.0]]))
        sys = sw.SwitchedSystemSpec(maps=[sw.LinearMap([[0.5]])], chain=chain)
        b = sw.simulate_switched(sys, np.array([1.0]), 20, 5, seed=1)
        assert np.array_equal(b.states[:, :, 0], np.tile(0.5 ** np.arange(21), (5, 1)))

    def test_identical_maps_make_state_law_mode_free(self):
        A = 0.5 * sw.rotation(0.9)
        for P in ([[0.6, 0.4], [0.4, 0.6]], [[0.1, 0.9], [0.9, 0.1]]):
            sys = sw.SwitchedSystemSpec(
                maps=[sw.LinearMap(A), sw.LinearMap(A)],
                chain=sw.SwitchingChainSpec(P=np.array(P)),
            )
            b = sw.simulate_switched(sys, np.array([1.0, 2.0]), 30, 10, seed=2)
            if P[0][0] == 0.6:
                ref = b.states
            else:
                assert np.array_equal(b.states, ref)

    def test_scaled_rotations_contract_norms_exactly(self):
        b = sw.simulate_switched(rotation_system(), np.array([3.0, 4.0]), 60, 50, seed=3)
        expected = 5.0 * 0.5 ** np.arange(61)
        assert np.allclose(b.norms(), expected[None, :], rtol=1e-9)

    def test_switch_count_two_ways(self):
        b = sw.simulate_switched(rotation_system(), np.array([1.0, 0.0]), 50, 300, seed=4)
        assert np.array_equal(b.nswitch, b.recount_switches())
        assert (b.nswitch[:, 0] == 0).all()
        assert (np.diff(b.nswitch, axis=1) >= 0).all()
        assert (np.diff(b.nswitch, axis=1) <= 1).all()

    def test_overflow_reported(self):
        chain = sw.SwitchingChainSpec(P=np.array([[1.0]]))
        sys = sw.SwitchedSystemSpec(maps=[sw.LinearMap([[10.0]])], chain=chain)
        with pytest.raises(SimulationError, match="overflow"):
            sw.simulate_switched(sys, np.array([1.0]), 400, 3, seed=5)

    def test_equilibrium_validation(self):
        chain = sw.SwitchingChainSpec(P=np.array([[1.0]]))
        with pytest.raises(KernelError, match="singular"):
            sw.SwitchedSystemSpec(
                maps=[sw.AffineMap(np.zeros((1, 1)), np.array([1.0]))], chain=chain
            )

    def test_nonlinear_map_family(self):
        chain = sw.SwitchingChainSpec(P=np.array([[1.0]]))
        sys = sw.SwitchedSystemSpec(maps=[sw.ScalarTanhMap(0.5)], chain=chain)
        b = sw.simulate_switched(sys, np.array([2.0]), 10, 4, seed=6)
        assert abs(b.states[0, 1, 0] - 0.5 * math.tanh(2.0)) < 1e-15


def weighted_lyap(mu=1.5, lambda0=0.5, r=0.0):
    return sw.LyapunovFamilySpec(
        weights=np.array([1.0, 1.5]), mu=mu, r=r, lambda0=lambda0
    )


class TestFamilyVerification:
    def test_rotation_family_v3_zero_slack(self):
        lyap = weighted_lyap()
        rep = sw.verify_lyapunov_family(lyap, rotation_system(),
                                        sw.RadialGrid(2, 0.1, 10.0))
        assert rep.item_ok("V3") and rep.items["V3"] <= 1e-12

    def test_v2_ratio_threshold(self):
        ok = sw.verify_lyapunov_family(weighted_lyap(mu=1.5), rotation_system(),
                                       sw.RadialGrid(2, 0.5, 5.0))
        bad = sw.verify_lyapunov_family(weighted_lyap(mu=1.4), rotation_system(),
                                        sw.RadialGrid(2, 0.5, 5.0))
        assert ok.item_ok("V2")
        assert not bad.item_ok("V2")

    def test_v3prime_matches_operator_norm_oracle(self):
        A1 = np.array([[0.5, 0.2], [0.0, 0.4]])
        A2 = np.array([[0.3, -0.1], [0.2, 0.35]])
        sys = sw.SwitchedSystemSpec(
            maps=[sw.LinearMap(A1), sw.LinearMap(A2)],
            chain=sw.SwitchingChainSpec(P=np.array([[0.5, 0.5], [0.5, 0.5]])),
        )
        sigmas = [np.linalg.svd(A, compute_uv=False)[0] for A in (A1, A2)]
        grid = sw.RadialGrid(2, 0.5, 4.0, n_radii=4, n_dirs=720)
        # certified with Lambda_ij slightly above the spectral norm of map j
        Lam_hi = np.tile([s * (1 + 1e-6) for s in sigmas], (2, 1))
        lyap_hi = sw.LyapunovFamilySpec(weights=np.array([1.0, 1.5]), mu=1.6,
                                        Lambda=Lam_hi)
        assert sw.verify_lyapunov_family(lyap_hi, sys, grid).item_ok("V3'")
        # rejected with Lambda_ij 1% below it (the grid resolves the gap)
        Lam_lo = np.tile([s * 0.99 for s in sigmas], (2, 1))
        lyap_lo = sw.LyapunovFamilySpec(weights=np.array([1.0, 1.5]), mu=1.6,
                                        Lambda=Lam_lo)
        assert not sw.verify_lyapunov_family(lyap_lo, sys, grid).item_ok("V3'")


class TestPathwise:
    def test_exact_decay_equality(self):
        lyap = sw.LyapunovFamilySpec(weights=np.array([1.0, 1.0]), mu=1.01,
                                     lambda0=0.5)
        b = sw.simulate_switched(rotation_system(), np.array([3.0, 4.0]), 80, 200,
                                 seed=7)
        rep = sw.pathwise_inequality_check(b, lyap)
        assert rep.ok and rep.n_checked == 200 * 81

    def test_single_mode_tight(self):
        chain = sw.SwitchingChainSpec(P=np.array([[1.0]]))
        sys = sw.SwitchedSystemSpec(maps=[sw.LinearMap([[0.5]])], chain=chain)
        lyap = sw.LyapunovFamilySpec(weights=np.array([1.0]), mu=1.5, lambda0=0.5)
        b = sw.simulate_switched(sys, np.array([4.0]), 40, 10, seed=8)
        rep = sw.pathwise_inequality_check(b, lyap, sys)
        assert rep.ok and rep.precondition_ok
        assert (b.nswitch == 0).all()

    def test_weighted_two_mode_thousand_paths(self):
        lyap = weighted_lyap()
        b = sw.simulate_switched(rotation_system(), np.array([3.0, 4.0]), 100, 1000,
                                 seed=9)
        rep = sw.pathwise_inequality_check(b, lyap, rotation_system())
        assert rep.ok and not rep.violations

    def test_precondition_failure_blocks_assertion(self):
        # lambda0 below the true contraction factor: (V3) fails on the grid
        lyap = weighted_lyap(lambda0=0.4)
        sysm = rotation_system()
        b = sw.simulate_switched(sysm, np.array([3.0, 4.0]), 20, 50, seed=10)
        rep = sw.pathwise_inequality_check(b, lyap, sysm)
        assert not rep.precondition_ok and not rep.ok


class TestDiagnostics:
    def test_contracting_system_passes_all(self):
        lyap = weighted_lyap(mu=2.0)
        chain = sw.SwitchingChainSpec(P=np.array([[0.6, 0.4], [0.4, 0.6]]))
        cond = sw.check_S1(0.5, 2.0, chain)
        b = sw.simulate_switched(rotation_system(chain=chain),
                                 np.array([3.0, 4.0]), 100, 400, seed=11)
        diag = sw.stability_diagnostics(b, lyap, cond.alpha_star)
        assert diag.ok and not diag.divergent
        assert diag.decay_ratio <= 1e-6
        assert diag.max_terminal_norm <= 1e-20 * 5.0

    def test_expanding_system_flagged_divergent(self):
        chain = sw.SwitchingChainSpec(P=np.array([[1.0]]))
        sys = sw.SwitchedSystemSpec(maps=[sw.LinearMap([[2.0]])], chain=chain)
        lyap = sw.LyapunovFamilySpec(weights=np.array([1.0]), mu=1.5, lambda0=0.5)
        b = sw.simulate_switched(sys, np.array([1.0]), 40, 20, seed=12)
        diag = sw.stability_diagnostics(b, lyap, 0.1)
        assert diag.divergent and not diag.ok

    def test_discounted_norm_decay_exact(self):
        # e^{a t} ||X_t|| = (e^a / 2)^t ||x0|| for the scaled rotations
        chain = sw.SwitchingChainSpec(P=np.array([[0.6, 0.4], [0.4, 0.6]]))
        alpha = 0.2  # below ln 2
        b = sw.simulate_switched(rotation_system(chain=chain),
                                 np.array([3.0, 4.0]), 50, 30, seed=13)
        lyap = sw.LyapunovFamilySpec(weights=np.array([1.0, 1.0]), mu=1.01,
                                     lambda0=0.5)
        diag = sw.stability_diagnostics(b, lyap, alpha)
        expected = 5.0 * (math.exp(alpha) * 0.5) ** np.arange(51)
        assert np.allclose(diag.discounted_means, expected, rtol=1e-9)

    def test_handoff_supermartingale(self):
        lyap = weighted_lyap(mu=2.0)
        chain = sw.SwitchingChainSpec(P=np.array([[0.6, 0.4], [0.4, 0.6]]))
        cond = sw.check_S1(0.5, 2.0, chain)
        b = sw.simulate_switched(rotation_system(chain=chain),
                                 np.array([3.0, 4.0]), 80, 2000, seed=14)
        rep = sw.handoff_supermartingale_test(b, lyap, cond.alpha_star)
        assert rep.ok


class TestJointKernel:
    def test_one_step_law_and_sampling(self):
        sysm = rotation_system()
        joint = sw.SwitchedJointKernel(sysm)
        z = np.array([0.0, 3.0, 4.0])
        law = joint.one_step_law(z)
        assert [p for p, _ in law] == [0.6, 0.4]
        # the state update uses the current mode's map for every next mode
        for _, nxt in law:
            assert np.allclose(nxt[1:], sysm.maps[0](z[1:]))
        from driftbound import _rng

        draw = joint.sample_step(0, z, _rng.single_stream(1))
        assert draw.shape == (3,) and draw[0] in (0.0, 1.0)

    def test_simulate_batch_generic_path(self):
        from driftbound import chains

        joint = sw.SwitchedJointKernel(rotation_system())
        b = chains.simulate_batch(joint, np.array([0.0, 3.0, 4.0]), 10, 8, seed=15)
        assert b.states.shape == (8, 11, 3)
        # norms halve every step regardless of the mode path
        norms = np.linalg.norm(b.states[:, :, 1:], axis=2)
        assert np.allclose(norms, 5.0 * 0.5 ** np.arange(11)[None, :], rtol=1e-9)
        b2 = chains.simulate_batch(joint, np.array([0.0, 3.0, 4.0]), 10, 8, seed=15)
        assert np.array_equal(b.states, b2.states)

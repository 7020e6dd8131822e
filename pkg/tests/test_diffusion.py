import math

import numpy as np
import pytest

from driftbound import diffusion as df
from driftbound.errors import KernelError


class TestBesqSpec:
    def test_validation(self):
        with pytest.raises(KernelError):
            df.BesqSpec(-1.0, 1.0, 1.0)
        with pytest.raises(KernelError):
            df.BesqSpec(2.0, -1.0, 1.0)
        with pytest.raises(KernelError, match="integral"):
            df.BesqSpec(2.0, 1.0, 1.0, dt=0.3)

    def test_zero_start_zero_dimension_is_absorbed(self):
        spec = df.BesqSpec(0.0, 0.0, 0.5, dt=1e-2, n_paths=200)
        res = df.besq_simulate(spec, seed=1, snapshot_steps=np.array([0, 25, 50]))
        assert (res.terminal == 0.0).all()
        assert (res.snapshots == 0.0).all()

    def test_paths_stay_nonnegative(self):
        spec = df.BesqSpec(0.5, 0.2, 1.0, dt=1e-2, n_paths=500)
        res = df.besq_simulate(spec, seed=2,
                               snapshot_steps=np.arange(0, 101, 10))
        assert (res.snapshots >= 0.0).all() and (res.terminal >= 0.0).all()

    def test_determinism(self):
        spec = df.BesqSpec(2.0, 1.0, 0.5, dt=1e-2, n_paths=300)
        a = df.besq_simulate(spec, seed=3).terminal
        b = df.besq_simulate(spec, seed=3).terminal
        assert np.array_equal(a, b)


class TestMeanIdentity:
    def test_short_horizon_returns_start(self):
        spec = df.BesqSpec(3.0, 2.0, 1e-3, dt=1e-3, n_paths=4000)
        res = df.besq_simulate(spec, seed=4)
        assert abs(res.mean - 2.0) <= 3 * res.se + 3.0 * 1e-3

    def test_identity_with_budget(self):
        spec = df.BesqSpec(2.0, 1.0, 1.0, dt=2e-3, n_paths=20_000)
        rep = df.besq_mean_report(spec, seed=5)
        assert rep.ok
        assert rep.expected == 3.0

    @pytest.mark.parametrize("delta,y0,S", [(0.0, 2.0, 0.5), (1.0, 0.5, 0.25),
                                            (4.0, 3.0, 0.5)])
    def test_identity_across_parameters(self, delta, y0, S):
        spec = df.BesqSpec(delta, y0, S, dt=1e-3, n_paths=8000)
        rep = df.besq_mean_report(spec, seed=6)
        assert rep.ok, (delta, y0, S, rep)


class TestPhiEstimate:
    def test_constant_payoff(self):
        spec = df.BesqSpec(2.0, 1.0, 0.5, dt=1e-2, n_paths=500)
        v, se = df.phi_estimate(0.1, 2.0, lambda y: 7.0, spec, seed=7)
        assert v == 7.0 and se == 0.0

    def test_terminal_consistency(self):
        spec = df.BesqSpec(2.0, 1.0, 0.5, dt=1e-2, n_paths=500)
        v, se = df.phi_estimate(0.5, 3.3, lambda y: y**2, spec, seed=8)
        assert v == pytest.approx(3.3**2, abs=0) and se == 0.0

    def test_linear_payoff_matches_mean_identity(self):
        spec = df.BesqSpec(3.0, 1.5, 1.0, dt=1e-3, n_paths=10_000)
        v, se = df.phi_estimate(0.4, 1.5, lambda y: y, spec, seed=9)
        expected = 1.5 + 3.0 * 0.6
        assert abs(v - expected) <= 3 * se + 3.0 * 1e-3

    def test_time_bounds_checked(self):
        spec = df.BesqSpec(2.0, 1.0, 0.5, dt=1e-2, n_paths=10)
        with pytest.raises(KernelError):
            df.phi_estimate(0.7, 1.0, lambda y: y, spec, seed=10)


class TestShapeChecks:
    GRID = np.array([1.0, 2.0, 3.0, 4.0, 5.0])

    def test_linear_payoff_closed_form(self):
        spec = df.BesqSpec(2.0, 1.0, 1.0, dt=1e-3, n_paths=4000)
        rep = df.phi_shape_check(lambda y: y, spec, self.GRID, seed=11)
        # phi(0, y) = y + delta * S
        assert np.allclose(rep.phi, self.GRID + 2.0, atol=4 * rep.se.max() + 0.02)
        assert rep.monotone_ok and rep.convex_ok
        # linear payoff: residual compatible with 0 at 3 SE + discretization slack
        assert (np.abs(rep.pde_residuals)
                <= 3 * rep.pde_residual_se + 0.01 * rep.pde_scale).all()

    def test_square_payoff_second_moment_oracle(self):
        # E[Y_S^2] = y0^2 + (2 delta + 4)(y0 S + delta S^2 / 2) from the
        # first two moment equations of the squared-radius diffusion
        spec = df.BesqSpec(2.0, 1.0, 1.0, dt=1e-3, n_paths=6000)
        rep = df.phi_shape_check(lambda y: y**2, spec, self.GRID, seed=12)
        delta, S = 2.0, 1.0
        closed = self.GRID**2 + (2 * delta + 4) * (self.GRID * S + delta * S**2 / 2)
        assert np.allclose(rep.phi, closed, rtol=0.03)
        assert rep.monotone_ok and rep.convex_ok

    def test_constant_payoff_trivial(self):
        spec = df.BesqSpec(2.0, 1.0, 0.5, dt=1e-2, n_paths=400)
        rep = df.phi_shape_check(lambda y: np.full_like(y, 3.0), spec, self.GRID,
                                 seed=13)
        assert rep.monotone_ok and rep.convex_ok
        assert (rep.se == 0.0).all()

    def test_coupling_zero_violations_outside_clamp_zone(self):
        spec = df.BesqSpec(2.0, 1.0, 1.0, dt=1e-3, n_paths=4000)
        rep = df.phi_shape_check(lambda y: y**2, spec, self.GRID, seed=14)
        assert rep.coupling_violations == 0
        assert rep.coupling_excluded_pairs < 0.1 * rep.coupling_pairs_checked

    def test_grid_requirements(self):
        spec = df.BesqSpec(2.0, 1.0, 0.5, dt=1e-2, n_paths=100)
        with pytest.raises(KernelError, match="at least 5"):
            df.phi_shape_check(lambda y: y, spec, np.array([1.0, 2.0]), seed=15)
        with pytest.raises(KernelError, match="increasing"):
            df.phi_shape_check(lambda y: y, spec, np.array([1, 1, 2, 3, 4.0]),
                               seed=15)


class TestSector:
    def spec(self, coeff, shift=None):
        drift = (df.DriftSpec("linear", coeff=coeff) if shift is None
                 else df.DriftSpec("radial_shift", coeff=coeff, shift=shift))
        return df.DriftedDiffusionSpec(drift, dim=2, region_radius=2.5, dt=0.01,
                                       horizon=4.0)

    def test_inward_drift_passes(self):
        rep = df.sector_check(self.spec(-1.0))
        assert rep.ok and rep.worst_inner_product < 0

    def test_outward_drift_fails_everywhere(self):
        rep = df.sector_check(self.spec(1.0))
        assert not rep.ok

    def test_radial_shift_sign_analysis(self):
        # b = -x + 2 x/||x||: <x, b> = -||x||^2 + 2||x|| < 0 iff ||x|| > 2
        good = df.sector_check(self.spec(-1.0, shift=2.0))
        assert good.ok  # region radius 2.5 > 2 keeps the grid in the safe zone
        small_region = df.DriftedDiffusionSpec(
            df.DriftSpec("radial_shift", coeff=-1.0, shift=2.0),
            dim=2, region_radius=1.0, dt=0.01, horizon=4.0,
        )
        grid = np.array([[1.5, 0.0], [0.0, 1.9], [3.0, 0.0]])
        rep = df.sector_check(small_region, grid=grid)
        assert not rep.ok

    def test_grid_must_exclude_region(self):
        with pytest.raises(KernelError, match="exclude"):
            df.sector_check(self.spec(-1.0), grid=np.array([[0.1, 0.1]]))


class TestSampledChain:
    def lin_spec(self, dt=1e-2, horizon=6.0):
        return df.DriftedDiffusionSpec(df.DriftSpec("linear", coeff=-1.0), dim=2,
                                       region_radius=1.0, dt=dt, horizon=horizon)

    def test_start_inside_region_is_frozen(self):
        chain = df.sampled_chain(self.lin_spec(), np.array([0.3, 0.2]), n=20,
                                 seed=30)
        assert (chain.tau_int == 0).all()
        assert np.allclose(chain.Z, chain.Z[:, :1, :])

    def test_pure_drift_ode_limit(self):
        spec = df.DriftedDiffusionSpec(df.DriftSpec("linear", coeff=-1.0), dim=1,
                                       region_radius=0.0, dt=1e-3, horizon=4.0)
        chain = df.sampled_chain(spec, np.array([4.0]), n=3, seed=31, noise=False)
        vals = chain.Z[0, :, 0]
        expected = 4.0 * np.exp(-np.arange(5.0))
        assert np.allclose(vals, expected, rtol=3e-3)

    def test_freeze_after_hit(self):
        chain = df.sampled_chain(self.lin_spec(), np.array([2.5, 0.0]), n=200,
                                 seed=32)
        hit = np.isfinite(chain.tau_int)
        assert hit.mean() > 0.9
        norms = np.linalg.norm(chain.Z, axis=2)
        for j in np.nonzero(hit)[0][:50]:
            ti = int(chain.tau_int[j])
            after = chain.Z[j, ti:, :]
            assert np.ptp(after, axis=0).max() == 0.0
            assert norms[j, ti] <= 1.0 + 1e-12

    def test_zeta_supermartingale_linear_payoff(self):
        rep = df.zeta_supermartingale_test(
            self.lin_spec(), np.array([4.0 / math.sqrt(2)] * 2), n=4000, seed=33
        )
        assert rep.ok

    def test_zeta_supermartingale_square_payoff(self):
        rep = df.zeta_supermartingale_test(
            self.lin_spec(), np.array([3.0, 1.0]), n=4000, seed=34, payoff="square"
        )
        assert rep.ok

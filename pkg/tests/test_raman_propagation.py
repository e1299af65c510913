import numpy as np
import pytest
from scipy.integrate import solve_ivp

from uwblink.errors import BvpError, ContractError, GainUndefinedError, StiffnessError
from uwblink.system_model import LaunchProfile, PumpSet, RamanPump
from uwblink.raman_propagation import (PowerEvolution, WaveSet, coupled_rhs,
                                       coupling_matrix, evolution_to_csv,
                                       integrate_span, net_span_gain,
                                       solve_backward_bvp, wave_attenuation_per_m)

from conftest import PAPER_PUMPS, make_fiber, small_grid

LOSSLESS_DB_KM = 1e-12   # effectively zero, kept positive per the fiber contract


def forward_waves(grid):
    return WaveSet.from_link(grid, PumpSet.empty())


class TestCoupledRhs:
    def test_single_wave_pure_attenuation(self):
        fiber = make_fiber(attenuation_db_km=0.2)
        grid = small_grid(1)
        waves = forward_waves(grid)
        p = np.array([2e-3])
        d = coupled_rhs(p, fiber, waves)
        alpha = wave_attenuation_per_m(fiber, waves)[0]
        assert d[0] == pytest.approx(-alpha * 2e-3, rel=1e-12)

    def test_two_wave_photon_flux_derivative(self):
        # pair terms cancel under photon normalization when alpha = 0
        fiber = make_fiber(attenuation_db_km=LOSSLESS_DB_KM)
        grid = small_grid(2, spacing_hz=5e12)
        waves = forward_waves(grid)
        p = np.array([1e-3, 3e-3])
        d = coupled_rhs(p, fiber, waves)
        f = waves.frequency_hz
        flux_rate = d[0] / f[0] + d[1] / f[1]
        assert abs(flux_rate) < 1e-25

    def test_three_wave_matches_hand_assembly(self):
        fiber = make_fiber()
        grid = small_grid(3, spacing_hz=2e12)
        waves = forward_waves(grid)
        p = np.array([1e-3, 2e-3, 0.5e-3])
        got = coupled_rhs(p, fiber, waves)
        f = waves.frequency_hz
        alpha = wave_attenuation_per_m(fiber, waves)
        expected = np.zeros(3)
        for k in range(3):
            acc = -alpha[k] * p[k]
            for j in range(3):
                if f[j] > f[k]:
                    acc += fiber.raman_gain_per_w_m(f[j] - f[k]) * p[j] * p[k]
                elif f[j] < f[k]:
                    acc -= (f[k] / f[j]) * fiber.raman_gain_per_w_m(f[k] - f[j]) * p[j] * p[k]
            expected[k] = acc
        np.testing.assert_allclose(got, expected, rtol=1e-12)

    def test_negative_power_rejected(self):
        fiber = make_fiber()
        waves = forward_waves(small_grid(1))
        with pytest.raises(ContractError):
            coupled_rhs(np.array([-1e-3]), fiber, waves)


class TestIntegrateSpan:
    def test_pure_attenuation_end_power(self):
        fiber = make_fiber(attenuation_db_km=0.2, span_length_km=100.0)
        waves = forward_waves(small_grid(1))
        evo = integrate_span(np.array([1e-3]), waves, fiber, rtol=1e-12, atol=1e-22)
        end_db = 10 * np.log10(evo.power_w[0, -1] / evo.power_w[0, 0])
        assert end_db == pytest.approx(-20.0, abs=1e-9)

    def test_zero_launch_stays_zero(self):
        fiber = make_fiber()
        waves = forward_waves(small_grid(3))
        evo = integrate_span(np.zeros(3), waves, fiber)
        assert np.all(evo.power_w == 0)

    def test_photon_flux_conserved_against_reference(self):
        fiber = make_fiber(attenuation_db_km=LOSSLESS_DB_KM)
        grid = small_grid(2, spacing_hz=5e12)
        waves = forward_waves(grid)
        p0 = np.array([1e-3, 2e-3])
        evo = integrate_span(p0, waves, fiber, rtol=1e-10)
        f = waves.frequency_hz
        flux = evo.power_w.T @ (1.0 / f)
        assert np.max(np.abs(flux / flux[0] - 1)) < 1e-8

        # independent reference: scipy DOP853 at tight tolerance
        coupling = coupling_matrix(fiber, waves)
        alpha = wave_attenuation_per_m(fiber, waves)
        sol = solve_ivp(lambda z, p: p * (-alpha + coupling @ p),
                        (0.0, fiber.span_length_m), p0, method="DOP853",
                        rtol=1e-12, atol=1e-20)
        np.testing.assert_allclose(evo.power_w[:, -1], sol.y[:, -1], rtol=1e-8)

    def test_halving_tolerance_stable(self):
        fiber = make_fiber()
        grid = small_grid(4, spacing_hz=1e12)
        waves = forward_waves(grid)
        p0 = np.full(4, 5e-3)
        end1 = integrate_span(p0, waves, fiber, rtol=1e-6).power_w[:, -1]
        end2 = integrate_span(p0, waves, fiber, rtol=5e-7).power_w[:, -1]
        assert np.max(np.abs(end1 / end2 - 1)) < 1e-6

    def test_output_grid_resolution_floor(self):
        fiber = make_fiber()
        waves = forward_waves(small_grid(1))
        evo = integrate_span(np.array([1e-3]), waves, fiber, z_points=5)
        # 100 km span keeps at least 1 km output resolution
        assert evo.z_m.size >= 101

    def test_blowup_reported_as_stiffness(self):
        # a huge backward-pump trial value at z=0 runs away along +z
        fiber = make_fiber()
        grid = small_grid(1)
        pumps = PumpSet((RamanPump(1440e-9, 1.0, "backward"),))
        waves = WaveSet.from_link(grid, pumps)
        with pytest.raises(StiffnessError):
            integrate_span(np.array([10e-3, 800.0]), waves, fiber)

    def test_agrees_with_scipy_on_pumped_system(self):
        fiber = make_fiber()
        grid = small_grid(4)
        pumps = PumpSet((RamanPump(1450e-9, 0.2, "forward"),))
        waves = WaveSet.from_link(grid, pumps)
        p0 = np.concatenate([np.full(4, 1e-3), [0.2]])
        evo = integrate_span(p0, waves, fiber, rtol=1e-8)
        coupling = coupling_matrix(fiber, waves)
        alpha = wave_attenuation_per_m(fiber, waves)
        sol = solve_ivp(lambda z, p: p * (-alpha + coupling @ p),
                        (0.0, fiber.span_length_m), p0, method="DOP853",
                        rtol=1e-12, atol=1e-20)
        np.testing.assert_allclose(evo.power_w[:, -1], sol.y[:, -1], rtol=1e-7)


class TestBackwardBvp:
    def test_zero_backward_power_single_iteration(self, paper_grid, paper_fiber):
        pumps = PumpSet((RamanPump(1440e-9, 0.0, "backward"),))
        launch = LaunchProfile.uniform_from_total(17.0, paper_grid.n_channels)
        evo = solve_backward_bvp(pumps, launch, paper_fiber, paper_grid)
        assert evo.bvp_iterations == 1
        assert evo.bvp_residual == 0.0

    def test_forward_only_equals_ivp(self):
        fiber = make_fiber()
        grid = small_grid(4)
        pumps = PumpSet((RamanPump(1445e-9, 0.15, "forward"),))
        launch = LaunchProfile(np.zeros(4))
        evo_bvp = solve_backward_bvp(pumps, launch, fiber, grid)
        waves = WaveSet.from_link(grid, pumps)
        p0 = np.concatenate([launch.per_channel_w, [0.15]])
        evo_ivp = integrate_span(p0, waves, fiber)
        np.testing.assert_array_equal(evo_bvp.power_w, evo_ivp.power_w)

    def test_paper_pump_set_converges(self, paper_hybrid_link):
        evo = solve_backward_bvp(paper_hybrid_link.pump_set,
                                 paper_hybrid_link.launch_profile,
                                 paper_hybrid_link.fiber, paper_hybrid_link.grid)
        assert evo.bvp_residual < 1e-4
        # backward pumps meet their injection targets at z = L
        targets = np.array([p.power_w for p in paper_hybrid_link.pump_set.backward()])
        got = evo.power_w[-len(targets):, -1]
        np.testing.assert_allclose(got, targets, rtol=2e-4)

    def test_bvp_reintegration_consistency(self, paper_hybrid_link):
        evo = solve_backward_bvp(paper_hybrid_link.pump_set,
                                 paper_hybrid_link.launch_profile,
                                 paper_hybrid_link.fiber, paper_hybrid_link.grid)
        waves = evo.waves
        evo2 = integrate_span(evo.power_w[:, 0].copy(), waves, paper_hybrid_link.fiber)
        targets = np.array([p.power_w for p in paper_hybrid_link.pump_set.backward()])
        got = evo2.power_w[-len(targets):, -1]
        assert np.max(np.abs(got / targets - 1)) < 2e-4

    def test_on_off_gain_positive_in_pumped_bands(self, paper_hybrid_link):
        link = paper_hybrid_link
        evo_on = solve_backward_bvp(link.pump_set, link.launch_profile,
                                    link.fiber, link.grid)
        evo_off = solve_backward_bvp(PumpSet.empty(), link.launch_profile,
                                     link.fiber, link.grid)
        gain_on = net_span_gain(evo_on, link.grid)
        gain_off = net_span_gain(evo_off, link.grid)
        on_off = gain_on - gain_off
        for band in ("C", "L"):
            idx = link.grid.band_indices(band)
            assert np.all(on_off[idx] > 0)

    def test_net_gain_smooth_across_channels(self, paper_hybrid_link):
        # no glitches: within-band steps stay bounded (the L-band edge sits on
        # the steep post-peak Raman slope, so ~0.9 dB/channel is genuine
        # physics) and the curve has no kinks (small second differences)
        link = paper_hybrid_link
        evo = solve_backward_bvp(link.pump_set, link.launch_profile,
                                 link.fiber, link.grid)
        gain = net_span_gain(evo, link.grid)
        labels = link.grid.band_of_channel
        same_band = np.array([labels[i] == labels[i + 1]
                              for i in range(len(labels) - 1)])
        jumps = np.abs(np.diff(gain))[same_band]
        assert np.max(jumps) < 1.0
        curv = np.abs(np.diff(gain, 2))
        inner = same_band[:-1] & same_band[1:]
        assert np.max(curv[inner]) < 0.25

    def test_nonconvergence_raises_bvp_error(self):
        fiber = make_fiber()
        grid = small_grid(3)
        pumps = PumpSet((RamanPump(1440e-9, 0.2, "backward"),))
        launch = LaunchProfile(np.zeros(3))
        with pytest.raises(BvpError) as exc:
            solve_backward_bvp(pumps, launch, fiber, grid, max_iterations=1,
                               residual_tol=1e-12)
        assert exc.value.residual is not None


class TestPumpRemovalMonotonicity:
    def test_removing_a_pump_never_helps_everywhere(self):
        fiber = make_fiber()
        grid = small_grid(6)
        pumps = PumpSet((RamanPump(1450e-9, 0.15, "forward"),
                         RamanPump(1460e-9, 0.10, "backward")))
        launch = LaunchProfile(np.full(6, -2.0))
        base = net_span_gain(solve_backward_bvp(pumps, launch, fiber, grid), grid)
        for drop in range(len(pumps.pumps)):
            kept = PumpSet(tuple(p for i, p in enumerate(pumps.pumps) if i != drop))
            gain = net_span_gain(solve_backward_bvp(kept, launch, fiber, grid), grid)
            assert not np.all(gain > base)


class TestGainAndExport:
    def test_pure_attenuation_gain(self):
        # nanowatt launches keep inter-channel Raman transfer negligible
        fiber = make_fiber(attenuation_db_km=0.2)
        grid = small_grid(3)
        waves = forward_waves(grid)
        evo = integrate_span(np.full(3, 1e-9), waves, fiber, rtol=1e-10)
        gain = net_span_gain(evo, grid)
        np.testing.assert_allclose(gain, -20.0, atol=1e-6)

    def test_zero_launch_gain_undefined(self):
        fiber = make_fiber()
        grid = small_grid(2)
        waves = forward_waves(grid)
        evo = integrate_span(np.array([1e-3, 0.0]), waves, fiber)
        with pytest.raises(GainUndefinedError):
            net_span_gain(evo, grid)

    def test_csv_export_shape(self):
        fiber = make_fiber()
        grid = small_grid(2)
        waves = forward_waves(grid)
        evo = integrate_span(np.full(2, 1e-3), waves, fiber)
        text = evolution_to_csv(evo)
        lines = text.strip().split("\n")
        assert lines[0] == "z_km,wave_id,power_mw"
        assert len(lines) == 1 + 2 * evo.z_m.size

    def test_negative_power_matrix_rejected(self):
        waves = forward_waves(small_grid(1))
        with pytest.raises(ContractError):
            PowerEvolution(z_m=np.array([0.0, 1.0]),
                           power_w=np.array([[1e-3, -1e-6]]), waves=waves)

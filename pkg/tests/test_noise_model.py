import mpmath
import numpy as np
import pytest

from uwblink.constants import BOLTZMANN, PLANCK
from uwblink.errors import ContractError
from uwblink.noise_model import (AsePerChannel, accumulate_ase, distributed_ase,
                                 lumped_ase, phonon_occupancy)
from uwblink.raman_propagation import WaveSet, integrate_span, solve_backward_bvp
from uwblink.system_model import (AmplifierSpec, LaunchProfile, PumpSet, RamanPump,
                                  build_grid, default_band_plan)

from conftest import make_fiber, small_grid


def test_phonon_occupancy_13thz_298k():
    # frozen from a high-precision evaluation of 1/(exp(h df / k T) - 1)
    with mpmath.workdps(40):
        expected = float(1 / (mpmath.e ** (mpmath.mpf(PLANCK) * mpmath.mpf(13e12)
                                           / (mpmath.mpf(BOLTZMANN) * 298)) - 1))
    assert expected == pytest.approx(0.1405617, rel=1e-6)
    assert phonon_occupancy(13e12, 298.0) == pytest.approx(expected, rel=1e-12)


def test_phonon_occupancy_rejects_nonpositive():
    with pytest.raises(ContractError):
        phonon_occupancy(-1e12, 298.0)
    with pytest.raises(ContractError):
        phonon_occupancy(1e12, 0.0)


class TestDistributedAse:
    def _evolution(self, fiber, grid, pumps, launch_dbm=-2.0):
        launch = LaunchProfile(np.full(grid.n_channels, launch_dbm))
        return solve_backward_bvp(pumps, launch, fiber, grid)

    def test_zero_pumps_zero_ase(self):
        fiber = make_fiber()
        grid = small_grid(4)
        evo = self._evolution(fiber, grid, PumpSet.empty())
        np.testing.assert_array_equal(distributed_ase(evo, fiber, grid), 0.0)

    def test_pumped_channels_accumulate_ase(self):
        fiber = make_fiber()
        grid = small_grid(4)
        pumps = PumpSet((RamanPump(1450e-9, 0.2, "forward"),))
        evo = self._evolution(fiber, grid, pumps)
        ase = distributed_ase(evo, fiber, grid)
        assert np.all(ase > 0)

    def test_monotone_in_pump_power(self):
        fiber = make_fiber()
        grid = small_grid(4)
        levels = [0.05, 0.1, 0.2]
        values = []
        for p in levels:
            evo = self._evolution(fiber, grid, PumpSet((RamanPump(1450e-9, p, "forward"),)))
            values.append(distributed_ase(evo, fiber, grid))
        assert np.all(values[1] >= values[0])
        assert np.all(values[2] >= values[1])

    def test_reference_bandwidth_scaling(self):
        fiber = make_fiber()
        grid = small_grid(4)
        pumps = PumpSet((RamanPump(1450e-9, 0.15, "backward"),))
        evo = self._evolution(fiber, grid, pumps)
        a1 = distributed_ase(evo, fiber, grid, reference_bandwidth_hz=96e9)
        a2 = distributed_ase(evo, fiber, grid, reference_bandwidth_hz=192e9)
        np.testing.assert_allclose(a2, 2.0 * a1, rtol=1e-12)

    def test_independent_quadrature_oracle(self):
        # re-derive one channel's ASE with a dense independent integration
        fiber = make_fiber(attenuation_db_km=0.2)
        grid = small_grid(1)
        pumps = PumpSet((RamanPump(1450e-9, 0.1, "forward"),))
        evo = self._evolution(fiber, grid, pumps, launch_dbm=-30.0)
        got = distributed_ase(evo, fiber, grid)[0]

        z = evo.z_m
        p_pump = evo.power_w[1]
        rho = evo.power_w[0] / evo.power_w[0, 0]
        f_ch = grid.channel_center_frequency_hz[0]
        f_p = evo.waves.frequency_hz[1]
        df = f_p - f_ch
        g = fiber.raman_gain_per_w_m(df)
        eta = 1.0 / np.expm1(PLANCK * df / (BOLTZMANN * fiber.temperature_k))
        source = 2 * PLANCK * f_ch * grid.symbol_rate_baud * g * (1 + eta) * p_pump
        expected = np.trapezoid(source * rho[-1] / rho, z)
        assert got == pytest.approx(expected, rel=1e-9)


class TestLumpedAse:
    def test_transparent_noiseless_anchor(self):
        grid = small_grid(3)
        amp = AmplifierSpec(noise_figure_db={"C": 0.0})
        ase = lumped_ase(np.zeros(3), amp, grid)
        np.testing.assert_allclose(ase, 0.0, atol=1e-30)

    def test_reference_case_value(self):
        # h f B (G F - 1) at G=20 dB, NF=4.5 dB, f=c/1550nm, B=96 GHz
        grid = small_grid(1)
        f = grid.channel_center_frequency_hz[0]
        amp = AmplifierSpec(noise_figure_db={"C": 4.5})
        got = lumped_ase(np.array([20.0]), amp, grid, reference_bandwidth_hz=96e9)[0]
        with mpmath.workdps(40):
            expected = float(mpmath.mpf(PLANCK) * mpmath.mpf(f) * mpmath.mpf(96e9)
                             * (100 * 10 ** mpmath.mpf("0.45") - 1))
        assert got == pytest.approx(expected, rel=1e-12)
        assert got == pytest.approx(3.45e-6, rel=0.01)

    def test_band_noise_figure_ratio(self):
        # at equal high gain (G F >> 1) the S/C per-photon ASE ratio
        # approaches the noise-factor ratio 10^((7-4.5)/10)
        grid = build_grid(default_band_plan())
        amp = AmplifierSpec.paper_default()
        ase = lumped_ase(np.full(grid.n_channels, 60.0), amp, grid)
        s = grid.band_indices("S")
        c = grid.band_indices("C")
        f = grid.channel_center_frequency_hz
        ratio = (ase[s[0]] / f[s[0]]) / (ase[c[0]] / f[c[0]])
        assert ratio == pytest.approx(10 ** 0.25, rel=1e-6)

    def test_monotone_in_nf_and_gain(self):
        grid = small_grid(2)
        a1 = lumped_ase(np.array([15.0, 15.0]), AmplifierSpec({"C": 4.0}), grid)
        a2 = lumped_ase(np.array([15.0, 15.0]), AmplifierSpec({"C": 5.0}), grid)
        a3 = lumped_ase(np.array([16.0, 16.0]), AmplifierSpec({"C": 4.0}), grid)
        assert np.all(a2 > a1)
        assert np.all(a3 > a1)

    def test_sub_unity_gain_floored_with_warning(self):
        grid = small_grid(2)
        amp = AmplifierSpec({"C": 4.0})
        with pytest.warns(UserWarning):
            ase = lumped_ase(np.array([-1.0, 0.0]), amp, grid)
        f = grid.channel_center_frequency_hz
        assert ase[0] / f[0] == pytest.approx(ase[1] / f[1], rel=1e-9)

    def test_uniform_within_band_up_to_frequency_factor(self):
        # pumps off, flat loss, negligible ISRS: ASE/(h f) constant in band
        fiber = make_fiber(attenuation_db_km=0.2)
        grid = small_grid(6)
        waves = WaveSet.from_link(grid, PumpSet.empty())
        evo = integrate_span(np.full(6, 1e-9), waves, fiber, rtol=1e-10)
        gain_db = 10 * np.log10(evo.power_w[:, -1] / evo.power_w[:, 0])
        ase = lumped_ase(-gain_db, AmplifierSpec({"C": 5.0}), grid)
        norm = ase / grid.channel_center_frequency_hz
        assert np.max(norm) / np.min(norm) - 1 < 1e-6


class TestAccumulate:
    def _one(self, n=3, s=1.0):
        return AsePerChannel(distributed_w=np.full(n, 1e-9 * s),
                             lumped_w=np.full(n, 2e-9 * s),
                             reference_bandwidth_hz=96e9)

    def test_single_span_identity(self):
        one = self._one()
        acc = accumulate_ase([one])
        np.testing.assert_array_equal(acc.total_w, one.total_w)

    def test_ten_identical_spans(self):
        acc = accumulate_ase([self._one()] * 10)
        np.testing.assert_allclose(acc.total_w, 10 * self._one().total_w, rtol=1e-12)

    def test_mismatched_lengths_rejected(self):
        with pytest.raises(ContractError):
            accumulate_ase([self._one(3), self._one(4)])

    def test_negative_ase_rejected(self):
        with pytest.raises(ContractError):
            AsePerChannel(distributed_w=np.array([-1e-9]),
                          lumped_w=np.array([0.0]),
                          reference_bandwidth_hz=96e9)

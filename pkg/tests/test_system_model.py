import numpy as np
import pytest
from hypothesis import given, strategies as st

from uwblink.errors import ConfigError, ContractError, SpectrumRangeError
from uwblink.system_model import (AmplifierSpec, Band, BandPlan, FiberSpec,
                                  LaunchProfile, LinkSpec, PumpSet, RamanPump,
                                  SpectrumTable, build_grid, dbm_to_watt,
                                  default_band_plan, dispersion_to_beta2,
                                  dispersion_to_beta3, frequency_to_wavelength,
                                  gamma_from_effective_area, sample_spectrum,
                                  watt_to_dbm, wavelength_to_frequency)

from conftest import flat_attenuation_table, make_fiber


class TestConversions:
    def test_zero_dbm_is_one_milliwatt(self):
        assert dbm_to_watt(0.0) == pytest.approx(1e-3, rel=1e-15)

    def test_1550nm_frequency(self):
        # c / 1550e-9 evaluated directly
        assert wavelength_to_frequency(1550e-9) == pytest.approx(1.9341448903225806e14, rel=1e-12)

    def test_beta2_at_1550(self):
        # -D lambda^2/(2 pi c) with D = 16.5 ps/(nm km): -21.045 ps^2/km
        d_si = 16.5e-6
        beta2 = dispersion_to_beta2(d_si, 1550e-9)
        assert beta2 * 1e27 == pytest.approx(-21.0449, rel=1e-4)

    def test_beta3_at_1550(self):
        beta3 = dispersion_to_beta3(16.5e-6, 90.0, 1550e-9)
        assert beta3 * 1e39 == pytest.approx(0.18104, rel=1e-3)

    @given(st.floats(-60.0, 40.0))
    def test_dbm_watt_round_trip(self, p_dbm):
        assert float(watt_to_dbm(dbm_to_watt(p_dbm))) == pytest.approx(p_dbm, abs=1e-12)

    @given(st.floats(1.0e-6, 2.0e-6))
    def test_wavelength_frequency_round_trip(self, lam):
        back = float(frequency_to_wavelength(wavelength_to_frequency(lam)))
        assert back == pytest.approx(lam, rel=1e-12)

    def test_rejects_nonpositive_wavelength(self):
        with pytest.raises(ContractError):
            wavelength_to_frequency(0.0)

    def test_rejects_negative_watts(self):
        with pytest.raises(ContractError):
            watt_to_dbm(-1e-3)

    def test_gamma_from_effective_area_matches_configured(self):
        gamma = gamma_from_effective_area(80e-12, 1550e-9)
        assert gamma == pytest.approx(1.16e-3, rel=0.02)


class TestGrid:
    def test_default_plan_channel_count(self, paper_grid):
        assert paper_grid.n_channels == 131

    def test_default_plan_band_gaps(self, paper_grid):
        lam = np.sort(paper_grid.channel_wavelength_m)
        gaps = np.diff(lam)
        big = np.sort(gaps[gaps > 2 * np.median(gaps)])
        assert big.size == 2
        assert big[0] * 1e9 == pytest.approx(5.0, abs=1e-6)
        assert big[1] * 1e9 == pytest.approx(10.0, abs=1e-6)

    def test_default_plan_band_membership(self, paper_grid):
        counts = {b: len(paper_grid.band_indices(b)) for b in ("S", "C", "L")}
        assert counts == {"S": 40, "C": 44, "L": 47}
        assert sum(counts.values()) == paper_grid.n_channels

    def test_frequencies_strictly_increasing(self, paper_grid):
        assert np.all(np.diff(paper_grid.channel_center_frequency_hz) > 0)

    def test_uniform_spacing_inside_bands(self, paper_grid):
        f = paper_grid.channel_center_frequency_hz
        labels = paper_grid.band_of_channel
        for i in range(len(f) - 1):
            if labels[i] == labels[i + 1]:
                assert f[i + 1] - f[i] == pytest.approx(100e9, rel=1e-9)

    def test_two_channel_single_band_spacing(self):
        plan = BandPlan(bands=(Band("C", 2),), channel_spacing_hz=100e9,
                        symbol_rate_baud=96e9, gaps_nm=())
        grid = build_grid(plan)
        df = np.diff(grid.channel_center_frequency_hz)
        assert df[0] == pytest.approx(100e9, abs=1e-3)

    def test_zero_width_band_rejected(self):
        with pytest.raises(ConfigError):
            BandPlan(bands=(Band("C", 0),), channel_spacing_hz=100e9,
                     symbol_rate_baud=96e9, gaps_nm=())

    def test_negative_gap_rejected(self):
        with pytest.raises(ConfigError):
            BandPlan(bands=(Band("S", 2), Band("C", 2)), channel_spacing_hz=100e9,
                     symbol_rate_baud=96e9, gaps_nm=(-1.0,))

    def test_overlapping_edges_rejected(self):
        with pytest.raises(ConfigError):
            BandPlan.from_edges([("S", 1500.0, 1530.0), ("C", 1525.0, 1560.0)],
                                100e9, 96e9)

    def test_build_grid_deterministic(self):
        g1 = build_grid(default_band_plan())
        g2 = build_grid(default_band_plan())
        assert np.array_equal(g1.channel_center_frequency_hz,
                              g2.channel_center_frequency_hz)
        assert g1.band_of_channel == g2.band_of_channel


class TestSpectra:
    def test_attenuation_reproduces_knots(self, paper_fiber):
        assert sample_spectrum(paper_fiber, "attenuation", 1550e-9) == pytest.approx(0.191, abs=1e-12)
        assert sample_spectrum(paper_fiber, "attenuation", 1410e-9) == pytest.approx(0.247, abs=1e-12)

    def test_raman_zero_at_zero_offset(self, paper_fiber):
        assert sample_spectrum(paper_fiber, "raman_gain", 0.0) == 0.0

    def test_raman_peak(self, paper_fiber):
        peak = sample_spectrum(paper_fiber, "raman_gain", 13.2e12)
        assert peak == pytest.approx(0.42, rel=0.05)

    def test_out_of_domain_rejected(self, paper_fiber):
        with pytest.raises(SpectrumRangeError):
            sample_spectrum(paper_fiber, "attenuation", 1300e-9)
        with pytest.raises(SpectrumRangeError):
            sample_spectrum(paper_fiber, "raman_gain", 40e12)

    def test_unknown_kind_rejected(self, paper_fiber):
        with pytest.raises(ContractError):
            sample_spectrum(paper_fiber, "dispersion", 1550e-9)

    def test_interpolation_no_overshoot(self, paper_fiber):
        # shape preservation: midpoint values stay inside the knot range
        table = paper_fiber.raman_gain
        mids = 0.5 * (table.x[:-1] + table.x[1:])
        vals = table.sample(mids)
        lo = np.minimum(table.y[:-1], table.y[1:])
        hi = np.maximum(table.y[:-1], table.y[1:])
        assert np.all(vals >= lo - 1e-15)
        assert np.all(vals <= hi + 1e-15)

    def test_raman_nonnegative_dense(self, paper_fiber):
        off = np.linspace(0, 30e12, 4096)
        assert np.all(paper_fiber.raman_gain.sample(off) >= 0)


class TestFiberSpec:
    def test_gamma_area_consistency_enforced(self):
        with pytest.raises(ConfigError):
            FiberSpec.create(gamma_per_w_km=1.5, effective_area_um2=80.0)

    def test_negative_attenuation_rejected(self):
        lam = np.linspace(1350, 1650, 8) * 1e-9
        bad = SpectrumTable(lam, np.linspace(0.3, -0.1, 8))
        with pytest.raises(ConfigError):
            FiberSpec.create(attenuation_table=bad, effective_area_um2=None)

    def test_raman_nonzero_origin_rejected(self):
        off = np.linspace(0, 30e12, 8)
        bad = SpectrumTable(off, np.full(8, 0.2))
        with pytest.raises(ConfigError):
            FiberSpec.create(raman_gain_table=bad, effective_area_um2=None)


class TestPumpsAndLaunch:
    def test_pump_window_enforced(self):
        with pytest.raises(ConfigError):
            PumpSet((RamanPump(1550e-9, 0.1, "forward"),))

    def test_negative_pump_power_rejected(self):
        with pytest.raises(ConfigError):
            RamanPump(1440e-9, -0.1, "forward")

    def test_bad_direction_rejected(self):
        with pytest.raises(ConfigError):
            RamanPump(1440e-9, 0.1, "sideways")

    def test_launch_profile_finite(self):
        with pytest.raises(ConfigError):
            LaunchProfile(np.array([0.0, np.inf]))

    def test_uniform_from_total(self):
        lp = LaunchProfile.uniform_from_total(18.75, 131)
        assert lp.per_channel_dbm[0] == pytest.approx(18.75 - 10 * np.log10(131))
        assert lp.total_dbm == pytest.approx(18.75, abs=1e-12)


class TestLinkSpec:
    def test_profile_length_checked(self, paper_grid, paper_fiber):
        with pytest.raises(ConfigError):
            LinkSpec(10, paper_fiber, paper_grid, AmplifierSpec.paper_default(),
                     PumpSet.empty(), LaunchProfile(np.zeros(7)))

    def test_missing_band_noise_figure(self, paper_grid, paper_fiber):
        with pytest.raises(ConfigError):
            LinkSpec(10, paper_fiber, paper_grid,
                     AmplifierSpec(noise_figure_db={"C": 4.5}),
                     PumpSet.empty(),
                     LaunchProfile(np.zeros(paper_grid.n_channels)))

    def test_nonpositive_spans_rejected(self, paper_grid, paper_fiber):
        with pytest.raises(ConfigError):
            LinkSpec(0, paper_fiber, paper_grid, AmplifierSpec.paper_default(),
                     PumpSet.empty(),
                     LaunchProfile(np.zeros(paper_grid.n_channels)))

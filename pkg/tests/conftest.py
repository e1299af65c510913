import numpy as np
import pytest

from uwblink.system_model import (AmplifierSpec, Band, BandPlan, FiberSpec,
                                  LaunchProfile, LinkSpec, PumpSet, RamanPump,
                                  SpectrumTable, build_grid, default_band_plan)


def flat_attenuation_table(db_per_km, lo_nm=1350.0, hi_nm=1650.0):
    lam = np.linspace(lo_nm, hi_nm, 16) * 1e-9
    return SpectrumTable(lam, np.full(16, db_per_km), x_unit="m", y_unit="dB/km")


def make_fiber(attenuation_db_km=None, gamma_per_w_km=1.16, span_length_km=100.0,
               dispersion_ps_nm_km=16.5, dispersion_slope_ps_nm2_km=0.09):
    """Test fiber: packaged spectra unless a flat attenuation is requested."""
    table = None if attenuation_db_km is None else flat_attenuation_table(attenuation_db_km)
    return FiberSpec.create(
        attenuation_table=table,
        gamma_per_w_km=gamma_per_w_km,
        dispersion_ps_nm_km=dispersion_ps_nm_km,
        dispersion_slope_ps_nm2_km=dispersion_slope_ps_nm2_km,
        span_length_km=span_length_km,
        effective_area_um2=None,
    )


def small_grid(n_channels=5, spacing_hz=100e9, symbol_rate=96e9, label="C"):
    plan = BandPlan(bands=(Band(label, n_channels),), channel_spacing_hz=spacing_hz,
                    symbol_rate_baud=symbol_rate, gaps_nm=())
    return build_grid(plan)


PAPER_PUMPS = PumpSet((
    RamanPump(1405e-9, 0.1536, "forward"),
    RamanPump(1410e-9, 0.2401, "forward"),
    RamanPump(1455e-9, 0.0313, "forward"),
    RamanPump(1422e-9, 0.2492, "backward"),
    RamanPump(1428e-9, 0.0317, "backward"),
    RamanPump(1437e-9, 0.2500, "backward"),
    RamanPump(1452e-9, 0.0800, "backward"),
    RamanPump(1483e-9, 0.2253, "backward"),
))


@pytest.fixture(scope="session")
def paper_grid():
    return build_grid(default_band_plan())


@pytest.fixture(scope="session")
def paper_fiber():
    return FiberSpec.create()


@pytest.fixture(scope="session")
def paper_hybrid_link(paper_grid, paper_fiber):
    launch = LaunchProfile.uniform_from_total(18.75, paper_grid.n_channels)
    return LinkSpec(10, paper_fiber, paper_grid, AmplifierSpec.paper_default(),
                    PAPER_PUMPS, launch)


@pytest.fixture(scope="session")
def paper_lumped_link(paper_grid, paper_fiber):
    launch = LaunchProfile.uniform_from_total(23.85, paper_grid.n_channels)
    return LinkSpec(10, paper_fiber, paper_grid, AmplifierSpec.paper_default(),
                    PumpSet.empty(), launch)

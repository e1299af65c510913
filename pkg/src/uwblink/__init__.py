"""uwblink: ultra-wideband hybrid-amplified optical link simulator and
launch-power/pump optimizer."""

from .system_model import (AmplifierSpec, Band, BandPlan, FiberSpec, LaunchProfile,
                           LinkSpec, PumpSet, RamanPump, WdmGrid, build_grid,
                           default_band_plan, sample_spectrum)
from .raman_propagation import (PowerEvolution, WaveSet, coupled_rhs, integrate_span,
                                net_span_gain, solve_backward_bvp)
from .noise_model import AsePerChannel, accumulate_ase, distributed_ase, lumped_ase
from .nli_model import (NliPerChannel, accumulate_nli, closed_form_nli,
                        fit_effective_profiles, gn_numerical_oracle)
from .link_engine import LinkResult, SnrReport, simulate_link, throughput
from .optimizer import (PsoConfig, StageResult, pso_maximize, savitzky_golay_smooth,
                        stage1_pump_and_uniform_lp, stage2_per_channel_lp)
from .config import ScenarioConfig, build_link_spec, load_config, load_preset

__all__ = [
    "AmplifierSpec", "AsePerChannel", "Band", "BandPlan", "FiberSpec",
    "LaunchProfile", "LinkResult", "LinkSpec", "NliPerChannel", "PowerEvolution",
    "PsoConfig", "PumpSet", "RamanPump", "ScenarioConfig", "SnrReport",
    "StageResult", "WaveSet", "WdmGrid", "accumulate_ase", "accumulate_nli",
    "build_grid", "build_link_spec", "closed_form_nli", "coupled_rhs",
    "default_band_plan", "distributed_ase", "fit_effective_profiles",
    "gn_numerical_oracle", "integrate_span", "load_config", "load_preset",
    "lumped_ase", "net_span_gain", "pso_maximize", "sample_spectrum",
    "savitzky_golay_smooth", "simulate_link", "solve_backward_bvp",
    "stage1_pump_and_uniform_lp", "stage2_per_channel_lp", "throughput",
]

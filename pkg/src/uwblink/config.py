"""Scenario configuration: JSON schema, validation, defaults, presets.

A scenario is one JSON document describing the link and both optimizer
stages.  Unknown keys are rejected and every physical quantity carries its
unit in the key name.  An empty object plus a mode yields the full default
scenario for that amplification flavour.
"""

from __future__ import annotations

import json
from importlib import resources
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError
from .system_model import (AmplifierSpec, Band, BandPlan, FiberSpec, LaunchProfile,
                           LinkSpec, PumpSet, RamanPump, build_grid,
                           load_attenuation_csv, load_raman_gain_csv)

DEFAULT_HYBRID_TOTAL_DBM = 18.75
DEFAULT_LUMPED_TOTAL_DBM = 23.85

# Hybrid-mode default pump design (wavelength nm, power mW, direction).
DEFAULT_HYBRID_PUMPS = (
    (1405.0, 153.6, "forward"),
    (1410.0, 240.1, "forward"),
    (1455.0, 31.3, "forward"),
    (1422.0, 249.2, "backward"),
    (1428.0, 31.7, "backward"),
    (1437.0, 250.0, "backward"),
    (1452.0, 80.0, "backward"),
    (1483.0, 225.3, "backward"),
)


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class BandModel(StrictModel):
    label: str
    channel_count: int = Field(ge=1)


class GridModel(StrictModel):
    bands: list[BandModel] = Field(default_factory=lambda: [
        BandModel(label="S", channel_count=40),
        BandModel(label="C", channel_count=44),
        BandModel(label="L", channel_count=47),
    ])
    channel_spacing_ghz: float = Field(default=100.0, gt=0)
    symbol_rate_gbaud: float = Field(default=96.0, gt=0)
    band_gaps_nm: list[float] = Field(default_factory=lambda: [10.0, 5.0])
    center_wavelength_nm: float = Field(default=1550.0, gt=0)


class FiberModel(StrictModel):
    span_length_km: float = Field(default=100.0, gt=0)
    effective_area_um2: Optional[float] = Field(default=80.0, gt=0)
    gamma_per_w_km: float = Field(default=1.16, ge=0)
    dispersion_ps_nm_km: float = 16.5
    dispersion_slope_ps_nm2_km: float = 0.09
    temperature_k: float = Field(default=298.0, gt=0)
    attenuation_csv: str = "pkg:attenuation_g652_like.csv"
    raman_gain_csv: str = "pkg:raman_gain_silica.csv"


class AmplifierModel(StrictModel):
    noise_figure_db: dict[str, float] = Field(
        default_factory=lambda: {"S": 7.0, "C": 4.5, "L": 6.0})


class LinkModel(StrictModel):
    n_spans: int = Field(default=10, ge=1)


class PumpModel(StrictModel):
    wavelength_nm: float = Field(gt=0)
    power_mw: float = Field(ge=0)
    direction: Literal["forward", "backward"]


class LaunchModel(StrictModel):
    uniform_total_dbm: Optional[float] = None
    per_channel_dbm: Optional[list[float]] = None

    @model_validator(mode="after")
    def _one_of(self):
        if self.uniform_total_dbm is not None and self.per_channel_dbm is not None:
            raise ValueError("give either uniform_total_dbm or per_channel_dbm, not both")
        return self


class PsoStageModel(StrictModel):
    n_particles: Optional[int] = Field(default=None, ge=1)
    max_iterations: Optional[int] = Field(default=None, ge=1)
    inertia: float = Field(default=0.729, gt=0)
    cognitive: float = Field(default=1.49445, gt=0)
    social: float = Field(default=1.49445, gt=0)
    stall_tolerance: float = Field(default=0.0, ge=0)
    stall_window: int = Field(default=10, ge=1)


class OptimizerModel(StrictModel):
    rng_seed: int = 42
    stage1: PsoStageModel = Field(default_factory=PsoStageModel)
    stage2: PsoStageModel = Field(default_factory=PsoStageModel)
    stage1_mode: Literal["powers_only", "powers_and_wavelengths"] = "powers_only"
    stage2_init_jitter_db: float = Field(default=2.0, ge=0)
    smoothing_window: int = 7
    smoothing_order: int = 2


class ScenarioConfig(StrictModel):
    mode: Literal["hybrid", "lumped"] = "hybrid"
    grid: GridModel = Field(default_factory=GridModel)
    fiber: FiberModel = Field(default_factory=FiberModel)
    amplifier: AmplifierModel = Field(default_factory=AmplifierModel)
    link: LinkModel = Field(default_factory=LinkModel)
    pumps: Optional[list[PumpModel]] = None
    launch: LaunchModel = Field(default_factory=LaunchModel)
    optimizer: OptimizerModel = Field(default_factory=OptimizerModel)
    output_dir: Optional[str] = None

    @model_validator(mode="after")
    def _mode_defaults(self):
        if self.pumps is None:
            if self.mode == "hybrid":
                self.pumps = [PumpModel(wavelength_nm=w, power_mw=p, direction=d)
                              for w, p, d in DEFAULT_HYBRID_PUMPS]
            else:
                self.pumps = []
        elif self.mode == "lumped" and len(self.pumps) > 0:
            raise ValueError("lumped mode cannot carry Raman pumps")
        if self.launch.uniform_total_dbm is None and self.launch.per_channel_dbm is None:
            total = (DEFAULT_HYBRID_TOTAL_DBM if self.mode == "hybrid"
                     else DEFAULT_LUMPED_TOTAL_DBM)
            self.launch = LaunchModel(uniform_total_dbm=total)
        return self

    @property
    def stage2_lp_bounds_dbm(self):
        return (-10.0, 10.0) if self.mode == "hybrid" else (-5.0, 15.0)


def _pointer_errors(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        pointer = "/" + "/".join(str(p) for p in err["loc"])
        lines.append(f"{pointer}: {err['msg']}")
    return "; ".join(lines)


def parse_config(data: dict, mode: str | None = None) -> ScenarioConfig:
    """Validate a raw dict; optional mode override applied before validation."""
    if not isinstance(data, dict):
        raise ConfigError("configuration root must be a JSON object")
    if mode is not None:
        data = {**data, "mode": mode}
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"invalid configuration: {_pointer_errors(exc)}") from None


def load_config(path, mode: str | None = None) -> ScenarioConfig:
    """Read and validate a scenario JSON file."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from None
    return parse_config(data, mode)


def load_preset(mode: str) -> ScenarioConfig:
    """Committed scenario presets ('hybrid' or 'lumped')."""
    name = {"hybrid": "paper_hybrid.json", "lumped": "paper_lumped.json"}.get(mode)
    if name is None:
        raise ConfigError(f"unknown preset {mode!r}")
    text = resources.files("uwblink.presets").joinpath(name).read_text(encoding="utf-8")
    return parse_config(json.loads(text))


def echo_config_json(cfg: ScenarioConfig) -> str:
    """Canonical round-trippable serialization of the resolved configuration."""
    return json.dumps(cfg.model_dump(), indent=2, sort_keys=True) + "\n"


def build_link_spec(cfg: ScenarioConfig) -> LinkSpec:
    """Materialize the physics objects for a validated scenario."""
    plan = BandPlan(
        bands=tuple(Band(b.label, b.channel_count) for b in cfg.grid.bands),
        channel_spacing_hz=cfg.grid.channel_spacing_ghz * 1e9,
        symbol_rate_baud=cfg.grid.symbol_rate_gbaud * 1e9,
        gaps_nm=tuple(cfg.grid.band_gaps_nm),
        center_wavelength_m=cfg.grid.center_wavelength_nm * 1e-9,
    )
    grid = build_grid(plan)
    fiber = FiberSpec.create(
        attenuation_table=load_attenuation_csv(cfg.fiber.attenuation_csv),
        raman_gain_table=load_raman_gain_csv(cfg.fiber.raman_gain_csv),
        gamma_per_w_km=cfg.fiber.gamma_per_w_km,
        dispersion_ps_nm_km=cfg.fiber.dispersion_ps_nm_km,
        dispersion_slope_ps_nm2_km=cfg.fiber.dispersion_slope_ps_nm2_km,
        span_length_km=cfg.fiber.span_length_km,
        temperature_k=cfg.fiber.temperature_k,
        effective_area_um2=cfg.fiber.effective_area_um2,
    )
    pumps = PumpSet(tuple(
        RamanPump(p.wavelength_nm * 1e-9, p.power_mw * 1e-3, p.direction)
        for p in (cfg.pumps or [])))
    if cfg.launch.per_channel_dbm is not None:
        values = np.asarray(cfg.launch.per_channel_dbm, dtype=float)
        if values.size != grid.n_channels:
            raise ConfigError(
                f"/launch/per_channel_dbm: expected {grid.n_channels} entries, "
                f"got {values.size}")
        launch = LaunchProfile(values)
    else:
        launch = LaunchProfile.uniform_from_total(
            cfg.launch.uniform_total_dbm, grid.n_channels)
    amplifier = AmplifierSpec(noise_figure_db=cfg.amplifier.noise_figure_db)
    return LinkSpec(n_spans=cfg.link.n_spans, fiber=fiber, grid=grid,
                    amplifier=amplifier, pump_set=pumps, launch_profile=launch)

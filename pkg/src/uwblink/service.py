"""HTTP service exposing the simulator and optimizer.

The FastAPI app wraps the core package with pydantic request/response models;
the CLI is a thin client of these endpoints (in-process by default, remote
with --server).  Run standalone with:

    uvicorn uwblink.service:app
"""

from __future__ import annotations

from importlib import metadata
from typing import Literal, Optional

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, ConfigDict, Field

from . import config as cfgmod
from .config import ScenarioConfig
from .errors import NumericalError, UwbError
from .link_engine import simulate_link, snr_report_summary
from .optimizer import (PsoConfig, Stage1Settings, Stage2Settings,
                        savitzky_golay_smooth, smoothing_throughput_delta,
                        stage1_pump_and_uniform_lp, stage2_per_channel_lp)
from .system_model import LaunchProfile
from .verification import oracle_comparison

try:
    _VERSION = metadata.version("uwblink")
except metadata.PackageNotFoundError:      # pragma: no cover
    _VERSION = "0.0.0"

app = FastAPI(title="uwblink", version=_VERSION,
              description="Ultra-wideband hybrid-amplified link simulator/optimizer")


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


# ---------------------------------------------------------------------------
# payloads
# ---------------------------------------------------------------------------

class EvolutionPayload(BaseModel):
    z_km: list[float]
    labels: list[str]
    power_mw: list[list[float]]
    bvp_iterations: int
    bvp_residual: float


class SnrPayload(BaseModel):
    wavelength_nm: list[float]
    launch_dbm: list[float]
    snr_ase_db: list[float]
    snr_nli_db: list[float]
    snr_total_db: list[float]
    throughput_tbps: float
    average_snr_db: float
    n_spans: int


class SimulateRequest(StrictModel):
    config: ScenarioConfig = Field(default_factory=ScenarioConfig)
    n_spans: Optional[int] = Field(default=None, ge=1)
    include_evolution: bool = False


class SimulateResponse(BaseModel):
    config: ScenarioConfig
    report: SnrPayload
    summary: dict
    evolution: Optional[EvolutionPayload] = None


class OptimizePumpsRequest(StrictModel):
    config: ScenarioConfig = Field(default_factory=ScenarioConfig)
    seed: Optional[int] = None


class PumpPayload(BaseModel):
    wavelength_nm: float
    power_mw: float
    direction: Literal["forward", "backward"]
    negligible: bool


class OptimizePumpsResponse(BaseModel):
    config: ScenarioConfig
    pumps: list[PumpPayload]
    total_lp_dbm: float
    uniform_per_channel_dbm: float
    best_objective_tbps: float
    iteration_trace: list[float]
    n_evaluations: int
    n_failed_evaluations: int


class OptimizeLaunchRequest(StrictModel):
    config: ScenarioConfig = Field(default_factory=ScenarioConfig)
    seed: Optional[int] = None


class OptimizeLaunchResponse(BaseModel):
    config: ScenarioConfig
    wavelength_nm: list[float]
    profile_dbm: list[float]
    start_profile_dbm: list[float]
    best_objective_tbps: float
    iteration_trace: list[float]
    n_evaluations: int
    n_failed_evaluations: int


class SmoothRequest(StrictModel):
    profile_dbm: list[float]
    window: int = 7
    order: int = 2
    config: Optional[ScenarioConfig] = None
    evaluate_throughput: bool = True


class SmoothResponse(BaseModel):
    smoothed_dbm: list[float]
    window: int
    order: int
    throughput_raw_tbps: Optional[float] = None
    throughput_smoothed_tbps: Optional[float] = None
    throughput_delta_tbps: Optional[float] = None


class OracleCheckRequest(StrictModel):
    channels: int = Field(default=5, ge=3, le=16)
    cases: int = Field(default=3, ge=1)
    seed: int = 42
    rel_tol: float = 1e-3


class OracleCheckResponse(BaseModel):
    rows: list[dict]
    summary: dict


class ReportResponse(BaseModel):
    config: ScenarioConfig
    report: SnrPayload
    evolution: EvolutionPayload
    summary: dict


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _run(fn):
    try:
        return fn()
    except NumericalError as exc:
        raise HTTPException(status_code=500, detail=f"numerical failure: {exc}") from exc
    except UwbError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc


def _snr_payload(report):
    return SnrPayload(
        wavelength_nm=list(report.channel_wavelength_m * 1e9),
        launch_dbm=list(report.launch_dbm),
        snr_ase_db=[float(x) for x in report.snr_ase_db],
        snr_nli_db=[float(x) for x in report.snr_nli_db],
        snr_total_db=[float(x) for x in report.snr_total_db],
        throughput_tbps=report.throughput_tbps,
        average_snr_db=report.average_snr_db,
        n_spans=report.n_spans,
    )


def _evolution_payload(evolution):
    return EvolutionPayload(
        z_km=list(evolution.z_m / 1e3),
        labels=list(evolution.waves.labels),
        power_mw=[list(row * 1e3) for row in evolution.power_w],
        bvp_iterations=evolution.bvp_iterations,
        bvp_residual=evolution.bvp_residual,
    )


def _stage_pso_config(stage_model, n_particles_default, max_iter_default, seed, bounds):
    return PsoConfig(
        n_particles=stage_model.n_particles or n_particles_default,
        max_iterations=stage_model.max_iterations or max_iter_default,
        lower_bounds=bounds[0], upper_bounds=bounds[1],
        inertia=stage_model.inertia, cognitive=stage_model.cognitive,
        social=stage_model.social, rng_seed=seed,
        stall_tolerance=stage_model.stall_tolerance,
        stall_window=stage_model.stall_window,
    )


# ---------------------------------------------------------------------------
# endpoints
# ---------------------------------------------------------------------------

@app.get("/health")
def health():
    return {"status": "ok", "version": _VERSION}


@app.get("/presets/{mode}", response_model=ScenarioConfig)
def preset(mode: str):
    return _run(lambda: cfgmod.load_preset(mode))


@app.post("/config/validate", response_model=ScenarioConfig)
def validate_config(cfg: ScenarioConfig):
    # building the physics objects catches cross-field problems (profile
    # length, pump window, spectra domains) beyond the schema checks
    _run(lambda: cfgmod.build_link_spec(cfg))
    return cfg


@app.post("/simulate", response_model=SimulateResponse)
def simulate(req: SimulateRequest):
    def go():
        link = cfgmod.build_link_spec(req.config)
        if req.n_spans is not None:
            link = link.with_spans(req.n_spans)
        result = simulate_link(link)
        return SimulateResponse(
            config=req.config,
            report=_snr_payload(result.report),
            summary=snr_report_summary(result.report),
            evolution=_evolution_payload(result.evolution) if req.include_evolution else None,
        )
    return _run(go)


@app.post("/optimize/pumps", response_model=OptimizePumpsResponse)
def optimize_pumps(req: OptimizePumpsRequest):
    def go():
        cfg = req.config
        link = cfgmod.build_link_spec(cfg)
        seed = req.seed if req.seed is not None else cfg.optimizer.rng_seed
        settings = Stage1Settings(mode=cfg.optimizer.stage1_mode)
        if cfg.mode == "lumped":
            settings = Stage1Settings(mode=cfg.optimizer.stage1_mode,
                                      pump_power_bounds_w=(0.0, 0.0))
        # the stage derives its own variable box from the settings; the
        # PsoConfig carries the swarm knobs (placeholder bounds)
        pso = _stage_pso_config(cfg.optimizer.stage1, 50, 50, seed,
                                (np.zeros(1), np.ones(1)))
        result = stage1_pump_and_uniform_lp(link, pso, settings)
        stage = result.stage
        return OptimizePumpsResponse(
            config=cfg,
            pumps=[PumpPayload(wavelength_nm=p.wavelength_m * 1e9,
                               power_mw=p.power_w * 1e3, direction=p.direction,
                               negligible=bool(0 < p.power_w < 1e-3))
                   for p in result.pump_set.pumps],
            total_lp_dbm=result.total_lp_dbm,
            uniform_per_channel_dbm=float(result.uniform_profile.per_channel_dbm[0]),
            best_objective_tbps=stage.best_objective,
            iteration_trace=[float(x) for x in stage.iteration_trace],
            n_evaluations=stage.n_evaluations,
            n_failed_evaluations=stage.n_failed_evaluations,
        )
    return _run(go)


@app.post("/optimize/launch-profile", response_model=OptimizeLaunchResponse)
def optimize_launch(req: OptimizeLaunchRequest):
    def go():
        cfg = req.config
        link = cfgmod.build_link_spec(cfg)
        seed = req.seed if req.seed is not None else cfg.optimizer.rng_seed
        n_ch = link.grid.n_channels
        settings = Stage2Settings(lp_bounds_dbm=cfg.stage2_lp_bounds_dbm,
                                  init_jitter_db=cfg.optimizer.stage2_init_jitter_db)
        lo = np.full(n_ch, settings.lp_bounds_dbm[0])
        hi = np.full(n_ch, settings.lp_bounds_dbm[1])
        pso = _stage_pso_config(cfg.optimizer.stage2, 10 * n_ch, 75, seed, (lo, hi))
        start = link.launch_profile
        result = stage2_per_channel_lp(link, pso, start, settings)
        stage = result.stage
        return OptimizeLaunchResponse(
            config=cfg,
            wavelength_nm=list(link.grid.channel_wavelength_m * 1e9),
            profile_dbm=[float(x) for x in result.profile.per_channel_dbm],
            start_profile_dbm=[float(x) for x in start.per_channel_dbm],
            best_objective_tbps=stage.best_objective,
            iteration_trace=[float(x) for x in stage.iteration_trace],
            n_evaluations=stage.n_evaluations,
            n_failed_evaluations=stage.n_failed_evaluations,
        )
    return _run(go)


@app.post("/smooth", response_model=SmoothResponse)
def smooth(req: SmoothRequest):
    def go():
        profile = LaunchProfile(np.asarray(req.profile_dbm, dtype=float))
        if req.config is not None and req.evaluate_throughput:
            link = cfgmod.build_link_spec(req.config)
            smoothed, t_raw, t_smooth = smoothing_throughput_delta(
                link, profile, window=req.window, order=req.order)
            return SmoothResponse(
                smoothed_dbm=[float(x) for x in smoothed.per_channel_dbm],
                window=req.window, order=req.order,
                throughput_raw_tbps=t_raw, throughput_smoothed_tbps=t_smooth,
                throughput_delta_tbps=t_smooth - t_raw)
        smoothed = savitzky_golay_smooth(profile, req.window, req.order)
        return SmoothResponse(
            smoothed_dbm=[float(x) for x in smoothed.per_channel_dbm],
            window=req.window, order=req.order)
    return _run(go)


@app.post("/oracle-check", response_model=OracleCheckResponse)
def oracle_check(req: OracleCheckRequest):
    def go():
        result = oracle_comparison(n_channels=req.channels, n_cases=req.cases,
                                   seed=req.seed, oracle_rel_tol=req.rel_tol)
        return OracleCheckResponse(rows=result["rows"], summary=result["summary"])
    return _run(go)


@app.post("/report", response_model=ReportResponse)
def report(req: SimulateRequest):
    def go():
        link = cfgmod.build_link_spec(req.config)
        if req.n_spans is not None:
            link = link.with_spans(req.n_spans)
        result = simulate_link(link)
        return ReportResponse(
            config=req.config,
            report=_snr_payload(result.report),
            evolution=_evolution_payload(result.evolution),
            summary=snr_report_summary(result.report),
        )
    return _run(go)

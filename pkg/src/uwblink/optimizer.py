"""Bound-constrained particle swarm optimization and the two-stage pump /
launch-power design procedure, plus the Savitzky-Golay profile smoother.

Reproducibility contract: every random draw comes from per-particle
counter-based streams (Philox keyed by seed and particle index) consumed in
the synchronized update step, so results are bit-identical regardless of how
many workers evaluate the cost function.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, ContractError, NumericalError, OptimizationError
from .link_engine import link_cost_tbps, simulate_link
from .system_model import (FORWARD, BACKWARD, LaunchProfile, LinkSpec, PumpSet,
                           RamanPump)

PENALTY_OBJECTIVE = -1e6
NEGLIGIBLE_PUMP_W = 1e-3

# Wavelengths reported for the optimized hybrid amplifier, used as the fixed
# slot plan in powers-only mode (three forward + five backward), padded with
# evenly spread fillers for the remaining slots of the 6+6 layout.
STAGE1_FIXED_FORWARD_NM = (1405.0, 1410.0, 1455.0, 1425.0, 1440.0, 1470.0)
STAGE1_FIXED_BACKWARD_NM = (1422.0, 1428.0, 1437.0, 1452.0, 1483.0, 1465.0)


def worker_count(explicit=None):
    """Worker cap: explicit argument, else the UWB_THREADS env var, else 1."""
    if explicit is not None:
        return max(1, int(explicit))
    env = os.environ.get("UWB_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"UWB_THREADS must be an integer, got {env!r}") from None
    return 1


@dataclass(frozen=True)
class PsoConfig:
    n_particles: int
    max_iterations: int
    lower_bounds: np.ndarray
    upper_bounds: np.ndarray
    inertia: float = 0.729
    cognitive: float = 1.49445
    social: float = 1.49445
    rng_seed: int = 42
    stall_tolerance: float = 0.0
    stall_window: int = 10

    def __post_init__(self):
        lb = np.asarray(self.lower_bounds, dtype=float)
        ub = np.asarray(self.upper_bounds, dtype=float)
        object.__setattr__(self, "lower_bounds", lb)
        object.__setattr__(self, "upper_bounds", ub)
        if lb.shape != ub.shape or lb.ndim != 1:
            raise ConfigError("bounds must be equal-length 1-D vectors")
        if not (np.all(np.isfinite(lb)) and np.all(np.isfinite(ub))):
            raise ConfigError("bounds must be finite")
        if np.any(lb >= ub):
            raise ConfigError("every lower bound must be strictly below its upper bound")
        if self.n_particles < 1 or self.max_iterations < 1:
            raise ConfigError("particle and iteration counts must be >= 1")
        if min(self.inertia, self.cognitive, self.social) <= 0:
            raise ConfigError("PSO coefficients must be positive")

    @property
    def n_dimensions(self):
        return self.lower_bounds.size


@dataclass(frozen=True)
class StageResult:
    best_vector: np.ndarray
    best_objective: float
    iteration_trace: np.ndarray
    n_evaluations: int
    n_failed_evaluations: int


def _particle_rng(seed, particle):
    return np.random.Generator(np.random.Philox(key=[int(seed) & (2**64 - 1), int(particle)]))


class _PoolCost:
    """Picklable cost wrapper that converts numerical failures to None."""

    def __init__(self, cost):
        self.cost = cost

    def __call__(self, x):
        try:
            v = float(self.cost(x))
        except NumericalError:
            return None
        return v if math.isfinite(v) else None


def _evaluate(cost, vectors, workers, counters):
    """Evaluate the swarm; failures map to the penalty objective.  Results are
    gathered in particle order, so the outcome is independent of the worker
    count."""
    wrapped = _PoolCost(cost)
    if workers <= 1 or len(vectors) == 1:
        raw = [wrapped(x) for x in vectors]
    else:
        import multiprocessing as mp

        ctx = mp.get_context("fork")
        chunk = max(1, math.ceil(len(vectors) / workers))
        with ctx.Pool(processes=workers) as pool:
            raw = pool.map(wrapped, vectors, chunksize=chunk)
    counters["evals"] += len(raw)
    out = []
    for v in raw:
        if v is None:
            counters["failed"] += 1
            out.append(PENALTY_OBJECTIVE)
        else:
            out.append(v)
    return out


def pso_maximize(cost, config: PsoConfig, workers=None,
                 initial_positions=None) -> StageResult:
    """Canonical global-best PSO with inertia, velocity clamped to 20% of the
    box width, and clamp+zero-velocity boundary handling."""
    lb, ub = config.lower_bounds, config.upper_bounds
    width = ub - lb
    v_max = 0.2 * width
    S, D = config.n_particles, config.n_dimensions
    workers = worker_count(workers)

    rngs = [_particle_rng(config.rng_seed, p) for p in range(S)]
    if initial_positions is not None:
        x = np.asarray(initial_positions, dtype=float).copy()
        if x.shape != (S, D):
            raise ContractError(f"initial positions must have shape {(S, D)}")
        if np.any(x < lb) or np.any(x > ub):
            raise ContractError("initial positions must respect the bounds")
    else:
        x = np.stack([lb + rngs[p].random(D) * width for p in range(S)])
    v = np.zeros_like(x)

    counters = {"evals": 0, "failed": 0}
    fx = np.array(_evaluate(cost, list(x), workers, counters))
    pbest = x.copy()
    fbest = fx.copy()
    g = int(np.argmax(fbest))
    gbest, fgbest = pbest[g].copy(), float(fbest[g])
    trace = [fgbest]

    for _ in range(config.max_iterations):
        for p in range(S):
            r = rngs[p].random(2 * D)
            v[p] = (config.inertia * v[p]
                    + config.cognitive * r[:D] * (pbest[p] - x[p])
                    + config.social * r[D:] * (gbest - x[p]))
        np.clip(v, -v_max, v_max, out=v)
        x += v
        low, high = x < lb, x > ub
        x = np.clip(x, lb, ub)
        v[low | high] = 0.0

        fx = np.array(_evaluate(cost, list(x), workers, counters))
        improved = fx > fbest
        pbest[improved] = x[improved]
        fbest[improved] = fx[improved]
        g = int(np.argmax(fbest))
        if fbest[g] > fgbest:
            gbest, fgbest = pbest[g].copy(), float(fbest[g])
        trace.append(fgbest)
        window = config.stall_window
        if (config.stall_tolerance > 0 and len(trace) > window
                and trace[-1] - trace[-1 - window] < config.stall_tolerance):
            break

    if fgbest <= PENALTY_OBJECTIVE:
        raise OptimizationError("every evaluation failed; no usable optimum")
    return StageResult(best_vector=gbest, best_objective=fgbest,
                       iteration_trace=np.array(trace),
                       n_evaluations=counters["evals"],
                       n_failed_evaluations=counters["failed"])


# ---------------------------------------------------------------------------
# stage 1: pump powers (+ optionally wavelengths) and the uniform launch power
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Stage1Settings:
    mode: str = "powers_only"            # or "powers_and_wavelengths"
    pump_power_bounds_w: tuple = (0.0, 0.250)
    pump_wavelength_bounds_m: tuple = (1405e-9, 1490e-9)
    total_lp_bounds_dbm: tuple = (10.0, 25.0)
    forward_slots_nm: tuple = STAGE1_FIXED_FORWARD_NM
    backward_slots_nm: tuple = STAGE1_FIXED_BACKWARD_NM
    cost_rtol: float = 1e-4
    cost_z_points: int = 51


@dataclass(frozen=True)
class Stage1Result:
    pump_set: PumpSet
    uniform_profile: LaunchProfile
    total_lp_dbm: float
    negligible_pumps: tuple
    stage: StageResult


class _Stage1Cost:
    """Single-span throughput for a stage-1 design vector (picklable)."""

    def __init__(self, link, settings):
        self.link = link.with_spans(1)
        self.settings = settings
        self.n_slots = len(settings.forward_slots_nm) + len(settings.backward_slots_nm)

    def decode(self, x):
        s = self.settings
        nf, nb = len(s.forward_slots_nm), len(s.backward_slots_nm)
        powers = x[:self.n_slots]
        if s.mode == "powers_and_wavelengths":
            wl_nm = x[self.n_slots:2 * self.n_slots]
            total_dbm = x[2 * self.n_slots]
        else:
            wl_nm = np.array(s.forward_slots_nm + s.backward_slots_nm)
            total_dbm = x[self.n_slots]
        pumps = []
        for i in range(nf):
            pumps.append(RamanPump(wl_nm[i] * 1e-9, float(powers[i]), FORWARD))
        for i in range(nb):
            pumps.append(RamanPump(wl_nm[nf + i] * 1e-9, float(powers[nf + i]), BACKWARD))
        window = (min(min(s.pump_wavelength_bounds_m), min(wl_nm) * 1e-9),
                  max(max(s.pump_wavelength_bounds_m), max(wl_nm) * 1e-9))
        pump_set = PumpSet(tuple(pumps), window_m=window)
        profile = LaunchProfile.uniform_from_total(float(total_dbm), self.link.grid.n_channels)
        return pump_set, profile

    def __call__(self, x):
        pump_set, profile = self.decode(x)
        link = self.link.with_pumps(pump_set).with_launch(profile)
        return link_cost_tbps(link, rtol=self.settings.cost_rtol,
                              z_points=self.settings.cost_z_points)


def _center_seeded_init(config: PsoConfig):
    """Random swarm start with particle 0 anchored at the bound-box center;
    a cheap deterministic baseline the optimum can never fall below."""
    lb, ub = config.lower_bounds, config.upper_bounds
    width = ub - lb
    init = np.stack([
        lb + _particle_rng(config.rng_seed, p).random(config.n_dimensions) * width
        for p in range(config.n_particles)])
    init[0] = 0.5 * (lb + ub)
    return init


class _FrozenDimsCost:
    """Cost over the free dimensions with the frozen ones pinned (picklable)."""

    def __init__(self, cost, pinned, free):
        self.cost = cost
        self.pinned = pinned
        self.free = free

    def __call__(self, xf):
        x = self.pinned.copy()
        x[self.free] = xf
        return self.cost(x)


def stage1_pump_and_uniform_lp(link_template: LinkSpec, config: PsoConfig,
                               settings: Stage1Settings | None = None,
                               workers=None) -> Stage1Result:
    """Optimize the 12 pump powers (and optionally wavelengths) together with
    a spectrally uniform total launch power over one span."""
    settings = settings or Stage1Settings()
    cost = _Stage1Cost(link_template, settings)
    n_slots = cost.n_slots
    p_lo, p_hi = settings.pump_power_bounds_w
    lp_lo, lp_hi = settings.total_lp_bounds_dbm
    if settings.mode == "powers_and_wavelengths":
        wl_lo, wl_hi = (b * 1e9 for b in settings.pump_wavelength_bounds_m)
        lb = np.concatenate([np.full(n_slots, p_lo), np.full(n_slots, wl_lo), [lp_lo]])
        ub = np.concatenate([np.full(n_slots, p_hi), np.full(n_slots, wl_hi), [lp_hi]])
    elif settings.mode == "powers_only":
        lb = np.concatenate([np.full(n_slots, p_lo), [lp_lo]])
        ub = np.concatenate([np.full(n_slots, p_hi), [lp_hi]])
    else:
        raise ConfigError(f"unknown stage-1 mode {settings.mode!r}")
    if np.any(lb >= ub):
        # degenerate pump bounds (e.g. all pumps pinned to zero): optimize the
        # remaining free variables only
        free = lb < ub
        inner = PsoConfig(config.n_particles, config.max_iterations,
                          lb[free], ub[free], config.inertia, config.cognitive,
                          config.social, config.rng_seed, config.stall_tolerance,
                          config.stall_window)
        init = _center_seeded_init(inner)
        stage = pso_maximize(_FrozenDimsCost(cost, lb, free), inner,
                             workers=workers, initial_positions=init)
        best = lb.copy()
        best[free] = stage.best_vector
        stage = replace(stage, best_vector=best)
    else:
        full = PsoConfig(config.n_particles, config.max_iterations, lb, ub,
                         config.inertia, config.cognitive, config.social,
                         config.rng_seed, config.stall_tolerance, config.stall_window)
        stage = pso_maximize(cost, full, workers=workers,
                             initial_positions=_center_seeded_init(full))

    pump_set, profile = cost.decode(stage.best_vector)
    negligible = tuple(
        f"{p.direction}@{p.wavelength_m*1e9:.0f}nm"
        for p in pump_set.pumps if 0 < p.power_w < NEGLIGIBLE_PUMP_W)
    total = _stage1_total_dbm(stage.best_vector, settings, n_slots)
    return Stage1Result(pump_set=pump_set, uniform_profile=profile,
                        total_lp_dbm=total, negligible_pumps=negligible, stage=stage)


def _stage1_total_dbm(x, settings, n_slots):
    if settings.mode == "powers_and_wavelengths":
        return float(x[2 * n_slots])
    return float(x[n_slots])


# ---------------------------------------------------------------------------
# stage 2: per-channel launch power with frozen pumps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Stage2Settings:
    lp_bounds_dbm: tuple = (-10.0, 10.0)
    init_jitter_db: float = 2.0
    cost_rtol: float = 1e-4
    cost_z_points: int = 51


@dataclass(frozen=True)
class Stage2Result:
    profile: LaunchProfile
    stage: StageResult


class _Stage2Cost:
    def __init__(self, link, settings):
        self.link = link.with_spans(1)
        self.settings = settings
        self.guess = None

    def __call__(self, x):
        link = self.link.with_launch(LaunchProfile(np.asarray(x, dtype=float)))
        return link_cost_tbps(link, rtol=self.settings.cost_rtol,
                              z_points=self.settings.cost_z_points,
                              bvp_initial_guess_w=self.guess)


def stage2_per_channel_lp(link_with_pumps: LinkSpec, config: PsoConfig,
                          start_profile: LaunchProfile,
                          settings: Stage2Settings | None = None,
                          workers=None) -> Stage2Result:
    """Optimize the per-channel launch profile with the stage-1 pump design
    kept constant.  The swarm starts around the uniform stage-1 profile, with
    one particle seeded exactly on it."""
    settings = settings or Stage2Settings()
    n_ch = link_with_pumps.grid.n_channels
    if start_profile.per_channel_dbm.size != n_ch:
        raise ContractError("start profile does not match the channel count")
    lo, hi = settings.lp_bounds_dbm
    if lo == hi:
        # bounds collapsed to a point: nothing to optimize
        profile = LaunchProfile(np.full(n_ch, float(lo)))
        cost = _Stage2Cost(link_with_pumps, settings)
        value = cost(profile.per_channel_dbm)
        return Stage2Result(profile=profile, stage=StageResult(
            best_vector=profile.per_channel_dbm.copy(), best_objective=value,
            iteration_trace=np.array([value]), n_evaluations=1,
            n_failed_evaluations=0))
    lb = np.full(n_ch, float(lo))
    ub = np.full(n_ch, float(hi))
    cfg = PsoConfig(config.n_particles, config.max_iterations, lb, ub,
                    config.inertia, config.cognitive, config.social,
                    config.rng_seed, config.stall_tolerance, config.stall_window)

    base = np.clip(start_profile.per_channel_dbm, lb, ub)
    init = np.empty((cfg.n_particles, n_ch))
    init[0] = base
    for p in range(1, cfg.n_particles):
        rng = _particle_rng(cfg.rng_seed ^ 0x5EED2, p)
        jitter = (rng.random(n_ch) * 2.0 - 1.0) * settings.init_jitter_db
        init[p] = np.clip(base + jitter, lb, ub)

    cost = _Stage2Cost(link_with_pumps, settings)
    # deterministic warm start for the shooting solver: the converged
    # backward-pump state of the fixed stage-1 design
    if link_with_pumps.pump_set.backward():
        seed_link = link_with_pumps.with_spans(1).with_launch(start_profile)
        evo = simulate_link(seed_link, rtol=settings.cost_rtol,
                            z_points=settings.cost_z_points).evolution
        n_bwd = len(link_with_pumps.pump_set.backward())
        cost.guess = evo.power_w[-n_bwd:, 0].copy()

    stage = pso_maximize(cost, cfg, workers=workers, initial_positions=init)
    return Stage2Result(profile=LaunchProfile(stage.best_vector.copy()), stage=stage)


# ---------------------------------------------------------------------------
# Savitzky-Golay smoothing of the optimized profile (dBm domain)
# ---------------------------------------------------------------------------

def savgol_center_coefficients(window: int, order: int):
    """Least-squares polynomial smoothing kernel evaluated at the window
    center (the classic published integer-ratio kernels for small windows)."""
    if window % 2 != 1 or window < 1:
        raise ContractError("window must be odd and positive")
    if order >= window:
        raise ContractError("polynomial order must be below the window length")
    half = window // 2
    offsets = np.arange(-half, half + 1, dtype=float)
    vander = np.vander(offsets, order + 1, increasing=True)
    # projection row selecting the fitted value at offset 0
    proj = np.linalg.pinv(vander)
    return vander[half] @ proj


def savitzky_golay_smooth(profile: LaunchProfile, window: int = 7,
                          order: int = 2) -> LaunchProfile:
    """Smooth the per-channel dBm profile.  Interior points use the center
    kernel; each edge point is the polynomial fit over its truncated
    (one-sided) window, with no padding."""
    y = profile.per_channel_dbm
    n = y.size
    if n < window:
        raise ContractError("profile shorter than the smoothing window")
    half = window // 2
    kernel = savgol_center_coefficients(window, order)
    out = np.convolve(y, kernel[::-1], mode="same")
    for i in range(half):
        for j in (i, n - 1 - i):
            lo = max(0, j - half)
            hi = min(n, j + half + 1)
            xs = np.arange(lo, hi, dtype=float) - j
            coeff = np.polynomial.polynomial.polyfit(xs, y[lo:hi], order)
            out[j] = coeff[0]
    return LaunchProfile(out)


def smoothing_throughput_delta(link: LinkSpec, raw: LaunchProfile,
                               window=7, order=2, rtol=1e-6, z_points=101):
    """Smooth a profile and report the throughput change on the given link."""
    smoothed = savitzky_golay_smooth(raw, window, order)
    t_raw = simulate_link(link.with_launch(raw), rtol=rtol,
                          z_points=z_points).report.throughput_tbps
    t_smooth = simulate_link(link.with_launch(smoothed), rtol=rtol,
                             z_points=z_points).report.throughput_tbps
    return smoothed, t_raw, t_smooth

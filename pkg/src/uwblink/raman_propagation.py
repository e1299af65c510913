"""Coupled power evolution of pumps and channels along one span.

The CW Raman/ISRS power equations are integrated with an embedded
Dormand-Prince 5(4) pair (adaptive step, dense output).  Backward pumps turn
the span into a two-point boundary-value problem which is solved by damped
multiplicative shooting on the pump powers at z=0.

Conventions: z in m, powers in W, attenuation in 1/m (power), Raman gain in
1/(W m).  For wave k with direction sign s_k (+1 forward, -1 backward):

    s_k dP_k/dz = -alpha(f_k) P_k
                  + sum_{f_j > f_k} g(f_j - f_k) P_j P_k
                  - sum_{f_j < f_k} (f_k/f_j) g(f_k - f_j) P_j P_k
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import BvpError, ContractError, GainUndefinedError, StiffnessError
from .system_model import (FiberSpec, LaunchProfile, PumpSet, WdmGrid,
                           frequency_to_wavelength)

# Dormand-Prince 5(4) tableau and the quartic dense-output interpolant
# (standard coefficients, as tabulated in Shampine's implementation).
_DP_C = np.array([0.0, 1/5, 3/10, 4/5, 8/9, 1.0])
_DP_A = np.array([
    [0.0, 0.0, 0.0, 0.0, 0.0],
    [1/5, 0.0, 0.0, 0.0, 0.0],
    [3/40, 9/40, 0.0, 0.0, 0.0],
    [44/45, -56/15, 32/9, 0.0, 0.0],
    [19372/6561, -25360/2187, 64448/6561, -212/729, 0.0],
    [9017/3168, -355/33, 46732/5247, 49/176, -5103/18656],
])
_DP_B = np.array([35/384, 0.0, 500/1113, 125/192, -2187/6784, 11/84])
_DP_E = np.array([71/57600, 0.0, -71/16695, 71/1920, -17253/339200, 22/525, -1/40])
_DP_P = np.array([
    [1.0, -2.8535800653862835, 3.0717434641059005, -1.1270175653862835],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 4.023133379230305, -6.249321565289, 2.675424484351598],
    [0.0, -3.7324019615885042, 10.068970589843675, -5.685526961588504],
    [0.0, 2.5548038301849423, -6.399112377351017, 3.5219323679207912],
    [0.0, -1.3744241142186024, 3.272657752246729, -1.7672812570757455],
    [0.0, 1.3824689317781436, -3.764937863556287, 2.382468931778144],
])

DEFAULT_Z_POINTS = 101
DEFAULT_RTOL = 1e-6
DEFAULT_ATOL = 1e-18


@dataclass(frozen=True)
class WaveSet:
    """Channels plus pumps as one indexed collection of CW waves."""

    frequency_hz: np.ndarray
    direction: np.ndarray          # +1 forward, -1 backward
    labels: tuple                  # 'ch_<i>' or 'pump_fwd_<i>' / 'pump_bwd_<i>'
    n_channels: int

    @classmethod
    def from_link(cls, grid: WdmGrid, pump_set: PumpSet):
        freqs = list(grid.channel_center_frequency_hz)
        dirs = [1.0] * len(freqs)
        labels = [f"ch_{i}" for i in range(len(freqs))]
        for i, p in enumerate(pump_set.forward()):
            freqs.append(p.frequency_hz)
            dirs.append(1.0)
            labels.append(f"pump_fwd_{i}")
        for i, p in enumerate(pump_set.backward()):
            freqs.append(p.frequency_hz)
            dirs.append(-1.0)
            labels.append(f"pump_bwd_{i}")
        return cls(np.array(freqs), np.array(dirs), tuple(labels), grid.n_channels)

    @property
    def n_waves(self):
        return self.frequency_hz.size

    @property
    def channel_slice(self):
        return slice(0, self.n_channels)

    @property
    def backward_mask(self):
        return self.direction < 0

    @property
    def pump_mask(self):
        m = np.zeros(self.n_waves, dtype=bool)
        m[self.n_channels:] = True
        return m


@dataclass(frozen=True)
class PowerEvolution:
    """Power of every wave on a uniform z grid across one span."""

    z_m: np.ndarray
    power_w: np.ndarray            # (n_waves, n_z)
    waves: WaveSet
    underflow_events: tuple = ()
    bvp_iterations: int = 0
    bvp_residual: float = 0.0

    def __post_init__(self):
        if np.any(self.power_w < 0):
            raise ContractError("power evolution must be non-negative everywhere")

    @property
    def span_length_m(self):
        return float(self.z_m[-1])

    def channel_powers(self):
        return self.power_w[self.waves.channel_slice]

    def channel_profile_ratio(self):
        """Per-channel P(z)/P(0); zero-launch channels yield zeros."""
        p = self.channel_powers()
        p0 = p[:, :1]
        with np.errstate(divide="ignore", invalid="ignore"):
            rho = np.where(p0 > 0, p / np.where(p0 > 0, p0, 1.0), 0.0)
        return rho


def coupling_matrix(fiber: FiberSpec, waves: WaveSet):
    """M[k, j]: Raman coupling rate of wave j onto wave k, 1/(W m).

    Positive entries amplify wave k (j above k in frequency); negative entries
    deplete it, carrying the photon-energy ratio f_k/f_j.
    """
    f = waves.frequency_hz
    df = f[None, :] - f[:, None]
    gain = np.where(df > 0, fiber.raman_gain_per_w_m(np.abs(df)), 0.0)
    loss = np.where(df < 0, fiber.raman_gain_per_w_m(np.abs(df)) * (f[:, None] / np.where(f[None, :] > 0, f[None, :], 1.0)), 0.0)
    return gain - loss


def wave_attenuation_per_m(fiber: FiberSpec, waves: WaveSet):
    """Power attenuation at each wave's own wavelength, 1/m."""
    return fiber.attenuation_per_m(frequency_to_wavelength(waves.frequency_hz))


def coupled_rhs(powers_w, fiber: FiberSpec, waves: WaveSet,
                _alpha=None, _coupling=None):
    """Spatial derivative dP/dz for all waves at one z position."""
    powers_w = np.asarray(powers_w, dtype=float)
    if np.any(powers_w < 0):
        raise ContractError("coupled_rhs requires non-negative powers")
    alpha = wave_attenuation_per_m(fiber, waves) if _alpha is None else _alpha
    coupling = coupling_matrix(fiber, waves) if _coupling is None else _coupling
    return waves.direction * powers_w * (-alpha + coupling @ powers_w)


def _integrate_dp45(rhs, z0, z1, y0, z_eval, rtol, atol, max_power_w=1e3):
    """Adaptive DP45 with dense output sampled on z_eval.  Returns (Y, events).

    Y has shape (len(y0), len(z_eval)).  Clamps tiny negative excursions to
    zero and records (z, index) underflow events.  Raises StiffnessError on
    step-size underflow or when the state exceeds ``max_power_w`` (an
    unphysical blowup, reachable only through bad backward-pump guesses).
    """
    n = y0.size
    y = y0.astype(float).copy()
    z = z0
    span = z1 - z0
    h = span / 50.0
    min_step = 1e-12 * span
    k = np.empty((7, n))
    k[0] = rhs(z, y)
    out = np.empty((n, z_eval.size))
    events = []
    i_eval = 0
    while i_eval < z_eval.size and z_eval[i_eval] <= z0:
        out[:, i_eval] = y
        i_eval += 1
    attempts = 0
    while z < z1:
        h = min(h, z1 - z)
        attempts += 1
        if attempts > 100000:
            raise StiffnessError(f"step budget exhausted at z={z:.1f} m", z=z, min_step=h)
        for s in range(1, 6):
            k[s] = rhs(z + _DP_C[s] * h, y + h * (_DP_A[s, :s] @ k[:s]))
        y_new = y + h * (_DP_B @ k[:6])
        k[6] = rhs(z + h, y_new)
        if not np.all(np.isfinite(y_new)):
            h *= 0.2
            if h < min_step:
                raise StiffnessError(
                    f"step size underflow (non-finite state) at z={z:.1f} m",
                    z=z, min_step=h)
            continue
        err = h * (_DP_E @ k)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        enorm = float(np.sqrt(np.mean((err / scale) ** 2)))
        if enorm <= 1.0:
            # dense output for evaluation points inside (z, z+h]
            while i_eval < z_eval.size and z_eval[i_eval] <= z + h + 1e-9 * span:
                theta = (z_eval[i_eval] - z) / h
                q = np.array([theta, theta**2, theta**3, theta**4])
                out[:, i_eval] = y + h * (k.T @ (_DP_P @ q))
                i_eval += 1
            z += h
            y = y_new
            k[0] = k[6]
            neg = y < 0
            if np.any(neg):
                for idx in np.nonzero(neg)[0]:
                    events.append((float(z), int(idx)))
                y[neg] = 0.0
            if np.max(y) > max_power_w:
                raise StiffnessError(
                    f"power blowup beyond {max_power_w:g} W at z={z:.1f} m",
                    z=z, min_step=h)
        factor = 0.9 * enorm ** -0.2 if enorm > 0 else 5.0
        h *= min(5.0, max(0.2, factor))
        if h < min_step:
            raise StiffnessError(f"step size underflow at z={z:.1f} m", z=z, min_step=h)
    while i_eval < z_eval.size:
        out[:, i_eval] = y
        i_eval += 1
    np.maximum(out, 0.0, out=out)
    return out, events


def integrate_span(initial_powers_w, waves: WaveSet, fiber: FiberSpec,
                   z_points=DEFAULT_Z_POINTS, rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL,
                   _coupling=None) -> PowerEvolution:
    """Integrate the coupled equations across one span as an initial-value
    problem from z=0 (backward-pump entries are their trial z=0 powers)."""
    initial = np.asarray(initial_powers_w, dtype=float)
    if initial.size != waves.n_waves:
        raise ContractError("initial power vector does not match the wave set")
    if np.any(initial < 0):
        raise ContractError("initial powers must be non-negative")
    if z_points < 2:
        raise ContractError("need at least 2 output points")
    L = fiber.span_length_m
    if (z_points - 1) < np.floor(L / 1e3):
        # keep the exported grid at or below 1 km resolution per 100 km span
        z_points = int(np.floor(L / 1e3)) + 1
    alpha = wave_attenuation_per_m(fiber, waves)
    coupling = coupling_matrix(fiber, waves) if _coupling is None else _coupling
    direction = waves.direction

    def rhs(_z, p):
        p = np.maximum(p, 0.0)
        return direction * p * (-alpha + coupling @ p)

    z_eval = np.linspace(0.0, L, z_points)
    power, events = _integrate_dp45(rhs, 0.0, L, initial, z_eval, rtol, atol)
    return PowerEvolution(z_m=z_eval, power_w=power, waves=waves,
                          underflow_events=tuple(events))


def solve_backward_bvp(pump_set: PumpSet, launch: LaunchProfile, fiber: FiberSpec,
                       grid: WdmGrid, z_points=DEFAULT_Z_POINTS, rtol=DEFAULT_RTOL,
                       atol=DEFAULT_ATOL, residual_tol=1e-4, max_iterations=100,
                       damping=0.5, initial_guess_w=None) -> PowerEvolution:
    """Solve the two-point BVP set by backward pumps via damped shooting.

    Backward pump powers are specified at z=L (their injection point); the
    unknowns are their z=0 values.  The multiplicative update is damped in the
    log-power domain: guess *= (target/computed)^damping.
    """
    waves = WaveSet.from_link(grid, pump_set)
    coupling = coupling_matrix(fiber, waves)
    n_fwd_pump = len(pump_set.forward())
    bwd = waves.backward_mask
    initial = np.concatenate([
        launch.per_channel_w,
        np.array([p.power_w for p in pump_set.forward()], dtype=float),
        np.zeros(bwd.sum()),
    ])
    target = np.array([p.power_w for p in pump_set.backward()], dtype=float)

    if target.size == 0 or np.all(target == 0):
        evo = integrate_span(initial, waves, fiber, z_points, rtol, atol, _coupling=coupling)
        return PowerEvolution(evo.z_m, evo.power_w, waves, evo.underflow_events,
                              bvp_iterations=1, bvp_residual=0.0)

    bwd_index = waves.n_channels + n_fwd_pump
    active = target > 0
    if initial_guess_w is not None:
        guess = np.asarray(initial_guess_w, dtype=float).copy()
        if guess.size != target.size:
            raise ContractError("initial_guess_w must have one entry per backward pump")
        # a warm start from a different configuration may carry zeros
        guess[active & (guess <= 0)] = target[active & (guess <= 0)] * 1e-2
    else:
        guess = _undepleted_backward_guess(initial, target, waves, fiber,
                                           coupling, bwd_index)
    guess[~active] = 0.0

    # Multiplicative shooting in the log-power domain.  The first step is the
    # plain damped fixed-point update (H = damping * I); afterwards rank-1
    # Broyden updates accelerate it, which is required because the strongly
    # coupled pump-pump interaction makes the bare fixed-point map
    # non-contractive for realistic multi-pump designs.
    x = np.log(guess[active])
    log_target = np.log(target[active])
    H = damping * np.eye(x.size)
    F_prev = None
    x_prev = None
    dx = np.zeros_like(x)
    residual = np.inf
    for iteration in range(1, max_iterations + 1):
        trial = np.zeros_like(target)
        trial[active] = np.exp(x)
        initial[bwd_index:] = trial
        try:
            evo = integrate_span(initial, waves, fiber, z_points, rtol, atol,
                                 _coupling=coupling)
        except StiffnessError:
            # runaway trial state: back off along the last step (or contract
            # the whole guess if this was the first trial)
            if x_prev is None:
                x = x + np.log(0.2)
            else:
                dx = 0.25 * dx
                x = x_prev + dx
            continue
        computed = evo.power_w[bwd_index:, -1][active]
        F = np.log(np.maximum(computed, 1e-30)) - log_target
        residual = float(np.max(np.abs(np.expm1(-F))))
        if residual < residual_tol:
            return PowerEvolution(evo.z_m, evo.power_w, waves, evo.underflow_events,
                                  bvp_iterations=iteration, bvp_residual=residual)
        if F_prev is not None:
            dF = F - F_prev
            HdF = H @ dF
            denom = float(dx @ HdF)
            if abs(denom) > 1e-12:
                H = H + np.outer(dx - HdF, dx @ H) / denom
        F_prev = F
        dx = -H @ F
        biggest = float(np.max(np.abs(dx))) if dx.size else 0.0
        if biggest > 1.5:
            dx = dx * (1.5 / biggest)    # trust region, nepers
        x_prev = x
        x = x + dx
    raise BvpError(
        f"backward-pump shooting did not converge in {max_iterations} iterations "
        f"(residual {residual:.3e} > {residual_tol:g})",
        residual=residual, iterations=max_iterations)


def _undepleted_backward_guess(initial, target, waves, fiber, coupling, bwd_index):
    """First guess for backward-pump powers at z=0: propagate the injection
    value through fiber loss plus the undepleted Raman gain/loss from every
    other wave's attenuation-only profile."""
    L = fiber.span_length_m
    alpha = wave_attenuation_per_m(fiber, waves)
    # attenuation-only effective interaction length of each source wave
    l_eff = -np.expm1(-alpha * L) / alpha
    boundary = initial.copy()
    boundary[bwd_index:] = target
    exponent = -alpha[bwd_index:] * L + coupling[bwd_index:] @ (boundary * l_eff)
    # cap the predicted net gain so the trial state stays tame
    return target * np.exp(np.clip(exponent, -8.0, 2.0))


def net_span_gain(evolution: PowerEvolution, grid: WdmGrid):
    """Per-channel net gain P(L)/P(0) in dB."""
    p = evolution.channel_powers()
    if p.shape[0] != grid.n_channels:
        raise ContractError("evolution does not cover all grid channels")
    p0, pl = p[:, 0], p[:, -1]
    if np.any(p0 <= 0):
        bad = int(np.nonzero(p0 <= 0)[0][0])
        raise GainUndefinedError(f"channel {bad} launched with zero power has undefined gain")
    return 10.0 * np.log10(pl / p0)


def evolution_to_csv(evolution: PowerEvolution) -> str:
    """CSV export `z_km,wave_id,power_mw` (one row per wave per z sample)."""
    buf = io.StringIO()
    buf.write("z_km,wave_id,power_mw\n")
    for w, label in enumerate(evolution.waves.labels):
        for i, z in enumerate(evolution.z_m):
            buf.write(f"{z/1e3:.9g},{label},{evolution.power_w[w, i]*1e3:.9g}\n")
    return buf.getvalue()

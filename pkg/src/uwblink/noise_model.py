"""ASE noise per span: distributed (Raman) and lumped (band EDFA) terms.

Both formulas account for the two polarization modes exactly once.  The
anchor fixing the convention: a transparent noiseless amplifier (G=1,
NF=0 dB) adds zero noise, and switching every pump off makes the
distributed term vanish identically.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .constants import BOLTZMANN, PLANCK
from .errors import ContractError
from .raman_propagation import PowerEvolution
from .system_model import AmplifierSpec, FiberSpec, WdmGrid


@dataclass(frozen=True)
class AsePerChannel:
    """Per-span ASE referenced to the receiver plane (after the span's ideal
    gain restoration), in the reference bandwidth."""

    distributed_w: np.ndarray
    lumped_w: np.ndarray
    reference_bandwidth_hz: float

    def __post_init__(self):
        if np.any(self.distributed_w < 0) or np.any(self.lumped_w < 0):
            raise ContractError("ASE powers must be non-negative")

    @property
    def total_w(self):
        return self.distributed_w + self.lumped_w


def phonon_occupancy(delta_f_hz, temperature_k):
    """Bose-Einstein occupancy eta = 1/(exp(h df / kT) - 1) of the Stokes shift."""
    delta_f_hz = np.asarray(delta_f_hz, dtype=float)
    if np.any(delta_f_hz <= 0) or temperature_k <= 0:
        raise ContractError("phonon occupancy needs positive frequency offset and temperature")
    return 1.0 / np.expm1(PLANCK * delta_f_hz / (BOLTZMANN * temperature_k))


def distributed_ase(evolution: PowerEvolution, fiber: FiberSpec, grid: WdmGrid,
                    reference_bandwidth_hz=None):
    """Span-end (z=L) spontaneous Raman emission power per channel, W.

    For channel k the source term along z is
        2 h f_k B_ref sum_pumps g(f_p - f_k) (1 + eta(f_p - f_k, T)) P_p(z)
    restricted to pumps with f_p > f_k; the emitted noise then rides the
    channel's own net gain/loss profile to z=L.  Zero-launch channels carry
    no profile and return 0.
    """
    if reference_bandwidth_hz is None:
        reference_bandwidth_hz = grid.symbol_rate_baud
    waves = evolution.waves
    if waves.n_channels != grid.n_channels:
        raise ContractError("evolution does not cover the grid channels")
    pump_idx = np.nonzero(waves.pump_mask)[0]
    n_ch = grid.n_channels
    out = np.zeros(n_ch)
    if pump_idx.size == 0:
        return out
    f_ch = grid.channel_center_frequency_hz
    f_p = waves.frequency_hz[pump_idx]
    pump_power = evolution.power_w[pump_idx]          # (n_pumps, n_z)
    rho = evolution.channel_profile_ratio()           # (n_ch, n_z)
    z = evolution.z_m
    for k in range(n_ch):
        df = f_p - f_ch[k]
        above = df > 0
        if not np.any(above) or rho[k, 0] == 0:
            continue
        g = fiber.raman_gain_per_w_m(df[above])
        eta = phonon_occupancy(df[above], fiber.temperature_k)
        source = 2.0 * PLANCK * f_ch[k] * reference_bandwidth_hz * (
            (g * (1.0 + eta)) @ pump_power[above]
        )                                              # (n_z,)
        # propagate each slice's emission to z=L with the channel profile
        with np.errstate(divide="ignore"):
            weight = np.where(rho[k] > 0, rho[k, -1] / np.where(rho[k] > 0, rho[k], 1.0), 0.0)
        out[k] = np.trapezoid(source * weight, z)
    return out


def lumped_ase(net_gain_db, amplifier: AmplifierSpec, grid: WdmGrid,
               reference_bandwidth_hz=None):
    """EDFA ASE per channel, W: P = h f B (G F - 1) with F = 10^(NF/10).

    G is the restoring gain.  A span with net Raman gain above the span loss
    would need G < 1; the amplifier cannot attenuate, so G is floored at one
    (0 dB) with a warning.
    """
    if reference_bandwidth_hz is None:
        reference_bandwidth_hz = grid.symbol_rate_baud
    net_gain_db = np.asarray(net_gain_db, dtype=float)
    if net_gain_db.size != grid.n_channels:
        raise ContractError("net gain vector does not match the grid")
    gain = 10.0 ** (net_gain_db / 10.0)
    if np.any(gain < 1.0):
        warnings.warn("restoring gain < 0 dB requested; flooring at 0 dB", stacklevel=2)
        gain = np.maximum(gain, 1.0)
    nf_db = np.array([amplifier.noise_figure_for(b) for b in grid.band_of_channel])
    noise_factor = 10.0 ** (nf_db / 10.0)
    f = grid.channel_center_frequency_hz
    return PLANCK * f * reference_bandwidth_hz * (gain * noise_factor - 1.0)


def accumulate_ase(per_span):
    """Sum AsePerChannel contributions over spans (ideal restoration makes
    them add at the receiver)."""
    per_span = list(per_span)
    if not per_span:
        raise ContractError("need at least one span")
    n = per_span[0].distributed_w.size
    bw = per_span[0].reference_bandwidth_hz
    for s in per_span[1:]:
        if s.distributed_w.size != n or s.reference_bandwidth_hz != bw:
            raise ContractError("span ASE entries have mismatched grid or bandwidth")
    return AsePerChannel(
        distributed_w=np.sum([s.distributed_w for s in per_span], axis=0),
        lumped_w=np.sum([s.lumped_w for s in per_span], axis=0),
        reference_bandwidth_hz=bw,
    )

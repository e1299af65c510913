"""Compose propagation, ASE, and NLI into per-channel SNR and throughput.

The link is a cascade of identical spans, each ending in an ideal band EDFA
that restores the launch profile, so one span is solved and its noise
contributions accumulate linearly at the receiver.  SNR is formed at the
receiver plane: launch power over accumulated noise in the reference
bandwidth.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .noise_model import AsePerChannel, accumulate_ase, distributed_ase, lumped_ase
from .nli_model import NliPerChannel, accumulate_nli, closed_form_nli
from .raman_propagation import PowerEvolution, solve_backward_bvp
from .system_model import LinkSpec

SNR_CAP_DB = 60.0


@dataclass(frozen=True)
class SnrReport:
    """Per-channel SNR decomposition and total throughput after n spans."""

    channel_wavelength_m: np.ndarray
    snr_ase_db: np.ndarray
    snr_nli_db: np.ndarray
    snr_total_db: np.ndarray
    throughput_tbps: float
    n_spans: int
    launch_dbm: np.ndarray

    @property
    def average_snr_db(self):
        return float(np.mean(self.snr_total_db))


@dataclass(frozen=True)
class LinkResult:
    """SnrReport plus the intermediate physics for exports and diagnostics."""

    report: SnrReport
    evolution: PowerEvolution
    span_ase: AsePerChannel
    span_nli: NliPerChannel
    net_gain_db: np.ndarray


def throughput(snr_total_db, grid) -> float:
    """Total dual-polarization Shannon throughput, Tb/s:
    sum_k 2 R_s log2(1 + SNR_k)."""
    snr_db = np.asarray(snr_total_db, dtype=float)
    snr_lin = 10.0 ** (snr_db / 10.0)
    if np.any(snr_lin < 0) or np.any(np.isnan(snr_lin)):
        raise ContractError("SNR must be a non-negative linear quantity")
    rs = grid.symbol_rate_baud
    return float(np.sum(2.0 * rs * np.log2(1.0 + snr_lin)) / 1e12)


def _snr_db(signal_w, noise_w):
    """Linear ratio in dB with the reporting cap for noiseless channels."""
    with np.errstate(divide="ignore", invalid="ignore"):
        snr = np.where(noise_w > 0, signal_w / np.where(noise_w > 0, noise_w, 1.0), np.inf)
    snr = np.where(signal_w <= 0, 0.0, snr)
    cap = 10.0 ** (SNR_CAP_DB / 10.0)
    snr = np.minimum(snr, cap)
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(np.where(snr > 0, snr, np.nan))


def simulate_link(link: LinkSpec, rtol=1e-6, z_points=101, nli_options=None,
                  bvp_initial_guess_w=None, bvp_residual_tol=1e-4) -> LinkResult:
    """Solve one span's boundary-value problem, form per-span ASE and NLI,
    accumulate over the homogeneous cascade, and report SNR and throughput."""
    evolution = solve_backward_bvp(
        link.pump_set, link.launch_profile, link.fiber, link.grid,
        z_points=z_points, rtol=rtol, residual_tol=bvp_residual_tol,
        initial_guess_w=bvp_initial_guess_w)

    launch_w = link.launch_profile.per_channel_w
    powered = launch_w > 0
    p_end = evolution.channel_powers()[:, -1]
    gain_lin = np.ones_like(launch_w)
    gain_lin[powered] = p_end[powered] / launch_w[powered]
    with np.errstate(divide="ignore"):
        net_gain_db = np.where(powered, 10.0 * np.log10(np.where(powered, gain_lin, 1.0)), 0.0)

    restore_gain = np.ones_like(launch_w)
    restore_gain[powered] = 1.0 / gain_lin[powered]

    bw = link.grid.symbol_rate_baud
    dist_end = distributed_ase(evolution, link.fiber, link.grid, bw)
    edfa = lumped_ase(-net_gain_db, link.amplifier, link.grid, bw)
    edfa = np.where(powered, edfa, 0.0)
    span_ase = AsePerChannel(distributed_w=dist_end * restore_gain,
                             lumped_w=edfa, reference_bandwidth_hz=bw)

    nli_kwargs = dict(nli_options or {})
    span_nli = closed_form_nli(evolution, link.fiber, link.grid, bw, **nli_kwargs)

    ase_total = accumulate_ase([span_ase] * link.n_spans).total_w
    nli_total = accumulate_nli([span_nli], n_spans=link.n_spans)

    snr_ase = _snr_db(launch_w, ase_total)
    snr_nli = _snr_db(launch_w, nli_total)
    snr_tot = _snr_db(launch_w, ase_total + nli_total)
    # zero-power channels report 0 linear SNR -> -inf dB; keep them finite for
    # serialization but contribute nothing to throughput
    snr_ase = np.nan_to_num(snr_ase, nan=-np.inf)
    snr_nli = np.nan_to_num(snr_nli, nan=-np.inf)
    snr_tot = np.nan_to_num(snr_tot, nan=-np.inf)
    thr = throughput(np.where(np.isfinite(snr_tot), snr_tot, -np.inf), link.grid)

    report = SnrReport(
        channel_wavelength_m=link.grid.channel_wavelength_m,
        snr_ase_db=snr_ase, snr_nli_db=snr_nli, snr_total_db=snr_tot,
        throughput_tbps=thr, n_spans=link.n_spans,
        launch_dbm=link.launch_profile.per_channel_dbm.copy())
    return LinkResult(report=report, evolution=evolution, span_ase=span_ase,
                      span_nli=span_nli, net_gain_db=net_gain_db)


COST_NLI_OPTIONS = {"n_xpm_nodes": 12, "n_spm_nodes": 24, "n_phi": 512}


def link_cost_tbps(link: LinkSpec, rtol=1e-4, z_points=51,
                   bvp_initial_guess_w=None) -> float:
    """Throughput objective used by the optimizer: cheaper tolerances, same
    physics path."""
    return simulate_link(link, rtol=rtol, z_points=z_points,
                         nli_options=COST_NLI_OPTIONS,
                         bvp_initial_guess_w=bvp_initial_guess_w,
                         bvp_residual_tol=1e-3).report.throughput_tbps


# ---------------------------------------------------------------------------
# exports
# ---------------------------------------------------------------------------

def snr_report_to_csv(report: SnrReport) -> str:
    """`wavelength_nm,snr_ase_db,snr_nli_db,snr_total_db`, wavelength ascending."""
    order = np.argsort(report.channel_wavelength_m)
    buf = io.StringIO()
    buf.write("wavelength_nm,snr_ase_db,snr_nli_db,snr_total_db\n")
    for i in order:
        buf.write(f"{report.channel_wavelength_m[i]*1e9:.9g},"
                  f"{report.snr_ase_db[i]:.9g},"
                  f"{report.snr_nli_db[i]:.9g},"
                  f"{report.snr_total_db[i]:.9g}\n")
    return buf.getvalue()


def snr_report_summary(report: SnrReport) -> dict:
    finite = np.isfinite(report.snr_total_db)
    return {
        "n_spans": report.n_spans,
        "n_channels": int(report.snr_total_db.size),
        "throughput_tbps": report.throughput_tbps,
        "average_snr_total_db": float(np.mean(report.snr_total_db[finite])) if finite.any() else None,
        "average_snr_ase_db": float(np.mean(report.snr_ase_db[finite])) if finite.any() else None,
        "average_snr_nli_db": float(np.mean(report.snr_nli_db[finite])) if finite.any() else None,
        "total_launch_dbm": float(10*np.log10(np.sum(10**(report.launch_dbm/10.0)))),
    }


def snr_report_summary_json(report: SnrReport) -> str:
    return json.dumps(snr_report_summary(report), indent=2, sort_keys=True) + "\n"

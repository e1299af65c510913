"""Closed-form vs numerical-oracle comparison harness (small systems).

Builds deterministic randomized desk-scale scenarios (3-16 channels, with and
without pumps), solves the span, and evaluates the NLI with both routes.
Used by the `oracle-check` command and the acceptance suite.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError
from .nli_model import closed_form_nli, gn_numerical_oracle
from .raman_propagation import solve_backward_bvp
from .system_model import (Band, BandPlan, FiberSpec, LaunchProfile, PumpSet,
                           RamanPump, build_grid, watt_to_dbm)


def _case_system(n_channels, case_index, rng, symbol_rate_baud, spacing_hz):
    plan = BandPlan(bands=(Band("C", n_channels),), channel_spacing_hz=spacing_hz,
                    symbol_rate_baud=symbol_rate_baud, gaps_nm=())
    grid = build_grid(plan)
    fiber = FiberSpec.create()
    launch = LaunchProfile(rng.uniform(-4.0, 2.0, n_channels))
    pumps = []
    flavour = case_index % 3
    if flavour >= 1:
        pumps.append(RamanPump(rng.uniform(1430e-9, 1470e-9),
                               rng.uniform(0.05, 0.25), "forward"))
    if flavour == 2:
        pumps.append(RamanPump(rng.uniform(1430e-9, 1470e-9),
                               rng.uniform(0.05, 0.25), "backward"))
    return grid, fiber, launch, PumpSet(tuple(pumps))


def oracle_comparison(n_channels=5, n_cases=3, seed=42, symbol_rate_baud=96e9,
                      spacing_hz=100e9, oracle_rel_tol=1e-3, strict=False):
    """Run the comparison; returns {'rows': [...], 'summary': {...}}."""
    if not 3 <= n_channels <= 16:
        raise ContractError("oracle comparison supports 3..16 channels")
    rows = []
    worst_channel = 0.0
    worst_total = 0.0
    for case in range(n_cases):
        rng = np.random.Generator(np.random.Philox(key=[int(seed), int(case)]))
        grid, fiber, launch, pumps = _case_system(
            n_channels, case, rng, symbol_rate_baud, spacing_hz)
        evolution = solve_backward_bvp(pumps, launch, fiber, grid, z_points=161)
        estimate = closed_form_nli(evolution, fiber, grid)
        oracle = gn_numerical_oracle(evolution, fiber, grid,
                                     rel_tol=oracle_rel_tol, strict=strict)
        dev_db = 10.0 * np.log10(estimate.nli_w / oracle.nli_w)
        total_db = float(10.0 * np.log10(estimate.nli_w.sum() / oracle.nli_w.sum()))
        worst_channel = max(worst_channel, float(np.max(np.abs(dev_db))))
        worst_total = max(worst_total, abs(total_db))
        lam_nm = grid.channel_wavelength_m * 1e9
        for k in range(n_channels):
            rows.append({
                "case": case,
                "channel": k,
                "wavelength_nm": float(lam_nm[k]),
                "launch_dbm": float(launch.per_channel_dbm[k]),
                "closed_form_nli_dbm": float(watt_to_dbm(estimate.nli_w[k])),
                "oracle_nli_dbm": float(watt_to_dbm(oracle.nli_w[k])),
                "deviation_db": float(dev_db[k]),
                "oracle_achieved_error": float(oracle.achieved_error[k]),
                "n_pumps": len(pumps.pumps),
            })
        rows.append({
            "case": case, "channel": "total", "wavelength_nm": "",
            "launch_dbm": float(launch.total_dbm),
            "closed_form_nli_dbm": float(watt_to_dbm(estimate.nli_w.sum())),
            "oracle_nli_dbm": float(watt_to_dbm(oracle.nli_w.sum())),
            "deviation_db": total_db,
            "oracle_achieved_error": float(np.max(oracle.achieved_error)),
            "n_pumps": len(pumps.pumps),
        })
    return {
        "rows": rows,
        "summary": {
            "n_channels": n_channels,
            "n_cases": n_cases,
            "seed": seed,
            "worst_channel_deviation_db": worst_channel,
            "worst_total_deviation_db": worst_total,
        },
    }


def oracle_comparison_csv(result) -> str:
    cols = ["case", "channel", "wavelength_nm", "launch_dbm", "closed_form_nli_dbm",
            "oracle_nli_dbm", "deviation_db", "oracle_achieved_error", "n_pumps"]
    lines = [",".join(cols)]
    for row in result["rows"]:
        cells = []
        for c in cols:
            v = row[c]
            cells.append(f"{v:.9g}" if isinstance(v, float) else str(v))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"

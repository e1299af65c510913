"""Nonlinear-interference noise per span.

Two independent evaluation routes of the dual-polarization GN integral

    P_NLI(f) = B_ref (16/27) gamma^2
               iint G(f1) G(f2) G(f1+f2-f) |LK(f1,f2,f)|^2 df1 df2,
    LK = int_0^L sqrt(rho(z,f1) rho(z,f2) rho(z,f1+f2-f) / rho(z,f)) e^{j dbeta z} dz,

with rho the per-channel normalized power profile from the span evolution and
dbeta = 4 pi^2 (f1-f)(f2-f) [beta2 + pi beta3 (f1+f2-2 f_ref)].  Both routes
reference the result to the launch plane (ideal end-of-span restoration).

* ``closed_form_nli`` is the fast production path: each channel's profile is
  fitted by a low-order attenuation+slope model, projected on a small
  exponential basis whose link function integrates analytically, and the NLI
  is assembled from self- (SPM) and cross-channel (XPM) terms in O(N^2).
* ``gn_numerical_oracle`` evaluates the double integral directly with
  adaptive tensor quadrature and the raw sampled profiles; it is the
  verification path for small channel counts.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ContractError, QuadratureError
from .raman_propagation import PowerEvolution
from .system_model import FiberSpec, WdmGrid

_ORACLE_MAX_CHANNELS = 16


@dataclass(frozen=True)
class NliPerChannel:
    """Per-span NLI power in the reference bandwidth, launch-referenced."""

    nli_w: np.ndarray
    reference_bandwidth_hz: float
    accumulation_exponent: float = 1.0
    fit_residual: np.ndarray | None = None
    achieved_error: np.ndarray | None = None

    def __post_init__(self):
        if np.any(self.nli_w < 0):
            raise ContractError("NLI powers must be non-negative")


# ---------------------------------------------------------------------------
# piecewise-linear-exact Fourier transform of sampled profiles
# ---------------------------------------------------------------------------

def _e01(x):
    """E0 = (e^x - 1)/x and E1 = (e^x (x-1) + 1)/x^2, stable near x=0."""
    x = np.asarray(x, dtype=complex)
    small = np.abs(x) < 1e-4
    xs = np.where(small, 1.0, x)
    with np.errstate(invalid="ignore", divide="ignore"):
        e0 = (np.exp(xs) - 1.0) / xs
        e1 = (np.exp(xs) * (xs - 1.0) + 1.0) / xs**2
    e0 = np.where(small, 1.0 + x / 2 + x**2 / 6 + x**3 / 24, e0)
    e1 = np.where(small, 0.5 + x / 3 + x**2 / 8 + x**3 / 30, e1)
    return e0, e1


def fourier_rows(d, z, phi):
    """Row-wise integral of d_i(z) e^{j phi_i z} over z for piecewise-linear d.

    The oscillation is integrated exactly per segment, so arbitrarily fast
    phase rotation is handled on a coarse z grid as long as d itself is
    smooth between samples.
    """
    d = np.atleast_2d(d)
    phi = np.atleast_1d(phi)
    h = np.diff(z)
    x = 1j * phi[:, None] * h[None, :]
    e0, e1 = _e01(x)
    ph = np.exp(1j * phi[:, None] * z[None, :-1])
    return np.sum(ph * h * ((e0 - e1) * d[:, :-1] + e1 * d[:, 1:]), axis=1)


# ---------------------------------------------------------------------------
# per-channel effective profile fit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProfileFit:
    """Low-order model of each channel's normalized power profile.

    Log domain:  ln rho_k(z) ~ -A_k z + Sf_k wf(z) + Sb_k wb(z)  with
    wf = (1 - e^{-sig_f z})/sig_f (co-propagating pump depletion shape) and
    wb = (e^{+sig_b z} - 1)/sig_b (counter-propagating pump growth shape).
    For the analytic link function the exponential of the fit is projected
    onto exponentials exp(-(A_k + m) z), m in a fixed rate menu.
    """

    attenuation_per_m: np.ndarray      # A_k
    forward_slope_per_m: np.ndarray    # Sf_k
    backward_slope_per_m: np.ndarray   # Sb_k
    sigma_forward_per_m: float
    sigma_backward_per_m: float
    exp_rates: np.ndarray              # (n_ch, n_terms)
    exp_coeffs: np.ndarray             # (n_ch, n_terms)
    residual: np.ndarray               # weighted RMS of the log fit
    active: np.ndarray                 # channels with nonzero launch

    def profile(self, k, z):
        return np.exp(
            -self.attenuation_per_m[k] * z
            + self.forward_slope_per_m[k] * _w_shape(z, self.sigma_forward_per_m)
            + self.backward_slope_per_m[k] * _w_shape(z, -self.sigma_backward_per_m)
        )


def _w_shape(z, sigma):
    """(1 - e^{-sigma z})/sigma, the integrated pump-decay shape (sigma may be
    negative for a growing backward-pump shape)."""
    if sigma == 0.0:
        return z
    return -np.expm1(-sigma * z) / sigma


def _pump_sigma(evolution, fiber, forward):
    """Pump-band attenuation used as the fixed shape rate, 1/m."""
    waves = evolution.waves
    idx = np.nonzero(waves.pump_mask & ((waves.direction > 0) == forward))[0]
    if idx.size:
        lam = 299792458.0 / waves.frequency_hz[idx]
        p = evolution.power_w[idx, 0 if forward else -1]
        w = p / p.sum() if p.sum() > 0 else np.full(idx.size, 1.0 / idx.size)
        return float(np.sum(w * fiber.attenuation_per_m(lam)))
    lam_ch = 299792458.0 / waves.frequency_hz[waves.channel_slice]
    return 2.0 * float(np.mean(fiber.attenuation_per_m(lam_ch)))


def fit_effective_profiles(evolution: PowerEvolution, fiber: FiberSpec) -> ProfileFit:
    """Weighted least-squares fit of every channel's simulated profile."""
    z = evolution.z_m
    rho = evolution.channel_profile_ratio()
    active = rho[:, 0] > 0
    n_ch = rho.shape[0]
    sig_f = _pump_sigma(evolution, fiber, forward=True)
    sig_b = _pump_sigma(evolution, fiber, forward=False)
    basis = np.stack([-z, _w_shape(z, sig_f), _w_shape(z, -sig_b)])   # (3, nz)

    A = np.zeros(n_ch)
    Sf = np.zeros(n_ch)
    Sb = np.zeros(n_ch)
    resid = np.zeros(n_ch)
    y = np.zeros_like(rho)
    np.log(rho, out=y, where=rho > 0)
    w = rho**2
    sol = np.zeros((n_ch, 3))
    idx = np.nonzero(active)[0]
    for k in idx:
        wk = np.sqrt(w[k])
        sol[k], *_ = np.linalg.lstsq((basis * wk).T, y[k] * wk, rcond=None)
    A[:], Sf[:], Sb[:] = sol[:, 0], sol[:, 1], sol[:, 2]
    model = sol @ basis
    wsum = w.sum(axis=1)
    resid = np.sqrt(np.sum(w * (y - model) ** 2, axis=1) / np.where(wsum > 0, wsum, 1.0))
    resid[~active] = 0.0

    # exponential projection: rho_fit(z) ~ sum_m c_m exp(-(A + r_m) z)
    menu = np.array([0.0, sig_f, 2 * sig_f, -sig_b, -2 * sig_b, sig_f - sig_b])
    rates = A[:, None] + menu[None, :]
    coeffs = np.zeros_like(rates)
    for k in idx:
        target = np.exp(sol[k] @ basis)
        cols = np.exp(-np.outer(rates[k], z))
        wk = target                                       # weight high-power region
        cc, *_ = np.linalg.lstsq((cols * wk).T, target * wk, rcond=None)
        coeffs[k] = cc
    return ProfileFit(A, Sf, Sb, sig_f, sig_b, rates, coeffs, resid, active)


def link_function_exp(coeffs, rates, span_m, phi):
    """LK(phi) for a sum-of-exponentials profile, end terms included:
    sum_m c_m (1 - e^{(j phi - r_m) L}) / (r_m - j phi)."""
    jw = 1j * np.atleast_1d(phi)[None, :]
    r = np.atleast_1d(rates)[:, None]
    c = np.atleast_1d(coeffs)[:, None]
    return np.sum(c * (1.0 - np.exp((jw - r) * span_m)) / (r - jw), axis=0)


# ---------------------------------------------------------------------------
# closed-form (production) path
# ---------------------------------------------------------------------------

@lru_cache(maxsize=32)
def _leggauss(n):
    return np.polynomial.legendre.leggauss(n)


def _mapped_nodes(lo, hi, scale, n):
    """Gauss-Legendre nodes on [lo, hi] under q = scale*sinh(tau): the change
    of variable concentrates nodes around q=0 where the FWM efficiency ridge
    sits."""
    xg, wg = _leggauss(n)
    t0, t1 = np.arcsinh(lo / scale), np.arcsinh(hi / scale)
    tau = 0.5 * (t0 + t1) + 0.5 * (t1 - t0) * xg
    q = scale * np.sinh(tau)
    w = 0.5 * (t1 - t0) * wg * scale * np.cosh(tau)
    return q, w


def closed_form_nli(evolution: PowerEvolution, fiber: FiberSpec, grid: WdmGrid,
                    reference_bandwidth_hz=None, n_xpm_nodes=16, n_spm_nodes=32,
                    n_phi=768, profile_fit=None) -> NliPerChannel:
    """SPM+XPM estimator over fitted per-channel effective profiles, O(N^2)."""
    if reference_bandwidth_hz is None:
        reference_bandwidth_hz = grid.symbol_rate_baud
    if evolution.waves.n_channels != grid.n_channels:
        raise ContractError("evolution does not cover the grid channels")
    n = grid.n_channels
    gamma = fiber.nonlinear_coefficient_per_w_m
    fit = profile_fit if profile_fit is not None else fit_effective_profiles(evolution, fiber)
    p0 = evolution.channel_powers()[:, 0]
    B = np.full(n, float(reference_bandwidth_hz))
    G = np.where(p0 > 0, p0 / B, 0.0)
    if gamma == 0.0 or not np.any(G > 0):
        return NliPerChannel(np.zeros(n), reference_bandwidth_hz,
                             fit_residual=fit.residual)

    f = grid.channel_center_frequency_hz
    f_ref = 299792458.0 / fiber.reference_wavelength_m
    beta2 = fiber.beta2_s2_per_m()
    beta3 = fiber.beta3_s3_per_m()
    L = fiber.span_length_m
    lo, hi = f - B / 2, f + B / 2

    # |LK|^2 tabulated on a log phi grid per channel, then integrated once so
    # the XPM inner integral becomes two table lookups.
    span = (f.max() - f.min()) + B.max()
    b2_worst = abs(beta2) + np.pi * abs(beta3) * span
    phi_max = max(4 * np.pi**2 * b2_worst * 1.5 * span * B.max(), 1e-3)
    phi_grid = np.concatenate([[0.0], np.geomspace(1e-8, phi_max, n_phi)])
    active_idx = np.nonzero(fit.active & (G > 0))[0]
    Wtab = np.zeros((n, phi_grid.size))
    for k in active_idx:
        Wtab[k] = np.abs(link_function_exp(fit.exp_coeffs[k], fit.exp_rates[k], L, phi_grid)) ** 2
    Vtab = np.concatenate(
        [np.zeros((n, 1)),
         np.cumsum(0.5 * (Wtab[:, 1:] + Wtab[:, :-1]) * np.diff(phi_grid)[None, :], axis=1)],
        axis=1)

    xg, wg = _leggauss(n_xpm_nodes)
    acc = np.zeros(n)

    # XPM: loop interferers, vectorized over every channel under test.
    for k in active_idx:
        u = 0.5 * (lo[k] + hi[k]) + 0.5 * (hi[k] - lo[k]) * xg      # (nodes,)
        wq = 0.5 * (hi[k] - lo[k]) * wg
        b2e = beta2 + np.pi * beta3 * (u[None, :] + f[:, None] - 2 * f_ref)
        kap = 4 * np.pi**2 * np.abs(u[None, :] - f[:, None]) * np.abs(b2e)
        nu_lo = np.maximum(-B[:, None] / 2, lo[k] - u[None, :])
        nu_hi = np.minimum(B[:, None] / 2, hi[k] - u[None, :])
        x_hi, x_lo = kap * nu_hi, kap * nu_lo
        v = np.sign(x_hi) * np.interp(np.abs(x_hi), phi_grid, Vtab[k]) \
            - np.sign(x_lo) * np.interp(np.abs(x_lo), phi_grid, Vtab[k])
        with np.errstate(divide="ignore", invalid="ignore"):
            inner = np.where(kap > 0, v / np.where(kap > 0, kap, 1.0),
                             Wtab[k, 0] * (nu_hi - nu_lo))
        contrib = 2.0 * G[k] ** 2 * G * (np.maximum(inner, 0.0) @ wq)
        contrib[k] = 0.0                                            # self term is SPM
        acc += contrib

    # SPM: hexagonal support |nu1|,|nu2|,|nu1+nu2| <= B/2 around each carrier.
    for i in active_idx:
        b2e = abs(beta2 + np.pi * beta3 * (2 * f[i] - 2 * f_ref))
        ridge = max(fit.attenuation_per_m[i], 1e-5) / (4 * np.pi**2 * b2e * (B[i] / 2))
        s0 = max(ridge, 1e-4 * B[i])
        nu1, wq1 = _mapped_nodes(-B[i] / 2, B[i] / 2, s0, n_spm_nodes)
        kap1 = 4 * np.pi**2 * np.abs(nu1) * b2e
        n2lo = np.maximum(-B[i] / 2, -B[i] / 2 - nu1)
        n2hi = np.minimum(B[i] / 2, B[i] / 2 - nu1)
        x_hi, x_lo = kap1 * n2hi, kap1 * n2lo
        v = np.sign(x_hi) * np.interp(np.abs(x_hi), phi_grid, Vtab[i]) \
            - np.sign(x_lo) * np.interp(np.abs(x_lo), phi_grid, Vtab[i])
        with np.errstate(divide="ignore", invalid="ignore"):
            inner = np.where(kap1 > 0, v / np.where(kap1 > 0, kap1, 1.0),
                             Wtab[i, 0] * (n2hi - n2lo))
        acc[i] += G[i] ** 3 * np.sum(wq1 * np.maximum(inner, 0.0))

    nli = (16.0 / 27.0) * gamma**2 * acc * B
    nli[~fit.active] = 0.0
    return NliPerChannel(np.maximum(nli, 0.0), reference_bandwidth_hz,
                         fit_residual=fit.residual)


# ---------------------------------------------------------------------------
# numerical oracle
# ---------------------------------------------------------------------------

def gn_numerical_oracle(evolution: PowerEvolution, fiber: FiberSpec, grid: WdmGrid,
                        reference_bandwidth_hz=None, rel_tol=1e-3, base_points=12,
                        max_refinements=2, strict=True) -> NliPerChannel:
    """Direct adaptive evaluation of the GN double integral (N_ch <= 16).

    Per channel-triple the integrand is smooth, so tensor Gauss-Legendre
    quadrature with sinh-mapped nodes (dense around the FWM ridge) converges
    quickly; the node count is refined until successive estimates agree to
    ``rel_tol``.  Raises QuadratureError when the budget is exhausted unless
    ``strict=False``, in which case the achieved error is reported per
    channel on the result.
    """
    if reference_bandwidth_hz is None:
        reference_bandwidth_hz = grid.symbol_rate_baud
    n = grid.n_channels
    if n > _ORACLE_MAX_CHANNELS:
        raise ContractError(f"oracle intended for <= {_ORACLE_MAX_CHANNELS} channels, got {n}")
    if evolution.waves.n_channels != n:
        raise ContractError("evolution does not cover the grid channels")

    gamma = fiber.nonlinear_coefficient_per_w_m
    p0 = evolution.channel_powers()[:, 0]
    B = np.full(n, float(reference_bandwidth_hz))
    G = np.where(p0 > 0, p0 / B, 0.0)
    if gamma == 0.0 or not np.any(G > 0):
        return NliPerChannel(np.zeros(n), reference_bandwidth_hz,
                             achieved_error=np.zeros(n))

    f = grid.channel_center_frequency_hz
    f_ref = 299792458.0 / fiber.reference_wavelength_m
    beta2 = fiber.beta2_s2_per_m()
    beta3 = fiber.beta3_s3_per_m()
    z = evolution.z_m
    rho_all = evolution.channel_profile_ratio()
    act = np.nonzero(G > 0)[0]
    f_act = f[act]
    rho_act = rho_all[act]
    lo, hi = f - B / 2, f + B / 2
    a_char = max(float(np.mean(fiber.attenuation_per_m(299792458.0 / f_act))), 1e-5)

    def rho_at(farr):
        """Profiles at arbitrary frequencies: linear interpolation between the
        active channel centers, clamped at the band edges."""
        pos = np.interp(farr, f_act, np.arange(act.size))
        i0 = np.floor(pos).astype(int)
        i1 = np.minimum(i0 + 1, act.size - 1)
        w = (pos - i0)[:, None]
        return (1 - w) * rho_act[i0] + w * rho_act[i1]

    out = np.zeros(n)
    errs = np.zeros(n)
    for i in act:
        fi = f[i]
        rho_f = rho_at(np.array([fi]))[0]

        def cut_total(npts):
            total = 0.0
            b2c = abs(beta2 + np.pi * beta3 * (2 * fi - 2 * f_ref))
            for a in act:
                pa0, pa1 = lo[a] - fi, hi[a] - fi
                for b in act:
                    qb0, qb1 = lo[b] - fi, hi[b] - fi
                    for c in act:
                        pc0, pc1 = lo[c] - fi, hi[c] - fi
                        if pa1 + qb1 <= pc0 or pa0 + qb0 >= pc1:
                            continue
                        W = G[a] * G[b] * G[c]
                        kq = 4 * np.pi**2 * b2c * max(abs(qb0), abs(qb1))
                        sp = max(a_char / kq, 1e-3 * (pa1 - pa0)) if kq > 0 else (pa1 - pa0)
                        p_nodes, p_w = _mapped_nodes(pa0, pa1, sp, npts)
                        rows_p = rho_at(p_nodes + fi)
                        # batch the whole (p,q) tensor for one transform call
                        qw_list, phi_list, d_rows = [], [], []
                        for m, p in enumerate(p_nodes):
                            q0 = max(qb0, pc0 - p)
                            q1 = min(qb1, pc1 - p)
                            if q1 <= q0:
                                continue
                            kp = 4 * np.pi**2 * b2c * abs(p)
                            sq = max(a_char / kp, 1e-3 * (q1 - q0)) if kp > 0 else (q1 - q0)
                            qn, qw = _mapped_nodes(q0, q1, sq, npts)
                            b2n = beta2 + np.pi * beta3 * (p + qn + 2 * fi - 2 * f_ref)
                            qw_list.append((m, qw))
                            phi_list.append(4 * np.pi**2 * p * qn * b2n)
                            r2 = rho_at(qn + fi)
                            r3 = rho_at(p + qn + fi)
                            d_rows.append(np.sqrt(np.maximum(
                                rows_p[m][None, :] * r2 * r3 / rho_f[None, :], 0.0)))
                        if not phi_list:
                            continue
                        lk = fourier_rows(np.vstack(d_rows), z, np.concatenate(phi_list))
                        w2 = np.abs(lk) ** 2
                        pos = 0
                        for m, qw in qw_list:
                            total += W * p_w[m] * np.sum(qw * w2[pos:pos + qw.size])
                            pos += qw.size
            return total

        I_prev = cut_total(base_points)
        I = I_prev
        err = np.inf
        for lvl in range(1, max_refinements + 1):
            I = cut_total(int(round(base_points * 1.6**lvl)))
            err = abs(I - I_prev) / max(abs(I), 1e-300)
            if err < rel_tol:
                break
            I_prev = I
        out[i] = (16.0 / 27.0) * gamma**2 * I * B[i]
        errs[i] = err

    if strict and np.any(errs[act] > rel_tol):
        worst = float(np.max(errs[act]))
        raise QuadratureError(
            f"oracle quadrature achieved {worst:.2e} relative, target {rel_tol:g}",
            achieved_error=worst)
    return NliPerChannel(out, reference_bandwidth_hz, achieved_error=errs)


def accumulate_nli(per_span, n_spans=None):
    """Incoherent accumulation: per-channel sum over spans.  A single-entry
    list with ``n_spans`` set scales the homogeneous-span result."""
    per_span = list(per_span)
    if not per_span:
        raise ContractError("need at least one span")
    sizes = {s.nli_w.size for s in per_span}
    if len(sizes) != 1:
        raise ContractError("span NLI entries have mismatched grids")
    if n_spans is not None:
        if len(per_span) == 1:
            return per_span[0].nli_w * float(n_spans)
        if len(per_span) != n_spans:
            raise ContractError("explicit per-span list does not match n_spans")
    return np.sum([s.nli_w for s in per_span], axis=0)

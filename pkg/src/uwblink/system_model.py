"""Static system description: WDM grid, fiber, amplifiers, pumps, launch profile.

All quantities are stored in SI units (m, Hz, W, s, 1/m, 1/(W m)) unless a
field name says otherwise; the two spectral lookup tables keep the units of
the CSV assets they are loaded from (dB/km and 1/(W km)) because those are
the units the curves are published and inspected in.  Everything here is
immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy.interpolate import PchipInterpolator

from .constants import SPEED_OF_LIGHT, DB_PER_NEPER
from .errors import ConfigError, ContractError, SpectrumRangeError

# Nonlinear refractive index used for the gamma <-> effective-area
# consistency check, m^2/W.
N2_SILICA = 2.3e-20

_BUILTIN_PREFIX = "pkg:"
_BUILTIN_FILES = {
    "attenuation": "attenuation_g652_like.csv",
    "raman_gain": "raman_gain_silica.csv",
}


# ---------------------------------------------------------------------------
# unit conversions
# ---------------------------------------------------------------------------

def dbm_to_watt(p_dbm):
    """dBm -> W."""
    p_dbm = np.asarray(p_dbm, dtype=float)
    if not np.all(np.isfinite(p_dbm)):
        raise ContractError("power in dBm must be finite")
    return 10.0 ** (p_dbm / 10.0) * 1e-3


def watt_to_dbm(p_w):
    """W -> dBm; rejects negative power."""
    p_w = np.asarray(p_w, dtype=float)
    if np.any(p_w < 0):
        raise ContractError("power in W must be >= 0")
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(p_w / 1e-3)


def wavelength_to_frequency(lambda_m):
    """Vacuum wavelength (m) -> frequency (Hz)."""
    lambda_m = np.asarray(lambda_m, dtype=float)
    if np.any(lambda_m <= 0):
        raise ContractError("wavelength must be > 0")
    return SPEED_OF_LIGHT / lambda_m


def frequency_to_wavelength(f_hz):
    """Frequency (Hz) -> vacuum wavelength (m)."""
    f_hz = np.asarray(f_hz, dtype=float)
    if np.any(f_hz <= 0):
        raise ContractError("frequency must be > 0")
    return SPEED_OF_LIGHT / f_hz


def attenuation_db_km_to_per_m(alpha_db_km):
    """dB/km -> power attenuation coefficient in 1/m."""
    return np.asarray(alpha_db_km, dtype=float) / DB_PER_NEPER / 1e3


def dispersion_to_beta2(d_s_per_m2, lambda_m):
    """beta2 = -D lambda^2 / (2 pi c), inputs SI (s/m^2, m), result s^2/m."""
    if lambda_m <= 0:
        raise ContractError("wavelength must be > 0")
    return -d_s_per_m2 * lambda_m**2 / (2.0 * np.pi * SPEED_OF_LIGHT)


def dispersion_to_beta3(d_s_per_m2, s_s_per_m3, lambda_m):
    """beta3 = (lambda^2/(2 pi c))^2 (S + 2 D / lambda), inputs SI, result s^3/m."""
    if lambda_m <= 0:
        raise ContractError("wavelength must be > 0")
    k = lambda_m**2 / (2.0 * np.pi * SPEED_OF_LIGHT)
    return k**2 * (s_s_per_m3 + 2.0 * d_s_per_m2 / lambda_m)


def gamma_from_effective_area(a_eff_m2, lambda_m, n2_m2_per_w=N2_SILICA):
    """Kerr nonlinear coefficient 1/(W m) from the effective area."""
    if a_eff_m2 <= 0 or lambda_m <= 0:
        raise ContractError("effective area and wavelength must be > 0")
    return 2.0 * np.pi * n2_m2_per_w / (lambda_m * a_eff_m2)


# ---------------------------------------------------------------------------
# sampled spectra
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectrumTable:
    """Monotone piecewise-cubic (PCHIP) interpolation of a sampled curve.

    Shape preserving, so a non-negative table can never interpolate to a
    negative value.  Queries outside the sampled domain raise
    :class:`SpectrumRangeError` rather than extrapolating.
    """

    x: np.ndarray
    y: np.ndarray
    x_unit: str = ""
    y_unit: str = ""
    _interp: PchipInterpolator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 1 or x.size < 2 or x.shape != y.shape:
            raise ConfigError("spectrum table needs two equal-length 1-D columns with >= 2 rows")
        if np.any(np.diff(x) <= 0):
            raise ConfigError("spectrum table abscissa must be strictly increasing")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "_interp", PchipInterpolator(x, y, extrapolate=False))

    @property
    def domain(self):
        return float(self.x[0]), float(self.x[-1])

    def sample(self, at):
        at_arr = np.asarray(at, dtype=float)
        lo, hi = self.domain
        if np.any(at_arr < lo) or np.any(at_arr > hi):
            raise SpectrumRangeError(
                f"query {at!r} outside sampled domain [{lo:g}, {hi:g}] {self.x_unit}"
            )
        out = self._interp(at_arr)
        return float(out) if np.isscalar(at) or at_arr.ndim == 0 else out


def _read_csv_columns(text, col_x, col_y):
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or col_x not in reader.fieldnames or col_y not in reader.fieldnames:
        raise ConfigError(f"CSV must have a header row with columns '{col_x},{col_y}'")
    xs, ys = [], []
    for row in reader:
        xs.append(float(row[col_x]))
        ys.append(float(row[col_y]))
    return np.array(xs), np.array(ys)


def load_attenuation_csv(source):
    """`wavelength_nm,attenuation_db_per_km` CSV -> table over wavelength in m."""
    text = _read_source(source, "attenuation")
    lam_nm, alpha = _read_csv_columns(text, "wavelength_nm", "attenuation_db_per_km")
    return SpectrumTable(lam_nm * 1e-9, alpha, x_unit="m", y_unit="dB/km")


def load_raman_gain_csv(source):
    """`offset_thz,gain_per_w_per_km` CSV -> table over frequency offset in Hz."""
    text = _read_source(source, "raman_gain")
    off_thz, gain = _read_csv_columns(text, "offset_thz", "gain_per_w_per_km")
    return SpectrumTable(off_thz * 1e12, gain, x_unit="Hz", y_unit="1/(W km)")


def _read_source(source, kind):
    """source: filesystem path, or 'pkg:<name>' / None for the packaged asset."""
    if source is None:
        source = _BUILTIN_PREFIX + _BUILTIN_FILES[kind]
    source = str(source)
    if source.startswith(_BUILTIN_PREFIX):
        name = source[len(_BUILTIN_PREFIX):]
        return resources.files("uwblink.data").joinpath(name).read_text(encoding="utf-8")
    with open(source, encoding="utf-8") as fh:
        return fh.read()


def default_attenuation_table():
    return load_attenuation_csv(None)


def default_raman_gain_table():
    return load_raman_gain_csv(None)


# ---------------------------------------------------------------------------
# WDM grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Band:
    label: str
    channel_count: int


@dataclass(frozen=True)
class BandPlan:
    """Bands listed in wavelength-ascending order with the nm gaps between them."""

    bands: tuple
    channel_spacing_hz: float
    symbol_rate_baud: float
    gaps_nm: tuple
    center_wavelength_m: float = 1550e-9

    def __post_init__(self):
        object.__setattr__(self, "bands", tuple(self.bands))
        object.__setattr__(self, "gaps_nm", tuple(float(g) for g in self.gaps_nm))
        if self.channel_spacing_hz <= 0:
            raise ConfigError("channel spacing must be > 0")
        if self.symbol_rate_baud <= 0:
            raise ConfigError("symbol rate must be > 0")
        if len(self.bands) == 0:
            raise ConfigError("band plan needs at least one band")
        if len(self.gaps_nm) != len(self.bands) - 1:
            raise ConfigError("need exactly one gap per adjacent band pair")
        if any(g < 0 for g in self.gaps_nm):
            raise ConfigError("band gaps must be non-negative")
        for band in self.bands:
            if band.channel_count < 1:
                raise ConfigError(f"band {band.label!r} has no channels (zero-width band)")

    @classmethod
    def from_edges(cls, edges_nm, channel_spacing_hz, symbol_rate_baud,
                   center_wavelength_m=1550e-9):
        """edges_nm: [(label, lo_nm, hi_nm)] in wavelength-ascending order."""
        bands, gaps = [], []
        prev_hi = None
        for label, lo, hi in edges_nm:
            if hi <= lo:
                raise ConfigError(f"band {label!r} has non-positive width")
            if prev_hi is not None:
                gap = lo - prev_hi
                if gap < 0:
                    raise ConfigError(f"bands overlap before {label!r}")
                gaps.append(gap)
            prev_hi = hi
            f_hi = wavelength_to_frequency(lo * 1e-9)
            f_lo = wavelength_to_frequency(hi * 1e-9)
            count = int(np.floor((f_hi - f_lo) / channel_spacing_hz)) + 1
            bands.append(Band(label, count))
        return cls(tuple(bands), channel_spacing_hz, symbol_rate_baud, tuple(gaps),
                   center_wavelength_m)


def default_band_plan():
    """S/C/L plan: 131 channels at 100 GHz, 10 nm S/C and 5 nm C/L gaps, 96 GBd."""
    return BandPlan(
        bands=(Band("S", 40), Band("C", 44), Band("L", 47)),
        channel_spacing_hz=100e9,
        symbol_rate_baud=96e9,
        gaps_nm=(10.0, 5.0),
    )


@dataclass(frozen=True)
class WdmGrid:
    """Channel frequencies stored ascending in frequency (descending wavelength)."""

    channel_center_frequency_hz: np.ndarray
    channel_spacing_hz: float
    symbol_rate_baud: float
    band_of_channel: tuple
    reference_center_wavelength_m: float

    def __post_init__(self):
        freqs = np.asarray(self.channel_center_frequency_hz, dtype=float)
        object.__setattr__(self, "channel_center_frequency_hz", freqs)
        object.__setattr__(self, "band_of_channel", tuple(self.band_of_channel))
        if np.any(np.diff(freqs) <= 0):
            raise ConfigError("channel frequencies must be strictly increasing")
        if len(self.band_of_channel) != freqs.size:
            raise ConfigError("band labels must match channel count")

    @property
    def n_channels(self):
        return self.channel_center_frequency_hz.size

    @property
    def channel_wavelength_m(self):
        return frequency_to_wavelength(self.channel_center_frequency_hz)

    def band_indices(self, label):
        return np.array([i for i, b in enumerate(self.band_of_channel) if b == label])

    def bands(self):
        seen = []
        for b in self.band_of_channel:
            if b not in seen:
                seen.append(b)
        return seen


def build_grid(plan: BandPlan) -> WdmGrid:
    """Assemble the composite grid for a band plan.

    Channels are laid contiguously inside each band at the plan spacing;
    adjacent bands are separated so the wavelength distance between the edge
    channels equals the configured gap.  The whole comb is shifted so that the
    mean of the extreme frequencies lands on the plan's center wavelength.
    """
    spacing = plan.channel_spacing_hz

    def assemble(f_top):
        freqs, labels = [], []
        f = f_top
        for i, band in enumerate(plan.bands):
            for _ in range(band.channel_count):
                freqs.append(f)
                labels.append(band.label)
                f -= spacing
            last = freqs[-1]
            if i + 1 < len(plan.bands):
                lam_next = frequency_to_wavelength(last) + plan.gaps_nm[i] * 1e-9
                f = wavelength_to_frequency(lam_next)
        return np.array(freqs), labels

    f_center_target = wavelength_to_frequency(plan.center_wavelength_m)
    f_top = f_center_target + spacing * (sum(b.channel_count for b in plan.bands) / 2.0)
    for _ in range(4):
        freqs, labels = assemble(f_top)
        f_top += f_center_target - 0.5 * (freqs[0] + freqs[-1])
    freqs, labels = assemble(f_top)

    order = np.argsort(freqs)
    return WdmGrid(
        channel_center_frequency_hz=freqs[order],
        channel_spacing_hz=spacing,
        symbol_rate_baud=plan.symbol_rate_baud,
        band_of_channel=tuple(labels[i] for i in order),
        reference_center_wavelength_m=plan.center_wavelength_m,
    )


# ---------------------------------------------------------------------------
# fiber / amplifier / pumps / launch
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FiberSpec:
    """Span fiber: sampled spectra plus scalar parameters (SI)."""

    attenuation: SpectrumTable            # wavelength m -> dB/km
    raman_gain: SpectrumTable             # offset Hz -> 1/(W km)
    nonlinear_coefficient_per_w_m: float  # gamma, 1/(W m)
    dispersion_s_per_m2: float            # D
    dispersion_slope_s_per_m3: float      # S
    span_length_m: float
    temperature_k: float = 298.0
    effective_area_m2: float | None = None

    def __post_init__(self):
        if self.span_length_m <= 0:
            raise ConfigError("span length must be > 0")
        if self.temperature_k <= 0:
            raise ConfigError("temperature must be > 0")
        if self.nonlinear_coefficient_per_w_m < 0:
            raise ConfigError("gamma must be >= 0")
        lo, hi = self.attenuation.domain
        check = np.linspace(max(lo, 1400e-9), min(hi, 1610e-9), 64)
        if np.any(self.attenuation.sample(check) <= 0):
            raise ConfigError("attenuation must be positive over 1400-1610 nm")
        if abs(self.raman_gain.sample(0.0)) > 1e-12:
            raise ConfigError("Raman gain curve must be zero at zero offset")
        glo, ghi = self.raman_gain.domain
        goff = np.linspace(glo, min(ghi, 30e12), 128)
        if np.any(self.raman_gain.sample(goff) < 0):
            raise ConfigError("Raman gain must be non-negative on [0, 30 THz]")
        if self.effective_area_m2 is not None:
            lam = 1550e-9
            derived = gamma_from_effective_area(self.effective_area_m2, lam)
            if self.nonlinear_coefficient_per_w_m > 0 and not np.isclose(
                derived, self.nonlinear_coefficient_per_w_m, rtol=0.02
            ):
                raise ConfigError(
                    f"gamma {self.nonlinear_coefficient_per_w_m:g} 1/(W m) inconsistent "
                    f"with A_eff={self.effective_area_m2*1e12:g} um^2 "
                    f"(derived {derived:g} 1/(W m))"
                )

    @classmethod
    def create(cls, *, attenuation_table=None, raman_gain_table=None,
               gamma_per_w_km=1.16, dispersion_ps_nm_km=16.5,
               dispersion_slope_ps_nm2_km=0.09, span_length_km=100.0,
               temperature_k=298.0, effective_area_um2=80.0):
        """Build from the customary engineering units."""
        return cls(
            attenuation=attenuation_table or default_attenuation_table(),
            raman_gain=raman_gain_table or default_raman_gain_table(),
            nonlinear_coefficient_per_w_m=gamma_per_w_km * 1e-3,
            dispersion_s_per_m2=dispersion_ps_nm_km * 1e-6,
            dispersion_slope_s_per_m3=dispersion_slope_ps_nm2_km * 1e3,
            span_length_m=span_length_km * 1e3,
            temperature_k=temperature_k,
            effective_area_m2=None if effective_area_um2 is None else effective_area_um2 * 1e-12,
        )

    def attenuation_per_m(self, wavelength_m):
        """Power attenuation coefficient, 1/m."""
        return attenuation_db_km_to_per_m(self.attenuation.sample(wavelength_m))

    def raman_gain_per_w_m(self, offset_hz):
        """Raman gain efficiency between two waves |f_hi - f_lo| apart, 1/(W m)."""
        return np.asarray(self.raman_gain.sample(offset_hz)) * 1e-3

    def beta2_s2_per_m(self, lambda_m=None):
        lam = self.reference_wavelength_m if lambda_m is None else lambda_m
        return dispersion_to_beta2(self.dispersion_s_per_m2, lam)

    def beta3_s3_per_m(self, lambda_m=None):
        lam = self.reference_wavelength_m if lambda_m is None else lambda_m
        return dispersion_to_beta3(self.dispersion_s_per_m2, self.dispersion_slope_s_per_m3, lam)

    @property
    def reference_wavelength_m(self):
        return 1550e-9


def sample_spectrum(fiber: FiberSpec, kind: str, at):
    """Sample a fiber spectral curve; `kind` is 'attenuation' (at wavelength, m,
    returns dB/km) or 'raman_gain' (at offset, Hz, returns 1/(W km))."""
    if kind == "attenuation":
        return fiber.attenuation.sample(at)
    if kind == "raman_gain":
        return fiber.raman_gain.sample(at)
    raise ContractError(f"unknown spectrum kind {kind!r}")


FORWARD = "forward"
BACKWARD = "backward"

DEFAULT_PUMP_WINDOW_M = (1405e-9, 1490e-9)


@dataclass(frozen=True)
class RamanPump:
    wavelength_m: float
    power_w: float
    direction: str

    def __post_init__(self):
        if self.direction not in (FORWARD, BACKWARD):
            raise ConfigError(f"pump direction must be 'forward' or 'backward', got {self.direction!r}")
        if self.power_w < 0:
            raise ConfigError("pump power must be >= 0")

    @property
    def frequency_hz(self):
        return float(wavelength_to_frequency(self.wavelength_m))


@dataclass(frozen=True)
class PumpSet:
    pumps: tuple
    window_m: tuple = DEFAULT_PUMP_WINDOW_M

    def __post_init__(self):
        object.__setattr__(self, "pumps", tuple(self.pumps))
        lo, hi = self.window_m
        for p in self.pumps:
            if not (lo <= p.wavelength_m <= hi):
                raise ConfigError(
                    f"pump at {p.wavelength_m*1e9:.1f} nm outside window "
                    f"[{lo*1e9:.0f}, {hi*1e9:.0f}] nm"
                )

    @classmethod
    def empty(cls):
        return cls(pumps=())

    def forward(self):
        return [p for p in self.pumps if p.direction == FORWARD]

    def backward(self):
        return [p for p in self.pumps if p.direction == BACKWARD]

    @property
    def total_power_w(self):
        return sum(p.power_w for p in self.pumps)


@dataclass(frozen=True)
class LaunchProfile:
    """Per-channel launch power in dBm (the optimizer's native domain)."""

    per_channel_dbm: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.per_channel_dbm, dtype=float)
        if arr.ndim != 1:
            raise ConfigError("launch profile must be a 1-D vector")
        if not np.all(np.isfinite(arr)):
            raise ConfigError("launch powers must be finite")
        object.__setattr__(self, "per_channel_dbm", arr)

    @classmethod
    def uniform_from_total(cls, total_dbm, n_channels):
        per_channel = total_dbm - 10.0 * np.log10(n_channels)
        return cls(np.full(n_channels, per_channel))

    @property
    def per_channel_w(self):
        return dbm_to_watt(self.per_channel_dbm)

    @property
    def total_dbm(self):
        return float(watt_to_dbm(np.sum(self.per_channel_w)))


@dataclass(frozen=True)
class AmplifierSpec:
    """Per-band lumped amplifier noise figures and the gain policy."""

    noise_figure_db: dict
    gain_policy: str = "restore_launch_profile"

    def __post_init__(self):
        object.__setattr__(self, "noise_figure_db", dict(self.noise_figure_db))
        if self.gain_policy != "restore_launch_profile":
            raise ConfigError(f"unknown gain policy {self.gain_policy!r}")
        for band, nf in self.noise_figure_db.items():
            if nf < 0:
                raise ConfigError(f"noise figure for band {band!r} must be >= 0 dB")

    @classmethod
    def paper_default(cls):
        return cls(noise_figure_db={"S": 7.0, "C": 4.5, "L": 6.0})

    def noise_figure_for(self, band):
        try:
            return self.noise_figure_db[band]
        except KeyError:
            raise ConfigError(f"no noise figure configured for band {band!r}") from None


@dataclass(frozen=True)
class LinkSpec:
    """Everything needed to simulate the n-span link."""

    n_spans: int
    fiber: FiberSpec
    grid: WdmGrid
    amplifier: AmplifierSpec
    pump_set: PumpSet
    launch_profile: LaunchProfile

    def __post_init__(self):
        if self.n_spans < 1:
            raise ConfigError("n_spans must be >= 1")
        if self.launch_profile.per_channel_dbm.size != self.grid.n_channels:
            raise ConfigError(
                f"launch profile has {self.launch_profile.per_channel_dbm.size} entries "
                f"for {self.grid.n_channels} channels"
            )
        for band in set(self.grid.band_of_channel):
            self.amplifier.noise_figure_for(band)

    def with_launch(self, profile: LaunchProfile) -> "LinkSpec":
        return LinkSpec(self.n_spans, self.fiber, self.grid, self.amplifier,
                        self.pump_set, profile)

    def with_pumps(self, pump_set: PumpSet) -> "LinkSpec":
        return LinkSpec(self.n_spans, self.fiber, self.grid, self.amplifier,
                        pump_set, self.launch_profile)

    def with_spans(self, n_spans: int) -> "LinkSpec":
        return LinkSpec(n_spans, self.fiber, self.grid, self.amplifier,
                        self.pump_set, self.launch_profile)

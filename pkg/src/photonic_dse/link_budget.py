"""Optical link budget and DPU scalability analysis.

Two halves meet here.  On the detector side, the photodetector power
needed to resolve ``B`` bits at a given symbol rate follows from the
shot, thermal and laser-intensity noise of the receiver.  On the source
side, the power that actually reaches each detector falls with the DPE
size ``N`` and fan-out ``M`` through insertion, out-of-band, splitting and
crosstalk losses.  The largest ``N`` (with ``M = N``) for which delivered
power still meets the requirement is the supported DPU size.
"""

from __future__ import annotations

import dataclasses
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import product
from pathlib import Path

from scipy import constants, optimize

from .device_models import (
    ALL_ORGS,
    DEFAULT_NETWORK_PENALTY_DB,
    DpuOrganization,
    SpectralParams,
    fsr_limited_channels,
)

Q_E = constants.e
K_B = constants.k

P_BRACKET_DBM = (-90.0, 30.0)
SOLVER_XTOL_DB = 1e-9


class InfeasiblePrecisionError(ValueError):
    """No detector power in the search bracket reaches the requested ENOB."""


@dataclass
class PhotonicLinkParams:
    """Laser, detector and loss constants of the link budget.

    ``p_smf_att_db``, ``d_mrr_mm``, ``p_mrr_w_obl_db``, ``p_si_att_db_per_mm``
    and ``p_mrr_w_il_db`` are not pinned by the published parameter table;
    their defaults are calibrated so the 4-bit DPU sizes land near the
    reference table (see README).
    """

    p_laser_dbm: float = 10.0
    responsivity_a_per_w: float = 1.2
    load_resistance_ohm: float = 50.0
    dark_current_a: float = 35e-9
    temperature_k: float = 300.0
    rin_db_per_hz: float = -140.0
    p_smf_att_db: float = 0.4
    p_ec_il_db: float = 1.44
    p_si_att_db_per_mm: float = 0.3
    d_mrr_mm: float = 0.005
    p_mrm_il_db: float = 4.0
    p_mrm_obl_db: float = 0.01
    p_splitter_il_db: float = 0.01
    p_mrr_w_il_db: float = 0.01
    p_mrr_w_obl_db: float = 0.003
    penalty_asmw_db: float = DEFAULT_NETWORK_PENALTY_DB[DpuOrganization.ASMW]
    penalty_masw_db: float = DEFAULT_NETWORK_PENALTY_DB[DpuOrganization.MASW]
    penalty_smwa_db: float = DEFAULT_NETWORK_PENALTY_DB[DpuOrganization.SMWA]

    def __post_init__(self):
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, (int, float)) or math.isnan(v):
                raise ValueError(f"{f.name} must be a number, got {v!r}")
            if (f.name.startswith("p_") and f.name not in ("p_laser_dbm",)) or f.name.startswith("penalty_"):
                if v < 0:
                    raise ValueError(f"{f.name} is a loss and must be >= 0, got {v}")
        if self.responsivity_a_per_w <= 0:
            raise ValueError("responsivity must be > 0")
        if self.load_resistance_ohm <= 0:
            raise ValueError("load resistance must be > 0")
        if self.temperature_k < 0:
            raise ValueError("temperature must be >= 0")
        if self.dark_current_a < 0 or self.d_mrr_mm < 0:
            raise ValueError("dark current and ring pitch must be >= 0")

    def penalty_db(self, org: DpuOrganization) -> float:
        return getattr(self, f"penalty_{DpuOrganization.parse(org).value}_db")

    @property
    def rin_per_hz(self) -> float:
        return 10 ** (self.rin_db_per_hz / 10)


# units shown next to each key when the parameter file is written out
PARAM_UNITS = {
    "p_laser_dbm": "dBm, per-wavelength laser output",
    "responsivity_a_per_w": "A/W, photodetector responsivity",
    "load_resistance_ohm": "ohm, TIA load resistance",
    "dark_current_a": "A, photodetector dark current",
    "temperature_k": "K, absolute temperature",
    "rin_db_per_hz": "dB/Hz, laser relative intensity noise",
    "p_smf_att_db": "dB, fiber attenuation (calibrated)",
    "p_ec_il_db": "dB, fiber-to-chip coupler insertion loss",
    "p_si_att_db_per_mm": "dB/mm, silicon waveguide loss (calibrated)",
    "d_mrr_mm": "mm, ring pitch along the waveguide (calibrated)",
    "p_mrm_il_db": "dB, modulator insertion loss",
    "p_mrm_obl_db": "dB, modulator out-of-band loss",
    "p_splitter_il_db": "dB, loss per 1x2 splitter stage",
    "p_mrr_w_il_db": "dB, weight ring insertion loss (calibrated)",
    "p_mrr_w_obl_db": "dB, weight ring out-of-band loss (calibrated)",
    "penalty_asmw_db": "dB, ASMW crosstalk + propagation penalty",
    "penalty_masw_db": "dB, MASW crosstalk + propagation penalty",
    "penalty_smwa_db": "dB, SMWA crosstalk + propagation penalty",
    "fsr_nm": "nm, ring free spectral range",
    "fwhm_nm": "nm, ring resonance width",
    "channel_spacing_nm": "nm, WDM channel spacing",
}


class ParamFileError(ValueError):
    pass


def load_params(path) -> "tuple[PhotonicLinkParams, SpectralParams]":
    """Read a flat ``key = value`` file.  ``#`` starts a comment."""
    path = Path(path)
    link_keys = {f.name for f in dataclasses.fields(PhotonicLinkParams)}
    spec_keys = {"fsr_nm", "fwhm_nm", "channel_spacing_nm"}
    link, spec = {}, {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParamFileError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            try:
                number = float(value)
            except ValueError:
                raise ParamFileError(f"{path}:{lineno}: {key} has non-numeric value {value!r}") from None
            if key in link_keys:
                link[key] = number
            elif key in spec_keys:
                spec[key] = number
            else:
                raise ParamFileError(f"{path}:{lineno}: unknown parameter {key!r}")
    if "fwhm_nm" in spec and "channel_spacing_nm" not in spec:
        spectral = SpectralParams.from_fwhm(spec.get("fsr_nm", SpectralParams.fsr_nm), spec["fwhm_nm"])
    else:
        spectral = SpectralParams(**spec)
    try:
        return PhotonicLinkParams(**link), spectral
    except ValueError as exc:
        raise ParamFileError(f"{path}: {exc}") from None


def format_params(params: PhotonicLinkParams = None, spectral: SpectralParams = None) -> str:
    params = params or PhotonicLinkParams()
    spectral = spectral or SpectralParams()
    lines = ["# photonic-dse parameter file (key = value; '#' starts a comment)"]
    values = dataclasses.asdict(params)
    values.update(fsr_nm=spectral.fsr_nm, fwhm_nm=spectral.fwhm_nm,
                  channel_spacing_nm=spectral.channel_spacing_nm)
    for key, value in values.items():
        lines.append(f"{key} = {value!r}  # {PARAM_UNITS[key]}")
    return "\n".join(lines) + "\n"


def noise_beta(p_pd_opt_w: float, params: PhotonicLinkParams) -> float:
    """Receiver noise current density in A/sqrt(Hz) at detector power ``p_pd_opt_w``."""
    if p_pd_opt_w < 0:
        raise ValueError("optical power must be >= 0 W")
    r = params.responsivity_a_per_w
    thermal = 4 * K_B * params.temperature_k / params.load_resistance_ohm
    signal_dep = (2 * Q_E * (r * p_pd_opt_w + params.dark_current_a) + thermal
                  + (r * p_pd_opt_w) ** 2 * params.rin_per_hz)
    floor = 2 * Q_E * params.dark_current_a + thermal
    return math.sqrt(signal_dep) + math.sqrt(floor)


def enob(p_pd_opt_w: float, datarate_gsps: float, params: PhotonicLinkParams) -> float:
    """Effective number of bits resolvable at a given detector power and rate."""
    if p_pd_opt_w <= 0:
        raise ValueError("optical power must be > 0 W")
    if datarate_gsps <= 0:
        raise ValueError("datarate must be > 0")
    bandwidth = math.sqrt(datarate_gsps * 1e9 / math.sqrt(2))
    snr_db = 20 * math.log10(params.responsivity_a_per_w * p_pd_opt_w
                             / (noise_beta(p_pd_opt_w, params) * bandwidth))
    return (snr_db - 1.76) / 6.02


def dbm_to_w(dbm: float) -> float:
    return 1e-3 * 10 ** (dbm / 10)


def enob_ceiling(datarate_gsps: float, params: PhotonicLinkParams) -> float:
    """Limit of :func:`enob` as power grows without bound (laser RIN floor)."""
    snr_db = -10 * math.log10(params.rin_per_hz * datarate_gsps * 1e9 / math.sqrt(2))
    return (snr_db - 1.76) / 6.02


def _check_query(bit_precision, datarate_gsps):
    if not 1 <= bit_precision <= 16:
        raise ValueError(f"bit precision must be in [1, 16], got {bit_precision}")
    if datarate_gsps <= 0:
        raise ValueError("datarate must be > 0")


def solve_p_pd_opt(bit_precision: float, datarate_gsps: float,
                   params: PhotonicLinkParams = None) -> float:
    """Detector power (dBm) at which the receiver resolves exactly ``bit_precision`` bits."""
    params = params or PhotonicLinkParams()
    _check_query(bit_precision, datarate_gsps)
    lo, hi = P_BRACKET_DBM

    def excess(dbm):
        return enob(dbm_to_w(dbm), datarate_gsps, params) - bit_precision

    if excess(lo) > 0 or excess(hi) < 0:
        raise InfeasiblePrecisionError(
            f"{bit_precision}-bit precision at {datarate_gsps} GS/s is not reachable with "
            f"detector power in [{lo}, {hi}] dBm (ENOB ceiling from laser RIN is "
            f"{enob_ceiling(datarate_gsps, params):.3f} bits)")
    return optimize.bisect(excess, lo, hi, xtol=SOLVER_XTOL_DB)


def link_output_power(n: int, m: int, org: DpuOrganization,
                      params: PhotonicLinkParams = None) -> float:
    """Per-wavelength optical power (dBm) arriving at a DPE detector."""
    params = params or PhotonicLinkParams()
    if n < 1 or m < 1:
        raise ValueError("N and M must be >= 1")
    p = params
    return (p.p_laser_dbm
            - p.p_smf_att_db
            - p.p_ec_il_db
            - p.p_si_att_db_per_mm * n * p.d_mrr_mm
            - p.p_mrm_il_db
            - (n - 1) * p.p_mrm_obl_db
            - p.p_splitter_il_db * math.log2(m)
            - p.p_mrr_w_il_db
            - (n - 1) * p.p_mrr_w_obl_db
            - p.penalty_db(org)
            - 10 * math.log10(n))


@dataclass(frozen=True)
class ScalabilityQuery:
    bit_precision: float
    datarate_gsps: float
    org: DpuOrganization

    def __post_init__(self):
        object.__setattr__(self, "org", DpuOrganization.parse(self.org))
        _check_query(self.bit_precision, self.datarate_gsps)


@dataclass(frozen=True)
class ScalabilityResult:
    p_pd_opt_dbm: float
    n_max: int
    fsr_capped: bool


def max_n(query: ScalabilityQuery, params: PhotonicLinkParams = None,
          spectral: SpectralParams = None) -> ScalabilityResult:
    """Largest N (with M = N) whose delivered power meets the detector requirement."""
    params = params or PhotonicLinkParams()
    spectral = spectral or SpectralParams()
    p_req = solve_p_pd_opt(query.bit_precision, query.datarate_gsps, params)
    cap = fsr_limited_channels(spectral)
    best = 0
    # linear scan: no unimodality assumption on the budget curve
    for n in range(1, cap + 1):
        if link_output_power(n, n, query.org, params) >= p_req:
            best = n
    capped = best == cap and link_output_power(cap + 1, cap + 1, query.org, params) >= p_req
    return ScalabilityResult(p_req, best, capped)


@dataclass(frozen=True)
class SweepRow:
    org: DpuOrganization
    datarate_gsps: float
    bit_precision: float
    result: ScalabilityResult

    @property
    def feasible(self) -> bool:
        return math.isfinite(self.result.p_pd_opt_dbm)


def _sweep_cell(args):
    org, dr, b, params, spectral = args
    try:
        res = max_n(ScalabilityQuery(b, dr, org), params, spectral)
    except InfeasiblePrecisionError:
        res = ScalabilityResult(math.inf, 0, False)
    return SweepRow(org, dr, b, res)


def sweep_threads() -> int:
    try:
        return max(1, int(os.environ.get("PHOTONIC_DSE_THREADS", "1")))
    except ValueError:
        return 1


def sweep_scalability(b_list=range(1, 9), dr_list=(1, 5, 10), orgs=ALL_ORGS,
                      params: PhotonicLinkParams = None,
                      spectral: SpectralParams = None) -> "list[SweepRow]":
    """Cartesian sweep ordered by (org, datarate, bits).

    Cells whose precision is unreachable report ``p_pd_opt_dbm = inf`` and
    ``n_max = 0`` instead of aborting the sweep.
    """
    b_list, dr_list = list(b_list), list(dr_list)
    orgs = [DpuOrganization.parse(o) for o in orgs]
    if not (b_list and dr_list and orgs):
        raise ValueError("sweep lists must be non-empty")
    params = params or PhotonicLinkParams()
    spectral = spectral or SpectralParams()
    cells = [(o, dr, b, params, spectral) for o, dr, b in product(orgs, dr_list, b_list)]
    workers = sweep_threads()
    if workers == 1:
        return [_sweep_cell(c) for c in cells]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_sweep_cell, cells))


SWEEP_HEADER = ["org", "datarate_gsps", "bit_precision", "p_pd_opt_dbm", "n_max", "fsr_capped"]

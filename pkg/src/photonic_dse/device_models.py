"""DPU organizations, their crosstalk effects and optical loss accounting.

A DPU is described by the order in which four signal manipulation blocks
appear along the optical path: Aggregation (A), Splitting (S),
Modulation (M) and Weighting (W).  Summation always comes last.  The
order determines which crosstalk mechanisms exist and how many
out-of-resonance rings a wavelength channel has to pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum


class DpuOrganization(Enum):
    ASMW = "asmw"
    MASW = "masw"
    SMWA = "smwa"

    @classmethod
    def parse(cls, text: "str | DpuOrganization") -> "DpuOrganization":
        """Case-insensitive lookup, e.g. ``"SMWA"`` or ``"smwa"``."""
        if isinstance(text, cls):
            return text
        try:
            return cls(str(text).strip().lower())
        except ValueError:
            names = ", ".join(o.value for o in cls)
            raise ValueError(f"unknown DPU organization {text!r} (expected one of {names})") from None

    def __str__(self):
        return self.name


ALL_ORGS = (DpuOrganization.ASMW, DpuOrganization.MASW, DpuOrganization.SMWA)


@dataclass(frozen=True)
class CrosstalkProfile:
    inter_modulation: bool
    cross_weight: bool
    filter_truncation: bool


# Inter-modulation needs M after A; cross-weight needs W after A;
# filter truncation needs A after M.
_CROSSTALK = {
    DpuOrganization.ASMW: CrosstalkProfile(True, True, False),
    DpuOrganization.MASW: CrosstalkProfile(False, True, True),
    DpuOrganization.SMWA: CrosstalkProfile(False, False, True),
}

# Optimistic upper bounds of the individual penalty components (dB).  Kept
# for sensitivity sweeps; the link budget uses the aggregate values below.
INTER_MODULATION_PENALTY_DB = 1.0
CROSS_WEIGHT_PENALTY_DB = 3.0
FILTER_PENALTY_DB = 0.5

DEFAULT_NETWORK_PENALTY_DB = {
    DpuOrganization.ASMW: 5.8,
    DpuOrganization.MASW: 4.8,
    DpuOrganization.SMWA: 1.8,
}

DEFAULT_ROUTING_OVERHEAD = 2.0


def crosstalk_profile(org: DpuOrganization) -> CrosstalkProfile:
    return _CROSSTALK[DpuOrganization.parse(org)]


def _check_n(n):
    if int(n) != n or n < 1:
        raise ValueError(f"channel count must be a positive integer, got {n!r}")


def out_of_resonance_device_count(org: DpuOrganization, n: int) -> int:
    """Number of off-resonance MRMs/MRRs one wavelength channel passes.

    ASMW channels cross the full input and weight arrays of their
    waveguide, MASW channels only the weight array, and SMWA channels a
    single MRM/MRR pair on a dedicated waveguide.
    """
    org = DpuOrganization.parse(org)
    _check_n(n)
    if n == 1:
        return 0
    if org is DpuOrganization.ASMW:
        return 2 * (n - 1)
    if org is DpuOrganization.MASW:
        return n
    return 2


def through_loss_db(org: DpuOrganization, n: int, per_device_obl_db: float) -> float:
    if per_device_obl_db < 0:
        raise ValueError("per-device out-of-band loss must be >= 0 dB")
    return out_of_resonance_device_count(org, n) * per_device_obl_db


def network_penalty_db(org: DpuOrganization, overrides: "dict | None" = None) -> float:
    """Aggregate crosstalk/propagation power penalty for an organization."""
    org = DpuOrganization.parse(org)
    if overrides and org in overrides:
        return overrides[org]
    return DEFAULT_NETWORK_PENALTY_DB[org]


def waveguide_length_mm(org: DpuOrganization, n: int, d_mrr_mm: float,
                        routing_overhead: float = DEFAULT_ROUTING_OVERHEAD) -> float:
    """Optical path length seen by one channel inside a DPE.

    ASMW crosses two ring arrays of pitch ``d_mrr_mm``.  MASW crosses one
    MRM then the weight array.  SMWA spans the same footprint as ASMW but
    on dedicated waveguides routed around the arrays, so the length is
    scaled by ``routing_overhead``.
    """
    org = DpuOrganization.parse(org)
    _check_n(n)
    if routing_overhead < 1:
        raise ValueError("routing overhead factor must be >= 1")
    if org is DpuOrganization.ASMW:
        return 2 * n * d_mrr_mm
    if org is DpuOrganization.MASW:
        return (n + 1) * d_mrr_mm
    return routing_overhead * 2 * n * d_mrr_mm


def propagation_loss_db(org, n, d_mrr_mm, si_att_db_per_mm,
                        routing_overhead=DEFAULT_ROUTING_OVERHEAD):
    return waveguide_length_mm(org, n, d_mrr_mm, routing_overhead) * si_att_db_per_mm


@dataclass(frozen=True)
class LossProfile:
    through_loss_db: float
    propagation_loss_db: float
    network_penalty_db: float

    def __post_init__(self):
        for name in ("through_loss_db", "propagation_loss_db", "network_penalty_db"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


def loss_profile(org, n, per_device_obl_db=0.01, d_mrr_mm=0.005, si_att_db_per_mm=0.3,
                 penalty_overrides=None, routing_overhead=DEFAULT_ROUTING_OVERHEAD) -> LossProfile:
    return LossProfile(
        through_loss_db=through_loss_db(org, n, per_device_obl_db),
        propagation_loss_db=propagation_loss_db(org, n, d_mrr_mm, si_att_db_per_mm, routing_overhead),
        network_penalty_db=network_penalty_db(org, penalty_overrides),
    )


@dataclass(frozen=True)
class SpectralParams:
    """Ring spectral parameters that bound the WDM channel count.

    The default spacing is 0.25 nm as used in the reference design; use
    :meth:`from_fwhm` to derive spacing from a custom resonance width.
    """

    fsr_nm: float = 50.0
    fwhm_nm: float = 0.7
    channel_spacing_nm: float = 0.25

    SPACING_TO_FWHM = 0.4

    @classmethod
    def from_fwhm(cls, fsr_nm: float, fwhm_nm: float) -> "SpectralParams":
        return cls(fsr_nm, fwhm_nm, cls.SPACING_TO_FWHM * fwhm_nm)


def fsr_limited_channels(spectral: SpectralParams) -> int:
    if spectral.channel_spacing_nm <= 0:
        raise ValueError("channel spacing must be positive")
    if spectral.fsr_nm <= 0:
        raise ValueError("FSR must be positive")
    # small epsilon guards 50/0.25-style ratios against float round-down
    n = math.floor(spectral.fsr_nm / spectral.channel_spacing_nm + 1e-9)
    if n < 1:
        raise ValueError("FSR is narrower than one channel spacing")
    return n


def mrr_device_count(org: DpuOrganization, n: int, m: int) -> int:
    """Rings (MRMs, weight MRRs and mux filters) in one DPU."""
    org = DpuOrganization.parse(org)
    if org is DpuOrganization.ASMW:
        return 2 * n * m
    if org is DpuOrganization.MASW:
        return n + n * m
    return 2 * n * m + n * m


def input_modulator_columns(org: DpuOrganization, m: int) -> int:
    """Input MRM arrays that must be driven every symbol cycle.

    MASW shares a single input array between all of its DPEs.
    """
    org = DpuOrganization.parse(org)
    return 1 if org is DpuOrganization.MASW else m

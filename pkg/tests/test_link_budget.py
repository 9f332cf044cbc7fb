import dataclasses
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from photonic_dse.device_models import ALL_ORGS, DpuOrganization, SpectralParams
from photonic_dse.link_budget import (
    InfeasiblePrecisionError,
    ParamFileError,
    PhotonicLinkParams,
    ScalabilityQuery,
    dbm_to_w,
    enob,
    enob_ceiling,
    format_params,
    link_output_power,
    load_params,
    max_n,
    noise_beta,
    solve_p_pd_opt,
    sweep_scalability,
)

A, M, S = DpuOrganization.ASMW, DpuOrganization.MASW, DpuOrganization.SMWA
DEF = PhotonicLinkParams()

# Detector power (dBm) for B = 1..8 bits, from an 80-step mpmath bisection
# (50 digits) on an independent transcription of the noise model.
# None marks precisions above the laser-RIN ceiling.
GOLDEN_P_PD_DBM = {
    1: [-27.039869, -24.026829, -21.00965, -17.980877, -14.91552, -11.720937, -7.99818, -0.519563],
    5: [-23.541208, -20.522889, -17.49073, -14.414077, -11.177287, -7.260815, 3.644565, None],
    10: [-22.032834, -19.009454, -15.961609, -12.830569, -9.379562, -4.275956, None, None],
}


def mp_beta(p_w, prm=DEF):
    mpmath.mp.dps = 50
    q = mpmath.mpf("1.602176634e-19")
    k = mpmath.mpf("1.380649e-23")
    r = mpmath.mpf(prm.responsivity_a_per_w)
    thermal = 4 * k * prm.temperature_k / prm.load_resistance_ohm
    rin = mpmath.power(10, mpmath.mpf(prm.rin_db_per_hz) / 10)
    p = mpmath.mpf(p_w)
    idark = mpmath.mpf(prm.dark_current_a)
    return (mpmath.sqrt(2 * q * (r * p + idark) + thermal + (r * p) ** 2 * rin)
            + mpmath.sqrt(2 * q * idark + thermal))


def grid_enob(dbm, dr_gsps, prm=DEF):
    """Vectorized ENOB used by the grid-scan oracle."""
    q, k = 1.602176634e-19, 1.380649e-23
    p = 1e-3 * 10 ** (dbm / 10)
    r = prm.responsivity_a_per_w
    th = 4 * k * prm.temperature_k / prm.load_resistance_ohm
    rin = 10 ** (prm.rin_db_per_hz / 10)
    beta = np.sqrt(2 * q * (r * p + prm.dark_current_a) + th + (r * p) ** 2 * rin) \
        + np.sqrt(2 * q * prm.dark_current_a + th)
    snr = 20 * np.log10(r * p / (beta * np.sqrt(dr_gsps * 1e9 / np.sqrt(2))))
    return (snr - 1.76) / 6.02


def grid_scan_p_pd(bits, dr, prm=DEF):
    grid = np.arange(-90000, 30001) / 1000.0
    ok = np.nonzero(grid_enob(grid, dr, prm) >= bits)[0]
    return None if ok.size == 0 else grid[ok[0]]


# -- noise and ENOB -------------------------------------------------------

def test_beta_dark_floor():
    assert noise_beta(0.0, DEF) == pytest.approx(3.64069759928747e-11, rel=1e-12)
    assert noise_beta(0.0, DEF) == pytest.approx(float(mp_beta(0)), rel=1e-12)


def test_beta_vanishes_without_noise_sources():
    quiet = dataclasses.replace(DEF, dark_current_a=0.0, temperature_k=0.0)
    assert noise_beta(0.0, quiet) == 0.0


@pytest.mark.parametrize("p_w", [1e-3, 1e-6, 3.3e-5, 0.02])
def test_beta_matches_high_precision(p_w):
    assert noise_beta(p_w, DEF) == pytest.approx(float(mp_beta(p_w)), rel=1e-12)


def test_beta_rejects_negative_power():
    with pytest.raises(ValueError):
        noise_beta(-1e-3, DEF)


def test_enob_rejects_bad_inputs():
    with pytest.raises(ValueError):
        enob(0.0, 1, DEF)
    with pytest.raises(ValueError):
        enob(1e-3, 0, DEF)


def test_enob_doubling_in_thermal_regime():
    # strip shot and RIN terms: beta is then constant in P
    thermal_only = dataclasses.replace(DEF, dark_current_a=0.0, rin_db_per_hz=-400.0)
    low, high = 1e-9, 2e-9
    assert enob(high, 1, thermal_only) - enob(low, 1, thermal_only) == pytest.approx(
        20 * math.log10(2) / 6.02, rel=1e-4)
    assert enob(high, 1, thermal_only) - enob(low, 1, thermal_only) == pytest.approx(1.0, abs=0.001)


@given(p=st.floats(1e-9, 1e-1), dr=st.floats(0.1, 50))
def test_enob_monotone(p, dr):
    assert enob(p * 1.01, dr, DEF) > enob(p, dr, DEF)
    assert enob(p, dr * 1.01, DEF) < enob(p, dr, DEF)


def test_enob_ceiling_bounds_enob():
    for dr in (1, 5, 10):
        assert enob(1.0, dr, DEF) < enob_ceiling(dr, DEF)
        assert enob(1.0, dr, DEF) == pytest.approx(enob_ceiling(dr, DEF), abs=0.01)
    assert enob_ceiling(10, DEF) == pytest.approx(6.6, abs=0.01)


# -- solver -----------------------------------------------------------------

@pytest.mark.parametrize("dr", [1, 5, 10])
@pytest.mark.parametrize("bits", range(1, 9))
def test_solver_golden_and_grid_oracle(bits, dr):
    golden = GOLDEN_P_PD_DBM[dr][bits - 1]
    grid = grid_scan_p_pd(bits, dr)
    if golden is None:
        assert grid is None
        with pytest.raises(InfeasiblePrecisionError, match="ceiling"):
            solve_p_pd_opt(bits, dr)
        return
    got = solve_p_pd_opt(bits, dr)
    assert got == pytest.approx(golden, abs=1e-5)
    assert abs(got - grid) < 0.01
    assert abs(enob(dbm_to_w(got), dr, DEF) - bits) < 1e-6


def test_solver_monotonicity_samples():
    assert solve_p_pd_opt(5, 1) > solve_p_pd_opt(4, 1)
    assert solve_p_pd_opt(4, 10) > solve_p_pd_opt(4, 1)


def test_query_validation():
    with pytest.raises(ValueError):
        ScalabilityQuery(0, 1, A)
    with pytest.raises(ValueError):
        ScalabilityQuery(17, 1, A)
    with pytest.raises(ValueError):
        ScalabilityQuery(4, 0, A)


# -- link budget ----------------------------------------------------------

def lossless(**kw):
    zero = {f.name: 0.0 for f in dataclasses.fields(PhotonicLinkParams)
            if f.name.startswith("p_") and f.name != "p_laser_dbm"}
    zero.update(penalty_asmw_db=0.0, penalty_masw_db=0.0, penalty_smwa_db=0.0)
    zero.update(kw)
    return dataclasses.replace(DEF, **zero)


def test_link_identity_case():
    for org in ALL_ORGS:
        assert link_output_power(1, 1, org, lossless()) == pytest.approx(10.0)


def test_link_single_splitter():
    assert link_output_power(1, 2, A, lossless(p_splitter_il_db=0.01)) == pytest.approx(9.99)


def test_link_rejects_bad_sizes():
    with pytest.raises(ValueError):
        link_output_power(0, 1, A)


def test_smwa_83_feasible_at_4_bits():
    assert link_output_power(83, 83, S) >= solve_p_pd_opt(4, 1) - 0.5


@given(n=st.integers(1, 250), m=st.integers(1, 250), org=st.sampled_from(ALL_ORGS))
def test_link_power_decreasing(n, m, org):
    assert link_output_power(n + 1, m, org) < link_output_power(n, m, org)
    assert link_output_power(n, m + 1, org) < link_output_power(n, m, org)


def brute_force_max_n(bits, dr, org, prm=DEF, cap=200):
    need = grid_scan_p_pd(bits, dr, prm)
    feasible = [n for n in range(1, cap + 1) if link_output_power(n, n, org, prm) >= need]
    return max(feasible, default=0)


@pytest.mark.parametrize("org", ALL_ORGS)
@pytest.mark.parametrize("dr", [1, 5, 10])
def test_max_n_matches_brute_force(org, dr):
    # the 0.001 dB grid can move the threshold by one N at most
    assert abs(max_n(ScalabilityQuery(4, dr, org)).n_max - brute_force_max_n(4, dr, org)) <= 1


def test_max_n_examples():
    assert max_n(ScalabilityQuery(4, 10, A)).n_max == 12
    assert abs(max_n(ScalabilityQuery(4, 1, S)).n_max - 83) <= 0.1 * 83


def test_max_n_fsr_cap():
    res = max_n(ScalabilityQuery(1, 1, S), lossless(p_laser_dbm=60.0))
    assert res.n_max == 200 and res.fsr_capped


def test_max_n_not_capped_when_budget_binds():
    res = max_n(ScalabilityQuery(4, 1, S))
    assert not res.fsr_capped


def test_sweep_cardinality_and_invariants():
    rows = sweep_scalability()
    assert len(rows) == 72
    assert [(r.org, r.datarate_gsps, r.bit_precision) for r in rows[:3]] == [(A, 1, 1), (A, 1, 2), (A, 1, 3)]
    for r in rows:
        assert 0 <= r.result.n_max <= 200
        if not r.feasible:
            assert r.result.n_max == 0 and math.isinf(r.result.p_pd_opt_dbm)


def test_sweep_threads_same_result(monkeypatch):
    serial = sweep_scalability()
    monkeypatch.setenv("PHOTONIC_DSE_THREADS", "4")
    assert sweep_scalability() == serial


def test_sweep_organization_dominance():
    rows = sweep_scalability()
    cell = {(r.org, r.datarate_gsps, r.bit_precision): r.result.n_max for r in rows}
    for dr in (1, 5, 10):
        for b in range(1, 9):
            assert cell[(S, dr, b)] >= cell[(M, dr, b)] >= cell[(A, dr, b)]


# -- parameter files ------------------------------------------------------

def test_params_roundtrip(tmp_path):
    path = tmp_path / "p.txt"
    path.write_text(format_params())
    params, spectral = load_params(path)
    assert params == DEF
    assert spectral == SpectralParams()


def test_params_override_and_fwhm(tmp_path):
    path = tmp_path / "p.txt"
    path.write_text("# custom\np_laser_dbm = 12  # louder\nfwhm_nm = 0.5\n")
    params, spectral = load_params(path)
    assert params.p_laser_dbm == 12
    assert spectral.channel_spacing_nm == pytest.approx(0.2)


@pytest.mark.parametrize("text, needle", [
    ("bogus = 1\n", "unknown parameter"),
    ("p_laser_dbm 10\n", "expected key = value"),
    ("p_laser_dbm = loud\n", "non-numeric"),
    ("p_ec_il_db = -1\n", "must be >= 0"),
])
def test_params_errors(tmp_path, text, needle):
    path = tmp_path / "p.txt"
    path.write_text("# header\n" + text)
    with pytest.raises(ParamFileError, match=needle) as info:
        load_params(path)
    if "key" in needle or "unknown" in needle or "numeric" in needle:
        assert ":2:" in str(info.value)


def _n_or_zero(bits, dr, org, prm=DEF):
    try:
        return max_n(ScalabilityQuery(bits, dr, org), prm).n_max
    except InfeasiblePrecisionError:
        return 0


@settings(max_examples=30, deadline=None)
@given(bits=st.floats(1, 7.5), dr=st.floats(0.5, 12), org=st.sampled_from(ALL_ORGS))
def test_max_n_monotone(bits, dr, org):
    n = _n_or_zero(bits, dr, org)
    assert _n_or_zero(bits + 0.5, dr, org) <= n
    assert _n_or_zero(bits, dr * 1.5, org) <= n

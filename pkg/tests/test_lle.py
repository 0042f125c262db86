import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import constants
from scipy.optimize import brentq

from dcesim.errors import DivergenceError, NoSolitonError
from dcesim.lle import (
    LleParams,
    PhysicalParams,
    SolitonField,
    evolve_lle,
    find_steady_soliton,
    homogeneous_field,
    homogeneous_states,
    kerr_index_profile,
    lle_residual,
    mw_index_profile,
    normalized_dispersion,
    optical_path_length,
    sample_modulation_period,
    sech_seed,
    shift_envelope,
    synthesize_cp_intensity,
    theta_grid,
)


def test_normalized_dispersion_matches_hand_calculation():
    omega_p = 2 * np.pi * 299792458.0 / 1550e-9
    kappa = omega_p / 5e5
    expected = 2 * (2 * np.pi * 1.5246e6) / kappa
    assert normalized_dispersion(1.5246e6, 5e5, 1550e-9) == pytest.approx(expected, rel=1e-14)
    assert expected == pytest.approx(0.0078826, rel=1e-4)


@pytest.mark.parametrize("kwargs", [{"grid_points": 300}, {"grid_points": 128}, {"dispersion": -1.0}, {"step": 0.0}])
def test_lle_params_validation(kwargs):
    with pytest.raises(ValueError):
        LleParams(**kwargs)


def test_zero_field_without_pump_stays_zero():
    p = LleParams(pump_strength_sq=0.0, grid_points=256)
    out = evolve_lle(SolitonField(np.zeros(256, complex), p), 3.0)
    assert np.all(out.envelope == 0)


def _independent_lower_root(f2, alpha):
    # plain bisection bracket below the first turning point of rho (1 + (alpha - rho)^2)
    g = lambda r: r * (1 + (alpha - r) ** 2) - f2
    turning = (2 * alpha - np.sqrt(alpha**2 - 3)) / 3
    return brentq(g, 0.0, turning, xtol=1e-15)


@pytest.mark.parametrize("d2", [0.0078826, 0.05, 1.0])
def test_flat_homogeneous_state_is_stationary(d2):
    p = LleParams(4.1, 3.2, d2, grid_points=256)
    rho = _independent_lower_root(4.1, 3.2)
    assert homogeneous_states(p)[0] == pytest.approx(rho, rel=1e-12)
    psi0 = np.full(256, homogeneous_field(p, rho))
    assert np.abs(psi0) ** 2 == pytest.approx(np.full(256, rho), rel=1e-12)
    out = evolve_lle(SolitonField(psi0, p), 5.0)
    assert np.abs(out.envelope - psi0).max() < 1e-8


def test_second_order_splitting_also_available():
    p = LleParams(4.1, 3.2, grid_points=256, step=1e-3)
    rho = homogeneous_states(p)[0]
    psi0 = np.full(256, homogeneous_field(p, rho))
    out = evolve_lle(SolitonField(psi0, p), 1.0, order=2)
    assert np.abs(out.envelope - psi0).max() < 1e-6


def test_sech_seed_relaxes_with_decreasing_residual(default_soliton):
    p = LleParams()
    seed = SolitonField(sech_seed(p), p)
    r0 = lle_residual(seed.envelope, p)
    later = evolve_lle(seed, 5.0)
    assert later.residual < r0
    assert default_soliton.residual < later.residual


def test_evolve_rejects_negative_duration():
    p = LleParams(grid_points=256)
    with pytest.raises(ValueError):
        evolve_lle(SolitonField(np.zeros(256, complex), p), -1.0)


def test_divergence_error_names_step():
    p = LleParams(grid_points=256)
    with pytest.raises(DivergenceError) as info:
        evolve_lle(SolitonField(sech_seed(p), p), 0.5, norm_cap=1e-3)
    assert info.value.step >= 1


def test_outside_existence_region_raises_no_soliton():
    p = LleParams(1.0, 3.2, grid_points=512)
    assert p.max_soliton_detuning == pytest.approx(np.pi**2 / 8)
    with pytest.warns(RuntimeWarning, match="single-soliton bound"):
        with pytest.raises(NoSolitonError):
            find_steady_soliton(p)


def test_vanishing_detuning_degenerates_to_flat_background():
    p = LleParams(4.1, 0.05, grid_points=512)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(NoSolitonError, match="flat"):
            find_steady_soliton(p)


def test_steady_soliton_structure(default_soliton):
    s = default_soliton
    assert s.steady
    assert s.intensity.argmax() == 0
    # localized: half-maximum width well below the ring circumference
    assert np.count_nonzero(s.intensity > 0.5 * s.peak_intensity) < s.params.grid_points // 20
    assert s.power() == pytest.approx(s.pump_work(), rel=1e-6)


def test_spectrum_even_and_monotone(default_soliton):
    spec = np.fft.fftshift(default_soliton.spectrum)
    c = spec.size // 2
    right = spec[c + 1:]
    left = spec[c - 1:0:-1][: right.size]
    assert np.abs(right - left).max() <= 1e-12 * spec.max()
    tail = spec[c + 3:]
    tail = tail[tail > 1e-25 * spec.max()]
    assert np.all(np.diff(tail) < 0)


# ----------------------------------------------------------------------------
# counter-propagating interference


def _sech_field(n=1024):
    p = LleParams(grid_points=n)
    th = theta_grid(n)
    th = np.where(th >= np.pi, th - 2 * np.pi, th)
    return SolitonField((np.sqrt(6.4) / np.cosh(np.sqrt(6.4 / p.dispersion) * th)).astype(complex), p)


def test_cp_intensity_at_overlap_and_antipodes():
    s = _sech_field()
    phys = PhysicalParams()
    T = phys.round_trip_time
    i0 = synthesize_cp_intensity(s, 0.0, phys.fsr)
    assert i0.max() == pytest.approx(4 * s.peak_intensity, rel=1e-12)
    iq = synthesize_cp_intensity(s, T / 4, phys.fsr)
    th = theta_grid(1024)
    for centre in (np.pi / 2, 3 * np.pi / 2):
        near = np.abs(np.angle(np.exp(1j * (th - centre)))) < 0.3
        assert iq[near].max() == pytest.approx(s.peak_intensity, rel=1e-6)
    dth = 2 * np.pi / 1024
    assert i0.sum() * dth > iq.sum() * dth


def test_cp_intensity_symmetries():
    s = _sech_field()
    phys = PhysicalParams()
    T = phys.round_trip_time
    for k in (0, 3, 17, 40):
        t = k * T / 256
        a = synthesize_cp_intensity(s, t, phys.fsr)
        half = synthesize_cp_intensity(s, t + T / 2, phys.fsr)
        full = synthesize_cp_intensity(s, t + T, phys.fsr)
        assert np.allclose(full, a, rtol=0, atol=1e-12)
        assert np.allclose(half, np.roll(a, -512), rtol=0, atol=1e-12)


def test_fractional_shift_is_spectral():
    s = _sech_field(256).envelope
    whole = shift_envelope(s, 2 * np.pi * 3 / 256)
    assert np.array_equal(whole, np.roll(s, 3))
    frac = shift_envelope(s, 2 * np.pi * 0.5 / 256)
    back = shift_envelope(frac, -2 * np.pi * 0.5 / 256)
    assert np.allclose(back, s, atol=1e-12)


# ----------------------------------------------------------------------------
# index perturbation and path length


def test_kerr_index_zero_and_value():
    phys = PhysicalParams()
    assert np.all(kerr_index_profile(np.zeros(8), phys) == 0)
    # n0 * kappa / (2 omega_p) = n0 / (2 Q): evaluated exactly
    expected = 1.9 * (1.0 / 5e5) * 6.4 / 2
    assert kerr_index_profile(np.array([6.4]), phys)[0] == pytest.approx(expected, rel=1e-13)
    assert expected == pytest.approx(1.216e-5, rel=1e-12)


def test_kerr_index_rejects_negative_intensity():
    with pytest.raises(ValueError):
        kerr_index_profile(np.array([-1.0]), PhysicalParams())


def test_coupling_boost_scales_index():
    base = kerr_index_profile(np.array([1.0, 2.0]), PhysicalParams())
    boosted = kerr_index_profile(np.array([1.0, 2.0]), PhysicalParams(coupling_boost=50.0))
    assert np.allclose(boosted, 50 * base, rtol=1e-14)


@settings(max_examples=30, deadline=None)
@given(
    st.lists(st.floats(0, 50, allow_nan=False), min_size=4, max_size=16),
    st.floats(0.01, 10),
)
def test_index_maps_are_linear(values, scale):
    intensity = np.array(values)
    phys = PhysicalParams()
    dn = kerr_index_profile(intensity, phys)
    assert np.allclose(kerr_index_profile(scale * intensity, phys), scale * dn, rtol=1e-12, atol=1e-30)
    pert = mw_index_profile(dn, phys, 2.1) - 2.1
    pert2 = mw_index_profile(scale * dn, phys, 2.1) - 2.1
    assert np.allclose(pert2, scale * pert, rtol=1e-9, atol=1e-15)


def test_mw_index_overlap_and_mask():
    dn = np.linspace(0, 1e-5, 16)
    assert np.all(mw_index_profile(dn, PhysicalParams(overlap=0.0), 2.1) == 2.1)
    assert np.allclose(mw_index_profile(dn, PhysicalParams(overlap=0.1), 2.1) - 2.1, 0.1 * dn, rtol=1e-9, atol=1e-15)
    mask = np.r_[np.ones(8), np.zeros(8)]
    out = mw_index_profile(dn, PhysicalParams(overlap=0.1, mask=mask), 2.1)
    assert np.all(out[8:] == 2.1)
    assert np.all(out[1:8] > 2.1)


def test_mask_validation():
    with pytest.raises(ValueError):
        PhysicalParams(mask=np.array([1.5, 0.0]))
    with pytest.raises(ValueError):
        PhysicalParams(overlap=1.5)
    with pytest.raises(ValueError):
        PhysicalParams(mask=np.ones(4)).mask_on(8)


def test_path_length_oracles():
    R = 200e-6
    th = theta_grid(1024)
    assert optical_path_length(np.full(1024, 2.1), R) == pytest.approx(2 * np.pi * 2.1 * R, rel=1e-15)
    assert optical_path_length(2.1 + 1e-3 * np.cos(th), R) == pytest.approx(2 * np.pi * 2.1 * R, rel=1e-14)
    with pytest.raises(ValueError):
        optical_path_length(np.zeros(4), R)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(1.0, 3.0, allow_nan=False), min_size=8, max_size=64))
def test_path_length_is_mean_index(values):
    profile = np.array(values)
    R = 200e-6
    assert optical_path_length(profile, R) == pytest.approx(2 * np.pi * R * profile.mean(), rel=1e-12)


def test_physical_derived_quantities():
    phys = PhysicalParams()
    assert phys.fsr == pytest.approx(constants.c / (2 * np.pi * 200e-6 * 2.1), rel=1e-15)
    assert phys.fundamental == pytest.approx(2 * np.pi * phys.fsr)
    assert phys.linewidth == pytest.approx(phys.pump_frequency / 5e5)


def test_modulation_period_properties(default_soliton):
    phys = PhysicalParams()
    mod = sample_modulation_period(default_soliton, phys, 256, 2.1)
    diag = mod.check()
    assert diag["half_period_deviation"] < 1e-10
    assert diag["path_length_consistency"] < 1e-12
    assert diag["min_index"] > 0
    L = mod.path_lengths
    assert L[0] > L[64]
    # n(theta, t + T/2) = n(theta + pi, t)
    assert np.allclose(mod.index_profiles[128:], np.roll(mod.index_profiles[:128], -512, axis=1), rtol=0, atol=1e-15)
    assert mod.period == pytest.approx(phys.round_trip_time)


def test_modulation_without_overlap_is_static(default_soliton):
    mod = sample_modulation_period(default_soliton, PhysicalParams(overlap=0.0), 64, 2.1)
    assert np.all(mod.index_profiles == 2.1)
    assert np.ptp(mod.path_lengths) == 0


def test_modulation_sample_count_validation(default_soliton):
    with pytest.raises(ValueError):
        sample_modulation_period(default_soliton, PhysicalParams(), 63, 2.1)

import itertools
import math
import warnings

import numpy as np
import pytest
import scipy.optimize
from hypothesis import given
from hypothesis import strategies as st

from echo_thermo.dynamics import SpinConfig, TimeGrid, TimeSeries, exact_boltzmann, exact_dos, exact_echoes, moments
from echo_thermo.lattice import TfimParams
from echo_thermo.shots import ShotModel, noisify
from echo_thermo.wick import (
    ErrorPredictorParams,
    FilterCapError,
    FrequencyGrid,
    NNLSError,
    SpectralDensity,
    WickConfig,
    adjust_moments,
    chi2,
    direct_fourier,
    exact_cut_error,
    filter_cap,
    filter_width,
    fit_predictor_constant,
    gaussian_filter_weight,
    nnls,
    nnls_density,
    predict_gf_error,
    quantile_truncate,
    select_quantile,
    single_line_series,
    weight_from_density,
    wick_weight,
)

RATE_HIGH = 64 / math.pi
RATE_LOW = 16 / math.pi


@pytest.fixture(scope="module")
def allup_series(hc10, tfim):
    return exact_echoes(SpinConfig.all_up(10), TimeGrid.from_rate(RATE_LOW, 4 * math.pi), hc10, tfim)


def binned_dos(dos, grid):
    idx = np.clip(np.round((dos.energies - grid.omega_min) / grid.spacing).astype(int), 0, grid.n_omega - 1)
    return np.bincount(idx, dos.overlaps, grid.n_omega)


# --- grids and densities ------------------------------------------------------

def test_nyquist_grid_layout():
    g = FrequencyGrid.nyquist(0.25, 100)
    assert g.omega[0] == pytest.approx(-4 * math.pi)
    assert g.spacing == pytest.approx(8 * math.pi / 100)
    assert g.omega[-1] < 4 * math.pi


def test_bounded_grid_respects_nyquist():
    assert FrequencyGrid.bounded(0.125, 13.5, 64).omega_min == -13.5
    with pytest.raises(ValueError):
        FrequencyGrid.bounded(0.25, 13.5, 64)


def test_density_json_roundtrip(tmp_path):
    g = FrequencyGrid(-2.0, 2.0, 8)
    d = SpectralDensity(g, np.arange(8) / 28.0, broadening=0.5, method="nnls", info={"q": 0.1, "chi2": 3.0})
    d.save(tmp_path / "d.json", dt=0.1)
    back = SpectralDensity.from_json(__import__("json").loads((tmp_path / "d.json").read_text()))
    np.testing.assert_allclose(back.omega, d.omega)
    np.testing.assert_array_equal(back.weights, d.weights)
    assert back.broadening == 0.5 and back.info["q"] == 0.1


# --- direct transform ---------------------------------------------------------

@given(seed=st.integers(0, 2**32 - 1), n_t=st.integers(1, 40))
def test_direct_masses_sum_to_one(seed, n_t):
    rng = np.random.default_rng(seed)
    s = TimeSeries(TimeGrid(0.3, n_t), rng.normal(size=n_t) + 1j * rng.normal(size=n_t))
    d = direct_fourier(s, FrequencyGrid.nyquist(0.3, 2 * n_t + 7))
    assert d.total == pytest.approx(1.0, abs=1e-10)


@given(seed=st.integers(0, 2**32 - 1))
def test_direct_matches_fft(seed):
    # independent route: inverse FFT of the symmetric extension on the Nyquist grid
    rng = np.random.default_rng(seed)
    n_t, n_omega, dt = 9, 32, 0.2
    g = rng.normal(size=n_t) + 1j * rng.normal(size=n_t)
    s = TimeSeries(TimeGrid(dt, n_t), g)
    grid = FrequencyGrid.nyquist(dt, n_omega)
    a = np.zeros(n_omega, dtype=complex)
    a[0] = 1.0
    k = np.arange(1, n_t + 1)
    a[k] = g * (-1.0) ** k
    a[-k] = np.conj(g) * (-1.0) ** k
    ref = (n_omega * np.fft.ifft(a)).real * grid.spacing * dt / (2 * math.pi)
    np.testing.assert_allclose(direct_fourier(s, grid).weights, ref, atol=1e-12)


def test_direct_single_line_peaks_at_frequency():
    grid = FrequencyGrid.nyquist(0.1, 400)
    w0 = grid.omega[123]
    d = direct_fourier(single_line_series(w0, TimeGrid(0.1, 200)), grid)
    assert int(np.argmax(d.weights)) == 123


def test_direct_has_negative_lobes(hc10, tfim):
    s = exact_echoes(SpinConfig.all_up(10), TimeGrid.from_rate(RATE_HIGH, 4 * math.pi), hc10, tfim)
    d = direct_fourier(s)
    assert d.weights.min() < -1e-3


# --- Gaussian filter ----------------------------------------------------------

def test_filter_scale_factor_identity():
    # before the cut, the filtered line integrates to exp(beta^2 delta^2 / 2) exp(-beta omega0)
    dt, w0, beta = 0.05, -3.3, 1.2
    g = TimeGrid(dt, 400)
    delta = 12.0 / g.t_max
    s = single_line_series(w0, g)
    d = direct_fourier(s, FrequencyGrid.nyquist(dt, 2048), values=s.values * np.exp(-0.5 * (delta * g.times) ** 2))
    near = np.abs(d.omega - w0) < 12 * delta  # far bins hold only rounding noise
    raw = d.weights[near] @ np.exp(-beta * d.omega[near])
    assert raw == pytest.approx(math.exp(0.5 * (beta * delta) ** 2 - beta * w0), rel=1e-10)


def test_filter_weight_at_zero_beta(allup_series):
    w, _ = gaussian_filter_weight(allup_series, 0.0, 8.0 / allup_series.grid.t_max)
    assert w == pytest.approx(1.0, abs=1e-3)


def test_filter_cut_level(allup_series):
    _, d = gaussian_filter_weight(allup_series, 1.0, 2.0 / allup_series.grid.t_max, c_cut=2.0)
    assert d.info["cut"] > 0
    assert np.all(d.weights[d.weights > 0] >= d.info["cut"])


def test_filter_no_negative_values_means_no_cut():
    s = single_line_series(-1.0, TimeGrid(0.1, 300))
    _, d = gaussian_filter_weight(s, 1.0, 0.5)
    assert d.info["cut"] == 0.0 or d.info["cut"] < 1e-12


def test_filter_cap():
    assert filter_cap(math.pi / 30, 13.5) is None
    assert filter_cap(math.pi / 16, 13.4778) == pytest.approx((16 - 13.4778) / 2)
    with pytest.raises(FilterCapError):
        filter_cap(math.pi / 10, 13.5)
    assert filter_width(24.0, 4 * math.pi, math.pi / 16, 13.4778) == pytest.approx((16 - 13.4778) / 2)
    assert filter_width(8.0, 4 * math.pi, math.pi / 16, 13.4778) == pytest.approx(8 / (4 * math.pi))
    assert filter_width(8.0, 4 * math.pi) == pytest.approx(8 / (4 * math.pi))
    with pytest.raises(FilterCapError):
        gaussian_filter_weight(single_line_series(0.0, TimeGrid(0.1, 5)), 1.0, 2.0, delta_cap=1.0)
    with pytest.raises(ValueError):
        gaussian_filter_weight(single_line_series(0.0, TimeGrid(0.1, 5)), 1.0, 0.0)


# --- NNLS solver --------------------------------------------------------------

@given(seed=st.integers(0, 2**32 - 1), m=st.integers(3, 30), n=st.integers(2, 40))
def test_nnls_agrees_with_scipy(seed, m, n):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(m, n))
    b = rng.normal(size=m)
    x, rnorm = nnls(A, b)
    x_ref, _ = scipy.optimize.nnls(A, b)
    assert np.all(x >= 0)
    # the reference's reported norm is not trusted; its point is re-evaluated
    r_ref = np.linalg.norm(A @ x_ref - b)
    assert rnorm <= r_ref * (1 + 1e-8) + 1e-10
    assert rnorm == pytest.approx(np.linalg.norm(A @ x - b), rel=1e-10, abs=1e-12)
    # KKT: gradient non-positive on the zero set, ~0 on the support
    grad = A.T @ (b - A @ x)
    assert np.all(grad[x == 0] <= 1e-8 * max(1.0, np.abs(A).max() * np.abs(b).max()))
    np.testing.assert_allclose(grad[x > 0], 0.0, atol=1e-7)


def test_nnls_matches_support_enumeration():
    # small case where the reference solver stops early; every support is tried
    rng = np.random.default_rng(97880)
    A, b = rng.normal(size=(3, 3)), rng.normal(size=3)
    best = np.inf
    for k in range(4):
        for support in itertools.combinations(range(3), k):
            z = np.zeros(3)
            if support:
                z[list(support)] = np.linalg.lstsq(A[:, list(support)], b, rcond=None)[0]
            if np.all(z >= 0):
                best = min(best, np.linalg.norm(A @ z - b))
    assert nnls(A, b)[1] == pytest.approx(best, rel=1e-12)


def test_nnls_iteration_cap():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(20, 20))
    b = A @ np.abs(rng.normal(size=20))
    with pytest.raises(NNLSError):
        nnls(A, b, maxiter=2)


def test_nnls_shape_check():
    with pytest.raises(ValueError):
        nnls(np.eye(3), np.ones(4))


# --- NNLS densities -------------------------------------------------------------

def test_three_lines_recovered():
    dt, n_omega = 0.25, 64
    grid = FrequencyGrid.nyquist(dt, n_omega)
    idx, amp = np.array([10, 25, 40]), np.array([0.5, 0.3, 0.2])
    g = TimeGrid(dt, 48)
    s = TimeSeries(g, np.exp(-1j * np.outer(g.times, grid.omega[idx])) @ amp)
    d = nnls_density(s, grid)
    np.testing.assert_allclose(d.weights[idx], amp, atol=1e-8)
    assert np.all(np.delete(d.weights, idx) < 1e-8)


def test_nnls_matches_exact_dos(hc10, tfim, allup_series):
    grid = FrequencyGrid.nyquist(allup_series.grid.dt, 512)
    d = nnls_density(allup_series, grid)
    ref = binned_dos(exact_dos(SpinConfig.all_up(10), hc10, tfim), grid)
    kernel = np.exp(-0.5 * (np.arange(-15, 16) / 3.0) ** 2)
    kernel /= kernel.sum()
    smooth = lambda w: np.convolve(w, kernel, "same")
    assert np.abs(smooth(d.weights) - smooth(ref)).sum() < 0.1


def test_nnls_fits_no_worse_than_truth(hc10, tfim, allup_series):
    noisy = noisify(allup_series, ShotModel(1000, seed=5))
    grid = FrequencyGrid.nyquist(noisy.grid.dt, 256)
    d = nnls_density(noisy, grid)
    truth = SpectralDensity(grid, binned_dos(exact_dos(SpinConfig.all_up(10), hc10, tfim), grid))
    assert np.all(d.weights >= 0)
    assert chi2(d, noisy) <= chi2(truth, noisy)


# --- quantile filter and discrepancy -----------------------------------------

@given(seed=st.integers(0, 2**32 - 1), q=st.floats(0.0, 0.499))
def test_quantile_removed_mass_bound(seed, q):
    rng = np.random.default_rng(seed)
    w = rng.exponential(size=50) * (rng.random(50) < 0.6)
    w[0] += 1e-3
    w /= w.sum()
    d = SpectralDensity(FrequencyGrid(-1, 1, 50), w)
    out = quantile_truncate(d, q)
    removed = w.sum() - out.weights.sum()
    kept = np.nonzero(out.weights)[0]
    boundary = max(w[kept[0]], w[kept[-1]])
    assert removed <= 2 * q + 2 * boundary + 1e-12
    assert np.all((out.weights == 0) | (out.weights == w))


def test_quantile_zero_is_identity():
    d = SpectralDensity(FrequencyGrid(-1, 1, 4), np.array([0.1, 0.2, 0.3, 0.4]))
    np.testing.assert_array_equal(quantile_truncate(d, 0.0).weights, d.weights)
    with pytest.raises(ValueError):
        quantile_truncate(d, 0.5)


def test_exact_series_gives_zero_quantile(allup_series):
    d = nnls_density(allup_series)
    assert select_quantile(d, allup_series, 2 * allup_series.grid.n_t).q == 0.0


def test_discrepancy_removes_leading_spurious_peaks(hc10, tfim, allup_series):
    e0 = -13.477758
    for seed in range(3):
        noisy = noisify(allup_series, ShotModel(1000, seed=seed))
        d = nnls_density(noisy, FrequencyGrid.nyquist(noisy.grid.dt, 512))
        choice = select_quantile(d, noisy, 2 * noisy.grid.n_t)
        assert not choice.best_effort and choice.chi2 <= 2 * noisy.grid.n_t
        cut = quantile_truncate(d, choice.q)
        assert d.weights[d.omega < e0 - 0.5].sum() > 0
        assert cut.weights[cut.omega < e0 - 0.5].sum() == 0


def test_unreachable_target_is_best_effort(allup_series):
    noisy = noisify(allup_series, ShotModel(1000, seed=1))
    d = nnls_density(noisy)
    choice = select_quantile(d, noisy, 0.0)
    assert choice.q == 0.0 and choice.best_effort


# --- moments --------------------------------------------------------------------

@given(seed=st.integers(0, 2**32 - 1), mean=st.floats(-3, 3), std=st.floats(0.2, 1.5))
def test_adjusted_moments(seed, mean, std):
    rng = np.random.default_rng(seed)
    grid = FrequencyGrid(-10, 10, 400)
    d = SpectralDensity(grid, rng.random(400) * (np.abs(grid.omega) < 4))
    out = adjust_moments(d, mean, std)
    mu, sd = out.mean_std()
    assert abs(mu - mean) <= grid.spacing
    assert abs(sd - std) <= grid.spacing
    assert out.total == pytest.approx(1.0)


def test_adjusted_classical_state_is_exact(hc10):
    params = TfimParams(1.0, 0.0)
    psi = SpinConfig.all_up(10)
    g = TimeGrid(math.pi / 16, 32)
    noisy = noisify(exact_echoes(psi, g, hc10, params), ShotModel(1000, seed=2))
    cfg = WickConfig(adjust_moments=True, mild_broadening_factor=0.0)
    w, d = wick_weight(noisy, 0.7, cfg, energy_moments=moments(psi, hc10, params))
    assert w == pytest.approx(math.exp(0.7 * 11), rel=1e-12)


def test_single_bin_warns():
    d = SpectralDensity(FrequencyGrid(-1, 1, 8), np.eye(8)[2])
    with pytest.warns(UserWarning):
        out = adjust_moments(d, 0.0, 0.3)
    assert out.mean_std()[0] == pytest.approx(0.0)


# --- weights ----------------------------------------------------------------------

def test_weight_of_single_bin():
    grid = FrequencyGrid(-16, 16, 256)
    d = SpectralDensity(grid, (grid.omega == -11.0).astype(float))
    assert weight_from_density(d, 0.5) == pytest.approx(math.exp(5.5))
    assert weight_from_density(d, 0.0) == pytest.approx(1.0)


def test_weight_refuses_signed_density():
    d = SpectralDensity(FrequencyGrid(-1, 1, 4), np.array([0.5, -0.1, 0.3, 0.3]))
    with pytest.raises(ValueError):
        weight_from_density(d, 1.0)
    assert weight_from_density(d, 0.0, unsafe=True) == pytest.approx(1.0)


def test_normalised_weights_ignore_broadening_factor(hc10, tfim):
    g = TimeGrid.from_rate(RATE_LOW, 2 * math.pi)
    grid = FrequencyGrid.nyquist(g.dt, 256)
    dens = [nnls_density(exact_echoes(SpinConfig(b, 10), g, hc10, tfim), grid, broadening=grid.spacing) for b in (0, 5, 77)]
    w = np.array([weight_from_density(d, 1.1) for d in dens])
    raw = np.array([weight_from_density(SpectralDensity(d.grid, d.weights), 1.1) for d in dens])
    np.testing.assert_allclose(w / w.sum(), raw / raw.sum(), rtol=1e-12)


# --- predictor ----------------------------------------------------------------------

def test_predictor_saturates():
    assert predict_gf_error(5.0, 2.0, 1.0, ErrorPredictorParams(1.5)) == 1.0


@given(beta=st.floats(0, 3), t_max=st.floats(2, 20), c=st.floats(0.3, 3))
def test_predictor_decreasing_in_alpha(beta, t_max, c):
    params = ErrorPredictorParams(c)
    if beta / t_max >= c:
        return
    alpha = np.linspace(2, 12, 30)
    assert np.all(np.diff(predict_gf_error(alpha, beta, t_max, params)) < 0)


def test_predictor_is_tail_of_exact_form():
    params = ErrorPredictorParams(1.0)
    a = np.array([20.0, 40.0])
    ratio = predict_gf_error(a, 1.0, 4.0, params) / exact_cut_error(a, 1.0, 4.0, params)
    np.testing.assert_allclose(ratio, 1.0, rtol=0.02)


def test_predictor_fit_recovers_constant():
    alpha = np.linspace(3, 10, 15)
    data = predict_gf_error(alpha, 1.0, 4 * math.pi, ErrorPredictorParams(1.3))
    assert fit_predictor_constant(alpha, data, 1.0, 4 * math.pi).C == pytest.approx(1.3, rel=1e-4)


def test_predictor_input_checks():
    with pytest.raises(ValueError):
        predict_gf_error(0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        ErrorPredictorParams(0.0)


# --- pipeline -------------------------------------------------------------------------

def test_pipeline_methods_agree_on_easy_case(hc10, tfim, allup_series):
    exact = exact_boltzmann(SpinConfig.all_up(10), 0.5, hc10, tfim)
    w_nnls, d = wick_weight(allup_series, 0.5)
    assert d.method == "nnls" and abs(w_nnls / exact - 1) < 1e-5
    w_gf, d = wick_weight(allup_series, 0.5, WickConfig(method="gaussian_filter"), max_abs_energy=13.4778)
    assert d.method == "gaussian_filter" and abs(w_gf / exact - 1) < 1e-2
    w_dir, d = wick_weight(allup_series, 0.5, WickConfig(method="direct"))
    assert d.method == "direct" and np.isfinite(w_dir)


def test_pipeline_needs_moments_for_adjustment(allup_series):
    with pytest.raises(ValueError):
        wick_weight(allup_series, 0.5, WickConfig(adjust_moments=True))


@pytest.mark.parametrize(
    "kwargs", [{"method": "fft"}, {"c_cut": 0.0}, {"chi2_factor": 0.5}, {"mild_broadening_factor": -1.0}]
)
def test_bad_wick_config(kwargs):
    with pytest.raises(ValueError):
        WickConfig(**kwargs)


def test_frequency_bound_beyond_nyquist_falls_back(hc10, tfim):
    s = exact_echoes(SpinConfig.all_up(10), TimeGrid(0.5, 8), hc10, tfim)
    wide, d_wide = wick_weight(s, 0.3, WickConfig(omega_bound=100.0))
    full, d_full = wick_weight(s, 0.3, WickConfig())
    np.testing.assert_allclose(d_wide.omega, d_full.omega)
    assert wide == pytest.approx(full, rel=1e-12)

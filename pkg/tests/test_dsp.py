import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hitlearn import dsp
from hitlearn.errors import InsufficientDataError, ParameterError

from oracles import count_windows_by_enumeration, weierstrass, weierstrass_dimension


def tone(freq, fs=256.0, seconds=4.0, amp=1.0):
    t = np.arange(int(seconds * fs)) / fs
    return amp * np.sin(2 * np.pi * freq * t)


def test_sample_buffer_rejects_bad_input():
    with pytest.raises(ParameterError):
        dsp.SampleBuffer(np.zeros(10), 0.0)
    with pytest.raises(ParameterError):
        dsp.SampleBuffer(np.array([0.0, np.nan]), 128.0)
    with pytest.raises(ParameterError):
        dsp.SampleBuffer(np.zeros((2, 2)), 128.0)


def test_sample_buffer_is_read_only():
    buf = dsp.SampleBuffer(np.zeros(8), 128.0)
    with pytest.raises(ValueError):
        buf.samples[0] = 1.0


@pytest.mark.parametrize("seconds", [0, 3.9, 4, 7, 7.5, 10, 60, 600])
def test_window_count_matches_enumeration(seconds):
    fs = 128.0
    buf = dsp.SampleBuffer(np.zeros(int(round(seconds * fs))), fs)
    assert len(dsp.segment_windows(buf)) == count_windows_by_enumeration(seconds)


def test_ten_minute_stage_has_199_windows():
    buf = dsp.SampleBuffer(np.zeros(600 * 128), 128.0)
    wins = dsp.segment_windows(buf)
    assert len(wins) == 199
    assert wins[1].start_time == 3.0 and len(wins[0].samples) == 512


def test_band_limit_needs_settling_room():
    fs = 128.0
    need = dsp.settling_length(fs)
    with pytest.raises(InsufficientDataError):
        dsp.band_limit(dsp.SampleBuffer(np.zeros(need - 1), fs))
    assert len(dsp.band_limit(dsp.SampleBuffer(np.zeros(need), fs))) == need


def test_band_limit_removes_out_of_band_tone():
    fs = 256.0
    x = tone(15, fs, 20) + tone(60, fs, 20)
    y = dsp.band_limit(dsp.SampleBuffer(x, fs)).samples
    mid = slice(len(y) // 4, 3 * len(y) // 4)
    resid = y[mid] - tone(15, fs, 20)[mid]
    assert np.sqrt(np.mean(resid ** 2)) < 0.02


def test_band_power_of_tone_matches_parseval():
    w = dsp.Window.from_array(tone(15, 256.0, 4.0, amp=2.0), 256.0)
    bp = dsp.band_power(w, 10, 25)
    expected_total = 2.0 ** 2 / 2
    assert bp.total == pytest.approx(expected_total, rel=0.02)
    assert bp.value == pytest.approx(expected_total / 15, rel=0.02)


def test_band_power_out_of_band_tone_is_small():
    w = dsp.Window.from_array(tone(40, 256.0), 256.0)
    assert dsp.band_power(w, 10, 25).total < 1e-3


def test_band_power_rejects_band_above_nyquist():
    w = dsp.Window.from_array(np.zeros(512), 128.0)
    with pytest.raises(ParameterError):
        dsp.band_power(w, 10, 70)


def test_band_powers_agree_with_single_band():
    rng = np.random.default_rng(3)
    w = dsp.Window.from_array(rng.standard_normal(512), 128.0)
    both = dsp.band_powers(w, [(10, 25), (0.5, 8)])
    assert both[0] == dsp.band_power(w, 10, 25)
    assert both[1] == dsp.band_power(w, 0.5, 8)


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=300))
def test_haar_conserves_energy(xs):
    x = np.array(xs)
    details, approx = dsp.haar_dwt(x)
    energy = sum(np.sum(d ** 2) for d in details) + np.sum(approx ** 2)
    assert energy == pytest.approx(np.sum(x ** 2), rel=1e-9, abs=1e-9)


def test_haar_known_values():
    details, approx = dsp.haar_dwt([1.0, 3.0, 5.0, 7.0], levels=1)
    np.testing.assert_allclose(details[0], [-np.sqrt(2), -np.sqrt(2)])
    np.testing.assert_allclose(approx, [4 / np.sqrt(2), 12 / np.sqrt(2)])


def test_feature_vector_shape_and_names():
    rng = np.random.default_rng(0)
    w = dsp.Window.from_array(rng.standard_normal(512), 128.0)
    fv = dsp.feature_vector(w)
    assert len(fv) == dsp.N_FEATURES == 29 == len(dsp.feature_names())
    assert not fv.degenerate
    assert np.all(np.isfinite(fv.values))


def test_constant_window_features_are_degenerate():
    fv = dsp.feature_vector(dsp.Window.from_array(np.full(512, 3.0), 128.0))
    assert fv.degenerate
    assert np.all(np.isfinite(fv.values))


def test_ar_recovers_known_process():
    rng = np.random.default_rng(1)
    n = 20000
    x = np.zeros(n)
    e = rng.standard_normal(n)
    for t in range(2, n):
        x[t] = 0.6 * x[t - 1] - 0.3 * x[t - 2] + e[t]
    a, degenerate = dsp.ar_features(dsp.Window.from_array(x, 128.0), order=2)
    assert not degenerate
    np.testing.assert_allclose(a, [0.6, -0.3], atol=0.03)


def test_stft_features_of_tone():
    total, peak, centroid, entropy = dsp.stft_features(dsp.Window.from_array(tone(20, 128.0), 128.0))
    assert peak == 20.0
    assert centroid == pytest.approx(20.0, abs=1.0)
    assert total == pytest.approx(0.5, rel=0.05)
    assert entropy >= 0


def test_wvd_tone_ridge_within_one_bin():
    fs = 256.0
    img = dsp.smoothed_wvd(dsp.Window.from_array(tone(15, fs), fs))
    ridge = img.ridge()
    core = ridge[len(ridge) // 8: -len(ridge) // 8]
    assert np.max(np.abs(core - 15.0)) <= img.df


def test_wvd_chirp_ridge_tracks_frequency():
    fs, n = 256.0, 1024
    t = np.arange(n) / fs
    f0, f1 = 5.0, 20.0
    x = np.sin(2 * np.pi * (f0 * t + (f1 - f0) / (2 * t[-1]) * t ** 2))
    img = dsp.smoothed_wvd(dsp.Window.from_array(x, fs))
    inst = f0 + (f1 - f0) * t / t[-1]
    core = slice(n // 8, -n // 8)
    assert np.max(np.abs(img.ridge()[core] - inst[core])) <= 2 * img.df


@pytest.mark.parametrize("make", [
    lambda t: np.sin(2 * np.pi * 15 * t),
    lambda t: np.sin(2 * np.pi * (5 * t + 15 / 8 * t ** 2)),
    lambda t: np.sin(2 * np.pi * 8 * t) + 0.5 * np.sin(2 * np.pi * 30 * t),
])
def test_wvd_energy_matches_signal_energy(make):
    fs = 256.0
    t = np.arange(1024) / fs
    x = make(t)
    img = dsp.smoothed_wvd(dsp.Window.from_array(x, fs))
    assert img.total_energy() == pytest.approx(np.sum(x ** 2) / fs, rel=0.02)
    assert np.all(img.energy >= 0)


def test_wvd_rejects_even_smoothing():
    with pytest.raises(ParameterError):
        dsp.smoothed_wvd(dsp.Window.from_array(tone(10), 256.0), time_smoothing=4)


def test_fd_of_line_is_one():
    assert dsp.box_counting_fd(np.linspace(-3, 5, 4096)) == pytest.approx(1.0, abs=0.05)


def test_fd_of_weierstrass_matches_analytic():
    x = weierstrass(2 ** 16)
    assert dsp.box_counting_fd(x) == pytest.approx(weierstrass_dimension(), abs=0.10)


def test_fd_of_noise_exceeds_sine():
    rng = np.random.default_rng(0)
    noise = dsp.box_counting_fd(rng.standard_normal(4096))
    smooth = dsp.box_counting_fd(np.sin(np.linspace(0, 6, 4096)))
    assert noise > smooth


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 100), st.floats(-100, 100), st.integers(0, 2 ** 31))
def test_fd_is_affine_invariant(scale, shift, seed):
    x = np.random.default_rng(seed).standard_normal(512)
    assert dsp.box_counting_fd(scale * x + shift) == dsp.box_counting_fd(x)
    assert dsp.box_counting_fd(-scale * x + shift) == dsp.box_counting_fd(x)


def test_fd_input_validation():
    with pytest.raises(InsufficientDataError):
        dsp.box_counting_fd(np.arange(10.0))
    with pytest.raises(ParameterError):
        dsp.box_counting_fd(np.arange(100.0), scales=[0.5, 0.25])
    assert dsp.box_counting_fd(np.ones(100)) == 1.0

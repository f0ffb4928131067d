"""Synthetic single-channel EEG with state-dependent spectra.

Signals are drawn in the frequency domain: each rFFT bin gets a complex
Gaussian coefficient scaled so that the one-sided PSD matches a target
shape. The shape is a 1/(f + knee) background, a flat high-beta shelf when
the learner is engaged, and doubled low-frequency power when drowsy.
"""
from __future__ import annotations

import numpy as np

from ..dsp import DS_BAND, LS_BAND, SampleBuffer
from ..errors import ValidationError
from ..inference import MentalState

# Mean 10-25 Hz PSD targets (V^2/Hz) for a non-learning and a learning window.
LS0_LEVEL = 0.127
LS1_LEVEL = 0.223
BACKGROUND_KNEE = 1.0  # Hz; keeps the background finite at DC
SHELF_EDGE = 1.0  # Hz of cosine taper either side of the learning band
DROWSY_GAIN = 2.0


def _background_scale(lo: float = LS_BAND[0], hi: float = LS_BAND[1]) -> float:
    # c such that mean of c / (f + knee) over [lo, hi] equals LS0_LEVEL
    mean_shape = np.log((hi + BACKGROUND_KNEE) / (lo + BACKGROUND_KNEE)) / (hi - lo)
    return LS0_LEVEL / mean_shape


def _taper(f: np.ndarray, lo: float, hi: float, edge: float) -> np.ndarray:
    """1 inside [lo, hi], raised-cosine roll-off over ``edge`` Hz outside."""
    d = np.maximum(lo - f, f - hi).clip(min=0.0)
    return np.where(d >= edge, 0.0, 0.5 * (1 + np.cos(np.pi * d / edge)))


def target_psd(f: np.ndarray, state: MentalState, scale: float = 1.0) -> np.ndarray:
    """One-sided PSD (V^2/Hz) for ``state`` at frequencies ``f``."""
    f = np.asarray(f, dtype=float)
    psd = _background_scale() / (f + BACKGROUND_KNEE)
    if state.ds == 0:
        psd = psd * (1 + (DROWSY_GAIN - 1) * _taper(f, DS_BAND[0], DS_BAND[1], 0.25))
    if state.ls == 1:
        psd = psd + (LS1_LEVEL - LS0_LEVEL) * _taper(f, LS_BAND[0], LS_BAND[1], SHELF_EDGE)
    psd = psd * scale
    psd[f == 0] = 0.0
    return psd


def generate_eeg(state: MentalState, duration: float, fs: float, profile=None,
                 rng: np.random.Generator | None = None, channel_label: str = "Fz") -> SampleBuffer:
    """Draw ``duration`` seconds of synthetic EEG for ``state``.

    ``profile`` may carry an ``eeg_scale`` attribute (per-participant gain).
    Identical ``rng`` state gives a bit-identical buffer.
    """
    if not duration > 0:
        raise ValidationError(f"duration must be positive, got {duration}")
    if not fs > 0:
        raise ValidationError(f"fs must be positive, got {fs}")
    rng = rng if rng is not None else np.random.default_rng()
    n = int(round(duration * fs))
    if n < 2:
        raise ValidationError("duration too short for the sampling rate")
    f = np.fft.rfftfreq(n, 1 / fs)
    psd = target_psd(f, state, getattr(profile, "eeg_scale", 1.0))
    # E|X_k|^2 = psd * fs * n / 2 gives the requested one-sided density
    coef = rng.standard_normal(f.size) + 1j * rng.standard_normal(f.size)
    spectrum = np.sqrt(psd * fs * n / 2) * coef / np.sqrt(2)
    if n % 2 == 0:
        spectrum[-1] = spectrum[-1].real * np.sqrt(2)  # Nyquist bin is real
    x = np.fft.irfft(spectrum, n)
    return SampleBuffer(x, fs, channel_label)

"""Signal-processing kernels for single-channel EEG.

Everything here is a pure function of its inputs. Arrays held by the value
types are made read-only on construction so they can be shared freely.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import ndimage, signal
from scipy.linalg import solve_toeplitz

from .errors import InsufficientDataError, ParameterError

WINDOW_S = 4.0
HOP_S = 3.0  # 4 s windows overlapping by 1 s

LS_BAND = (10.0, 25.0)
DS_BAND = (0.5, 8.0)

WAVELET_LEVELS = 5
WAVELET_FEATURES = ("mean_abs", "variance", "energy", "zero_crossing_rate")
STFT_FEATURES = ("total_power", "peak_frequency", "spectral_centroid", "spectral_entropy")
N_FEATURES = 5 + WAVELET_LEVELS * len(WAVELET_FEATURES) + len(STFT_FEATURES)

DEFAULT_FD_SCALES = tuple(2.0 ** -k for k in range(2, 9))


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SampleBuffer:
    samples: np.ndarray
    fs: float
    channel_label: str = "Fz"

    def __post_init__(self):
        if not self.fs > 0:
            raise ParameterError(f"sampling rate must be positive, got {self.fs}")
        arr = _frozen(self.samples)
        if arr.ndim != 1:
            raise ParameterError("samples must be one-dimensional")
        if not np.all(np.isfinite(arr)):
            raise ParameterError("samples must be finite")
        object.__setattr__(self, "samples", arr)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.fs

    def __len__(self):
        return len(self.samples)


@dataclass(frozen=True)
class Window:
    samples: np.ndarray
    start_time: float
    fs: float

    def __post_init__(self):
        object.__setattr__(self, "samples", _frozen(self.samples))

    @classmethod
    def from_array(cls, x, fs: float, start_time: float = 0.0) -> "Window":
        return cls(np.asarray(x, dtype=float), start_time, fs)


@dataclass(frozen=True)
class TfImage:
    energy: np.ndarray  # [n_time, n_freq]
    time_axis: np.ndarray
    freq_axis: np.ndarray

    @property
    def dt(self) -> float:
        return float(self.time_axis[1] - self.time_axis[0]) if len(self.time_axis) > 1 else 0.0

    @property
    def df(self) -> float:
        return float(self.freq_axis[1] - self.freq_axis[0]) if len(self.freq_axis) > 1 else 0.0

    def total_energy(self) -> float:
        return float(self.energy.sum() * self.dt * self.df)

    def ridge(self) -> np.ndarray:
        """Frequency of maximum energy at each time instant."""
        return self.freq_axis[np.argmax(self.energy, axis=1)]


@dataclass(frozen=True)
class BandPower:
    value: float  # mean PSD density over the band
    band: tuple[float, float]
    total: float = 0.0  # integrated power over the band, before dividing by width


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    degenerate: bool = False

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))

    def __len__(self):
        return len(self.values)


def feature_names() -> list[str]:
    names = [f"ar{i}" for i in range(1, 6)]
    for level in range(1, WAVELET_LEVELS + 1):
        names += [f"haar_d{level}_{name}" for name in WAVELET_FEATURES]
    names += [f"stft_{name}" for name in STFT_FEATURES]
    return names


# -- filtering and windowing ------------------------------------------------


@lru_cache(maxsize=64)
def _bandpass_sos(fs: float, lo: float, hi: float) -> np.ndarray:
    if not (0 < lo < hi < fs / 2):
        raise ParameterError(f"invalid band [{lo}, {hi}] for fs={fs}")
    return _frozen(signal.butter(4, [lo, hi], btype="bandpass", fs=fs, output="sos"))


def settling_length(fs: float, lo: float = 0.5, hi: float = 40.0) -> int:
    """Minimum buffer length accepted by :func:`band_limit`."""
    sos = _bandpass_sos(fs, lo, hi)
    # same edge padding sosfiltfilt applies by default
    n_zeros = min((sos[:, 2] == 0).sum(), (sos[:, 5] == 0).sum())
    return int(3 * (2 * len(sos) + 1 - n_zeros)) + 1


def band_limit(buf: SampleBuffer, lo: float = 0.5, hi: float = 40.0) -> SampleBuffer:
    """Zero-phase Butterworth band-pass (order-4 prototype, run forward and back)."""
    sos = _bandpass_sos(buf.fs, lo, hi)
    need = settling_length(buf.fs, lo, hi)
    if len(buf) < need:
        raise InsufficientDataError(f"need at least {need} samples to filter, got {len(buf)}")
    y = signal.sosfiltfilt(np.array(sos), buf.samples)
    return SampleBuffer(y, buf.fs, buf.channel_label)


def window_length(fs: float) -> int:
    return int(round(WINDOW_S * fs))


def segment_windows(buf: SampleBuffer) -> list[Window]:
    n_win = window_length(buf.fs)
    n = len(buf)
    out = []
    k = 0
    while True:
        start = int(round(k * HOP_S * buf.fs))
        if start + n_win > n or n_win == 0:
            break
        out.append(Window(buf.samples[start:start + n_win], k * HOP_S, buf.fs))
        k += 1
    return out


# -- time-frequency ---------------------------------------------------------


def _gaussian_kernel(length: int) -> np.ndarray:
    if length == 1:
        return np.ones(1)
    sigma = length / 6.0
    t = np.arange(length) - (length - 1) / 2
    g = np.exp(-0.5 * (t / sigma) ** 2)
    return g / g.sum()


def smoothed_wvd(w: Window, time_smoothing: int = 31, freq_smoothing: int = 9) -> TfImage:
    """Smoothed Wigner-Ville distribution of one window.

    The analytic signal is used so the image spans 0..fs/2 without aliasing.
    Frequency smoothing is applied as a Gaussian lag window whose width is
    equivalent to a ``freq_smoothing``-bin Gaussian kernel; near the window
    edges, where fewer lags exist, the lag window narrows so it is never
    truncated. Time smoothing is a ``time_smoothing``-sample Gaussian along
    the time axis. Negative residue left after smoothing is clamped to zero.

    Cells are scaled so that ``energy.sum() * dt * df`` equals the window
    energy ``sum(x**2) * dt``.
    """
    for name, length in (("time_smoothing", time_smoothing), ("freq_smoothing", freq_smoothing)):
        if int(length) != length or length < 1 or length % 2 == 0:
            raise ParameterError(f"{name} must be an odd integer >= 1, got {length}")
    x = np.asarray(w.samples, dtype=float)
    n = len(x)
    if n < 2:
        raise InsufficientDataError("window too short for a time-frequency image")
    fs = w.fs
    time_axis = w.start_time + np.arange(n) / fs
    freq_axis = np.arange(n) * fs / (2 * n)
    if not np.any(x):
        return TfImage(np.zeros((n, n)), time_axis, freq_axis)

    z = signal.hilbert(x)
    idx = np.arange(n)
    avail = np.minimum(np.minimum(idx, n - 1 - idx), (n + 1) // 2 - 1)
    sigma_lag = np.inf if freq_smoothing == 1 else n / (2 * np.pi * (freq_smoothing / 6.0))
    sigma = np.minimum(sigma_lag, (avail + 1) / 3.0)

    kernel = np.zeros((n, n), dtype=complex)
    kernel[:, 0] = np.abs(z) ** 2
    for m in range(1, int(avail.max()) + 1):
        rows = np.nonzero(avail >= m)[0]
        prod = z[rows + m] * np.conj(z[rows - m]) * np.exp(-0.5 * (m / sigma[rows]) ** 2)
        kernel[rows, m] = prod
        kernel[rows, n - m] = np.conj(prod)
    wvd = np.fft.fft(kernel, axis=1).real / fs

    sm = ndimage.convolve1d(wvd, _gaussian_kernel(int(time_smoothing)), axis=0, mode="reflect")
    np.clip(sm, 0.0, None, out=sm)
    return TfImage(sm, time_axis, freq_axis)


# -- spectral power ---------------------------------------------------------


def _welch(x: np.ndarray, fs: float):
    nperseg = min(len(x), int(round(2 * fs)))
    return signal.welch(x, fs=fs, window="hann", nperseg=nperseg, scaling="density")


def band_power(w: Window, lo: float = LS_BAND[0], hi: float = LS_BAND[1]) -> BandPower:
    """Mean power spectral density over [lo, hi] from a Welch estimate."""
    return band_powers(w, [(lo, hi)])[0]


def band_powers(w: Window, bands: Sequence[tuple[float, float]]) -> list[BandPower]:
    """Like :func:`band_power` for several bands, sharing one spectrum."""
    for lo, hi in bands:
        if not (0 < lo < hi < w.fs / 2):
            raise ParameterError(f"invalid band [{lo}, {hi}] for fs={w.fs}")
    freqs, psd = _welch(np.asarray(w.samples, dtype=float), w.fs)
    df = freqs[1] - freqs[0]
    out = []
    for lo, hi in bands:
        mask = (freqs >= lo) & (freqs <= hi)
        total = float(psd[mask].sum() * df)
        out.append(BandPower(total / (hi - lo), (lo, hi), total))
    return out


# -- the 29 features ----------------------------------------------------------


def ar_features(w: Window, order: int = 5) -> tuple[np.ndarray, bool]:
    """Yule-Walker AR coefficients ``a`` with ``x[t] = sum_i a[i] x[t-i] + e``.

    Returns ``(coefficients, degenerate)``; a constant window has no usable
    autocorrelation and yields zeros with ``degenerate=True``.
    """
    x = np.asarray(w.samples, dtype=float)
    n = len(x)
    if n <= order:
        raise InsufficientDataError(f"AR({order}) needs more than {order} samples")
    x = x - x.mean()
    r = np.array([np.dot(x[: n - k], x[k:]) / (n - k) for k in range(order + 1)])
    if r[0] <= 1e-12 * max(1.0, float(np.max(np.abs(w.samples))) ** 2):
        return np.zeros(order), True
    try:
        a = solve_toeplitz(r[:order], r[1:])
    except np.linalg.LinAlgError:
        return np.zeros(order), True
    if not np.all(np.isfinite(a)):
        return np.zeros(order), True
    return a, False


def haar_dwt(x, levels: int = WAVELET_LEVELS) -> tuple[list[np.ndarray], np.ndarray]:
    """Orthonormal Haar decomposition. Returns ([d1, ..., dL], approximation).

    Odd-length stages are padded with a single zero, which keeps the
    transform energy preserving.
    """
    approx = np.asarray(x, dtype=float)
    details = []
    for _ in range(levels):
        if len(approx) % 2:
            approx = np.append(approx, 0.0)
        even, odd = approx[0::2], approx[1::2]
        details.append((even - odd) / np.sqrt(2.0))
        approx = (even + odd) / np.sqrt(2.0)
    return details, approx


def _zero_crossing_rate(c: np.ndarray) -> float:
    if len(c) < 2:
        return 0.0
    s = np.sign(c)
    return float(np.count_nonzero(s[1:] * s[:-1] < 0) / (len(c) - 1))


def wavelet_features(w: Window) -> np.ndarray:
    x = np.asarray(w.samples, dtype=float)
    if len(x) < 2 ** WAVELET_LEVELS:
        raise InsufficientDataError(f"need at least {2 ** WAVELET_LEVELS} samples")
    details, _ = haar_dwt(x)
    out = []
    for c in details:
        out += [np.mean(np.abs(c)), np.var(c), np.sum(c * c), _zero_crossing_rate(c)]
    return np.array(out)


def stft_features(w: Window) -> np.ndarray:
    """[total power, peak frequency, spectral centroid, spectral entropy (nats)]."""
    x = np.asarray(w.samples, dtype=float)
    if not np.any(x):
        return np.zeros(4)
    nperseg = min(len(x), int(round(w.fs)))
    freqs, _, sxx = signal.spectrogram(x, fs=w.fs, window="hann", nperseg=nperseg, scaling="density")
    p = sxx.mean(axis=1)
    df = freqs[1] - freqs[0]
    total = float(p.sum() * df)
    if total <= 0:
        return np.zeros(4)
    peak = float(freqs[np.argmax(p)])
    centroid = float(np.sum(freqs * p) / p.sum())
    q = p / p.sum()
    q = q[q > 0]
    entropy = float(-np.sum(q * np.log(q)))
    return np.array([total, peak, centroid, entropy])


def feature_vector(w: Window) -> FeatureVector:
    ar, degenerate = ar_features(w)
    values = np.concatenate([ar, wavelet_features(w), stft_features(w)])
    return FeatureVector(values, degenerate)


# -- fractal dimension --------------------------------------------------------

_FD_GRID = 2 ** 16


def box_counting_fd(buf: SampleBuffer | Sequence[float], scales: Sequence[float] = DEFAULT_FD_SCALES) -> float:
    """Box-counting dimension of the graph of a series.

    The graph is mapped onto the unit square (time to [0, 1], amplitude
    min..max to [0, 1]) and the amplitude quantised onto a 2**16 grid, which
    makes the result exactly invariant to affine rescaling of the input.
    Between samples the graph is taken as piecewise linear; each column of
    width eps contributes the fewest eps-boxes that cover its vertical
    extent. The slope of log N(eps) against log(1/eps) is clamped to [1, 2].
    """
    x = np.asarray(buf.samples if isinstance(buf, SampleBuffer) else buf, dtype=float)
    scales = np.asarray(sorted(set(float(s) for s in scales), reverse=True))
    if len(scales) < 2 or scales[0] / scales[-1] < 10.0 - 1e-12:
        raise ParameterError("need at least two box sizes spanning a decade")
    if np.any(scales <= 0) or np.any(scales > 1):
        raise ParameterError("box sizes must lie in (0, 1]")
    n = len(x)
    if n < 64:
        raise InsufficientDataError(f"need at least 64 samples, got {n}")
    lo, hi = x.min(), x.max()
    if hi == lo:
        return 1.0
    q = np.rint((x - lo) / (hi - lo) * _FD_GRID)
    t = np.arange(n) / (n - 1)

    counts = []
    for eps in scales:
        n_cols = max(1, int(round(1.0 / eps)))
        height = eps * _FD_GRID
        edges = np.arange(n_cols + 1) / n_cols
        at_edges = np.interp(edges, t, q)
        col = np.minimum((np.arange(n) * n_cols) // (n - 1), n_cols - 1)
        col_lo = np.minimum(at_edges[:-1], at_edges[1:])
        col_hi = np.maximum(at_edges[:-1], at_edges[1:])
        np.minimum.at(col_lo, col, q)
        np.maximum.at(col_hi, col, q)
        # fewest boxes of this height covering the column's vertical extent,
        # forgiving the one grid unit that amplitude rounding can add
        boxes = np.maximum(np.ceil((col_hi - col_lo - 1.0) / height - 1e-9), 1.0)
        counts.append(boxes.sum())
    slope = np.polyfit(np.log(1.0 / scales), np.log(counts), 1)[0]
    return float(np.clip(slope, 1.0, 2.0))

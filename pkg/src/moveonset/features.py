"""Time-domain and multitaper band-power features, xDAWN, feature scaling."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.signal.windows import dpss

from .dsp import Window, round_away

LOG_EPS = 1e-12

# DPSS configuration for the 500 ms PSD segment; NW = 2 keeps the
# concentration half-width at 4 Hz so a line stays inside its band
MT_NW = 2.0
MT_K = 3

CANONICAL_BANDS = ((0.5, 4.0), (4.0, 8.0), (8.0, 13.0), (13.0, 30.0), (30.0, 100.0))

TIME_OFFSETS_MS = (-300, -250, -200, -150, -100, -50, 0)


class FeatureError(Exception):
    pass


@dataclass(frozen=True)
class BandSet:
    bands: tuple[tuple[float, float], ...] = CANONICAL_BANDS

    def __post_init__(self):
        if self.bands != CANONICAL_BANDS:
            raise ValueError("band set is fixed to the five canonical EEG bands")

    def __len__(self):
        return len(self.bands)


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    layout: tuple[tuple[str, int], ...]  # (block name, length)

    def __post_init__(self):
        if sum(n for _, n in self.layout) != self.values.size:
            raise FeatureError("layout does not cover the value vector")


@dataclass(frozen=True)
class SpatialFilter:
    weights: np.ndarray  # K x channels
    scores: np.ndarray   # generalized eigenvalues, descending
    regularized: bool = False

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class Scaler:
    mean: np.ndarray
    std: np.ndarray
    flagged: tuple[int, ...] = field(default=())


def extract_time_features(window_lowpassed: Window) -> np.ndarray:
    """7 samples per channel, every 50 ms over the last 300 ms, channel-major."""
    fs = window_lowpassed.fs
    step = 0.05 * fs
    if abs(step - round(step)) > 1e-9:
        raise FeatureError(f"fs {fs} incompatible with the 50 ms sample grid")
    step = int(round(step))
    L = window_lowpassed.samples.shape[1]
    idx = [L - 1 + round_away(ms / 50) * step for ms in TIME_OFFSETS_MS]
    if idx[0] < 0:
        raise FeatureError("window shorter than 300 ms")
    return window_lowpassed.samples[:, idx].reshape(-1)


def multitaper_psd(x: np.ndarray, fs: float,
                   nw: float = MT_NW, k: int = MT_K) -> tuple[np.ndarray, np.ndarray]:
    """One-sided multitaper PSD of real signals along the last axis.

    Returns (freqs, psd) where sum(psd * df) approximates the signal variance.
    """
    n = x.shape[-1]
    tapers = dpss(n, nw, Kmax=k)  # (k, n), unit-energy rows
    spec = np.fft.rfft(tapers * x[..., None, :], axis=-1)
    psd = (np.abs(spec) ** 2).mean(axis=-2) / fs
    # fold negative frequencies into the one-sided estimate
    psd[..., 1:] *= 2.0
    if n % 2 == 0:
        psd[..., -1] /= 2.0
    freqs = np.fft.rfftfreq(n, d=1.0 / fs)
    return freqs, psd


def extract_psd_features(window_raw: Window,
                         bands: BandSet = BandSet()) -> np.ndarray:
    """log10 mean band power per channel from the last 500 ms, channel-major."""
    fs = window_raw.fs
    seg_len = round_away(0.5 * fs)
    seg = window_raw.samples[:, -seg_len:]
    freqs, psd = multitaper_psd(seg, fs)
    out = np.empty((seg.shape[0], len(bands)))
    for b, (low, high) in enumerate(bands.bands):
        mask = (freqs >= low) & (freqs < high)
        if not mask.any():
            raise FeatureError(f"band ({low}, {high}) Hz holds no frequency bin")
        out[:, b] = np.log10(psd[:, mask].mean(axis=1) + LOG_EPS)
    return out.reshape(-1)


def fit_xdawn(windows_filtered: list[Window], labels: np.ndarray,
              n_components: int = 4) -> SpatialFilter:
    """Spatial filters maximizing evoked-response power over total power.

    Solves the generalized eigenproblem of the covariance of the averaged
    positive-class window against the covariance of all training windows.
    """
    labels = np.asarray(labels)
    pos = [w.samples for w, y in zip(windows_filtered, labels) if y == 1]
    if len(pos) < 2:
        raise FeatureError("need at least 2 positive-class windows")
    evoked = np.mean(pos, axis=0)  # channels x L
    L = evoked.shape[1]
    sigma_evoked = evoked @ evoked.T / L

    stacked = np.concatenate([w.samples for w in windows_filtered], axis=1)
    sigma_all = stacked @ stacked.T / stacked.shape[1]

    regularized = False
    n_chan = sigma_all.shape[0]
    try:
        vals, vecs = linalg.eigh(sigma_evoked, sigma_all)
    except linalg.LinAlgError:
        regularized = True
        lam = 1e-6 * np.trace(sigma_all) / n_chan
        vals, vecs = linalg.eigh(sigma_evoked, sigma_all + lam * np.eye(n_chan))
    order = np.argsort(vals)[::-1][:n_components]
    # eigh returns B-orthonormal eigenvectors: w^T sigma_all w = 1 already
    weights = vecs[:, order].T
    return SpatialFilter(weights=weights, scores=vals[order],
                         regularized=regularized)


def apply_xdawn(sf: SpatialFilter, window: Window) -> Window:
    if window.samples.shape[0] != sf.weights.shape[1]:
        raise FeatureError(
            f"channel mismatch: filter expects {sf.weights.shape[1]}, "
            f"window has {window.samples.shape[0]}")
    return Window(samples=sf.weights @ window.samples, fs=window.fs,
                  end_time=window.end_time, length_s=window.length_s)


def assemble_features(time_block: np.ndarray, psd_block: np.ndarray) -> FeatureVector:
    time_block = np.asarray(time_block, dtype=np.float64).ravel()
    psd_block = np.asarray(psd_block, dtype=np.float64).ravel()
    if time_block.size == 0 or psd_block.size == 0:
        raise FeatureError("empty feature block")
    if not (np.isfinite(time_block).all() and np.isfinite(psd_block).all()):
        raise FeatureError("non-finite feature values")
    values = np.concatenate([time_block, psd_block])
    layout = (("time", time_block.size), ("psd", psd_block.size))
    return FeatureVector(values=values, layout=layout)


def fit_scaler(train_vectors: np.ndarray) -> Scaler:
    train_vectors = np.asarray(train_vectors, dtype=np.float64)
    if train_vectors.ndim != 2 or train_vectors.shape[0] < 2:
        raise FeatureError("need at least 2 training vectors")
    mean = train_vectors.mean(axis=0)
    std = train_vectors.std(axis=0)
    flagged = tuple(int(i) for i in np.flatnonzero(std == 0.0))
    std = np.where(std == 0.0, 1.0, std)
    return Scaler(mean=mean, std=std, flagged=flagged)


def apply_scaler(scaler: Scaler, v: np.ndarray) -> np.ndarray:
    return (np.asarray(v, dtype=np.float64) - scaler.mean) / scaler.std

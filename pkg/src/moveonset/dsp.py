"""Causal band-pass filtering, epoching, window slicing and standardization.

All time coordinates are seconds relative to movement onset (onset = 0).
Sample indices are derived with round-half-away-from-zero on t*fs so that
window boundaries come from integer arithmetic, never accumulated floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .data import Trial

WINDOW_LENGTH_S = 1.0


class DspError(Exception):
    pass


class InsufficientEpochSpan(DspError):
    pass


def round_away(x: float) -> int:
    """Round half away from zero."""
    return int(math.floor(x + 0.5)) if x >= 0 else int(math.ceil(x - 0.5))


@dataclass(frozen=True)
class FilterSpec:
    order: int
    low_hz: float
    high_hz: float
    fs_hz: float

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if not (0 < self.low_hz < self.high_hz < self.fs_hz / 2):
            raise ValueError(
                f"band edges must satisfy 0 < low < high < fs/2, got "
                f"({self.low_hz}, {self.high_hz}) at fs {self.fs_hz}")


@dataclass(frozen=True)
class FilterCoeffs:
    sos: np.ndarray  # (n_sections, 6) cascaded biquads
    spec: FilterSpec


@dataclass(frozen=True)
class Epoch:
    samples: np.ndarray  # channels x time
    fs: float
    t_start: float
    t_end: float

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True)
class Window:
    samples: np.ndarray  # channels x L
    fs: float
    end_time: float
    length_s: float = WINDOW_LENGTH_S


def design_bandpass(spec: FilterSpec) -> FilterCoeffs:
    sos = sps.butter(spec.order, [spec.low_hz, spec.high_hz],
                     btype="bandpass", fs=spec.fs_hz, output="sos")
    poles = sps.sos2zpk(sos)[1]
    assert np.all(np.abs(poles) < 1.0), "unstable filter design"
    return FilterCoeffs(sos=sos, spec=spec)


def magnitude_at(coeffs: FilterCoeffs, freq_hz: float) -> float:
    _, h = sps.sosfreqz(coeffs.sos, worN=[freq_hz], fs=coeffs.spec.fs_hz)
    return float(np.abs(h[0]))


def filter_forward(coeffs: FilterCoeffs, epoch: Epoch) -> Epoch:
    """Causal forward filtering per channel.

    The filter state is initialized to the step-response steady state for
    each channel's first sample, so an epoch cut out of a longer recording
    does not start with a spurious settling transient. The operation stays
    causal (a leading zero signal keeps zero state) and linear.
    """
    zi = sps.sosfilt_zi(coeffs.sos)  # (n_sections, 2) for unit step
    first = epoch.samples[:, 0]
    zi_per_channel = zi[:, None, :] * first[None, :, None]
    out, _ = sps.sosfilt(coeffs.sos, epoch.samples, axis=1, zi=zi_per_channel)
    return Epoch(samples=out, fs=epoch.fs, t_start=epoch.t_start, t_end=epoch.t_end)


def epoch_trial(trial: Trial, t_start: float, t_end: float) -> Epoch:
    if t_end <= t_start:
        raise DspError("empty epoch rejected (t_end <= t_start)")
    i0 = trial.onset_index + round_away(t_start * trial.fs)
    i1 = trial.onset_index + round_away(t_end * trial.fs)
    if i0 < 0 or i1 > trial.samples.shape[1]:
        raise InsufficientEpochSpan(
            f"trial {trial.trial_id} cannot cover [{t_start}, {t_end}] s")
    return Epoch(samples=trial.samples[:, i0:i1], fs=trial.fs,
                 t_start=t_start, t_end=t_end)


def slice_windows(epoch: Epoch, length_s: float = WINDOW_LENGTH_S,
                  stride_s: float = 0.05) -> list[Window]:
    if stride_s <= 0:
        raise DspError("stride must be positive")
    L = round_away(length_s * epoch.fs)
    step = round_away(stride_s * epoch.fs)
    if step < 1:
        raise DspError("stride below one sample")
    n = epoch.n_samples
    if n < L:
        raise DspError("epoch shorter than window length")
    windows = []
    for end in range(L, n + 1, step):
        end_time = epoch.t_start + end / epoch.fs
        windows.append(Window(samples=epoch.samples[:, end - L:end],
                              fs=epoch.fs, end_time=end_time, length_s=length_s))
    return windows


def window_at(epoch: Epoch, end_time: float,
              length_s: float = WINDOW_LENGTH_S) -> Window:
    L = round_away(length_s * epoch.fs)
    ie = round_away((end_time - epoch.t_start) * epoch.fs)
    i0 = ie - L
    if i0 < 0 or ie > epoch.n_samples:
        raise DspError(
            f"window ending at {end_time} s does not fit in epoch "
            f"[{epoch.t_start}, {epoch.t_end}]")
    return Window(samples=epoch.samples[:, i0:ie], fs=epoch.fs,
                  end_time=end_time, length_s=length_s)


def zscore_channels(window: Window) -> tuple[Window, tuple[int, ...]]:
    """Per-channel standardization with population std.

    Zero-variance channels are mapped to zeros; their indices are returned
    as the second element.
    """
    x = window.samples
    mean = x.mean(axis=1, keepdims=True)
    std = x.std(axis=1, keepdims=True)  # ddof=0
    flagged = tuple(int(i) for i in np.flatnonzero(std[:, 0] == 0.0))
    safe = np.where(std == 0.0, 1.0, std)
    out = (x - mean) / safe
    if flagged:
        out[list(flagged), :] = 0.0
    return Window(samples=out, fs=window.fs, end_time=window.end_time,
                  length_s=window.length_s), flagged

"""Per-fold training of the four base models and window-level inference.

Binds each classifier to its preprocessing path:

* SVM:    0.3-5 Hz filtered time samples through xDAWN (4 components) +
          multitaper band power on the raw window, feature-standardized
* MLP:    same features without xDAWN (all 16 channels)
* EEGNet: 0.3-40 Hz filtered 16x500 window, standardized inside the model
* Dummy:  untrained MLP applied to the MLP features
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from . import nets
from .data import Trial
from .dsp import Epoch, FilterSpec, design_bandpass, epoch_trial, filter_forward, window_at
from .features import (SpatialFilter, Scaler, apply_scaler, apply_xdawn,
                       assemble_features, extract_psd_features,
                       extract_time_features, fit_scaler, fit_xdawn)
from .svm import SvmModel, train_svm

NEG_WINDOW_ENDS = (-3.0, -2.0, -1.5, -1.0, -0.8, -0.6)
POS_WINDOW_ENDS = (0.04, 0.06, 0.08, 0.1, 0.12, 0.14)
TRAIN_WINDOW_ENDS = NEG_WINDOW_ENDS + POS_WINDOW_ENDS

LF_BAND = (0.3, 5.0)
WIDE_BAND = (0.3, 40.0)
FILTER_ORDER = 2
XDAWN_COMPONENTS = 4

BASE_KINDS = ("D", "S", "M", "E")


@dataclass(frozen=True)
class TrialViews:
    """Per-trial cached epochs: raw, MRCP-band filtered, wide-band filtered."""
    trial: Trial
    raw: Epoch
    lowfreq: Epoch
    wideband: Epoch


def prepare_trial(trial: Trial) -> TrialViews:
    raw = epoch_trial(trial, -5.0, 0.2)
    lf = design_bandpass(FilterSpec(FILTER_ORDER, *LF_BAND, trial.fs))
    wide = design_bandpass(FilterSpec(FILTER_ORDER, *WIDE_BAND, trial.fs))
    return TrialViews(trial=trial, raw=raw,
                      lowfreq=filter_forward(lf, raw),
                      wideband=filter_forward(wide, raw))


def _window_labels() -> np.ndarray:
    return np.array([0] * len(NEG_WINDOW_ENDS) + [1] * len(POS_WINDOW_ENDS))


def mlp_feature_vector(views: TrialViews, end_time: float) -> np.ndarray:
    time_block = extract_time_features(window_at(views.lowfreq, end_time))
    psd_block = extract_psd_features(window_at(views.raw, end_time))
    return assemble_features(time_block, psd_block).values


def svm_feature_vector(views: TrialViews, end_time: float,
                       sf: SpatialFilter) -> np.ndarray:
    virtual = apply_xdawn(sf, window_at(views.lowfreq, end_time))
    time_block = extract_time_features(virtual)
    psd_block = extract_psd_features(window_at(views.raw, end_time))
    return assemble_features(time_block, psd_block).values


def eegnet_input(views: TrialViews, end_time: float) -> np.ndarray:
    return window_at(views.wideband, end_time).samples


def _weights_fingerprint(arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a, dtype=np.float64).tobytes())
    return h.hexdigest()[:16]


class FoldModels:
    """All base models of one cross-validation fold, trained once and cached."""

    def __init__(self, xdawn: SpatialFilter, svm_scaler: Scaler, svm: SvmModel,
                 mlp_scaler: Scaler, mlp: nets.MlpNet, eegnet: nets.EegnetNet,
                 dummy: nets.MlpNet):
        self.xdawn = xdawn
        self.svm_scaler = svm_scaler
        self.svm = svm
        self.mlp_scaler = mlp_scaler
        self.mlp = mlp
        self.eegnet = eegnet
        self.dummy = dummy

    @classmethod
    def train(cls, train_trials: list[Trial], val_trials: list[Trial],
              seed: int = 0, cfg: nets.TrainConfig | None = None) -> "FoldModels":
        if cfg is None:
            cfg = nets.TrainConfig(seed=seed)
        train_views = [prepare_trial(t) for t in train_trials]
        val_views = [prepare_trial(t) for t in val_trials]
        labels_one = _window_labels()

        lf_windows = [window_at(v.lowfreq, t)
                      for v in train_views for t in TRAIN_WINDOW_ENDS]
        labels = np.tile(labels_one, len(train_views))
        xdawn = fit_xdawn(lf_windows, labels, XDAWN_COMPONENTS)

        svm_x = np.array([svm_feature_vector(v, t, xdawn)
                          for v in train_views for t in TRAIN_WINDOW_ENDS])
        mlp_x = np.array([mlp_feature_vector(v, t)
                          for v in train_views for t in TRAIN_WINDOW_ENDS])
        mlp_val_x = np.array([mlp_feature_vector(v, t)
                              for v in val_views for t in TRAIN_WINDOW_ENDS])
        val_labels = np.tile(labels_one, len(val_views))

        svm_scaler = fit_scaler(svm_x)
        svm = train_svm(apply_scaler(svm_scaler, svm_x), labels, seed=seed)

        mlp_scaler = fit_scaler(mlp_x)
        mlp = nets.train_mlp(apply_scaler(mlp_scaler, mlp_x), labels,
                             apply_scaler(mlp_scaler, mlp_val_x), val_labels, cfg)

        eeg_x = np.array([eegnet_input(v, t)
                          for v in train_views for t in TRAIN_WINDOW_ENDS])
        eeg_val_x = np.array([eegnet_input(v, t)
                              for v in val_views for t in TRAIN_WINDOW_ENDS])
        eegnet = nets.train_eegnet(eeg_x, labels, eeg_val_x, val_labels, cfg)

        dummy = nets.make_dummy(mlp_x.shape[1], seed=seed)
        return cls(xdawn, svm_scaler, svm, mlp_scaler, mlp, eegnet, dummy)

    def window_probs(self, views: TrialViews,
                     end_times) -> dict[str, np.ndarray]:
        """Positive-class probability per base model for each window end."""
        end_times = list(end_times)
        svm_x = apply_scaler(self.svm_scaler, np.array(
            [svm_feature_vector(views, t, self.xdawn) for t in end_times]))
        mlp_x = apply_scaler(self.mlp_scaler, np.array(
            [mlp_feature_vector(views, t) for t in end_times]))
        eeg_x = np.array([eegnet_input(views, t) for t in end_times])
        return {
            "D": nets.predict_proba(self.dummy, mlp_x),
            "S": self.svm.predict_proba(svm_x),
            "M": nets.predict_proba(self.mlp, mlp_x),
            "E": nets.predict_proba(self.eegnet, eeg_x),
        }

    def fingerprint(self, kind: str) -> str:
        if kind == "S":
            return _weights_fingerprint([self.svm.weights, [self.svm.bias]])
        net = {"D": self.dummy, "M": self.mlp, "E": self.eegnet}[kind]
        return _weights_fingerprint(
            [p.detach().numpy() for p in net.parameters()])

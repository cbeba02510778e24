"""Dataset model, disk I/O and synthetic trial generation.

On-disk layout: one ``manifest.json`` at the dataset root plus one raw
little-endian float32 file per trial (channels-major, i.e. channel 0's
samples first).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal as sps

CANONICAL_CHANNELS = (
    "FZ", "CZ", "CPZ", "PZ", "P1", "CP1", "C1", "FC1",
    "F1", "F3", "FC3", "C3", "CP3", "CP5", "C5", "FC5",
)

# channels carrying the synthetic movement signature, with mixing weights
_CENTRAL_WEIGHTS = {
    "CZ": 1.0, "C1": 1.0, "C3": 1.0,
    "FC1": 0.5, "CP1": 0.5, "FC3": 0.5, "CP3": 0.5,
}

EPOCH_START_S = -5.0
EPOCH_END_S = 0.2


class DatasetError(Exception):
    """Base class for dataset loading/validation failures."""


class ManifestError(DatasetError):
    pass


class UnknownChannel(DatasetError):
    pass


class LengthMismatch(DatasetError):
    pass


class NonFiniteSamples(DatasetError):
    pass


@dataclass(frozen=True)
class ChannelSet:
    names: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise ValueError("duplicate channel labels")

    @property
    def count(self) -> int:
        return len(self.names)

    @classmethod
    def canonical(cls) -> "ChannelSet":
        return cls(CANONICAL_CHANNELS)

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise UnknownChannel(f"channel {name!r} not in set") from None

    def subset_indices(self, wanted: "ChannelSet") -> list[int]:
        return [self.index_of(n) for n in wanted.names]


@dataclass(frozen=True)
class Trial:
    samples: np.ndarray  # channels x time, microvolts
    fs: float
    onset_index: int
    subject_id: str
    set_id: int
    trial_id: str


@dataclass(frozen=True)
class SubjectRecord:
    subject_id: str
    sets: dict[int, list[Trial]]  # set id (1..3) -> trials


@dataclass(frozen=True)
class Dataset:
    subjects: list[SubjectRecord]
    channel_set: ChannelSet
    fs: float

    def all_trials(self):
        for subj in self.subjects:
            for trials in subj.sets.values():
                yield from trials


@dataclass(frozen=True)
class SynthConfig:
    n_trials: int = 120
    fs: float = 500.0
    noise_amplitude: float = 10.0       # uV RMS of the 1/f background
    mrcp_amplitude: float = -8.0        # uV, ramp target at onset
    mrcp_onset_lead: float = 1.6        # s before onset the ramp starts
    erd_band: tuple[float, float] = (8.0, 13.0)
    erd_attenuation: float = 0.10       # fraction of band power kept post-lead
    seed: int = 0

    def __post_init__(self):
        if self.fs <= 0:
            raise ValueError("fs must be positive")
        if not (0 < self.erd_attenuation <= 1):
            raise ValueError("erd_attenuation must be in (0, 1]")
        if self.mrcp_onset_lead <= 0:
            raise ValueError("mrcp_onset_lead must be positive")
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")


@dataclass
class Violation:
    trial_id: str
    kind: str
    detail: str = ""


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def _min_pre_samples(fs: float) -> int:
    return int(round(-EPOCH_START_S * fs))


def _min_post_samples(fs: float) -> int:
    return int(round(EPOCH_END_S * fs))


def validate_dataset(d: Dataset) -> ValidationReport:
    report = ValidationReport()
    for trial in d.all_trials():
        n = trial.samples.shape[1]
        if trial.samples.shape[0] != d.channel_set.count:
            report.violations.append(
                Violation(trial.trial_id, "ChannelCountMismatch",
                          f"{trial.samples.shape[0]} != {d.channel_set.count}"))
        if not np.isfinite(trial.samples).all():
            report.violations.append(Violation(trial.trial_id, "NonFinite"))
        if not (0 <= trial.onset_index < n):
            report.violations.append(
                Violation(trial.trial_id, "OnsetOutOfRange", str(trial.onset_index)))
        else:
            if trial.onset_index < _min_pre_samples(trial.fs) or \
                    n - trial.onset_index < _min_post_samples(trial.fs):
                report.violations.append(
                    Violation(trial.trial_id, "InsufficientEpochSpan"))
        if trial.fs != d.fs:
            report.violations.append(
                Violation(trial.trial_id, "SamplingRateMismatch",
                          f"{trial.fs} != {d.fs}"))
    return report


def load_dataset(root_path: str | Path) -> Dataset:
    root = Path(root_path)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise ManifestError(f"missing manifest at {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"corrupt manifest: {exc}") from exc

    try:
        fs = float(manifest["fs_hz"])
        names = tuple(str(n) for n in manifest["channel_names"])
        subject_entries = manifest["subjects"]
    except (KeyError, TypeError) as exc:
        raise ManifestError(f"manifest missing field: {exc}") from exc

    channel_set = ChannelSet(names)
    n_chan = channel_set.count

    subjects = []
    for subj in subject_entries:
        sets: dict[int, list[Trial]] = {}
        for set_entry in subj["sets"]:
            set_id = int(set_entry["id"])
            trials = []
            for t in set_entry["trials"]:
                n_samples = int(t["n_samples"])
                path = root / t["file"]
                raw = np.fromfile(path, dtype="<f4")
                if raw.size != n_chan * n_samples:
                    raise LengthMismatch(
                        f"trial {t['id']}: file holds {raw.size} values, "
                        f"manifest declares {n_chan * n_samples}")
                samples = raw.reshape(n_chan, n_samples).astype(np.float64)
                if not np.isfinite(samples).all():
                    raise NonFiniteSamples(f"trial {t['id']} contains NaN/Inf")
                trials.append(Trial(
                    samples=samples, fs=fs,
                    onset_index=int(t["onset_index"]),
                    subject_id=str(subj["id"]), set_id=set_id,
                    trial_id=str(t["id"])))
            sets[set_id] = trials
        subjects.append(SubjectRecord(subject_id=str(subj["id"]), sets=sets))
    return Dataset(subjects=subjects, channel_set=channel_set, fs=fs)


def write_dataset(d: Dataset, root_path: str | Path) -> None:
    root = Path(root_path)
    root.mkdir(parents=True, exist_ok=True)
    subjects_json = []
    for subj in d.subjects:
        sets_json = []
        for set_id in sorted(subj.sets):
            trials_json = []
            for trial in subj.sets[set_id]:
                fname = f"{subj.subject_id}_s{set_id}_{trial.trial_id}.f32"
                trial.samples.astype("<f4").tofile(root / fname)
                trials_json.append({
                    "id": trial.trial_id,
                    "file": fname,
                    "n_samples": int(trial.samples.shape[1]),
                    "onset_index": int(trial.onset_index),
                })
            sets_json.append({"id": set_id, "trials": trials_json})
        subjects_json.append({"id": subj.subject_id, "sets": sets_json})
    manifest = {
        "fs_hz": d.fs,
        "channel_names": list(d.channel_set.names),
        "subjects": subjects_json,
    }
    (root / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _pink_noise(rng: np.random.Generator, n: int, fs: float, rms: float) -> np.ndarray:
    """1/f-shaped Gaussian noise, flat below 2 Hz to bound slow wander."""
    white = rng.standard_normal(n)
    spec = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, d=1.0 / fs)
    shape = 1.0 / np.sqrt(np.maximum(freqs, 2.0))
    shape[0] = 0.0  # no DC offset
    shaped = np.fft.irfft(spec * shape, n=n)
    scale = rms / max(np.sqrt(np.mean(shaped ** 2)), 1e-30)
    return shaped * scale


def generate_synthetic(config: SynthConfig) -> Dataset:
    """Deterministic synthetic dataset: 1/f noise + MRCP ramp + ERD dropout.

    One subject, trials distributed round-robin over three measurement sets.
    """
    rng = np.random.default_rng(config.seed)
    fs = config.fs
    channel_set = ChannelSet.canonical()
    n_chan = channel_set.count

    pre_s, post_s = 5.1, 0.4
    n_samples = int(round((pre_s + post_s) * fs))
    onset_index = int(round(pre_s * fs))

    weights = np.zeros(n_chan)
    for name, w in _CENTRAL_WEIGHTS.items():
        weights[channel_set.index_of(name)] = w

    # MRCP template: linear ramp to mrcp_amplitude, held after onset
    t_rel = (np.arange(n_samples) - onset_index) / fs
    ramp = np.clip((t_rel + config.mrcp_onset_lead) / config.mrcp_onset_lead, 0.0, 1.0)
    mrcp = ramp * config.mrcp_amplitude

    # ERD amplitude envelope: unity at rest, attenuated from onset - lead on,
    # with a 0.2 s linear transition
    att = math.sqrt(config.erd_attenuation)
    trans = np.clip((t_rel + config.mrcp_onset_lead) / 0.2, 0.0, 1.0)
    erd_env = 1.0 - (1.0 - att) * trans

    sos = sps.butter(4, config.erd_band, btype="bandpass", fs=fs, output="sos")
    erd_rms = config.noise_amplitude

    sets: dict[int, list[Trial]] = {1: [], 2: [], 3: []}
    for i in range(config.n_trials):
        samples = np.empty((n_chan, n_samples))
        for c in range(n_chan):
            samples[c] = _pink_noise(rng, n_samples, fs, config.noise_amplitude)
        osc = sps.sosfilt(sos, rng.standard_normal(n_samples))
        osc *= erd_rms / max(np.sqrt(np.mean(osc ** 2)), 1e-30)
        samples += weights[:, None] * (mrcp + erd_env * osc)[None, :]

        set_id = (i % 3) + 1
        trial = Trial(samples=samples, fs=fs, onset_index=onset_index,
                      subject_id="synth0", set_id=set_id, trial_id=f"t{i:03d}")
        sets[set_id].append(trial)

    subject = SubjectRecord(subject_id="synth0", sets=sets)
    return Dataset(subjects=[subject], channel_set=channel_set, fs=fs)

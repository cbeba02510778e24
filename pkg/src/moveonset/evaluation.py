"""Cross-validation folds, offline accuracy, pseudo-online replay, run matrix."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import SubjectRecord, Dataset, Trial
from .detector import DetectionEvent, DetectorState
from .dsp import slice_windows
from .ensemble import METHOD_MEMBERS, MOVEMENT, decide, fuse
from .nets import TrainConfig
from .pipeline import FoldModels, TrialViews, prepare_trial, TRAIN_WINDOW_ENDS, _window_labels

# trial outcome regions, seconds relative to movement onset
TARGET_LO = -0.75   # closed: a detection at exactly -0.75 is Correct
TARGET_HI = 0.15
DEADTIME_END = -4.0  # deadtime is [-5, -4); a detection at -4.0 counts Early

PSEUDO_STRIDE_S = 0.05

CORRECT = "Correct"
EARLY = "Early"
NO_DETECTION = "NoDetection"


class EvalError(Exception):
    pass


@dataclass(frozen=True)
class CvFold:
    fold_id: int                # id of the held-out measurement set
    train_trials: tuple[Trial, ...]
    val_trials: tuple[Trial, ...]
    test_trials: tuple[Trial, ...]
    seed: int


@dataclass(frozen=True)
class TrialOutcome:
    kind: str
    detection_time: float | None = None


@dataclass(frozen=True)
class MetricsReport:
    outcomes: tuple[TrialOutcome, ...]
    n_correct: int
    n_early: int
    n_none: int

    @property
    def n_trials(self) -> int:
        return len(self.outcomes)

    @property
    def twp(self) -> float:
        return self.n_correct / self.n_trials

    @property
    def edr(self) -> float:
        return self.n_early / self.n_trials

    @property
    def ndr(self) -> float:
        return self.n_none / self.n_trials


def make_folds(subject: SubjectRecord, seed: int = 0) -> list[CvFold]:
    """Leave-one-set-out folds; held-out set split half/half into val/test."""
    set_ids = sorted(subject.sets)
    folds = []
    for held in set_ids:
        held_trials = subject.sets[held]
        if len(held_trials) < 2:
            raise EvalError(f"set {held} has fewer than 2 trials")
        train = tuple(t for sid in set_ids if sid != held
                      for t in subject.sets[sid])
        rng = np.random.default_rng([seed, held])
        order = rng.permutation(len(held_trials))
        half = len(held_trials) // 2
        val = tuple(held_trials[i] for i in sorted(order[:half]))
        test = tuple(held_trials[i] for i in sorted(order[half:]))
        folds.append(CvFold(fold_id=held, train_trials=train,
                            val_trials=val, test_trials=test, seed=seed))
    return folds


def classify_outcome(event: DetectionEvent | None) -> TrialOutcome:
    if event is None:
        return TrialOutcome(NO_DETECTION)
    t = event.time
    if TARGET_LO <= t <= TARGET_HI:
        return TrialOutcome(CORRECT, t)
    if DEADTIME_END <= t < TARGET_LO:
        return TrialOutcome(EARLY, t)
    # only the 0.20 window can land here: past the target period
    return TrialOutcome(NO_DETECTION, t)


def pseudo_grid_ends(views: TrialViews) -> list[float]:
    windows = slice_windows(views.raw, stride_s=PSEUDO_STRIDE_S)
    return [w.end_time for w in windows]


def _method_probs(base_probs: dict[str, np.ndarray], method: str) -> np.ndarray:
    members = METHOD_MEMBERS[method]
    return np.vstack([base_probs[k] for k in members])


def _fused_labels(base_probs: dict[str, np.ndarray], method: str) -> list[str]:
    member_matrix = _method_probs(base_probs, method)
    n = member_matrix.shape[0]
    return [decide(fuse(member_matrix[:, j]), n)
            for j in range(member_matrix.shape[1])]


def offline_eval_from_probs(per_trial_probs: list[dict[str, np.ndarray]],
                            method: str) -> float:
    """Accuracy over the 12 training-position windows of each test trial."""
    truth = _window_labels()
    correct = 0
    total = 0
    for base_probs in per_trial_probs:
        labels = _fused_labels(base_probs, method)
        assert len(labels) == len(TRAIN_WINDOW_ENDS)
        for lab, y in zip(labels, truth):
            correct += int((lab == MOVEMENT) == bool(y))
            total += 1
    return correct / total


def pseudo_online_eval_from_probs(per_trial_probs: list[dict[str, np.ndarray]],
                                  end_times: list[float], method: str,
                                  n_windows: int) -> MetricsReport:
    outcomes = []
    for base_probs in per_trial_probs:
        labels = _fused_labels(base_probs, method)
        assert len(labels) == len(end_times)
        state = DetectorState(n_windows)
        event = None
        for lab, t in zip(labels, end_times):
            event = state.push(lab, t)
            if event is not None:
                break
        outcomes.append(classify_outcome(event))
    kinds = [o.kind for o in outcomes]
    return MetricsReport(outcomes=tuple(outcomes),
                         n_correct=kinds.count(CORRECT),
                         n_early=kinds.count(EARLY),
                         n_none=kinds.count(NO_DETECTION))


def offline_eval(models: FoldModels, fold: CvFold, method: str) -> float:
    probs = [models.window_probs(prepare_trial(t), TRAIN_WINDOW_ENDS)
             for t in fold.test_trials]
    return offline_eval_from_probs(probs, method)


def pseudo_online_eval(models: FoldModels, fold: CvFold, method: str,
                       n_windows: int) -> MetricsReport:
    views = [prepare_trial(t) for t in fold.test_trials]
    ends = pseudo_grid_ends(views[0])
    probs = [models.window_probs(v, ends) for v in views]
    return pseudo_online_eval_from_probs(probs, ends, method, n_windows)


@dataclass
class RunResult:
    results: list[dict] = field(default_factory=list)   # results.csv rows
    outcomes: list[dict] = field(default_factory=list)  # outcomes.csv rows
    fingerprints: dict = field(default_factory=dict)    # (subject, fold, kind)


def evaluate_fold(models: FoldModels, fold: CvFold, subject_id: str,
                  methods, n_windows_list, result: RunResult) -> None:
    test_views = [prepare_trial(t) for t in fold.test_trials]
    probs12 = [models.window_probs(v, TRAIN_WINDOW_ENDS) for v in test_views]
    ends = pseudo_grid_ends(test_views[0])
    probs_grid = [models.window_probs(v, ends) for v in test_views]

    for kind in ("D", "S", "M", "E"):
        result.fingerprints[(subject_id, fold.fold_id, kind)] = \
            models.fingerprint(kind)

    for method in methods:
        acc = offline_eval_from_probs(probs12, method)
        result.results.append({
            "subject": subject_id, "fold": fold.fold_id, "method": method,
            "n_windows": "", "metric": "accuracy", "value": acc})
        for n in n_windows_list:
            report = pseudo_online_eval_from_probs(probs_grid, ends, method, n)
            for metric, value in (("twp", report.twp), ("edr", report.edr),
                                  ("ndr", report.ndr)):
                result.results.append({
                    "subject": subject_id, "fold": fold.fold_id,
                    "method": method, "n_windows": n,
                    "metric": metric, "value": value})
            for trial, outcome in zip(fold.test_trials, report.outcomes):
                result.outcomes.append({
                    "subject": subject_id, "fold": fold.fold_id,
                    "method": method, "n_windows": n,
                    "trial_id": trial.trial_id, "outcome": outcome.kind,
                    "detection_time": ""
                    if outcome.detection_time is None
                    else outcome.detection_time})


def run_matrix(dataset: Dataset, methods=tuple(METHOD_MEMBERS),
               n_windows_list=(1, 2, 3), seed: int = 0,
               cfg: TrainConfig | None = None) -> RunResult:
    """Train each base model once per (subject, fold) and score all methods."""
    for m in methods:
        if m not in METHOD_MEMBERS:
            raise EvalError(f"unknown method {m!r}")
    result = RunResult()
    for subject in dataset.subjects:
        for fold in make_folds(subject, seed=seed):
            models = FoldModels.train(list(fold.train_trials),
                                      list(fold.val_trials), seed=seed, cfg=cfg)
            evaluate_fold(models, fold, subject.subject_id, methods,
                          n_windows_list, result)
    return result

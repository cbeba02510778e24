"""Linear SVM with grid-searched complexity and logistic margin calibration.

The solver is deterministic full-batch subgradient descent with Armijo
backtracking on the objective

    J(w, b) = 0.5 * (1/C) * ||w||^2 + mean_i max(0, 1 - y_i (w.x_i + b))

so the objective is non-increasing over outer iterations by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_C_GRID = (1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0)


class SvmError(Exception):
    pass


class DegenerateClasses(SvmError):
    pass


@dataclass(frozen=True)
class SvmModel:
    weights: np.ndarray
    bias: float
    calib_a: float   # probability = sigmoid(calib_a * margin + calib_b)
    calib_b: float
    c_value: float
    grid_scores: dict[float, float]

    def decision(self, X: np.ndarray) -> np.ndarray:
        return np.atleast_2d(X) @ self.weights + self.bias

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        z = self.calib_a * self.decision(X) + self.calib_b
        return 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))


def hinge_objective(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray,
                    c_value: float) -> float:
    margins = 1.0 - y * (X @ w + b)
    return 0.5 / c_value * float(w @ w) + float(np.maximum(margins, 0.0).mean())


def fit_linear_svm(X: np.ndarray, y_pm: np.ndarray, c_value: float,
                   max_iter: int = 10_000, tol: float = 1e-6,
                   trace: list | None = None) -> tuple[np.ndarray, float]:
    """Minimize the hinge + L2 objective; y_pm in {-1, +1}."""
    n, d = X.shape
    w = np.zeros(d)
    b = 0.0
    lam = 1.0 / c_value
    lr = 1.0 / (lam + 1.0)
    obj = hinge_objective(w, b, X, y_pm, c_value)
    stall = 0
    for _ in range(max_iter):
        margins = 1.0 - y_pm * (X @ w + b)
        active = margins > 0
        gw = lam * w - (y_pm[active] @ X[active]) / n
        gb = -float(y_pm[active].sum()) / n
        gnorm2 = float(gw @ gw) + gb * gb
        if gnorm2 < 1e-18:
            break
        # Armijo backtracking keeps the objective non-increasing
        step = lr
        while step > 1e-16:
            new_obj = hinge_objective(w - step * gw, b - step * gb, X, y_pm, c_value)
            if new_obj <= obj - 1e-4 * step * gnorm2:
                break
            step *= 0.5
        else:
            break
        w = w - step * gw
        b = b - step * gb
        if trace is not None:
            trace.append(new_obj)
        lr = min(step * 2.0, 1e6)
        if obj - new_obj < tol * max(1.0, abs(obj)):
            stall += 1
            if stall >= 5:
                obj = new_obj
                break
        else:
            stall = 0
        obj = new_obj
    return w, b


def _stratified_folds(y: np.ndarray, n_folds: int,
                      rng: np.random.Generator) -> list[np.ndarray]:
    folds: list[list[int]] = [[] for _ in range(n_folds)]
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        rng.shuffle(idx)
        for i, j in enumerate(idx):
            folds[i % n_folds].append(int(j))
    return [np.array(sorted(f)) for f in folds]


def _fit_calibration(margins: np.ndarray, y01: np.ndarray,
                     n_iter: int = 100) -> float:
    """Fit a in p = sigmoid(a * margin) by Newton on the BCE (B fixed to 0)."""
    a = 1.0
    for _ in range(n_iter):
        z = np.clip(a * margins, -500, 500)
        p = 1.0 / (1.0 + np.exp(-z))
        grad = float(((p - y01) * margins).mean())
        hess = float((p * (1 - p) * margins ** 2).mean())
        if hess < 1e-12:
            break
        step = grad / hess
        a_new = a - step
        a = min(max(a_new, 1e-4), 1e4)
        if abs(step) < 1e-10:
            break
    return a


def train_svm(train_features: np.ndarray, train_labels: np.ndarray,
              grid: tuple[float, ...] = DEFAULT_C_GRID, folds: int = 5,
              seed: int = 0) -> SvmModel:
    X = np.asarray(train_features, dtype=np.float64)
    y = np.asarray(train_labels, dtype=np.int64)
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) < 2:
        raise DegenerateClasses("training labels contain a single class")
    if counts.min() < folds:
        raise SvmError(f"need at least {folds} samples per class")
    y_pm = np.where(y == 1, 1.0, -1.0)

    rng = np.random.default_rng(seed)
    fold_idx = _stratified_folds(y, folds, rng)
    scores: dict[float, float] = {}
    best_c, best_score = None, -np.inf
    for c_value in grid:
        accs = []
        for k in range(folds):
            test = fold_idx[k]
            train = np.concatenate([fold_idx[j] for j in range(folds) if j != k])
            w, b = fit_linear_svm(X[train], y_pm[train], c_value)
            pred = np.sign(X[test] @ w + b)
            pred[pred == 0] = -1.0
            accs.append(float((pred == y_pm[test]).mean()))
        scores[c_value] = float(np.mean(accs))
        if scores[c_value] > best_score:  # ties keep the smaller C
            best_score = scores[c_value]
            best_c = c_value

    w, b = fit_linear_svm(X, y_pm, best_c)
    # calibrate on out-of-fold margins; training margins of a separable fit
    # are biased away from zero and saturate the sigmoid
    oof_margins = np.empty(len(y_pm))
    for k in range(folds):
        test = fold_idx[k]
        train = np.concatenate([fold_idx[j] for j in range(folds) if j != k])
        wk, bk = fit_linear_svm(X[train], y_pm[train], best_c)
        oof_margins[test] = X[test] @ wk + bk
    a = _fit_calibration(oof_margins, (y_pm > 0).astype(np.float64))
    return SvmModel(weights=w, bias=float(b), calib_a=a, calib_b=0.0,
                    c_value=best_c, grid_scores=scores)

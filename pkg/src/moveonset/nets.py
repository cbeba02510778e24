"""Neural classifiers: MLP, EEGNet-style CNN, untrained dummy, and their trainer."""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

MLP_HIDDEN = (32, 20, 12)
LEAKY_SLOPE = 0.5
DROPOUT = 0.5

EEGNET_TEMPORAL_KERNEL = 50
EEGNET_F1 = 8
EEGNET_D = 2
EEGNET_F2 = 16
EEGNET_SEP_KERNEL = 16


class TrainingError(Exception):
    pass


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 200
    batch_size: int = 16
    patience: int = 70
    restore_best: bool = True
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.patience >= self.max_epochs:
            raise ValueError("patience must be below max_epochs")


class FeatureNorm(nn.Module):
    """Trainable per-feature affine normalization (init: identity)."""

    def __init__(self, n_features: int):
        super().__init__()
        self.scale = nn.Parameter(torch.ones(n_features))
        self.shift = nn.Parameter(torch.zeros(n_features))

    def forward(self, x):
        return x * self.scale + self.shift


class ChannelStandardize(nn.Module):
    """Channel-wise z-scoring over time with a trainable per-channel affine."""

    def __init__(self, n_channels: int):
        super().__init__()
        self.scale = nn.Parameter(torch.ones(n_channels))
        self.shift = nn.Parameter(torch.zeros(n_channels))

    def forward(self, x):  # (batch, 1, channels, time)
        mean = x.mean(dim=-1, keepdim=True)
        std = x.std(dim=-1, keepdim=True, unbiased=False)
        z = (x - mean) / (std + 1e-8)
        return z * self.scale.view(1, 1, -1, 1) + self.shift.view(1, 1, -1, 1)


class MlpNet(nn.Module):
    """Dense 32-20-12 with leaky ReLU (0.5), batch norm, dropout 0.5.

    Emits the pre-sigmoid logit; use predict_proba for probabilities.
    """

    def __init__(self, n_features: int):
        super().__init__()
        self.n_features = n_features
        self.norm = FeatureNorm(n_features)
        layers = []
        prev = n_features
        for width in MLP_HIDDEN:
            layers += [
                nn.Linear(prev, width),
                nn.BatchNorm1d(width),
                nn.LeakyReLU(LEAKY_SLOPE),
                nn.Dropout(DROPOUT),
            ]
            prev = width
        self.hidden = nn.Sequential(*layers)
        self.out = nn.Linear(prev, 1)

    def forward(self, x):
        return self.out(self.hidden(self.norm(x))).squeeze(-1)


class EegnetNet(nn.Module):
    """EEGNet-style CNN with a built-in channel standardization layer."""

    def __init__(self, n_channels: int = 16, n_samples: int = 500):
        super().__init__()
        self.n_channels = n_channels
        self.n_samples = n_samples
        self.standardize = ChannelStandardize(n_channels)
        pad = EEGNET_TEMPORAL_KERNEL // 2
        self.temporal = nn.Sequential(
            nn.Conv2d(1, EEGNET_F1, (1, EEGNET_TEMPORAL_KERNEL),
                      padding=(0, pad), bias=False),
            nn.BatchNorm2d(EEGNET_F1),
        )
        self.spatial = nn.Sequential(
            nn.Conv2d(EEGNET_F1, EEGNET_F1 * EEGNET_D, (n_channels, 1),
                      groups=EEGNET_F1, bias=False),
            nn.BatchNorm2d(EEGNET_F1 * EEGNET_D),
            nn.ELU(),
            nn.AvgPool2d((1, 4)),
            nn.Dropout(DROPOUT),
        )
        self.separable = nn.Sequential(
            nn.Conv2d(EEGNET_F1 * EEGNET_D, EEGNET_F1 * EEGNET_D,
                      (1, EEGNET_SEP_KERNEL), padding=(0, EEGNET_SEP_KERNEL // 2),
                      groups=EEGNET_F1 * EEGNET_D, bias=False),
            nn.Conv2d(EEGNET_F1 * EEGNET_D, EEGNET_F2, (1, 1), bias=False),
            nn.BatchNorm2d(EEGNET_F2),
            nn.ELU(),
            nn.AvgPool2d((1, 8)),
            nn.Dropout(DROPOUT),
        )
        with torch.no_grad():
            probe = torch.zeros(1, 1, n_channels, n_samples)
            n_flat = self._conv_stack(probe).shape[-1]
        self.out = nn.Linear(n_flat, 1)

    def _conv_stack(self, x):
        x = self.standardize(x)
        x = self.temporal(x)
        x = self.spatial(x)
        x = self.separable(x)
        return x.flatten(1)

    def forward(self, x):  # (batch, 1, channels, time)
        return self.out(self._conv_stack(x)).squeeze(-1)


def _to_tensor(x: np.ndarray, net: nn.Module) -> torch.Tensor:
    t = torch.as_tensor(np.asarray(x), dtype=torch.float32)
    if isinstance(net, EegnetNet):
        if t.ndim == 2:  # single window
            t = t.unsqueeze(0)
        if t.ndim == 3:
            t = t.unsqueeze(1)  # (batch, 1, channels, time)
        if t.shape[-2:] != (net.n_channels, net.n_samples):
            raise TrainingError(
                f"expected input {net.n_channels}x{net.n_samples}, "
                f"got {tuple(t.shape[-2:])}")
    else:
        if t.ndim == 1:
            t = t.unsqueeze(0)
        if t.shape[-1] != net.n_features:
            raise TrainingError(
                f"expected {net.n_features} features, got {t.shape[-1]}")
    return t


def predict_proba(net: nn.Module, x: np.ndarray) -> np.ndarray:
    net.eval()
    with torch.no_grad():
        logits = net(_to_tensor(x, net))
    return torch.sigmoid(logits).numpy().astype(np.float64)


def _eval_loss(net, loss_fn, x, y) -> float:
    net.eval()
    with torch.no_grad():
        return float(loss_fn(net(x), y))


def train_network(net: nn.Module, train_x: np.ndarray, train_y: np.ndarray,
                  val_x: np.ndarray, val_y: np.ndarray,
                  cfg: TrainConfig = TrainConfig()) -> dict:
    """Adam + BCE minibatch training with early stopping (best weights kept).

    Returns a history dict with per-epoch train/val losses and the best epoch.
    """
    if len(val_x) == 0:
        raise TrainingError("validation set must be non-empty")
    torch.manual_seed(cfg.seed)
    gen = torch.Generator().manual_seed(cfg.seed)

    tx = _to_tensor(train_x, net)
    ty = torch.as_tensor(np.asarray(train_y), dtype=torch.float32)
    vx = _to_tensor(val_x, net)
    vy = torch.as_tensor(np.asarray(val_y), dtype=torch.float32)

    opt = torch.optim.Adam(net.parameters(), lr=cfg.lr,
                           betas=(cfg.beta1, cfg.beta2), eps=cfg.eps)
    loss_fn = nn.BCEWithLogitsLoss()

    best_val = float("inf")
    best_state = None
    best_epoch = -1
    since_best = 0
    history = {"train_loss": [], "val_loss": []}

    n = tx.shape[0]
    for epoch in range(cfg.max_epochs):
        net.train()
        perm = torch.randperm(n, generator=gen)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            opt.zero_grad()
            loss = loss_fn(net(tx[idx]), ty[idx])
            if not torch.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch} (lr={cfg.lr})")
            loss.backward()
            opt.step()
            epoch_loss += loss.item() * len(idx)
        history["train_loss"].append(epoch_loss / n)

        val_loss = _eval_loss(net, loss_fn, vx, vy)
        history["val_loss"].append(val_loss)
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_state = copy.deepcopy(net.state_dict())
            since_best = 0
        else:
            since_best += 1
            if since_best > cfg.patience:
                break

    if cfg.restore_best and best_state is not None:
        net.load_state_dict(best_state)
    history["best_epoch"] = best_epoch
    history["best_val_loss"] = best_val
    return history


def train_mlp(train_features, train_labels, val_features, val_labels,
              cfg: TrainConfig = TrainConfig()) -> MlpNet:
    torch.manual_seed(cfg.seed)
    net = MlpNet(np.asarray(train_features).shape[1])
    train_network(net, train_features, train_labels, val_features, val_labels, cfg)
    return net


def train_eegnet(train_windows, train_labels, val_windows, val_labels,
                 cfg: TrainConfig = TrainConfig()) -> EegnetNet:
    shape = np.asarray(train_windows).shape[-2:]
    torch.manual_seed(cfg.seed)
    net = EegnetNet(n_channels=shape[0], n_samples=shape[1])
    train_network(net, train_windows, train_labels, val_windows, val_labels, cfg)
    return net


def make_dummy(n_features: int, seed: int = 0) -> MlpNet:
    """Randomly initialized, never trained MLP."""
    torch.manual_seed(seed)
    return MlpNet(n_features)

"""Score-based loss reweighting and the weighted denoising score-matching loop."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import scorenet
from .core import Normalizer, OfflineDataset, write_atomic
from .pareto import non_dominated_sort
from .scorenet import ScoreNetwork
from .sde import VPSchedule, perturb

log = logging.getLogger(__name__)

T_EPS = 1e-3


class TrainingDiverged(RuntimeError):
    """Raised on a non-finite loss; ``net`` holds the last finite parameters."""

    def __init__(self, msg: str, net: ScoreNetwork, epoch: int):
        super().__init__(msg)
        self.net = net
        self.epoch = epoch
        self.checkpoint: Checkpoint | None = None


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 800
    batch_size: int = 256
    lr_peak: float = 5e-5
    weight_decay: float = 1e-4
    seed: int = 0
    schedule: VPSchedule = field(default_factory=VPSchedule)
    warmup_frac: float = 0.1
    final_div: float = 25.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    ema_decay: float = 0.0  # 0 disables the parameter average

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.lr_peak > 0:
            raise ValueError("lr_peak must be > 0")
        if not 0.0 <= self.ema_decay < 1.0:
            raise ValueError("ema_decay must be in [0, 1)")


def compute_weights(dataset: OfflineDataset) -> np.ndarray:
    """Per-sample loss weights in [0, 1]; best samples get 1.

    One objective: ``(y_max - y) / (y_max - y_min)``. Several: ``(L - l) / (L - 1)``
    for front index ``l`` out of ``L`` fronts. Degenerate cases give all ones.
    """
    Y = dataset.Y
    if len(Y) < 2:
        raise ValueError("weights need at least two samples")
    if Y.shape[1] == 1:
        y = Y[:, 0]
        lo, hi = y.min(), y.max()
        if hi == lo:
            return np.ones(len(y))
        return (hi - y) / (hi - lo)
    fronts = non_dominated_sort(Y)
    L = fronts.front_count
    if L == 1:
        return np.ones(len(Y))
    return (L - fronts.front_of) / (L - 1)


def lr_at(cfg: TrainConfig, step: int, total: int) -> float:
    """Linear warmup to ``lr_peak`` then cosine decay to ``lr_peak / final_div``."""
    warm = max(1, int(round(cfg.warmup_frac * total)))
    floor = cfg.lr_peak / cfg.final_div
    if step < warm:
        return floor + (cfg.lr_peak - floor) * (step + 1) / warm
    frac = (step - warm) / max(1, total - warm)
    return floor + 0.5 * (cfg.lr_peak - floor) * (1 + math.cos(math.pi * min(frac, 1.0)))


class AdamW:
    def __init__(self, n: int, cfg: TrainConfig):
        self.cfg = cfg
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray, lr: float) -> None:
        c = self.cfg
        self.t += 1
        self.m = c.beta1 * self.m + (1 - c.beta1) * grad
        self.v = c.beta2 * self.v + (1 - c.beta2) * grad**2
        mhat = self.m / (1 - c.beta1**self.t)
        vhat = self.v / (1 - c.beta2**self.t)
        params *= 1 - lr * c.weight_decay
        params -= lr * mhat / (np.sqrt(vhat) + c.eps)


@dataclass
class TrainLog:
    epoch: list[int] = field(default_factory=list)
    mean_loss: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)

    def to_csv(self) -> str:
        rows = ["epoch,mean_loss,lr"]
        rows += [f"{e},{repr(float(l))},{repr(float(r))}" for e, l, r in zip(self.epoch, self.mean_loss, self.lr)]
        return "\n".join(rows) + "\n"


def train(dataset: OfflineDataset, cfg: TrainConfig, net0: ScoreNetwork, weights: np.ndarray | None = None):
    """Fit ``net0`` (copied, not mutated) on an already normalized dataset.

    Returns ``(net, TrainLog)``. With ``cfg.ema_decay > 0`` the returned
    parameters are the exponential moving average of the iterates.
    """
    data = dataset.samples
    if weights is None:
        weights = compute_weights(dataset)
    weights = np.asarray(weights, dtype=float)
    net = net0.copy()
    net.schedule = cfg.schedule
    rng = np.random.default_rng(cfg.seed)
    n = len(data)
    per_epoch = math.ceil(n / cfg.batch_size)
    total = per_epoch * cfg.epochs
    opt = AdamW(net.params.size, cfg)
    trainlog = TrainLog()
    ema = net.params.copy() if cfg.ema_decay > 0 else None
    last_good = net.copy()
    step = 0
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        losses = []
        lr = cfg.lr_peak
        for b in range(per_epoch):
            idx = perm[b * cfg.batch_size : (b + 1) * cfg.batch_size]
            x0 = data[idx]
            t = rng.uniform(T_EPS, 1.0, size=len(idx))
            noise = rng.standard_normal(x0.shape)
            xt, target = perturb(cfg.schedule, x0, t, noise)
            loss, grad = scorenet.loss_grad(net, xt, t, target, weights[idx])
            if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
                raise TrainingDiverged(f"divergence at epoch {epoch}", last_good, epoch)
            lr = lr_at(cfg, step, total)
            opt.step(net.params, grad, lr)
            if ema is not None:
                # warm start: short runs are not dominated by the initial weights
                k = min(cfg.ema_decay, (1 + step) / (10 + step))
                ema *= k
                ema += (1 - k) * net.params
            step += 1
            losses.append(loss)
        mean_loss = float(np.mean(losses))
        trainlog.epoch.append(epoch)
        trainlog.mean_loss.append(mean_loss)
        trainlog.lr.append(lr)
        last_good = net.copy()
        if epoch % max(1, cfg.epochs // 10) == 0:
            log.debug("epoch %d loss %.5f lr %.2e", epoch, mean_loss, lr)
    if ema is not None:
        net.params[:] = ema
    return net, trainlog


# -- checkpoints ---------------------------------------------------------------------


@dataclass
class Checkpoint:
    """A trained network plus everything needed to map samples back to task units."""

    net: ScoreNetwork
    normalizer: Normalizer
    task_id: str
    sense_original: tuple[str, ...]
    train_seed: int
    epochs: int
    bounds: np.ndarray | None = None  # task box in task units, when known

    @property
    def schedule(self) -> VPSchedule:
        return self.net.schedule

    def to_dict(self) -> dict:
        out = scorenet.to_dict(self.net)
        out.update(
            normalization=self.normalizer.to_dict(),
            task_id=self.task_id,
            sense_original=list(self.sense_original),
            train_seed=self.train_seed,
            epochs=self.epochs,
            bounds=None if self.bounds is None else np.asarray(self.bounds).tolist(),
        )
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Checkpoint":
        return cls(
            scorenet.from_dict(data),
            Normalizer.from_dict(data["normalization"]),
            data["task_id"],
            tuple(data["sense_original"]),
            data["train_seed"],
            data["epochs"],
            None if data.get("bounds") is None else np.asarray(data["bounds"], dtype=float),
        )

    def save(self, path: Path) -> None:
        write_atomic(Path(path), json.dumps(self.to_dict(), sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: Path) -> "Checkpoint":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def fit(
    dataset: OfflineDataset,
    cfg: TrainConfig,
    hidden_width: int = 256,
    depth: int = 3,
    time_embed_dim: int = 64,
    bounds: np.ndarray | None = None,
) -> tuple[Checkpoint, TrainLog]:
    """Normalize, weight, initialize and train in one call."""
    normalizer = Normalizer.fit(dataset)
    norm = OfflineDataset(
        normalizer.design.normalize(dataset.X),
        normalizer.score.normalize(dataset.Y),
        dataset.task_id,
        dataset.sense_original,
    )
    net0 = scorenet.init(dataset.d, dataset.m, hidden_width, depth, time_embed_dim, cfg.seed, cfg.schedule)
    # weights come from the raw scores; min-max scaling does not change them
    try:
        net, trainlog = train(norm, cfg, net0, compute_weights(dataset))
    except TrainingDiverged as exc:
        exc.checkpoint = Checkpoint(exc.net, normalizer, dataset.task_id, dataset.sense_original, cfg.seed, exc.epoch, bounds)
        raise
    ck = Checkpoint(net, normalizer, dataset.task_id, dataset.sense_original, cfg.seed, cfg.epochs, bounds)
    return ck, trainlog

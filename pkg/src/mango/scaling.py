"""Inference-time scaling driven by the model's own denoised score estimates.

The reward of a noisy state is the distance between the preferred score and
the score block of its posterior-mean estimate; smaller is better. Two
samplers spend extra compute on it:

* self-IS: every ``every`` steps each chain tries ``J`` noise draws and
  keeps one, chosen with probability proportional to ``exp(-R / alpha_I)``;
* FKS: a population of chains is resampled against potentials built from
  each lineage's best reward so far.

Both fall back to plain guided sampling when the model's fidelity does not
exceed ``tau``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import logsumexp

from . import guidance
from .core import OfflineDataset
from .guidance import CountingNet, GuidanceConfig, SampleResult, _Targets, chain_noise, step_mean
from .pareto import dominates, pareto_front
from .scorenet import ScoreNetwork, forward
from .sde import VPSchedule, tweedie_denoise

MODES = ("none", "self_is", "fks")
TAU_SOO = 0.827
TAU_MOO = 0.87


@dataclass(frozen=True)
class ScalingConfig:
    mode: str = "self_is"
    J: int = 16
    alpha_I: float = 0.1
    every: int = 5
    tau: float | None = None  # None: pick by objective count
    M: int = 512

    def __post_init__(self):
        mode = self.mode.replace("-", "_")
        object.__setattr__(self, "mode", mode)
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if mode != "none" and self.J < 2:
            raise ValueError("J must be >= 2 when scaling is on")
        if self.every < 1:
            raise ValueError("every must be >= 1")
        if not self.alpha_I > 0:
            raise ValueError("alpha_I must be > 0")
        if self.tau is not None and not 0 < self.tau <= 1:
            raise ValueError("tau must lie in (0, 1]")
        if self.M < 1:
            raise ValueError("M must be >= 1")

    def threshold(self, m: int) -> float:
        if self.tau is not None:
            return self.tau
        return TAU_SOO if m == 1 else TAU_MOO

    def to_dict(self) -> dict:
        return {"mode": self.mode, "J": self.J, "alpha_I": self.alpha_I, "every": self.every, "tau": self.tau, "M": self.M}


# -- rewards -----------------------------------------------------------------------


def reward_from_score(sched: VPSchedule, X, t, score, y_pref, d: int) -> np.ndarray:
    """Distance from ``y_pref`` to the denoised score block.

    ``y_pref`` is (m,) or (P, m); with several targets the nearest counts.
    """
    x0 = tweedie_denoise(sched, np.atleast_2d(X), t, np.atleast_2d(score))
    Y0 = x0[:, d:]
    P = np.atleast_2d(np.asarray(y_pref, dtype=float))
    dist = np.linalg.norm(Y0[:, None, :] - P[None, :, :], axis=2)
    return dist.min(axis=1)


def _rowwise_reward(sched, X, t, score, targets, d) -> np.ndarray:
    x0 = tweedie_denoise(sched, X, t, score)
    return np.linalg.norm(targets - x0[:, d:], axis=1)


def reward_at(net: ScoreNetwork, sched: VPSchedule, xhat_t, t: float, y_pref) -> np.ndarray | float:
    if not 0 < t <= 1:
        raise ValueError("reward needs t in (0, 1]")
    X = np.atleast_2d(np.asarray(xhat_t, dtype=float))
    r = reward_from_score(sched, X, t, forward(net, X, t), y_pref, net.d)
    return float(r[0]) if np.ndim(xhat_t) == 1 else r


# -- fidelity -------------------------------------------------------------------------


def improving_mask(Y_gen: np.ndarray, Y_train: np.ndarray) -> np.ndarray:
    """Generated scores that beat the training data.

    One objective: strictly below the training minimum. Several: not
    dominated by any point of the training front.
    """
    Y_gen = np.atleast_2d(Y_gen)
    if Y_train.shape[1] == 1:
        return Y_gen[:, 0] < Y_train[:, 0].min()
    front = Y_train[pareto_front(Y_train)]
    return np.array([not any(dominates(f, y) for f in front) for y in Y_gen], dtype=bool)


def fidelity_from_samples(samples: np.ndarray, dataset: OfflineDataset) -> float:
    """``exp(-mean ||y_gen - y_nearest_train||)`` over improving samples; 0 if none."""
    S = np.atleast_2d(samples)
    S = S[np.all(np.isfinite(S), axis=1)]
    d = dataset.d
    if len(S) == 0:
        return 0.0
    keep = improving_mask(S[:, d:], dataset.Y)
    if not keep.any():
        return 0.0
    _, j = cKDTree(dataset.X).query(S[keep, :d])
    dev = np.linalg.norm(S[keep, d:] - dataset.Y[j], axis=1)
    return float(np.exp(-dev.mean()))


def fidelity(net: ScoreNetwork, sched: VPSchedule, dataset: OfflineDataset, M: int = 512, seed: int = 0, steps: int = 200) -> float:
    """Fidelity of a trained model against its (normalized) training set."""
    if M < 1:
        raise ValueError("M must be >= 1")
    res = guidance.sample(net, sched, GuidanceConfig.unconditional(steps, seed), M)
    return fidelity_from_samples(res.samples[res.finite], dataset)


# -- samplers ----------------------------------------------------------------------------


def scaling_steps(T: int, every: int) -> list[int]:
    """Step indices (0-based, in sampling order) that get scaled.

    One per complete block of ``every`` steps, at the start of the block,
    so there are ``T // every`` of them.
    """
    return [i for i in range(0, T, every) if i + every <= T]


def _dup_rng(seed: int, chain: int, step: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1, chain, step)))


def _fks_rng(seed: int, step: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2, step)))


def _gate_open(fid: float | None, scfg: ScalingConfig, m: int) -> bool:
    return fid is None or fid > scfg.threshold(m)


@dataclass
class ScaledResult(SampleResult):
    rewards: list = field(default_factory=list)  # per scaled step diagnostics
    ancestors: list = field(default_factory=list)


def self_is_sample(
    net: ScoreNetwork,
    sched: VPSchedule,
    cfg: GuidanceConfig,
    scfg: ScalingConfig,
    K: int,
    fidelity: float | None = None,
    trajectory: bool = False,
) -> SampleResult:
    """Guided sampling with per-chain duplicate-and-resample steps.

    ``fidelity=None`` disables the gate (scaling always on).
    """
    if not _gate_open(fidelity, scfg, net.m):
        return guidance.sample(net, sched, cfg, K, trajectory)
    return _self_is(net, sched, cfg, K, scfg.J, scfg.alpha_I, scfg.every, trajectory)


def selection_probs(R: np.ndarray, alpha_I: float) -> np.ndarray:
    """Row-normalized ``exp(-R / alpha_I)``; rows that underflow become uniform."""
    R = np.atleast_2d(np.asarray(R, dtype=float))
    logw = -R / alpha_I
    with np.errstate(invalid="ignore"):
        p = np.exp(logw - logsumexp(logw, axis=1, keepdims=True))
    bad = ~np.all(np.isfinite(p), axis=1) | ~(p.sum(axis=1) > 0)
    p[bad] = 1.0 / R.shape[1]
    return p


def select_duplicates(R: np.ndarray, alpha_I: float, u: np.ndarray) -> np.ndarray:
    """One categorical draw per row of rewards, by inverse CDF at ``u``."""
    p = selection_probs(R, alpha_I)
    cdf = np.cumsum(p, axis=1)
    u = np.asarray(u, dtype=float).reshape(-1)
    return np.minimum((cdf <= (u * cdf[:, -1])[:, None]).sum(axis=1), p.shape[1] - 1)


def _self_is(net, sched, cfg: GuidanceConfig, K: int, J: int, alpha_I: float, every: int, trajectory: bool = False) -> ScaledResult:
    if K < 1:
        raise ValueError("K must be >= 1")
    if cfg.y_pref is None:
        raise ValueError("self-IS needs y_pref for its reward")
    T, dt, d, D = cfg.steps, 1.0 / cfg.steps, net.d, net.dim
    f = CountingNet(net)
    tg = _Targets(cfg, d, net.m, K)
    X, eps = chain_noise(cfg.seed, K, T, D)
    scaled = set(scaling_steps(T, every))
    finite = np.ones(K, dtype=bool)
    traj = [X.copy()] if trajectory else None
    out = ScaledResult(X, finite, 0)
    score = None
    for i in range(T):
        t, t_next = (T - i) / T, (T - i - 1) / T
        if score is None:
            score = f(X, t)
        mean, bdt = step_mean(X, score, t, dt, sched, tg, cfg)
        score = None
        if i in scaled and i < T - 1:
            noise = np.empty((K, J, D))
            noise[:, 0] = eps[i]
            u = np.empty(K)
            for k in range(K):
                g = _dup_rng(cfg.seed, k, i)
                noise[k, 1:] = g.standard_normal((J - 1, D))
                u[k] = g.random()
            C = mean[:, None, :] + np.sqrt(bdt) * noise
            flat = C.reshape(K * J, D)
            S = f(flat, t_next)
            R = _rowwise_reward(sched, flat, t_next, S, np.repeat(tg.y, J, axis=0), d).reshape(K, J)
            j = select_duplicates(R, alpha_I, u)
            X = C[np.arange(K), j]
            score = S.reshape(K, J, D)[np.arange(K), j]
            out.rewards.append(R)
            out.ancestors.append(j)
        elif i == T - 1:
            X = mean
        else:
            X = mean + np.sqrt(bdt) * eps[i]
        finite &= np.all(np.isfinite(X), axis=1)
        X[~finite] = np.nan
        if traj is not None:
            traj.append(X.copy())
    out.samples, out.finite, out.nfe = X, finite, f.calls
    out.trajectory = None if traj is None else np.stack(traj)
    return out


def systematic_resample(weights: np.ndarray, u0: float) -> np.ndarray:
    """Indices drawn at ``(u0 + k) / K`` on the weight CDF; ``u0`` in [0, 1)."""
    w = np.asarray(weights, dtype=float)
    K = len(w)
    total = w.sum()
    if not np.isfinite(total) or total <= 0:
        w = np.ones(K)
        total = float(K)
    cdf = np.cumsum(w / total)
    cdf[-1] = 1.0
    pos = (u0 + np.arange(K)) / K
    return np.searchsorted(cdf, pos, side="right")


def fks_sample(
    net: ScoreNetwork,
    sched: VPSchedule,
    cfg: GuidanceConfig,
    scfg: ScalingConfig,
    K: int,
    fidelity: float | None = None,
    trajectory: bool = False,
) -> SampleResult:
    """Population resampling with potentials ``exp(-best_reward / alpha_I)``."""
    if not _gate_open(fidelity, scfg, net.m):
        return guidance.sample(net, sched, cfg, K, trajectory)
    if K < 1:
        raise ValueError("K must be >= 1")
    if cfg.y_pref is None:
        raise ValueError("FKS needs y_pref for its reward")
    T, dt, d = cfg.steps, 1.0 / cfg.steps, net.d
    f = CountingNet(net)
    tg = _Targets(cfg, d, net.m, K)
    targets = tg.y
    X, eps = chain_noise(cfg.seed, K, T, net.dim)
    scaled = set(scaling_steps(T, scfg.every))
    best = np.full(K, np.inf)
    finite = np.ones(K, dtype=bool)
    traj = [X.copy()] if trajectory else None
    out = ScaledResult(X, finite, 0)
    for i in range(T):
        t = (T - i) / T
        score = f(X, t)
        if i in scaled:
            R = _rowwise_reward(sched, X, t, score, targets, d)
            best = np.fmin(best, R)
            logw = -best / scfg.alpha_I
            w = np.exp(logw - np.max(logw)) if np.isfinite(logw).any() else np.ones(K)
            idx = systematic_resample(np.nan_to_num(w), _fks_rng(cfg.seed, i).random())
            out.rewards.append(best.copy())
            out.ancestors.append(idx)
            X, score, best, targets, finite = X[idx], score[idx], best[idx], targets[idx], finite[idx]
            tg.y = targets
        mean, bdt = step_mean(X, score, t, dt, sched, tg, cfg)
        X = mean if i == T - 1 else mean + np.sqrt(bdt) * eps[i]
        finite &= np.all(np.isfinite(X), axis=1)
        X[~finite] = np.nan
        if traj is not None:
            traj.append(X.copy())
    out.samples, out.finite, out.nfe = X, finite, f.calls
    out.trajectory = None if traj is None else np.stack(traj)
    return out


def scaled_sample(net, sched, cfg: GuidanceConfig, scfg: ScalingConfig, K: int, fidelity: float | None = None) -> SampleResult:
    if scfg.mode == "self_is":
        return self_is_sample(net, sched, cfg, scfg, K, fidelity)
    if scfg.mode == "fks":
        return fks_sample(net, sched, cfg, scfg, K, fidelity)
    return guidance.sample(net, sched, cfg, K)

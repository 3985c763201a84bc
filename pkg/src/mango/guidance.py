"""Reverse-time sampling with derivative-free guidance.

All states live in normalized units. A state row is ``(x, y)`` with the
design first. Guidance terms are padded with zeros outside their block:
score guidance only touches ``y`` and box guidance only touches ``x``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import scorenet
from .sde import VPSchedule, beta_at


class GuidanceError(ValueError):
    pass


@dataclass(frozen=True)
class GuidanceConfig:
    """Sampling options.

    ``y_pref`` is (m,) or (P, m); chain ``i`` targets row ``i % P``.
    ``design_box`` is (d, 2) rows of ``[lo, hi]``.
    """

    y_pref: np.ndarray | None = None
    design_box: np.ndarray | None = None
    alpha_x: float = 0.0
    alpha_y: float = 1.0
    steps: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.alpha_x < 0 or self.alpha_y < 0:
            raise GuidanceError("guidance scales must be >= 0")
        if self.steps < 1:
            raise GuidanceError("steps must be >= 1")
        if self.y_pref is not None:
            object.__setattr__(self, "y_pref", np.atleast_2d(np.asarray(self.y_pref, dtype=float)))
        if self.design_box is not None:
            box = np.atleast_2d(np.asarray(self.design_box, dtype=float))
            if np.any(box[:, 0] > box[:, 1]):
                raise GuidanceError("design box needs lo <= hi on every coordinate")
            object.__setattr__(self, "design_box", box)

    @classmethod
    def unconditional(cls, steps: int = 200, seed: int = 0) -> "GuidanceConfig":
        return cls(None, None, 0.0, 0.0, steps, seed)

    def to_dict(self) -> dict:
        return {
            "y_pref": None if self.y_pref is None else self.y_pref.tolist(),
            "design_box": None if self.design_box is None else self.design_box.tolist(),
            "alpha_x": self.alpha_x,
            "alpha_y": self.alpha_y,
            "steps": self.steps,
            "seed": self.seed,
        }


@dataclass
class SampleResult:
    samples: np.ndarray  # (K, d + m), normalized
    finite: np.ndarray  # (K,) False for chains that blew up
    nfe: int  # network evaluations summed over chains
    trajectory: np.ndarray | None = None  # (T + 1, K, d + m)

    @property
    def nfe_per_particle(self) -> float:
        return self.nfe / len(self.samples)


class CountingNet:
    """Wraps a network and counts evaluated rows."""

    def __init__(self, net: scorenet.ScoreNetwork):
        self.net = net
        self.calls = 0

    def __call__(self, X: np.ndarray, t) -> np.ndarray:
        X = np.atleast_2d(X)
        self.calls += len(X)
        # non-finite chains are evaluated on zeros so the batch shape is stable
        safe = np.where(np.isfinite(X), X, 0.0)
        return scorenet.forward(self.net, safe, t)


def chain_rng(seed: int, chain: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, chain]))


def chain_noise(seed: int, K: int, steps: int, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Initial states (K, D) and step noise (T, K, D), one stream per chain."""
    x0 = np.empty((K, dim))
    eps = np.empty((steps, K, dim))
    for i in range(K):
        g = chain_rng(seed, i)
        x0[i] = g.standard_normal(dim)
        eps[:, i, :] = g.standard_normal((steps, dim))
    return x0, eps


class _Targets:
    """Padded guidance targets broadcast to a batch of chains."""

    def __init__(self, cfg: GuidanceConfig, d: int, m: int, K: int):
        self.d, self.m = d, m
        if cfg.alpha_y > 0 and cfg.y_pref is None:
            raise GuidanceError("missing score target: alpha_y > 0 needs y_pref")
        self.y = None
        if cfg.y_pref is not None:
            if cfg.y_pref.shape[1] != m:
                raise GuidanceError(f"y_pref has {cfg.y_pref.shape[1]} objectives, model has {m}")
            self.y = cfg.y_pref[np.arange(K) % len(cfg.y_pref)]
        self.box = None
        if cfg.design_box is not None:
            if cfg.design_box.shape[0] != d:
                raise GuidanceError(f"design box has {cfg.design_box.shape[0]} rows, model has d = {d}")
            self.box = cfg.design_box

    def take(self, idx: np.ndarray) -> "_Targets":
        out = object.__new__(_Targets)
        out.d, out.m, out.box = self.d, self.m, self.box
        out.y = None if self.y is None else self.y[idx]
        return out


def guidance_term(X: np.ndarray, tg: _Targets, cfg: GuidanceConfig, beta_dt: float) -> np.ndarray:
    """``alpha_x * g_box + alpha_y * (y_pref - y)``, zero-padded to (B, d + m).

    The box term points from the state to its projection on the box, so it
    attracts. Each scale is capped at ``1 / (beta * dt)`` so one Euler step
    never overshoots its target.
    """
    G = np.zeros_like(X)
    d = tg.d
    cap = np.inf if beta_dt <= 0 else 1.0 / beta_dt
    if cfg.alpha_x > 0 and tg.box is not None:
        x = X[:, :d]
        G[:, :d] = min(cfg.alpha_x, cap) * (np.clip(x, tg.box[:, 0], tg.box[:, 1]) - x)
    if cfg.alpha_y > 0 and tg.y is not None:
        G[:, d:] = min(cfg.alpha_y, cap) * (tg.y - X[:, d:])
    return G


def step_mean(X, score, t, dt, sched, tg, cfg) -> tuple[np.ndarray, float]:
    """Deterministic part of one guided Euler-Maruyama step and ``beta * dt``."""
    bdt = float(beta_at(sched, t)) * dt
    return X + bdt * (X / 2 + score) + bdt * guidance_term(X, tg, cfg, bdt), bdt


def reverse_step(net, sched: VPSchedule, xhat_t, t: float, dt: float, cfg: GuidanceConfig, noise, score=None):
    """One step from ``t`` to ``t - dt``.

    ``net`` is a ScoreNetwork or any callable ``(X, t) -> scores``;
    ``score`` skips the network call when already known.
    """
    if t - dt < -1e-12:
        raise GuidanceError("step would cross t = 0")
    X = np.atleast_2d(np.asarray(xhat_t, dtype=float))
    noise = np.atleast_2d(np.asarray(noise, dtype=float))
    if noise.shape != X.shape:
        raise GuidanceError("noise length must equal d + m")
    d = X.shape[1] - _m_of(net, cfg, X.shape[1])
    tg = _Targets(cfg, d, X.shape[1] - d, len(X))
    if score is None:
        score = net(X, t) if callable(net) else scorenet.forward(net, X, t)
    mean, bdt = step_mean(X, np.atleast_2d(score), t, dt, sched, tg, cfg)
    out = mean + np.sqrt(bdt) * noise
    return out[0] if np.ndim(xhat_t) == 1 else out


def _m_of(net, cfg: GuidanceConfig, dim: int) -> int:
    if isinstance(net, scorenet.ScoreNetwork):
        return net.m
    inner = getattr(net, "net", None)
    if isinstance(inner, scorenet.ScoreNetwork):
        return inner.m
    if cfg.y_pref is not None:
        return cfg.y_pref.shape[1]
    if cfg.design_box is not None:
        return dim - cfg.design_box.shape[0]
    # no targets: the guidance term is zero whatever the split
    return 0


def sample(
    net: scorenet.ScoreNetwork,
    sched: VPSchedule,
    cfg: GuidanceConfig,
    K: int,
    trajectory: bool = False,
) -> SampleResult:
    """K independent guided reverse chains from standard-normal noise.

    ``sched.steps`` is ignored in favour of ``cfg.steps``. The last step is
    noise-free so outputs land on the posterior mean.
    """
    if K < 1:
        raise GuidanceError("K must be >= 1")
    T, dt = cfg.steps, 1.0 / cfg.steps
    f = CountingNet(net)
    tg = _Targets(cfg, net.d, net.m, K)
    X, eps = chain_noise(cfg.seed, K, T, net.dim)
    finite = np.ones(K, dtype=bool)
    traj = [X.copy()] if trajectory else None
    score = None
    for i in range(T):
        t = (T - i) / T
        if score is None:
            score = f(X, t)
        mean, bdt = step_mean(X, score, t, dt, sched, tg, cfg)
        X = mean if i == T - 1 else mean + np.sqrt(bdt) * eps[i]
        finite &= np.all(np.isfinite(X), axis=1)
        X[~finite] = np.nan
        score = None
        if traj is not None:
            traj.append(X.copy())
    return SampleResult(X, finite, f.calls, None if traj is None else np.stack(traj))


@dataclass(frozen=True)
class Prediction:
    y: np.ndarray  # normalized score estimate
    x_final: np.ndarray
    converged: bool


def predict_scores(
    net: scorenet.ScoreNetwork,
    sched: VPSchedule,
    x_pref,
    cfg: GuidanceConfig | None = None,
    tol_x: float = 0.05,
    chains: int = 1,
) -> Prediction:
    """Estimate the score of a design by pulling the design block onto it.

    The pull ``alpha_x * (x_pref - x)`` is the box term with a degenerate box
    ``[x_pref, x_pref]``. With ``chains > 1`` the estimate is the mean over
    converged chains.
    """
    x_pref = np.asarray(x_pref, dtype=float).reshape(-1)
    if x_pref.size != net.d:
        raise GuidanceError(f"x_pref has {x_pref.size} coordinates, model has d = {net.d}")
    cfg = cfg or GuidanceConfig(alpha_x=1000.0, alpha_y=0.0)
    pcfg = GuidanceConfig(None, np.column_stack([x_pref, x_pref]), cfg.alpha_x, 0.0, cfg.steps, cfg.seed)
    res = sample(net, sched, pcfg, chains)
    dev = np.max(np.abs(res.samples[:, : net.d] - x_pref), axis=1)
    ok = res.finite & (dev <= tol_x)
    use = ok if ok.any() else res.finite
    if not use.any():
        return Prediction(np.full(net.m, np.nan), res.samples[0, : net.d], False)
    y = res.samples[use, net.d :].mean(axis=0)
    return Prediction(y, res.samples[use, : net.d].mean(axis=0), bool(ok.all()))


# -- preferred-score defaults ------------------------------------------------------


def front_targets(front: np.ndarray, K: int, shift: float = 0.1) -> np.ndarray:
    """Targets for a multi-objective run without a known front.

    Spreads up to K points along the (normalized) training front, ordered by
    the first objective, and moves each one ``shift`` toward the ideal side.
    """
    front = np.asarray(front, dtype=float)
    front = front[np.lexsort(front.T[::-1])]
    if len(front) > K:
        front = front[np.round(np.linspace(0, len(front) - 1, K)).astype(int)]
    return front - shift

"""Time-conditioned MLP score model with hand-written backpropagation.

Architecture: ``[xhat, emb(t)] -> (Linear -> SiLU) x depth -> Linear``.
The raw output is an estimate of the injected noise; the score is
``-raw / sigma(t)``, so the zero-initialized output layer starts training
from the prior score 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .sde import VPSchedule, alpha_bar_at, sigma_at

# sigma(t) is floored at this time so the score stays finite at t = 0
T_FLOOR = 1e-3


class ShapeError(ValueError):
    pass


def layer_sizes(d: int, m: int, hidden_width: int, depth: int, time_embed_dim: int) -> list[tuple[int, int]]:
    """(fan_in, fan_out) of each dense layer."""
    io = d + m
    sizes = [(io + time_embed_dim, hidden_width)]
    sizes += [(hidden_width, hidden_width)] * (depth - 1)
    sizes.append((hidden_width, io))
    return sizes


def param_count(d: int, m: int, hidden_width: int, depth: int, time_embed_dim: int) -> int:
    return sum(i * o + o for i, o in layer_sizes(d, m, hidden_width, depth, time_embed_dim))


def time_embedding(t: np.ndarray, dim: int) -> np.ndarray:
    """Sinusoidal features of shape (B, dim)."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half, 1))
    ang = 1000.0 * t[:, None] * freqs[None, :]
    emb = np.concatenate([np.sin(ang), np.cos(ang)], axis=1)
    if dim % 2:
        emb = np.concatenate([emb, np.zeros((len(t), 1))], axis=1)
    return emb


def _silu(z):
    s = expit(z)
    return z * s, s


@dataclass
class ScoreNetwork:
    d: int
    m: int
    hidden_width: int = 256
    depth: int = 3
    time_embed_dim: int = 64
    params: np.ndarray = field(default=None, repr=False)
    seed: int = 0
    schedule: VPSchedule = field(default_factory=VPSchedule)

    def __post_init__(self):
        for name in ("d", "m", "hidden_width", "depth", "time_embed_dim"):
            if getattr(self, name) < 1:
                raise ShapeError(f"{name} must be >= 1")
        n = param_count(self.d, self.m, self.hidden_width, self.depth, self.time_embed_dim)
        if self.params is None:
            self.params = np.zeros(n)
        self.params = np.asarray(self.params, dtype=float)
        if self.params.shape != (n,):
            raise ShapeError(f"expected {n} parameters, got {self.params.shape}")

    @property
    def dim(self) -> int:
        return self.d + self.m

    @property
    def sizes(self) -> list[tuple[int, int]]:
        return layer_sizes(self.d, self.m, self.hidden_width, self.depth, self.time_embed_dim)

    def layers(self, flat: np.ndarray | None = None) -> list[tuple[np.ndarray, np.ndarray]]:
        """Views ``(W, b)`` into a flat vector (``W`` is fan_in x fan_out)."""
        flat = self.params if flat is None else flat
        out, pos = [], 0
        for i, o in self.sizes:
            W = flat[pos : pos + i * o].reshape(i, o)
            pos += i * o
            b = flat[pos : pos + o]
            pos += o
            out.append((W, b))
        return out

    def copy(self) -> "ScoreNetwork":
        return ScoreNetwork(
            self.d, self.m, self.hidden_width, self.depth, self.time_embed_dim,
            self.params.copy(), self.seed, self.schedule,
        )

    def arch(self) -> dict:
        return {
            "d": self.d,
            "m": self.m,
            "hidden_width": self.hidden_width,
            "depth": self.depth,
            "time_embed_dim": self.time_embed_dim,
            "seed": self.seed,
        }


def init(
    d: int,
    m: int,
    hidden_width: int = 256,
    depth: int = 3,
    time_embed_dim: int = 64,
    seed: int = 0,
    schedule: VPSchedule | None = None,
) -> ScoreNetwork:
    """Gaussian weights with std ``1/sqrt(fan_in)``, zero biases, zero output layer."""
    net = ScoreNetwork(d, m, hidden_width, depth, time_embed_dim, None, seed, schedule or VPSchedule())
    rng = np.random.default_rng(seed)
    layers = net.layers()
    for W, _ in layers[:-1]:
        W[...] = rng.standard_normal(W.shape) / np.sqrt(W.shape[0])
    return net


def _prep(net: ScoreNetwork, xhat, t):
    xhat = np.asarray(xhat, dtype=float)
    single = xhat.ndim == 1
    X = np.atleast_2d(xhat)
    if X.shape[1] != net.dim:
        raise ShapeError(f"input has {X.shape[1]} coordinates, network expects d + m = {net.dim}")
    t = np.broadcast_to(np.asarray(t, dtype=float), (X.shape[0],))
    if np.any(t < 0) or np.any(t > 1):
        raise ShapeError("t outside [0, 1]")
    return X, t, single


def _sigma(net: ScoreNetwork, t: np.ndarray) -> np.ndarray:
    return sigma_at(net.schedule, np.maximum(t, T_FLOOR))


def _raw_forward(net: ScoreNetwork, X: np.ndarray, t: np.ndarray, keep: bool = False):
    h = np.concatenate([X, time_embedding(t, net.time_embed_dim)], axis=1)
    layers = net.layers()
    cache = []
    for W, b in layers[:-1]:
        z = h @ W + b
        a, s = _silu(z)
        if keep:
            cache.append((h, z, s))
        h = a
    W, b = layers[-1]
    out = h @ W + b
    if keep:
        cache.append((h, None, None))
    return out, cache


def forward(net: ScoreNetwork, xhat, t) -> np.ndarray:
    """Score estimate for one state (D,) or a batch (B, D)."""
    X, t, single = _prep(net, xhat, t)
    raw, _ = _raw_forward(net, X, t)
    out = -raw / _sigma(net, t)[:, None]
    return out[0] if single else out


def loss_grad(net: ScoreNetwork, xt, t, target, weight) -> tuple[float, np.ndarray]:
    """Weighted denoising score-matching loss and its exact parameter gradient.

    ``loss = mean_b lambda(t_b) * weight_b * ||forward(xt_b, t_b) - target_b||^2``
    with ``lambda(t) = 1 - alpha_bar(t)``.
    """
    X, t, _ = _prep(net, xt, t)
    target = np.atleast_2d(np.asarray(target, dtype=float))
    weight = np.broadcast_to(np.asarray(weight, dtype=float), (X.shape[0],))
    if X.shape[0] == 0:
        raise ShapeError("empty batch")
    if np.any(weight < 0):
        raise ShapeError("weights must be >= 0")
    B = X.shape[0]
    lam = 1.0 - alpha_bar_at(net.schedule, t)
    sig = _sigma(net, t)
    raw, cache = _raw_forward(net, X, t, keep=True)
    score = -raw / sig[:, None]
    resid = score - target
    coef = lam * weight / B
    loss = float(np.sum(coef * np.sum(resid**2, axis=1)))

    grad = np.zeros_like(net.params)
    glayers = net.layers(grad)
    layers = net.layers()
    # d loss / d raw
    delta = (2.0 * coef / -sig)[:, None] * resid
    for k in range(len(layers) - 1, -1, -1):
        h, z, s = cache[k]
        if k < len(layers) - 1:
            # SiLU'(z) = s * (1 + z * (1 - s))
            delta = delta * (s * (1.0 + z * (1.0 - s)))
        gW, gb = glayers[k]
        gW[...] = h.T @ delta
        gb[...] = delta.sum(axis=0)
        if k > 0:
            delta = delta @ layers[k][0].T
    return loss, grad


def to_dict(net: ScoreNetwork) -> dict:
    return {
        "architecture": net.arch(),
        "schedule": net.schedule.to_dict(),
        "params": [float(v) for v in net.params],
    }


def from_dict(data: dict) -> ScoreNetwork:
    a = data["architecture"]
    return ScoreNetwork(
        a["d"], a["m"], a["hidden_width"], a["depth"], a["time_embed_dim"],
        np.asarray(data["params"], dtype=float), a.get("seed", 0), VPSchedule(**data["schedule"]),
    )

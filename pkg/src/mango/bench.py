"""Synthetic benchmark tasks and offline dataset generation.

Tasks: ``branin`` (single objective), ``omnitest``, ``zdt1``, ``zdt2``,
``zdt3``, ``dtlz2``, ``dtlz7``. Every objective is minimized.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import DataError, OfflineDataset, TaskSpec
from .pareto import non_dominated_sort, pareto_front

ZDT_DIM = 6
DTLZ_DIM = 7
DTLZ_OBJ = 3
DEFAULT_N_SOO = 10_000
DEFAULT_N_MOO = 60_000

# f1 intervals of the five disconnected ZDT3 front pieces
ZDT3_SEGMENTS = (
    (0.0, 0.0830015349),
    (0.1822287280, 0.2577623634),
    (0.4093136748, 0.4538821041),
    (0.6183967944, 0.6525117038),
    (0.8233317983, 0.8518328654),
)


def branin(X: np.ndarray) -> np.ndarray:
    a, b, c = 1.0, 5.1 / (4 * np.pi**2), 5.0 / np.pi
    r, s, t = 6.0, 10.0, 1.0 / (8 * np.pi)
    x1, x2 = X[:, 0], X[:, 1]
    f = a * (x2 - b * x1**2 + c * x1 - r) ** 2 + s * (1 - t) * np.cos(x1) + s
    return f[:, None]


def omnitest(X: np.ndarray) -> np.ndarray:
    return np.stack([np.sin(np.pi * X).sum(axis=1), np.cos(np.pi * X).sum(axis=1)], axis=1)


def _zdt_g(X):
    return 1.0 + 9.0 * X[:, 1:].sum(axis=1) / (X.shape[1] - 1)


def zdt1(X):
    f1 = X[:, 0]
    g = _zdt_g(X)
    return np.stack([f1, g * (1 - np.sqrt(f1 / g))], axis=1)


def zdt2(X):
    f1 = X[:, 0]
    g = _zdt_g(X)
    return np.stack([f1, g * (1 - (f1 / g) ** 2)], axis=1)


def zdt3(X):
    f1 = X[:, 0]
    g = _zdt_g(X)
    h = 1 - np.sqrt(f1 / g) - (f1 / g) * np.sin(10 * np.pi * f1)
    return np.stack([f1, g * h], axis=1)


def dtlz2(X, m: int = DTLZ_OBJ):
    g = ((X[:, m - 1 :] - 0.5) ** 2).sum(axis=1)
    theta = X[:, : m - 1] * np.pi / 2
    F = np.empty((len(X), m))
    for i in range(m):
        f = 1 + g
        f = f * np.prod(np.cos(theta[:, : m - 1 - i]), axis=1)
        if i > 0:
            f = f * np.sin(theta[:, m - 1 - i])
        F[:, i] = f
    return F


def dtlz7(X, m: int = DTLZ_OBJ):
    k = X.shape[1] - m + 1
    g = 1 + 9.0 / k * X[:, m - 1 :].sum(axis=1)
    F = np.empty((len(X), m))
    F[:, : m - 1] = X[:, : m - 1]
    h = m - np.sum(F[:, : m - 1] / (1 + g[:, None]) * (1 + np.sin(3 * np.pi * F[:, : m - 1])), axis=1)
    F[:, m - 1] = (1 + g) * h
    return F


# -- analytic fronts -----------------------------------------------------------


def _dense_front(task_id: str, n: int) -> np.ndarray:
    if task_id == "omnitest":
        u = np.linspace(1.0, 1.5, n)
        return np.stack([2 * np.sin(np.pi * u), 2 * np.cos(np.pi * u)], axis=1)
    if task_id == "zdt1":
        f1 = np.linspace(0, 1, n)
        return np.stack([f1, 1 - np.sqrt(f1)], axis=1)
    if task_id == "zdt2":
        f1 = np.linspace(0, 1, n)
        return np.stack([f1, 1 - f1**2], axis=1)
    if task_id == "zdt3":
        f1 = np.concatenate([np.linspace(a, b, n // 5 + 2) for a, b in ZDT3_SEGMENTS])
        return np.stack([f1, 1 - np.sqrt(f1) - f1 * np.sin(10 * np.pi * f1)], axis=1)
    side = int(np.ceil(np.sqrt(n))) + 1
    u, v = np.meshgrid(np.linspace(0, 1, side), np.linspace(0, 1, side))
    u, v = u.ravel(), v.ravel()
    if task_id == "dtlz2":
        a, b = u * np.pi / 2, v * np.pi / 2
        return np.stack([np.cos(a) * np.cos(b), np.cos(a) * np.sin(b), np.sin(a)], axis=1)
    if task_id == "dtlz7":
        F = np.stack([u, v], axis=1)
        f3 = 2 * (3 - np.sum(F / 2 * (1 + np.sin(3 * np.pi * F)), axis=1))
        return np.concatenate([F, f3[:, None]], axis=1)
    raise KeyError(task_id)


def _farthest_points(P: np.ndarray, k: int) -> np.ndarray:
    """Greedy max-min subset of size k, seeded at the smallest first objective."""
    if k >= len(P):
        return P
    chosen = [int(np.lexsort(P.T[::-1])[0])]
    dist = np.linalg.norm(P - P[chosen[0]], axis=1)
    for _ in range(k - 1):
        j = int(np.argmax(dist))
        chosen.append(j)
        dist = np.minimum(dist, np.linalg.norm(P - P[j], axis=1))
    return P[np.sort(chosen)]


# -- registry ---------------------------------------------------------------------


@dataclass(frozen=True)
class BenchTask:
    spec: TaskSpec
    fn: Callable[[np.ndarray], np.ndarray]

    @property
    def task_id(self) -> str:
        return self.spec.task_id

    @property
    def is_moo(self) -> bool:
        return self.spec.m > 1

    def evaluate(self, x, clip: bool = False) -> np.ndarray:
        """Scores of one design (d,) or a batch (N, d).

        ``clip=True`` projects onto the task box instead of raising.
        """
        X = np.asarray(x, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.spec.d:
            raise DataError(f"{self.task_id} expects {self.spec.d} design coordinates, got {X.shape[1]}")
        if clip:
            X = np.clip(X, self.spec.lower, self.spec.upper)
        elif np.any(X < self.spec.lower) or np.any(X > self.spec.upper):
            raise DataError(f"out-of-bounds design for {self.task_id}")
        Y = self.fn(X)
        return Y[0] if single else Y

    def pf_reference(self, resolution: int = 200) -> np.ndarray:
        if not self.is_moo:
            raise DataError(f"{self.task_id} is single-objective; it has no Pareto front reference")
        dense = _dense_front(self.task_id, max(20 * resolution, 2000))
        dense = dense[pareto_front(dense)]
        return _farthest_points(dense, resolution)


def _task(task_id, d, m, lo, hi, fn, known_optimum=None) -> BenchTask:
    bounds = np.column_stack([np.broadcast_to(lo, d), np.broadcast_to(hi, d)]).astype(float)
    opt = None if known_optimum is None else np.atleast_1d(np.asarray(known_optimum, dtype=float))
    return BenchTask(TaskSpec(task_id, d, m, bounds, opt), fn)


TASKS: dict[str, BenchTask] = {
    "branin": _task("branin", 2, 1, [-5.0, 0.0], [10.0, 15.0], branin, 0.39788735772973816),
    "omnitest": _task("omnitest", 2, 2, 0.0, 6.0, omnitest),
    "zdt1": _task("zdt1", ZDT_DIM, 2, 0.0, 1.0, zdt1),
    "zdt2": _task("zdt2", ZDT_DIM, 2, 0.0, 1.0, zdt2),
    "zdt3": _task("zdt3", ZDT_DIM, 2, 0.0, 1.0, zdt3),
    "dtlz2": _task("dtlz2", DTLZ_DIM, DTLZ_OBJ, 0.0, 1.0, dtlz2),
    "dtlz7": _task("dtlz7", DTLZ_DIM, DTLZ_OBJ, 0.0, 1.0, dtlz7),
}


def get_task(task_id: str) -> BenchTask:
    try:
        return TASKS[task_id.lower()]
    except KeyError:
        raise KeyError(f"unknown task {task_id!r}; known: {', '.join(TASKS)}") from None


def eval_task(task_id: str, x) -> np.ndarray:
    return get_task(task_id).evaluate(x)


def pf_reference(task_id: str, resolution: int = 200) -> np.ndarray:
    return get_task(task_id).pf_reference(resolution)


# -- offline data ---------------------------------------------------------------------


def removal_indices(Y: np.ndarray, fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Indices of the best ``floor(fraction * n)`` samples.

    Single objective: the lowest scores. Several objectives: whole fronts
    in sorted order, the last one thinned at random.
    """
    n = len(Y)
    r = int(np.floor(fraction * n + 1e-9))
    if r == 0:
        return np.zeros(0, dtype=int)
    if Y.shape[1] == 1:
        return np.argsort(Y[:, 0], kind="stable")[:r]
    fronts = non_dominated_sort(Y)
    removed: list[np.ndarray] = []
    left = r
    for k in range(1, fronts.front_count + 1):
        members = fronts.front(k)
        if len(members) <= left:
            removed.append(members)
            left -= len(members)
        else:
            removed.append(rng.choice(members, size=left, replace=False))
            left = 0
        if left == 0:
            break
    return np.sort(np.concatenate(removed))


def generate_dataset(task_id: str, n: int, removal_fraction: float = 0.0, seed: int = 0) -> OfflineDataset:
    if n < 10:
        raise DataError("n must be >= 10")
    if not 0 <= removal_fraction < 1:
        raise DataError("removal_fraction must lie in [0, 1)")
    task = get_task(task_id)
    rng = np.random.default_rng(seed)
    X = task.spec.lower + rng.random((n, task.spec.d)) * (task.spec.upper - task.spec.lower)
    Y = task.evaluate(X)
    drop = removal_indices(Y, removal_fraction, rng)
    if n - len(drop) < 2:
        raise DataError("removal would leave fewer than 2 samples")
    keep = np.setdiff1d(np.arange(n), drop)
    return OfflineDataset(X[keep], Y[keep], task.task_id)

"""Domain types shared by every module: designs, scores, offline datasets.

Designs and scores are plain numpy arrays. A dataset stores them as two
matrices ``X`` (N, d) and ``Y`` (N, m); an augmented sample is the row
``concat(x, y)`` of length d + m, always design-first.

All objectives are minimized internally. Maximization objectives are
negated on ingestion and negated back on export.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

MIN = "min"
MAX = "max"


class DataError(ValueError):
    """Raised when designs/scores violate a shape or finiteness contract."""


@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    d: int
    m: int
    bounds: np.ndarray  # (d, 2) rows of [lo, hi]
    known_optimum: np.ndarray | None = None
    pf_reference: np.ndarray | None = None

    def __post_init__(self):
        bounds = np.asarray(self.bounds, dtype=float).reshape(self.d, 2)
        if np.any(bounds[:, 0] >= bounds[:, 1]):
            raise DataError("task bounds need lo < hi on every coordinate")
        object.__setattr__(self, "bounds", bounds)
        if self.pf_reference is not None and len(self.pf_reference) == 0:
            raise DataError("pf_reference must be nonempty when present")

    @property
    def lower(self) -> np.ndarray:
        return self.bounds[:, 0]

    @property
    def upper(self) -> np.ndarray:
        return self.bounds[:, 1]

    def contains(self, x: np.ndarray) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))


@dataclass(frozen=True)
class OfflineDataset:
    """N augmented samples; ``Y`` is in minimization sense."""

    X: np.ndarray
    Y: np.ndarray
    task_id: str = "custom"
    sense_original: tuple[str, ...] = ()

    def __post_init__(self):
        X = np.array(self.X, dtype=float, ndmin=2)
        Y = np.array(self.Y, dtype=float, ndmin=2)
        if X.shape[0] != Y.shape[0]:
            raise DataError(f"length mismatch: {X.shape[0]} designs vs {Y.shape[0]} scores")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise DataError("non-finite entry in dataset")
        X.setflags(write=False)
        Y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        sense = tuple(self.sense_original) or (MIN,) * Y.shape[1]
        if len(sense) != Y.shape[1] or any(s not in (MIN, MAX) for s in sense):
            raise DataError(f"sense_original must list 'min'/'max' for each of {Y.shape[1]} objectives")
        object.__setattr__(self, "sense_original", sense)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def m(self) -> int:
        return self.Y.shape[1]

    @property
    def samples(self) -> np.ndarray:
        """Augmented samples, shape (N, d + m)."""
        return concat(self.X, self.Y)

    def original_scores(self) -> np.ndarray:
        return apply_sense(self.Y, self.sense_original)

    def subset(self, idx) -> "OfflineDataset":
        return OfflineDataset(self.X[idx], self.Y[idx], self.task_id, self.sense_original)


def concat(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.concatenate([np.asarray(x, dtype=float), np.asarray(y, dtype=float)], axis=-1)


def split(xhat: np.ndarray, d: int) -> tuple[np.ndarray, np.ndarray]:
    xhat = np.asarray(xhat)
    return xhat[..., :d], xhat[..., d:]


def apply_sense(Y: np.ndarray, sense: Sequence[str]) -> np.ndarray:
    """Negate maximization columns. Its own inverse."""
    sign = np.array([-1.0 if s == MAX else 1.0 for s in sense])
    return np.asarray(Y, dtype=float) * sign


def augment(
    designs: Sequence[Sequence[float]],
    scores: Sequence[Sequence[float]],
    sense_original: Sequence[str] | None = None,
    task_id: str = "custom",
) -> OfflineDataset:
    """Pair designs with their scores, storing every objective as minimized."""
    if len(designs) != len(scores):
        raise DataError(f"length mismatch: {len(designs)} designs vs {len(scores)} scores")
    try:
        X = np.array(designs, dtype=float, ndmin=2)
        Y = np.array(scores, dtype=float, ndmin=2)
    except ValueError as exc:
        raise DataError(f"dimension mismatch: {exc}") from None
    if X.ndim != 2 or Y.ndim != 2:
        raise DataError("dimension mismatch: ragged designs or scores")
    m = Y.shape[1]
    sense = tuple(sense_original) if sense_original is not None else (MIN,) * m
    if len(sense) != m:
        raise DataError(f"dimension mismatch: {len(sense)} senses for {m} objectives")
    return OfflineDataset(X, apply_sense(Y, sense), task_id, sense)


@dataclass(frozen=True)
class MinMaxStats:
    """Per-coordinate min/max used for [0, 1] scaling."""

    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def fit(cls, A: np.ndarray) -> "MinMaxStats":
        A = np.asarray(A, dtype=float)
        return cls(A.min(axis=0), A.max(axis=0))

    @property
    def span(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def degenerate(self) -> np.ndarray:
        return ~(self.hi > self.lo)

    def normalize(self, A: np.ndarray) -> np.ndarray:
        span = np.where(self.degenerate, 1.0, self.span)
        out = (np.asarray(A, dtype=float) - self.lo) / span
        # constant coordinates map to 0
        return np.where(self.degenerate, 0.0, out)

    def denormalize(self, A: np.ndarray) -> np.ndarray:
        span = np.where(self.degenerate, 0.0, self.span)
        return np.asarray(A, dtype=float) * span + self.lo

    def to_dict(self) -> dict:
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "MinMaxStats":
        return cls(np.asarray(data["lo"], dtype=float), np.asarray(data["hi"], dtype=float))


# Score statistics are the same object; the alias keeps call sites readable.
ScoreStats = MinMaxStats


def normalize_scores(dataset: OfflineDataset) -> tuple[OfflineDataset, ScoreStats]:
    if dataset.n < 2:
        raise DataError("normalization needs at least two samples")
    stats = ScoreStats.fit(dataset.Y)
    return OfflineDataset(dataset.X, stats.normalize(dataset.Y), dataset.task_id, dataset.sense_original), stats


@dataclass(frozen=True)
class Normalizer:
    """Design and score scalers fitted on a training set."""

    design: MinMaxStats
    score: MinMaxStats
    d: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "d", len(self.design.lo))

    @classmethod
    def fit(cls, dataset: OfflineDataset) -> "Normalizer":
        return cls(MinMaxStats.fit(dataset.X), MinMaxStats.fit(dataset.Y))

    def normalize(self, xhat: np.ndarray) -> np.ndarray:
        x, y = split(xhat, self.d)
        return concat(self.design.normalize(x), self.score.normalize(y))

    def denormalize(self, xhat: np.ndarray) -> np.ndarray:
        x, y = split(xhat, self.d)
        return concat(self.design.denormalize(x), self.score.denormalize(y))

    def to_dict(self) -> dict:
        return {"design": self.design.to_dict(), "score": self.score.to_dict()}

    @classmethod
    def from_dict(cls, data: dict) -> "Normalizer":
        return cls(MinMaxStats.from_dict(data["design"]), MinMaxStats.from_dict(data["score"]))


# -- CSV + sidecar -----------------------------------------------------------


def fmt_float(v: float) -> str:
    # repr is the shortest string that round-trips exactly
    return repr(float(v))


def sidecar_path(csv_path: Path) -> Path:
    csv_path = Path(csv_path)
    return csv_path.with_name(csv_path.stem + ".json")


def write_dataset_csv(path: Path, X: np.ndarray, Y: np.ndarray) -> str:
    """Render rows as CSV text (header ``x0..,y0..``). Returns the text."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    d, m = X.shape[1], Y.shape[1]
    lines = [",".join([f"x{i}" for i in range(d)] + [f"y{j}" for j in range(m)])]
    for row in np.concatenate([X, Y], axis=1):
        lines.append(",".join(fmt_float(v) for v in row))
    text = "\n".join(lines) + "\n"
    if path is not None:
        write_atomic(Path(path), text)
    return text


def read_dataset_csv(path: Path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty CSV")
    header = rows[0]
    d = sum(1 for h in header if h.startswith("x"))
    m = sum(1 for h in header if h.startswith("y"))
    expected = [f"x{i}" for i in range(d)] + [f"y{j}" for j in range(m)]
    if header != expected or d == 0:
        raise DataError(f"{path}: header must be x0..x{{d-1}},y0..y{{m-1}}, got {header}")
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    if data.size == 0:
        data = np.zeros((0, d + m))
    if data.shape[1] != d + m:
        raise DataError(f"{path}: row width does not match header")
    return data[:, :d], data[:, d:]


def save_dataset(path: Path, dataset: OfflineDataset, bounds: np.ndarray | None = None) -> list[Path]:
    """Write CSV in original objective sense plus the JSON sidecar."""
    path = Path(path)
    write_dataset_csv(path, dataset.X, dataset.original_scores())
    meta = {
        "task_id": dataset.task_id,
        "d": dataset.d,
        "m": dataset.m,
        "sense_original": list(dataset.sense_original),
        "bounds": None if bounds is None else np.asarray(bounds, dtype=float).tolist(),
    }
    side = sidecar_path(path)
    write_atomic(side, json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return [path, side]


def load_dataset(path: Path) -> tuple[OfflineDataset, dict]:
    path = Path(path)
    X, Y = read_dataset_csv(path)
    side = sidecar_path(path)
    meta: dict = {}
    if side.exists():
        meta = json.loads(side.read_text(encoding="utf-8"))
        if meta.get("d", X.shape[1]) != X.shape[1] or meta.get("m", Y.shape[1]) != Y.shape[1]:
            raise DataError(f"{side}: d/m disagree with {path}")
    ds = augment(X, Y, meta.get("sense_original"), meta.get("task_id", "custom"))
    return ds, meta


def write_atomic(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)

"""Task-unit wrappers around training, sampling, prediction and evaluation.

The modules below this one work in normalized, minimization-sense units.
These helpers convert at the boundary so callers can think in the units of
the task itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import guidance, scaling
from .bench import BenchTask
from .core import OfflineDataset, apply_sense
from .guidance import GuidanceConfig, SampleResult
from .pareto import EvalReport, evaluate, pareto_front
from .scaling import ScalingConfig
from .training import Checkpoint


class PipelineError(ValueError):
    pass


def normalized_dataset(ck: Checkpoint, dataset: OfflineDataset) -> OfflineDataset:
    nz = ck.normalizer
    return OfflineDataset(nz.design.normalize(dataset.X), nz.score.normalize(dataset.Y), dataset.task_id, dataset.sense_original)


def internal_scores(ck: Checkpoint, y_task) -> np.ndarray:
    """Task-unit scores (original sense) to normalized minimization units."""
    Y = np.atleast_2d(np.asarray(y_task, dtype=float))
    return ck.normalizer.score.normalize(apply_sense(Y, ck.sense_original))


def default_targets(
    ck: Checkpoint,
    K: int,
    task: BenchTask | None = None,
    dataset: OfflineDataset | None = None,
    resolution: int = 200,
) -> np.ndarray:
    """Preferred scores (normalized) when the caller gives none.

    Known optimum for single-objective tasks, the analytic front for
    multi-objective ones; otherwise the best training score or the
    shifted training front.
    """
    nz = ck.normalizer
    m = len(nz.score.lo)
    if task is not None and m == 1 and task.spec.known_optimum is not None:
        return nz.score.normalize(task.spec.known_optimum[None, :])
    if task is not None and m > 1:
        return nz.score.normalize(task.pf_reference(min(resolution, K)))
    if dataset is None:
        raise PipelineError("no y_pref given and no task or training data to derive one from")
    Y = nz.score.normalize(dataset.Y)
    if m == 1:
        return Y.min(axis=0, keepdims=True)
    return guidance.front_targets(Y[pareto_front(Y)], K)


@dataclass
class Candidates:
    X: np.ndarray  # designs, task units
    Y: np.ndarray  # model-generated scores, minimization sense, task units
    result: SampleResult
    fidelity: float | None = None

    @property
    def finite(self) -> np.ndarray:
        return self.result.finite


def generate(
    ck: Checkpoint,
    cfg: GuidanceConfig,
    K: int,
    scfg: ScalingConfig | None = None,
    dataset: OfflineDataset | None = None,
    fidelity: float | None = None,
) -> Candidates:
    """Sample K candidates and map them back to task units.

    With scaling on and a training ``dataset`` given, the fidelity gate is
    evaluated first (unless ``fidelity`` is passed in). Without either the
    gate stays open.
    """
    net, sched = ck.net, ck.schedule
    if scfg is None or scfg.mode == "none":
        res = guidance.sample(net, sched, cfg, K)
    else:
        if fidelity is None and dataset is not None:
            fidelity = scaling.fidelity(net, sched, normalized_dataset(ck, dataset), scfg.M, cfg.seed, cfg.steps)
        res = scaling.scaled_sample(net, sched, cfg, scfg, K, fidelity)
    S = ck.normalizer.denormalize(res.samples)
    return Candidates(S[:, : net.d], S[:, net.d :], res, fidelity)


@dataclass(frozen=True)
class ScorePrediction:
    y: np.ndarray  # task units, original sense
    converged: bool


def predict(ck: Checkpoint, x_pref, cfg: GuidanceConfig | None = None, chains: int = 1) -> ScorePrediction:
    x_pref = np.asarray(x_pref, dtype=float).reshape(-1)
    if ck.bounds is not None:
        b = np.asarray(ck.bounds)
        if x_pref.size != len(b) or np.any(x_pref < b[:, 0]) or np.any(x_pref > b[:, 1]):
            raise PipelineError("x_pref outside the task bounds")
    p = guidance.predict_scores(ck.net, ck.schedule, ck.normalizer.design.normalize(x_pref), cfg, chains=chains)
    y = ck.normalizer.score.denormalize(p.y)
    return ScorePrediction(apply_sense(y, ck.sense_original), p.converged)


def true_scores(task: BenchTask, X: np.ndarray) -> np.ndarray:
    """Oracle scores of generated designs, projected onto the task box first."""
    X = np.atleast_2d(X)
    Y = np.full((len(X), task.spec.m), np.nan)
    ok = np.all(np.isfinite(X), axis=1)
    if ok.any():
        Y[ok] = task.evaluate(X[ok], clip=True)
    return Y


def evaluate_candidates(
    task: BenchTask,
    cand_scores: np.ndarray,
    train_scores: np.ndarray,
    resolution: int = 200,
    seed: int = 0,
) -> EvalReport:
    """EvalReport of candidate scores against the task reference.

    Multi-objective tasks use the discretized front; single-objective tasks
    use the known optimum as a one-point front.
    """
    if task.is_moo:
        ref = task.pf_reference(resolution)
    elif task.spec.known_optimum is not None:
        ref = task.spec.known_optimum[None, :]
    else:
        ref = np.atleast_2d(np.asarray(train_scores).min(axis=0))
    return evaluate(cand_scores, train_scores, ref, seed=seed)

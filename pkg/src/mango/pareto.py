"""Pareto dominance, non-dominated sorting, hypervolume and IGD.

Everything assumes minimization.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

MC_SAMPLES = 1_000_000
_BLOCK = 2048


def dominates(a, b) -> bool:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return bool(np.all(a <= b) and np.any(a < b))


def _dominance_rows(P: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Boolean matrix ``D[i, j] = P[rows[i]] dominates P[j]``."""
    A = P[rows][:, None, :]
    le = np.all(A <= P[None, :, :], axis=2)
    lt = np.any(A < P[None, :, :], axis=2)
    return le & lt


@dataclass(frozen=True)
class FrontAssignment:
    front_of: np.ndarray  # 1-based front index per point
    front_count: int

    def front(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.front_of == k)


def non_dominated_sort(points) -> FrontAssignment:
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    if P.shape[0] == 0:
        raise ValueError("empty input")
    if P.shape[1] == 1:
        # fronts are the distinct values in ascending order
        _, inv = np.unique(P[:, 0], return_inverse=True)
        front_of = inv.reshape(-1) + 1
    elif P.shape[1] == 2:
        front_of = _sort_2d(P)
    else:
        front_of = _sort_general(P)
    return FrontAssignment(front_of.astype(int), int(front_of.max()))


def _sort_2d(P: np.ndarray) -> np.ndarray:
    # Sweep in lexicographic order. A front's last member has the smallest
    # f2 seen in it, so "dominated by front k" only needs that member, and
    # the predicate is monotone in k, which allows a binary search.
    order = np.lexsort((P[:, 1], P[:, 0]))
    last: list[tuple[float, float]] = []
    front_of = np.empty(len(P), dtype=int)

    for idx in order:
        f1, f2 = P[idx]

        def dominated(k):
            q1, q2 = last[k]
            return q2 < f2 or (q2 == f2 and q1 < f1)

        lo, hi = 0, len(last)
        while lo < hi:
            mid = (lo + hi) // 2
            if dominated(mid):
                lo = mid + 1
            else:
                hi = mid
        if lo == len(last):
            last.append((f1, f2))
        else:
            last[lo] = (f1, f2)
        front_of[idx] = lo + 1
    return front_of


def _sort_general(P: np.ndarray) -> np.ndarray:
    # Dominance rows are computed in blocks and only for the current front,
    # so memory stays O(block * N).
    n = len(P)
    counts = np.zeros(n, dtype=np.int64)
    for s in range(0, n, _BLOCK):
        counts += _dominance_rows(P, np.arange(s, min(s + _BLOCK, n))).sum(axis=0)
    front_of = np.zeros(n, dtype=int)
    current = np.flatnonzero(counts == 0)
    k = 1
    while current.size:
        front_of[current] = k
        for s in range(0, current.size, _BLOCK):
            counts -= _dominance_rows(P, current[s : s + _BLOCK]).sum(axis=0)
        counts[current] = -1
        current = np.flatnonzero(counts == 0)
        k += 1
    return front_of


def non_dominated_sort_naive(points) -> FrontAssignment:
    """Peel fronts with an explicit O(N^2) pairwise check. Reference only."""
    P = np.asarray(points, dtype=float)
    remaining = list(range(len(P)))
    front_of = np.zeros(len(P), dtype=int)
    k = 0
    while remaining:
        k += 1
        front = [i for i in remaining if not any(dominates(P[j], P[i]) for j in remaining if j != i)]
        for i in front:
            front_of[i] = k
        remaining = [i for i in remaining if front_of[i] == 0]
    return FrontAssignment(front_of, k)


def pareto_front(points) -> np.ndarray:
    """Indices of the non-dominated points."""
    return non_dominated_sort(points).front(1)


# -- hypervolume ---------------------------------------------------------------


def _inside(P: np.ndarray, ref: np.ndarray) -> np.ndarray:
    return P[np.all(P < ref, axis=1)]


def hypervolume(points, ref, *, n_samples: int = MC_SAMPLES, seed: int = 0) -> float:
    """Dominated volume below ``ref``.

    Exact for one and two objectives; Monte-Carlo for three or more
    (use :func:`hypervolume_mc` to get the standard error).
    """
    ref = np.asarray(ref, dtype=float)
    P = np.asarray(points, dtype=float).reshape(-1, ref.size)
    P = _inside(P, ref)
    if len(P) == 0:
        return 0.0
    if ref.size == 1:
        return float(ref[0] - P[:, 0].min())
    if ref.size == 2:
        return _hv_2d(P, ref)
    return hypervolume_mc(P, ref, n_samples=n_samples, seed=seed)[0]


def _hv_2d(P: np.ndarray, ref: np.ndarray) -> float:
    P = P[np.lexsort((P[:, 1], P[:, 0]))]
    hv, best_f2 = 0.0, ref[1]
    for f1, f2 in P:
        if f2 < best_f2:
            hv += (ref[0] - f1) * (best_f2 - f2)
            best_f2 = f2
    return float(hv)


def hypervolume_mc(points, ref, *, n_samples: int = MC_SAMPLES, seed: int = 0, chunk: int = 50_000) -> tuple[float, float]:
    """Monte-Carlo hypervolume and its standard error.

    Samples uniformly in the box ``[ideal, ref]``; chunks are combined in
    a fixed order so the estimate depends only on ``seed``.
    """
    ref = np.asarray(ref, dtype=float)
    P = _inside(np.asarray(points, dtype=float).reshape(-1, ref.size), ref)
    if len(P) == 0:
        return 0.0, 0.0
    P = P[pareto_front(P)]
    lo = P.min(axis=0)
    box = float(np.prod(ref - lo))
    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    while done < n_samples:
        b = min(chunk, n_samples - done)
        U = lo + rng.random((b, ref.size)) * (ref - lo)
        dom = np.zeros(b, dtype=bool)
        for p in P:
            dom |= np.all(U >= p, axis=1)
        hits += int(dom.sum())
        done += b
    frac = hits / n_samples
    return box * frac, box * np.sqrt(frac * (1 - frac) / n_samples)


# -- IGD ------------------------------------------------------------------------


def igd(candidates, pf_reference) -> float:
    """Mean distance from each reference point to its nearest candidate."""
    C = np.asarray(candidates, dtype=float)
    R = np.asarray(pf_reference, dtype=float)
    if C.ndim == 1:
        C = C[:, None]
    if R.ndim == 1:
        R = R[:, None]
    if len(C) == 0 or len(R) == 0:
        raise ValueError("empty input")
    if C.shape[1] != R.shape[1]:
        raise ValueError("candidates and reference differ in objective count")
    best = np.full(len(R), np.inf)
    for s in range(0, len(C), _BLOCK):
        D = np.linalg.norm(R[:, None, :] - C[None, s : s + _BLOCK, :], axis=2)
        best = np.minimum(best, D.min(axis=1))
    return float(best.mean())


# -- reports ----------------------------------------------------------------------


@dataclass(frozen=True)
class EvalReport:
    hv: float
    igd: float
    normalized_hv: float
    normalized_igd: float
    k: int
    normalized: bool = True
    best_score: float | None = None
    train_best: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def csv_header(self) -> str:
        return ",".join(self.to_dict().keys())

    def csv_row(self) -> str:
        vals = []
        for v in self.to_dict().values():
            vals.append("" if v is None else repr(v) if isinstance(v, float) else str(v))
        return ",".join(vals)


def reference_point(train_scores) -> np.ndarray:
    """Training nadir pushed out by 10% of each objective's range."""
    Y = np.asarray(train_scores, dtype=float)
    lo, hi = Y.min(axis=0), Y.max(axis=0)
    return hi + 0.1 * (hi - lo)


def evaluate(candidate_scores, train_scores, pf_reference, *, seed: int = 0) -> EvalReport:
    """HV and IGD of candidates, normalized by the training best front.

    All scores in minimization sense and task units. With a zero
    denominator the raw values are reported and ``normalized`` is False.
    """
    C = np.atleast_2d(np.asarray(candidate_scores, dtype=float))
    Y = np.atleast_2d(np.asarray(train_scores, dtype=float))
    C = C[np.all(np.isfinite(C), axis=1)]
    ref = reference_point(Y)
    front = Y[pareto_front(Y)]
    R = np.asarray(pf_reference, dtype=float).reshape(-1, Y.shape[1])
    hv = hypervolume(C, ref, seed=seed) if len(C) else 0.0
    ig = igd(C, R) if len(C) else float("inf")
    hv_train = hypervolume(front, ref, seed=seed)
    igd_train = igd(front, R)
    ok = hv_train > 0 and igd_train > 0
    return EvalReport(
        hv=hv,
        igd=ig,
        normalized_hv=hv / hv_train if ok else hv,
        normalized_igd=ig / igd_train if ok else ig,
        k=len(C),
        normalized=ok,
        best_score=float(C[:, 0].min()) if Y.shape[1] == 1 and len(C) else None,
        train_best=float(Y[:, 0].min()) if Y.shape[1] == 1 else None,
    )

"""Independent reference implementations used only by the tests."""

import itertools

import numpy as np


def fronts_pairwise(P):
    """Peel fronts with an explicit O(N^2) dominance check per round."""
    P = np.asarray(P, dtype=float)
    n = len(P)
    front = np.zeros(n, dtype=int)
    left = set(range(n))
    k = 0
    while left:
        k += 1
        cur = [i for i in left if not any(
            np.all(P[j] <= P[i]) and np.any(P[j] < P[i]) for j in left if j != i)]
        for i in cur:
            front[i] = k
        left -= set(cur)
    return front


def hv_inclusion_exclusion(P, ref):
    """Exact union volume of boxes [p, ref] by inclusion-exclusion (small N only)."""
    P = np.asarray(P, dtype=float)
    ref = np.asarray(ref, dtype=float)
    P = P[np.all(P < ref, axis=1)]
    total = 0.0
    for r in range(1, len(P) + 1):
        for idx in itertools.combinations(range(len(P)), r):
            corner = P[list(idx)].max(axis=0)
            total += (-1) ** (r + 1) * np.prod(ref - corner)
    return total


def hv_monte_carlo(P, ref, n, seed):
    """Plain MC over the box [min(P), ref]; returns (estimate, standard error)."""
    P = np.asarray(P, dtype=float)
    ref = np.asarray(ref, dtype=float)
    lo = P.min(axis=0)
    vol = np.prod(ref - lo)
    rng = np.random.default_rng(seed)
    U = lo + rng.random((n, len(ref))) * (ref - lo)
    hit = np.zeros(n, dtype=bool)
    for p in P:
        hit |= np.all(U >= p, axis=1)
    f = hit.mean()
    return vol * f, vol * np.sqrt(f * (1 - f) / n)


def igd_loops(C, R):
    return float(np.mean([min(np.linalg.norm(np.subtract(r, c)) for c in C) for r in R]))

"""Zero-sum policy selection: utility histories, an exact maximin solver,
opponent classifiers, action correlation and the ensemble controllers.

The defender keeps an E x L matrix of bounded utility queues (policies vs
observed opponent classes), solves the averaged matrix as a zero-sum game,
samples the policy to run from the maximin mixture, and trains every policy
on replayed records with a correlation-penalised dual reward.
"""
from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass

import numpy as np


class UtilityHistory:
    """E x L grid of bounded utility queues with running-mean defaults.

    Cells nobody visited yet report the running mean of everything observed
    so far (0 before any observation), so early strategy solves see a flat
    landscape instead of arbitrary zeros.
    """

    def __init__(self, n_policies: int, n_classes: int, capacity: int = 20):
        if n_policies < 1 or n_classes < 1 or capacity < 1:
            raise ValueError("history dimensions must be positive")
        self.capacity = capacity
        self.queues = [[deque(maxlen=capacity) for _ in range(n_classes)]
                       for _ in range(n_policies)]
        self._sum = 0.0
        self._count = 0

    @property
    def shape(self) -> tuple[int, int]:
        return (len(self.queues), len(self.queues[0]))

    def append(self, policy: int, opp_class: int, utility: float) -> None:
        self.queues[policy][opp_class].append(float(utility))
        self._sum += float(utility)
        self._count += 1

    def seed_random(self, rng: np.random.Generator, scale: float) -> None:
        """Optional first-visit bootstrap: one uniform draw per cell."""
        for row in self.queues:
            for q in row:
                if not q:
                    u = float(rng.uniform(0.0, scale))
                    q.append(u)
                    self._sum += u
                    self._count += 1

    def averages(self) -> np.ndarray:
        default = self._sum / self._count if self._count else 0.0
        e, l = self.shape
        out = np.full((e, l), default)
        for i in range(e):
            for j in range(l):
                q = self.queues[i][j]
                if q:
                    out[i, j] = sum(q) / len(q)
        return out


@dataclass
class MixedStrategy:
    sigma: np.ndarray
    value: float


def solve_zero_sum(payoff: np.ndarray, tol: float = 1e-9) -> MixedStrategy:
    """Exact maximin mixture for the row player of a zero-sum matrix game.

    Enumerates support pairs in increasing size, solving the equalising
    linear system on each; the first support whose probabilities are
    non-negative and whose off-support deviations are unprofitable is the
    answer.  Intended for the small matrices of the ensemble layer.
    """
    u = np.asarray(payoff, dtype=float)
    if u.ndim != 2 or u.size == 0:
        raise ValueError("payoff must be a non-empty 2-D matrix")
    n_r, n_c = u.shape
    span = max(u.max() - u.min(), 1.0)
    eps = tol * span
    for size in range(1, min(n_r, n_c) + 1):
        for rows in itertools.combinations(range(n_r), size):
            for cols in itertools.combinations(range(n_c), size):
                got = _try_support(u, rows, cols, eps)
                if got is not None:
                    return got
    raise RuntimeError("support enumeration failed; payoff matrix degenerate "
                       "beyond tolerance")


def _try_support(u: np.ndarray, rows: tuple, cols: tuple, eps: float
                 ) -> MixedStrategy | None:
    k = len(rows)
    sub = u[np.ix_(rows, cols)]
    # row mixture x on `rows`: x^T sub = v 1, sum x = 1
    a = np.zeros((k + 1, k + 1))
    a[:k, :k] = sub.T
    a[:k, k] = -1.0
    a[k, :k] = 1.0
    b = np.zeros(k + 1)
    b[k] = 1.0
    try:
        sol = np.linalg.solve(a, b)
    except np.linalg.LinAlgError:
        return None
    x = sol[:k]
    v = sol[k]
    if np.any(x < -eps):
        return None
    # column mixture y on `cols`: sub y = v 1, sum y = 1
    a2 = np.zeros((k + 1, k + 1))
    a2[:k, :k] = sub
    a2[:k, k] = -1.0
    a2[k, :k] = 1.0
    try:
        sol2 = np.linalg.solve(a2, b)
    except np.linalg.LinAlgError:
        return None
    y = sol2[:k]
    if np.any(y < -eps):
        return None
    sigma = np.zeros(u.shape[0])
    sigma[list(rows)] = np.clip(x, 0.0, None)
    sigma /= sigma.sum()
    tau = np.zeros(u.shape[1])
    tau[list(cols)] = np.clip(y, 0.0, None)
    tau /= tau.sum()
    # optimality: no column pushes below v, no row rises above v
    col_vals = sigma @ u
    if col_vals.min() < v - eps:
        return None
    row_vals = u @ tau
    if row_vals.max() > v + eps:
        return None
    return MixedStrategy(sigma=sigma, value=float(v))


def correlation(a: np.ndarray, b: np.ndarray) -> int:
    """Number of coordinates where both flattened binary actions fire."""
    fa = np.asarray(a).ravel().astype(bool)
    fb = np.asarray(b).ravel().astype(bool)
    if fa.shape != fb.shape:
        raise ValueError("actions must have matching sizes")
    return int(np.logical_and(fa, fb).sum())


def dual_reward(utility: float, policy: int, sigma: np.ndarray,
                correlations: np.ndarray, zeta: float) -> float:
    """Utility minus the similarity penalty against the other policies:
    R(e) = u - zeta * sum_{e' != e} sigma[e'] * corr(e, e')."""
    penalty = 0.0
    for e, s in enumerate(sigma):
        if e != policy:
            penalty += s * correlations[e]
    return utility - zeta * penalty


def classify_victim(entry_queues: list[np.ndarray], realized: np.ndarray) -> int:
    """Pick which lagged rate snapshot best explains the realised rates.

    entry_queues: one array per used (user, channel) pair, oldest to newest,
    as stored in the rate history.  Candidates are lags 1..4 behind the
    newest entry plus the per-pair minimum; short queues fall back to their
    minimum for missing lags.  Returns the 1-based candidate index with the
    smallest summed squared distance; ties go to the lowest index.
    """
    if not entry_queues:
        return 1
    realized = np.asarray(realized, dtype=float)
    dists = np.zeros(5)
    for q, r in zip(entry_queues, realized):
        if q.size == 0:
            continue
        qmin = q.min()
        for lag in range(1, 5):
            val = q[-lag] if q.size >= lag else qmin
            dists[lag - 1] += (val - r) ** 2
        dists[4] += (qmin - r) ** 2
    return int(np.argmin(dists)) + 1


class ListenDiffClassifier:
    """Two-way jammer-side classifier on the summed listening drift.

    Class 1 when the current summed |listen(t+1) - listen(t-1)| falls below
    the running mean of the recent window, class 2 otherwise (ties to 2).
    """

    def __init__(self, window: int = 20):
        self.diffs: deque[float] = deque(maxlen=window)

    def classify(self, diff_sum: float) -> int:
        label = 1 if self.diffs and diff_sum < np.mean(self.diffs) else 2
        self.diffs.append(float(diff_sum))
        return label


class NashEnsemble:
    """Selection core shared by the victim and jammer ensembles.

    Keeps the utility history, refreshes the maximin mixture, and samples the
    policy to execute.  A small uniform floor on the sampling distribution
    keeps every policy's history cells alive; the solved sigma itself is
    exposed unfloored.
    """

    def __init__(self, n_policies: int, n_classes: int, capacity: int = 20,
                 zeta: float = 0.1, floor: float = 0.05):
        self.history = UtilityHistory(n_policies, n_classes, capacity)
        self.n_policies = n_policies
        self.n_classes = n_classes
        self.zeta = zeta
        self.floor = floor
        self.sigma = np.full(n_policies, 1.0 / n_policies)
        self.value = 0.0

    def refresh(self) -> np.ndarray:
        sol = solve_zero_sum(self.history.averages())
        self.sigma = sol.sigma
        self.value = sol.value
        return self.sigma

    def select(self, rng: np.random.Generator) -> int:
        probs = (1.0 - self.floor) * self.sigma + self.floor / self.n_policies
        probs = probs / probs.sum()
        return int(rng.choice(self.n_policies, p=probs))

    def observe(self, policy: int, opp_class: int, utility: float) -> None:
        self.history.append(policy, opp_class - 1, utility)


class UniformEnsemble:
    """Averaged-ensemble baseline: uniform selection, no opponent model."""

    def __init__(self, n_policies: int):
        self.n_policies = n_policies
        self.sigma = np.full(n_policies, 1.0 / n_policies)

    def refresh(self) -> np.ndarray:
        return self.sigma

    def select(self, rng: np.random.Generator) -> int:
        return int(rng.integers(0, self.n_policies))

    def observe(self, policy: int, opp_class: int, utility: float) -> None:
        pass

"""Maximum-likelihood fitting of the RMJ model from (ranked) choice data.

The central-ranking MLE is a minimum-weight feedback arc set on the weighted
tournament ``w``: find the ranking minimising ``sum_{i above j} w[j, i]``.
It is solved exactly by dynamic programming over item subsets for small
universes and by insertion local search otherwise. The dispersion MLE is then
a one-dimensional convex problem in ``alpha = -ln q``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Literal

import numpy as np

from .choice import ChoiceData, DataLike, as_choice_data, log_likelihood_at
from .ranking import Ranking

log = logging.getLogger(__name__)

DEFAULT_EXACT_CAP = 20
DEFAULT_RESTARTS = 20
ALPHA_MIN = 1e-6
ALPHA_MAX = 50.0


@dataclass(frozen=True)
class FitResult:
    center: Ranking
    q_hat: float
    objective: float
    solver_status: Literal["exact", "heuristic"]
    log_likelihood: float

    @property
    def alpha_hat(self) -> float:
        return -math.log(self.q_hat)


def check_weights(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError(f"weight matrix must be square, got shape {w.shape}")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError("weights must be finite and nonnegative")
    if np.any(np.diag(w) != 0):
        raise ValueError("weight matrix must have a zero diagonal")
    return w


def accumulate_weights_k1(data: DataLike, n: int | None = None) -> np.ndarray:
    """``w[i, j]`` = number of records where ``i`` and ``j`` were shown together and ``i`` was picked."""
    if isinstance(data, ChoiceData):
        if np.any(data.ks != 1):
            raise ValueError("accumulate_weights_k1 needs single-choice records; use accumulate_weights_topk")
        cd = data
    else:
        data = list(data)
        bad = [t for t, ob in enumerate(data) if ob.k != 1]
        if bad:
            raise ValueError(f"records {bad[:5]} have k > 1; use accumulate_weights_topk")
        cd = as_choice_data(data, n)
    w = np.zeros((cd.n, cd.n))
    for S, resp, c in zip(cd.displays, cd.responses, cd.counts):
        i = resp[0]
        for j in S.items:
            if j != i:
                w[i, j] += c
    return w


def accumulate_weights_topk(data: DataLike, n: int | None = None, multipliers=None) -> np.ndarray:
    """Generalised weights for ranked responses.

    Each record adds ``|S| - h`` to ``w[x_h, x_{h+1}]`` for consecutive listed
    items and 1 to ``w[x_k, j]`` for every unlisted ``j`` in the display.
    ``multipliers`` (one per unique observation of the compiled data) scale
    each record's contribution, as the EM M-step needs.
    """
    cd = as_choice_data(data, n)
    scale = cd.counts if multipliers is None else cd.counts * np.asarray(multipliers, dtype=float)
    flat = cd.t_first * cd.n + cd.t_second
    w = np.bincount(flat, weights=cd.t_value * scale[cd.t_obs], minlength=cd.n * cd.n)
    return w.reshape(cd.n, cd.n)


def fas_objective(w: np.ndarray, ranking: Ranking) -> float:
    """``sum over i ranked above j of w[j, i]``."""
    order = np.asarray(ranking.order)
    wp = np.asarray(w)[np.ix_(order, order)]
    return float(np.tril(wp, -1).sum())


def _subset_dp(w: np.ndarray) -> np.ndarray:
    """``best[T]``: least internal disagreement over orderings of the item subset ``T``."""
    n = w.shape[0]
    size = 1 << n
    best = np.full(size, np.inf)
    best[0] = 0.0
    masks = np.arange(size, dtype=np.int64)
    bits = ((masks[:, None] >> np.arange(n)) & 1).astype(np.uint8)
    popcount = bits.sum(axis=1)
    for s in range(1, n + 1):
        layer = masks[popcount == s]
        lb = bits[layer].astype(float)
        # cost[m, j]: putting j on top of the rest of layer[m] disagrees with w[i, j] for every other i
        cost = lb @ w
        cand = np.full(lb.shape, np.inf)
        for j in range(n):
            has = lb[:, j] == 1
            cand[has, j] = best[layer[has] ^ (1 << j)] + cost[has, j]
        best[layer] = cand.min(axis=1)
    return best


def solve_center_exact(w, cap: int = DEFAULT_EXACT_CAP) -> tuple[Ranking, float]:
    """Optimal ranking by subset dynamic programming, ``O(2^n n^2)`` time and ``O(2^n n)`` memory.

    Among optimal rankings the lexicographically smallest is returned: the
    ranking is rebuilt top-down, always taking the smallest item that still
    admits an optimal completion.
    """
    w = check_weights(w)
    n = w.shape[0]
    if n > cap:
        raise ValueError(f"exact solver capped at {cap} items, got {n}; use solve_center_heuristic")
    if n == 0:
        return Ranking(()), 0.0
    best = _subset_dp(w)
    full = (1 << n) - 1
    tol = 1e-9 * max(1.0, float(np.abs(w).sum()))
    order: list[int] = []
    rest = full
    while rest:
        members = [j for j in range(n) if rest >> j & 1]
        for j in members:
            sub = rest ^ (1 << j)
            c = sum(w[i, j] for i in members if i != j)
            if best[sub] + c <= best[rest] + tol:
                order.append(j)
                rest = sub
                break
        else:  # pragma: no cover - guarded by the DP recurrence
            raise RuntimeError("failed to reconstruct an optimal ranking")
    ranking = Ranking(tuple(order))
    return ranking, fas_objective(w, ranking)


def borda_order(w: np.ndarray) -> list[int]:
    """Items by descending net score ``sum_j (w[i, j] - w[j, i])``, ties by label."""
    score = w.sum(axis=1) - w.sum(axis=0)
    return sorted(range(w.shape[0]), key=lambda i: (-score[i], i))


def insertion_local_search(order: list[int], w: np.ndarray, eps: float = 1e-12) -> list[int]:
    """Apply best single-item reinsertion moves until none improves the objective."""
    order = list(order)
    n = len(order)
    net = w - w.T  # net[x, y] > 0: evidence favours x above y
    improved = True
    while improved:
        improved = False
        for x in list(order):
            p = order.index(x)
            row = net[x, order]
            # moving x up past order[r..p-1] changes the objective by sum(-row[r..p-1])
            up = np.cumsum(-row[:p][::-1])[::-1] if p else np.empty(0)
            down = np.cumsum(row[p + 1:]) if p < n - 1 else np.empty(0)
            best_delta, target = 0.0, p
            if up.size:
                r = int(np.argmin(up))
                if up[r] < best_delta - eps:
                    best_delta, target = float(up[r]), r
            if down.size:
                r = int(np.argmin(down))
                if down[r] < best_delta - eps:
                    best_delta, target = float(down[r]), p + 1 + r
            if target != p:
                order.pop(p)
                order.insert(target, x)
                improved = True
    return order


def solve_center_heuristic(
    w,
    rng: np.random.Generator | None = None,
    restarts: int = DEFAULT_RESTARTS,
) -> tuple[Ranking, float]:
    """Best local optimum over seeded restarts.

    Restart 0 starts from :func:`borda_order`; the others from uniformly random
    permutations. The result is never worse than the Borda start. Equal
    objectives resolve to the lexicographically smallest ranking.
    """
    w = check_weights(w)
    n = w.shape[0]
    if rng is None:
        rng = np.random.default_rng(0)
    candidates = [insertion_local_search(borda_order(w), w)]
    for _ in range(max(restarts, 1) - 1):
        start = [int(x) for x in rng.permutation(n)]
        candidates.append(insertion_local_search(start, w))
    best = min(candidates, key=lambda o: (round(fas_objective(w, Ranking(tuple(o))), 9), o))
    ranking = Ranking(tuple(best))
    return ranking, fas_objective(w, ranking)


def solve_center(w, cap: int = DEFAULT_EXACT_CAP, rng=None, restarts: int = DEFAULT_RESTARTS):
    """Exact when ``n <= cap``, heuristic otherwise. Returns ``(ranking, objective, status)``."""
    w = check_weights(w)
    if w.shape[0] <= cap:
        ranking, obj = solve_center_exact(w, cap)
        return ranking, obj, "exact"
    ranking, obj = solve_center_heuristic(w, rng, restarts)
    return ranking, obj, "heuristic"


def _expected_rank(i: np.ndarray, alpha: float) -> np.ndarray:
    """Mean of ``P(j) ∝ exp(-j alpha)`` on ``{0..i-1}``, i.e. ``d/dalpha`` of ``-log sum_j e^{-j alpha}``."""
    # 1/(e^a - 1) - i/(e^{i a} - 1), written with expm1 to stay accurate for tiny alpha
    i = np.asarray(i, dtype=float)
    with np.errstate(over="ignore"):
        small = 1.0 / np.expm1(alpha) - i / np.expm1(i * alpha)
    return np.where(i <= 1, 0.0, small)


@dataclass
class DispersionProblem:
    """``loss(alpha) = alpha * disagreement + sum_i count[i] * log sum_{j<i} e^{-j alpha}``.

    ``sizes``/``counts`` list each normaliser term ``log sum_{j<i} e^{-j alpha}``
    with its total (possibly fractional) multiplicity.
    """

    disagreement: float
    sizes: np.ndarray
    counts: np.ndarray
    _norms: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_data(cls, cd: ChoiceData, center: Ranking, multipliers=None) -> "DispersionProblem":
        scale = cd.counts if multipliers is None else cd.counts * np.asarray(multipliers, dtype=float)
        stat = float(np.dot(scale, cd.stats(center)))
        terms: dict[int, float] = {}
        for m, k, c in zip(cd.sizes.tolist(), cd.ks.tolist(), scale.tolist()):
            for i in range(m - k + 1, m + 1):
                terms[i] = terms.get(i, 0.0) + c
        sizes = np.array(sorted(terms), dtype=float)
        counts = np.array([terms[int(i)] for i in sizes])
        return cls(stat, sizes, counts)

    def derivative(self, alpha: float) -> float:
        return self.disagreement - float(np.dot(self.counts, _expected_rank(self.sizes, alpha)))

    def loss(self, alpha: float) -> float:
        total = alpha * self.disagreement
        for i, c in zip(self.sizes.tolist(), self.counts.tolist()):
            j = np.arange(int(i))
            total += c * float(np.log(np.exp(-j * alpha).sum()))
        return total


def minimize_alpha(problem: DispersionProblem, lo: float = ALPHA_MIN, hi: float = ALPHA_MAX, tol: float = 1e-10) -> float:
    """Bisection on the increasing derivative; boundary clamps when it has no sign change."""
    if problem.derivative(hi) <= 0:
        return hi
    if problem.derivative(lo) >= 0:
        return lo
    scale = max(1.0, abs(problem.disagreement))
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        g = problem.derivative(mid)
        if abs(g) <= tol * scale or hi - lo < 1e-14:
            return mid
        if g > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def solve_dispersion(center: Ranking, data: DataLike, multipliers=None) -> float:
    """MLE of ``q`` for a fixed centre.

    Zero disagreement drives ``alpha`` to the upper end of ``[1e-6, 50]`` and
    the returned ``q`` is ``exp(-50)``, which is below the range accepted by
    :class:`rmj.model.RmjModel`; likelihood code works in ``log q`` instead.
    """
    cd = as_choice_data(data, center.n)
    if cd.total == 0:
        raise ValueError("cannot estimate the dispersion from empty data")
    alpha = minimize_alpha(DispersionProblem.from_data(cd, center, multipliers))
    return math.exp(-alpha)


@dataclass
class FitOptions:
    exact_cap: int = DEFAULT_EXACT_CAP
    restarts: int = DEFAULT_RESTARTS
    seed: int = 0


def fit(data: DataLike, options: FitOptions | None = None, n: int | None = None) -> FitResult:
    """Weights, then centre, then dispersion; the log-likelihood is evaluated at the estimate."""
    options = options or FitOptions()
    cd = as_choice_data(data, n)
    if cd.total == 0:
        raise ValueError("cannot fit empty data")
    w = accumulate_weights_topk(cd)
    rng = np.random.default_rng(options.seed)
    center, objective, status = solve_center(w, options.exact_cap, rng, options.restarts)
    alpha = minimize_alpha(DispersionProblem.from_data(cd, center))
    q_hat = math.exp(-alpha)
    ll = log_likelihood_at(center, -alpha, cd)
    log.debug("fit: status=%s objective=%s alpha=%.6g", status, objective, alpha)
    return FitResult(center, q_hat, objective, status, ll)


@dataclass(frozen=True)
class CoverageReport:
    n: int
    pair_counts: np.ndarray  # symmetric, pair_counts[i, j] = displays containing both

    @property
    def uncovered(self) -> list[tuple[int, int]]:
        return [(i, j) for i, j in combinations(range(self.n), 2) if self.pair_counts[i, j] == 0]

    @property
    def fully_covered(self) -> bool:
        return not self.uncovered


def coverage_report(data: DataLike, n: int | None = None) -> CoverageReport:
    """How many records showed each item pair together; uncovered pairs cannot be ordered by the MLE."""
    cd = as_choice_data(data, n)
    counts = np.zeros((cd.n, cd.n))
    for S, c in zip(cd.displays, cd.counts):
        idx = np.asarray(S.items)
        counts[np.ix_(idx, idx)] += c
    np.fill_diagonal(counts, 0)
    return CoverageReport(cd.n, counts)


def objective_invariant_swaps(w, center: Ranking, tol: float = 1e-12) -> list[tuple[int, int]]:
    """Adjacent pairs of ``center`` whose swap leaves the objective unchanged."""
    w = np.asarray(w, dtype=float)
    out = []
    for p in range(center.n - 1):
        a, b = center.order[p], center.order[p + 1]
        if abs(w[a, b] - w[b, a]) <= tol:
            out.append(tuple(sorted((a, b))))
    return out

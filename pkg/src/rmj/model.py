"""The RMJ ranking distribution: probability mass, prefix conditionals, sampling."""

from __future__ import annotations

import bisect
import itertools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .ranking import (
    DisplaySet,
    L_count,
    Ranking,
    TopKList,
    log_psi,
    psi,
    relabel,
    relabel_set,
    relabel_topk,
    rmj,
    rmj_topk,
    validate_q,
)

# Largest universe for which the full-ranking normalizer is summed explicitly.
ENUMERATION_CAP = 8


@dataclass(frozen=True)
class RmjModel:
    """RMJ model with central ranking ``center`` and dispersion ``q``."""

    center: Ranking
    q: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "q", validate_q(self.q))

    @classmethod
    def centered(cls, n: int, q: float) -> "RmjModel":
        return cls(Ranking.identity(n), q)

    @property
    def n(self) -> int:
        return self.center.n

    @property
    def alpha(self) -> float:
        """Concentration ``-ln q``."""
        return -math.log(self.q)

    @property
    def log_q(self) -> float:
        return math.log(self.q)

    @cached_property
    def normalizer(self) -> float:
        """Sum of ``q^d`` over all rankings.

        Summed explicitly up to ``ENUMERATION_CAP`` items; beyond that the
        prefix-mass identity with ``k = n`` gives ``psi(n, q)``.
        """
        if self.n <= ENUMERATION_CAP:
            total = 0.0
            for perm in itertools.permutations(range(self.n)):
                total += self.q ** rmj(perm)
            return total
        return psi(self.n, self.q)

    @cached_property
    def log_normalizer(self) -> float:
        if self.n <= ENUMERATION_CAP:
            return math.log(self.normalizer)
        return log_psi(self.n, self.q)


def _check_size(model: RmjModel, n: int) -> None:
    if n != model.n:
        raise ValueError(f"size mismatch: model has {model.n} items, got {n}")


def log_pmf_full(model: RmjModel, pi: Ranking) -> float:
    _check_size(model, pi.n)
    return rmj(relabel(pi, model.center)) * model.log_q - model.log_normalizer


def pmf_full(model: RmjModel, pi: Ranking) -> float:
    _check_size(model, pi.n)
    return model.q ** rmj(relabel(pi, model.center)) / model.normalizer


def topk_exponent(pi_k: TopKList) -> int:
    """``d + L`` for an identity-centred prefix."""
    return rmj_topk(pi_k) + L_count(pi_k)


def log_pmf_topk(model: RmjModel, pi_k: TopKList) -> float:
    _check_size(model, pi_k.n)
    rel = relabel_topk(pi_k, model.center)
    n, k = model.n, pi_k.k
    return topk_exponent(rel) * model.log_q + log_psi(n - k, model.q) - log_psi(n, model.q)


def pmf_topk(model: RmjModel, pi_k: TopKList) -> float:
    """Mass of all full rankings that start with ``pi_k``.

    Closed form ``q^(d + L) * psi(n - k, q) / psi(n, q)`` evaluated after
    relabelling by the centre.
    """
    _check_size(model, pi_k.n)
    rel = relabel_topk(pi_k, model.center)
    n, k = model.n, pi_k.k
    return model.q ** topk_exponent(rel) * psi(n - k, model.q) / psi(n, model.q)


def _rotation_exponents(m: int, c: int) -> list[int]:
    # remaining items sorted by centre position; index c is the first one
    # ranked below the last listed item
    return [(idx - c) % m for idx in range(m)]


def next_item_distribution(model: RmjModel, pi_k: TopKList) -> dict[int, float]:
    """Conditional law of the item at position ``k + 1`` given the prefix ``pi_k``.

    With the remaining items sorted by centre position, the one ``j`` steps
    (cyclically) after the last listed item gets weight ``q^j``. An empty
    prefix starts the cycle at the centre's top item.

    Returns:
        dict mapping each unlisted item to its probability.
    """
    _check_size(model, pi_k.n)
    if pi_k.k >= model.n:
        raise ValueError("prefix already lists every item")
    rel = relabel_topk(pi_k, model.center)
    remaining = rel.complement()
    m = len(remaining)
    c = bisect.bisect_left(remaining, rel.items[-1]) if rel.k else 0
    weights = [model.q**e for e in _rotation_exponents(m, c)]
    total = math.fsum(weights)
    order = model.center.order
    return {order[r]: w / total for r, w in zip(remaining, weights)}


def draw_offset(m: int, log_q: float, u: float) -> int:
    """Inverse-CDF draw from ``P(j) ∝ q^j`` on ``{0, ..., m-1}`` given a uniform ``u``."""
    if m <= 1:
        return 0
    mass = -math.expm1(m * log_q)  # 1 - q^m
    j = math.floor(math.log1p(-u * mass) / log_q)
    return min(max(j, 0), m - 1)


def sample_prefix_positions(m: int, k: int, log_q: float, rng: np.random.Generator) -> list[int]:
    """Top-``k`` draw from an identity-centred model over ``m`` items.

    Consumes exactly ``k`` values of ``rng.random()``, one per position, so a
    seeded ``numpy.random.Generator`` reproduces the same lists everywhere.
    """
    if not 1 <= k <= m:
        raise ValueError(f"need 1 <= k <= {m}, got {k}")
    remaining = list(range(m))
    out: list[int] = []
    c = 0
    for _ in range(k):
        size = len(remaining)
        j = draw_offset(size, log_q, rng.random())
        idx = (c + j) % size
        item = remaining.pop(idx)
        out.append(item)
        # first remaining item after the chosen one
        c = idx if idx < len(remaining) else 0
    return out


def sample_topk(model: RmjModel, k: int, rng: np.random.Generator) -> TopKList:
    positions = sample_prefix_positions(model.n, k, model.log_q, rng)
    order = model.center.order
    return TopKList(tuple(order[p] for p in positions), model.n)


def sample_ranking(model: RmjModel, rng: np.random.Generator) -> Ranking:
    return Ranking(sample_topk(model, model.n, rng).items)


def conditional_choice(model: RmjModel, pi_k: TopKList, S: DisplaySet, x: int) -> float:
    """Probability that ``x`` is the top of ``S`` given the population prefix ``pi_k``.

    Requires that ``pi_k`` without its last item avoids ``S``. The last item
    ``z`` decides the branch: ``z == x`` gives 1, ``z`` elsewhere in ``S``
    gives 0, otherwise the geometric weights over ``S`` are rotated to start
    just below ``z``.
    """
    _check_size(model, pi_k.n)
    if x not in S:
        raise ValueError(f"item {x} not in display set {S.items}")
    if any(y in S for y in pi_k.items[:-1]):
        raise ValueError("all but the last listed item must lie outside the display set")
    if max(S.items) >= model.n:
        raise ValueError("display set exceeds the universe")
    rel_S = relabel_set(S, model.center)
    xr = model.center.inverse().order[x]
    i = rel_S.relative_rank(xr) + 1
    M = S.size
    norm = (1.0 - model.q**M) / (1.0 - model.q)
    if pi_k.k == 0:
        return model.q ** (i - 1) / norm
    z = pi_k.items[-1]
    if z == x:
        return 1.0
    if z in S:
        return 0.0
    zr = model.center.inverse().order[z]
    p = sum(1 for s in rel_S.items if s < zr)
    if zr > xr:
        return model.q ** (M - p + i - 1) / norm
    return model.q ** (i - p - 1) / norm

"""Permutations, top-k lists, display sets and the distances defined on them.

Items are labelled ``0..n-1``. A :class:`Ranking` stores the position->item
view: ``order[i]`` is the ``i``-th most preferred item. Every distance in this
module is measured against the identity ranking; distances between two
arbitrary rankings go through :func:`relabel` first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

Q_MIN = 1e-9
Q_MAX = 1.0 - 1e-9


def validate_q(q: float) -> float:
    """Return ``q`` as a float, raising ``ValueError`` outside ``[1e-9, 1-1e-9]``."""
    q = float(q)
    if not (Q_MIN <= q <= Q_MAX):
        raise ValueError(f"dispersion q must lie in [{Q_MIN}, {Q_MAX}], got {q!r}")
    return q


def _check_items(items: Sequence[int], n: int, what: str) -> tuple[int, ...]:
    items = tuple(int(x) for x in items)
    if n < 0:
        raise ValueError(f"universe size must be nonnegative, got {n}")
    for x in items:
        if not 0 <= x < n:
            raise ValueError(f"{what}: item {x} outside universe 0..{n - 1}")
    if len(set(items)) != len(items):
        raise ValueError(f"{what}: items must be distinct, got {items}")
    return items


@dataclass(frozen=True)
class Ranking:
    """A full ranking of the items ``0..n-1`` (position -> item)."""

    order: tuple[int, ...]

    def __post_init__(self) -> None:
        order = _check_items(self.order, len(self.order), "Ranking")
        object.__setattr__(self, "order", order)

    @classmethod
    def identity(cls, n: int) -> "Ranking":
        return cls(tuple(range(n)))

    @classmethod
    def reversal(cls, n: int) -> "Ranking":
        return cls(tuple(range(n - 1, -1, -1)))

    @classmethod
    def from_one_indexed(cls, order: Iterable[int]) -> "Ranking":
        return cls(tuple(int(x) - 1 for x in order))

    @property
    def n(self) -> int:
        return len(self.order)

    def inverse(self) -> "Ranking":
        """The item -> position view ``sigma`` with ``sigma[order[i]] == i``."""
        sigma = [0] * self.n
        for pos, item in enumerate(self.order):
            sigma[item] = pos
        return Ranking(tuple(sigma))

    def positions(self) -> np.ndarray:
        return np.asarray(self.inverse().order, dtype=np.int64)

    def position(self, item: int) -> int:
        return self.order.index(item)

    def prefers(self, x: int, y: int) -> bool:
        """True iff ``x`` is ranked above ``y``."""
        return self.order.index(x) < self.order.index(y)

    def compose(self, other: "Ranking") -> "Ranking":
        """Composition ``self o other``: position ``i`` maps to ``self[other[i]]``."""
        if other.n != self.n:
            raise ValueError("cannot compose rankings of different sizes")
        return Ranking(tuple(self.order[j] for j in other.order))

    def top(self, k: int) -> "TopKList":
        return TopKList(self.order[:k], self.n)

    def __len__(self) -> int:
        return self.n

    def __iter__(self):
        return iter(self.order)

    def __getitem__(self, i):
        return self.order[i]


@dataclass(frozen=True)
class TopKList:
    """An ordered prefix ``(pi(1), ..., pi(k))`` of some ranking of ``n`` items."""

    items: tuple[int, ...]
    n: int

    def __post_init__(self) -> None:
        items = _check_items(self.items, self.n, "TopKList")
        if len(items) > self.n:
            raise ValueError("a top-k list cannot be longer than the universe")
        object.__setattr__(self, "items", items)

    @classmethod
    def from_one_indexed(cls, items: Iterable[int], n: int) -> "TopKList":
        return cls(tuple(int(x) - 1 for x in items), n)

    @property
    def k(self) -> int:
        return len(self.items)

    def item_set(self) -> frozenset[int]:
        return frozenset(self.items)

    def complement(self) -> list[int]:
        """Items not listed, in ascending label order."""
        listed = set(self.items)
        return [x for x in range(self.n) if x not in listed]

    def extend(self, item: int) -> "TopKList":
        return TopKList(self.items + (int(item),), self.n)

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def __getitem__(self, i):
        return self.items[i]


@dataclass(frozen=True)
class DisplaySet:
    """A set of at least two items offered together, stored sorted ascending."""

    items: tuple[int, ...]

    def __post_init__(self) -> None:
        items = tuple(sorted(int(x) for x in self.items))
        if len(items) < 2:
            raise ValueError(f"a display set needs at least two items, got {items}")
        if len(set(items)) != len(items):
            raise ValueError(f"display set items must be distinct, got {items}")
        if items[0] < 0:
            raise ValueError("item ids must be nonnegative")
        object.__setattr__(self, "items", items)

    @classmethod
    def from_one_indexed(cls, items: Iterable[int]) -> "DisplaySet":
        return cls(tuple(int(x) - 1 for x in items))

    @classmethod
    def full(cls, n: int) -> "DisplaySet":
        return cls(tuple(range(n)))

    @property
    def size(self) -> int:
        return len(self.items)

    def relative_rank(self, x: int) -> int:
        """Number of items in the set with a smaller label than ``x`` (0-based rank)."""
        if x not in self.items:
            raise ValueError(f"item {x} not in display set {self.items}")
        return self.items.index(x)

    def __contains__(self, x) -> bool:
        return x in self.items

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)


def _seq(pi) -> tuple[int, ...]:
    if isinstance(pi, (Ranking, TopKList)):
        return pi.items if isinstance(pi, TopKList) else pi.order
    return tuple(int(x) for x in pi)


def kendall_tau(pi: Ranking) -> int:
    """Number of discordant pairs between ``pi`` and the identity."""
    seq = _seq(pi)
    count = 0
    for i in range(len(seq)):
        a = seq[i]
        for b in seq[i + 1:]:
            if a > b:
                count += 1
    return count


def kendall_tau_between(pi1: Ranking, pi2: Ranking) -> int:
    return kendall_tau(relabel(pi2, pi1))


def rmj(pi: Ranking) -> int:
    """Reverse major index: each adjacent descent at position ``i`` (1-based) costs ``n - i``."""
    seq = _seq(pi)
    n = len(seq)
    return sum(n - i for i in range(1, n) if seq[i - 1] > seq[i])


def rmj_between(pi1: Ranking, pi2: Ranking) -> int:
    return rmj(relabel(pi2, pi1))


def major_index(pi: Ranking) -> int:
    seq = _seq(pi)
    return sum(i for i in range(1, len(seq)) if seq[i - 1] > seq[i])


def rmj_topk(pi_k: TopKList) -> int:
    """Reverse major index of a prefix, with weights taken from the full universe size."""
    seq = pi_k.items
    n = pi_k.n
    return sum(n - i for i in range(1, len(seq)) if seq[i - 1] > seq[i])


def L_count(pi_k: TopKList) -> int:
    """Count of unlisted items whose label is smaller than the last listed item."""
    if pi_k.k == 0:
        return 0
    last = pi_k.items[-1]
    listed = set(pi_k.items)
    return sum(1 for x in range(last) if x not in listed)


def _check_subset(pi_k: TopKList, S: DisplaySet) -> None:
    missing = [x for x in pi_k.items if x not in S.items]
    if missing:
        raise ValueError(f"listed items {missing} are not in the display set {S.items}")


def rmj_set(pi_k: TopKList, S: DisplaySet) -> int:
    """:func:`rmj_topk` with the display set standing in for the universe."""
    _check_subset(pi_k, S)
    seq = pi_k.items
    m = S.size
    return sum(m - i for i in range(1, len(seq)) if seq[i - 1] > seq[i])


def L_set(pi_k: TopKList, S: DisplaySet) -> int:
    """:func:`L_count` restricted to the unlisted members of ``S``."""
    _check_subset(pi_k, S)
    if pi_k.k == 0:
        return 0
    last = pi_k.items[-1]
    listed = set(pi_k.items)
    return sum(1 for x in S.items if x < last and x not in listed)


def psi(n: int, q: float) -> float:
    """Normalizer ``prod_{i=1..n} (1 + q + ... + q^(i-1))``; ``psi(0, q) == 1``."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    q = validate_q(q)
    out = 1.0
    for i in range(1, n + 1):
        out *= (1.0 - q**i) / (1.0 - q)
    return out


def log_psi(n: int, q: float | None = None, *, log_q: float | None = None) -> float:
    """``log psi(n, q)``, stable for tiny ``q`` and large ``n``.

    Either ``q`` or ``log_q`` must be given. Passing ``log_q`` skips the range
    check on ``q`` so that likelihood code can evaluate clamped estimates such
    as ``q = exp(-50)``.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    if log_q is None:
        if q is None:
            raise TypeError("pass q or log_q")
        log_q = math.log(validate_q(q))
    if not log_q < 0:
        raise ValueError("log q must be negative")
    # log((1 - q^i) / (1 - q)) with q^i = exp(i log q)
    denom = math.log(-math.expm1(log_q))
    return sum(math.log(-math.expm1(i * log_q)) - denom for i in range(1, n + 1))


def relabel(pi: Ranking, pi_star: Ranking) -> Ranking:
    """Express ``pi`` in coordinates where ``pi_star`` is the identity.

    Returns ``pi_star^{-1} o pi``: each item is replaced by its position under
    ``pi_star``. Identity-centred distances of the result equal distances to
    ``pi_star``.
    """
    if pi.n != pi_star.n:
        raise ValueError(f"size mismatch: {pi.n} vs {pi_star.n}")
    sigma = pi_star.inverse().order
    return Ranking(tuple(sigma[x] for x in pi.order))


def relabel_topk(pi_k: TopKList, pi_star: Ranking) -> TopKList:
    if pi_k.n != pi_star.n:
        raise ValueError(f"size mismatch: {pi_k.n} vs {pi_star.n}")
    sigma = pi_star.inverse().order
    return TopKList(tuple(sigma[x] for x in pi_k.items), pi_k.n)


def relabel_set(S: DisplaySet, pi_star: Ranking) -> DisplaySet:
    sigma = pi_star.inverse().order
    return DisplaySet(tuple(sigma[x] for x in S.items))


def rmj_set_under(pi_k: TopKList, S: DisplaySet, center: Ranking) -> int:
    """Set-relative descent weight of ``pi_k`` measured against ``center``.

    Written directly in terms of positions under ``center`` instead of
    relabelling, so it doubles as a cross-check for :func:`relabel`.
    """
    _check_subset(pi_k, S)
    pos = center.inverse().order
    seq = pi_k.items
    m = S.size
    return sum(m - h for h in range(1, len(seq)) if pos[seq[h - 1]] > pos[seq[h]])


def L_set_under(pi_k: TopKList, S: DisplaySet, center: Ranking) -> int:
    _check_subset(pi_k, S)
    if pi_k.k == 0:
        return 0
    pos = center.inverse().order
    last = pi_k.items[-1]
    earlier = set(pi_k.items[:-1])
    return sum(1 for j in S.items if j not in earlier and pos[last] > pos[j])

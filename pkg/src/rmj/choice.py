"""(Ranked) choice probabilities aggregated from the RMJ model, and likelihoods."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Sequence, Union

import numpy as np

from .model import RmjModel, sample_prefix_positions
from .ranking import DisplaySet, Ranking, TopKList, log_psi, psi

if TYPE_CHECKING:
    from .mixture import MixtureModel


@dataclass(frozen=True)
class ChoiceObservation:
    """One participant: the display set and their ranked picks from it (best first)."""

    display: DisplaySet
    response: tuple[int, ...]

    def __post_init__(self) -> None:
        display = self.display
        if not isinstance(display, DisplaySet):
            display = DisplaySet(tuple(display))
            object.__setattr__(self, "display", display)
        response = tuple(int(x) for x in self.response)
        object.__setattr__(self, "response", response)
        if not response:
            raise ValueError("a response lists at least one item")
        if len(set(response)) != len(response):
            raise ValueError(f"response items must be distinct, got {response}")
        outside = [x for x in response if x not in display]
        if outside:
            raise ValueError(f"response items {outside} are not in the display {display.items}")

    @property
    def k(self) -> int:
        return len(self.response)

    def topk(self, n: int) -> TopKList:
        return TopKList(self.response, n)


def _as_display(S) -> DisplaySet:
    return S if isinstance(S, DisplaySet) else DisplaySet(tuple(S))


def _response_items(pi_k) -> tuple[int, ...]:
    if isinstance(pi_k, TopKList):
        return pi_k.items
    return tuple(int(x) for x in pi_k)


def choice_prob(model: RmjModel, S: DisplaySet, x: int) -> float:
    """``q^(i-1) / (1 + q + ... + q^(M-1))`` where ``i`` is the centre rank of ``x`` inside ``S``."""
    S = _as_display(S)
    if x not in S:
        raise ValueError(f"item {x} not in display set {S.items}")
    if S.items[-1] >= model.n:
        raise ValueError("display set exceeds the model's universe")
    pos = model.center.inverse().order
    rank = sum(1 for y in S.items if pos[y] < pos[x])
    M = S.size
    return model.q**rank * (1.0 - model.q) / (1.0 - model.q**M)


def set_exponent(pos: Sequence[int], S: DisplaySet, items: Sequence[int]) -> int:
    """``d_S + L_S`` of a ranked response, measured against centre positions ``pos``."""
    m = S.size
    total = 0
    for h in range(1, len(items)):
        if pos[items[h - 1]] > pos[items[h]]:
            total += m - h
    last = pos[items[-1]]
    earlier = set(items[:-1])
    total += sum(1 for j in S.items if j not in earlier and pos[j] < last)
    return total


def _check_response(S: DisplaySet, items: Sequence[int], n: int) -> None:
    if S.items[-1] >= n:
        raise ValueError(f"display set {S.items} exceeds the universe of {n} items")
    if not items:
        raise ValueError("empty response")
    outside = [x for x in items if x not in S]
    if outside:
        raise ValueError(f"listed items {outside} are not in the display set {S.items}")
    if len(set(items)) != len(items):
        raise ValueError("listed items must be distinct")


def ranked_choice_prob(model: RmjModel, S: DisplaySet, pi_k) -> float:
    """Probability that the top ``k`` of ``S`` come out in the order ``pi_k``.

    ``S`` is treated as its own universe: ``q^(d_S + L_S) * psi(|S|-k) / psi(|S|)``
    after relabelling by the model's centre.
    """
    S = _as_display(S)
    items = _response_items(pi_k)
    _check_response(S, items, model.n)
    pos = model.center.inverse().order
    e = set_exponent(pos, S, items)
    return model.q**e * psi(S.size - len(items), model.q) / psi(S.size, model.q)


def log_ranked_choice_prob(model: RmjModel, S: DisplaySet, pi_k) -> float:
    S = _as_display(S)
    items = _response_items(pi_k)
    _check_response(S, items, model.n)
    pos = model.center.inverse().order
    e = set_exponent(pos, S, items)
    return e * model.log_q + log_psi(S.size - len(items), model.q) - log_psi(S.size, model.q)


def sample_ranked_choice(model: RmjModel, S: DisplaySet, k: int, rng: np.random.Generator) -> tuple[int, ...]:
    """Draw a ranked top-``k`` response from ``S``.

    Members of ``S`` are sorted by centre position and an identity-centred
    model on ``|S|`` items is sampled, which has exactly the set-relative law.
    """
    S = _as_display(S)
    if not 1 <= k <= S.size:
        raise ValueError(f"k={k} is not in 1..{S.size}")
    pos = model.center.inverse().order
    by_center = sorted(S.items, key=lambda x: pos[x])
    picks = sample_prefix_positions(S.size, k, model.log_q, rng)
    return tuple(by_center[p] for p in picks)


@dataclass
class ChoiceData:
    """Deduplicated observations over a universe of ``n`` items.

    Each unique ``(display, response)`` pair keeps a multiplicity in
    ``counts``. The response is also stored as sparse pairwise evidence:
    triple ``(obs[r], first[r], second[r], value[r])`` adds ``value`` to the
    disagreement whenever ``second`` is ranked above ``first``. Adjacent
    listed pairs carry ``|S| - h`` and the last item carries 1 against every
    unlisted member of ``S``.
    """

    n: int
    displays: list[DisplaySet]
    responses: list[tuple[int, ...]]
    counts: np.ndarray
    sizes: np.ndarray = field(init=False)
    ks: np.ndarray = field(init=False)
    t_obs: np.ndarray = field(init=False)
    t_first: np.ndarray = field(init=False)
    t_second: np.ndarray = field(init=False)
    t_value: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.counts = np.asarray(self.counts, dtype=float)
        self.sizes = np.array([S.size for S in self.displays], dtype=np.int64)
        self.ks = np.array([len(r) for r in self.responses], dtype=np.int64)
        obs, first, second, value = [], [], [], []
        for t, (S, resp) in enumerate(zip(self.displays, self.responses)):
            _check_response(S, resp, self.n)
            m = S.size
            for h in range(1, len(resp)):
                obs.append(t)
                first.append(resp[h - 1])
                second.append(resp[h])
                value.append(m - h)
            listed = set(resp)
            last = resp[-1]
            for j in S.items:
                if j not in listed:
                    obs.append(t)
                    first.append(last)
                    second.append(j)
                    value.append(1)
        self.t_obs = np.asarray(obs, dtype=np.int64)
        self.t_first = np.asarray(first, dtype=np.int64)
        self.t_second = np.asarray(second, dtype=np.int64)
        self.t_value = np.asarray(value, dtype=float)

    @classmethod
    def from_observations(cls, data: Iterable[ChoiceObservation], n: int | None = None) -> "ChoiceData":
        index: dict[tuple, int] = {}
        displays: list[DisplaySet] = []
        responses: list[tuple[int, ...]] = []
        counts: list[float] = []
        top = -1
        for ob in data:
            key = (ob.display.items, ob.response)
            top = max(top, ob.display.items[-1])
            t = index.get(key)
            if t is None:
                index[key] = len(displays)
                displays.append(ob.display)
                responses.append(ob.response)
                counts.append(1.0)
            else:
                counts[t] += 1.0
        if n is None:
            n = top + 1
        elif top >= n:
            raise ValueError(f"observation references item {top} outside universe of {n}")
        return cls(n, displays, responses, np.asarray(counts))

    def __len__(self) -> int:
        return len(self.displays)

    @property
    def total(self) -> float:
        return float(self.counts.sum())

    def observations(self) -> list[ChoiceObservation]:
        """Expand back to one observation per record (in first-seen order)."""
        out = []
        for S, r, c in zip(self.displays, self.responses, self.counts):
            out.extend([ChoiceObservation(S, r)] * int(round(c)))
        return out

    def stats(self, center: Ranking) -> np.ndarray:
        """Per unique observation: ``d_S + L_S`` of the response against ``center``."""
        if center.n != self.n:
            raise ValueError(f"size mismatch: centre has {center.n} items, data {self.n}")
        pos = center.positions()
        flags = pos[self.t_second] < pos[self.t_first]
        return np.bincount(self.t_obs, weights=self.t_value * flags, minlength=len(self))

    def log_normalizers(self, log_q: float) -> np.ndarray:
        """Per unique observation: ``log psi(|S|-k) - log psi(|S|)``."""
        cache: dict[tuple[int, int], float] = {}
        out = np.empty(len(self))
        for t, (m, k) in enumerate(zip(self.sizes.tolist(), self.ks.tolist())):
            key = (m, k)
            if key not in cache:
                cache[key] = log_psi(m - k, log_q=log_q) - log_psi(m, log_q=log_q)
            out[t] = cache[key]
        return out

    def log_probs(self, center: Ranking, log_q: float) -> np.ndarray:
        """Per unique observation log-probability under ``(center, q = exp(log_q))``."""
        return self.stats(center) * log_q + self.log_normalizers(log_q)


DataLike = Union[ChoiceData, Sequence[ChoiceObservation]]


def as_choice_data(data: DataLike, n: int | None = None) -> ChoiceData:
    if isinstance(data, ChoiceData):
        if n is not None and n != data.n:
            raise ValueError(f"size mismatch: data has {data.n} items, expected {n}")
        return data
    return ChoiceData.from_observations(data, n)


def log_likelihood(model: RmjModel, data: DataLike) -> float:
    """Sum of log ranked-choice probabilities over all records."""
    cd = as_choice_data(data, model.n)
    return float(np.dot(cd.counts, cd.log_probs(model.center, model.log_q)))


def log_likelihood_at(center: Ranking, log_q: float, data: DataLike) -> float:
    """:func:`log_likelihood` parametrised by ``log q`` so clamped estimates stay usable."""
    cd = as_choice_data(data, center.n)
    return float(np.dot(cd.counts, cd.log_probs(center, log_q)))


def logsumexp_rows(a: np.ndarray) -> np.ndarray:
    top = a.max(axis=1, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    return (top + np.log(np.exp(a - top).sum(axis=1, keepdims=True)))[:, 0]


def component_log_probs(mix: "MixtureModel", cd: ChoiceData) -> np.ndarray:
    """``T x M`` matrix of ``log p_m + log Pr_m(response | display)``."""
    cols = []
    for comp in mix.components:
        cols.append(math.log(comp.weight) + cd.log_probs(comp.center, comp.log_q))
    return np.column_stack(cols)


def mixture_log_likelihood(mix: "MixtureModel", data: DataLike) -> float:
    """Log of the mixture likelihood, combined per record with log-sum-exp."""
    cd = as_choice_data(data, mix.n)
    per_obs = logsumexp_rows(component_log_probs(mix, cd))
    return float(np.dot(cd.counts, per_obs))


def uniform_log_likelihood(data: DataLike) -> float:
    """Baseline where every ordered ``k``-subset of the display is equally likely."""
    cd = as_choice_data(data)
    per_obs = np.array(
        [-(math.lgamma(m + 1) - math.lgamma(m - k + 1)) for m, k in zip(cd.sizes.tolist(), cd.ks.tolist())]
    )
    return float(np.dot(cd.counts, per_obs)) if len(cd) else 0.0

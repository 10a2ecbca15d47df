"""EM fitting of a mixture of RMJ models from (ranked) choice data."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .choice import ChoiceData, DataLike, as_choice_data, component_log_probs, logsumexp_rows
from .estimation import (
    ALPHA_MAX,
    DEFAULT_EXACT_CAP,
    DEFAULT_RESTARTS,
    DispersionProblem,
    accumulate_weights_topk,
    fas_objective,
    minimize_alpha,
    solve_center,
)
from .model import RmjModel
from .ranking import Ranking

log = logging.getLogger(__name__)

RESEED_THRESHOLD = 1e-8


@dataclass(frozen=True)
class Component:
    weight: float
    center: Ranking
    q: float

    def __post_init__(self) -> None:
        if not 0.0 < self.weight <= 1.0:
            raise ValueError(f"component weight must lie in (0, 1], got {self.weight}")
        if not 0.0 < self.q < 1.0:
            raise ValueError(f"component dispersion must lie in (0, 1), got {self.q}")

    @property
    def alpha(self) -> float:
        return -math.log(self.q)

    @property
    def log_q(self) -> float:
        return math.log(self.q)

    def model(self) -> RmjModel:
        return RmjModel(self.center, self.q)


@dataclass(frozen=True)
class MixtureModel:
    components: tuple[Component, ...]

    def __post_init__(self) -> None:
        comps = tuple(self.components)
        object.__setattr__(self, "components", comps)
        if not comps:
            raise ValueError("a mixture needs at least one component")
        sizes = {c.center.n for c in comps}
        if len(sizes) != 1:
            raise ValueError(f"components disagree on the universe size: {sorted(sizes)}")
        total = math.fsum(c.weight for c in comps)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"mixture weights must sum to 1, got {total!r}")

    @classmethod
    def single(cls, center: Ranking, q: float) -> "MixtureModel":
        return cls((Component(1.0, center, q),))

    @property
    def n(self) -> int:
        return self.components[0].center.n

    @property
    def M(self) -> int:
        return len(self.components)

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components])

    @property
    def alphas(self) -> np.ndarray:
        return np.array([c.alpha for c in self.components])

    @property
    def centers(self) -> tuple[Ranking, ...]:
        return tuple(c.center for c in self.components)


@dataclass
class EmTrace:
    restart: int
    log_likelihoods: list[float] = field(default_factory=list)
    reseeds: list[int] = field(default_factory=list)  # iterations where a component was reseeded
    reason: str = ""
    moves: int = 0  # accepted centre moves during refinement

    @property
    def iterations(self) -> int:
        return len(self.log_likelihoods) - 1

    def is_monotone(self, slack: float = 1e-9) -> bool:
        """Log-likelihood never drops by more than ``slack``, except right after a reseed."""
        for it in range(1, len(self.log_likelihoods)):
            if it in self.reseeds:
                continue
            if self.log_likelihoods[it] < self.log_likelihoods[it - 1] - slack:
                return False
        return True


@dataclass
class EmOptions:
    restarts: int = DEFAULT_RESTARTS
    max_iter: int = 200
    tol: float = 1e-3
    exact_cap: int = DEFAULT_EXACT_CAP
    seed: int = 0
    refine: bool = True


def _normalise(weights: Sequence[float]) -> list[float]:
    total = math.fsum(weights)
    out = [w / total for w in weights]
    # push the rounding residue onto the largest weight so the sum is exact
    big = max(range(len(out)), key=out.__getitem__)
    out[big] += 1.0 - math.fsum(out)
    return out


def e_step(mix: MixtureModel, data: DataLike) -> np.ndarray:
    """Posterior component memberships, one row per record, computed in log space.

    Rows follow the unique observations when ``data`` is already a
    :class:`ChoiceData`, and the input records otherwise.
    """
    if isinstance(data, ChoiceData):
        return _responsibilities(mix, data)
    records = list(data)
    cd = ChoiceData.from_observations(records, mix.n)
    resp = _responsibilities(mix, cd)
    index = {(S.items, r): t for t, (S, r) in enumerate(zip(cd.displays, cd.responses))}
    return resp[[index[(ob.display.items, ob.response)] for ob in records]]


def _responsibilities(mix: MixtureModel, cd: ChoiceData) -> np.ndarray:
    logp = component_log_probs(mix, cd)
    return np.exp(logp - logsumexp_rows(logp)[:, None])


def _random_component_params(n: int, rng: np.random.Generator) -> tuple[Ranking, float]:
    center = Ranking(tuple(int(x) for x in rng.permutation(n)))
    return center, float(rng.uniform(0.1, 3.0))


def m_step(
    responsibilities: np.ndarray,
    data: DataLike,
    rng: np.random.Generator | None = None,
    exact_cap: int = DEFAULT_EXACT_CAP,
    previous: MixtureModel | None = None,
    restarts: int = DEFAULT_RESTARTS,
) -> tuple[MixtureModel, list[int]]:
    """Re-estimate weights, centres and dispersions from soft counts.

    Each component solves the weighted centre problem (exact up to
    ``exact_cap`` items) and then its weighted dispersion problem. A component
    whose total responsibility is below ``1e-8`` is reseeded with a random
    centre and ``alpha`` drawn from ``[0.1, 3]`` and weight ``1/M`` before
    renormalising. When ``previous`` is given and the heuristic solver ran,
    the previous centre is kept if it scores better on the weighted
    objective.

    Returns:
        The new mixture and the indices of reseeded components.
    """
    cd = as_choice_data(data)
    resp = np.asarray(responsibilities, dtype=float)
    if resp.ndim != 2 or resp.shape[0] != len(cd):
        raise ValueError("responsibilities must have one row per unique observation")
    if not np.allclose(resp.sum(axis=1), 1.0, atol=1e-9):
        raise ValueError("responsibility rows must sum to 1")
    if rng is None:
        rng = np.random.default_rng(0)
    M = resp.shape[1]
    mass = cd.counts @ resp
    total = cd.total
    weights, centers, alphas, reseeded = [], [], [], []
    for m in range(M):
        if mass[m] < RESEED_THRESHOLD:
            center, alpha = _random_component_params(cd.n, rng)
            weights.append(1.0 / M)
            centers.append(center)
            alphas.append(alpha)
            reseeded.append(m)
            continue
        w = accumulate_weights_topk(cd, multipliers=resp[:, m])
        center, obj, status = solve_center(w, exact_cap, rng, restarts)
        if previous is not None and status == "heuristic":
            old = previous.components[m].center
            if fas_objective(w, old) < obj:
                center = old
        problem = DispersionProblem.from_data(cd, center, resp[:, m])
        weights.append(mass[m] / total)
        centers.append(center)
        alphas.append(minimize_alpha(problem))
    weights = _normalise(weights)
    comps = tuple(Component(p, c, math.exp(-a)) for p, c, a in zip(weights, centers, alphas))
    return MixtureModel(comps), reseeded


def mixture_ll(mix: MixtureModel, cd: ChoiceData) -> float:
    return float(np.dot(cd.counts, logsumexp_rows(component_log_probs(mix, cd))))


def _em_iterations(
    cd: ChoiceData, mix: MixtureModel, options: EmOptions, rng: np.random.Generator, trace: EmTrace
) -> MixtureModel:
    for _ in range(options.max_iter):
        resp = _responsibilities(mix, cd)
        new, reseeded = m_step(resp, cd, rng, options.exact_cap, previous=mix, restarts=options.restarts)
        trace.log_likelihoods.append(mixture_ll(new, cd))
        if reseeded:
            trace.reseeds.append(trace.iterations)
        same_centers = new.centers == mix.centers
        dp = float(np.abs(new.weights - mix.weights).sum())
        da = float(np.abs(np.minimum(new.alphas, ALPHA_MAX) - np.minimum(mix.alphas, ALPHA_MAX)).sum())
        mix = new
        if same_centers and not reseeded and (dp < options.tol or da < options.tol):
            trace.reason = "converged"
            return mix
    trace.reason = "max_iter"
    return mix


def insertion_neighbours(order: tuple[int, ...]):
    """Every ranking reachable by moving one item to another position."""
    n = len(order)
    for i in range(n):
        rest = order[:i] + order[i + 1 :]
        for j in range(n):
            if j != i:
                yield rest[:j] + (order[i],) + rest[j:]


def _improving_move(mix: MixtureModel, cd: ChoiceData, current: float) -> tuple[MixtureModel, float] | None:
    for m, comp in enumerate(mix.components):
        for order in insertion_neighbours(comp.center.order):
            comps = list(mix.components)
            comps[m] = replace(comp, center=Ranking(order))
            cand = MixtureModel(tuple(comps))
            ll = mixture_ll(cand, cd)
            if ll > current + 1e-9:
                return cand, ll
    return None


def run_em(
    data: DataLike,
    init: MixtureModel,
    options: EmOptions | None = None,
    rng: np.random.Generator | None = None,
    restart: int = 0,
) -> tuple[MixtureModel, EmTrace]:
    """One EM run from ``init`` until the centres settle and the weights or dispersions do too.

    With ``options.refine`` the converged mixture is then polished: any
    single insertion move on one centre that raises the likelihood (other
    parameters held) is taken and EM resumes from there. The log-likelihood
    never drops along the way, so the trace stays monotone.
    """
    options = options or EmOptions()
    cd = as_choice_data(data, init.n)
    rng = rng if rng is not None else np.random.default_rng(options.seed)
    trace = EmTrace(restart, [mixture_ll(init, cd)])
    mix = _em_iterations(cd, init, options, rng, trace)
    if not options.refine or cd.n > options.exact_cap:
        return mix, trace
    while (found := _improving_move(mix, cd, trace.log_likelihoods[-1])) is not None:
        mix, ll = found
        trace.log_likelihoods.append(ll)
        trace.moves += 1
        mix = _em_iterations(cd, mix, options, rng, trace)
    return mix, trace


def random_mixture(n: int, M: int, rng: np.random.Generator) -> MixtureModel:
    """Random centres, ``alpha`` uniform on ``[0.1, 3]``, equal weights."""
    comps = []
    weights = _normalise([1.0] * M)
    for p in weights:
        center, alpha = _random_component_params(n, rng)
        comps.append(Component(p, center, math.exp(-alpha)))
    return MixtureModel(tuple(comps))


def fit_mixture(
    data: DataLike,
    M: int,
    options: EmOptions | None = None,
    n: int | None = None,
    traces: list[EmTrace] | None = None,
) -> tuple[MixtureModel, EmTrace]:
    """Best of ``options.restarts`` EM runs from random starts.

    Restart ``r`` uses the ``r``-th child of ``SeedSequence(options.seed)``,
    so the result depends only on the data and the master seed. Ties in the
    final log-likelihood go to the lowest restart index. Pass a list as
    ``traces`` to collect the trace of every restart.
    """
    options = options or EmOptions()
    if M < 1:
        raise ValueError("need at least one component")
    cd = as_choice_data(data, n)
    if cd.total == 0:
        raise ValueError("cannot fit a mixture to empty data")
    distinct = len({r for r in cd.responses})
    if M > distinct:
        warnings.warn(f"{M} components for only {distinct} distinct responses", stacklevel=2)
    children = np.random.SeedSequence(options.seed).spawn(max(options.restarts, 1))
    best: tuple[MixtureModel, EmTrace] | None = None
    for r, child in enumerate(children):
        rng = np.random.default_rng(child)
        init = random_mixture(cd.n, M, rng)
        mix, trace = run_em(cd, init, options, rng, restart=r)
        if traces is not None:
            traces.append(trace)
        log.debug("restart %d: ll=%.6f after %d iterations (%s)", r, trace.log_likelihoods[-1], trace.iterations, trace.reason)
        if best is None or trace.log_likelihoods[-1] > best[1].log_likelihoods[-1]:
            best = (mix, trace)
    assert best is not None
    return best

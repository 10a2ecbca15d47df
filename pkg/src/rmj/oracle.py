"""Brute-force ground truth over small universes, and the Mallows-smoothing counterexample.

Everything here enumerates all ``n!`` rankings, so it is only meant for
``n <= 8``. The closed forms in :mod:`rmj.model` and :mod:`rmj.choice` are
tested against these tables.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .estimation import solve_center_exact
from .model import RmjModel
from .ranking import DisplaySet, Ranking, TopKList, psi, validate_q

ORACLE_CAP = 8


@dataclass(frozen=True)
class MallowsSpec:
    """Kendall-tau (Mallows) model: centre and dispersion."""

    center: Ranking
    q: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "q", validate_q(self.q))

    @classmethod
    def centered(cls, n: int, q: float) -> "MallowsSpec":
        return cls(Ranking.identity(n), q)

    @property
    def n(self) -> int:
        return self.center.n


@dataclass(frozen=True, eq=False)
class RankingDistribution:
    """Explicit probability table over all rankings of ``n`` items.

    ``perms[r]`` is ranking ``r`` in position->item form, ``probs[r]`` its mass.
    """

    perms: np.ndarray
    probs: np.ndarray
    normalizer: float = 1.0

    def __post_init__(self) -> None:
        if self.probs.shape != (self.perms.shape[0],):
            raise ValueError("one probability per ranking")
        if np.any(self.probs < 0):
            raise ValueError("probabilities must be nonnegative")
        if abs(self.probs.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {self.probs.sum()!r}, not 1")

    @property
    def n(self) -> int:
        return self.perms.shape[1]

    def positions(self) -> np.ndarray:
        """``positions()[r, x]`` is the position of item ``x`` in ranking ``r``."""
        pos = np.empty_like(self.perms)
        rows = np.arange(self.perms.shape[0])[:, None]
        pos[rows, self.perms] = np.arange(self.n)[None, :]
        return pos

    def index(self) -> dict[tuple[int, ...], int]:
        return {tuple(int(x) for x in p): r for r, p in enumerate(self.perms)}

    def prob(self, pi: Ranking | Sequence[int]) -> float:
        key = tuple(pi.order) if isinstance(pi, Ranking) else tuple(pi)
        return float(self.probs[self.index()[key]])


def all_permutations(n: int) -> np.ndarray:
    if n > ORACLE_CAP:
        raise ValueError(f"enumeration capped at {ORACLE_CAP} items, got {n}")
    return np.array(list(itertools.permutations(range(n))), dtype=np.int64).reshape(-1, n)


def rmj_distances(perms: np.ndarray, center: Ranking) -> np.ndarray:
    n = perms.shape[1]
    rel = np.asarray(center.inverse().order)[perms]
    weights = n - np.arange(1, n)
    return (rel[:, :-1] > rel[:, 1:]).astype(np.int64) @ weights


def kendall_distances(perms: np.ndarray, center: Ranking) -> np.ndarray:
    rel = np.asarray(center.inverse().order)[perms]
    n = perms.shape[1]
    d = np.zeros(perms.shape[0], dtype=np.int64)
    for i in range(n):
        for j in range(i + 1, n):
            d += rel[:, i] > rel[:, j]
    return d


def enumerate_lambda(model: Union[RmjModel, MallowsSpec]) -> RankingDistribution:
    """Exact table for an RMJ model or a Mallows model.

    The Mallows normaliser is summed explicitly and must agree with
    ``psi(n, q)`` to 1e-10 relative error, else ``RuntimeError``.
    """
    perms = all_permutations(model.n)
    if isinstance(model, MallowsSpec):
        d = kendall_distances(perms, model.center)
    else:
        d = rmj_distances(perms, model.center)
    weights = model.q ** d.astype(float)
    z = math.fsum(weights)
    if isinstance(model, MallowsSpec):
        ref = psi(model.n, model.q)
        if abs(z - ref) > 1e-10 * ref:
            raise RuntimeError(f"Mallows normaliser {z!r} disagrees with psi(n, q) = {ref!r}")
    return RankingDistribution(perms, weights / z, z)


def point_mass(pi: Ranking) -> RankingDistribution:
    perms = all_permutations(pi.n)
    probs = np.all(perms == np.asarray(pi.order), axis=1).astype(float)
    return RankingDistribution(perms, probs)


def uniform_distribution(n: int) -> RankingDistribution:
    perms = all_permutations(n)
    return RankingDistribution(perms, np.full(perms.shape[0], 1.0 / perms.shape[0]))


def compatible(dist: RankingDistribution, S: DisplaySet, pi_k: Sequence[int]) -> np.ndarray:
    """Per ranking: does ``pi_k`` read off as the top of ``S`` in order?

    Literal check: every listed item lies in ``S`` and beats every member of
    ``S`` not listed at or before it.
    """
    items = tuple(pi_k.items if isinstance(pi_k, TopKList) else pi_k)
    if any(x not in S for x in items):
        raise ValueError(f"listed items {items} are not all in the display set {S.items}")
    pos = dist.positions()
    ok = np.ones(pos.shape[0], dtype=bool)
    for i, x in enumerate(items):
        rest = [y for y in S.items if y not in items[: i + 1]]
        if rest:
            ok &= np.all(pos[:, [x]] < pos[:, rest], axis=1)
    return ok


def aggregate_choice(dist: RankingDistribution, S: DisplaySet, pi_k) -> float:
    """``sum over rankings of lambda(ranking) * [pi_k is compatible with it in S]``."""
    return float(dist.probs[compatible(dist, S, pi_k)].sum())


def marginal_topk(dist: RankingDistribution, pi_k) -> float:
    items = np.asarray(pi_k.items if isinstance(pi_k, TopKList) else tuple(pi_k), dtype=np.int64)
    match = np.all(dist.perms[:, : len(items)] == items, axis=1)
    return float(dist.probs[match].sum())


def topk_marginals(dist: RankingDistribution, k: int) -> dict[tuple[int, ...], float]:
    out: dict[tuple[int, ...], float] = {}
    for perm, p in zip(dist.perms, dist.probs):
        key = tuple(int(x) for x in perm[:k])
        out[key] = out.get(key, 0.0) + float(p)
    return out


def mallows_topk_distance(pi_k: TopKList) -> int:
    """Kendall distance of an identity-centred prefix, counting listed-vs-unlisted inversions."""
    items = pi_k.items
    listed = set(items)
    rest = [j for j in range(pi_k.n) if j not in listed]
    d = 0
    for i, a in enumerate(items):
        d += sum(1 for b in items[i + 1:] if a > b)
        d += sum(1 for j in rest if a > j)
    return d


def mallows_topk_pmf(spec: MallowsSpec, pi_k: TopKList) -> float:
    if spec.n > 12:
        raise ValueError("closed form restricted to n <= 12")
    sigma = spec.center.inverse().order
    rel = TopKList(tuple(sigma[x] for x in pi_k.items), pi_k.n)
    return spec.q ** mallows_topk_distance(rel) * psi(spec.n - pi_k.k, spec.q) / psi(spec.n, spec.q)


def build_tilde_lambda(spec: MallowsSpec) -> RankingDistribution:
    """Move the mass of "second-to-last above last" onto the swapped ranking, bottom two only.

    Rankings whose first ``n-2`` positions already separate the centre's two
    bottom items keep their Mallows mass. Rankings ending in those two items
    in centre order get zero, and their swapped twins get both masses. The
    top-``(n-2)`` marginals are untouched.
    """
    if spec.n < 3:
        raise ValueError("need at least three items")
    base = enumerate_lambda(spec)
    a, b = spec.center.order[-2], spec.center.order[-1]
    probs = base.probs.copy()
    index = base.index()
    for r, perm in enumerate(base.perms):
        if int(perm[-2]) == a and int(perm[-1]) == b:
            twin = index[tuple(int(x) for x in perm[:-2]) + (b, a)]
            probs[twin] += probs[r]
            probs[r] = 0.0
    return RankingDistribution(base.perms, probs)


@dataclass(frozen=True)
class PairwiseMarginals:
    """``matrix[x, y]``: probability that ``x`` is ranked above ``y``."""

    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = self.matrix
        off = ~np.eye(m.shape[0], dtype=bool)
        if np.any(np.abs((m + m.T)[off] - 1.0) > 1e-12):
            raise ValueError("pairwise probabilities of a pair must sum to 1")

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def __getitem__(self, xy) -> float:
        return float(self.matrix[xy])


def pairwise_marginals(dist: RankingDistribution) -> PairwiseMarginals:
    pos = dist.positions()
    n = dist.n
    P = np.zeros((n, n))
    for x in range(n):
        for y in range(n):
            if x != y:
                P[x, y] = dist.probs[pos[:, x] < pos[:, y]].sum()
    return PairwiseMarginals(P)


def kemeny_from_pairwise(marginals: PairwiseMarginals) -> Ranking:
    """Ranking minimising expected Kendall distance, which depends only on pairwise marginals."""
    w = marginals.matrix.copy()
    np.fill_diagonal(w, 0.0)
    ranking, _ = solve_center_exact(w)
    return ranking


def expected_kendall(dist: RankingDistribution, pi: Ranking) -> float:
    return float(dist.probs @ kendall_distances(dist.perms, pi))


def class_probabilities(n: int, q: float) -> dict[str, float]:
    """Closed-form masses of top-``(n-2)`` classes under an identity-centred Mallows model.

    Classes are by where the two bottom items sit: both unlisted (A), only
    the second-to-last listed (B), only the last listed (C), both listed in
    centre order (D1) or reversed (D2).
    """
    if n < 4:
        raise ValueError("need n >= 4")
    q = validate_q(q)
    pa = (1 - q) * (1 - q**2) / ((1 - q ** (n - 1)) * (1 - q**n))
    pb = sum(q ** (n - 1 - m) for m in range(1, n - 1)) * pa
    pc = q * pb
    pd = sum(q ** (2 * n - 1 - j - k) for j in range(1, n - 2) for k in range(j + 1, n - 1)) * pa
    pd1 = pd / (1 + q)
    return {"A": pa, "B": pb, "C": pc, "D1": pd1, "D2": q * pd1}


def classify_prefix(prefix: Sequence[int], n: int) -> str:
    a, b = n - 2, n - 1
    has_a, has_b = a in prefix, b in prefix
    if not has_a and not has_b:
        return "A"
    if has_a and not has_b:
        return "B"
    if has_b and not has_a:
        return "C"
    return "D1" if list(prefix).index(a) < list(prefix).index(b) else "D2"


def class_probabilities_enumerated(n: int, q: float) -> dict[str, float]:
    """Same classes, summing :func:`mallows_topk_pmf` over every top-``(n-2)`` list."""
    spec = MallowsSpec.centered(n, q)
    out = {c: 0.0 for c in ("A", "B", "C", "D1", "D2")}
    for prefix in itertools.permutations(range(n), n - 2):
        out[classify_prefix(prefix, n)] += mallows_topk_pmf(spec, TopKList(prefix, n))
    return out


def group1_mass(n: int, q: float) -> float:
    """Closed form for the Mallows mass where the top ``n-2`` already put item ``n-2`` above ``n-1``."""
    return (1 - class_probabilities(n, q)["A"]) / (1 + q)


def group1_mass_enumerated(dist: RankingDistribution) -> float:
    n = dist.n
    a, b = n - 2, n - 1
    total = 0.0
    for perm, p in zip(dist.perms, dist.probs):
        head = [int(x) for x in perm[: n - 2]]
        if a in head and (b not in head or head.index(a) < head.index(b)):
            total += float(p)
    return total


def f_n(n: int, q: float) -> float:
    """``1 + q^(n-1) + q^n - 2 q^2 - q^(2n-1)``; positive exactly when the counterexample works."""
    if n < 4:
        raise ValueError("need n >= 4")
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must lie in [0, 1]")
    return 1 + q ** (n - 1) + q**n - 2 * q**2 - q ** (2 * n - 1)


def display_sets(n: int, min_size: int = 2) -> list[DisplaySet]:
    return [DisplaySet(c) for m in range(min_size, n + 1) for c in itertools.combinations(range(n), m)]


@dataclass
class InconsistencyReport:
    n: int
    q: float
    f_value: float
    applies: bool
    choice_max_diff: float
    marginal_max_diff: float
    swapped_pair_prob: float
    other_pairs_min: float
    recovered: Ranking
    truth: Ranking
    pa_closed: float
    pa_enumerated: float
    class_max_diff: float
    group1_closed: float
    group1_enumerated: float

    @property
    def passed(self) -> bool:
        """All demonstration checks hold together."""
        swapped = Ranking(self.truth.order[:-2] + (self.truth.order[-1], self.truth.order[-2]))
        return (
            self.applies
            and self.choice_max_diff < 1e-12
            and self.marginal_max_diff < 1e-12
            and self.swapped_pair_prob < 0.5
            and self.other_pairs_min > 0.5
            and self.recovered == swapped
            and self.class_max_diff < 1e-12
            and abs(self.group1_closed - self.group1_enumerated) < 1e-12
        )


def inconsistency_demo(n: int, q: float) -> InconsistencyReport:
    """Build the transported distribution and check it against the Mallows original.

    It matches every choice probability on displays of size >= 3, but the
    pairwise Kemeny step then recovers the ranking with the bottom two items
    swapped.
    """
    spec = MallowsSpec.centered(n, q)
    lam = enumerate_lambda(spec)
    tilde = build_tilde_lambda(spec)
    choice_diff = 0.0
    for S in display_sets(n, 3):
        for x in S.items:
            choice_diff = max(choice_diff, abs(aggregate_choice(lam, S, (x,)) - aggregate_choice(tilde, S, (x,))))
    m_e, m_t = topk_marginals(lam, n - 2), topk_marginals(tilde, n - 2)
    marginal_diff = max(abs(m_e[key] - m_t.get(key, 0.0)) for key in m_e)
    P = pairwise_marginals(tilde)
    others = [P[x, y] for x in range(n) for y in range(x + 1, n) if (x, y) != (n - 2, n - 1)]
    closed = class_probabilities(n, q)
    enum = class_probabilities_enumerated(n, q)
    fv = f_n(n, q)
    return InconsistencyReport(
        n=n,
        q=q,
        f_value=fv,
        applies=fv > 0,
        choice_max_diff=choice_diff,
        marginal_max_diff=marginal_diff,
        swapped_pair_prob=P[n - 2, n - 1],
        other_pairs_min=min(others),
        recovered=kemeny_from_pairwise(P),
        truth=Ranking.identity(n),
        pa_closed=closed["A"],
        pa_enumerated=enum["A"],
        class_max_diff=max(abs(closed[c] - enum[c]) for c in closed),
        group1_closed=group1_mass(n, q),
        group1_enumerated=group1_mass_enumerated(lam),
    )


@dataclass(frozen=True)
class CheckResult:
    name: str
    max_error: float
    tolerance: float
    cases: int

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance


def verify_suite(n: int, q_grid: Sequence[float], center: Ranking | None = None) -> list[CheckResult]:
    """Compare every closed form against enumeration for a universe of ``n`` items.

    Checks single choices and ranked choices on every display set, per-level
    normalisation, full-ranking and top-``k`` masses, and the next-item law.
    """
    # local imports: choice and model sit above this module in the stack
    from .choice import choice_prob, ranked_choice_prob
    from .model import next_item_distribution, pmf_full, pmf_topk

    if not 2 <= n <= ORACLE_CAP:
        raise ValueError(f"verification needs 2 <= n <= {ORACLE_CAP}, got {n}")
    center = center or Ranking.identity(n)
    errs = {k: 0.0 for k in ("choice", "ranked_choice", "normalisation", "full_pmf", "topk_pmf", "next_item")}
    cases = dict.fromkeys(errs, 0)
    for q in q_grid:
        model = RmjModel(center, q)
        lam = enumerate_lambda(model)
        for p, perm in zip(lam.probs, lam.perms):
            errs["full_pmf"] = max(errs["full_pmf"], abs(float(p) - pmf_full(model, Ranking(tuple(int(x) for x in perm)))))
            cases["full_pmf"] += 1
        for S in display_sets(n):
            for x in S.items:
                errs["choice"] = max(errs["choice"], abs(choice_prob(model, S, x) - aggregate_choice(lam, S, (x,))))
                cases["choice"] += 1
            for k in range(1, S.size + 1):
                level = 0.0
                for pi_k in itertools.permutations(S.items, k):
                    p = ranked_choice_prob(model, S, pi_k)
                    level += p
                    errs["ranked_choice"] = max(errs["ranked_choice"], abs(p - aggregate_choice(lam, S, pi_k)))
                    cases["ranked_choice"] += 1
                errs["normalisation"] = max(errs["normalisation"], abs(level - 1.0))
                cases["normalisation"] += 1
        for k in range(1, n):
            marg = topk_marginals(lam, k)
            for key, p in marg.items():
                pi_k = TopKList(key, n)
                errs["topk_pmf"] = max(errs["topk_pmf"], abs(pmf_topk(model, pi_k) - p))
                cases["topk_pmf"] += 1
                dist = next_item_distribution(model, pi_k)
                for y, py in dist.items():
                    brute = marginal_topk(lam, key + (y,)) / p
                    errs["next_item"] = max(errs["next_item"], abs(py - brute))
                    cases["next_item"] += 1
    tol = {"normalisation": 1e-10}
    return [CheckResult(k, errs[k], tol.get(k, 1e-12), cases[k]) for k in errs]

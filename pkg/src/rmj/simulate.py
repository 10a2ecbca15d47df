"""Synthetic choice data: display policies and sampling from a (mixture) model."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .choice import ChoiceObservation, sample_ranked_choice
from .io import FormatError
from .mixture import MixtureModel
from .ranking import DisplaySet


class DisplayPolicy:
    """Draws one display set per record.

    ``full`` always shows every item, ``all-pairs`` a uniform random pair,
    ``all-subsets-ge:m`` a uniform random subset of size at least ``m``, and
    ``file:PATH`` a uniform random line of a file listing one display per line.
    """

    def __init__(self, spec: str, n: int):
        self.spec, self.n = spec, n
        self.fixed: list[DisplaySet] | None = None
        if spec == "full":
            self.kind, self.min_size = "full", n
        elif spec == "all-pairs":
            self.kind, self.min_size = "pairs", 2
        elif spec.startswith("all-subsets-ge:"):
            m = int(spec.split(":", 1)[1])
            if not 2 <= m <= n:
                raise ValueError(f"all-subsets-ge needs 2 <= m <= {n}, got {m}")
            self.kind, self.min_size = "subsets", m
            sizes = np.arange(m, n + 1)
            logc = np.array([math.lgamma(n + 1) - math.lgamma(s + 1) - math.lgamma(n - s + 1) for s in sizes])
            w = np.exp(logc - logc.max())
            self.sizes, self.size_cdf = sizes, np.cumsum(w / w.sum())
        elif spec.startswith("file:"):
            self.kind = "fixed"
            self.fixed = read_display_list(spec.split(":", 1)[1], n)
            self.min_size = min(S.size for S in self.fixed)
        else:
            raise ValueError(f"unknown display policy {spec!r}")

    def draw(self, rng: np.random.Generator) -> DisplaySet:
        if self.kind == "full":
            return DisplaySet.full(self.n)
        if self.kind == "pairs":
            return DisplaySet(tuple(sorted(int(x) for x in rng.choice(self.n, 2, replace=False))))
        if self.kind == "subsets":
            size = int(self.sizes[min(np.searchsorted(self.size_cdf, rng.random(), side="right"), len(self.sizes) - 1)])
            return DisplaySet(tuple(sorted(int(x) for x in rng.choice(self.n, size, replace=False))))
        assert self.fixed is not None
        return self.fixed[int(rng.integers(len(self.fixed)))]


def read_display_list(path: str, n: int) -> list[DisplaySet]:
    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        text = line.strip()
        if not text:
            continue
        try:
            items = json.loads(text) if text.startswith("[") else [int(t) for t in text.replace(",", " ").split()]
            S = DisplaySet(tuple(sorted(int(x) for x in items)))
        except (ValueError, TypeError, json.JSONDecodeError) as exc:
            raise FormatError(f"{path} line {lineno}: {exc}") from None
        if S.items[-1] >= n:
            raise FormatError(f"{path} line {lineno}: item outside the universe of {n}")
        out.append(S)
    if not out:
        raise FormatError(f"{path}: no display sets")
    return out


def generate(mix: MixtureModel, T: int, policy: DisplayPolicy, k: int, rng: np.random.Generator) -> list[ChoiceObservation]:
    """Pick a component, then a display, then a ranked response, once per record."""
    if k > policy.min_size:
        raise ValueError(f"policy {policy.spec!r} yields displays of size {policy.min_size} < k={k}")
    models = [c.model() for c in mix.components]
    cdf = np.cumsum(mix.weights)
    out = []
    for _ in range(T):
        m = min(int(np.searchsorted(cdf, rng.random(), side="right")), len(models) - 1)
        S = policy.draw(rng)
        out.append(ChoiceObservation(S, sample_ranked_choice(models[m], S, k, rng)))
    return out

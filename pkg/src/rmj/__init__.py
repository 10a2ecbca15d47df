"""Reverse-major-index ranking model: choice probabilities, estimation, EM mixtures, oracles."""

from .choice import (
    ChoiceData,
    ChoiceObservation,
    choice_prob,
    log_likelihood,
    mixture_log_likelihood,
    ranked_choice_prob,
    sample_ranked_choice,
)
from .estimation import FitOptions, FitResult, accumulate_weights_k1, accumulate_weights_topk, fit, solve_center
from .mixture import Component, EmOptions, EmTrace, MixtureModel, fit_mixture
from .model import RmjModel, next_item_distribution, pmf_full, pmf_topk, sample_ranking, sample_topk
from .ranking import DisplaySet, Ranking, TopKList, kendall_tau, psi, rmj

__all__ = [
    "ChoiceData",
    "ChoiceObservation",
    "Component",
    "DisplaySet",
    "EmOptions",
    "EmTrace",
    "FitOptions",
    "FitResult",
    "MixtureModel",
    "Ranking",
    "RmjModel",
    "TopKList",
    "accumulate_weights_k1",
    "accumulate_weights_topk",
    "choice_prob",
    "fit",
    "fit_mixture",
    "kendall_tau",
    "log_likelihood",
    "mixture_log_likelihood",
    "next_item_distribution",
    "pmf_full",
    "pmf_topk",
    "psi",
    "ranked_choice_prob",
    "rmj",
    "sample_ranked_choice",
    "sample_ranking",
    "sample_topk",
    "solve_center",
]

"""Concrete compositional benchmark problems."""
from .portfolio import (
    PortfolioProblem,
    generate_portfolio,
    load_returns_csv,
    portfolio_components,
)
from .quadtoy import QuadToyProblem
from .sne import SneProblem, generate_sne, sne_components, sne_similarities
from .value_eval import (
    ValueEvalProblem,
    generate_mdp,
    load_mdp_csv,
    value_eval_components,
)

__all__ = [
    "PortfolioProblem",
    "QuadToyProblem",
    "SneProblem",
    "ValueEvalProblem",
    "generate_mdp",
    "generate_portfolio",
    "generate_sne",
    "load_mdp_csv",
    "load_returns_csv",
    "portfolio_components",
    "sne_components",
    "sne_similarities",
    "value_eval_components",
]

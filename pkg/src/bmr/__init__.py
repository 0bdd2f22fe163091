"""
Bayesian model reduction.

Evidence and posteriors of reduced models (models that differ from a fitted
full model only in their priors) computed analytically from the full
model's prior and posterior, plus the fitters and searches that use them.
"""

__version__ = "0.1.0"

from .densities import (BetaDensity, CategoricalDensity, DirichletDensity, GammaDensity,
                        GaussianDensity, MultinomialDensity, SchemaError, density_from_dict)
from .fit import FitError, FitResult
from .glm import GLMModel, fit_glm, glm_log_evidence_fixed_lambda, orthogonal_design, simulate_glm
from .reduction import (OFF_VARIANCE, REMOVAL_CONCENTRATION, ImproperPosteriorError,
                        ReductionResult, reduce, reduce_beta, reduce_categorical,
                        reduce_dirichlet, reduce_gamma, reduce_gaussian, reduce_multinomial)
from .rng import make_rng
from .search import (SearchResult, apply_pattern, bayesian_model_average, exhaustive_search,
                     family_inference, greedy_search, model_posterior, score_patterns)
from .special import DomainError, FactorizationError

"""Toolkit for intergenerational income mobility analysis.

Provides rank-based and proxy-variable mobility estimators, a Gaussian
latent-skill family simulator, a simulated-method-of-moments calibration
engine, and a counterfactual decomposition of mobility trends, together
with a synthetic-microdata generator used to verify every estimator
against planted ground truth.

Submodules
----------
population     microdata loading, parent-child pair construction
ranking        percentile-rank and ventile transforms within groups
estimators     rank/log regressions, trend fits, descriptive indices
lw             Lubotsky-Wittenberg proxy-variable estimator
model          latent-skill simulator and empirical quantile maps
calibration    moment system and gradient-descent calibration
decomposition  counterfactual trend attribution
synthetic      planted-parameter CSV generator
cli            configuration-driven pipeline runner
"""

__version__ = "0.1.0"

from mobkit import (  # noqa: F401
    calibration,
    decomposition,
    estimators,
    lw,
    model,
    population,
    ranking,
    synthetic,
)

"""Interpretable early-warning classifiers over timestamped relational logs.

Pipeline: window the secondary table, construct aggregate variables, keep the
informative ones by supervised discretization, then fit a selective naive Bayes
that can be explained with exact Shapley values and counterfactual trajectories.
"""

from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]

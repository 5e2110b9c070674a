"""Transductive model selection for classifiers under prior probability shift.

Train a grid of classifiers once, predict each one's accuracy on a specific
unlabelled batch with a quantifier-backed accuracy predictor, and pick the
winner per batch; benchmark against inductive selection, defaults, and an
oracle under the artificial prevalence protocol.
"""

__version__ = "0.1.0"

"""Class-prevalence estimation on unlabelled bags.

Two estimators over a trained classifier's posterior outputs:

* classify-and-count: the empirical distribution of predicted labels;
* a kernel-density mixture: per-class Gaussian KDEs fitted on the posterior
  vectors of validation instances, with mixture weights chosen to maximize the
  likelihood of the bag's posteriors via EM (multiplicative updates).

The EM objective L(a) = sum_x log sum_j a_j f_j(s(x)) is concave in the
mixture weights, every EM iterate stays on the simplex, and the likelihood is
non-decreasing across iterations, so the updates reach the global optimum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataspace import DataError, LabelledSet, as_prevalence
from .classifiers import TrainedModel

DENSITY_FLOOR = 1e-300
DEFAULT_BANDWIDTH = 0.1
EM_TOL = 1e-6
EM_MAX_ITER = 1000


@dataclass(frozen=True)
class ClassDensities:
    """Per-class KDE support points (posterior rows) and a shared bandwidth."""

    support: tuple          # one (m_j, n_classes) array per class
    bandwidth: float
    n_classes: int

    def __post_init__(self):
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        if len(self.support) != self.n_classes:
            raise ValueError("one support set per class required")
        for j, S in enumerate(self.support):
            if S.ndim != 2 or S.shape[0] == 0 or S.shape[1] != self.n_classes:
                raise ValueError(f"class {j} has invalid support shape {S.shape}")

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Density of each class's KDE at each query row; shape (m, n_classes)."""
        P = np.asarray(points, dtype=float)
        h2 = self.bandwidth ** 2
        d = self.n_classes
        norm = (2.0 * np.pi * h2) ** (-d / 2.0)
        out = np.empty((P.shape[0], d))
        pp = (P * P).sum(axis=1)[:, None]
        for j, S in enumerate(self.support):
            d2 = pp + (S * S).sum(axis=1)[None, :] - 2.0 * P @ S.T
            np.maximum(d2, 0.0, out=d2)
            out[:, j] = norm * np.exp(-d2 / (2.0 * h2)).mean(axis=1)
        return out


@dataclass(frozen=True)
class Quantifier:
    """A fitted prevalence estimator bound to the classifier that feeds it."""

    kind: str                       # "CC" | "KDEyML"
    model: TrainedModel
    densities: ClassDensities = None

    def __post_init__(self):
        if self.kind not in ("CC", "KDEyML"):
            raise ValueError(f"unknown quantifier kind {self.kind!r}")
        if (self.kind == "KDEyML") != (self.densities is not None):
            raise ValueError("KDEyML carries densities, CC does not")

    def estimate(self, bag, posteriors=None) -> np.ndarray:
        if self.kind == "CC":
            return classify_and_count(self.model, bag, posteriors=posteriors)
        return kdey_ml_estimate(self, bag, posteriors=posteriors)


def fit_kdey(model: TrainedModel, validation: LabelledSet,
             bandwidth: float = DEFAULT_BANDWIDTH) -> Quantifier:
    """Fit per-class KDEs over the model's posteriors on validation data."""
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    posteriors = model.predict_posteriors(validation.X)
    y = validation.y
    support = []
    for j in range(validation.n_classes):
        S = posteriors[y == j]
        if S.shape[0] == 0:
            raise DataError(f"class {j} missing from validation data")
        support.append(S)
    densities = ClassDensities(tuple(support), float(bandwidth), validation.n_classes)
    return Quantifier("KDEyML", model, densities)


def fit_cc(model: TrainedModel) -> Quantifier:
    return Quantifier("CC", model)


def mixture_log_likelihood(F: np.ndarray, alpha: np.ndarray) -> float:
    return float(np.log(F @ alpha).sum())


def em_mixture_weights(F: np.ndarray, tol: float = EM_TOL,
                       max_iter: int = EM_MAX_ITER):
    """Maximize sum_x log sum_j a_j F[x, j] over the simplex by EM.

    Starts uniform; stops when the L1 change falls below `tol` or after
    `max_iter` iterations. Densities are floored at 1e-300 before use; a
    `floored` flag reports whether the floor was ever active.

    Returns (alpha, info) with info holding the log-likelihood trace,
    iteration count, and the floor flag.
    """
    F = np.asarray(F, dtype=float)
    floored = bool((F < DENSITY_FLOOR).any())
    F = np.maximum(F, DENSITY_FLOOR)
    m, n = F.shape
    alpha = np.full(n, 1.0 / n)
    trace = [mixture_log_likelihood(F, alpha)]
    iterations = 0
    for iterations in range(1, max_iter + 1):
        mix = F @ alpha
        resp = F * (alpha / mix[:, None])
        new_alpha = resp.mean(axis=0)
        new_alpha /= new_alpha.sum()
        trace.append(mixture_log_likelihood(F, new_alpha))
        delta = np.abs(new_alpha - alpha).sum()
        alpha = new_alpha
        if delta < tol:
            break
    info = {"iterations": iterations, "loglik": trace, "floored": floored}
    return as_prevalence(alpha), info


def kdey_ml_estimate(q: Quantifier, bag, tol: float = EM_TOL,
                     max_iter: int = EM_MAX_ITER, posteriors=None) -> np.ndarray:
    """Maximum-likelihood prevalence of `bag` under the fitted KDE mixture.

    `posteriors` optionally supplies precomputed posterior rows for the bag's
    instances (they must come from the same model the quantifier holds).
    """
    alpha, _ = kdey_ml_estimate_detailed(q, bag, tol, max_iter, posteriors)
    return alpha


def kdey_ml_estimate_detailed(q: Quantifier, bag, tol: float = EM_TOL,
                              max_iter: int = EM_MAX_ITER, posteriors=None):
    if q.kind != "KDEyML" or q.densities is None:
        raise ValueError("quantifier is not a fitted KDE mixture")
    if posteriors is None:
        posteriors = q.model.predict_posteriors(bag.features)
    if posteriors.shape[0] == 0:
        raise DataError("empty bag")
    F = q.densities.evaluate(posteriors)
    return em_mixture_weights(F, tol=tol, max_iter=max_iter)


def classify_and_count(model: TrainedModel, bag, posteriors=None) -> np.ndarray:
    """Empirical distribution of the model's predicted labels over the bag."""
    if posteriors is None:
        labels = model.predict_labels(bag.features)
    else:
        labels = np.argmax(posteriors, axis=1)
    if labels.size == 0:
        raise DataError("empty bag")
    counts = np.bincount(labels, minlength=model.n_classes)
    return as_prevalence(counts / labels.size)

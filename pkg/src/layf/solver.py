"""Closed-form classifiers over accumulated statistics.

The main classifier solves (G + lambda I) w_y = c_y per class with a
symmetric factorization and scores test features as dot products against
the pre-solved weight rows; one factorization serves all classes. Cosine
baselines against mean prototypes and a per-layer score-averaging
ensemble are provided for comparison runs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .accumulator import StatAccumulator, _as_vector
from .errors import ContractError, NumericError, StateError, UnseenClassError

FACTORIZED_SOLVE = "factorized-solve"
PSEUDO_INVERSE = "pseudo-inverse"

# Singular values at or below this fraction of the largest one are
# treated as zero in the lambda=0 pseudo-inverse fallback.
PINV_RTOL = 1e-10


@dataclass(frozen=True)
class Prediction:
    """Predicted label plus the per-class score vector it came from.

    The label is the index of the maximum score; ties break toward the
    lowest class id (argmax returns the first maximum).
    """

    label: int
    scores: np.ndarray


def _argmax_prediction(scores: np.ndarray) -> Prediction:
    scores = np.asarray(scores, dtype=np.float64)
    return Prediction(label=int(np.argmax(scores)), scores=scores)


@dataclass(frozen=True)
class RidgeClassifier:
    """Frozen scoring weights: row y solves (G + lambda I) w_y = c_y."""

    weights: np.ndarray  # (C, D)
    lam: float
    dim: int
    solve_method: str

    def predict(self, feat) -> Prediction:
        """Score one feature vector against every class and take the argmax."""
        v = _as_vector(feat)
        if v.shape[0] != self.dim:
            raise ContractError(
                f"feature has dimension {v.shape[0]}, classifier expects {self.dim}"
            )
        return _argmax_prediction(self.weights @ v)

    def score_batch(self, feats: np.ndarray) -> np.ndarray:
        """Per-class scores for a (N, D) matrix of feature rows."""
        feats = np.asarray(feats, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[1] != self.dim:
            raise ContractError(
                f"expected an (N, {self.dim}) feature matrix, got shape {feats.shape}"
            )
        return feats @ self.weights.T

    def predict_batch(self, feats: np.ndarray) -> np.ndarray:
        """Predicted labels for a (N, D) matrix of feature rows."""
        return np.argmax(self.score_batch(feats), axis=1)


def fit_ridge(acc: StatAccumulator, lam: float) -> RidgeClassifier:
    """Solve the regularized system for all class weight rows at once.

    For lam > 0 the system is symmetric positive definite and solved via
    Cholesky factorization; no explicit inverse is ever formed. For
    lam = 0 with singular G the solve falls back to a truncated
    pseudo-inverse so that the unregularized configuration still yields
    predictions (degraded, but defined).
    """
    if lam < 0:
        raise ValueError(f"lambda must be non-negative, got {lam}")
    if acc.samples_seen == 0:
        raise StateError("cannot fit a classifier on an empty accumulator")
    lam = float(lam)
    system = acc.gram + lam * np.eye(acc.dim)
    try:
        factor = scipy.linalg.cho_factor(system, lower=True, check_finite=False)
        weights = scipy.linalg.cho_solve(factor, acc.proto_sums.T, check_finite=False).T
        method = FACTORIZED_SOLVE
    except scipy.linalg.LinAlgError as exc:
        if lam > 0:
            smallest = float(np.linalg.eigvalsh(system)[0])
            raise NumericError(
                f"factorization failed at lambda={lam}: smallest pivot ~ {smallest:.3e}"
            ) from exc
        weights = (np.linalg.pinv(system, rcond=PINV_RTOL, hermitian=True) @ acc.proto_sums.T).T
        method = PSEUDO_INVERSE
    return RidgeClassifier(
        weights=np.ascontiguousarray(weights), lam=lam, dim=acc.dim, solve_method=method
    )


def predict(clf: RidgeClassifier, feat) -> Prediction:
    """Module-level alias for RidgeClassifier.predict."""
    return clf.predict(feat)


def cosine_scores(prototypes: np.ndarray, feats: np.ndarray) -> np.ndarray:
    """Cosine similarity of each feature row against each prototype row.

    Raises NumericError on any zero-norm feature or prototype; callers
    that need to skip unseen classes must mask rows out beforehand.
    """
    prototypes = np.asarray(prototypes, dtype=np.float64)
    feats = np.atleast_2d(np.asarray(feats, dtype=np.float64))
    proto_norms = np.linalg.norm(prototypes, axis=1)
    feat_norms = np.linalg.norm(feats, axis=1)
    if np.any(proto_norms == 0.0):
        bad = int(np.argmin(proto_norms))
        raise NumericError(f"prototype {bad} has zero norm; cosine undefined")
    if np.any(feat_norms == 0.0):
        raise NumericError("test feature has zero norm; cosine undefined")
    return (feats @ prototypes.T) / np.outer(feat_norms, proto_norms)


def _mean_prototypes(acc: StatAccumulator) -> np.ndarray:
    unseen = np.flatnonzero(acc.class_counts == 0)
    if unseen.size:
        raise UnseenClassError(
            f"class {int(unseen[0])} has no samples; cosine prototypes undefined"
        )
    return acc.proto_sums / acc.class_counts[:, None].astype(np.float64)


def _cosine_predict(acc: StatAccumulator, vec: np.ndarray) -> Prediction:
    if vec.shape[0] != acc.dim:
        raise ContractError(
            f"feature has dimension {vec.shape[0]}, accumulator expects {acc.dim}"
        )
    scores = cosine_scores(_mean_prototypes(acc), vec[None, :])[0]
    return _argmax_prediction(scores)


def nmc_predict(acc: StatAccumulator, last_layer_feat) -> Prediction:
    """Nearest-mean prediction: highest cosine against the class means.

    ``acc`` must hold last-layer statistics (k=1) and every class must
    have at least one sample.
    """
    return _cosine_predict(acc, _as_vector(last_layer_feat))


def laynmc_predict(acc: StatAccumulator, feat) -> Prediction:
    """Nearest-mean prediction over concatenated multi-layer features.

    Identical to nmc_predict when the accumulator was built with k=1.
    """
    return _cosine_predict(acc, _as_vector(feat))


def fit_separate_ensemble(
    per_layer_accs: Sequence[StatAccumulator], lam: float
) -> list[RidgeClassifier]:
    """Fit one regularized classifier per layer accumulator."""
    return [fit_ridge(acc, lam) for acc in per_layer_accs]


def ensemble_separate_predict(
    per_layer_accs: Sequence[StatAccumulator],
    per_layer_feats: Sequence[np.ndarray],
    lam: float,
) -> Prediction:
    """Average per-layer score vectors with equal weights, then argmax.

    Each layer gets its own classifier fit from its own accumulator; the
    raw (unnormalized) score vectors are averaged.
    """
    if len(per_layer_accs) != len(per_layer_feats):
        raise ContractError(
            f"{len(per_layer_accs)} accumulators but {len(per_layer_feats)} feature vectors"
        )
    if not per_layer_accs:
        raise ContractError("ensemble needs at least one layer")
    classifiers = fit_separate_ensemble(per_layer_accs, lam)
    scores = np.mean(
        [clf.predict(feat).scores for clf, feat in zip(classifiers, per_layer_feats)],
        axis=0,
    )
    return _argmax_prediction(scores)

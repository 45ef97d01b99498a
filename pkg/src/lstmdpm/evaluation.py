"""Evaluation metrics: per-node MAE over available targets, a pooled-
covariance LDA posterior classifier, and rank-based multi-class AUC."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import rankdata

from .errors import DataError


def mae(
    estimates: np.ndarray,
    targets: np.ndarray,
    target_mask: np.ndarray,
    inverse: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> np.ndarray:
    """Mean absolute error per output node over available cells only.

    ``inverse``, when given, maps (..., M) arrays back to original
    measurement units before the residuals are taken.  Nodes with no
    available cells report NaN (undefined, not zero).
    """
    mask = np.asarray(target_mask, dtype=bool)
    y = np.asarray(estimates, dtype=np.float64)
    s = np.asarray(targets, dtype=np.float64)
    if inverse is not None:
        y = inverse(y)
        s = inverse(s)
    abs_err = np.where(mask, np.abs(y - s), 0.0)
    counts = mask.reshape(-1, mask.shape[-1]).sum(axis=0)
    sums = abs_err.reshape(-1, mask.shape[-1]).sum(axis=0)
    with np.errstate(invalid="ignore"):
        return np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)


@dataclass(frozen=True)
class LdaModel:
    """Gaussian classes with a shared (ridge-stabilized) covariance."""

    classes: Tuple[str, ...]
    means: np.ndarray       # (C, M)
    covariance: np.ndarray  # (M, M)
    priors: np.ndarray      # (C,)

    def __post_init__(self) -> None:
        for arr in (self.means, self.covariance, self.priors):
            arr.setflags(write=False)


def fit_lda(
    features: np.ndarray,
    labels: Sequence[str],
    ridge: Optional[float] = None,
) -> LdaModel:
    """Fit class means, pooled within-class covariance, and priors.

    ``ridge`` defaults to 1e-6 * trace(pooled) / M, a scale-aware
    stabilizer for near-singular covariances.
    """
    x = np.asarray(features, dtype=np.float64)
    labels = list(labels)
    if x.ndim != 2 or x.shape[0] != len(labels):
        raise ValueError("features must be (K, M) with one label per row")
    classes = tuple(sorted(set(labels)))
    if len(classes) < 2:
        raise DataError("LDA needs at least two classes present")
    k, m = x.shape
    means = np.empty((len(classes), m))
    pooled = np.zeros((m, m))
    counts = np.empty(len(classes))
    label_arr = np.array(labels)
    for ci, cls in enumerate(classes):
        rows = x[label_arr == cls]
        if rows.shape[0] < 2:
            raise DataError(f"class {cls!r} has fewer than 2 samples")
        means[ci] = rows.mean(axis=0)
        centered = rows - means[ci]
        pooled += centered.T @ centered
        counts[ci] = rows.shape[0]
    pooled /= k - len(classes)
    if ridge is None:
        ridge = 1e-6 * np.trace(pooled) / m
    pooled += ridge * np.eye(m)
    try:
        np.linalg.cholesky(pooled)
    except np.linalg.LinAlgError as exc:
        raise DataError(
            "pooled covariance is singular even after the ridge term; "
            "refit with a larger ridge"
        ) from exc
    return LdaModel(
        classes=classes, means=means, covariance=pooled, priors=counts / k
    )


def posterior(model: LdaModel, features: np.ndarray) -> np.ndarray:
    """Class posteriors for one (M,) vector or a (K, M) block.

    Normalization goes through log-sum-exp so far-from-mean points stay
    well defined.
    """
    x = np.asarray(features, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None]
    chol = np.linalg.cholesky(model.covariance)
    log_post = np.empty((x.shape[0], len(model.classes)))
    for ci in range(len(model.classes)):
        diff = x - model.means[ci]
        solved = np.linalg.solve(chol, diff.T)
        maha = np.sum(solved * solved, axis=0)
        log_post[:, ci] = np.log(model.priors[ci]) - 0.5 * maha
    log_post -= log_post.max(axis=1, keepdims=True)
    post = np.exp(log_post)
    post /= post.sum(axis=1, keepdims=True)
    return post[0] if single else post


@dataclass(frozen=True)
class ScoredVisit:
    """A labeled visit with its posterior probability per class."""

    label: str
    posteriors: Mapping[str, float]


def score_visits(
    model: LdaModel, features: np.ndarray, labels: Sequence[str]
) -> Tuple[ScoredVisit, ...]:
    """Score labeled feature rows into ScoredVisits."""
    post = posterior(model, np.asarray(features, dtype=np.float64))
    return tuple(
        ScoredVisit(label=lab, posteriors=dict(zip(model.classes, row)))
        for lab, row in zip(labels, post)
    )


def pairwise_auc(
    scored: Sequence[ScoredVisit], class_i: str, class_k: str
) -> float:
    """Rank-based AUC for one unordered class pair.

    For each direction, the posteriors for one class over the combined
    samples of both classes are ranked ascending with midranks for ties;
    the two Mann-Whitney terms are averaged.
    """
    scores_i = [v.posteriors[class_i] for v in scored if v.label == class_i]
    scores_ik = [v.posteriors[class_i] for v in scored if v.label == class_k]
    scores_k = [v.posteriors[class_k] for v in scored if v.label == class_k]
    scores_ki = [v.posteriors[class_k] for v in scored if v.label == class_i]
    n_i, n_k = len(scores_i), len(scores_k)
    if n_i == 0 or n_k == 0:
        raise DataError(f"empty class in pair ({class_i!r}, {class_k!r})")
    ranks_i = rankdata(np.array(scores_i + scores_ik))
    sr_i = float(ranks_i[:n_i].sum())
    ranks_k = rankdata(np.array(scores_k + scores_ki))
    sr_k = float(ranks_k[:n_k].sum())
    return (
        sr_i - n_i * (n_i + 1) / 2.0 + sr_k - n_k * (n_k + 1) / 2.0
    ) / (2.0 * n_i * n_k)


def multiclass_auc(scored: Sequence[ScoredVisit]) -> float:
    """Average of the pairwise AUC terms over all unordered class pairs."""
    classes = sorted({v.label for v in scored})
    if len(classes) < 2:
        raise DataError("multi-class AUC needs at least two classes present")
    pairs = [
        (classes[a], classes[b])
        for a in range(len(classes))
        for b in range(a + 1, len(classes))
    ]
    return sum(pairwise_auc(scored, ci, ck) for ci, ck in pairs) / len(pairs)


def auc_report(scored: Sequence[ScoredVisit]) -> Dict[str, float]:
    """Pairwise AUC per class pair plus the combined multi-class value."""
    classes = sorted({v.label for v in scored})
    report: Dict[str, float] = {}
    for a in range(len(classes)):
        for b in range(a + 1, len(classes)):
            key = f"{classes[a]}|{classes[b]}"
            report[key] = pairwise_auc(scored, classes[a], classes[b])
    report["multiclass"] = multiclass_auc(scored)
    return report

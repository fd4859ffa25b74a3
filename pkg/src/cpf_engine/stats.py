"""Self-contained numerical kernel: percentile, Pearson correlation,
logistic regression with Wald inference, AUC-ROC.

Every function is pure and safe for concurrent use. The logistic fit is a
plain maximum-likelihood IRLS: feature standardization is the caller's
job, which keeps rescaling invariance testable at this level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, FitError, InferenceError, UsageError

MAX_IRLS_ITERATIONS = 100
IRLS_TOLERANCE = 1e-8
# An iterate this large means the likelihood is running off to a boundary
# (complete separation); report converged=False instead of looping.
_DIVERGENCE_BOUND = 1e8


@dataclass(frozen=True)
class LogisticModel:
    """Maximum-likelihood logistic fit with observed-information covariance."""

    coefficients: np.ndarray
    covariance: np.ndarray
    iterations: int
    converged: bool

    def __post_init__(self) -> None:
        k = self.coefficients.shape[0]
        if self.covariance.shape != (k, k):
            raise ValueError("covariance shape does not match coefficients")


def percentile(values: list[float] | np.ndarray, p: float) -> float:
    """Linear-interpolation percentile.

    With sorted values v[0..n-1] and rank c = (n-1) * p / 100, returns
    v[floor(c)] + (c - floor(c)) * (v[ceil(c)] - v[floor(c)]).
    """
    data = np.asarray(values, dtype=float)
    if data.size == 0:
        raise DataError("percentile of an empty sequence is undefined")
    if not 0.0 <= p <= 100.0:
        raise UsageError(f"percentile rank {p} outside [0, 100]")
    ordered = np.sort(data)
    c = (ordered.size - 1) * p / 100.0
    lo = math.floor(c)
    hi = math.ceil(c)
    if lo == hi:
        return float(ordered[lo])
    return float(ordered[lo] + (c - lo) * (ordered[hi] - ordered[lo]))


def pearson(xs: list[float] | np.ndarray, ys: list[float] | np.ndarray) -> float:
    """Sample Pearson correlation, clamped into [-1, 1].

    Raises:
        UsageError: on length mismatch or fewer than two points.
        DataError: when either series has zero variance (the correlation
            is undefined, not zero).
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise UsageError("pearson requires two equal-length 1-d series")
    if x.size < 2:
        raise UsageError("pearson requires at least two points")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise DataError("zero variance: correlation undefined")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def log_likelihood(features: np.ndarray, labels: np.ndarray, beta: np.ndarray) -> float:
    """Bernoulli log-likelihood of ``beta`` on a design matrix."""
    p = np.clip(_sigmoid(features @ beta), 1e-300, 1.0 - 1e-16)
    y = np.asarray(labels, dtype=float)
    return float(y @ np.log(p) + (1.0 - y) @ np.log1p(-p))


def log_likelihood_gradient(features: np.ndarray, labels: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Analytic score vector X^T (y - p); zero at the maximum."""
    p = _sigmoid(features @ beta)
    return features.T @ (np.asarray(labels, dtype=float) - p)


def _dependent_column(features: np.ndarray) -> int:
    """Index of the first column linearly dependent on earlier ones."""
    _, r = np.linalg.qr(features)
    diag = np.abs(np.diag(r))
    bound = max(features.shape) * np.finfo(float).eps * (diag.max() if diag.size else 1.0)
    for j, d in enumerate(diag):
        if d <= bound:
            return j
    return -1


def fit_logistic(features: np.ndarray, labels: np.ndarray) -> LogisticModel:
    """IRLS maximum-likelihood logistic regression.

    ``features`` is an n x (k+1) design matrix whose first column is the
    intercept (all ones); ``labels`` are n binaries. Converges when the
    Newton step satisfies max |delta beta| < 1e-8, capped at 100
    iterations; complete separation surfaces as converged=False with the
    last iterate. The covariance is the inverse Fisher information at the
    returned coefficients.

    Raises:
        UsageError: on malformed shapes, labels outside {0, 1}, n <= k+1,
            or a missing intercept column.
        FitError: when the information matrix is singular; the message
            names the offending column.
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
        raise UsageError("need an n x (k+1) matrix and n labels")
    n, k1 = x.shape
    if n <= k1:
        raise UsageError(f"need more rows ({n}) than coefficients ({k1})")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise UsageError("labels must be 0/1")
    if not np.all(x[:, 0] == 1.0):
        raise UsageError("first design column must be the all-ones intercept")
    for j in range(1, k1):
        if np.all(x[:, j] == x[0, j]):
            raise FitError(f"feature column {j} is constant; information matrix singular")
    dep = _dependent_column(x)
    if dep >= 0:
        raise FitError(f"feature column {dep} is collinear; information matrix singular")

    beta = np.zeros(k1)
    converged = False
    iterations = 0
    for _ in range(MAX_IRLS_ITERATIONS):
        p = _sigmoid(x @ beta)
        w = np.clip(p * (1.0 - p), 1e-10, None)
        info = (x * w[:, None]).T @ x
        grad = x.T @ (y - p)
        try:
            delta = np.linalg.solve(info, grad)
        except np.linalg.LinAlgError as exc:
            raise FitError(f"information matrix singular at iteration {iterations}: {exc}") from exc
        beta = beta + delta
        iterations += 1
        if float(np.max(np.abs(delta))) < IRLS_TOLERANCE:
            converged = True
            break
        if float(np.max(np.abs(beta))) > _DIVERGENCE_BOUND:
            break

    p = _sigmoid(x @ beta)
    w = np.clip(p * (1.0 - p), 1e-10, None)
    info = (x * w[:, None]).T @ x
    try:
        covariance = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        covariance = np.linalg.pinv(info)
    return LogisticModel(
        coefficients=beta,
        covariance=covariance,
        iterations=iterations,
        converged=converged,
    )


def standard_errors(model: LogisticModel) -> np.ndarray:
    diag = np.diag(model.covariance)
    if np.any(diag < 0):
        raise InferenceError("negative variance on the covariance diagonal")
    return np.sqrt(diag)


def wald_p_values(model: LogisticModel) -> list[float]:
    """Two-sided Wald p-values, beta_j / se_j against the standard normal.

    Raises:
        InferenceError: for a non-converged model or a zero standard error.
    """
    if not model.converged:
        raise InferenceError("inference requires a converged fit")
    ses = standard_errors(model)
    out: list[float] = []
    for b, se in zip(model.coefficients, ses):
        if se == 0.0:
            raise InferenceError("zero standard error: Wald statistic undefined")
        z = b / se
        out.append(math.erfc(abs(z) / math.sqrt(2.0)))
    return out


def auc_roc(scores: list[float] | np.ndarray, labels: list[int] | np.ndarray) -> float:
    """Mann-Whitney AUC: (concordant + 0.5 * tied) / (positives * negatives).

    Computed via midranks, which is exactly the all-pairs count.

    Raises:
        UsageError: on length mismatch or labels outside {0, 1}.
        DataError: when only one class is present.
    """
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise UsageError("need equal-length 1-d scores and labels")
    if not np.all((y == 0) | (y == 1)):
        raise UsageError("labels must be 0/1")
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUC needs at least one positive and one negative label")

    order = np.argsort(s, kind="stable")
    ranks = np.empty(s.size, dtype=float)
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and s[order[j + 1]] == s[order[i]]:
            j += 1
        # Midrank for the tie group [i, j]; 1-based ranks.
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    rank_sum_pos = float(np.sum(ranks[np.asarray(y) == 1]))
    u = rank_sum_pos - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)

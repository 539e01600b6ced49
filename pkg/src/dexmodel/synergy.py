"""Postural synergies of an action log: PCA spectrum and action correlations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class SynergyReport:
    explained_variance: np.ndarray
    cumulative_variance: np.ndarray
    cumulative_ratio: np.ndarray
    components: np.ndarray
    correlation: np.ndarray
    degenerate: bool
    zero_variance_dims: list

    def to_dict(self):
        return {
            "explained_variance": self.explained_variance.tolist(),
            "cumulative_variance": self.cumulative_variance.tolist(),
            "cumulative_ratio": self.cumulative_ratio.tolist(),
            "correlation": self.correlation.tolist(),
            "degenerate": self.degenerate,
            "zero_variance_dims": self.zero_variance_dims,
        }


def analyze_synergies(actions):
    """PCA via the covariance eigendecomposition of ``actions`` ``(N, K)``.

    A log with zero total variance is flagged ``degenerate`` and reports all
    of its (empty) variance at the first component. Constant action
    dimensions get zero correlation with everything but themselves.
    """
    a = np.asarray(actions, dtype=float)
    if a.ndim != 2:
        raise ValueError("action log must be (N, K)")
    n, k = a.shape
    if n < k:
        raise ValueError(f"need at least K={k} samples, got {n}")
    centered = a - a.mean(axis=0)
    cov = centered.T @ centered / max(n - 1, 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    total = evals.sum()
    cum = np.cumsum(evals)
    degenerate = bool(total <= 1e-12 * max(1.0, float(np.abs(a).max(initial=0.0)) ** 2))
    ratio = np.ones(k) if degenerate else cum / total
    std = np.sqrt(np.diag(cov))
    live = std > 1e-12
    corr = np.eye(k)
    if live.any():
        sub = cov[np.ix_(live, live)] / np.outer(std[live], std[live])
        corr[np.ix_(live, live)] = np.clip(sub, -1.0, 1.0)
    return SynergyReport(evals, cum, ratio, evecs.T, corr, degenerate,
                         [int(i) for i in np.flatnonzero(~live)])

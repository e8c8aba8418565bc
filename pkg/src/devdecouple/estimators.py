"""scikit-learn style wrappers around partitions, ratios and exponent fits.

These give the library a familiar ``fit`` / ``transform`` / ``predict``
surface with ``get_params`` / ``set_params`` inherited from
:class:`sklearn.base.BaseEstimator`.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_delta, check_points, check_positive_pairs
from .norms import decoupling_ratio, exponent_fit
from .partition import Partition, full_partition


class CapLocator(TransformerMixin, BaseEstimator):
    """Builds ``full_partition(delta, surface)`` and maps points to cap indices.

    Parameters
    ----------
    delta : float
        Thickness of the neighbourhood, in ``(0, 1)``.
    surface : str or Curve
        ``"moment"`` or a generating curve for a tangent surface.

    Attributes
    ----------
    partition_ : Partition
    n_caps_ : int
    """

    def __init__(self, delta=2.0**-9, surface="moment"):
        self.delta = delta
        self.surface = surface

    def fit(self, X=None, y=None):
        self.partition_ = full_partition(check_delta(self.delta), self.surface)
        self.n_caps_ = len(self.partition_)
        return self

    def transform(self, X):
        """Cap index per row of ``X`` (``-1`` outside every cap), shape ``(n, 1)``."""
        check_is_fitted(self, "partition_")
        return self.partition_.locate(check_points(X, "X"))[:, None]

    def predict(self, X):
        return self.transform(X)[:, 0]


class DecouplingEstimator(BaseEstimator):
    """Decoupling ratio of a test function against a partition.

    ``fit(f, partition)`` stores ``ratio_`` and ``estimate_``.
    """

    def __init__(self, p=6, method="grid", threads=1):
        self.p = p
        self.method = method
        self.threads = threads

    def fit(self, f, partition: Partition):
        if not 1 <= float(self.p):
            raise ValueError("p must be at least 1")
        self.estimate_ = decoupling_ratio(f, partition, self.p, self.method, threads=self.threads)
        self.ratio_ = self.estimate_.ratio
        return self

    def score(self, f, partition):
        return self.fit(f, partition).ratio_


class PowerLawRegressor(RegressorMixin, BaseEstimator):
    """``value ~ exp(intercept) * scale ** slope`` fitted on log-log axes."""

    def fit(self, X, y):
        X = np.asarray(X, dtype=float).reshape(-1)
        pts = check_positive_pairs(np.column_stack([X, np.asarray(y, dtype=float).reshape(-1)]))
        self.fit_ = exponent_fit(pts)
        self.slope_ = self.fit_.slope
        self.intercept_ = self.fit_.intercept
        self.rss_ = self.fit_.rss
        return self

    def predict(self, X):
        check_is_fitted(self, "fit_")
        return self.fit_.predict(np.asarray(X, dtype=float).reshape(-1))

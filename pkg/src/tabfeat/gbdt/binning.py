"""Map raw feature values to small integer bins.

Numerical features get at most ``max_bins`` bins whose upper edges come from
the training rows: midpoints between distinct values when there are few of
them, quantiles otherwise.  A value ``x`` falls in bin ``t`` iff
``edges[t-1] < x <= edges[t]``.  Categorical features keep their most
frequent categories as bins.  Missing values (and unseen categories) share
one extra bin whose index is ``max_bins``.
"""
import numpy as np


class BinMapper:
    def __init__(self, max_bins=255):
        if not 2 <= max_bins <= 65535:
            raise ValueError("max_bins must be in [2, 65535]")
        self.max_bins = int(max_bins)

    @property
    def missing_bin(self):
        return self.max_bins

    def fit(self, X, categorical=None):
        X = np.asarray(X, dtype=np.float64)
        n_features = X.shape[1]
        cat = np.zeros(n_features, bool) if categorical is None else np.asarray(categorical, bool)
        self.is_categorical = cat
        self.edges = []
        self.cat_maps = []
        self.n_bins = np.zeros(n_features, dtype=np.int64)
        for f in range(n_features):
            col = X[:, f]
            vals = col[~np.isnan(col)]
            if cat[f]:
                codes = vals.astype(np.int64)
                codes = codes[codes >= 0]
                counts = np.bincount(codes) if codes.size else np.zeros(0, np.int64)
                present = np.flatnonzero(counts)
                if present.size > self.max_bins:
                    # keep the most frequent categories, ties by id
                    order = np.lexsort((present, -counts[present]))
                    present = np.sort(present[order[:self.max_bins]])
                mapping = np.full(counts.size, self.missing_bin, dtype=np.int64)
                mapping[present] = np.arange(present.size)
                self.cat_maps.append(mapping)
                self.edges.append(present.astype(np.float64))
                self.n_bins[f] = present.size
            else:
                self.cat_maps.append(None)
                e = self._numeric_edges(vals)
                self.edges.append(e)
                self.n_bins[f] = e.size + 1 if vals.size else 0
        return self

    def _numeric_edges(self, vals):
        if vals.size == 0:
            return np.zeros(0)
        uniq = np.unique(vals)
        if uniq.size <= self.max_bins:
            return (uniq[:-1] + uniq[1:]) / 2.0
        qs = np.quantile(vals, np.linspace(0, 1, self.max_bins + 1)[1:-1], method="lower")
        edges = np.unique(qs)
        return edges[edges < uniq[-1]]

    def transform(self, X):
        """Binned matrix of shape (n_features, n_rows), dtype uint16."""
        X = np.asarray(X, dtype=np.float64)
        out = np.empty((X.shape[1], X.shape[0]), dtype=np.uint16)
        for f in range(X.shape[1]):
            col = X[:, f]
            nan = np.isnan(col)
            if self.is_categorical[f]:
                mapping = self.cat_maps[f]
                codes = np.where(nan, -1, col).astype(np.int64)
                ok = (codes >= 0) & (codes < mapping.size)
                b = np.full(col.shape, self.missing_bin, dtype=np.int64)
                b[ok] = mapping[codes[ok]]
            else:
                b = np.searchsorted(self.edges[f], col, side="left")
                if self.n_bins[f] == 0:
                    b = np.full(col.shape, self.missing_bin)
                b = np.where(nan, self.missing_bin, b)
            out[f] = b
        return out

    def threshold_value(self, feature, bin_index):
        """Raw upper edge of a numerical bin."""
        edges = self.edges[feature]
        return float(edges[bin_index]) if bin_index < len(edges) else float("inf")

    def categories_of(self, feature, mask):
        """Category codes whose bins are selected by ``mask``."""
        return self.edges[feature][np.flatnonzero(mask[: self.n_bins[feature]])].astype(np.int64)

"""First-order next-item model over session sequences.

Counts consecutive item pairs, smooths additively, and ranks candidates
by probability with a total deterministic tie-break (popularity desc, then
sku asc). Contexts outside the vocabulary, or with no outgoing counts when
alpha is zero, fall back to the popularity ranking. The context itself is
excluded at ranking time, never at counting time, so the stored counts
stay exact.
"""

from __future__ import annotations

from collections import Counter
from typing import Iterable, Sequence

from sklearn.base import BaseEstimator

from ..errors import EmptyDataset, EmptyModel


def _items_of(session) -> Sequence[str]:
    return session["items"] if isinstance(session, dict) else session


class MarkovNextItem(BaseEstimator):
    """Next-item recommender: P(j|i) = (c(i,j) + alpha) / (c(i,*) + alpha*|V|)."""

    def __init__(self, alpha: float = 0.0):
        self.alpha = alpha

    # -- training --------------------------------------------------------

    def fit(self, X: Iterable, y=None) -> "MarkovNextItem":
        """Count consecutive pairs over sessions (dicts with "items" or bare lists)."""
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        counts: dict[str, Counter] = {}
        popularity: Counter = Counter()
        pairs = 0
        for session in X:
            items = list(_items_of(session))
            popularity.update(items)
            for i, j in zip(items, items[1:]):
                counts.setdefault(i, Counter())[j] += 1
                pairs += 1
        if pairs == 0:
            raise EmptyDataset("no session of length >= 2 to learn transitions from")
        self.vocab_ = tuple(sorted(popularity))
        self.counts_ = {i: dict(c) for i, c in counts.items()}
        self.row_totals_ = {i: sum(c.values()) for i, c in counts.items()}
        self.popularity_ = dict(popularity)
        self.n_pairs_ = pairs
        return self

    def _require_fitted(self) -> None:
        if not hasattr(self, "vocab_"):
            raise EmptyModel("model is not fitted")

    # -- probabilities ---------------------------------------------------

    def row_defined(self, context: str) -> bool:
        self._require_fitted()
        if context not in self.vocab_:
            return False
        return self.row_totals_.get(context, 0) > 0 or self.alpha > 0

    def predict_proba(self, context: str) -> dict[str, float] | None:
        """Full smoothed row for a context, or None when the row is undefined."""
        if not self.row_defined(context):
            return None
        row = self.counts_.get(context, {})
        total = self.row_totals_.get(context, 0)
        denom = total + self.alpha * len(self.vocab_)
        return {j: (row.get(j, 0) + self.alpha) / denom for j in self.vocab_}

    # -- ranking ---------------------------------------------------------

    def recommend(self, context: str, k: int) -> list[str]:
        self._require_fitted()
        if k < 1:
            raise ValueError("k must be >= 1")
        candidates = [s for s in self.vocab_ if s != context]
        probs = self.predict_proba(context)
        if probs is None:
            ranked = sorted(candidates, key=self._popularity_key)
        else:
            ranked = sorted(
                candidates, key=lambda s: (-probs[s], -self.popularity_.get(s, 0), s)
            )
        return ranked[:k]

    def _popularity_key(self, sku: str):
        return (-self.popularity_.get(sku, 0), sku)

    def popularity_ranking(self, context: str | None = None) -> list[str]:
        """Baseline ranking by occurrence count (context excluded if given)."""
        self._require_fitted()
        return sorted((s for s in self.vocab_ if s != context), key=self._popularity_key)

    def predict(self, X: Iterable[str]) -> list[str | None]:
        """Top-1 recommendation per context."""
        out = []
        for context in X:
            top = self.recommend(context, 1)
            out.append(top[0] if top else None)
        return out

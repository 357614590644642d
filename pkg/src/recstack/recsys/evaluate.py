"""Offline next-item evaluation and exhaustive hyperparameter search.

For every consecutive pair (i, j) in every test sequence the model is
queried with context i; recall@k is the fraction of cases where j lands in
the top k and mrr@k averages 1/rank (0 beyond k). The popularity ranking
of the same trained model is reported alongside as the baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import EmptyTest
from .markov import MarkovNextItem

DEFAULT_KS = (1, 5, 10, 20)


@dataclass
class EvalReport:
    recall_at: dict[int, float]
    mrr_at: dict[int, float]
    baseline_recall_at: dict[int, float]
    baseline_mrr_at: dict[int, float]
    n_test_cases: int
    ks: tuple = DEFAULT_KS
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "recall_at": {str(k): v for k, v in self.recall_at.items()},
            "mrr_at": {str(k): v for k, v in self.mrr_at.items()},
            "baseline_recall_at": {str(k): v for k, v in self.baseline_recall_at.items()},
            "baseline_mrr_at": {str(k): v for k, v in self.baseline_mrr_at.items()},
            "n_test_cases": self.n_test_cases,
            "ks": list(self.ks),
            "extra": self.extra,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(
            recall_at={int(k): v for k, v in d["recall_at"].items()},
            mrr_at={int(k): v for k, v in d["mrr_at"].items()},
            baseline_recall_at={int(k): v for k, v in d["baseline_recall_at"].items()},
            baseline_mrr_at={int(k): v for k, v in d["baseline_mrr_at"].items()},
            n_test_cases=d["n_test_cases"],
            ks=tuple(d.get("ks", DEFAULT_KS)),
            extra=d.get("extra", {}),
        )


def _rank_of(target: str, ranking: list[str]) -> int | None:
    try:
        return ranking.index(target) + 1
    except ValueError:
        return None


def _score(ranks: list[int | None], ks) -> tuple[dict, dict]:
    n = len(ranks)
    recall = {k: sum(1 for r in ranks if r is not None and r <= k) / n for k in ks}
    mrr = {k: sum(1 / r for r in ranks if r is not None and r <= k) / n for k in ks}
    return recall, mrr


def evaluate(model: MarkovNextItem, test_sessions: list, ks=DEFAULT_KS) -> EvalReport:
    max_k = max(ks)
    model_ranks: list[int | None] = []
    baseline_ranks: list[int | None] = []
    for session in test_sessions:
        items = session["items"] if isinstance(session, dict) else session
        for i, j in zip(items, items[1:]):
            model_ranks.append(_rank_of(j, model.recommend(i, max_k)))
            baseline_ranks.append(_rank_of(j, model.popularity_ranking(i)[:max_k]))
    if not model_ranks:
        raise EmptyTest("no consecutive pairs in test sessions")
    recall, mrr = _score(model_ranks, ks)
    base_recall, base_mrr = _score(baseline_ranks, ks)
    return EvalReport(
        recall_at=recall,
        mrr_at=mrr,
        baseline_recall_at=base_recall,
        baseline_mrr_at=base_mrr,
        n_test_cases=len(model_ranks),
    )


def hyper_search(
    train_sessions: list, validation_sessions: list, alpha_grid: list[float], ks=DEFAULT_KS
) -> dict:
    """Exhaustive grid: best alpha maximizes recall@10, ties to the smaller alpha."""
    if not alpha_grid:
        raise ValueError("alpha grid is empty")
    results = []
    for alpha in alpha_grid:
        model = MarkovNextItem(alpha=alpha).fit(train_sessions)
        report = evaluate(model, validation_sessions, ks=ks)
        results.append({"alpha": alpha, "report": report})
    select_k = 10 if 10 in ks else max(ks)
    best = min(results, key=lambda r: (-r["report"].recall_at[select_k], r["alpha"]))
    return {
        "best_alpha": best["alpha"],
        "select_k": select_k,
        "results": [
            {"alpha": r["alpha"], "recall_at": r["report"].recall_at, "mrr_at": r["report"].mrr_at}
            for r in results
        ],
    }

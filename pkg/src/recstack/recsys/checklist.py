"""Behavioral checks a model must pass before packaging or activation.

Four fixed checks: never recommend the context itself, identical calls
agree, every in-vocab context gets recommendations, and unseen contexts
fall back to the popularity order. Single-item vocabularies pass the
coverage check vacuously, flagged with a warning.
"""

from __future__ import annotations

from ..errors import EmptyModel
from .markov import MarkovNextItem


def _unseen_context(model: MarkovNextItem) -> str:
    candidate = "__unseen__"
    while candidate in model.vocab_:
        candidate += "_"
    return candidate


def behavioral_checklist(model: MarkovNextItem) -> list[dict]:
    if not hasattr(model, "vocab_") or not model.vocab_:
        raise EmptyModel("checklist needs a fitted model")
    vocab = model.vocab_
    checks: list[dict] = []

    failures = [c for c in vocab if c in model.recommend(c, max(1, len(vocab)))]
    checks.append(
        {
            "name": "no_self_recommendation",
            "status": "pass" if not failures else "fail",
            "detail": f"violating contexts: {failures[:5]}" if failures else "",
        }
    )

    stable = all(model.recommend(c, 10) == model.recommend(c, 10) for c in vocab)
    checks.append(
        {
            "name": "determinism",
            "status": "pass" if stable else "fail",
            "detail": "" if stable else "two identical calls disagreed",
        }
    )

    need = min(1, len(vocab) - 1)
    short = [c for c in vocab if len(model.recommend(c, max(1, len(vocab)))) < need]
    coverage = {
        "name": "coverage",
        "status": "pass" if not short else "fail",
        "detail": f"contexts with no recommendations: {short[:5]}" if short else "",
    }
    if need == 0:
        coverage["warning"] = "single-item vocabulary: coverage is vacuous"
    checks.append(coverage)

    unseen = _unseen_context(model)
    expected = model.popularity_ranking()[: max(1, len(vocab))]
    got = model.recommend(unseen, max(1, len(vocab)))
    checks.append(
        {
            "name": "fallback_sanity",
            "status": "pass" if got == expected else "fail",
            "detail": "" if got == expected else f"expected {expected[:5]}, got {got[:5]}",
        }
    )
    return checks


def all_pass(checks: list[dict]) -> bool:
    return all(c["status"] == "pass" for c in checks)

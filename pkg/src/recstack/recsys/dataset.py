"""Temporal train/test split over session sequences.

Sequences that finish before the split timestamp train the model; those
that start at or after it become test cases. Straddlers go to train (no
future leakage, no discarded data) and sequences shorter than two items
cannot be test cases.
"""

from __future__ import annotations

from ..errors import EmptyTest, EmptyTrain


def build_dataset(sessions: list[dict], split_ts: int) -> tuple[list[dict], list[dict]]:
    train, test = [], []
    for s in sessions:
        if s["end_ts"] < split_ts:
            train.append(s)
        elif s["start_ts"] >= split_ts:
            if len(s["items"]) >= 2:
                test.append(s)
        else:
            train.append(s)  # straddles the split
    if not train:
        raise EmptyTrain(f"no session ends before split_ts={split_ts}")
    if not test:
        raise EmptyTest(f"no usable session starts at or after split_ts={split_ts}")
    return train, test


def split_ts_at_fraction(sessions: list[dict], fraction: float = 0.8) -> int:
    """A split timestamp putting roughly `fraction` of sessions in train."""
    if not sessions:
        raise EmptyTrain("no sessions to split")
    if not 0 < fraction < 1:
        raise ValueError("fraction must be in (0, 1)")
    ends = sorted(s["end_ts"] for s in sessions)
    idx = min(int(len(ends) * fraction), len(ends) - 1)
    return ends[idx] + 1

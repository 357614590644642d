"""Deterministic synthetic shoppers.

Sessions are sampled from an explicit next-item transition matrix, so the
generator doubles as the end-to-end statistical oracle: train on what it
emits and you should get the matrix back. Randomness comes from a
hand-rolled SplitMix64 stream (documented constants below) rather than the
stdlib so that any implementation of this generator, in any language,
reproduces identical event streams from identical seeds.

generate() is a pure function of (model, n_sessions, clock_start).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import httpx

from .errors import InvalidModel
from .transform.ops import DEFAULT_GAP_MS

_MASK64 = (1 << 64) - 1

DEFAULT_EVENT_MIX = {"detail": 0.7, "add": 0.2, "purchase": 0.1}
SESSION_START_SPACING_MS = 1500
MIN_STEP_GAP_MS = 1000
MAX_STEP_GAP_MS = 10 * 60 * 1000  # < sessionize gap, sessions stay whole


class SplitMix64:
    """SplitMix64 (Steele et al.): state += 0x9E3779B97F4A7C15, then mix."""

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return (z ^ (z >> 31)) & _MASK64

    def random(self) -> float:
        """Uniform in [0, 1) with 53 bits, from the top of the stream."""
        return (self.next_u64() >> 11) * (2.0**-53)

    def pick(self, items: list[str], weights: list[float]) -> str:
        """Cumulative-sum sampling; deterministic given the stream."""
        r = self.random() * sum(weights)
        acc = 0.0
        for item, w in zip(items, weights):
            acc += w
            if r < acc:
                return item
        return items[-1]


@dataclass
class ShopperModel:
    catalog: list[str]
    transition: dict[str, dict[str, float]]
    start_dist: dict[str, float]
    continue_p: float = 0.75
    event_mix: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_EVENT_MIX))
    seed: int = 7

    def validate(self) -> None:
        if not 0 < self.continue_p < 1:
            raise InvalidModel(f"continue_p must be in (0, 1), got {self.continue_p}")
        for sku in self.catalog:
            row = self.transition.get(sku)
            if row is None:
                raise InvalidModel(f"no transition row for {sku!r}")
            total = sum(row.values())
            if abs(total - 1.0) > 1e-9:
                raise InvalidModel(f"transition row for {sku!r} sums to {total}, not 1")
        if abs(sum(self.start_dist.values()) - 1.0) > 1e-9:
            raise InvalidModel("start distribution does not sum to 1")


def _sku(i: int) -> str:
    return f"SKU-{i:03d}"


def preset(name: str, catalog_size: int = 50, seed: int = 7) -> ShopperModel:
    catalog = [_sku(i) for i in range(catalog_size)]
    n = catalog_size
    if name == "skewed":
        # each item strongly prefers its cyclic successors, geometric decay
        decay = 0.65
        transition = {}
        for i in range(n):
            weights = [decay**d for d in range(n - 1)]
            total = sum(weights)
            transition[catalog[i]] = {
                catalog[(i + 1 + d) % n]: w / total for d, w in enumerate(weights)
            }
        start_weights = [0.97**i for i in range(n)]
    elif name == "uniform":
        transition = {s: {t: 1.0 / n for t in catalog} for s in catalog}
        start_weights = [1.0] * n
    elif name == "block-diagonal":
        block = max(2, n // 5)
        transition = {}
        for i, s in enumerate(catalog):
            mine = [t for j, t in enumerate(catalog) if j // block == i // block and t != s]
            others = [t for j, t in enumerate(catalog) if j // block != i // block]
            row = {}
            for t in mine:
                row[t] = 0.9 / len(mine)
            for t in others:
                row[t] = 0.1 / len(others) if others else 0.0
            if not mine:  # degenerate single-item block
                row = {t: 1.0 / len(others) for t in others}
            transition[s] = row
        start_weights = [1.0] * n
    else:
        raise InvalidModel(f"unknown preset {name!r}")
    total = sum(start_weights)
    start_dist = {s: w / total for s, w in zip(catalog, start_weights)}
    model = ShopperModel(
        catalog=catalog, transition=transition, start_dist=start_dist, seed=seed
    )
    model.validate()
    return model


def generate(
    model: ShopperModel,
    n_sessions: int,
    clock_start: int,
    max_step_gap_ms: int = MAX_STEP_GAP_MS,
) -> list[dict]:
    """Sample complete sessions as an ordered list of client event documents.

    ``max_step_gap_ms`` bounds the think time between steps; lower it when
    generating small corpora so sessions stay short relative to the spread
    of session starts (temporal splits need late starters).
    """
    model.validate()
    if not MIN_STEP_GAP_MS <= max_step_gap_ms < DEFAULT_GAP_MS:
        raise InvalidModel(
            f"max_step_gap_ms must be in [{MIN_STEP_GAP_MS}, {DEFAULT_GAP_MS}), got {max_step_gap_ms}"
        )
    rng = SplitMix64(model.seed)
    mix_names = list(model.event_mix)
    mix_weights = [model.event_mix[k] for k in mix_names]
    start_items = list(model.start_dist)
    start_weights = [model.start_dist[s] for s in start_items]

    events: list[dict] = []
    for s in range(n_sessions):
        session_id = f"sess-{model.seed}-{s:06d}"
        ts = clock_start + s * SESSION_START_SPACING_MS
        current = rng.pick(start_items, start_weights)
        while True:
            events.append(
                {
                    "session_id": session_id,
                    "event_type": rng.pick(mix_names, mix_weights),
                    "sku": current,
                    "ts": ts,
                }
            )
            if rng.random() >= model.continue_p:
                break
            row = model.transition[current]
            row_items = list(row)
            current = rng.pick(row_items, [row[t] for t in row_items])
            ts += MIN_STEP_GAP_MS + int(rng.random() * (max_step_gap_ms - MIN_STEP_GAP_MS))
    return events


def pump(
    events: list[dict],
    endpoint: str = "",
    rate: float | None = None,
    batch_size: int = 500,
    client=None,
) -> dict:
    """Post events to the ingest batch endpoint, in order.

    Returns {sent, acked, failed, elapsed_s}. A transport failure marks the
    whole remaining stream failed: batches are sequential, so per-session
    order is preserved and nothing is retried out of order.
    """
    own_client = client is None
    if own_client:
        client = httpx.Client(timeout=30.0)
    url = endpoint.rstrip("/") + "/collect/batch"
    acked = 0
    failed: list[dict] = []
    started = time.monotonic()
    try:
        for offset in range(0, len(events), batch_size):
            batch = events[offset : offset + batch_size]
            if rate:
                # stay at or under the target rate: wait until this batch is due
                due = started + offset / rate
                delay = due - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
            body = "\n".join(json.dumps(e) for e in batch)
            try:
                res = client.post(url, content=body.encode())
            except httpx.HTTPError as exc:
                failed.extend(
                    {"index": offset + i, "error": str(exc)} for i in range(len(events) - offset)
                )
                break
            if res.status_code != 200:
                # abort instead of skipping ahead: later batches may carry the
                # same sessions and must not land before earlier events
                failed.extend(
                    {"index": offset + i, "error": f"http {res.status_code}"}
                    for i in range(len(events) - offset)
                )
                break
            for i, item in enumerate(res.json()["results"]):
                if item.get("ok"):
                    acked += 1
                else:
                    failed.append({"index": offset + i, "error": item.get("error", "rejected")})
    finally:
        if own_client:
            client.close()
    return {
        "sent": len(events),
        "acked": acked,
        "failed": failed,
        "elapsed_s": time.monotonic() - started,
    }

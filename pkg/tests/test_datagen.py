"""Synthetic shopper generator: determinism, statistics, pumping."""

import json
from collections import Counter

import httpx
import pytest
from fastapi.testclient import TestClient

from recstack.datagen import ShopperModel, SplitMix64, generate, preset, pump
from recstack.errors import InvalidModel
from recstack.ingest import Collector, create_ingest_app

T0 = 1_700_000_000_000
GAP_MS = 30 * 60 * 1000


def test_splitmix64_known_stream():
    # golden values for seed 0, straight from the published algorithm
    rng = SplitMix64(0)
    assert rng.next_u64() == 0xE220A8397B1DCDAF
    assert rng.next_u64() == 0x6E789E6AA1B965F4
    assert rng.next_u64() == 0x06C45D188009454F


def test_generate_zero_sessions():
    assert generate(preset("uniform", 5), 0, T0) == []


def test_generate_is_deterministic():
    model = preset("skewed", 20, seed=42)
    a = generate(model, 300, T0)
    b = generate(preset("skewed", 20, seed=42), 300, T0)
    assert json.dumps(a) == json.dumps(b)
    c = generate(preset("skewed", 20, seed=43), 300, T0)
    assert json.dumps(a) != json.dumps(c)


def test_generate_timestamps_strictly_increase_within_session():
    events = generate(preset("uniform", 8, seed=3), 200, T0)
    by_session = {}
    for e in events:
        by_session.setdefault(e["session_id"], []).append(e["ts"])
    assert len(by_session) == 200
    for ts_list in by_session.values():
        assert all(b > a for a, b in zip(ts_list, ts_list[1:]))
        assert all(b - a < GAP_MS for a, b in zip(ts_list, ts_list[1:]))


def test_generate_event_types_are_item_events():
    events = generate(preset("uniform", 8, seed=3), 100, T0)
    assert {e["event_type"] for e in events} <= {"detail", "add", "purchase"}
    assert all(e["sku"].startswith("SKU-") for e in events)


def test_generate_session_lengths_geometric_mean():
    events = generate(preset("uniform", 10, seed=5), 4000, T0)
    lengths = Counter(e["session_id"] for e in events)
    mean = sum(lengths.values()) / len(lengths)
    assert mean == pytest.approx(4.0, rel=0.1)  # 1/(1-0.75)


def test_generated_pair_frequencies_recover_transition_matrix():
    model = preset("skewed", 10, seed=7)
    events = generate(model, 5000, T0)
    by_session = {}
    for e in events:
        by_session.setdefault(e["session_id"], []).append(e["sku"])

    pair_counts: dict[str, Counter] = {}
    for items in by_session.values():
        for a, b in zip(items, items[1:]):
            pair_counts.setdefault(a, Counter())[b] += 1

    checked = 0
    for context, row in model.transition.items():
        observed = pair_counts.get(context, Counter())
        n = sum(observed.values())
        if n < 500:
            continue
        checked += 1
        for target, p in row.items():
            assert abs(observed[target] / n - p) <= 0.05, (context, target)
    assert checked >= 5  # enough rows actually exercised the bound


def test_presets_validate():
    for name in ("skewed", "uniform", "block-diagonal"):
        preset(name, 15).validate()
    with pytest.raises(InvalidModel):
        preset("chaotic", 15)


def test_invalid_transition_matrix_rejected():
    model = ShopperModel(
        catalog=["A", "B"],
        transition={"A": {"B": 0.7}, "B": {"A": 1.0}},  # row A sums to 0.7
        start_dist={"A": 0.5, "B": 0.5},
    )
    with pytest.raises(InvalidModel):
        generate(model, 10, T0)


def test_invalid_continue_p():
    with pytest.raises(InvalidModel):
        ShopperModel(
            catalog=["A"], transition={"A": {"A": 1.0}}, start_dist={"A": 1.0}, continue_p=1.0
        ).validate()


# ---------------------------------------------------------------- pump


@pytest.fixture
def ingest(store):
    collector = Collector(store)
    app = create_ingest_app(collector)
    return TestClient(app), store


def test_pump_delivers_every_event(ingest):
    client, store = ingest
    events = generate(preset("uniform", 6, seed=1), 30, T0)
    report = pump(events, client=client, batch_size=16)
    assert report["sent"] == len(events)
    assert report["acked"] == len(events)
    assert report["failed"] == []
    replayed = [json.loads(r.payload) for r in store.replay()]
    assert replayed == events  # byte order preserved end to end


class _DownTransport(httpx.BaseTransport):
    def handle_request(self, request):
        raise httpx.ConnectError("connection refused", request=request)


def test_pump_ingest_down_reports_everything_failed(store):
    client = httpx.Client(transport=_DownTransport(), base_url="http://ingest.invalid")
    events = generate(preset("uniform", 6, seed=1), 20, T0)
    report = pump(events, endpoint="http://ingest.invalid", client=client, batch_size=8)
    assert report["acked"] == 0
    assert len(report["failed"]) == len(events)
    assert list(store.replay()) == []  # zero partial state


def test_pump_respects_rate_limit(ingest):
    client, _ = ingest
    events = generate(preset("uniform", 6, seed=2), 120, T0)
    report = pump(events, client=client, batch_size=20, rate=400)
    effective = report["sent"] / report["elapsed_s"]
    assert effective <= 400 * 1.1
    assert report["elapsed_s"] < 3.0  # sanity: limiter sleeps, doesn't stall

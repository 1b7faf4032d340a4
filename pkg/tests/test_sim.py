"""End-to-end simulation tests: timing model, loss, the table2 golden run,
fault paths, and conservation invariants."""

import copy
import pathlib
import random

import pytest

from smartcart import gate
from smartcart.sim import (Channel, LinkConfig, ScenarioError, Scheduler,
                           SplitMix64, load_scenario, run_scenario)
from smartcart.wire import canonical_json, json_parse

from . import gen

ROOT = pathlib.Path(__file__).resolve().parent.parent
GOLDEN = pathlib.Path(__file__).resolve().parent / "golden"
TABLE2 = ROOT / "scenarios" / "table2.json"
USER = "6C92D391"


def golden(name: str) -> str:
    return (GOLDEN / name).read_text().rstrip("\n")


def table2() -> dict:
    return load_scenario(str(TABLE2))


def small_scenario(**extra) -> dict:
    sc = {
        "seed": 5,
        "users": [{"_id": "AB12", "name": "PAT DOE", "cash": 100000}],
        "tags": [{"_id": "T0001", "name": "SOAP", "cost": 150},
                 {"_id": "T0002", "name": "RICE", "cost": 165}],
        "carts": [{"id": "c1", "events": [
            {"at": 1000, "card": "AB12"},
            {"at": 6500, "tag": "T0001"},
            {"at": 7500, "button": "pay"},
        ]}],
    }
    sc.update(extra)
    return sc


# -- PRNG ------------------------------------------------------------------------

def test_splitmix64_reference_vectors():
    # Frozen outputs of the published splitmix64 reference for three seeds.
    rng = SplitMix64(0)
    assert [rng.next_u64() for _ in range(3)] == [
        0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]
    rng = SplitMix64(1234567)
    assert [rng.next_u64() for _ in range(3)] == [
        0x599ED017FB08FC85, 0x2C73F08458540FA5, 0x883EBCE5A3F27C77]
    rng = SplitMix64(0x123456789ABCDEF0)
    assert [rng.next_u64() for _ in range(2)] == [
        0x161922C645CE50E8, 0xAD760CAFA1697B60]


def test_splitmix64_ranges():
    rng = SplitMix64(42)
    for _ in range(500):
        assert 0.0 <= rng.uniform() < 1.0
        assert 0 <= rng.randrange(7) < 7


# -- scheduler ---------------------------------------------------------------------

def test_scheduler_same_time_keeps_submission_order():
    sched = Scheduler()
    seen = []
    for k in range(8):
        sched.at(5, lambda k=k: seen.append(k))
    sched.at(3, lambda: seen.append("early"))
    assert sched.run(10) is True
    assert seen == ["early", 0, 1, 2, 3, 4, 5, 6, 7]


def test_scheduler_clamps_past_times_to_now():
    sched = Scheduler()
    order = []

    def late():
        sched.at(0, lambda: order.append("clamped"))
        order.append("late")

    sched.at(7, late)
    assert sched.run(10) is True
    assert sched.now == 7
    assert order == ["late", "clamped"]


def test_scheduler_stops_at_horizon():
    sched = Scheduler()
    ran = []
    sched.at(5, lambda: ran.append(5))
    sched.at(50, lambda: ran.append(50))
    assert sched.run(10) is False
    assert ran == [5]


# -- channels ----------------------------------------------------------------------

def test_channel_byte_rate_serializes_transfers():
    sched = Scheduler()
    chan = Channel(sched, "serial:c1:out", LinkConfig(rate=11520), run_seed=1)
    got = []
    chan.send(1152, lambda: got.append(sched.now))
    chan.send(576, lambda: got.append(sched.now))
    assert sched.run(10_000) is True
    assert got == [100, 150]


def test_channel_fifo_survives_jitter():
    sched = Scheduler()
    cfg = LinkConfig(latency_ms=20, jitter_ms=10)
    chan = Channel(sched, "net:c1:out", cfg, run_seed=9)
    seen = []
    for k in range(50):
        chan.send(8, lambda k=k: seen.append((k, sched.now)))
    assert sched.run(1000) is True
    assert [k for k, _ in seen] == list(range(50))
    arrivals = [t for _, t in seen]
    assert arrivals == sorted(arrivals)


def drop_pattern(run_seed: int, drop: float):
    sched = Scheduler()
    chan = Channel(sched, "net:c1:out", LinkConfig(drop=drop, seed=3), run_seed)
    seen = []
    for k in range(200):
        chan.send(8, lambda k=k: seen.append(k))
    sched.run(10 ** 6)
    return seen, chan.dropped


def test_channel_drop_is_seeded_and_sane():
    a, lost_a = drop_pattern(1, 0.5)
    b, lost_b = drop_pattern(1, 0.5)
    c, lost_c = drop_pattern(2, 0.5)
    assert a == b and lost_a == lost_b
    assert a != c
    assert 40 <= lost_a <= 160
    delivered, lost = drop_pattern(1, 0.0)
    assert lost == 0 and delivered == list(range(200))
    delivered, lost = drop_pattern(1, 1.0)
    assert lost == 200 and delivered == []


# -- the catalogue run -------------------------------------------------------------

def test_table2_checkout_timeline():
    report = run_scenario(table2())
    c1 = report["carts"]["c1"]
    assert c1["phases"] == [
        [0, "boot"], [0, "joining_wifi"], [8, "connecting_server"],
        [67, "await_card"], [2067, "showing_user"], [7067, "scanning"],
        [10500, "paying"], [10766, "await_card"]]
    assert c1["sessions"] == [8766]
    assert report["metrics"]["sessions"] == 1
    assert report["metrics"]["mean_checkout_ms"] == 8766
    assert report["deadline_exceeded"] is False
    assert report["faults"] == []


def test_table2_http_traffic():
    report = run_scenario(table2())
    http = report["carts"]["c1"]["http"]
    lines = [(line, status) for _, line, status in http]
    assert lines[0] == ("GET /users/%s" % USER, 200)
    assert [line.split()[0] for line, _ in lines] == [
        "GET", "GET", "GET", "GET", "PUT", "DELETE", "DELETE", "DELETE"]
    assert [line.split()[1] for line, _ in lines[1:4]] == [
        "/tags/E2003412", "/tags/E2003413", "/tags/E2003414"]
    assert lines[4] == ("PUT /users/%s" % USER, 201)
    delete_paths = [line.split()[1] for line, _ in lines[5:]]
    assert [p.split("?")[0] for p in delete_paths] == [
        "/tags/E2003412", "/tags/E2003413", "/tags/E2003414"]
    assert all("?rev=" in p for p in delete_paths)
    assert all(status == 200 for _, status in lines[5:])
    assert report["metrics"]["store_requests"] == 10  # 8 cart + 2 gate
    assert report["metrics"]["dropped_messages"] == 0


def test_table2_display_shows_catalogue_frames():
    report = run_scenario(table2())
    frames = [text for _, text in report["carts"]["c1"]["frames"]]
    stages = [golden(n) for n in ("stage7.txt", "stage8.txt", "stage9.txt")]
    positions = []
    for stage in stages:
        assert stage in frames
        positions.append(frames.index(stage))
    assert positions == sorted(positions)
    assert any("PAYING" in f for f in frames[positions[-1]:])
    assert "SWIPE CARD" in frames[-1]


def test_table2_store_settles_correctly():
    report = run_scenario(table2())
    user = report["store"]["users"][USER]["body"]
    assert user["cash"] == 9495
    assert [(r["at"], r["total"], len(r["items"])) for r in user["history"]] == [
        (10500, 505, 3)]
    assert [i["uid"] for i in user["history"][0]["items"]] == [
        "E2003412", "E2003413", "E2003414"]
    for uid in ("E2003412", "E2003413", "E2003414"):
        assert report["store"]["tags"][uid]["deleted"] is True
    c1 = report["carts"]["c1"]
    assert c1["retries"] == 0 and c1["conflicts"] == 0
    assert c1["skipped_deletes"] == 0
    assert c1["beeps"] == 5  # card, three tags, payment
    assert report["invariants"] == {"ok": True, "violations": []}


def test_table2_gate_passes_paid_tags():
    report = run_scenario(table2())
    records = report["gates"]["L1"]
    assert [(r["uid"], r["verdict"]) for r in records] == [
        ("E2003412", gate.PASS), ("E2003414", gate.PASS)]
    assert all("reason" not in r for r in records)
    assert report["metrics"]["passes"] == 2
    assert report["metrics"]["alarms"] == 0


def test_table2_reports_are_byte_identical():
    a = run_scenario(table2())
    b = run_scenario(table2())
    assert canonical_json(a) == canonical_json(b)


def test_table2_report_round_trips_as_json():
    report = run_scenario(table2())
    assert json_parse(canonical_json(report)) == report


def test_run_does_not_mutate_the_scenario():
    sc = table2()
    snap = copy.deepcopy(sc)
    run_scenario(sc)
    assert sc == snap


def test_seed_changes_timing_but_not_outcome():
    a = run_scenario(table2())
    b = run_scenario(table2(), seed=99)
    assert b["seed"] == 99
    assert a["store"] == b["store"]
    assert b["faults"] == [] and b["invariants"]["ok"]
    assert (b["metrics"]["passes"], b["metrics"]["alarms"]) == (2, 0)


def test_tiny_horizon_reports_missed_deadline():
    report = run_scenario(table2(), horizon=100)
    assert report["deadline_exceeded"] is True
    phases = [p for _, p in report["carts"]["c1"]["phases"]]
    assert phases == ["boot", "joining_wifi", "connecting_server", "await_card"]
    assert report["carts"]["c1"]["http"] == []


# -- degraded links ----------------------------------------------------------------

def test_dead_network_faults_after_retry_budget():
    report = run_scenario(small_scenario(links={"net": {"drop": 1.0}}))
    c1 = report["carts"]["c1"]
    assert report["faults"] == ["c1"]
    assert c1["fault"] == "server: link timeout"
    assert c1["retries"] == 3
    assert [p for _, p in c1["phases"]] == [
        "boot", "joining_wifi", "connecting_server", "fault"]
    assert c1["http"] == []
    assert report["store"]["users"]["AB12"]["body"]["cash"] == 100000
    assert not report["store"]["tags"]["T0001"]["deleted"]
    assert report["metrics"]["dropped_messages"] >= 4
    assert report["invariants"]["ok"]
    assert report["deadline_exceeded"] is False


def test_wrong_ssid_faults_wifi_join():
    sc = small_scenario()
    sc["carts"][0]["ssid"] = "othernet"
    report = run_scenario(sc)
    c1 = report["carts"]["c1"]
    assert report["faults"] == ["c1"]
    assert c1["fault"] == "wifi: wifi join refused"
    assert c1["retries"] == 3
    assert [p for _, p in c1["phases"]] == ["boot", "joining_wifi", "fault"]


# -- contention --------------------------------------------------------------------

def test_shared_card_conflict_is_retried_once():
    sc = {
        "seed": 11,
        "users": [{"_id": "AB12", "name": "PAT DOE", "cash": 100000}],
        "tags": [{"_id": "T0001", "name": "SOAP", "cost": 150},
                 {"_id": "T0002", "name": "RICE", "cost": 165}],
        "carts": [
            {"id": "c1", "events": [{"at": 1000, "card": "AB12"},
                                    {"at": 6600, "tag": "T0001"},
                                    {"at": 7600, "button": "pay"}]},
            {"id": "c2", "events": [{"at": 1001, "card": "AB12"},
                                    {"at": 6601, "tag": "T0002"},
                                    {"at": 7601, "button": "pay"}]},
        ],
    }
    report = run_scenario(sc)
    m = report["metrics"]
    assert m["conflicts_retried"] == 1
    assert m["store_conflicts"] == 1
    user = report["store"]["users"]["AB12"]["body"]
    assert user["cash"] == 100000 - 150 - 165
    assert sorted(r["total"] for r in user["history"]) == [150, 165]
    assert {r["at"] for r in user["history"]} == {7600, 7601}
    assert report["store"]["tags"]["T0001"]["deleted"]
    assert report["store"]["tags"]["T0002"]["deleted"]
    assert report["faults"] == []
    assert m["sessions"] == 2
    assert report["invariants"] == {"ok": True, "violations": []}


# -- gates -------------------------------------------------------------------------

def test_gate_verdicts_follow_the_store():
    sc = small_scenario(gates=[{"lane": "L1", "reads": [
        {"at": 20000, "uid": "T0001"},
        {"at": 20400, "uid": "T0002"},
        {"at": 20800, "uid": "ZZ999"},
    ]}])
    report = run_scenario(sc)
    records = report["gates"]["L1"]
    assert [(r["uid"], r["verdict"]) for r in records] == [
        ("T0001", gate.PASS), ("T0002", gate.ALARM), ("ZZ999", gate.PASS)]
    assert records[1]["reason"] == "tag still live"
    assert "reason" not in records[0]
    assert report["metrics"]["alarms"] == 1
    assert report["metrics"]["passes"] == 2


def test_isolated_gate_fails_closed():
    sc = small_scenario(
        gates=[{"lane": "L1", "reads": [{"at": 20000, "uid": "T0001"}]}],
        links={"net:L1": {"drop": 1.0}})
    report = run_scenario(sc)
    record = report["gates"]["L1"][0]
    assert record["verdict"] == gate.ALARM
    assert record["reason"] == "store unreachable, failing closed"
    assert report["faults"] == []  # the cart's own link is untouched
    assert report["store"]["tags"]["T0001"]["deleted"]


# -- conservation ------------------------------------------------------------------

@pytest.mark.parametrize("case", range(3))
def test_busy_market_conserves_money_and_stock(case):
    rng = random.Random(4200 + case)
    sc = gen.conservation_scenario(rng, n_carts=4, n_tags=32, rounds=2)
    report = run_scenario(sc)
    assert report["deadline_exceeded"] is False
    assert report["faults"] == []
    assert report["invariants"] == {"ok": True, "violations": []}
    assert report["metrics"]["sessions"] >= 4
    assert report["metrics"]["conflicts_retried"] == report["metrics"]["store_conflicts"]


# -- scenario validation -----------------------------------------------------------

BAD_SCENARIOS = [
    ("unknown button",
     {"carts": [{"id": "c1", "events": [{"at": 1, "button": "explode"}]}]}),
    ("two actions in one event",
     {"carts": [{"id": "c1", "events": [{"at": 1, "card": "A1", "tag": "T1"}]}]}),
    ("unknown action",
     {"carts": [{"id": "c1", "events": [{"at": 1, "poke": "A1"}]}]}),
    ("boolean at",
     {"carts": [{"id": "c1", "events": [{"at": True, "card": "A1"}]}]}),
    ("negative at",
     {"carts": [{"id": "c1", "events": [{"at": -5, "card": "A1"}]}]}),
    ("uid with spaces",
     {"carts": [{"id": "c1", "events": [{"at": 1, "tag": "E2 92"}]}]}),
    ("duplicate cart id",
     {"carts": [{"id": "c1", "events": []}, {"id": "c1", "events": []}]}),
    ("cart id with spaces", {"carts": [{"id": "c 1", "events": []}]}),
    ("events not a list", {"carts": [{"id": "c1", "events": {}}]}),
    ("cart ssid not a string", {"carts": [{"id": "c1", "ssid": 7, "events": []}]}),
    ("cart ssid unquotable",
     {"carts": [{"id": "c1", "ssid": 'net"work', "events": []}]}),
    ("drop above one",
     {"links": {"net": {"drop": 1.5}}, "carts": [{"id": "c1", "events": []}]}),
    ("negative latency",
     {"links": {"net": {"latency_ms": -1}}, "carts": [{"id": "c1", "events": []}]}),
    ("unknown link option",
     {"links": {"net": {"latency": 5}}, "carts": [{"id": "c1", "events": []}]}),
    ("links not an object", {"links": []}),
    ("gate uid not alphanumeric",
     {"gates": [{"lane": "L1", "reads": [{"at": 1, "uid": "E2 92"}]}]}),
    ("duplicate gate lane",
     {"gates": [{"lane": "L1", "reads": []}, {"lane": "L1", "reads": []}]}),
    ("gate reads not a list", {"gates": [{"lane": "L1", "reads": 3}]}),
    ("user without name", {"users": [{"_id": "X1", "cash": 5}]}),
    ("user with negative cash",
     {"users": [{"_id": "X1", "name": "A", "cash": -1}]}),
    ("user with boolean cash",
     {"users": [{"_id": "X1", "name": "A", "cash": True}]}),
    ("duplicate user id",
     {"users": [{"_id": "X1", "name": "A", "cash": 1},
                {"_id": "X1", "name": "B", "cash": 2}]}),
    ("user without id", {"users": [{"name": "A", "cash": 1}]}),
    ("tag without cost", {"tags": [{"_id": "T1", "name": "SOAP"}]}),
    ("duplicate tag id",
     {"tags": [{"_id": "T1", "name": "A", "cost": 1},
               {"_id": "T1", "name": "B", "cost": 2}]}),
    ("boolean seed", {"seed": True}),
    ("zero horizon", {"horizon_ms": 0}),
    ("wifi not an object", {"wifi": "market1"}),
    ("ssid not a string", {"wifi": {"ssid": 9}}),
    ("unquotable ssid", {"wifi": {"ssid": 'a"b'}}),
    ("server port out of range", {"server": {"port": 0}}),
    ("server host not an address", {"server": {"host": "store.example"}}),
]


@pytest.mark.parametrize("scenario", [case[1] for case in BAD_SCENARIOS],
                         ids=[case[0] for case in BAD_SCENARIOS])
def test_bad_scenarios_are_rejected(scenario):
    with pytest.raises(ScenarioError):
        run_scenario(scenario)


def test_load_scenario_resolves_seed_files():
    sc = table2()
    assert [u["_id"] for u in sc["users"]] == [USER]
    assert sc["users"][0]["name"] == "Yerlan Berdaliyev"
    assert {t["_id"] for t in sc["tags"]} == {
        "E2003412", "E2003413", "E2003414"}


def test_load_scenario_reports_missing_files():
    with pytest.raises(ScenarioError):
        load_scenario(str(ROOT / "scenarios" / "nonexistent.json"))

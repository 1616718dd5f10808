import json
import random
import time

import pytest

from intentflow.extract.model import ValueDescriptor
from intentflow.intentdb import (
    EXTRACTED, FIXPOINT_DERIVED, SCHEMA_VERSION, SENTINEL, IntentDb, IntentSummaryRow, Provenance,
    SchemaVersionMismatch, StoreIO, expand, fixpoint_resolve, key_match, load_db, match_senders, meta_path,
    save_db, signature_compat,
)
from intentflow.strings import StringValue

from oracles import FIXTURES, closure_oracle, random_graph, run_corpus

IMEI = ValueDescriptor.source_call("android.telephony.TelephonyManager.getDeviceId()")


def recv(pkg, cls, action, kind="activity"):
    return IntentSummaryRow(pkg, cls, kind, intent_filter=action, provenance=Provenance(EXTRACTED, "manifest"))


def send(pkg, cls, action=None, target=None, key="data", value=IMEI, put="putExtra(String,String)",
         channel="activity", flt=None, site="s"):
    return IntentSummaryRow(pkg, cls, "activity", flt, target, action, key, value, put, channel,
                            Provenance(EXTRACTED, site))


def fwd(get_key):
    return ValueDescriptor.get_extra_ref("getStringExtra(String)", StringValue.of([get_key]))


# -- rows ---------------------------------------------------------------------

def test_row_rejects_target_and_action():
    with pytest.raises(ValueError):
        send("p", "p.A", action="x", target="p.B")


def test_derived_row_cannot_hold_get_value():
    with pytest.raises(ValueError):
        IntentSummaryRow("p", "p.A", "activity", None, None, "x", "k", fwd("k"), "putExtra(String,String)",
                         "activity", Provenance(FIXPOINT_DERIVED, "s", ("a", "b")))


def test_row_json_round_trip():
    r = send("p", "p.A", action="x", value=fwd("data"))
    again = IntentSummaryRow.from_json(json.loads(json.dumps(r.to_json())))
    assert again == r and again.row_id == r.row_id


def test_row_id_ignores_contributing_ids():
    a = send("p", "p.A", action="x", site="s")
    d1 = IntentSummaryRow(**{**a.__dict__, "provenance": Provenance(FIXPOINT_DERIVED, "s", ("1", "2"))})
    d2 = IntentSummaryRow(**{**a.__dict__, "provenance": Provenance(FIXPOINT_DERIVED, "s", ("3", "4"))})
    assert d1 == d2 and d1.row_id == d2.row_id != a.row_id


def test_sentinel_row_is_low_confidence():
    assert send("p", "p.A", action=SENTINEL).low_confidence
    assert not send("p", "p.A", action="x").low_confidence


def test_expand():
    assert expand(StringValue.of(["b", "a"])) == ["a", "b"]
    assert expand(StringValue.unresolved("dynamic_input")) == [SENTINEL]
    assert expand(None) == []


# -- store --------------------------------------------------------------------

def test_add_is_idempotent():
    db = IntentDb()
    r = recv("p", "p.A", "x")
    assert db.add(r) and not db.add(r)
    assert len(db) == 1 and r in db


def test_save_load_round_trip(tmp_path):
    db = IntentDb([recv("p", "p.A", "x"), send("q", "q.B", action="x")])
    db.meta["p"] = {"sites": [], "dynamic_receivers": 0}
    path = tmp_path / "db.jsonl"
    save_db(db, path)
    back = load_db(path)
    assert back.row_set() == db.row_set() and back.meta == db.meta
    save_db(back, tmp_path / "again.jsonl")
    assert (tmp_path / "again.jsonl").read_bytes() == path.read_bytes()
    assert meta_path(path).exists()


def test_load_missing_store(tmp_path):
    with pytest.raises(StoreIO):
        load_db(tmp_path / "nope.jsonl")


def test_schema_version_mismatch(tmp_path):
    path = tmp_path / "db.jsonl"
    save_db(IntentDb([recv("p", "p.A", "x")]), path)
    rec = json.loads(path.read_text())
    rec["schema_version"] = SCHEMA_VERSION + 1
    path.write_text(json.dumps(rec) + "\n")
    with pytest.raises(SchemaVersionMismatch):
        load_db(path)


def test_remove_package_drops_dependent_derived_rows():
    db = IntentDb([send("a", "a.A", action="t"), recv("b", "b.B", "t"),
                   send("b", "b.B", action="t2", key="s", value=fwd("data"), flt="t")])
    assert fixpoint_resolve(db) == 1
    assert db.remove_package("a") == 2
    assert all(r.provenance.kind == EXTRACTED for r in db.rows)
    assert {r.package_name for r in db.rows} == {"b"}


def test_match_senders_by_action_and_target():
    db = IntentDb([recv("b", "b.R", "go"), send("a", "a.S", action="go", site="1"),
                   send("a", "a.S", target="b.R", site="2"), send("a", "a.S", action="other", site="3"),
                   send("a", "a.S", target="b", site="4")])
    sites = sorted(m.row.provenance.site for m in match_senders(db, "b.R"))
    assert sites == ["1", "2", "4"]


def test_match_senders_respects_component_kind():
    db = IntentDb([recv("b", "b.R", "go", kind="broadcast_receiver"), send("a", "a.S", action="go")])
    assert match_senders(db, "b.R") == []


def test_sentinel_action_reaches_only_filtered_receivers():
    db = IntentDb([recv("b", "b.R", "go"), recv("c", "c.Q", None), send("a", "a.S", action=SENTINEL)])
    [m] = match_senders(db, "b.R")
    assert m.low_confidence
    assert match_senders(db, "c.Q") == []


def test_unknown_component_has_no_senders():
    assert match_senders(IntentDb([send("a", "a.S", action="go")]), "x.Y") == []


# -- gates --------------------------------------------------------------------

def test_key_match():
    assert key_match(StringValue.of(["data"]), "data") == (True, False)
    assert key_match(StringValue.of(["data"]), "other") == (False, False)
    assert key_match(StringValue.unresolved("dynamic_input"), "data") == (True, True)
    assert key_match(StringValue.of(["data"]), SENTINEL) == (True, True)
    assert key_match(StringValue.of(["data"]), None) == (False, False)


def test_signature_compat():
    assert signature_compat("getStringExtra(String)", "putExtra(String,String)")
    assert signature_compat("Bundle.getString(String)", "Bundle.putString(String,String)")
    assert not signature_compat("getStringExtra(String)", "putExtra(String,CharSequence)")
    assert not signature_compat("getIntExtra(String,int)", "putExtra(String,String)")
    assert not signature_compat("getMysteryExtra(String)", "putExtra(String,String)")


# -- fixpoint -----------------------------------------------------------------

def _chain_fields(row):
    v = row.value
    if v is None:
        value = None
    elif v.kind == "source_call":
        value = "Device ID" if v.detail.startswith("android.telephony.TelephonyManager.getDeviceId") else v.detail
    else:
        value = f'{v.detail.split("(")[0]}("{v.key.single()}")'
    return (row.package_name, row.class_name.rsplit(".", 1)[1], row.intent_filter, row.target_component,
            row.intent_action, row.key, value, row.put_signature)


CHAIN_EXTRACTED = {
    ("com.appA", "OutFlowActivity", None, None, "action_test", "data", "Device ID", "putExtra(String,String)"),
    ("com.appB", "IntermediateActivity", "action_test", None, "action_test2", "secret", 'getStringExtra("data")',
     "putExtra(String,String)"),
    ("com.appC", "InFlowActivity", "action_test2", None, None, None, None, None),
}
CHAIN_DERIVED = ("com.appB", "IntermediateActivity", "action_test", None, "action_test2", "secret", "Device ID",
                  "putExtra(String,String)")


def test_chain_corpus_reproduces_chain_fields():
    db, _ = run_corpus(FIXTURES / "chain", max_rounds=0)
    assert {_chain_fields(r) for r in db.rows} == CHAIN_EXTRACTED and len(db) == 3
    assert fixpoint_resolve(db) == 1
    derived = [r for r in db.rows if r.provenance.kind == FIXPOINT_DERIVED]
    assert [_chain_fields(r) for r in derived] == [CHAIN_DERIVED]
    assert {_chain_fields(r) for r in db.rows} == CHAIN_EXTRACTED | {CHAIN_DERIVED}


def test_fixpoint_is_noop_without_forwarding():
    db = IntentDb([send("a", "a.A", action="t"), recv("b", "b.B", "t")])
    assert fixpoint_resolve(db) == 0 and len(db) == 2


def test_fixpoint_second_run_adds_nothing():
    db, _ = run_corpus(FIXTURES / "chain")
    assert fixpoint_resolve(db) == 0


def test_fixpoint_cycle_terminates():
    # A and B forward to each other; only A's base value circulates.
    db = IntentDb([
        send("a", "a.A", action="tb", key="k", value=fwd("k"), flt="ta", site="1"),
        send("b", "b.B", action="ta", key="k", value=fwd("k"), flt="tb", site="2"),
        send("c", "c.C", action="ta", key="k", site="3"),
    ])
    added = fixpoint_resolve(db)
    assert added == 2
    assert {r.package_name for r in db.rows if r.provenance.kind == FIXPOINT_DERIVED} == {"a", "b"}


def test_fixpoint_max_rounds_limits_chain_length():
    rows = [send("p0", "p0.C", action="t1", key="k", site="0")]
    for i in range(1, 4):
        rows.append(send(f"p{i}", f"p{i}.C", action=f"t{i + 1}", key="k", value=fwd("k"), flt=f"t{i}", site=str(i)))
    db = IntentDb(rows)
    assert fixpoint_resolve(db, max_rounds=1) == 1
    assert fixpoint_resolve(db) == 2


@pytest.mark.parametrize("seed", range(100))
def test_fixpoint_equals_closure_oracle(seed):
    rng = random.Random(seed)
    rows, edges = random_graph(rng, n=rng.randint(2, 6))
    db = IntentDb(rows)
    t0 = time.perf_counter()
    fixpoint_resolve(db)
    assert time.perf_counter() - t0 < 1.0
    got = {r for r in db.rows if r.provenance.kind == FIXPOINT_DERIVED}
    assert got == closure_oracle(rows, edges)


@pytest.mark.parametrize("seed", range(30))
@pytest.mark.parametrize("rounds", [1, 2, 3])
def test_bounded_fixpoint_equals_bounded_oracle(seed, rounds):
    rng = random.Random(1000 + seed)
    rows, edges = random_graph(rng, n=5)
    db = IntentDb(rows)
    fixpoint_resolve(db, max_rounds=rounds)
    got = {r for r in db.rows if r.provenance.kind == FIXPOINT_DERIVED}
    assert got == closure_oracle(rows, edges, rounds)

import random
import shutil

import pytest

from intentflow.extract.model import ValueDescriptor
from intentflow.intentdb import EXTRACTED, SENTINEL, IntentDb, IntentSummaryRow, Provenance
from intentflow.report import (
    GET_EXTRA, LOW, RESOLVED, FlowSource, IntraFlow, MissingFlows, classify_sensitivity, load_flows,
    match_all, match_flow, save_flows,
)
from intentflow.strings import StringValue

from oracles import FIXTURES, brute_force_leaks, random_corpus, reported_leaks, run_corpus

IMEI = ValueDescriptor.source_call("android.telephony.TelephonyManager.getDeviceId()")


def flow(app="b", comp="b.R", key="data", get="getStringExtra(String)", loc=None):
    loc = loc or f"{comp}->onCreate(Landroid/os/Bundle;)V@3"
    return IntraFlow(app, comp, FlowSource(GET_EXTRA, get, key, loc), "android.util.Log.i(String,String)",
                     f"{comp}->onCreate(Landroid/os/Bundle;)V@7")


def rows(action="go", key="data", put="putExtra(String,String)", value=IMEI):
    return IntentDb([
        IntentSummaryRow("b", "b.R", "activity", intent_filter="go", provenance=Provenance(EXTRACTED, "manifest")),
        IntentSummaryRow("a", "a.S", "activity", None, None, action, key, value, put, "activity",
                         Provenance(EXTRACTED, "a.S->onCreate(Landroid/os/Bundle;)V@9")),
    ])


# -- sensitivity --------------------------------------------------------------

def test_classify_sensitivity():
    assert classify_sensitivity(IMEI) == "device_id"
    assert classify_sensitivity(ValueDescriptor.constant("hello")) is None
    assert classify_sensitivity(ValueDescriptor.opaque("x@1")) is None
    assert classify_sensitivity(ValueDescriptor.opaque("x@1"), strict=True) == "unknown"
    assert classify_sensitivity(None) is None


# -- match_flow ---------------------------------------------------------------

def test_match_flow_reports_leak():
    [r] = match_flow(flow(), rows())
    assert r.confidence == RESOLVED and r.source_category == "device_id" and r.sink_category == "log"
    assert r.score_key() == ("b", "b.R", "android.telephony.TelephonyManager.getDeviceId", "android.util.Log.i")
    assert [h.package for h in r.hops] == ["a"]


@pytest.mark.parametrize("mutation", [{"action": "stop"}, {"key": "other"}, {"put": "putExtra(String,CharSequence)"},
                                      {"value": ValueDescriptor.constant("hi")}])
def test_match_flow_gates(mutation):
    assert match_flow(flow(), rows(**mutation)) == []


def test_sentinel_key_is_low_confidence():
    [r] = match_flow(flow(), rows(key=SENTINEL))
    assert r.confidence == LOW


def test_unresolved_receiver_key_is_low_confidence():
    [r] = match_flow(flow(key=None), rows())
    assert r.confidence == LOW


def test_strict_mode_reports_opaque_values():
    db = rows(value=ValueDescriptor.opaque("a.S->f()V@1"))
    assert match_flow(flow(), db) == []
    [r] = match_flow(flow(), db, strict=True)
    assert r.source_category == "unknown" and r.confidence == LOW


def test_direct_source_flows_are_not_intent_leaks():
    f = IntraFlow("b", "b.R", FlowSource("source", "android.telephony.TelephonyManager.getDeviceId()", None, "x@1"),
                  "android.util.Log.i(String,String)", "x@2")
    assert match_flow(f, rows()) == []


@pytest.mark.parametrize("seed", range(200))
def test_match_flow_equals_brute_force(seed):
    db, flows = random_corpus(random.Random(seed))
    assert len(db) <= 20 and len({r.package_name for r in db.rows}) <= 6
    for f in flows:
        assert reported_leaks(db, f) == brute_force_leaks(db, f)


# -- motivating corpus and its gate mutations -------------------------------------

def _mutated_pair(tmp_path, old, new):
    root = tmp_path / "pair"
    shutil.copytree(FIXTURES / "pair", root)
    smali = root / "com.appA" / "smali" / "com" / "appA" / "OutFlowActivity.smali"
    text = smali.read_text()
    assert old in text
    smali.write_text(text.replace(old, new))
    return root


def test_pair_corpus_reports_one_leak():
    _, reports = run_corpus(FIXTURES / "pair")
    [r] = reports
    assert r.score_key() == ("com.appB", "com.appB.InFlowActivity",
                             "android.telephony.TelephonyManager.getDeviceId",
                             "android.telephony.SmsManager.sendTextMessage")
    assert r.sink_category == "sms_send" and r.confidence == RESOLVED


@pytest.mark.parametrize("old,new", [
    ('"CUSTOM_INTENT.ACTION"', '"CUSTOM_INTENT.OTHER"'),
    ('"data"', '"payload"'),
    ("putExtra(Ljava/lang/String;Ljava/lang/String;)", "putExtra(Ljava/lang/String;Ljava/lang/CharSequence;)"),
], ids=["action", "key", "type"])
def test_pair_gate_mutation_removes_leak(tmp_path, old, new):
    _, reports = run_corpus(_mutated_pair(tmp_path, old, new))
    assert reports == []


def test_chain_corpus_reports_transitive_leak():
    _, reports = run_corpus(FIXTURES / "chain")
    [r] = reports
    assert [h.package for h in r.hops] == ["com.appA", "com.appB"]
    assert r.app == "com.appC" and r.origin == IMEI


# -- flows ----------------------------------------------------------------------

def test_flows_round_trip(tmp_path):
    fs = [flow(), flow(key=None)]
    save_flows(fs, tmp_path / "f.jsonl")
    assert load_flows(tmp_path / "f.jsonl") == fs


def test_missing_flows(tmp_path):
    with pytest.raises(MissingFlows):
        load_flows(tmp_path / "absent.jsonl")


def test_result_callback_flows_are_left_to_result_matching():
    f = flow(comp="a.S", app="a", loc="a.S->onActivityResult(IILandroid/content/Intent;)V@2")
    assert f.in_result_callback
    assert match_flow(f, rows()) == []


def test_match_all_is_sorted_and_deduplicated():
    db = rows()
    reports = match_all(db, [flow(), flow()])
    assert len(reports) == 1
    assert match_all(db, []) == []


def test_received_value_needs_resolution():
    db = rows(value=ValueDescriptor.get_extra_ref("getStringExtra(String)", StringValue.of(["x"])))
    assert match_flow(flow(), db) == []

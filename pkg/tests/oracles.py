"""Independent reference implementations the library is checked against."""

from __future__ import annotations

import random
import time
from dataclasses import replace
from pathlib import Path

from intentflow.catalogs import default_catalogs
from intentflow.extract.model import ValueDescriptor
from intentflow.intentdb import FIXPOINT_DERIVED, IntentDb, IntentSummaryRow, Provenance, fixpoint_resolve
from intentflow.pipeline import analyze, derive_flows, discover_apps, report
from intentflow.report import FlowSource, IntraFlow, match_flow
from intentflow.strings import StringValue

FIXTURES = Path(__file__).resolve().parent / "fixtures"


def run_corpus(path, max_rounds=None):
    """analyze + fixpoint + report over a corpus directory; returns (db, reports)."""
    cats = default_catalogs()
    apps = discover_apps([Path(path)])
    db = IntentDb()
    results = analyze(db, apps, cats)
    assert all(r.ok for r in results), [r.error for r in results if not r.ok]
    fixpoint_resolve(db, cats.compat, max_rounds)
    return db, report(db, derive_flows(apps, cats), cats)


def truth_of(path) -> set:
    from intentflow.scoring import load_ground_truth

    return load_ground_truth(path)


# -- matching oracle ---------------------------------------------------------
# Hand-written type table for the signatures the random corpora use.
GET_ACCEPTS = {
    "getStringExtra(String)": {"putExtra(String,String)"},
    "getIntExtra(String,int)": {"putExtra(String,int)"},
    "getCharSequenceExtra(String)": {"putExtra(String,CharSequence)"},
}
PUTS = sorted({p for ps in GET_ACCEPTS.values() for p in ps})
CHANNEL_KIND = {"activity": "activity", "broadcast": "broadcast_receiver", "service_start": "service"}
SENSITIVE = {"android.telephony.TelephonyManager.getDeviceId()", "android.location.Location.getLatitude()"}


def random_corpus(rng: random.Random, max_apps: int = 6, max_rows: int = 20):
    """Random store of receivers and senders plus one flow per receiver component."""
    n_apps = rng.randint(1, max_apps)
    pkgs = [f"p{i}" for i in range(n_apps)]
    actions = [f"A{i}" for i in range(4)]
    keys = ["k0", "k1", "k2"]
    kinds = list(CHANNEL_KIND.values())
    receivers = {}
    rows = []
    for _ in range(rng.randint(1, max(1, max_rows // 3))):
        pkg = rng.choice(pkgs)
        comp = f"{pkg}.R{rng.randrange(3)}"
        kind = receivers.setdefault((pkg, comp), rng.choice(kinds))
        flt = rng.choice(actions + [None])
        rows.append(IntentSummaryRow(pkg, comp, kind, intent_filter=flt, provenance=Provenance("extracted", "manifest")))
    comps = sorted(receivers)
    for _ in range(rng.randint(1, max_rows - len(rows))):
        pkg = rng.choice(pkgs)
        channel = rng.choice(list(CHANNEL_KIND))
        if rng.random() < 0.4:
            tpkg, tcomp = rng.choice(comps)
            target, action = (tpkg if rng.random() < 0.2 else tcomp), None
        else:
            target, action = None, rng.choice(actions)
        value = rng.choice([ValueDescriptor.source_call(s) for s in sorted(SENSITIVE)]
                           + [ValueDescriptor.constant("x"), ValueDescriptor.source_call("java.util.Random.nextInt()")])
        rows.append(IntentSummaryRow(pkg, f"{pkg}.S{rng.randrange(3)}", "activity", None, target, action,
                                     rng.choice(keys), value, rng.choice(PUTS), channel,
                                     Provenance("extracted", f"site{len(rows)}")))
    db = IntentDb(rows)
    flows = []
    for pkg, comp in comps:
        get = rng.choice(sorted(GET_ACCEPTS))
        flows.append(IntraFlow(pkg, comp, FlowSource("get_extra", get, rng.choice(keys), f"{comp}->m()V@1"),
                               "android.util.Log.i(String,String)", f"{comp}->m()V@5"))
    return db, flows


def brute_force_leaks(db: IntentDb, flow: IntraFlow) -> set:
    """Every sender row passing delivery, key and type gates with a sensitive value."""
    rows = db.rows
    mine = [r for r in rows if r.package_name == flow.app and r.class_name == flow.component]
    kind = mine[0].component_kind if mine else None
    filters = {r.intent_filter for r in mine if r.intent_filter is not None}
    out = set()
    for s in rows:
        if s.channel is None or CHANNEL_KIND[s.channel] != kind:
            continue
        delivered = (s.target_component in (flow.component, flow.app)) if s.target_component is not None \
            else s.intent_action in filters
        if not delivered or s.key != flow.source.key or s.put_signature not in GET_ACCEPTS[flow.source.signature]:
            continue
        if s.value.detail in SENSITIVE:
            out.add((s.package_name, s.class_name, s.key, s.put_signature, s.value.detail))
    return out


def reported_leaks(db: IntentDb, flow: IntraFlow) -> set:
    return {(r.hops[-1].package, r.hops[-1].class_name, r.hops[-1].key, r.hops[-1].put_signature, r.origin.detail)
            for r in match_flow(flow, db)}


# -- fixpoint closure oracle ---------------------------------------------------

def random_graph(rng: random.Random, n: int = 6):
    """Components C_i each accepting action a_i; edges forward an extra or inject a base value.

    Returns (rows, edges) where an edge is (src, dst, put_key, source) and
    source is ("base", value) or ("fwd", get_key).
    """
    keys = ["k0", "k1"]
    rows = [IntentSummaryRow("g", f"g.C{i}", "activity", intent_filter=f"a{i}",
                             provenance=Provenance("extracted", "manifest")) for i in range(n)]
    edges = []
    for e in range(rng.randint(1, 2 * n)):
        src, dst, key = rng.randrange(n), rng.randrange(n), rng.choice(keys)
        if rng.random() < 0.35:
            val = ValueDescriptor.source_call(f"api.Base.v{rng.randrange(3)}()")
            edges.append((src, dst, key, ("base", val)))
        else:
            gk = rng.choice(keys)
            val = ValueDescriptor.get_extra_ref("getStringExtra(String)", StringValue.of([gk]))
            edges.append((src, dst, key, ("fwd", gk)))
        rows.append(IntentSummaryRow("g", f"g.C{src}", "activity", f"a{src}", None, f"a{dst}", key, val,
                                     "putExtra(String,String)", "activity", Provenance("extracted", f"e{e}")))
    return rows, edges


def closure_oracle(rows, edges, rounds=None) -> set:
    """Derived rows expected after ``rounds`` synchronous substitution rounds (None: until stable)."""
    # received[(node, key)] = base values that can arrive there
    received: dict = {}
    for src, dst, key, (kind, v) in edges:
        if kind == "base":
            received.setdefault((dst, key), set()).add(v)
    fwd_rows = {i: r for i, r in enumerate(rows) if r.value is not None and r.value.kind == "get_extra_ref"}
    edge_of = {}
    for i, r in fwd_rows.items():
        edge_of[i] = edges[int(r.provenance.site[1:])]
    derived: dict[int, set] = {i: set() for i in fwd_rows}
    n = 0
    while rounds is None or n < rounds:
        n += 1
        snapshot = {k: set(v) for k, v in received.items()}
        changed = False
        for i, (src, dst, key, (_kind, gk)) in edge_of.items():
            new = snapshot.get((src, gk), set()) - derived[i]
            if new:
                derived[i] |= new
                received.setdefault((dst, key), set()).update(new)
                changed = True
        if not changed:
            break
    return {replace(fwd_rows[i], value=v, provenance=Provenance(FIXPOINT_DERIVED, fwd_rows[i].provenance.site))
            for i, vs in derived.items() for v in vs}


# -- timing --------------------------------------------------------------------

def best_of(fn, repeat: int = 3) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def r_squared(xs, ys) -> float:
    from statistics import correlation

    return correlation(xs, ys) ** 2

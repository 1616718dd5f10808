"""Joining intra-component flows with the summary store to find leaks across intents."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

from ..apk.app import parse_location
from ..catalogs import Catalogs, SourceSinkCatalog, default_catalogs
from ..extract.model import GET_EXTRA_REF, OPAQUE, SOURCE_CALL, ExtraPut, ResultChannelDecl, ValueDescriptor
from ..extract.receivers import ON_BIND, SET_RESULT
from ..intentdb.fixpoint import key_match, signature_compat
from ..intentdb.rows import FIXPOINT_DERIVED, SENTINEL, IntentSummaryRow
from ..intentdb.store import IntentDb, match_senders
from ..strings import StringValue
from .flows import GET_EXTRA, IntraFlow

LOG = logging.getLogger(__name__)

RESOLVED = "resolved"
LOW = "low"


def classify_sensitivity(value: ValueDescriptor | None, catalog: SourceSinkCatalog | None = None,
                         strict: bool = False) -> str | None:
    """Source category of a transmitted value, or None when it is not sensitive.

    In strict mode an unknown (opaque) value is reported as category ``unknown``.
    """
    if value is None:
        return None
    catalog = catalog or default_catalogs().sources_sinks
    if value.kind == SOURCE_CALL:
        return catalog.source_category(value.detail)
    if strict and value.kind == OPAQUE:
        return "unknown"
    return None


@dataclass(frozen=True)
class Hop:
    package: str
    class_name: str
    via: str  # target component or action
    key: str | None
    put_signature: str | None
    channel: str | None

    @classmethod
    def of_row(cls, row: IntentSummaryRow) -> Hop:
        via = row.target_component if row.target_component is not None else row.intent_action
        return cls(row.package_name, row.class_name, via, row.key, row.put_signature, row.channel)

    def to_json(self) -> dict:
        return {"package": self.package, "class": self.class_name, "via": self.via, "key": self.key,
                "put_signature": self.put_signature, "channel": self.channel}


@dataclass(frozen=True)
class LeakReport:
    app: str
    component: str
    hops: tuple[Hop, ...]
    origin: ValueDescriptor
    sink_signature: str
    sink_location: str
    sink_category: str | None
    source_category: str | None
    confidence: str = RESOLVED
    kind: str = "forward"
    get_signature: str | None = field(default=None, compare=False)

    @property
    def channels(self) -> tuple[str | None, ...]:
        return tuple(h.channel for h in self.hops)

    def score_key(self) -> tuple[str, str, str, str]:
        """(app, component, source API, sink API), parameter lists dropped."""
        return (self.app, self.component, self.origin.detail.split("(", 1)[0],
                self.sink_signature.split("(", 1)[0])

    def sort_key(self):
        return (self.sink_location, self.origin.sort_key(),
                json.dumps([h.to_json() for h in self.hops], sort_keys=True), self.confidence, self.kind)

    def to_json(self) -> dict:
        return {
            "app": self.app,
            "component": self.component,
            "kind": self.kind,
            "confidence": self.confidence,
            "origin": self.origin.to_json(),
            "source_category": self.source_category,
            "hops": [h.to_json() for h in self.hops],
            "sink": {"signature": self.sink_signature, "location": self.sink_location,
                     "category": self.sink_category},
        }

    def render(self) -> str:
        chain = " -> ".join(f"{h.package}/{h.class_name} [{h.via}; {h.key}; {h.put_signature}]"
                            for h in self.hops)
        return "\n".join([
            f"LEAK ({self.confidence}, {self.kind}) {self.source_category} -> {self.sink_category}",
            f"  origin: {self.origin.detail}",
            f"  chain:  {chain} => {self.app}/{self.component}",
            f"  sink:   {self.sink_signature} at {self.sink_location}",
        ])


def hop_chain(db: IntentDb, row: IntentSummaryRow) -> tuple[tuple[Hop, ...], bool]:
    """Hops that carried ``row``'s value, earliest first, and whether any was low confidence."""
    hops: list[Hop] = []
    low = False
    seen: set[str] = set()
    cur: IntentSummaryRow | None = row
    while cur is not None and cur.row_id not in seen:
        seen.add(cur.row_id)
        hops.append(Hop.of_row(cur))
        low = low or cur.low_confidence
        if cur.provenance.kind != FIXPOINT_DERIVED or len(cur.provenance.from_row_ids) < 2:
            break
        cur = db.get(cur.provenance.from_row_ids[1])
    return tuple(reversed(hops)), low


def _flow_key_match(flow_key: str | None, put_key: str | None) -> tuple[bool, bool]:
    if flow_key is None or flow_key == SENTINEL:
        return (put_key is not None), True
    return key_match(StringValue.of([flow_key]), put_key)


def match_flow(flow: IntraFlow, db: IntentDb, catalogs: Catalogs | None = None,
               strict: bool = False) -> list[LeakReport]:
    """Leaks reaching ``flow``'s sink through the extra its source reads."""
    catalogs = catalogs or default_catalogs()
    if flow.source.kind != GET_EXTRA or flow.in_result_callback:
        return []
    sink_cat = catalogs.sources_sinks.sink_category(flow.sink_signature)
    reports = set()
    for m in match_senders(db, flow.component, package=flow.app):
        s = m.row
        ok, key_low = _flow_key_match(flow.source.key, s.key)
        if not ok or not signature_compat(flow.source.signature, s.put_signature, catalogs.compat):
            continue
        category = classify_sensitivity(s.value, catalogs.sources_sinks, strict)
        if category is None:
            continue
        hops, chain_low = hop_chain(db, s)
        low = m.low_confidence or key_low or chain_low or s.value.kind != SOURCE_CALL
        reports.add(LeakReport(flow.app, flow.component, hops, s.value, flow.sink_signature,
                               flow.sink_location, sink_cat, category, LOW if low else RESOLVED,
                               "forward", flow.source.signature))
    return sorted(reports, key=LeakReport.sort_key)


# -- result channels ------------------------------------------------------

def _components(db: IntentDb) -> list[tuple[str, str]]:
    return sorted({(r.package_name, r.class_name) for r in db.rows})


def _reached(db: IntentDb, row: IntentSummaryRow) -> list[tuple[str, str, bool]]:
    """Components (package, class, low) that sender ``row`` can reach."""
    out = []
    for pkg, comp in _components(db):
        for m in match_senders(db, comp, row.channel, package=pkg):
            if m.row == row:
                out.append((pkg, comp, m.low_confidence))
                break
    return out


def _decls(db: IntentDb, package: str, component: str, kind: str) -> list[ResultChannelDecl]:
    raw = db.meta.get(package, {}).get("result_channels", [])
    decls = [ResultChannelDecl.from_json(d) for d in raw]
    return [d for d in decls if d.component == component and d.kind == kind]


def _extra_key_match(flow_key: str | None, extra: ExtraPut) -> tuple[bool, bool]:
    if not extra.key.resolved:
        return True, True
    if flow_key is None or flow_key == SENTINEL:
        return True, True
    return flow_key in extra.key.candidates, False


def match_result_channels(db: IntentDb, flows: list[IntraFlow], catalogs: Catalogs | None = None,
                          strict: bool = False) -> list[LeakReport]:
    """Leaks of data returned to a caller through setResult or a bound service.

    For each flow reading an extra inside onActivityResult / onServiceConnected
    of component S, the callees S reaches are looked up. A callee returning the
    received intent hands back S's own extras; a callee returning its own
    extras hands back those, with received extras resolved against S's sends.
    """
    catalogs = catalogs or default_catalogs()
    reports = set()
    for flow in flows:
        if flow.source.kind != GET_EXTRA or not flow.in_result_callback:
            continue
        method = parse_location(flow.source.location or flow.sink_location)[1]
        channel, decl_kind = (("activity_for_result", SET_RESULT) if method == "onActivityResult"
                              else ("service_bind", ON_BIND))
        sink_cat = catalogs.sources_sinks.sink_category(flow.sink_signature)
        get = flow.source.signature
        outgoing = [r for r in db.rows if r.package_name == flow.app and r.class_name == flow.component
                    and r.channel == channel and r.is_sender]
        for out_row in outgoing:
            for pkg, callee, reach_low in _reached(db, out_row):
                sent = [r for r in outgoing if any(c[:2] == (pkg, callee) for c in _reached(db, r))]
                for decl in _decls(db, pkg, callee, decl_kind):
                    candidates: list[tuple[ValueDescriptor, tuple[Hop, ...], bool, Hop]] = []
                    if decl.forwarded:
                        for s in sent:
                            ok, low = _flow_key_match(flow.source.key, s.key)
                            if ok and signature_compat(get, s.put_signature, catalogs.compat):
                                hops, chain_low = hop_chain(db, s)
                                back_hop = Hop(pkg, callee, flow.component, s.key, s.put_signature, "result")
                                candidates.append((s.value, hops, low or chain_low, back_hop))
                    for x in decl.extras:
                        ok, low = _extra_key_match(flow.source.key, x)
                        if not ok or not signature_compat(get, x.put_signature, catalogs.compat):
                            continue
                        back_hop = Hop(pkg, callee, flow.component, flow.source.key, x.put_signature, "result")
                        if x.value.kind == GET_EXTRA_REF:
                            for s in sent:
                                ok2, low2 = key_match(x.value.key, s.key)
                                if ok2 and signature_compat(x.value.detail, s.put_signature, catalogs.compat):
                                    hops, chain_low = hop_chain(db, s)
                                    candidates.append((s.value, hops, low or low2 or chain_low, back_hop))
                        else:
                            candidates.append((x.value, (), low, back_hop))
                    for value, hops, low, back_hop in candidates:
                        category = classify_sensitivity(value, catalogs.sources_sinks, strict)
                        if category is None:
                            continue
                        low = low or reach_low or value.kind != SOURCE_CALL
                        reports.add(LeakReport(flow.app, flow.component, hops + (back_hop,), value,
                                               flow.sink_signature, flow.sink_location, sink_cat, category,
                                               LOW if low else RESOLVED, "result", get))
    return sorted(reports, key=LeakReport.sort_key)


def match_all(db: IntentDb, flows: list[IntraFlow], catalogs: Catalogs | None = None,
              strict: bool = False) -> list[LeakReport]:
    """Forward and result-channel leaks for every flow, resolved matches first."""
    reports = set()
    for f in flows:
        reports.update(match_flow(f, db, catalogs, strict))
    reports.update(match_result_channels(db, flows, catalogs, strict))
    return sorted(reports, key=lambda r: (r.confidence != RESOLVED, r.sort_key()))


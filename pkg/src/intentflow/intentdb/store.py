"""The summary store: insertion, sender lookup, and the line-per-row file format."""

from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass
from pathlib import Path

from ..apk.app import DecodedApp
from ..apk.manifest import IntentFilterDecl
from ..extract.model import IntentSpec, ResultChannelDecl
from ..strings import StringValue
from .rows import (
    CHANNEL_KIND, EXTRACTED, SCHEMA_VERSION, SENTINEL, IntentSummaryRow, Provenance,
)

LOG = logging.getLogger(__name__)


class StoreIO(OSError):
    pass


class SchemaVersionMismatch(ValueError):
    pass


def expand(value: StringValue | None) -> list[str]:
    """Candidate strings of ``value``; unresolved becomes the sentinel."""
    if value is None:
        return []
    return value.sorted() if value.resolved else [SENTINEL]


class IntentDb:
    """Set of summary rows keyed by row id, plus per-app extraction metadata."""

    def __init__(self, rows=()):
        self._rows: dict[str, IntentSummaryRow] = {}
        self.meta: dict[str, dict] = {}
        for r in rows:
            self.add(r)

    def add(self, row: IntentSummaryRow) -> bool:
        rid = row.row_id
        if rid in self._rows:
            return False
        self._rows[rid] = row
        return True

    def get(self, row_id: str) -> IntentSummaryRow | None:
        return self._rows.get(row_id)

    @property
    def rows(self) -> list[IntentSummaryRow]:
        return sorted(self._rows.values(), key=IntentSummaryRow.sort_key)

    def row_set(self) -> set[IntentSummaryRow]:
        return set(self._rows.values())

    def __len__(self) -> int:
        return len(self._rows)

    def __contains__(self, row: IntentSummaryRow) -> bool:
        return row.row_id in self._rows

    def packages(self) -> list[str]:
        return sorted({r.package_name for r in self._rows.values()} | set(self.meta))

    def remove_package(self, package: str) -> int:
        doomed = {rid for rid, r in self._rows.items() if r.package_name == package}
        # Derived rows built on removed rows go too, transitively.
        changed = True
        while changed:
            changed = False
            for rid, r in self._rows.items():
                if rid not in doomed and any(f in doomed for f in r.provenance.from_row_ids):
                    doomed.add(rid)
                    changed = True
        for rid in doomed:
            del self._rows[rid]
        self.meta.pop(package, None)
        return len(doomed)

    def receiver(self, component: str, package: str | None = None) -> tuple[str | None, set[str], set[str]]:
        """(kind, filter actions, packages) recorded for ``component``."""
        kind = None
        actions: set[str] = set()
        packages: set[str] = set()
        for r in self._rows.values():
            if r.class_name != component or (package is not None and r.package_name != package):
                continue
            kind = kind or r.component_kind
            packages.add(r.package_name)
            if r.intent_filter is not None:
                actions.add(r.intent_filter)
        return kind, actions, packages


# -- insertion -------------------------------------------------------------

def _component_of(app: DecodedApp, class_name: str) -> tuple[str, str]:
    decl = app.component_for_class(class_name)
    if decl is not None:
        return decl.name, decl.kind
    return class_name.split("$", 1)[0], "unknown"


def _sender_parts(spec: IntentSpec) -> list[dict]:
    """Row fragments for one spec: targets (or actions) x extras x key candidates."""
    if spec.explicit:
        heads = [{"target_component": t} for t in expand(spec.target_component)]
    else:
        heads = [{"intent_action": a} for a in expand(spec.action)]
    tails: list[dict] = []
    for x in spec.extras or ():
        for k in expand(x.key):
            tails.append({"key": k, "value": x.value, "put_signature": x.put_signature})
    if not tails:
        tails = [{}]
    site = spec.site.location if spec.site else spec.origin
    out = []
    for h, t in itertools.product(heads, tails):
        out.append({**h, **t, "channel": spec.channel, "provenance": Provenance(EXTRACTED, site)})
    return out


def insert_app_summaries(db: IntentDb, app: DecodedApp, specs: list[IntentSpec],
                         filters: list[IntentFilterDecl] = (),
                         result_channels: list[ResultChannelDecl] | None = None) -> int:
    """Replace ``app``'s rows in ``db`` with rows built from its extraction results.

    Returns the number of rows added.
    """
    db.remove_package(app.package_name)
    kinds: dict[str, str] = {}
    receives: dict[str, list[tuple[str, str]]] = {}  # component -> [(action, site)]
    sends: dict[str, list[dict]] = {}

    for decl in app.components:
        kinds[decl.name] = decl.kind
        for f in decl.filters:
            for a in sorted(f.actions, key=lambda x: (x is None, x or "")):
                receives.setdefault(decl.name, []).append((a if a is not None else SENTINEL, "manifest"))
    for f in filters:
        reg = f.registration
        name = reg.receiver_class or reg.class_name
        decl = app.component_for_class(name)
        comp = decl.name if decl is not None and decl.name == name else name
        kinds.setdefault(comp, "broadcast_receiver")
        for a in sorted(f.actions, key=lambda x: (x is None, x or "")):
            receives.setdefault(comp, []).append((a if a is not None else SENTINEL, str(reg)))
    for spec in specs:
        comp, kind = _component_of(app, spec.site.class_name)
        kinds.setdefault(comp, kind)
        sends.setdefault(comp, []).extend(_sender_parts(spec))

    before = len(db)
    for comp in sorted(kinds):
        base = {"package_name": app.package_name, "class_name": comp, "component_kind": kinds[comp]}
        recv = receives.get(comp, [])
        out = sends.get(comp, [])
        if recv and out:
            for (action, _site), part in itertools.product(recv, out):
                db.add(IntentSummaryRow(**base, intent_filter=action, **part))
        elif recv:
            for action, site in recv:
                db.add(IntentSummaryRow(**base, intent_filter=action, provenance=Provenance(EXTRACTED, site)))
        elif out:
            for part in out:
                db.add(IntentSummaryRow(**base, **part))
        elif comp in {d.name for d in app.components}:
            db.add(IntentSummaryRow(**base, provenance=Provenance(EXTRACTED, "manifest")))
    if result_channels is not None:
        db.meta.setdefault(app.package_name, {})["result_channels"] = [r.to_json() for r in result_channels]
    return len(db) - before


# -- matching --------------------------------------------------------------

@dataclass(frozen=True)
class SenderMatch:
    row: IntentSummaryRow
    low_confidence: bool


def match_senders(db: IntentDb, receiver_component: str, received_channel: str | None = None,
                  package: str | None = None) -> list[SenderMatch]:
    """Sender rows that can deliver an intent to ``receiver_component``.

    A sender matches by naming the component (or its package) as target, or by
    an action the component's filters accept. Sentinel actions, targets or
    filters match anything of the right kind, flagged low confidence.
    """
    kind, actions, packages = db.receiver(receiver_component, package)
    if kind is None:
        return []
    wildcard_filter = SENTINEL in actions
    out = []
    for r in db.rows:
        if not r.is_sender or r.channel is None:
            continue
        if received_channel is not None and r.channel != received_channel:
            continue
        if CHANNEL_KIND.get(r.channel) != kind:
            continue
        low = r.key == SENTINEL
        if r.target_component is not None:
            if r.target_component in (receiver_component, *packages):
                pass
            elif r.target_component == SENTINEL:
                low = True
            else:
                continue
        else:
            if r.intent_action == SENTINEL:
                if not actions:
                    continue
                low = True
            elif r.intent_action in actions:
                pass
            elif wildcard_filter:
                low = True
            else:
                continue
        out.append(SenderMatch(r, low))
    out.sort(key=lambda m: (m.low_confidence, m.row.sort_key()))
    return out


# -- persistence -----------------------------------------------------------

def meta_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def save_db(db: IntentDb, path: str | Path) -> None:
    path = Path(path)
    lines = [json.dumps(r.to_json(), sort_keys=True, ensure_ascii=False) for r in db.rows]
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
        meta_path(path).write_text(json.dumps(db.meta, sort_keys=True, indent=1, ensure_ascii=False) + "\n",
                                   encoding="utf-8")
    except OSError as err:
        raise StoreIO(f"cannot write {path}: {err}") from err


def load_db(path: str | Path) -> IntentDb:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
        meta_file = meta_path(path)
        meta = json.loads(meta_file.read_text(encoding="utf-8")) if meta_file.exists() else {}
    except (OSError, UnicodeDecodeError) as err:
        raise StoreIO(f"cannot read {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise StoreIO(f"{meta_path(path)}: {err}") from err
    db = IntentDb()
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
        except json.JSONDecodeError as err:
            raise StoreIO(f"{path}:{lineno}: {err}") from err
        version = data.get("schema_version")
        if version != SCHEMA_VERSION:
            raise SchemaVersionMismatch(f"{path}:{lineno}: schema version {version}, expected {SCHEMA_VERSION}")
        db.add(IntentSummaryRow.from_json(data))
    db.meta = meta
    return db


from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property

from ..extract.model import ValueDescriptor

SCHEMA_VERSION = 1
SENTINEL = "⟂UNRESOLVED⟂"

EXTRACTED = "extracted"
FIXPOINT_DERIVED = "fixpoint_derived"

# Which receiver kind each sender channel can reach.
CHANNEL_KIND = {
    "activity": "activity",
    "activity_for_result": "activity",
    "broadcast": "broadcast_receiver",
    "service_start": "service",
    "service_bind": "service",
}


@dataclass(frozen=True)
class Provenance:
    kind: str
    site: str | None = None
    from_row_ids: tuple[str, ...] = field(default=(), compare=False)

    def to_json(self) -> dict:
        return {"kind": self.kind, "site": self.site, "from_row_ids": list(self.from_row_ids)}

    @classmethod
    def from_json(cls, data: dict) -> Provenance:
        return cls(data["kind"], data.get("site"), tuple(data.get("from_row_ids", ())))


@dataclass(frozen=True)
class IntentSummaryRow:
    """One IntentDB entry: a receiver capability, a sent extra, or both.

    Equality ignores the contributing row ids of derived rows, so the same
    fact derived along two routes is stored once.
    """

    package_name: str
    class_name: str
    component_kind: str = "unknown"
    intent_filter: str | None = None
    target_component: str | None = None
    intent_action: str | None = None
    key: str | None = None
    value: ValueDescriptor | None = None
    put_signature: str | None = None
    channel: str | None = None
    provenance: Provenance = Provenance(EXTRACTED)

    def __post_init__(self) -> None:
        if self.target_component is not None and self.intent_action is not None:
            raise ValueError("a sender row names a target component or an action, not both")
        if self.provenance.kind == FIXPOINT_DERIVED and self.value is not None \
                and self.value.kind == "get_extra_ref":
            raise ValueError("derived rows carry resolved values only")

    @property
    def is_receiver(self) -> bool:
        return self.intent_filter is not None

    @property
    def is_sender(self) -> bool:
        return self.target_component is not None or self.intent_action is not None

    @property
    def low_confidence(self) -> bool:
        return SENTINEL in (self.intent_filter, self.target_component, self.intent_action, self.key)

    def to_json(self, with_ids: bool = True) -> dict:
        prov = self.provenance.to_json()
        if not with_ids:
            prov.pop("from_row_ids")
        return {
            "schema_version": SCHEMA_VERSION,
            "package_name": self.package_name,
            "class_name": self.class_name,
            "component_kind": self.component_kind,
            "intent_filter": self.intent_filter,
            "target_component": self.target_component,
            "intent_action": self.intent_action,
            "key": self.key,
            "value": self.value.to_json() if self.value is not None else None,
            "put_signature": self.put_signature,
            "channel": self.channel,
            "provenance": prov,
        }

    @classmethod
    def from_json(cls, data: dict) -> IntentSummaryRow:
        value = data.get("value")
        return cls(
            data["package_name"], data["class_name"], data.get("component_kind", "unknown"),
            data.get("intent_filter"), data.get("target_component"), data.get("intent_action"),
            data.get("key"), ValueDescriptor.from_json(value) if value is not None else None,
            data.get("put_signature"), data.get("channel"),
            Provenance.from_json(data.get("provenance") or {"kind": EXTRACTED}),
        )

    @cached_property
    def canonical(self) -> str:
        return json.dumps(self.to_json(with_ids=False), sort_keys=True, ensure_ascii=False)

    @cached_property
    def row_id(self) -> str:
        return hashlib.sha1(self.canonical.encode("utf-8")).hexdigest()[:12]

    def sort_key(self) -> tuple[str, str, str]:
        return (self.package_name, self.class_name, self.canonical)

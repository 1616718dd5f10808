from __future__ import annotations

import json

from dataclasses import dataclass, field

from ..strings import StringValue

CONSTANT = "constant"
SOURCE_CALL = "source_call"
GET_EXTRA_REF = "get_extra_ref"
OPAQUE = "opaque"
VALUE_KINDS = (CONSTANT, SOURCE_CALL, GET_EXTRA_REF, OPAQUE)


@dataclass(frozen=True)
class ValueDescriptor:
    """What an extra carries: a constant, a source API result, a received extra, or unknown.

    ``detail`` is the constant text, the source API signature, the get
    signature, or the code location respectively. ``key`` is only set for
    ``get_extra_ref``.
    """

    kind: str
    detail: str
    key: StringValue | None = None

    def __post_init__(self) -> None:
        if self.kind not in VALUE_KINDS:
            raise ValueError(f"unknown value kind {self.kind!r}")
        if (self.kind == GET_EXTRA_REF) != (self.key is not None):
            raise ValueError("key is required exactly for get_extra_ref values")

    def sort_key(self) -> tuple[str, str, str]:
        return (self.kind, self.detail, json.dumps(self.key.to_json()) if self.key else "")

    @classmethod
    def constant(cls, text: str) -> ValueDescriptor:
        return cls(CONSTANT, text)

    @classmethod
    def source_call(cls, signature: str) -> ValueDescriptor:
        return cls(SOURCE_CALL, signature)

    @classmethod
    def get_extra_ref(cls, get_signature: str, key: StringValue) -> ValueDescriptor:
        return cls(GET_EXTRA_REF, get_signature, key)

    @classmethod
    def opaque(cls, location: str) -> ValueDescriptor:
        return cls(OPAQUE, location)

    def __str__(self) -> str:
        if self.kind == GET_EXTRA_REF:
            return f"{self.detail.split('(')[0]}({self.key})"
        if self.kind == CONSTANT:
            return repr(self.detail)
        return f"{self.kind}:{self.detail}"

    def to_json(self) -> dict:
        if self.kind == GET_EXTRA_REF:
            return {"kind": self.kind, "detail": {"get": self.detail, "key": self.key.to_json()}}
        return {"kind": self.kind, "detail": self.detail}

    @classmethod
    def from_json(cls, data: dict) -> ValueDescriptor:
        if data["kind"] == GET_EXTRA_REF:
            return cls(GET_EXTRA_REF, data["detail"]["get"], StringValue.from_json(data["detail"]["key"]))
        return cls(data["kind"], data["detail"])


@dataclass(frozen=True)
class ExtraPut:
    key: StringValue
    value: ValueDescriptor
    put_signature: str
    location: str = field(default="", compare=False)

    def to_json(self) -> dict:
        return {"key": self.key.to_json(), "value": self.value.to_json(),
                "put_signature": self.put_signature, "location": self.location}

    @classmethod
    def from_json(cls, data: dict) -> ExtraPut:
        return cls(StringValue.from_json(data["key"]), ValueDescriptor.from_json(data["value"]),
                   data["put_signature"], data.get("location", ""))


@dataclass(frozen=True)
class SenderSite:
    class_name: str
    method: str  # name + proto
    index: int
    channel: str
    api: str
    request_code: int | None = None

    @property
    def location(self) -> str:
        return f"{self.class_name}->{self.method}@{self.index}"


@dataclass(frozen=True)
class IntentSpec:
    """The intent reaching one sender call site, reconstructed from one origin."""

    site: SenderSite | None
    origin: str | None
    explicit: bool
    target_component: StringValue | None = None
    action: StringValue | None = None
    extras: tuple[ExtraPut, ...] = ()
    forwarded: bool = False

    def __post_init__(self) -> None:
        if self.explicit and self.target_component is None:
            raise ValueError("explicit intent without a target component")
        if not self.explicit and self.action is None:
            raise ValueError("implicit intent without an action value")

    @property
    def channel(self) -> str | None:
        return self.site.channel if self.site else None

    @property
    def request_code(self) -> int | None:
        return self.site.request_code if self.site else None


@dataclass(frozen=True)
class ResultChannelDecl:
    """One endpoint of a result channel.

    kinds: ``set_result`` (receiver returns an intent; ``forwarded`` when it is
    the received one), ``on_bind`` (service hands extras back to the binder),
    ``on_activity_result`` / ``on_service_connected`` (caller-side callbacks,
    with the extras they read in ``gets`` as (get signature, key) pairs).
    """

    kind: str
    component: str
    location: str
    forwarded: bool = False
    extras: tuple[ExtraPut, ...] = ()
    gets: tuple[tuple[str, StringValue], ...] = ()

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "component": self.component,
            "location": self.location,
            "forwarded": self.forwarded,
            "extras": [e.to_json() for e in self.extras],
            "gets": [{"get": g, "key": k.to_json()} for g, k in self.gets],
        }

    @classmethod
    def from_json(cls, data: dict) -> ResultChannelDecl:
        return cls(
            data["kind"], data["component"], data["location"], data.get("forwarded", False),
            tuple(ExtraPut.from_json(e) for e in data.get("extras", [])),
            tuple((g["get"], StringValue.from_json(g["key"])) for g in data.get("gets", [])),
        )


class IntentOriginNotFound(LookupError):
    def __init__(self, site: SenderSite, fallback: IntentSpec):
        super().__init__(f"no intent construction reaches {site.location}")
        self.site = site
        self.fallback = fallback

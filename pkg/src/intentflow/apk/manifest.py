"""Decoded AndroidManifest.xml parsing."""

from __future__ import annotations

import logging
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path

LOG = logging.getLogger(__name__)

ANDROID_NS = "http://schemas.android.com/apk/res/android"

COMPONENT_TAGS = {
    "activity": "activity",
    "activity-alias": None,
    "service": "service",
    "receiver": "broadcast_receiver",
    "provider": "content_provider",
}

COMPONENT_KINDS = ("activity", "service", "broadcast_receiver", "content_provider")


class MalformedManifest(ValueError):
    pass


@dataclass(frozen=True)
class DynamicRegistration:
    class_name: str
    method: str
    instruction_index: int
    receiver_class: str = ""

    def __str__(self) -> str:
        return f"{self.class_name}->{self.method}@{self.instruction_index}"


@dataclass(frozen=True)
class IntentFilterDecl:
    """Actions a component accepts.

    ``registration`` is ``"manifest"`` or a :class:`DynamicRegistration`.
    For dynamic filters an action may be ``None`` when it could not be resolved.
    """

    actions: frozenset[str | None]
    categories: frozenset[str] = frozenset()
    registration: str | DynamicRegistration = "manifest"
    data: tuple[tuple[tuple[str, str], ...], ...] = ()

    @property
    def is_dynamic(self) -> bool:
        return isinstance(self.registration, DynamicRegistration)


@dataclass(frozen=True)
class ComponentDecl:
    name: str
    kind: str
    filters: tuple[IntentFilterDecl, ...] = ()
    exported: bool = False
    raw_attributes: tuple[tuple[str, str], ...] = field(default=(), compare=False)


def _attr(elem: ET.Element, name: str) -> str | None:
    value = elem.get(f"{{{ANDROID_NS}}}{name}")
    if value is None:
        value = elem.get(f"android:{name}")
    return value


def qualify(name: str, package: str) -> str:
    if name.startswith("."):
        return package + name
    if "." not in name:
        return f"{package}.{name}"
    return name


def _plain_attrs(elem: ET.Element) -> tuple[tuple[str, str], ...]:
    out = []
    for k, v in sorted(elem.attrib.items()):
        if k.startswith(f"{{{ANDROID_NS}}}"):
            k = "android:" + k[len(ANDROID_NS) + 2:]
        out.append((k, v))
    return tuple(out)


def parse_manifest_text(text: str, origin: str = "<string>") -> tuple[str, list[ComponentDecl]]:
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise MalformedManifest(f"{origin}: {exc}") from exc
    package = root.get("package")
    if not package:
        raise MalformedManifest(f"{origin}: <manifest> lacks a package attribute")
    app = root.find("application")
    components: list[ComponentDecl] = []
    seen: set[tuple[str, str]] = set()
    for elem in (app if app is not None else []):
        tag = elem.tag
        if tag not in COMPONENT_TAGS:
            if tag not in ("meta-data", "uses-library", "uses-native-library", "profileable", "property"):
                LOG.warning("%s: unknown component kind <%s> ignored", origin, tag)
            continue
        kind = COMPONENT_TAGS[tag]
        if kind is None:
            LOG.info("%s: <%s> retained only as raw attributes", origin, tag)
            continue
        raw_name = _attr(elem, "name")
        if not raw_name:
            LOG.warning("%s: <%s> without android:name skipped", origin, tag)
            continue
        name = qualify(raw_name, package)
        filters = tuple(_parse_filter(f) for f in elem.findall("intent-filter"))
        exported_attr = _attr(elem, "exported")
        exported = exported_attr == "true" if exported_attr is not None else bool(filters)
        if (name, kind) in seen:
            LOG.warning("%s: duplicate %s %s ignored", origin, kind, name)
            continue
        seen.add((name, kind))
        components.append(ComponentDecl(name, kind, filters, exported, _plain_attrs(elem)))
    return package, components


def _parse_filter(elem: ET.Element) -> IntentFilterDecl:
    actions = frozenset(a for a in (_attr(x, "name") for x in elem.findall("action")) if a)
    categories = frozenset(c for c in (_attr(x, "name") for x in elem.findall("category")) if c)
    data = tuple(_plain_attrs(d) for d in elem.findall("data"))
    return IntentFilterDecl(actions, categories, "manifest", data)


def parse_manifest(path: str | Path) -> tuple[str, list[ComponentDecl]]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise MalformedManifest(f"{path}: {exc}") from exc
    return parse_manifest_text(text, str(path))

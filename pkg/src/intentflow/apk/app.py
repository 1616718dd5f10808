from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

from .manifest import ComponentDecl, parse_manifest
from .smali import SmaliClass, SmaliMethod, parse_smali_class

LOG = logging.getLogger(__name__)

# Incremented on every load_app call; the scalability check reads it.
LOAD_COUNTER = {"calls": 0}


class MissingManifest(FileNotFoundError):
    pass


class MissingSmaliTree(FileNotFoundError):
    pass


@dataclass
class DecodedApp:
    package_name: str
    components: list[ComponentDecl]
    classes: list[SmaliClass]
    source_dir: Path
    _by_name: dict[str, SmaliClass] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        self._by_name = {c.class_name: c for c in self.classes}

    def find_class(self, name: str) -> SmaliClass | None:
        return self._by_name.get(name)

    def component(self, name: str) -> ComponentDecl | None:
        for c in self.components:
            if c.name == name:
                return c
        return None

    def component_for_class(self, class_name: str) -> ComponentDecl | None:
        """The declared component owning ``class_name`` (inner classes map to their outer class)."""
        return self.component(class_name) or self.component(class_name.split("$", 1)[0])

    def methods(self):
        for cls in self.classes:
            for m in cls.methods:
                yield cls, m


def load_app(directory: str | Path) -> DecodedApp:
    LOAD_COUNTER["calls"] += 1
    directory = Path(directory)
    manifest = directory / "AndroidManifest.xml"
    if not manifest.is_file():
        raise MissingManifest(f"{directory}: no AndroidManifest.xml")
    smali_root = directory / "smali"
    if not smali_root.is_dir():
        raise MissingSmaliTree(f"{directory}: no smali/ directory")
    package, components = parse_manifest(manifest)
    classes = [parse_smali_class(p) for p in sorted(smali_root.rglob("*.smali"))]
    LOG.debug("loaded %s: %d components, %d classes", package, len(components), len(classes))
    return DecodedApp(package, components, classes, directory)


def method_location(cls: SmaliClass, method: SmaliMethod, index: int) -> str:
    return f"{cls.class_name}->{method.name}{method.proto}@{index}"


def parse_location(location: str) -> tuple[str, str, int]:
    """Inverse of :func:`method_location`: (class, method name, index)."""
    cls, _, rest = location.partition("->")
    method, _, idx = rest.rpartition("@")
    return cls, method.split("(", 1)[0], int(idx) if idx.isdigit() else -1

"""In-memory model of a decoded app: manifest components plus Smali classes."""

from .app import DecodedApp, MissingManifest, MissingSmaliTree, load_app, method_location, parse_location
from .manifest import (
    ComponentDecl,
    DynamicRegistration,
    IntentFilterDecl,
    MalformedManifest,
    parse_manifest,
    parse_manifest_text,
)
from .smali import (
    FieldRef,
    Instruction,
    MalformedSmali,
    MethodRef,
    SmaliClass,
    SmaliMethod,
    parse_smali_class,
    parse_smali_text,
)

__all__ = [
    "ComponentDecl",
    "DecodedApp",
    "DynamicRegistration",
    "FieldRef",
    "Instruction",
    "IntentFilterDecl",
    "MalformedManifest",
    "MalformedSmali",
    "MethodRef",
    "MissingManifest",
    "MissingSmaliTree",
    "SmaliClass",
    "SmaliMethod",
    "load_app",
    "method_location",
    "parse_location",
    "parse_manifest",
    "parse_manifest_text",
    "parse_smali_class",
    "parse_smali_text",
]

"""API catalogs: intent sender methods, extra put/get methods, sources and sinks.

The defaults ship as plain-text files under ``intentflow/data``; each loader
accepts an alternative path so the catalogs can be edited without code changes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .apk.smali import MethodRef, java_name, simple_name

LOG = logging.getLogger(__name__)

CHANNELS = ("activity", "activity_for_result", "broadcast", "service_start", "service_bind")

INTENT = "Landroid/content/Intent;"
BUNDLE = "Landroid/os/Bundle;"


class UnknownGetSignature(KeyError):
    pass


def _data_path(name: str) -> Path:
    return Path(str(resources.files("intentflow") / "data" / name))


def _rows(path: Path):
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        yield lineno, [c.strip() for c in line.split("\t")]


def param_list(ref: MethodRef) -> str:
    return ",".join(simple_name(p) for p in ref.params)


def extra_signature(ref: MethodRef) -> str:
    """Canonical put/get spelling: ``putExtra(String,String)``, ``Bundle.getString(String)``."""
    prefix = "Bundle." if ref.owner == BUNDLE else ""
    return f"{prefix}{ref.name}({param_list(ref)})"


def api_signature(ref: MethodRef) -> str:
    """Canonical source/sink spelling: ``android.telephony.TelephonyManager.getDeviceId()``."""
    return f"{java_name(ref.owner)}.{ref.name}({param_list(ref)})"


# -- sender methods --------------------------------------------------------

@dataclass(frozen=True)
class SenderApi:
    name: str
    params: tuple[str, ...]
    owner: str
    channel: str

    @property
    def intent_param(self) -> int:
        for i, p in enumerate(self.params):
            if p in ("Intent", "Intent[]"):
                return i
        raise ValueError(f"{self.name} has no Intent parameter")

    @property
    def request_code_param(self) -> int | None:
        if self.channel != "activity_for_result":
            return None
        i = self.intent_param
        if i + 1 < len(self.params) and self.params[i + 1] == "int":
            return i + 1
        return None

    def __str__(self) -> str:
        return f"{self.owner}.{self.name}({','.join(self.params)})"


class SenderCatalog:
    def __init__(self, entries: list[SenderApi]):
        self.entries = entries
        self._index = {(e.name, e.params): e for e in entries}

    @classmethod
    def load(cls, path: str | Path | None = None) -> SenderCatalog:
        path = Path(path) if path else _data_path("sender_apis.tsv")
        entries = []
        for lineno, cols in _rows(path):
            if len(cols) != 4 or cols[3] not in CHANNELS:
                raise ValueError(f"{path}:{lineno}: expected name, params, owner, channel")
            params = tuple(p for p in cols[1].split(",") if p)
            entries.append(SenderApi(cols[0], params, cols[2], cols[3]))
        return cls(entries)

    def match(self, ref: MethodRef) -> SenderApi | None:
        return self._index.get((ref.name, tuple(simple_name(p) for p in ref.params)))

    def __len__(self) -> int:
        return len(self.entries)


# -- extra put/get compatibility ------------------------------------------

# value type -> (Intent put signatures, Bundle put signatures)
_PUTS_BY_TYPE: dict[str, tuple[str, ...]] = {}
for _t, _bundle in [
    ("boolean", "Boolean"), ("byte", "Byte"), ("short", "Short"), ("char", "Char"),
    ("int", "Int"), ("long", "Long"), ("float", "Float"), ("double", "Double"),
    ("String", "String"), ("CharSequence", "CharSequence"), ("Parcelable", "Parcelable"),
    ("Serializable", "Serializable"), ("Bundle", "Bundle"),
]:
    _PUTS_BY_TYPE[_t] = (f"putExtra(String,{_t})", f"Bundle.put{_bundle}(String,{_t})")
for _t, _bundle in [
    ("boolean[]", "BooleanArray"), ("byte[]", "ByteArray"), ("short[]", "ShortArray"),
    ("char[]", "CharArray"), ("int[]", "IntArray"), ("long[]", "LongArray"),
    ("float[]", "FloatArray"), ("double[]", "DoubleArray"), ("String[]", "StringArray"),
    ("CharSequence[]", "CharSequenceArray"), ("Parcelable[]", "ParcelableArray"),
]:
    _PUTS_BY_TYPE[_t] = (f"putExtra(String,{_t})", f"Bundle.put{_bundle}(String,{_t})")
for _t, _name in [
    ("ArrayList<Parcelable>", "ParcelableArrayList"), ("ArrayList<Integer>", "IntegerArrayList"),
    ("ArrayList<String>", "StringArrayList"), ("ArrayList<CharSequence>", "CharSequenceArrayList"),
]:
    _PUTS_BY_TYPE[_t] = (f"put{_name}Extra(String,ArrayList)", f"Bundle.put{_name}(String,ArrayList)")

# The 42 typed getters: 28 on Intent, 14 on Bundle.
_GETS: list[tuple[str, str]] = [
    ("getBooleanExtra(String,boolean)", "boolean"),
    ("getByteExtra(String,byte)", "byte"),
    ("getShortExtra(String,short)", "short"),
    ("getCharExtra(String,char)", "char"),
    ("getIntExtra(String,int)", "int"),
    ("getLongExtra(String,long)", "long"),
    ("getFloatExtra(String,float)", "float"),
    ("getDoubleExtra(String,double)", "double"),
    ("getStringExtra(String)", "String"),
    ("getCharSequenceExtra(String)", "CharSequence"),
    ("getParcelableExtra(String)", "Parcelable"),
    ("getParcelableArrayExtra(String)", "Parcelable[]"),
    ("getParcelableArrayListExtra(String)", "ArrayList<Parcelable>"),
    ("getSerializableExtra(String)", "Serializable"),
    ("getIntegerArrayListExtra(String)", "ArrayList<Integer>"),
    ("getStringArrayListExtra(String)", "ArrayList<String>"),
    ("getCharSequenceArrayListExtra(String)", "ArrayList<CharSequence>"),
    ("getBooleanArrayExtra(String)", "boolean[]"),
    ("getByteArrayExtra(String)", "byte[]"),
    ("getShortArrayExtra(String)", "short[]"),
    ("getCharArrayExtra(String)", "char[]"),
    ("getIntArrayExtra(String)", "int[]"),
    ("getLongArrayExtra(String)", "long[]"),
    ("getFloatArrayExtra(String)", "float[]"),
    ("getDoubleArrayExtra(String)", "double[]"),
    ("getStringArrayExtra(String)", "String[]"),
    ("getCharSequenceArrayExtra(String)", "CharSequence[]"),
    ("getBundleExtra(String)", "Bundle"),
    ("Bundle.getString(String)", "String"),
    ("Bundle.getString(String,String)", "String"),
    ("Bundle.getInt(String)", "int"),
    ("Bundle.getInt(String,int)", "int"),
    ("Bundle.getBoolean(String)", "boolean"),
    ("Bundle.getBoolean(String,boolean)", "boolean"),
    ("Bundle.getLong(String)", "long"),
    ("Bundle.getLong(String,long)", "long"),
    ("Bundle.getCharSequence(String)", "CharSequence"),
    ("Bundle.getParcelable(String)", "Parcelable"),
    ("Bundle.getSerializable(String)", "Serializable"),
    ("Bundle.getStringArrayList(String)", "ArrayList<String>"),
    ("Bundle.getStringArray(String)", "String[]"),
    ("Bundle.getBundle(String)", "Bundle"),
]


def default_compat_text() -> str:
    lines = [
        "# get signature <TAB> value type <TAB> compatible put signatures (space separated)",
        "# A get receives a value only when the put stored the same value type.",
    ]
    for get, vtype in _GETS:
        lines.append(f"{get}\t{vtype}\t{' '.join(_PUTS_BY_TYPE[vtype])}")
    covered = {p for _, t in _GETS for p in _PUTS_BY_TYPE[t]}
    orphans = [(t, p) for t, puts in _PUTS_BY_TYPE.items() for p in puts if p not in covered]
    if orphans:
        lines += ["", "# puts without a getter above, listed so they are still recognised"]
        lines += [f"-\t{t}\t{p}" for t, p in orphans]
    return "\n".join(lines) + "\n"


class GetPutCompatTable:
    def __init__(self, mapping: dict[str, frozenset[str]], put_types: dict[str, str],
                 get_types: dict[str, str]):
        self.mapping = mapping
        self.put_types = put_types
        self.get_types = get_types

    @classmethod
    def load(cls, path: str | Path | None = None) -> GetPutCompatTable:
        path = Path(path) if path else _data_path("getput_compat.tsv")
        mapping: dict[str, frozenset[str]] = {}
        put_types: dict[str, str] = {}
        get_types: dict[str, str] = {}
        for lineno, cols in _rows(path):
            if len(cols) != 3:
                raise ValueError(f"{path}:{lineno}: expected get, type, puts")
            get, vtype, puts = cols[0], cols[1], frozenset(cols[2].split())
            for p in puts:
                put_types[p] = vtype
            if get != "-":
                mapping[get] = puts
                get_types[get] = vtype
        return cls(mapping, put_types, get_types)

    def compatible(self, get_sig: str, put_sig: str) -> bool:
        try:
            return put_sig in self.mapping[get_sig]
        except KeyError:
            raise UnknownGetSignature(get_sig) from None

    def is_put(self, sig: str) -> bool:
        return sig in self.put_types

    def is_get(self, sig: str) -> bool:
        return sig in self.mapping

    def __len__(self) -> int:
        return len(self.mapping)


# -- sources and sinks ----------------------------------------------------

class SourceSinkCatalog:
    def __init__(self, sources: dict[str, str], sinks: dict[str, str]):
        overlap = set(sources) & set(sinks)
        if overlap:
            raise ValueError(f"signatures listed as both source and sink: {sorted(overlap)}")
        self.sources = sources
        self.sinks = sinks

    @classmethod
    def load(cls, path: str | Path | None = None) -> SourceSinkCatalog:
        path = Path(path) if path else _data_path("sources_sinks.tsv")
        sources: dict[str, str] = {}
        sinks: dict[str, str] = {}
        for lineno, cols in _rows(path):
            if len(cols) != 3 or cols[0] not in ("source", "sink"):
                raise ValueError(f"{path}:{lineno}: expected source|sink, signature, category")
            (sources if cols[0] == "source" else sinks)[cols[1]] = cols[2]
        return cls(sources, sinks)

    @staticmethod
    def _lookup(table: dict[str, str], signature: str) -> str | None:
        if signature in table:
            return table[signature]
        return table.get(signature.split("(", 1)[0])

    def source_category(self, signature: str) -> str | None:
        return self._lookup(self.sources, signature)

    def sink_category(self, signature: str) -> str | None:
        return self._lookup(self.sinks, signature)


@dataclass
class Catalogs:
    senders: SenderCatalog
    compat: GetPutCompatTable
    sources_sinks: SourceSinkCatalog

    @classmethod
    def load(cls, senders=None, compat=None, sources_sinks=None) -> Catalogs:
        return cls(SenderCatalog.load(senders), GetPutCompatTable.load(compat),
                   SourceSinkCatalog.load(sources_sinks))


_DEFAULT: Catalogs | None = None


def default_catalogs() -> Catalogs:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = Catalogs.load()
    return _DEFAULT

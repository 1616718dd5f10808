"""Intra-component flows: the interchange format and a small fixture-scale taint tracker.

The tracker stands in for a real information-flow analyzer. It is
intra-procedural and path-insensitive on purpose; flows it misses can be
supplied through a flows file instead.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

from ..apk.app import DecodedApp, method_location, parse_location
from ..apk.smali import SmaliClass, SmaliMethod
from ..catalogs import BUNDLE, INTENT, Catalogs, api_signature, default_catalogs, extra_signature
from ..cfg import invoke_arguments, successors
from ..intentdb.rows import SENTINEL
from ..strings import DEFAULT_CAP, STRING, BUILDERS, StringEvaluator

LOG = logging.getLogger(__name__)

GET_EXTRA = "get_extra"
DIRECT_SOURCE = "direct_source"

RESULT_CALLBACKS = ("onActivityResult", "onServiceConnected")


class MissingFlows(FileNotFoundError):
    pass


@dataclass(frozen=True)
class FlowSource:
    kind: str
    signature: str
    key: str | None = None
    location: str | None = None

    def to_json(self) -> dict:
        d = {"kind": self.kind, "signature": self.signature}
        if self.key is not None:
            d["key"] = self.key
        if self.location is not None:
            d["location"] = self.location
        return d

    @classmethod
    def from_json(cls, data: dict) -> FlowSource:
        if data.get("kind") not in (GET_EXTRA, DIRECT_SOURCE):
            raise ValueError(f"unknown flow source kind {data.get('kind')!r}")
        return cls(data["kind"], data["signature"], data.get("key"), data.get("location"))


@dataclass(frozen=True)
class IntraFlow:
    app: str
    component: str
    source: FlowSource
    sink_signature: str
    sink_location: str
    via: tuple[str, ...] = ()

    @property
    def in_result_callback(self) -> bool:
        """Whether the flow starts in a callback that receives returned data."""
        for loc in (self.source.location, self.sink_location):
            if loc and parse_location(loc)[1] in RESULT_CALLBACKS:
                return True
        return False

    def to_json(self) -> dict:
        d = {"app": self.app, "component": self.component, "source": self.source.to_json(),
             "sink": {"signature": self.sink_signature, "location": self.sink_location}}
        if self.via:
            d["via"] = list(self.via)
        return d

    @classmethod
    def from_json(cls, data: dict) -> IntraFlow:
        return cls(data["app"], data["component"], FlowSource.from_json(data["source"]),
                   data["sink"]["signature"], data["sink"]["location"], tuple(data.get("via", ())))

    def sort_key(self):
        return json.dumps(self.to_json(), sort_keys=True)


def save_flows(flows: list[IntraFlow], path: str | Path) -> None:
    lines = [json.dumps(f.to_json(), sort_keys=True) for f in sorted(flows, key=IntraFlow.sort_key)]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def load_flows(path: str | Path) -> list[IntraFlow]:
    path = Path(path)
    if not path.is_file():
        raise MissingFlows(f"flows file {path} not found")
    flows = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if line.strip():
            try:
                flows.append(IntraFlow.from_json(json.loads(line)))
            except (KeyError, ValueError, TypeError) as err:
                raise ValueError(f"{path}:{lineno}: bad flow record: {err}") from err
    return flows


# -- fixture-scale taint tracking ----------------------------------------

_RESULT = "#result"


class _MethodTaint:
    def __init__(self, cls: SmaliClass, method: SmaliMethod, catalogs: Catalogs,
                 strings: StringEvaluator, fields: dict):
        self.cls = cls
        self.method = method
        self.catalogs = catalogs
        self.strings = strings
        self.fields = fields
        self.sinks: set[tuple] = set()

    def labels_for_invoke(self, i: int, state: dict) -> frozenset:
        ins = self.method.instructions[i]
        ref = ins.method
        args = invoke_arguments(ins)
        api = api_signature(ref)
        ss = self.catalogs.sources_sinks
        loc = method_location(self.cls, self.method, i)
        if ss.sink_category(api) is not None:
            for r in args:
                for label in state.get(r, ()):
                    self.sinks.add((label, api, loc))
        if ss.source_category(api) is not None:
            return frozenset({(DIRECT_SOURCE, api, None, loc)})
        sig = extra_signature(ref)
        if ref.owner in (INTENT, BUNDLE) and self.catalogs.compat.is_get(sig):
            key = self.strings.value_of(self.method, i, args[1])
            keys = key.sorted() if key.resolved else [SENTINEL]
            return frozenset((GET_EXTRA, sig, k, loc) for k in keys)
        if ref.owner == STRING or ref.owner in BUILDERS or \
                (ref.name == "valueOf" and ref.owner.startswith("Ljava/lang/")):
            out = frozenset().union(*(state.get(r, frozenset()) for r in args))
            if ref.owner in BUILDERS and args and ref.name in ("append", "<init>", "insert"):
                state[args[0]] = out
            return out
        return frozenset()

    def transfer(self, i: int, state: dict) -> dict:
        ins = self.method.instructions[i]
        state = dict(state)
        result = state.pop(_RESULT, frozenset())
        op = ins.opcode
        if ins.is_invoke:
            state[_RESULT] = self.labels_for_invoke(i, state)
            return state
        dst = ins.defined_register()
        if op.startswith("move-result"):
            state[dst] = result
        elif op.startswith(("iput", "sput")) and ins.field is not None:
            key = (ins.field.owner, ins.field.name)
            self.fields[key] = self.fields.get(key, frozenset()) | state.get(ins.registers[0], frozenset())
        elif op.startswith("aput"):
            arr = ins.registers[1]
            state[arr] = state.get(arr, frozenset()) | state.get(ins.registers[0], frozenset())
        elif dst is None:
            pass
        elif op.startswith(("iget", "sget")) and ins.field is not None:
            state[dst] = self.fields.get((ins.field.owner, ins.field.name), frozenset())
        elif op.startswith("aget"):
            state[dst] = state.get(ins.registers[1], frozenset())
        elif op.startswith("move"):
            state[dst] = state.get(ins.registers[1], frozenset())
        else:
            state[dst] = frozenset()
        return {k: v for k, v in state.items() if v}

    def run(self) -> None:
        n = len(self.method.instructions)
        if n == 0:
            return
        succ = successors(self.method)
        inputs: list[dict | None] = [None] * n
        inputs[0] = {}
        work = [0]
        while work:
            i = work.pop()
            out = self.transfer(i, inputs[i])
            for j in succ[i]:
                cur = inputs[j]
                merged = dict(cur) if cur is not None else {}
                changed = cur is None
                for k, v in out.items():
                    if not v <= merged.get(k, frozenset()):
                        merged[k] = merged.get(k, frozenset()) | v
                        changed = True
                if changed:
                    inputs[j] = merged
                    work.append(j)


def derive_fixture_flows(app: DecodedApp, catalogs: Catalogs | None = None,
                         cap: int = DEFAULT_CAP) -> list[IntraFlow]:
    """Source-to-sink flows inside each method of ``app``.

    Taint starts at extra getters and cataloged source calls and moves through
    registers, string operations and fields of the same class.
    """
    catalogs = catalogs or default_catalogs()
    flows: set[IntraFlow] = set()
    for cls in sorted(app.classes, key=lambda c: c.class_name):
        decl = app.component_for_class(cls.class_name)
        component = decl.name if decl is not None else cls.class_name.split("$", 1)[0]
        strings = StringEvaluator(cls, app, cap=cap)
        fields: dict = {}
        # Field taint crosses methods, so repeat until the field map settles.
        for _ in range(len(cls.methods) + 1):
            snapshot = dict(fields)
            found = []
            for method in cls.methods:
                t = _MethodTaint(cls, method, catalogs, strings, fields)
                t.run()
                found.append(t.sinks)
            if fields == snapshot:
                break
        for sinks in found:
            for (kind, sig, key, src_loc), sink_api, sink_loc in sinks:
                flows.add(IntraFlow(app.package_name, component, FlowSource(kind, sig, key, src_loc),
                                    sink_api, sink_loc))
    return sorted(flows, key=IntraFlow.sort_key)

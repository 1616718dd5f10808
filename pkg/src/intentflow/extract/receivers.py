"""Runtime-registered receivers and result-channel endpoints."""

from __future__ import annotations

from collections import Counter

from ..apk.app import DecodedApp, method_location
from ..apk.manifest import DynamicRegistration, IntentFilterDecl
from ..apk.smali import SmaliClass, SmaliMethod, java_name
from ..catalogs import BUNDLE, INTENT, Catalogs, default_catalogs, extra_signature
from ..cfg import ENTRY, invoke_arguments, reaching_events
from ..strings import DEFAULT_CAP
from .intents import AppExtractor, ClassAnalysis, PutEvent
from .model import ResultChannelDecl

INTENT_FILTER = "Landroid/content/IntentFilter;"
RECEIVER = "Landroid/content/BroadcastReceiver;"

SET_RESULT = "set_result"
ON_ACTIVITY_RESULT = "on_activity_result"
ON_BIND = "on_bind"
ON_SERVICE_CONNECTED = "on_service_connected"


def _filter_actions(analysis: ClassAnalysis, method: SmaliMethod, index: int, reg: str,
                    active: frozenset = frozenset()) -> set[str | None]:
    """Actions added to the IntentFilter in ``reg`` before ``index``; None marks an unresolved one."""
    key = (id(method), index, reg)
    if key in active:
        return set()
    active = active | {key}

    def is_event(_i, ins):
        if ins.defined_register() == reg:
            return True
        return ins.is_invoke and ins.method.owner == INTENT_FILTER and ins.registers[:1] == (reg,) \
            and ins.method.name in ("<init>", "addAction")

    actions: set[str | None] = set()
    for e in reaching_events(method, index, is_event):
        if e == ENTRY:
            actions.add(None)
            continue
        ins = method.instructions[e]
        if ins.is_invoke:
            args = invoke_arguments(ins)
            if ins.method.name == "addAction":
                actions |= _filter_actions(analysis, method, e, reg, active)
            if ins.method.params[:1] == ("Ljava/lang/String;",):
                v = analysis.string(method, e, args[1])
                actions |= set(v.candidates) if v.resolved else {None}
            elif ins.method.params[:1] == (INTENT_FILTER,):
                actions |= _filter_actions(analysis, method, e, args[1], active)
        elif ins.opcode.startswith("move-object"):
            actions |= _filter_actions(analysis, method, e, ins.registers[1], active)
        elif ins.opcode != "new-instance":
            actions.add(None)
    return actions


def _receiver_class(cls: SmaliClass, method: SmaliMethod, index: int, reg: str) -> str | None:
    """Concrete receiver class for ``reg``: the new-instance reaching it, if unique."""
    names = set()
    for e in reaching_events(method, index, lambda _i, ins: ins.defined_register() == reg):
        if e == ENTRY:
            if reg == "p0":
                names.add(cls.class_name)
            continue
        ins = method.instructions[e]
        if ins.opcode == "new-instance":
            names.add(java_name(ins.literal))
        elif ins.opcode.startswith("move-object"):
            n = _receiver_class(cls, method, e, ins.registers[1])
            if n:
                names.add(n)
        elif ins.opcode.startswith(("iget", "sget")) and ins.field is not None:
            if ins.field.type.startswith("L") and ins.field.type != RECEIVER:
                names.add(java_name(ins.field.type))
    return names.pop() if len(names) == 1 else None


def find_dynamic_receivers(app: DecodedApp, catalogs: Catalogs | None = None,
                           cap: int = DEFAULT_CAP) -> list[IntentFilterDecl]:
    """One dynamic filter per ``registerReceiver`` call, in code order."""
    catalogs = catalogs or default_catalogs()
    out = []
    for cls in sorted(app.classes, key=lambda c: c.class_name):
        analysis = None
        for method in cls.methods:
            for i, ins in enumerate(method.instructions):
                if not (ins.is_invoke and ins.method.name == "registerReceiver"
                        and ins.method.params[:2] == (RECEIVER, INTENT_FILTER)):
                    continue
                analysis = analysis or ClassAnalysis(app, cls, catalogs, cap)
                args = invoke_arguments(ins)
                receiver = _receiver_class(cls, method, i, args[1]) or f"{cls.class_name}$<dynamic@{i}>"
                actions = _filter_actions(analysis, method, i, args[2]) or {None}
                reg = DynamicRegistration(cls.class_name, f"{method.name}{method.proto}", i, receiver)
                out.append(IntentFilterDecl(frozenset(actions), frozenset(), reg))
    return out


def _outer(name: str) -> str:
    return name.split("$", 1)[0]


def _gets_in(analysis: ClassAnalysis, method: SmaliMethod, catalogs: Catalogs):
    gets = []
    for i, ins in enumerate(method.instructions):
        if ins.is_invoke and ins.method.owner in (INTENT, BUNDLE):
            sig = extra_signature(ins.method)
            if catalogs.compat.is_get(sig):
                gets.append((sig, analysis.string(method, i, invoke_arguments(ins)[1])))
    return tuple(gets)


def extract_result_channels(app: DecodedApp, catalogs: Catalogs | None = None, cap: int = DEFAULT_CAP,
                            extractor: AppExtractor | None = None) -> list[ResultChannelDecl]:
    extractor = extractor or AppExtractor(app, catalogs, cap)
    catalogs = extractor.catalogs
    out: list[ResultChannelDecl] = []
    for cls in sorted(app.classes, key=lambda c: c.class_name):
        analysis = extractor.analysis(cls)
        component = _outer(cls.class_name)
        for method in cls.methods:
            loc0 = method_location(cls, method, 0)
            if method.name == "onActivityResult" and method.params[-1:] == (INTENT,):
                out.append(ResultChannelDecl(ON_ACTIVITY_RESULT, component, loc0,
                                             gets=_gets_in(analysis, method, catalogs)))
            elif method.name == "onServiceConnected":
                out.append(ResultChannelDecl(ON_SERVICE_CONNECTED, component, loc0,
                                             gets=_gets_in(analysis, method, catalogs)))
            elif method.name == "onBind" and method.params == (INTENT,):
                puts = [PutEvent(method, i, None) for i, ins in enumerate(method.instructions)
                        if ins.is_invoke and ins.method.owner == BUNDLE and ins.method.name.startswith("put")]
                extras = tuple(analysis.extras(puts))
                if extras:
                    out.append(ResultChannelDecl(ON_BIND, component, loc0, extras=extras))
            for i, ins in enumerate(method.instructions):
                if ins.is_invoke and ins.method.name == "setResult" and ins.method.params[-1:] == (INTENT,):
                    reg = invoke_arguments(ins)[-1]
                    loc = method_location(cls, method, i)
                    for s in analysis.intent_states(method, i, reg):
                        out.append(ResultChannelDecl(SET_RESULT, component, loc, forwarded=s.received,
                                                     extras=tuple(analysis.extras(s.puts))))
    return out


def get_method_counts(app: DecodedApp, catalogs: Catalogs | None = None) -> Counter:
    """How often each typed extra getter is invoked in ``app``."""
    catalogs = catalogs or default_catalogs()
    counts: Counter = Counter()
    for _cls, method in app.methods():
        for ins in method.instructions:
            if ins.is_invoke and ins.method.owner in (INTENT, BUNDLE):
                sig = extra_signature(ins.method)
                if catalogs.compat.is_get(sig):
                    counts[sig] += 1
    return counts

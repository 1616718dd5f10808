"""Sender call sites and the intents that reach them.

Each sender call is traced backward to the intent construction(s) reaching
it. Along the way the mutators applied to the intent are replayed in program
order, so a later ``setComponent`` overrides what the constructor said.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

from ..apk.app import DecodedApp, method_location
from ..apk.smali import Instruction, SmaliClass, SmaliMethod, java_name
from ..catalogs import BUNDLE, INTENT, Catalogs, api_signature, default_catalogs, extra_signature
from ..cfg import ENTRY, invoke_arguments, reaching_events
from ..strings import (
    DEFAULT_CAP, DYNAMIC_INPUT, UNMODELED_OP, Frame, StringEvaluator, StringValue, join,
)
from .model import (
    ExtraPut, IntentOriginNotFound, IntentSpec, SenderSite, ValueDescriptor,
)

LOG = logging.getLogger(__name__)

COMPONENT_NAME = "Landroid/content/ComponentName;"
STRING_OWNERS = ("Ljava/lang/String;", "Ljava/lang/StringBuilder;", "Ljava/lang/StringBuffer;")

# Intent methods that leave target and action alone.
_PASSTHROUGH = {"addFlags", "setFlags", "addCategory", "removeCategory", "setData", "setType",
                "setDataAndType", "setIdentifier", "removeExtra", "replaceExtras"}


@dataclass(frozen=True)
class PutEvent:
    """A put-family call on a tracked intent or bundle, with its evaluation context."""

    method: SmaliMethod
    index: int
    frame: Frame | None

    def key(self):
        return (id(self.method), self.index, self.frame.key() if self.frame else None)


@dataclass(frozen=True)
class IntentState:
    origin: str | None
    explicit: bool = False
    target: StringValue | None = None
    action: StringValue | None = None
    puts: tuple[PutEvent, ...] = ()
    received: bool = False


def _join_opt(a: StringValue | None, b: StringValue | None, cap: int) -> StringValue | None:
    if a is None:
        return b
    if b is None:
        return a
    return a.union(b, cap)


def _merge_states(states: list[IntentState], cap: int) -> list[IntentState]:
    """Merge states sharing an origin; distinct origins stay separate."""
    grouped: dict[tuple, IntentState] = {}
    for s in states:
        k = (s.origin, s.explicit, s.received)
        prev = grouped.get(k)
        if prev is None:
            grouped[k] = s
            continue
        puts = prev.puts + tuple(p for p in s.puts if p.key() not in {q.key() for q in prev.puts})
        grouped[k] = replace(prev, target=_join_opt(prev.target, s.target, cap),
                             action=_join_opt(prev.action, s.action, cap), puts=puts)
    return sorted(grouped.values(), key=lambda s: (s.origin or "", s.explicit, s.received))


class ClassAnalysis:
    """Backward tracking of intents, bundles and extra values inside one class."""

    def __init__(self, app: DecodedApp | None, cls: SmaliClass, catalogs: Catalogs,
                 cap: int = DEFAULT_CAP):
        self.app = app
        self.cls = cls
        self.catalogs = catalogs
        self.cap = cap
        self.strings = StringEvaluator(cls, app, cap=cap)
        self._memo: dict = {}
        self._active: set = set()

    # -- helpers ---------------------------------------------------------
    def loc(self, method: SmaliMethod, index: int) -> str:
        return method_location(self.cls, method, index)

    def string(self, method, index, reg, frame=None) -> StringValue:
        return self.strings.value_of(method, index, reg, frame)

    def _local_callee(self, ins: Instruction) -> SmaliMethod | None:
        ref = ins.method
        if ref.owner_name != self.cls.class_name:
            return None
        callee = self.cls.find_method(ref.name, ref.proto)
        return callee if callee is not None and callee.instructions else None

    @staticmethod
    def _frame_depth(frame: Frame | None) -> int:
        depth = 0
        while frame is not None:
            depth += 1
            frame = frame.parent
        return depth

    def _callee_returns(self, method, i, frame):
        """(callee, return index, register, frame) for each object return of a same-class callee."""
        ins = method.instructions[i]
        callee = self._local_callee(ins)
        if callee is None or self._frame_depth(frame) >= 1:
            return []
        new_frame = Frame(method, i, tuple(invoke_arguments(ins)), frame)
        return [(callee, k, r.registers[0], new_frame) for k, r in enumerate(callee.instructions)
                if r.opcode == "return-object" and r.registers]

    def _param_source(self, method: SmaliMethod, reg: str, frame: Frame | None):
        """Caller register feeding parameter ``reg``, or None outside a callee frame."""
        if frame is None or not reg.startswith("p"):
            return None
        slot = int(reg[1:])
        slots = [] if method.is_static else [0]
        pos = 0 if method.is_static else 1
        for p in method.params:
            slots.append(pos)
            pos += 2 if p in ("J", "D") else 1
        if slot not in slots:
            return None
        return frame.method, frame.index, frame.arguments[slots.index(slot)], frame.parent

    def _field_writers(self, ins: Instruction):
        # Only writers in this class; others would need their own analysis context.
        fref = ins.field
        for m in self.cls.methods:
            for k, other in enumerate(m.instructions):
                if other.field is not None and other.opcode.startswith(("iput", "sput")) \
                        and other.field.name == fref.name and other.field.owner == fref.owner:
                    yield m, k, other.registers[0]

    # -- intents ---------------------------------------------------------
    def _intent_event(self, reg: str):
        def is_event(_i: int, ins: Instruction) -> bool:
            if ins.defined_register() == reg:
                return True
            return ins.is_invoke and ins.method.owner == INTENT and ins.registers[:1] == (reg,) \
                and not ins.opcode.startswith("invoke-static") and not ins.method.name.startswith("get")
        return is_event

    def intent_states(self, method: SmaliMethod, index: int, reg: str,
                      frame: Frame | None = None) -> list[IntentState]:
        """Intent states possibly held by ``reg`` just before ``index``."""
        key = ("intent", id(method), index, reg, frame.key() if frame else None)
        if key in self._memo:
            return self._memo[key]
        if key in self._active:
            return []
        self._active.add(key)
        try:
            states: list[IntentState] = []
            for e in reaching_events(method, index, self._intent_event(reg)):
                states.extend(self._intent_event_states(method, e, reg, frame))
            result = _merge_states(states, self.cap)
        finally:
            self._active.discard(key)
        self._memo[key] = result
        return result

    def _intent_event_states(self, method, e, reg, frame) -> list[IntentState]:
        if e == ENTRY:
            src = self._param_source(method, reg, frame)
            if src is not None:
                return self.intent_states(*src)
            if reg.startswith("p"):
                return [IntentState(None, received=True)]
            return []
        ins = method.instructions[e]
        op = ins.opcode
        if ins.is_invoke:
            return self._apply_mutator(method, e, ins, frame)
        if op == "new-instance":
            return [IntentState(self.loc(method, e))]
        if op.startswith("move-result"):
            if e == 0 or not method.instructions[e - 1].is_invoke:
                return []
            return self._intent_returned(method, e - 1, frame)
        if op.startswith("move-object"):
            return self.intent_states(method, e, ins.registers[1], frame)
        if op.startswith(("iget", "sget")) and ins.field is not None:
            out = []
            for m, k, r in self._field_writers(ins):
                out.extend(self.intent_states(m, k, r))
            return out
        return []

    def _intent_returned(self, method, i, frame) -> list[IntentState]:
        ins = method.instructions[i]
        ref = ins.method
        args = invoke_arguments(ins)
        if ref.name == "getIntent" and not ref.params:
            return [IntentState(self.loc(method, i), received=True)]
        if ref.owner == INTENT and ref.ret == INTENT:
            if ref.name in ("makeMainActivity", "makeRestartActivityTask"):
                target = self.component_name(method, i, args[0], frame)
                return [IntentState(self.loc(method, i), explicit=True, target=target)]
            if ref.name == "createChooser":
                return self.intent_states(method, i, args[0], frame)
            if not ins.opcode.startswith("invoke-static"):
                # Builder-style mutators return their receiver.
                return self._apply_mutator(method, i, ins, frame)
        if ref.ret == INTENT:
            out = []
            for callee, k, r, f in self._callee_returns(method, i, frame):
                out.extend(self.intent_states(callee, k, r, f))
            return out
        return []

    def _apply_mutator(self, method, i, ins, frame) -> list[IntentState]:
        ref = ins.method
        args = invoke_arguments(ins)
        name = ref.name
        if name == "<init>":
            return self._construct(method, i, ref.params, args, frame)
        before = self.intent_states(method, i, args[0], frame)
        out = []
        for s in before:
            if name == "setAction":
                s = replace(s, action=self.string(method, i, args[1], frame))
            elif name == "setClass":
                s = replace(s, explicit=True, target=self.string(method, i, args[2], frame))
            elif name == "setClassName":
                s = replace(s, explicit=True, target=self.string(method, i, args[2], frame))
            elif name == "setComponent":
                s = replace(s, explicit=True, target=self.component_name(method, i, args[1], frame))
            elif name == "setPackage":
                s = replace(s, explicit=True, target=self.string(method, i, args[1], frame))
            elif name == "setSelector":
                for sel in self.intent_states(method, i, args[1], frame) or [IntentState(None)]:
                    if sel.explicit:
                        out.append(replace(s, explicit=True, target=sel.target))
                    else:
                        out.append(replace(s, action=_join_opt(s.action, sel.action, self.cap)))
                continue
            elif name.startswith("put") or name.startswith("fillIn"):
                s = replace(s, puts=s.puts + (PutEvent(method, i, frame),))
            elif name not in _PASSTHROUGH:
                LOG.debug("unmodeled Intent.%s at %s", name, self.loc(method, i))
            out.append(s)
        return out

    def _construct(self, method, i, params, args, frame) -> list[IntentState]:
        origin = self.loc(method, i)
        simple = tuple(java_name(p).rsplit(".", 1)[-1] for p in params)
        if simple == ("Intent",):
            return self.intent_states(method, i, args[1], frame)
        if simple and simple[0] == "String":
            action = self.string(method, i, args[1], frame)
            if len(simple) == 4:
                return [IntentState(origin, explicit=True, target=self.string(method, i, args[4], frame),
                                    action=action)]
            return [IntentState(origin, action=action)]
        if simple == ("Context", "Class"):
            return [IntentState(origin, explicit=True, target=self.string(method, i, args[2], frame))]
        return [IntentState(origin)]

    def component_name(self, method, index, reg, frame=None) -> StringValue:
        """Class name carried by the ComponentName in ``reg``."""

        def is_event(_i, ins):
            if ins.defined_register() == reg:
                return True
            return ins.is_invoke and ins.method.owner == COMPONENT_NAME and \
                ins.method.name == "<init>" and ins.registers[:1] == (reg,)

        vals = []
        for e in reaching_events(method, index, is_event):
            if e == ENTRY:
                vals.append(StringValue.unresolved(DYNAMIC_INPUT))
                continue
            ins = method.instructions[e]
            if ins.is_invoke:
                args = invoke_arguments(ins)
                vals.append(self.string(method, e, args[2], frame))
            elif ins.opcode.startswith("move-object"):
                vals.append(self.component_name(method, e, ins.registers[1], frame))
            elif ins.opcode == "new-instance":
                continue
            else:
                vals.append(StringValue.unresolved(UNMODELED_OP))
        if not vals:
            return StringValue.unresolved(UNMODELED_OP)
        return join(vals, self.cap)

    # -- bundles ---------------------------------------------------------
    def _bundle_event(self, reg: str):
        def is_event(_i, ins):
            if ins.defined_register() == reg:
                return True
            return ins.is_invoke and ins.method.owner == BUNDLE and ins.registers[:1] == (reg,) \
                and (ins.method.name.startswith("put") or ins.method.name == "<init>")
        return is_event

    def bundle_puts(self, method, index, reg, frame=None) -> list[PutEvent]:
        key = ("bundle", id(method), index, reg, frame.key() if frame else None)
        if key in self._memo:
            return self._memo[key]
        if key in self._active:
            return []
        self._active.add(key)
        try:
            puts: dict = {}
            for e in reaching_events(method, index, self._bundle_event(reg)):
                for p in self._bundle_event_puts(method, e, reg, frame):
                    puts.setdefault(p.key(), p)
            result = list(puts.values())
        finally:
            self._active.discard(key)
        self._memo[key] = result
        return result

    def _bundle_event_puts(self, method, e, reg, frame) -> list[PutEvent]:
        if e == ENTRY:
            src = self._param_source(method, reg, frame)
            return self.bundle_puts(*src) if src else []
        ins = method.instructions[e]
        if ins.is_invoke:
            if ins.method.name == "<init>":
                if ins.method.params == (BUNDLE,):
                    return self.bundle_puts(method, e, invoke_arguments(ins)[1], frame)
                return []
            return self.bundle_puts(method, e, reg, frame) + [PutEvent(method, e, frame)]
        if ins.opcode.startswith("move-object"):
            return self.bundle_puts(method, e, ins.registers[1], frame)
        if ins.opcode.startswith(("iget", "sget")) and ins.field is not None:
            out = []
            for m, k, r in self._field_writers(ins):
                out.extend(self.bundle_puts(m, k, r))
            return out
        if ins.opcode.startswith("move-result") and e > 0:
            prev = method.instructions[e - 1]
            if prev.is_invoke and prev.method.ret == BUNDLE:
                out = []
                for callee, k, r, f in self._callee_returns(method, e - 1, frame):
                    out.extend(self.bundle_puts(callee, k, r, f))
                return out
        return []

    # -- extras ----------------------------------------------------------
    def extras(self, puts: tuple[PutEvent, ...] | list[PutEvent]) -> list[ExtraPut]:
        out: list[ExtraPut] = []
        for p in puts:
            out.extend(self._extras_of(p))
        seen = set()
        unique = []
        for x in out:
            k = (x, x.location)
            if k not in seen:
                seen.add(k)
                unique.append(x)
        return unique

    def _extras_of(self, p: PutEvent) -> list[ExtraPut]:
        method, i, frame = p.method, p.index, p.frame
        ins = method.instructions[i]
        ref = ins.method
        args = invoke_arguments(ins)
        sig = extra_signature(ref)
        loc = self.loc(method, i)
        if ref.name == "putExtras" and ref.params == (BUNDLE,):
            return self.extras(self.bundle_puts(method, i, args[1], frame))
        if ref.name in ("putExtras", "fillIn") and ref.params[:1] == (INTENT,):
            out = []
            for s in self.intent_states(method, i, args[1], frame):
                out.extend(self.extras(s.puts))
            return out
        if not self.catalogs.compat.is_put(sig) or len(args) < 3:
            LOG.debug("ignoring unrecognised put %s at %s", sig, loc)
            return []
        key = self.string(method, i, args[1], frame)
        value = self.classify(method, i, args[2], frame)
        return [ExtraPut(key, value, sig, loc)]

    # -- value classification -------------------------------------------
    def classify(self, method, index, reg, frame=None) -> ValueDescriptor:
        """Describe the value in ``reg`` before ``index``.

        When several definitions reach, the most informative one wins:
        a sensitive source, then a received extra, then unknown, then constants.
        """
        found = self._value_kinds(method, index, reg, frame)
        if not found:
            return ValueDescriptor.opaque(self.loc(method, index))
        rank = {"source_call": 0, "get_extra_ref": 1, "opaque": 2, "constant": 3}
        return min(found, key=lambda v: (rank[v.kind], v.sort_key()))

    def _value_kinds(self, method, index, reg, frame) -> list[ValueDescriptor]:
        key = ("value", id(method), index, reg, frame.key() if frame else None)
        if key in self._memo:
            return self._memo[key]
        if key in self._active:
            return []
        self._active.add(key)
        try:
            out: list[ValueDescriptor] = []
            for d in reaching_events(method, index, lambda _i, ins: ins.defined_register() == reg):
                out.extend(self._value_of_def(method, d, reg, frame))
        finally:
            self._active.discard(key)
        self._memo[key] = out
        return out

    def _value_of_def(self, method, d, reg, frame) -> list[ValueDescriptor]:
        if d == ENTRY:
            src = self._param_source(method, reg, frame)
            if src is not None:
                return self._value_kinds(*src)
            return [ValueDescriptor.opaque(self.loc(method, 0))]
        ins = method.instructions[d]
        op = ins.opcode
        if op.startswith("const-string"):
            return [ValueDescriptor.constant(ins.literal)]
        if op.startswith("const") and not ins.opaque:
            return [ValueDescriptor.constant(str(ins.literal) if op != "const-class" else java_name(ins.literal))]
        if op.startswith("move-result") and d > 0 and method.instructions[d - 1].is_invoke:
            return self._value_of_invoke(method, d - 1, frame)
        if op.startswith("move") and not op.startswith("move-result") and not ins.opaque:
            return self._value_kinds(method, d, ins.registers[1], frame)
        if op.startswith(("iget", "sget")) and ins.field is not None:
            out = []
            for m, k, r in self._field_writers(ins):
                out.extend(self._value_kinds(m, k, r, None))
            if out:
                return out
        return [ValueDescriptor.opaque(self.loc(method, d))]

    def _value_of_invoke(self, method, i, frame) -> list[ValueDescriptor]:
        ins = method.instructions[i]
        ref = ins.method
        args = invoke_arguments(ins)
        api = api_signature(ref)
        if self.catalogs.sources_sinks.source_category(api) is not None:
            return [ValueDescriptor.source_call(api)]
        sig = extra_signature(ref)
        if ref.owner in (INTENT, BUNDLE) and self.catalogs.compat.is_get(sig):
            return [ValueDescriptor.get_extra_ref(sig, self.string(method, i, args[1], frame))]
        if ref.owner in STRING_OWNERS or (ref.name == "valueOf" and ref.owner.startswith("Ljava/lang/")):
            return self._derived_value(method, i, ins, args, frame)
        if self._local_callee(ins) is not None:
            out = []
            for callee, k, r, f in self._callee_returns(method, i, frame):
                out.extend(self._value_kinds(callee, k, r, f))
            if out:
                return out
        return [ValueDescriptor.opaque(self.loc(method, i))]

    def _derived_value(self, method, i, ins, args, frame) -> list[ValueDescriptor]:
        """Values built by string operations inherit the most informative operand."""
        operands: list[ValueDescriptor] = []
        regs = list(args)
        ref = ins.method
        if ref.owner != STRING_OWNERS[0] and ref.name == "toString":
            operands.extend(self._builder_operands(method, i, args[0], frame))
            regs = []
        for r in regs:
            operands.extend(self._value_kinds(method, i, r, frame))
        tainted = [v for v in operands if v.kind in ("source_call", "get_extra_ref")]
        if tainted:
            return tainted
        text = self.strings._invoke_result(method, i, frame)
        if text.resolved and len(text.candidates) == 1:
            return [ValueDescriptor.constant(text.single())]
        return [ValueDescriptor.opaque(self.loc(method, i))]

    def _builder_operands(self, method, index, reg, frame) -> list[ValueDescriptor]:
        out: list[ValueDescriptor] = []
        for e in reaching_events(method, index, self.strings._builder_event(reg)):
            if e == ENTRY:
                continue
            ins = method.instructions[e]
            if ins.is_invoke:
                args = invoke_arguments(ins)
                for r in args[1:]:
                    out.extend(self._value_kinds(method, e, r, frame))
                out.extend(self._builder_operands(method, e, reg, frame))
            elif ins.opcode.startswith("move-result") and e > 0:
                out.extend(self._builder_operands(method, e - 1, method.instructions[e - 1].registers[0], frame))
        return out


# -- public operations -----------------------------------------------------

def find_sender_sites(app: DecodedApp, catalogs: Catalogs | None = None,
                      cap: int = DEFAULT_CAP) -> list[SenderSite]:
    catalogs = catalogs or default_catalogs()
    sites = []
    for cls in sorted(app.classes, key=lambda c: c.class_name):
        analysis = None
        for method in cls.methods:
            for i, ins in enumerate(method.instructions):
                if not ins.is_invoke:
                    continue
                api = catalogs.senders.match(ins.method)
                if api is None:
                    continue
                code = None
                if api.request_code_param is not None:
                    analysis = analysis or ClassAnalysis(app, cls, catalogs, cap)
                    reg = invoke_arguments(ins)[1 + api.request_code_param]
                    code = analysis.strings.int_value(method, i, reg)
                sites.append(SenderSite(cls.class_name, f"{method.name}{method.proto}", i,
                                        api.channel, str(api), code))
    return sites


def _site_method(app: DecodedApp, site: SenderSite) -> tuple[SmaliClass, SmaliMethod]:
    cls = app.find_class(site.class_name)
    name, _, proto = site.method.partition("(")
    method = cls.find_method(name, "(" + proto) if cls else None
    if method is None:
        raise LookupError(f"sender site {site.location} does not exist in {app.package_name}")
    return cls, method


def _intent_register(catalogs: Catalogs, ins: Instruction) -> str:
    api = catalogs.senders.match(ins.method)
    return invoke_arguments(ins)[1 + api.intent_param]


class AppExtractor:
    """Per-app extraction context; class analyses are created lazily and reused."""

    def __init__(self, app: DecodedApp, catalogs: Catalogs | None = None, cap: int = DEFAULT_CAP):
        self.app = app
        self.catalogs = catalogs or default_catalogs()
        self.cap = cap
        self._analyses: dict[str, ClassAnalysis] = {}

    def analysis(self, cls: SmaliClass) -> ClassAnalysis:
        a = self._analyses.get(cls.class_name)
        if a is None:
            a = self._analyses[cls.class_name] = ClassAnalysis(self.app, cls, self.catalogs, self.cap)
        return a

    def states_at(self, site: SenderSite) -> tuple[ClassAnalysis, list[IntentState]]:
        cls, method = _site_method(self.app, site)
        ins = method.instructions[site.index]
        analysis = self.analysis(cls)
        reg = _intent_register(self.catalogs, ins)
        return analysis, analysis.intent_states(method, site.index, reg)

    def backtrace(self, site: SenderSite) -> list[IntentSpec]:
        analysis, states = self.states_at(site)
        specs = []
        for s in states:
            extras = tuple(analysis.extras(s.puts))
            if s.received:
                specs.append(IntentSpec(site, s.origin, False, action=StringValue.unresolved(DYNAMIC_INPUT),
                                        extras=extras, forwarded=True))
            elif s.explicit:
                specs.append(IntentSpec(site, s.origin, True, target_component=s.target, extras=extras))
            else:
                action = s.action if s.action is not None else StringValue.unresolved(UNMODELED_OP)
                specs.append(IntentSpec(site, s.origin, False, action=action, extras=extras))
        if not specs:
            fallback = IntentSpec(site, None, False, action=StringValue.unresolved(UNMODELED_OP))
            raise IntentOriginNotFound(site, fallback)
        return specs


def backtrace_intent(app: DecodedApp, site: SenderSite, catalogs: Catalogs | None = None,
                     cap: int = DEFAULT_CAP) -> list[IntentSpec]:
    """Intent specs reaching ``site``; one per reaching construction.

    Raises IntentOriginNotFound (carrying an unresolved fallback spec) when no
    construction is visible in the method or its same-class callees.
    """
    return AppExtractor(app, catalogs, cap).backtrace(site)


def collect_extras(app: DecodedApp, site: SenderSite, spec: IntentSpec,
                   catalogs: Catalogs | None = None, cap: int = DEFAULT_CAP) -> list[ExtraPut]:
    """Extras put on the intent built at ``spec.origin`` before it reaches ``site``."""
    ex = AppExtractor(app, catalogs, cap)
    analysis, states = ex.states_at(site)
    puts = [p for s in states if s.origin == spec.origin for p in s.puts]
    return analysis.extras(puts)


def extract_app(app: DecodedApp, catalogs: Catalogs | None = None, cap: int = DEFAULT_CAP):
    """All sender sites of ``app`` with their specs; sites without an origin keep their fallback."""
    ex = AppExtractor(app, catalogs, cap)
    out: list[tuple[SenderSite, list[IntentSpec]]] = []
    for site in find_sender_sites(app, ex.catalogs, cap):
        try:
            specs = ex.backtrace(site)
        except IntentOriginNotFound as err:
            LOG.warning("%s", err)
            specs = [err.fallback]
        out.append((site, specs))
    return ex, out

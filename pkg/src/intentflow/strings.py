"""Partial evaluation of string and list values held in Smali registers.

A register's value is a finite set of candidate strings, or an explicit
unresolved marker carrying the reason it could not be determined.
"""

from __future__ import annotations

import itertools
import logging
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .apk.smali import Instruction, SmaliClass, SmaliMethod, java_name
from .cfg import ENTRY, defines, invoke_arguments, reaching_events

LOG = logging.getLogger(__name__)

DEFAULT_CAP = 16

DYNAMIC_INPUT = "dynamic_input"
UNMODELED_OP = "unmodeled_op"
BUDGET_EXCEEDED = "budget_exceeded"

STRING = "Ljava/lang/String;"
BUILDERS = ("Ljava/lang/StringBuilder;", "Ljava/lang/StringBuffer;")
LISTS = ("Ljava/util/LinkedList;", "Ljava/util/ArrayList;", "Ljava/util/List;")


class UnmodeledOp(ValueError):
    pass


@dataclass(frozen=True)
class StringValue:
    candidates: frozenset[str] | None = None
    reason: str | None = None

    def __post_init__(self) -> None:
        if (self.candidates is None) == (self.reason is None):
            raise ValueError("StringValue is either resolved or unresolved")
        if self.candidates is not None and not self.candidates:
            raise ValueError("resolved StringValue needs at least one candidate")

    @classmethod
    def of(cls, values: Iterable[str], cap: int = DEFAULT_CAP) -> StringValue:
        vals = frozenset(values)
        if not vals:
            return cls(reason=UNMODELED_OP)
        if len(vals) > cap:
            return cls(reason=BUDGET_EXCEEDED)
        return cls(candidates=vals)

    @classmethod
    def unresolved(cls, reason: str) -> StringValue:
        return cls(reason=reason)

    @property
    def resolved(self) -> bool:
        return self.candidates is not None

    def sorted(self) -> list[str]:
        return sorted(self.candidates or ())

    def single(self) -> str | None:
        if self.candidates is not None and len(self.candidates) == 1:
            return next(iter(self.candidates))
        return None

    def union(self, other: StringValue, cap: int = DEFAULT_CAP) -> StringValue:
        if not self.resolved:
            return self
        if not other.resolved:
            return other
        return StringValue.of(self.candidates | other.candidates, cap)

    def to_json(self):
        if self.resolved:
            return {"resolved": self.sorted()}
        return {"unresolved": self.reason}

    @classmethod
    def from_json(cls, data) -> StringValue:
        if "resolved" in data:
            return cls(candidates=frozenset(data["resolved"]))
        return cls(reason=data["unresolved"])

    def __str__(self) -> str:
        if self.resolved:
            return "{" + ", ".join(repr(c) for c in self.sorted()) + "}"
        return f"<unresolved:{self.reason}>"


def join(values: Iterable[StringValue], cap: int = DEFAULT_CAP) -> StringValue:
    """Path-insensitive join: union of candidates, unresolved absorbs."""
    acc: StringValue | None = None
    for v in values:
        acc = v if acc is None else acc.union(v, cap)
    return acc if acc is not None else StringValue.unresolved(UNMODELED_OP)


@dataclass(frozen=True)
class ListModel:
    slots: dict[int, StringValue] = field(default_factory=dict)
    complete: bool = True

    def __hash__(self) -> int:
        return hash((tuple(sorted(self.slots.items(), key=lambda kv: kv[0])), self.complete))


def eval_list_get(lst: ListModel, index: StringValue | int) -> StringValue:
    if isinstance(index, StringValue):
        one = index.single()
        if one is None or not re.fullmatch(r"-?\d+", one):
            return StringValue.unresolved(UNMODELED_OP if index.resolved else index.reason)
        index = int(one)
    if not lst.complete or index not in lst.slots:
        return StringValue.unresolved(UNMODELED_OP)
    return lst.slots[index]


def _java_format(fmt: str, args: Sequence[str]) -> str:
    out, pos = [], 0
    it = iter(args)
    for m in re.finditer(r"%[sd%]|%", fmt):
        out.append(fmt[pos : m.start()])
        spec = m.group()
        if spec == "%%":
            out.append("%")
        elif spec in ("%s", "%d"):
            try:
                arg = next(it)
            except StopIteration:
                raise UnmodeledOp("format: missing argument")
            if spec == "%d" and not re.fullmatch(r"-?\d+", arg):
                raise UnmodeledOp("format: %d with non-integer")
            out.append(arg)
        else:
            raise UnmodeledOp("format: unsupported specifier")
        pos = m.end()
    out.append(fmt[pos:])
    return "".join(out)


def _substring(s: str, *idx: str) -> str:
    begin = int(idx[0])
    end = int(idx[1]) if len(idx) > 1 else len(s)
    if not 0 <= begin <= end <= len(s):
        raise IndexError("substring out of range")
    return s[begin:end]


def _replace(s: str, old: str, new: str) -> str:
    return s.replace(old, new)


_CONCRETE = {
    "concat": lambda s, o: s + o,
    "+": lambda s, o: s + o,
    "append": lambda s, o: s + o,
    "substring": _substring,
    "toLowerCase": lambda s: s.lower(),
    "toUpperCase": lambda s: s.upper(),
    "trim": lambda s: s.strip(" \t\n\r\x0b\x0c\x00"),
    "replace": _replace,
    "valueOf": lambda s: s,
    "toString": lambda s: s,
    "intern": lambda s: s,
    "format": lambda s, *a: _java_format(s, a),
}

MODELED_OPS = frozenset(_CONCRETE)


def model_string_op(
    op_name: str, receiver: StringValue, args: Sequence[StringValue], cap: int = DEFAULT_CAP
) -> StringValue:
    """Apply a modeled String operation over the Cartesian product of candidates."""
    if op_name not in _CONCRETE:
        raise UnmodeledOp(op_name)
    for v in (receiver, *args):
        if not v.resolved:
            return v
    fn = _CONCRETE[op_name]
    results: set[str] = set()
    for combo in itertools.product(receiver.sorted(), *(a.sorted() for a in args)):
        try:
            results.add(fn(*combo))
        except (IndexError, ValueError, UnmodeledOp):
            continue
        if len(results) > cap:
            return StringValue.unresolved(BUDGET_EXCEEDED)
    if not results:
        return StringValue.unresolved(UNMODELED_OP)
    return StringValue.of(results, cap)


# Invocations whose results come from outside the program.
_DYNAMIC_OWNERS = {
    "Landroid/content/Intent;",
    "Landroid/os/Bundle;",
    "Landroid/content/SharedPreferences;",
    "Ljava/io/BufferedReader;",
    "Ljava/io/InputStream;",
    "Ljava/io/FileInputStream;",
    "Ljava/io/InputStreamReader;",
    "Ljava/util/Scanner;",
    "Landroid/widget/EditText;",
    "Landroid/widget/TextView;",
    "Ljava/lang/System;",
}


@dataclass(frozen=True)
class Frame:
    """Call-site context used when evaluating inside a same-class callee."""

    method: SmaliMethod
    index: int
    arguments: tuple[str, ...]
    parent: Frame | None = None

    def key(self):
        return (id(self.method), self.index, self.parent.key() if self.parent else None)


class StringEvaluator:
    """Backward partial evaluator over one class (and optionally its app).

    Values are computed on demand from the definitions reaching a use and
    memoized per (method, index, register, frame).
    """

    def __init__(self, cls: SmaliClass | None = None, app=None, cap: int = DEFAULT_CAP,
                 budget: int = 20000, callee_depth: int = 1):
        self.cls = cls
        self.app = app
        self.cap = cap
        self.budget = budget
        self.callee_depth = callee_depth
        self._memo: dict = {}
        self._active: set = set()
        self._steps = 0

    # -- public ----------------------------------------------------------
    def value_of(self, method: SmaliMethod, index: int, reg: str, frame: Frame | None = None) -> StringValue:
        """Value of ``reg`` just before instruction ``index`` executes."""
        key = ("str", id(method), index, reg, frame.key() if frame else None)
        if key in self._memo:
            return self._memo[key]
        if key in self._active:
            return StringValue.unresolved(BUDGET_EXCEEDED)
        self._steps += 1
        if self._steps > self.budget:
            return StringValue.unresolved(BUDGET_EXCEEDED)
        self._active.add(key)
        try:
            defs = reaching_events(method, index, defines(reg))
            result = join((self._eval_def(method, d, reg, frame) for d in defs), self.cap)
        finally:
            self._active.discard(key)
        self._memo[key] = result
        return result

    def int_value(self, method: SmaliMethod, index: int, reg: str, frame: Frame | None = None) -> int | None:
        v = self.value_of(method, index, reg, frame).single()
        if v is not None and re.fullmatch(r"-?\d+", v):
            return int(v)
        return None

    def list_of(self, method: SmaliMethod, index: int, reg: str, frame: Frame | None = None) -> ListModel:
        key = ("list", id(method), index, reg, frame.key() if frame else None)
        if key in self._memo:
            return self._memo[key]
        if key in self._active:
            return ListModel({}, False)
        self._active.add(key)
        try:
            events = reaching_events(method, index, self._list_event(reg))
            models = [self._list_event_value(method, e, reg, frame) for e in events]
        finally:
            self._active.discard(key)
        result = _merge_lists(models, self.cap)
        self._memo[key] = result
        return result

    # -- definitions -----------------------------------------------------
    def _eval_def(self, method: SmaliMethod, d: int, reg: str, frame: Frame | None) -> StringValue:
        if d == ENTRY:
            return self._parameter(method, reg, frame)
        ins = method.instructions[d]
        op = ins.opcode
        if ins.opaque:
            return StringValue.unresolved(UNMODELED_OP)
        if op.startswith("const-string"):
            return StringValue.of([ins.literal], self.cap)
        if op == "const-class":
            return StringValue.of([java_name(ins.literal)], self.cap)
        if op.startswith("const"):
            return StringValue.of([str(ins.literal)], self.cap)
        if op.startswith("move-result"):
            if d == 0 or not method.instructions[d - 1].is_invoke:
                return StringValue.unresolved(UNMODELED_OP)
            return self._invoke_result(method, d - 1, frame)
        if op.startswith("move"):
            return self.value_of(method, d, ins.registers[1], frame)
        if op.startswith(("iget", "sget")):
            return self._field_value(ins)
        return StringValue.unresolved(UNMODELED_OP)

    def _parameter(self, method: SmaliMethod, reg: str, frame: Frame | None) -> StringValue:
        if frame is None or not reg.startswith("p"):
            return StringValue.unresolved(DYNAMIC_INPUT)
        slot = int(reg[1:])
        # Map the parameter slot back to the caller's argument register.
        slots = [] if method.is_static else [0]
        pos = 0 if method.is_static else 1
        for p in method.params:
            slots.append(pos)
            pos += 2 if p in ("J", "D") else 1
        if slot not in slots:
            return StringValue.unresolved(UNMODELED_OP)
        arg_reg = frame.arguments[slots.index(slot)]
        return self.value_of(frame.method, frame.index, arg_reg, frame.parent)

    def _field_value(self, ins: Instruction) -> StringValue:
        fref = ins.field
        writers = []
        classes = self.app.classes if (self.app is not None and ins.opcode.startswith("sget")) else (
            [self.cls] if self.cls is not None else [])
        for cls in classes:
            for m in cls.methods:
                for i, other in enumerate(m.instructions):
                    if other.field is not None and other.opcode.startswith(("iput", "sput")) \
                            and other.field.name == fref.name and other.field.owner == fref.owner:
                        writers.append(self.value_of(m, i, other.registers[0]))
        if not writers:
            return StringValue.unresolved(UNMODELED_OP)
        return join(writers, self.cap)

    # -- invocations -----------------------------------------------------
    def _invoke_result(self, method: SmaliMethod, i: int, frame: Frame | None) -> StringValue:
        ins = method.instructions[i]
        ref = ins.method
        args = invoke_arguments(ins)
        name = ref.name
        if ref.owner == STRING or (ref.owner in BUILDERS and name == "toString"):
            if ref.owner in BUILDERS:
                return self.builder_value(method, i, args[0], frame)
            return self._string_method(method, i, ins, args, frame)
        if ref.owner in BUILDERS and name in ("append",):
            return self.builder_after(method, i, frame)
        if ref.owner == "Ljava/lang/Class;" and name in ("getName", "getCanonicalName"):
            return self.value_of(method, i, args[0], frame)
        if ref.owner == "Ljava/lang/Class;" and name == "getSimpleName":
            v = self.value_of(method, i, args[0], frame)
            return StringValue.of({c.rsplit(".", 1)[-1] for c in v.candidates}, self.cap) if v.resolved else v
        if name == "getPackageName" and not ref.params and self.app is not None:
            return StringValue.of([self.app.package_name], self.cap)
        if ref.owner == "Landroid/content/ComponentName;" and name == "getClassName":
            return StringValue.unresolved(UNMODELED_OP)
        if ref.owner in LISTS and name == "get" and ref.params == ("I",):
            lst = self.list_of(method, i, args[0], frame)
            return eval_list_get(lst, self.value_of(method, i, args[1], frame))
        if ref.owner in ("Ljava/lang/Integer;", "Ljava/lang/Long;") and name == "toString" and len(args) == 1:
            return self.value_of(method, i, args[0], frame)
        if self._is_local_callee(ref):
            return self._callee_returns(method, i, ins, args, frame)
        if ref.owner in _DYNAMIC_OWNERS or name in ("readLine", "nextLine", "getText"):
            return StringValue.unresolved(DYNAMIC_INPUT)
        return StringValue.unresolved(UNMODELED_OP)

    def _is_local_callee(self, ref) -> bool:
        return self.cls is not None and ref.owner_name == self.cls.class_name and \
            self.cls.find_method(ref.name, ref.proto) is not None

    def _callee_returns(self, method, i, ins, args, frame) -> StringValue:
        depth = 0
        f = frame
        while f is not None:
            depth += 1
            f = f.parent
        if depth >= self.callee_depth:
            return StringValue.unresolved(BUDGET_EXCEEDED)
        callee = self.cls.find_method(ins.method.name, ins.method.proto)
        if not callee.instructions:
            return StringValue.unresolved(UNMODELED_OP)
        new_frame = Frame(method, i, tuple(args), frame)
        rets = [(k, r.registers[0]) for k, r in enumerate(callee.instructions)
                if r.opcode == "return-object" and r.registers]
        if not rets:
            return StringValue.unresolved(UNMODELED_OP)
        return join((self.value_of(callee, k, reg, new_frame) for k, reg in rets), self.cap)

    def _string_method(self, method, i, ins, args, frame) -> StringValue:
        ref = ins.method
        name = ref.name
        if name == "valueOf":
            p = ref.params[0] if ref.params else ""
            if p == "C":
                v = self.value_of(method, i, args[0], frame)
                return _map(v, lambda s: chr(int(s)), self.cap)
            if p == "Z":
                v = self.value_of(method, i, args[0], frame)
                return _map(v, lambda s: "true" if s not in ("0", "false") else "false", self.cap)
            return self.value_of(method, i, args[0], frame)
        if name == "format":
            fmt = self.value_of(method, i, args[0], frame)
            elems = self._array_elements(method, i, args[-1], frame)
            if elems is None:
                return StringValue.unresolved(UNMODELED_OP)
            return self._apply("format", fmt, elems)
        if name == "replace":
            recv = self.value_of(method, i, args[0], frame)
            a = self.value_of(method, i, args[1], frame)
            b = self.value_of(method, i, args[2], frame)
            if ref.params == ("C", "C"):
                a, b = _map(a, lambda s: chr(int(s)), self.cap), _map(b, lambda s: chr(int(s)), self.cap)
            return self._apply("replace", recv, [a, b])
        if name in _CONCRETE:
            recv = self.value_of(method, i, args[0], frame)
            rest = [self.value_of(method, i, r, frame) for r in args[1:]]
            return self._apply(name, recv, rest)
        return StringValue.unresolved(UNMODELED_OP)

    def _apply(self, op, recv, args) -> StringValue:
        try:
            return model_string_op(op, recv, args, self.cap)
        except UnmodeledOp:
            return StringValue.unresolved(UNMODELED_OP)

    def _array_elements(self, method, i, reg, frame) -> list[StringValue] | None:
        """Elements of a freshly built Object[] passed as varargs."""
        defs = reaching_events(method, i, defines(reg))
        if len(defs) != 1 or defs[0] == ENTRY:
            return None
        d = defs[0]
        new = method.instructions[d]
        if new.opcode != "new-array":
            return None
        size = self.int_value(method, d, new.registers[1], frame)
        if size is None:
            return None
        elems: list[StringValue | None] = [None] * size
        for k in range(d + 1, i):
            ins = method.instructions[k]
            if ins.opcode == "aput-object" and ins.registers[1] == reg:
                idx = self.int_value(method, k, ins.registers[2], frame)
                if idx is None or not 0 <= idx < size:
                    return None
                elems[idx] = self.value_of(method, k, ins.registers[0], frame)
            elif ins.is_branch or ins.is_goto:
                return None
        if any(e is None for e in elems):
            return None
        return elems  # type: ignore[return-value]

    # -- StringBuilder ---------------------------------------------------
    def _builder_event(self, reg: str):
        def is_event(_i: int, ins: Instruction) -> bool:
            if ins.defined_register() == reg:
                return True
            return ins.is_invoke and ins.method.owner in BUILDERS and ins.registers[:1] == (reg,) \
                and ins.method.name not in ("toString", "length", "charAt", "indexOf")
        return is_event

    def builder_value(self, method: SmaliMethod, index: int, reg: str, frame: Frame | None = None) -> StringValue:
        """Contents of the StringBuilder in ``reg`` just before ``index``."""
        key = ("sb", id(method), index, reg, frame.key() if frame else None)
        if key in self._memo:
            return self._memo[key]
        if key in self._active:
            return StringValue.unresolved(BUDGET_EXCEEDED)
        self._active.add(key)
        try:
            events = reaching_events(method, index, self._builder_event(reg))
            vals = []
            for e in events:
                if e == ENTRY:
                    vals.append(StringValue.unresolved(DYNAMIC_INPUT))
                    continue
                ins = method.instructions[e]
                if ins.is_invoke:
                    vals.append(self._builder_apply(method, e, frame))
                elif ins.opcode == "new-instance":
                    vals.append(StringValue.of([""], self.cap))
                elif ins.opcode.startswith("move-result") and e > 0 and method.instructions[e - 1].is_invoke \
                        and method.instructions[e - 1].method.owner in BUILDERS:
                    vals.append(self.builder_after(method, e - 1, frame))
                elif ins.opcode.startswith("move-object"):
                    vals.append(self.builder_value(method, e, ins.registers[1], frame))
                else:
                    vals.append(StringValue.unresolved(UNMODELED_OP))
            result = join(vals, self.cap)
        finally:
            self._active.discard(key)
        self._memo[key] = result
        return result

    def builder_after(self, method: SmaliMethod, i: int, frame: Frame | None = None) -> StringValue:
        """Builder contents right after the builder invoke at ``i``."""
        return self._builder_apply(method, i, frame)

    def _builder_apply(self, method: SmaliMethod, i: int, frame: Frame | None) -> StringValue:
        ins = method.instructions[i]
        args = invoke_arguments(ins)
        ref = ins.method
        if ref.name == "<init>":
            if not ref.params or ref.params == ("I",):
                return StringValue.of([""], self.cap)
            return self.value_of(method, i, args[1], frame)
        if ref.name == "append" and len(ref.params) == 1:
            before = self.builder_value(method, i, args[0], frame)
            arg = self._append_arg(method, i, args[1], ref.params[0], frame)
            return self._apply("append", before, [arg])
        return StringValue.unresolved(UNMODELED_OP)

    def _append_arg(self, method, i, reg, desc, frame) -> StringValue:
        v = self.value_of(method, i, reg, frame)
        if desc == "C":
            return _map(v, lambda s: chr(int(s)), self.cap)
        if desc == "Z":
            return _map(v, lambda s: "false" if s in ("0", "false") else "true", self.cap)
        if desc in ("I", "J", "S", "B") or desc in (STRING, "Ljava/lang/Object;", "Ljava/lang/CharSequence;"):
            return v
        return StringValue.unresolved(UNMODELED_OP)

    # -- lists -----------------------------------------------------------
    def _list_event(self, reg: str):
        def is_event(_i: int, ins: Instruction) -> bool:
            if ins.defined_register() == reg:
                return True
            return ins.is_invoke and ins.method.owner in LISTS and ins.registers[:1] == (reg,) \
                and ins.method.name not in ("get", "size", "isEmpty", "contains", "indexOf")
        return is_event

    def _list_event_value(self, method, e, reg, frame) -> ListModel:
        if e == ENTRY:
            return ListModel({}, False)
        ins = method.instructions[e]
        if ins.opcode == "new-instance":
            return ListModel({}, True)
        if ins.opcode.startswith("move-object"):
            return self.list_of(method, e, ins.registers[1], frame)
        if not ins.is_invoke:
            return ListModel({}, False)
        ref = ins.method
        args = invoke_arguments(ins)
        if ref.name == "<init>" and not ref.params:
            return ListModel({}, True)
        before = self.list_of(method, e, args[0], frame)
        slots = dict(before.slots)
        if ref.name in ("add", "addLast") and len(ref.params) == 1:
            if not before.complete:
                return ListModel(slots, False)
            slots[len(slots)] = self.value_of(method, e, args[1], frame)
            return ListModel(slots, True)
        if ref.name == "addFirst" or (ref.name == "add" and ref.params == ("I", "Ljava/lang/Object;")):
            pos = 0 if ref.name == "addFirst" else self.int_value(method, e, args[1], frame)
            val = self.value_of(method, e, args[-1], frame)
            if pos is None or not before.complete or pos > len(slots):
                return ListModel({}, False)
            items = [slots[k] for k in sorted(slots)]
            items.insert(pos, val)
            return ListModel(dict(enumerate(items)), True)
        if ref.name == "set" and ref.params == ("I", "Ljava/lang/Object;"):
            pos = self.int_value(method, e, args[1], frame)
            if pos is None or pos not in slots:
                return ListModel({}, False)
            slots[pos] = self.value_of(method, e, args[2], frame)
            return ListModel(slots, before.complete)
        return ListModel({}, False)


def _merge_lists(models: list[ListModel], cap: int) -> ListModel:
    if not models:
        return ListModel({}, False)
    first = models[0]
    if len(models) == 1:
        return first
    if not all(m.complete for m in models) or len({len(m.slots) for m in models}) != 1:
        return ListModel({}, False)
    slots = {k: join((m.slots[k] for m in models), cap) for k in first.slots}
    return ListModel(slots, True)


def _map(v: StringValue, fn, cap: int) -> StringValue:
    if not v.resolved:
        return v
    out = set()
    for c in v.candidates:
        try:
            out.add(fn(c))
        except (ValueError, OverflowError):
            return StringValue.unresolved(UNMODELED_OP)
    return StringValue.of(out, cap)


def eval_string(method: SmaliMethod, instruction_index: int, register: str, *, cls: SmaliClass | None = None,
                app=None, cap: int = DEFAULT_CAP) -> StringValue:
    """Candidate values of ``register`` just before ``instruction_index``."""
    return StringEvaluator(cls, app, cap).value_of(method, instruction_index, register)


__all__ = [
    "BUDGET_EXCEEDED",
    "DEFAULT_CAP",
    "DYNAMIC_INPUT",
    "ListModel",
    "MODELED_OPS",
    "StringEvaluator",
    "StringValue",
    "UNMODELED_OP",
    "UnmodeledOp",
    "eval_list_get",
    "eval_string",
    "join",
    "model_string_op",
]

"""Parser for the subset of Smali needed by intent extraction.

Instructions outside the structured subset are kept as opaque entries so
that instruction indices always line up with the source text.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

LOG = logging.getLogger(__name__)


class MalformedSmali(ValueError):
    pass


PRIMITIVES = {
    "V": "void",
    "Z": "boolean",
    "B": "byte",
    "S": "short",
    "C": "char",
    "I": "int",
    "J": "long",
    "F": "float",
    "D": "double",
}

INVOKE_OPS = (
    "invoke-direct",
    "invoke-virtual",
    "invoke-static",
    "invoke-interface",
    "invoke-super",
)

# Opcodes with structured operands. Anything else is opaque.
STRUCTURED = {
    "const-string",
    "const-string/jumbo",
    "const-class",
    "const",
    "const/4",
    "const/16",
    "const/high16",
    "new-instance",
    "new-array",
    "move",
    "move/from16",
    "move/16",
    "move-object",
    "move-object/from16",
    "move-object/16",
    "move-result",
    "move-result-object",
    "iget-object",
    "iput-object",
    "sget-object",
    "sput-object",
    "aget-object",
    "aput-object",
    "return",
    "return-object",
    "return-void",
    "goto",
    "goto/16",
    "goto/32",
    "if-eq",
    "if-ne",
    "if-lt",
    "if-ge",
    "if-gt",
    "if-le",
    "if-eqz",
    "if-nez",
    "if-ltz",
    "if-gez",
    "if-gtz",
    "if-lez",
    *INVOKE_OPS,
    *(op + "/range" for op in INVOKE_OPS),
}

# Opaque opcodes whose first register operand is not a destination.
NON_DEFINING = {
    "check-cast",
    "nop",
    "throw",
    "monitor-enter",
    "monitor-exit",
    "fill-array-data",
    "packed-switch",
    "sparse-switch",
    "return-wide",
    "iput",
    "iput-wide",
    "iput-boolean",
    "iput-byte",
    "iput-char",
    "iput-short",
    "sput",
    "sput-wide",
    "sput-boolean",
    "sput-byte",
    "sput-char",
    "sput-short",
    "aput",
    "aput-wide",
    "aput-boolean",
    "aput-byte",
    "aput-char",
    "aput-short",
}


def split_descriptors(params: str) -> list[str]:
    """Split a concatenated parameter descriptor string into single types."""
    out = []
    i = 0
    while i < len(params):
        start = i
        while params[i] == "[":
            i += 1
        if params[i] == "L":
            i = params.index(";", i) + 1
        else:
            i += 1
        out.append(params[start:i])
    return out


def java_name(descriptor: str) -> str:
    """``Lcom/a/B;`` -> ``com.a.B``; primitives and arrays get Java spelling."""
    dims = 0
    while descriptor.startswith("["):
        dims += 1
        descriptor = descriptor[1:]
    if descriptor in PRIMITIVES:
        base = PRIMITIVES[descriptor]
    elif descriptor.startswith("L") and descriptor.endswith(";"):
        base = descriptor[1:-1].replace("/", ".")
    else:
        base = descriptor
    return base + "[]" * dims


def simple_name(descriptor: str) -> str:
    """Unqualified Java spelling: ``Ljava/lang/String;`` -> ``String``."""
    name = java_name(descriptor)
    return name.rsplit(".", 1)[-1].split("$")[-1]


def class_descriptor(name: str) -> str:
    return "L" + name.replace(".", "/") + ";"


@dataclass(frozen=True)
class MethodRef:
    owner: str  # descriptor form, e.g. Landroid/content/Intent;
    name: str
    params: tuple[str, ...]
    ret: str

    @classmethod
    def parse(cls, text: str) -> MethodRef:
        m = re.fullmatch(r"(\[*L[^;]+;|\[+.)->([^(]+)\(([^)]*)\)(\S+)", text.strip())
        if not m:
            raise ValueError(f"bad method reference: {text!r}")
        owner, name, params, ret = m.groups()
        return cls(owner, name, tuple(split_descriptors(params)), ret)

    @property
    def owner_name(self) -> str:
        return java_name(self.owner)

    @property
    def proto(self) -> str:
        return f"({''.join(self.params)}){self.ret}"

    def __str__(self) -> str:
        return f"{self.owner}->{self.name}{self.proto}"


@dataclass(frozen=True)
class FieldRef:
    owner: str
    name: str
    type: str

    @classmethod
    def parse(cls, text: str) -> FieldRef:
        m = re.fullmatch(r"(L[^;]+;)->([^:]+):(\S+)", text.strip())
        if not m:
            raise ValueError(f"bad field reference: {text!r}")
        return cls(*m.groups())

    def __str__(self) -> str:
        return f"{self.owner}->{self.name}:{self.type}"


@dataclass(frozen=True)
class Instruction:
    """One Smali instruction.

    ``literal`` holds the string of const-string, the class descriptor of
    const-class/new-instance/new-array, or the int of const*. ``target`` is a
    branch label. Opaque instructions keep their raw text in ``raw``.
    """

    opcode: str
    registers: tuple[str, ...] = ()
    literal: str | int | None = None
    method: MethodRef | None = None
    field: FieldRef | None = None
    target: str | None = None
    opaque: bool = False
    raw: str = ""

    @property
    def is_invoke(self) -> bool:
        return self.method is not None and self.opcode.startswith("invoke-")

    @property
    def is_branch(self) -> bool:
        return self.opcode.startswith("if-")

    @property
    def is_goto(self) -> bool:
        return self.opcode.startswith("goto")

    @property
    def is_return(self) -> bool:
        return self.opcode.startswith("return") or self.opcode == "throw"

    def defined_register(self) -> str | None:
        """Register written by this instruction, if any."""
        op = self.opcode
        if self.opaque:
            if op in NON_DEFINING or not self.registers:
                return None
            return self.registers[0]
        if op.startswith(("const", "new-", "move", "iget", "sget", "aget")):
            return self.registers[0]
        return None

    def render(self) -> str:
        if self.opaque:
            return self.raw
        op = self.opcode
        regs = ", ".join(self.registers)
        if self.is_invoke:
            if op.endswith("/range"):
                body = f"{{{self.registers[0]} .. {self.registers[-1]}}}" if self.registers else "{}"
            else:
                body = "{" + regs + "}"
            return f"{op} {body}, {self.method}"
        if op in ("const-string", "const-string/jumbo"):
            return f"{op} {regs}, {quote(str(self.literal))}"
        if op in ("const-class", "new-instance"):
            return f"{op} {regs}, {self.literal}"
        if op == "new-array":
            return f"{op} {regs}, {self.literal}"
        if op.startswith("const"):
            return f"{op} {regs}, {hex(int(self.literal))}"
        if self.field is not None:
            return f"{op} {regs}, {self.field}"
        if self.target is not None:
            return f"{op} {regs}, :{self.target}" if regs else f"{op} :{self.target}"
        return f"{op} {regs}".rstrip()


@dataclass
class SmaliMethod:
    name: str
    params: tuple[str, ...]
    ret: str
    instructions: list[Instruction] = field(default_factory=list)
    register_count: int = 0
    is_static: bool = False
    access: tuple[str, ...] = ()
    labels: dict[str, int] = field(default_factory=dict)
    locals_count: int = 0

    @property
    def signature(self) -> tuple[str, tuple[str, ...], str]:
        return (self.name, self.params, self.ret)

    @property
    def proto(self) -> str:
        return f"({''.join(self.params)}){self.ret}"

    def param_register(self, index: int) -> str:
        """Register name holding Java parameter ``index`` (0 = first declared param)."""
        slot = 0 if self.is_static else 1
        for p in self.params[:index]:
            slot += 2 if p in ("J", "D") else 1
        return f"p{slot}"

    def reg_number(self, reg: str) -> int:
        if reg.startswith("p"):
            return self.locals_count + int(reg[1:])
        return int(reg[1:])

    def render(self) -> str:
        lines = [f".method {' '.join(self.access + (self.name + self.proto,))}"]
        lines.append(f"    .locals {self.locals_count}")
        by_index: dict[int, list[str]] = {}
        for label, idx in self.labels.items():
            by_index.setdefault(idx, []).append(label)
        for i, ins in enumerate(self.instructions):
            for label in sorted(by_index.get(i, [])):
                lines.append(f"    :{label}")
            lines.append(f"    {ins.render()}")
        for label in sorted(by_index.get(len(self.instructions), [])):
            lines.append(f"    :{label}")
        lines.append(".end method")
        return "\n".join(lines)


@dataclass
class SmaliClass:
    class_name: str
    super_name: str
    methods: list[SmaliMethod] = field(default_factory=list)
    interfaces: tuple[str, ...] = ()
    source_file: str | None = None

    def find_method(self, name: str, proto: str | None = None) -> SmaliMethod | None:
        for m in self.methods:
            if m.name == name and (proto is None or m.proto == proto):
                return m
        return None

    @property
    def outer_name(self) -> str:
        return self.class_name.split("$", 1)[0]


def quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n").replace("\t", "\\t") + '"'


_ESCAPES = {"n": "\n", "t": "\t", "r": "\r", '"': '"', "'": "'", "\\": "\\", "0": "\0", "b": "\b"}


def unquote(s: str) -> str:
    s = s.strip()
    if not (len(s) >= 2 and s[0] == '"' and s[-1] == '"'):
        raise ValueError(f"not a string literal: {s!r}")
    body = s[1:-1]
    out = []
    i = 0
    while i < len(body):
        c = body[i]
        if c == "\\" and i + 1 < len(body):
            nxt = body[i + 1]
            if nxt == "u":
                out.append(chr(int(body[i + 2 : i + 6], 16)))
                i += 6
                continue
            out.append(_ESCAPES.get(nxt, nxt))
            i += 2
            continue
        out.append(c)
        i += 1
    return "".join(out)


def _parse_int(text: str) -> int:
    text = text.strip().lower()
    if text[-1] in "lst":
        text = text[:-1]
    return int(text, 0)


def strip_comment(line: str) -> str:
    """Drop a trailing ``#`` comment that is not inside a string literal."""
    in_str = esc = False
    for i, ch in enumerate(line):
        if in_str:
            if esc:
                esc = False
            elif ch == "\\":
                esc = True
            elif ch == '"':
                in_str = False
        elif ch == '"':
            in_str = True
        elif ch == "#":
            return line[:i].rstrip()
    return line.rstrip()


def _registers(text: str) -> tuple[str, ...]:
    text = text.strip()
    if text.startswith("{"):
        inner = text[1:-1].strip()
        if not inner:
            return ()
        if ".." in inner:
            lo, hi = (r.strip() for r in inner.split(".."))
            prefix = lo[0]
            return tuple(f"{prefix}{n}" for n in range(int(lo[1:]), int(hi[1:]) + 1))
        return tuple(r.strip() for r in inner.split(","))
    return tuple(r.strip() for r in text.split(",") if r.strip())


def _split_operands(rest: str) -> list[str]:
    """Split on top-level commas, respecting braces and string literals."""
    parts, cur, depth, in_str, esc = [], [], 0, False, False
    for ch in rest:
        if in_str:
            cur.append(ch)
            if esc:
                esc = False
            elif ch == "\\":
                esc = True
            elif ch == '"':
                in_str = False
            continue
        if ch == '"':
            in_str = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
        elif ch == "," and depth == 0:
            parts.append("".join(cur).strip())
            cur = []
            continue
        cur.append(ch)
    if cur and "".join(cur).strip():
        parts.append("".join(cur).strip())
    return parts


def parse_instruction(line: str) -> Instruction:
    """Parse one instruction line; unsupported or broken ones become opaque."""
    text = line.strip()
    op, _, rest = text.partition(" ")
    rest = rest.strip()
    if op not in STRUCTURED:
        return _opaque(op, rest, text)
    try:
        return _parse_structured(op, rest)
    except (ValueError, IndexError) as exc:
        LOG.warning("unparseable instruction %r (%s); kept opaque", text, exc)
        return _opaque(op, rest, text)


def _opaque(op: str, rest: str, text: str) -> Instruction:
    regs = tuple(
        p for p in (s.strip() for s in _split_operands(rest))
        if re.fullmatch(r"[vp]\d+", p)
    )
    return Instruction(opcode=op, registers=regs, opaque=True, raw=text)


def _parse_structured(op: str, rest: str) -> Instruction:
    ops = _split_operands(rest)
    if op.startswith("invoke-"):
        return Instruction(op, _registers(ops[0]), method=MethodRef.parse(ops[1]))
    if op in ("const-string", "const-string/jumbo"):
        return Instruction(op, (ops[0],), literal=unquote(ops[1]))
    if op in ("const-class", "new-instance"):
        return Instruction(op, (ops[0],), literal=ops[1])
    if op == "new-array":
        return Instruction(op, (ops[0], ops[1]), literal=ops[2])
    if op.startswith("const"):
        return Instruction(op, (ops[0],), literal=_parse_int(ops[1]))
    if op.startswith(("iget", "iput")):
        return Instruction(op, (ops[0], ops[1]), field=FieldRef.parse(ops[2]))
    if op.startswith(("sget", "sput")):
        return Instruction(op, (ops[0],), field=FieldRef.parse(ops[1]))
    if op.startswith(("aget", "aput")):
        return Instruction(op, tuple(ops[:3]))
    if op.startswith("goto"):
        return Instruction(op, (), target=ops[0].lstrip(":"))
    if op.startswith("if-"):
        return Instruction(op, tuple(ops[:-1]), target=ops[-1].lstrip(":"))
    if op == "return-void":
        return Instruction(op)
    if op.startswith(("return", "move")):
        regs = tuple(ops)
        if not regs or not all(re.fullmatch(r"[vp]\d+", r) for r in regs):
            raise ValueError("bad registers")
        return Instruction(op, regs)
    raise ValueError(f"unhandled opcode {op}")


_DIRECTIVE_BLOCKS = {".annotation": ".end annotation", ".packed-switch": ".end packed-switch",
                     ".sparse-switch": ".end sparse-switch", ".array-data": ".end array-data",
                     ".param": ".end param", ".subannotation": ".end subannotation"}


def is_instruction_line(line: str) -> bool:
    s = line.strip()
    return bool(s) and not s.startswith(("#", ".", ":"))


def parse_smali_text(text: str, origin: str = "<string>") -> SmaliClass:
    lines = text.splitlines()
    class_name = super_name = None
    interfaces: list[str] = []
    source = None
    methods: list[SmaliMethod] = []
    i = 0
    while i < len(lines):
        s = strip_comment(lines[i]).strip()
        if s.startswith(".class"):
            class_name = java_name(s.split()[-1])
        elif s.startswith(".super"):
            super_name = java_name(s.split()[-1])
        elif s.startswith(".implements"):
            interfaces.append(java_name(s.split()[-1]))
        elif s.startswith(".source"):
            source = s.split(None, 1)[1].strip('"')
        elif s.startswith(".method"):
            method, i = _parse_method(lines, i, origin)
            methods.append(method)
        i += 1
    if class_name is None:
        raise MalformedSmali(f"{origin}: missing .class header")
    if super_name is None:
        super_name = "java.lang.Object"
    seen = set()
    for m in methods:
        if m.signature in seen:
            raise MalformedSmali(f"{origin}: duplicate method {m.name}{m.proto}")
        seen.add(m.signature)
    return SmaliClass(class_name, super_name, methods, tuple(interfaces), source)


def _parse_method(lines: list[str], start: int, origin: str) -> tuple[SmaliMethod, int]:
    header = lines[start].strip().split()
    decl = header[-1]
    access = tuple(header[1:-1])
    m = re.fullmatch(r"([^(]+)\(([^)]*)\)(\S+)", decl)
    if not m:
        raise MalformedSmali(f"{origin}: bad method header {lines[start]!r}")
    name, params, ret = m.groups()
    method = SmaliMethod(name, tuple(split_descriptors(params)), ret, access=access,
                         is_static="static" in access)
    registers_total = None
    i = start + 1
    while i < len(lines):
        s = strip_comment(lines[i]).strip()
        if s == ".end method":
            break
        if not s:
            i += 1
            continue
        head = s.split()[0]
        if head in _DIRECTIVE_BLOCKS:
            end = _DIRECTIVE_BLOCKS[head]
            if head == ".param" and not _param_has_block(lines, i):
                i += 1
                continue
            while i < len(lines) and lines[i].strip() != end:
                i += 1
            i += 1
            continue
        if head == ".locals":
            method.locals_count = int(s.split()[1])
        elif head == ".registers":
            registers_total = int(s.split()[1])
        elif s.startswith(":"):
            method.labels[s[1:]] = len(method.instructions)
        elif not s.startswith("."):
            method.instructions.append(parse_instruction(s))
        i += 1
    else:
        raise MalformedSmali(f"{origin}: unterminated method {name}")
    param_slots = (0 if method.is_static else 1) + sum(2 if p in ("J", "D") else 1 for p in method.params)
    if registers_total is not None:
        method.locals_count = registers_total - param_slots
        method.register_count = registers_total
    else:
        method.register_count = method.locals_count + param_slots
    return method, i


def _param_has_block(lines: list[str], i: int) -> bool:
    for j in range(i + 1, len(lines)):
        s = lines[j].strip()
        if not s or s.startswith("#"):
            continue
        if s == ".end param":
            return True
        return s.startswith(".annotation")
    return False


def parse_smali_class(path: str | Path) -> SmaliClass:
    path = Path(path)
    return parse_smali_text(path.read_text(encoding="utf-8"), str(path))


def render_class(cls: SmaliClass) -> str:
    out = [f".class public {class_descriptor(cls.class_name)}", f".super {class_descriptor(cls.super_name)}"]
    out += [f".implements {class_descriptor(i)}" for i in cls.interfaces]
    if cls.source_file:
        out.append(f'.source "{cls.source_file}"')
    for m in cls.methods:
        out += ["", m.render()]
    return "\n".join(out) + "\n"

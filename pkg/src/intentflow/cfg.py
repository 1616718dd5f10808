"""Control-flow helpers over a parsed Smali method."""

from __future__ import annotations

from typing import Callable

from .apk.smali import Instruction, SmaliMethod

ENTRY = -1


def successors(method: SmaliMethod) -> list[tuple[int, ...]]:
    return _edges(method)[0]


def predecessors(method: SmaliMethod) -> list[tuple[int, ...]]:
    return _edges(method)[1]


def _edges(method: SmaliMethod):
    cached = getattr(method, "_cfg_cache", None)
    if cached is not None and cached[0] == len(method.instructions):
        return cached[1]
    n = len(method.instructions)
    succ: list[tuple[int, ...]] = []
    for i, ins in enumerate(method.instructions):
        out: list[int] = []
        if ins.is_goto:
            out.append(method.labels.get(ins.target, n))
        elif ins.is_return:
            pass
        else:
            if i + 1 < n:
                out.append(i + 1)
            if ins.is_branch and ins.target in method.labels:
                out.append(method.labels[ins.target])
        succ.append(tuple(t for t in out if t < n))
    pred: list[list[int]] = [[] for _ in range(n)]
    for i, targets in enumerate(succ):
        for t in targets:
            pred[t].append(i)
    result = (succ, [tuple(sorted(p)) for p in pred])
    method._cfg_cache = (n, result)
    return result


def reaching_events(
    method: SmaliMethod, index: int, is_event: Callable[[int, Instruction], bool]
) -> list[int]:
    """Nearest instructions before ``index`` (on any path) satisfying ``is_event``.

    Returns their indices in ascending order; :data:`ENTRY` is included when some
    path reaches the method entry without passing an event.
    """
    preds = predecessors(method)
    found: set[int] = set()
    seen: set[int] = set()
    stack = [index]
    while stack:
        p = stack.pop()
        if p == 0:
            found.add(ENTRY)
        for q in preds[p] if p < len(preds) else ():
            if q in seen:
                continue
            seen.add(q)
            if is_event(q, method.instructions[q]):
                found.add(q)
            else:
                stack.append(q)
    return sorted(found)


def defines(reg: str) -> Callable[[int, Instruction], bool]:
    return lambda _i, ins: ins.defined_register() == reg


def invoke_arguments(ins: Instruction) -> list[str]:
    """Registers for receiver (if any) and each declared parameter, skipping wide halves."""
    regs = list(ins.registers)
    out: list[str] = []
    pos = 0
    if ins.opcode.split("/")[0] != "invoke-static":
        out.append(regs[0])
        pos = 1
    for p in ins.method.params:
        if pos >= len(regs):
            break
        out.append(regs[pos])
        pos += 2 if p in ("J", "D") else 1
    return out

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from intentflow.apk.app import load_app
from intentflow.apk.smali import parse_smali_text
from intentflow.strings import (
    BUDGET_EXCEEDED, DYNAMIC_INPUT, UNMODELED_OP, StringEvaluator, StringValue, UnmodeledOp, eval_string, join,
    model_string_op,
)

from oracles import FIXTURES

S = "Ljava/lang/String;"
SB = "Ljava/lang/StringBuilder;"


def method_of(body: str, params: str = "Z"):
    cls = parse_smali_text(f""".class public Lt/T;
.super Ljava/lang/Object;

.method public run({params})V
    .locals 8
{body}
    invoke-static {{v0}}, Lt/T;->use({S})V
    return-void
.end method
""")
    m = cls.methods[0]
    use = next(i for i, ins in enumerate(m.instructions) if ins.method is not None and ins.method.name == "use")
    return cls, m, use


def value(body: str, params: str = "Z", cap: int = 16) -> StringValue:
    cls, m, use = method_of(body, params)
    return eval_string(m, use, "v0", cls=cls, cap=cap)


# -- value type ---------------------------------------------------------------

def test_string_value_of_respects_cap():
    assert StringValue.of(["a", "b"], cap=2).candidates == frozenset({"a", "b"})
    assert StringValue.of(["a", "b", "c"], cap=2).reason == BUDGET_EXCEEDED


def test_unresolved_absorbs_join():
    v = join([StringValue.of(["a"]), StringValue.unresolved(DYNAMIC_INPUT)])
    assert not v.resolved


def test_json_round_trip():
    for v in (StringValue.of(["x", "y"]), StringValue.unresolved(UNMODELED_OP)):
        assert StringValue.from_json(v.to_json()) == v


def test_model_string_op_product():
    v = model_string_op("concat", StringValue.of(["a", "b"]), [StringValue.of(["1", "2"])])
    assert v.candidates == frozenset({"a1", "a2", "b1", "b2"})


def test_model_string_op_unknown():
    with pytest.raises(UnmodeledOp):
        model_string_op("reverse", StringValue.of(["a"]), [])


def test_format_and_substring():
    assert model_string_op("format", StringValue.of(["%s-%d"]), [StringValue.of(["a"]), StringValue.of(["7"])]) \
        .single() == "a-7"
    assert model_string_op("substring", StringValue.of(["hello"]), [StringValue.of(["1"]), StringValue.of(["3"])]) \
        .single() == "el"


# -- evaluator ------------------------------------------------------------------

def test_constant():
    assert value('    const-string v0, "x"').single() == "x"


def test_concat():
    v = value(f'''    const-string v0, "a."
    const-string v1, "b"
    invoke-virtual {{v0, v1}}, {S}->concat({S}){S}
    move-result-object v0''')
    assert v.single() == "a.b"


def test_string_builder_chain():
    v = value(f'''    new-instance v1, {SB}
    invoke-direct {{v1}}, {SB}-><init>()V
    const-string v2, "com."
    invoke-virtual {{v1, v2}}, {SB}->append({S}){SB}
    move-result-object v1
    const-string v2, "Target"
    invoke-virtual {{v1, v2}}, {SB}->append({S}){SB}
    invoke-virtual {{v1}}, {SB}->toString(){S}
    move-result-object v0''')
    assert v.single() == "com.Target"


def test_branch_yields_both_candidates():
    v = value('''    if-eqz p1, :other
    const-string v0, "one"
    goto :done
    :other
    const-string v0, "two"
    :done''')
    assert v.candidates == frozenset({"one", "two"})


def test_parameter_is_dynamic():
    v = value("    move-object v0, p1", params=S)
    assert v.reason == DYNAMIC_INPUT


def test_intent_read_is_dynamic():
    v = value(f'''    const-string v1, "k"
    invoke-virtual {{p1, v1}}, Landroid/content/Intent;->getStringExtra({S}){S}
    move-result-object v0''', params="Landroid/content/Intent;")
    assert v.reason == DYNAMIC_INPUT


def test_unmodeled_call():
    v = value(f'''    invoke-static {{}}, Lx/Y;->mystery(){S}
    move-result-object v0''')
    assert not v.resolved


def test_candidate_cap_exceeded():
    lines = []
    for i in range(5):
        lines += [f"    if-eqz p1, :a{i}", f'    const-string v{i + 1}, "x{i}"', f"    goto :b{i}", f"    :a{i}",
                  f'    const-string v{i + 1}, "y{i}"', f"    :b{i}"]
    lines.append('    const-string v0, ""')
    for i in range(5):
        lines += [f"    invoke-virtual {{v0, v{i + 1}}}, {S}->concat({S}){S}", "    move-result-object v0"]
    assert value("\n".join(lines), cap=16).reason == BUDGET_EXCEEDED
    assert len(value("\n".join(lines), cap=64).candidates) == 32


def test_same_class_callee_return():
    cls = parse_smali_text(f""".class public Lt/T;
.super Ljava/lang/Object;

.method private name(){S}
    .locals 1
    const-string v0, "from.callee"
    return-object v0
.end method

.method public run()V
    .locals 1
    invoke-direct {{p0}}, Lt/T;->name(){S}
    move-result-object v0
    invoke-static {{v0}}, Lt/T;->use({S})V
    return-void
.end method
""")
    m = cls.find_method("run")
    assert StringEvaluator(cls).value_of(m, 2, "v0").single() == "from.callee"


# -- soundness against a concrete interpreter ------------------------------------------
# A program is a list of ops over registers v0..v3, optionally split by one
# branch on p1. The interpreter runs it concretely for each branch outcome.

LITS = st.text(alphabet="abcXY._", min_size=0, max_size=4)
REG = st.sampled_from(["v0", "v1", "v2", "v3"])
OP = st.one_of(
    st.tuples(st.just("const"), REG, LITS),
    st.tuples(st.just("concat"), REG, REG, REG),
    st.tuples(st.just("upper"), REG, REG),
    st.tuples(st.just("lower"), REG, REG),
    st.tuples(st.just("move"), REG, REG),
    st.tuples(st.just("builder"), REG, REG, REG),
)


def run_concrete(ops, regs):
    for op in ops:
        if op[0] == "const":
            regs[op[1]] = op[2]
        elif op[0] == "concat":
            regs[op[1]] = regs[op[2]] + regs[op[3]]
        elif op[0] == "upper":
            regs[op[1]] = regs[op[2]].upper()
        elif op[0] == "lower":
            regs[op[1]] = regs[op[2]].lower()
        elif op[0] == "move":
            regs[op[1]] = regs[op[2]]
        elif op[0] == "builder":
            regs[op[1]] = regs[op[2]] + regs[op[3]]
    return regs


def to_smali(ops) -> list[str]:
    out = []
    for op in ops:
        if op[0] == "const":
            out.append(f'    const-string {op[1]}, "{op[2]}"')
        elif op[0] == "concat":
            out += [f"    invoke-virtual {{{op[2]}, {op[3]}}}, {S}->concat({S}){S}", f"    move-result-object {op[1]}"]
        elif op[0] in ("upper", "lower"):
            name = "toUpperCase" if op[0] == "upper" else "toLowerCase"
            out += [f"    invoke-virtual {{{op[2]}}}, {S}->{name}(){S}", f"    move-result-object {op[1]}"]
        elif op[0] == "move":
            out.append(f"    move-object {op[1]}, {op[2]}")
        elif op[0] == "builder":
            out += [f"    new-instance v4, {SB}", f"    invoke-direct {{v4}}, {SB}-><init>()V",
                    f"    invoke-virtual {{v4, {op[2]}}}, {SB}->append({S}){SB}",
                    f"    invoke-virtual {{v4, {op[3]}}}, {SB}->append({S}){SB}",
                    f"    invoke-virtual {{v4}}, {SB}->toString(){S}", f"    move-result-object {op[1]}"]
    return out


INIT = [("const", f"v{i}", f"s{i}") for i in range(4)]


@settings(max_examples=150, deadline=None)
@given(st.lists(OP, max_size=6), st.lists(OP, max_size=4), st.lists(OP, max_size=4), st.lists(OP, max_size=4))
def test_evaluator_contains_concrete_value(prefix, then, other, suffix):
    body = to_smali(INIT + prefix) + ["    if-eqz p1, :other"] + to_smali(then) + ["    goto :done", "    :other"]
    body += to_smali(other) + ["    :done"] + to_smali(suffix)
    got = value("\n".join(body), cap=64)
    concrete = {run_concrete(INIT + prefix + branch + suffix, {})["v0"] for branch in (then, other)}
    assert got.resolved
    assert concrete <= got.candidates
    if then == other:
        assert got.candidates == concrete


def _value_before(app_dir, cls_name, predicate, reg):
    app = load_app(app_dir)
    cls = app.find_class(cls_name)
    for m in cls.methods:
        for i, ins in enumerate(m.instructions):
            if predicate(ins):
                return StringEvaluator(cls, app).value_of(m, i, reg)
    raise AssertionError("instruction not found")


FIXTURE_STRINGS = [
    # (app dir, class, invoked method, register, concrete value)
    ("DynRegister2", "org.bench.dynregister2.MainActivity", "<init>", "v6", "org.bench.dynregister2.DYN_ACTION"),
    ("DynRegister2", "org.bench.dynregister2.MainActivity", "<init>", "v0", "org.bench.dynregister2.DYN_ACTION"),
    ("DynRegister1", "org.bench.dynregister1.MainActivity", "<init>", "v6", "org.bench.dynregister1.DYN_ACTION"),
    ("startActivity7", "org.bench.startactivity7.MainActivity", "setClassName", "v0",
     "org.bench.startactivity7.SafeActivity"),
    ("startActivity2", "org.bench.startactivity2.MainActivity", "setClassName", "v0",
     "org.bench.startactivity2.SinkActivity"),
    ("Implicit4", "org.bench.implicit4.MainActivity", "setAction", "v0", "org.bench.implicit4.ACTION"),
]


@pytest.mark.parametrize("case,cls,invoked,reg,concrete", FIXTURE_STRINGS)
def test_fixture_strings_resolve(case, cls, invoked, reg, concrete):
    def pred(ins):
        return ins.method is not None and ins.method.name == invoked and reg in ins.registers \
            and ins.method.owner != "Ljava/lang/StringBuilder;"

    got = _value_before(FIXTURES / "benchmark" / case, cls, pred, reg)
    assert concrete in got.candidates

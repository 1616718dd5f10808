import pytest

from intentflow.apk.app import LOAD_COUNTER, MissingManifest, MissingSmaliTree, load_app, parse_location
from intentflow.apk.manifest import MalformedManifest, parse_manifest_text, qualify
from intentflow.apk.smali import MalformedSmali, parse_instruction, parse_smali_text
from intentflow.cfg import defines, predecessors, reaching_events

from oracles import FIXTURES

MANIFEST = """<?xml version="1.0"?>
<manifest xmlns:android="http://schemas.android.com/apk/res/android" package="com.ex">
  <application>
    <activity android:name=".Main">
      <intent-filter>
        <action android:name="com.ex.GO"/>
        <category android:name="android.intent.category.DEFAULT"/>
      </intent-filter>
    </activity>
    <service android:name="com.ex.Svc" android:exported="false"/>
    <receiver android:name="Recv"/>
    <provider android:name=".Prov"/>
  </application>
</manifest>
"""


def test_manifest_components():
    pkg, comps = parse_manifest_text(MANIFEST)
    assert pkg == "com.ex"
    by_name = {c.name: c for c in comps}
    assert set(by_name) == {"com.ex.Main", "com.ex.Svc", "com.ex.Recv", "com.ex.Prov"}
    main = by_name["com.ex.Main"]
    assert main.kind == "activity" and main.exported
    assert main.filters[0].actions == frozenset({"com.ex.GO"})
    assert not by_name["com.ex.Svc"].exported


def test_qualify():
    assert qualify(".A", "p.q") == "p.q.A"
    assert qualify("A", "p.q") == "p.q.A"
    assert qualify("x.y.A", "p.q") == "x.y.A"


@pytest.mark.parametrize("text", ["<manifest", '<manifest xmlns:android="x"><application/></manifest>'])
def test_malformed_manifest(text):
    with pytest.raises(MalformedManifest):
        parse_manifest_text(text)


def test_instruction_parsing():
    ins = parse_instruction('const-string v0, "a, \\"b\\""')
    assert ins.literal == 'a, "b"' and ins.registers == ("v0",)
    inv = parse_instruction("invoke-virtual/range {v3 .. v6}, La/B;->m(IJ)V")
    assert inv.registers == ("v3", "v4", "v5", "v6") and inv.method.name == "m"
    assert parse_instruction("add-int/lit8 v0, v1, 0x1").opaque


def test_class_parsing_and_render_round_trip():
    text = (FIXTURES / "chain" / "com.appB" / "smali" / "com" / "appB" / "IntermediateActivity.smali").read_text()
    cls = parse_smali_text(text)
    assert cls.class_name == "com.appB.IntermediateActivity"
    m = cls.find_method("onCreate")
    again = parse_smali_text(".class public Lcom/appB/IntermediateActivity;\n.super Landroid/app/Activity;\n"
                             + m.render())
    assert [i.render() for i in again.methods[0].instructions] == [i.render() for i in m.instructions]


def test_missing_class_header():
    with pytest.raises(MalformedSmali):
        parse_smali_text(".super Ljava/lang/Object;\n")


def test_load_app_counts_and_errors(tmp_path):
    before = LOAD_COUNTER["calls"]
    app = load_app(FIXTURES / "pair" / "com.appA")
    assert LOAD_COUNTER["calls"] == before + 1
    assert app.package_name == "com.appA" and app.find_class("com.appA.OutFlowActivity") is not None
    with pytest.raises(MissingManifest):
        load_app(tmp_path)
    (tmp_path / "AndroidManifest.xml").write_text(MANIFEST)
    with pytest.raises(MissingSmaliTree):
        load_app(tmp_path)


def test_parse_location():
    assert parse_location("a.B->onCreate(Landroid/os/Bundle;)V@12") == ("a.B", "onCreate", 12)


def test_reaching_definitions_over_branch():
    cls = parse_smali_text(""".class public La/B;
.super Ljava/lang/Object;
.method public m(Z)V
    .locals 1
    if-eqz p1, :x
    const-string v0, "a"
    goto :y
    :x
    const-string v0, "b"
    :y
    return-void
.end method
""")
    m = cls.methods[0]
    assert sorted(reaching_events(m, 4, defines("v0"))) == [1, 3]
    assert 0 in predecessors(m)[3] and 2 in predecessors(m)[4]

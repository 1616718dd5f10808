import time
from collections import Counter

import pytest

import synth
from intentflow.scoring import score_reports

from oracles import FIXTURES, run_corpus, truth_of

TRUTH = truth_of(FIXTURES / "benchmark_truth.tsv")


@pytest.fixture(scope="module")
def bench():
    t0 = time.perf_counter()
    db, reports = run_corpus(FIXTURES / "benchmark")
    return db, reports, time.perf_counter() - t0


def test_checked_in_corpora_match_generator(tmp_path):
    synth.write_all(tmp_path)
    for path in sorted(tmp_path.rglob("*")):
        if path.is_file():
            rel = path.relative_to(tmp_path)
            assert (FIXTURES / rel).read_text() == path.read_text(), rel


def test_truth_file_has_27_cases_and_25_leaks():
    assert len(synth.benchmark()) == 27
    assert len(TRUTH) == 25
    assert {t[0] for t in TRUTH} < {a.package for a in synth.benchmark().values()}


def test_benchmark_scores_perfectly(bench):
    _, reports, elapsed = bench
    s = score_reports(reports, TRUTH)
    assert (s.tp, s.fp, s.fn) == (25, 0, 0)
    assert s.precision == s.recall == s.f1 == 1.0
    assert elapsed < 30


@pytest.mark.parametrize("case", sorted(synth.benchmark()))
def test_each_case(bench, case):
    _, reports, _ = bench
    pkg = synth.benchmark()[case].package
    got = Counter(r.score_key() for r in reports if r.app == pkg)
    want = Counter(t for t in TRUTH if t[0] == pkg)
    assert got == want


@pytest.mark.parametrize("case,kind", [("startActivityForResult2", "result"), ("startActivityForResult3", "result"),
                                       ("bindService3", "result"), ("Implicit1", "forward")])
def test_report_kind(bench, case, kind):
    _, reports, _ = bench
    pkg = synth.benchmark()[case].package
    kinds = {r.kind for r in reports if r.app == pkg}
    assert kinds == {kind}


def test_all_benchmark_leaks_resolved(bench):
    _, reports, _ = bench
    assert {r.confidence for r in reports} == {"resolved"}

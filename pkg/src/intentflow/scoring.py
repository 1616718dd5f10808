"""Benchmark scoring of reported leaks against a ground-truth list."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path


class MalformedGroundTruth(ValueError):
    pass


LeakKey = tuple[str, str, str, str]  # app, component, source API, sink API


@dataclass(frozen=True)
class BenchmarkScore:
    """tp/fp/fn counts and the derived ratios.

    Zero denominators count as perfect (1.0): a case with nothing to find and
    nothing reported is scored as fully correct rather than undefined.
    """

    tp: int
    fp: int
    fn: int

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 1.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 1.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def render(self) -> str:
        return (f"tp\t{self.tp}\nfp\t{self.fp}\nfn\t{self.fn}\n"
                f"precision\t{self.precision:.4f}\nrecall\t{self.recall:.4f}\nf1\t{self.f1:.4f}\n")


def _strip_params(sig: str) -> str:
    return sig.split("(", 1)[0]


def load_ground_truth(path: str | Path) -> set[LeakKey]:
    """Read ``app<TAB>component<TAB>source<TAB>sink`` lines; ``#`` starts a comment."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise MalformedGroundTruth(f"cannot read {path}: {err}") from err
    truth: set[LeakKey] = set()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        cols = [c.strip() for c in line.split("\t")]
        if len(cols) != 4 or not all(cols):
            raise MalformedGroundTruth(f"{path}:{lineno}: expected 4 tab-separated fields")
        truth.add((cols[0], cols[1], _strip_params(cols[2]), _strip_params(cols[3])))
    return truth


def score(reported: set[LeakKey], truth: set[LeakKey]) -> BenchmarkScore:
    return BenchmarkScore(len(reported & truth), len(reported - truth), len(truth - reported))


def score_reports(reports, truth: set[LeakKey]) -> BenchmarkScore:
    return score({r.score_key() for r in reports}, truth)

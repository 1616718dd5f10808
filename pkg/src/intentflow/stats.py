"""Corpus statistics over the summary store and its extraction metadata."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .intentdb.rows import EXTRACTED, FIXPOINT_DERIVED, SENTINEL
from .intentdb.store import IntentDb
from .strings import StringValue


@dataclass
class CorpusStats:
    total_sender_sites: int = 0
    per_channel: dict[str, int] = field(default_factory=dict)
    implicit: int = 0
    explicit: int = 0
    get_methods: dict[str, int] = field(default_factory=dict)
    per_action: list[tuple[str, int, int]] = field(default_factory=list)
    multi_candidate_actions: int = 0
    sentinel_actions: int = 0
    dynamic_receivers: int = 0
    chains_over_two: int = 0

    @property
    def implicit_ratio(self) -> float:
        total = self.implicit + self.explicit
        return self.implicit / total if total else 0.0

    def summary_rows(self) -> list[tuple[str, str]]:
        rows = [
            ("sender_sites", str(self.total_sender_sites)),
            ("implicit", str(self.implicit)),
            ("explicit", str(self.explicit)),
            ("implicit_ratio", f"{self.implicit_ratio:.4f}"),
            ("multi_candidate_actions", str(self.multi_candidate_actions)),
            ("sentinel_actions", str(self.sentinel_actions)),
            ("dynamic_receivers", str(self.dynamic_receivers)),
            ("chains_over_two_components", str(self.chains_over_two)),
        ]
        rows += [(f"channel.{c}", str(n)) for c, n in sorted(self.per_channel.items())]
        return rows


def compute_stats(db: IntentDb) -> CorpusStats:
    st = CorpusStats()
    channels: Counter = Counter()
    gets: Counter = Counter()
    for package in sorted(db.meta):
        meta = db.meta[package]
        st.dynamic_receivers += meta.get("dynamic_receivers", 0)
        gets.update(meta.get("get_counts", {}))
        for site in meta.get("sites", []):
            st.total_sender_sites += 1
            channels[site["channel"]] += 1
            specs = site.get("specs", [])
            if specs and all(s["explicit"] for s in specs):
                st.explicit += 1
                continue
            st.implicit += 1
            actions = [StringValue.from_json(s["value"]) for s in specs if not s["explicit"]]
            if any(not a.resolved for a in actions):
                st.sentinel_actions += 1
            elif sum(len(a.candidates) for a in actions) > 1:
                st.multi_candidate_actions += 1
    st.per_channel = dict(sorted(channels.items()))
    st.get_methods = dict(sorted(gets.items(), key=lambda kv: (-kv[1], kv[0])))

    senders: dict[str, set] = {}
    receivers: dict[str, set] = {}
    for r in db.rows:
        if r.provenance.kind == FIXPOINT_DERIVED:
            st.chains_over_two += 1
            continue
        if r.intent_action is not None and r.provenance.kind == EXTRACTED:
            senders.setdefault(r.intent_action, set()).add((r.package_name, r.provenance.site))
        if r.intent_filter is not None:
            receivers.setdefault(r.intent_filter, set()).add((r.package_name, r.class_name))
    actions = set(senders) | set(receivers)
    st.per_action = sorted(((a, len(senders.get(a, ())), len(receivers.get(a, ()))) for a in actions),
                           key=lambda t: (-t[1], -t[2], t[0]))
    return st


def _tsv(path: Path, header: tuple[str, ...], rows) -> None:
    lines = ["\t".join(header)] + ["\t".join(str(c) for c in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_stats(st: CorpusStats, out_dir: str | Path, figures: bool = True) -> list[Path]:
    """Write the stats tables (and figures) into ``out_dir``; returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    tables = {
        "summary.tsv": (("metric", "value"), st.summary_rows()),
        "actions.tsv": (("action", "senders", "receivers"), st.per_action),
        "get_methods.tsv": (("get_method", "calls"), st.get_methods.items()),
    }
    for name, (header, rows) in tables.items():
        _tsv(out / name, header, rows)
        written.append(out / name)
    if figures:
        from .plots import plot_stats
        written += plot_stats(st, out)
    return written


def sentinel_label(action: str) -> str:
    return "<unresolved>" if action == SENTINEL else action

"""Figures for corpus statistics, rendered headless to PNG files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .stats import CorpusStats, sentinel_label  # noqa: E402

# Fixed metadata keeps repeated renders byte-identical.
_PNG_META = {"Software": None}
_MAX_BARS = 30


def _finish(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_channels(st: CorpusStats, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    names = list(st.per_channel)
    ax.bar(range(len(names)), [st.per_channel[n] for n in names], color="tab:blue")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("sender sites")
    ax.set_title(f"Sender sites per channel ({st.implicit} implicit, {st.explicit} explicit)", fontsize=9)
    return _finish(fig, path)


def plot_actions(st: CorpusStats, path: Path) -> Path:
    rows = st.per_action[:_MAX_BARS]
    fig, ax = plt.subplots(figsize=(max(6, 0.35 * len(rows) + 2), 4))
    xs = range(len(rows))
    width = 0.4
    ax.bar([x - width / 2 for x in xs], [r[1] for r in rows], width, label="senders", color="tab:blue")
    ax.bar([x + width / 2 for x in xs], [r[2] for r in rows], width, label="receivers", color="tab:orange")
    ax.set_xticks(list(xs))
    ax.set_xticklabels([sentinel_label(r[0]) for r in rows], rotation=60, ha="right", fontsize=7)
    ax.set_ylabel("count")
    ax.legend(fontsize=8)
    ax.set_title("Intent actions per sender and receiver", fontsize=9)
    return _finish(fig, path)


def plot_get_methods(st: CorpusStats, path: Path) -> Path:
    items = list(st.get_methods.items())[:_MAX_BARS]
    fig, ax = plt.subplots(figsize=(6, max(2.5, 0.3 * len(items) + 1)))
    ax.barh(range(len(items)), [n for _, n in items], color="tab:green")
    ax.set_yticks(range(len(items)))
    ax.set_yticklabels([s for s, _ in items], fontsize=7)
    ax.invert_yaxis()
    ax.set_xlabel("calls")
    ax.set_title("Extra getter usage", fontsize=9)
    return _finish(fig, path)


def plot_stats(st: CorpusStats, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    return [
        plot_channels(st, out / "channels.png"),
        plot_actions(st, out / "actions.png"),
        plot_get_methods(st, out / "get_methods.png"),
    ]

"""End-to-end orchestration: analyze apps into the store, resolve, report."""

from __future__ import annotations

import json
import logging
import time
from collections import Counter
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

from .apk.app import load_app
from .catalogs import Catalogs
from .extract import extract_app, extract_result_channels, find_dynamic_receivers, get_method_counts
from .intentdb import IntentDb, insert_app_summaries
from .report import LeakReport, derive_fixture_flows, match_all
from .strings import DEFAULT_CAP

LOG = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    apps: list[Path] = field(default_factory=list)
    db: Path | None = None
    flows: Path | None = None
    catalog: Path | None = None
    compat_table: Path | None = None
    sender_catalog: Path | None = None
    strict: bool = False
    fmt: str = "text"
    string_cap: int = DEFAULT_CAP
    max_chain: int | None = None

    def __post_init__(self) -> None:
        if self.fmt not in ("text", "records"):
            raise ConfigError(f"unknown output format {self.fmt!r}")
        if self.string_cap < 1:
            raise ConfigError("string cap must be positive")
        if self.max_chain is not None and self.max_chain < 1:
            raise ConfigError("max chain must be at least 1")

    def catalogs(self) -> Catalogs:
        try:
            return Catalogs.load(self.sender_catalog, self.compat_table, self.catalog)
        except (OSError, ValueError) as err:
            raise ConfigError(f"cannot load catalogs: {err}") from err

    @property
    def fixpoint_rounds(self) -> int | None:
        """Rounds needed for chains of at most ``max_chain`` intents."""
        return None if self.max_chain is None else self.max_chain - 1


def discover_apps(paths: list[Path]) -> list[Path]:
    """Expand corpus directories: a path is an app if it holds a manifest, else its app subdirectories."""
    apps: list[Path] = []
    for p in paths:
        p = Path(p)
        if not p.is_dir():
            raise ConfigError(f"{p} is not a directory")
        if (p / "AndroidManifest.xml").is_file():
            apps.append(p)
        else:
            apps.extend(sorted(c for c in p.iterdir() if c.is_dir()))
    return apps


@dataclass
class AppResult:
    path: Path
    package: str | None = None
    ok: bool = True
    error: str | None = None
    rows_added: int = 0
    sites: int = 0


def analyze_app(db: IntentDb, path: Path, catalogs: Catalogs, cap: int = DEFAULT_CAP,
                flows: list | None = None) -> AppResult:
    """Extract one app into ``db``; when ``flows`` is a list, its intra-component flows are appended too."""
    app = load_app(path)
    if app.package_name in db.meta:
        LOG.warning("%s: package %s analyzed before, replacing its rows", path, app.package_name)
    extractor, sites = extract_app(app, catalogs, cap)
    specs = [s for _, found in sites for s in found]
    dynamic = find_dynamic_receivers(app, catalogs, cap)
    channels = extract_result_channels(app, extractor=extractor)
    added = insert_app_summaries(db, app, specs, dynamic, channels)
    meta = db.meta.setdefault(app.package_name, {})
    meta["sites"] = [_site_record(site, found) for site, found in sites]
    meta["get_counts"] = dict(sorted(get_method_counts(app, catalogs).items()))
    meta["dynamic_receivers"] = len(dynamic)
    if flows is not None:
        flows.extend(derive_fixture_flows(app, catalogs, cap))
    return AppResult(path, app.package_name, True, None, added, len(sites))


def _site_record(site, specs) -> dict:
    return {
        "location": site.location,
        "channel": site.channel,
        "api": site.api,
        "request_code": site.request_code,
        "specs": [{"explicit": s.explicit, "forwarded": s.forwarded, "origin": s.origin,
                   "value": (s.target_component if s.explicit else s.action).to_json()} for s in specs],
    }


def analyze(db: IntentDb, paths: list[Path], catalogs: Catalogs, cap: int = DEFAULT_CAP,
            flows: list | None = None) -> list[AppResult]:
    """Analyze each app once and insert its summaries; failures are logged and skipped."""
    results = []
    for path in paths:
        try:
            results.append(analyze_app(db, path, catalogs, cap, flows))
        except Exception as err:  # one broken app must not stop the corpus
            LOG.error("%s: analysis failed: %s", path, err)
            results.append(AppResult(path, ok=False, error=f"{type(err).__name__}: {err}"))
    return results


def derive_flows(paths: list[Path], catalogs: Catalogs, cap: int = DEFAULT_CAP):
    flows = []
    for path in paths:
        flows.extend(derive_fixture_flows(load_app(path), catalogs, cap))
    return flows


def render_reports(reports: list[LeakReport], fmt: str) -> str:
    if fmt == "records":
        return "".join(json.dumps(r.to_json(), sort_keys=True, ensure_ascii=False) + "\n" for r in reports)
    if not reports:
        return "no leaks found\n"
    body = "\n\n".join(r.render() for r in reports)
    counts = Counter(r.confidence for r in reports)
    return f"{body}\n\n{len(reports)} leak(s): {counts.get('resolved', 0)} resolved, {counts.get('low', 0)} low\n"


def report(db: IntentDb, flows, catalogs: Catalogs, strict: bool = False) -> list[LeakReport]:
    return match_all(db, flows, catalogs, strict)


class Timer:
    """Wall-clock seconds per named phase."""

    def __init__(self):
        self.phases: dict[str, float] = {}

    @contextmanager
    def phase(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.phases[name] = self.phases.get(name, 0.0) + time.perf_counter() - t0

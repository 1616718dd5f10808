"""Reporting phase: flows, matching against the summary store, and leak reports."""

from .flows import (
    DIRECT_SOURCE, GET_EXTRA, FlowSource, IntraFlow, MissingFlows, derive_fixture_flows, load_flows,
    save_flows,
)
from .matching import (
    LOW, RESOLVED, Hop, LeakReport, classify_sensitivity, hop_chain, match_all, match_flow,
    match_result_channels,
)
from ..intentdb.fixpoint import signature_compat

__all__ = [
    "DIRECT_SOURCE", "GET_EXTRA", "FlowSource", "IntraFlow", "MissingFlows", "derive_fixture_flows",
    "load_flows", "save_flows", "LOW", "RESOLVED", "Hop", "LeakReport", "classify_sensitivity",
    "hop_chain", "match_all", "match_flow", "match_result_channels", "signature_compat",
]

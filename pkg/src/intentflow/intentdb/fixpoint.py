"""Fixed-point resolution of rows whose value is an extra received by the sender."""

from __future__ import annotations

import logging
from dataclasses import replace

from ..catalogs import GetPutCompatTable, UnknownGetSignature, default_catalogs
from ..extract.model import GET_EXTRA_REF
from ..strings import StringValue
from .rows import FIXPOINT_DERIVED, SENTINEL, IntentSummaryRow, Provenance
from .store import IntentDb, match_senders

LOG = logging.getLogger(__name__)


def key_match(get_key: StringValue, put_key: str | None) -> tuple[bool, bool]:
    """(matches, low_confidence) for a receiver key against a sender key."""
    if put_key is None:
        return False, False
    if put_key == SENTINEL or not get_key.resolved:
        return True, True
    return put_key in get_key.candidates, False


def signature_compat(get_sig: str, put_sig: str | None, table: GetPutCompatTable | None = None) -> bool:
    """True when a value stored by ``put_sig`` is visible to ``get_sig``.

    Unknown get signatures never match (a warning is logged).
    """
    if put_sig is None:
        return False
    table = table or default_catalogs().compat
    try:
        return table.compatible(get_sig, put_sig)
    except UnknownGetSignature:
        LOG.warning("unknown get signature %s treated as non-matching", get_sig)
        return False


def feeding_senders(db: IntentDb, row: IntentSummaryRow, table: GetPutCompatTable | None = None):
    """Sender rows whose extra can reach the get recorded in ``row.value``."""
    get = row.value
    for m in match_senders(db, row.class_name, package=row.package_name):
        s = m.row
        if s.value is None or s.value.kind == GET_EXTRA_REF:
            continue
        ok, _low = key_match(get.key, s.key)
        if ok and signature_compat(get.detail, s.put_signature, table):
            yield s


def fixpoint_resolve(db: IntentDb, table: GetPutCompatTable | None = None,
                     max_rounds: int | None = None) -> int:
    """Add a resolved copy of every get-valued row for each sender feeding it; repeat until stable.

    Original rows stay. Returns the number of rows added.
    """
    added = 0
    rounds = 0
    while max_rounds is None or rounds < max_rounds:
        rounds += 1
        fresh = []
        for r in db.rows:
            if r.value is None or r.value.kind != GET_EXTRA_REF:
                continue
            for s in feeding_senders(db, r, table):
                prov = Provenance(FIXPOINT_DERIVED, r.provenance.site, (r.row_id, s.row_id))
                fresh.append(replace(r, value=s.value, provenance=prov))
        n = sum(db.add(d) for d in fresh)
        added += n
        LOG.debug("fixpoint round %d added %d rows", rounds, n)
        if n == 0:
            break
    return added

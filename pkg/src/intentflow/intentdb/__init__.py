"""Summary store of intent senders and receivers, with fixed-point resolution."""

from .fixpoint import feeding_senders, fixpoint_resolve, key_match, signature_compat
from .rows import (
    CHANNEL_KIND, EXTRACTED, FIXPOINT_DERIVED, SCHEMA_VERSION, SENTINEL, IntentSummaryRow, Provenance,
)
from .store import (
    IntentDb, SchemaVersionMismatch, SenderMatch, StoreIO, expand, insert_app_summaries, load_db,
    match_senders, meta_path, save_db,
)

__all__ = [
    "feeding_senders", "fixpoint_resolve", "key_match", "signature_compat", "CHANNEL_KIND",
    "EXTRACTED", "FIXPOINT_DERIVED", "SCHEMA_VERSION", "SENTINEL", "IntentSummaryRow", "Provenance",
    "IntentDb", "SchemaVersionMismatch", "SenderMatch", "StoreIO", "expand", "insert_app_summaries",
    "load_db", "match_senders", "meta_path", "save_db",
]

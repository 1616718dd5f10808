"""Analysis phase: sender sites, intent reconstruction, receivers and result channels."""

from .intents import (
    AppExtractor, ClassAnalysis, backtrace_intent, collect_extras, extract_app, find_sender_sites,
)
from .model import (
    CONSTANT, GET_EXTRA_REF, OPAQUE, SOURCE_CALL, ExtraPut, IntentOriginNotFound, IntentSpec,
    ResultChannelDecl, SenderSite, ValueDescriptor,
)
from .receivers import (
    ON_ACTIVITY_RESULT, ON_BIND, ON_SERVICE_CONNECTED, SET_RESULT, extract_result_channels,
    find_dynamic_receivers, get_method_counts,
)

__all__ = [
    "AppExtractor", "ClassAnalysis", "backtrace_intent", "collect_extras", "extract_app",
    "find_sender_sites", "CONSTANT", "GET_EXTRA_REF", "OPAQUE", "SOURCE_CALL", "ExtraPut",
    "IntentOriginNotFound", "IntentSpec", "ResultChannelDecl", "SenderSite", "ValueDescriptor",
    "ON_ACTIVITY_RESULT", "ON_BIND", "ON_SERVICE_CONNECTED", "SET_RESULT",
    "extract_result_channels", "find_dynamic_receivers", "get_method_counts",
]

"""Trust federation: entity statements, trust chains, trust-mark status."""

from .chain import MAX_DEPTH, check_trust_mark_status, resolve_trust_chain, verify_trust_chain
from .mock import (
    EntitySpec,
    FederationHandle,
    FederationTopology,
    MarkSpec,
    MockTransport,
    serve_mock_federation,
    short_name,
)
from .model import (
    ChainVerdict,
    EndpointCert,
    EntityResult,
    EntityStatement,
    Reason,
    Status,
    StatusResult,
    TrustChain,
    TrustMark,
    build_entity_statement,
    configuration_url,
    fetch_url,
    origin_of,
    status_url,
)
from .transport import CountingTransport, Exchange, Observation, RecordingTransport, Transport

__all__ = [
    "MAX_DEPTH",
    "ChainVerdict",
    "CountingTransport",
    "EndpointCert",
    "EntityResult",
    "EntitySpec",
    "EntityStatement",
    "Exchange",
    "FederationHandle",
    "FederationTopology",
    "MarkSpec",
    "MockTransport",
    "Observation",
    "Reason",
    "RecordingTransport",
    "Status",
    "StatusResult",
    "TrustChain",
    "TrustMark",
    "Transport",
    "build_entity_statement",
    "check_trust_mark_status",
    "configuration_url",
    "fetch_url",
    "origin_of",
    "resolve_trust_chain",
    "serve_mock_federation",
    "short_name",
    "status_url",
    "verify_trust_chain",
]

"""Software enclave: attestation, verified state acquisition and isolated signing."""

from intentkit.enclave.runtime import (
    AttestationReport, AttestationVerifier, BoundaryLeak, Enclave, HardwareRoot,
    ProtocolError, SigningError, Stage, build_digest, config_bytes, measure, needed_keys,
)
from intentkit.enclave.snapshot import (
    MARKET_PREFIXES, NodeUnavailable, ProofInvalid, SnapshotMiss, StateSnapshot,
    acquire_verified_state, check_leaf, verify_served,
)

__all__ = [
    "AttestationReport", "AttestationVerifier", "BoundaryLeak", "Enclave", "HardwareRoot",
    "MARKET_PREFIXES", "NodeUnavailable", "ProofInvalid", "ProtocolError", "SigningError",
    "SnapshotMiss", "Stage", "StateSnapshot", "acquire_verified_state", "build_digest",
    "check_leaf", "config_bytes", "measure", "needed_keys", "verify_served",
]

"""
TrustLedger - Ledger-anchored PKI for UAV swarms
Version 0.1.0 | License: Apache 2.0

Design principles:
- Trust is a graph of scoped confirmations committed to an append-only ledger
- Nodes keep a verified partial view, never the whole chain
- Two partial views together reconstruct paths twice their depth
- Every failure has a name (typed errors, typed abort reasons)
"""

__version__ = "0.1.0"
__author__ = "TrustLedger Contributors"
__license__ = "Apache-2.0"

from .crypto import Hash256, KeyPair, sha256
from .config import GenesisConfig, ProtocolSettings, load_genesis
from .ledger import Chain, TxType, create_checkpoint, load_chain, save_chain, state_from_checkpoint
from .trustgraph import TrustGraph, TrustPath, build_trust_graph, find_valid_path, is_valid_path
from .selection import PartialGraphView, ViewSpec, build_view, estimate_storage, merge_views
from .lightclient import Bundle, LightClient, make_bundle, verify_bundle
from .authproto import AbortReason, AuthSession, Role, SessionState, run_session
from .schedule import KeyRing, Schedule, build_chain, load_schedule
from .simnet import Scenario, SimReport, inject_fault, load_scenario, run_scenario
from .verify import VerificationOutcome, verify_bundle_file, verify_chain_file

__all__ = [
    "Hash256",
    "KeyPair",
    "sha256",
    "GenesisConfig",
    "ProtocolSettings",
    "load_genesis",
    "Chain",
    "TxType",
    "create_checkpoint",
    "load_chain",
    "save_chain",
    "state_from_checkpoint",
    "TrustGraph",
    "TrustPath",
    "build_trust_graph",
    "find_valid_path",
    "is_valid_path",
    "PartialGraphView",
    "ViewSpec",
    "build_view",
    "estimate_storage",
    "merge_views",
    "Bundle",
    "LightClient",
    "make_bundle",
    "verify_bundle",
    "AbortReason",
    "AuthSession",
    "Role",
    "SessionState",
    "run_session",
    "KeyRing",
    "Schedule",
    "build_chain",
    "load_schedule",
    "Scenario",
    "SimReport",
    "inject_fault",
    "load_scenario",
    "run_scenario",
    "VerificationOutcome",
    "verify_bundle_file",
    "verify_chain_file",
]

"""
File-level verification of chain and bundle files.

Three outcomes:
- PASS: every check passed within the stated scope
- FAIL: integrity violated (bad encoding, bad link, bad proof, invalid transaction)
- INCONCLUSIVE: verification could not be carried out (file missing, unreadable)
"""

import logging
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional

from .crypto import Hash256
from .errors import EncodingError, LedgerError, LightClientError, TrustLedgerError, TxError
from .ledger import Chain, TxType
from .lightclient import Bundle, verify_bundle

logger = logging.getLogger(__name__)


class VerificationOutcome(Enum):
    PASS = "PASS"
    FAIL = "FAIL"
    INCONCLUSIVE = "INCONCLUSIVE"


class VerificationResult:
    """Verification result with separate error / inconclusive / warning channels."""

    def __init__(self, outcome: VerificationOutcome = VerificationOutcome.PASS):
        self.outcome = outcome
        self.errors: List[str] = []
        self.warnings: List[str] = []
        self.inconclusive_reasons: List[str] = []
        self.details: Dict[str, Any] = {}

    @property
    def passed(self) -> bool:
        return self.outcome is VerificationOutcome.PASS

    def add_error(self, msg: str):
        """Add error (triggers FAIL)."""
        self.errors.append(msg)
        self.outcome = VerificationOutcome.FAIL

    def add_inconclusive(self, msg: str):
        self.inconclusive_reasons.append(msg)
        if self.outcome != VerificationOutcome.FAIL:
            self.outcome = VerificationOutcome.INCONCLUSIVE

    def add_warning(self, msg: str):
        """Add warning (informational only)."""
        self.warnings.append(msg)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "outcome": self.outcome.value,
            "errors": self.errors,
            "inconclusive_reasons": self.inconclusive_reasons,
            "warnings": self.warnings,
            "details": self.details,
            "scope": "ledger_integrity_only",
            "does_not_verify": [
                "revocation_completeness",
                "freshness_against_live_network",
                "entity_real_world_identity",
            ],
        }


def _read(path: str, result: VerificationResult) -> Optional[bytes]:
    try:
        return Path(path).read_bytes()
    except FileNotFoundError:
        result.add_inconclusive(f"File not found: {path} (verification infrastructure unavailable)")
    except PermissionError:
        result.add_inconclusive(f"Permission denied reading {path}")
    except OSError as e:
        result.add_inconclusive(f"Could not read {path}: {e}")
    return None


def verify_chain_file(path: str, genesis_hash: Optional[Hash256] = None) -> VerificationResult:
    """
    Replay a chain file from genesis.

    Returns:
    - PASS: every block links, every transaction applies
    - FAIL: corrupted encoding, broken link, invalid transaction or genesis mismatch
    - INCONCLUSIVE: file cannot be read
    """
    result = VerificationResult()
    data = _read(path, result)
    if data is None:
        return result

    try:
        chain = Chain.decode(data)
    except EncodingError as e:
        result.add_error(f"Chain file corrupted: {e}")
        return result
    except TxError as e:
        result.add_error(f"Invalid transaction ({e.code}) at index {e.tx_index}: {e}")
        return result
    except LedgerError as e:
        result.add_error(f"Invalid block ({type(e).__name__}): {e}")
        return result

    genesis = chain.header_at(0).header_hash
    if genesis_hash is not None and genesis != genesis_hash:
        result.add_error(
            f"Genesis mismatch. Expected: {genesis_hash.short()}..., Got: {genesis.short()}..."
        )

    checkpoints = sum(
        1 for block in chain.blocks for tx in block.body if tx.tx_type == TxType.CHECKPOINT
    )
    if chain.height == 0:
        result.add_warning("Chain holds only the genesis block")
    result.details = {
        "height": chain.height,
        "tip": chain.tip.header_hash.hex(),
        "genesis": genesis.hex(),
        "entities": len(chain.state.accounts),
        "confirmations": len(chain.state.confirmations),
        "checkpoints": checkpoints,
    }
    return result


def verify_bundle_file(path: str, genesis_hash: Optional[Hash256] = None) -> VerificationResult:
    """
    Check a bundle file's seal, header chain and inclusion proofs, and that
    it induces exactly its declared view.
    """
    result = VerificationResult()
    data = _read(path, result)
    if data is None:
        return result

    try:
        bundle = Bundle.decode(data)
    except EncodingError as e:
        result.add_error(f"Bundle file corrupted: {e}")
        return result

    try:
        view = verify_bundle(bundle, genesis_hash)
    except LightClientError as e:
        result.add_error(f"{type(e).__name__}: {e}")
        return result
    except TrustLedgerError as e:
        result.add_error(f"Bundle rejected: {e}")
        return result

    result.add_warning(
        "Completeness of revocations cannot be checked offline; "
        "it rests on the provisioning ground station"
    )
    result.details = {
        "owner": view.owner.hex(),
        "owner_name": view.owner_record().name,
        "k_out": view.spec.k_out,
        "k_in": view.spec.k_in,
        "as_of_height": view.as_of_height,
        "nodes": len(view.nodes),
        "edges": len(view.edges),
        "txs": len(bundle.txs),
        "bytes": len(data),
    }
    return result

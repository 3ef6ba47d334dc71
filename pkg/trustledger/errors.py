"""
Exception hierarchy.

Every failure the library can signal derives from TrustLedgerError so callers
(the CLI in particular) can separate domain errors from programming errors.
"""

from typing import Optional


class TrustLedgerError(Exception):
    """Base class for all trustledger errors."""


class ConfigError(TrustLedgerError):
    """Genesis or settings file is malformed."""


class EncodingError(TrustLedgerError):
    """Canonical encoding or decoding failed."""


class MerkleError(TrustLedgerError):
    """Merkle tree input is invalid (empty list, bad index, duplicate leaves)."""


# ---------------------------------------------------------------------------
# Ledger
# ---------------------------------------------------------------------------

class LedgerError(TrustLedgerError):
    """Block or chain level rejection."""


class BadParent(LedgerError):
    """Block does not extend the current tip (hash or height mismatch)."""


class BadMerkleRoot(LedgerError):
    """Header merkle_root does not match the block body."""


class BadProducer(LedgerError):
    """Block producer is not the round-robin producer for its height."""


class RangeError(LedgerError):
    """Requested height is outside the chain."""


class TxError(LedgerError):
    """
    A transaction failed to apply.

    Rejects the containing block as a whole. `tx_index` is the position of the
    offending transaction inside the block body when known.
    """

    def __init__(self, message: str, tx_index: Optional[int] = None, tx_id: Optional[str] = None):
        super().__init__(message)
        self.tx_index = tx_index
        self.tx_id = tx_id

    @property
    def code(self) -> str:
        return type(self).__name__


class BadSignature(TxError):
    pass


class BadNonce(TxError):
    pass


class UnknownAccount(TxError):
    pass


class DuplicateRegistration(TxError):
    pass


class InsufficientBalance(TxError):
    pass


class SelfConfirmation(TxError):
    pass


class RevokeWithoutConfirmation(TxError):
    pass


class CheckpointMismatch(TxError):
    """Checkpoint digest or block reference does not recompute."""


class InvalidTransaction(TxError):
    """Structurally invalid transaction (scope range, misplaced coinbase, ...)."""


# ---------------------------------------------------------------------------
# Trust graph and views
# ---------------------------------------------------------------------------

class GraphError(TrustLedgerError):
    pass


class UnknownNode(GraphError):
    pass


class ViewError(TrustLedgerError):
    pass


class StaleViewError(ViewError):
    """Views built against different heights cannot be merged."""


class MergeConflict(ViewError):
    """Two views disagree on the record for the same node or edge."""


# ---------------------------------------------------------------------------
# Light client
# ---------------------------------------------------------------------------

class LightClientError(TrustLedgerError):
    pass


class BrokenHeaderChain(LightClientError):
    pass


class BadInclusionProof(LightClientError):
    pass


class InconsistentView(LightClientError):
    pass


class UnknownHeight(LightClientError):
    """Transaction cites a block height the local header chain does not hold."""


# ---------------------------------------------------------------------------
# Authentication protocol
# ---------------------------------------------------------------------------

class ProtocolError(TrustLedgerError):
    pass


class UnknownHash(ProtocolError):
    """Data request names a node hash that was never offered."""


class StaleSession(ProtocolError):
    """Message arrived in a state that does not accept it."""


class AuthAbort(ProtocolError):
    """Authentication check failed; carries the abort reason."""

    def __init__(self, reason, message: str = ""):
        super().__init__(message or reason.value)
        self.reason = reason


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------

class SimulationError(TrustLedgerError):
    pass


class InvalidScenario(SimulationError):
    pass


class UnknownTarget(SimulationError):
    pass

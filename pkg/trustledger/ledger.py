"""
Append-only ledger holding the PKI trust graph.

Transactions are account-centered: each carries a sender, a per-sender nonce,
a typed payload and an Ed25519 signature over its canonical bytes. Blocks link
their body to the header through a Merkle root over transaction ids and link
to their parent through the parent's header hash.

Block production is a deterministic round-robin over the producer accounts
listed in genesis: the producer for height h is producers[h % len(producers)].

Design guarantees:
1. LedgerState is a pure function of the applied block sequence
2. A block with one failing transaction leaves the state untouched
3. Committed headers never change (headers are frozen values)
"""

import logging
import threading
from dataclasses import dataclass, field, replace
from enum import IntEnum
from functools import cached_property
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

from .config import FORMAT_VERSION, MAX_NAME_BYTES, GenesisConfig
from .crypto import (
    PUBLIC_KEY_SIZE,
    SIGNATURE_SIZE,
    ZERO_HASH,
    AccountId,
    Hash256,
    KeyPair,
    account_id_for,
    sha256,
    verify_signature,
)
from .encoding import Reader, Writer, read_records, write_records
from .errors import (
    BadMerkleRoot,
    BadNonce,
    BadParent,
    BadProducer,
    BadSignature,
    CheckpointMismatch,
    DuplicateRegistration,
    EncodingError,
    InsufficientBalance,
    InvalidTransaction,
    LedgerError,
    RangeError,
    RevokeWithoutConfirmation,
    SelfConfirmation,
    TxError,
    UnknownAccount,
)
from .merkle import MerkleProof, merkle_prove, merkle_root

logger = logging.getLogger(__name__)

CHAIN_MAGIC = b"TLCHAIN1"

Pair = Tuple[AccountId, AccountId]
Properties = Tuple[Tuple[str, str], ...]


class TxType(IntEnum):
    COINBASE = 0
    TRANSFER = 1
    REGISTER_ENTITY = 2
    CONFIRM = 3
    REVOKE = 4
    CHECKPOINT = 5


# ---------------------------------------------------------------------------
# Payloads
# ---------------------------------------------------------------------------

def _write_properties(w: Writer, properties: Properties):
    w.u32(len(properties))
    for key, value in properties:
        w.text(key, MAX_NAME_BYTES)
        w.text(value, MAX_NAME_BYTES)


def _read_properties(r: Reader) -> Properties:
    return tuple((r.text(MAX_NAME_BYTES), r.text(MAX_NAME_BYTES)) for _ in range(r.u32()))


@dataclass(frozen=True)
class CoinbasePayload:
    recipient: AccountId
    amount: int

    def encode(self, w: Writer):
        w.hash(self.recipient).u64(self.amount)

    @classmethod
    def decode(cls, r: Reader) -> "CoinbasePayload":
        return cls(r.hash(), r.u64())


@dataclass(frozen=True)
class TransferPayload:
    recipient: AccountId
    amount: int

    def encode(self, w: Writer):
        w.hash(self.recipient).u64(self.amount)

    @classmethod
    def decode(cls, r: Reader) -> "TransferPayload":
        return cls(r.hash(), r.u64())


@dataclass(frozen=True)
class RegisterEntityPayload:
    """Creates a trust-graph node: name, key, optional type/model/authority properties."""

    name: str
    public_key: bytes
    properties: Properties = ()

    def encode(self, w: Writer):
        w.text(self.name, MAX_NAME_BYTES)
        w.blob(self.public_key, PUBLIC_KEY_SIZE)
        _write_properties(w, self.properties)

    @classmethod
    def decode(cls, r: Reader) -> "RegisterEntityPayload":
        return cls(r.text(MAX_NAME_BYTES), r.blob(PUBLIC_KEY_SIZE), _read_properties(r))


@dataclass(frozen=True)
class ConfirmPayload:
    subject: AccountId
    scope: int

    def encode(self, w: Writer):
        w.hash(self.subject).u8(self.scope)

    @classmethod
    def decode(cls, r: Reader) -> "ConfirmPayload":
        return cls(r.hash(), r.u8())


@dataclass(frozen=True)
class RevokePayload:
    subject: AccountId

    def encode(self, w: Writer):
        w.hash(self.subject)

    @classmethod
    def decode(cls, r: Reader) -> "RevokePayload":
        return cls(r.hash())


@dataclass(frozen=True)
class CheckpointPayload:
    at_height: int
    at_block: Hash256
    state_digest: Hash256

    def encode(self, w: Writer):
        w.u64(self.at_height).hash(self.at_block).hash(self.state_digest)

    @classmethod
    def decode(cls, r: Reader) -> "CheckpointPayload":
        return cls(r.u64(), r.hash(), r.hash())


Payload = Union[
    CoinbasePayload,
    TransferPayload,
    RegisterEntityPayload,
    ConfirmPayload,
    RevokePayload,
    CheckpointPayload,
]

_PAYLOAD_TYPES = {
    TxType.COINBASE: CoinbasePayload,
    TxType.TRANSFER: TransferPayload,
    TxType.REGISTER_ENTITY: RegisterEntityPayload,
    TxType.CONFIRM: ConfirmPayload,
    TxType.REVOKE: RevokePayload,
    TxType.CHECKPOINT: CheckpointPayload,
}


# ---------------------------------------------------------------------------
# Transactions, headers, blocks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Transaction:
    tx_type: TxType
    sender: Optional[AccountId]
    nonce: int
    payload: Payload
    signature: Optional[bytes] = None

    def __post_init__(self):
        if not isinstance(self.payload, _PAYLOAD_TYPES[self.tx_type]):
            raise EncodingError(
                f"{self.tx_type.name} transaction carries a {type(self.payload).__name__}"
            )

    def signing_bytes(self) -> bytes:
        """Canonical bytes without the signature; this is what the sender signs."""
        w = Writer().u8(FORMAT_VERSION).u8(int(self.tx_type))
        w.optional(self.sender, Writer.hash)
        w.u64(self.nonce)
        self.payload.encode(w)
        return w.getvalue()

    def canonical_bytes(self) -> bytes:
        w = Writer().raw(self.signing_bytes())
        w.optional(self.signature, lambda w_, sig: w_.blob(sig, SIGNATURE_SIZE))
        return w.getvalue()

    @cached_property
    def tx_id(self) -> Hash256:
        return sha256(self.canonical_bytes())

    def signed(self, key: KeyPair) -> "Transaction":
        return replace(self, signature=key.sign(self.signing_bytes()))

    @classmethod
    def decode(cls, data: bytes) -> "Transaction":
        r = Reader(data)
        version = r.u8()
        if version != FORMAT_VERSION:
            raise EncodingError(f"Unsupported transaction format version {version}")
        try:
            tx_type = TxType(r.u8())
        except ValueError as e:
            raise EncodingError(f"Unknown transaction type: {e}") from e
        sender = r.optional(Reader.hash)
        nonce = r.u64()
        payload = _PAYLOAD_TYPES[tx_type].decode(r)
        signature = r.optional(lambda r_: r_.blob(SIGNATURE_SIZE))
        r.expect_end()
        return cls(tx_type, sender, nonce, payload, signature)


@dataclass(frozen=True)
class BlockHeader:
    height: int
    parent_hash: Hash256
    merkle_root: Hash256
    timestamp: int
    producer: AccountId

    def canonical_bytes(self) -> bytes:
        return (
            Writer()
            .u8(FORMAT_VERSION)
            .u64(self.height)
            .hash(self.parent_hash)
            .hash(self.merkle_root)
            .u64(self.timestamp)
            .hash(self.producer)
            .getvalue()
        )

    @cached_property
    def header_hash(self) -> Hash256:
        return sha256(self.canonical_bytes())

    @classmethod
    def decode(cls, data: bytes) -> "BlockHeader":
        r = Reader(data)
        version = r.u8()
        if version != FORMAT_VERSION:
            raise EncodingError(f"Unsupported header format version {version}")
        header = cls(r.u64(), r.hash(), r.hash(), r.u64(), r.hash())
        r.expect_end()
        return header


def canonical_bytes(item: Union[Transaction, BlockHeader]) -> bytes:
    """Canonical encoding of a transaction or a block header."""
    return item.canonical_bytes()


@dataclass(frozen=True)
class Block:
    header: BlockHeader
    body: Tuple[Transaction, ...]

    @property
    def tx_ids(self) -> List[Hash256]:
        return [tx.tx_id for tx in self.body]

    def proof_for(self, index: int) -> MerkleProof:
        return merkle_prove(self.tx_ids, index)

    def canonical_bytes(self) -> bytes:
        w = Writer().blob(self.header.canonical_bytes())
        w.u32(len(self.body))
        for tx in self.body:
            w.blob(tx.canonical_bytes())
        return w.getvalue()

    @classmethod
    def decode(cls, data: bytes) -> "Block":
        r = Reader(data)
        header = BlockHeader.decode(r.blob())
        body = tuple(Transaction.decode(r.blob()) for _ in range(r.u32()))
        r.expect_end()
        return cls(header, body)


# ---------------------------------------------------------------------------
# State
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AccountRecord:
    public_key: bytes
    name: str
    properties: Properties
    balance: int
    nonce: int
    registration_tx: Hash256
    registered_at: int


@dataclass(frozen=True)
class ConfirmationRecord:
    scope: int
    since_height: int
    tx_id: Hash256


@dataclass
class LedgerState:
    """
    Account balances, nonces, registrations and active confirmations.

    Values handed out by Chain and apply_transaction are never mutated again;
    only private scratch copies are.
    """

    accounts: Dict[AccountId, AccountRecord] = field(default_factory=dict)
    confirmations: Dict[Pair, ConfirmationRecord] = field(default_factory=dict)
    height: int = 0

    def copy(self) -> "LedgerState":
        return LedgerState(dict(self.accounts), dict(self.confirmations), self.height)

    def balance(self, account: AccountId) -> int:
        record = self.accounts.get(account)
        return record.balance if record else 0

    def find_by_name(self, name: str) -> List[AccountId]:
        return sorted(aid for aid, rec in self.accounts.items() if rec.name == name)

    def canonical_bytes(self) -> bytes:
        w = Writer().u8(FORMAT_VERSION).u64(self.height)
        w.u32(len(self.accounts))
        for aid in sorted(self.accounts):
            rec = self.accounts[aid]
            w.hash(aid).blob(rec.public_key, PUBLIC_KEY_SIZE).text(rec.name, MAX_NAME_BYTES)
            _write_properties(w, rec.properties)
            w.u64(rec.balance).u64(rec.nonce).hash(rec.registration_tx).u64(rec.registered_at)
        w.u32(len(self.confirmations))
        for issuer, subject in sorted(self.confirmations):
            conf = self.confirmations[(issuer, subject)]
            w.hash(issuer).hash(subject).u8(conf.scope).u64(conf.since_height).hash(conf.tx_id)
        return w.getvalue()

    def digest(self) -> Hash256:
        return sha256(self.canonical_bytes())


@dataclass(frozen=True)
class ChainParams:
    """Genesis-fixed parameters: maximum scope m, block reward, producer rotation."""

    m: int
    reward: int
    producers: Tuple[AccountId, ...]

    def producer_for(self, height: int) -> AccountId:
        return self.producers[height % len(self.producers)]

    def canonical_bytes(self) -> bytes:
        w = Writer().u8(FORMAT_VERSION).u8(self.m).u64(self.reward).u32(len(self.producers))
        for producer in self.producers:
            w.hash(producer)
        return w.getvalue()

    @classmethod
    def decode(cls, data: bytes) -> "ChainParams":
        r = Reader(data)
        if r.u8() != FORMAT_VERSION:
            raise EncodingError("Unsupported chain params format version")
        m, reward = r.u8(), r.u64()
        producers = tuple(r.hash() for _ in range(r.u32()))
        r.expect_end()
        if not producers:
            raise EncodingError("Chain params list no producers")
        return cls(m, reward, producers)


@dataclass(frozen=True)
class BlockContext:
    """What a transaction may see of its block: height, producer, parent linkage."""

    height: int
    producer: AccountId
    params: ChainParams
    parent_hash: Hash256 = ZERO_HASH
    parent_digest: Optional[Hash256] = None

    @property
    def is_genesis(self) -> bool:
        return self.height == 0


# ---------------------------------------------------------------------------
# Transaction application
# ---------------------------------------------------------------------------

def apply_transaction(
    state: LedgerState, tx: Transaction, context: BlockContext, tx_index: int = 0
) -> LedgerState:
    """Apply one transaction and return the resulting state; state is not modified."""
    scratch = state.copy()
    _apply_in_place(scratch, tx, context, tx_index)
    return scratch


def _fail(error_cls, message: str, tx: Transaction, tx_index: int):
    try:
        tx_id = tx.tx_id.hex()
    except EncodingError:
        tx_id = None
    raise error_cls(message, tx_index=tx_index, tx_id=tx_id)


def _apply_in_place(state: LedgerState, tx: Transaction, ctx: BlockContext, tx_index: int):
    if tx.tx_type == TxType.COINBASE:
        _apply_coinbase(state, tx, ctx, tx_index)
        return

    if tx.sender is None:
        _fail(InvalidTransaction, f"{tx.tx_type.name} transaction without sender", tx, tx_index)

    if tx.tx_type == TxType.REGISTER_ENTITY:
        _apply_register(state, tx, ctx, tx_index)
        return

    sender = state.accounts.get(tx.sender)
    if sender is None:
        _fail(UnknownAccount, f"Sender {tx.sender.short()} is not registered", tx, tx_index)
    if tx.signature is None or not verify_signature(
        sender.public_key, tx.signing_bytes(), tx.signature
    ):
        _fail(BadSignature, f"Signature of {tx.tx_type.name} does not verify", tx, tx_index)
    if tx.nonce != sender.nonce + 1:
        _fail(
            BadNonce,
            f"Nonce {tx.nonce} for {tx.sender.short()}, expected {sender.nonce + 1}",
            tx,
            tx_index,
        )

    payload = tx.payload
    if tx.tx_type == TxType.TRANSFER:
        recipient = state.accounts.get(payload.recipient)
        if recipient is None:
            _fail(UnknownAccount, "Transfer recipient is not registered", tx, tx_index)
        if sender.balance < payload.amount:
            _fail(
                InsufficientBalance,
                f"Balance {sender.balance} below transfer amount {payload.amount}",
                tx,
                tx_index,
            )
        sender = replace(sender, balance=sender.balance - payload.amount)
        state.accounts[tx.sender] = sender
        recipient = state.accounts[payload.recipient]
        state.accounts[payload.recipient] = replace(
            recipient, balance=recipient.balance + payload.amount
        )

    elif tx.tx_type == TxType.CONFIRM:
        if payload.subject == tx.sender:
            _fail(SelfConfirmation, "An entity cannot confirm its own binding", tx, tx_index)
        if payload.subject not in state.accounts:
            _fail(UnknownAccount, "Confirmed subject is not registered", tx, tx_index)
        if not 1 <= payload.scope <= ctx.params.m:
            _fail(
                InvalidTransaction,
                f"Scope {payload.scope} outside 1..{ctx.params.m}",
                tx,
                tx_index,
            )
        # Re-confirmation overwrites scope and since_height.
        state.confirmations[(tx.sender, payload.subject)] = ConfirmationRecord(
            payload.scope, ctx.height, tx.tx_id
        )

    elif tx.tx_type == TxType.REVOKE:
        if (tx.sender, payload.subject) not in state.confirmations:
            _fail(
                RevokeWithoutConfirmation,
                f"No active confirmation {tx.sender.short()} -> {payload.subject.short()}",
                tx,
                tx_index,
            )
        del state.confirmations[(tx.sender, payload.subject)]

    elif tx.tx_type == TxType.CHECKPOINT:
        if tx.sender not in ctx.params.producers:
            _fail(InvalidTransaction, "Only producers may issue checkpoints", tx, tx_index)
        if (
            ctx.is_genesis
            or payload.at_height != ctx.height - 1
            or payload.at_block != ctx.parent_hash
            or payload.state_digest != ctx.parent_digest
        ):
            _fail(
                CheckpointMismatch,
                f"Checkpoint for height {payload.at_height} does not match the parent block",
                tx,
                tx_index,
            )

    state.accounts[tx.sender] = replace(state.accounts[tx.sender], nonce=tx.nonce)


def _apply_coinbase(state: LedgerState, tx: Transaction, ctx: BlockContext, tx_index: int):
    payload = tx.payload
    if tx.sender is not None or tx.signature is not None or tx.nonce != 0:
        _fail(InvalidTransaction, "Coinbase carries sender, signature or nonce", tx, tx_index)
    if not ctx.is_genesis:
        if tx_index != 0:
            _fail(InvalidTransaction, "Coinbase must be the first transaction", tx, tx_index)
        if payload.recipient != ctx.producer or payload.amount != ctx.params.reward:
            _fail(
                InvalidTransaction,
                f"Coinbase must pay the reward {ctx.params.reward} to the block producer",
                tx,
                tx_index,
            )
    recipient = state.accounts.get(payload.recipient)
    if recipient is None:
        _fail(UnknownAccount, "Coinbase recipient is not registered", tx, tx_index)
    credited = replace(recipient, balance=recipient.balance + payload.amount)
    state.accounts[payload.recipient] = credited


def _apply_register(state: LedgerState, tx: Transaction, ctx: BlockContext, tx_index: int):
    payload = tx.payload
    if len(payload.public_key) != PUBLIC_KEY_SIZE:
        _fail(InvalidTransaction, "Registration public key must be 32 bytes", tx, tx_index)
    if len(payload.name.encode("utf-8")) > MAX_NAME_BYTES:
        _fail(InvalidTransaction, f"Entity name exceeds {MAX_NAME_BYTES} bytes", tx, tx_index)
    if tx.sender != account_id_for(payload.public_key):
        _fail(InvalidTransaction, "Registration sender must be the key's account id", tx, tx_index)
    if tx.sender in state.accounts:
        _fail(
            DuplicateRegistration,
            f"Account {tx.sender.short()} ({payload.name!r}) is already registered",
            tx,
            tx_index,
        )
    # Genesis registrations are anchored by the pinned genesis hash instead of a signature.
    if not (ctx.is_genesis and tx.signature is None):
        if tx.signature is None or not verify_signature(
            payload.public_key, tx.signing_bytes(), tx.signature
        ):
            _fail(BadSignature, "Registration is not signed by the registered key", tx, tx_index)
    if tx.nonce != 1:
        _fail(BadNonce, f"Registration nonce must be 1, got {tx.nonce}", tx, tx_index)
    state.accounts[tx.sender] = AccountRecord(
        public_key=payload.public_key,
        name=payload.name,
        properties=tuple(payload.properties),
        balance=0,
        nonce=1,
        registration_tx=tx.tx_id,
        registered_at=ctx.height,
    )


# ---------------------------------------------------------------------------
# Blocks
# ---------------------------------------------------------------------------

def check_block_shape(block: Block, params: ChainParams):
    """Header-to-body and producer checks that do not need state."""
    if not block.body:
        raise BadMerkleRoot(f"Block {block.header.height} has an empty body")
    tx_ids = block.tx_ids
    if len(set(tx_ids)) != len(tx_ids):
        raise BadMerkleRoot(f"Block {block.header.height} repeats a transaction")
    if merkle_root(tx_ids) != block.header.merkle_root:
        raise BadMerkleRoot(
            f"Merkle root mismatch at height {block.header.height}. "
            f"Header: {block.header.merkle_root.short()}..., "
            f"body: {merkle_root(tx_ids).short()}..."
        )
    expected = params.producer_for(block.header.height)
    if block.header.producer != expected:
        raise BadProducer(
            f"Block {block.header.height} produced by {block.header.producer.short()}, "
            f"expected {expected.short()}"
        )


def apply_block(
    state: LedgerState,
    block: Block,
    params: ChainParams,
    parent_hash: Hash256,
    parent_height: Optional[int],
) -> LedgerState:
    """
    Validate block against its parent and apply its body on a scratch copy.

    parent_height is None for the genesis block. Returns the new state; the
    input state is never modified, so any error leaves it as it was.
    """
    header = block.header
    expected_height = 0 if parent_height is None else parent_height + 1
    if header.height != expected_height or header.parent_hash != parent_hash:
        raise BadParent(
            f"Block at height {header.height} does not extend "
            f"{parent_hash.short()}... at height {parent_height}"
        )
    check_block_shape(block, params)

    ctx = BlockContext(
        height=header.height,
        producer=header.producer,
        params=params,
        parent_hash=parent_hash,
        parent_digest=None if parent_height is None else state.digest(),
    )
    scratch = state.copy()
    for index, tx in enumerate(block.body):
        _apply_in_place(scratch, tx, ctx, index)
    scratch.height = header.height
    return scratch


def build_genesis_block(config: GenesisConfig) -> Tuple[ChainParams, Block]:
    """Genesis: one unsigned registration per genesis account, then the initial balances."""
    params = ChainParams(
        m=config.m,
        reward=config.reward,
        producers=tuple(account_id_for(a.public_key) for a in config.producers),
    )
    body: List[Transaction] = []
    for account in config.accounts:
        body.append(
            Transaction(
                TxType.REGISTER_ENTITY,
                account_id_for(account.public_key),
                1,
                RegisterEntityPayload(account.name, account.public_key, account.properties),
            )
        )
    for account in config.accounts:
        if account.balance:
            body.append(
                Transaction(
                    TxType.COINBASE,
                    None,
                    0,
                    CoinbasePayload(account_id_for(account.public_key), account.balance),
                )
            )
    header = BlockHeader(
        height=0,
        parent_hash=ZERO_HASH,
        merkle_root=merkle_root([tx.tx_id for tx in body]),
        timestamp=0,
        producer=params.producer_for(0),
    )
    return params, Block(header, tuple(body))


# ---------------------------------------------------------------------------
# Chain
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PairEvent:
    """Latest confirm or revoke for an (issuer, subject) pair."""

    tx_type: TxType
    tx_id: Hash256
    height: int


class Chain:
    """
    Single-writer chain: appends are serialized by a lock, committed blocks
    are immutable and may be shared freely.
    """

    def __init__(self, params: ChainParams, genesis: Block):
        self.params = params
        self._lock = threading.Lock()
        self._blocks: List[Block] = []
        self._digests: List[Hash256] = []
        self._tx_locations: Dict[Hash256, Tuple[int, int]] = {}
        self._pair_events: Dict[Pair, PairEvent] = {}
        self._state = apply_block(LedgerState(), genesis, params, ZERO_HASH, None)
        self._commit(genesis, self._state)

    @classmethod
    def from_genesis(cls, config: GenesisConfig) -> "Chain":
        params, genesis = build_genesis_block(config)
        return cls(params, genesis)

    # -- queries ----------------------------------------------------------

    @property
    def state(self) -> LedgerState:
        return self._state

    @property
    def height(self) -> int:
        return len(self._blocks) - 1

    @property
    def tip(self) -> BlockHeader:
        return self._blocks[-1].header

    @property
    def blocks(self) -> Tuple[Block, ...]:
        return tuple(self._blocks)

    @property
    def headers(self) -> List[BlockHeader]:
        return [b.header for b in self._blocks]

    def block_at(self, height: int) -> Block:
        if not 0 <= height <= self.height:
            raise RangeError(f"Height {height} outside 0..{self.height}")
        return self._blocks[height]

    def header_at(self, height: int) -> BlockHeader:
        return self.block_at(height).header

    def state_digest_at(self, height: int) -> Hash256:
        self.block_at(height)
        return self._digests[height]

    def state_at(self, height: int) -> LedgerState:
        """State after the block at height, by replay from genesis."""
        self.block_at(height)
        state = LedgerState()
        parent_hash, parent_height = ZERO_HASH, None
        for block in self._blocks[:height + 1]:
            state = apply_block(state, block, self.params, parent_hash, parent_height)
            parent_hash, parent_height = block.header.header_hash, block.header.height
        return state

    def locate(self, tx_id: Hash256) -> Optional[Tuple[int, int]]:
        """(height, index) of a committed transaction."""
        return self._tx_locations.get(tx_id)

    def transaction(self, tx_id: Hash256) -> Transaction:
        height, index = self._tx_locations[tx_id]
        return self._blocks[height].body[index]

    def proof_for(self, tx_id: Hash256) -> Tuple[int, MerkleProof]:
        height, index = self._tx_locations[tx_id]
        return height, self._blocks[height].proof_for(index)

    def latest_pair_event(self, issuer: AccountId, subject: AccountId) -> Optional[PairEvent]:
        return self._pair_events.get((issuer, subject))

    def pair_events(self) -> Dict[Pair, PairEvent]:
        return dict(self._pair_events)

    # -- writes -----------------------------------------------------------

    def append(self, block: Block) -> LedgerState:
        """Validate block against the tip and commit it atomically."""
        with self._lock:
            try:
                new_state = apply_block(
                    self._state, block, self.params, self.tip.header_hash, self.height
                )
            except LedgerError as e:
                logger.warning("Rejected block at height %s: %s", block.header.height, e)
                raise
            self._commit(block, new_state)
            self._state = new_state
        logger.info(
            "Appended block %d (%d txs) hash=%s",
            block.header.height,
            len(block.body),
            block.header.header_hash.short(),
        )
        return new_state

    def _commit(self, block: Block, state: LedgerState):
        height = block.header.height
        self._blocks.append(block)
        self._digests.append(state.digest())
        for index, tx in enumerate(block.body):
            self._tx_locations[tx.tx_id] = (height, index)
            if tx.tx_type in (TxType.CONFIRM, TxType.REVOKE):
                self._pair_events[(tx.sender, tx.payload.subject)] = PairEvent(
                    tx.tx_type, tx.tx_id, height
                )

    def assemble_block(
        self, candidates: Iterable[Transaction], timestamp: Optional[int] = None
    ) -> Tuple[Block, List[Tuple[Transaction, TxError]]]:
        """
        Build the next block from candidates.

        Candidates that would fail on top of the earlier ones are dropped and
        returned with their error. The Coinbase for the round-robin producer
        comes first when the reward is non-zero.
        """
        height = self.height + 1
        producer = self.params.producer_for(height)
        ctx = BlockContext(
            height=height,
            producer=producer,
            params=self.params,
            parent_hash=self.tip.header_hash,
            parent_digest=self._digests[-1],
        )
        scratch = self._state.copy()
        body: List[Transaction] = []
        rejected: List[Tuple[Transaction, TxError]] = []
        if self.params.reward:
            coinbase = Transaction(
                TxType.COINBASE, None, 0, CoinbasePayload(producer, self.params.reward)
            )
            _apply_in_place(scratch, coinbase, ctx, 0)
            body.append(coinbase)
        seen = {tx.tx_id for tx in body}
        for tx in candidates:
            if tx.tx_id in seen or tx.tx_id in self._tx_locations:
                continue
            trial = scratch.copy()
            try:
                _apply_in_place(trial, tx, ctx, len(body))
            except TxError as e:
                logger.warning("Dropping %s from block %d: %s", tx.tx_type.name, height, e)
                rejected.append((tx, e))
                continue
            scratch = trial
            body.append(tx)
            seen.add(tx.tx_id)
        if not body:
            raise LedgerError(f"Nothing to put in block {height}")
        header = BlockHeader(
            height=height,
            parent_hash=self.tip.header_hash,
            merkle_root=merkle_root([tx.tx_id for tx in body]),
            timestamp=height if timestamp is None else timestamp,
            producer=producer,
        )
        return Block(header, tuple(body)), rejected

    def produce_block(
        self, candidates: Iterable[Transaction], timestamp: Optional[int] = None
    ) -> Block:
        block, _ = self.assemble_block(candidates, timestamp)
        self.append(block)
        return block

    # -- persistence ------------------------------------------------------

    def encode(self) -> bytes:
        records = [self.params.canonical_bytes()] + [b.canonical_bytes() for b in self._blocks]
        return CHAIN_MAGIC + write_records(records)

    @classmethod
    def decode(cls, data: bytes) -> "Chain":
        if not data.startswith(CHAIN_MAGIC):
            raise EncodingError("Not a chain file (bad magic)")
        records = read_records(Reader(data[len(CHAIN_MAGIC):]))
        if len(records) < 2:
            raise EncodingError("Chain file holds no genesis block")
        params = ChainParams.decode(records[0])
        chain = cls(params, Block.decode(records[1]))
        for record in records[2:]:
            chain.append(Block.decode(record))
        return chain


def validate_and_append(chain: Chain, block: Block) -> Tuple[Chain, LedgerState]:
    """Append block to chain; raises on any header or transaction error."""
    state = chain.append(block)
    return chain, state


def save_chain(chain: Chain, path: str):
    Path(path).write_bytes(chain.encode())


def load_chain(path: str) -> Chain:
    """Load and fully replay a chain file."""
    return Chain.decode(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Checkpoint:
    at_height: int
    at_block: Hash256
    state_digest: Hash256
    state_snapshot: LedgerState

    def verify(self) -> bool:
        return (
            self.state_snapshot.digest() == self.state_digest
            and self.state_snapshot.height == self.at_height
        )


def create_checkpoint(chain: Chain, height: int) -> Checkpoint:
    """Snapshot of the state after the block at height."""
    if not 0 <= height <= chain.height:
        raise RangeError(f"Cannot checkpoint height {height}; chain tip is {chain.height}")
    state = chain.state_at(height)
    return Checkpoint(
        at_height=height,
        at_block=chain.header_at(height).header_hash,
        state_digest=state.digest(),
        state_snapshot=state,
    )


def state_from_checkpoint(
    checkpoint: Checkpoint, blocks: Sequence[Block], params: ChainParams
) -> LedgerState:
    """State after blocks B_{m+1}..B_{m+n} given the checkpoint at B_m."""
    if not checkpoint.verify():
        raise CheckpointMismatch(
            f"Checkpoint at height {checkpoint.at_height} does not match its snapshot.\n"
            "REASON: state_digest must recompute from state_snapshot."
        )
    state = checkpoint.state_snapshot.copy()
    parent_hash, parent_height = checkpoint.at_block, checkpoint.at_height
    for block in blocks:
        state = apply_block(state, block, params, parent_hash, parent_height)
        parent_hash, parent_height = block.header.header_hash, block.header.height
    return state


# ---------------------------------------------------------------------------
# Signed transaction builders
# ---------------------------------------------------------------------------

def make_register(key: KeyPair, name: str, properties: Properties = ()) -> Transaction:
    payload = RegisterEntityPayload(name, key.public_key, tuple(sorted(properties)))
    return Transaction(TxType.REGISTER_ENTITY, key.account_id, 1, payload).signed(key)


def make_confirm(key: KeyPair, nonce: int, subject: AccountId, scope: int) -> Transaction:
    payload = ConfirmPayload(subject, scope)
    return Transaction(TxType.CONFIRM, key.account_id, nonce, payload).signed(key)


def make_revoke(key: KeyPair, nonce: int, subject: AccountId) -> Transaction:
    return Transaction(TxType.REVOKE, key.account_id, nonce, RevokePayload(subject)).signed(key)


def make_transfer(key: KeyPair, nonce: int, recipient: AccountId, amount: int) -> Transaction:
    return Transaction(
        TxType.TRANSFER, key.account_id, nonce, TransferPayload(recipient, amount)
    ).signed(key)


def make_checkpoint_tx(key: KeyPair, nonce: int, chain: Chain) -> Transaction:
    """Checkpoint transaction referencing the current tip, for inclusion in the next block."""
    payload = CheckpointPayload(
        at_height=chain.height,
        at_block=chain.tip.header_hash,
        state_digest=chain.state_digest_at(chain.height),
    )
    return Transaction(TxType.CHECKPOINT, key.account_id, nonce, payload).signed(key)

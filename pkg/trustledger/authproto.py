"""
Two-party authentication over partial trust-graph views.

Steps (the responder Bob proves itself to the initiator Alice):
1. Bob sends HelloMsg: his id and the registration hashes of the nodes on
   his incoming paths.
2. Alice intersects them with the nodes on her outgoing paths and requests
   data for the common ones.
3. Bob sends the registrations, confirmations and revocations on his incoming
   paths through those nodes, each with a Merkle inclusion proof. Alice checks
   every proof against her own headers and searches for a valid path to Bob.
4. Alice challenges Bob with a fresh nonce; Bob signs it with the key his
   registration binds.

The signed response also covers a digest of the messages exchanged so far,
so a message altered in transit makes the two transcripts differ and the
session fails at step 4 at the latest.

Design guarantees:
1. Authenticated implies every path edge traces to a Merkle-verified,
   unrevoked confirmation, the path satisfies the scope rule and the
   responder holds the private key of the path's terminal node
2. Aborted and Authenticated are terminal
3. Any message outside the fixed order aborts the session (StaleSession)
"""

import logging
import secrets
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, FrozenSet, List, Optional, Sequence, Set, Tuple, Union

import networkx as nx

from .config import ProtocolSettings, settings_or_default
from .crypto import SIGNATURE_SIZE, AccountId, Hash256, KeyPair, sha256, verify_signature
from .encoding import Reader, Writer
from .errors import (
    AuthAbort,
    BadInclusionProof,
    EncodingError,
    ProtocolError,
    StaleSession,
    TrustLedgerError,
    UnknownHash,
    UnknownHeight,
)
from .ledger import TxType
from .lightclient import (
    HeaderChain,
    LightClient,
    ProvisionedTx,
    decode_provisioned,
    encode_provisioned,
    ingest_peer_data,
)
from .selection import PartialGraphView
from .trustgraph import TrustGraph, TrustPath, find_valid_path

logger = logging.getLogger(__name__)

NONCE_SIZE = 32
_RESPONSE_DOMAIN = b"trustledger-auth-v1"


class Role(Enum):
    INITIATOR = "initiator"
    RESPONDER = "responder"


class SessionState(Enum):
    START = "Start"
    HELLO_SENT = "HelloSent"
    HELLO_RECEIVED = "HelloReceived"
    DATA_REQUESTED = "DataRequested"
    PATH_VERIFIED = "PathVerified"
    CHALLENGED = "Challenged"
    AUTHENTICATED = "Authenticated"
    ABORTED = "Aborted"


class AbortReason(Enum):
    NO_COMMON_NODE = "NoCommonNode"
    INTEGRITY_FAILURE = "IntegrityFailure"
    NO_VALID_PATH = "NoValidPath"
    AUTH_FAILURE = "AuthFailure"
    STALE_VIEW = "StaleView"
    STALE_SESSION = "StaleSession"


# ---------------------------------------------------------------------------
# Messages and wire format
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HelloMsg:
    responder_id: AccountId
    incoming_node_hashes: Tuple[Hash256, ...]
    as_of_height: int


@dataclass(frozen=True)
class DataRequest:
    requested_node_hashes: Tuple[Hash256, ...]


@dataclass(frozen=True)
class PathData:
    txs: Tuple[ProvisionedTx, ...]


@dataclass(frozen=True)
class ChallengeMsg:
    nonce: bytes
    initiator_id: AccountId


@dataclass(frozen=True)
class ResponseMsg:
    signature: bytes


Message = Union[HelloMsg, DataRequest, PathData, ChallengeMsg, ResponseMsg]


class MessageTag:
    HELLO = 1
    DATA_REQUEST = 2
    PATH_DATA = 3
    CHALLENGE = 4
    RESPONSE = 5


def _write_hash_list(w: Writer, hashes: Sequence[Hash256]):
    w.u32(len(hashes))
    for h in hashes:
        w.hash(h)


def _read_hash_list(r: Reader) -> Tuple[Hash256, ...]:
    hashes = tuple(r.hash() for _ in range(r.u32()))
    if any(a >= b for a, b in zip(hashes, hashes[1:])):
        raise EncodingError("Hash list is not sorted and deduplicated")
    return hashes


def encode_message(msg: Message) -> bytes:
    """One-byte type tag followed by the message's canonical fields."""
    w = Writer()
    if isinstance(msg, HelloMsg):
        w.u8(MessageTag.HELLO).hash(msg.responder_id)
        _write_hash_list(w, msg.incoming_node_hashes)
        w.u64(msg.as_of_height)
    elif isinstance(msg, DataRequest):
        w.u8(MessageTag.DATA_REQUEST)
        _write_hash_list(w, msg.requested_node_hashes)
    elif isinstance(msg, PathData):
        w.u8(MessageTag.PATH_DATA).blob(encode_provisioned(msg.txs))
    elif isinstance(msg, ChallengeMsg):
        if len(msg.nonce) != NONCE_SIZE:
            raise EncodingError(f"Challenge nonce must be {NONCE_SIZE} bytes")
        w.u8(MessageTag.CHALLENGE).raw(msg.nonce).hash(msg.initiator_id)
    elif isinstance(msg, ResponseMsg):
        w.u8(MessageTag.RESPONSE).blob(msg.signature, SIGNATURE_SIZE)
    else:
        raise EncodingError(f"Not a protocol message: {type(msg).__name__}")
    return w.getvalue()


def decode_message(data: bytes) -> Message:
    r = Reader(data)
    tag = r.u8()
    msg: Message
    if tag == MessageTag.HELLO:
        msg = HelloMsg(r.hash(), _read_hash_list(r), r.u64())
    elif tag == MessageTag.DATA_REQUEST:
        msg = DataRequest(_read_hash_list(r))
    elif tag == MessageTag.PATH_DATA:
        msg = PathData(decode_provisioned(r.blob()))
    elif tag == MessageTag.CHALLENGE:
        msg = ChallengeMsg(r.raw(NONCE_SIZE), r.hash())
    elif tag == MessageTag.RESPONSE:
        msg = ResponseMsg(r.blob(SIGNATURE_SIZE))
    else:
        raise EncodingError(f"Unknown message tag {tag}")
    r.expect_end()
    return msg


# ---------------------------------------------------------------------------
# Protocol steps
# ---------------------------------------------------------------------------

def _registration_hashes(view: PartialGraphView, members) -> Dict[Hash256, AccountId]:
    return {view.nodes[node].registration_tx: node for node in members}


def make_hello(view: PartialGraphView) -> HelloMsg:
    """Registration hashes of the owner's incoming-side nodes, sorted."""
    hashes = _registration_hashes(view, view.in_nodes | {view.owner})
    return HelloMsg(view.owner, tuple(sorted(hashes)), view.as_of_height)


def find_common(initiator_view: PartialGraphView, hello: HelloMsg) -> FrozenSet[Hash256]:
    """Hello hashes that name nodes on the initiator's outgoing paths."""
    members = initiator_view.out_nodes | {initiator_view.owner}
    outgoing = _registration_hashes(initiator_view, members)
    return frozenset(outgoing).intersection(hello.incoming_node_hashes)


def _evidence(view: PartialGraphView, tx_id: Hash256) -> ProvisionedTx:
    try:
        return view.evidence[tx_id]
    except KeyError:
        raise ProtocolError(
            f"View holds no proved transaction {tx_id.short()}.\n"
            "REASON: only views rebuilt by verify_bundle can serve path data."
        ) from None


def serve_request(responder_view: PartialGraphView, req: DataRequest) -> PathData:
    """
    Registrations and confirmations on the responder's incoming paths through
    each requested node, plus the revocations it knows for pairs touching them.
    """
    offered = _registration_hashes(responder_view, responder_view.in_nodes | {responder_view.owner})
    unknown = [h for h in req.requested_node_hashes if h not in offered]
    if unknown:
        raise UnknownHash(
            f"Request names {len(unknown)} hash(es) never offered, first {unknown[0].short()}"
        )

    incoming = responder_view.in_nodes | {responder_view.owner}
    g = nx.DiGraph()
    g.add_nodes_from(incoming)
    g.add_edges_from(
        (issuer, subject)
        for issuer, subject in responder_view.edges
        if issuer in incoming and subject in incoming and issuer != responder_view.owner
    )

    nodes: Set[AccountId] = set()
    for h in req.requested_node_hashes:
        start = offered[h]
        nodes.add(start)
        nodes.update(nx.descendants(g, start))
    edges: Set[Tuple[AccountId, AccountId]] = {(u, v) for u, v in g.edges if u in nodes}

    tx_ids = {responder_view.nodes[n].registration_tx for n in nodes}
    tx_ids.update(responder_view.edges[pair].tx_id for pair in edges)
    for ptx in responder_view.evidence.values():
        tx = ptx.tx
        if tx.tx_type != TxType.REVOKE:
            continue
        pair = (tx.sender, tx.payload.subject)
        touches = pair[0] in nodes or pair[1] in nodes
        if touches and responder_view.revoked.get(pair) == ptx.block_height:
            tx_ids.add(tx.tx_id)

    txs = sorted(
        (_evidence(responder_view, tx_id) for tx_id in tx_ids),
        key=lambda p: (p.block_height, p.leaf_index),
    )
    logger.debug(
        "Serving %d txs for %d requested node(s)", len(txs), len(req.requested_node_hashes)
    )
    return PathData(tuple(txs))


def verify_path(
    initiator_view: PartialGraphView,
    path_data: PathData,
    initiator_id: AccountId,
    responder_id: AccountId,
    trusted_headers: HeaderChain,
) -> Tuple[TrustPath, TrustGraph]:
    """
    Merge verified peer data into a session fragment and find a valid path.

    Peer transactions above the local tip cannot be checked and are left
    out. Raises AuthAbort(INTEGRITY_FAILURE) on a bad proof and
    AuthAbort(NO_VALID_PATH) when the fragment holds no valid path.
    """
    checkable = [p for p in path_data.txs if p.block_height <= trusted_headers.tip_height]
    if len(checkable) != len(path_data.txs):
        logger.warning(
            "Ignoring %d peer txs above local tip %d",
            len(path_data.txs) - len(checkable),
            trusted_headers.tip_height,
        )
    try:
        fragment = ingest_peer_data(initiator_view, checkable, trusted_headers)
    except (BadInclusionProof, UnknownHeight) as e:
        raise AuthAbort(AbortReason.INTEGRITY_FAILURE, str(e)) from e
    if initiator_id not in fragment.nodes or responder_id not in fragment.nodes:
        raise AuthAbort(AbortReason.NO_VALID_PATH, "Responder is not in the session fragment")
    path = find_valid_path(fragment, initiator_id, responder_id)
    if path is None:
        raise AuthAbort(AbortReason.NO_VALID_PATH, "No scope-valid path to the responder")
    return path, fragment


def response_bytes(
    nonce: bytes,
    initiator_id: AccountId,
    responder_id: AccountId,
    as_of_height: int,
    transcript: Hash256,
) -> bytes:
    """What the responder signs: nonce || initiator || responder || as_of_height || transcript."""
    return (
        Writer()
        .raw(_RESPONSE_DOMAIN)
        .raw(nonce)
        .hash(initiator_id)
        .hash(responder_id)
        .u64(as_of_height)
        .hash(transcript)
        .getvalue()
    )


def challenge(session: "AuthSession") -> ChallengeMsg:
    if session.state is not SessionState.PATH_VERIFIED:
        raise StaleSession(f"Cannot challenge from state {session.state.value}")
    session.nonce = session.nonce_source(NONCE_SIZE)
    session.state = SessionState.CHALLENGED
    return ChallengeMsg(session.nonce, session.owner)


def respond(
    responder_key: KeyPair, challenge_msg: ChallengeMsg, as_of_height: int, transcript: Hash256
) -> ResponseMsg:
    message = response_bytes(
        challenge_msg.nonce,
        challenge_msg.initiator_id,
        responder_key.account_id,
        as_of_height,
        transcript,
    )
    return ResponseMsg(responder_key.sign(message))


def verify_response(session: "AuthSession", response: ResponseMsg) -> SessionState:
    """Check the response under the terminal node's registered key."""
    if session.state is not SessionState.CHALLENGED:
        raise StaleSession(f"Response arrived in state {session.state.value}")
    terminal = session.verified_path.vertices[-1]
    public_key = session.fragment.nodes[terminal].public_key
    message = response_bytes(
        session.nonce,
        session.owner,
        terminal,
        session.peer_height,
        session.transcript_digest(),
    )
    if not verify_signature(public_key, message, response.signature):
        raise AuthAbort(AbortReason.AUTH_FAILURE, "Response signature does not verify")
    session.state = SessionState.AUTHENTICATED
    return session.state


# ---------------------------------------------------------------------------
# Session
# ---------------------------------------------------------------------------

class AuthSession:
    """
    One side of one authentication run.

    Single owner, messages processed in order. receive() returns the reply
    to send, or None.
    """

    def __init__(
        self,
        role: Role,
        client: LightClient,
        key: Optional[KeyPair] = None,
        peer: Optional[AccountId] = None,
        settings: Optional[ProtocolSettings] = None,
        nonce_source: Callable[[int], bytes] = secrets.token_bytes,
    ):
        if role is Role.RESPONDER and key is None:
            raise ProtocolError("A responder session needs the owner's key pair")
        self.role = role
        self.client = client
        self.key = key
        self.peer = peer
        self.settings = settings_or_default(settings)
        self.nonce_source = nonce_source
        self.state = SessionState.START
        self.abort_reason: Optional[AbortReason] = None
        self.nonce: Optional[bytes] = None
        self.verified_path: Optional[TrustPath] = None
        self.fragment: Optional[TrustGraph] = None
        self.peer_height: Optional[int] = None
        self._transcript: List[bytes] = []

    @property
    def owner(self) -> AccountId:
        return self.client.owner

    @property
    def view(self) -> PartialGraphView:
        return self.client.view

    @property
    def is_finished(self) -> bool:
        return self.state in (SessionState.AUTHENTICATED, SessionState.ABORTED)

    def transcript_digest(self) -> Hash256:
        return sha256(*self._transcript)

    def _record(self, msg: Message) -> Message:
        self._transcript.append(encode_message(msg))
        return msg

    def abort(self, reason: AbortReason, detail: str = ""):
        self.state = SessionState.ABORTED
        self.abort_reason = reason
        logger.info(
            "%s session of %s aborted: %s %s",
            self.role.value,
            self.owner.short(),
            reason.value,
            detail,
        )

    # -- entry points -----------------------------------------------------

    def start(self) -> HelloMsg:
        """Responder opens the run with its hello."""
        if self.role is not Role.RESPONDER or self.state is not SessionState.START:
            raise StaleSession("Only a fresh responder session sends a hello")
        self.state = SessionState.HELLO_SENT
        return self._record(make_hello(self.view))

    def receive_bytes(self, data: bytes) -> Optional[bytes]:
        if self.is_finished:
            return None
        try:
            msg = decode_message(data)
        except EncodingError as e:
            self.abort(AbortReason.INTEGRITY_FAILURE, str(e))
            return None
        reply = self.receive(msg)
        return None if reply is None else encode_message(reply)

    def receive(self, msg: Message) -> Optional[Message]:
        if self.is_finished:
            logger.debug("Ignoring %s in terminal state %s", type(msg).__name__, self.state.value)
            return None
        try:
            if self.role is Role.INITIATOR:
                return self._initiator_step(msg)
            return self._responder_step(msg)
        except AuthAbort as e:
            self.abort(e.reason, str(e))
        except StaleSession as e:
            self.abort(AbortReason.STALE_SESSION, str(e))
        except TrustLedgerError as e:
            self.abort(AbortReason.INTEGRITY_FAILURE, str(e))
        return None

    # -- initiator --------------------------------------------------------

    def _initiator_step(self, msg: Message) -> Optional[Message]:
        if isinstance(msg, HelloMsg) and self.state is SessionState.START:
            self._record(msg)
            self.state = SessionState.HELLO_RECEIVED
            if self.peer is not None and msg.responder_id != self.peer:
                raise AuthAbort(AbortReason.AUTH_FAILURE, "Hello from an unexpected peer")
            self.peer = msg.responder_id
            self.peer_height = msg.as_of_height
            drift = abs(msg.as_of_height - self.view.as_of_height)
            if drift > self.settings.max_height_drift:
                raise AuthAbort(
                    AbortReason.STALE_VIEW,
                    f"Views differ by {drift} blocks (bound {self.settings.max_height_drift})",
                )
            common = find_common(self.view, msg)
            if not common:
                raise AuthAbort(AbortReason.NO_COMMON_NODE)
            self.state = SessionState.DATA_REQUESTED
            return self._record(DataRequest(tuple(sorted(common))))

        if isinstance(msg, PathData) and self.state is SessionState.DATA_REQUESTED:
            self._record(msg)
            self.verified_path, self.fragment = verify_path(
                self.view, msg, self.owner, self.peer, self.client.headers
            )
            self.state = SessionState.PATH_VERIFIED
            logger.debug("Verified path %s", self.verified_path.describe({}))
            return challenge(self)

        if isinstance(msg, ResponseMsg) and self.state is SessionState.CHALLENGED:
            verify_response(self, msg)
            logger.info("Authenticated %s -> %s", self.owner.short(), self.peer.short())
            return None

        raise StaleSession(f"{type(msg).__name__} not expected in state {self.state.value}")

    # -- responder --------------------------------------------------------

    def _responder_step(self, msg: Message) -> Optional[Message]:
        if isinstance(msg, DataRequest) and self.state is SessionState.HELLO_SENT:
            self._record(msg)
            self.state = SessionState.DATA_REQUESTED
            return self._record(serve_request(self.view, msg))

        if isinstance(msg, ChallengeMsg) and self.state is SessionState.DATA_REQUESTED:
            if self.peer is not None and msg.initiator_id != self.peer:
                raise AuthAbort(AbortReason.AUTH_FAILURE, "Challenge from an unexpected peer")
            self.peer = msg.initiator_id
            self.state = SessionState.CHALLENGED
            return respond(self.key, msg, self.view.as_of_height, self.transcript_digest())

        raise StaleSession(f"{type(msg).__name__} not expected in state {self.state.value}")


def run_session(
    initiator: AuthSession,
    responder: AuthSession,
    tamper: Optional[Callable[[bytes], bytes]] = None,
    max_messages: int = 16,
) -> AuthSession:
    """
    Drive both sides in memory over the wire format until the initiator
    finishes or the exchange stalls. tamper, when given, rewrites every
    message in transit.
    """
    outgoing: Optional[bytes] = encode_message(responder.start())
    sender, receiver = responder, initiator
    for _ in range(max_messages):
        if outgoing is None or initiator.is_finished:
            break
        if tamper is not None:
            outgoing = tamper(outgoing)
        outgoing = receiver.receive_bytes(outgoing)
        sender, receiver = receiver, sender
    return initiator

"""
Deterministic discrete-event simulation of a UAV fleet using the ledger PKI.

Actors:
- the ledger network: genesis producers append scheduled blocks
- ground stations: provision each UAV with a bundle at its provisioning tick
- UAVs: run authentication sessions with each other over a lossy link

Time is logical ticks on a simpy environment. Every tick runs three phases
in order: block production, provisioning, session start. All randomness
(loss, corruption, challenge nonces) comes from one random.Random seeded by
the scenario, so a scenario and seed fix the report byte for byte.

Scenario file (JSON): see trustledger/scenarios/ for complete examples.

    {
      "name": "honest-2k", "seed": 7,
      "genesis": {"m": 5, "reward": 0, "accounts": [...]},
      "entities": [{"name": "A"}, ...],
      "schedule": [{"tick": 1, "ops": [...]}, ...],
      "uavs": [{"name": "A", "k_out": 2, "k_in": 0, "provision_tick": 5}],
      "attempts": [{"initiator": "A", "responder": "E", "tick": 10,
                    "expect": "Authenticated", "mutual": false}],
      "link": {"latency": 1, "drop": 0.0, "corrupt": 0.0},
      "faults": [{"kind": "drop_message", "target": "E", "probability": 1.0}],
      "session_timeout": 50, "max_height_drift": 10
    }
"""

import json
import logging
import random
from collections import defaultdict
from dataclasses import asdict, dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

import simpy

from .authproto import AbortReason, AuthSession, Role, SessionState, encode_message
from .config import GenesisConfig, ProtocolSettings
from .crypto import Hash256, KeyPair, sha256
from .encoding import canonical_json
from .errors import ConfigError, InvalidScenario, TrustLedgerError, UnknownNode, UnknownTarget
from .ledger import Chain, TxType
from .lightclient import Bundle, LightClient, make_bundle
from .schedule import ChainBuilder, KeyRing, Schedule, keyring_for
from .selection import ViewSpec
from .trustgraph import build_trust_graph

logger = logging.getLogger(__name__)

AUTHENTICATED = "Authenticated"
TIMEOUT = "Timeout"


def aborted(reason: AbortReason) -> str:
    return f"Aborted({reason.value})"


OUTCOMES = frozenset([AUTHENTICATED, TIMEOUT] + [aborted(r) for r in AbortReason])

_NAME_FIELDS = ("entity", "issuer", "subject", "sender", "recipient", "producer")


class FaultKind(Enum):
    CORRUPT_BUNDLE = "corrupt_bundle"
    WITHHOLD_REVOCATION = "withhold_revocation"
    IMPERSONATE_KEY = "impersonate_key"
    DROP_MESSAGE = "drop_message"


@dataclass(frozen=True)
class Fault:
    kind: FaultKind
    target: str
    probability: float = 1.0


@dataclass(frozen=True)
class LinkModel:
    latency: int = 1
    drop: float = 0.0
    corrupt: float = 0.0


@dataclass(frozen=True)
class UavSpec:
    name: str
    k_out: int = 0
    k_in: int = 0
    provision_tick: int = 0


@dataclass(frozen=True)
class AuthAttempt:
    initiator: str
    responder: str
    tick: int
    expect: Optional[str] = None
    mutual: bool = False


def _check(condition: bool, message: str):
    if not condition:
        raise InvalidScenario(message)


@dataclass(frozen=True)
class Scenario:
    seed: int
    genesis: GenesisConfig
    schedule: Schedule
    uavs: Tuple[UavSpec, ...]
    attempts: Tuple[AuthAttempt, ...]
    link: LinkModel = LinkModel()
    faults: Tuple[Fault, ...] = ()
    settings: ProtocolSettings = ProtocolSettings()
    name: str = "scenario"

    def __post_init__(self):
        _check(0 <= self.seed < 2 ** 64, "seed must be a 64-bit unsigned integer")
        try:
            ring = self.keyring()
        except ConfigError as e:
            raise InvalidScenario(str(e)) from e
        for block in self.schedule.blocks:
            for op in block.ops:
                for key in _NAME_FIELDS:
                    if key in op:
                        _check(
                            op[key] in ring,
                            f"Schedule references undeclared entity {op[key]!r}",
                        )
        names = [u.name for u in self.uavs]
        _check(len(set(names)) == len(names), "UAV names must be unique")
        provision = {}
        for uav in self.uavs:
            _check(uav.name in ring, f"UAV {uav.name!r} is not a declared entity")
            _check(
                min(uav.k_out, uav.k_in, uav.provision_tick) >= 0,
                f"UAV {uav.name!r} has a negative field",
            )
            _check(
                max(uav.k_out, uav.k_in) <= self.genesis.m,
                f"UAV {uav.name!r} view depth exceeds m",
            )
            provision[uav.name] = uav.provision_tick
        for attempt in self.attempts:
            for who in (attempt.initiator, attempt.responder):
                _check(who in provision, f"Attempt names {who!r}, which is not a UAV")
                _check(
                    attempt.tick >= provision[who],
                    f"Attempt at tick {attempt.tick} precedes provisioning of {who!r}",
                )
            _check(attempt.initiator != attempt.responder, "A UAV cannot authenticate itself")
            _check(
                attempt.expect is None or attempt.expect in OUTCOMES,
                f"Unknown expected outcome {attempt.expect!r}",
            )
        _check(self.link.latency >= 0, "link latency must be >= 0")
        _check(
            0.0 <= self.link.drop <= 1.0 and 0.0 <= self.link.corrupt <= 1.0,
            "link probabilities must lie in [0, 1]",
        )
        _check(self.settings.session_timeout >= 1, "session_timeout must be >= 1")
        _check(self.settings.max_height_drift >= 0, "max_height_drift must be >= 0")
        for fault in self.faults:
            if fault.target not in provision:
                raise UnknownTarget(
                    f"Fault {fault.kind.value} targets unknown UAV {fault.target!r}"
                )

    def keyring(self) -> KeyRing:
        return keyring_for(self.genesis, self.schedule)

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, seed=seed)

    def faults_on(self, kind: FaultKind, target: str) -> Optional[Fault]:
        return next((f for f in self.faults if f.kind is kind and f.target == target), None)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Scenario":
        """Settings absent from the scenario fall back to TRUSTLEDGER_* environment overrides."""
        env = ProtocolSettings.from_env()
        try:
            link = data.get("link", {})
            scenario = cls(
                seed=int(data.get("seed", 0)),
                genesis=GenesisConfig.from_dict(data["genesis"]),
                schedule=Schedule.from_dict(
                    {"entities": data.get("entities", []), "blocks": data.get("schedule", [])}
                ),
                uavs=tuple(
                    UavSpec(
                        name=str(u["name"]),
                        k_out=int(u.get("k_out", 0)),
                        k_in=int(u.get("k_in", 0)),
                        provision_tick=int(u.get("provision_tick", 0)),
                    )
                    for u in data.get("uavs", [])
                ),
                attempts=tuple(
                    AuthAttempt(
                        initiator=str(a["initiator"]),
                        responder=str(a["responder"]),
                        tick=int(a["tick"]),
                        expect=a.get("expect"),
                        mutual=bool(a.get("mutual", False)),
                    )
                    for a in data.get("attempts", [])
                ),
                link=LinkModel(
                    latency=int(link.get("latency", 1)),
                    drop=float(link.get("drop", 0.0)),
                    corrupt=float(link.get("corrupt", 0.0)),
                ),
                settings=ProtocolSettings(
                    max_height_drift=int(data.get("max_height_drift", env.max_height_drift)),
                    session_timeout=int(data.get("session_timeout", env.session_timeout)),
                ),
                name=str(data.get("name", "scenario")),
            )
            faults = [
                Fault(FaultKind(f["kind"]), str(f["target"]), float(f.get("probability", 1.0)))
                for f in data.get("faults", [])
            ]
        except ConfigError as e:
            raise InvalidScenario(str(e)) from e
        except (KeyError, TypeError, ValueError, AttributeError) as e:
            raise InvalidScenario(f"Malformed scenario: {e!r}") from e
        for fault in faults:
            scenario = inject_fault(scenario, fault)
        return scenario


def load_scenario(path: str) -> Scenario:
    try:
        with open(Path(path), "r") as f:
            data = json.load(f)
    except FileNotFoundError as e:
        raise InvalidScenario(f"Scenario file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise InvalidScenario(f"Scenario file corrupted (invalid JSON): {e}") from e
    return Scenario.from_dict(data)


def inject_fault(scenario: Scenario, fault: Fault) -> Scenario:
    """Scenario with fault scheduled against the UAV fault.target."""
    if fault.target not in {u.name for u in scenario.uavs}:
        raise UnknownTarget(f"No UAV named {fault.target!r} in scenario {scenario.name!r}")
    if not 0.0 <= fault.probability <= 1.0:
        raise InvalidScenario("Fault probability must lie in [0, 1]")
    return replace(scenario, faults=scenario.faults + (fault,))


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AttemptOutcome:
    initiator: str
    responder: str
    tick: int
    mutual: bool
    outcome: str
    expected: Optional[str] = None
    path: Tuple[str, ...] = ()
    as_of_heights: Tuple[int, int] = (0, 0)

    @property
    def matched(self) -> bool:
        return self.expected is None or self.expected == self.outcome

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["path"] = list(self.path)
        data["as_of_heights"] = list(self.as_of_heights)
        data["matched"] = self.matched
        return data


@dataclass
class UavStats:
    messages_sent: int = 0
    bytes_sent: int = 0
    messages_received: int = 0
    bytes_received: int = 0
    bundle_bytes: int = 0
    view_nodes: int = 0
    view_edges: int = 0
    provisioning: str = "pending"


@dataclass(frozen=True)
class SimReport:
    scenario: str
    seed: int
    final_height: int
    outcomes: Tuple[AttemptOutcome, ...]
    uavs: Mapping[str, UavStats]

    @property
    def all_matched(self) -> bool:
        return all(o.matched for o in self.outcomes)

    def body(self) -> Dict[str, Any]:
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "final_height": self.final_height,
            "outcomes": [o.to_dict() for o in self.outcomes],
            "uavs": {name: asdict(stats) for name, stats in sorted(self.uavs.items())},
            "all_matched": self.all_matched,
        }

    def canonical_bytes(self) -> bytes:
        return canonical_json(self.body()).encode("utf-8")

    @property
    def digest(self) -> Hash256:
        return sha256(self.canonical_bytes())

    def to_dict(self) -> Dict[str, Any]:
        data = self.body()
        data["digest"] = self.digest.hex()
        return data


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------

class Link:
    """Shared radio medium: fixed latency, random loss and single-bit corruption."""

    def __init__(self, sim: "Simulation"):
        self.sim = sim
        self.model = sim.scenario.link

    def send(self, sender: str, receiver: str, data: bytes, inbox: simpy.Store):
        stats = self.sim.stats[sender]
        stats.messages_sent += 1
        stats.bytes_sent += len(data)
        rng = self.sim.rng
        drop = self.model.drop
        fault = self.sim.scenario.faults_on(FaultKind.DROP_MESSAGE, sender)
        if fault is not None:
            drop = max(drop, fault.probability)
        if rng.random() < drop:
            logger.debug(
                "t=%s dropped %d bytes %s -> %s", self.sim.env.now, len(data), sender, receiver
            )
            return
        if rng.random() < self.model.corrupt:
            position = rng.randrange(len(data))
            flipped = data[position] ^ (1 << rng.randrange(8))
            data = data[:position] + bytes([flipped]) + data[position + 1:]
            logger.debug(
                "t=%s corrupted byte %d %s -> %s", self.sim.env.now, position, sender, receiver
            )
        self.sim.env.process(self._deliver(receiver, data, inbox))

    def _deliver(self, receiver: str, data: bytes, inbox: simpy.Store):
        yield self.sim.env.timeout(self.model.latency)
        stats = self.sim.stats[receiver]
        stats.messages_received += 1
        stats.bytes_received += len(data)
        yield inbox.put(data)


def _chain_prefix(chain: Chain, height: int) -> Chain:
    prefix = Chain(chain.params, chain.block_at(0))
    for block in chain.blocks[1:height + 1]:
        prefix.append(block)
    return prefix


def _last_revocation_height(chain: Chain) -> Optional[int]:
    for block in reversed(chain.blocks):
        if any(tx.tx_type == TxType.REVOKE for tx in block.body):
            return block.header.height
    return None


def _corrupt_bundle(bundle: Bundle) -> Bundle:
    """Bump the nonce of the last provisioned transaction; its proof no longer matches."""
    last = bundle.txs[-1]
    tampered = replace(last, tx=replace(last.tx, nonce=last.tx.nonce + 1))
    return replace(bundle, txs=bundle.txs[:-1] + (tampered,))


class Simulation:
    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.rng = random.Random(scenario.seed)
        self.env = simpy.Environment()
        self.keyring = scenario.keyring()
        self.chain = Chain.from_genesis(scenario.genesis)
        self.builder = ChainBuilder(self.chain, self.keyring, scenario.schedule)
        self.link = Link(self)
        self.clients: Dict[str, LightClient] = {}
        self.failed: Dict[str, AbortReason] = {}
        self.stats: Dict[str, UavStats] = defaultdict(UavStats)
        for uav in scenario.uavs:
            self.stats[uav.name] = UavStats()
        self.outcomes: Dict[int, AttemptOutcome] = {}

    # -- phases -----------------------------------------------------------

    def _clock(self):
        blocks_at: Dict[int, List] = defaultdict(list)
        for scheduled in self.scenario.schedule.blocks:
            blocks_at[scheduled.tick].append(scheduled)
        provision_at: Dict[int, List[UavSpec]] = defaultdict(list)
        for uav in self.scenario.uavs:
            provision_at[uav.provision_tick].append(uav)
        attempts_at: Dict[int, List[Tuple[int, AuthAttempt]]] = defaultdict(list)
        for index, attempt in enumerate(self.scenario.attempts):
            attempts_at[attempt.tick].append((index, attempt))

        last_tick = max([0, *blocks_at, *provision_at, *attempts_at])
        for tick in range(last_tick + 1):
            for scheduled in blocks_at[tick]:
                self._produce(scheduled)
            for uav in provision_at[tick]:
                self._provision(uav)
            for index, attempt in attempts_at[tick]:
                self.env.process(self._attempt(index, attempt))
            yield self.env.timeout(1)

    def _produce(self, scheduled):
        try:
            self.builder.commit(scheduled)
        except TrustLedgerError as e:
            raise InvalidScenario(f"Scheduled block at tick {scheduled.tick} rejected: {e}") from e

    def _provision(self, uav: UavSpec):
        stats = self.stats[uav.name]
        chain = self.chain
        if self.scenario.faults_on(FaultKind.WITHHOLD_REVOCATION, uav.name):
            revoked_at = _last_revocation_height(chain)
            if revoked_at is not None:
                chain = _chain_prefix(chain, revoked_at - 1)
                logger.info("Provisioning %s from stale height %d", uav.name, chain.height)
        spec = ViewSpec(self.keyring.account_id(uav.name), uav.k_out, uav.k_in)
        try:
            bundle = make_bundle(chain, build_trust_graph(chain.state, chain.params.m), spec)
        except UnknownNode as e:
            raise InvalidScenario(
                f"UAV {uav.name!r} is not registered by its provisioning tick {uav.provision_tick}"
            ) from e
        if self.scenario.faults_on(FaultKind.CORRUPT_BUNDLE, uav.name):
            bundle = _corrupt_bundle(bundle)
        data = bundle.encode()
        stats.bundle_bytes = len(data)
        try:
            genesis_hash = self.chain.header_at(0).header_hash
            client = LightClient(Bundle.decode(data), genesis_hash=genesis_hash)
        except TrustLedgerError as e:
            logger.warning("UAV %s rejected its bundle: %s", uav.name, e)
            self.failed[uav.name] = AbortReason.INTEGRITY_FAILURE
            stats.provisioning = "rejected"
            return
        self.clients[uav.name] = client
        stats.view_nodes = len(client.view.nodes)
        stats.view_edges = len(client.view.edges)
        stats.provisioning = "ok"

    # -- sessions ---------------------------------------------------------

    def _attempt(self, index: int, attempt: AuthAttempt):
        pair = (attempt.initiator, attempt.responder)
        failed = [name for name in pair if name in self.failed]
        path: Tuple[str, ...] = ()
        heights = tuple(self.clients[n].as_of_height if n in self.clients else 0 for n in pair)
        if failed:
            outcome = aborted(self.failed[failed[0]])
        else:
            directions = [pair] + ([pair[::-1]] if attempt.mutual else [])
            runs = [self.env.process(self._session(a, b)) for a, b in directions]
            yield self.env.all_of(runs)
            results = [run.value for run in runs]
            outcome = next((r for r, _ in results if r != AUTHENTICATED), AUTHENTICATED)
            path = results[0][1]
        self.outcomes[index] = AttemptOutcome(
            initiator=attempt.initiator,
            responder=attempt.responder,
            tick=attempt.tick,
            mutual=attempt.mutual,
            outcome=outcome,
            expected=attempt.expect,
            path=path,
            as_of_heights=heights,
        )
        logger.info("Attempt %s -> %s: %s", attempt.initiator, attempt.responder, outcome)

    def _session(self, initiator_name: str, responder_name: str):
        key = self.keyring.key(responder_name)
        if self.scenario.faults_on(FaultKind.IMPERSONATE_KEY, responder_name):
            key = KeyPair.from_seed(f"impostor:{responder_name}")
        initiator = AuthSession(
            Role.INITIATOR,
            self.clients[initiator_name],
            peer=self.keyring.account_id(responder_name),
            settings=self.scenario.settings,
            nonce_source=self.rng.randbytes,
        )
        responder = AuthSession(
            Role.RESPONDER,
            self.clients[responder_name],
            key=key,
            settings=self.scenario.settings,
        )
        initiator_inbox = simpy.Store(self.env)
        responder_inbox = simpy.Store(self.env)
        hello = encode_message(responder.start())
        self.link.send(responder_name, initiator_name, hello, initiator_inbox)
        self.env.process(
            self._endpoint(
                responder, responder_name, initiator_name, responder_inbox, initiator_inbox
            )
        )
        yield self.env.process(
            self._endpoint(
                initiator, initiator_name, responder_name, initiator_inbox, responder_inbox
            )
        )

        if initiator.state is SessionState.AUTHENTICATED:
            names = self.keyring.names_by_account()
            vertices = initiator.verified_path.vertices
            return AUTHENTICATED, tuple(names.get(v, v.short()) for v in vertices)
        if initiator.state is SessionState.ABORTED:
            return aborted(initiator.abort_reason), ()
        if responder.state is SessionState.ABORTED:
            return aborted(responder.abort_reason), ()
        return TIMEOUT, ()

    def _endpoint(
        self,
        session: AuthSession,
        me: str,
        peer: str,
        inbox: simpy.Store,
        peer_inbox: simpy.Store,
    ):
        """Feed inbound messages to session until it finishes or stays quiet for session_timeout."""
        while not (
            session.is_finished
            or (session.role is Role.RESPONDER and session.state is SessionState.CHALLENGED)
        ):
            get = inbox.get()
            yield get | self.env.timeout(self.scenario.settings.session_timeout)
            if not get.triggered:
                get.cancel()
                logger.debug(
                    "t=%s %s session of %s timed out", self.env.now, session.role.value, me
                )
                return
            reply = session.receive_bytes(get.value)
            if reply is not None:
                self.link.send(me, peer, reply, peer_inbox)

    # -- entry ------------------------------------------------------------

    def run(self) -> SimReport:
        self.env.process(self._clock())
        self.env.run()
        outcomes = tuple(self.outcomes[i] for i in range(len(self.scenario.attempts)))
        return SimReport(
            scenario=self.scenario.name,
            seed=self.scenario.seed,
            final_height=self.chain.height,
            outcomes=outcomes,
            uavs=dict(self.stats),
        )


def run_scenario(scenario: Scenario) -> SimReport:
    """Run scenario to completion; same scenario and seed give the same report digest."""
    report = Simulation(scenario).run()
    logger.info(
        "Scenario %s (seed %d): %d attempts, final height %d, digest %s",
        scenario.name,
        scenario.seed,
        len(report.outcomes),
        report.final_height,
        report.digest.short(),
    )
    return report

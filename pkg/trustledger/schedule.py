"""
Transaction schedules: named entities with seed-derived keys, and blocks of
register / confirm / revoke / transfer / checkpoint operations.

Schedule file (JSON):

    {
      "entities": [{"name": "A", "key_seed": "A"}, {"name": "B"}],
      "blocks": [
        [{"op": "register", "entity": "A"}, {"op": "register", "entity": "B"}],
        {"tick": 4, "ops": [{"op": "confirm", "issuer": "A", "subject": "B", "scope": 2}]},
        [{"op": "revoke", "issuer": "A", "subject": "B"}],
        [{"op": "transfer", "sender": "ground-1", "recipient": "A", "amount": 5}],
        [{"op": "checkpoint", "producer": "ground-1"}]
      ]
    }

A block entry is either a plain list of ops or an object with "ops" and an
optional "tick" (used by the simulator; defaults to the block's position).
Entities without a key_seed use their name as seed. Genesis accounts declared
with a key_seed are known to the KeyRing under their genesis name.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

from .config import GenesisConfig
from .crypto import AccountId, KeyPair
from .errors import ConfigError, DuplicateRegistration, InvalidTransaction
from .ledger import (
    Block,
    Chain,
    Transaction,
    TxType,
    make_checkpoint_tx,
    make_confirm,
    make_register,
    make_revoke,
    make_transfer,
)

logger = logging.getLogger(__name__)

OPS = ("register", "confirm", "revoke", "transfer", "checkpoint")


class KeyRing:
    """Seed-derived key pairs by entity name."""

    def __init__(self, seeds: Optional[Mapping[str, str]] = None):
        self._seeds: Dict[str, str] = dict(seeds or {})
        self._keys: Dict[str, KeyPair] = {}

    def declare(self, name: str, seed: Optional[str] = None):
        existing = self._seeds.get(name)
        seed = seed if seed is not None else name
        if existing is not None and existing != seed:
            raise ConfigError(f"Entity {name!r} declared twice with different key seeds")
        self._seeds[name] = seed

    def __contains__(self, name: str) -> bool:
        return name in self._seeds

    @property
    def names(self) -> List[str]:
        return sorted(self._seeds)

    def key(self, name: str) -> KeyPair:
        if name not in self._seeds:
            raise ConfigError(f"Unknown entity {name!r}: not declared in genesis or schedule")
        if name not in self._keys:
            self._keys[name] = KeyPair.from_seed(self._seeds[name])
        return self._keys[name]

    def account_id(self, name: str) -> AccountId:
        return self.key(name).account_id

    def names_by_account(self) -> Dict[AccountId, str]:
        return {self.account_id(name): name for name in self._seeds}


@dataclass(frozen=True)
class EntitySpec:
    name: str
    key_seed: str
    properties: Tuple[Tuple[str, str], ...] = ()


@dataclass(frozen=True)
class ScheduledBlock:
    tick: int
    ops: Tuple[Mapping[str, Any], ...]


@dataclass(frozen=True)
class Schedule:
    entities: Tuple[EntitySpec, ...] = ()
    blocks: Tuple[ScheduledBlock, ...] = ()

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Schedule":
        try:
            entities = tuple(
                EntitySpec(
                    name=str(e["name"]),
                    key_seed=str(e.get("key_seed", e["name"])),
                    properties=tuple(
                        sorted((str(k), str(v)) for k, v in e.get("properties", {}).items())
                    ),
                )
                for e in data.get("entities", [])
            )
            blocks = []
            for position, entry in enumerate(data.get("blocks", []), start=1):
                if isinstance(entry, list):
                    tick, ops = position, entry
                else:
                    tick, ops = int(entry.get("tick", position)), entry["ops"]
                for op in ops:
                    if op.get("op") not in OPS:
                        raise ConfigError(f"Unknown schedule op {op.get('op')!r}")
                blocks.append(ScheduledBlock(tick, tuple(ops)))
        except (KeyError, TypeError, ValueError, AttributeError) as e:
            raise ConfigError(f"Malformed schedule: {e!r}") from e
        ticks = [b.tick for b in blocks]
        if any(t < 0 for t in ticks) or ticks != sorted(ticks):
            raise ConfigError("Schedule block ticks must be non-negative and non-decreasing")
        return cls(entities, tuple(blocks))


def load_schedule(path: str) -> Schedule:
    try:
        with open(Path(path), "r") as f:
            data = json.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"Schedule file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"Schedule file corrupted (invalid JSON): {e}") from e
    return Schedule.from_dict(data)


def keyring_for(genesis: GenesisConfig, schedule: Schedule) -> KeyRing:
    """KeyRing over the seeded genesis accounts plus the schedule's entities."""
    ring = KeyRing()
    for account in genesis.accounts:
        if account.key_seed is not None:
            ring.declare(account.name, account.key_seed)
    for entity in schedule.entities:
        ring.declare(entity.name, entity.key_seed)
    return ring


class ChainBuilder:
    """Turns scheduled ops into signed transactions and commits them block by block."""

    def __init__(self, chain: Chain, keyring: KeyRing, schedule: Optional[Schedule] = None):
        self.chain = chain
        self.keyring = keyring
        self._properties = {e.name: e.properties for e in (schedule.entities if schedule else ())}

    def _nonce(self, name: str, pending: Dict[AccountId, int]) -> int:
        aid = self.keyring.account_id(name)
        record = self.chain.state.accounts.get(aid)
        base = record.nonce if record else 0
        pending[aid] = pending.get(aid, base) + 1
        return pending[aid]

    def transaction(self, op: Mapping[str, Any], pending: Dict[AccountId, int]) -> Transaction:
        kind = op["op"]
        try:
            if kind == "register":
                name = op["entity"]
                return make_register(self.keyring.key(name), name, self._properties.get(name, ()))
            if kind == "confirm":
                issuer = op["issuer"]
                return make_confirm(
                    self.keyring.key(issuer),
                    self._nonce(issuer, pending),
                    self.keyring.account_id(op["subject"]),
                    int(op["scope"]),
                )
            if kind == "revoke":
                issuer = op["issuer"]
                return make_revoke(
                    self.keyring.key(issuer),
                    self._nonce(issuer, pending),
                    self.keyring.account_id(op["subject"]),
                )
            if kind == "transfer":
                sender = op["sender"]
                return make_transfer(
                    self.keyring.key(sender),
                    self._nonce(sender, pending),
                    self.keyring.account_id(op["recipient"]),
                    int(op["amount"]),
                )
            producer = op["producer"]
            return make_checkpoint_tx(
                self.keyring.key(producer), self._nonce(producer, pending), self.chain
            )
        except KeyError as e:
            raise ConfigError(f"Schedule op {kind!r} is missing field {e}") from e

    def commit(self, scheduled: ScheduledBlock) -> Block:
        """
        Build and append the next block. Any op that the ledger rejects is
        raised as its TxError; nothing is appended then.
        """
        pending: Dict[AccountId, int] = {}
        txs = [self.transaction(op, pending) for op in scheduled.ops]
        for index, tx in enumerate(txs):
            if self.chain.locate(tx.tx_id) is not None:
                if tx.tx_type == TxType.REGISTER_ENTITY:
                    error = DuplicateRegistration
                else:
                    error = InvalidTransaction
                raise error(
                    f"{tx.tx_type.name} is already committed",
                    tx_index=index,
                    tx_id=tx.tx_id.hex(),
                )
        block, rejected = self.chain.assemble_block(txs, timestamp=scheduled.tick)
        if rejected:
            raise rejected[0][1]
        self.chain.append(block)
        return block


def build_chain(
    genesis: GenesisConfig, schedule: Schedule, keyring: Optional[KeyRing] = None
) -> Chain:
    """Genesis chain extended by every scheduled block, in order."""
    chain = Chain.from_genesis(genesis)
    if keyring is None:
        keyring = keyring_for(genesis, schedule)
    builder = ChainBuilder(chain, keyring, schedule)
    for scheduled in schedule.blocks:
        builder.commit(scheduled)
    logger.info(
        "Built chain of height %d from %d scheduled blocks", chain.height, len(schedule.blocks)
    )
    return chain

"""
Configuration: protocol constants, runtime settings and the genesis file.

Genesis file (JSON):

    {
      "m": 5,
      "reward": 10,
      "accounts": [
        {"name": "ground-1", "key_seed": "ground-1", "producer": true, "balance": 100},
        {"name": "org", "public_key": "<64 hex chars>", "properties": {"type": "organization"}}
      ]
    }
"""

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from .crypto import KeyPair, PUBLIC_KEY_SIZE
from .errors import ConfigError


FORMAT_VERSION = 1

DEFAULT_MAX_SCOPE = 5
DEFAULT_REWARD = 10
DEFAULT_MAX_HEIGHT_DRIFT = 10
DEFAULT_SESSION_TIMEOUT = 50

MAX_NAME_BYTES = 256
MAX_FIELD_BYTES = 1 << 20


@dataclass(frozen=True)
class ProtocolSettings:
    """Tunables of the authentication protocol and the simulator."""

    max_height_drift: int = DEFAULT_MAX_HEIGHT_DRIFT
    session_timeout: int = DEFAULT_SESSION_TIMEOUT

    @classmethod
    def from_env(cls) -> "ProtocolSettings":
        try:
            return cls(
                max_height_drift=int(
                    os.getenv("TRUSTLEDGER_MAX_HEIGHT_DRIFT", DEFAULT_MAX_HEIGHT_DRIFT)
                ),
                session_timeout=int(
                    os.getenv("TRUSTLEDGER_SESSION_TIMEOUT", DEFAULT_SESSION_TIMEOUT)
                ),
            )
        except ValueError as e:
            raise ConfigError(f"Invalid protocol setting in environment: {e}") from e


@dataclass(frozen=True)
class GenesisAccount:
    name: str
    public_key: bytes
    properties: Tuple[Tuple[str, str], ...] = ()
    producer: bool = False
    balance: int = 0
    key_seed: Optional[str] = None


@dataclass(frozen=True)
class GenesisConfig:
    m: int = DEFAULT_MAX_SCOPE
    reward: int = DEFAULT_REWARD
    accounts: Tuple[GenesisAccount, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not 1 <= self.m <= 255:
            raise ConfigError(f"m must be within 1..255, got {self.m}")
        if self.reward < 0:
            raise ConfigError("reward must be >= 0")
        if not any(a.producer for a in self.accounts):
            raise ConfigError(
                "Genesis lists no producer account.\n"
                "REASON: blocks are produced round-robin by genesis producers."
            )
        for a in self.accounts:
            if a.balance < 0:
                raise ConfigError(
                    f"Genesis account {a.name!r} has a negative balance ({a.balance})"
                )
        keys = [a.public_key for a in self.accounts]
        if len(set(keys)) != len(keys):
            raise ConfigError("Genesis accounts must have distinct public keys")

    @property
    def producers(self) -> List[GenesisAccount]:
        return [a for a in self.accounts if a.producer]

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GenesisConfig":
        try:
            accounts = tuple(_parse_account(entry) for entry in data.get("accounts", []))
            return cls(
                m=int(data.get("m", DEFAULT_MAX_SCOPE)),
                reward=int(data.get("reward", DEFAULT_REWARD)),
                accounts=accounts,
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"Malformed genesis config: {e}") from e


def _parse_account(entry: Dict[str, Any]) -> GenesisAccount:
    name = entry["name"]
    key_seed = entry.get("key_seed")
    if "public_key" in entry:
        public_key = bytes.fromhex(entry["public_key"])
    elif key_seed is not None:
        key_seed = str(key_seed)
        public_key = KeyPair.from_seed(key_seed).public_key
    else:
        raise ConfigError(f"Genesis account {name!r} needs public_key or key_seed")
    if len(public_key) != PUBLIC_KEY_SIZE:
        raise ConfigError(f"Genesis account {name!r} has a malformed public key")
    properties = tuple(sorted((str(k), str(v)) for k, v in entry.get("properties", {}).items()))
    return GenesisAccount(
        name=name,
        public_key=public_key,
        properties=properties,
        producer=bool(entry.get("producer", False)),
        balance=int(entry.get("balance", 0)),
        key_seed=key_seed,
    )


def load_genesis(path: str) -> GenesisConfig:
    """Load a genesis config file."""
    try:
        with open(Path(path), "r") as f:
            data = json.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"Genesis file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"Genesis file corrupted (invalid JSON): {e}") from e
    return GenesisConfig.from_dict(data)


def settings_or_default(settings: Optional[ProtocolSettings]) -> ProtocolSettings:
    return settings if settings is not None else ProtocolSettings.from_env()

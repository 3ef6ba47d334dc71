#!/usr/bin/env python3
"""
Test configuration and fixtures.
"""

import json
import tempfile
from pathlib import Path

import pytest

from trustledger.config import GenesisConfig
from trustledger.lightclient import LightClient, make_bundle
from trustledger.schedule import Schedule, build_chain, keyring_for
from trustledger.selection import ViewSpec
from trustledger.trustgraph import build_trust_graph

GROUND = "ground-1"

GENESIS = {
    "m": 5,
    "reward": 0,
    "accounts": [{"name": GROUND, "key_seed": GROUND, "producer": True, "balance": 50}],
}


class World:
    """A chain built from named entities and confirm/revoke blocks."""

    def __init__(self, names, blocks, m=5, reward=0):
        genesis = dict(GENESIS, m=m, reward=reward)
        self.genesis = GenesisConfig.from_dict(genesis)
        self.schedule = Schedule.from_dict(
            {
                "entities": [{"name": n} for n in names],
                "blocks": ([[{"op": "register", "entity": n} for n in names]] if names else [])
                + list(blocks),
            }
        )
        self.keyring = keyring_for(self.genesis, self.schedule)
        self.chain = build_chain(self.genesis, self.schedule, self.keyring)

    def id(self, name):
        return self.keyring.account_id(name)

    def key(self, name):
        return self.keyring.key(name)

    def names(self):
        return self.keyring.names_by_account()

    def graph(self):
        return build_trust_graph(self.chain.state, self.chain.params.m)

    def bundle(self, name, k_out=0, k_in=0):
        return make_bundle(self.chain, self.graph(), ViewSpec(self.id(name), k_out, k_in))

    def client(self, name, k_out=0, k_in=0):
        genesis_hash = self.chain.header_at(0).header_hash
        return LightClient(self.bundle(name, k_out, k_in), genesis_hash=genesis_hash)


def confirms(*edges):
    """One block of confirm ops from (issuer, subject, scope) triples."""
    return [{"op": "confirm", "issuer": i, "subject": s, "scope": n} for i, s, n in edges]


def revokes(*pairs):
    return [{"op": "revoke", "issuer": i, "subject": s} for i, s in pairs]


@pytest.fixture
def tmp_workspace():
    """Temporary workspace for tests."""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield Path(tmpdir)


@pytest.fixture
def world_factory():
    """Build a World from entity names and schedule blocks."""
    return World


@pytest.fixture
def scope_chain_world():
    """A -3-> B -1-> C -2-> D: B only vouches for C itself, so A-B-C-D is not valid."""
    return World("ABCD", [confirms(("A", "B", 3), ("B", "C", 1), ("C", "D", 2))])


@pytest.fixture
def chain_world():
    """A -4-> B -3-> C -2-> D -1-> E: a valid path of length 4."""
    return World("ABCDE", [confirms(("A", "B", 4), ("B", "C", 3), ("C", "D", 2), ("D", "E", 1))])


@pytest.fixture
def genesis_file(tmp_workspace):
    path = tmp_workspace / "genesis.json"
    path.write_text(json.dumps(GENESIS))
    return path


@pytest.fixture
def schedule_file(tmp_workspace):
    """Schedule for the A -3-> B -1-> C -2-> D chain plus A -1-> E."""
    path = tmp_workspace / "schedule.json"
    path.write_text(
        json.dumps(
            {
                "entities": [{"name": n} for n in "ABCDE"],
                "blocks": [
                    [{"op": "register", "entity": n} for n in "ABCDE"],
                    confirms(("A", "B", 3), ("B", "C", 1), ("C", "D", 2), ("A", "E", 1)),
                ],
            }
        )
    )
    return path

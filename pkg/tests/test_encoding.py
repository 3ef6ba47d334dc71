#!/usr/bin/env python3
"""
Canonical encoding tests.
"""

import pytest


class TestWriterReader:
    """Fixed-width integers, length prefixes, optionals."""

    def test_integers_are_big_endian(self):
        """u32 and u64 are written most significant byte first."""
        from trustledger.encoding import Writer

        data = Writer().u8(1).u32(2).u64(3).getvalue()
        assert data == b"\x01" + b"\x00\x00\x00\x02" + b"\x00" * 7 + b"\x03"

    def test_integer_overflow_rejected(self):
        """Values that do not fit raise EncodingError."""
        from trustledger.encoding import Writer
        from trustledger.errors import EncodingError

        with pytest.raises(EncodingError):
            Writer().u8(256)
        with pytest.raises(EncodingError):
            Writer().u64(-1)

    def test_read_back(self):
        """Reader returns fields in the order they were written."""
        from trustledger.crypto import sha256
        from trustledger.encoding import Reader, Writer

        h = sha256(b"x")
        data = (
            Writer()
            .text("drone-7")
            .blob(b"\x00\x01")
            .hash(h)
            .optional(None, Writer.hash)
            .optional(h, Writer.hash)
            .getvalue()
        )
        r = Reader(data)
        assert r.text() == "drone-7"
        assert r.blob() == b"\x00\x01"
        assert r.hash() == h
        assert r.optional(Reader.hash) is None
        assert r.optional(Reader.hash) == h
        r.expect_end()

    def test_truncated_input(self):
        """Reading past the end raises EncodingError."""
        from trustledger.encoding import Reader, Writer
        from trustledger.errors import EncodingError

        data = Writer().text("abcdef").getvalue()
        with pytest.raises(EncodingError):
            Reader(data[:-1]).text()

    def test_trailing_bytes(self):
        """expect_end rejects leftover bytes."""
        from trustledger.encoding import Reader
        from trustledger.errors import EncodingError

        r = Reader(b"\x01\x02")
        r.u8()
        with pytest.raises(EncodingError):
            r.expect_end()

    def test_presence_flag_must_be_boolean(self):
        """A presence byte other than 0 or 1 is malformed."""
        from trustledger.encoding import Reader
        from trustledger.errors import EncodingError

        with pytest.raises(EncodingError):
            Reader(b"\x02").flag()

    def test_records(self):
        """Length-prefixed records split back exactly."""
        from trustledger.encoding import Reader, read_records, write_records

        records = [b"", b"a", b"bc" * 100]
        assert read_records(Reader(write_records(records))) == records


class TestCanonicalJson:
    def test_sorted_and_compact(self):
        """Keys sorted, no whitespace."""
        from trustledger.encoding import canonical_json

        assert canonical_json({"b": 1, "a": [1, 2]}) == '{"a":[1,2],"b":1}'


class TestTransactionEncoding:
    """Canonical bytes of ledger values are stable."""

    def test_transaction_decode_inverts_encode(self):
        """decode(canonical_bytes(tx)) == tx."""
        from trustledger.crypto import KeyPair
        from trustledger.ledger import Transaction, make_confirm

        alice, bob = KeyPair.from_seed("alice"), KeyPair.from_seed("bob")
        tx = make_confirm(alice, 2, bob.account_id, 3)
        assert Transaction.decode(tx.canonical_bytes()) == tx
        assert Transaction.decode(tx.canonical_bytes()).tx_id == tx.tx_id

    def test_signature_excluded_from_signing_bytes(self):
        """The signed message is the transaction without its signature."""
        from trustledger.crypto import KeyPair, verify_signature
        from trustledger.ledger import make_register

        key = KeyPair.from_seed("alice")
        tx = make_register(key, "alice")
        assert tx.signature is not None
        assert verify_signature(key.public_key, tx.signing_bytes(), tx.signature)
        assert tx.signing_bytes() != tx.canonical_bytes()

    def test_unknown_type_rejected(self):
        """A transaction type byte outside the enum fails to decode."""
        from trustledger.crypto import KeyPair
        from trustledger.errors import EncodingError
        from trustledger.ledger import Transaction, make_register

        data = bytearray(make_register(KeyPair.from_seed("a"), "a").canonical_bytes())
        data[1] = 99
        with pytest.raises(EncodingError):
            Transaction.decode(bytes(data))

    def test_seeded_keys_are_deterministic(self):
        """Same seed, same key; different seeds, different accounts."""
        from trustledger.crypto import KeyPair

        assert KeyPair.from_seed("x").public_key == KeyPair.from_seed("x").public_key
        assert KeyPair.from_seed("x").account_id != KeyPair.from_seed("y").account_id

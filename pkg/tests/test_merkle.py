#!/usr/bin/env python3
"""
Merkle tree tests: honest proofs verify, every single-bit mutation fails.
"""

from dataclasses import replace

import pytest

from trustledger.crypto import Hash256, sha256
from trustledger.merkle import MerkleProof, merkle_prove, merkle_root, merkle_verify


def _leaves(n):
    return [sha256(b"leaf", bytes([i])) for i in range(n)]


def _flip(h: Hash256, bit: int) -> Hash256:
    data = bytearray(h.digest)
    data[bit // 8] ^= 1 << (bit % 8)
    return Hash256(bytes(data))


class TestMerkleShape:
    def test_single_leaf_is_root(self):
        """One leaf: root == leaf, proof is empty."""
        leaf = _leaves(1)[0]
        assert merkle_root([leaf]) == leaf
        proof = merkle_prove([leaf], 0)
        assert proof.siblings == ()
        assert merkle_verify(leaf, leaf, proof)

    def test_odd_node_paired_with_itself(self):
        """Three leaves: the third is hashed with a copy of itself."""
        a, b, c = _leaves(3)
        left = sha256(a.digest, b.digest)
        right = sha256(c.digest, c.digest)
        assert merkle_root([a, b, c]) == sha256(left.digest, right.digest)

    def test_empty_rejected(self):
        from trustledger.errors import MerkleError

        with pytest.raises(MerkleError):
            merkle_root([])

    def test_repeated_leaf_located_by_position(self):
        """Equal leaves that are not siblings still get distinct, verifiable proofs."""
        a, b, c = _leaves(3)
        leaves = [a, b, a, c]
        root = merkle_root(leaves)
        first, second = merkle_prove(leaves, 0), merkle_prove(leaves, 2)
        assert first.leaf_index == 0 and second.leaf_index == 2
        assert merkle_verify(root, a, first) and merkle_verify(root, a, second)

    def test_mirrored_sibling_rejected(self):
        """A right child equal to its left sibling has no proof merkle_verify would accept."""
        from trustledger.errors import MerkleError

        a, b = _leaves(2)
        assert merkle_verify(merkle_root([a, a]), a, merkle_prove([a, a], 0))
        with pytest.raises(MerkleError):
            merkle_prove([a, a], 1)
        # equal subtrees one level up
        with pytest.raises(MerkleError):
            merkle_prove([a, b, a, b], 2)

    def test_leaf_index_recovered(self):
        """Side flags encode the leaf position."""
        leaves = _leaves(11)
        for i in range(11):
            assert merkle_prove(leaves, i).leaf_index == i


class TestMerkleSoundness:
    """Exhaustive over 1..16 leaves."""

    def test_every_honest_proof_verifies(self):
        for n in range(1, 17):
            leaves = _leaves(n)
            root = merkle_root(leaves)
            for i in range(n):
                assert merkle_verify(root, leaves[i], merkle_prove(leaves, i)), (n, i)

    def test_every_single_bit_mutation_fails(self):
        """Flip each bit of leaf, root, every sibling and every side flag."""
        for n in range(1, 17):
            leaves = _leaves(n)
            root = merkle_root(leaves)
            for i in range(n):
                leaf = leaves[i]
                proof = merkle_prove(leaves, i)
                for bit in range(256):
                    assert not merkle_verify(root, _flip(leaf, bit), proof)
                    assert not merkle_verify(_flip(root, bit), leaf, proof)
                for level in range(len(proof.siblings)):
                    for bit in range(256):
                        siblings = list(proof.siblings)
                        siblings[level] = _flip(siblings[level], bit)
                        mutated = replace(proof, siblings=tuple(siblings))
                        assert not merkle_verify(root, leaf, mutated), (n, i, level, bit)
                    sides = list(proof.sibling_on_left)
                    sides[level] = not sides[level]
                    mutated = replace(proof, sibling_on_left=tuple(sides))
                    assert not merkle_verify(root, leaf, mutated), (n, i, level)

    def test_proof_for_other_leaf_fails(self):
        """A proof does not transfer to a different leaf."""
        leaves = _leaves(8)
        root = merkle_root(leaves)
        assert not merkle_verify(root, leaves[1], merkle_prove(leaves, 0))

    def test_truncated_proof_fails(self):
        leaves = _leaves(8)
        root = merkle_root(leaves)
        proof = merkle_prove(leaves, 3)
        short = MerkleProof(proof.siblings[:-1], proof.sibling_on_left[:-1])
        assert not merkle_verify(root, leaves[3], short)

    def test_proof_encoding_round_trip(self):
        """A proof survives the wire."""
        from trustledger.encoding import Reader, Writer

        proof = merkle_prove(_leaves(13), 12)
        assert MerkleProof.decode(Reader(proof.encode(Writer()).getvalue())) == proof

"""
Binary Merkle tree over transaction ids.

Rules:
- Parent = SHA-256(left || right)
- An odd node at any level is paired with itself
- A single leaf is its own root
- Proofs locate a leaf by position; blocks never repeat a tx_id

Because of the duplication rule a proof step whose sibling equals the running
hash is only legitimate with the sibling on the right. merkle_verify rejects
the mirrored form, which closes the one bit of slack the side flags would
otherwise leave.
"""

from dataclasses import dataclass
from typing import List, Sequence, Tuple

from .crypto import Hash256, sha256
from .encoding import Reader, Writer
from .errors import MerkleError


@dataclass(frozen=True)
class MerkleProof:
    """
    Sibling hashes from leaf level upward.

    sibling_on_left[i] is True when siblings[i] is the left operand at level i
    (that is, the running node is a right child).
    """

    siblings: Tuple[Hash256, ...]
    sibling_on_left: Tuple[bool, ...]

    def __post_init__(self):
        if len(self.siblings) != len(self.sibling_on_left):
            raise MerkleError("Proof siblings and side flags differ in length")

    @property
    def leaf_index(self) -> int:
        """Position of the proved leaf, recovered from the side flags."""
        return sum(1 << level for level, left in enumerate(self.sibling_on_left) if left)

    def encode(self, w: Writer) -> Writer:
        w.u8(len(self.siblings))
        for sibling, left in zip(self.siblings, self.sibling_on_left):
            w.u8(1 if left else 0)
            w.hash(sibling)
        return w

    @classmethod
    def decode(cls, r: Reader) -> "MerkleProof":
        count = r.u8()
        siblings, sides = [], []
        for _ in range(count):
            sides.append(r.flag())
            siblings.append(r.hash())
        return cls(tuple(siblings), tuple(sides))


def _parent(left: Hash256, right: Hash256) -> Hash256:
    return sha256(left.digest, right.digest)


def _levels(leaf_hashes: Sequence[Hash256]) -> List[List[Hash256]]:
    if not leaf_hashes:
        raise MerkleError("Cannot build a Merkle tree over an empty list")
    level = list(leaf_hashes)
    levels = [level]
    while len(level) > 1:
        level = [
            _parent(level[i], level[i + 1] if i + 1 < len(level) else level[i])
            for i in range(0, len(level), 2)
        ]
        levels.append(level)
    return levels


def merkle_root(leaf_hashes: Sequence[Hash256]) -> Hash256:
    """Root over leaf_hashes (duplication rule for odd levels)."""
    return _levels(leaf_hashes)[-1][0]


def merkle_prove(leaf_hashes: Sequence[Hash256], index: int) -> MerkleProof:
    """
    Inclusion proof for leaf_hashes[index], located by position.

    Repeated leaves are fine unless the proved node is a right child whose left
    sibling hashes the same at some level. merkle_verify rejects that form, so
    no proof is produced for it and MerkleError is raised instead.
    """
    if not 0 <= index < len(leaf_hashes):
        raise MerkleError(f"Leaf index {index} out of range for {len(leaf_hashes)} leaves")

    siblings, sides = [], []
    idx = index
    for depth, level in enumerate(_levels(leaf_hashes)[:-1]):
        is_right = idx % 2 == 1
        sibling_idx = idx - 1 if is_right else idx + 1
        if is_right and level[sibling_idx] == level[idx]:
            raise MerkleError(
                f"Leaf {index} mirrors its left neighbour at level {depth}; no verifiable proof"
            )
        siblings.append(level[sibling_idx] if sibling_idx < len(level) else level[idx])
        sides.append(is_right)
        idx //= 2
    return MerkleProof(tuple(siblings), tuple(sides))


def merkle_verify(root: Hash256, leaf: Hash256, proof: MerkleProof) -> bool:
    """True iff folding leaf through proof reproduces root."""
    try:
        node = leaf
        for sibling, left in zip(proof.siblings, proof.sibling_on_left):
            if left:
                if sibling == node:
                    return False
                node = _parent(sibling, node)
            else:
                node = _parent(node, sibling)
        return node == root
    except (AttributeError, TypeError):
        return False

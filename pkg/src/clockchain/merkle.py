"""Two-level transaction-metadata Merkle trees.

A miner working on m chains at once commits to all of them through a
single header field: each chain's candidate transaction list is hashed
into an inner tree with root gamma_i, and the outer tree is built over
the leaves digest(tip_i || gamma_i) for i = 0..m-1.  A broadcast block
then only needs the payload for its own chain plus the proof that its
(parent, tx-root) pair sits at its chain's slot in the outer tree.

Conventions: a single-leaf tree's root is the leaf itself; odd levels
duplicate their last node; the empty tree's root is digest(b"").
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import EMPTY_ROOT, MerkleProof, Transaction, digest


@dataclass(frozen=True)
class MerkleTree:
    leaves: tuple[bytes, ...]
    levels: tuple[tuple[bytes, ...], ...]  # levels[0] == leaves

    @property
    def root(self) -> bytes:
        if not self.leaves:
            return EMPTY_ROOT
        return self.levels[-1][0]

    @property
    def depth(self) -> int:
        return len(self.levels) - 1 if self.leaves else 0


def build_tree(leaves: list[bytes] | tuple[bytes, ...]) -> MerkleTree:
    leaves = tuple(leaves)
    if not leaves:
        return MerkleTree((), ())
    levels = [leaves]
    level = leaves
    while len(level) > 1:
        nxt = []
        for i in range(0, len(level), 2):
            left = level[i]
            right = level[i + 1] if i + 1 < len(level) else level[i]
            nxt.append(digest(left + right))
        level = tuple(nxt)
        levels.append(level)
    return MerkleTree(leaves, tuple(levels))


def build_tx_tree(txs: list[Transaction] | tuple[Transaction, ...]) -> MerkleTree:
    """Inner tree over a chain's candidate transactions (leaves are tx ids)."""
    return build_tree([tx.tx_id for tx in txs])


def tx_root(txs: list[Transaction] | tuple[Transaction, ...]) -> bytes:
    if not txs:
        return EMPTY_ROOT
    return build_tx_tree(txs).root


def metadata_leaf(tip: bytes, chain_tx_root: bytes) -> bytes:
    """Outer-tree leaf binding one chain's parent reference and tx root."""
    return digest(tip + chain_tx_root)


def build_metadata_tree(tips: list[bytes], tx_roots: list[bytes]) -> MerkleTree:
    """Outer tree over all m (tip, tx-root) pairs; its root goes in the header."""
    if len(tips) != len(tx_roots):
        raise ValueError(
            f"tips and tx_roots must have equal length, got {len(tips)} and {len(tx_roots)}"
        )
    if not tips:
        raise ValueError("metadata tree needs at least one chain")
    return build_tree([metadata_leaf(t, r) for t, r in zip(tips, tx_roots)])


def prove_leaf(tree: MerkleTree, index: int) -> MerkleProof:
    if not 0 <= index < len(tree.leaves):
        raise IndexError(f"leaf index {index} out of range for {len(tree.leaves)} leaves")
    siblings = []
    idx = index
    for level in tree.levels[:-1]:
        if idx % 2 == 1:
            siblings.append((level[idx - 1], True))
        else:
            sib = level[idx + 1] if idx + 1 < len(level) else level[idx]
            siblings.append((sib, False))
        idx //= 2
    return MerkleProof(index, tuple(siblings))


def verify_leaf(root: bytes, index: int, leaf: bytes, proof: MerkleProof) -> bool:
    """Fold the leaf up the proof path and compare against the root.

    Sides are recomputed from the index at every level and must agree
    with the stored flags, so a proof replayed at the wrong position
    fails even when the sibling hashes themselves are genuine.
    """
    if index != proof.leaf_index or index < 0:
        return False
    current = leaf
    idx = index
    for sib, is_left in proof.siblings:
        if is_left != (idx % 2 == 1):
            return False
        current = digest(sib + current) if is_left else digest(current + sib)
        idx //= 2
    if idx != 0:
        return False
    return current == root


__all__ = [
    "MerkleTree", "build_tree", "build_tx_tree", "tx_root",
    "metadata_leaf", "build_metadata_tree", "prove_leaf", "verify_leaf",
]

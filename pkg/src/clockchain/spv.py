"""Light-client verification from headers and Merkle proofs alone.

A light client stores, per chain, the header sequence together with
each block's parent reference, its own-chain transaction root, and the
chain-slot proof binding those two into the header's metadata root.
That is enough to check proof of work and chain linkage without any
transaction data.

Verifying a payment needs more than inclusion because an input may be
a cross-chain output whose origin block is still inside the
confirmation window and could yet be orphaned.  The verifier therefore
walks the payment's inputs backwards, hop by hop, through the supplied
origin transactions until every path bottoms out in a genesis
allocation or a transaction buried at least T blocks deep.  A payment
whose trace dead-ends in an unconfirmed block reward is provisional;
anything that fails inclusion or cannot be traced is invalid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import merkle
from .core import (
    Block,
    BlockHeader,
    MerkleProof,
    OutPoint,
    PowParams,
    Transaction,
    block_id,
    chain_index_of,
    coinbase_outpoint,
    digest,
    genesis_id,
    header_from_json,
    header_to_json,
    proof_from_json,
    proof_to_json,
    tx_from_json,
    tx_to_json,
)
from .ledger import PROVISIONAL, TxVerdict, VALID, invalid


@dataclass(frozen=True)
class HeaderRecord:
    """Everything a light client keeps per block."""

    header: BlockHeader
    parent_ref: bytes
    tx_root: bytes  # root of the block's own-chain transaction tree
    chain_slot_proof: MerkleProof

    @property
    def block_id(self) -> bytes:
        return block_id(self.header)


@dataclass(frozen=True)
class TxInclusion:
    """One transaction pinned inside one block."""

    tx: Transaction
    block_ref: bytes
    tx_index: int
    inner_proof: MerkleProof  # tx id -> tx root
    outer_proof: MerkleProof  # (parent, tx root) leaf -> metadata root
    parent_ref: bytes


@dataclass(frozen=True)
class SpvProof:
    target: TxInclusion
    ancestry: tuple[TxInclusion, ...] = ()


@dataclass
class LightClientState:
    m: int
    depth_k: int  # required depth of the paying block
    window: int  # confirmation window T
    headers: list[list[HeaderRecord]] = field(default_factory=list)
    genesis_outpoints: set[OutPoint] = field(default_factory=set)
    pow_params: PowParams = field(default_factory=PowParams)

    def __post_init__(self):
        if not self.headers:
            self.headers = [[] for _ in range(self.m)]
        self._positions: dict[bytes, tuple[int, int]] = {}
        self._coinbase: dict[OutPoint, bytes] = {}
        for i, chain in enumerate(self.headers):
            for pos, rec in enumerate(chain):
                bid = rec.block_id
                self._positions[bid] = (i, pos)
                self._coinbase[coinbase_outpoint(bid)] = bid

    def extend(self, chain: int, records: list[HeaderRecord]) -> None:
        for rec in records:
            self.headers[chain].append(rec)
            bid = rec.block_id
            self._positions[bid] = (chain, len(self.headers[chain]) - 1)
            self._coinbase[coinbase_outpoint(bid)] = bid

    def depth_of(self, bid: bytes) -> int | None:
        """Blocks stacked above this one on its chain; None if unknown."""
        pos = self._positions.get(bid)
        if pos is None:
            return None
        chain, idx = pos
        return len(self.headers[chain]) - 1 - idx

    def is_confirmed(self, bid: bytes) -> bool:
        depth = self.depth_of(bid)
        return depth is not None and depth >= self.window


def verify_header_chain(state: LightClientState, chain: int) -> bool:
    """PoW, slot proofs, and parent links for one chain's header sequence."""
    prev = genesis_id(chain)
    for rec in state.headers[chain]:
        bid = block_id(rec.header)
        if chain_index_of(bid, state.m) != chain:
            return False
        if state.pow_params.mode == "leading_zeros":
            if int.from_bytes(bid, "big") >> (256 - state.pow_params.leading_zero_bits):
                return False
        if rec.parent_ref != prev:
            return False
        leaf = merkle.metadata_leaf(rec.parent_ref, rec.tx_root)
        if not merkle.verify_leaf(rec.header.metadata_root, chain, leaf,
                                  rec.chain_slot_proof):
            return False
        prev = bid
    return True


def _verify_inclusion(state: LightClientState, inc: TxInclusion) -> bool:
    pos = state._positions.get(inc.block_ref)
    if pos is None:
        return False
    chain, idx = pos
    rec = state.headers[chain][idx]
    if inc.parent_ref != rec.parent_ref:
        return False
    folded_root = _fold(inc.tx.tx_id, inc.tx_index, inc.inner_proof)
    if folded_root is None or folded_root != rec.tx_root:
        return False
    leaf = merkle.metadata_leaf(inc.parent_ref, folded_root)
    return merkle.verify_leaf(rec.header.metadata_root, chain, leaf, inc.outer_proof)


def _fold(leaf: bytes, index: int, proof: MerkleProof) -> bytes | None:
    if index != proof.leaf_index:
        return None
    current = leaf
    idx = index
    for sib, is_left in proof.siblings:
        if is_left != (idx % 2 == 1):
            return None
        current = digest(sib + current) if is_left else digest(current + sib)
        idx //= 2
    return current if idx == 0 else None


def spv_verify(state: LightClientState, proof: SpvProof) -> TxVerdict:
    """Full light-client verdict on one payment.

    Valid requires the paying block to be at least k deep and every
    input path to ground out at a genesis allocation or a transaction
    at least T deep.  Unconfirmed intermediate hops are fine: they are
    exactly what the backtrace is for.
    """
    if not _verify_inclusion(state, proof.target):
        return invalid("malformed")
    depth = state.depth_of(proof.target.block_ref)
    if depth is None:
        return invalid("malformed")

    hops: dict[bytes, TxInclusion] = {}
    for hop in proof.ancestry:
        if not _verify_inclusion(state, hop):
            return invalid("malformed")
        hops[hop.tx.tx_id] = hop

    provisional = depth < state.depth_k
    stack = list(proof.target.tx.inputs)
    visited: set[OutPoint] = set()
    while stack:
        op = stack.pop()
        if op in visited:
            continue
        visited.add(op)
        if op in state.genesis_outpoints:
            continue
        cb_block = state._coinbase.get(op)
        if cb_block is not None:
            if not state.is_confirmed(cb_block):
                provisional = True
            continue
        hop = hops.get(op.tx_id)
        if hop is None:
            return invalid("missing-origin")
        if op.index >= len(hop.tx.outputs):
            return invalid("malformed")
        if state.is_confirmed(hop.block_ref):
            continue
        stack.extend(hop.tx.inputs)
    return PROVISIONAL if provisional else VALID


# ---------------------------------------------------------------------------
# Prover side: a full node assembling proofs for light clients
# ---------------------------------------------------------------------------

def make_inclusion(block: Block, tx_index: int) -> TxInclusion:
    tree = merkle.build_tx_tree(block.transactions)
    return TxInclusion(
        tx=block.transactions[tx_index],
        block_ref=block.block_id,
        tx_index=tx_index,
        inner_proof=merkle.prove_leaf(tree, tx_index),
        outer_proof=block.chain_slot_proof,
        parent_ref=block.parent_ref,
    )


def build_spv_proof(
    tx_id: bytes,
    locate: "callable",
    depth_of: "callable",
    window: int,
    genesis_outpoints: set[OutPoint],
) -> SpvProof | None:
    """Assemble target inclusion plus the backtrace of unconfirmed origins.

    `locate(tx_id)` returns (block, tx_index) for a main-chain tx, or
    None; `depth_of(block_id)` counts blocks above a main-chain block.
    Origins buried at least `window` deep terminate the trace; block
    rewards have no transaction to trace and are left to the verifier,
    which recognizes them by their synthetic outpoints.
    """
    located = locate(tx_id)
    if located is None:
        return None
    block, index = located
    target = make_inclusion(block, index)
    ancestry: list[TxInclusion] = []
    seen: set[bytes] = set()
    stack = list(target.tx.inputs)
    while stack:
        op = stack.pop()
        if op in genesis_outpoints or op.tx_id in seen:
            continue
        origin = locate(op.tx_id)
        if origin is None:
            continue
        seen.add(op.tx_id)
        o_block, o_index = origin
        ancestry.append(make_inclusion(o_block, o_index))
        if depth_of(o_block.block_id) < window:
            stack.extend(o_block.transactions[o_index].inputs)
    return SpvProof(target, tuple(ancestry))


# ---------------------------------------------------------------------------
# JSON round-trips for the CLI's proof and header files
# ---------------------------------------------------------------------------

def record_to_json(rec: HeaderRecord) -> dict:
    return {
        "header": header_to_json(rec.header),
        "parent_ref": rec.parent_ref.hex(),
        "tx_root": rec.tx_root.hex(),
        "chain_slot_proof": proof_to_json(rec.chain_slot_proof),
    }


def record_from_json(obj: dict) -> HeaderRecord:
    return HeaderRecord(
        header=header_from_json(obj["header"]),
        parent_ref=bytes.fromhex(obj["parent_ref"]),
        tx_root=bytes.fromhex(obj["tx_root"]),
        chain_slot_proof=proof_from_json(obj["chain_slot_proof"]),
    )


def state_to_json(state: LightClientState) -> dict:
    return {
        "m": state.m,
        "depth_k": state.depth_k,
        "window": state.window,
        "headers": [[record_to_json(r) for r in chain] for chain in state.headers],
        "genesis_outpoints": [[op.tx_id.hex(), op.index] for op in sorted(
            state.genesis_outpoints, key=lambda o: (o.tx_id, o.index))],
        "pow_mode": state.pow_params.mode,
    }


def state_from_json(obj: dict) -> LightClientState:
    return LightClientState(
        m=obj["m"],
        depth_k=obj["depth_k"],
        window=obj["window"],
        headers=[[record_from_json(r) for r in chain] for chain in obj["headers"]],
        genesis_outpoints={
            OutPoint(bytes.fromhex(t), i) for t, i in obj["genesis_outpoints"]
        },
        pow_params=PowParams(mode=obj.get("pow_mode", "bernoulli")),
    )


def inclusion_to_json(inc: TxInclusion) -> dict:
    return {
        "tx": tx_to_json(inc.tx),
        "block_ref": inc.block_ref.hex(),
        "tx_index": inc.tx_index,
        "inner_proof": proof_to_json(inc.inner_proof),
        "outer_proof": proof_to_json(inc.outer_proof),
        "parent_ref": inc.parent_ref.hex(),
    }


def inclusion_from_json(obj: dict) -> TxInclusion:
    return TxInclusion(
        tx=tx_from_json(obj["tx"]),
        block_ref=bytes.fromhex(obj["block_ref"]),
        tx_index=obj["tx_index"],
        inner_proof=proof_from_json(obj["inner_proof"]),
        outer_proof=proof_from_json(obj["outer_proof"]),
        parent_ref=bytes.fromhex(obj["parent_ref"]),
    )


def proof_to_json_doc(proof: SpvProof) -> dict:
    return {
        "target": inclusion_to_json(proof.target),
        "ancestry": [inclusion_to_json(h) for h in proof.ancestry],
    }


def proof_from_json_doc(obj: dict) -> SpvProof:
    return SpvProof(
        target=inclusion_from_json(obj["target"]),
        ancestry=tuple(inclusion_from_json(h) for h in obj["ancestry"]),
    )


__all__ = [
    "HeaderRecord", "TxInclusion", "SpvProof", "LightClientState",
    "verify_header_chain", "spv_verify", "make_inclusion", "build_spv_proof",
    "record_to_json", "record_from_json", "state_to_json", "state_from_json",
    "inclusion_to_json", "inclusion_from_json", "proof_to_json_doc",
    "proof_from_json_doc",
]

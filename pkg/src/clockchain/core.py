"""Core value types and the canonical binary encoding.

Everything that is hashed or sent on the wire is encoded here, byte for
byte, so that two independent implementations agree on every digest.

Byte layout (all integers little-endian, fixed width):

    header      = version u32 | timestamp u64 | nonce u64
                | metadata_root 32B | sync_ref 32B | miner_id u64
    outpoint    = tx_id 32B | index u32
    tx_output   = value u64 | owner u64 | shard u32
    transaction = n_inputs u32 | outpoints | n_outputs u32 | outputs | fee u64
    proof       = leaf_index u32 | n_siblings u32 | (hash 32B | side u8)*
    block       = header | parent_ref 32B | n_txs u32 | transactions | proof

A block's identifier is the SHA-256 digest of its encoded header; the
trailing ceil(log2 m) bits of that digest assign the block to one of the
m parallel chains.  Lists are length-prefixed; fields appear in
declaration order.  Timestamps are simulation round numbers, never wall
clock.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

HASH_SIZE = 32
EMPTY_HASH = b"\x00" * HASH_SIZE
VERSION = 1

# Reward minted for each block that reaches the globally confirmed sequence.
BLOCK_REWARD = 50


def digest(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


EMPTY_ROOT = digest(b"")


def _u32(x: int) -> bytes:
    return struct.pack("<I", x)


def _u64(x: int) -> bytes:
    return struct.pack("<Q", x)


class DecodeError(ValueError):
    """Raised when a wire payload cannot be decoded."""


# ---------------------------------------------------------------------------
# Chain indexing
# ---------------------------------------------------------------------------

def index_bits(m: int) -> int:
    """Number of trailing bits used to pick a chain: ceil(log2 m)."""
    if m < 1:
        raise ValueError(f"chain count must be >= 1, got {m}")
    return (m - 1).bit_length()


def chain_index_of(h: bytes, m: int) -> int:
    """Chain assigned to a block id: its trailing ceil(log2 m) bits, mod m.

    The modulo keeps the function total for non-power-of-two m; miners
    rejection-sample nonces so that mined blocks are exactly uniform.
    """
    k = index_bits(m)
    if k == 0:
        return 0
    value = int.from_bytes(h, "big") & ((1 << k) - 1)
    return value % m


def trailing_value(h: bytes, m: int) -> int:
    """Raw trailing-bit value before the modulo reduction."""
    k = index_bits(m)
    if k == 0:
        return 0
    return int.from_bytes(h, "big") & ((1 << k) - 1)


# ---------------------------------------------------------------------------
# Headers and blocks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BlockHeader:
    version: int
    timestamp: int  # simulation round the block was mined in
    nonce: int
    metadata_root: bytes  # root of the outer metadata tree
    sync_ref: bytes  # id of the synchronized block
    miner_id: int

    def encode(self) -> bytes:
        return (
            struct.pack("<IQQ", self.version, self.timestamp, self.nonce)
            + self.metadata_root
            + self.sync_ref
            + _u64(self.miner_id)
        )


HEADER_SIZE = 4 + 8 + 8 + HASH_SIZE + HASH_SIZE + 8


def decode_header(data: bytes, offset: int = 0) -> tuple[BlockHeader, int]:
    if len(data) - offset < HEADER_SIZE:
        raise DecodeError("truncated header")
    version, timestamp, nonce = struct.unpack_from("<IQQ", data, offset)
    offset += 20
    metadata_root = data[offset:offset + HASH_SIZE]
    offset += HASH_SIZE
    sync_ref = data[offset:offset + HASH_SIZE]
    offset += HASH_SIZE
    (miner_id,) = struct.unpack_from("<Q", data, offset)
    offset += 8
    return BlockHeader(version, timestamp, nonce, metadata_root, sync_ref, miner_id), offset


def block_id(header: BlockHeader) -> bytes:
    """Content identifier of a block: digest of its canonical header bytes."""
    return digest(header.encode())


def genesis_id(chain: int) -> bytes:
    """Well-known, parameter-free id of the genesis block of one chain."""
    return digest(b"genesis\x00" + _u32(chain))


# ---------------------------------------------------------------------------
# Transactions and UTXOs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OutPoint:
    tx_id: bytes
    index: int

    def encode(self) -> bytes:
        return self.tx_id + _u32(self.index)

    def hex(self) -> str:
        return f"{self.tx_id.hex()[:16]}:{self.index}"


@dataclass(frozen=True)
class TxOutput:
    value: int
    owner: int
    shard: int

    def encode(self) -> bytes:
        return struct.pack("<QQI", self.value, self.owner, self.shard)


@dataclass(frozen=True)
class UTXO:
    outpoint: OutPoint
    value: int
    owner: int
    shard: int

    def encode(self) -> bytes:
        return self.outpoint.encode() + struct.pack("<QQI", self.value, self.owner, self.shard)


@dataclass(frozen=True)
class Transaction:
    inputs: tuple[OutPoint, ...]
    outputs: tuple[TxOutput, ...]
    fee: int
    tx_id: bytes = field(default=b"", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        object.__setattr__(self, "tx_id", digest(self.encode()))

    def encode(self) -> bytes:
        parts = [_u32(len(self.inputs))]
        parts += [op.encode() for op in self.inputs]
        parts.append(_u32(len(self.outputs)))
        parts += [out.encode() for out in self.outputs]
        parts.append(_u64(self.fee))
        return b"".join(parts)


def decode_transaction(data: bytes, offset: int = 0) -> tuple[Transaction, int]:
    try:
        (n_in,) = struct.unpack_from("<I", data, offset)
        offset += 4
        inputs = []
        for _ in range(n_in):
            tx_id = data[offset:offset + HASH_SIZE]
            if len(tx_id) != HASH_SIZE:
                raise DecodeError("truncated outpoint")
            (idx,) = struct.unpack_from("<I", data, offset + HASH_SIZE)
            inputs.append(OutPoint(tx_id, idx))
            offset += HASH_SIZE + 4
        (n_out,) = struct.unpack_from("<I", data, offset)
        offset += 4
        outputs = []
        for _ in range(n_out):
            value, owner, shard = struct.unpack_from("<QQI", data, offset)
            outputs.append(TxOutput(value, owner, shard))
            offset += 20
        (fee,) = struct.unpack_from("<Q", data, offset)
        offset += 8
    except struct.error as exc:
        raise DecodeError(str(exc)) from None
    return Transaction(tuple(inputs), tuple(outputs), fee), offset


# ---------------------------------------------------------------------------
# Blocks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MerkleProof:
    """Inclusion proof; sides are stored and cross-checked against the index."""

    leaf_index: int
    siblings: tuple[tuple[bytes, bool], ...]  # (sibling hash, sibling-is-left)

    def encode(self) -> bytes:
        parts = [_u32(self.leaf_index), _u32(len(self.siblings))]
        for sib, is_left in self.siblings:
            parts.append(sib)
            parts.append(b"\x01" if is_left else b"\x00")
        return b"".join(parts)


def decode_proof(data: bytes, offset: int = 0) -> tuple[MerkleProof, int]:
    try:
        leaf_index, n = struct.unpack_from("<II", data, offset)
    except struct.error as exc:
        raise DecodeError(str(exc)) from None
    offset += 8
    sibs = []
    for _ in range(n):
        sib = data[offset:offset + HASH_SIZE]
        flag = data[offset + HASH_SIZE:offset + HASH_SIZE + 1]
        if len(sib) != HASH_SIZE or not flag:
            raise DecodeError("truncated proof")
        sibs.append((sib, flag == b"\x01"))
        offset += HASH_SIZE + 1
    return MerkleProof(leaf_index, tuple(sibs)), offset


@dataclass(frozen=True)
class Block:
    header: BlockHeader
    block_id: bytes  # digest of the header (or a well-known genesis id)
    chain: int  # derived from block_id, never trusted from the wire
    parent_ref: bytes
    transactions: tuple[Transaction, ...]
    chain_slot_proof: MerkleProof
    is_genesis: bool = False

    def encode(self) -> bytes:
        parts = [self.header.encode(), self.parent_ref, _u32(len(self.transactions))]
        parts += [tx.encode() for tx in self.transactions]
        parts.append(self.chain_slot_proof.encode())
        return b"".join(parts)

    def short_id(self) -> str:
        return self.block_id.hex()[:12]


def decode_block(data: bytes, m: int, offset: int = 0) -> tuple[Block, int]:
    header, offset = decode_header(data, offset)
    parent_ref = data[offset:offset + HASH_SIZE]
    if len(parent_ref) != HASH_SIZE:
        raise DecodeError("truncated parent reference")
    offset += HASH_SIZE
    try:
        (n_txs,) = struct.unpack_from("<I", data, offset)
    except struct.error as exc:
        raise DecodeError(str(exc)) from None
    offset += 4
    txs = []
    for _ in range(n_txs):
        tx, offset = decode_transaction(data, offset)
        txs.append(tx)
    proof, offset = decode_proof(data, offset)
    bid = block_id(header)
    return Block(
        header=header,
        block_id=bid,
        chain=chain_index_of(bid, m),
        parent_ref=parent_ref,
        transactions=tuple(txs),
        chain_slot_proof=proof,
    ), offset


def make_genesis(chain: int) -> Block:
    header = BlockHeader(
        version=VERSION,
        timestamp=0,
        nonce=0,
        metadata_root=EMPTY_HASH,
        sync_ref=EMPTY_HASH,
        miner_id=0,
    )
    return Block(
        header=header,
        block_id=genesis_id(chain),
        chain=chain,
        parent_ref=EMPTY_HASH,
        transactions=(),
        chain_slot_proof=MerkleProof(0, ()),
        is_genesis=True,
    )


# ---------------------------------------------------------------------------
# Proof-of-work validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PowParams:
    """How PoW is checked.

    In the default ``bernoulli`` mode mining success is decided by the
    round scheduler's coin flips, so validation checks only that the id
    commits to the header and that the chain assignment matches the id's
    trailing bits.  The ``leading_zeros`` mode additionally requires a
    real difficulty target and exists for demonstrations.
    """

    mode: str = "bernoulli"
    leading_zero_bits: int = 8

    def __post_init__(self):
        if self.mode not in ("bernoulli", "leading_zeros"):
            raise ValueError(f"unknown pow mode {self.mode!r}")


def verify_pow(block: Block, m: int, pow_params: PowParams) -> bool:
    if block.is_genesis:
        return block.block_id == genesis_id(block.chain) and 0 <= block.chain < m
    if block.block_id != block_id(block.header):
        return False
    if block.chain != chain_index_of(block.block_id, m):
        return False
    if pow_params.mode == "leading_zeros":
        value = int.from_bytes(block.block_id, "big")
        if value >> (256 - pow_params.leading_zero_bits):
            return False
    return True


# ---------------------------------------------------------------------------
# Synthetic outpoints (genesis allocation, block rewards, fee credits)
# ---------------------------------------------------------------------------

def allocation_outpoint(k: int) -> OutPoint:
    return OutPoint(digest(b"alloc\x00" + _u32(k)), 0)


def coinbase_outpoint(bid: bytes) -> OutPoint:
    return OutPoint(digest(b"coinbase\x00" + bid), 0)


def fee_outpoint(tx_id: bytes) -> OutPoint:
    return OutPoint(digest(b"fee\x00" + tx_id), 0)


# ---------------------------------------------------------------------------
# JSON rendering for humans; hashes come out hex-encoded
# ---------------------------------------------------------------------------

def header_to_json(header: BlockHeader) -> dict:
    return {
        "version": header.version,
        "timestamp": header.timestamp,
        "nonce": header.nonce,
        "metadata_root": header.metadata_root.hex(),
        "sync_ref": header.sync_ref.hex(),
        "miner_id": header.miner_id,
    }


def header_from_json(obj: dict) -> BlockHeader:
    return BlockHeader(
        version=obj["version"],
        timestamp=obj["timestamp"],
        nonce=obj["nonce"],
        metadata_root=bytes.fromhex(obj["metadata_root"]),
        sync_ref=bytes.fromhex(obj["sync_ref"]),
        miner_id=obj["miner_id"],
    )


def proof_to_json(proof: MerkleProof) -> dict:
    return {
        "leaf_index": proof.leaf_index,
        "siblings": [[sib.hex(), bool(is_left)] for sib, is_left in proof.siblings],
    }


def proof_from_json(obj: dict) -> MerkleProof:
    return MerkleProof(
        leaf_index=obj["leaf_index"],
        siblings=tuple((bytes.fromhex(s), bool(l)) for s, l in obj["siblings"]),
    )


def tx_to_json(tx: Transaction) -> dict:
    return {
        "tx_id": tx.tx_id.hex(),
        "inputs": [[op.tx_id.hex(), op.index] for op in tx.inputs],
        "outputs": [[o.value, o.owner, o.shard] for o in tx.outputs],
        "fee": tx.fee,
    }


def tx_from_json(obj: dict) -> Transaction:
    return Transaction(
        inputs=tuple(OutPoint(bytes.fromhex(t), i) for t, i in obj["inputs"]),
        outputs=tuple(TxOutput(v, o, s) for v, o, s in obj["outputs"]),
        fee=obj["fee"],
    )


def block_to_json(block: Block) -> dict:
    return {
        "id": block.block_id.hex(),
        "chain": block.chain,
        "parent": block.parent_ref.hex(),
        "header": header_to_json(block.header),
        "transactions": [tx_to_json(tx) for tx in block.transactions],
        "chain_slot_proof": proof_to_json(block.chain_slot_proof),
        "is_genesis": block.is_genesis,
    }


__all__ = [
    "HASH_SIZE", "EMPTY_HASH", "EMPTY_ROOT", "VERSION", "BLOCK_REWARD",
    "digest", "DecodeError",
    "index_bits", "chain_index_of", "trailing_value",
    "BlockHeader", "HEADER_SIZE", "decode_header", "block_id", "genesis_id",
    "OutPoint", "TxOutput", "UTXO", "Transaction", "decode_transaction",
    "MerkleProof", "decode_proof", "Block", "decode_block", "make_genesis",
    "PowParams", "verify_pow",
    "allocation_outpoint", "coinbase_outpoint", "fee_outpoint",
    "header_to_json", "header_from_json", "proof_to_json", "proof_from_json",
    "tx_to_json", "tx_from_json", "block_to_json",
]

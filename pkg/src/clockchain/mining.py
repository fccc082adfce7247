"""Bernoulli-model mining over m chains at once.

Every oracle query succeeds with probability mp.  A success draws fresh
nonces until the resulting header digest lands its trailing bits below
m (rejection sampling keeps chain assignment exactly uniform for any
m), and the block is emitted for whichever chain the digest selects,
carrying that chain's pre-committed payload and slot proof.

Candidates commit to all m chains before the coin flip: per chain, up
to D pending transactions picked by descending fee (tx id breaks ties),
the chain's current tip, and the resulting metadata tree.  Honest
miners point sync_ref at the highest-clock tip of their own view;
strategies may override that choice and accept the consequences.
"""

from __future__ import annotations

import random
from bisect import insort
from dataclasses import dataclass, field, replace
from typing import Callable

from . import merkle
from .blockdag import BlockDag
from .core import (
    VERSION,
    Block,
    BlockHeader,
    MerkleProof,
    Transaction,
    block_id,
    trailing_value,
)

# outcome of the node-supplied admission filter at assembly time
INCLUDE = "include"
SKIP = "skip"  # not currently minable, keep for later
DROP = "drop"  # permanently dead, forget it

TxFilter = Callable[[Transaction, int], str]


def _include_all(tx: Transaction, shard: int) -> str:
    return INCLUDE


class MempoolShard:
    """Pending transactions for one chain, kept in selection order."""

    def __init__(self, shard: int):
        self.shard = shard
        self._order: list[tuple[int, bytes]] = []  # (-fee, tx_id), sorted
        self._txs: dict[bytes, Transaction] = {}

    def __len__(self) -> int:
        return len(self._txs)

    def __contains__(self, tx_id: bytes) -> bool:
        return tx_id in self._txs

    def add(self, tx: Transaction) -> bool:
        if tx.tx_id in self._txs:
            return False
        self._txs[tx.tx_id] = tx
        insort(self._order, (-tx.fee, tx.tx_id))
        return True

    def remove(self, tx_id: bytes) -> None:
        self._txs.pop(tx_id, None)

    def select(self, limit: int, admit: TxFilter) -> list[Transaction]:
        """Highest-fee transactions that the admission filter lets through."""
        chosen: list[Transaction] = []
        dead: list[bytes] = []
        for _, tx_id in self._order:
            if len(chosen) >= limit:
                break
            tx = self._txs.get(tx_id)
            if tx is None:
                dead.append(tx_id)
                continue
            verdict = admit(tx, self.shard)
            if verdict == INCLUDE:
                chosen.append(tx)
            elif verdict == DROP:
                dead.append(tx_id)
                self._txs.pop(tx_id, None)
        if dead:
            dead_set = set(dead)
            self._order = [item for item in self._order if item[1] not in dead_set]
        return chosen


@dataclass
class ChainPayload:
    tip: bytes
    txs: tuple[Transaction, ...]
    tx_root: bytes


@dataclass
class Candidate:
    header_proto: BlockHeader  # nonce and timestamp are filled at success
    payloads: list[ChainPayload]
    proofs: list[MerkleProof]


@dataclass
class MinerState:
    miner_id: int
    view: BlockDag
    mp: float
    is_honest: bool = True
    capacity: int = 8  # max transactions per block, per chain
    mempools: list[MempoolShard] = field(default_factory=list)
    tx_filter: TxFilter = _include_all
    sync_policy: Callable[[BlockDag], bytes] | None = None  # None = honest
    _cached: Candidate | None = None
    _cached_version: int = -1

    def __post_init__(self):
        if not self.mempools:
            self.mempools = [MempoolShard(i) for i in range(self.view.m)]

    def invalidate_candidate(self) -> None:
        self._cached_version = -1


def assemble_candidate(state: MinerState) -> Candidate:
    """Commit to every chain: payloads, tips, metadata tree, slot proofs."""
    view = state.view
    reset = getattr(state.tx_filter, "reset", None)
    if reset is not None:
        reset()  # stateful filters track spends per assembly, not globally
    payloads = []
    for i in range(view.m):
        txs = tuple(state.mempools[i].select(state.capacity, state.tx_filter))
        payloads.append(ChainPayload(view.tips[i], txs, merkle.tx_root(txs)))
    tree = merkle.build_metadata_tree(
        [p.tip for p in payloads], [p.tx_root for p in payloads]
    )
    if state.sync_policy is not None:
        sync_ref = state.sync_policy(view)
    else:
        sync_ref = view.select_sync_block()
    proto = BlockHeader(
        version=VERSION,
        timestamp=0,
        nonce=0,
        metadata_root=tree.root,
        sync_ref=sync_ref,
        miner_id=state.miner_id,
    )
    return Candidate(
        header_proto=proto,
        payloads=payloads,
        proofs=[merkle.prove_leaf(tree, i) for i in range(view.m)],
    )


def _fresh_candidate(state: MinerState) -> Candidate:
    if state._cached is None or state._cached_version != state.view.tip_version:
        state._cached = assemble_candidate(state)
        state._cached_version = state.view.tip_version
    return state._cached


def try_mine(state: MinerState, queries: int, rng: random.Random,
             round_no: int = 0) -> list[Block]:
    """Spend `queries` oracle queries; return any blocks found.

    Queries are sequential: each success is inserted into the miner's
    own view before the next query, so a multi-query miner can extend
    its own block within a round.
    """
    mined: list[Block] = []
    m = state.view.m
    for _ in range(queries):
        if rng.random() >= state.mp:
            continue
        candidate = _fresh_candidate(state)
        while True:
            nonce = rng.getrandbits(64)
            header = replace(candidate.header_proto, nonce=nonce, timestamp=round_no)
            bid = block_id(header)
            chain = trailing_value(bid, m)
            if chain < m:
                break
        payload = candidate.payloads[chain]
        block = Block(
            header=header,
            block_id=bid,
            chain=chain,
            parent_ref=payload.tip,
            transactions=payload.txs,
            chain_slot_proof=candidate.proofs[chain],
        )
        state.view.insert(block)
        state.invalidate_candidate()
        mined.append(block)
    return mined


def mine_leading_zeros(state: MinerState, max_tries: int, rng: random.Random,
                       zero_bits: int, round_no: int = 0) -> Block | None:
    """Real hash-grinding mode, for demonstrations only: the first nonce
    whose header digest has `zero_bits` leading zero bits wins."""
    candidate = _fresh_candidate(state)
    m = state.view.m
    for _ in range(max_tries):
        nonce = rng.getrandbits(64)
        header = replace(candidate.header_proto, nonce=nonce, timestamp=round_no)
        bid = block_id(header)
        if int.from_bytes(bid, "big") >> (256 - zero_bits):
            continue
        chain = trailing_value(bid, m)
        if chain >= m:
            continue
        payload = candidate.payloads[chain]
        block = Block(
            header=header,
            block_id=bid,
            chain=chain,
            parent_ref=payload.tip,
            transactions=payload.txs,
            chain_slot_proof=candidate.proofs[chain],
        )
        state.view.insert(block)
        state.invalidate_candidate()
        return block
    return None


__all__ = [
    "INCLUDE", "SKIP", "DROP", "TxFilter", "MempoolShard",
    "ChainPayload", "Candidate", "MinerState",
    "assemble_candidate", "try_mine", "mine_leading_zeros",
]

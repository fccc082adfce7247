"""Per-node directed graph of blocks.

Each simulated node owns one BlockDag.  Insertion validates proof of
work, the chain-slot proof, and the virtual logical clock; blocks whose
parent or sync target has not arrived yet are parked in a bounded
pending cache and promoted automatically once the dependency shows up.

The virtual logical clock of a block is sync-target clock + 1, with
genesis at 0.  A block whose parent's clock exceeds its sync target's
clock is timestamp-invalid and is rejected outright: referencing a
stale-clocked sync target is how a miner forfeits its block.

Fork choice is the longest-chain rule per chain with first-received
tie-breaking: the current tip is only replaced by a strictly higher
block.  Stale blocks may be pruned; those still referenced as sync
targets keep their header, proof, clock, and height so that clocks of
later blocks remain computable.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from enum import Enum

from . import merkle
from .core import (
    Block,
    BlockHeader,
    MerkleProof,
    PowParams,
    genesis_id,
    make_genesis,
    verify_pow,
)

INVALID_CLOCK = -1

DEFAULT_PENDING_LIMIT = 10_000


class InsertOutcome(Enum):
    ACCEPTED = "accepted"
    CACHED = "cached"
    REJECTED = "rejected"


@dataclass(frozen=True)
class InsertResult:
    outcome: InsertOutcome
    missing: bytes | None = None  # dependency we are parked on, when cached
    reason: str | None = None  # machine-readable cause, when rejected

    @property
    def accepted(self) -> bool:
        return self.outcome is InsertOutcome.ACCEPTED


def _accepted() -> InsertResult:
    return InsertResult(InsertOutcome.ACCEPTED)


def _cached(missing: bytes) -> InsertResult:
    return InsertResult(InsertOutcome.CACHED, missing=missing)


def _rejected(reason: str) -> InsertResult:
    return InsertResult(InsertOutcome.REJECTED, reason=reason)


@dataclass(frozen=True)
class RetainedHeader:
    """What survives of a pruned stale block that is still a sync target."""

    header: BlockHeader
    chain: int
    chain_slot_proof: MerkleProof
    clock: int
    height: int
    parent_ref: bytes


@dataclass(frozen=True)
class ReorgEvent:
    chain: int
    removed: tuple[bytes, ...]  # former main-chain blocks, tip first
    added: tuple[bytes, ...]  # new main-chain blocks, lowest first


@dataclass(order=True, frozen=True)
class GlobalTimestamp:
    """Total-order key for confirmed blocks: clock first, chain breaks ties."""

    clock: int
    chain: int


class BlockDag:
    def __init__(self, m: int, pow_params: PowParams | None = None,
                 pending_limit: int = DEFAULT_PENDING_LIMIT):
        if m < 1:
            raise ValueError("need at least one chain")
        self.m = m
        self.pow_params = pow_params or PowParams()
        self.pending_limit = pending_limit

        self.blocks: dict[bytes, Block] = {}
        self.clocks: dict[bytes, int] = {}
        self.heights: dict[bytes, int] = {}
        self.children: dict[bytes, list[bytes]] = {}
        self.retained: dict[bytes, RetainedHeader] = {}

        # pending cache: blocks waiting for a dependency, FIFO-bounded
        self._pending: "OrderedDict[bytes, Block]" = OrderedDict()
        self._waiting_on: dict[bytes, list[bytes]] = {}  # missing id -> pending ids

        self.tips: list[bytes] = []
        self.on_main: set[bytes] = set()
        self.tip_version = 0  # bumped whenever any tip moves
        self.reorg_events: list[ReorgEvent] = []
        self.pending_evictions = 0
        self.pending_parks = 0

        for i in range(m):
            g = make_genesis(i)
            self.blocks[g.block_id] = g
            self.clocks[g.block_id] = 0
            self.heights[g.block_id] = 0
            self.children[g.block_id] = []
            self.tips.append(g.block_id)
            self.on_main.add(g.block_id)

    # ------------------------------------------------------------------
    # lookups
    # ------------------------------------------------------------------

    def has_block(self, bid: bytes) -> bool:
        return bid in self.blocks

    def resolvable(self, bid: bytes) -> bool:
        """Known either with a full body or as a retained header."""
        return bid in self.blocks or bid in self.retained

    def clock_of(self, bid: bytes) -> int:
        if bid in self.clocks:
            return self.clocks[bid]
        return self.retained[bid].clock

    def height_of(self, bid: bytes) -> int:
        if bid in self.heights:
            return self.heights[bid]
        return self.retained[bid].height

    def chain_of(self, bid: bytes) -> int:
        if bid in self.blocks:
            return self.blocks[bid].chain
        return self.retained[bid].chain

    def parent_of(self, bid: bytes) -> bytes:
        if bid in self.blocks:
            return self.blocks[bid].parent_ref
        return self.retained[bid].parent_ref

    def tip_clocks(self) -> list[int]:
        return [self.clocks[t] for t in self.tips]

    # ------------------------------------------------------------------
    # insertion
    # ------------------------------------------------------------------

    def insert(self, block: Block) -> InsertResult:
        result = self._insert_one(block)
        if result.accepted:
            self._promote_pending(block.block_id)
        return result

    def _insert_one(self, block: Block) -> InsertResult:
        bid = block.block_id
        if bid in self.blocks:
            return _accepted()  # duplicate insertion is a no-op

        if block.is_genesis:
            # the only valid genesis blocks are pre-installed
            if bid == genesis_id(block.chain) and block.chain < self.m:
                return _accepted()
            return _rejected("bad-genesis")

        if not verify_pow(block, self.m, self.pow_params):
            return _rejected("pow")

        if not self._verify_chain_slot(block):
            return _rejected("chain-slot-proof")

        parent, sync = block.parent_ref, block.header.sync_ref
        if not self.resolvable(parent):
            return self._park(block, parent)
        if not self.resolvable(sync):
            return self._park(block, sync)

        if self.chain_of(parent) != block.chain:
            return _rejected("parent-chain-mismatch")

        v_parent = self.clock_of(parent)
        v_sync = self.clock_of(sync)
        if v_parent > v_sync:
            return _rejected("clock")
        clock = v_sync + 1

        self.blocks[bid] = block
        self.clocks[bid] = clock
        self.heights[bid] = self.height_of(parent) + 1
        self.children[bid] = []
        self.children.setdefault(parent, []).append(bid)
        self.retained.pop(bid, None)
        self._maybe_advance_tip(block)
        return _accepted()

    def _verify_chain_slot(self, block: Block) -> bool:
        root = merkle.tx_root(block.transactions)
        leaf = merkle.metadata_leaf(block.parent_ref, root)
        return merkle.verify_leaf(
            block.header.metadata_root, block.chain, leaf, block.chain_slot_proof
        )

    def _park(self, block: Block, missing: bytes) -> InsertResult:
        bid = block.block_id
        self.pending_parks += 1
        if bid not in self._pending:
            if len(self._pending) >= self.pending_limit:
                evicted_id, _ = self._pending.popitem(last=False)
                self.pending_evictions += 1
                for waiters in self._waiting_on.values():
                    if evicted_id in waiters:
                        waiters.remove(evicted_id)
            self._pending[bid] = block
        self._waiting_on.setdefault(missing, []).append(bid)
        return _cached(missing)

    def _promote_pending(self, arrived: bytes) -> None:
        queue = [arrived]
        while queue:
            ready = queue.pop(0)
            waiters = self._waiting_on.pop(ready, [])
            for wid in waiters:
                parked = self._pending.pop(wid, None)
                if parked is None:
                    continue
                result = self._insert_one(parked)
                if result.accepted:
                    queue.append(wid)
                # if parked again (other dependency missing), _insert_one
                # has already re-registered it; rejections drop the block

    # ------------------------------------------------------------------
    # fork choice
    # ------------------------------------------------------------------

    def _maybe_advance_tip(self, block: Block) -> None:
        chain = block.chain
        old_tip = self.tips[chain]
        if self.heights[block.block_id] <= self.heights[old_tip]:
            return  # first-received tie-break: never switch on equal height
        self.tips[chain] = block.block_id
        self.tip_version += 1

        if block.parent_ref == old_tip:
            self.on_main.add(block.block_id)
            self.reorg_events.append(ReorgEvent(chain, (), (block.block_id,)))
            return

        # reorg: walk both branches back to the common ancestor
        removed: list[bytes] = []
        added: list[bytes] = [block.block_id]
        old = old_tip
        new = block.parent_ref
        while self.height_of(new) > self.height_of(old):
            added.append(new)
            new = self.parent_of(new)
        while self.height_of(old) > self.height_of(new):
            removed.append(old)
            old = self.parent_of(old)
        while old != new:
            removed.append(old)
            added.append(new)
            old = self.parent_of(old)
            new = self.parent_of(new)
        for bid in removed:
            self.on_main.discard(bid)
        added.reverse()
        for bid in added:
            self.on_main.add(bid)
        self.reorg_events.append(ReorgEvent(chain, tuple(removed), tuple(added)))

    def drain_reorg_events(self) -> list[ReorgEvent]:
        events, self.reorg_events = self.reorg_events, []
        return events

    # ------------------------------------------------------------------
    # queries
    # ------------------------------------------------------------------

    def main_chain(self, chain: int) -> list[bytes]:
        """Genesis-to-tip path of one chain under the longest-chain rule."""
        path = []
        cur = self.tips[chain]
        root = genesis_id(chain)
        while True:
            path.append(cur)
            if cur == root:
                break
            cur = self.parent_of(cur)
        path.reverse()
        return path

    def ancestor_at_height(self, bid: bytes, height: int) -> bytes:
        cur = bid
        while self.height_of(cur) > height:
            cur = self.parent_of(cur)
        return cur

    def select_sync_block(self) -> bytes:
        """Tip with the largest clock; ties go to the lowest chain index."""
        best = self.tips[0]
        best_clock = self.clocks[best]
        for tip in self.tips[1:]:
            c = self.clocks[tip]
            if c > best_clock:
                best, best_clock = tip, c
        return best

    def logical_clock(self, bid: bytes) -> int:
        """Clock of a known block; recomputes iteratively if not memoized.

        Normal insertion memoizes every clock, so this resolves from the
        cache.  The explicit work list exists so that clocks can be
        recomputed for an arbitrarily deep ancestry without recursion.
        """
        if bid in self.clocks:
            return self.clocks[bid]
        if bid in self.retained:
            return self.retained[bid].clock
        stack = [bid]
        while stack:
            cur = stack[-1]
            if cur in self.clocks:
                stack.pop()
                continue
            if cur in self.retained:
                self.clocks[cur] = self.retained[cur].clock
                stack.pop()
                continue
            block = self.blocks[cur]
            if block.is_genesis:
                self.clocks[cur] = 0
                stack.pop()
                continue
            parent, sync = block.parent_ref, block.header.sync_ref
            missing = [d for d in (parent, sync) if d not in self.clocks and d not in self.retained]
            if missing:
                stack.extend(missing)
                continue
            v_parent = self.clock_of(parent)
            v_sync = self.clock_of(sync)
            self.clocks[cur] = INVALID_CLOCK if v_parent > v_sync else v_sync + 1
            stack.pop()
        return self.clocks[bid]

    # ------------------------------------------------------------------
    # pruning
    # ------------------------------------------------------------------

    def prune_stale(self, depth: int) -> int:
        """Drop bodies of stale blocks more than `depth` below their tip.

        A pruned block that some surviving block names as its sync target
        keeps a RetainedHeader so its clock stays resolvable.
        """
        tip_heights = [self.heights[t] for t in self.tips]
        prunable = [
            bid
            for bid, block in self.blocks.items()
            if not block.is_genesis
            and bid not in self.on_main
            and tip_heights[block.chain] - self.heights[bid] > depth
        ]
        if not prunable:
            return 0
        prunable_set = set(prunable)
        referenced = {
            b.header.sync_ref
            for bid, b in self.blocks.items()
            if not b.is_genesis and bid not in prunable_set
        }
        count = 0
        for bid in prunable:
            block = self.blocks.pop(bid)
            clock = self.clocks.pop(bid)
            height = self.heights.pop(bid)
            self.children.pop(bid, None)
            siblings = self.children.get(block.parent_ref)
            if siblings and bid in siblings:
                siblings.remove(bid)
            if bid in referenced:
                self.retained[bid] = RetainedHeader(
                    header=block.header,
                    chain=block.chain,
                    chain_slot_proof=block.chain_slot_proof,
                    clock=clock,
                    height=height,
                    parent_ref=block.parent_ref,
                )
            count += 1
        return count

    # ------------------------------------------------------------------
    # export
    # ------------------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "blocks": [
                {
                    "id": bid.hex(),
                    "chain": b.chain,
                    "parent": b.parent_ref.hex(),
                    "sync": b.header.sync_ref.hex(),
                    "clock": self.clocks[bid],
                    "height": self.heights[bid],
                    "miner": b.header.miner_id,
                    "round": b.header.timestamp,
                    "genesis": b.is_genesis,
                }
                for bid, b in self.blocks.items()
            ],
            "tips": [t.hex() for t in self.tips],
            "retained": [r.hex() for r in self.retained],
        }


__all__ = [
    "INVALID_CLOCK", "InsertOutcome", "InsertResult", "RetainedHeader",
    "ReorgEvent", "GlobalTimestamp", "BlockDag",
]

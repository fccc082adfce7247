"""Deterministic round-based network simulation.

One run executes a fixed number of rounds over n participants.  Each
round: (1) messages due this round are delivered, with per-recipient
delays chosen by the adversary but never exceeding delta for
honest-sent messages; (2) clients emit at most mu transactions
network-wide; (3) every honest miner spends one oracle query, then the
adversary spends up to floor(rho * n) sequential queries through its
coordinated view; (4) freshly mined blocks are broadcast, withheld, or
revealed according to the adversary strategy; (5) every node advances
its confirmation state and the trace samples what it needs.

Everything is driven by a single 64-bit seed.  Child generators are
derived per purpose (one per miner, one for the workload, one for the
adversary), so identical configs produce byte-identical traces.
"""

from __future__ import annotations

import hashlib
import json
import random
from collections import deque
from dataclasses import dataclass, field, asdict

from .blockdag import BlockDag, ReorgEvent
from .core import (
    BLOCK_REWARD,
    Block,
    OutPoint,
    PowParams,
    Transaction,
    TxOutput,
    allocation_outpoint,
    digest,
)
from .ledger import LedgerState, SettledTx, VerdictKind
from .mining import DROP, INCLUDE, SKIP, MinerState, try_mine

CLIENT_ID_BASE = 10_000
ADVERSARY_CLIENT = 9_999


class ConfigError(ValueError):
    pass


@dataclass
class AdversaryStrategy:
    name: str = "honest"  # honest | withhold | ordering_attack | double_spend | delay_max
    trigger: int = 4  # withhold: reveal once the private lead reaches this
    sync_target: str = "smallest-clock"  # ordering_attack: smallest-clock | random | stale
    ds_interval: int = 50  # double_spend: rounds between conflicting pairs

    VALID_NAMES = ("honest", "withhold", "ordering_attack", "double_spend", "delay_max")
    VALID_SYNC = ("smallest-clock", "random", "stale")

    def validate(self) -> None:
        if self.name not in self.VALID_NAMES:
            raise ConfigError(f"unknown adversary strategy {self.name!r}")
        if self.sync_target not in self.VALID_SYNC:
            raise ConfigError(f"unknown sync target policy {self.sync_target!r}")
        if self.trigger < 1:
            raise ConfigError("withhold trigger must be >= 1")


@dataclass
class SimConfig:
    m: int = 2
    n: int = 8
    rho: float = 0.0
    delta: int = 1
    mp: float = 0.1
    T: int = 6
    D: int = 8  # block capacity in transactions
    mu: int = 64  # network transaction capacity per round
    rounds: int = 500
    seed: int = 1
    tx_rate: float = 0.0  # client transactions per round
    clients: int = 20
    client_utxos: int = 20
    utxo_value: int = 1_000
    fee_min: int = 1
    fee_max: int = 3
    least_loaded_shards: bool = False
    spend_provisional: bool = False  # clients may spend still-unconfirmed coins
    adversary: AdversaryStrategy = field(default_factory=AdversaryStrategy)
    relay_dependencies: bool = True
    default_delay: int = 1  # delivery delay when the adversary does not care
    sample_interval: int = 25
    observer_count: int = 3
    pow_mode: str = "bernoulli"
    pending_limit: int = 10_000
    reward: int = BLOCK_REWARD

    def validate(self) -> None:
        if self.m < 1:
            raise ConfigError("m must be >= 1")
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if not 0 <= self.rho < 1:
            raise ConfigError("rho must be in [0, 1)")
        if self.delta < 1:
            raise ConfigError("delta must be >= 1")
        if not 0 < self.mp <= 1:
            raise ConfigError("mp must be in (0, 1]")
        if self.T < 1:
            raise ConfigError("T must be >= 1")
        if self.D < 0 or self.mu < 0 or self.rounds < 0:
            raise ConfigError("D, mu, rounds must be non-negative")
        if not 1 <= self.default_delay <= self.delta:
            raise ConfigError("default_delay must lie in [1, delta]")
        if self.pow_mode not in ("bernoulli", "leading_zeros"):
            raise ConfigError(f"unknown pow mode {self.pow_mode!r}")
        self.adversary.validate()

    def to_dict(self) -> dict:
        d = asdict(self)
        return d

    @classmethod
    def from_dict(cls, obj: dict) -> "SimConfig":
        obj = dict(obj)
        adv = obj.pop("adversary", {})
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        cfg = cls(**obj)
        if isinstance(adv, dict):
            extra = set(adv) - set(AdversaryStrategy.__dataclass_fields__)
            if extra:
                raise ConfigError(f"unknown adversary fields: {sorted(extra)}")
            cfg.adversary = AdversaryStrategy(**adv)
        cfg.validate()
        return cfg


def child_rng(seed: int, label: str) -> random.Random:
    h = hashlib.sha256(seed.to_bytes(8, "little", signed=False) + label.encode())
    return random.Random(int.from_bytes(h.digest()[:8], "little"))


def genesis_allocations(config: SimConfig) -> list[tuple[int, int, int]]:
    """(owner, value, shard) rows: client coins spread over all shards."""
    rows = []
    for c in range(config.clients):
        owner = CLIENT_ID_BASE + c
        for u in range(config.client_utxos):
            rows.append((owner, config.utxo_value, (c + u) % config.m))
    if config.adversary.name == "double_spend":
        for u in range(config.client_utxos):
            rows.append((ADVERSARY_CLIENT, config.utxo_value, u % config.m))
    return rows


# ---------------------------------------------------------------------------
# per-node state
# ---------------------------------------------------------------------------

class AdmissionFilter:
    """Ledger-backed mempool admission used during candidate assembly."""

    def __init__(self, ledger: LedgerState):
        self.ledger = ledger
        self._used: set[OutPoint] = set()

    def reset(self) -> None:
        self._used.clear()

    def __call__(self, tx: Transaction, shard: int) -> str:
        for op in tx.inputs:
            if op in self._used:
                return SKIP
        verdict = self.ledger.validate_transaction(tx, shard)
        if verdict.kind in (VerdictKind.VALID, VerdictKind.PROVISIONAL):
            self._used.update(tx.inputs)
            return INCLUDE
        if verdict.reason == "unknown-input":
            return SKIP
        return DROP


class Node:
    def __init__(self, node_id: int, config: SimConfig, pow_params: PowParams,
                 allocations: list[tuple[int, int, int]], honest: bool = True,
                 track_detail: bool = False):
        self.id = node_id
        self.honest = honest
        self.config = config
        self.track_detail = track_detail

        self.dag = BlockDag(config.m, pow_params, config.pending_limit)
        self.ledger = LedgerState(config.m, config.reward)
        self.ledger.allocate_genesis(allocations)
        self.filter = AdmissionFilter(self.ledger)
        self.miner = MinerState(
            miner_id=node_id,
            view=self.dag,
            mp=config.mp,
            is_honest=honest,
            capacity=config.D,
            tx_filter=self.filter,
        )

        m = config.m
        self.confirmed_ids: list[list[bytes]] = [[] for _ in range(m)]
        self.buffers: list[deque] = [deque() for _ in range(m)]
        self.bar = 0
        self.l_ids: list[bytes] = []
        self.l_keys: list[tuple[int, int]] = []
        self.l_digests: list[bytes] = []
        self.tx_locations: dict[bytes, tuple[bytes, int]] = {}
        self.unrouted: list[Transaction] = []
        self.violations: list[tuple] = []
        self.settled_log: list[tuple[int, SettledTx]] = []
        self.realtime_voids: list[tuple[int, bytes]] = []  # (round, tx_id)
        self.confirm_round: dict[bytes, int] = {}
        self.l_round: dict[bytes, int] = {}
        self.last_removed: bytes | None = None  # most recent block to go stale
        self._deep_reorg_flagged: set[int] = set()
        self.fresh_txs: list[Transaction] = []  # newly main-chain, for the workload

    # -- message intake -------------------------------------------------

    def receive_block(self, block: Block, rnd: int) -> None:
        self.dag.insert(block)
        self.absorb_events(rnd)

    def absorb_events(self, rnd: int) -> None:
        for event in self.dag.drain_reorg_events():
            self._retract(event, rnd)
            for bid in event.added:
                block = self.dag.blocks[bid]
                self.ledger.register_block(block, self.dag.clocks[bid])
                for idx, tx in enumerate(block.transactions):
                    self.tx_locations.setdefault(tx.tx_id, (bid, idx))
                    self.miner.mempools[block.chain].remove(tx.tx_id)
                    if self.track_detail:
                        self.fresh_txs.append(tx)

    def _retract(self, event: ReorgEvent, rnd: int) -> None:
        if not event.removed:
            return
        self.last_removed = event.removed[0]
        tip_h = self.dag.heights[self.dag.tips[event.chain]]
        for bid in event.removed:
            if tip_h - self.dag.heights.get(bid, tip_h) > self.config.T:
                self.violations.append(("void-outside-window", rnd, event.chain))
        stale = [self.dag.blocks[bid] for bid in event.removed if bid in self.dag.blocks]
        report = self.ledger.on_reorg(stale)
        for tx_id in report.affected_txs:
            self.realtime_voids.append((rnd, tx_id))
        for block in stale:
            for tx in block.transactions:
                loc = self.tx_locations.get(tx.tx_id)
                if loc and loc[0] == block.block_id:
                    del self.tx_locations[tx.tx_id]
                self.on_tx(tx)  # back to the mempool it goes

    def on_tx(self, tx: Transaction) -> None:
        shard = self._route_shard(tx)
        if shard is None:
            if len(self.unrouted) < self.config.pending_limit:
                self.unrouted.append(tx)
            return
        if tx.tx_id not in self.tx_locations:
            self.miner.mempools[shard].add(tx)

    def _route_shard(self, tx: Transaction) -> int | None:
        if not tx.inputs:
            return None
        src = self.ledger._source_of(tx.inputs[0])
        if src is None:
            return None
        return src[2]

    def retry_unrouted(self) -> None:
        if not self.unrouted:
            return
        pending, self.unrouted = self.unrouted, []
        for tx in pending:
            self.on_tx(tx)

    # -- confirmation pipeline -------------------------------------------

    def step_confirmations(self, rnd: int) -> list[SettledTx]:
        m = self.config.m
        T = self.config.T
        for i in range(m):
            tip = self.dag.tips[i]
            want = self.dag.heights[tip] - T  # confirmed non-genesis count
            cur = len(self.confirmed_ids[i])
            if want <= cur:
                continue
            anchor = self.dag.ancestor_at_height(tip, cur)
            if cur > 0 and anchor != self.confirmed_ids[i][-1]:
                if i not in self._deep_reorg_flagged:
                    self._deep_reorg_flagged.add(i)
                    self.violations.append(("deep-reorg", rnd, i))
                continue
            fresh: list[bytes] = []
            cursor = self.dag.ancestor_at_height(tip, want)
            while self.dag.heights[cursor] > cur:
                fresh.append(cursor)
                cursor = self.dag.parent_of(cursor)
            fresh.reverse()
            for bid in fresh:
                self.confirmed_ids[i].append(bid)
                self.buffers[i].append((self.dag.clocks[bid], i, bid))
                if self.track_detail:
                    self.confirm_round[bid] = rnd

        new_bar = None
        for i in range(m):
            ids = self.confirmed_ids[i]
            v = self.dag.clocks[ids[-1]] if ids else 0
            new_bar = v if new_bar is None else min(new_bar, v)
        if new_bar < self.bar:
            self.violations.append(("bar-regressed", rnd, new_bar))
        else:
            self.bar = new_bar

        batch = []
        for i in range(m):
            buf = self.buffers[i]
            while buf and buf[0][0] < self.bar:
                batch.append(buf.popleft())
        if not batch:
            return []
        batch.sort(key=lambda e: (e[0], e[1]))
        if self.l_keys and (batch[0][0], batch[0][1]) <= self.l_keys[-1]:
            self.violations.append(("l-order", rnd))
        start = len(self.l_ids)
        blocks = []
        for clock, chain, bid in batch:
            self.l_ids.append(bid)
            self.l_keys.append((clock, chain))
            prev = self.l_digests[-1] if self.l_digests else b"\x00" * 32
            self.l_digests.append(digest(prev + bid))
            if self.track_detail:
                self.l_round[bid] = rnd
            blocks.append(self.dag.blocks[bid])
        settled = self.ledger.apply_confirmed(blocks, start)
        if self.track_detail:
            for st in settled:
                self.settled_log.append((rnd, st))
        return settled

    # -- light-client support ---------------------------------------------

    def locate_tx(self, tx_id: bytes):
        loc = self.tx_locations.get(tx_id)
        if loc is None:
            return None
        return self.dag.blocks[loc[0]], loc[1]

    def depth_of(self, bid: bytes) -> int:
        block = self.dag.blocks[bid]
        return self.dag.heights[self.dag.tips[block.chain]] - self.dag.heights[bid]


def prefix_consistent(a: Node, b: Node) -> bool:
    """Do two nodes' globally confirmed sequences agree on their overlap?"""
    if not a.l_digests or not b.l_digests:
        return True
    if len(a.l_digests) <= len(b.l_digests):
        return a.l_digests[-1] == b.l_digests[len(a.l_digests) - 1]
    return b.l_digests[-1] == a.l_digests[len(b.l_digests) - 1]


# ---------------------------------------------------------------------------
# adversary
# ---------------------------------------------------------------------------

class Adversary:
    """Single coordinator for all corrupt miners and the delivery schedule."""

    def __init__(self, config: SimConfig, pow_params: PowParams,
                 allocations: list[tuple[int, int, int]], corrupt_ids: list[int],
                 rng: random.Random):
        self.config = config
        self.strategy = config.adversary
        self.ids = corrupt_ids
        self.rng = rng
        self.node = Node(corrupt_ids[0], config, pow_params, allocations, honest=False)
        self.miners = []
        sync_policy = self._sync_policy()
        for cid in corrupt_ids:
            miner = MinerState(
                miner_id=cid,
                view=self.node.dag,
                mp=config.mp,
                is_honest=False,
                capacity=config.D,
                mempools=self.node.miner.mempools,
                tx_filter=self.node.filter,
                sync_policy=sync_policy,
            )
            self.miners.append(miner)
        self.private: list[Block] = []
        self.private_ids: set[bytes] = set()
        self.public_heights = [0] * config.m
        self._ds_pool: list[tuple[OutPoint, int]] = []
        if self.strategy.name == "double_spend":
            for k, (owner, value, _shard) in enumerate(allocations):
                if owner == ADVERSARY_CLIENT:
                    self._ds_pool.append((allocation_outpoint(k), value))

    def _sync_policy(self):
        if self.strategy.name != "ordering_attack":
            return None
        mode = self.strategy.sync_target

        def policy(view: BlockDag) -> bytes:
            if mode == "smallest-clock":
                best = view.tips[0]
                for tip in view.tips[1:]:
                    if view.clocks[tip] < view.clocks[best]:
                        best = tip
                return best
            if mode == "random":
                return self.rng.choice(list(view.tips))
            stale = self.node.last_removed
            if stale is not None and stale in view.blocks:
                return stale
            return view.select_sync_block()

        return policy

    def delay_for(self, honest_sender: bool, honest_recipient: bool) -> int:
        if not honest_sender or not honest_recipient:
            return 1  # the adversary rushes its own traffic and reads instantly
        if self.strategy.name in ("delay_max", "withhold"):
            return self.config.delta
        return self.config.default_delay

    def observe_public_block(self, block: Block) -> None:
        h = self.node.dag.heights.get(block.block_id)
        if h is not None and h > self.public_heights[block.chain]:
            self.public_heights[block.chain] = h

    def mine(self, rnd: int) -> tuple[list[Block], list[Block]]:
        """Returns (publish now, kept private)."""
        publish: list[Block] = []
        kept: list[Block] = []
        withhold = self.strategy.name == "withhold"
        for miner in self.miners:
            for block in try_mine(miner, 1, self.rng, rnd):
                self.node.absorb_events(rnd)
                if withhold and block.block_id in self.node.dag.blocks:
                    kept.append(block)
                    self.private.append(block)
                    self.private_ids.add(block.block_id)
                else:
                    publish.append(block)
        for block in publish:
            self.observe_public_block(block)
        return publish, kept

    def reveal_check(self) -> list[Block]:
        """Withhold strategy: dump the private chain when the race demands."""
        if self.strategy.name != "withhold" or not self.private:
            return []
        fire = False
        for i in range(self.config.m):
            seg = [b for b in self.private if b.chain == i]
            if not seg:
                continue
            tip_h = max(self.node.dag.heights[b.block_id] for b in seg
                        if b.block_id in self.node.dag.heights)
            lead = tip_h - self.public_heights[i]
            if lead <= 0 or lead >= self.strategy.trigger:
                fire = True
                break
        if not fire:
            return []
        revealed = [b for b in self.private if b.block_id in self.node.dag.blocks]
        revealed.sort(key=lambda b: self.node.dag.heights[b.block_id])
        self.private.clear()
        self.private_ids.clear()
        for block in revealed:
            self.observe_public_block(block)
        return revealed

    def client_step(self, rnd: int) -> list[tuple[Transaction, int]]:
        """Double-spend client: conflicting pairs aimed at recipient halves.

        Returns (tx, parity) pairs; parity selects which half of the
        miners receives that arm of the conflict.
        """
        if self.strategy.name != "double_spend":
            return []
        if rnd % self.strategy.ds_interval != 0 or not self._ds_pool:
            return []
        op, value = self._ds_pool.pop(0)
        shard_a = self.rng.randrange(self.config.m)
        shard_b = self.rng.randrange(self.config.m)
        tx_a = Transaction((op,), (TxOutput(value, ADVERSARY_CLIENT, shard_a),), 0)
        tx_b = Transaction(
            (op,), (TxOutput(value, CLIENT_ID_BASE, shard_b),), 0
        )
        return [(tx_a, 0), (tx_b, 1)]


# ---------------------------------------------------------------------------
# client workload
# ---------------------------------------------------------------------------

class Workload:
    """Clients spending their confirmed coins, as seen by a reference node."""

    def __init__(self, config: SimConfig, reference: Node, rng: random.Random):
        self.config = config
        self.reference = reference
        self.rng = rng
        self.pools: dict[int, list[tuple[OutPoint, int, int]]] = {}
        self.inflight: dict[OutPoint, bytes] = {}
        self.first_attempt: dict[OutPoint, int] = {}
        self.intent_latency: list[int] = []
        self.submitted = 0
        self.settled_valid = 0
        self.requeued = 0
        self._acc = 0.0
        self._tx_intent: dict[bytes, tuple[int, OutPoint]] = {}
        self._credited: set[bytes] = set()
        for k, (owner, value, shard) in enumerate(genesis_allocations(config)):
            if owner >= CLIENT_ID_BASE:
                self.pools.setdefault(owner, []).append(
                    (allocation_outpoint(k), value, shard)
                )

    def step(self, rnd: int) -> list[Transaction]:
        if self.config.spend_provisional:
            self._credit_fresh()
        if rnd % 50 == 0:
            self._reclaim_dead_intents()
        self._acc += self.config.tx_rate
        count = min(int(self._acc), self.config.mu)
        self._acc -= count
        txs = []
        clients = sorted(c for c, pool in self.pools.items() if pool)
        for _ in range(count):
            if not clients:
                break
            client = clients[self.rng.randrange(len(clients))]
            pool = self.pools[client]
            op, value, shard = pool.pop(self.rng.randrange(len(pool)))
            if not pool:
                clients.remove(client)
            if self.reference.ledger._source_of(op) is None:
                continue  # origin evaporated in a reorg; coin is gone
            fee = min(self.rng.randint(self.config.fee_min, self.config.fee_max),
                      max(value - 1, 0))
            recipient = CLIENT_ID_BASE + self.rng.randrange(self.config.clients)
            out_shard = self._pick_shard()
            tx = Transaction(
                (op,), (TxOutput(value - fee, recipient, out_shard),), fee
            )
            self.inflight[op] = tx.tx_id
            if op not in self.first_attempt:
                self.first_attempt[op] = rnd
            self._tx_intent[tx.tx_id] = (client, op)
            self.submitted += 1
            txs.append(tx)
        return txs

    def _pick_shard(self) -> int:
        if not self.config.least_loaded_shards:
            return self.rng.randrange(self.config.m)
        sizes = [len(p) for p in self.reference.miner.mempools]
        return min(range(self.config.m), key=lambda i: (sizes[i], i))

    def _credit_fresh(self) -> None:
        """Spendable-but-unconfirmed: credit coins as soon as their tx
        lands on a main chain, accepting the risk of a stale origin."""
        fresh, self.reference.fresh_txs = self.reference.fresh_txs, []
        for tx in fresh:
            if tx.tx_id in self._credited:
                continue
            self._credited.add(tx.tx_id)
            for i, out in enumerate(tx.outputs):
                if out.owner >= CLIENT_ID_BASE:
                    self.pools.setdefault(out.owner, []).append(
                        (OutPoint(tx.tx_id, i), out.value, out.shard)
                    )

    def _reclaim_dead_intents(self) -> None:
        for op, tx_id in list(self.inflight.items()):
            if self.reference.ledger._source_of(op) is None:
                intent = self._tx_intent.pop(tx_id, None)
                self.inflight.pop(op, None)
                self.first_attempt.pop(op, None)

    def on_settled(self, rnd: int, settled: list[SettledTx]) -> None:
        for st in settled:
            intent = self._tx_intent.pop(st.tx_id, None)
            if intent is None:
                continue
            client, op = intent
            self.inflight.pop(op, None)
            if st.verdict.valid:
                self.settled_valid += 1
                self.intent_latency.append(rnd - self.first_attempt.pop(op, rnd))
                if st.tx_id in self._credited:
                    continue
                self._credited.add(st.tx_id)
                loc = self.reference.tx_locations.get(st.tx_id)
                tx = None
                if loc is not None:
                    block = self.reference.dag.blocks.get(loc[0])
                    if block is not None:
                        tx = block.transactions[loc[1]]
                if tx is not None:
                    for i, out in enumerate(tx.outputs):
                        if out.owner >= CLIENT_ID_BASE:
                            self.pools.setdefault(out.owner, []).append(
                                (OutPoint(st.tx_id, i), out.value, out.shard)
                            )
            else:
                self._requeue(op, client)

    def on_realtime_voids(self, voided_tx_ids: list[bytes]) -> None:
        for tx_id in voided_tx_ids:
            intent = self._tx_intent.pop(tx_id, None)
            if intent is None:
                continue
            client, op = intent
            self.inflight.pop(op, None)
            self._requeue(op, client)

    def _requeue(self, op: OutPoint, client: int) -> None:
        src = self.reference.ledger._source_of(op)
        if src is None:
            self.first_attempt.pop(op, None)
            return
        value, _owner, shard, _creator = src
        self.pools.setdefault(client, []).append((op, value, shard))
        self.requeued += 1


# ---------------------------------------------------------------------------
# scheduler
# ---------------------------------------------------------------------------

class Scheduler:
    def __init__(self, delta: int, relay_dependencies: bool):
        self.delta = delta
        self.relay_dependencies = relay_dependencies
        self.queue: dict[int, list[tuple]] = {}
        self.delivered: dict[int, set[bytes]] = {}
        self.blocks_by_id: dict[bytes, Block] = {}
        self.sent = 0
        self.piggybacked = 0

    def register_node(self, node_id: int) -> None:
        self.delivered[node_id] = set()

    def note_block(self, block: Block) -> None:
        self.blocks_by_id[block.block_id] = block

    def schedule_block(self, sender: int, block: Block, rnd: int,
                       recipients: list[int], delay_of) -> None:
        self.note_block(block)
        for rid in recipients:
            if rid == sender:
                continue
            delay = delay_of(rid)
            if not 1 <= delay <= self.delta:
                raise AssertionError(
                    f"delivery delay {delay} outside [1, {self.delta}]"
                )
            self.queue.setdefault(rnd + delay, []).append((rid, "block", block, sender))
            self.sent += 1

    def schedule_tx(self, tx: Transaction, rnd: int, recipients: list[int],
                    delay_of) -> None:
        for rid in recipients:
            delay = delay_of(rid)
            if not 1 <= delay <= self.delta:
                raise AssertionError(
                    f"delivery delay {delay} outside [1, {self.delta}]"
                )
            self.queue.setdefault(rnd + delay, []).append((rid, "tx", tx, -1))
            self.sent += 1

    def due(self, rnd: int) -> list[tuple]:
        items = self.queue.pop(rnd, [])
        out = []
        for rid, kind, payload, sender in items:
            if kind == "block":
                seen = self.delivered[rid]
                if self.relay_dependencies:
                    dep = payload.header.sync_ref
                    dep_block = self.blocks_by_id.get(dep)
                    if dep_block is not None and dep not in seen:
                        seen.add(dep)
                        self.piggybacked += 1
                        out.append((rid, "block", dep_block, sender))
                seen.add(payload.block_id)
            out.append((rid, kind, payload, sender))
        return out

    def backlog(self) -> int:
        return sum(len(v) for v in self.queue.values())


# ---------------------------------------------------------------------------
# the run loop
# ---------------------------------------------------------------------------

@dataclass
class SimTrace:
    config: dict
    rounds: list[dict]
    samples: list[dict]
    violations: list[list]
    final: dict
    trace_digest: str = ""

    def compute_digest(self) -> str:
        body = json.dumps(
            {"rounds": self.rounds, "samples": self.samples, "final": self.final},
            sort_keys=True,
        )
        return hashlib.sha256(body.encode()).hexdigest()

    def to_json(self) -> dict:
        return {
            "config": self.config,
            "rounds": self.rounds,
            "samples": self.samples,
            "violations": self.violations,
            "final": self.final,
            "trace_digest": self.trace_digest,
        }


@dataclass
class RunResult:
    trace: SimTrace
    nodes: list[Node]
    adversary: Adversary | None
    workload: Workload | None
    observers: list[Node]
    mined_log: list[tuple[int, bytes, int, int]]  # round, id, miner, chain
    scheduler: Scheduler
    corrupt_ids: set[int]

    @property
    def violations(self) -> list:
        return self.trace.violations


def run(config: SimConfig, hooks=None) -> RunResult:
    config.validate()
    pow_params = PowParams(mode=config.pow_mode)
    allocations = genesis_allocations(config)

    n_corrupt = int(config.rho * config.n)
    corrupt_ids = list(range(config.n - n_corrupt, config.n)) if n_corrupt else []
    honest_ids = [i for i in range(config.n) if i not in set(corrupt_ids)]

    observer_ids = honest_ids[: max(1, min(config.observer_count, len(honest_ids)))]
    nodes: list[Node] = []
    for nid in honest_ids:
        nodes.append(
            Node(nid, config, pow_params, allocations, honest=True,
                 track_detail=(nid == observer_ids[0]))
        )
    by_id = {node.id: node for node in nodes}

    adversary = None
    if corrupt_ids:
        adversary = Adversary(
            config, pow_params, allocations, corrupt_ids,
            child_rng(config.seed, "adversary"),
        )
        by_id[adversary.node.id] = adversary.node

    scheduler = Scheduler(config.delta, config.relay_dependencies)
    recipient_ids = [node.id for node in nodes]
    if adversary:
        recipient_ids.append(adversary.node.id)
    for rid in recipient_ids:
        scheduler.register_node(rid)

    miner_rngs = {node.id: child_rng(config.seed, f"miner:{node.id}") for node in nodes}
    workload = None
    if config.tx_rate > 0:
        workload = Workload(config, nodes[0], child_rng(config.seed, "workload"))

    observers = [by_id[i] for i in observer_ids]
    mined_log: list[tuple[int, bytes, int, int]] = []
    trace_rounds: list[dict] = []
    samples: list[dict] = []
    violations: list[list] = []
    adversary_ids_set = set(corrupt_ids)

    def honest_delay(rid: int) -> int:
        if adversary is None:
            return config.default_delay
        return adversary.delay_for(True, rid not in adversary_ids_set)

    def adversary_delay(rid: int) -> int:
        return 1

    def deliver(rnd: int) -> int:
        delivered = 0
        for rid, kind, payload, _sender in scheduler.due(rnd):
            node = by_id[rid]
            if kind == "block":
                node.receive_block(payload, rnd)
                if adversary and rid == adversary.node.id:
                    adversary.observe_public_block(payload)
            else:
                node.on_tx(payload)
            delivered += 1
        return delivered

    def broadcast_block(sender_id: int, block: Block, rnd: int, honest_sender: bool):
        delay_of = honest_delay if honest_sender else adversary_delay
        scheduler.schedule_block(sender_id, block, rnd, recipient_ids, delay_of)
        scheduler.delivered[sender_id].add(block.block_id)

    total_rounds = config.rounds
    for rnd in range(1, total_rounds + 1):
        delivered = deliver(rnd)
        for node in nodes:
            node.retry_unrouted()
        if adversary:
            adversary.node.retry_unrouted()

        if workload:
            for tx in workload.step(rnd):
                scheduler.schedule_tx(tx, rnd, recipient_ids, honest_delay)
        if adversary:
            for tx, parity in adversary.client_step(rnd):
                targets = [i for i in recipient_ids if i % 2 == parity
                           or i == adversary.node.id]
                scheduler.schedule_tx(tx, rnd, targets, adversary_delay)

        round_mined = []
        for node in nodes:
            for block in try_mine(node.miner, 1, miner_rngs[node.id], rnd):
                node.absorb_events(rnd)
                scheduler.delivered[node.id].add(block.block_id)
                broadcast_block(node.id, block, rnd, honest_sender=True)
                mined_log.append((rnd, block.block_id, node.id, block.chain))
                round_mined.append([block.block_id.hex()[:12], node.id, block.chain])

        if adversary:
            publish, kept = adversary.mine(rnd)
            for block in publish + kept:
                mined_log.append((rnd, block.block_id, block.header.miner_id, block.chain))
                round_mined.append(
                    [block.block_id.hex()[:12], block.header.miner_id, block.chain]
                )
            for block in publish:
                scheduler.delivered[adversary.node.id].add(block.block_id)
                broadcast_block(adversary.node.id, block, rnd, honest_sender=False)
            for block in kept:
                scheduler.note_block(block)
                scheduler.delivered[adversary.node.id].add(block.block_id)
            for block in adversary.reveal_check():
                broadcast_block(adversary.node.id, block, rnd, honest_sender=False)

        for node in nodes:
            settled = node.step_confirmations(rnd)
            if workload and node is nodes[0]:
                workload.on_settled(rnd, settled)
                if node.realtime_voids:
                    fresh = [t for r, t in node.realtime_voids if r == rnd]
                    workload.on_realtime_voids(fresh)
        if adversary:
            adversary.node.step_confirmations(rnd)

        trace_rounds.append({
            "r": rnd,
            "mined": round_mined,
            "delivered": delivered,
            "bars": [node.bar for node in nodes],
        })

        if rnd % config.sample_interval == 0 or rnd == total_rounds:
            sample = {
                "r": rnd,
                "l_len": [len(o.l_ids) for o in observers],
                "l_digest": [
                    (o.l_digests[-1].hex() if o.l_digests else "") for o in observers
                ],
                "utxo_digest": [o.ledger.utxo_digest().hex() for o in observers],
                "applied": [o.ledger.applied_count for o in observers],
            }
            samples.append(sample)
            for i in range(len(observers)):
                for j in range(i + 1, len(observers)):
                    if not prefix_consistent(observers[i], observers[j]):
                        violations.append(
                            ["prefix", rnd, observers[i].id, observers[j].id]
                        )
            if hooks is not None and hasattr(hooks, "on_sample"):
                hooks.on_sample(rnd, observers)

    # drain the in-flight tail so every honest message lands
    for extra in range(1, config.delta + 1):
        rnd = total_rounds + extra
        deliver(rnd)
        for node in nodes:
            settled = node.step_confirmations(rnd)
            if workload and node is nodes[0]:
                workload.on_settled(rnd, settled)
        if adversary:
            adversary.node.step_confirmations(rnd)

    undelivered = scheduler.backlog()
    for node in nodes:
        violations.extend([list(v) for v in node.violations])

    final = {
        "blocks_mined": len(mined_log),
        "l_len": len(observers[0].l_ids),
        "bar": observers[0].bar,
        "undelivered": undelivered,
        "submitted": workload.submitted if workload else 0,
        "settled_valid": workload.settled_valid if workload else 0,
        "pending_evictions": sum(n.dag.pending_evictions for n in nodes),
        "piggybacked": scheduler.piggybacked,
    }
    trace = SimTrace(
        config=config.to_dict(),
        rounds=trace_rounds,
        samples=samples,
        violations=violations,
        final=final,
    )
    trace.trace_digest = trace.compute_digest()
    return RunResult(
        trace=trace,
        nodes=nodes,
        adversary=adversary,
        workload=workload,
        observers=observers,
        mined_log=mined_log,
        scheduler=scheduler,
        corrupt_ids=set(corrupt_ids),
    )


__all__ = [
    "ConfigError", "AdversaryStrategy", "SimConfig", "child_rng",
    "genesis_allocations", "AdmissionFilter", "Node", "prefix_consistent",
    "Adversary", "Workload", "Scheduler", "SimTrace", "RunResult", "run",
    "CLIENT_ID_BASE", "ADVERSARY_CLIENT",
]

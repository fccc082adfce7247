"""Sharded UTXO ledger driven by the globally confirmed block sequence.

The ledger sees every main-chain block twice.  When a block first lands
on its chain's main chain the node *registers* it: its transactions
become provisional, their outputs spendable-but-revocable, and a spend
of a provisional output is itself provisional.  When the block later
enters the globally confirmed sequence L the node *applies* it: its
transactions settle to a final verdict and the confirmed UTXO set
changes.  Blocks that fall off a main chain inside the confirmation
window are retracted, which voids their provisional outputs and
cascades through every provisional spend that depended on them.

Final verdicts are a pure function of the applied prefix of L: a
transaction settles only once all transactions it depends on (input
creators and higher-priority spenders of the same outpoints) have
settled, so two nodes that agree on a prefix of L agree on every
settled verdict and on the confirmed UTXO set, regardless of how their
unconfirmed windows differ.

Conflicting spends of one outpoint are resolved by global priority
(clock, chain, position in block): the first eligible spender wins and
every later one is voided as a double spend.  Transactions whose input
shard differs from the chain their block landed on are voided where
they stand; the block itself stays valid.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum

from .core import (
    BLOCK_REWARD,
    Block,
    OutPoint,
    Transaction,
    UTXO,
    allocation_outpoint,
    coinbase_outpoint,
    digest,
    fee_outpoint,
)


class LedgerError(Exception):
    pass


class VerdictKind(Enum):
    VALID = "valid"
    PROVISIONAL = "provisional"
    INVALID = "invalid"


@dataclass(frozen=True)
class TxVerdict:
    kind: VerdictKind
    reason: str | None = None

    @property
    def valid(self) -> bool:
        return self.kind is VerdictKind.VALID

    @property
    def invalid(self) -> bool:
        return self.kind is VerdictKind.INVALID


VALID = TxVerdict(VerdictKind.VALID)
PROVISIONAL = TxVerdict(VerdictKind.PROVISIONAL)


def invalid(reason: str) -> TxVerdict:
    return TxVerdict(VerdictKind.INVALID, reason)


class _Occurrence:
    """One transaction's position on a main chain."""

    __slots__ = ("tx", "block_id", "chain", "clock", "index", "miner", "in_l", "priority")

    def __init__(self, tx: Transaction, block_id: bytes, chain: int, clock: int,
                 index: int, miner: int):
        self.tx = tx
        self.block_id = block_id
        self.chain = chain
        self.clock = clock
        self.index = index
        self.miner = miner
        self.in_l = False
        self.priority = (clock, chain, index)


@dataclass(frozen=True)
class _EvalRec:
    eligible: bool  # structural checks and ancestry pass; may consume inputs
    valid: bool  # eligible and wins every contested input
    reason: str | None
    provisional: bool  # depends on at least one unsettled occurrence


@dataclass(frozen=True)
class SettledTx:
    tx_id: bytes
    verdict: TxVerdict
    block_id: bytes
    miner: int


@dataclass(frozen=True)
class ReorgVoid:
    """Realtime damage report for a retraction inside the window."""

    voided_outpoints: tuple[OutPoint, ...]
    affected_txs: tuple[bytes, ...]  # provisional spenders hit by the cascade


class LedgerState:
    def __init__(self, m: int, reward: int = BLOCK_REWARD):
        self.m = m
        self.reward = reward

        self.confirmed: dict[OutPoint, UTXO] = {}
        self._minted: dict[OutPoint, tuple[int, int, int]] = {}  # value, owner, shard

        self._occ: dict[bytes, _Occurrence] = {}
        self._creator_of: dict[OutPoint, bytes] = {}
        self._claimants: dict[OutPoint, list[tuple[tuple, bytes]]] = {}

        self._final: dict[bytes, TxVerdict] = {}
        self._final_eval: dict[bytes, _EvalRec] = {}
        self._memo: dict[bytes, tuple[int, _EvalRec]] = {}
        self._epoch = 0

        # settlement deferrals
        self._awaiting_tx: dict[bytes, set[bytes]] = {}  # creator txid -> waiters
        self._awaiting_op: dict[OutPoint, set[bytes]] = {}  # unknown outpoint -> waiters

        self.voided_outpoints: set[OutPoint] = set()
        self.applied_ids: list[bytes] = []
        self.rolling_digests: list[bytes] = []

        # accounting
        self.genesis_total = 0
        self.rewards_minted = 0
        self.wasted_value = 0
        self.reward_credit: dict[int, int] = {}  # miner -> reward + fees settled
        self.voided_log: list[tuple[bytes, str]] = []

    # ------------------------------------------------------------------
    # bootstrap
    # ------------------------------------------------------------------

    def allocate_genesis(self, allocations: list[tuple[int, int, int]]) -> list[UTXO]:
        """Install the initial coin distribution: (owner, value, shard) triples."""
        if self.applied_ids or self._occ:
            raise LedgerError("genesis allocation must precede any block")
        created = []
        for k, (owner, value, shard) in enumerate(allocations):
            if not 0 <= shard < self.m:
                raise LedgerError(f"allocation shard {shard} out of range")
            op = allocation_outpoint(k)
            utxo = UTXO(op, value, owner, shard)
            self.confirmed[op] = utxo
            self._minted[op] = (value, owner, shard)
            self.genesis_total += value
            created.append(utxo)
        self._epoch += 1
        return created

    # ------------------------------------------------------------------
    # provisional layer: main-chain window tracking
    # ------------------------------------------------------------------

    def register_block(self, block: Block, clock: int) -> None:
        """A block joined its chain's main chain: its txs become provisional."""
        for index, tx in enumerate(block.transactions):
            if tx.tx_id in self._occ:
                continue  # duplicate inclusion: first occurrence stands
            occ = _Occurrence(tx, block.block_id, block.chain, clock, index,
                              block.header.miner_id)
            self._occ[tx.tx_id] = occ
            for op in tx.inputs:
                entry = (occ.priority, tx.tx_id)
                lst = self._claimants.setdefault(op, [])
                lo = 0
                while lo < len(lst) and lst[lo][0] < occ.priority:
                    lo += 1
                lst.insert(lo, entry)
            waiters: set[bytes] = set()
            for i in range(len(tx.outputs)):
                op = OutPoint(tx.tx_id, i)
                self._creator_of[op] = tx.tx_id
                waiters |= self._awaiting_op.pop(op, set())
            self._epoch += 1
            if waiters:
                for w in waiters:
                    self._awaiting_tx.setdefault(tx.tx_id, set()).add(w)

    def on_reorg(self, stale_blocks: list[Block]) -> ReorgVoid:
        """Blocks fell off a main chain: void their outputs and cascade.

        The returned report is the realtime view (what a node should
        requeue or alert on); settlement of already-applied dependents
        stays deferred so that final verdicts remain a pure function of
        the confirmed sequence.
        """
        voided: list[OutPoint] = []
        affected: list[bytes] = []
        frontier: list[OutPoint] = []
        for block in stale_blocks:
            for tx in block.transactions:
                occ = self._occ.get(tx.tx_id)
                if occ is None or occ.block_id != block.block_id:
                    continue
                if occ.in_l:
                    # a globally confirmed block can never legally retract;
                    # the caller records this as a consistency violation
                    continue
                self._unregister(occ)
                for i in range(len(tx.outputs)):
                    op = OutPoint(tx.tx_id, i)
                    voided.append(op)
                    frontier.append(op)
        # cascade through provisional spenders of the vanished outputs
        seen: set[bytes] = set()
        while frontier:
            op = frontier.pop()
            for _, claimant in self._claimants.get(op, []):
                occ = self._occ.get(claimant)
                if occ is None or claimant in seen or claimant in self._final:
                    continue
                seen.add(claimant)
                affected.append(claimant)
                for i in range(len(occ.tx.outputs)):
                    child = OutPoint(claimant, i)
                    voided.append(child)
                    frontier.append(child)
        self._epoch += 1
        return ReorgVoid(tuple(voided), tuple(affected))

    def _unregister(self, occ: _Occurrence) -> None:
        tx = occ.tx
        del self._occ[tx.tx_id]
        for op in tx.inputs:
            lst = self._claimants.get(op)
            if lst:
                self._claimants[op] = [e for e in lst if e[1] != tx.tx_id]
        for i in range(len(tx.outputs)):
            op = OutPoint(tx.tx_id, i)
            if self._creator_of.get(op) == tx.tx_id:
                del self._creator_of[op]
        # settlements that were waiting on this creator go back to waiting
        # on the raw outpoint: a replacement branch may re-mine the same tx
        waiters = self._awaiting_tx.pop(tx.tx_id, set())
        if waiters:
            for i in range(len(tx.outputs)):
                op = OutPoint(tx.tx_id, i)
                for w in waiters:
                    wocc = self._occ.get(w)
                    if wocc is not None and op in wocc.tx.inputs:
                        self._awaiting_op.setdefault(op, set()).add(w)

    # ------------------------------------------------------------------
    # resolution
    # ------------------------------------------------------------------

    def _source_of(self, op: OutPoint):
        """(value, owner, shard, creator_txid | None) or None if unknown."""
        creator = self._creator_of.get(op)
        if creator is not None:
            out = self._occ[creator].tx.outputs[op.index]
            return out.value, out.owner, out.shard, creator
        minted = self._minted.get(op)
        if minted is not None:
            value, owner, shard = minted
            return value, owner, shard, None
        return None

    def _lookup_eval(self, tx_id: bytes) -> _EvalRec | None:
        rec = self._final_eval.get(tx_id)
        if rec is not None:
            return rec
        cached = self._memo.get(tx_id)
        if cached is not None and cached[0] == self._epoch:
            return cached[1]
        return None

    def _eval(self, tx_id: bytes) -> _EvalRec:
        rec = self._lookup_eval(tx_id)
        if rec is not None:
            return rec
        stack = [tx_id]
        expanding: set[bytes] = set()
        while stack:
            cur = stack[-1]
            if self._lookup_eval(cur) is not None:
                stack.pop()
                expanding.discard(cur)
                continue
            occ = self._occ[cur]
            expanding.add(cur)
            pending = []
            for op in occ.tx.inputs:
                creator = self._creator_of.get(op)
                if creator is not None and self._lookup_eval(creator) is None:
                    pending.append(creator)
                for prio, claimant in self._claimants.get(op, []):
                    if prio >= occ.priority:
                        break
                    if self._lookup_eval(claimant) is None:
                        pending.append(claimant)
            if pending:
                for dep in pending:
                    if dep in expanding:
                        raise LedgerError("transaction resolution cycle")
                stack.extend(pending)
                continue
            self._memo[cur] = (self._epoch, self._eval_now(occ))
            stack.pop()
            expanding.discard(cur)
        return self._lookup_eval(tx_id)

    def _eval_now(self, occ: _Occurrence) -> _EvalRec:
        tx = occ.tx
        provisional = False
        eligible = True
        reason = None
        in_sum = 0
        seen: set[OutPoint] = set()
        if not tx.inputs:
            return _EvalRec(False, False, "unknown-input", False)
        for op in tx.inputs:
            if op in seen:
                eligible, reason = False, "double-spend"
                break
            seen.add(op)
            if op in self.voided_outpoints:
                eligible, reason = False, "voided-ancestor"
                break
            src = self._source_of(op)
            if src is None:
                eligible, reason = False, "unknown-input"
                break
            value, _owner, shard, creator = src
            if creator is not None:
                crec = self._lookup_eval(creator)
                if not crec.valid:
                    eligible, reason = False, "voided-ancestor"
                    break
                if creator not in self._final:
                    provisional = True
            if shard != occ.chain:
                eligible, reason = False, "wrong-shard"
                break
            in_sum += value
        if eligible:
            for out in tx.outputs:
                if not 0 <= out.shard < self.m:
                    eligible, reason = False, "bad-output"
                    break
        if eligible and in_sum != sum(o.value for o in tx.outputs) + tx.fee:
            eligible, reason = False, "value-imbalance"
        valid = eligible
        if eligible:
            for op in tx.inputs:
                for prio, claimant in self._claimants.get(op, []):
                    if prio >= occ.priority:
                        break
                    if self._lookup_eval(claimant).eligible:
                        valid, reason = False, "double-spend"
                        break
                    if claimant not in self._final:
                        provisional = True
                if not valid:
                    break
        return _EvalRec(eligible, valid, reason, provisional)

    # ------------------------------------------------------------------
    # mempool-facing validation
    # ------------------------------------------------------------------

    def validate_transaction(self, tx: Transaction, mined_on: int) -> TxVerdict:
        """Would this transaction be acceptable in a block on `mined_on` now?"""
        if not tx.inputs:
            return invalid("unknown-input")
        provisional = False
        in_sum = 0
        seen: set[OutPoint] = set()
        for op in tx.inputs:
            if op in seen:
                return invalid("double-spend")
            seen.add(op)
            if op in self.voided_outpoints:
                return invalid("voided-ancestor")
            src = self._source_of(op)
            if src is None:
                return invalid("unknown-input")
            value, _owner, shard, creator = src
            if creator is not None:
                crec = self._eval(creator)
                if not crec.valid:
                    return invalid("voided-ancestor")
                if creator not in self._final:
                    provisional = True
            if shard != mined_on:
                return invalid("wrong-shard")
            if creator is None and op not in self.confirmed:
                return invalid("double-spend")
            for _prio, claimant in self._claimants.get(op, []):
                if self._eval(claimant).eligible:
                    return invalid("double-spend")
            in_sum += value
        for out in tx.outputs:
            if not 0 <= out.shard < self.m:
                return invalid("bad-output")
        if in_sum != sum(o.value for o in tx.outputs) + tx.fee:
            return invalid("value-imbalance")
        return PROVISIONAL if provisional else VALID

    # ------------------------------------------------------------------
    # settlement: applying the globally confirmed sequence
    # ------------------------------------------------------------------

    @property
    def applied_count(self) -> int:
        return len(self.applied_ids)

    def apply_confirmed(self, blocks: list[Block], start_index: int) -> list[SettledTx]:
        """Apply the next blocks of L, in order; returns newly settled txs.

        `start_index` must equal the number of blocks already applied:
        applying anything but the next contiguous slice of L is refused.
        """
        if start_index != self.applied_count:
            raise LedgerError(
                f"non-prefix application: ledger at {self.applied_count}, got {start_index}"
            )
        ready: list[bytes] = []
        for block in blocks:
            for tx in block.transactions:
                occ = self._occ.get(tx.tx_id)
                if occ is None:
                    raise LedgerError("confirmed block was never registered")
                if tx.tx_id in self._final:
                    continue
                occ.in_l = True
                ready.append(tx.tx_id)
            cb = coinbase_outpoint(block.block_id)
            miner = block.header.miner_id
            self._minted[cb] = (self.reward, miner, block.chain)
            self.confirmed[cb] = UTXO(cb, self.reward, miner, block.chain)
            self.rewards_minted += self.reward
            self.reward_credit[miner] = self.reward_credit.get(miner, 0) + self.reward
            prev = self.rolling_digests[-1] if self.rolling_digests else b"\x00" * 32
            self.rolling_digests.append(digest(prev + block.block_id))
            self.applied_ids.append(block.block_id)
        self._epoch += 1
        return self._settle(ready)

    def _settle(self, candidates: list[bytes]) -> list[SettledTx]:
        settled: list[SettledTx] = []
        queue = sorted(set(candidates), key=lambda t: self._occ[t].priority)
        while queue:
            next_round: set[bytes] = set()
            for tx_id in queue:
                occ = self._occ.get(tx_id)
                if occ is None or not occ.in_l or tx_id in self._final:
                    continue
                blocker = self._settlement_blocker(occ)
                if blocker is not None:
                    kind, key = blocker
                    if kind == "tx":
                        self._awaiting_tx.setdefault(key, set()).add(tx_id)
                    else:
                        self._awaiting_op.setdefault(key, set()).add(tx_id)
                    continue
                settled.append(self._finalize(occ))
                next_round |= self._awaiting_tx.pop(tx_id, set())
            queue = sorted(next_round, key=lambda t: self._occ[t].priority)
        return settled

    def _settlement_blocker(self, occ: _Occurrence):
        """What still has to settle before this tx can: creator or rival."""
        for op in occ.tx.inputs:
            creator = self._creator_of.get(op)
            if creator is not None:
                if creator not in self._final:
                    return ("tx", creator)
            elif op not in self._minted:
                return ("op", op)
            for prio, claimant in self._claimants.get(op, []):
                if prio >= occ.priority:
                    break
                if claimant not in self._final:
                    return ("tx", claimant)
        return None

    def _finalize(self, occ: _Occurrence) -> SettledTx:
        tx = occ.tx
        rec = self._eval(tx.tx_id)
        if rec.valid:
            verdict = VALID
            for op in tx.inputs:
                if op not in self.confirmed:
                    raise LedgerError("settled input missing from confirmed set")
                del self.confirmed[op]
            for i, out in enumerate(tx.outputs):
                op = OutPoint(tx.tx_id, i)
                self._minted[op] = (out.value, out.owner, out.shard)
                self.confirmed[op] = UTXO(op, out.value, out.owner, out.shard)
            if tx.fee:
                fop = fee_outpoint(tx.tx_id)
                self._minted[fop] = (tx.fee, occ.miner, occ.chain)
                self.confirmed[fop] = UTXO(fop, tx.fee, occ.miner, occ.chain)
                self.reward_credit[occ.miner] = (
                    self.reward_credit.get(occ.miner, 0) + tx.fee
                )
        else:
            verdict = invalid(rec.reason or "invalid")
            for i in range(len(tx.outputs)):
                self.voided_outpoints.add(OutPoint(tx.tx_id, i))
            self.voided_log.append((tx.tx_id, rec.reason or "invalid"))
            if rec.eligible:
                # lost a contest while being first claimant elsewhere: the
                # inputs it did win are consumed and their value burned
                for op in tx.inputs:
                    if self._first_eligible_claimant(op) == tx.tx_id and op in self.confirmed:
                        self.wasted_value += self.confirmed.pop(op).value
        self._final[tx.tx_id] = verdict
        self._final_eval[tx.tx_id] = rec
        self._epoch += 1
        return SettledTx(tx.tx_id, verdict, occ.block_id, occ.miner)

    def _first_eligible_claimant(self, op: OutPoint) -> bytes | None:
        for _prio, claimant in self._claimants.get(op, []):
            rec = self._lookup_eval(claimant)
            if rec is None:
                rec = self._eval(claimant)
            if rec.eligible:
                return claimant
        return None

    def settled_verdict(self, tx_id: bytes) -> TxVerdict | None:
        return self._final.get(tx_id)

    def unsettled_applied(self) -> list[bytes]:
        """Txs inside L whose fate still hangs on an unconfirmed origin."""
        return [t for t, occ in self._occ.items() if occ.in_l and t not in self._final]

    # ------------------------------------------------------------------
    # balances, digests, accounting
    # ------------------------------------------------------------------

    def shard_balance(self, owner: int) -> dict[int, int]:
        """Confirmed value per shard; provisional funds are reported apart."""
        balances: dict[int, int] = {}
        for utxo in self.confirmed.values():
            if utxo.owner == owner:
                balances[utxo.shard] = balances.get(utxo.shard, 0) + utxo.value
        return balances

    def provisional_balance(self, owner: int) -> dict[int, int]:
        balances: dict[int, int] = {}
        for op, creator in self._creator_of.items():
            if creator in self._final:
                continue
            out = self._occ[creator].tx.outputs[op.index]
            if out.owner != owner:
                continue
            if not self._eval(creator).valid:
                continue
            if any(self._eval(c).eligible for _p, c in self._claimants.get(op, [])):
                continue
            balances[out.shard] = balances.get(out.shard, 0) + out.value
        return balances

    def confirmed_total(self) -> int:
        return sum(u.value for u in self.confirmed.values())

    def utxo_digest(self) -> bytes:
        """Canonical digest of the confirmed set plus the applied length."""
        h = hashlib.sha256()
        for op in sorted(self.confirmed, key=lambda o: (o.tx_id, o.index)):
            h.update(self.confirmed[op].encode())
        h.update(len(self.applied_ids).to_bytes(8, "little"))
        return h.digest()

    def check_conservation(self) -> bool:
        """Nothing is created or destroyed outside mints and burned contests.

        Fees cancel out (burned from the spender, reminted to the miner),
        so the confirmed total must equal genesis plus block rewards,
        minus value consumed by settled-void winners, minus the inputs
        currently escrowed inside valid settled spends of still-pending
        chains (there are none: valid settlement is atomic).
        """
        return self.confirmed_total() == (
            self.genesis_total + self.rewards_minted - self.wasted_value
        )


__all__ = [
    "LedgerError", "VerdictKind", "TxVerdict", "VALID", "PROVISIONAL", "invalid",
    "SettledTx", "ReorgVoid", "LedgerState",
]

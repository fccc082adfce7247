"""Global confirmation order across the m chains.

A block is per-chain confirmed once at least T blocks sit above it on
its own main chain.  The synchronized bar is the minimum, over chains,
of the clock of each chain's last per-chain-confirmed block; every
per-chain-confirmed block whose clock is strictly below the bar is
globally confirmed, and the global sequence orders those blocks by
(clock, chain index).

Genesis blocks carry no transactions and never appear in the sequence,
but they anchor each chain at clock 0: a chain with nothing confirmed
yet pins the bar to 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .blockdag import BlockDag, GlobalTimestamp


@dataclass(frozen=True)
class ConfirmedView:
    per_chain: tuple[tuple[bytes, ...], ...]  # E(i): confirmed ids per chain
    bar: int
    sequence: tuple[tuple[GlobalTimestamp, bytes], ...]

    @property
    def ids(self) -> list[bytes]:
        return [bid for _, bid in self.sequence]


def per_chain_confirmed(dag: BlockDag, chain: int, depth: int) -> list[bytes]:
    """Main chain of one chain index minus its last `depth` blocks.

    Genesis counts as position 0 of the chain but is excluded from the
    returned list: only mined blocks participate in global ordering.
    """
    if depth < 1:
        raise ValueError("confirmation depth must be >= 1")
    main = dag.main_chain(chain)
    confirmed = main[:len(main) - depth]
    return confirmed[1:]  # drop genesis


def synchronized_bar(dag: BlockDag, depth: int) -> int:
    """Min over chains of the last confirmed block's clock (0 when empty)."""
    bar = None
    for i in range(dag.m):
        confirmed = per_chain_confirmed(dag, i, depth)
        v = dag.clock_of(confirmed[-1]) if confirmed else 0
        bar = v if bar is None else min(bar, v)
    return bar


def global_sequence(dag: BlockDag, depth: int) -> ConfirmedView:
    """All per-chain confirmed blocks below the bar, ordered by (clock, chain)."""
    per_chain = []
    entries = []
    bar = None
    for i in range(dag.m):
        confirmed = per_chain_confirmed(dag, i, depth)
        per_chain.append(tuple(confirmed))
        v = dag.clock_of(confirmed[-1]) if confirmed else 0
        bar = v if bar is None else min(bar, v)
    for i, confirmed in enumerate(per_chain):
        for bid in confirmed:
            v = dag.clock_of(bid)
            if v < bar:
                entries.append((GlobalTimestamp(v, i), bid))
    entries.sort(key=lambda e: e[0])
    return ConfirmedView(tuple(per_chain), bar, tuple(entries))


def is_prefix(a, b) -> bool:
    """True when sequence `a` equals the first len(a) entries of `b`."""
    a = list(a)
    b = list(b)
    if len(a) > len(b):
        return False
    return a == b[:len(a)]


def sequence_to_jsonl(view: ConfirmedView, dag: BlockDag,
                      confirm_rounds: dict[bytes, int] | None = None) -> list[str]:
    """One JSON line per globally confirmed block, for the metrics pipeline."""
    lines = []
    for ts, bid in view.sequence:
        rec = {
            "chain": ts.chain,
            "height": dag.height_of(bid),
            "clock": ts.clock,
            "block": bid.hex(),
        }
        if confirm_rounds is not None:
            rec["round_confirmed"] = confirm_rounds.get(bid)
        lines.append(json.dumps(rec, sort_keys=True))
    return lines


__all__ = [
    "ConfirmedView", "per_chain_confirmed", "synchronized_bar",
    "global_sequence", "is_prefix", "sequence_to_jsonl",
]

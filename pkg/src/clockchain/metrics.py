"""Measurement over finished runs: growth, quality, latency, safety.

Everything here is read-only over a RunResult.  The counting model at
the bottom reproduces the degenerate single-chain regime (one chain, no
adversary, next-round delivery) with vectorized draws so that
hundred-thousand-block statistics stay cheap; the structural facts it
relies on are asserted against the full simulator in the test suite.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .simnet import RunResult


def _percentile(values: list[int | float], q: float) -> float:
    if not values:
        return 0.0
    return float(np.percentile(np.asarray(values, dtype=float), q))


@dataclass
class MetricsReport:
    rounds: int
    blocks_mined: int
    per_chain_counts: list[int]
    stale_blocks: int
    same_round_blocks: int  # blocks that shared their round with another
    mining_rounds: int  # rounds with at least one success

    consistency_violations: int
    undelivered: int
    pending_evictions: int
    piggybacked: int

    bar: int
    l_len: int
    l_growth_rate: float
    l_growth_reference: float  # m * p * n / 6, the slowest guaranteed schedule
    l_growth_ok: bool

    quality_window: int
    quality_threshold: float
    quality_windows: int
    quality_ok_fraction: float
    quality_min_window: float
    honest_share: float
    adversary_reward_share: float

    tx_submitted: int
    tx_settled_valid: int
    tx_voided: int
    tx_requeued: int
    tx_unsettled: int
    throughput: float  # settled transactions per round
    latency_mean: float
    latency_p50: float
    latency_p95: float

    liveness_gaps: list[int] = field(repr=False, default_factory=list)
    liveness_p50: float = 0.0
    liveness_p99: float = 0.0
    liveness_max: float = 0.0

    def liveness_within(self, bound: float) -> float:
        """Fraction of per-chain-confirmed blocks ordered within `bound` rounds."""
        if not self.liveness_gaps:
            return 1.0
        ok = sum(1 for g in self.liveness_gaps if g <= bound)
        return ok / len(self.liveness_gaps)

    def to_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k != "liveness_gaps"}
        return d


def collect_metrics(result: RunResult) -> MetricsReport:
    config = result.trace.config
    m = config["m"]
    rounds = config["rounds"]
    corrupt = result.corrupt_ids
    observer = result.observers[0]

    per_chain = [0] * m
    per_round: dict[int, int] = {}
    for rnd, _bid, _miner, chain in result.mined_log:
        per_chain[chain] += 1
        per_round[rnd] = per_round.get(rnd, 0) + 1
    same_round = sum(k for k in per_round.values() if k >= 2)
    main_lengths = sum(
        observer.dag.heights[observer.dag.tips[i]] for i in range(m)
    )
    stale = len(result.mined_log) - main_lengths

    honest_flags = [
        observer.dag.blocks[bid].header.miner_id not in corrupt
        for bid in observer.l_ids
    ]
    window = max(m * config["T"], 1)
    threshold = 1.0 - (config["rho"] / (1.0 - config["rho"])) if config["rho"] < 1 else 0.0
    windows = max(len(honest_flags) - window + 1, 0)
    ok_windows = 0
    min_window = 1.0
    if windows:
        prefix = [0]
        for flag in honest_flags:
            prefix.append(prefix[-1] + (1 if flag else 0))
        for start in range(windows):
            frac = (prefix[start + window] - prefix[start]) / window
            min_window = min(min_window, frac)
            if frac >= threshold:
                ok_windows += 1

    credit = observer.ledger.reward_credit
    total_credit = sum(credit.values())
    adv_credit = sum(v for k, v in credit.items() if k in corrupt)

    workload = result.workload
    latencies = workload.intent_latency if workload else []
    gaps = []
    for bid, crnd in observer.confirm_round.items():
        lrnd = observer.l_round.get(bid)
        if lrnd is not None:
            gaps.append(lrnd - crnd)

    p = config["mp"] / m
    growth_rate = len(observer.l_ids) / rounds if rounds else 0.0
    growth_ref = m * p * config["n"] / 6.0

    voided = len(observer.ledger.voided_log)
    unsettled = len(observer.ledger.unsettled_applied())

    return MetricsReport(
        rounds=rounds,
        blocks_mined=len(result.mined_log),
        per_chain_counts=per_chain,
        stale_blocks=stale,
        same_round_blocks=same_round,
        mining_rounds=len(per_round),
        consistency_violations=len(result.trace.violations),
        undelivered=result.scheduler.backlog(),
        pending_evictions=sum(n.dag.pending_evictions for n in result.nodes),
        piggybacked=result.scheduler.piggybacked,
        bar=observer.bar,
        l_len=len(observer.l_ids),
        l_growth_rate=growth_rate,
        l_growth_reference=growth_ref,
        l_growth_ok=growth_rate >= growth_ref or rounds < 10 * config["T"],
        quality_window=window,
        quality_threshold=threshold,
        quality_windows=windows,
        quality_ok_fraction=(ok_windows / windows) if windows else 1.0,
        quality_min_window=min_window,
        honest_share=(sum(honest_flags) / len(honest_flags)) if honest_flags else 1.0,
        adversary_reward_share=(adv_credit / total_credit) if total_credit else 0.0,
        tx_submitted=workload.submitted if workload else 0,
        tx_settled_valid=workload.settled_valid if workload else 0,
        tx_voided=voided,
        tx_requeued=workload.requeued if workload else 0,
        tx_unsettled=unsettled,
        throughput=(workload.settled_valid / rounds) if workload and rounds else 0.0,
        latency_mean=(sum(latencies) / len(latencies)) if latencies else 0.0,
        latency_p50=_percentile(latencies, 50),
        latency_p95=_percentile(latencies, 95),
        liveness_gaps=gaps,
        liveness_p50=_percentile(gaps, 50),
        liveness_p99=_percentile(gaps, 99),
        liveness_max=float(max(gaps)) if gaps else 0.0,
    )


def voided_csv(result: RunResult) -> str:
    """Per-round realtime void counts at the reference node, as CSV."""
    observer = result.observers[0]
    counts: dict[int, int] = {}
    for rnd, _tx in observer.realtime_voids:
        counts[rnd] = counts.get(rnd, 0) + 1
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["round", "voided"])
    for rnd in sorted(counts):
        writer.writerow([rnd, counts[rnd]])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# degenerate-regime counting model
# ---------------------------------------------------------------------------

def nc_counting_model(n: int, mp: float, rounds: int, seed: int) -> dict:
    """Block/fork/growth counts for m=1, no adversary, next-round delivery.

    In that regime every miner mines on a height-h tip at the start of a
    round, so the longest chain grows by exactly one in any round with a
    success, and a block has a competitor exactly when another success
    lands in its round.  Those two facts reduce the whole run to the
    per-round success counts, which we draw in one vectorized shot.
    """
    rng = np.random.default_rng(seed)
    ks = rng.binomial(n, mp, size=rounds)
    multi = ks >= 2
    return {
        "rounds": rounds,
        "blocks": int(ks.sum()),
        "fork_blocks": int(ks[multi].sum()),
        "growth_rounds": int((ks >= 1).sum()),
        "multi_rounds": int(multi.sum()),
    }


__all__ = ["MetricsReport", "collect_metrics", "voided_csv", "nc_counting_model"]

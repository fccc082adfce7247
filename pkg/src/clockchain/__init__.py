"""Parallel-chain proof-of-work protocol with logical-clock ordering.

m Nakamoto-style chains are mined together: one oracle query can extend
any chain, chosen by the trailing bits of the block hash.  A virtual
logical clock computed from sync references gives every block a global
timestamp, per-chain confirmation plus the synchronized bar turn those
timestamps into one totally ordered confirmed sequence, and a sharded
UTXO set makes cross-chain spends safe to include before their origins
settle.  The simnet module runs the whole protocol deterministically
under configurable adversaries.
"""

from .blockdag import BlockDag, GlobalTimestamp, InsertOutcome, INVALID_CLOCK
from .core import (
    Block,
    BlockHeader,
    OutPoint,
    PowParams,
    Transaction,
    TxOutput,
    UTXO,
    block_id,
    chain_index_of,
    genesis_id,
    make_genesis,
)
from .ledger import LedgerState, TxVerdict, VerdictKind
from .mining import MinerState, assemble_candidate, try_mine
from .ordering import (
    ConfirmedView,
    global_sequence,
    is_prefix,
    per_chain_confirmed,
    synchronized_bar,
)
from .simnet import AdversaryStrategy, SimConfig, run
from .spv import LightClientState, SpvProof, build_spv_proof, spv_verify, verify_header_chain

__version__ = "0.1.0"

__all__ = [
    "BlockDag", "GlobalTimestamp", "InsertOutcome", "INVALID_CLOCK",
    "Block", "BlockHeader", "OutPoint", "PowParams", "Transaction",
    "TxOutput", "UTXO", "block_id", "chain_index_of", "genesis_id",
    "make_genesis",
    "LedgerState", "TxVerdict", "VerdictKind",
    "MinerState", "assemble_candidate", "try_mine",
    "ConfirmedView", "global_sequence", "is_prefix", "per_chain_confirmed",
    "synchronized_bar",
    "AdversaryStrategy", "SimConfig", "run",
    "LightClientState", "SpvProof", "build_spv_proof", "spv_verify",
    "verify_header_chain",
    "__version__",
]

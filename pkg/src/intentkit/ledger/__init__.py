"""Deterministic in-process ledger: state, protocols, mempool, proofs."""

from intentkit.ledger.actions import ACTION_TYPES, DEFAULT_GAS_SCHEDULE
from intentkit.ledger.execution import (
    REVERT, SUCCESS, Block, Mempool, Receipt, apply_transaction, mine_block, pack, quote_swap,
    swap_out,
)
from intentkit.ledger.node import (
    InvalidTransaction, LedgerNode, NodeError, ServedState, StaleHeight, build_genesis,
)
from intentkit.ledger.state import MAX_ALLOWANCE, LedgerState

__all__ = [
    "ACTION_TYPES", "DEFAULT_GAS_SCHEDULE", "MAX_ALLOWANCE", "REVERT", "SUCCESS", "Block",
    "InvalidTransaction", "LedgerNode", "LedgerState", "Mempool", "NodeError", "Receipt",
    "ServedState", "StaleHeight", "apply_transaction", "build_genesis", "mine_block", "pack",
    "quote_swap", "swap_out",
]

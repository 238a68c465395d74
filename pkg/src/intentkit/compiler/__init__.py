"""Intent compiler: ICL programs to ordered transaction plans."""

from intentkit.compiler.decision import (
    DecisionPolicy, MarketInfo, NoCandidate, decide_nft_purchase, decide_nft_trade, decide_stake,
)
from intentkit.compiler.lowering import (
    CompileError, CompileOptions, TransactionSet, compile_program, compile_statement,
    describe, estimate_deltas, fee_gas_limit, max_slippage,
)

__all__ = [
    "CompileError", "CompileOptions", "DecisionPolicy", "MarketInfo", "NoCandidate",
    "TransactionSet", "compile_program", "compile_statement", "decide_nft_purchase",
    "decide_nft_trade", "decide_stake", "describe", "estimate_deltas", "fee_gas_limit",
    "max_slippage",
]

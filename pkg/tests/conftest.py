from __future__ import annotations

from pathlib import Path

import pytest

from intentkit.ledger.node import LedgerNode, build_genesis
from intentkit.ledger.state import MAX_ALLOWANCE, k_allow
from intentkit.tx import keypair_from_seed
from intentkit.workbench.genesis import EXAMPLE_PROGRAM, motivating_genesis

CORPUS = Path(__file__).parent / "corpus"


@pytest.fixture
def example_source() -> str:
    return EXAMPLE_PROGRAM


@pytest.fixture
def genesis() -> dict:
    return motivating_genesis()


@pytest.fixture
def node(genesis) -> LedgerNode:
    return LedgerNode.from_genesis(genesis, block_interval=0.0)


SENDER_SK, SENDER_PK = keypair_from_seed(b"test-sender")


def approved_state(cfg: dict, spender: str = SENDER_PK):
    """Genesis state with every funded wallet approving ``spender`` on all assets."""
    state = build_genesis(cfg)
    for wallet in cfg.get("balances", {}):
        state.set(k_allow(wallet.lower(), spender, "*"), MAX_ALLOWANCE)
    return state

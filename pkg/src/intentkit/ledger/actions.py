"""Ledger action descriptors.

Each action is a fully resolved call into one of the simulated protocols.
The class name doubles as the gas-schedule key.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union


@dataclass(frozen=True)
class TokenTransfer:
    asset: str
    amount: int
    from_wallet: str
    to_wallet: str


@dataclass(frozen=True)
class DexSwap:
    platform: str
    wallet: str
    asset_in: str
    amount_in: int
    asset_out: str
    amount_out_min: int
    quoted_out: int


@dataclass(frozen=True)
class LendingBorrow:
    platform: str
    wallet: str
    asset: str
    amount: int


@dataclass(frozen=True)
class LendingRepay:
    platform: str
    wallet: str
    asset: str
    amount: int


@dataclass(frozen=True)
class DexMint:
    platform: str
    wallet: str
    receiver: str
    asset_a: str
    amount_a: int
    asset_b: str
    amount_b: int
    min_liquidity: int


@dataclass(frozen=True)
class DexBurn:
    platform: str
    wallet: str
    asset_a: str
    min_a: int
    asset_b: str
    min_b: int
    liquidity: int
    token_key: str


@dataclass(frozen=True)
class StakeDeposit:
    platform: str
    asset: str
    amount: int
    wallet: str


@dataclass(frozen=True)
class NftPurchase:
    collection: str
    token: str
    wallet: str
    asset: str
    budget: int
    expected_price: int


@dataclass(frozen=True)
class NftListing:
    collection: str
    token: str
    wallet: str
    asset: str
    price: int


Action = Union[
    TokenTransfer, DexSwap, LendingBorrow, LendingRepay, DexMint, DexBurn,
    StakeDeposit, NftPurchase, NftListing,
]

ACTION_TYPES: dict[str, type] = {
    cls.__name__: cls
    for cls in (
        TokenTransfer, DexSwap, LendingBorrow, LendingRepay, DexMint, DexBurn,
        StakeDeposit, NftPurchase, NftListing,
    )
}

# ICL column of the reference gas table
DEFAULT_GAS_SCHEDULE: dict[str, int] = {
    "TokenTransfer": 22_176,
    "DexSwap": 110_793,
    "LendingBorrow": 298_082,
    "LendingRepay": 157_122,
    "DexMint": 346_948,
    "DexBurn": 147_062,
    "StakeDeposit": 199_840,
    "NftPurchase": 332_154,
    "NftListing": 341_908,
}


def kind(action: Action) -> str:
    return type(action).__name__

"""Closed asset and platform vocabularies shared by every layer.

Amounts are carried as integer base units everywhere below the parser.
"""

from __future__ import annotations

from fractions import Fraction

ASSETS: tuple[str, ...] = (
    "USDT", "USDC", "ETH", "DAI", "BTC", "WBTC", "WETH",
    "UNI", "SUSHI", "AAVE", "MATIC", "COMP",
)

PLATFORMS: tuple[str, ...] = (
    "Aave", "Uniswap", "Compound", "Yearn", "Sushiswap",
    "Curve", "1inch", "Polygon", "Avax",
)

DEFAULT_DECIMALS = 18
DECIMALS: dict[str, int] = {"USDC": 6, "USDT": 6}

# oracle prices are integers in micro-USD per whole token
PRICE_SCALE = 10**6


def decimals(asset: str) -> int:
    return DECIMALS.get(asset, DEFAULT_DECIMALS)


def to_base_units(value: Fraction | int, asset: str) -> int:
    """Scale a whole-token quantity to base units, flooring any remainder."""
    scaled = Fraction(value) * 10 ** decimals(asset)
    return scaled.numerator // scaled.denominator


def from_base_units(amount: int, asset: str) -> Fraction:
    return Fraction(amount, 10 ** decimals(asset))


def usd_value(amount: int, asset: str, price_micro_usd: int) -> Fraction:
    """Exact USD value of ``amount`` base units at an oracle price."""
    return Fraction(amount * price_micro_usd, 10 ** decimals(asset) * PRICE_SCALE)


def is_nft_asset(asset: str) -> bool:
    return asset.startswith("nft:")


def nft_asset(collection: str, token: str) -> str:
    """Pseudo-asset used to thread NFT ownership through balance bookkeeping."""
    return f"nft:{collection}:{token}"


def lp_asset(platform: str, asset_a: str, asset_b: str) -> str:
    a, b = sorted((asset_a, asset_b))
    return f"lp:{platform}:{a}/{b}"


def format_units(amount: int, asset: str) -> str:
    """Exact decimal string for ``amount`` base units, as ICL accepts it."""
    whole, frac = divmod(amount, 10 ** decimals(asset))
    if not frac:
        return str(whole)
    return f"{whole}.{str(frac).rjust(decimals(asset), '0').rstrip('0')}"

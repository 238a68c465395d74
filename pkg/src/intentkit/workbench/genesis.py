"""Built-in genesis configurations."""

from __future__ import annotations

import copy
from typing import Any

USER_WALLET = "0xa"

_MOTIVATING: dict[str, Any] = {
    "genesisTime": 1_735_689_600,  # 2025-01-01T00:00:00Z
    "blockSeconds": 12,
    "blockGasLimit": 30_000_000,
    "blockInterval": 0.1,
    "balances": {
        USER_WALLET: {"USDC": "1000000", "ETH": "200"},
        "0xb1": {"ETH": "5"},
        "0xb2": {"ETH": "5"},
        "0xb3": {"ETH": "5"},
    },
    "prices": {
        "USDC": "1", "USDT": "1", "DAI": "1", "ETH": "4200", "WETH": "4200",
        "BTC": "95000", "WBTC": "95000", "UNI": "12", "SUSHI": "1.5",
        "AAVE": "310", "MATIC": "0.6", "COMP": "70",
    },
    "pools": [
        {"platform": "Uniswap", "assets": ["USDC", "USDT"], "reserves": ["50000000", "51000000"]},
        {"platform": "Uniswap", "assets": ["USDC", "ETH"], "reserves": ["42000000", "10000"]},
        {"platform": "Uniswap", "assets": ["USDT", "ETH"], "reserves": ["42000000", "10000"]},
        {"platform": "Sushiswap", "assets": ["USDC", "USDT"], "reserves": ["20000000", "20000000"]},
        {"platform": "Sushiswap", "assets": ["USDC", "ETH"], "reserves": ["21000000", "5000"]},
        {"platform": "Curve", "assets": ["USDC", "DAI"], "reserves": ["30000000", "30000000"]},
        {"platform": "Uniswap", "assets": ["WBTC", "ETH"], "reserves": ["500", "11300"]},
    ],
    "lending": [
        {"platform": "Aave", "asset": "USDC", "liquidity": "5000000"},
        {"platform": "Aave", "asset": "USDT", "liquidity": "5000000"},
        {"platform": "Aave", "asset": "ETH", "liquidity": "10000"},
        {"platform": "Compound", "asset": "USDC", "liquidity": "5000000"},
        {"platform": "Compound", "asset": "DAI", "liquidity": "5000000"},
    ],
    "stakingPools": [
        {"platform": "Aave", "asset": "ETH", "apy": "0.03", "risk": "0.1", "depth": "500000"},
        {"platform": "Compound", "asset": "ETH", "apy": "0.045", "risk": "0.3", "depth": "200000"},
        {"platform": "Yearn", "asset": "ETH", "apy": "0.09", "risk": "0.8", "depth": "100000"},
        {"platform": "Aave", "asset": "USDC", "apy": "0.05", "risk": "0.1", "depth": "90000000"},
        {"platform": "Curve", "asset": "USDC", "apy": "0.07", "risk": "0.4", "depth": "40000000"},
    ],
    "nfts": [
        {"collection": "0xc1", "token": "0x1", "owner": "0xb1", "ask": "75", "asset": "ETH",
         "volume": "1200", "trend": "0.12", "holders": 3000},
        {"collection": "0xc2", "token": "0x7", "owner": "0xb2", "ask": "60", "asset": "ETH",
         "volume": "200", "trend": "0.05", "holders": 800},
        {"collection": "0xc3", "token": "0x2", "owner": "0xb3", "ask": "70", "asset": "ETH",
         "volume": "1500", "trend": "-0.03", "holders": 5000},
        {"collection": "0xc5", "token": "0x3", "owner": USER_WALLET, "asset": "ETH",
         "lastPrice": "10", "holders": 400},
    ],
}

EXAMPLE_PROGRAM = """\
swap 400000 USDC from wallet[0xA] for USDT on Uniswap checking slippage < 0.005;
swap 200000 USDC from wallet[0xA] for ETH on Uniswap checking slippage < 0.005 and fee < 150000;
buy popular price-increasing NFT using at most 80 ETH from wallet[0xA];
trigger balance wallet[0xA] > 400000 USDT then
    add 400000 USDC, 400000 USDT to Sushiswap receiving liquidity token to wallet[0xA];
stake 160 ETH from wallet[0xA] using long-term low-risk strategy checking price ETH > 4000;
"""


WORKER_PAIRS = (("USDC", "USDT"), ("USDC", "ETH"), ("USDT", "ETH"), ("USDC", "DAI"))
WORKER_FUNDING = {"USDC": "100000", "USDT": "100000", "DAI": "100000", "ETH": "40"}
DEFAULT_WORKERS = 1024


def worker_wallet(i: int) -> str:
    return f"0x{0xd0000 + i:x}"


def worker_assets(i: int) -> tuple[str, str]:
    return WORKER_PAIRS[i % len(WORKER_PAIRS)]


def motivating_genesis() -> dict[str, Any]:
    """User wallet with 1M USDC and 200 ETH plus the markets its intents touch."""
    return copy.deepcopy(_MOTIVATING)


def workbench_genesis(workers: int = DEFAULT_WORKERS) -> dict[str, Any]:
    """The motivating genesis plus ``workers`` wallets for generated programs.

    Worker ``i`` holds only the two assets of ``worker_assets(i)``, so any
    other asset it spends must come from an earlier statement.
    """
    cfg = motivating_genesis()
    for i in range(workers):
        cfg["balances"][worker_wallet(i)] = {a: WORKER_FUNDING[a] for a in worker_assets(i)}
    return cfg

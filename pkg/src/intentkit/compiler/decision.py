"""Decision module for fuzzy stake and NFT intents.

Scores are exact rationals. Every ranking ends in a lexicographic tie-break,
so the result never depends on input order.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

from intentkit.ledger.state import NftListing, StakingPool, StateReader

BASE_WEIGHTS: dict[str, Fraction] = {
    "apy": Fraction(2, 5),
    "poolDepth": Fraction(1, 5),
    "riskScore": Fraction(2, 5),
    "volume": Fraction(2, 5),
    "priceTrend": Fraction(3, 10),
    "floorDistance": Fraction(3, 10),
}

RISK_WEIGHT = {"low": Fraction(4, 5), "middle": Fraction(2, 5), "high": Fraction(1, 10)}
TIME_SAVING_DISCOUNT = Fraction(98, 100)


class NoCandidate(Exception):
    pass


@dataclass(frozen=True)
class DecisionPolicy:
    kind: str = "weighted-ranking"
    weights: dict[str, Fraction] = field(default_factory=lambda: dict(BASE_WEIGHTS))
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.kind != "weighted-ranking":
            raise ValueError(f"unsupported decision policy {self.kind!r}")
        unknown = set(self.weights) - set(BASE_WEIGHTS)
        if unknown:
            raise ValueError(f"unknown weights {sorted(unknown)}")
        if any(Fraction(w) < 0 for w in self.weights.values()):
            raise ValueError("weights must be non-negative")

    def w(self, name: str) -> Fraction:
        return Fraction(self.weights.get(name, BASE_WEIGHTS[name]))

    def to_json(self) -> dict[str, Any]:
        return {"kind": self.kind, "weights": {k: str(self.w(k)) for k in BASE_WEIGHTS}, "rngSeed": self.rng_seed}


@dataclass(frozen=True)
class MarketInfo:
    staking_pools: tuple[StakingPool, ...] = ()
    nft_listings: tuple[NftListing, ...] = ()

    @classmethod
    def from_state(cls, state: StateReader) -> "MarketInfo":
        return cls(tuple(state.staking_pools()), tuple(state.nft_listings()))


def _norm(x: Fraction | int, top: Fraction | int) -> Fraction:
    return Fraction(x) / top if top else Fraction(0)


def stake_weights(risk: str | None, term: str | None, policy: DecisionPolicy) -> tuple[Fraction, Fraction, Fraction]:
    """``(w_apy, w_depth, w_risk)`` after applying strategy qualifiers."""
    w_apy, w_depth, w_risk = policy.w("apy"), policy.w("poolDepth"), policy.w("riskScore")
    if risk in RISK_WEIGHT:
        w_risk = RISK_WEIGHT[risk] * policy.w("riskScore") / BASE_WEIGHTS["riskScore"]
    if term == "long":
        w_apy = w_apy * Fraction(3, 2)
    elif term == "short":
        w_depth = w_depth * 2
    return w_apy, w_depth, w_risk


def stake_scores(
    pools: list[StakingPool], risk: str | None, term: str | None, policy: DecisionPolicy,
) -> list[tuple[Fraction, StakingPool]]:
    w_apy, w_depth, w_risk = stake_weights(risk, term, policy)
    top_apy = max((p.apy for p in pools), default=0)
    top_depth = max((p.depth for p in pools), default=0)
    return [
        (w_apy * _norm(p.apy, top_apy) + w_depth * _norm(p.depth, top_depth) - w_risk * p.risk, p)
        for p in pools
    ]


def decide_stake(
    market: MarketInfo, asset: str, risk: str | None, term: str | None,
    policy: DecisionPolicy = DecisionPolicy(),
) -> StakingPool:
    pools = [p for p in market.staking_pools if p.asset == asset]
    if not pools:
        raise NoCandidate(f"no staking pool for {asset}")
    scored = stake_scores(pools, risk, term, policy)
    return min(scored, key=lambda sp: (-sp[0], sp[1].platform, sp[1].asset))[1]


# -- NFTs --------------------------------------------------------------------

def _lower_quartile(values: list[int]) -> int:
    ordered = sorted(values)
    return ordered[(len(ordered) - 1) // 4]


def qualifier_filter(listings: list[NftListing], qualifiers: tuple[str, ...]) -> list[NftListing]:
    """Keep listings satisfying every qualifier, with statistics over ``listings``."""
    if not listings:
        return []
    vol_med = statistics.median(Fraction(x.volume) for x in listings)
    ask_med = statistics.median(Fraction(x.ask) for x in listings)
    holder_med = statistics.median(Fraction(x.holders) for x in listings)
    holder_q1 = _lower_quartile([x.holders for x in listings])
    preds = {
        "popular": lambda x: x.volume >= vol_med,
        "mainstream": lambda x: x.holders >= holder_med,
        "rare": lambda x: x.holders <= holder_q1,
        "inexpensive": lambda x: x.ask <= ask_med,
        "price-increasing": lambda x: x.trend > 0,
        "price-decreaseing": lambda x: x.trend < 0,
    }
    return [x for x in listings if all(preds[q](x) for q in qualifiers)]


def nft_scores(
    candidates: list[NftListing], market: list[NftListing], qualifiers: tuple[str, ...],
    policy: DecisionPolicy,
) -> list[tuple[Fraction, NftListing]]:
    w_vol, w_trend, w_floor = policy.w("volume"), policy.w("priceTrend"), policy.w("floorDistance")
    if "popular" in qualifiers or "mainstream" in qualifiers:
        w_vol *= 2
    if "price-increasing" in qualifiers:
        w_trend *= 2
    if "price-decreaseing" in qualifiers:
        w_trend *= -2
    if "inexpensive" in qualifiers:
        w_floor *= 2
    floors: dict[str, int] = {}
    for x in market:
        floors[x.collection] = min(floors.get(x.collection, x.ask), x.ask)
    top_vol = max((x.volume for x in candidates), default=0)
    top_trend = max((abs(x.trend) for x in candidates), default=0)
    out = []
    for x in candidates:
        floor = floors.get(x.collection, x.ask)
        dist = Fraction(x.ask - floor, floor) if floor else Fraction(0)
        out.append((w_vol * _norm(x.volume, top_vol) + w_trend * _norm(x.trend, top_trend) - w_floor * dist, x))
    return out


def decide_nft_purchase(
    market: MarketInfo, budget: int, asset: str, qualifiers: tuple[str, ...],
    policy: DecisionPolicy = DecisionPolicy(),
) -> NftListing:
    if budget <= 0:
        raise NoCandidate("budget must be positive")
    same_asset = [x for x in market.nft_listings if x.asset == asset]
    affordable = [x for x in qualifier_filter(same_asset, qualifiers) if x.ask <= budget]
    if not affordable:
        raise NoCandidate("no listing passes the budget and qualifier filters")
    scored = nft_scores(affordable, same_asset, qualifiers, policy)
    return min(scored, key=lambda sx: (-sx[0], sx[1].collection, sx[1].token))[1]


def decide_nft_price(floor: int, trailing_max: int, strategy: tuple[str, ...] | None) -> int:
    """Listing price in base units for a sale strategy."""
    if strategy and "profitable" in strategy:
        return max(trailing_max, floor)
    if strategy and "time-saving" in strategy:
        p = floor * TIME_SAVING_DISCOUNT
        return p.numerator // p.denominator
    return floor


def decide_nft_trade(
    market: MarketInfo | StateReader,
    *,
    budget: int | None = None,
    asset: str | None = None,
    qualifiers: tuple[str, ...] = (),
    nft: tuple[str, str] | None = None,
    strategy: tuple[str, ...] | None = None,
    policy: DecisionPolicy = DecisionPolicy(),
) -> NftListing | tuple[int, str]:
    """Pick a listing to buy, or a ``(price, asset)`` to sell ``nft`` at."""
    if nft is None:
        if not isinstance(market, MarketInfo):
            market = MarketInfo.from_state(market)
        return decide_nft_purchase(market, budget or 0, asset or "", qualifiers, policy)
    if isinstance(market, MarketInfo):
        raise TypeError("pricing a sale needs a state reader")
    ref = market.nft_reference_prices(*nft)
    if ref is None:
        raise NoCandidate(f"no reference price for {nft[0]}:{nft[1]}")
    floor, peak, ref_asset = ref
    return decide_nft_price(floor, peak, strategy), ref_asset

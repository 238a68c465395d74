"""Flat key/value ledger state with overlay forks and Merkle commitment.

Every piece of chain state is one entry in a dict keyed by a tuple of
strings whose first element names the table (``"bal"``, ``"reserve"``, ...).
Values are ints or strs. Zero ints, empty strings and ``None`` are treated as
absent, so the committed leaf set is canonical.
"""

from __future__ import annotations

import struct
from collections import ChainMap
from collections.abc import Iterator, MutableMapping
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Union

from intentkit.ledger.actions import DEFAULT_GAS_SCHEDULE
from intentkit.ledger.merkle import AbsenceProof, MembershipProof, MerkleTree

Key = tuple[str, ...]
Value = Union[int, str, None]

MAX_ALLOWANCE = 2**255 - 1  # largest value the signed 32-byte leaf encoding holds
BLOCK_GAS_LIMIT = 30_000_000
PPM = 1_000_000


# -- key constructors --------------------------------------------------------

def pair_id(asset_a: str, asset_b: str) -> str:
    a, b = sorted((asset_a, asset_b))
    return f"{a}/{b}"


def k_bal(wallet: str, asset: str) -> Key:
    return ("bal", wallet, asset)


def k_allow(owner: str, spender: str, asset: str) -> Key:
    return ("allow", owner, spender, asset)


def k_reserve(platform: str, pair: str, asset: str) -> Key:
    return ("reserve", platform, pair, asset)


def k_lp_supply(platform: str, pair: str) -> Key:
    return ("lpsupply", platform, pair)


def k_lend_liquidity(platform: str, asset: str) -> Key:
    return ("lendliq", platform, asset)


def k_debt(platform: str, wallet: str, asset: str) -> Key:
    return ("debt", platform, wallet, asset)


def k_staked(platform: str, wallet: str, asset: str) -> Key:
    return ("staked", platform, wallet, asset)


def k_stake_pool(platform: str, asset: str, fld: str) -> Key:
    return ("stakepool", platform, asset, fld)


def k_listing(collection: str, token: str, fld: str) -> Key:
    return ("listing", collection, token, fld)


def k_nft_stat(collection: str, token: str, fld: str) -> Key:
    return ("nftstat", collection, token, fld)


def k_price(asset: str) -> Key:
    return ("price", asset)


def encode_key(key: Key) -> bytes:
    return "|".join(key).encode("utf-8")


def decode_key(raw: bytes) -> Key:
    return tuple(raw.decode("utf-8").split("|"))


def encode_value(v: int | str) -> bytes:
    if isinstance(v, int):
        return b"\x01" + v.to_bytes(32, "little", signed=True)
    raw = v.encode("utf-8")
    return b"\x02" + struct.pack("<H", len(raw)) + raw


def decode_value(raw: bytes) -> int | str:
    if raw[:1] == b"\x01":
        return int.from_bytes(raw[1:33], "little", signed=True)
    (n,) = struct.unpack("<H", raw[1:3])
    return raw[3:3 + n].decode("utf-8")


def is_present(v: Value) -> bool:
    return v is not None and v != 0 and v != ""


# -- market views ------------------------------------------------------------

@dataclass(frozen=True)
class StakingPool:
    platform: str
    asset: str
    apy: Fraction
    depth: int
    risk: Fraction


@dataclass(frozen=True)
class NftListing:
    collection: str
    token: str
    seller: str
    asset: str
    ask: int
    volume: int
    trend: Fraction
    holders: int


class StateReader:
    """Typed queries over any ``get(key) -> value`` source."""

    def get(self, key: Key) -> Value:  # pragma: no cover - abstract
        raise NotImplementedError

    def items_with_prefix(self, *prefix: str) -> Iterator[tuple[Key, Value]]:  # pragma: no cover
        raise NotImplementedError

    def int_at(self, key: Key) -> int:
        v = self.get(key)
        return v if isinstance(v, int) else 0

    def balance(self, wallet: str, asset: str) -> int:
        return self.int_at(k_bal(wallet, asset))

    def price(self, asset: str) -> int:
        v = self.get(k_price(asset))
        if not isinstance(v, int) or v <= 0:
            raise KeyError(asset)
        return v

    def allowance(self, owner: str, spender: str, asset: str) -> int:
        return self.int_at(k_allow(owner, spender, asset))

    def reserves(self, platform: str, asset_in: str, asset_out: str) -> tuple[int, int] | None:
        pair = pair_id(asset_in, asset_out)
        if self.int_at(k_lp_supply(platform, pair)) <= 0:
            return None
        return (self.int_at(k_reserve(platform, pair, asset_in)),
                self.int_at(k_reserve(platform, pair, asset_out)))

    def lp_supply(self, platform: str, asset_a: str, asset_b: str) -> int:
        return self.int_at(k_lp_supply(platform, pair_id(asset_a, asset_b)))

    def staking_pools(self, asset: str | None = None) -> list[StakingPool]:
        found: dict[tuple[str, str], dict[str, int]] = {}
        for key, v in self.items_with_prefix("stakepool"):
            _, platform, a, fld = key
            if asset is None or a == asset:
                found.setdefault((platform, a), {})[fld] = v
        return [
            StakingPool(p, a, Fraction(f.get("apy_ppm", 0), PPM), f.get("depth", 0),
                        Fraction(f.get("risk_ppm", 0), PPM))
            for (p, a), f in sorted(found.items())
            if f.get("active", 0)
        ]

    def nft_listings(self) -> list[NftListing]:
        rows: dict[tuple[str, str], dict[str, Value]] = {}
        for key, v in self.items_with_prefix("listing"):
            rows.setdefault((key[1], key[2]), {})[key[3]] = v
        out = []
        for (c, t), f in sorted(rows.items()):
            if not is_present(f.get("ask")):
                continue
            out.append(NftListing(
                c, t, str(f.get("seller", "")), str(f.get("asset", "")), int(f["ask"]),
                self.int_at(k_nft_stat(c, t, "volume")),
                Fraction(self.int_at(k_nft_stat(c, t, "trend_ppm")), PPM),
                self.int_at(k_nft_stat(c, t, "holders")),
            ))
        return out

    def nft_reference_prices(self, collection: str, token: str) -> tuple[int, int, str] | None:
        """``(floor, trailing max ask, asset)`` for a collection, if any price is known."""
        asks = [x for x in self.nft_listings() if x.collection == collection]
        floor = self.int_at(k_nft_stat(collection, token, "last_price"))
        peak = self.int_at(k_nft_stat(collection, token, "max_ask"))
        asset = self.get(k_nft_stat(collection, token, "asset"))
        if asks:
            floor = min(x.ask for x in asks)
            peak = max([peak] + [x.ask for x in asks])
            asset = asks[0].asset
        if floor <= 0 or not asset:
            return None
        return floor, max(peak, floor), str(asset)


class LedgerState(StateReader):
    """Mutable chain state. Forks share the parent's data copy-on-write."""

    def __init__(
        self,
        data: MutableMapping[Key, Value] | None = None,
        *,
        height: int = 0,
        genesis_time: int = 0,
        block_seconds: int = 12,
        gas_schedule: dict[str, int] | None = None,
        block_gas_limit: int = BLOCK_GAS_LIMIT,
    ) -> None:
        self.data: MutableMapping[Key, Value] = {} if data is None else data
        self.height = height
        self.genesis_time = genesis_time
        self.block_seconds = block_seconds
        self.gas_schedule = dict(DEFAULT_GAS_SCHEDULE if gas_schedule is None else gas_schedule)
        self.block_gas_limit = block_gas_limit
        self._tree: MerkleTree | None = None

    @property
    def timestamp(self) -> int:
        return self.genesis_time + self.height * self.block_seconds

    def get(self, key: Key) -> Value:
        return self.data.get(key)

    def set(self, key: Key, value: Value) -> None:
        self.data[key] = value
        self._tree = None

    def add(self, key: Key, delta: int) -> int:
        v = self.int_at(key) + delta
        self.set(key, v)
        return v

    def update(self, changes: dict[Key, Value]) -> None:
        if changes:
            self.data.update(changes)
            self._tree = None

    def items_with_prefix(self, *prefix: str) -> Iterator[tuple[Key, Value]]:
        n = len(prefix)
        for key, v in sorted(self.data.items()):
            if key[:n] == prefix and is_present(v):
                yield key, v

    def present_items(self) -> Iterator[tuple[Key, Value]]:
        for key, v in self.data.items():
            if is_present(v):
                yield key, v

    def fork(self) -> "LedgerState":
        """Copy-on-write child. Writes to the child never reach the parent.

        The parent must not be mutated while the child is in use; take a
        ``copy()`` first when the parent is live.
        """
        maps = list(self.data.maps) if isinstance(self.data, ChainMap) else [self.data]
        if len(maps) > 2:
            maps = [dict(self.data)]
        return LedgerState(
            ChainMap({}, *maps), height=self.height, genesis_time=self.genesis_time,
            block_seconds=self.block_seconds, gas_schedule=self.gas_schedule,
            block_gas_limit=self.block_gas_limit,
        )

    def copy(self) -> "LedgerState":
        """Independent deep-enough copy (values are immutable)."""
        return LedgerState(
            dict(self.present_items()), height=self.height, genesis_time=self.genesis_time,
            block_seconds=self.block_seconds, gas_schedule=self.gas_schedule,
            block_gas_limit=self.block_gas_limit,
        )

    # -- commitment ----------------------------------------------------------

    def tree(self) -> MerkleTree:
        if self._tree is None:
            self._tree = MerkleTree([(encode_key(k), encode_value(v)) for k, v in self.present_items()])
        return self._tree

    @property
    def state_root(self) -> bytes:
        return self.tree().root

    def prove(self, key: Key) -> MembershipProof | AbsenceProof:
        return self.tree().prove(encode_key(key))

    # -- totals for conservation checks ----------------------------------------

    def asset_totals(self) -> dict[str, int]:
        """Per-asset sum over wallets, pool reserves, lending liquidity and stakes."""
        totals: dict[str, int] = {}
        for key, v in self.present_items():
            if not isinstance(v, int):
                continue
            table = key[0]
            if table == "bal":
                asset = key[2]
            elif table in ("reserve", "lendliq"):
                asset = key[-1]
            elif table == "staked":
                asset = key[3]
            else:
                continue
            if asset.startswith(("lp:", "nft:")):
                continue
            totals[asset] = totals.get(asset, 0) + v
        return totals


@dataclass
class Overlay(StateReader):
    """Pending writes of a single transaction on top of a state."""

    base: LedgerState
    writes: dict[Key, Value] = field(default_factory=dict)

    def get(self, key: Key) -> Value:
        if key in self.writes:
            return self.writes[key]
        return self.base.get(key)

    def set(self, key: Key, value: Value) -> None:
        self.writes[key] = value

    def add(self, key: Key, delta: int) -> int:
        v = self.int_at(key) + delta
        self.writes[key] = v
        return v

    def items_with_prefix(self, *prefix: str) -> Iterator[tuple[Key, Value]]:
        n = len(prefix)
        merged = {k: v for k, v in self.base.data.items() if k[:n] == prefix}
        merged.update({k: v for k, v in self.writes.items() if k[:n] == prefix})
        for key, v in sorted(merged.items()):
            if is_present(v):
                yield key, v

    @property
    def timestamp(self) -> int:
        return self.base.timestamp

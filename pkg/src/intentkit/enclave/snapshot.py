"""Light-client side of state acquisition: verify served leaves into a snapshot."""

from __future__ import annotations

from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field

from intentkit.ledger.merkle import AbsenceProof, MembershipProof, verify
from intentkit.ledger.state import Key, StateReader, Value, encode_key, encode_value, is_present


class ProofInvalid(Exception):
    def __init__(self, key: Key) -> None:
        super().__init__(f"proof for {'|'.join(key)} does not verify")
        self.key = key


class NodeUnavailable(Exception):
    pass


class SnapshotMiss(KeyError):
    """A key that was neither requested nor covered by a requested prefix."""


@dataclass(frozen=True)
class StateSnapshot(StateReader):
    height: int
    timestamp: int
    state_root: bytes
    entries: dict[Key, Value] = field(default_factory=dict)
    prefixes: tuple[tuple[str, ...], ...] = ()

    def get(self, key: Key) -> Value:
        if key in self.entries:
            return self.entries[key]
        if any(key[:len(p)] == p for p in self.prefixes):
            return None
        raise SnapshotMiss(key)

    def items_with_prefix(self, *prefix: str) -> Iterator[tuple[Key, Value]]:
        n = len(prefix)
        for key in sorted(self.entries):
            v = self.entries[key]
            if key[:n] == prefix and is_present(v):
                yield key, v


def check_leaf(key: Key, value: Value, proof: MembershipProof | AbsenceProof, root: bytes) -> bool:
    """Pure hash-chain check binding ``key -> value`` to ``root``."""
    kb = encode_key(key)
    if is_present(value):
        return (isinstance(proof, MembershipProof) and proof.key == kb
                and proof.value == encode_value(value) and verify(proof, root))
    return isinstance(proof, AbsenceProof) and proof.key == kb and verify(proof, root)


def verify_served(
    served,
    needed_keys: Iterable[Key] = (),
    prefixes: Iterable[tuple[str, ...]] = (),
    expected_height: int | None = None,
) -> StateSnapshot:
    """Accept a served state only if every leaf proves against its root."""
    from intentkit.ledger.node import StaleHeight

    if expected_height is not None and served.height != expected_height:
        raise StaleHeight(f"served {served.height}, wanted {expected_height}")
    for key in needed_keys:
        if key not in served.leaves:
            raise ProofInvalid(key)
    for key, value in served.leaves.items():
        proof = served.proofs.get(key)
        if proof is None or not check_leaf(key, value, proof, served.root):
            raise ProofInvalid(key)
    return StateSnapshot(served.height, served.timestamp, served.root, dict(served.leaves), tuple(prefixes))


MARKET_PREFIXES: tuple[tuple[str, ...], ...] = (
    ("price",), ("reserve",), ("lpsupply",), ("lendliq",), ("stakepool",), ("listing",), ("nftstat",),
)


def acquire_verified_state(
    node,
    t: int | None,
    needed_keys: Iterable[Key],
    prefixes: Iterable[tuple[str, ...]] = MARKET_PREFIXES,
) -> StateSnapshot:
    """Request leaves at height ``t`` (head when ``None``) and verify them all."""
    keys = sorted(set(needed_keys))
    prefixes = tuple(prefixes)
    try:
        served = node.get_snapshot(keys, prefixes, height=t)
    except (ConnectionError, OSError) as e:
        raise NodeUnavailable(str(e)) from e
    return verify_served(served, keys, prefixes, expected_height=t)

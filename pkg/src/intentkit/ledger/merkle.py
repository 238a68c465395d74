"""Binary Merkle tree over sorted state leaves.

Leaf hash is ``sha256(0x00 || key || value)``, inner node ``sha256(0x01 ||
left || right)``. An odd node at any level is promoted unchanged, so a tree
with a single leaf has that leaf's hash as its root. The empty tree's root
is ``sha256(b"")``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

EMPTY_ROOT = hashlib.sha256(b"").digest()


def leaf_hash(key: bytes, value: bytes) -> bytes:
    return hashlib.sha256(b"\x00" + key + value).digest()


def node_hash(left: bytes, right: bytes) -> bytes:
    return hashlib.sha256(b"\x01" + left + right).digest()


def _levels(hashes: list[bytes]) -> list[list[bytes]]:
    levels = [hashes]
    while len(levels[-1]) > 1:
        cur = levels[-1]
        nxt = [node_hash(cur[i], cur[i + 1]) for i in range(0, len(cur) - 1, 2)]
        if len(cur) % 2:
            nxt.append(cur[-1])
        levels.append(nxt)
    return levels


def merkle_root(hashes: list[bytes]) -> bytes:
    if not hashes:
        return EMPTY_ROOT
    return _levels(hashes)[-1][0]


@dataclass(frozen=True)
class MembershipProof:
    key: bytes
    value: bytes
    index: int
    count: int
    siblings: tuple[bytes, ...]


def _path(levels: list[list[bytes]], index: int) -> tuple[bytes, ...]:
    out = []
    for level in levels[:-1]:
        sib = index ^ 1
        if sib < len(level):
            out.append(level[sib])
        index //= 2
    return tuple(out)


def root_from_path(leaf: bytes, index: int, count: int, siblings: tuple[bytes, ...]) -> bytes | None:
    """Recompute the root along a path; ``None`` when the path shape is wrong."""
    if not 0 <= index < count:
        return None
    h, width, it = leaf, count, iter(siblings)
    while width > 1:
        if index % 2 == 1:
            sib = next(it, None)
            if sib is None:
                return None
            h = node_hash(sib, h)
        elif index + 1 < width:
            sib = next(it, None)
            if sib is None:
                return None
            h = node_hash(h, sib)
        index //= 2
        width = (width + 1) // 2
    if next(it, None) is not None:
        return None
    return h


def verify_membership(proof: MembershipProof, root: bytes) -> bool:
    got = root_from_path(leaf_hash(proof.key, proof.value), proof.index, proof.count, proof.siblings)
    return got is not None and got == root


@dataclass(frozen=True)
class AbsenceProof:
    """Adjacent neighbours bracketing a missing key (either may be absent at the edges)."""

    key: bytes
    count: int
    left: MembershipProof | None
    right: MembershipProof | None


def verify_absence(proof: AbsenceProof, root: bytes) -> bool:
    if proof.count == 0:
        return proof.left is None and proof.right is None and root == EMPTY_ROOT
    left, right = proof.left, proof.right
    for side in (left, right):
        if side is not None and (side.count != proof.count or not verify_membership(side, root)):
            return False
    if left is None and right is None:
        return False
    if left is not None and not left.key < proof.key:
        return False
    if right is not None and not proof.key < right.key:
        return False
    if left is None:
        return right.index == 0
    if right is None:
        return left.index == proof.count - 1
    return right.index == left.index + 1


class MerkleTree:
    """Tree over ``(key, value)`` leaves, kept sorted by key bytes."""

    def __init__(self, leaves: list[tuple[bytes, bytes]]) -> None:
        self.leaves = sorted(leaves)
        self._index = {k: i for i, (k, _) in enumerate(self.leaves)}
        self.levels = _levels([leaf_hash(k, v) for k, v in self.leaves]) if self.leaves else [[]]

    @property
    def root(self) -> bytes:
        return self.levels[-1][0] if self.leaves else EMPTY_ROOT

    def prove(self, key: bytes) -> MembershipProof | AbsenceProof:
        i = self._index.get(key)
        n = len(self.leaves)
        if i is not None:
            return self._member(i)
        import bisect

        pos = bisect.bisect_left([k for k, _ in self.leaves], key)
        left = self._member(pos - 1) if pos > 0 else None
        right = self._member(pos) if pos < n else None
        return AbsenceProof(key, n, left, right)

    def _member(self, i: int) -> MembershipProof:
        k, v = self.leaves[i]
        return MembershipProof(k, v, i, len(self.leaves), _path(self.levels, i))


def verify(proof: MembershipProof | AbsenceProof, root: bytes) -> bool:
    if isinstance(proof, MembershipProof):
        return verify_membership(proof, root)
    return verify_absence(proof, root)

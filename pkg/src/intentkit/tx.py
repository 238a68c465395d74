"""Transaction plans, their canonical byte encoding, and signatures.

Canonical plan encoding (all integers little-endian)::

    magic        b"ICLTX\\x01"
    id           str
    intent_index u32
    nonce        u64
    sender       str      (hex Ed25519 public key)
    gas_limit    u64
    gas_price    u64
    action       str kind, u16 field count, then per field: str name, value
    increases    u32 count, then per entry (sorted): str wallet, str asset, int
    decreases    same layout as increases
    trigger      u8 presence, str normal-form ICL condition when present
    constraint   same layout as trigger

    str   = u16 byte length + UTF-8 bytes
    int   = 32-byte two's-complement signed
    value = u8 tag (1 int, 2 str, 3 none) + payload

The signed message is ``b"ICLSIG\\x01" + encoding + state_root`` where
``state_root`` is the 32-byte commitment of the snapshot the plan was
compiled against. Plan ids are the first 16 bytes (hex) of SHA-256 over the
encoding with an empty id field.
"""

from __future__ import annotations

import dataclasses
import functools
import hashlib
import struct
from dataclasses import dataclass, field
from typing import Any

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from intentkit.icl import ast, printer
from intentkit.icl.parser import parse_condition
from intentkit.ledger.actions import ACTION_TYPES, Action, kind

Deltas = dict[tuple[str, str], int]

MAGIC = b"ICLTX\x01"
SIG_DOMAIN = b"ICLSIG\x01"


def enc_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<H", len(raw)) + raw


def enc_int(n: int) -> bytes:
    return n.to_bytes(32, "little", signed=True)


def enc_value(v: Any) -> bytes:
    if v is None:
        return b"\x03"
    if isinstance(v, bool):
        raise TypeError("booleans have no canonical encoding")
    if isinstance(v, int):
        return b"\x01" + enc_int(v)
    if isinstance(v, str):
        return b"\x02" + enc_str(v)
    raise TypeError(f"cannot encode {type(v).__name__}")


def enc_deltas(d: Deltas) -> bytes:
    items = sorted(d.items())
    out = [struct.pack("<I", len(items))]
    for (w, a), n in items:
        out.append(enc_str(w) + enc_str(a) + enc_int(n))
    return b"".join(out)


def enc_condition(c: ast.Condition | None) -> bytes:
    if c is None:
        return b"\x00"
    return b"\x01" + enc_str(printer.condition(c))


def enc_action(action: Action) -> bytes:
    fields = dataclasses.fields(action)
    out = [enc_str(kind(action)), struct.pack("<H", len(fields))]
    for f in fields:
        out.append(enc_str(f.name) + enc_value(getattr(action, f.name)))
    return b"".join(out)


@dataclass(frozen=True)
class TransactionPlan:
    """An unsigned, fully resolved transaction."""

    id: str
    intent_index: int
    action: Action
    sender: str
    gas_limit: int
    gas_price: int
    increases: Deltas = field(default_factory=dict)
    decreases: Deltas = field(default_factory=dict)
    trigger: ast.Condition | None = None
    constraint: ast.Condition | None = None
    nonce: int = 0

    def encode(self, *, with_id: bool = True) -> bytes:
        return b"".join((
            MAGIC,
            enc_str(self.id if with_id else ""),
            struct.pack("<IQ", self.intent_index, self.nonce),
            enc_str(self.sender),
            struct.pack("<QQ", self.gas_limit, self.gas_price),
            enc_action(self.action),
            enc_deltas(self.increases),
            enc_deltas(self.decreases),
            enc_condition(self.trigger),
            enc_condition(self.constraint),
        ))

    def derived_id(self) -> str:
        return hashlib.sha256(self.encode(with_id=False)).hexdigest()[:32]

    @property
    def kind(self) -> str:
        return kind(self.action)


def make_plan(**kwargs: Any) -> TransactionPlan:
    """Build a plan and stamp its content-derived id."""
    plan = TransactionPlan(id="", **kwargs)
    return dataclasses.replace(plan, id=plan.derived_id())


# ---------------------------------------------------------------------------
# keys and signatures


def public_key_hex(pk: Ed25519PublicKey) -> str:
    return pk.public_bytes(Encoding.Raw, PublicFormat.Raw).hex()


def address_of(pk_hex: str) -> str:
    """Wallet address controlled directly by a public key."""
    return "0x" + hashlib.sha256(bytes.fromhex(pk_hex)).hexdigest()[:40]


def keypair_from_seed(seed: bytes) -> tuple[Ed25519PrivateKey, str]:
    sk = Ed25519PrivateKey.from_private_bytes(hashlib.sha256(seed).digest())
    return sk, public_key_hex(sk.public_key())


def signing_message(plan: TransactionPlan, state_root: bytes) -> bytes:
    return SIG_DOMAIN + plan.encode() + state_root


@functools.lru_cache(maxsize=1 << 16)
def verify_signature(pk_hex: str, signature: bytes, message: bytes) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(bytes.fromhex(pk_hex)).verify(signature, message)
    except (InvalidSignature, ValueError):
        return False
    return True


@dataclass(frozen=True)
class SignedTransaction:
    plan: TransactionPlan
    state_root: bytes
    signature: bytes
    signer: str

    @property
    def id(self) -> str:
        return self.plan.id

    @property
    def gas_price(self) -> int:
        return self.plan.gas_price

    @property
    def gas_limit(self) -> int:
        return self.plan.gas_limit

    def verify(self, state_root: bytes | None = None) -> bool:
        """Check the signature, optionally against an externally known root."""
        root = self.state_root if state_root is None else state_root
        if self.plan.id != self.plan.derived_id() or self.signer != self.plan.sender:
            return False
        return verify_signature(self.signer, self.signature, signing_message(self.plan, root))


def sign_plan(plan: TransactionPlan, sk: Ed25519PrivateKey, state_root: bytes) -> SignedTransaction:
    sig = sk.sign(signing_message(plan, state_root))
    return SignedTransaction(plan, state_root, sig, public_key_hex(sk.public_key()))


# ---------------------------------------------------------------------------
# JSON wire format


def _deltas_json(d: Deltas) -> list[list[str]]:
    return [[w, a, str(n)] for (w, a), n in sorted(d.items())]


def _deltas_from(items: list[list[str]]) -> Deltas:
    return {(w, a): int(n) for w, a, n in items}


def plan_to_json(plan: TransactionPlan) -> dict[str, Any]:
    action = {"kind": plan.kind}
    for f in dataclasses.fields(plan.action):
        v = getattr(plan.action, f.name)
        action[f.name] = str(v) if isinstance(v, int) else v
    return {
        "id": plan.id,
        "intentIndex": plan.intent_index,
        "nonce": plan.nonce,
        "sender": plan.sender,
        "gasLimit": plan.gas_limit,
        "gasPrice": plan.gas_price,
        "action": action,
        "declaredIncreases": _deltas_json(plan.increases),
        "declaredDecreases": _deltas_json(plan.decreases),
        "trigger": printer.condition(plan.trigger) if plan.trigger is not None else None,
        "constraint": printer.condition(plan.constraint) if plan.constraint is not None else None,
    }


def plan_from_json(data: dict[str, Any]) -> TransactionPlan:
    spec = dict(data["action"])
    cls = ACTION_TYPES[spec.pop("kind")]
    kwargs = {}
    for f in dataclasses.fields(cls):
        v = spec[f.name]
        kwargs[f.name] = int(v) if f.type == "int" else v
    return TransactionPlan(
        id=data["id"],
        intent_index=int(data["intentIndex"]),
        action=cls(**kwargs),
        sender=data["sender"],
        gas_limit=int(data["gasLimit"]),
        gas_price=int(data["gasPrice"]),
        increases=_deltas_from(data["declaredIncreases"]),
        decreases=_deltas_from(data["declaredDecreases"]),
        trigger=parse_condition(data["trigger"]) if data.get("trigger") else None,
        constraint=parse_condition(data["constraint"]) if data.get("constraint") else None,
        nonce=int(data.get("nonce", 0)),
    )


def signed_to_json(tx: SignedTransaction) -> dict[str, Any]:
    return {
        "plan": plan_to_json(tx.plan),
        "stateRoot": tx.state_root.hex(),
        "signature": tx.signature.hex(),
        "signer": tx.signer,
    }


def signed_from_json(data: dict[str, Any]) -> SignedTransaction:
    return SignedTransaction(
        plan_from_json(data["plan"]),
        bytes.fromhex(data["stateRoot"]),
        bytes.fromhex(data["signature"]),
        data["signer"],
    )

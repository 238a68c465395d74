"""Software enclave running the four-stage compile-and-sign protocol.

The secret key lives only inside a ``_Sealed`` holder that refuses to be
copied, pickled or printed. Every value leaving the boundary goes through
``_export``, which serializes it and audits the bytes for the key.
"""

from __future__ import annotations

import enum
import hashlib
import json
import secrets
from collections.abc import Iterable
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey
from cryptography.hazmat.primitives.serialization import Encoding, NoEncryption, PrivateFormat

from intentkit.assets import nft_asset
from intentkit.compiler import CompileError, CompileOptions, DecisionPolicy, compile_program
from intentkit.enclave.snapshot import (
    MARKET_PREFIXES, SnapshotMiss, StateSnapshot, acquire_verified_state,
)
from intentkit.icl import ast, parse
from intentkit.ledger.actions import LendingBorrow
from intentkit.ledger.state import Key, k_allow, k_bal
from intentkit.tx import (
    SignedTransaction, address_of, public_key_hex, sign_plan, signed_to_json, verify_signature,
)

_BUILD_PACKAGES = ("icl", "compiler")
_BUILD_MODULES = ("tx.py", "assets.py", "ledger/actions.py", "ledger/execution.py")


def build_digest() -> bytes:
    """SHA-256 over the source of every module the compiler runs."""
    root = Path(__file__).resolve().parent.parent
    files = sorted(
        [p for pkg in _BUILD_PACKAGES for p in (root / pkg).glob("*.py")]
        + [root / m for m in _BUILD_MODULES]
    )
    h = hashlib.sha256()
    for p in files:
        rel = p.relative_to(root).as_posix().encode()
        body = p.read_bytes()
        h.update(len(rel).to_bytes(4, "little") + rel + len(body).to_bytes(8, "little") + body)
    return h.digest()


def config_bytes(policy: DecisionPolicy, options: CompileOptions) -> bytes:
    cfg = {
        "policy": policy.to_json(),
        "gasPrice": options.gas_price,
        "nonceBase": options.nonce_base,
        "gasSchedule": dict(sorted(options.gas_schedule.items())),
    }
    return json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()


def measure(build: bytes, config: bytes) -> bytes:
    return hashlib.sha256(b"MEASURE\x01" + build + hashlib.sha256(config).digest()).digest()


class ProtocolError(Exception):
    pass


class SigningError(Exception):
    pass


class BoundaryLeak(Exception):
    pass


# -- simulated hardware root of trust ---------------------------------------------

class HardwareRoot:
    """Stands in for the CPU vendor key that signs attestation quotes."""

    def __init__(self, seed: bytes | None = None) -> None:
        raw = hashlib.sha256(b"hw-root" + seed).digest() if seed is not None else secrets.token_bytes(32)
        self.__key = Ed25519PrivateKey.from_private_bytes(raw)
        self.public_key = public_key_hex(self.__key.public_key())

    def quote(self, body: bytes) -> bytes:
        return self.__key.sign(b"QUOTE\x01" + body)

    def __reduce__(self):
        raise TypeError("hardware root keys cannot be serialized")


@dataclass(frozen=True)
class AttestationReport:
    measurement: bytes
    pk: str
    nonce: bytes
    signature: bytes

    def body(self) -> bytes:
        return self.measurement + bytes.fromhex(self.pk) + len(self.nonce).to_bytes(2, "little") + self.nonce

    def to_json(self) -> dict[str, str]:
        return {"measurement": self.measurement.hex(), "pk": self.pk,
                "nonce": self.nonce.hex(), "signature": self.signature.hex()}


class AttestationVerifier:
    """Challenger side: issues nonces and checks quotes against one expected build."""

    def __init__(self, root_public_key: str, expected_measurement: bytes, *, seed: int | None = None) -> None:
        self.root_public_key = root_public_key
        self.expected = expected_measurement
        self._outstanding: set[bytes] = set()
        self._counter = 0
        self._seed = seed

    def fresh_nonce(self) -> bytes:
        if self._seed is None:
            n = secrets.token_bytes(16)
        else:
            self._counter += 1
            n = hashlib.sha256(f"nonce:{self._seed}:{self._counter}".encode()).digest()[:16]
        self._outstanding.add(n)
        return n

    def verify(self, report: AttestationReport) -> bool:
        if report.nonce not in self._outstanding:
            return False
        if report.measurement != self.expected:
            return False
        if not verify_signature(self.root_public_key, report.signature, b"QUOTE\x01" + report.body()):
            return False
        self._outstanding.discard(report.nonce)
        return True


# -- sealed key --------------------------------------------------------------

class _Sealed:
    __slots__ = ("_sk", "_check")

    def __init__(self, sk: Ed25519PrivateKey) -> None:
        self._sk = sk
        self._check = hashlib.sha256(self._raw()).digest()

    def _raw(self) -> bytes:
        return self._sk.private_bytes(Encoding.Raw, PrivateFormat.Raw, NoEncryption())

    def key(self) -> Ed25519PrivateKey:
        if hashlib.sha256(self._raw()).digest() != self._check:
            raise SigningError("sealed key failed its integrity check")
        return self._sk

    def secret_forms(self) -> tuple[bytes, ...]:
        raw = self._raw()
        return raw, raw.hex().encode(), raw.hex().upper().encode()

    def __repr__(self) -> str:
        return "<sealed>"

    def __reduce__(self):
        raise TypeError("sealed state cannot leave the enclave")

    def __copy__(self):
        raise TypeError("sealed state cannot be copied")

    def __deepcopy__(self, memo):
        raise TypeError("sealed state cannot be copied")


class Stage(enum.Enum):
    INIT = "init"
    ATTESTED = "attested"
    STATE_VERIFIED = "state-verified"
    SIGNED = "signed"


def needed_keys(program: ast.Program, pk: str) -> list[Key]:
    """Balance and allowance leaves a program's compilation reads."""
    keys: set[Key] = set()
    for ts in program.statements:
        s = ts.statement
        wallets = {getattr(s, f) for f in ("wallet", "from_wallet", "to_wallet", "receiver") if hasattr(s, f)}
        assets = set()
        for f in ("amount", "amount_a", "amount_b", "budget", "min_amount"):
            if hasattr(s, f):
                assets.add(getattr(s, f).asset)
        if hasattr(s, "to_asset"):
            assets.add(s.to_asset)
        if hasattr(s, "nft_key"):
            assets.add(nft_asset(s.collection_key, s.nft_key))
        for w in wallets:
            keys.add(k_allow(w, pk, "*"))
            for a in assets:
                keys.add(k_bal(w, a))
    return sorted(keys)


class Enclave:
    """One protocol session. Not thread-safe; run one session per thread."""

    def __init__(
        self,
        hardware: HardwareRoot,
        *,
        policy: DecisionPolicy | None = None,
        options: CompileOptions | None = None,
        key_seed: bytes | None = None,
        build: bytes | None = None,
    ) -> None:
        self.policy = policy or DecisionPolicy()
        self.options = options or CompileOptions()
        self._hw = hardware
        self.measurement = measure(build if build is not None else build_digest(),
                                   config_bytes(self.policy, self.options))
        raw = hashlib.sha256(key_seed).digest() if key_seed is not None else secrets.token_bytes(32)
        self._sealed = _Sealed(Ed25519PrivateKey.from_private_bytes(raw))
        self._pk = public_key_hex(self._sealed.key().public_key())
        self.stage = Stage.INIT
        self._snapshot: StateSnapshot | None = None
        self.crossings = 0

    def __reduce__(self):
        raise TypeError("enclaves cannot be serialized")

    def __repr__(self) -> str:
        return f"<Enclave pk={self._pk[:12]}... stage={self.stage.value}>"

    # -- boundary ------------------------------------------------------------

    def _export(self, value: Any) -> Any:
        """Audit a value on its way out: its JSON form must not contain the key."""
        blob = json.dumps(value, sort_keys=True, default=_jsonable).encode()
        for secret in self._sealed.secret_forms():
            if secret in blob:
                raise BoundaryLeak("secret key material in exported value")
        self.crossings += 1
        return value

    def export_pk(self) -> str:
        return self._export(self._pk)

    def attest(self, nonce: bytes) -> AttestationReport:
        """Stage 1: quote the measurement and EOA key for the challenger's nonce."""
        body = AttestationReport(self.measurement, self._pk, nonce, b"")
        report = AttestationReport(self.measurement, self._pk, nonce, self._hw.quote(body.body()))
        if self.stage is Stage.INIT:
            self.stage = Stage.ATTESTED
        self._export(report.to_json())
        return report

    def acquire(self, node, program: ast.Program | str | None = None, *, keys: Iterable[Key] | None = None,
                t: int | None = None) -> dict[str, Any]:
        """Stage 2: fetch and verify the state the program needs."""
        if self.stage is Stage.INIT:
            raise ProtocolError("state acquisition before attestation")
        if keys is None:
            prog = parse(program) if isinstance(program, str) else program
            keys = needed_keys(prog, self._pk) if prog is not None else []
        self._snapshot = acquire_verified_state(node, t, keys, MARKET_PREFIXES)
        self.stage = Stage.STATE_VERIFIED
        return self._export({"height": self._snapshot.height, "stateRoot": self._snapshot.state_root.hex()})

    def compile_and_sign(self, program: ast.Program | str, *, skip_failed: bool = False) -> list[SignedTransaction]:
        """Stages 3 and 4: compile inside the boundary and sign every plan."""
        if self.stage not in (Stage.STATE_VERIFIED, Stage.SIGNED) or self._snapshot is None:
            raise ProtocolError("compileAndSign requires a verified state snapshot")
        prog = parse(program) if isinstance(program, str) else program
        snap = self._snapshot
        txset, errors = compile_program(
            prog, snap, self.policy, self._pk, provenance=snap.state_root.hex(),
            options=self.options, skip_failed=skip_failed,
        )
        if not txset.plans:
            raise errors[0] if errors else CompileError(0, "EmptyProgram")
        self._require_approval(txset.plans, snap)
        sk = self._sealed.key()
        signed = [sign_plan(p, sk, snap.state_root) for p in txset.plans]
        self.stage = Stage.SIGNED
        self._export([signed_to_json(s) for s in signed])
        return signed

    def _require_approval(self, plans, snap: StateSnapshot) -> None:
        own = address_of(self._pk)
        for p in plans:
            wallets = {w for w, _ in p.decreases}
            if isinstance(p.action, LendingBorrow):
                wallets.add(p.action.wallet)
            for w in sorted(wallets - {own}):
                try:
                    approved = snap.int_at(k_allow(w, self._pk, "*")) > 0
                except SnapshotMiss:
                    approved = False
                if not approved:
                    raise ProtocolError(f"wallet {w} has not approved the enclave key")


def _jsonable(o: Any) -> Any:
    if isinstance(o, bytes):
        return o.hex()
    if hasattr(o, "to_json"):
        return o.to_json()
    raise TypeError(f"{type(o).__name__} is not exportable")

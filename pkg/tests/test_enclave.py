from __future__ import annotations

import copy
import dataclasses
import json
import pickle

import pytest

from intentkit.compiler import CompileOptions, DecisionPolicy
from intentkit.enclave import (
    AttestationVerifier, BoundaryLeak, Enclave, HardwareRoot, ProofInvalid,
    ProtocolError, Stage, acquire_verified_state, build_digest, config_bytes, measure, verify_served,
)
from intentkit.icl import parse
from intentkit.ledger.merkle import MembershipProof
from intentkit.ledger.node import InvalidTransaction, LedgerNode, StaleHeight
from intentkit.ledger.state import k_bal
from intentkit.tx import signed_from_json, signed_to_json
from intentkit.workbench.pipeline import program_wallets


def _setup(genesis, seed=b"k"):
    node = LedgerNode.from_genesis(genesis, block_interval=0.0)
    hw = HardwareRoot(b"hw")
    enc = Enclave(hw, key_seed=seed)
    expected = measure(build_digest(), config_bytes(DecisionPolicy(), CompileOptions()))
    verifier = AttestationVerifier(hw.public_key, expected, seed=1)
    return node, hw, enc, verifier


def _approve(node, program, pk):
    for w in program_wallets(program):
        node.approve(w, pk)


class _Tampering:
    """Node proxy that lets a test rewrite the served state before it reaches the enclave."""

    def __init__(self, node, edit):
        self.node = node
        self.edit = edit

    def get_snapshot(self, keys, prefixes, height=None):
        return self.edit(self.node.get_snapshot(keys, prefixes, height=height))


# -- attestation --------------------------------------------------------------

def test_honest_attestation_verifies(genesis):
    _, _, enc, verifier = _setup(genesis)
    report = enc.attest(verifier.fresh_nonce())
    assert verifier.verify(report)
    assert enc.stage is Stage.ATTESTED


def test_nonce_is_single_use(genesis):
    _, _, enc, verifier = _setup(genesis)
    report = enc.attest(verifier.fresh_nonce())
    assert verifier.verify(report)
    assert not verifier.verify(report)


def test_unissued_nonce_rejected(genesis):
    _, _, enc, verifier = _setup(genesis)
    assert not verifier.verify(enc.attest(b"\x00" * 16))


@pytest.mark.parametrize("bit", [0, 7, 100, 255])
def test_measurement_bit_flip_rejected(genesis, bit):
    _, _, enc, verifier = _setup(genesis)
    report = enc.attest(verifier.fresh_nonce())
    m = bytearray(report.measurement)
    m[bit // 8] ^= 1 << (bit % 8)
    assert not verifier.verify(dataclasses.replace(report, measurement=bytes(m)))
    # the honest report for the same nonce still goes through afterwards
    assert verifier.verify(report)


def test_swapped_pk_breaks_quote(genesis):
    _, _, enc, verifier = _setup(genesis)
    other = Enclave(HardwareRoot(b"hw"), key_seed=b"other")
    report = enc.attest(verifier.fresh_nonce())
    forged = dataclasses.replace(report, pk=other.export_pk())
    assert not verifier.verify(forged)


def test_foreign_hardware_root_rejected(genesis):
    _, _, _, verifier = _setup(genesis)
    rogue = Enclave(HardwareRoot(b"rogue"), key_seed=b"k")
    assert not verifier.verify(rogue.attest(verifier.fresh_nonce()))


def test_measurement_tracks_build_and_config():
    build = build_digest()
    base = measure(build, config_bytes(DecisionPolicy(), CompileOptions()))
    assert base == measure(build, config_bytes(DecisionPolicy(), CompileOptions()))
    assert base != measure(build[:-1] + bytes([build[-1] ^ 1]), config_bytes(DecisionPolicy(), CompileOptions()))
    assert base != measure(build, config_bytes(DecisionPolicy(), CompileOptions(gas_price=2)))
    assert base != measure(build, config_bytes(DecisionPolicy(rng_seed=1), CompileOptions()))


def test_modified_build_fails_attestation(genesis):
    _, hw, _, verifier = _setup(genesis)
    patched = Enclave(hw, key_seed=b"k", build=b"patched compiler")
    assert not verifier.verify(patched.attest(verifier.fresh_nonce()))


# -- stage order --------------------------------------------------------------

def test_acquire_before_attest_is_protocol_error(genesis, example_source):
    node, _, enc, _ = _setup(genesis)
    with pytest.raises(ProtocolError):
        enc.acquire(node, example_source)


def test_compile_before_acquire_is_protocol_error(genesis, example_source):
    _, _, enc, verifier = _setup(genesis)
    enc.attest(verifier.fresh_nonce())
    with pytest.raises(ProtocolError):
        enc.compile_and_sign(example_source)


def test_unapproved_wallet_is_refused(genesis, example_source):
    node, _, enc, verifier = _setup(genesis)
    enc.attest(verifier.fresh_nonce())
    enc.acquire(node, example_source)
    with pytest.raises(ProtocolError):
        enc.compile_and_sign(example_source)


def test_full_protocol_signs_against_snapshot_root(genesis, example_source):
    node, _, enc, verifier = _setup(genesis)
    assert verifier.verify(enc.attest(verifier.fresh_nonce()))
    prog = parse(example_source)
    _approve(node, prog, enc.export_pk())
    served = enc.acquire(node, prog)
    assert served["stateRoot"] == node.state_root().hex()
    signed = enc.compile_and_sign(prog)
    assert enc.stage is Stage.SIGNED
    assert len(signed) == 5
    for s in signed:
        assert s.verify()
        assert s.state_root.hex() == served["stateRoot"]
        assert s.signer == enc.export_pk()
        node.send_raw_transaction(s)


# -- verified state -----------------------------------------------------------

def test_inflated_balance_rejected(genesis, example_source):
    node, _, enc, verifier = _setup(genesis)
    enc.attest(verifier.fresh_nonce())
    prog = parse(example_source)
    wallet = program_wallets(prog)[0]

    def inflate(served):
        key = k_bal(wallet, "USDC")
        leaves = dict(served.leaves)
        leaves[key] = (leaves.get(key) or 0) + 10**12
        return dataclasses.replace(served, leaves=leaves)

    with pytest.raises(ProofInvalid):
        enc.acquire(_Tampering(node, inflate), prog)
    assert enc.stage is Stage.ATTESTED


def test_dropped_leaf_rejected(genesis, example_source):
    node, _, enc, verifier = _setup(genesis)
    enc.attest(verifier.fresh_nonce())
    prog = parse(example_source)

    def drop(served):
        leaves = dict(served.leaves)
        leaves.pop(sorted(leaves)[0])
        return dataclasses.replace(served, leaves=leaves)

    with pytest.raises(ProofInvalid):
        enc.acquire(_Tampering(node, drop), prog)


def test_mutated_sibling_rejected(genesis, example_source):
    node, _, enc, verifier = _setup(genesis)
    enc.attest(verifier.fresh_nonce())
    prog = parse(example_source)

    def corrupt(served):
        proofs = dict(served.proofs)
        for key, proof in sorted(proofs.items()):
            if isinstance(proof, MembershipProof) and proof.siblings:
                first = bytes([proof.siblings[0][0] ^ 1]) + proof.siblings[0][1:]
                proofs[key] = dataclasses.replace(proof, siblings=(first,) + proof.siblings[1:])
                break
        return dataclasses.replace(served, proofs=proofs)

    with pytest.raises(ProofInvalid):
        enc.acquire(_Tampering(node, corrupt), prog)


def test_wrong_root_rejected(genesis):
    node = LedgerNode.from_genesis(genesis, block_interval=0.0)
    keys = [k_bal(w, "USDC") for w in sorted(genesis["balances"])][:2]
    served = node.get_snapshot(keys, (), height=None)
    with pytest.raises(ProofInvalid):
        verify_served(dataclasses.replace(served, root=b"\x00" * 32), keys)


def test_stale_height_rejected(genesis):
    node = LedgerNode.from_genesis(genesis, block_interval=0.0)
    keys = [k_bal(sorted(genesis["balances"])[0], "USDC")]
    served = node.get_snapshot(keys, (), height=None)
    with pytest.raises(StaleHeight):
        verify_served(served, keys, expected_height=served.height + 1)


def test_empty_key_set_is_still_verified(genesis):
    node = LedgerNode.from_genesis(genesis, block_interval=0.0)
    snap = acquire_verified_state(node, None, [])
    assert snap.state_root == node.state_root()
    assert any(k[0] == "price" for k in snap.entries)


def test_acquisition_does_not_touch_node_state(genesis, example_source):
    node, _, enc, verifier = _setup(genesis)
    enc.attest(verifier.fresh_nonce())
    before = node.state_root()
    enc.acquire(node, example_source)
    assert node.state_root() == before


# -- export integrity ---------------------------------------------------------

def _signed_set(genesis, example_source):
    node, _, enc, verifier = _setup(genesis)
    enc.attest(verifier.fresh_nonce())
    prog = parse(example_source)
    _approve(node, prog, enc.export_pk())
    enc.acquire(node, prog)
    return node, enc, enc.compile_and_sign(prog)


@pytest.mark.parametrize("field,value", [
    ("gasPrice", 999), ("gasLimit", 1), ("nonce", 77),
])
def test_post_export_mutation_rejected(genesis, example_source, field, value):
    node, _, signed = _signed_set(genesis, example_source)
    blob = signed_to_json(signed[0])
    blob["plan"][field] = value
    with pytest.raises(InvalidTransaction):
        node.send_raw_transaction(blob)


def test_post_export_action_mutation_rejected(genesis, example_source):
    node, _, signed = _signed_set(genesis, example_source)
    blob = json.loads(json.dumps(signed_to_json(signed[1])))
    action = blob["plan"]["action"]
    # lower the slippage floor by one base unit
    action["amount_out_min"] = str(int(action["amount_out_min"]) - 1)
    with pytest.raises(InvalidTransaction):
        node.send_raw_transaction(blob)


def test_root_rebinding_rejected(genesis, example_source):
    node, _, signed = _signed_set(genesis, example_source)
    blob = signed_to_json(signed[0])
    blob["stateRoot"] = "00" * 32
    with pytest.raises(InvalidTransaction):
        node.send_raw_transaction(blob)


def test_unmodified_export_round_trips(genesis, example_source):
    node, _, signed = _signed_set(genesis, example_source)
    for s in signed:
        again = signed_from_json(json.loads(json.dumps(signed_to_json(s))))
        assert again == s
        node.send_raw_transaction(again)


# -- secret key containment ---------------------------------------------------

def test_sealed_state_refuses_to_leave(genesis):
    _, _, enc, _ = _setup(genesis)
    for attempt in (lambda: pickle.dumps(enc), lambda: pickle.dumps(enc._sealed),
                    lambda: copy.copy(enc._sealed), lambda: copy.deepcopy(enc._sealed)):
        with pytest.raises(TypeError):
            attempt()
    raw = enc._sealed.secret_forms()[1].decode()
    assert raw not in repr(enc) and raw not in repr(enc._sealed)


def test_export_gate_catches_canary(genesis):
    _, _, enc, _ = _setup(genesis)
    canary = enc._sealed.secret_forms()[1].decode()
    with pytest.raises(BoundaryLeak):
        enc._export({"note": "x" + canary + "y"})
    with pytest.raises(BoundaryLeak):
        enc._export(enc._sealed.secret_forms()[0])


def _crossing_audit(genesis, program, target):
    node, _, enc, verifier = _setup(genesis, seed=b"canary")
    forms = enc._sealed.secret_forms()
    exported = []
    prog = parse(program)
    _approve(node, prog, enc.export_pk())
    while enc.crossings < target:
        exported.append(enc.attest(verifier.fresh_nonce()).to_json())
        if enc.crossings % 50 == 1:
            exported.append(enc.acquire(node, prog))
            exported.extend(signed_to_json(s) for s in enc.compile_and_sign(prog))
        exported.append(enc.export_pk())
    blob = json.dumps(exported).encode()
    return enc.crossings, [f for f in forms if f in blob]


def test_canary_audit_short(genesis, example_source):
    crossings, leaks = _crossing_audit(genesis, example_source, 500)
    assert crossings >= 500
    assert leaks == []

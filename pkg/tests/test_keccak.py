"""Keccak-256 tests against frozen cross-implementation vectors.

The vector file was generated by tools/gen_keccak_vectors.js with js-sha3,
a widely deployed implementation unrelated to this package. It covers the
empty message, sponge-rate boundaries (135/136/137 bytes and multiples),
and seeded random blobs. Selector derivation is additionally checked against
the compiler-reported selectors in the fixture ground truth.
"""

from __future__ import annotations

import json

from hypothesis import given, settings
from hypothesis import strategies as st

from evmlift.keccak import keccak256, selector, selector_hex

from .conftest import FIXTURES


def _vectors() -> list[dict]:
    return json.loads((FIXTURES / "keccak_vectors.json").read_text())


def test_known_answer_vectors():
    vectors = _vectors()
    assert len(vectors) >= 25
    for v in vectors:
        got = keccak256(bytes.fromhex(v["input_hex"])).hex()
        assert got == v["keccak256"], v["input_hex"][:32]


def test_published_anchor_values():
    # Ethereum's empty-code hash and the ubiquitous ERC-20 transfer selector.
    assert (
        keccak256(b"").hex()
        == "c5d2460186f7233c927e7db2dcc703c0e500b653ca82273b7bfad8045d85a470"
    )
    assert selector_hex("transfer(address,uint256)") == "a9059cbb"
    assert selector_hex("balanceOf(address)") == "70a08231"
    assert selector_hex("set(uint256)") == "60fe47b1"
    assert selector_hex("get()") == "6d4ce63c"


def test_selector_is_prefix_of_digest():
    sig = "walletOfOwner(address)"
    assert selector(sig) == keccak256(sig.encode())[:4]
    assert selector_hex(sig) == selector(sig).hex()


def test_ground_truth_selectors_all_match(ground_truth):
    """Every compiler-reported selector equals our keccak-derived one."""
    checked = 0
    for contract in ground_truth["contracts"].values():
        for signature, sel in contract["selectors"].items():
            assert selector_hex(signature) == sel, signature
            checked += 1
    assert checked >= 20


@given(st.binary(min_size=0, max_size=600))
@settings(max_examples=100, deadline=None)
def test_digest_shape_and_determinism(data: bytes):
    d1 = keccak256(data)
    d2 = keccak256(data)
    assert d1 == d2
    assert len(d1) == 32
    assert isinstance(d1, bytes)


@given(st.binary(min_size=0, max_size=200), st.binary(min_size=1, max_size=8))
@settings(max_examples=50, deadline=None)
def test_distinct_messages_rarely_collide(prefix: bytes, suffix: bytes):
    # appending bytes must change the digest (a collision here would be news)
    assert keccak256(prefix) != keccak256(prefix + suffix)

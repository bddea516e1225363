"""Dataset tests: ingestion, source scanning, pairing, dedup, serialization.

The expected pair count is derived independently inside the test from the
ground-truth selector sets and a regex scan of each fixture source, so the
builder's output has an oracle that does not depend on the builder.
"""

from __future__ import annotations

import json
import re

import pytest

from evmlift.dataset import (
    FilterReport,
    PairRecord,
    build_pairs,
    canonical_signature,
    extract_function_sources,
    filter_and_dedup,
    ingest,
    read_jsonl,
    split_holdout,
    write_jsonl,
)
from evmlift.keccak import selector_hex
from evmlift.tac import parse as parse_tac

from .conftest import BUNDLES, FIXTURES, load_source


@pytest.fixture(scope="module")
def contracts():
    return ingest(BUNDLES)


@pytest.fixture(scope="module")
def ground_truth_module():
    return json.loads((FIXTURES / "ground_truth.json").read_text())


@pytest.fixture(scope="module")
def pairs(contracts):
    return build_pairs(contracts)


def test_ingest_finds_all_bundles(contracts, ground_truth_module):
    assert len(contracts) == len(ground_truth_module["contracts"])
    addresses = [c.address for c in contracts]
    assert addresses == sorted(addresses)
    for c in contracts:
        assert c.runtime_bytecode.source_hex.startswith("6080")
        assert c.source.strip()
        assert c.compiler_version.startswith("v0.8")


def test_ingest_skips_malformed_bundles(tmp_path, contracts):
    good = contracts[0]
    src = BUNDLES / good.address
    dst = tmp_path / good.address
    dst.mkdir()
    for name in ("source.sol", "runtime.hex", "meta.json"):
        (dst / name).write_text((src / name).read_text())
    broken = tmp_path / "0x00000000000000000000000000000000000000bad"
    broken.mkdir()
    (broken / "runtime.hex").write_text("not hex at all")
    (tmp_path / "stray_file.txt").write_text("ignored")
    result = ingest(tmp_path)
    assert [c.address for c in result] == [good.address]


def test_canonical_signature_normalization():
    cases = [
        ("transfer", "address to, uint256 amount", "transfer(address,uint256)"),
        ("transfer", "address,uint256", "transfer(address,uint256)"),
        ("set", "uint x", "set(uint256)"),
        ("f", "int a, byte b", "f(int256,bytes1)"),
        ("g", "uint256[] memory xs", "g(uint256[])"),
        ("h", "address payable to", "h(address)"),
        ("stake", "  uint256   amount ", "stake(uint256)"),
        ("withdraw", "bytes calldata data", "withdraw(bytes)"),
        ("noargs", "", "noargs()"),
    ]
    for name, params, want in cases:
        assert canonical_signature(name, params) == want, (name, params)


def test_extract_function_sources_on_counter():
    source = load_source("0x0000000000000000000000000000000000001006")
    fns = extract_function_sources(source)
    by_sig = {f.signature: f for f in fns}
    assert "set(uint256)" in by_sig
    assert "get()" in by_sig
    assert by_sig["set(uint256)"].visibility == "external"
    assert by_sig["set(uint256)"].text.startswith("function set")
    assert by_sig["set(uint256)"].text.rstrip().endswith("}")


def test_extract_ignores_functions_in_comments_and_strings():
    source = """
contract T {
    // function ghost(uint256 x) public {}
    /* function phantom() external { } */
    string constant s = "function fake() public {}";
    function real(uint256 x) public { value = x; }
    uint256 value;
}
"""
    fns = extract_function_sources(source)
    assert [f.signature for f in fns] == ["real(uint256)"]


def test_extract_skips_bodyless_declarations():
    source = """
interface I {
    function declared(uint256 x) external;
}
contract T {
    function defined(uint256 x) public { y = x; }
    uint256 y;
}
"""
    fns = extract_function_sources(source)
    assert [f.signature for f in fns] == ["defined(uint256)"]


def _expected_matched_count(ground_truth_module) -> int:
    """Independent derivation: selectors whose signature also appears in the
    source text with a body, per contract."""
    total = 0
    for addr, info in ground_truth_module["contracts"].items():
        source = load_source(addr)
        for signature in info["selectors"]:
            name = signature.split("(")[0]
            # a function with this name and a body must exist in the source
            pattern = rf"function\s+{re.escape(name)}\s*\("
            assert re.search(pattern, source), (addr, signature)
            total += 1
    return total


def test_build_pairs_count_matches_independent_derivation(
    pairs, ground_truth_module
):
    assert len(pairs) == _expected_matched_count(ground_truth_module) == 31


def test_build_pairs_with_unmatched_adds_fallbacks(contracts, pairs):
    everything = build_pairs(contracts, keep_unmatched=True)
    extra = [r for r in everything if r.signature is None]
    assert len(everything) == len(pairs) + len(extra)
    assert len(extra) == 6  # one selector-less body per contract
    for rec in extra:
        assert rec.solidity is None
        assert rec.sol_tokens == 0


def test_records_are_sorted_and_complete(pairs):
    keys = [(r.contract_address, r.selector or "") for r in pairs]
    assert keys == sorted(keys)
    for rec in pairs:
        assert rec.tac_tokens > 0
        assert rec.sol_tokens > 0
        assert rec.compiler_version.startswith("v0.8")
        assert rec.visibility in ("public", "external")


def test_every_record_tac_parses(pairs):
    for rec in pairs:
        fn = parse_tac(rec.tac)
        assert fn.blocks, rec.selector


def test_selector_signature_consistency(pairs):
    for rec in pairs:
        if rec.signature is not None:
            assert selector_hex(rec.signature) == rec.selector, rec.signature


def test_filter_and_dedup_is_idempotent(pairs):
    once, report_once = filter_and_dedup(pairs)
    twice, report_twice = filter_and_dedup(once)
    assert [r.__dict__ for r in twice] == [r.__dict__ for r in once]
    assert report_twice.dropped_duplicate == 0
    assert report_once.kept == len(once)
    assert report_once.total == len(pairs)


def test_filter_drops_exact_and_whitespace_duplicates(pairs):
    clone = PairRecord(**{**pairs[0].__dict__})
    padded = PairRecord(
        **{
            **pairs[0].__dict__,
            "tac": pairs[0].tac.replace("\n", "\n  "),
            "solidity": pairs[0].solidity + "   ",
        }
    )
    kept, report = filter_and_dedup([pairs[0], clone, padded])
    assert len(kept) == 1
    assert report.dropped_duplicate == 2


def test_filter_drops_unparseable_tac(pairs):
    broken = PairRecord(**{**pairs[0].__dict__, "tac": "not a program"})
    kept, report = filter_and_dedup([broken])
    assert kept == []
    assert report.dropped_parse == 1


def test_write_read_roundtrip_and_byte_identical_rebuild(pairs, tmp_path):
    p1 = tmp_path / "a.jsonl"
    p2 = tmp_path / "b.jsonl"
    write_jsonl(pairs, p1)
    write_jsonl(read_jsonl(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert len(p1.read_text().splitlines()) == len(pairs)


def test_rebuild_from_bundles_is_byte_identical(contracts, tmp_path):
    a = tmp_path / "a.jsonl"
    b = tmp_path / "b.jsonl"
    write_jsonl(build_pairs(contracts), a)
    write_jsonl(build_pairs(ingest(BUNDLES)), b)
    assert a.read_bytes() == b.read_bytes()


def test_read_jsonl_reports_bad_lines(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"not": "a record"}\n')
    with pytest.raises(ValueError) as exc_info:
        read_jsonl(path)
    assert "bad.jsonl" in str(exc_info.value)
    assert ":1" in str(exc_info.value)


def test_split_holdout_is_deterministic_partition(pairs):
    train1, hold1 = split_holdout(pairs, 0.2, seed=42)
    train2, hold2 = split_holdout(pairs, 0.2, seed=42)
    assert [r.selector for r in train1] == [r.selector for r in train2]
    assert [r.selector for r in hold1] == [r.selector for r in hold2]
    assert len(hold1) == round(len(pairs) * 0.2)
    assert len(train1) + len(hold1) == len(pairs)
    ids = lambda rs: {(r.contract_address, r.selector) for r in rs}
    assert ids(train1) | ids(hold1) == ids(pairs)
    assert ids(train1) & ids(hold1) == set()
    # a different seed shuffles differently (with overwhelming probability)
    _, hold3 = split_holdout(pairs, 0.2, seed=43)
    assert ids(hold3) != ids(hold1) or len(pairs) < 5


def test_filter_report_shape(pairs):
    _, report = filter_and_dedup(pairs)
    assert isinstance(report, FilterReport)
    assert report.total == report.kept + report.dropped_parse + report.dropped_length + report.dropped_duplicate

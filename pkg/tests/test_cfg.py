"""CFG recovery tests: block structure, jump resolution, dispatcher walk.

The counter_blocks.json oracle (leader offsets and block count for the
Counter fixture) was computed by tools/annotate_counter.py, which applies the
leader rule directly to the instruction listing without using the cfg module,
and was frozen before the module was written.
"""

from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evmlift.cfg import (
    EmptyInput,
    NoDispatcherFound,
    analyze_region,
    build_blocks,
    detect_dispatcher,
    dispatcher_blocks,
    resolve_jumps,
)
from evmlift.disasm import disassemble, parse_hex, strip_metadata
from evmlift.keccak import selector_hex

from .conftest import (
    COUNTER,
    FIXTURES,
    GALLERY,
    SINK,
    TOKEN,
    VAULT,
    cfg_for,
    load_runtime_hex,
)


def test_counter_blocks_match_frozen_oracle(counter_cfg):
    oracle = json.loads((FIXTURES / "counter_blocks.json").read_text())
    assert counter_cfg.layout.code_end == oracle["code_end"]
    assert len(counter_cfg.blocks) == oracle["block_count"]
    leaders = [b.start_offset for b in counter_cfg.blocks]
    assert leaders == oracle["leaders"]


def test_every_jumpdest_starts_a_block(all_cfgs):
    for addr, graph in all_cfgs.items():
        starts = {b.start_offset for b in graph.blocks}
        for block in graph.blocks:
            for ins in block.instrs:
                if ins.opcode.mnemonic == "JUMPDEST":
                    assert ins.offset in starts, (addr, ins.offset)
                    assert ins.offset == block.start_offset, (addr, ins.offset)


def test_blocks_partition_executable_code(all_cfgs):
    for addr, graph in all_cfgs.items():
        pos = 0
        for block in sorted(graph.blocks, key=lambda b: b.start_offset):
            assert block.start_offset == pos, addr
            pos = block.end_offset
        assert pos == graph.layout.code_end, addr


def test_no_terminator_mid_block(all_cfgs):
    stoppers = {"JUMP", "JUMPI", "STOP", "RETURN", "REVERT", "INVALID", "SELFDESTRUCT"}
    for addr, graph in all_cfgs.items():
        for block in graph.blocks:
            for ins in block.instrs[:-1]:
                assert ins.opcode.mnemonic not in stoppers, (addr, block.id)


def test_edges_reference_existing_blocks(all_cfgs):
    for addr, graph in all_cfgs.items():
        ids = {b.id for b in graph.blocks}
        for edge in graph.edges:
            assert edge.src in ids and edge.dst in ids, (addr, edge)


def test_selector_recovery_matches_ground_truth(all_cfgs, ground_truth):
    for addr, graph in all_cfgs.items():
        want = sorted(ground_truth["contracts"][addr]["selectors"].values())
        try:
            candidates = detect_dispatcher(graph)
        except NoDispatcherFound:
            candidates = []
        got = sorted(c.selector_hex for c in candidates if c.selector is not None)
        assert got == want, addr


def test_ground_truth_selectors_derive_from_signatures(ground_truth):
    for contract in ground_truth["contracts"].values():
        for signature, sel in contract["selectors"].items():
            assert selector_hex(signature) == sel


def test_dispatcher_chain_has_zero_unresolved_jumps(all_cfgs):
    for addr, graph in all_cfgs.items():
        chain = dispatcher_blocks(graph)
        unresolved_in_chain = set(graph.unresolved) & set(chain)
        assert not unresolved_in_chain, (addr, unresolved_in_chain)


def test_region_analysis_resolves_single_call_site_helpers(counter_cfg):
    """Seeding the fixpoint at one function entry keeps helper returns constant.

    The Counter fixture's helpers each have one call site per function region,
    so every return-address constant survives and nothing stays unresolved.
    """
    for cand in detect_dispatcher(counter_cfg):
        if cand.selector is None:
            continue
        region = analyze_region(counter_cfg, cand.entry_block)
        assert region.unresolved == [], cand.selector_hex


def test_unresolved_blocks_are_computed_jump_returns_only(all_cfgs):
    """Helpers shared by several call sites keep symbolic returns, and those
    are always plain JUMPs (the documented data case), never anything else."""
    for addr, graph in all_cfgs.items():
        try:
            candidates = detect_dispatcher(graph)
        except NoDispatcherFound:
            continue
        by_id = {b.id: b for b in graph.blocks}
        for cand in candidates:
            if cand.selector is None:
                continue
            region = analyze_region(graph, cand.entry_block)
            for bid in region.unresolved:
                block = by_id[bid]
                assert block.terminator.name in ("JUMP", "JUMPI"), (addr, bid)


def test_hoisted_callvalue_guard_marks_functions_non_payable(all_candidates):
    for addr in (COUNTER, TOKEN):
        for cand in all_candidates[addr]:
            assert not cand.is_payable_guess, (addr, cand.selector_hex)


def test_per_function_payability_guesses(all_candidates, ground_truth):
    gallery = {
        c.selector_hex: c.is_payable_guess
        for c in all_candidates[GALLERY]
        if c.selector is not None
    }
    sels = ground_truth["contracts"][GALLERY]["selectors"]
    mint_sel = sels["mint(uint256)"]
    assert gallery[mint_sel] is True
    non_payable = [s for sig, s in sels.items() if sig != "mint(uint256)"]
    for sel in non_payable:
        assert gallery[sel] is False, sel

    vault = {
        c.selector_hex: c.is_payable_guess
        for c in all_candidates[VAULT]
        if c.selector is not None
    }
    vault_sels = ground_truth["contracts"][VAULT]["selectors"]
    assert vault[vault_sels["deposit()"]] is True


def test_fallback_only_contract(all_cfgs):
    graph = all_cfgs[SINK]
    try:
        candidates = detect_dispatcher(graph)
        named = [c for c in candidates if c.selector is not None]
        assert named == []
    except NoDispatcherFound:
        pass  # acceptable: no dispatcher exists in a fallback-only contract


def test_reachable_from_entry_covers_dispatcher(counter_cfg):
    reach = counter_cfg.reachable_from(counter_cfg.blocks[0].id)
    assert counter_cfg.blocks[0].id in reach
    for bid in dispatcher_blocks(counter_cfg):
        assert bid in reach


def test_candidate_entries_are_jumpdest_blocks(all_cfgs, all_candidates):
    for addr, candidates in all_candidates.items():
        graph = all_cfgs[addr]
        by_id = {b.id: b for b in graph.blocks}
        for cand in candidates:
            if cand.selector is None:
                continue
            entry = by_id[cand.entry_block]
            assert entry.instrs[0].opcode.mnemonic == "JUMPDEST", (
                addr,
                cand.selector_hex,
            )


def test_candidate_regions_subset_of_graph(all_cfgs, all_candidates):
    for addr, candidates in all_candidates.items():
        ids = {b.id for b in all_cfgs[addr].blocks}
        for cand in candidates:
            assert set(cand.reachable_blocks) <= ids, addr


def test_to_dot_mentions_every_block(counter_cfg):
    dot = counter_cfg.to_dot()
    assert dot.startswith("digraph")
    for block in counter_cfg.blocks:
        assert f"b{block.id}" in dot or f'"{block.id}"' in dot or str(block.id) in dot


def test_to_json_dict_shape(counter_cfg):
    d = counter_cfg.to_json_dict()
    assert len(d["blocks"]) == len(counter_cfg.blocks)
    assert isinstance(d["edges"], list)
    assert isinstance(d["unresolved"], list)
    json.dumps(d)  # must be serializable as-is


def test_empty_instruction_list_rejected():
    with pytest.raises(EmptyInput):
        build_blocks([])


@given(st.binary(min_size=1, max_size=256))
@settings(max_examples=150, deadline=None)
def test_cfg_construction_is_total(data: bytes):
    """Arbitrary bytes produce a CFG without raising."""
    code = parse_hex(data.hex())
    layout = strip_metadata(code)
    graph = resolve_jumps(build_blocks(disassemble(code), layout), layout)
    assert graph.blocks
    ids = {b.id for b in graph.blocks}
    for edge in graph.edges:
        assert edge.src in ids and edge.dst in ids


def test_resolved_jump_targets_are_jumpdests(all_cfgs):
    for addr, graph in all_cfgs.items():
        by_id = {b.id: b for b in graph.blocks}
        for edge in graph.edges:
            if edge.kind.name in ("TAKEN", "UNCONDITIONAL"):
                dst = by_id[edge.dst]
                assert dst.instrs[0].opcode.mnemonic == "JUMPDEST", (addr, edge)

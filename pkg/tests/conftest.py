"""Shared fixtures: bundle loaders, recovered CFGs, and program generators."""

from __future__ import annotations

import json
import random
from pathlib import Path

import pytest

from evmlift.cfg import build_blocks, detect_dispatcher, resolve_jumps
from evmlift.disasm import disassemble, parse_hex, strip_metadata

FIXTURES = Path(__file__).parent / "fixtures"
BUNDLES = FIXTURES / "bundles"

COUNTER = "0x0000000000000000000000000000000000001006"
GALLERY = "0x0000000000000000000000000000000000001002"
TOKEN = "0x0000000000000000000000000000000000001001"
VAULT = "0x0000000000000000000000000000000000001003"
VAULT_OPT = "0x0000000000000000000000000000000000001004"
SINK = "0x0000000000000000000000000000000000001005"


@pytest.fixture(scope="session")
def ground_truth() -> dict:
    return json.loads((FIXTURES / "ground_truth.json").read_text())


@pytest.fixture(scope="session")
def bundle_addresses(ground_truth) -> list[str]:
    return sorted(ground_truth["contracts"])


def load_runtime_hex(address: str) -> str:
    return (BUNDLES / address / "runtime.hex").read_text().strip()


def load_source(address: str) -> str:
    return (BUNDLES / address / "source.sol").read_text()


def cfg_for(address: str):
    code = parse_hex(load_runtime_hex(address))
    layout = strip_metadata(code)
    return resolve_jumps(build_blocks(disassemble(code), layout), layout)


@pytest.fixture(scope="session")
def counter_cfg():
    return cfg_for(COUNTER)


@pytest.fixture(scope="session")
def all_cfgs(bundle_addresses):
    return {addr: cfg_for(addr) for addr in bundle_addresses}


@pytest.fixture(scope="session")
def all_candidates(all_cfgs):
    out = {}
    for addr, graph in all_cfgs.items():
        out[addr] = detect_dispatcher(graph)
    return out


# Straight-line EVM program generator shared by the differential tests. It
# emits only pure value and stack operations so both evaluation routes are
# defined, and tracks depth so the program never underflows.

VALUE_OP_ARITY = {
    "ADD": 2, "MUL": 2, "SUB": 2, "DIV": 2, "SDIV": 2, "MOD": 2, "SMOD": 2,
    "ADDMOD": 3, "MULMOD": 3, "EXP": 2, "SIGNEXTEND": 2,
    "LT": 2, "GT": 2, "SLT": 2, "SGT": 2, "EQ": 2, "ISZERO": 1,
    "AND": 2, "OR": 2, "XOR": 2, "NOT": 1, "BYTE": 2,
    "SHL": 2, "SHR": 2, "SAR": 2,
}

_INTERESTING = (
    0, 1, 2, 3, 7, 31, 32, 255, 256,
    (1 << 255) - 1, 1 << 255, (1 << 256) - 1, (1 << 256) - 2,
    0x80FF, 0xDEADBEEF,
)


def random_word(rng: random.Random) -> int:
    kind = rng.random()
    if kind < 0.4:
        return rng.choice(_INTERESTING)
    if kind < 0.7:
        return rng.getrandbits(rng.choice((8, 16, 64)))
    return rng.getrandbits(256)


def random_straight_line_program(rng: random.Random, max_len: int = 24):
    """Random pure EVM program plus a starting stack deep enough to run it."""
    depth = rng.randint(2, 6)
    stack = [random_word(rng) for _ in range(depth)]
    ops: list[tuple[str, int | None]] = []
    sim_depth = depth
    for _ in range(rng.randint(1, max_len)):
        choices = ["PUSH"]
        if sim_depth >= 1:
            choices += ["DUP", "ISZERO", "NOT", "POP"]
        if sim_depth >= 2:
            choices += ["SWAP", "BINARY", "BINARY", "BINARY"]
        if sim_depth >= 3:
            choices += ["TERNARY"]
        kind = rng.choice(choices)
        if kind == "PUSH":
            ops.append(("PUSH", random_word(rng)))
            sim_depth += 1
        elif kind == "DUP":
            n = rng.randint(1, min(sim_depth, 16))
            ops.append((f"DUP{n}", None))
            sim_depth += 1
        elif kind == "SWAP":
            n = rng.randint(1, min(sim_depth - 1, 16))
            ops.append((f"SWAP{n}", None))
        elif kind == "POP":
            ops.append(("POP", None))
            sim_depth -= 1
        elif kind in ("ISZERO", "NOT"):
            ops.append((kind, None))
        elif kind == "BINARY":
            op = rng.choice([o for o, a in VALUE_OP_ARITY.items() if a == 2])
            ops.append((op, None))
            sim_depth -= 1
        else:
            op = rng.choice([o for o, a in VALUE_OP_ARITY.items() if a == 3])
            ops.append((op, None))
            sim_depth -= 2
    return ops, stack


def _mnemonic_to_byte() -> dict[str, int]:
    from evmlift.opcodes import TABLE

    return {op.mnemonic: value for value, op in TABLE.items()}


OPCODE_OF = _mnemonic_to_byte()


def assemble_straight_line(ops) -> bytes:
    """Encode generator output as bytecode (PUSH words use minimal width)."""
    out = bytearray()
    for name, imm in ops:
        if name == "PUSH":
            width = max(1, (imm.bit_length() + 7) // 8)
            out.append(OPCODE_OF[f"PUSH{width}"])
            out.extend(imm.to_bytes(width, "big"))
        else:
            out.append(OPCODE_OF[name])
    return bytes(out)

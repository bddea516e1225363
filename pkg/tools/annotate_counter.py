"""Derive basic-block leaders for the Counter fixture by direct byte inspection.

Run from the repository root: python3 tools/annotate_counter.py

Independent of the package under src/: decoding uses only the PUSH-immediate
rule (0x60..0x7f carry 1..32 immediate bytes, 0x5f carries none) and the
metadata-trailer length suffix. Leaders follow the standard definition:
offset 0, every JUMPDEST, and the offset after every terminator
(JUMP, JUMPI, STOP, RETURN, REVERT, INVALID, SELFDESTRUCT).

The result is frozen into tests/fixtures/counter_blocks.json and used as the
oracle for block construction tests.
"""

import json
import pathlib

TERMINATORS = {0x00, 0x56, 0x57, 0xF3, 0xFD, 0xFE, 0xFF}
JUMPDEST = 0x5B
DEFINED = set(
    list(range(0x00, 0x0C))
    + list(range(0x10, 0x1E))
    + [0x20]
    + list(range(0x30, 0x49))
    + list(range(0x50, 0x5C))
    + [0x5F]
    + list(range(0x60, 0xA5))
    + [0xF0, 0xF1, 0xF2, 0xF3, 0xF4, 0xF5, 0xFA, 0xFD, 0xFE, 0xFF]
)

ADDRESS = "0x0000000000000000000000000000000000001006"


def main() -> None:
    root = pathlib.Path(__file__).resolve().parents[1]
    hexpath = root / "tests" / "fixtures" / "bundles" / ADDRESS / "runtime.hex"
    data = bytes.fromhex(hexpath.read_text().strip())

    trailer_len = int.from_bytes(data[-2:], "big")
    assert data[len(data) - trailer_len - 2] == 0xA2, "expected CBOR map header"
    code_end = len(data) - trailer_len - 2

    leaders = {0}
    i = 0
    while i < code_end:
        op = data[i]
        assert op in DEFINED, f"undefined opcode 0x{op:02x} at {i} in code region"
        if op == JUMPDEST:
            leaders.add(i)
        size = 1 + (op - 0x5F if 0x60 <= op <= 0x7F else 0)
        if op in TERMINATORS and i + size < code_end:
            leaders.add(i + size)
        i += size

    out = {
        "address": ADDRESS,
        "code_end": code_end,
        "leaders": sorted(leaders),
        "block_count": len(leaders),
    }
    dest = root / "tests" / "fixtures" / "counter_blocks.json"
    dest.write_text(json.dumps(out, indent=2) + "\n")
    print(f"code_end={code_end} block_count={len(leaders)}")


if __name__ == "__main__":
    main()

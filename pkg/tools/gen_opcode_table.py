"""Regenerate src/evmlift/data/opcodes_shanghai.json.

Run from the repository root:  python tools/gen_opcode_table.py
"""

import json
import pathlib

# (value, mnemonic, immediate_size, pops, pushes)
BASE = [
    (0x00, "STOP", 0, 0, 0),
    (0x01, "ADD", 0, 2, 1),
    (0x02, "MUL", 0, 2, 1),
    (0x03, "SUB", 0, 2, 1),
    (0x04, "DIV", 0, 2, 1),
    (0x05, "SDIV", 0, 2, 1),
    (0x06, "MOD", 0, 2, 1),
    (0x07, "SMOD", 0, 2, 1),
    (0x08, "ADDMOD", 0, 3, 1),
    (0x09, "MULMOD", 0, 3, 1),
    (0x0A, "EXP", 0, 2, 1),
    (0x0B, "SIGNEXTEND", 0, 2, 1),
    (0x10, "LT", 0, 2, 1),
    (0x11, "GT", 0, 2, 1),
    (0x12, "SLT", 0, 2, 1),
    (0x13, "SGT", 0, 2, 1),
    (0x14, "EQ", 0, 2, 1),
    (0x15, "ISZERO", 0, 1, 1),
    (0x16, "AND", 0, 2, 1),
    (0x17, "OR", 0, 2, 1),
    (0x18, "XOR", 0, 2, 1),
    (0x19, "NOT", 0, 1, 1),
    (0x1A, "BYTE", 0, 2, 1),
    (0x1B, "SHL", 0, 2, 1),
    (0x1C, "SHR", 0, 2, 1),
    (0x1D, "SAR", 0, 2, 1),
    (0x20, "KECCAK256", 0, 2, 1),
    (0x30, "ADDRESS", 0, 0, 1),
    (0x31, "BALANCE", 0, 1, 1),
    (0x32, "ORIGIN", 0, 0, 1),
    (0x33, "CALLER", 0, 0, 1),
    (0x34, "CALLVALUE", 0, 0, 1),
    (0x35, "CALLDATALOAD", 0, 1, 1),
    (0x36, "CALLDATASIZE", 0, 0, 1),
    (0x37, "CALLDATACOPY", 0, 3, 0),
    (0x38, "CODESIZE", 0, 0, 1),
    (0x39, "CODECOPY", 0, 3, 0),
    (0x3A, "GASPRICE", 0, 0, 1),
    (0x3B, "EXTCODESIZE", 0, 1, 1),
    (0x3C, "EXTCODECOPY", 0, 4, 0),
    (0x3D, "RETURNDATASIZE", 0, 0, 1),
    (0x3E, "RETURNDATACOPY", 0, 3, 0),
    (0x3F, "EXTCODEHASH", 0, 1, 1),
    (0x40, "BLOCKHASH", 0, 1, 1),
    (0x41, "COINBASE", 0, 0, 1),
    (0x42, "TIMESTAMP", 0, 0, 1),
    (0x43, "NUMBER", 0, 0, 1),
    (0x44, "PREVRANDAO", 0, 0, 1),
    (0x45, "GASLIMIT", 0, 0, 1),
    (0x46, "CHAINID", 0, 0, 1),
    (0x47, "SELFBALANCE", 0, 0, 1),
    (0x48, "BASEFEE", 0, 0, 1),
    (0x50, "POP", 0, 1, 0),
    (0x51, "MLOAD", 0, 1, 1),
    (0x52, "MSTORE", 0, 2, 0),
    (0x53, "MSTORE8", 0, 2, 0),
    (0x54, "SLOAD", 0, 1, 1),
    (0x55, "SSTORE", 0, 2, 0),
    (0x56, "JUMP", 0, 1, 0),
    (0x57, "JUMPI", 0, 2, 0),
    (0x58, "PC", 0, 0, 1),
    (0x59, "MSIZE", 0, 0, 1),
    (0x5A, "GAS", 0, 0, 1),
    (0x5B, "JUMPDEST", 0, 0, 0),
    (0x5F, "PUSH0", 0, 0, 1),
    (0xF0, "CREATE", 0, 3, 1),
    (0xF1, "CALL", 0, 7, 1),
    (0xF2, "CALLCODE", 0, 7, 1),
    (0xF3, "RETURN", 0, 2, 0),
    (0xF4, "DELEGATECALL", 0, 6, 1),
    (0xF5, "CREATE2", 0, 4, 1),
    (0xFA, "STATICCALL", 0, 6, 1),
    (0xFD, "REVERT", 0, 2, 0),
    (0xFE, "INVALID", 0, 0, 0),
    (0xFF, "SELFDESTRUCT", 0, 1, 0),
]


def build() -> list[dict]:
    rows = list(BASE)
    for n in range(1, 33):
        rows.append((0x60 + n - 1, f"PUSH{n}", n, 0, 1))
    for n in range(1, 17):
        rows.append((0x80 + n - 1, f"DUP{n}", 0, n, n + 1))
    for n in range(1, 17):
        rows.append((0x90 + n - 1, f"SWAP{n}", 0, n + 1, n + 1))
    for n in range(0, 5):
        rows.append((0xA0 + n, f"LOG{n}", 0, 2 + n, 0))
    rows.sort(key=lambda r: r[0])
    return [
        {
            "value": v,
            "mnemonic": m,
            "immediate_size": imm,
            "pops": pops,
            "pushes": pushes,
        }
        for v, m, imm, pops, pushes in rows
    ]


def main() -> None:
    out = pathlib.Path(__file__).resolve().parents[1] / "src" / "evmlift" / "data" / "opcodes_shanghai.json"
    rows = build()
    values = [r["value"] for r in rows]
    assert len(values) == len(set(values)), "duplicate opcode values"
    out.write_text(json.dumps(rows, indent=1) + "\n")
    print(f"wrote {len(rows)} opcodes to {out}")


if __name__ == "__main__":
    main()

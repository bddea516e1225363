"""EVM opcode table (Shanghai instruction set).

The table is loaded from a packaged JSON file so the data can be inspected and
regenerated without touching code. Lookup is total: byte values with no defined
instruction map to a synthesized UNKNOWN_0x<hex> entry that behaves like
INVALID (no immediate, no stack effect, not valid).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

__all__ = ["Op", "TABLE", "op_for", "PUSH0", "PUSH1", "PUSH32"]

PUSH0 = 0x5F
PUSH1 = 0x60
PUSH32 = 0x7F
DUP1 = 0x80
DUP16 = 0x8F
SWAP1 = 0x90
SWAP16 = 0x9F


@dataclass(frozen=True)
class Op:
    """Static description of one opcode."""

    value: int
    mnemonic: str
    immediate_size: int
    pops: int
    pushes: int
    is_defined: bool = True

    @property
    def is_push(self) -> bool:
        return PUSH0 <= self.value <= PUSH32

    @property
    def is_dup(self) -> bool:
        return DUP1 <= self.value <= DUP16

    @property
    def is_swap(self) -> bool:
        return SWAP1 <= self.value <= SWAP16

    @property
    def is_terminator(self) -> bool:
        """True when control never falls through to the next instruction."""
        if not self.is_defined:
            return True
        return self.mnemonic in (
            "STOP",
            "JUMP",
            "JUMPI",
            "RETURN",
            "REVERT",
            "INVALID",
            "SELFDESTRUCT",
        )


def _load_table() -> dict[int, Op]:
    raw = resources.files("evmlift.data").joinpath("opcodes_shanghai.json").read_text()
    table: dict[int, Op] = {}
    for row in json.loads(raw):
        op = Op(
            value=row["value"],
            mnemonic=row["mnemonic"],
            immediate_size=row["immediate_size"],
            pops=row["pops"],
            pushes=row["pushes"],
        )
        table[op.value] = op
    return table


TABLE: dict[int, Op] = _load_table()

_UNDEFINED: dict[int, Op] = {}


def op_for(value: int) -> Op:
    """Total lookup: every byte value 0..255 resolves to an Op."""
    if not 0 <= value <= 0xFF:
        raise ValueError(f"opcode value out of range: {value}")
    op = TABLE.get(value)
    if op is not None:
        return op
    op = _UNDEFINED.get(value)
    if op is None:
        op = Op(
            value=value,
            mnemonic=f"UNKNOWN_0x{value:02x}",
            immediate_size=0,
            pops=0,
            pushes=0,
            is_defined=False,
        )
        _UNDEFINED[value] = op
    return op

"""Linear-sweep EVM disassembler.

Disassembly is total: every byte of input is consumed, undefined opcodes become
invalid single-byte instructions, and a PUSH whose immediate runs past the end
of the code is kept with the short immediate and flagged invalid. Because no
byte is dropped, ``reassemble(disassemble(code))`` reproduces the input
byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .opcodes import Op, op_for

__all__ = [
    "DisasmError",
    "OddLengthHex",
    "NonHexCharacter",
    "EmptyInput",
    "NonContiguousOffsets",
    "Bytecode",
    "Instruction",
    "CodeLayout",
    "parse_hex",
    "disassemble",
    "reassemble",
    "strip_metadata",
    "format_listing",
]

_HEX_DIGITS = set("0123456789abcdefABCDEF")

# CBOR map headers solc emits for its metadata trailer: maps of 1 to 3 entries.
_CBOR_MAP_HEADERS = (0xA1, 0xA2, 0xA3)


class DisasmError(Exception):
    """Base class for disassembler input errors."""


class OddLengthHex(DisasmError):
    pass


class NonHexCharacter(DisasmError):
    pass


class EmptyInput(DisasmError):
    pass


class NonContiguousOffsets(DisasmError):
    """Raised by reassemble when instruction offsets do not tile the code."""


@dataclass(frozen=True)
class Bytecode:
    """Raw runtime code plus the hex spelling it was parsed from."""

    data: bytes
    source_hex: str

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Bytecode":
        return cls(data=raw, source_hex=raw.hex())

    def __len__(self) -> int:
        return len(self.data)


@dataclass(frozen=True)
class Instruction:
    """One decoded instruction.

    immediate is None for everything except PUSH1..PUSH32; a truncated PUSH
    keeps whatever immediate bytes exist (possibly none) and is_valid=False.
    """

    offset: int
    opcode: Op
    immediate: bytes | None = None
    is_valid: bool = True

    @property
    def mnemonic(self) -> str:
        return self.opcode.mnemonic

    @property
    def size(self) -> int:
        return 1 + (len(self.immediate) if self.immediate is not None else 0)

    @property
    def immediate_value(self) -> int | None:
        if self.immediate is None:
            return None
        return int.from_bytes(self.immediate, "big") if self.immediate else 0

    @property
    def end_offset(self) -> int:
        return self.offset + self.size


@dataclass(frozen=True)
class CodeLayout:
    """Split of the raw code into executable bytes and trailing metadata."""

    code_end: int
    metadata: bytes | None
    data_regions: tuple[tuple[int, int], ...] = field(default=())


def parse_hex(text: str) -> Bytecode:
    """Parse a hex string (optional 0x prefix, surrounding whitespace ok)."""
    cleaned = text.strip()
    if cleaned.startswith(("0x", "0X")):
        cleaned = cleaned[2:]
    if not cleaned:
        raise EmptyInput("no bytecode bytes in input")
    bad = next((c for c in cleaned if c not in _HEX_DIGITS), None)
    if bad is not None:
        raise NonHexCharacter(f"invalid hex character {bad!r}")
    if len(cleaned) % 2 != 0:
        raise OddLengthHex(f"hex input has odd length {len(cleaned)}")
    return Bytecode(data=bytes.fromhex(cleaned), source_hex=cleaned.lower())


def disassemble(code: Bytecode) -> list[Instruction]:
    """Decode every byte of code into a contiguous instruction list."""
    if len(code.data) == 0:
        raise EmptyInput("cannot disassemble empty bytecode")
    out: list[Instruction] = []
    data = code.data
    i = 0
    n = len(data)
    while i < n:
        op = op_for(data[i])
        if op.immediate_size:
            imm = data[i + 1 : i + 1 + op.immediate_size]
            truncated = len(imm) < op.immediate_size
            out.append(
                Instruction(
                    offset=i,
                    opcode=op,
                    immediate=imm,
                    is_valid=not truncated,
                )
            )
            i += 1 + len(imm)
        else:
            out.append(Instruction(offset=i, opcode=op, is_valid=op.is_defined))
            i += 1
    return out


def reassemble(instrs: list[Instruction]) -> Bytecode:
    """Inverse of disassemble. Offsets must tile the byte range contiguously."""
    if not instrs:
        raise EmptyInput("cannot reassemble an empty instruction list")
    expected = instrs[0].offset
    if expected != 0:
        raise NonContiguousOffsets(f"first instruction at offset {expected}, not 0")
    chunks: list[bytes] = []
    for ins in instrs:
        if ins.offset != expected:
            raise NonContiguousOffsets(
                f"instruction at offset {ins.offset}, expected {expected}"
            )
        chunks.append(bytes([ins.opcode.value]))
        if ins.immediate is not None:
            chunks.append(ins.immediate)
        expected = ins.end_offset
    return Bytecode.from_bytes(b"".join(chunks))


def strip_metadata(code: Bytecode) -> CodeLayout:
    """Locate the CBOR metadata trailer appended by common compilers.

    The last two bytes encode the trailer length L (big endian); the trailer is
    the preceding L bytes. The split is accepted only if it fits inside the
    code and starts with a small CBOR map header. On any validation failure
    the whole input counts as executable code.
    """
    data = code.data
    full = CodeLayout(code_end=len(data), metadata=None)
    if len(data) < 4:
        return full
    trailer_len = int.from_bytes(data[-2:], "big")
    total = trailer_len + 2
    if trailer_len == 0 or total > len(data):
        return full
    start = len(data) - total
    if data[start] not in _CBOR_MAP_HEADERS:
        return full
    return CodeLayout(
        code_end=start,
        metadata=data[start:],
        data_regions=((start, len(data)),),
    )


def format_listing(instrs: list[Instruction]) -> str:
    """Render instructions one per line: `<offset>: <MNEMONIC> [0x<imm>]`."""
    lines = []
    for ins in instrs:
        line = f"{ins.offset:04x}: {ins.mnemonic}"
        if ins.immediate is not None:
            line += f" 0x{ins.immediate.hex()}" if ins.immediate else " 0x"
        lines.append(line)
    return "\n".join(lines) + ("\n" if lines else "")

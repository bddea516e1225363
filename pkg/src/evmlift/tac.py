"""Three-address code: types, renderer, and parser.

A function is a list of labeled blocks; each block is a list of instructions
over three operand kinds (variables, 256-bit constants, block labels).
Instruction arguments follow EVM pop order, so for example `sub` reads as
left-to-right subtraction while shifts render call-style to avoid misreading
the operand order.

The renderer and parser are inverses over the block structure: parsing the
rendered text of a function yields equal blocks, labels, and successor lists.
Function metadata (selector, signature, visibility) is carried alongside and
is not part of the rendered text.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

__all__ = [
    "Var",
    "Const",
    "Label",
    "Operand",
    "TacInstruction",
    "TacBlock",
    "TacFunction",
    "TacSyntaxError",
    "render",
    "render_instruction",
    "parse",
    "instruction_shape",
]

MASK256 = (1 << 256) - 1


class TacSyntaxError(Exception):
    """Raised when text cannot be parsed as three-address code."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}" if line_no else message)


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Const:
    value: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "value", self.value & MASK256)


@dataclass(frozen=True)
class Label:
    name: str


Operand = Var | Const | Label

# Ops whose argument count legitimately exceeds three: external calls and
# contract creation, log emission, multi-way merges, and EXTCODECOPY.
VARIADIC_OPS = frozenset(
    {
        "phi",
        "call",
        "callcode",
        "delegatecall",
        "staticcall",
        "create",
        "create2",
        "log0",
        "log1",
        "log2",
        "log3",
        "log4",
        "extcodecopy",
    }
)

# Ops rendered with an infix symbol; EVM pop order reads naturally for these.
INFIX = {
    "add": "+",
    "sub": "-",
    "mul": "*",
    "div": "/",
    "mod": "%",
    "lt": "<",
    "gt": ">",
    "eq": "==",
    "and": "&",
    "or": "|",
    "xor": "^",
}
_INFIX_BY_SYMBOL = {sym: op for op, sym in INFIX.items()}

# Ops that never transfer control to the following instruction.
TERMINAL_OPS = frozenset(
    {"jump", "return", "revert", "stop", "selfdestruct", "invalid", "truncated"}
)

TRUNCATION_SENTINEL = "truncated"


@dataclass(frozen=True)
class TacInstruction:
    op: str
    dest: str | None = None
    args: tuple[Operand, ...] = ()

    def __post_init__(self) -> None:
        if self.op not in VARIADIC_OPS and len(self.args) > 3:
            raise ValueError(f"op {self.op!r} carries {len(self.args)} operands")

    def __str__(self) -> str:
        return render_instruction(self)


@dataclass(frozen=True)
class TacBlock:
    label: str
    instrs: tuple[TacInstruction, ...]
    successors: tuple[str, ...] = ()


@dataclass
class TacFunction:
    blocks: list[TacBlock]
    entry_label: str
    selector: bytes | None = None
    signature: str | None = None
    visibility: str | None = None

    def with_metadata(
        self,
        selector: bytes | None = None,
        signature: str | None = None,
        visibility: str | None = None,
    ) -> "TacFunction":
        return TacFunction(
            blocks=self.blocks,
            entry_label=self.entry_label,
            selector=selector if selector is not None else self.selector,
            signature=signature if signature is not None else self.signature,
            visibility=visibility if visibility is not None else self.visibility,
        )

    def block(self, label: str) -> TacBlock:
        for b in self.blocks:
            if b.label == label:
                return b
        raise KeyError(label)


def _render_operand(operand: Operand) -> str:
    if isinstance(operand, Var):
        return operand.name
    if isinstance(operand, Label):
        return operand.name
    value = operand.value
    return str(value) if value < 10 else hex(value)


def render_instruction(ins: TacInstruction) -> str:
    if ins.op == TRUNCATION_SENTINEL:
        return TRUNCATION_SENTINEL
    if ins.op == "jump":
        return f"jump {_render_operand(ins.args[0])}"
    if ins.op == "cjump":
        return f"cjump {_render_operand(ins.args[0])}, {_render_operand(ins.args[1])}"
    if ins.op == "copy":
        return f"{ins.dest} = {_render_operand(ins.args[0])}"
    if ins.op in INFIX and len(ins.args) == 2 and ins.dest is not None:
        a, b = (_render_operand(x) for x in ins.args)
        return f"{ins.dest} = {a} {INFIX[ins.op]} {b}"
    call = f"{ins.op}({', '.join(_render_operand(a) for a in ins.args)})"
    return f"{ins.dest} = {call}" if ins.dest is not None else call


def render(fn: TacFunction) -> str:
    """Render a function as text: label lines plus indented instructions."""
    lines: list[str] = []
    for block in fn.blocks:
        lines.append(f"{block.label}:")
        for ins in block.instrs:
            lines.append(f"  {render_instruction(ins)}")
    return "\n".join(lines) + "\n"


_LABEL_LINE = re.compile(r"^([A-Za-z_]\w*):$")
_IDENT = re.compile(r"^[A-Za-z_]\w*$")
_NUMBER = re.compile(r"^(0[xX][0-9a-fA-F]+|\d+)$")
_BLOCK_LABEL = re.compile(r"^L\d+$")
_CALL = re.compile(r"^([A-Za-z_]\w*)\((.*)\)$")
_INFIX_EXPR = re.compile(
    r"^(\S+)\s*(==|<<|>>|[+\-*/%<>&|^])\s*(\S+)$"
)


def _parse_operand(text: str, line_no: int, target_position: bool = False) -> Operand:
    text = text.strip()
    if not text:
        raise TacSyntaxError("empty operand", line_no)
    if _NUMBER.match(text):
        return Const(int(text, 0))
    if _IDENT.match(text):
        if target_position and _BLOCK_LABEL.match(text):
            return Label(text)
        return Var(text)
    raise TacSyntaxError(f"bad operand {text!r}", line_no)


def _split_args(text: str, line_no: int) -> list[str]:
    text = text.strip()
    if not text:
        return []
    parts = [p.strip() for p in text.split(",")]
    if any(not p for p in parts):
        raise TacSyntaxError("empty argument", line_no)
    return parts


def _parse_rhs(text: str, dest: str, line_no: int) -> TacInstruction:
    call = _CALL.match(text)
    if call:
        op, argtext = call.group(1), call.group(2)
        args = tuple(_parse_operand(a, line_no) for a in _split_args(argtext, line_no))
        try:
            return TacInstruction(op=op, dest=dest, args=args)
        except ValueError as exc:
            raise TacSyntaxError(str(exc), line_no) from None
    infix = _INFIX_EXPR.match(text)
    if infix and infix.group(2) in _INFIX_BY_SYMBOL:
        a = _parse_operand(infix.group(1), line_no)
        b = _parse_operand(infix.group(3), line_no)
        return TacInstruction(op=_INFIX_BY_SYMBOL[infix.group(2)], dest=dest, args=(a, b))
    return TacInstruction(op="copy", dest=dest, args=(_parse_operand(text, line_no),))


def _parse_instruction(text: str, line_no: int) -> TacInstruction:
    text = text.strip()
    if text == TRUNCATION_SENTINEL:
        return TacInstruction(op=TRUNCATION_SENTINEL)
    if text.startswith("jump ") or text == "jump":
        operand = text[4:].strip()
        if not operand:
            raise TacSyntaxError("jump needs a target", line_no)
        return TacInstruction(
            op="jump", args=(_parse_operand(operand, line_no, target_position=True),)
        )
    if text.startswith("cjump ") or text == "cjump":
        rest = _split_args(text[5:], line_no)
        if len(rest) != 2:
            raise TacSyntaxError("cjump needs condition and target", line_no)
        cond = _parse_operand(rest[0], line_no)
        target = _parse_operand(rest[1], line_no, target_position=True)
        return TacInstruction(op="cjump", args=(cond, target))
    if "=" in text and not text.startswith("="):
        eq = _find_assignment(text)
        if eq is not None:
            dest, rhs = text[:eq].strip(), text[eq + 1 :].strip()
            if not _IDENT.match(dest):
                raise TacSyntaxError(f"bad destination {dest!r}", line_no)
            if not rhs:
                raise TacSyntaxError("missing right-hand side", line_no)
            return _parse_rhs(rhs, dest, line_no)
    call = _CALL.match(text)
    if call:
        op, argtext = call.group(1), call.group(2)
        args = tuple(_parse_operand(a, line_no) for a in _split_args(argtext, line_no))
        try:
            return TacInstruction(op=op, dest=None, args=args)
        except ValueError as exc:
            raise TacSyntaxError(str(exc), line_no) from None
    raise TacSyntaxError(f"cannot parse instruction {text!r}", line_no)


def _find_assignment(text: str) -> int | None:
    """Index of the assignment '=', skipping '==' comparisons."""
    i = 0
    while i < len(text):
        if text[i] == "=":
            if i + 1 < len(text) and text[i + 1] == "=":
                i += 2
                continue
            if i > 0 and text[i - 1] in "<>!":
                i += 1
                continue
            return i
        i += 1
    return None


def _derive_successors(
    instrs: tuple[TacInstruction, ...], next_label: str | None
) -> tuple[str, ...]:
    """Successor labels implied by the block's control instructions."""
    out: list[str] = []
    for ins in instrs:
        if ins.op == "cjump" and isinstance(ins.args[1], Label):
            out.append(ins.args[1].name)
        elif ins.op == "jump" and isinstance(ins.args[0], Label):
            out.append(ins.args[0].name)
    if instrs and instrs[-1].op not in TERMINAL_OPS:
        if not (instrs[-1].op == "cjump" and len(out) >= 2):
            if next_label is not None:
                out.append(next_label)
    elif not instrs and next_label is not None:
        out.append(next_label)
    return tuple(out)


def parse(text: str) -> TacFunction:
    """Parse rendered three-address code back into a function."""
    labels: list[str] = []
    block_instrs: dict[str, list[TacInstruction]] = {}
    current: str | None = None
    seen: set[str] = set()

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        m = _LABEL_LINE.match(line)
        if m:
            name = m.group(1)
            if name in seen:
                raise TacSyntaxError(f"duplicate label {name!r}", line_no)
            seen.add(name)
            labels.append(name)
            block_instrs[name] = []
            current = name
            continue
        if current is None:
            raise TacSyntaxError("instruction before any label", line_no)
        block_instrs[current].append(_parse_instruction(line, line_no))

    if not labels:
        raise TacSyntaxError("no blocks found")

    blocks: list[TacBlock] = []
    for i, name in enumerate(labels):
        instrs = tuple(block_instrs[name])
        next_label = labels[i + 1] if i + 1 < len(labels) else None
        known = _derive_successors(instrs, next_label)
        # Drop successor labels that do not exist (dangling after truncation).
        filtered = tuple(s for s in known if s in seen)
        blocks.append(TacBlock(label=name, instrs=instrs, successors=filtered))

    return TacFunction(blocks=blocks, entry_label=labels[0])


def instruction_shape(ins: TacInstruction) -> str:
    """Shape key used for instruction-level entropy: op plus operand kinds."""
    kinds = []
    for a in ins.args:
        if isinstance(a, Const):
            kinds.append("CONST")
        elif isinstance(a, Label):
            kinds.append("LABEL")
        else:
            kinds.append("VAR")
    return f"{ins.op}({','.join(kinds)})"

"""Reference evaluators for checking the lifter's semantics.

Two deliberately independent execution routes over the pure arithmetic subset
of the instruction set:

* ``run_stack_program`` executes raw instructions on a concrete operand stack,
  with the arithmetic written inline per the EVM formal semantics.
* ``eval_tac`` executes lifted three-address instructions over a variable
  environment, with the arithmetic written as a separate operator table.

The lifter is considered correct on a straight-line block exactly when both
routes produce bit-identical 256-bit results from the same inputs. Keeping the
two arithmetic implementations textually separate means a slip in one of them
shows up as a disagreement instead of cancelling out.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping

from .disasm import Instruction
from .tac import Const, Label, Operand, TacInstruction, Var

__all__ = [
    "InterpError",
    "StackUnderflow",
    "UnsupportedOpcode",
    "UnsupportedTacOp",
    "UndefinedTacVariable",
    "run_stack_program",
    "eval_tac",
    "operand_value",
    "PURE_STACK_OPS",
    "PURE_VALUE_OPS",
]

_WORD = 1 << 256
_MASK = _WORD - 1
_SIGN_BIT = 1 << 255


class InterpError(Exception):
    """Base class for reference-interpreter failures."""


class StackUnderflow(InterpError):
    """An instruction popped more operands than the stack held."""


class UnsupportedOpcode(InterpError):
    """The stack interpreter only covers the pure arithmetic subset."""


class UnsupportedTacOp(InterpError):
    """The TAC evaluator only covers straight-line pure instructions."""


class UndefinedTacVariable(InterpError):
    """A TAC operand referenced a variable with no binding."""


# Opcode mnemonics the concrete stack interpreter accepts, beyond pure stack
# traffic (PUSH/DUP/SWAP/POP) and JUMPDEST. One entry per value-producing op.
PURE_VALUE_OPS = frozenset(
    {
        "ADD",
        "MUL",
        "SUB",
        "DIV",
        "SDIV",
        "MOD",
        "SMOD",
        "ADDMOD",
        "MULMOD",
        "EXP",
        "SIGNEXTEND",
        "LT",
        "GT",
        "SLT",
        "SGT",
        "EQ",
        "ISZERO",
        "AND",
        "OR",
        "XOR",
        "NOT",
        "BYTE",
        "SHL",
        "SHR",
        "SAR",
    }
)

PURE_STACK_OPS = frozenset({"POP", "JUMPDEST"})


def _sgn(x: int) -> int:
    """Two's-complement read of a 256-bit word (stack-route style)."""
    return x - _WORD if x >> 255 else x


def run_stack_program(instrs: Iterable[Instruction], stack: list[int]) -> list[int]:
    """Execute straight-line instructions on a concrete operand stack.

    ``stack`` is bottom-to-top and is not mutated; the final stack is returned
    in the same orientation. Only pure arithmetic, comparison, bitwise, and
    stack-traffic opcodes are supported; anything else (memory, storage,
    environment, control flow) raises UnsupportedOpcode.
    """
    st = [v & _MASK for v in stack]

    def pop() -> int:
        if not st:
            raise StackUnderflow("stack interpreter ran out of operands")
        return st.pop()

    for ins in instrs:
        op = ins.opcode
        name = op.mnemonic
        if not ins.is_valid:
            raise UnsupportedOpcode(f"invalid instruction at offset {ins.offset:#x}")
        if op.is_push:
            st.append(ins.immediate_value or 0)
        elif op.is_dup:
            n = op.value - 0x7F
            if len(st) < n:
                raise StackUnderflow(f"DUP{n} over {len(st)} operands")
            st.append(st[-n])
        elif op.is_swap:
            n = op.value - 0x8F
            if len(st) < n + 1:
                raise StackUnderflow(f"SWAP{n} over {len(st)} operands")
            st[-1], st[-n - 1] = st[-n - 1], st[-1]
        elif name == "POP":
            pop()
        elif name == "JUMPDEST":
            continue
        elif name == "ADD":
            a, b = pop(), pop()
            st.append((a + b) & _MASK)
        elif name == "MUL":
            a, b = pop(), pop()
            st.append((a * b) & _MASK)
        elif name == "SUB":
            a, b = pop(), pop()
            st.append((a - b) & _MASK)
        elif name == "DIV":
            a, b = pop(), pop()
            st.append(a // b if b else 0)
        elif name == "SDIV":
            a, b = _sgn(pop()), _sgn(pop())
            if b == 0:
                st.append(0)
            else:
                q = abs(a) // abs(b)
                if (a < 0) != (b < 0):
                    q = -q
                st.append(q & _MASK)
        elif name == "MOD":
            a, b = pop(), pop()
            st.append(a % b if b else 0)
        elif name == "SMOD":
            a, b = _sgn(pop()), _sgn(pop())
            if b == 0:
                st.append(0)
            else:
                r = abs(a) % abs(b)
                if a < 0:
                    r = -r
                st.append(r & _MASK)
        elif name == "ADDMOD":
            a, b, n = pop(), pop(), pop()
            st.append((a + b) % n if n else 0)
        elif name == "MULMOD":
            a, b, n = pop(), pop(), pop()
            st.append((a * b) % n if n else 0)
        elif name == "EXP":
            a, e = pop(), pop()
            st.append(pow(a, e, _WORD))
        elif name == "SIGNEXTEND":
            k, x = pop(), pop()
            if k >= 32:
                st.append(x)
            else:
                bit = 8 * k + 7
                if x & (1 << bit):
                    st.append(x | (_MASK ^ ((1 << (bit + 1)) - 1)))
                else:
                    st.append(x & ((1 << (bit + 1)) - 1))
        elif name == "LT":
            a, b = pop(), pop()
            st.append(1 if a < b else 0)
        elif name == "GT":
            a, b = pop(), pop()
            st.append(1 if a > b else 0)
        elif name == "SLT":
            a, b = _sgn(pop()), _sgn(pop())
            st.append(1 if a < b else 0)
        elif name == "SGT":
            a, b = _sgn(pop()), _sgn(pop())
            st.append(1 if a > b else 0)
        elif name == "EQ":
            a, b = pop(), pop()
            st.append(1 if a == b else 0)
        elif name == "ISZERO":
            st.append(1 if pop() == 0 else 0)
        elif name == "AND":
            a, b = pop(), pop()
            st.append(a & b)
        elif name == "OR":
            a, b = pop(), pop()
            st.append(a | b)
        elif name == "XOR":
            a, b = pop(), pop()
            st.append(a ^ b)
        elif name == "NOT":
            st.append(pop() ^ _MASK)
        elif name == "BYTE":
            i, x = pop(), pop()
            st.append((x >> (8 * (31 - i))) & 0xFF if i < 32 else 0)
        elif name == "SHL":
            s, x = pop(), pop()
            st.append((x << s) & _MASK if s < 256 else 0)
        elif name == "SHR":
            s, x = pop(), pop()
            st.append(x >> s if s < 256 else 0)
        elif name == "SAR":
            s, x = pop(), pop()
            if s >= 256:
                st.append(_MASK if x & _SIGN_BIT else 0)
            else:
                st.append((_sgn(x) >> s) & _MASK)
        else:
            raise UnsupportedOpcode(f"{name} is outside the pure arithmetic subset")
        if len(st) > 1024:
            raise InterpError("stack limit exceeded")
    return st


def _signed256(value: int) -> int:
    """Two's-complement read of a 256-bit word (TAC-route style)."""
    return value if value < _SIGN_BIT else value - _WORD


def _wrap(value: int) -> int:
    return value % _WORD


def _tac_div(a: int, b: int) -> int:
    return a // b if b != 0 else 0


def _tac_sdiv(a: int, b: int) -> int:
    sa, sb = _signed256(a), _signed256(b)
    if sb == 0:
        return 0
    quotient = abs(sa) // abs(sb)
    if (sa < 0) ^ (sb < 0):
        quotient = -quotient
    return _wrap(quotient)


def _tac_mod(a: int, b: int) -> int:
    return a % b if b != 0 else 0


def _tac_smod(a: int, b: int) -> int:
    sa, sb = _signed256(a), _signed256(b)
    if sb == 0:
        return 0
    remainder = abs(sa) % abs(sb)
    return _wrap(-remainder if sa < 0 else remainder)


def _tac_signextend(k: int, x: int) -> int:
    if k >= 32:
        return x
    sign_bit = 1 << (8 * k + 7)
    low_mask = (sign_bit << 1) - 1
    if x & sign_bit:
        return _wrap(x | ~low_mask)
    return x & low_mask


def _tac_byte(i: int, x: int) -> int:
    if i >= 32:
        return 0
    return (x >> ((31 - i) * 8)) & 0xFF


def _tac_shl(s: int, x: int) -> int:
    return _wrap(x << s) if s < 256 else 0


def _tac_shr(s: int, x: int) -> int:
    return x >> s if s < 256 else 0


def _tac_sar(s: int, x: int) -> int:
    sx = _signed256(x)
    if s >= 256:
        return _MASK if sx < 0 else 0
    return _wrap(sx >> s)


_TAC_OPS: dict[str, object] = {
    "copy": lambda a: a,
    "add": lambda a, b: _wrap(a + b),
    "mul": lambda a, b: _wrap(a * b),
    "sub": lambda a, b: _wrap(a - b),
    "div": _tac_div,
    "sdiv": _tac_sdiv,
    "mod": _tac_mod,
    "smod": _tac_smod,
    "addmod": lambda a, b, n: (a + b) % n if n != 0 else 0,
    "mulmod": lambda a, b, n: (a * b) % n if n != 0 else 0,
    "exp": lambda a, e: pow(a, e, _WORD),
    "signextend": _tac_signextend,
    "lt": lambda a, b: int(a < b),
    "gt": lambda a, b: int(a > b),
    "slt": lambda a, b: int(_signed256(a) < _signed256(b)),
    "sgt": lambda a, b: int(_signed256(a) > _signed256(b)),
    "eq": lambda a, b: int(a == b),
    "iszero": lambda a: int(a == 0),
    "and": lambda a, b: a & b,
    "or": lambda a, b: a | b,
    "xor": lambda a, b: a ^ b,
    "not": lambda a: _MASK ^ a,
    "byte": _tac_byte,
    "shl": _tac_shl,
    "shr": _tac_shr,
    "sar": _tac_sar,
}


def operand_value(operand: Operand, env: Mapping[str, int]) -> int:
    """Resolve one TAC operand to a concrete 256-bit value."""
    if isinstance(operand, Const):
        return operand.value
    if isinstance(operand, Var):
        try:
            return env[operand.name]
        except KeyError:
            raise UndefinedTacVariable(operand.name) from None
    raise UnsupportedTacOp(f"label operand {operand.name} has no runtime value")


def eval_tac(
    instrs: Iterable[TacInstruction], env: Mapping[str, int]
) -> dict[str, int]:
    """Execute straight-line TAC instructions over a variable environment.

    Returns a new environment containing the inputs plus every destination
    assigned along the way. Only the pure operator table is supported; control
    flow, phi merges, and effectful operations raise UnsupportedTacOp.
    """
    out = {name: value & _MASK for name, value in env.items()}
    for ins in instrs:
        fn = _TAC_OPS.get(ins.op)
        if fn is None:
            raise UnsupportedTacOp(f"{ins.op} is outside the pure operator table")
        args = [operand_value(a, out) for a in ins.args]
        value = fn(*args)
        if ins.dest is None:
            raise UnsupportedTacOp(f"{ins.op} without a destination")
        out[ins.dest] = value & _MASK
    return out

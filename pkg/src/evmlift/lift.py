"""Lift control-flow-graph regions to three-address code.

Destackification runs a symbolic stack per block: PUSH/DUP/SWAP/POP only
shuffle operands and emit nothing, value-producing opcodes emit one
instruction with a fresh temporary, and block-entry stack slots become named
parameters merged across predecessors with phi instructions. Entry parameters
of the lifted function itself stay free: they stand for whatever the caller
(usually the dispatcher) left on the stack.

normalize() then removes dead pure code, collapses copy chains and degenerate
phis, reorders blocks into reverse post-order, renames everything into a
canonical namespace (v0.. temporaries, p<block>_<slot> phi results, L0..
labels), and makes fall-through explicit exactly where block order requires
it. The result is deterministic and normalize is idempotent.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .cfg import (
    ControlFlowGraph,
    EdgeKind,
    FunctionCandidate,
    TerminatorKind,
    analyze_region,
)
from .disasm import Instruction
from .tac import (
    Const,
    Label,
    Operand,
    TacBlock,
    TacFunction,
    TacInstruction,
    TERMINAL_OPS,
    Var,
)

__all__ = ["InconsistentStackDepth", "lift", "normalize", "lift_block_symbolic"]


class InconsistentStackDepth(Exception):
    """A block is entered with conflicting stack depths."""

    def __init__(self, block_id: int, depths: tuple[int, ...]):
        self.block_id = block_id
        self.depths = depths
        super().__init__(f"block {block_id} entered with stack depths {depths}")


# Ops that keep a destination but must never be deleted as dead code.
_EFFECTFUL_WITH_DEST = frozenset(
    {"call", "callcode", "delegatecall", "staticcall", "create", "create2"}
)

_P_NAME = re.compile(r"^p(\d+)_(\d+)$")


class _Names:
    def __init__(self) -> None:
        self.temp = 0
        self.free = 0

    def fresh_temp(self) -> str:
        name = f"t{self.temp}"
        self.temp += 1
        return name

    def fresh_free(self) -> str:
        name = f"u{self.free}"
        self.free += 1
        return name


@dataclass
class _BlockLift:
    instrs: list[TacInstruction]
    exit_stack: list[Operand]
    jump_target: Operand | None
    cond: Operand | None


def _run_block(
    instrs: tuple[Instruction, ...] | list[Instruction],
    entry_stack: list[Operand],
    names: _Names,
) -> _BlockLift:
    """Symbolically execute one block, emitting value and effect instructions.

    Control instructions (JUMP/JUMPI) are not emitted here; their popped
    operands are returned so the caller can attach resolved labels.
    """
    stack = list(entry_stack)
    out: list[TacInstruction] = []

    def pop() -> Operand:
        if stack:
            return stack.pop()
        return Var(names.fresh_free())

    jump_target: Operand | None = None
    cond: Operand | None = None
    for ins in instrs:
        op = ins.opcode
        name = op.mnemonic
        if op.is_push:
            value = ins.immediate_value if ins.immediate is not None else 0
            stack.append(Const(value))
        elif op.is_dup:
            n = op.value - 0x7F
            if len(stack) >= n:
                stack.append(stack[-n])
            else:
                stack.append(Var(names.fresh_free()))
        elif op.is_swap:
            n = op.value - 0x8F
            while len(stack) < n + 1:
                stack.insert(0, Var(names.fresh_free()))
            stack[-1], stack[-n - 1] = stack[-n - 1], stack[-1]
        elif name == "POP":
            pop()
        elif name == "JUMPDEST":
            continue
        elif name == "JUMP":
            jump_target = pop()
        elif name == "JUMPI":
            jump_target = pop()
            cond = pop()
        elif not ins.is_valid:
            out.append(TacInstruction(op="invalid"))
        else:
            args = tuple(pop() for _ in range(op.pops))
            if op.pushes == 1:
                dest = names.fresh_temp()
                out.append(TacInstruction(op=name.lower(), dest=dest, args=args))
                stack.append(Var(dest))
            else:
                out.append(TacInstruction(op=name.lower(), dest=None, args=args))
    return _BlockLift(instrs=out, exit_stack=stack, jump_target=jump_target, cond=cond)


def lift_block_symbolic(
    instrs: list[Instruction], entry_names: list[str]
) -> tuple[list[TacInstruction], list[Operand]]:
    """Lift straight-line instructions over a named entry stack.

    entry_names are bottom-to-top. Returns the emitted instructions and the
    symbolic exit stack.
    """
    names = _Names()
    result = _run_block(instrs, [Var(n) for n in entry_names], names)
    out = list(result.instrs)
    if result.jump_target is not None:
        args: list[Operand] = [result.jump_target]
        if result.cond is not None:
            out.append(TacInstruction(op="cjump", args=(result.cond, result.jump_target)))
        else:
            out.append(TacInstruction(op="jump", args=tuple(args)))
    return out, result.exit_stack


def lift(cfg: ControlFlowGraph, candidate: FunctionCandidate) -> TacFunction:
    """Lift one function candidate's reachable region to three-address code."""
    region = analyze_region(cfg, candidate.entry_block)
    ids = sorted(region.blocks | {candidate.entry_block})
    id_set = set(ids)

    succ_edges: dict[int, list] = {bid: [] for bid in ids}
    pred_edges: dict[int, list] = {bid: [] for bid in ids}
    for e in region.edges:
        if e.src in id_set and e.dst in id_set:
            succ_edges[e.src].append(e)
            pred_edges[e.dst].append(e)

    # Blocks entered with conflicting depths (shared revert stubs and
    # epilogues) keep the common top-aligned suffix the analysis converged on;
    # slots below it surface as free u-variables if the code ever reads them.
    depths = {bid: len(region.entry_stacks.get(bid, ())) for bid in ids}
    names = _Names()
    lifted: dict[int, _BlockLift] = {}
    for bid in ids:
        block = cfg.block(bid)
        entry = [Var(f"p{bid}_{i}") for i in range(depths[bid])]
        lifted[bid] = _run_block(block.instrs, entry, names)

    def edge_dst(bid: int, kind: EdgeKind) -> int | None:
        for e in succ_edges[bid]:
            if e.kind == kind:
                return e.dst
        return None

    blocks: list[TacBlock] = []
    for bid in ids:
        block = cfg.block(bid)
        result = lifted[bid]
        instrs = list(result.instrs)
        successors: list[str] = []

        if block.terminator == TerminatorKind.JUMP:
            dst = edge_dst(bid, EdgeKind.UNCONDITIONAL)
            if dst is not None:
                instrs.append(TacInstruction(op="jump", args=(Label(f"L{dst}"),)))
                successors.append(f"L{dst}")
            else:
                assert result.jump_target is not None
                instrs.append(TacInstruction(op="jump", args=(result.jump_target,)))
        elif block.terminator == TerminatorKind.JUMPI:
            assert result.cond is not None
            taken = edge_dst(bid, EdgeKind.TAKEN)
            if taken is not None:
                target: Operand = Label(f"L{taken}")
                successors.append(f"L{taken}")
            else:
                assert result.jump_target is not None
                target = result.jump_target
            instrs.append(TacInstruction(op="cjump", args=(result.cond, target)))
            not_taken = edge_dst(bid, EdgeKind.NOT_TAKEN)
            if not_taken is not None:
                successors.append(f"L{not_taken}")
        elif block.terminator == TerminatorKind.FALL_THROUGH:
            nxt = edge_dst(bid, EdgeKind.FALL_THROUGH)
            if nxt is not None:
                successors.append(f"L{nxt}")

        blocks.append(
            TacBlock(label=f"L{bid}", instrs=tuple(instrs), successors=tuple(successors))
        )

    # Merge predecessor exit stacks into block-entry parameters.
    entry_id = candidate.entry_block
    final_blocks: list[TacBlock] = []
    for bid, block in zip(ids, blocks):
        if bid == entry_id:
            final_blocks.append(block)
            continue
        preds = sorted({e.src for e in pred_edges[bid]})
        if not preds:
            final_blocks.append(block)
            continue
        depth = depths[bid]
        phis: list[TacInstruction] = []
        for slot in range(depth):
            incoming: list[Operand] = []
            for pred in preds:
                exit_stack = lifted[pred].exit_stack
                if len(exit_stack) < depth:
                    raise InconsistentStackDepth(bid, (depth, len(exit_stack)))
                incoming.append(exit_stack[len(exit_stack) - depth + slot])
            phis.append(
                TacInstruction(op="phi", dest=f"p{bid}_{slot}", args=tuple(incoming))
            )
        final_blocks.append(
            TacBlock(
                label=block.label,
                instrs=tuple(phis) + block.instrs,
                successors=block.successors,
            )
        )

    return TacFunction(
        blocks=final_blocks,
        entry_label=f"L{entry_id}",
        selector=candidate.selector,
    )


# --- normalization -----------------------------------------------------------


def _operand_vars(ins: TacInstruction) -> list[str]:
    return [a.name for a in ins.args if isinstance(a, Var)]


def _substitute_operand(operand: Operand, mapping: dict[str, Operand]) -> Operand:
    seen: set[str] = set()
    while isinstance(operand, Var) and operand.name in mapping:
        if operand.name in seen:
            break
        seen.add(operand.name)
        operand = mapping[operand.name]
    return operand


def _rewrite(ins: TacInstruction, mapping: dict[str, Operand]) -> TacInstruction:
    if not mapping:
        return ins
    new_args = tuple(_substitute_operand(a, mapping) for a in ins.args)
    if new_args == ins.args:
        return ins
    return TacInstruction(op=ins.op, dest=ins.dest, args=new_args)


def _remove_dead_and_copies(blocks: list[TacBlock]) -> list[TacBlock]:
    current = blocks
    while True:
        # Pass 1: drop pure instructions whose destination is never read.
        used: set[str] = set()
        for b in current:
            for ins in b.instrs:
                used.update(_operand_vars(ins))
        changed = False
        pruned: list[TacBlock] = []
        for b in current:
            kept = []
            for ins in b.instrs:
                dead = (
                    ins.dest is not None
                    and ins.dest not in used
                    and ins.op not in _EFFECTFUL_WITH_DEST
                )
                if dead:
                    changed = True
                else:
                    kept.append(ins)
            pruned.append(TacBlock(b.label, tuple(kept), b.successors))
        current = pruned

        # Pass 2: collapse copies and single-valued phis into their sources.
        mapping: dict[str, Operand] = {}
        for b in current:
            for ins in b.instrs:
                if ins.dest is None:
                    continue
                if ins.op == "copy":
                    mapping[ins.dest] = ins.args[0]
                elif ins.op == "phi" and ins.args:
                    first = ins.args[0]
                    if all(a == first for a in ins.args) and first != Var(ins.dest):
                        mapping[ins.dest] = first
        if mapping:
            changed = True
            rewritten: list[TacBlock] = []
            for b in current:
                kept = []
                for ins in b.instrs:
                    if ins.dest is not None and ins.dest in mapping:
                        continue
                    kept.append(_rewrite(ins, mapping))
                rewritten.append(TacBlock(b.label, tuple(kept), b.successors))
            current = rewritten

        if not changed:
            return current


def _rpo_labels(blocks: list[TacBlock], entry: str) -> list[str]:
    by_label = {b.label: b for b in blocks}
    visited = {entry}
    post: list[str] = []
    stack: list[tuple[str, int]] = [(entry, 0)]
    while stack:
        label, idx = stack[-1]
        succs = by_label[label].successors
        if idx < len(succs):
            stack[-1] = (label, idx + 1)
            nxt = succs[idx]
            if nxt in by_label and nxt not in visited:
                visited.add(nxt)
                stack.append((nxt, 0))
        else:
            post.append(label)
            stack.pop()
    order = list(reversed(post))
    order.extend(b.label for b in blocks if b.label not in visited)
    return order


def _fix_fallthrough(blocks: list[TacBlock]) -> list[TacBlock]:
    """Insert or remove trailing jumps so block order carries fall-through."""
    out: list[TacBlock] = []
    for i, block in enumerate(blocks):
        next_label = blocks[i + 1].label if i + 1 < len(blocks) else None
        instrs = list(block.instrs)
        succ = block.successors
        if len(succ) == 1:
            target = succ[0]
            last = instrs[-1] if instrs else None
            if (
                last is not None
                and last.op == "jump"
                and isinstance(last.args[0], Label)
                and last.args[0].name == target
            ):
                if target == next_label:
                    instrs.pop()
            elif last is None or last.op not in TERMINAL_OPS:
                if target != next_label:
                    instrs.append(TacInstruction(op="jump", args=(Label(target),)))
        elif len(succ) == 2:
            last = instrs[-1] if instrs else None
            if (
                last is not None
                and last.op == "jump"
                and isinstance(last.args[0], Label)
                and last.args[0].name == succ[1]
            ):
                if succ[1] == next_label:
                    instrs.pop()
            elif succ[1] != next_label:
                instrs.append(TacInstruction(op="jump", args=(Label(succ[1]),)))
        out.append(TacBlock(block.label, tuple(instrs), succ))
    return out


def _relabel_and_rename(blocks: list[TacBlock], order: list[str]) -> list[TacBlock]:
    by_label = {b.label: b for b in blocks}
    label_map = {old: f"L{i}" for i, old in enumerate(order)}
    id_map: dict[str, str] = {}
    for old, new in label_map.items():
        m = re.match(r"^L(\d+)$", old)
        if m:
            id_map[m.group(1)] = new[1:]

    ordered = [by_label[l] for l in order]

    defined: set[str] = set()
    phi_rename: dict[str, str] = {}
    for new_id, block in enumerate(ordered):
        slot = 0
        for ins in block.instrs:
            if ins.dest is None:
                continue
            defined.add(ins.dest)
            if ins.op == "phi":
                phi_rename[ins.dest] = f"p{new_id}_{slot}"
                slot += 1

    temp_rename: dict[str, str] = {}
    counter = 0
    for block in ordered:
        for ins in block.instrs:
            occurrences = ([ins.dest] if ins.dest is not None else []) + _operand_vars(ins)
            for name in occurrences:
                if name in defined and name not in phi_rename and name not in temp_rename:
                    temp_rename[name] = f"v{counter}"
                    counter += 1

    free_rename: dict[str, str] = {}
    for block in ordered:
        for ins in block.instrs:
            for name in _operand_vars(ins):
                if name in defined or name in free_rename:
                    continue
                m = _P_NAME.match(name)
                if m and m.group(1) in id_map:
                    free_rename[name] = f"p{id_map[m.group(1)]}_{m.group(2)}"

    rename = {**phi_rename, **temp_rename, **free_rename}

    def rewrite_operand(a: Operand) -> Operand:
        if isinstance(a, Var) and a.name in rename:
            return Var(rename[a.name])
        if isinstance(a, Label) and a.name in label_map:
            return Label(label_map[a.name])
        return a

    out: list[TacBlock] = []
    for block in ordered:
        instrs = tuple(
            TacInstruction(
                op=ins.op,
                dest=rename.get(ins.dest, ins.dest) if ins.dest is not None else None,
                args=tuple(rewrite_operand(a) for a in ins.args),
            )
            for ins in block.instrs
        )
        succ = tuple(label_map.get(s, s) for s in block.successors)
        out.append(TacBlock(label_map[block.label], instrs, succ))
    return out


def normalize(fn: TacFunction) -> TacFunction:
    """Canonicalize a lifted function; idempotent and deterministic."""
    blocks = _remove_dead_and_copies(list(fn.blocks))
    order = _rpo_labels(blocks, fn.entry_label)
    by_label = {b.label: b for b in blocks}
    ordered = [by_label[l] for l in order]
    ordered = _fix_fallthrough(ordered)
    renamed = _relabel_and_rename(ordered, [b.label for b in ordered])
    return TacFunction(
        blocks=renamed,
        entry_label="L0",
        selector=fn.selector,
        signature=fn.signature,
        visibility=fn.visibility,
    )

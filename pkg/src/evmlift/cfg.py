"""Control-flow recovery over disassembled EVM bytecode.

Blocks are built by the classic leader rule (offset 0, every JUMPDEST, and the
instruction after every terminator). Jump targets are then resolved by a
worklist fixpoint over abstract stacks whose elements are either a known
256-bit constant or Unknown. Constants survive PUSH, DUP, SWAP, POP, AND and
wrapping ADD; every other operation produces Unknown. This is exactly enough
to resolve the jump idioms solc emits (pushed JUMPDEST addresses threaded
through stack shuffles and masked arithmetic) without a full evaluator.

Function discovery walks the selector-dispatch chain: blocks that compare the
first four calldata bytes against small constants and branch. EQ compares
yield one candidate per selector; LT/GT compares are binary-search split
nodes and both branches continue the chain.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

from .disasm import CodeLayout, EmptyInput, Instruction
from .opcodes import Op

__all__ = [
    "TerminatorKind",
    "EdgeKind",
    "AbstractValue",
    "BasicBlock",
    "Edge",
    "ControlFlowGraph",
    "FunctionCandidate",
    "NoDispatcherFound",
    "FixpointBudgetExceeded",
    "RegionAnalysis",
    "build_blocks",
    "resolve_jumps",
    "analyze_region",
    "detect_dispatcher",
    "dispatcher_blocks",
]

log = logging.getLogger(__name__)

MASK256 = (1 << 256) - 1
STACK_LIMIT = 1024

# One fixpoint visit per (block, possible stack height) is a generous ceiling;
# exceeding it means the join is not converging.
_ITERATIONS_PER_BLOCK = 1024


class NoDispatcherFound(Exception):
    """The bytecode has no recognizable function dispatcher."""


class FixpointBudgetExceeded(Exception):
    """The stack analysis failed to converge within its iteration budget."""


class TerminatorKind(enum.Enum):
    JUMP = "jump"
    JUMPI = "jumpi"
    STOP = "stop"
    RETURN = "return"
    REVERT = "revert"
    INVALID = "invalid"
    SELFDESTRUCT = "selfdestruct"
    FALL_THROUGH = "fall_through"


class EdgeKind(enum.Enum):
    TAKEN = "taken"
    NOT_TAKEN = "not_taken"
    UNCONDITIONAL = "unconditional"
    FALL_THROUGH = "fall_through"


@dataclass(frozen=True)
class AbstractValue:
    """Flat lattice element: a known constant or Unknown (value None)."""

    value: int | None
    provenance: int | None = None

    @property
    def is_const(self) -> bool:
        return self.value is not None

    @staticmethod
    def const(value: int, provenance: int | None = None) -> "AbstractValue":
        return AbstractValue(value & MASK256, provenance)

    @staticmethod
    def unknown() -> "AbstractValue":
        return AbstractValue(None, None)


_UNKNOWN = AbstractValue.unknown()

_TERMINATOR_KINDS = {
    "JUMP": TerminatorKind.JUMP,
    "JUMPI": TerminatorKind.JUMPI,
    "STOP": TerminatorKind.STOP,
    "RETURN": TerminatorKind.RETURN,
    "REVERT": TerminatorKind.REVERT,
    "INVALID": TerminatorKind.INVALID,
    "SELFDESTRUCT": TerminatorKind.SELFDESTRUCT,
}


@dataclass(frozen=True)
class BasicBlock:
    """Maximal straight-line instruction run. end_offset is exclusive."""

    id: int
    start_offset: int
    end_offset: int
    instrs: tuple[Instruction, ...]
    terminator: TerminatorKind

    @property
    def starts_with_jumpdest(self) -> bool:
        return self.instrs[0].mnemonic == "JUMPDEST"


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    kind: EdgeKind


@dataclass
class ControlFlowGraph:
    blocks: list[BasicBlock]
    edges: list[Edge]
    unresolved: list[int]
    entry_stacks: dict[int, tuple[AbstractValue, ...]]
    depth_conflicts: dict[int, tuple[int, ...]]
    layout: CodeLayout | None = None
    _by_id: dict[int, BasicBlock] = field(default_factory=dict, repr=False)
    _succ: dict[int, list[Edge]] = field(default_factory=dict, repr=False)
    _pred: dict[int, list[Edge]] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        self._by_id = {b.id: b for b in self.blocks}
        self._succ = {b.id: [] for b in self.blocks}
        self._pred = {b.id: [] for b in self.blocks}
        for e in self.edges:
            self._succ[e.src].append(e)
            self._pred[e.dst].append(e)

    def block(self, block_id: int) -> BasicBlock:
        return self._by_id[block_id]

    def block_at_offset(self, offset: int) -> BasicBlock | None:
        for b in self.blocks:
            if b.start_offset <= offset < b.end_offset:
                return b
        return None

    def successors(self, block_id: int) -> list[Edge]:
        return list(self._succ.get(block_id, ()))

    def predecessors(self, block_id: int) -> list[Edge]:
        return list(self._pred.get(block_id, ()))

    def entry_depth(self, block_id: int) -> int | None:
        stack = self.entry_stacks.get(block_id)
        return None if stack is None else len(stack)

    def reachable_from(self, block_id: int) -> frozenset[int]:
        seen = {block_id}
        frontier = [block_id]
        while frontier:
            cur = frontier.pop()
            for e in self._succ.get(cur, ()):
                if e.dst not in seen:
                    seen.add(e.dst)
                    frontier.append(e.dst)
        return frozenset(seen)

    def to_dot(self) -> str:
        styles = {
            EdgeKind.TAKEN: ' [label="taken"]',
            EdgeKind.NOT_TAKEN: ' [label="not-taken",style=dashed]',
            EdgeKind.UNCONDITIONAL: "",
            EdgeKind.FALL_THROUGH: " [style=dotted]",
        }
        lines = ["digraph cfg {", "  node [shape=box,fontname=monospace];"]
        for b in self.blocks:
            label = (
                f"B{b.id}\\n0x{b.start_offset:04x}..0x{b.end_offset:04x}"
                f"\\n{b.terminator.value}"
            )
            attrs = f'label="{label}"'
            if b.id in self.unresolved:
                attrs += ",color=red"
            lines.append(f"  b{b.id} [{attrs}];")
        for e in self.edges:
            lines.append(f"  b{e.src} -> b{e.dst}{styles[e.kind]};")
        lines.append("}")
        return "\n".join(lines) + "\n"

    def to_json_dict(self) -> dict:
        return {
            "blocks": [
                {
                    "id": b.id,
                    "start_offset": b.start_offset,
                    "end_offset": b.end_offset,
                    "terminator": b.terminator.value,
                    "instructions": len(b.instrs),
                }
                for b in self.blocks
            ],
            "edges": [
                {"src": e.src, "dst": e.dst, "kind": e.kind.value} for e in self.edges
            ],
            "unresolved": list(self.unresolved),
            "entry_depths": {
                str(bid): len(stack) for bid, stack in sorted(self.entry_stacks.items())
            },
        }


@dataclass(frozen=True)
class FunctionCandidate:
    selector: bytes | None
    entry_block: int
    reachable_blocks: frozenset[int]
    is_payable_guess: bool

    @property
    def selector_hex(self) -> str | None:
        return self.selector.hex() if self.selector is not None else None


def _is_block_end(ins: Instruction) -> bool:
    return ins.opcode.is_terminator or not ins.is_valid


def build_blocks(
    instrs: list[Instruction], layout: CodeLayout | None = None
) -> list[BasicBlock]:
    """Partition executable instructions into basic blocks."""
    code_end = layout.code_end if layout is not None else None
    body = [i for i in instrs if code_end is None or i.offset < code_end]
    if not body:
        raise EmptyInput("no executable instructions before the metadata trailer")

    leaders = {body[0].offset}
    for ins in body:
        if ins.mnemonic == "JUMPDEST":
            leaders.add(ins.offset)
        if _is_block_end(ins):
            leaders.add(ins.end_offset)

    blocks: list[BasicBlock] = []
    current: list[Instruction] = []
    for ins in body:
        if ins.offset in leaders and current:
            blocks.append(_make_block(len(blocks), current))
            current = []
        current.append(ins)
    if current:
        blocks.append(_make_block(len(blocks), current))
    return blocks


def _make_block(block_id: int, instrs: list[Instruction]) -> BasicBlock:
    last = instrs[-1]
    if not last.is_valid:
        kind = TerminatorKind.INVALID
    else:
        kind = _TERMINATOR_KINDS.get(last.mnemonic, TerminatorKind.FALL_THROUGH)
    return BasicBlock(
        id=block_id,
        start_offset=instrs[0].offset,
        end_offset=last.end_offset,
        instrs=tuple(instrs),
        terminator=kind,
    )


def _join_values(a: AbstractValue, b: AbstractValue) -> AbstractValue:
    if a == b:
        return a
    if a.value is not None and a.value == b.value:
        return AbstractValue(a.value, None)
    return _UNKNOWN


def _join_stacks(
    a: tuple[AbstractValue, ...], b: tuple[AbstractValue, ...]
) -> tuple[tuple[AbstractValue, ...], bool]:
    """Join two entry stacks; returns (result, depth_conflict)."""
    conflict = len(a) != len(b)
    depth = min(len(a), len(b))
    if depth == 0:
        return (), conflict
    sa, sb = a[-depth:], b[-depth:]
    return tuple(_join_values(x, y) for x, y in zip(sa, sb)), conflict


def _transfer(
    block: BasicBlock, entry: tuple[AbstractValue, ...]
) -> tuple[list[AbstractValue], AbstractValue | None]:
    """Abstractly execute a block; returns (exit stack, jump target if any)."""
    stack = list(entry)

    def pop() -> AbstractValue:
        return stack.pop() if stack else _UNKNOWN

    target: AbstractValue | None = None
    for ins in block.instrs:
        op = ins.opcode
        name = op.mnemonic
        if op.is_push:
            value = ins.immediate_value if ins.immediate is not None else 0
            stack.append(AbstractValue.const(value, ins.offset))
        elif op.is_dup:
            n = op.value - 0x7F
            stack.append(stack[-n] if len(stack) >= n else _UNKNOWN)
        elif op.is_swap:
            n = op.value - 0x8F
            while len(stack) < n + 1:
                stack.insert(0, _UNKNOWN)
            stack[-1], stack[-n - 1] = stack[-n - 1], stack[-1]
        elif name == "POP":
            pop()
        elif name == "AND":
            a, b = pop(), pop()
            if a.is_const and b.is_const:
                stack.append(AbstractValue.const(a.value & b.value))
            else:
                stack.append(_UNKNOWN)
        elif name == "ADD":
            a, b = pop(), pop()
            if a.is_const and b.is_const:
                stack.append(AbstractValue.const(a.value + b.value))
            else:
                stack.append(_UNKNOWN)
        elif name == "JUMP":
            target = pop()
        elif name == "JUMPI":
            target = pop()
            pop()  # condition
        else:
            for _ in range(op.pops):
                pop()
            for _ in range(op.pushes):
                stack.append(_UNKNOWN)
        if len(stack) > STACK_LIMIT:
            del stack[: len(stack) - STACK_LIMIT]
    return stack, target


@dataclass
class RegionAnalysis:
    """Result of running the stack analysis from one entry block."""

    entry_stacks: dict[int, tuple[AbstractValue, ...]]
    edges: list[Edge]
    unresolved: list[int]
    depth_conflicts: dict[int, tuple[int, ...]]

    @property
    def blocks(self) -> frozenset[int]:
        return frozenset(self.entry_stacks)


def _analyze(
    blocks: list[BasicBlock],
    entry_id: int,
    initial_stack: tuple[AbstractValue, ...],
    static_unreached: bool,
) -> RegionAnalysis:
    """Worklist fixpoint from entry_id, then a deterministic edge pass.

    With static_unreached=True, fall-through and not-taken edges are emitted
    even for blocks the analysis never reached, and their unprovable jumps
    count as unresolved; with False, unreached blocks are omitted entirely
    (used for per-function regions).
    """
    by_start = {b.start_offset: b for b in blocks}
    next_block = {
        blocks[i].id: blocks[i + 1] for i in range(len(blocks) - 1)
        if blocks[i + 1].start_offset == blocks[i].end_offset
    }
    jumpdests = {b.start_offset for b in blocks if b.starts_with_jumpdest}
    by_id = {b.id: b for b in blocks}

    entry_stacks: dict[int, tuple[AbstractValue, ...]] = {entry_id: initial_stack}
    depth_conflicts: dict[int, set[int]] = {}
    budget = len(blocks) * _ITERATIONS_PER_BLOCK
    spent = 0
    worklist: list[int] = [entry_id]

    def jump_successor(value: AbstractValue | None) -> BasicBlock | None:
        if value is None or not value.is_const:
            return None
        if value.value in jumpdests:
            return by_start[value.value]
        return None

    while worklist:
        spent += 1
        if spent > budget:
            raise FixpointBudgetExceeded(
                f"stack analysis did not converge after {budget} block visits"
            )
        bid = worklist.pop()
        block = by_id[bid]
        exit_stack, target = _transfer(block, entry_stacks[bid])

        succs: list[BasicBlock] = []
        if block.terminator == TerminatorKind.JUMP:
            dst = jump_successor(target)
            if dst is not None:
                succs.append(dst)
        elif block.terminator == TerminatorKind.JUMPI:
            dst = jump_successor(target)
            if dst is not None:
                succs.append(dst)
            nxt = next_block.get(bid)
            if nxt is not None:
                succs.append(nxt)
        elif block.terminator == TerminatorKind.FALL_THROUGH:
            nxt = next_block.get(bid)
            if nxt is not None:
                succs.append(nxt)

        out = tuple(exit_stack)
        for succ in succs:
            existing = entry_stacks.get(succ.id)
            if existing is None:
                entry_stacks[succ.id] = out
                worklist.append(succ.id)
                continue
            joined, conflict = _join_stacks(existing, out)
            if conflict:
                depth_conflicts.setdefault(succ.id, set()).update(
                    (len(existing), len(out))
                )
            if joined != existing:
                entry_stacks[succ.id] = joined
                worklist.append(succ.id)

    # Deterministic final pass with the converged stacks.
    edges: list[Edge] = []
    unresolved: list[int] = []
    for block in blocks:
        reached = block.id in entry_stacks
        if not reached and not static_unreached:
            continue
        entry = entry_stacks.get(block.id, ())
        _, target = _transfer(block, entry)
        nxt = next_block.get(block.id)
        if block.terminator == TerminatorKind.JUMP:
            dst = jump_successor(target)
            if dst is not None:
                edges.append(Edge(block.id, dst.id, EdgeKind.UNCONDITIONAL))
            else:
                unresolved.append(block.id)
        elif block.terminator == TerminatorKind.JUMPI:
            dst = jump_successor(target)
            if dst is not None:
                edges.append(Edge(block.id, dst.id, EdgeKind.TAKEN))
            else:
                unresolved.append(block.id)
            if nxt is not None and (static_unreached or nxt.id in entry_stacks):
                edges.append(Edge(block.id, nxt.id, EdgeKind.NOT_TAKEN))
        elif block.terminator == TerminatorKind.FALL_THROUGH:
            if nxt is not None and (static_unreached or nxt.id in entry_stacks):
                edges.append(Edge(block.id, nxt.id, EdgeKind.FALL_THROUGH))

    return RegionAnalysis(
        entry_stacks=entry_stacks,
        edges=edges,
        unresolved=unresolved,
        depth_conflicts={k: tuple(sorted(v)) for k, v in sorted(depth_conflicts.items())},
    )


def resolve_jumps(
    blocks: list[BasicBlock], layout: CodeLayout | None = None
) -> ControlFlowGraph:
    """Resolve jump targets by abstract interpretation and build the graph."""
    if not blocks:
        raise EmptyInput("cannot build a control-flow graph from zero blocks")
    analysis = _analyze(blocks, blocks[0].id, (), static_unreached=True)
    return ControlFlowGraph(
        blocks=list(blocks),
        edges=analysis.edges,
        unresolved=analysis.unresolved,
        entry_stacks=analysis.entry_stacks,
        depth_conflicts=analysis.depth_conflicts,
        layout=layout,
    )


def analyze_region(cfg: ControlFlowGraph, entry_block: int) -> RegionAnalysis:
    """Re-run the stack analysis seeded at one function entry.

    The entry starts from an opaque stack of its globally observed depth, so
    constants pushed inside the region (internal-call return addresses in
    particular) stay constant where the whole-program join had to merge them
    across callers. Jumps a single function leaves unresolved are genuinely
    ambiguous within that function.
    """
    depth = len(cfg.entry_stacks.get(entry_block, ()))
    initial = tuple(_UNKNOWN for _ in range(depth))
    return _analyze(cfg.blocks, entry_block, initial, static_unreached=False)


# --- dispatcher discovery ---------------------------------------------------

_COMPARE_EQ = {"EQ"}
_COMPARE_SPLIT = {"LT", "GT", "SLT", "SGT"}


def _has_solc_preamble(block: BasicBlock) -> bool:
    ins = block.instrs
    if len(ins) < 3:
        return False
    return (
        ins[0].opcode.is_push
        and ins[0].immediate_value in (0x80, 0x60)
        and ins[1].opcode.is_push
        and ins[1].immediate_value == 0x40
        and ins[2].mnemonic == "MSTORE"
    )


def _classify_compare(block: BasicBlock) -> tuple[str, bytes | None] | None:
    """Recognize a dispatcher compare block.

    Returns ("eq", selector) or ("split", None), or None when the block is not
    a compare-and-branch on a small constant.
    """
    if block.terminator != TerminatorKind.JUMPI:
        return None
    compare_kind: str | None = None
    selector: bytes | None = None
    last_small_push: bytes | None = None
    for ins in block.instrs[:-1]:
        if ins.opcode.is_push and ins.immediate is not None and 1 <= len(ins.immediate) <= 4:
            last_small_push = ins.immediate
        elif ins.mnemonic in _COMPARE_EQ:
            if last_small_push is not None:
                compare_kind = "eq"
                selector = last_small_push.rjust(4, b"\x00")
        elif ins.mnemonic in _COMPARE_SPLIT:
            if last_small_push is not None:
                compare_kind = "split"
                selector = None
    if compare_kind is None:
        return None
    return compare_kind, selector


@dataclass
class _DispatchWalk:
    chain: list[int]
    candidates: list[tuple[bytes, int]]
    miss_entry: int | None
    preamble_ok: bool
    hoisted_guard: bool


def _edge_dst(cfg: ControlFlowGraph, block_id: int, kind: EdgeKind) -> int | None:
    for e in cfg.successors(block_id):
        if e.kind == kind:
            return e.dst
    return None


def _walk_dispatcher(cfg: ControlFlowGraph) -> _DispatchWalk:
    entry = cfg.blocks[0]
    preamble_ok = _has_solc_preamble(entry)

    # The first compare block is the entry itself or a short hop away: past a
    # separate preamble block, or past a hoisted CALLVALUE guard whose happy
    # path is the taken edge of a non-compare JUMPI.
    start = entry.id
    hops = 0
    hoisted_guard = False
    while _classify_compare(cfg.block(start)) is None and hops < 4:
        nxt = _edge_dst(cfg, start, EdgeKind.FALL_THROUGH) or _edge_dst(
            cfg, start, EdgeKind.UNCONDITIONAL
        )
        if nxt is None and cfg.block(start).terminator == TerminatorKind.JUMPI:
            nxt = _edge_dst(cfg, start, EdgeKind.TAKEN)
            names = [i.mnemonic for i in cfg.block(start).instrs]
            if "CALLVALUE" in names and "ISZERO" in names:
                hoisted_guard = True
        if nxt is None:
            break
        start = nxt
        hops += 1

    chain: list[int] = []
    candidates: list[tuple[bytes, int]] = []
    if _classify_compare(cfg.block(start)) is None:
        return _DispatchWalk(chain, candidates, None, preamble_ok, hoisted_guard)

    queue = [start]
    visited: set[int] = set()
    while queue:
        bid = queue.pop(0)
        if bid in visited:
            continue
        visited.add(bid)
        shape = _classify_compare(cfg.block(bid))
        if shape is None:
            continue
        chain.append(bid)
        kind, selector = shape
        taken = _edge_dst(cfg, bid, EdgeKind.TAKEN)
        not_taken = _edge_dst(cfg, bid, EdgeKind.NOT_TAKEN)
        if kind == "eq":
            if selector is not None and taken is not None:
                candidates.append((selector, taken))
            if not_taken is not None:
                queue.append(not_taken)
        else:
            if taken is not None:
                queue.append(taken)
            if not_taken is not None:
                queue.append(not_taken)

    chain_set = set(chain)
    miss: int | None = None
    cursor: int | None = start
    guard = 0
    while cursor is not None and guard <= len(chain) + 4:
        guard += 1
        if cursor not in chain_set:
            miss = cursor
            break
        cursor = _edge_dst(cfg, cursor, EdgeKind.NOT_TAKEN)
    return _DispatchWalk(chain, candidates, miss, preamble_ok, hoisted_guard)


def _guess_payable(cfg: ControlFlowGraph, entry_block: int) -> bool:
    """Heuristic: a CALLVALUE/ISZERO guard near the entry means non-payable."""
    bid = entry_block
    for _ in range(3):
        block = cfg.block(bid)
        names = [i.mnemonic for i in block.instrs]
        if "CALLVALUE" in names and "ISZERO" in names:
            return False
        succs = cfg.successors(bid)
        if len(succs) != 1:
            break
        bid = succs[0].dst
    return True


def detect_dispatcher(cfg: ControlFlowGraph) -> list[FunctionCandidate]:
    """Recover function entry points from the selector-dispatch chain.

    Returns one candidate per recovered selector plus a final selector-less
    candidate for the dispatch-miss (fallback) path. Raises NoDispatcherFound
    when the code has neither a compare chain nor a recognizable runtime
    preamble.
    """
    walk = _walk_dispatcher(cfg)

    def region_of(entry: int) -> frozenset[int]:
        return analyze_region(cfg, entry).blocks

    def payable_guess(entry: int) -> bool:
        if walk.hoisted_guard:
            return False
        return _guess_payable(cfg, entry)

    if not walk.candidates:
        if walk.preamble_ok:
            entry = cfg.blocks[0].id
            fallback_entry = walk.miss_entry if walk.miss_entry is not None else entry
            return [
                FunctionCandidate(
                    selector=None,
                    entry_block=fallback_entry,
                    reachable_blocks=region_of(fallback_entry),
                    is_payable_guess=payable_guess(fallback_entry),
                )
            ]
        raise NoDispatcherFound("no selector compare chain and no runtime preamble")

    seen_selectors: set[bytes] = set()
    claimed_entries: dict[int, bytes] = {}
    out: list[FunctionCandidate] = []
    for selector, entry in walk.candidates:
        if selector in seen_selectors:
            log.warning("duplicate selector 0x%s in dispatcher, keeping first", selector.hex())
            continue
        if entry in claimed_entries:
            log.warning(
                "selector 0x%s claims entry block %d already owned by 0x%s; dropped",
                selector.hex(),
                entry,
                claimed_entries[entry].hex(),
            )
            continue
        seen_selectors.add(selector)
        claimed_entries[entry] = selector
        out.append(
            FunctionCandidate(
                selector=selector,
                entry_block=entry,
                reachable_blocks=region_of(entry),
                is_payable_guess=payable_guess(entry),
            )
        )

    if walk.miss_entry is not None:
        out.append(
            FunctionCandidate(
                selector=None,
                entry_block=walk.miss_entry,
                reachable_blocks=region_of(walk.miss_entry),
                is_payable_guess=payable_guess(walk.miss_entry),
            )
        )
    return out


def dispatcher_blocks(cfg: ControlFlowGraph) -> frozenset[int]:
    """Ids of the selector compare-chain blocks (the dispatcher region)."""
    return frozenset(_walk_dispatcher(cfg).chain)

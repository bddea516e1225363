"""Build paired TAC and Solidity records from verified contract bundles.

A bundle directory holds one contract per subdirectory: the flattened source,
the runtime bytecode as hex, and compiler metadata. The builder lifts every
dispatcher candidate to normalized TAC, extracts function sources with a
lexical scanner, and matches the two sides by selector: the keccak-256 hash of
each source function's canonical signature against the selectors the
dispatcher analysis recovered. Matched pairs become JSONL records; filtering
drops unparseable TAC, over-budget texts, and exact duplicates.

Malformed bundles and functions that fail to lift are skipped with a logged
reason; they never abort a run.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
import re
from dataclasses import asdict, dataclass
from pathlib import Path

from .bridge import TOKEN_BUDGET, count_tokens
from .cfg import (
    NoDispatcherFound,
    build_blocks,
    detect_dispatcher,
    resolve_jumps,
)
from .disasm import Bytecode, DisasmError, EmptyInput, disassemble, parse_hex, strip_metadata
from .keccak import selector_hex
from .lift import InconsistentStackDepth, lift, normalize
from .tac import TacSyntaxError, parse, render

__all__ = [
    "VerifiedContract",
    "SourceFunction",
    "PairRecord",
    "FilterReport",
    "ingest",
    "extract_function_sources",
    "canonical_signature",
    "build_pairs",
    "filter_and_dedup",
    "write_jsonl",
    "read_jsonl",
    "split_holdout",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class VerifiedContract:
    address: str
    source: str
    runtime_bytecode: Bytecode
    compiler_version: str
    optimizer_enabled: bool
    optimizer_runs: int


@dataclass(frozen=True)
class SourceFunction:
    signature: str
    visibility: str
    text: str


@dataclass(frozen=True)
class PairRecord:
    contract_address: str
    selector: str | None
    signature: str | None
    visibility: str | None
    tac: str
    solidity: str | None
    tac_tokens: int
    sol_tokens: int
    compiler_version: str


@dataclass
class FilterReport:
    total: int = 0
    kept: int = 0
    dropped_parse: int = 0
    dropped_length: int = 0
    dropped_duplicate: int = 0


def ingest(directory: str | Path) -> list[VerifiedContract]:
    """Load contract bundles; skip malformed ones with a logged reason."""
    root = Path(directory)
    contracts: list[VerifiedContract] = []
    if not root.is_dir():
        raise EmptyInput(f"{root} is not a directory")
    for entry in sorted(root.iterdir()):
        if not entry.is_dir():
            continue
        try:
            source = (entry / "source.sol").read_text(encoding="utf-8")
            runtime = parse_hex((entry / "runtime.hex").read_text())
            meta = json.loads((entry / "meta.json").read_text(encoding="utf-8"))
            compiler_version = meta["compiler_version"]
            optimizer = meta.get("optimizer", {})
            if not isinstance(compiler_version, str) or not compiler_version:
                raise ValueError("compiler_version must be a non-empty string")
        except (OSError, ValueError, KeyError, DisasmError) as exc:
            log.warning("skipping bundle %s: %s", entry.name, exc)
            continue
        contracts.append(
            VerifiedContract(
                address=entry.name,
                source=source,
                runtime_bytecode=runtime,
                compiler_version=compiler_version,
                optimizer_enabled=bool(optimizer.get("enabled", False)),
                optimizer_runs=int(optimizer.get("runs", 0)),
            )
        )
    if not contracts:
        raise EmptyInput(f"no valid contract bundles under {root}")
    return contracts


_LOCATION_WORDS = frozenset({"memory", "storage", "calldata", "payable"})
_VISIBILITY_WORDS = ("public", "external", "internal", "private")
_IDENT = r"[A-Za-z_$][A-Za-z0-9_$]*"
_FUNCTION_RE = re.compile(rf"\bfunction\s+({_IDENT})\s*\(")


def _normalize_type(raw: str) -> str:
    """Canonicalize one parameter's type: drop location words and the name."""
    tokens = [t for t in raw.split() if t not in _LOCATION_WORDS]
    if len(tokens) >= 2 and re.fullmatch(_IDENT, tokens[-1]):
        tokens = tokens[:-1]
    text = "".join(tokens)
    text = re.sub(r"\buint\b(?!\d)", "uint256", text)
    text = re.sub(r"(?<![a-zA-Z0-9_])int\b(?!\d)", "int256", text)
    text = re.sub(r"\bbyte\b(?!s)", "bytes1", text)
    return text


def _split_top_level(params: str) -> list[str]:
    out: list[str] = []
    depth = 0
    cur: list[str] = []
    for ch in params:
        if ch == "," and depth == 0:
            out.append("".join(cur).strip())
            cur = []
            continue
        if ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
        cur.append(ch)
    tail = "".join(cur).strip()
    if tail:
        out.append(tail)
    return out


def canonical_signature(name: str, params: str) -> str:
    """Build the selector-hashable signature from a raw parameter list."""
    types = [_normalize_type(p) for p in _split_top_level(params)]
    return f"{name}({','.join(types)})"


def _strip_comments_and_strings(source: str) -> str:
    """Blank out comments and string literals, preserving offsets and newlines."""
    out = list(source)
    i, n = 0, len(source)
    while i < n:
        ch = source[i]
        if ch == "/" and i + 1 < n and source[i + 1] == "/":
            j = source.find("\n", i)
            j = n if j == -1 else j
            for k in range(i, j):
                out[k] = " "
            i = j
        elif ch == "/" and i + 1 < n and source[i + 1] == "*":
            j = source.find("*/", i + 2)
            j = n if j == -1 else j + 2
            for k in range(i, j):
                if out[k] != "\n":
                    out[k] = " "
            i = j
        elif ch in ("'", '"'):
            quote = ch
            j = i + 1
            while j < n and source[j] != quote:
                j += 2 if source[j] == "\\" else 1
            j = min(j + 1, n)
            for k in range(i, j):
                out[k] = " "
            i = j
        else:
            i += 1
    return "".join(out)


def _matching_bracket(text: str, start: int, open_ch: str, close_ch: str) -> int:
    """Index just past the bracket closing the one at ``start``; -1 if none."""
    depth = 0
    for i in range(start, len(text)):
        if text[i] == open_ch:
            depth += 1
        elif text[i] == close_ch:
            depth -= 1
            if depth == 0:
                return i + 1
    return -1


def extract_function_sources(source: str) -> list[SourceFunction]:
    """Scan source text for function definitions with bodies.

    The scanner is lexical: comments and string literals are blanked first,
    then each `function name(...)` header is captured with its balanced-brace
    body. Bodyless declarations (interfaces, abstract signatures) are skipped.
    Visibility defaults to public when no keyword appears.
    """
    blanked = _strip_comments_and_strings(source)
    out: list[SourceFunction] = []
    for m in _FUNCTION_RE.finditer(blanked):
        name = m.group(1)
        paren_open = m.end() - 1
        paren_close = _matching_bracket(blanked, paren_open, "(", ")")
        if paren_close == -1:
            log.warning("unbalanced parameter list for function %s; skipped", name)
            continue
        params = blanked[paren_open + 1 : paren_close - 1]
        brace = blanked.find("{", paren_close)
        semi = blanked.find(";", paren_close)
        if brace == -1 or (semi != -1 and semi < brace):
            continue
        body_end = _matching_bracket(blanked, brace, "{", "}")
        if body_end == -1:
            log.warning("unbalanced body for function %s; skipped", name)
            continue
        modifiers = blanked[paren_close:brace]
        visibility = "public"
        for word in _VISIBILITY_WORDS:
            if re.search(rf"\b{word}\b", modifiers):
                visibility = word
                break
        out.append(
            SourceFunction(
                signature=canonical_signature(name, params),
                visibility=visibility,
                text=source[m.start() : body_end],
            )
        )
    return out


def _lift_contract(contract: VerifiedContract) -> list[tuple[str | None, str]]:
    """Lift every dispatcher candidate; returns (selector_hex, tac_text) rows."""
    instrs = disassemble(contract.runtime_bytecode)
    layout = strip_metadata(contract.runtime_bytecode)
    cfg = resolve_jumps(build_blocks(instrs, layout), layout)
    candidates = detect_dispatcher(cfg)
    rows: list[tuple[str | None, str]] = []
    for candidate in candidates:
        try:
            text = render(normalize(lift(cfg, candidate)))
        except InconsistentStackDepth as exc:
            log.warning(
                "%s: candidate %s failed to lift: %s",
                contract.address,
                candidate.selector_hex or "fallback",
                exc,
            )
            continue
        rows.append((candidate.selector_hex, text))
    return rows


def build_pairs(
    contracts: list[VerifiedContract], keep_unmatched: bool = False
) -> list[PairRecord]:
    """Match lifted candidates to extracted source functions by selector.

    With keep_unmatched, candidates lacking a source-side match (including the
    selector-less fallback path) are emitted with signature and solidity
    absent; those records carry sol_tokens = 0 and are meant for
    inference-time signature experiments, not training.
    """
    records: list[PairRecord] = []
    for contract in contracts:
        try:
            lifted = _lift_contract(contract)
        except (DisasmError, NoDispatcherFound) as exc:
            log.warning("%s: skipped entirely: %s", contract.address, exc)
            continue
        by_selector = {
            selector_hex(fn.signature): fn
            for fn in extract_function_sources(contract.source)
        }
        for sel, tac_text in lifted:
            fn = by_selector.get(sel) if sel is not None else None
            if fn is None and not keep_unmatched:
                continue
            records.append(
                PairRecord(
                    contract_address=contract.address,
                    selector=sel,
                    signature=fn.signature if fn else None,
                    visibility=fn.visibility if fn else None,
                    tac=tac_text,
                    solidity=fn.text if fn else None,
                    tac_tokens=count_tokens(tac_text),
                    sol_tokens=count_tokens(fn.text) if fn else 0,
                    compiler_version=contract.compiler_version,
                )
            )
    records.sort(key=lambda r: (r.contract_address, r.selector or ""))
    return records


_WS_RE = re.compile(r"\s+")


def _record_digest(record: PairRecord) -> str:
    tac = _WS_RE.sub(" ", record.tac).strip()
    sol = _WS_RE.sub(" ", record.solidity or "").strip()
    return hashlib.sha256(f"{tac}\x00{sol}".encode("utf-8")).hexdigest()


def filter_and_dedup(records: list[PairRecord]) -> tuple[list[PairRecord], FilterReport]:
    """Drop unparseable TAC, over-budget texts, and exact duplicates."""
    report = FilterReport(total=len(records))
    seen: set[str] = set()
    kept: list[PairRecord] = []
    for record in records:
        try:
            parse(record.tac)
        except TacSyntaxError:
            report.dropped_parse += 1
            continue
        if record.tac_tokens > TOKEN_BUDGET or record.sol_tokens > TOKEN_BUDGET:
            report.dropped_length += 1
            continue
        digest = _record_digest(record)
        if digest in seen:
            report.dropped_duplicate += 1
            continue
        seen.add(digest)
        kept.append(record)
    report.kept = len(kept)
    return kept, report


def write_jsonl(records: list[PairRecord], path: str | Path) -> None:
    """Write records as JSON-Lines, sorted by (address, selector)."""
    ordered = sorted(records, key=lambda r: (r.contract_address, r.selector or ""))
    with open(path, "w", encoding="utf-8") as fh:
        for record in ordered:
            fh.write(json.dumps(asdict(record), sort_keys=False) + "\n")


def read_jsonl(path: str | Path) -> list[PairRecord]:
    records: list[PairRecord] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
                records.append(PairRecord(**row))
            except (ValueError, TypeError) as exc:
                raise ValueError(f"{path}:{line_no}: bad record: {exc}") from None
    return records


def split_holdout(
    records: list[PairRecord], fraction: float, seed: int
) -> tuple[list[PairRecord], list[PairRecord]]:
    """Deterministic train/holdout split preserving input order in each half."""
    if not 0 <= fraction <= 1:
        raise ValueError("fraction must be within [0, 1]")
    count = round(len(records) * fraction)
    rng = random.Random(seed)
    chosen = set(rng.sample(range(len(records)), count))
    train = [r for i, r in enumerate(records) if i not in chosen]
    holdout = [r for i, r in enumerate(records) if i in chosen]
    return train, holdout

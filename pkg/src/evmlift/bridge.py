"""Prompt formatting, sequence budgeting, and the model backend client.

The bridge turns a normalized three-address function into a prompt with a
small metadata header and explicit section delimiters, enforces the 20,000
token budget by dropping whole trailing blocks, sends the prompt to a backend
speaking the wire protocol documented in the README (or to the built-in
deterministic mock), and runs a light syntax validator over whatever comes
back. Validator misses become warnings on the result, not failures.

Token counts here use a plain text tokenizer (identifier runs and single
punctuation characters), not a model's subword vocabulary: the budget must be
enforceable without shipping model assets. Backends report their own token
counts in the response so callers can re-truncate against the authoritative
number if the two disagree.
"""

from __future__ import annotations

import hashlib
import json
import re
import time
from dataclasses import dataclass, field

import requests

from .tac import (
    TacBlock,
    TacFunction,
    TacInstruction,
    TRUNCATION_SENTINEL,
    render,
)

__all__ = [
    "TOKEN_BUDGET",
    "TAC_DELIMITER",
    "SOLIDITY_DELIMITER",
    "BridgeError",
    "EntryBlockExceedsBudget",
    "BackendUnreachable",
    "BackendMalformedResponse",
    "Timeout",
    "PromptContext",
    "Prompt",
    "BackendConfig",
    "DecompiledFunction",
    "tokenize",
    "count_tokens",
    "truncate",
    "is_truncated",
    "build_prompt",
    "validate_solidity",
    "mock_backend",
    "decompile",
    "decompile_candidates",
]

TOKEN_BUDGET = 20000
TAC_DELIMITER = "<|tac|>"
SOLIDITY_DELIMITER = "<|solidity|>"


class BridgeError(Exception):
    """Base class for prompt and backend failures."""


class EntryBlockExceedsBudget(BridgeError):
    """The entry block alone does not fit the token budget."""

    def __init__(self, entry_tokens: int, budget: int):
        self.entry_tokens = entry_tokens
        self.budget = budget
        super().__init__(f"entry block needs {entry_tokens} tokens, budget is {budget}")


class BackendUnreachable(BridgeError):
    """No usable response after the configured number of retries."""


class BackendMalformedResponse(BridgeError):
    """The backend's reply does not follow the wire protocol."""


class Timeout(BridgeError):
    """The backend did not answer within the configured timeout."""


_TOKEN_RE = re.compile(r"[A-Za-z0-9_$]+|[^\sA-Za-z0-9_$]")


def tokenize(text: str) -> list[str]:
    """Split text into identifier runs and single punctuation characters."""
    return _TOKEN_RE.findall(text)


def count_tokens(text: str) -> int:
    return len(_TOKEN_RE.findall(text))


@dataclass(frozen=True)
class PromptContext:
    """Optional function metadata carried into the prompt header."""

    signature: str | None = None
    visibility: str | None = None
    selector: str | None = None

    @classmethod
    def from_function(cls, f: TacFunction) -> "PromptContext":
        selector = f.selector.hex() if f.selector is not None else None
        return cls(signature=f.signature, visibility=f.visibility, selector=selector)


@dataclass(frozen=True)
class Prompt:
    text: str
    tac_token_count: int
    truncated: bool
    context: PromptContext

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.text.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class BackendConfig:
    """How to reach a backend; endpoint "mock" selects the built-in one."""

    endpoint: str = "mock"
    timeout: float = 30.0
    max_new_tokens: int = 1024
    temperature: float = 0.0
    retries: int = 2
    backoff: float = 0.25

    def __post_init__(self) -> None:
        if self.retries < 0:
            raise ValueError("retries must be >= 0")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")


@dataclass(frozen=True)
class DecompiledFunction:
    solidity: str
    syntax_ok: bool
    backend_id: str
    prompt_hash: str
    warnings: tuple[str, ...] = ()
    signature: str | None = None
    prompt_tokens: int | None = None
    completion_tokens: int | None = None


def is_truncated(f: TacFunction) -> bool:
    """True when a truncation sentinel terminates the function's last block."""
    if not f.blocks:
        return False
    last = f.blocks[-1]
    return bool(last.instrs) and last.instrs[-1].op == TRUNCATION_SENTINEL


def _append_sentinel(f: TacFunction, blocks: list[TacBlock]) -> TacFunction:
    last = blocks[-1]
    marked = TacBlock(
        label=last.label,
        instrs=tuple(last.instrs) + (TacInstruction(op=TRUNCATION_SENTINEL),),
        successors=(),
    )
    return TacFunction(
        blocks=blocks[:-1] + [marked],
        entry_label=f.entry_label,
        selector=f.selector,
        signature=f.signature,
        visibility=f.visibility,
    )


def truncate(f: TacFunction, budget: int = TOKEN_BUDGET) -> TacFunction:
    """Fit the function into the token budget by dropping trailing blocks.

    Blocks are dropped whole from the end of the block order (reverse-post-
    order for normalized input), never the entry block, and a `truncated`
    sentinel is appended as the final instruction. Jump targets in surviving
    blocks may reference dropped labels; the sentinel marks the text as
    non-round-trippable.
    """
    if budget <= 0:
        raise ValueError("budget must be positive")
    if count_tokens(render(f)) <= budget:
        return f
    blocks = list(f.blocks)
    while len(blocks) > 1:
        blocks.pop()
        trial = _append_sentinel(f, blocks)
        if count_tokens(render(trial)) <= budget:
            return trial
    entry_tokens = count_tokens(render(_append_sentinel(f, blocks)))
    raise EntryBlockExceedsBudget(entry_tokens, budget)


def build_prompt(
    f: TacFunction,
    ctx: PromptContext | None = None,
    budget: int = TOKEN_BUDGET,
) -> Prompt:
    """Format the prompt: metadata header, TAC section, completion delimiter.

    Header lines are omitted entirely when the field is unknown (no
    placeholders). Byte-deterministic for equal inputs.
    """
    if ctx is None:
        ctx = PromptContext.from_function(f)
    fitted = truncate(f, budget)
    tac_text = render(fitted)
    header: list[str] = []
    if ctx.signature is not None:
        header.append(f"signature: {ctx.signature}")
    if ctx.visibility is not None:
        header.append(f"visibility: {ctx.visibility}")
    if ctx.selector is not None:
        sel = ctx.selector if ctx.selector.startswith("0x") else f"0x{ctx.selector}"
        header.append(f"selector: {sel}")
    parts = header + [TAC_DELIMITER, tac_text, SOLIDITY_DELIMITER]
    return Prompt(
        text="\n".join(parts) + "\n",
        tac_token_count=count_tokens(tac_text),
        truncated=is_truncated(fitted),
        context=ctx,
    )


def validate_solidity(text: str) -> list[str]:
    """Light syntax check: delimiter balance, a function header, no leakage.

    Returns a list of warnings; empty means the text passed. This is not a
    Solidity parse: string literals and comments are skipped, then round,
    square, and curly brackets must balance, the keyword `function` must
    appear, and the prompt section delimiters must not leak into the output.
    """
    warnings: list[str] = []
    for delim in (TAC_DELIMITER, SOLIDITY_DELIMITER):
        if delim in text:
            warnings.append(f"prompt delimiter {delim} leaked into output")

    pairs = {")": "(", "]": "[", "}": "{"}
    stack: list[str] = []
    mismatch: str | None = None
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "/" and i + 1 < n and text[i + 1] == "/":
            nl = text.find("\n", i)
            i = n if nl == -1 else nl + 1
            continue
        if ch == "/" and i + 1 < n and text[i + 1] == "*":
            end = text.find("*/", i + 2)
            if end == -1:
                mismatch = "unterminated block comment"
                break
            i = end + 2
            continue
        if ch in ("'", '"'):
            quote = ch
            i += 1
            while i < n and text[i] != quote:
                i += 2 if text[i] == "\\" else 1
            if i >= n:
                mismatch = "unterminated string literal"
                break
            i += 1
            continue
        if ch in "([{":
            stack.append(ch)
        elif ch in ")]}":
            if not stack or stack[-1] != pairs[ch]:
                mismatch = f"unbalanced {ch!r} at offset {i}"
                break
            stack.pop()
        i += 1
    if mismatch is None and stack:
        mismatch = f"unclosed {stack[-1]!r}"
    if mismatch is not None:
        warnings.append(mismatch)

    if not re.search(r"\bfunction\b", text):
        warnings.append("no function header found")
    return warnings


_SIGNATURE_RE = re.compile(r"^([A-Za-z_$][A-Za-z0-9_$]*)\((.*)\)$")

# Instruction ops the mock renders as comments: not statement-shaped Solidity.
_MOCK_COMMENT_OPS = frozenset({"jump", "cjump", "phi", TRUNCATION_SENTINEL, "invalid"})


def _split_params(params: str) -> list[str]:
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


def _mock_header(ctx: PromptContext) -> str:
    visibility = ctx.visibility or "public"
    if ctx.signature is not None:
        m = _SIGNATURE_RE.match(ctx.signature.strip())
        if m:
            name, raw_params = m.group(1), m.group(2)
            params = ", ".join(
                f"{p} arg{i}" for i, p in enumerate(_split_params(raw_params))
            )
            return f"function {name}({params}) {visibility} {{"
    if ctx.selector is not None:
        sel = ctx.selector.removeprefix("0x")
        return f"function f_{sel}() {visibility} {{"
    return f"function f_fallback() {visibility} {{"


def _tac_section(prompt_text: str) -> str:
    start = prompt_text.find(TAC_DELIMITER)
    end = prompt_text.find(SOLIDITY_DELIMITER)
    if start == -1 or end == -1 or end < start:
        return ""
    return prompt_text[start + len(TAC_DELIMITER) : end].strip("\n")


def mock_backend(prompt: Prompt) -> str:
    """Deterministic rule-based Solidity skeleton for running without a model.

    Each TAC line becomes one body line: assignments and calls as statements,
    control flow (labels, jumps, phi merges) as comments. The output always
    passes validate_solidity.
    """
    lines = [_mock_header(prompt.context)]
    for raw in _tac_section(prompt.text).splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.endswith(":"):
            lines.append(f"    // {line}")
        elif line.split("(")[0].split(" = ")[-1].split()[0] in _MOCK_COMMENT_OPS:
            lines.append(f"    // {line}")
        elif " = " in line:
            lines.append(f"    uint256 {line};")
        else:
            lines.append(f"    {line};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _post_decompile(prompt: Prompt, cfg: BackendConfig) -> dict:
    url = cfg.endpoint.rstrip("/") + "/v1/decompile"
    body = {
        "prompt": prompt.text,
        "max_new_tokens": cfg.max_new_tokens,
        "temperature": cfg.temperature,
        "stop": [TAC_DELIMITER, SOLIDITY_DELIMITER],
    }
    last_error: BridgeError | None = None
    for attempt in range(cfg.retries + 1):
        if attempt > 0:
            time.sleep(cfg.backoff * (2 ** (attempt - 1)))
        try:
            resp = requests.post(url, json=body, timeout=cfg.timeout)
        except requests.Timeout:
            last_error = Timeout(f"no answer from {url} within {cfg.timeout}s")
            continue
        except requests.ConnectionError as exc:
            last_error = BackendUnreachable(f"cannot reach {url}: {exc}")
            continue
        if resp.status_code == 503:
            last_error = BackendUnreachable(f"{url} still loading (503)")
            continue
        if resp.status_code == 400:
            try:
                detail = resp.json().get("error", "")
            except ValueError:
                detail = resp.text[:200]
            raise BackendMalformedResponse(f"backend rejected request: {detail}")
        if resp.status_code != 200:
            raise BackendMalformedResponse(
                f"unexpected status {resp.status_code} from {url}"
            )
        try:
            payload = resp.json()
        except ValueError as exc:
            raise BackendMalformedResponse(f"response is not JSON: {exc}") from None
        return payload
    assert last_error is not None
    raise last_error


def _check_payload(payload: object) -> tuple[str, str, int, int]:
    if not isinstance(payload, dict):
        raise BackendMalformedResponse("response body is not a JSON object")
    missing = [
        k
        for k in ("solidity", "model_id", "prompt_tokens", "completion_tokens")
        if k not in payload
    ]
    if missing:
        raise BackendMalformedResponse(f"response missing keys: {', '.join(missing)}")
    solidity = payload["solidity"]
    model_id = payload["model_id"]
    p_tokens = payload["prompt_tokens"]
    c_tokens = payload["completion_tokens"]
    if not isinstance(solidity, str) or not isinstance(model_id, str):
        raise BackendMalformedResponse("solidity and model_id must be strings")
    if isinstance(p_tokens, bool) or not isinstance(p_tokens, int):
        raise BackendMalformedResponse("prompt_tokens must be an integer")
    if isinstance(c_tokens, bool) or not isinstance(c_tokens, int):
        raise BackendMalformedResponse("completion_tokens must be an integer")
    return solidity, model_id, p_tokens, c_tokens


def decompile(
    f: TacFunction,
    ctx: PromptContext | None = None,
    cfg: BackendConfig | None = None,
) -> DecompiledFunction:
    """Build the prompt, call the backend, and validate the returned source."""
    cfg = cfg or BackendConfig()
    prompt = build_prompt(f, ctx)
    if cfg.endpoint == "mock":
        solidity = mock_backend(prompt)
        model_id = "mock"
        p_tokens = count_tokens(prompt.text)
        c_tokens = count_tokens(solidity)
    else:
        payload = _post_decompile(prompt, cfg)
        solidity, model_id, p_tokens, c_tokens = _check_payload(payload)
    validator_warnings = validate_solidity(solidity)
    warnings = list(validator_warnings)
    if prompt.truncated:
        warnings.append("input TAC was truncated to the token budget")
    return DecompiledFunction(
        solidity=solidity,
        syntax_ok=not validator_warnings,
        backend_id=model_id,
        prompt_hash=prompt.sha256,
        warnings=tuple(warnings),
        signature=prompt.context.signature,
        prompt_tokens=p_tokens,
        completion_tokens=c_tokens,
    )


def decompile_candidates(
    f: TacFunction,
    signatures: list[str],
    cfg: BackendConfig | None = None,
    ctx: PromptContext | None = None,
) -> list[DecompiledFunction]:
    """One backend call per candidate signature, best candidates first.

    Ranking is validator verdict first, then how closely the output's token
    count tracks the TAC's (a crude length-plausibility measure), then input
    order for stability.
    """
    base = ctx or PromptContext.from_function(f)
    tac_tokens = count_tokens(render(f))
    results: list[tuple[tuple, DecompiledFunction]] = []
    for order, signature in enumerate(signatures):
        variant = PromptContext(
            signature=signature,
            visibility=base.visibility,
            selector=base.selector,
        )
        result = decompile(f, variant, cfg)
        key = (
            0 if result.syntax_ok else 1,
            abs(count_tokens(result.solidity) - tac_tokens),
            order,
        )
        results.append((key, result))
    results.sort(key=lambda pair: pair[0])
    return [r for _, r in results]

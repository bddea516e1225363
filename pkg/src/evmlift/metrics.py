"""Quality metrics and distributions over (reference, decompiled) text pairs.

Everything is computed with plain Python arithmetic in simple left-to-right
formulas so that an aggregate can be checked for exact float equality against
an independent recomputation from the raw per-pair values. The similarity
default is a deterministic unigram-plus-bigram cosine over lexed code tokens;
a model-based embedder can be plugged in through a one-function interface.

Absolute similarity numbers depend entirely on the chosen scorer, so values
from different scorers are not comparable; reports record which scorer ran.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Sequence

import requests

from .disasm import disassemble, parse_hex, strip_metadata
from .tac import instruction_shape, parse as parse_tac

__all__ = [
    "EmptyInput",
    "EmptyCorpus",
    "EmbedderFailure",
    "PairScore",
    "LengthStats",
    "TokenHistogram",
    "MetricsReport",
    "EvalPair",
    "DEFAULT_TRACKED_TOKENS",
    "levenshtein",
    "normalized_edit_distance",
    "lex_code",
    "semantic_similarity",
    "score_pairs",
    "length_stats",
    "distributions",
    "token_frequencies",
    "entropy",
    "report",
    "read_eval_pairs",
    "http_embedder",
]


class EmptyInput(Exception):
    """A metric was asked to aggregate zero pairs."""


class EmptyCorpus(Exception):
    """An entropy or frequency computation received no units."""


class EmbedderFailure(Exception):
    """The plugged-in embedder failed; the message names the pair involved."""


Embedder = Callable[[Sequence[str]], Sequence[Sequence[float]]]


@dataclass(frozen=True)
class PairScore:
    pair_id: str
    edit_distance: float
    semantic_similarity: float
    len_ref: int
    len_out: int

    @property
    def len_diff(self) -> int:
        return self.len_out - self.len_ref


@dataclass(frozen=True)
class LengthStats:
    median: float
    std: float
    frac_within_50: float
    min: int
    max: int


@dataclass(frozen=True)
class TokenHistogram:
    counts: dict[str, int]
    total: int


@dataclass(frozen=True)
class EvalPair:
    pair_id: str
    reference: str
    candidate: str


@dataclass
class MetricsReport:
    per_pair: list[PairScore]
    edit_cdf: list[tuple[float, float]]
    sim_cdf: list[tuple[float, float]]
    correlation: float | None
    length_stats: LengthStats
    token_freq_ref: TokenHistogram
    token_freq_out: TokenHistogram
    fractions: dict[str, float]
    scorer: str


def levenshtein(a: str, b: str) -> int:
    """Edit distance over Unicode scalar values, two-row dynamic program."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    if len(b) > len(a):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        current = [i]
        for j, cb in enumerate(b, 1):
            cost = 0 if ca == cb else 1
            current.append(
                min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + cost)
            )
        previous = current
    return previous[-1]


def normalized_edit_distance(a: str, b: str) -> float:
    """Levenshtein(a, b) / max(|a|, |b|); zero when both texts are empty."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 0.0
    return levenshtein(a, b) / longest


# One compound token plus hex numbers, identifier runs, decimal numbers, and
# single punctuation characters. Shared by similarity, frequencies, entropy.
_LEX_RE = re.compile(
    r"msg\s*\.\s*sender|0[xX][0-9a-fA-F]+|[A-Za-z_$][A-Za-z0-9_$]*|[0-9]+|[^\s]"
)


def lex_code(text: str) -> list[str]:
    """Lex code-shaped text into tokens; `msg.sender` stays one token."""
    out: list[str] = []
    for m in _LEX_RE.finditer(text):
        token = m.group(0)
        if token.startswith("msg"):
            token = re.sub(r"\s+", "", token)
        out.append(token)
    return out


def _ngram_vector(tokens: list[str]) -> dict[object, int]:
    vec: dict[object, int] = {}
    for t in tokens:
        vec[t] = vec.get(t, 0) + 1
    for i in range(len(tokens) - 1):
        key = (tokens[i], tokens[i + 1])
        vec[key] = vec.get(key, 0) + 1
    return vec


def _cosine(u: dict | Sequence[float], v: dict | Sequence[float]) -> float:
    if isinstance(u, dict):
        dot = sum(count * v.get(key, 0) for key, count in u.items())
        nu = math.sqrt(sum(c * c for c in u.values()))
        nv = math.sqrt(sum(c * c for c in v.values()))
    else:
        dot = sum(x * y for x, y in zip(u, v))
        nu = math.sqrt(sum(x * x for x in u))
        nv = math.sqrt(sum(y * y for y in v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return dot / (nu * nv)


def semantic_similarity(a: str, b: str, embedder: Embedder | None = None) -> float:
    """Cosine similarity in [0, 1]; identical token streams score 1.0.

    The default scorer builds combined unigram and bigram frequency vectors
    over lexed tokens. An embedder, when given, maps [a, b] to two vectors
    whose cosine is clamped into [0, 1]; its failures raise EmbedderFailure.
    """
    if embedder is not None:
        try:
            vectors = embedder([a, b])
            u, v = vectors[0], vectors[1]
        except EmbedderFailure:
            raise
        except Exception as exc:
            raise EmbedderFailure(str(exc)) from exc
        return min(1.0, max(0.0, _cosine(u, v)))
    ta, tb = lex_code(a), lex_code(b)
    if ta == tb:
        return 1.0
    return min(1.0, max(0.0, _cosine(_ngram_vector(ta), _ngram_vector(tb))))


def score_pairs(rows: list[EvalPair], embedder: Embedder | None = None) -> list[PairScore]:
    scores: list[PairScore] = []
    for row in rows:
        try:
            similarity = semantic_similarity(row.reference, row.candidate, embedder)
        except EmbedderFailure as exc:
            raise EmbedderFailure(f"pair {row.pair_id}: {exc}") from None
        scores.append(
            PairScore(
                pair_id=row.pair_id,
                edit_distance=normalized_edit_distance(row.reference, row.candidate),
                semantic_similarity=similarity,
                len_ref=len(row.reference),
                len_out=len(row.candidate),
            )
        )
    return scores


def length_stats(scores: list[PairScore]) -> LengthStats:
    """Median (lower-middle), population std, and spread of length differences."""
    if not scores:
        raise EmptyInput("length_stats needs at least one pair")
    diffs = [s.len_diff for s in scores]
    ordered = sorted(diffs)
    n = len(ordered)
    median = float(ordered[(n - 1) // 2])
    mean = sum(diffs) / n
    std = math.sqrt(sum((d - mean) ** 2 for d in diffs) / n)
    within = sum(1 for d in diffs if abs(d) <= 50) / n
    return LengthStats(
        median=median, std=std, frac_within_50=within, min=min(diffs), max=max(diffs)
    )


def _cdf(values: list[float]) -> list[tuple[float, float]]:
    ordered = sorted(values)
    n = len(ordered)
    return [(v, (i + 1) / n) for i, v in enumerate(ordered)]


def _pearson(xs: list[float], ys: list[float]) -> float | None:
    n = len(xs)
    mean_x = sum(xs) / n
    mean_y = sum(ys) / n
    var_x = sum((x - mean_x) ** 2 for x in xs)
    var_y = sum((y - mean_y) ** 2 for y in ys)
    if var_x == 0.0 or var_y == 0.0:
        return None
    cov = sum((x - mean_x) * (y - mean_y) for x, y in zip(xs, ys))
    return cov / math.sqrt(var_x * var_y)


def distributions(scores: list[PairScore]) -> dict:
    """Empirical CDFs, threshold fractions, and edit-vs-similarity Pearson r."""
    if not scores:
        raise EmptyInput("distributions needs at least one pair")
    edits = [s.edit_distance for s in scores]
    sims = [s.semantic_similarity for s in scores]
    n = len(scores)
    fractions = {
        "edit_lt_04": sum(1 for e in edits if e < 0.4) / n,
        "sim_gt_07": sum(1 for s in sims if s > 0.7) / n,
        "sim_gt_08": sum(1 for s in sims if s > 0.8) / n,
        "sim_gt_09": sum(1 for s in sims if s > 0.9) / n,
    }
    return {
        "edit_cdf": _cdf(edits),
        "sim_cdf": _cdf(sims),
        "fractions": fractions,
        "correlation": _pearson(edits, sims),
    }


DEFAULT_TRACKED_TOKENS = (
    "require",
    "msg.sender",
    "function",
    "return",
    "if",
    "else",
    "for",
    "while",
    "mapping",
    "uint256",
    "address",
    "emit",
    "revert",
    "assert",
    "public",
    "external",
    "internal",
    "private",
    "view",
    "pure",
    "payable",
    "memory",
    "storage",
)


def token_frequencies(
    corpus: list[str], vocab: Sequence[str] = DEFAULT_TRACKED_TOKENS
) -> TokenHistogram:
    """Count tracked tokens across the corpus under the shared code lexer."""
    tracked = set(vocab)
    counts = {token: 0 for token in vocab}
    for text in corpus:
        for token in lex_code(text):
            if token in tracked:
                counts[token] += 1
    return TokenHistogram(counts=counts, total=sum(counts.values()))


_ENTROPY_UNITS = ("solidity_token", "tac_instruction", "evm_opcode")


def _units_of(text: str, unit: str) -> list[str]:
    if unit == "solidity_token":
        return lex_code(text)
    if unit == "tac_instruction":
        fn = parse_tac(text)
        return [
            instruction_shape(ins) for block in fn.blocks for ins in block.instrs
        ]
    if unit == "evm_opcode":
        code = parse_hex(text)
        layout = strip_metadata(code)
        return [
            ins.mnemonic
            for ins in disassemble(code)
            if ins.offset < layout.code_end
        ]
    raise ValueError(f"unknown entropy unit {unit!r}; expected one of {_ENTROPY_UNITS}")


def entropy(corpus: list[str], unit: str = "solidity_token") -> float:
    """Shannon entropy in bits per unit over the empirical distribution."""
    counts: dict[str, int] = {}
    for text in corpus:
        for u in _units_of(text, unit):
            counts[u] = counts.get(u, 0) + 1
    total = sum(counts.values())
    if total == 0:
        raise EmptyCorpus(f"no {unit} units in corpus")
    h = 0.0
    for count in counts.values():
        p = count / total
        h -= p * math.log2(p)
    return h


def read_eval_pairs(path: str | Path) -> list[EvalPair]:
    """Load JSONL rows {id, reference, candidate}."""
    rows: list[EvalPair] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                rows.append(
                    EvalPair(
                        pair_id=str(obj["id"]),
                        reference=obj["reference"],
                        candidate=obj["candidate"],
                    )
                )
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{line_no}: bad eval row: {exc}") from None
    return rows


def _write_csv(path: Path, header: list[str], rows: list[Sequence]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(cell) for cell in row) + "\n")


def report(
    rows: list[EvalPair],
    out: str | Path,
    embedder: Embedder | None = None,
    vocab: Sequence[str] = DEFAULT_TRACKED_TOKENS,
) -> MetricsReport:
    """Score all pairs and write report.json plus per-distribution CSV files."""
    if not rows:
        raise EmptyInput("report needs at least one pair")
    out_dir = Path(out)
    scores = score_pairs(rows, embedder)
    dist = distributions(scores)
    stats = length_stats(scores)
    freq_ref = token_frequencies([r.reference for r in rows], vocab)
    freq_out = token_frequencies([r.candidate for r in rows], vocab)
    result = MetricsReport(
        per_pair=scores,
        edit_cdf=dist["edit_cdf"],
        sim_cdf=dist["sim_cdf"],
        correlation=dist["correlation"],
        length_stats=stats,
        token_freq_ref=freq_ref,
        token_freq_out=freq_out,
        fractions=dist["fractions"],
        scorer="embedder" if embedder is not None else "ngram_cosine",
    )

    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "scorer": result.scorer,
        "pairs": len(scores),
        "per_pair": [
            {**asdict(s), "len_diff": s.len_diff} for s in scores
        ],
        "correlation": result.correlation,
        "length_stats": asdict(stats),
        "fractions": result.fractions,
        "token_freq_ref": asdict(freq_ref),
        "token_freq_out": asdict(freq_out),
        "notes": (
            "std is population std; median is lower-middle for even n; "
            "similarity values depend on the scorer and are not comparable "
            "across scorers"
        ),
    }
    (out_dir / "report.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    _write_csv(
        out_dir / "edit_cdf.csv",
        ["value", "cum_frac"],
        [(v, f) for v, f in result.edit_cdf],
    )
    _write_csv(
        out_dir / "sim_cdf.csv",
        ["value", "cum_frac"],
        [(v, f) for v, f in result.sim_cdf],
    )
    _write_csv(
        out_dir / "token_freq.csv",
        ["token", "ref_count", "out_count", "ref_frac", "out_frac"],
        [
            (
                token,
                freq_ref.counts[token],
                freq_out.counts[token],
                freq_ref.counts[token] / freq_ref.total if freq_ref.total else 0.0,
                freq_out.counts[token] / freq_out.total if freq_out.total else 0.0,
            )
            for token in vocab
        ],
    )
    return result


def http_embedder(endpoint: str, timeout: float = 30.0) -> Embedder:
    """Embedder speaking POST /v1/embed {"texts": [...]} -> {"vectors": [...]}."""

    url = endpoint.rstrip("/") + "/v1/embed"

    def embed(texts: Sequence[str]) -> Sequence[Sequence[float]]:
        try:
            resp = requests.post(url, json={"texts": list(texts)}, timeout=timeout)
        except requests.RequestException as exc:
            raise EmbedderFailure(f"cannot reach embedder at {url}: {exc}") from None
        if resp.status_code != 200:
            raise EmbedderFailure(f"embedder returned status {resp.status_code}")
        try:
            vectors = resp.json()["vectors"]
        except (ValueError, KeyError) as exc:
            raise EmbedderFailure(f"embedder response malformed: {exc}") from None
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise EmbedderFailure("embedder returned wrong number of vectors")
        return vectors

    return embed

"""Command-line entry point exposing the pipeline stages as subcommands.

Exit codes: 0 on success, 1 on user error (bad input, bad flags, missing
files), 2 on internal faults and unreachable backends. Configuration comes
from, in order of precedence: command-line flags, EVMLIFT_* environment
variables, an evmlift.toml file (current directory, or --config), defaults.
Output files are written atomically (temp file plus rename).
"""

from __future__ import annotations

import json
import logging
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click

from . import bridge as bridge_mod
from . import dataset as dataset_mod
from . import metrics as metrics_mod
from .bridge import (
    BackendConfig,
    BackendMalformedResponse,
    BackendUnreachable,
    Timeout,
)
from .cfg import (
    FunctionCandidate,
    NoDispatcherFound,
    build_blocks,
    detect_dispatcher,
    resolve_jumps,
)
from .config import ConfigError, load_config
from .disasm import DisasmError, disassemble, format_listing, parse_hex, strip_metadata
from .lift import InconsistentStackDepth, lift, normalize
from .tac import TacSyntaxError, render

__all__ = ["main", "cli"]

log = logging.getLogger("evmlift")

_LOG_LEVELS = ("debug", "info", "warning", "error")


def _atomic_write(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _read_hex_input(source: str) -> str:
    if source == "-":
        return sys.stdin.read()
    return Path(source).read_text(encoding="utf-8")


def _load_cfg(source: str):
    code = parse_hex(_read_hex_input(source))
    instrs = disassemble(code)
    layout = strip_metadata(code)
    return code, instrs, resolve_jumps(build_blocks(instrs, layout), layout)


def _candidates_or_whole_program(cfg) -> list[FunctionCandidate]:
    """Dispatcher candidates, falling back to one whole-program function."""
    try:
        return detect_dispatcher(cfg)
    except NoDispatcherFound as exc:
        log.warning("%s; lifting the whole program as one function", exc)
        entry = cfg.blocks[0].id
        return [
            FunctionCandidate(
                selector=None,
                entry_block=entry,
                reachable_blocks=cfg.reachable_from(entry),
                is_payable_guess=True,
            )
        ]


@click.group(context_settings={"auto_envvar_prefix": "EVMLIFT"})
@click.option("--jobs", type=click.IntRange(min=1), default=None, help="Worker count.")
@click.option(
    "--log-level",
    type=click.Choice(_LOG_LEVELS),
    default=None,
    help="Logging verbosity.",
)
@click.option(
    "--config",
    "config_path",
    type=click.Path(dir_okay=False),
    default=None,
    help="Config file (default: ./evmlift.toml when present).",
)
@click.pass_context
def cli(ctx: click.Context, jobs: int | None, log_level: str | None, config_path):
    """Lift EVM bytecode to readable three-address code and drive a decompiler."""
    try:
        file_config = load_config(config_path)
    except (OSError, ConfigError) as exc:
        raise click.UsageError(f"config: {exc}")
    ctx.default_map = {
        k: v for k, v in file_config.items() if isinstance(v, dict)
    }
    if jobs is None:
        jobs = file_config.get("jobs", 1) if isinstance(file_config.get("jobs", 1), int) else 1
    if log_level is None:
        candidate = file_config.get("log_level", "warning")
        log_level = candidate if candidate in _LOG_LEVELS else "warning"
    if jobs < 1:
        raise click.UsageError("jobs must be >= 1")
    logging.basicConfig(
        level=getattr(logging, log_level.upper()),
        format="%(levelname)s %(name)s: %(message)s",
    )
    ctx.obj = {"jobs": jobs}


@cli.command("disasm")
@click.argument("hexfile")
@click.option("-o", "--out", type=click.Path(dir_okay=False), help="Write listing here.")
def cmd_disasm(hexfile: str, out: str | None):
    """Disassemble runtime bytecode into a one-instruction-per-line listing."""
    code = parse_hex(_read_hex_input(hexfile))
    listing = format_listing(disassemble(code))
    if out:
        _atomic_write(out, listing + "\n")
    else:
        click.echo(listing)


@cli.command("cfg")
@click.argument("hexfile")
@click.option(
    "--format",
    "fmt",
    type=click.Choice(["dot", "json"]),
    default="dot",
    show_default=True,
)
@click.option("-o", "--out", type=click.Path(dir_okay=False), help="Write graph here.")
def cmd_cfg(hexfile: str, fmt: str, out: str | None):
    """Recover the control-flow graph; emit DOT or a JSON summary."""
    _, _, graph = _load_cfg(hexfile)
    if fmt == "dot":
        text = graph.to_dot()
    else:
        summary = graph.to_json_dict()
        try:
            summary["selectors"] = [
                {
                    "selector": c.selector_hex,
                    "entry_block": c.entry_block,
                    "payable_guess": c.is_payable_guess,
                }
                for c in detect_dispatcher(graph)
            ]
        except NoDispatcherFound:
            summary["selectors"] = []
        text = json.dumps(summary, indent=2, sort_keys=True)
    if out:
        _atomic_write(out, text + "\n")
    else:
        click.echo(text)


@cli.command("lift")
@click.argument("hexfile")
@click.option("--selector", "selector_hex", help="Lift only this 4-byte selector (hex).")
@click.option("-o", "--out", type=click.Path(dir_okay=False), help="Write TAC here.")
def cmd_lift(hexfile: str, selector_hex: str | None, out: str | None):
    """Lift dispatcher functions to normalized three-address code."""
    _, _, graph = _load_cfg(hexfile)
    candidates = _candidates_or_whole_program(graph)
    if selector_hex is not None:
        wanted = selector_hex.removeprefix("0x").lower()
        matches = [c for c in candidates if c.selector_hex == wanted]
        if not matches:
            known = ", ".join(c.selector_hex or "fallback" for c in candidates)
            raise click.UsageError(f"selector {wanted} not found; recovered: {known}")
        candidates = matches
    sections: list[str] = []
    for candidate in candidates:
        text = render(normalize(lift(graph, candidate)))
        if selector_hex is None and len(candidates) > 1:
            sections.append(f"== {candidate.selector_hex or 'fallback'} ==\n{text}")
        else:
            sections.append(text)
    output = "\n".join(sections)
    if out:
        _atomic_write(out, output if output.endswith("\n") else output + "\n")
    else:
        click.echo(output, nl=not output.endswith("\n"))


@cli.command("decompile")
@click.argument("hexfile")
@click.option("-o", "--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--backend", default="mock", show_default=True, help="Backend URL or 'mock'.")
@click.option("--timeout", type=float, default=30.0, show_default=True)
@click.option("--max-new-tokens", type=int, default=1024, show_default=True)
@click.option("--temperature", type=float, default=0.0, show_default=True)
@click.option("--retries", type=click.IntRange(min=0), default=2, show_default=True)
@click.option(
    "--signatures",
    "signatures_file",
    type=click.Path(dir_okay=False),
    help="JSON file: selector hex -> list of candidate signatures.",
)
@click.pass_context
def cmd_decompile(
    ctx: click.Context,
    hexfile: str,
    out_dir: str,
    backend: str,
    timeout: float,
    max_new_tokens: int,
    temperature: float,
    retries: int,
    signatures_file: str | None,
):
    """Run the full pipeline and write one .sol per function plus a summary."""
    backend_cfg = BackendConfig(
        endpoint=backend,
        timeout=timeout,
        max_new_tokens=max_new_tokens,
        temperature=temperature,
        retries=retries,
    )
    signature_map: dict[str, list[str]] = {}
    if signatures_file:
        raw = json.loads(Path(signatures_file).read_text(encoding="utf-8"))
        signature_map = {
            k.removeprefix("0x").lower(): list(v) for k, v in raw.items()
        }
    _, _, graph = _load_cfg(hexfile)
    candidates = _candidates_or_whole_program(graph)
    unresolved_blocks = sorted(set(graph.unresolved))

    def run_one(candidate: FunctionCandidate) -> tuple[str, dict]:
        name = candidate.selector_hex or "fallback"
        try:
            fn = normalize(lift(graph, candidate)).with_metadata(
                selector=candidate.selector
            )
        except InconsistentStackDepth as exc:
            return name, {"error": f"{type(exc).__name__}: {exc}"}
        sigs = signature_map.get(name, [])
        if sigs:
            results = bridge_mod.decompile_candidates(fn, sigs, backend_cfg)
            best = results[0]
        else:
            best = bridge_mod.decompile(fn, cfg=backend_cfg)
        return name, {
            "solidity": best.solidity,
            "syntax_ok": best.syntax_ok,
            "backend_id": best.backend_id,
            "prompt_hash": best.prompt_hash,
            "warnings": list(best.warnings),
            "signature": best.signature,
        }

    jobs = ctx.obj["jobs"] if ctx.obj else 1
    if jobs > 1 and len(candidates) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(run_one, candidates))
    else:
        outcomes = [run_one(c) for c in candidates]

    out_path = Path(out_dir)
    out_path.mkdir(parents=True, exist_ok=True)
    summary: dict = {
        "functions": {},
        "unresolved_jumps": unresolved_blocks,
        "validator_warnings": {},
    }
    failures = 0
    for name, outcome in outcomes:
        if "error" in outcome:
            failures += 1
            summary["functions"][name] = {"error": outcome["error"]}
            continue
        _atomic_write(out_path / f"{name}.sol", outcome["solidity"])
        summary["functions"][name] = {
            "file": f"{name}.sol",
            "syntax_ok": outcome["syntax_ok"],
            "backend_id": outcome["backend_id"],
            "prompt_hash": outcome["prompt_hash"],
            "signature": outcome["signature"],
        }
        if outcome["warnings"]:
            summary["validator_warnings"][name] = outcome["warnings"]
    _atomic_write(out_path / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    click.echo(
        f"decompiled {len(outcomes) - failures}/{len(outcomes)} functions into {out_dir}"
    )


@cli.group("dataset")
def cmd_dataset():
    """Build and inspect TAC-to-Solidity paired datasets."""


@cmd_dataset.command("build")
@click.argument("in_dir", type=click.Path(file_okay=False, exists=True))
@click.option("-o", "--out", required=True, type=click.Path(dir_okay=False))
@click.option("--keep-unmatched", is_flag=True, default=False)
@click.option("--holdout", type=click.FloatRange(0.0, 1.0), default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.pass_context
def cmd_dataset_build(
    ctx: click.Context,
    in_dir: str,
    out: str,
    keep_unmatched: bool,
    holdout: float | None,
    seed: int,
):
    """Build pairs from contract bundles and write a JSONL file."""
    contracts = dataset_mod.ingest(in_dir)
    jobs = ctx.obj["jobs"] if ctx.obj else 1
    if jobs > 1 and len(contracts) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            chunks = list(
                pool.map(
                    lambda c: dataset_mod.build_pairs([c], keep_unmatched), contracts
                )
            )
        records = [r for chunk in chunks for r in chunk]
        records.sort(key=lambda r: (r.contract_address, r.selector or ""))
    else:
        records = dataset_mod.build_pairs(contracts, keep_unmatched)
    kept, rep = dataset_mod.filter_and_dedup(records)

    def write_records(path: str, rows) -> None:
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.")
        os.close(fd)
        try:
            dataset_mod.write_jsonl(rows, tmp)
            os.replace(tmp, target)
        except BaseException:
            try:
                os.unlink(tmp)
            except OSError:
                pass
            raise

    if holdout is not None:
        train, held = dataset_mod.split_holdout(kept, holdout, seed)
        stem = out[: -len(".jsonl")] if out.endswith(".jsonl") else out
        write_records(f"{stem}.train.jsonl", train)
        write_records(f"{stem}.holdout.jsonl", held)
        click.echo(
            f"kept {rep.kept}/{rep.total} records "
            f"(parse {rep.dropped_parse}, length {rep.dropped_length}, "
            f"duplicate {rep.dropped_duplicate}); "
            f"train {len(train)}, holdout {len(held)}"
        )
    else:
        write_records(out, kept)
        click.echo(
            f"kept {rep.kept}/{rep.total} records "
            f"(parse {rep.dropped_parse}, length {rep.dropped_length}, "
            f"duplicate {rep.dropped_duplicate}) -> {out}"
        )


@cmd_dataset.command("stats")
@click.argument("in_file", type=click.Path(dir_okay=False, exists=True))
def cmd_dataset_stats(in_file: str):
    """Print record counts and token-length spread for a pairs file."""
    records = dataset_mod.read_jsonl(in_file)
    if not records:
        click.echo("0 records")
        return
    contracts = {r.contract_address for r in records}
    with_sig = sum(1 for r in records if r.signature)
    tac_tokens = sorted(r.tac_tokens for r in records)
    sol_tokens = sorted(r.sol_tokens for r in records)

    def spread(values: list[int]) -> str:
        mid = values[(len(values) - 1) // 2]
        return f"min {values[0]}, median {mid}, max {values[-1]}"

    click.echo(f"records: {len(records)}")
    click.echo(f"contracts: {len(contracts)}")
    click.echo(f"with signature: {with_sig} ({with_sig / len(records):.1%})")
    click.echo(f"tac tokens: {spread(tac_tokens)}")
    click.echo(f"sol tokens: {spread(sol_tokens)}")


@cli.command("eval")
@click.argument("pairs_file", type=click.Path(dir_okay=False, exists=True))
@click.option("-o", "--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--embedder", "embedder_url", default=None, help="Embedder base URL.")
def cmd_eval(pairs_file: str, out_dir: str, embedder_url: str | None):
    """Score (reference, candidate) pairs and write the metrics report."""
    rows = metrics_mod.read_eval_pairs(pairs_file)
    embedder = metrics_mod.http_embedder(embedder_url) if embedder_url else None
    result = metrics_mod.report(rows, out_dir, embedder=embedder)
    correlation = (
        "n/a" if result.correlation is None else f"{result.correlation:.4f}"
    )
    click.echo(
        f"pairs: {len(result.per_pair)}; "
        f"median len diff: {result.length_stats.median:g}; "
        f"edit<0.4: {result.fractions['edit_lt_04']:.1%}; "
        f"sim>0.8: {result.fractions['sim_gt_08']:.1%}; "
        f"correlation: {correlation}"
    )


@cli.command("entropy")
@click.argument("inputs", nargs=-1, required=True, type=click.Path(dir_okay=False, exists=True))
@click.option(
    "--unit",
    type=click.Choice(["solidity_token", "tac_instruction", "evm_opcode"]),
    default="solidity_token",
    show_default=True,
)
def cmd_entropy(inputs: tuple[str, ...], unit: str):
    """Shannon entropy of a corpus in bits per unit."""
    corpus = [Path(p).read_text(encoding="utf-8") for p in inputs]
    value = metrics_mod.entropy(corpus, unit)
    click.echo(f"{value:.6f} bits per {unit}")


_USER_ERRORS = (
    DisasmError,
    TacSyntaxError,
    InconsistentStackDepth,
    metrics_mod.EmptyInput,
    metrics_mod.EmptyCorpus,
    bridge_mod.EntryBlockExceedsBudget,
    ConfigError,
    FileNotFoundError,
    IsADirectoryError,
    PermissionError,
    UnicodeDecodeError,
    json.JSONDecodeError,
)

_BACKEND_ERRORS = (BackendUnreachable, BackendMalformedResponse, Timeout)


def main(argv: list[str] | None = None) -> int:
    """Console entry point implementing the exit-code contract."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except _BACKEND_ERRORS as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        return 2
    except _USER_ERRORS as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        return 1
    except Exception as exc:  # internal fault: anything unanticipated
        click.echo(f"internal error: {type(exc).__name__}: {exc}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command line entry point: evmlift-adapter."""

from __future__ import annotations

import logging

import click

from .config import DEFAULT_STOP_SEQUENCES, AdapterConfig
from .server import serve


@click.command()
@click.option("--model", default="echo", show_default=True,
              help="Model path or hub id; 'echo' runs without weights.")
@click.option("--port", default=8000, show_default=True, type=click.IntRange(0, 65535))
@click.option("--echo", is_flag=True, help="Force the echo model regardless of --model.")
@click.option("--max-context", default=20000, show_default=True,
              type=click.IntRange(min=1), help="Prompt budget in tokens.")
@click.option("--device", default="cpu", show_default=True)
@click.option("--stop", multiple=True,
              help="Extra stop sequence (repeatable); defaults to the prompt delimiters.")
@click.option("--log-level", default="info",
              type=click.Choice(["debug", "info", "warning", "error"]))
def main(model, port, echo, max_context, device, stop, log_level):
    """Serve the decompilation backend protocol over HTTP."""
    logging.basicConfig(level=log_level.upper(), format="%(levelname)s %(message)s")
    cfg = AdapterConfig(
        model_path_or_id=model,
        device=device,
        max_context=max_context,
        port=port,
        stop_sequences=tuple(stop) or DEFAULT_STOP_SEQUENCES,
    )
    server = serve(cfg, echo=echo)
    click.echo(f"listening on {server.endpoint} (model: {model if not echo else 'echo'})")
    try:
        server.join()
    except KeyboardInterrupt:
        server.shutdown()


if __name__ == "__main__":
    main()

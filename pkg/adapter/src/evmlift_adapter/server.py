"""The HTTP server: routing, request validation, truncation, generation.

Endpoints:
  POST /v1/decompile  body {"prompt", "max_new_tokens", "temperature", "stop"}
  GET  /v1/health     {"status": "ok", "model_id": ...} once the model loaded

Responses to /v1/decompile carry {"solidity", "model_id", "prompt_tokens",
"completion_tokens", "truncated"}. Malformed bodies get 400 with
{"error": ...}; requests made before the model finished loading get 503.
Generation is single in-flight (a lock serializes model calls); the health
endpoint never takes that lock, so it stays responsive during generation.
"""

from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable

from .config import AdapterConfig
from .models import split_prompt
from .tokenizer import count_tokens

log = logging.getLogger("evmlift_adapter")


def truncate_prompt(prompt: str, max_context: int) -> tuple[str, bool]:
    """Fit the prompt into max_context tokens.

    Lines are dropped from the front of the TAC section; the metadata
    header and the completion delimiter survive untouched. Returns the
    possibly shortened prompt and whether anything was dropped.
    """
    if count_tokens(prompt) <= max_context:
        return prompt, False
    header, tac, tail = split_prompt(prompt)
    lines = tac.strip("\n").splitlines()
    while lines:
        lines.pop(0)
        body = "\n".join(lines) + "\n" if lines else ""
        candidate = f"{header}\n{body}{tail}" if header or tail else body
        if count_tokens(candidate) <= max_context:
            return candidate, True
    # even an empty TAC section is over budget; send header and tail alone
    return (f"{header}\n{tail}" if header or tail else ""), True


class _RequestError(Exception):
    """Maps to a 400 response; the message goes into the error field."""


def parse_request(body: bytes, seed_header: str | None) -> dict:
    """Validate a /v1/decompile body; raise _RequestError when malformed."""
    try:
        payload = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise _RequestError(f"body is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise _RequestError("body must be a JSON object")
    if "prompt" not in payload:
        raise _RequestError("missing required field: prompt")
    prompt = payload["prompt"]
    if not isinstance(prompt, str):
        raise _RequestError("prompt must be a string")

    max_new_tokens = payload.get("max_new_tokens", 1024)
    if isinstance(max_new_tokens, bool) or not isinstance(max_new_tokens, int):
        raise _RequestError("max_new_tokens must be an integer")
    if max_new_tokens <= 0:
        raise _RequestError("max_new_tokens must be positive")

    temperature = payload.get("temperature", 0.0)
    if isinstance(temperature, bool) or not isinstance(temperature, (int, float)):
        raise _RequestError("temperature must be a number")
    if temperature < 0:
        raise _RequestError("temperature must be non-negative")

    stop = payload.get("stop", [])
    if not isinstance(stop, list) or any(not isinstance(s, str) for s in stop):
        raise _RequestError("stop must be a list of strings")

    seed: int | None = None
    if seed_header is not None:
        try:
            seed = int(seed_header, 10)
        except ValueError:
            raise _RequestError("X-Seed header must be an integer") from None

    return {
        "prompt": prompt,
        "max_new_tokens": max_new_tokens,
        "temperature": float(temperature),
        "stop": stop,
        "seed": seed,
    }


class _Handler(BaseHTTPRequestHandler):
    server: "_Httpd"

    def _send_json(self, status: int, payload: dict, retry_after: bool = False) -> None:
        data = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        if retry_after:
            self.send_header("Retry-After", "1")
        self.end_headers()
        self.wfile.write(data)

    def do_GET(self) -> None:  # noqa: N802 (http.server naming)
        adapter = self.server.adapter
        if self.path != "/v1/health":
            self._send_json(404, {"error": f"no such endpoint: {self.path}"})
            return
        if adapter.load_error is not None:
            self._send_json(200, {"status": "error", "error": str(adapter.load_error)})
        elif adapter.model is None:
            self._send_json(200, {"status": "loading"})
        else:
            self._send_json(200, {"status": "ok", "model_id": adapter.model.model_id})

    def do_POST(self) -> None:  # noqa: N802 (http.server naming)
        adapter = self.server.adapter
        if self.path != "/v1/decompile":
            self._send_json(404, {"error": f"no such endpoint: {self.path}"})
            return
        if adapter.load_error is not None:
            self._send_json(
                503, {"error": f"model failed to load: {adapter.load_error}"}
            )
            return
        if adapter.model is None:
            self._send_json(503, {"error": "model is loading"}, retry_after=True)
            return
        length = int(self.headers.get("Content-Length") or 0)
        try:
            req = parse_request(self.rfile.read(length), self.headers.get("X-Seed"))
        except _RequestError as exc:
            self._send_json(400, {"error": str(exc)})
            return

        prompt, truncated = truncate_prompt(req["prompt"], adapter.cfg.max_context)
        with adapter.generation_lock:
            completion = adapter.model.generate(
                prompt,
                max_new_tokens=req["max_new_tokens"],
                temperature=req["temperature"],
                stop=req["stop"],
                seed=req["seed"],
            )
        self._send_json(
            200,
            {
                "solidity": completion,
                "model_id": adapter.model.model_id,
                "prompt_tokens": count_tokens(prompt),
                "completion_tokens": count_tokens(completion),
                "truncated": truncated,
            },
        )

    def log_message(self, fmt: str, *args) -> None:
        log.debug("%s %s", self.address_string(), fmt % args)


class _Httpd(ThreadingHTTPServer):
    daemon_threads = True
    adapter: "AdapterServer"


class AdapterServer:
    """Owns the HTTP listener and the (possibly still loading) model.

    The model factory runs on a background thread after the socket is
    bound, so the server answers immediately: health reports loading and
    decompile returns 503 until the factory finishes.
    """

    def __init__(
        self, cfg: AdapterConfig, model_factory: Callable[[], object]
    ) -> None:
        self.cfg = cfg
        self.model: object | None = None
        self.load_error: Exception | None = None
        self.generation_lock = threading.Lock()
        self._factory = model_factory
        self._loaded = threading.Event()
        self._httpd = _Httpd(("127.0.0.1", cfg.port), _Handler)
        self._httpd.adapter = self
        self._serve_thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    @property
    def endpoint(self) -> str:
        return f"http://127.0.0.1:{self.port}"

    def start(self) -> "AdapterServer":
        self._serve_thread = threading.Thread(
            target=self._httpd.serve_forever, daemon=True
        )
        self._serve_thread.start()
        threading.Thread(target=self._load, daemon=True).start()
        return self

    def _load(self) -> None:
        try:
            self.model = self._factory()
            log.info("model ready: %s", getattr(self.model, "model_id", "?"))
        except Exception as exc:
            self.load_error = exc
            log.error("model failed to load: %s", exc)
        finally:
            self._loaded.set()

    def wait_ready(self, timeout: float | None = None) -> bool:
        """Block until loading finished (well or badly); True when usable."""
        self._loaded.wait(timeout)
        return self.model is not None

    def join(self) -> None:
        """Block the calling thread until the server is shut down."""
        if self._serve_thread is not None:
            self._serve_thread.join()

    def shutdown(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()

    def __enter__(self) -> "AdapterServer":
        return self.start()

    def __exit__(self, *exc_info) -> None:
        self.shutdown()


def serve(cfg: AdapterConfig, echo: bool = False) -> AdapterServer:
    """Start serving and return the running server (non-blocking)."""
    from .models import load_model

    server = AdapterServer(cfg, lambda: load_model(cfg, echo=echo))
    return server.start()

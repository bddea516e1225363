"""Shared fixtures: live echo servers and a tiny HTTP post helper."""

from __future__ import annotations

import json
import urllib.error
import urllib.request

import pytest

from evmlift_adapter import AdapterConfig, AdapterServer, load_model


def make_echo_server(**cfg_kwargs) -> AdapterServer:
    cfg = AdapterConfig(port=0, **cfg_kwargs)
    server = AdapterServer(cfg, lambda: load_model(cfg, echo=True)).start()
    assert server.wait_ready(10), "echo model should load instantly"
    return server


@pytest.fixture(scope="session")
def echo_server():
    server = make_echo_server()
    yield server
    server.shutdown()


def http_json(url: str, body: dict | None = None, headers: dict | None = None):
    """POST body as JSON (or GET when body is None); return (status, payload)."""
    data = json.dumps(body).encode() if body is not None else None
    req = urllib.request.Request(url, data=data, headers=headers or {})
    try:
        with urllib.request.urlopen(req, timeout=10) as resp:
            return resp.status, json.loads(resp.read().decode())
    except urllib.error.HTTPError as err:
        return err.code, json.loads(err.read().decode())


def decompile_request(prompt: str, **overrides) -> dict:
    body = {
        "prompt": prompt,
        "max_new_tokens": 1024,
        "temperature": 0.0,
        "stop": ["<|tac|>", "<|solidity|>"],
    }
    body.update(overrides)
    return body

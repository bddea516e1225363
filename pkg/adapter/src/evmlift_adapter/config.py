"""Server configuration."""

from __future__ import annotations

from dataclasses import dataclass, field

TAC_DELIMITER = "<|tac|>"
SOLIDITY_DELIMITER = "<|solidity|>"

DEFAULT_STOP_SEQUENCES = (TAC_DELIMITER, SOLIDITY_DELIMITER)


@dataclass(frozen=True)
class AdapterConfig:
    """How to load the model and where to listen.

    `model_path_or_id` is a local path or hub id for a causal language
    model; the literal value "echo" selects the built-in echo model.
    `max_context` caps the prompt length in tokens; longer prompts are
    truncated from the front of their TAC section before generation.
    """

    model_path_or_id: str = "echo"
    device: str = "cpu"
    max_context: int = 20000
    port: int = 8000
    stop_sequences: tuple[str, ...] = field(default=DEFAULT_STOP_SEQUENCES)

    def __post_init__(self) -> None:
        if self.max_context <= 0:
            raise ValueError("max_context must be > 0")
        if not (0 <= self.port <= 65535):
            raise ValueError("port must be in 0..65535")
        if not self.model_path_or_id:
            raise ValueError("model_path_or_id must be non-empty")

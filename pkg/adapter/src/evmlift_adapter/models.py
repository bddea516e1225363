"""Generation backends: the echo model and a causal-LM wrapper.

Both expose `model_id` and `generate(prompt, max_new_tokens, temperature,
stop, seed)`. Generation is greedy at temperature 0 and nucleus sampling
otherwise, seeded from the request's X-Seed header when present.
"""

from __future__ import annotations

import re

from .config import SOLIDITY_DELIMITER, TAC_DELIMITER, AdapterConfig
from .tokenizer import count_tokens

_SELECTOR_LINE = re.compile(r"^selector:\s*0x([0-9a-fA-F]+)\s*$", re.MULTILINE)


def split_prompt(prompt: str) -> tuple[str, str, str]:
    """Split a prompt into (header, tac_section, tail) around the delimiters.

    The header runs up to and including the TAC delimiter line; the tail
    starts at the completion delimiter. A prompt without delimiters is all
    TAC section.
    """
    if TAC_DELIMITER not in prompt:
        return "", prompt, ""
    header, rest = prompt.split(TAC_DELIMITER, 1)
    header += TAC_DELIMITER
    if SOLIDITY_DELIMITER in rest:
        tac, tail = rest.split(SOLIDITY_DELIMITER, 1)
        return header, tac, SOLIDITY_DELIMITER + tail
    return header, rest, ""


def cut_at_stop(text: str, stop: list[str]) -> str:
    """Return text up to the earliest occurrence of any stop string."""
    cut = len(text)
    for s in stop:
        if s:
            found = text.find(s)
            if found != -1:
                cut = min(cut, found)
    return text[:cut]


class EchoModel:
    """Deterministic weight-free backend for protocol conformance testing.

    The completion is the prompt's TAC section wrapped in a Solidity
    function skeleton. Output is identical for identical prompts regardless
    of temperature or seed, never contains a requested stop string, and is
    capped at max_new_tokens by dropping trailing body lines (the two
    skeleton lines always survive so the output stays brace-balanced).
    """

    model_id = "echo"

    def generate(
        self,
        prompt: str,
        max_new_tokens: int,
        temperature: float,
        stop: list[str],
        seed: int | None = None,
    ) -> str:
        _, tac, _ = split_prompt(prompt)
        selector = _SELECTOR_LINE.search(prompt.split(TAC_DELIMITER, 1)[0])
        name = f"echo_{selector.group(1)}" if selector else "echo"
        body = [f"    // {line}" for line in tac.strip("\n").splitlines()]
        head, foot = f"function {name}() public {{", "}"
        while body and count_tokens("\n".join([head, *body, foot])) > max_new_tokens:
            body.pop()
        return cut_at_stop("\n".join([head, *body, foot]) + "\n", stop)


class CausalLMModel:
    """Wrapper over a locally loadable causal language model.

    Imports torch and transformers lazily so the echo mode works without
    them installed. Greedy decoding at temperature 0; nucleus sampling
    (top_p 0.95) otherwise, seeded when a seed is given.
    """

    def __init__(self, model_path_or_id: str, device: str = "cpu") -> None:
        try:
            import torch  # noqa: F401
            from transformers import AutoModelForCausalLM, AutoTokenizer
        except ImportError as exc:
            raise RuntimeError(
                "loading a real model needs the 'model' extra "
                "(pip install evmlift-adapter[model])"
            ) from exc
        self.model_id = model_path_or_id
        self._device = device
        self._tokenizer = AutoTokenizer.from_pretrained(model_path_or_id)
        self._model = AutoModelForCausalLM.from_pretrained(model_path_or_id)
        self._model.to(device)
        self._model.eval()
        if self._tokenizer.pad_token_id is None:
            self._tokenizer.pad_token = self._tokenizer.eos_token

    def generate(
        self,
        prompt: str,
        max_new_tokens: int,
        temperature: float,
        stop: list[str],
        seed: int | None = None,
    ) -> str:
        import torch

        if temperature > 0 and seed is not None:
            torch.manual_seed(seed)
        inputs = self._tokenizer(prompt, return_tensors="pt").to(self._device)
        kwargs = dict(
            max_new_tokens=max_new_tokens,
            pad_token_id=self._tokenizer.pad_token_id,
        )
        if temperature > 0:
            kwargs.update(do_sample=True, temperature=temperature, top_p=0.95)
        else:
            kwargs.update(do_sample=False)
        with torch.no_grad():
            output = self._model.generate(**inputs, **kwargs)
        new_tokens = output[0][inputs["input_ids"].shape[1] :]
        text = self._tokenizer.decode(new_tokens, skip_special_tokens=True)
        return cut_at_stop(text, stop)


def load_model(cfg: AdapterConfig, echo: bool = False):
    """Build the generation backend the config asks for."""
    if echo or cfg.model_path_or_id == "echo":
        return EchoModel()
    return CausalLMModel(cfg.model_path_or_id, cfg.device)

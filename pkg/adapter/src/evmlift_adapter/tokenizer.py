"""Server-side token counting.

The protocol's token counts use a plain text rule, not a model vocabulary:
each run of identifier characters is one token and every other non-space
character is its own token. The `prompt_tokens` and `completion_tokens`
fields in responses, and the `max_context` budget, are all counted with
this tokenizer.
"""

from __future__ import annotations

import re

_TOKEN_RE = re.compile(r"[A-Za-z0-9_$]+|[^\sA-Za-z0-9_$]")


def tokenize(text: str) -> list[str]:
    """Split text into identifier runs and single punctuation characters."""
    return _TOKEN_RE.findall(text)


def count_tokens(text: str) -> int:
    return len(tokenize(text))

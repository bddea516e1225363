"""Read the optional evmlift.toml configuration file.

Only the subset of TOML the config actually needs is supported: top-level and
dotted `[section]` headers, and `key = value` lines where the value is a
double-quoted string, an integer, a float, or a boolean. Comments start with
`#`. The interpreter running this package predates the standard library TOML
parser, and a third-party dependency for four value types is not worth it.

The returned mapping nests sections as dictionaries, shaped for use as a
click default_map: `[dataset.build]` becomes config["dataset"]["build"].
"""

from __future__ import annotations

import re
from pathlib import Path

__all__ = ["ConfigError", "parse_config", "load_config"]


class ConfigError(ValueError):
    """The config file does not follow the supported subset."""

    def __init__(self, message: str, line_no: int):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


_SECTION_RE = re.compile(r"^\[([A-Za-z0-9_.-]+)\]$")
_KEY_RE = re.compile(r"^([A-Za-z0-9_-]+)\s*=\s*(.+)$")
_STRING_RE = re.compile(r'^"((?:[^"\\]|\\.)*)"$')
_INT_RE = re.compile(r"^[+-]?[0-9]+$")
_FLOAT_RE = re.compile(r"^[+-]?([0-9]+\.[0-9]*|\.[0-9]+|[0-9]+)([eE][+-]?[0-9]+)?$")


def _strip_comment(line: str) -> str:
    out: list[str] = []
    in_string = False
    i = 0
    while i < len(line):
        ch = line[i]
        if ch == '"' and (i == 0 or line[i - 1] != "\\"):
            in_string = not in_string
        if ch == "#" and not in_string:
            break
        out.append(ch)
        i += 1
    return "".join(out)


def _parse_value(raw: str, line_no: int) -> object:
    raw = raw.strip()
    m = _STRING_RE.match(raw)
    if m:
        return m.group(1).replace('\\"', '"').replace("\\\\", "\\")
    if raw == "true":
        return True
    if raw == "false":
        return False
    if _INT_RE.match(raw):
        return int(raw)
    if _FLOAT_RE.match(raw):
        return float(raw)
    raise ConfigError(f"unsupported value {raw!r}", line_no)


def parse_config(text: str) -> dict:
    """Parse config text into nested dictionaries keyed by section path."""
    root: dict = {}
    current = root
    for line_no, raw_line in enumerate(text.splitlines(), 1):
        line = _strip_comment(raw_line).strip()
        if not line:
            continue
        section = _SECTION_RE.match(line)
        if section:
            current = root
            for part in section.group(1).split("."):
                node = current.setdefault(part, {})
                if not isinstance(node, dict):
                    raise ConfigError(
                        f"section [{section.group(1)}] collides with a key", line_no
                    )
                current = node
            continue
        kv = _KEY_RE.match(line)
        if kv:
            current[kv.group(1)] = _parse_value(kv.group(2), line_no)
            continue
        raise ConfigError(f"cannot parse {line!r}", line_no)
    return root


def load_config(path: str | Path | None) -> dict:
    """Load a config file; a missing default file is an empty config."""
    if path is None:
        candidate = Path("evmlift.toml")
        if not candidate.is_file():
            return {}
        path = candidate
    return parse_config(Path(path).read_text(encoding="utf-8"))

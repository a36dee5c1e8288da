"""Plain-text ``key = value`` configuration files mapped onto dataclasses."""

from __future__ import annotations

import hashlib
from dataclasses import fields
from pathlib import Path
from typing import Any


class ConfigFileError(ValueError):
    pass


def parse_kv(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse ``key = value`` lines. ``#`` starts a comment; blank lines are skipped."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigFileError(f"{source}:{lineno}: expected key = value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigFileError(f"{source}:{lineno}: empty key")
        out[key] = value
    return out


def _coerce(raw: str, kind: str, key: str) -> Any:
    kind = kind.replace(" ", "")
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind.startswith("tuple[int"):
            return tuple(int(x) for x in raw.replace(",", " ").split())
        if kind.startswith("tuple[float"):
            return tuple(float(x) for x in raw.replace(",", " ").split())
        return raw
    except ValueError:
        raise ConfigFileError(f"{key}: cannot read {raw!r} as {kind}") from None


def from_mapping(cls, values: dict[str, str], source: str = "<config>"):
    """Build dataclass ``cls`` from string values; unknown keys are rejected."""
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise ConfigFileError(f"{source}: unknown key(s) {', '.join(unknown)}")
    kw = {k: _coerce(v, str(known[k].type), k) for k, v in values.items()}
    return cls(**kw)


def load(cls, path, overrides: dict[str, str] | None = None):
    path = Path(path)
    values = parse_kv(path.read_text(), str(path))
    values.update(overrides or {})
    return from_mapping(cls, values, str(path))


def dump(obj) -> str:
    lines = []
    for f in fields(obj):
        v = getattr(obj, f.name)
        if isinstance(v, tuple):
            v = " ".join(repr(x) if isinstance(x, float) else str(x) for x in v)
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def config_hash(obj) -> str:
    return hashlib.sha256(dump(obj).encode()).hexdigest()[:16]

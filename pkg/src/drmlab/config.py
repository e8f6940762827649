"""Key-value configuration file.

One ``key = value`` per line; ``#`` starts a comment. Recognized keys::

    precedence    = UntilKind, IntervalKind, CountKind, Unconstrained
    chooser       = labeled
    horizon       = 40
    corpus_bounds = licenses=2,assets=2,actions=1,count=2,deadline=2,horizon=4
    state_cap     = 2000000

The path comes from ``--config`` or the ``DRMLAB_CONFIG`` environment
variable; every key has a default.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .choosers import CHOOSERS, parse_precedence
from .rel import DEFAULT_PRECEDENCE
from .verifier import DEFAULT_STATE_CAP, Bounds

ENV_VAR = "DRMLAB_CONFIG"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Config:
    precedence: tuple = DEFAULT_PRECEDENCE
    chooser: str = "oma"
    horizon: int = 40
    corpus_bounds: Bounds = field(default_factory=lambda: Bounds(2, 2, 1, 2, 2, 4))
    state_cap: int = DEFAULT_STATE_CAP


def parse_config(text: str, source: str = "<config>") -> Config:
    values = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        where = f"{source}:{n}"
        if not sep:
            raise ConfigError(f"{where}: expected key = value")
        try:
            if key == "precedence":
                values[key] = parse_precedence(v for v in value.split(",") if v.strip())
            elif key == "chooser":
                if value not in CHOOSERS:
                    raise ValueError(f"chooser must be one of {sorted(CHOOSERS)}")
                values[key] = value
            elif key in ("horizon", "state_cap"):
                values[key] = int(value)
                if values[key] < 1:
                    raise ValueError(f"{key} must be >= 1")
            elif key == "corpus_bounds":
                values[key] = Bounds.parse(value)
            else:
                raise ValueError(f"unknown key {key!r}")
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from None
    return Config(**values)


def load_config(path: Optional[str] = None) -> Config:
    path = path or os.environ.get(ENV_VAR)
    if not path:
        return Config()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return parse_config(text, path)

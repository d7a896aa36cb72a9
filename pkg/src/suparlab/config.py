"""Flat key/value config files with dot-path keys and typed values.

Format, one entry per line::

    model.d_model = 128
    sweep.lr_exponents = [-10, -9, -8]
    model.scheme = "supar"
    # comments and blank lines are ignored

Values are int, float, string (quoted or bare), or a flat list of those.
Floats serialize via repr() so a write/read cycle is bit-exact. Every known
key has a typed default; unknown keys and type mismatches are rejected so a
typo cannot silently change an experiment.
"""

from __future__ import annotations

import re
from pathlib import Path

from .errors import ConfigError

# key -> (type, default). "number" accepts int or float and normalizes to float.
# list defaults are copied on resolve.
SCHEMA: dict[str, tuple[str, object]] = {
    "experiment.kind": ("str", "train"),
    "model.d_model": ("int", 128),
    "model.n_layers": ("int", 2),
    "model.d_head": ("int", 64),
    "model.vocab_size": ("int", 256),
    "model.seq_len": ("int", 128),
    "model.density": ("number", 1.0),
    "model.scheme": ("str", "supar"),
    "model.dtype": ("str", "float32"),
    "base.sigma": ("number", 0.08665602),
    "base.eta": ("number", 0.0162),
    "base.alpha_input": ("number", 9.1705),
    "base.alpha_output": ("number", 1.0951835),
    "base.d_base": ("int", 256),
    "base.rho_base": ("number", 1.0),
    "optimizer.kind": ("str", "adamw"),
    "optimizer.beta1": ("number", 0.9),
    "optimizer.beta2": ("number", 0.95),
    "optimizer.eps": ("number", 1e-08),
    "optimizer.weight_decay": ("number", 0.0),
    "optimizer.momentum": ("number", 0.0),
    "schedule.kind": ("str", "linear-decay-to-tenth"),
    "schedule.warmup_steps": ("int", 30),
    "train.steps": ("int", 300),
    "train.batch_size": ("int", 8),
    "train.log_every": ("int", 10),
    "train.val_batches": ("int", 4),
    "train.seed": ("int", 0),
    "train.seeds": ("list", [0, 1, 2]),
    "train.collect_stats": ("int", 0),
    "data.corpus": ("str", "builtin"),
    "data.seed": ("int", 1234),
    "sweep.kind": ("str", "lr"),  # lr | init
    "sweep.schemes": ("list", ["sp", "supar"]),
    "sweep.densities": ("list", [1.0, 0.25, 0.0625]),
    "sweep.widths": ("list", [128]),
    "sweep.lr_exponents": ("list", [-10, -9, -8, -7, -6, -5, -4, -3, -2]),
    "sweep.init_exponents": ("list", [-7, -6, -5, -4, -3, -2, -1]),
    "sweep.select": ("str", "val"),  # val | train
    "sweep.family": ("str", "fixed-width"),  # fixed-width | iso-wpn | iso-parameter
    "coordcheck.widths": ("list", [128, 256, 512]),
    "coordcheck.densities": ("list", [1.0, 0.25, 0.0625]),
    "coordcheck.steps": ("int", 10),
    "coordcheck.seeds": ("int", 10),
    "coordcheck.statistic": ("str", "first-projection"),
    "probe.steps": ("int", 1),
    "probe.widths": ("list", [128, 512]),
    "probe.densities": ("list", [1.0, 0.0625]),
    "probe.seeds": ("int", 10),
    "scale.base_width": ("int", 256),
    "scale.base_density": ("number", 1.0),
    "scale.head_size": ("int", 64),
    "dst.method": ("str", "rigl"),  # rigl | gmp
    "dst.update_interval": ("int", 100),
    "dst.drop_fraction": ("number", 0.3),
    "dst.final_sparsity": ("number", 0.75),
    "dst.end_step": ("int", 200),
    "dst.reset_moments": ("int", 1),
    "oracle.samples": ("int", 1000000),
    "oracle.seed": ("int", 7),
    "out.dir": ("str", "runs"),
}

_INT_RE = re.compile(r"^[+-]?\d+$")
_BARE_RE = re.compile(r"^[A-Za-z0-9_.\-+/]+$")


def _parse_scalar(text: str):
    text = text.strip()
    if not text:
        raise ConfigError("empty value")
    if text.startswith('"') and text.endswith('"') and len(text) >= 2:
        return text[1:-1]
    if _INT_RE.match(text):
        return int(text)
    try:
        return float(text)
    except ValueError:
        pass
    if _BARE_RE.match(text):
        return text
    raise ConfigError(f"cannot parse value {text!r}")


def parse_value(text: str):
    text = text.strip()
    if text.startswith("["):
        if not text.endswith("]"):
            raise ConfigError(f"unterminated list {text!r}")
        inner = text[1:-1].strip()
        if not inner:
            return []
        return [_parse_scalar(part) for part in inner.split(",")]
    return _parse_scalar(text)


def format_value(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, str):
        return f'"{value}"'
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(format_value(v) if not isinstance(v, str)
                               else f'"{v}"' for v in value) + "]"
    raise ConfigError(f"unsupported config value type {type(value).__name__}")


def _coerce(key: str, value):
    if key not in SCHEMA:
        raise ConfigError(f"unknown config key {key!r}")
    kind, _ = SCHEMA[key]
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key} expects an integer, got {value!r}")
        return value
    if kind == "number":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} expects a number, got {value!r}")
        return float(value)
    if kind == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{key} expects a string, got {value!r}")
        return value
    if kind == "list":
        if not isinstance(value, list):
            raise ConfigError(f"{key} expects a list, got {value!r}")
        return list(value)
    raise ConfigError(f"bad schema kind {kind!r}")


def default_config() -> dict:
    out = {}
    for key, (kind, default) in SCHEMA.items():
        out[key] = list(default) if kind == "list" else default
    return out


def parse_config_text(text: str) -> dict:
    """Parse file contents into a {key: value} dict (no defaults applied)."""
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        # allow trailing comments after the value, but not inside strings/lists
        val = val.strip()
        if "#" in val and not val.startswith('"') and not val.startswith("["):
            val = val.split("#", 1)[0].strip()
        try:
            parsed = parse_value(val)
        except ConfigError as e:
            raise ConfigError(f"line {lineno}: {e}") from None
        out[key] = _coerce(key, parsed)
    return out


def load_config(path: str | Path | None, overrides: list[str] | None = None) -> dict:
    """Defaults, then file entries, then key=value override strings."""
    cfg = default_config()
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {path}")
        cfg.update(parse_config_text(p.read_text()))
    for ov in overrides or []:
        if "=" not in ov:
            raise ConfigError(f"override must be key=value, got {ov!r}")
        key, _, val = ov.partition("=")
        key = key.strip()
        cfg[key] = _coerce(key, parse_value(val))
    return cfg


def dump_config(cfg: dict) -> str:
    """Canonical serialization (sorted keys); parse(dump(c)) == c bit-exactly."""
    lines = [f"{key} = {format_value(cfg[key])}" for key in sorted(cfg)]
    return "\n".join(lines) + "\n"

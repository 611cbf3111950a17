"""Run configuration: INI files with a strict schema.

Every key has a typed default; unknown sections or keys are an error rather
than a silent ignore. A run's identity is the 64-bit FNV-1a hash of the
canonical text of its fully resolved configuration, and that hash is stamped
into every artifact the command-line front end writes.
"""

from __future__ import annotations

import configparser
import io

from .errors import ConfigError
from .rng import fnv1a_64

SCHEMA = {
    "run": {
        "seed": 0,
        "out": "out",
        "workers": 1,
        "dataset": "arithmetic",  # arithmetic | grammar
    },
    "data": {
        "n_train": 2000,
        "n_eval": 200,
        "digit_lo": 1,
        "digit_hi": 1,
        "response_len": 4,  # 0 = natural length (answer digits + end-of-text)
        "grammar_file": "",
        "n_choices": 4,
    },
    "model": {
        "width": 64,
        "heads": 4,
        "layers": 2,
        "context": 64,
    },
    "train": {
        "steps": 2000,
        "lr": 0.05,
        "batch_size": 16,
        "objective": "masked",  # masked | causal
        "mask_region": "all",  # all | response
        "carry_weight": 0.0,
        "carry_random_frac": 0.0,
    },
    "score": {
        "method": "dise",  # dise | mc | ar
        "selection": "last10",
        "n_mc": 32,
        "per_token": False,
    },
    "generate": {
        "length": 4,
        "block_size": 4,
        "tokens_per_step": 2,
        "temperature": 0.0,
    },
    "flexgen": {
        "base_length": 4,
        "max_iterations": 10,
        "patience": 4,
        "initial_mask": 20,
    },
    "uq": {
        "n_answers": 5,
        "n_questions": 200,
    },
    "remote": {
        "endpoint": "",
        "timeout": 10.0,
        "retries": 2,
    },
}


def default_config() -> dict:
    return {s: dict(keys) for s, keys in SCHEMA.items()}


def _coerce(section: str, key: str, raw: str):
    default = SCHEMA[section][key]
    try:
        if isinstance(default, bool):
            lowered = raw.strip().lower()
            if lowered in ("true", "yes", "on", "1"):
                return True
            if lowered in ("false", "no", "off", "0"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(
            f"[{section}] {key}: cannot parse {raw!r} as {type(default).__name__}"
        ) from None


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Defaults, overlaid with an INI file, overlaid with 'section.key' overrides."""
    cfg = default_config()
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path, "r", encoding="utf-8") as f:
                parser.read_file(f)
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
        except configparser.Error as e:
            raise ConfigError(f"bad config {path}: {e}") from None
        for section in parser.sections():
            if section not in SCHEMA:
                raise ConfigError(f"unknown config section [{section}]")
            for key, raw in parser.items(section):
                if key not in SCHEMA[section]:
                    raise ConfigError(f"unknown config key [{section}] {key}")
                cfg[section][key] = _coerce(section, key, raw)
    for dotted, value in (overrides or {}).items():
        section, _, key = dotted.partition(".")
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"unknown config key [{section}] {key}")
        cfg[section][key] = (
            _coerce(section, key, str(value)) if isinstance(value, str) else value
        )
    return cfg


def canonical_text(cfg: dict) -> str:
    """Stable text form: sorted sections and keys, repr-exact values."""
    buf = io.StringIO()
    for section in sorted(cfg):
        buf.write(f"[{section}]\n")
        for key in sorted(cfg[section]):
            value = cfg[section][key]
            if isinstance(value, float):
                text = repr(value)
            elif isinstance(value, bool):
                text = "true" if value else "false"
            else:
                text = str(value)
            buf.write(f"{key} = {text}\n")
        buf.write("\n")
    return buf.getvalue()


def config_hash(cfg: dict) -> str:
    return f"{fnv1a_64(canonical_text(cfg).encode('utf-8')):016x}"


def save_config(cfg: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(canonical_text(cfg))

import dataclasses
import json
import os
from pathlib import Path

import torch
from dotenv import load_dotenv

from .errors import InvalidInputError, SchemaError

load_dotenv()

CONFIG_SECTIONS = ("protocol", "babbs", "corruption", "train", "nlms", "vanilla")


def thread_cap():
    """Read CPRLAB_THREADS from the environment (or .env); None when unset"""
    raw = os.getenv("CPRLAB_THREADS")
    if raw is None or raw.strip() == "":
        return None
    try:
        threads = int(raw)
    except ValueError:
        raise InvalidInputError(f"CPRLAB_THREADS must be a positive integer, got '{raw}'")
    if threads < 1:
        raise InvalidInputError(f"CPRLAB_THREADS must be a positive integer, got '{raw}'")
    return threads


def apply_thread_cap():
    threads = thread_cap()
    if threads is not None:
        torch.set_num_threads(threads)
    return threads


def load_config_file(path):
    """Load a JSON config file holding any of the known sections"""
    if path is None:
        return {}
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise InvalidInputError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise SchemaError(f"config file {path} is not valid JSON: {e}")
    if not isinstance(raw, dict):
        raise SchemaError(f"config file {path} must hold a JSON object")

    unknown = sorted(set(raw) - set(CONFIG_SECTIONS))
    if unknown:
        raise SchemaError(f"unknown config sections {unknown}; expected {list(CONFIG_SECTIONS)}")
    return raw


def resolve_section(config_cls, file_config, section, overrides=None):
    """Build a config dataclass: CLI overrides > config file > defaults"""
    values = config_cls().to_dict()
    values.update(file_config.get(section, {}))
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    return config_cls.from_dict(values)


class ConfigMixin:
    """to_dict/from_dict for the flat configuration dataclasses"""

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise SchemaError(f"{cls.__name__} expects a JSON object, got {type(data).__name__}")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise SchemaError(f"unknown {cls.__name__} fields {unknown}; expected {sorted(known)}")
        return cls(**data)

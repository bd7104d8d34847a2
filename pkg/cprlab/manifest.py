import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .dataset import dumps_json, file_digest, json_safe, write_atomic
from .errors import SchemaError, VersionMismatchError

TOOL_VERSION = "1.0.0"
MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.json"


def canonical_json(obj):
    return json.dumps(json_safe(obj), sort_keys=True, separators=(",", ":"), allow_nan=False).encode("utf-8")


def config_hash(config):
    """SHA-256 of the canonical JSON of the effective configuration"""
    return hashlib.sha256(canonical_json(config)).hexdigest()


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    """Record of one CLI run: effective config, seeds and every file read or written"""

    command: str
    config: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    input_paths: list = field(default_factory=list)
    output_paths: list = field(default_factory=list)
    tool_version: str = TOOL_VERSION
    timestamps: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.timestamps.setdefault("started", _now())

    @property
    def config_hash(self):
        return config_hash({"command": self.command, "config": self.config, "seeds": self.seeds})

    def add_inputs(self, paths):
        self.input_paths.extend(str(p) for p in paths)

    def add_outputs(self, paths):
        self.output_paths.extend(str(p) for p in paths)

    def to_dict(self):
        return {
            "manifest_version": MANIFEST_VERSION,
            "command": self.command,
            "config_hash": self.config_hash,
            "config": self.config,
            "seeds": self.seeds,
            "input_paths": sorted(self.input_paths),
            "output_paths": sorted(self.output_paths),
            "output_digests": {
                p: file_digest(p) for p in sorted(self.output_paths)
                if Path(p).name != MANIFEST_NAME and Path(p).exists()
            },
            "tool_version": self.tool_version,
            "timestamps": self.timestamps,
            **self.extra,
        }

    def write(self, out_dir):
        """Write manifest.json into out_dir; the manifest lists itself as an output"""
        path = Path(out_dir) / MANIFEST_NAME
        if str(path) not in self.output_paths:
            self.output_paths.append(str(path))
        self.timestamps["finished"] = _now()
        return write_atomic(path, dumps_json(self.to_dict()))


def load_manifest(path):
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise SchemaError(f"cannot read run manifest {path}: {e}")
    if data.get("manifest_version") != MANIFEST_VERSION:
        raise VersionMismatchError(
            f"manifest {path} has version {data.get('manifest_version')}, this build reads version {MANIFEST_VERSION}"
        )
    known = {"command", "config", "seeds", "input_paths", "output_paths", "tool_version", "timestamps"}
    skip = known | {"manifest_version", "config_hash", "output_digests"}
    manifest = RunManifest(**{k: data[k] for k in known if k in data})
    manifest.extra = {k: v for k, v in data.items() if k not in skip}
    return manifest

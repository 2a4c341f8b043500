"""Experiment configuration and run manifests.

Configs are versioned JSON; a manifest echoes the resolved config, the
package version, per-stage diagnostics, and a SHA-256 inventory of
every artifact file.  The manifest fingerprint covers everything except
wall-clock timestamps, so reruns of an identical config are comparable
by a single hash.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

SCHEMA_VERSION = 1

_DEFAULT_G = {"2,1": [0.5, 0.0], "1,2": [0.5, 0.0], "2,2": [0.25, 0.0]}


@dataclass
class ExperimentConfig:
    """Resolved parameters for one pipeline run."""

    J: int = 4
    r: int = 4
    k: int = 1
    seed: int = 0
    gamma: float | None = None
    delta: float = 4.0
    g: dict = field(default_factory=lambda: dict(_DEFAULT_G))
    s_list: list = field(default_factory=lambda: [1.0])
    eps_list: list = field(default_factory=lambda: [0.1, 0.05])
    dt: float = 1e-3
    T: float = 10.0
    out_dir: str = "runs/default"
    schema_version: int = SCHEMA_VERSION

    def validate(self) -> None:
        if self.schema_version != SCHEMA_VERSION:
            raise ValueError(
                f"config schema {self.schema_version} not supported (expected {SCHEMA_VERSION})"
            )
        if self.r < 3:
            raise ValueError("normalization order r must be at least 3")
        if self.J < 1:
            raise ValueError("cutoff J must be at least 1")
        if self.k < 1:
            raise ValueError("multiplier class k must be at least 1")
        if self.dt <= 0 or self.T <= 0:
            raise ValueError("dt and T must be positive")
        if self.gamma is not None and self.gamma <= 0:
            raise ValueError("gamma must be positive when given")
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")
        if not self.s_list:
            raise ValueError("s_list must not be empty")
        for key in self.g:
            l, m = self._parse_g_key(key)
            if l + m < 3:
                raise ValueError(f"g term ({l},{m}) has total degree below 3")
            if l + m > self.r:
                raise ValueError(
                    f"g term ({l},{m}) exceeds the normalization order r={self.r}"
                )
        self.g_pairs()

    @staticmethod
    def _parse_g_key(key) -> tuple[int, int]:
        if isinstance(key, str):
            l, m = key.split(",")
            return int(l), int(m)
        l, m = key
        return int(l), int(m)

    def g_pairs(self) -> dict[tuple[int, int], complex]:
        out = {}
        for key, val in self.g.items():
            lm = self._parse_g_key(key)
            if isinstance(val, (list, tuple)):
                out[lm] = complex(val[0], val[1] if len(val) > 1 else 0.0)
            else:
                out[lm] = complex(val)
        return out

    def to_dict(self) -> dict:
        return asdict(self)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def config_hash(self) -> str:
        """Hash of the scientific content (output location excluded)."""
        payload = {k: v for k, v in self.to_dict().items() if k != "out_dir"}
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    """Everything needed to audit or reproduce one pipeline run."""

    config: dict
    config_hash: str
    code_version: str
    stages: dict = field(default_factory=dict)
    files: dict = field(default_factory=dict)
    timestamps: dict = field(default_factory=dict)

    def record_file(self, root: Path, path: Path) -> None:
        self.files[str(path.relative_to(root))] = file_sha256(path)

    def fingerprint(self) -> str:
        """Deterministic digest of the run; timestamps excluded."""
        payload = {
            "config_hash": self.config_hash,
            "code_version": self.code_version,
            "stages": self.stages,
            "files": self.files,
        }
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode()).hexdigest()

    def save(self, path) -> None:
        data = {
            "config": self.config,
            "config_hash": self.config_hash,
            "code_version": self.code_version,
            "stages": self.stages,
            "files": self.files,
            "timestamps": self.timestamps,
            "fingerprint": self.fingerprint(),
        }
        with open(path, "w") as fh:
            json.dump(data, fh, indent=2, sort_keys=True, default=str)

    @classmethod
    def load(cls, path) -> "RunManifest":
        with open(path) as fh:
            data = json.load(fh)
        return cls(
            config=data["config"],
            config_hash=data["config_hash"],
            code_version=data["code_version"],
            stages=data["stages"],
            files=data["files"],
            timestamps=data["timestamps"],
        )

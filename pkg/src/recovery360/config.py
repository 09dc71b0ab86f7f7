"""Run configuration: one JSON file, flag overrides, and per-stage hashes."""

from __future__ import annotations

import dataclasses
import datetime as dt
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from typing import Any, Optional

from .features import P_SET
from .model import TrainConfig
from .pitchcontrol import PcParams

OUT_ENV = "RECOVERY360_OUT"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Every tunable of a pipeline run.

    Keys mirror the JSON config file; nested ``pc`` and ``train`` sections
    hold :class:`PcParams` and :class:`TrainConfig` fields.
    """

    manifest: str = ""
    out_dir: str = ""
    k: int = 4
    tau1: int = 3
    tau2: int = 1
    n_att: int = 5
    n_def: int = 5
    p_set: tuple = P_SET
    pc: PcParams = field(default_factory=PcParams)
    train: TrainConfig = field(default_factory=TrainConfig)
    retention_threshold: float = 0.90
    turnover_threshold: float = 0.10
    hospital_delta: float = 0.75
    hospital_min_count: int = 10
    zone_cols: int = 6
    zone_rows: int = 3
    split_fraction: float = 0.8
    sweep_ks: tuple = tuple(range(1, 11))
    # [[label, "YYYY-MM-DD", "YYYY-MM-DD"], ...]; empty -> one bucket over all dates
    period_ranges: tuple = ()
    period_team: Optional[int] = None
    threads: int = 1

    def __post_init__(self):
        if isinstance(self.pc, dict):
            self.pc = PcParams(**self.pc)
        if isinstance(self.train, dict):
            self.train = TrainConfig(**self.train)
        self.p_set = tuple(float(p) for p in self.p_set)
        self.sweep_ks = tuple(int(k) for k in self.sweep_ks)
        self.period_ranges = tuple(tuple(r) for r in self.period_ranges)
        self.validate()

    def validate(self) -> None:
        if self.k < 1 or self.tau1 < 1 or self.tau2 < 1:
            raise ConfigError("k, tau1 and tau2 must be >= 1")
        if self.tau2 > self.tau1:
            raise ConfigError("tau2 cannot exceed tau1")
        if self.n_att < 1 or self.n_def < 1:
            raise ConfigError("n_att and n_def must be >= 1")
        if list(self.p_set) != sorted(self.p_set) or not all(0 < p <= 1 for p in self.p_set):
            raise ConfigError("p_set must be increasing values in (0, 1]")
        if not 0 < self.split_fraction <= 1:
            raise ConfigError("split_fraction must lie in (0, 1]")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        for r in self.period_ranges:
            if len(r) != 3:
                raise ConfigError(f"period range {r!r} must be [label, start, end]")
        ranges = sorted(self.date_ranges(), key=lambda r: r[1])
        for a, b in zip(ranges, ranges[1:]):
            if b[1] < a[2]:
                raise ConfigError(f"period ranges {a[0]!r} and {b[0]!r} overlap")

    def date_ranges(self) -> list[tuple[str, dt.date, dt.date]]:
        try:
            return [(str(l), dt.date.fromisoformat(s), dt.date.fromisoformat(e)) for l, s, e in self.period_ranges]
        except ValueError as e:
            raise ConfigError(f"bad date in period_ranges: {e}") from e

    @property
    def output_root(self) -> str:
        return self.out_dir or os.environ.get(OUT_ENV) or "runs"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["p_set"] = list(self.p_set)
        d["sweep_ks"] = list(self.sweep_ks)
        d["period_ranges"] = [list(r) for r in self.period_ranges]
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def with_overrides(self, **kw) -> "RunConfig":
        d = self.to_dict()
        for key, value in kw.items():
            _assign(d, key, value)
        return from_dict(d)


def _assign(d: dict, dotted: str, value: Any) -> None:
    parts = dotted.split(".")
    node = d
    for p in parts[:-1]:
        if p not in node or not isinstance(node[p], dict):
            raise ConfigError(f"unknown config section {p!r} in {dotted!r}")
        node = node[p]
    if parts[-1] not in node:
        raise ConfigError(f"unknown config key {dotted!r}")
    node[parts[-1]] = value


def from_dict(d: dict) -> RunConfig:
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(d) - known)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    for section, cls in (("pc", PcParams), ("train", TrainConfig)):
        if section in d and isinstance(d[section], dict):
            bad = sorted(set(d[section]) - {f.name for f in dataclasses.fields(cls)})
            if bad:
                raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(bad)}")
    try:
        return RunConfig(**d)
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(str(e)) from e


def load_config(path: Optional[str]) -> RunConfig:
    if not path:
        return RunConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}") from e
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    if d.get("manifest") and not os.path.isabs(d["manifest"]):
        d["manifest"] = os.path.join(os.path.dirname(os.path.abspath(path)), d["manifest"])
    return from_dict(d)


def parse_value(text: str) -> Any:
    """Flag values are JSON when they parse as JSON, plain strings otherwise."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def digest(*parts) -> str:
    blob = json.dumps(parts, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def file_digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()[:16]

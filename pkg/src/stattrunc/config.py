"""Experiment configuration: schema, YAML loading, problem materialization.

A config names a model, the regeneration/center sets via ``z`` and
``K_max`` (K = {0..K_max}), a sweep of truncation sizes ``a_values``
(A = {0..a-1}), a reward, an h mode, and solver/oracle/output settings.
The CLI only sweeps contiguous prefixes; the library underneath accepts
arbitrary finite A.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Callable, Mapping

import yaml

from .chain import ChainModel
from .models import (
    Gm1Params,
    LyapunovCertificate,
    gm1_certificate,
    gm1_chain,
    load_chain_from_file,
    random_walk_certificate,
    random_walk_chain,
)

MODELS = ("gm1", "random_walk")
REWARDS = ("identity", "half")
H_MODES = ("exact", "paper_literal")
FORMATS = ("csv", "json")


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


@dataclass(frozen=True)
class SolverSettings:
    tol: float = 1e-12
    max_iter: int = 10**6
    memory_budget: int = 10**8
    method: str = "auto"


@dataclass(frozen=True)
class OracleSettings:
    enabled: bool = False
    n_cycles: int = 20000
    seed: int = 12345


@dataclass(frozen=True)
class OutputSettings:
    format: str = "csv"
    path: str | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    model: str
    z: int
    K_max: int
    a_values: tuple[int, ...]
    r_spec: str = "identity"
    h_mode: str = "exact"
    model_params: Mapping = field(default_factory=dict)
    solver: SolverSettings = SolverSettings()
    oracle: OracleSettings = OracleSettings()
    output: OutputSettings = OutputSettings()

    def __post_init__(self):
        if not (self.model in MODELS or self.model.startswith("file:")):
            raise ConfigError(f"model must be one of {MODELS} or 'file:<path>', "
                              f"got {self.model!r}")
        if not (self.r_spec in REWARDS or self.r_spec.startswith("file:")):
            raise ConfigError(f"r_spec must be one of {REWARDS} or 'file:<path>', "
                              f"got {self.r_spec!r}")
        if self.h_mode not in H_MODES:
            raise ConfigError(f"h_mode must be one of {H_MODES}, got {self.h_mode!r}")
        if self.h_mode == "paper_literal" and self.model not in MODELS:
            raise ConfigError("h_mode 'paper_literal' is only defined for the "
                              "built-in gm1/random_walk models")
        if not self.a_values:
            raise ConfigError("a_values must be non-empty")
        if any(b <= a for a, b in zip(self.a_values, self.a_values[1:])):
            raise ConfigError("a_values must be strictly increasing")
        if not 0 <= self.z <= self.K_max:
            raise ConfigError(f"need 0 <= z <= K_max, got z={self.z}, K_max={self.K_max}")
        if self.K_max >= min(self.a_values):
            raise ConfigError(f"need K_max < min(a_values), got K_max={self.K_max}, "
                              f"min a={min(self.a_values)}")
        if self.output.format not in FORMATS:
            raise ConfigError(f"output.format must be one of {FORMATS}")


_SCHEMA = {
    "model": str, "z": int, "K_max": int, "a_values": list,
    "r_spec": str, "h_mode": str, "model_params": dict,
    "solver": dict, "oracle": dict, "output": dict,
}
_REQUIRED = ("model", "z", "K_max", "a_values")


def _section(raw: Mapping, name: str, cls):
    sub = raw.get(name, {})
    if not isinstance(sub, Mapping):
        raise ConfigError(f"section '{name}' must be a mapping")
    allowed = set(cls.__dataclass_fields__)
    unknown = set(sub) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in '{name}': {sorted(unknown)} "
                          f"(allowed: {sorted(allowed)})")
    try:
        return cls(**sub)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad '{name}' section: {exc}") from exc


def parse_config(raw: Mapping, base_dir: str = ".") -> ExperimentConfig:
    """Validate a raw mapping into an ExperimentConfig.

    Relative 'file:' paths in model and r_spec are resolved against
    ``base_dir`` (the config file's directory when loaded from disk).
    """
    if not isinstance(raw, Mapping):
        raise ConfigError("config root must be a mapping")
    unknown = set(raw) - set(_SCHEMA)
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    missing = [k for k in _REQUIRED if k not in raw]
    if missing:
        raise ConfigError(f"missing required keys: {missing}")
    for key, typ in _SCHEMA.items():
        if key in raw and not isinstance(raw[key], typ) or \
                key in ("z", "K_max") and isinstance(raw.get(key), bool):
            raise ConfigError(f"key '{key}' must have type {typ.__name__}")

    def resolve(spec: str) -> str:
        if spec.startswith("file:"):
            p = spec[5:]
            if not os.path.isabs(p):
                p = os.path.normpath(os.path.join(base_dir, p))
            return "file:" + p
        return spec

    try:
        a_values = tuple(int(a) for a in raw["a_values"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"a_values must be a list of integers: {exc}") from exc
    return ExperimentConfig(
        model=resolve(raw["model"]),
        z=int(raw["z"]),
        K_max=int(raw["K_max"]),
        a_values=a_values,
        r_spec=resolve(raw.get("r_spec", "identity")),
        h_mode=raw.get("h_mode", "exact"),
        model_params=dict(raw.get("model_params", {})),
        solver=_section(raw, "solver", SolverSettings),
        oracle=_section(raw, "oracle", OracleSettings),
        output=_section(raw, "output", OutputSettings),
    )


def load_config(path: str) -> ExperimentConfig:
    """Parse a YAML experiment file with line-aware error reporting."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"YAML parse error in {path}: {exc}") from exc
    if raw is None:
        raise ConfigError(f"config {path} is empty")
    return parse_config(raw, base_dir=os.path.dirname(os.path.abspath(path)))


def load_reward_table(path: str) -> Callable[[int], float]:
    """Reward table file: one 'state value' pair per line, default 0.

    '#' starts a comment.  Values must be finite and non-negative.
    """
    table: dict[int, float] = {}
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read reward table {path}: {exc}") from exc
    with fh:
        for lineno, rawline in enumerate(fh, start=1):
            line = rawline.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ConfigError(f"{path}:{lineno}: expected 'state value'")
            try:
                state, value = int(parts[0]), float(parts[1])
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from exc
            if state < 0 or not value >= 0.0 or value != value:
                raise ConfigError(f"{path}:{lineno}: need state >= 0 and "
                                  "finite value >= 0")
            if state in table:
                raise ConfigError(f"{path}:{lineno}: duplicate state {state}")
            table[state] = value
    return lambda x: table.get(int(x), 0.0)


def build_chain(config: ExperimentConfig) -> ChainModel:
    if config.model == "gm1":
        return gm1_chain(_gm1_params(config))
    if config.model == "random_walk":
        if config.model_params:
            raise ConfigError("random_walk takes no model_params")
        return random_walk_chain()
    return load_chain_from_file(config.model[5:])


def _gm1_params(config: ExperimentConfig) -> Gm1Params:
    allowed = set(Gm1Params.__dataclass_fields__)
    unknown = set(config.model_params) - allowed
    if unknown:
        raise ConfigError(f"unknown gm1 model_params: {sorted(unknown)}")
    try:
        return Gm1Params(**config.model_params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad gm1 model_params: {exc}") from exc


def build_reward(config: ExperimentConfig) -> Callable[[int], float]:
    if config.r_spec == "identity":
        return lambda x: float(x)
    if config.r_spec == "half":
        return lambda x: float(x) / 2.0
    return load_reward_table(config.r_spec[5:])


def build_certificate(config: ExperimentConfig, chain: ChainModel, a: int,
                      K, r) -> LyapunovCertificate:
    """Certificate for sweep point a.

    Built-in models carry analytic drift pairs; in paper_literal mode the
    exit bounds are pinned to the reported magnitudes at the boundary
    state of A = {0..a}.  File chains are finite, so a provably tight
    certificate is computed by first-step analysis (imported lazily;
    needs the oracle module).
    """
    literal_a = a if config.h_mode == "paper_literal" else None
    if config.model == "gm1":
        return gm1_certificate(_gm1_params(config), paper_literal_a=literal_a)
    if config.model == "random_walk":
        return random_walk_certificate(paper_literal_a=literal_a)
    from .oracle import tight_certificate
    if chain.n_states is None:
        raise ConfigError("file model must declare its state count")
    return tight_certificate(chain, chain.n_states, K, r)

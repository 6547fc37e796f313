"""Run configuration: a TOML file with ``[model]``, ``[model.weights]``,
``[run]`` and ``[experiment]`` tables.

Unknown keys are rejected and cross-field constraints are checked at load
time. ``--set section.key=value`` overrides use TOML value syntax.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field, replace
from functools import cached_property

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .connection import ConnectionSpec, Profile
from .scaling import MAX_DEGREE
from .weights import Family, WeightLaw

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config", "apply_overrides", "EXPERIMENTS"]

EXPERIMENTS = ("solve", "simulate", "fig1", "check", "planted")


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


@dataclass(frozen=True)
class WeightsBlock:
    family: str = "polynomial_left"
    p: float = 1.0
    rho: float = 2.0
    b: float = 0.5
    beta: float = 5.0
    w0: float = 1.0


@dataclass(frozen=True)
class ModelBlock:
    d: int = 1
    a: float = 0.0
    alpha: float = 2.0
    profile: str = "truncated_pareto"
    weights: WeightsBlock = field(default_factory=WeightsBlock)


@dataclass(frozen=True)
class RunBlock:
    k: tuple[int, ...] = (0,)
    s: tuple[float, ...] = (1000.0,)
    replications: int = 200
    eps: float = 1e-3
    master_seed: int = 1
    threads: int = 1
    # window padding; None means the truncation radius
    pad: float | None = None
    subbox_m: int = 4


@dataclass(frozen=True)
class ExperimentBlock:
    kind: str = "simulate"
    # assumption check
    eta: float | None = None
    K: float | None = None
    # planted point: target mean degrees sigma * h(w)
    planted_mean_degrees: tuple[float, ...] = (0.5, 2.0, 10.0)
    # fig1 scatter dump: which replication and intensity (see run_fig1)
    scatter_replication: int = 0
    scatter_s: float | None = None


@dataclass(frozen=True)
class RunConfig:
    model: ModelBlock = field(default_factory=ModelBlock)
    run: RunBlock = field(default_factory=RunBlock)
    experiment: ExperimentBlock = field(default_factory=ExperimentBlock)

    @cached_property
    def law(self) -> WeightLaw:
        w = self.model.weights
        if w.family == Family.POINT_MASS.value:
            return WeightLaw.point_mass(w.w0)
        return WeightLaw(Family(w.family), p=w.p, rho=w.rho, b=w.b, beta=w.beta)

    @cached_property
    def spec(self) -> ConnectionSpec:
        return ConnectionSpec(self.model.a, self.model.alpha, Profile(self.model.profile))

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        """Digest of the resolved configuration; thread count is excluded
        because outputs do not depend on it."""
        data = self.to_dict()
        data["run"].pop("threads")
        blob = json.dumps(data, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def with_kind(self, kind: str) -> "RunConfig":
        return validate(replace(self, experiment=replace(self.experiment, kind=kind)))


_TABLES = {"model": ModelBlock, "run": RunBlock, "experiment": ExperimentBlock}
_ALIASES = {("run", "s_grid"): ("run", "s")}
_SCALARS = {"int": int, "float": float, "str": str, "float | None": float}
_TUPLES = {"tuple[int, ...]": int, "tuple[float, ...]": float}


def _cast(section, key, value, kind):
    if isinstance(value, bool):
        raise ConfigError(f"{section}.{key}: booleans are not accepted")
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(f"{section}.{key} must be a string, got {value!r}")
        return value
    if not isinstance(value, (int, float)):
        raise ConfigError(f"{section}.{key} must be a number, got {value!r}")
    if kind is int and int(value) != value:
        raise ConfigError(f"{section}.{key} must be an integer, got {value!r}")
    return kind(value)


def _coerce(section, key, value, annotation):
    if annotation in _TUPLES:
        seq = value if isinstance(value, (list, tuple)) else [value]
        return tuple(_cast(section, key, v, _TUPLES[annotation]) for v in seq)
    return _cast(section, key, value, _SCALARS[annotation])


def _build_block(cls, section: str, raw: dict):
    fields_ = cls.__dataclass_fields__
    kwargs = {}
    for key, value in raw.items():
        _, key_k = _ALIASES.get((section, key), (section, key))
        if key_k == "weights" and cls is ModelBlock:
            if not isinstance(value, dict):
                raise ConfigError("model.weights must be a table")
            kwargs["weights"] = _build_block(WeightsBlock, "model.weights", value)
            continue
        if key_k not in fields_ or key_k == "weights":
            raise ConfigError(f"unknown key {section}.{key}")
        kwargs[key_k] = _coerce(section, key_k, value, fields_[key_k].type)
    return cls(**kwargs)


def validate(cfg: RunConfig) -> RunConfig:
    m, r, e = cfg.model, cfg.run, cfg.experiment
    if m.d < 1:
        raise ConfigError("model.d must be >= 1")
    if not m.alpha > 1:
        raise ConfigError(f"constraint alpha > 1 violated: alpha = {m.alpha}")
    if m.a < 0:
        raise ConfigError(f"constraint a >= 0 violated: a = {m.a}")
    try:
        Profile(m.profile)
    except ValueError:
        raise ConfigError(f"unknown profile {m.profile!r}") from None
    try:
        family = Family(m.weights.family)
    except ValueError:
        raise ConfigError(f"unknown weight family {m.weights.family!r}") from None
    if family is not Family.POINT_MASS and not m.weights.beta > m.a * m.alpha:
        raise ConfigError(
            f"constraint beta > a * alpha violated: beta = {m.weights.beta}, a * alpha = {m.a * m.alpha}"
        )
    if any(k < 0 or k > MAX_DEGREE for k in r.k):
        raise ConfigError(f"constraint 0 <= k <= {MAX_DEGREE} violated: k = {list(r.k)}")
    if not r.s or any(not s > 0.5 for s in r.s):
        raise ConfigError("intensities must exceed 1/2")
    if r.replications < 1:
        raise ConfigError("run.replications must be >= 1")
    if not r.eps > 0:
        raise ConfigError("run.eps must be positive")
    if r.threads < 1:
        raise ConfigError("run.threads must be >= 1")
    if r.pad is not None and r.pad < 0:
        raise ConfigError("run.pad must be non-negative")
    if not 0 <= r.master_seed < 2**64:
        raise ConfigError("run.master_seed must fit in 64 unsigned bits")
    if e.kind not in EXPERIMENTS:
        raise ConfigError(f"experiment.kind must be one of {EXPERIMENTS}, got {e.kind!r}")
    if e.eta is not None and not 0 < e.eta < 1:
        raise ConfigError("experiment.eta must lie in (0, 1)")
    if e.K is not None and not e.K > 0:
        raise ConfigError("experiment.K must be positive")
    try:
        cfg.law
        cfg.spec
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def parse_config(raw: dict) -> RunConfig:
    for section in raw:
        if section not in _TABLES:
            raise ConfigError(f"unknown section [{section}]")
    blocks = {}
    for section, cls in _TABLES.items():
        value = raw.get(section, {})
        if not isinstance(value, dict):
            raise ConfigError(f"[{section}] must be a table")
        blocks[section] = _build_block(cls, section, value)
    return validate(RunConfig(**blocks))


def _parse_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(raw: dict, overrides) -> dict:
    """Apply ``section.key=value`` strings to a raw config mapping."""
    raw = json.loads(json.dumps(raw))
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        path, text = item.split("=", 1)
        parts = path.strip().split(".")
        if len(parts) < 2:
            raise ConfigError(f"override key {path!r} needs a section, e.g. run.k")
        node = raw
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {path!r} descends into a non-table")
        node[parts[-1]] = _parse_value(text.strip())
    return raw


def load_config(path=None, overrides=()) -> RunConfig:
    raw = {}
    if path is not None:
        with open(path, "rb") as fh:
            try:
                raw = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(apply_overrides(raw, overrides))


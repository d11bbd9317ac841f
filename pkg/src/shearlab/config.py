"""Run configuration: TOML parsing, validation, canonical serialization.

A config is a single TOML file with fixed sections.  Parsing is strict —
unknown sections or keys raise :class:`ConfigError` naming the offender —
and every config round-trips unchanged through :meth:`RunConfig.to_toml`
followed by :func:`load_text`.
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass
from pathlib import Path

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - interpreter-version fallback
    import tomli as tomllib

from .errors import ConfigError

__all__ = [
    "KernelSpec",
    "DampingSpec",
    "GridSpec",
    "TimeSpec",
    "ProfileSpec",
    "OutputSpec",
    "RunOptions",
    "InvertSpec",
    "RunConfig",
    "load",
    "load_text",
]


@dataclass(frozen=True)
class KernelSpec:
    """Relaxation kernel choice: the reptation family or explicit atoms."""

    family: str = "doi-edwards"
    truncation: float = math.inf  # rate cutoff for the reptation family
    atoms: tuple = ()  # ((rate, weight), ...) when family = "atoms"


@dataclass(frozen=True)
class DampingSpec:
    """Damping nonlinearity: named law or a tabulated odd function."""

    name: str = "doi-edwards"
    slope: float = -1.0  # linear law only
    path: str = ""  # tabulated law only
    max_theta: float = 1.0  # cap for the certified window scan


@dataclass(frozen=True)
class GridSpec:
    length: float = 1.0
    nodes: int = 64


@dataclass(frozen=True)
class TimeSpec:
    horizon: float = 1.0
    dt: float = 0.0  # 0 = automatic stability bound


@dataclass(frozen=True)
class ProfileSpec:
    """Initial-velocity or forcing shape (forcing adds the decay envelope)."""

    kind: str = "zero"
    amplitude: float = 0.0
    mode: int = 1
    center: float = -1.0  # -1 = midpoint default
    width: float = -1.0  # -1 = tenth-of-length default
    decay: float = 1.0
    path: str = ""


@dataclass(frozen=True)
class OutputSpec:
    directory: str = "runs/out"
    probes: tuple = ()  # x locations for time series
    snapshots: tuple = ()  # times for full-field dumps


@dataclass(frozen=True)
class RunOptions:
    seed: int = 0
    safety: float = 0.5
    breach_policy: str = "abort"
    memory_engine: str = "direct"


@dataclass(frozen=True)
class InvertSpec:
    """Grid family for the deconvolution demo."""

    dt: float = 1e-3
    duration: float = 1.0
    halvings: int = 3


_SECTIONS = {
    "kernel": KernelSpec,
    "damping": DampingSpec,
    "grid": GridSpec,
    "time": TimeSpec,
    "initial": ProfileSpec,
    "forcing": ProfileSpec,
    "output": OutputSpec,
    "run": RunOptions,
    "invert": InvertSpec,
}

_KERNEL_FAMILIES = ("doi-edwards", "atoms")
_DAMPING_NAMES = ("doi-edwards", "linear", "table")
_PROFILE_KINDS = ("zero", "single-mode", "gaussian-bump", "table")


@dataclass(frozen=True)
class RunConfig:
    """Validated, immutable description of one scenario."""

    kernel: KernelSpec = KernelSpec()
    damping: DampingSpec = DampingSpec()
    grid: GridSpec = GridSpec()
    time: TimeSpec = TimeSpec()
    initial: ProfileSpec = ProfileSpec()
    forcing: ProfileSpec = ProfileSpec()
    output: OutputSpec = OutputSpec()
    run: RunOptions = RunOptions()
    invert: InvertSpec = InvertSpec()

    def validate(self) -> "RunConfig":
        k, d, g, t = self.kernel, self.damping, self.grid, self.time
        if k.family not in _KERNEL_FAMILIES:
            raise ConfigError(f"kernel.family must be one of {_KERNEL_FAMILIES}, got {k.family!r}")
        if k.family == "atoms":
            if not k.atoms:
                raise ConfigError("kernel.atoms must list at least one [rate, weight] pair")
            for pair in k.atoms:
                if len(pair) != 2:
                    raise ConfigError("kernel.atoms entries must be [rate, weight] pairs")
                rate, weight = pair
                if not (rate > 0.0 and weight > 0.0):
                    raise ConfigError(
                        f"kernel.atoms rates and weights must be positive, got {list(pair)}"
                    )
        if not k.truncation > 0.0:
            raise ConfigError("kernel.truncation must be positive (may be inf)")
        if d.name not in _DAMPING_NAMES:
            raise ConfigError(f"damping.name must be one of {_DAMPING_NAMES}, got {d.name!r}")
        if d.name == "linear" and not d.slope < 0.0:
            raise ConfigError("damping.slope must be negative for the linear law")
        if d.name == "table" and not d.path:
            raise ConfigError("damping.path is required for a tabulated law")
        if not d.max_theta > 0.0:
            raise ConfigError("damping.max_theta must be positive")
        if not g.length > 0.0:
            raise ConfigError("grid.length must be positive")
        if g.nodes < 8:
            raise ConfigError("grid.nodes must be at least 8")
        if not t.horizon > 0.0:
            raise ConfigError("time.horizon must be positive")
        if t.dt < 0.0:
            raise ConfigError("time.dt must be >= 0 (0 selects the stability bound)")
        for label, prof in (("initial", self.initial), ("forcing", self.forcing)):
            if prof.kind not in _PROFILE_KINDS:
                raise ConfigError(
                    f"{label}.kind must be one of {_PROFILE_KINDS}, got {prof.kind!r}"
                )
            if prof.kind == "table" and not prof.path:
                raise ConfigError(f"{label}.path is required for a tabulated profile")
            if prof.kind == "single-mode" and prof.mode < 1:
                raise ConfigError(f"{label}.mode must be >= 1")
            if prof.decay < 0.0:
                raise ConfigError(f"{label}.decay must be >= 0")
        for p in self.output.probes:
            if not 0.0 < p < g.length:
                raise ConfigError(f"output.probes must lie strictly inside (0, {g.length}): {p}")
        for s in self.output.snapshots:
            if not 0.0 <= s <= t.horizon:
                raise ConfigError(f"output.snapshots must lie in [0, horizon]: {s}")
        if self.run.breach_policy not in ("abort", "clamp"):
            raise ConfigError("run.breach_policy must be 'abort' or 'clamp'")
        if self.run.memory_engine not in ("direct", "prony"):
            raise ConfigError("run.memory_engine must be 'direct' or 'prony'")
        if not 0.0 < self.run.safety <= 1.0:
            raise ConfigError("run.safety must lie in (0, 1]")
        if not self.invert.dt > 0.0:
            raise ConfigError("invert.dt must be positive")
        if self.invert.duration < 4.0 * self.invert.dt:
            raise ConfigError("invert.duration must cover at least four time steps")
        if self.invert.halvings < 2:
            raise ConfigError("invert.halvings must be >= 2 to measure an order")
        return self

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        out = {}
        for section in _SECTIONS:
            spec = getattr(self, section)
            entries = {}
            for f in dataclasses.fields(spec):
                value = getattr(spec, f.name)
                if isinstance(value, tuple):
                    value = [list(v) if isinstance(v, tuple) else v for v in value]
                entries[f.name] = value
            out[section] = entries
        return out

    def to_toml(self) -> str:
        lines = []
        for section, entries in self.to_dict().items():
            lines.append(f"[{section}]")
            for key, value in entries.items():
                lines.append(f"{key} = {_toml_value(value)}")
            lines.append("")
        return "\n".join(lines)

    def sha256(self) -> str:
        return hashlib.sha256(self.to_toml().encode()).hexdigest()


def _toml_value(value) -> str:
    if isinstance(value, bool):  # before int: bool is an int subclass
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isinf(value):
            return "-inf" if value < 0 else "inf"
        if math.isnan(value):
            return "nan"
        text = repr(value)
        return text if ("." in text or "e" in text or "E" in text) else text + ".0"
    if isinstance(value, str):
        escaped = value.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise ConfigError(f"cannot serialize config value {value!r}")


def _build_section(section: str, cls, data: dict):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, raw in data.items():
        if key not in fields:
            raise ConfigError(f"unknown key {section}.{key}")
        default = getattr(cls, key)
        if isinstance(default, tuple) or isinstance(raw, list):
            if not isinstance(raw, list):
                raise ConfigError(f"{section}.{key} must be an array")
            kwargs[key] = tuple(
                tuple(float(x) for x in v) if isinstance(v, list) else float(v) for v in raw
            )
        elif isinstance(default, bool):
            kwargs[key] = bool(raw)
        elif isinstance(default, int) and not isinstance(default, bool):
            if isinstance(raw, float) and not float(raw).is_integer():
                raise ConfigError(f"{section}.{key} must be an integer")
            kwargs[key] = int(raw)
        elif isinstance(default, float):
            kwargs[key] = float(raw)
        elif isinstance(default, str):
            if not isinstance(raw, str):
                raise ConfigError(f"{section}.{key} must be a string")
            kwargs[key] = raw
        else:  # pragma: no cover - schema uses only the types above
            kwargs[key] = raw
    return cls(**kwargs)


def from_dict(data: dict) -> RunConfig:
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
    kwargs = {}
    for section, cls in _SECTIONS.items():
        body = data.get(section, {})
        if not isinstance(body, dict):
            raise ConfigError(f"section [{section}] must be a table")
        kwargs[section] = _build_section(section, cls, body)
    return RunConfig(**kwargs).validate()


def load_text(text: str) -> RunConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"config parse error: {err}") from err
    return from_dict(data)


def load(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return load_text(path.read_text())

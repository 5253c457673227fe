"""Flat ``section.key = value`` configuration files.

One assignment per line, ``#`` starts a comment. Vectors are comma
separated; matrices separate rows with ``;``. Keys not listed in a file
keep their defaults. Unknown keys and invariant violations are reported
with the offending line number.
"""
from __future__ import annotations

import dataclasses
import os
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import kinematics as kin
from .control import ControlConfig
from .plant import PlantConfig
from .scenarios import ScenarioConfig

ENV_VAR = "TENDON_RELAX_CONFIG"
SECTIONS = ("model", "plant", "control", "scenario")

_MODEL_KEYS = ("moment_arms", "rest_lengths", "link_lengths", "link_masses", "link_com",
               "joint_limits_min", "joint_limits_max", "joint_axes",
               "end_effector_offset")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, path=None):
        where = f"{path}:" if path else ""
        where += f"{line}: " if line else (": " if path else "")
        super().__init__(f"{where}{message}")
        self.line = line


@dataclass(frozen=True, eq=False)
class Config:
    model: kin.RobotModel = field(default_factory=kin.default_model)
    plant: PlantConfig = field(default_factory=PlantConfig)
    control: ControlConfig = field(default_factory=ControlConfig)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)

    def __post_init__(self):
        m = self.model.n_muscles
        if self.plant.rest_length_error.shape != (m,):
            raise ConfigError(f"plant.rest_length_error must have {m} entries")
        try:
            self.control.bias(m)
        except ValueError as exc:
            raise ConfigError(f"control.{exc}") from None


def default_config_path() -> Path:
    return Path(str(resources.files("tendon_relax") / "data" / "default.cfg"))


def _model_defaults(model: kin.RobotModel) -> dict:
    return {
        "moment_arms": model.moment_arms, "rest_lengths": model.rest_lengths,
        "link_lengths": model.link_lengths, "link_masses": model.link_masses,
        "link_com": model.link_com, "joint_limits_min": model.joint_limits[:, 0],
        "joint_limits_max": model.joint_limits[:, 1],
        "joint_axes": np.array(model.joint_axes), "end_effector_offset":
            model.end_effector_offset,
    }


def _section_defaults(section: str) -> dict:
    if section == "model":
        return _model_defaults(kin.default_model())
    cls = {"plant": PlantConfig, "control": ControlConfig, "scenario": ScenarioConfig}[section]
    inst = cls()
    return {f.name: getattr(inst, f.name) for f in dataclasses.fields(cls)}


def _parse_value(raw: str, default):
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if isinstance(default, (int, np.integer)) and not isinstance(default, bool):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    default = np.asarray(default)
    if default.ndim == 2:
        rows = [r for r in raw.split(";") if r.strip()]
        arr = np.array([[float(v) for v in r.split(",")] for r in rows])
        return arr
    vals = [v for v in raw.split(",") if v.strip()]
    if np.issubdtype(default.dtype, np.integer):
        return np.array([int(v) for v in vals], dtype=int)
    return np.array([float(v) for v in vals])


_LINE = re.compile(r"^([a-z_]+)\.([a-z0-9_]+)\s*=\s*(.*)$")


def parse_text(text: str, path=None):
    """Parse config text into ``{section: {key: (value, line)}}``."""
    defaults = {s: _section_defaults(s) for s in SECTIONS}
    out = {s: {} for s in SECTIONS}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        m = _LINE.match(line)
        if not m:
            raise ConfigError(f"cannot parse {line!r}; expected section.key = value",
                              lineno, path)
        section, key, raw = m.group(1), m.group(2), m.group(3).strip()
        if section not in SECTIONS:
            raise ConfigError(f"unknown section {section!r}", lineno, path)
        if key not in defaults[section]:
            raise ConfigError(f"unknown key {section}.{key}", lineno, path)
        if key in out[section]:
            raise ConfigError(f"duplicate key {section}.{key}", lineno, path)
        try:
            value = _parse_value(raw, defaults[section][key])
        except ValueError as exc:
            raise ConfigError(f"bad value for {section}.{key}: {exc}", lineno, path) from None
        out[section][key] = (value, lineno)
    return out


def _blame(parsed: dict, section: str, message: str):
    """Line of the first key the message names, else of any key in the section."""
    keys = parsed[section]
    for key, (_, lineno) in sorted(keys.items(), key=lambda kv: -len(kv[0])):
        if re.search(rf"\b{key}\b", message):
            return lineno
    if section == "model" and "antagonis" in message and "moment_arms" in keys:
        return keys["moment_arms"][1]
    return min((ln for _, ln in keys.values()), default=None)


def build(parsed: dict, path=None) -> Config:
    vals = {s: {k: v for k, (v, _) in parsed[s].items()} for s in SECTIONS}
    md = _model_defaults(kin.default_model())
    md.update(vals["model"])
    try:
        lo = np.asarray(md["joint_limits_min"], dtype=float)
        hi = np.asarray(md["joint_limits_max"], dtype=float)
        if lo.shape != hi.shape:
            raise kin.ModelError("joint_limits_min and joint_limits_max differ in length")
        model = kin.RobotModel(md["moment_arms"], md["rest_lengths"], md["link_lengths"],
                               md["link_masses"], md["link_com"], np.stack([lo, hi], axis=1),
                               tuple(int(a) for a in md["joint_axes"]),
                               md["end_effector_offset"])
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"model: {exc}", _blame(parsed, "model", str(exc)), path) from None

    built = {}
    for section, cls in (("plant", PlantConfig), ("control", ControlConfig),
                         ("scenario", ScenarioConfig)):
        try:
            built[section] = cls(**vals[section])
        except ValueError as exc:
            raise ConfigError(str(exc), _blame(parsed, section, str(exc)), path) from None
    try:
        return Config(model, built["plant"], built["control"], built["scenario"])
    except ConfigError as exc:
        msg = str(exc)
        section = "plant" if msg.startswith("plant") else "control"
        raise ConfigError(msg, _blame(parsed, section, msg), path) from None


def loads(text: str, path=None) -> Config:
    return build(parse_text(text, path), path)


def load(path=None) -> Config:
    """Load ``path``, falling back to ``$TENDON_RELAX_CONFIG``, then defaults."""
    if path is None:
        path = os.environ.get(ENV_VAR) or None
    if path is None:
        return Config()
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path=p) from None
    return loads(text, p)


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    arr = np.asarray(value)
    if arr.ndim == 2:
        return "; ".join(", ".join(_fmt(float(v)) for v in row) for row in arr)
    if np.issubdtype(arr.dtype, np.integer):
        return ", ".join(str(int(v)) for v in arr)
    return ", ".join(_fmt(float(v)) for v in arr)


def dumps(cfg: Config) -> str:
    """Effective configuration in the same syntax ``loads`` reads."""
    lines = []
    sections = {"model": _model_defaults(cfg.model)}
    for name in ("plant", "control", "scenario"):
        obj = getattr(cfg, name)
        sections[name] = {f.name: getattr(obj, f.name) for f in dataclasses.fields(obj)}
    for name in SECTIONS:
        for key, value in sections[name].items():
            lines.append(f"{name}.{key} = {_fmt(value)}")
    return "\n".join(lines) + "\n"

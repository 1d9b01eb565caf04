"""Run configuration: YAML file, then ``KEY=VALUE`` overrides, on top of defaults.

Precedence, lowest first: built-in defaults, the config file, ``--override``
flags, ``--out``.  Keys are dotted paths such as ``electrode.length``.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from pathlib import Path

import yaml

from .material import Material, default_material
from .modesolver import WaveguideGeometry

DEFAULTS: dict = {
    "material": None,
    "output": "out",
    "solver": {"spacing": 0.025, "margin": 5.0, "cover": 1.0},
    "two_mode_section": {"width": 3.0, "depth": 2.0, "delta_n": 0.02},
    "source_section": {"width": 5.0, "depth": 2.0, "delta_n": 0.02},
    "wavelengths": {"pump": None, "signal": 0.750776, "idler": 0.820435},
    "electrode": {
        "half_gap": None,
        "offset": None,
        "length": 2.0e4,
        "voltage": 1.0,
        "half_gap_grid": [0.5, 6.0, 12],
        "offset_grid": [0.0, 6.0, 25],
    },
    "sweep": {"voltage_points": 121, "voltage_max_factor": 2.0},
    "spdc": {
        "qpm_period": None,
        "crystal_length": 1000.0,
        "spacing": 0.05,
        "half_window": 0.012,
        "nodes": 7,
        "grid_points": 961,
    },
    "chsh": {"w": None, "v": None, "voltages": True},
}

_POSITIVE = {
    "solver.spacing", "solver.margin", "solver.cover",
    "two_mode_section.width", "two_mode_section.depth", "two_mode_section.delta_n",
    "source_section.width", "source_section.depth", "source_section.delta_n",
    "wavelengths.pump", "wavelengths.signal", "wavelengths.idler",
    "electrode.half_gap", "electrode.length",
    "sweep.voltage_max_factor",
    "spdc.qpm_period", "spdc.crystal_length", "spdc.spacing", "spdc.half_window",
}
_INTEGER = {"spdc.nodes", "spdc.grid_points", "sweep.voltage_points"}


class ConfigError(ValueError):
    """Invalid configuration, with the file and line when known."""

    def __init__(self, message: str, source: str | None = None, line: int | None = None):
        where = ""
        if source:
            where = f"{source}:{line}: " if line else f"{source}: "
        super().__init__(where + message)
        self.source = source
        self.line = line


def _line_map(node, prefix="", out=None) -> dict[str, int]:
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = f"{prefix}{k.value}"
            out[key] = k.start_mark.line + 1
            _line_map(v, key + ".", out)
    return out


def _merge(base: dict, update: dict, lines: dict, source, prefix="") -> None:
    for k, v in update.items():
        key = f"{prefix}{k}"
        if k not in base:
            raise ConfigError(f"unknown key '{key}'", source, lines.get(key))
        if isinstance(base[k], dict):
            if v is None:
                raise ConfigError(f"section '{key}' is empty", source, lines.get(key))
            if not isinstance(v, dict):
                raise ConfigError(f"'{key}' must be a mapping", source, lines.get(key))
            _merge(base[k], v, lines, source, key + ".")
        else:
            base[k] = v


def _get(tree: dict, key: str):
    node = tree
    for part in key.split("."):
        node = node[part]
    return node


def _set(tree: dict, key: str, value) -> None:
    parts = key.split(".")
    node = tree
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            raise ConfigError(f"unknown key '{key}'", "--override")
        node = node[p]
    if parts[-1] not in node or isinstance(node[parts[-1]], dict):
        raise ConfigError(f"unknown key '{key}'", "--override")
    node[parts[-1]] = value


def parse_override(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise ConfigError(f"override '{text}' is not of the form KEY=VALUE", "--override")
    key, raw = text.split("=", 1)
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse value of '{key}': {exc}", "--override") from None
    return key.strip(), value


def _validate(tree: dict, lines: dict, source, overridden=frozenset()) -> None:
    def fail(key, msg):
        if key in overridden:
            raise ConfigError(f"'{key}' {msg}", "--override")
        raise ConfigError(f"'{key}' {msg}", source, lines.get(key))

    def walk(node, prefix=""):
        for k, v in node.items():
            key = prefix + k
            if isinstance(v, dict):
                walk(v, key + ".")
                continue
            if key in _INTEGER:
                if isinstance(v, bool) or not isinstance(v, int) or v < 2:
                    fail(key, "must be an integer >= 2")
            elif key in _POSITIVE and v is not None:
                if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v) or v <= 0:
                    fail(key, f"must be a positive number, got {v!r}")
    walk(tree)
    for key in ("electrode.half_gap_grid", "electrode.offset_grid"):
        g = _get(tree, key)
        if not (isinstance(g, list) and len(g) == 3 and all(isinstance(x, (int, float)) for x in g)
                and g[1] > g[0] and int(g[2]) >= 2):
            fail(key, "must be [start, stop, count] with stop > start and count >= 2")
    if _get(tree, "two_mode_section.width") >= _get(tree, "source_section.width"):
        fail("two_mode_section.width", "must be smaller than source_section.width")
    for key in ("chsh.w", "chsh.v"):
        v = _get(tree, key)
        if v is not None and (isinstance(v, bool) or not isinstance(v, (int, float))):
            fail(key, "must be a number")
    w, v = _get(tree, "chsh.w"), _get(tree, "chsh.v")
    if (w is None) != (v is None):
        fail("chsh.w", "and chsh.v must be given together")
    if w is not None and not (0 <= w <= 1 and 0 <= v <= math.sqrt(w * (1 - w)) + 1e-9):
        fail("chsh.v", f"must satisfy 0 <= v <= sqrt(w(1-w)) = {math.sqrt(max(w * (1 - w), 0)):.6g}")
    mat = tree["material"]
    if mat is not None and not Path(mat).is_file():
        fail("material", f"file not found: {mat}")
    if not isinstance(tree["output"], str) or not tree["output"]:
        fail("output", "must be a directory path")


@dataclass(frozen=True)
class RunConfig:
    tree: dict
    source: str | None = None

    def __getitem__(self, key: str):
        return _get(self.tree, key)

    @property
    def output_dir(self) -> Path:
        return Path(self.tree["output"])

    def material(self) -> Material:
        path = self.tree["material"]
        return default_material() if path is None else _load_material(path)

    def geometry(self, section: str) -> WaveguideGeometry:
        s = self.tree[section]
        return WaveguideGeometry(float(s["width"]), float(s["depth"]), float(s["delta_n"]),
                                 material=self.material())

    @property
    def pump_wavelength(self) -> float:
        p = self["wavelengths.pump"]
        if p is not None:
            return float(p)
        return 1.0 / (1.0 / self["wavelengths.signal"] + 1.0 / self["wavelengths.idler"])


_MATERIALS: dict[str, Material] = {}


def _load_material(path: str) -> Material:
    # cached by path so geometries built from one config share a material
    key = str(Path(path).resolve())
    if key not in _MATERIALS:
        try:
            _MATERIALS[key] = Material.load(key)
        except (AttributeError, KeyError, TypeError, ValueError, yaml.YAMLError) as exc:
            raise ConfigError(f"invalid material file: {exc}", path) from None
    return _MATERIALS[key]


def load_config(path: str | Path | None = None, overrides=(), output: str | None = None) -> RunConfig:
    tree = copy.deepcopy(DEFAULTS)
    lines: dict[str, int] = {}
    source = None
    if path is not None:
        source = str(path)
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc.strerror}", source) from None
        try:
            node = yaml.compose(text)
            data = yaml.safe_load(text)
        except yaml.MarkedYAMLError as exc:
            line = exc.problem_mark.line + 1 if exc.problem_mark else None
            raise ConfigError(f"YAML syntax error: {exc.problem}", source, line) from None
        if data is not None:
            if not isinstance(data, dict):
                raise ConfigError("top level must be a mapping", source, 1)
            lines = _line_map(node)
            _merge(tree, data, lines, source)
    overridden = set()
    for text in overrides:
        key, value = parse_override(text)
        _set(tree, key, value)
        overridden.add(key)
    if output is not None:
        tree["output"] = str(output)
    _validate(tree, lines, source, frozenset(overridden))
    return RunConfig(tree, source)

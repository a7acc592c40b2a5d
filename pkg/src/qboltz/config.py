"""Plain `key = value` experiment configs with dotted sections.

The grammar is deliberately tiny: UTF-8 text, one `key = value` per line,
`#` starts a comment, keys are dotted lowercase names from the table
below.  Unknown keys, duplicate keys, and type mismatches are errors with
line numbers; defaults are filled in and echoed into the run manifest.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field


class ConfigError(ValueError):
    pass


def _parse_int(s: str):
    return int(s, 0)


def _parse_float(s: str):
    return float(s)


def _parse_str(s: str):
    return s


def _parse_float_or_auto(s: str):
    return "auto" if s == "auto" else float(s)


def _parse_int_list(s: str):
    if not s.strip():
        return []
    return [int(tok.strip(), 0) for tok in s.split(",")]


def _parse_float_list(s: str):
    if not s.strip():
        return []
    return [float(tok.strip()) for tok in s.split(",")]


# key -> (parser, default, allowed-values-or-None)
KEY_SPECS = {
    "grid.d": (_parse_int, None, None),
    "grid.L": (_parse_int, None, None),
    "grid.mode_cap": (_parse_int, 4096, None),
    "dispersion.model": (
        _parse_str,
        "nearest-neighbor",
        ("nearest-neighbor", "next-nearest-neighbor"),
    ),
    "dispersion.gamma": (_parse_float, 0.4, None),
    "potential.kind": (_parse_str, "neighbor", ("zero", "onsite", "neighbor", "axis")),
    "potential.range": (_parse_int, 1, None),
    "potential.strength": (_parse_float, 1.0, None),
    "lambda": (_parse_float_list, [0.3], None),
    "initial.kind": (_parse_str, "slater", ("slater", "fermi-dirac", "table")),
    "initial.modes": (_parse_int_list, [], None),
    "initial.beta": (_parse_float, 1.0, None),
    "initial.mu": (_parse_float, 2.0, None),
    "initial.values": (_parse_float_list, [], None),
    "eta": (_parse_float_or_auto, "auto", None),
    "mollifier.kind": (_parse_str, "gaussian", ("gaussian", "lorentzian", "box")),
    "kernel.mode": (_parse_str, "plain", ("plain", "symmetrized")),
    "solver.method": (_parse_str, "rk4", ("rk4", "rk45-adaptive")),
    "solver.dt": (_parse_float_or_auto, "auto", None),
    "solver.t_end": (_parse_float, 1.0, None),
    "solver.statistics": (_parse_str, "fermion", ("fermion", "boson")),
    "solver.monitor_every": (_parse_int, 1, None),
    "scaling.T": (_parse_float, 0.5, None),
    "exact.samples": (_parse_int, 10, None),
    "memory.dt": (_parse_float_or_auto, "auto", None),
    "audit.samples": (_parse_int, 200, None),
    "audit.times": (_parse_float_list, [0.0], None),
    "seed": (_parse_int, 0, None),
}

REQUIRED_KEYS = ("grid.d", "grid.L")


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=dict)
    source_text: str = ""
    path: str = ""

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    def echo(self) -> dict:
        return dict(sorted(self.values.items()))

    def config_hash(self) -> str:
        return hashlib.sha256(self.source_text.encode("utf-8")).hexdigest()


def parse_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    values: dict = {}
    seen_lines: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected `key = value`, got {raw.strip()!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in KEY_SPECS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if key in seen_lines:
            raise ConfigError(
                f"{path}:{lineno}: duplicate key {key!r} (first set on line {seen_lines[key]})"
            )
        seen_lines[key] = lineno
        parser, _default, allowed = KEY_SPECS[key]
        try:
            parsed = parser(value)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
        if allowed is not None and parsed not in allowed:
            raise ConfigError(
                f"{path}:{lineno}: {key} must be one of {', '.join(allowed)}, got {parsed!r}"
            )
        values[key] = parsed
    for key in REQUIRED_KEYS:
        if key not in values:
            raise ConfigError(f"{path}: missing required key {key!r}")
    for key, (_parser, default, _allowed) in KEY_SPECS.items():
        values.setdefault(key, default)
    cfg = ExperimentConfig(values=values, source_text=text, path=str(path))
    _cross_validate(cfg)
    return cfg


def _cross_validate(cfg: ExperimentConfig) -> None:
    d, L = cfg["grid.d"], cfg["grid.L"]
    if d < 1 or L < 2:
        raise ConfigError("grid.d must be >= 1 and grid.L >= 2")
    if L**d > cfg["grid.mode_cap"]:
        raise ConfigError(f"L^d = {L**d} exceeds grid.mode_cap = {cfg['grid.mode_cap']}")
    if not cfg["lambda"]:
        raise ConfigError("lambda list must not be empty")
    if any(lam < 0 for lam in cfg["lambda"]):
        raise ConfigError("lambda values must be nonnegative")
    if cfg["initial.kind"] == "table" and len(cfg["initial.values"]) != L**d:
        raise ConfigError(
            f"initial.values needs {L**d} entries for this grid, got {len(cfg['initial.values'])}"
        )
    if cfg["eta"] != "auto" and cfg["eta"] <= 0:
        raise ConfigError("eta must be positive or `auto`")
    if cfg["exact.samples"] < 1:
        raise ConfigError("exact.samples must be >= 1")
    if cfg["audit.samples"] < 1:
        raise ConfigError("audit.samples must be >= 1")


def validate_for_command(cfg: ExperimentConfig, command: str) -> None:
    """Command-specific checks, run before any engine starts."""
    exact_like = command in ("exact", "audit", "sweep", "memory")
    if exact_like and cfg["solver.statistics"] == "boson":
        raise ConfigError(f"command {command!r} uses the fermionic engines; solver.statistics = boson is only valid for `kinetic`")
    if command in ("exact", "audit", "sweep"):
        if cfg["initial.kind"] != "slater":
            raise ConfigError(f"command {command!r} needs a pure initial state: initial.kind = slater")
        if not cfg["initial.modes"]:
            raise ConfigError(f"command {command!r} needs initial.modes (the occupied Slater modes)")
    if command == "sweep" and len(cfg["lambda"]) < 2:
        raise ConfigError("sweep needs at least two lambda values")

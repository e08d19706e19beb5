"""Device configuration files (TOML, strict schema)."""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .circuits import CircuitParams, ModeKind, flux_to_phase
from .composite import DEFAULT_K, DEFAULT_TOL, Coupling, CouplingForm, Mode, SystemSpec
from .errors import ConfigError, InvalidParams

ROLES = ("qubit", "readout", "parasitic")
_TOP_KEYS = {"defaults", "modes", "couplings"}
_DEFAULT_KEYS = {"tol_ghz", "k_levels", "flux_phi0", "flux_mode", "qubits"}
_MODE_KEYS = {"name", "kind", "E_C", "E_J", "E_L", "d", "omega", "flux_phi0", "role", "dim"}
_COUPLING_KEYS = {"pair", "g", "form"}


@dataclass(frozen=True)
class ModeConfig:
    name: str
    kind: ModeKind
    E_C: float = 0.0
    E_J: float = 0.0
    E_L: float = 0.0
    d: float = 0.0
    omega: float = 0.0
    flux_phi0: float = 0.0
    role: str = "qubit"
    dim: int | None = None

    def params(self) -> CircuitParams:
        return CircuitParams(self.kind, E_C=self.E_C, E_J=self.E_J, E_L=self.E_L, d=self.d,
                             omega=self.omega, phi_e=flux_to_phase(self.flux_phi0))


@dataclass(frozen=True)
class CouplingConfig:
    pair: tuple
    g: float
    form: CouplingForm


@dataclass(frozen=True)
class Defaults:
    tol_ghz: float = DEFAULT_TOL
    k_levels: int = DEFAULT_K
    flux_phi0: float = 0.5
    flux_mode: str | None = None
    qubits: tuple | None = None


@dataclass(frozen=True)
class DeviceConfig:
    modes: tuple
    couplings: tuple = ()
    defaults: Defaults = field(default_factory=Defaults)

    def __post_init__(self):
        # validates names, pairs and forms
        self.to_system()
        if self.flux_mode is not None:
            if self.mode(self.flux_mode).kind is ModeKind.LINEAR:
                raise ConfigError("flux_mode must be a nonlinear mode")
        if self.defaults.qubits is not None:
            for q in self.defaults.qubits:
                self.mode(q)

    def mode(self, name: str) -> ModeConfig:
        for m in self.modes:
            if m.name == name:
                return m
        raise ConfigError(f"unknown mode {name!r}")

    @property
    def flux_mode(self) -> str | None:
        if self.defaults.flux_mode is not None:
            return self.defaults.flux_mode
        for kind in (ModeKind.IST, ModeKind.TRANSMON):
            for m in self.modes:
                if m.kind is kind:
                    return m.name
        return None

    @property
    def qubits(self) -> tuple:
        if self.defaults.qubits is not None:
            return tuple(self.defaults.qubits)
        return tuple(m.name for m in self.modes if m.kind is not ModeKind.LINEAR)

    def to_system(self, include_readout: bool = True, include_parasitics: bool = True
                  ) -> SystemSpec:
        drop = set()
        for m in self.modes:
            if m.role == "readout" and not include_readout:
                drop.add(m.name)
            if m.role == "parasitic" and not include_parasitics:
                drop.add(m.name)
        try:
            modes = tuple(Mode(m.name, m.params(), m.dim) for m in self.modes
                          if m.name not in drop)
            couplings = tuple(Coupling(c.pair[0], c.pair[1], c.g, c.form) for c in self.couplings
                              if not drop.intersection(c.pair))
            return SystemSpec(modes, couplings)
        except InvalidParams as exc:
            raise ConfigError(str(exc)) from None

    def with_fit(self, params: Mapping[str, float]) -> "DeviceConfig":
        """Copy with fitted values written back (names as in the fitter)."""
        fm = self.flux_mode
        modes = {m.name: m for m in self.modes}
        couplings = list(self.couplings)
        for name, value in params.items():
            if name in ("E_C", "E_J", "E_L", "d"):
                modes[fm] = replace(modes[fm], **{name: float(value)})
            elif "." in name and name.split(".", 1)[0] in modes:
                mode, attr = name.split(".", 1)
                modes[mode] = replace(modes[mode], **{attr: float(value)})
            elif name.startswith("omega_") and name[6:] in modes:
                modes[name[6:]] = replace(modes[name[6:]], omega=float(value))
            elif name.startswith("g_") and name[2:] in modes:
                other = name[2:]
                couplings = [replace(c, g=float(value)) if set(c.pair) == {fm, other} else c
                             for c in couplings]
            else:
                raise ConfigError(f"cannot map fitted parameter {name!r}")
        return replace(self, modes=tuple(modes[m.name] for m in self.modes),
                       couplings=tuple(couplings))


def _check_keys(table, allowed, where):
    if not isinstance(table, dict):
        raise ConfigError(f"{where} must be a table")
    unknown = sorted(set(table) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def _num(table, key, where, default=0.0):
    v = table.get(key, default)
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{where}.{key} must be a finite number")
    return float(v)


def _parse_mode(t, i) -> ModeConfig:
    where = f"modes[{i}]"
    _check_keys(t, _MODE_KEYS, where)
    for key in ("name", "kind"):
        if key not in t:
            raise ConfigError(f"{where} is missing '{key}'")
    name = t["name"]
    if not isinstance(name, str) or not name or any(ch in name for ch in " ,:.+-"):
        raise ConfigError(f"{where}.name must be a plain identifier")
    try:
        kind = ModeKind(str(t["kind"]).lower())
    except ValueError:
        raise ConfigError(f"{where}.kind must be one of ist, transmon, linear") from None
    needed = {ModeKind.IST: ("E_C", "E_J", "E_L"), ModeKind.TRANSMON: ("E_C", "E_J"),
              ModeKind.LINEAR: ("omega",)}[kind]
    for key in needed:
        if key not in t:
            raise ConfigError(f"{where} ({kind.value}) is missing '{key}'")
    role = t.get("role", "qubit" if kind is not ModeKind.LINEAR else "parasitic")
    if role not in ROLES:
        raise ConfigError(f"{where}.role must be one of {', '.join(ROLES)}")
    dim = t.get("dim")
    if dim is not None and (isinstance(dim, bool) or not isinstance(dim, int) or dim < 1):
        raise ConfigError(f"{where}.dim must be a positive integer")
    return ModeConfig(name, kind, _num(t, "E_C", where), _num(t, "E_J", where),
                      _num(t, "E_L", where), _num(t, "d", where), _num(t, "omega", where),
                      _num(t, "flux_phi0", where), role, dim)


def _parse_coupling(t, i) -> CouplingConfig:
    where = f"couplings[{i}]"
    _check_keys(t, _COUPLING_KEYS, where)
    pair = t.get("pair")
    if not (isinstance(pair, list) and len(pair) == 2 and all(isinstance(p, str) for p in pair)):
        raise ConfigError(f"{where}.pair must list two mode names")
    if "g" not in t:
        raise ConfigError(f"{where} is missing 'g'")
    try:
        form = CouplingForm(t.get("form", "charge-charge"))
    except ValueError:
        raise ConfigError(f"{where}.form must be charge-charge or charge-ladder") from None
    return CouplingConfig(tuple(pair), _num(t, "g", where), form)


def parse_config(data: Mapping) -> DeviceConfig:
    """Validate a decoded TOML document and build a :class:`DeviceConfig`."""
    _check_keys(data, _TOP_KEYS, "config")
    d = data.get("defaults", {})
    _check_keys(d, _DEFAULT_KEYS, "defaults")
    tol = _num(d, "tol_ghz", "defaults", DEFAULT_TOL)
    if tol <= 0:
        raise ConfigError("defaults.tol_ghz must be positive")
    k = d.get("k_levels", DEFAULT_K)
    if isinstance(k, bool) or not isinstance(k, int) or k < 1:
        raise ConfigError("defaults.k_levels must be a positive integer")
    qubits = d.get("qubits")
    if qubits is not None:
        if not (isinstance(qubits, list) and len(qubits) == 2):
            raise ConfigError("defaults.qubits must list two mode names")
        qubits = tuple(qubits)
    flux_mode = d.get("flux_mode")
    if flux_mode is not None and not isinstance(flux_mode, str):
        raise ConfigError("defaults.flux_mode must be a mode name")
    defaults = Defaults(tol, k, _num(d, "flux_phi0", "defaults", 0.5), flux_mode, qubits)
    raw_modes = data.get("modes")
    if not isinstance(raw_modes, list) or not raw_modes:
        raise ConfigError("config needs at least one [[modes]] entry")
    modes = tuple(_parse_mode(t, i) for i, t in enumerate(raw_modes))
    raw_c = data.get("couplings", [])
    if not isinstance(raw_c, list):
        raise ConfigError("couplings must be an array of tables")
    couplings = tuple(_parse_coupling(t, i) for i, t in enumerate(raw_c))
    return DeviceConfig(modes, couplings, defaults)


def load_config(path) -> DeviceConfig:
    """Read a device TOML file; bundled fixtures can be named directly."""
    p = Path(path)
    if not p.exists() and p.parent == Path(".") and fixture_exists(p.name):
        text = resources.files("squidsim").joinpath("data", p.name).read_text("utf-8")
    else:
        try:
            text = p.read_text("utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(data)


def fixture_exists(name: str) -> bool:
    return resources.files("squidsim").joinpath("data", name).is_file()


def fixture_path(name: str) -> Path:
    return Path(str(resources.files("squidsim").joinpath("data", name)))


def _fmt(v) -> str:
    if isinstance(v, str):
        return '"' + v + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    if isinstance(v, int):
        return str(v)
    return repr(float(v))


def dump_config(cfg: DeviceConfig) -> str:
    """Serialize a configuration back to TOML text."""
    lines = ["[defaults]",
             f"tol_ghz = {_fmt(cfg.defaults.tol_ghz)}",
             f"k_levels = {cfg.defaults.k_levels}",
             f"flux_phi0 = {_fmt(cfg.defaults.flux_phi0)}"]
    if cfg.defaults.flux_mode is not None:
        lines.append(f"flux_mode = {_fmt(cfg.defaults.flux_mode)}")
    if cfg.defaults.qubits is not None:
        lines.append(f"qubits = {_fmt(list(cfg.defaults.qubits))}")
    for m in cfg.modes:
        lines += ["", "[[modes]]", f"name = {_fmt(m.name)}", f"kind = {_fmt(m.kind.value)}"]
        keys = {ModeKind.IST: ("E_C", "E_J", "E_L", "flux_phi0"),
                ModeKind.TRANSMON: ("E_C", "E_J", "d", "flux_phi0"),
                ModeKind.LINEAR: ("omega",)}[m.kind]
        lines += [f"{k} = {_fmt(getattr(m, k))}" for k in keys]
        lines.append(f"role = {_fmt(m.role)}")
        if m.dim is not None:
            lines.append(f"dim = {m.dim}")
    for c in cfg.couplings:
        lines += ["", "[[couplings]]", f"pair = {_fmt(list(c.pair))}", f"g = {_fmt(c.g)}",
                  f"form = {_fmt(c.form.value)}"]
    return "\n".join(lines) + "\n"

"""INI run configuration with shipped device defaults."""

import configparser
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path

from .coupled import FockSpaceSpec, ModeParams
from .fluxonium import FluxoniumParams
from .pulses import ModulationPulse


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DeviceConfig:
    e_c_ghz: float
    e_j_ghz: float
    e_l_ghz: float
    omega_m0_mhz: float
    g_m_mhz: float
    omega_r0_mhz: float
    g_r_mhz: float
    flux_coherent: float
    flux_swap: float
    t1q_us: float
    t2q_us: float
    t2eq_us: float
    t1m_us: tuple
    t2m_us: float
    n_th_m: float
    temp_eff_k: float

    @property
    def fluxonium(self):
        return FluxoniumParams(self.e_c_ghz, self.e_j_ghz, self.e_l_ghz)

    @property
    def mechanics(self):
        return ModeParams(self.omega_m0_mhz, self.g_m_mhz)

    @property
    def readout(self):
        return ModeParams(self.omega_r0_mhz, self.g_r_mhz)


@dataclass(frozen=True)
class RunSection:
    output_dir: str = "out"
    seed: int = 1234


@dataclass(frozen=True)
class RunConfig:
    device: DeviceConfig
    pulse: ModulationPulse
    dims: FockSpaceSpec
    run: RunSection
    source: str = "<defaults>"

    def as_dict(self):
        out = {}
        for name in ("device", "pulse", "dims", "run"):
            sec = getattr(self, name)
            out[name] = {f.name: getattr(sec, f.name) for f in fields(sec)}
        return out


_SECTIONS = {"device": DeviceConfig, "pulse": ModulationPulse, "dims": FockSpaceSpec,
             "run": RunSection}


def _convert(cls, name, raw):
    ftype = {f.name: f.type for f in fields(cls)}[name]
    text = raw.strip()
    try:
        if ftype in (tuple, "tuple"):
            return tuple(float(v) for v in text.split(",") if v.strip())
        if ftype in (int, "int"):
            return int(text)
        if ftype in (str, "str"):
            return text
        return float(text)
    except ValueError:
        raise ConfigError(f"cannot parse {name} = {raw!r}") from None


def _read(parser, text, source):
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def default_text():
    return resources.files("fluxmech").joinpath("data/default.ini").read_text(encoding="utf-8")


def load_config(path=None, overrides=None):
    """Defaults, then ``path`` on top, then ``overrides`` ``{section: {key: value}}``.

    Unknown sections or keys and unparsable values raise :class:`ConfigError`.
    """
    parser = configparser.ConfigParser(interpolation=None)
    _read(parser, default_text(), "default.ini")
    source = "<defaults>"
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        user = configparser.ConfigParser(interpolation=None)
        _read(user, path.read_text(encoding="utf-8"), str(path))
        for sec in user.sections():
            if sec not in _SECTIONS:
                raise ConfigError(f"{path}: unknown section [{sec}]")
            for key, val in user.items(sec):
                if not parser.has_option(sec, key):
                    raise ConfigError(f"{path}: unknown key {key!r} in [{sec}]")
                parser.set(sec, key, val)
        source = str(path)
    for sec, kv in (overrides or {}).items():
        for key, val in kv.items():
            if not parser.has_option(sec, key):
                raise ConfigError(f"unknown override {sec}.{key}")
            parser.set(sec, key, str(val))
    built = {}
    for sec, cls in _SECTIONS.items():
        known = {f.name for f in fields(cls)}
        items = dict(parser.items(sec))
        extra = set(items) - known
        if extra:
            raise ConfigError(f"unknown keys in [{sec}]: {sorted(extra)}")
        kwargs = {k: _convert(cls, k, v) for k, v in items.items()}
        try:
            built[sec] = cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{sec}]: {exc}") from exc
    return RunConfig(built["device"], built["pulse"], built["dims"], built["run"], source)

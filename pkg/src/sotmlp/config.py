"""Run configuration: INI-style ``key = value`` file with sections.

Every key can be overridden from the command line with ``--set
section.key=value``; command-line values win over the file.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .device import DeviceGeometry, MaterialParams
from .network import MlpTopology
from .trainer import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class DataSection:
    mnist_dir: str = "data/mnist"
    train_images: str = ""
    train_labels: str = ""
    test_images: str = ""
    test_labels: str = ""
    train_limit: int = 0  # 0 = all
    test_limit: int = 0


@dataclass
class ModelSection:
    topology: str = "784,16,10"


@dataclass
class TrainSection:
    learning_rate: float = 5.0
    epochs: int = 10
    batch_size: int = 100
    rng_seed: int = 0
    delta_b: float = 0.0
    init_scale: float = 0.5


@dataclass
class DeviceSection:
    mtj_length: float = 50e-9
    mtj_width: float = 30e-9
    hm_length: float = 100e-9
    hm_width: float = 50e-9
    hm_thickness: float = 3e-9
    ra_product: float = 10e-12
    tmr0: float = 100.0
    v0: float = 0.65


@dataclass
class CircuitSection:
    vdd: float = 0.8
    vss: float = 0.0
    v_read: float = 0.1
    pre_activation_scale: float = 0.01
    linearize_inputs: bool = True
    variation_sigma: float = 0.0  # percent
    variation_seed: int = 0
    vtc_table: str = ""


@dataclass
class OutputSection:
    dir: str = "runs/default"


@dataclass
class RunConfig:
    data: DataSection = field(default_factory=DataSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    device: DeviceSection = field(default_factory=DeviceSection)
    circuit: CircuitSection = field(default_factory=CircuitSection)
    output: OutputSection = field(default_factory=OutputSection)

    def set(self, section: str, key: str, raw: str):
        sec = getattr(self, section, None) if section in _SECTIONS else None
        if sec is None:
            raise ConfigError(f"unknown section [{section}]")
        types = {f.name: f.type for f in dataclasses.fields(sec)}
        if key not in types:
            raise ConfigError(f"unknown key {key!r} in [{section}]")
        setattr(sec, key, _convert(raw, types[key], f"{section}.{key}"))

    @property
    def topology(self) -> MlpTopology:
        return MlpTopology.parse(self.model.topology)

    @property
    def train_config(self) -> TrainConfig:
        return TrainConfig(**dataclasses.asdict(self.train))

    @property
    def geometry(self) -> DeviceGeometry:
        d = self.device
        return DeviceGeometry(d.mtj_length, d.mtj_width, d.hm_length, d.hm_width, d.hm_thickness)

    @property
    def material(self) -> MaterialParams:
        d = self.device
        return MaterialParams(d.ra_product, d.tmr0, d.v0)

    def validate(self) -> "RunConfig":
        try:
            self.topology
            self.train_config
            self.geometry
            self.material
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        c = self.circuit
        if not c.vdd > c.vss:
            raise ConfigError("circuit.vdd must exceed circuit.vss")
        if not 0 < c.v_read <= c.vdd:
            raise ConfigError("circuit.v_read must be in (0, vdd]")
        if not c.pre_activation_scale > 0:
            raise ConfigError("circuit.pre_activation_scale must be > 0")
        if c.variation_sigma < 0:
            raise ConfigError("circuit.variation_sigma must be >= 0")
        if self.data.train_limit < 0 or self.data.test_limit < 0:
            raise ConfigError("data limits must be >= 0")
        return self

    def dump(self) -> str:
        parser = configparser.ConfigParser()
        for name in _SECTIONS:
            sec = getattr(self, name)
            parser[name] = {f.name: str(getattr(sec, f.name)) for f in dataclasses.fields(sec)}
        lines = []
        for name in _SECTIONS:
            lines.append(f"[{name}]")
            lines.extend(f"{k} = {v}" for k, v in parser[name].items())
            lines.append("")
        return "\n".join(lines)


_SECTIONS = ("data", "model", "train", "device", "circuit", "output")


def _convert(raw: str, typ, name: str):
    typ = {"int": int, "float": float, "bool": bool, "str": str}.get(typ, typ)
    try:
        if typ is bool:
            low = str(raw).strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ is int:
            return int(str(raw).strip())
        if typ is float:
            return float(str(raw).strip())
        return str(raw).strip()
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r} as {typ.__name__}") from None


def load_config(path=None, overrides: list[str] | None = None) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"config file {path} not found")
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(path.read_text(), source=str(path))
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from exc
        for section in parser.sections():
            for key, value in parser[section].items():
                cfg.set(section, key, value)
    for item in overrides or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        dotted, value = item.split("=", 1)
        section, key = dotted.strip().split(".", 1)
        cfg.set(section, key, value)
    return cfg.validate()

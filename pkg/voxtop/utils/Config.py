from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path

from voxtop.models.Domain import DesignDomain, build_domain
from voxtop.models.FEA import MaterialModel
from voxtop.models.Network import TrainConfig
from voxtop.models.Sampler import SamplerConfig
from voxtop.models.SIMP import SIMPConfig
from voxtop.utils.Constants import Channels, Process, ReferenceDomain, SIMPDefaults, Strategies
from voxtop.utils.Errors import ConfigError, MissingInputError


@dataclass(frozen=True)
class DomainSettings:
    nx: int = ReferenceDomain.nx
    ny: int = ReferenceDomain.ny
    nz: int = ReferenceDomain.nz
    lx: float = ReferenceDomain.lx
    ly: float = ReferenceDomain.ly
    lz: float = ReferenceDomain.lz

    def __post_init__(self):
        self.build()

    def build(self) -> DesignDomain:
        return build_domain(self.nx, self.ny, self.nz, self.lx, self.ly, self.lz)


@dataclass(frozen=True)
class SIMPSettings:
    rmin: float = SIMPDefaults.rmin_elements
    move: float = SIMPDefaults.move
    damping: float = SIMPDefaults.damping
    change_tol: float = SIMPDefaults.change_tol
    max_iter: int = SIMPDefaults.max_iter
    pcg_tol: float = SIMPDefaults.pcg_tol


@dataclass(frozen=True)
class NetworkSettings:
    width: int = 16
    channels: typing.Tuple[str, ...] = tuple(Channels.groups)

    def __post_init__(self):
        if self.width < 2:
            raise ValueError(f"Invalid network width: '{self.width}'")
        if not self.channels or any(c not in Channels.groups for c in self.channels):
            raise ValueError(f"Invalid channel groups: '{self.channels}'")


@dataclass(frozen=True)
class DatasetSettings:
    problems: int = 60
    pairs_per_trace: int = 1
    strategy: str = "poisson30"
    augment: bool = False

    def __post_init__(self):
        if self.strategy not in Strategies.means:
            raise ValueError(f"Unknown strategy: '{self.strategy}', must be one of {tuple(Strategies.means)}")
        if self.problems < 1 or self.pairs_per_trace < 1:
            raise ValueError(
                f"Invalid dataset size: {self.problems} problem(s) x {self.pairs_per_trace} pair(s)"
            )


@dataclass(frozen=True)
class ProcessSettings:
    tau: float = Process.tau
    gap: int = Process.gap
    threshold: float = Process.threshold
    test_m: int = 20
    test_n: int = 15
    grid_m: typing.Tuple[int, ...] = (5, 10, 15, 20, 25, 30)
    grid_n: typing.Tuple[int, ...] = (0, 5, 10, 15, 20, 25)

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError(f"Invalid cutoff threshold: '{self.tau}'")
        if self.gap < 1:
            raise ValueError(f"Invalid gradient gap: '{self.gap}'")
        if not 0 <= self.test_n < self.test_m:
            raise ValueError(f"Invalid test pair: m={self.test_m}, n={self.test_n}")


@dataclass(frozen=True)
class HybridSettings:
    problems: int = 20
    # Hybrid seeds start this far past the run seed; None skips the build-dataset range
    seed_offset: typing.Optional[int] = None

    def __post_init__(self):
        if self.problems < 1:
            raise ValueError(f"Invalid hybrid problem count: '{self.problems}'")
        if self.seed_offset is not None and self.seed_offset < 0:
            raise ValueError(f"Invalid hybrid seed offset: '{self.seed_offset}'")


SECTIONS = {
    "domain": DomainSettings,
    "material": MaterialModel,
    "sampler": SamplerConfig,
    "simp": SIMPSettings,
    "network": NetworkSettings,
    "train": TrainConfig,
    "dataset": DatasetSettings,
    "process": ProcessSettings,
    "hybrid": HybridSettings,
}


def _coerce(value, default):
    """
    JSON lists become tuples wherever the default is a tuple, recursively
    """
    if isinstance(default, tuple) and isinstance(value, list):
        inner = default[0] if default else None
        return tuple(_coerce(v, inner) for v in value)
    return value


def _build_section(name: str, cls, values: dict):
    if not isinstance(values, dict):
        raise ConfigError(f"Config section '{name}' must be an object, got {type(values).__name__}")

    defaults = cls()
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"Unknown key(s) in config section '{name}': {unknown}")

    kwargs = {k: _coerce(v, getattr(defaults, k)) for k, v in values.items()}
    try:
        return dataclasses.replace(defaults, **kwargs)
    except (ValueError, TypeError) as e:
        raise ConfigError(f"Invalid config section '{name}': {e}") from e


@dataclass(frozen=True)
class RunConfig:
    domain: DomainSettings = field(default_factory=DomainSettings)
    material: MaterialModel = field(default_factory=MaterialModel)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    simp: SIMPSettings = field(default_factory=SIMPSettings)
    network: NetworkSettings = field(default_factory=NetworkSettings)
    train: TrainConfig = field(default_factory=TrainConfig)
    dataset: DatasetSettings = field(default_factory=DatasetSettings)
    process: ProcessSettings = field(default_factory=ProcessSettings)
    hybrid: HybridSettings = field(default_factory=HybridSettings)
    seed: int = 0

    def simp_config(self) -> SIMPConfig:
        return SIMPConfig(material=self.material, **dataclasses.asdict(self.simp))

    def dataset_seeds(self) -> typing.List[int]:
        return [self.seed + i for i in range(self.dataset.problems)]

    def hybrid_seed(self) -> int:
        """
        First hybrid problem seed, past the dataset seeds unless an offset is configured
        """
        offset = self.hybrid.seed_offset
        return self.seed + (self.dataset.problems if offset is None else offset)

    def override(self, section: str, **values) -> RunConfig:
        """
        Return a copy with the given section keys replaced; None values are ignored so unset
        command-line flags leave the config untouched
        """
        values = {k: v for k, v in values.items() if v is not None}
        if not values:
            return self
        current = dataclasses.asdict(getattr(self, section))
        current.update(values)
        return dataclasses.replace(self, **{section: _build_section(section, SECTIONS[section], current)})

    def with_seed(self, seed: typing.Optional[int]) -> RunConfig:
        if seed is None:
            return self
        if int(seed) != seed or not 0 <= seed < 2 ** 64:
            raise ConfigError(f"Invalid seed: '{seed}', must be an unsigned 64-bit integer")
        return dataclasses.replace(self, seed=int(seed))

    def toJSON(self) -> dict:
        return dataclasses.asdict(self)

    @staticmethod
    def fromJSON(inJSON: dict) -> RunConfig:
        if not isinstance(inJSON, dict):
            raise ConfigError("Config document must be a JSON object")
        unknown = sorted(set(inJSON) - set(SECTIONS) - {"seed"})
        if unknown:
            raise ConfigError(f"Unknown config section(s): {unknown}")

        sections = {
            name: _build_section(name, cls, inJSON[name])
            for name, cls in SECTIONS.items()
            if name in inJSON
        }
        config = RunConfig(**sections)
        return config.with_seed(inJSON.get("seed"))


def load_config(path: typing.Optional[Path] = None) -> RunConfig:
    """
    Load a RunConfig from a JSON file; built-in defaults when no path is given
    """
    if path is None:
        return RunConfig()

    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"Config file not found: '{path}'")
    try:
        with path.open(mode="r") as fID:
            document = json.load(fID)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config file '{path}' is not valid JSON: {e}") from e

    return RunConfig.fromJSON(document)

import json
import logging
import typing
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from voxtop.models.Domain import FACES, DesignDomain, Load, ProblemSpec
from voxtop.utils.Constants import SamplerDefaults
from voxtop.utils.Helpers import truncated_normal, truncated_poisson


@dataclass(frozen=True)
class SamplerConfig:
    vf_mean: float = SamplerDefaults.vf_mean
    vf_std: float = SamplerDefaults.vf_std
    vf_clamp: typing.Tuple[float, float] = SamplerDefaults.vf_clamp
    load_lambda: float = SamplerDefaults.load_lambda
    load_clamp: typing.Tuple[int, int] = SamplerDefaults.load_clamp
    bc_cases: typing.Tuple[int, ...] = SamplerDefaults.bc_cases
    anchor_ranges: typing.Tuple[typing.Tuple[float, float], ...] = SamplerDefaults.anchor_ranges

    def __post_init__(self):
        low, high = SamplerDefaults.vf_clamp
        if not low <= self.vf_clamp[0] < self.vf_clamp[1] <= high:
            raise ValueError(f"Invalid volume fraction clamp: '{self.vf_clamp}'")
        if not 1 <= self.load_clamp[0] <= self.load_clamp[1] <= 10:
            raise ValueError(f"Invalid load count clamp: '{self.load_clamp}'")
        if not self.load_lambda > 0:
            raise ValueError(f"Invalid load count mean: '{self.load_lambda}'")
        if not self.vf_std > 0:
            raise ValueError(f"Invalid volume fraction spread: '{self.vf_std}'")
        if not self.bc_cases or any(c not in (1, 2, 3, 4) for c in self.bc_cases):
            raise ValueError(f"Invalid constraint cases: '{self.bc_cases}'")
        for low, high in self.anchor_ranges:
            if not 0.0 <= low <= high <= 1.0:
                raise ValueError(f"Invalid anchor range: '{(low, high)}'")


def sample_volume_fraction(
    rng: np.random.Generator, config: SamplerConfig = SamplerConfig()
) -> float:
    """
    Normal(vf_mean, vf_std), redrawn until inside vf_clamp
    """
    low, high = config.vf_clamp
    return truncated_normal(rng, config.vf_mean, config.vf_std, low, high)


def sample_direction(rng: np.random.Generator) -> typing.Tuple[float, float, float]:
    """
    Componentwise uniform [0, 1) direction, normalized to unit length
    """
    while True:
        v = rng.random(3)
        norm = np.linalg.norm(v)
        if norm > 1e-12:
            return tuple(float(c) for c in v / norm)


def sample_loads(
    rng: np.random.Generator, domain: DesignDomain, config: SamplerConfig = SamplerConfig()
) -> typing.Tuple[Load, ...]:
    """
    Sample the load set: count ~ Poisson(load_lambda) truncated to load_clamp; per load a
    unit direction, a +/-1 magnitude, a boundary face, and in-face fractional coordinates
    drawn from anchor_ranges, snapped onto the face's node grid
    """
    low, high = config.load_clamp
    count = truncated_poisson(rng, config.load_lambda, low, high)

    loads = []
    for _ in range(count):
        direction = sample_direction(rng)
        magnitude = 1.0 if rng.random() < 0.5 else -1.0
        face = FACES[int(rng.integers(len(FACES)))]
        axis, side = divmod(FACES.index(face), 2)

        position = []
        for a, (lo, hi) in enumerate(config.anchor_ranges):
            if a == axis:
                position.append(float(side))
                continue
            frac = lo + (hi - lo) * rng.random()
            n = domain.shape[a]
            position.append(float(np.floor(frac * n + 0.5)) / n)

        loads.append(Load(face, tuple(position), direction, magnitude))

    return tuple(loads)


def sample_problem(
    seed: int, domain: DesignDomain, config: SamplerConfig = SamplerConfig()
) -> ProblemSpec:
    """
    Sample one ProblemSpec deterministically from its seed
    """
    rng = np.random.default_rng(seed)
    vf = sample_volume_fraction(rng, config)
    loads = sample_loads(rng, domain, config)
    bc_case = int(config.bc_cases[int(rng.integers(len(config.bc_cases)))])
    return ProblemSpec(domain=domain, volume_fraction=vf, loads=loads, bc_case=bc_case, seed=seed)


def sample_batch(
    base_seed: int,
    count: int,
    domain: DesignDomain,
    config: SamplerConfig = SamplerConfig(),
) -> typing.List[ProblemSpec]:
    """
    Sample count problems with seeds base_seed, base_seed + 1, ...
    """
    return [sample_problem(base_seed + i, domain, config) for i in range(count)]


def write_batch(problems: typing.Sequence[ProblemSpec], outdir: Path):
    """
    Write one problem_<seed>.json per spec plus a manifest.json listing the seeds
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for problem in problems:
        problem.save(outdir / f"problem_{problem.seed}.json")

    manifest = {
        "count": len(problems),
        "seeds": [problem.seed for problem in problems],
        "files": [f"problem_{problem.seed}.json" for problem in problems],
    }
    with (outdir / "manifest.json").open(mode="w") as fID:
        json.dump(manifest, fID, indent=2)

    logging.info(f"Wrote {len(problems)} problem(s) to '{outdir}'")


def read_batch(indir: Path) -> typing.List[ProblemSpec]:
    indir = Path(indir)
    with (indir / "manifest.json").open(mode="r") as fID:
        manifest = json.load(fID)
    return [ProblemSpec.load(indir / name) for name in manifest["files"]]

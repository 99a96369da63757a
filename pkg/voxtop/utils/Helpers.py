import math
import os
import typing
from pathlib import Path

import numpy as np
from scipy.special import gammaln

from voxtop.utils.Errors import ConfigError, MissingInputError


def standard_normal(rng: np.random.Generator) -> float:
    """
    Draw one standard normal variate with the Box-Muller transform of two uniforms

    The draw scheme is fixed so streams agree across platforms and numpy releases
    """
    u1 = 1.0 - rng.random()  # (0, 1]
    u2 = rng.random()
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


def truncated_normal(
    rng: np.random.Generator, mean: float, std: float, low: float, high: float
) -> float:
    """
    Draw from Normal(mean, std), redrawing until the value lies inside [low, high]
    """
    while True:
        value = mean + std * standard_normal(rng)
        if low <= value <= high:
            return value


def truncated_poisson_pmf(lam: float, low: int, high: int) -> np.ndarray:
    """
    Return the Poisson(lam) pmf restricted to the integers low..high and renormalized
    """
    if high < low:
        raise ValueError(f"Empty support: [{low}, {high}]")
    k = np.arange(low, high + 1, dtype=float)
    logp = k * math.log(lam) - lam - gammaln(k + 1.0)
    logp -= logp.max()
    p = np.exp(logp)
    return p / p.sum()


def truncated_poisson(rng: np.random.Generator, lam: float, low: int, high: int) -> int:
    """
    Draw a Poisson(lam) variate conditioned on low <= k <= high by CDF inversion

    Equal in distribution to redrawing until the value falls in range, but terminates for
    supports deep in the tail (e.g. lam=30 with high=1)
    """
    cdf = np.cumsum(truncated_poisson_pmf(lam, low, high))
    idx = int(np.searchsorted(cdf, rng.random(), side="right"))
    return low + min(idx, high - low)


def truncated_poisson_mean(lam: float, low: int, high: int) -> float:
    pmf = truncated_poisson_pmf(lam, low, high)
    return float(np.dot(np.arange(low, high + 1), pmf))


def resolve_threads(requested: typing.Optional[int] = None) -> int:
    """
    Resolve the worker count: explicit request, then $TOPO_THREADS, then 1
    """
    if requested is not None:
        return max(1, int(requested))

    env = os.environ.get("TOPO_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"Invalid TOPO_THREADS value: '{env}'")

    return 1


def as_field(values: np.ndarray, shape: typing.Tuple[int, int, int]) -> np.ndarray:
    """
    Reshape a flat x-fastest vector into an (nx, ny, nz) array
    """
    return np.reshape(values, shape, order="F")


def flatten_field(field: np.ndarray) -> np.ndarray:
    """
    Flatten an (nx, ny, nz) array into an x-fastest vector
    """
    return np.ravel(field, order="F")


def require_path(path, what: str = "input") -> Path:
    """
    Return path as a Path, raising MissingInputError when it does not exist
    """
    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"Missing {what}: '{path}'")
    return path


def parse_list(text: typing.Optional[str], cast: typing.Callable = str) -> typing.Optional[tuple]:
    """
    Split a comma-separated flag value, e.g. "density,gradient" or "5,10,20"
    """
    if text is None:
        return None
    items = [t.strip() for t in text.split(",") if t.strip()]
    try:
        return tuple(cast(t) for t in items)
    except ValueError:
        raise ConfigError(f"Invalid list value: '{text}'")

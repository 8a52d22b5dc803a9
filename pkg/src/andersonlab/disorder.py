"""Random site potentials with site-keyed, counter-based sampling.

The value at a site is a pure function of ``(base_seed, realization,
coordinates)``. Two cubes sampled with the same seed and realization agree on
shared sites, and realizations can be generated in any order or in parallel.

The keyed hash is a chain of SplitMix64 finalizers evaluated in numpy
``uint64`` arithmetic, which wraps modulo 2**64 as required.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError, HypothesisError
from .lattice import Cube, cube_sites

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_SEED_SALT = np.uint64(0x243F6A8885A308D3)


def _fmix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _u64(values) -> np.ndarray:
    # two's complement view so negative coordinates hash distinctly
    return np.asarray(values, dtype=np.int64).astype(np.uint64)


def realization_keys(base_seed: int, realizations) -> np.ndarray:
    """64-bit key per realization, a pure function of the base seed and index."""
    with np.errstate(over="ignore"):
        seed = _fmix(_u64(base_seed) ^ _SEED_SALT)
        return _fmix(seed + _GOLDEN * (_u64(realizations) + np.uint64(1)))


def site_uniforms(base_seed: int, realizations, sites: np.ndarray) -> np.ndarray:
    """Uniform [0, 1) draws of shape ``(R, N)`` for R realizations and N sites."""
    sites = np.asarray(sites, dtype=np.int64)
    keys = realization_keys(base_seed, np.atleast_1d(realizations))[:, None]
    with np.errstate(over="ignore"):
        h = np.broadcast_to(keys, (keys.shape[0], len(sites))).copy()
        for k in range(sites.shape[1]):
            h = _fmix((h ^ _u64(sites[:, k])[None, :]) + _GOLDEN * np.uint64(k + 2))
    return (h >> np.uint64(11)).astype(np.float64) * 2.0**-53


@dataclass(frozen=True)
class Distribution:
    """Single-site law: ``uniform`` on [a, b] or two-point ``bernoulli``.

    ``scaled_uniform(lam)`` is the uniform law on [0, lam].
    """

    kind: str
    a: float = 0.0
    b: float = 1.0
    p: float = 0.5

    def __post_init__(self):
        if self.kind not in ("uniform", "bernoulli"):
            raise DomainError(f"unknown distribution kind {self.kind!r}")
        if not (np.isfinite(self.a) and np.isfinite(self.b)):
            raise DomainError("distribution support must be compact")
        if self.kind == "uniform" and not self.b > self.a:
            raise DomainError(f"uniform law needs a < b, got [{self.a}, {self.b}]")
        if self.kind == "bernoulli" and not 0.0 <= self.p <= 1.0:
            raise DomainError(f"bernoulli probability {self.p} outside [0, 1]")

    @classmethod
    def uniform(cls, a: float = 0.0, b: float = 1.0) -> "Distribution":
        return cls("uniform", float(a), float(b))

    @classmethod
    def scaled_uniform(cls, lam: float) -> "Distribution":
        return cls("uniform", 0.0, float(lam))

    @classmethod
    def bernoulli(cls, p: float = 0.5, v0: float = 0.0, v1: float = 1.0) -> "Distribution":
        """Takes ``v1`` with probability ``p`` and ``v0`` otherwise."""
        return cls("bernoulli", float(v0), float(v1), float(p))

    @classmethod
    def from_config(cls, cfg: dict) -> "Distribution":
        kind = str(cfg.get("kind", "")).lower()
        params = dict(cfg.get("params", {}))
        if kind == "uniform":
            return cls.uniform(params.get("a", 0.0), params.get("b", 1.0))
        if kind in ("scaled_uniform", "scaleduniform"):
            if "lambda" not in params:
                raise DomainError("scaled_uniform needs params.lambda")
            return cls.scaled_uniform(params["lambda"])
        if kind == "bernoulli":
            return cls.bernoulli(params.get("p", 0.5), params.get("v0", 0.0), params.get("v1", 1.0))
        raise DomainError(f"unknown distribution kind {kind!r}")

    def to_config(self) -> dict:
        if self.kind == "uniform":
            return {"kind": "uniform", "params": {"a": self.a, "b": self.b}}
        return {"kind": "bernoulli", "params": {"p": self.p, "v0": self.a, "v1": self.b}}

    @property
    def has_density(self) -> bool:
        return self.kind == "uniform"

    @property
    def density_bound(self) -> float | None:
        """Sup of the density, or ``None`` when the law has no density."""
        if self.kind == "uniform":
            return 1.0 / (self.b - self.a)
        return None

    @property
    def support(self) -> tuple[float, float]:
        return (min(self.a, self.b), max(self.a, self.b))

    def require_density(self, purpose: str = "this experiment") -> float:
        g = self.density_bound
        if g is None:
            raise HypothesisError(f"{purpose} needs a bounded density; {self.kind} law has no density")
        return g

    def transform(self, u: np.ndarray) -> np.ndarray:
        """Map uniform [0, 1) draws to samples of this law."""
        if self.kind == "uniform":
            return self.a + (self.b - self.a) * u
        return np.where(u < self.p, self.b, self.a)


def sample_values(sites: np.ndarray, dist: Distribution, base_seed: int, realizations) -> np.ndarray:
    """Potential values of shape ``(R, N)`` on an arbitrary site array."""
    return dist.transform(site_uniforms(base_seed, realizations, sites))


@dataclass(frozen=True, eq=False)
class Potential:
    """Potential values on a cube, in its lexicographic site order."""

    cube: Cube
    values: np.ndarray
    base_seed: int | None = None
    realization: int | None = None
    cap: float | None = None
    label: str = ""

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.cube.size,):
            raise DomainError(f"potential needs {self.cube.size} values, got {values.shape}")
        object.__setattr__(self, "values", values)

    @property
    def provenance(self) -> str:
        parts = [self.label or "potential"]
        if self.base_seed is not None:
            parts.append(f"seed={self.base_seed}")
        if self.realization is not None:
            parts.append(f"realization={self.realization}")
        if self.cap is not None:
            parts.append(f"cap={self.cap!r}")
        return ";".join(parts)

    def values_at(self, sites: np.ndarray) -> np.ndarray:
        sites = np.asarray(sites, dtype=np.int64)
        if not np.all(self.cube.contains_array(sites)):
            raise DomainError("potential is not defined on every requested site")
        return self.values[self.cube.indices_of(sites)]

    @classmethod
    def constant(cls, cube: Cube, value: float) -> "Potential":
        return cls(cube, np.full(cube.size, float(value)), label=f"constant {value!r}")


def sample_potential(cube: Cube, dist: Distribution, base_seed: int, realization: int) -> Potential:
    """One i.i.d. draw per site of ``cube``."""
    vals = sample_values(cube_sites(cube), dist, base_seed, [realization])[0]
    return Potential(cube, vals, base_seed=int(base_seed), realization=int(realization), label=dist.kind)


def disorder_parameter(dist: Distribution) -> float:
    """Reciprocal of the density bound."""
    return 1.0 / dist.require_density("the disorder parameter")


def truncate_potential(potential: Potential, cap: float) -> Potential:
    """Pointwise minimum with ``cap``."""
    if cap < 0:
        raise DomainError(f"truncation cap must be nonnegative, got {cap}")
    return replace(potential, values=np.minimum(potential.values, cap), cap=float(cap))

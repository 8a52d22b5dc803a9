"""Monte Carlo plumbing: estimates with 95% intervals and a chunked
realization loop whose output does not depend on the worker count.

Realizations are split into fixed-size chunks independent of ``workers``;
per-realization results are concatenated in index order and reduced once,
so 1 and N workers produce identical floating-point results.
"""

from __future__ import annotations

import math
import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .errors import DomainError

Z95 = 1.959963984540054


@dataclass(frozen=True)
class McEstimate:
    """Point estimate with a 95% interval; ``successes`` is set for proportions."""

    trials: int
    estimate: float
    ci_lo: float
    ci_hi: float
    seed: int
    successes: int | None = None
    std: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def proportion_estimate(successes: int, trials: int, seed: int) -> McEstimate:
    """Wilson score interval for a binomial proportion."""
    if trials < 1:
        raise DomainError("need at least one trial")
    p = successes / trials
    z2 = Z95 * Z95
    denom = 1 + z2 / trials
    centre = (p + z2 / (2 * trials)) / denom
    half = Z95 * math.sqrt(p * (1 - p) / trials + z2 / (4 * trials * trials)) / denom
    # the endpoints are exact at 0 and n; rounding would otherwise exclude p
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == trials else min(1.0, centre + half)
    return McEstimate(trials, p, lo, hi, seed, int(successes))


def mean_estimate(samples: np.ndarray, seed: int) -> McEstimate:
    """Sample mean with a normal-approximation interval."""
    samples = np.asarray(samples, dtype=float)
    n = len(samples)
    if n < 1:
        raise DomainError("need at least one trial")
    mean = float(np.mean(samples))
    std = float(np.std(samples, ddof=1)) if n > 1 else 0.0
    half = Z95 * std / math.sqrt(n)
    return McEstimate(n, mean, mean - half, mean + half, seed, None, std)


def chunk_size_for(n_sites: int, budget: int = 4_000_000) -> int:
    """Realizations per chunk keeping a stacked ``(R, N, N)`` array near ``budget`` entries."""
    return max(1, min(4096, budget // max(1, n_sites * n_sites)))


def run_realizations(
    fn: Callable[[int, int], np.ndarray],
    trials: int,
    workers: int = 1,
    chunk: int = 1024,
) -> np.ndarray:
    """Evaluate ``fn(start, stop)`` over fixed chunks and concatenate in order.

    ``fn`` must be picklable (a module-level function or a partial of one)
    when ``workers > 1``.
    """
    if trials < 1:
        raise DomainError("need at least one trial")
    if workers < 1:
        raise DomainError("need at least one worker")
    bounds = [(s, min(s + chunk, trials)) for s in range(0, trials, chunk)]
    if workers == 1 or len(bounds) == 1:
        parts = [fn(a, b) for a, b in bounds]
    else:
        ctx = mp.get_context("fork")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            parts = list(pool.map(fn, [a for a, _ in bounds], [b for _, b in bounds]))
    return np.concatenate(parts, axis=0)

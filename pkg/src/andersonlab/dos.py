"""Density of states on finite cubes and the Wegner / Lifshitz experiments."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from .disorder import Distribution, sample_values
from .errors import DomainError
from .lattice import Cube, cube_sites
from .montecarlo import McEstimate, chunk_size_for, mean_estimate, proportion_estimate, run_realizations
from .operators import BoundaryKind, build_h

# Per-site trace-difference constant, frozen from the first verified run:
# the largest value of |difference| (Im z)^2 L seen over the probe sweep was
# about 0.2, doubled for slack.
C_PRIME = 0.4


def batch_eigvalsh(start: int, stop: int, *, sites: np.ndarray, base: np.ndarray, dist: Distribution, seed: int):
    """Spectra of ``base + diag(V_r)`` for realizations ``start..stop-1``."""
    vals = sample_values(sites, dist, seed, np.arange(start, stop))
    n = base.shape[0]
    stack = np.broadcast_to(base, (len(vals), n, n)).copy()
    idx = np.arange(n)
    stack[:, idx, idx] += vals
    return np.linalg.eigvalsh(stack)


def cube_spectra(cube: Cube, bc, dist: Distribution, trials: int, seed: int, workers: int = 1) -> np.ndarray:
    """Eigenvalues of ``trials`` realizations on ``cube``, shape ``(trials, |cube|)``."""
    bc = BoundaryKind.parse(bc)
    sites = cube_sites(cube)
    base = build_h(cube, bc, None).dense()
    fn = partial(batch_eigvalsh, sites=sites, base=base, dist=dist, seed=seed)
    return run_realizations(fn, trials, workers, chunk_size_for(len(sites)))


def ids_samples(E, L: int, bc, dist: Distribution, trials: int, seed: int, d: int = 1, workers: int = 1) -> np.ndarray:
    """Per-realization ``N(H, E) / |cube|``; shape ``(trials, len(E))``."""
    energies = np.atleast_1d(np.asarray(E, dtype=float))
    cube = Cube.at_origin(L, d)
    ev = cube_spectra(cube, bc, dist, trials, seed, workers)
    counts = np.stack([np.count_nonzero(ev < e, axis=1) for e in energies], axis=1)
    return counts / cube.size


def ids_estimate(E: float, L: int, bc, dist: Distribution, trials: int, seed: int, d: int = 1, workers: int = 1) -> McEstimate:
    """Monte Carlo mean of the per-site eigenvalue count below ``E``."""
    if trials < 1:
        raise DomainError("need at least one trial")
    return mean_estimate(ids_samples(E, L, bc, dist, trials, seed, d, workers)[:, 0], seed)


@dataclass(frozen=True, eq=False)
class IdsCurve:
    energies: np.ndarray
    values: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    L: int
    bc: str
    trials: int
    seed: int
    dist: dict = field(default_factory=dict)

    def rows(self) -> list[dict]:
        return [
            {"E": e, "value": v, "ci_lo": lo, "ci_hi": hi, "L": self.L, "bc": self.bc, "trials": self.trials, "seed": self.seed}
            for e, v, lo, hi in zip(self.energies, self.values, self.ci_lo, self.ci_hi)
        ]


def ids_curve(energies, L: int, bc, dist: Distribution, trials: int, seed: int, d: int = 1, workers: int = 1) -> IdsCurve:
    energies = np.sort(np.asarray(energies, dtype=float))
    samples = ids_samples(energies, L, bc, dist, trials, seed, d, workers)
    ests = [mean_estimate(samples[:, k], seed) for k in range(len(energies))]
    return IdsCurve(
        energies,
        np.array([e.estimate for e in ests]),
        np.array([e.ci_lo for e in ests]),
        np.array([e.ci_hi for e in ests]),
        L,
        BoundaryKind.parse(bc).value,
        trials,
        seed,
        dist.to_config(),
    )


@dataclass(frozen=True)
class ConvergenceProbe:
    z: complex
    L: int
    buffer: int
    value: float
    bound: float
    passed: bool


def ids_convergence_probe(
    z: complex,
    L: int,
    realization: int = 0,
    dist: Distribution | None = None,
    seed: int = 0,
    d: int = 1,
    buffer: int | None = None,
) -> ConvergenceProbe:
    """Per-site resolvent trace on ``Lambda_L`` versus the same sites inside
    the buffered cube ``Lambda_{L+B}``.

    ``dist=None`` means the free operator.
    """
    if z.imag == 0:
        raise DomainError("the probe needs Im z != 0")
    B = L if buffer is None else int(buffer)
    small = Cube.at_origin(L, d)
    big = Cube.at_origin(L + B, d)
    if dist is None:
        v_big = np.zeros(big.size)
    else:
        v_big = sample_values(cube_sites(big), dist, seed, [realization])[0]
    inner = big.indices_of(cube_sites(small))
    a_big = build_h(big, BoundaryKind.SIMPLE, v_big).dense()
    a_small = build_h(small, BoundaryKind.SIMPLE, v_big[inner]).dense()
    g_big = np.linalg.inv(a_big - z * np.eye(big.size))
    g_small = np.linalg.inv(a_small - z * np.eye(small.size))
    value = abs(np.trace(g_small) - np.trace(g_big[np.ix_(inner, inner)])) / small.size
    bound = C_PRIME / (z.imag**2 * L)
    return ConvergenceProbe(complex(z), L, B, float(value), float(bound), bool(value <= bound))


@dataclass(frozen=True)
class WegnerResult:
    estimate: McEstimate
    bound: float
    passed: bool
    E: float
    eps: float


def _window_counts(ev: np.ndarray, lo: float, hi: float) -> np.ndarray:
    return np.count_nonzero((ev > lo) & (ev <= hi), axis=1)


def wegner_experiment(
    E: float, eps: float, cube: Cube, dist: Distribution, trials: int, seed: int, workers: int = 1
) -> WegnerResult:
    """Mean eigenvalue count in ``(E - eps, E + eps]`` against ``4 |g| |cube| eps``."""
    g = dist.require_density("the Wegner experiment")
    if eps <= 0:
        raise DomainError("eps must be positive")
    ev = cube_spectra(cube, BoundaryKind.SIMPLE, dist, trials, seed, workers)
    est = mean_estimate(_window_counts(ev, E - eps, E + eps), seed)
    bound = 4.0 * g * cube.size * eps
    return WegnerResult(est, bound, bool(est.ci_hi <= bound), float(E), float(eps))


@dataclass(frozen=True)
class TwoCubeResult:
    estimate: McEstimate
    bound: float
    lemma_bound: float
    passed: bool
    eps: float


def two_cube_resonance_experiment(
    cube1: Cube, cube2: Cube, eps: float, dist: Distribution, trials: int, seed: int, workers: int = 1
) -> TwoCubeResult:
    """Frequency of ``dist(spec_1, spec_2) < eps`` for two disjoint cubes.

    Both cubes are sampled from the same realization; disjointness makes
    their potentials independent.
    """
    g = dist.require_density("the two-cube experiment")
    if eps < 0:
        raise DomainError("eps must be nonnegative")
    if max(abs(a - b) for a, b in zip(cube1.center, cube2.center)) <= cube1.radius + cube2.radius:
        raise DomainError("the cubes overlap, so their potentials are not independent")
    e1 = cube_spectra(cube1, BoundaryKind.SIMPLE, dist, trials, seed, workers)
    e2 = cube_spectra(cube2, BoundaryKind.SIMPLE, dist, trials, seed, workers)
    gap = np.min(np.abs(e1[:, :, None] - e2[:, None, :]), axis=(1, 2))
    est = proportion_estimate(int(np.count_nonzero(gap < eps)), trials, seed)
    lemma = 4.0 * g * eps * cube1.size * cube2.size
    return TwoCubeResult(est, 2 * lemma, lemma, bool(est.ci_hi <= 2 * lemma), float(eps))


def free_neumann_gap(L: int, d: int = 1) -> float:
    """First nonzero eigenvalue of the free Neumann operator on ``Lambda_L``."""
    ev = np.linalg.eigvalsh(build_h(Cube.at_origin(L, d), BoundaryKind.NEUMANN, None).dense())
    return float(ev[1])


def tent_quotient(L: int, d: int = 1) -> float:
    """Rayleigh quotient of ``L - |n|_inf`` for the free Dirichlet operator."""
    cube = Cube.at_origin(L, d)
    psi = (L - np.max(np.abs(cube_sites(cube)), axis=1)).astype(float)
    a = build_h(cube, BoundaryKind.DIRICHLET, None).dense()
    return float(psi @ a @ psi / (psi @ psi))


def neumann_ground_tail(
    L: int, threshold: float, dist: Distribution, trials: int, seed: int, d: int = 1, workers: int = 1
) -> McEstimate:
    """Frequency of ``E_0(H^N) < threshold`` on ``Lambda_L``."""
    ev = cube_spectra(Cube.at_origin(L, d), BoundaryKind.NEUMANN, dist, trials, seed, workers)
    return proportion_estimate(int(np.count_nonzero(ev[:, 0] < threshold)), trials, seed)


@dataclass
class LifshitzReport:
    d: int
    gap_scaled: dict
    c: float
    tent_scaled: dict
    c0: float
    tails: dict
    tail_rate: float | None
    double_log_slope: float | None


def lifshitz_probes(
    d: int,
    Ls,
    dist: Distribution,
    trials: int = 0,
    seed: int = 0,
    tail_Ls=None,
    slope_L: int | None = None,
    workers: int = 1,
) -> LifshitzReport:
    """Finite-volume ingredients of the Lifshitz-tail bounds.

    ``gap_scaled[L] = L^2 E_1`` of the free Neumann operator (``c`` is the
    minimum), ``tent_scaled[L] = L^2`` times the tent quotient (``c0`` is the
    maximum). With ``trials > 0`` the tail ``P(E_0(H^N) < c / (3 L^2))`` is
    estimated for each L in ``tail_Ls``; ``tail_rate`` is the fitted decay of
    ``-ln P`` per site between the first and last of them. The double-log
    slope from IDS data at ``slope_L`` is a diagnostic only.
    """
    Ls = [int(x) for x in Ls]
    if min(Ls) < 2:
        raise DomainError("Lifshitz probes need L >= 2")
    gaps = {L: L * L * free_neumann_gap(L, d) for L in Ls}
    tents = {L: L * L * tent_quotient(L, d) for L in Ls}
    c = min(gaps.values())
    c0 = max(tents.values())
    tails: dict = {}
    rate = None
    slope = None
    if trials > 0:
        tail_Ls = list(tail_Ls) if tail_Ls is not None else Ls[:2]
        for L in tail_Ls:
            tails[L] = neumann_ground_tail(L, c / (3 * L * L), dist, trials, seed, d, workers)
        a, b = tail_Ls[0], tail_Ls[-1]
        pa, pb = tails[a].estimate, tails[b].estimate
        if pa > 0 and pb > 0 and a != b:
            rate = (math.log(pa) - math.log(pb)) / ((2 * b + 1) ** d - (2 * a + 1) ** d)
        slope = _double_log_slope(slope_L or max(Ls), dist, trials, seed, d, workers)
    return LifshitzReport(d, gaps, c, tents, c0, tails, rate, slope)


def _double_log_slope(L: int, dist: Distribution, trials: int, seed: int, d: int, workers: int) -> float | None:
    cube = Cube.at_origin(L, d)
    ev = cube_spectra(cube, BoundaryKind.NEUMANN, dist, min(trials, 2000), seed, workers).ravel()
    e0 = dist.support[0]
    grid = e0 + np.geomspace(1e-2, 0.5, 12) * (dist.support[1] - e0 + 4 * d)
    n = np.array([np.count_nonzero(ev < e) for e in grid]) / ev.size
    ok = (n > 0) & (n < 1)
    if np.count_nonzero(ok) < 3:
        return None
    x = np.log(grid[ok] - e0)
    y = np.log(np.abs(np.log(n[ok])))
    return float(np.polyfit(x, y, 1)[0])

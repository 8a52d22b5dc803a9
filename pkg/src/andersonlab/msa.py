"""Multiscale-analysis bookkeeping: length and rate schedules, the gate
inequalities on the initial scale, probability budgets, Monte Carlo
estimates of the single-scale and two-cube failure probabilities, and both
initial-scale estimates (large disorder, low energy).

Scales follow ``L_{k+1} = ceil(L_k^alpha)``. Scales beyond 2**53 are carried
as floats (and as ``inf`` past the float range); every bound evaluated on them
is monotone, so that loses nothing.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field
from functools import partial

import numpy as np

from .disorder import Distribution, sample_values
from .dos import cube_spectra, free_neumann_gap
from .errors import ConfigError, DomainError
from .green import _required_indices, classify_batch, resolvent_lipschitz_margin
from .lattice import Cube, cube_sites
from .montecarlo import McEstimate, chunk_size_for, proportion_estimate, run_realizations
from .operators import BoundaryKind, build_h

WEGNER_C = 4.0
_EXACT_LIMIT = 2**53


@dataclass(frozen=True)
class MsaParams:
    """Parameters of one multiscale run. ``p`` and ``alpha`` default to
    ``2d + 2`` and the midpoint of ``(1, 2p/(p + 2d))``; ``L0`` defaults to
    the smallest scale passing both length gates at that ``alpha`` and
    ``gamma0`` to the smallest value allowed by the initial-rate gate."""

    d: int = 1
    L0: int | None = None
    p: float | None = None
    alpha: float | None = None
    gamma0: float | None = None
    energy: tuple[float, float] = (0.0, 0.0)
    dist: Distribution = field(default_factory=Distribution.uniform)
    path: str = "weak"

    def __post_init__(self):
        p = float(2 * self.d + 2) if self.p is None else float(self.p)
        object.__setattr__(self, "p", p)
        if self.alpha is None:
            object.__setattr__(self, "alpha", 0.5 * (1.0 + 2 * p / (p + 2 * self.d)))
        if self.L0 is None and self.alpha > 1:
            object.__setattr__(self, "L0", gate_scale(self.alpha))
        if self.gamma0 is None and self.L0 is not None and self.L0 >= 1:
            object.__setattr__(self, "gamma0", 16.0 / self.L0 ** (self.alpha / 2))
        e = self.energy
        if np.isscalar(e):
            object.__setattr__(self, "energy", (float(e), float(e)))
        else:
            object.__setattr__(self, "energy", (float(e[0]), float(e[1])))

    @property
    def alpha_max(self) -> float:
        return 2 * self.p / (self.p + 2 * self.d)

    def violations(self) -> list[str]:
        out = []
        if int(self.d) != self.d or self.d < 1:
            out.append(f"dimension d must be a positive integer, got {self.d}")
        if self.L0 is None or int(self.L0) != self.L0 or self.L0 < 2:
            out.append(f"L0 must be an integer >= 2, got {self.L0}")
        if not self.p > 2 * self.d:
            out.append(f"p > 2d violated: p={self.p}, 2d={2 * self.d}")
        if not 1.0 < self.alpha < self.alpha_max:
            out.append(f"1 < alpha < 2p/(p+2d) = {self.alpha_max:.6g} violated: alpha={self.alpha}")
        if self.gamma0 is None or not self.gamma0 >= 0:
            out.append(f"gamma0 must be nonnegative, got {self.gamma0}")
        if self.energy[0] > self.energy[1]:
            out.append(f"energy interval is reversed: {self.energy}")
        if self.path not in ("weak", "strong"):
            out.append(f"path must be 'weak' or 'strong', got {self.path!r}")
        return out

    def validate(self) -> "MsaParams":
        v = self.violations()
        if v:
            raise ConfigError(v)
        return self

    def to_dict(self) -> dict:
        out = asdict(self)
        out["dist"] = self.dist.to_config()
        out["energy"] = list(self.energy)
        return out


def gate_scale(alpha: float) -> int:
    """Smallest integer ``L0`` with ``L0^(alpha-1) >= 32`` and ``L0^((alpha-1)^2) >= 2``."""
    if not alpha > 1:
        raise DomainError(f"alpha must exceed 1, got {alpha}")
    a = alpha - 1
    L0 = max(2, math.ceil(max(32.0 ** (1 / a), 2.0 ** (1 / (a * a)))))
    if L0 >= _EXACT_LIMIT:
        # neighbouring integers are indistinguishable through float pow here
        return int(L0)
    # the float estimate can sit an ulp on either side of the true threshold
    while L0 > 2 and (L0 - 1) ** a >= 32 and (L0 - 1) ** (a * a) >= 2:
        L0 -= 1
    while not (L0**a >= 32 and L0 ** (a * a) >= 2):
        L0 += 1
    return int(L0)


def next_scale(L, alpha: float):
    """``ceil(L^alpha)``; exact integer while below 2**53."""
    if math.isinf(L):
        return math.inf
    try:
        x = float(L) ** alpha
    except OverflowError:
        return math.inf
    if math.isinf(x) or x >= _EXACT_LIMIT:
        return x
    r = round(x)
    # pow is correct to a few ulp; an exact integer power must not round up
    if abs(x - r) <= 4 * np.finfo(float).eps * x:
        return int(r)
    return int(math.ceil(x))


def scales(L0: int, alpha: float, k_max: int) -> list:
    out = [int(L0)]
    for _ in range(k_max):
        out.append(next_scale(out[-1], alpha))
    return out


def _inv_pow(L, beta: float) -> float:
    """``L^-beta`` that underflows to 0 instead of raising."""
    if math.isinf(L):
        return 0.0
    return math.exp(-beta * math.log(L))


@dataclass
class RateReport:
    gammas: list
    gamma0: float
    min_gamma: float
    half_holds: bool
    half_gates: bool
    floor_holds: bool
    floor_gates: bool
    floor: list
    negative_at: int | None


def initial_gates(L0, alpha: float, gamma0: float) -> list[dict]:
    """The three gate inequalities on ``(L0, alpha, gamma0)``."""
    rows = [
        ("L0^(alpha-1) >= 32", L0 ** (alpha - 1), 32.0),
        ("L0^((alpha-1)^2) >= 2", L0 ** ((alpha - 1) ** 2), 2.0),
        ("gamma0 >= 16 / L0^(alpha/2)", gamma0, 16.0 / L0 ** (alpha / 2)),
    ]
    return [{"gate": g, "value": float(v), "threshold": float(t), "pass": bool(v >= t)} for g, v, t in rows]


def floor_gates(L0, alpha: float, gamma0: float) -> list[dict]:
    """Sufficient conditions for ``gamma_k >= 2/sqrt(L_k)`` at every scale:
    ``4/L^(alpha-1) <= 1/2`` and ``4/L^(alpha/2) <= 1/sqrt(L)`` on ``L0`` (both
    then hold at every larger scale) plus ``gamma0 >= 2/sqrt(L0)``."""
    rows = [
        ("L0^(alpha-1) >= 8", L0 ** (alpha - 1), 8.0),
        ("L0^((alpha-1)/2) >= 4", L0 ** ((alpha - 1) / 2), 4.0),
        ("gamma0 >= 2 / sqrt(L0)", gamma0, 2.0 / math.sqrt(L0)),
    ]
    return [{"gate": g, "value": float(v), "threshold": float(t), "pass": bool(v >= t)} for g, v, t in rows]


def rate_recursion(gamma0: float, schedule, alpha: float | None = None) -> RateReport:
    """Iterate ``g_{k+1} = g_k - 4 g_k / L_k^(alpha-1) - 2 / L_k^(alpha/2)``.

    ``schedule`` is an ``MsaSchedule`` or a list of scales (then ``alpha`` is
    required). Negative rates are reported, not raised. When the gates hold
    the half-rate and floor bounds are asserted, since they are theorems
    about this exact arithmetic.
    """
    if gamma0 < 0:
        raise DomainError(f"gamma0 must be nonnegative, got {gamma0}")
    if isinstance(schedule, MsaSchedule):
        alpha = schedule.params.alpha
        Ls = schedule.scales
    else:
        Ls = list(schedule)
        if alpha is None:
            raise DomainError("alpha is required with a bare scale list")
    g = [float(gamma0)]
    for L in Ls[:-1]:
        gk = g[-1]
        g.append(gk - 4 * gk * _inv_pow(L, alpha - 1) - 2 * _inv_pow(L, alpha / 2))
    floor = [2 * _inv_pow(L, 0.5) for L in Ls]
    half_gates = all(r["pass"] for r in initial_gates(Ls[0], alpha, gamma0))
    fl_gates = all(r["pass"] for r in floor_gates(Ls[0], alpha, gamma0))
    mn = min(g)
    half = bool(mn >= gamma0 / 2 and gamma0 > 0)
    fl = bool(all(x >= f for x, f in zip(g, floor)))
    if half_gates and not half:
        raise AssertionError(f"gates hold but min rate {mn} < gamma0/2 = {gamma0 / 2}")
    if fl_gates and not fl:
        raise AssertionError("floor gates hold but a rate fell below 2/sqrt(L_k)")
    neg = next((k for k, x in enumerate(g) if x < 0), None)
    return RateReport(g, float(gamma0), mn, half, half_gates, fl, fl_gates, floor, neg)


def tail_sum(Ls, beta: float) -> dict:
    """Partial sum of ``L_k^-beta`` against ``2 / L0^beta``."""
    L0 = Ls[0]
    total = math.fsum(_inv_pow(L, beta) for L in Ls)
    bound = 2 * _inv_pow(L0, beta)
    return {"beta": float(beta), "sum": total, "bound": bound, "pass": bool(total <= bound)}


def annulus_cube_count(l, L_next, d: int):
    """Number of cubes ``Lambda_l(m)`` well inside ``Lambda_{8 L'} minus Lambda_{2l}``.

    Exact for integer scales; a float (possibly ``inf``) once a scale is.
    """
    if isinstance(L_next, float) or isinstance(l, float):
        try:
            return float((2 * (8 * L_next - 1 - l) + 1) ** d - (2 * (3 * l + 1) + 1) ** d)
        except OverflowError:
            return math.inf
    return (2 * (8 * L_next - 1 - l) + 1) ** d - (2 * (3 * l + 1) + 1) ** d


def _log_count(l, L_next, d: int) -> float:
    count = annulus_cube_count(l, L_next, d)
    if count <= 0:
        return -math.inf
    if math.isinf(count):
        # the outer cube dominates: log of (16 L' - 2l - 1)^d to double precision
        return d * (math.log(L_next) + math.log(16.0))
    return math.log(count)


def scale_budget(k: int, l, L_next, p: float, alpha: float, d: int) -> dict:
    """Budget ``|cubes| / l^(2p)`` at scale ``k`` and the implied constant in
    ``C / l^(2p - alpha d)``, evaluated in log space."""
    count = annulus_cube_count(l, L_next, d)
    expo = 2 * p - alpha * d
    if math.isinf(l):
        return {"k": k, "L": l, "count": count, "p_k": 0.0, "exponent": expo, "C_implied": None}
    log_p = _log_count(l, L_next, d) - 2 * p * math.log(l)
    p_k = math.exp(log_p) if log_p > -745 else 0.0
    log_c = log_p + expo * math.log(l)
    c_impl = math.exp(log_c) if -745 < log_c < 709 else (0.0 if log_c <= -745 else math.inf)
    return {"k": k, "L": l, "count": count, "p_k": p_k, "exponent": expo, "C_implied": c_impl}


@dataclass
class MsaSchedule:
    params: MsaParams
    scales: list
    rates: RateReport
    gates: list
    floor_gates: list
    per_scale: list
    tail_sums: list
    budgets: list

    @property
    def gates_pass(self) -> bool:
        return all(g["pass"] for g in self.gates)

    def to_dict(self) -> dict:
        return {
            "scales": [_jsonable(L) for L in self.scales],
            "gammas": self.rates.gammas,
            "per_scale": self.per_scale,
            "tail_sums": self.tail_sums,
        }


def _jsonable(x):
    if isinstance(x, float) and math.isinf(x):
        return "inf"
    return x


def build_schedule(params: MsaParams, k_max: int = 20) -> MsaSchedule:
    """Scales, rates, gates and budgets for ``k = 0..k_max``.

    A failing gate is recorded with its value and threshold; the schedule is
    still produced.
    """
    params.validate()
    a, p, d = params.alpha, params.p, params.d
    Ls = scales(params.L0, a, k_max)
    rates = rate_recursion(params.gamma0, Ls, a)
    per_scale = []
    for k, (L, g) in enumerate(zip(Ls, rates.gammas)):
        per_scale.append(
            {
                "k": k,
                "L": _jsonable(L),
                "gamma": g,
                "floor": rates.floor[k],
                "floor_pass": bool(g >= rates.floor[k]),
                "half_pass": bool(g >= params.gamma0 / 2),
            }
        )
    sums = [dict(tail_sum(Ls, beta), precondition=bool(params.L0 ** (beta * (a - 1)) >= 2)) for beta in (a - 1, a / 2)]
    budgets = [scale_budget(k, Ls[k], Ls[k + 1], p, a, d) for k in range(len(Ls) - 1)]
    for b in budgets:
        b["L"] = _jsonable(b["L"])
    return MsaSchedule(params, Ls, rates, initial_gates(params.L0, a, params.gamma0),
                       floor_gates(params.L0, a, params.gamma0), per_scale, sums, budgets)


# ---------------------------------------------------------------- Monte Carlo


@dataclass(frozen=True)
class ScaleEstimate:
    estimate: McEstimate
    bound: float
    passed: bool
    L: int
    E: float
    gamma: float


def _single_failures(start, stop, *, cube, sites, dist, seed, E, gamma):
    vals = sample_values(sites, dist, seed, np.arange(start, stop))
    good, _, _, _ = classify_batch(cube, vals, E, gamma, with_spectrum=False)
    return ~good


def single_scale_probability(
    L: int, E: float, gamma: float, dist: Distribution, trials: int, seed: int,
    d: int = 1, p: float | None = None, workers: int = 1,
) -> ScaleEstimate:
    """Frequency of ``Lambda_L`` not being ``(gamma, E)``-good, against ``L^-p``."""
    if trials < 1:
        raise DomainError("need at least one trial")
    p = float(2 * d + 2) if p is None else float(p)
    cube = Cube.at_origin(L, d)
    sites = cube_sites(cube)
    fn = partial(_single_failures, cube=cube, sites=sites, dist=dist, seed=seed, E=float(E), gamma=float(gamma))
    bad = run_realizations(fn, trials, workers, chunk_size_for(len(sites)))
    est = proportion_estimate(int(np.count_nonzero(bad)), trials, seed)
    bound = float(L) ** -p
    return ScaleEstimate(est, bound, bool(est.ci_hi <= bound), int(L), float(E), float(gamma))


def green_extremes(cube: Cube, values: np.ndarray, energies: np.ndarray):
    """For each realization and energy: the largest required Green entry and
    the distance to the spectrum, from one eigendecomposition per realization.

    Returns arrays of shape ``(R, len(energies))``.
    """
    values = np.atleast_2d(values)
    base = build_h(cube, BoundaryKind.SIMPLE, None).dense()
    n = base.shape[0]
    stack = np.broadcast_to(base, (len(values), n, n)).copy()
    idx = np.arange(n)
    stack[:, idx, idx] += values
    lam, vec = np.linalg.eigh(stack)
    n_idx, m_idx = _required_indices(cube)
    un = vec[:, n_idx, :]
    um = vec[:, m_idx, :]
    gmax = np.empty((len(values), len(energies)))
    dist = np.empty_like(gmax)
    for j, E in enumerate(energies):
        gap = lam - E
        dist[:, j] = np.min(np.abs(gap), axis=1)
        with np.errstate(divide="ignore"):
            w = 1.0 / gap
        g = np.einsum("rak,rk,rbk->rab", un, w, um)
        gmax[:, j] = np.max(np.abs(g), axis=(1, 2))
    gmax[~np.isfinite(gmax)] = np.inf
    return gmax, dist


def energy_grid(interval, step: float) -> np.ndarray:
    lo, hi = interval
    if hi == lo:
        return np.array([float(lo)])
    n = int(math.ceil((hi - lo) / step - 1e-12)) + 1
    return np.linspace(lo, hi, n)


def _two_cube_flags(start, stop, *, cubes, sites, split, dist, seed, energies, gamma, half):
    vals = sample_values(sites, dist, seed, np.arange(start, stop))
    thr = math.exp(-gamma * cubes[0].radius)
    bad, certified = [], []
    for cube, v in zip(cubes, (vals[:, :split], vals[:, split:])):
        gmax, dist_ = green_extremes(cube, v, energies)
        bad.append(gmax > thr)
        if half > 0:
            with np.errstate(divide="ignore", invalid="ignore"):
                margin = np.where(dist_ > half, half / (dist_ * (dist_ - half)), np.inf)
        else:
            margin = np.zeros_like(gmax)
        certified.append(gmax + margin <= thr)
    fail = np.any(bad[0] & bad[1], axis=1)
    # every window around a grid energy has a cube that is good throughout it
    interval_ok = np.all(certified[0] | certified[1], axis=1)
    return np.stack([fail, interval_ok], axis=1)


@dataclass(frozen=True)
class TwoCubeEstimate:
    estimate: McEstimate
    interval_upper: McEstimate
    label: str
    bound: float
    passed: bool
    grid_points: int
    step: float
    margin_rule: str


def two_cube_probability(
    L: int, interval, step: float, gamma: float, dist: Distribution, trials: int, seed: int,
    d: int = 1, p: float | None = None, offsets=None, workers: int = 1,
) -> TwoCubeEstimate:
    """Frequency of some grid energy in ``interval`` at which two disjoint
    ``L``-cubes are both not ``(gamma, E)``-good, against ``L^-2p``.

    Each grid energy stands for the window of half-width ``step/2`` around it.
    A realization without a grid failure is interval-certified when, in every
    window, one cube stays good after adding the resolvent Lipschitz margin
    ``h / (dist (dist - h))``. ``interval_upper`` counts every uncertified
    realization as a failure; ``label`` is ``"interval"`` when that changes
    nothing and ``"grid"`` otherwise.
    """
    if trials < 1:
        raise DomainError("need at least one trial")
    if np.isscalar(interval):
        interval = (float(interval), float(interval))
    if interval[1] > interval[0] and not step > 0:
        raise DomainError("grid step must be positive")
    p = float(2 * d + 2) if p is None else float(p)
    if offsets is None:
        offsets = ((0,) * d, (2 * L + 1,) + (0,) * (d - 1))
    c1, c2 = (tuple(int(x) for x in o) for o in offsets)
    if max(abs(a - b) for a, b in zip(c1, c2)) <= 2 * L:
        raise DomainError("the two cubes overlap")
    cubes = (Cube(c1, L), Cube(c2, L))
    s1, s2 = cube_sites(cubes[0]), cube_sites(cubes[1])
    energies = energy_grid(interval, step)
    half = 0.0 if len(energies) == 1 else float(energies[1] - energies[0]) / 2
    fn = partial(
        _two_cube_flags, cubes=cubes, sites=np.vstack([s1, s2]), split=len(s1), dist=dist, seed=seed,
        energies=energies, gamma=float(gamma), half=half,
    )
    chunk = max(1, chunk_size_for(len(s1)) // max(1, len(energies) // 8))
    flags = run_realizations(fn, trials, workers, chunk)
    fails = int(np.count_nonzero(flags[:, 0]))
    uncertified = int(np.count_nonzero(~flags[:, 1].astype(bool)))
    est = proportion_estimate(fails, trials, seed)
    upper = proportion_estimate(max(fails, uncertified), trials, seed)
    label = "interval" if uncertified <= fails and half > 0 else ("point" if half == 0 else "grid")
    bound = float(L) ** (-2 * p)
    return TwoCubeEstimate(est, upper, label, bound, bool(est.ci_hi <= bound), len(energies), float(step),
                           "sup |G(E') - G(E)| <= h / (dist (dist - h)) for |E' - E| <= h")


# ------------------------------------------------------------ budget scan


def _budget_logs(l, L, p, d, norm_g):
    """Natural logs of the three budget terms and of their common target ``L^-p / 3``."""
    l = np.asarray(l, dtype=float)
    L = np.asarray(L, dtype=float)
    lw = np.log(WEGNER_C * norm_g)
    t1 = lw + d * np.log(2 * L + 1) - np.sqrt(L)
    t2 = d * np.log(2 * L + 1) + lw + d * np.log(4 * l + 1) - np.sqrt(2 * l)
    t3 = 2 * d * np.log(2 * L + 1) - 2 * p * np.log(l)
    target = -p * np.log(L) - math.log(3.0)
    return t1, t2, t3, target


@dataclass
class BudgetReport:
    l: int
    L: int
    terms: dict
    target: float
    passed: bool
    smallest_l: int | None
    scan_limit: int
    marginal: bool
    exponent: float


def induction_budget_check(
    l: int, L: int | None = None, p: float = 3.0, alpha: float = 1.2, d: int = 1, norm_g: float = 1.0,
    scan_limit: int = 10**6,
) -> BudgetReport:
    """The three probability budgets of one induction step, each against
    ``L^-p / 3``:

    * resonance of the big cube, ``4|g| (2L+1)^d e^{-sqrt L}``;
    * resonance of some ``2l``-cube inside it, ``(2L+1)^d 4|g| (4l+1)^d e^{-sqrt(2l)}``;
    * two disjoint bad ``l``-cubes, ``(2L+1)^{2d} l^{-2p}``.

    ``smallest_l`` is the first ``l`` in ``[2, scan_limit]`` from which all
    three pass through the end of the scan. ``marginal`` flags
    ``2p/alpha - 2d <= p``, where the last term cannot beat ``L^-p``.
    """
    if L is None:
        L = next_scale(l, alpha)
    elif L != next_scale(l, alpha):
        raise DomainError(f"L must be ceil(l^alpha) = {next_scale(l, alpha)}, got {L}")
    if norm_g <= 0:
        raise DomainError("the density bound must be positive")
    t1, t2, t3, target = _budget_logs(l, L, p, d, norm_g)
    terms = {
        name: {"log_value": float(t), "value": float(np.exp(t)), "pass": bool(t <= target)}
        for name, t in (("big_cube_resonance", t1), ("inner_resonance", t2), ("two_bad_cubes", t3))
    }
    ls = np.arange(2, scan_limit + 1)
    Ls = np.ceil(ls.astype(float) ** alpha)
    s1, s2, s3, tg = _budget_logs(ls, Ls, p, d, norm_g)
    ok = (s1 <= tg) & (s2 <= tg) & (s3 <= tg)
    smallest = None
    if ok[-1]:
        bad = np.nonzero(~ok)[0]
        smallest = int(ls[bad[-1] + 1]) if len(bad) else int(ls[0])
    exponent = 2 * p / alpha - 2 * d
    return BudgetReport(
        int(l), int(L), terms, float(np.exp(target)), all(t["pass"] for t in terms.values()),
        smallest, int(scan_limit), bool(exponent <= p + 1e-12), float(exponent),
    )


def budget_ratios(ls, p: float, alpha: float, d: int, norm_g: float = 1.0) -> np.ndarray:
    """``log(term / target)`` for each term, shape ``(3, len(ls))``."""
    ls = np.asarray(ls)
    Ls = np.array([next_scale(int(l), alpha) for l in ls], dtype=float)
    t1, t2, t3, tg = _budget_logs(ls, Ls, p, d, norm_g)
    return np.stack([t1 - tg, t2 - tg, t3 - tg])


# ------------------------------------------------------- initial scales


@dataclass
class LargeDisorderReport:
    L0: int
    gamma: float
    p: float
    d: int
    norm_g: float
    bound: float
    threshold: float
    passed: bool
    mc: TwoCubeEstimate | None = None
    mc_within_bound: bool | None = None


def large_disorder_bound(L0: int, gamma: float, norm_g: float, d: int = 1) -> float:
    """``2 C |g| e^{gamma L0} (2 L0 + 1)^{2d}`` with the Wegner constant ``C = 4``."""
    return 2 * WEGNER_C * norm_g * math.exp(gamma * L0) * (2 * L0 + 1) ** (2 * d)


def initial_scale_large_disorder(
    L0: int, gamma: float, dist: Distribution, p: float | None = None, d: int = 1,
    trials: int = 0, seed: int = 0, step: float = 0.05, workers: int = 1,
) -> LargeDisorderReport:
    """Analytic two-cube initial-scale bound at large disorder.

    Both cubes bad at ``E`` forces ``dist(E, spec) < e^{gamma L0}`` for each,
    so the bound comes from the two-cube Wegner estimate. ``threshold`` is the
    largest density bound for which it is at most ``L0^-2p``. With
    ``trials > 0`` the event is also sampled on an energy grid covering
    every ``E`` where a cube can be bad.
    """
    g = dist.require_density("the large-disorder initial scale")
    p = float(2 * d + 2) if p is None else float(p)
    bound = large_disorder_bound(L0, gamma, g, d)
    target = float(L0) ** (-2 * p)
    threshold = target / large_disorder_bound(L0, gamma, 1.0, d)
    rep = LargeDisorderReport(int(L0), float(gamma), p, int(d), g, bound, threshold, bool(bound <= target))
    if trials > 0:
        reach = math.exp(gamma * L0)
        lo, hi = dist.support
        interval = (lo - reach, hi + 4 * d + reach)
        mc = two_cube_probability(L0, interval, step, gamma, dist, trials, seed, d, p, workers=workers)
        rep.mc = mc
        rep.mc_within_bound = bool(mc.estimate.ci_hi <= bound)
    return rep


def tiling_centers(ell0: int, r: int, d: int = 1) -> list[tuple]:
    if r < 1 or r % 2 == 0:
        raise DomainError(f"the tiling needs an odd number of tiles per side, got r={r}")
    h = (r - 1) // 2
    side = 2 * ell0 + 1
    return [tuple(side * k for k in ks) for ks in itertools.product(range(-h, h + 1), repeat=d)]


def tiling_radius(ell0: int, r: int) -> int:
    if r < 1 or r % 2 == 0:
        raise DomainError(f"the tiling needs an odd number of tiles per side, got r={r}")
    return r * ell0 + (r - 1) // 2


def _tiling_min(start, stop, *, big, tiles, dist, seed):
    big_sites = cube_sites(big)
    vals = sample_values(big_sites, dist, seed, np.arange(start, stop))
    hb = build_h(big, BoundaryKind.NEUMANN, None).dense()
    e_big = _ground(hb, vals)
    e_tiles = []
    for t in tiles:
        ht = build_h(t, BoundaryKind.NEUMANN, None).dense()
        e_tiles.append(_ground(ht, vals[:, big.indices_of(cube_sites(t))]))
    return np.stack([e_big, np.min(np.stack(e_tiles, axis=1), axis=1)], axis=1)


def _ground(base: np.ndarray, vals: np.ndarray) -> np.ndarray:
    n = base.shape[0]
    stack = np.broadcast_to(base, (len(vals), n, n)).copy()
    idx = np.arange(n)
    stack[:, idx, idx] += vals
    return np.linalg.eigvalsh(stack)[:, 0]


@dataclass
class LowEnergyReport:
    ell0: int
    r: int
    d: int
    L0: int
    tile_count: int
    c: float
    threshold: float
    tiling_trials: int
    tiling_violation: float
    tiling_holds: bool
    tails: dict
    tail_rates: dict
    decreasing: bool
    union_bound: float
    direct: McEstimate | None


def initial_scale_low_energy(
    ell0: int, r: int, dist: Distribution, trials: int, seed: int, d: int = 1,
    tail_ells=None, tiling_trials: int | None = None, workers: int = 1,
) -> LowEnergyReport:
    """Low-energy initial scale by Neumann tiling.

    ``Lambda_{L0}`` with ``L0 = r ell0 + (r-1)/2`` is tiled by ``r^d`` cubes
    of radius ``ell0``. Dropping the couplings between tiles only lowers the
    Neumann operator, so its ground state dominates the smallest tile ground
    state. The small-cube tail uses the threshold ``c / ell^2`` where ``c`` is
    the smallest measured ``ell^2 E_1`` of the free Neumann operator over the
    radii involved, and the union bound multiplies the tail by ``r^d``.
    """
    L0 = tiling_radius(ell0, r)
    centers = tiling_centers(ell0, r, d)
    tiles = [Cube(c, ell0) for c in centers]
    big = Cube.at_origin(L0, d)
    if big.size != len(tiles) * tiles[0].size:
        raise AssertionError("tiling does not partition the cube")
    tail_ells = [int(x) for x in (tail_ells or (ell0, ell0 + 2))]
    involved = sorted(set(tail_ells) | {ell0})
    c = min(ell * ell * free_neumann_gap(ell, d) for ell in involved)

    n_tile = min(trials, 2000) if tiling_trials is None else tiling_trials
    violation = -math.inf
    direct = None
    thr0 = c / ell0**2
    if n_tile > 0:
        fn = partial(_tiling_min, big=big, tiles=tiles, dist=dist, seed=seed)
        pairs = run_realizations(fn, n_tile, workers, chunk_size_for(big.size))
        violation = float(np.max(pairs[:, 1] - pairs[:, 0]))
        direct = proportion_estimate(int(np.count_nonzero(pairs[:, 0] <= thr0)), n_tile, seed)
    scale = max(1.0, abs(dist.support[1]) + 4 * d)
    holds = bool(violation <= 1e-12 * scale)

    tails, rates = {}, {}
    for ell in tail_ells:
        ev = cube_spectra(Cube.at_origin(ell, d), BoundaryKind.NEUMANN, dist, trials, seed, workers)
        tails[ell] = proportion_estimate(int(np.count_nonzero(ev[:, 0] <= c / ell**2)), trials, seed)
        size = (2 * ell + 1) ** d
        p_for_rate = tails[ell].estimate if tails[ell].successes else tails[ell].ci_hi
        rates[ell] = -math.log(p_for_rate) / size
    a, b = tail_ells[0], tail_ells[-1]
    decreasing = bool(tails[b].ci_hi < tails[a].ci_lo) if a != b else False
    tail0 = tails.get(ell0)
    union = len(tiles) * (tail0.ci_hi if tail0 is not None else math.nan)
    return LowEnergyReport(
        int(ell0), int(r), int(d), L0, len(tiles), c, thr0, n_tile, violation, holds,
        tails, rates, decreasing, float(union), direct,
    )


def report_json(params: MsaParams, schedule: MsaSchedule | None = None, mc_estimates=None) -> dict:
    """Run report with keys ``params, schedule, gates, budgets, mc_estimates``."""
    schedule = schedule or build_schedule(params)
    mcs = []
    for m in mc_estimates or []:
        d = asdict(m) if hasattr(m, "__dataclass_fields__") else dict(m)
        mcs.append(d)
    return {
        "params": params.to_dict(),
        "schedule": schedule.per_scale,
        "gates": schedule.gates + schedule.floor_gates + schedule.tail_sums,
        "budgets": schedule.budgets,
        "mc_estimates": mcs,
    }

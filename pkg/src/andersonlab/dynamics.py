"""Time evolution on finite cubes from a full eigendecomposition, with
survival masses, Wiener time averages and transport moments.

Time averages use the trapezoidal rule on a uniform grid whose step is at
most ``pi / (4 rho)``, ``rho`` the spectral radius.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .operators import HamMatrix

GROUP_TOL = 1e-9
_BLOCK = 2_000_000


@dataclass(frozen=True, eq=False)
class EvolutionPlan:
    """Eigenpairs of ``H`` plus an initial state expanded in them."""

    values: np.ndarray
    vectors: np.ndarray
    psi0: np.ndarray
    sites: np.ndarray | None = None

    def __post_init__(self):
        psi = np.asarray(self.psi0, dtype=complex)
        if psi.shape != (self.vectors.shape[0],):
            raise DomainError(f"initial state needs {self.vectors.shape[0]} entries, got {psi.shape}")
        object.__setattr__(self, "psi0", psi)
        object.__setattr__(self, "_coeffs", self.vectors.T @ psi)

    @classmethod
    def from_matrix(cls, h, psi0) -> "EvolutionPlan":
        if isinstance(h, HamMatrix):
            a, sites = h.dense(), h.sites
        else:
            a, sites = np.asarray(h, dtype=float), None
        w, v = np.linalg.eigh(a)
        return cls(w, v, psi0, sites)

    @property
    def coeffs(self) -> np.ndarray:
        return self._coeffs

    @property
    def weights(self) -> np.ndarray:
        """Spectral measure of the initial state, ``|<phi_j, psi0>|^2``."""
        return np.abs(self._coeffs) ** 2

    @property
    def norm2(self) -> float:
        return float(np.vdot(self.psi0, self.psi0).real)

    @property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(self.values)))

    def project(self, interval) -> "EvolutionPlan":
        """The plan for ``chi_I(H) psi0``."""
        lo, hi = interval
        keep = (self.values >= lo) & (self.values <= hi)
        psi = self.vectors[:, keep] @ self._coeffs[keep]
        return EvolutionPlan(self.values, self.vectors, psi, self.sites)


def evolve(plan: EvolutionPlan, t):
    """``psi(t) = sum_j e^{-i t E_j} <phi_j, psi0> phi_j``.

    Scalar ``t`` gives a vector; an array gives shape ``(len(t), n)``.
    """
    ts = np.asarray(t, dtype=float)
    phase = np.exp(-1j * np.multiply.outer(np.atleast_1d(ts), plan.values)) * plan.coeffs
    out = phase @ plan.vectors.T
    if ts.ndim == 0:
        out = out[0]
        if ts == 0:
            return plan.psi0.copy()
    else:
        out[ts == 0] = plan.psi0
    return out


def max_step(rho: float) -> float:
    return math.pi / (4 * rho) if rho > 0 else math.inf


def time_grid(T: float, rho: float) -> np.ndarray:
    """Uniform grid on ``[0, T]`` with step at most ``pi / (4 rho)``."""
    if T < 0:
        raise DomainError("T must be nonnegative")
    if T == 0:
        return np.zeros(1)
    n = max(2, int(math.ceil(T / max_step(rho))) + 1) if rho > 0 else 2
    return np.linspace(0.0, T, n)


def time_average(times: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Trapezoidal mean over ``times`` along axis 0."""
    if len(times) == 1:
        return np.asarray(values[0])
    return np.trapezoid(values, times, axis=0) / (times[-1] - times[0])


def _blocks(times: np.ndarray, n: int):
    step = max(1, _BLOCK // max(1, n))
    for s in range(0, len(times), step):
        yield times[s : s + step]


def _radii_of(plan: EvolutionPlan, center) -> np.ndarray:
    if plan.sites is None:
        raise DomainError("plan has no site coordinates")
    c = np.zeros(plan.sites.shape[1], dtype=np.int64) if center is None else np.asarray(center)
    return np.max(np.abs(plan.sites - c), axis=1)


@dataclass(frozen=True, eq=False)
class SurvivalProfile:
    radii: list
    times: np.ndarray
    inside: np.ndarray
    outside: np.ndarray
    inside_avg: np.ndarray
    outside_avg: np.ndarray
    mass_error: float


def survival_profile(plan: EvolutionPlan, radii, T: float, center=None) -> SurvivalProfile:
    """Mass inside and outside ``Lambda_r(center)`` along the grid and its
    trapezoidal time average over ``[0, T]``, for each radius."""
    dist = _radii_of(plan, center)
    radii = [int(r) for r in radii]
    if max(radii) > dist.max():
        raise DomainError(f"inner radius {max(radii)} exceeds the cube radius {dist.max()}")
    times = time_grid(T, plan.spectral_radius)
    masks = np.stack([dist <= r for r in radii], axis=1).astype(float)
    inside, total = [], []
    for tb in _blocks(times, len(dist)):
        dens = np.abs(evolve(plan, tb)) ** 2
        inside.append(dens @ masks)
        total.append(dens.sum(axis=1))
    inside = np.concatenate(inside)
    total = np.concatenate(total)
    outside = total[:, None] - inside
    err = float(np.max(np.abs(total - plan.norm2)))
    return SurvivalProfile(radii, times, inside, outside, time_average(times, inside), time_average(times, outside), err)


def group_atoms(energies, weights, tol: float = GROUP_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Merge weights at energies closer than ``tol`` (chained along the sorted order)."""
    e = np.asarray(energies, dtype=float)
    w = np.asarray(weights, dtype=float)
    order = np.argsort(e, kind="stable")
    e, w = e[order], w[order]
    starts = np.concatenate([[True], np.diff(e) > tol])
    labels = np.cumsum(starts) - 1
    return e[starts], np.bincount(labels, weights=w)


def fourier_modulus2(energies, weights, t) -> np.ndarray:
    """``|mu^(t)|^2`` with ``mu^(t) = sum_j w_j e^{-i t E_j}``."""
    ph = np.exp(-1j * np.multiply.outer(np.atleast_1d(t), energies))
    return np.abs(ph @ weights) ** 2


def pair_sum(energies, weights, t) -> np.ndarray:
    """``sum_{j,k} w_j w_k cos((E_j - E_k) t)``, the same quantity by pairs."""
    e = np.asarray(energies, dtype=float)
    w = np.asarray(weights, dtype=float)
    diff = e[:, None] - e[None, :]
    ww = np.outer(w, w)
    return np.array([float(np.sum(ww * np.cos(diff * s))) for s in np.atleast_1d(t)])


@dataclass(frozen=True)
class WienerResult:
    T: float
    average: float
    atomic: float
    exact_average: float
    consistency: float


def wiener_average(energies, weights, T: float, check_points: int = 16) -> WienerResult:
    """``(1/T) int_0^T |mu^(t)|^2 dt`` by quadrature and its long-time limit,
    the sum of squared atoms.

    ``exact_average`` is the closed form ``sum w_j w_k sinc((E_j - E_k) T)``.
    ``consistency`` is the largest gap between the pair sum and the squared
    modulus over ``check_points`` grid times.
    """
    e = np.asarray(energies, dtype=float)
    w = np.asarray(weights, dtype=float)
    if abs(w.sum() - 1.0) > 1e-9 or np.any(w < 0):
        raise DomainError("weights must be a probability vector")
    _, atoms = group_atoms(e, w)
    atomic = float(np.sum(atoms**2))
    rho = float(np.max(np.abs(e))) if len(e) else 0.0
    times = time_grid(T, rho)
    vals = np.concatenate([fourier_modulus2(e, w, tb) for tb in _blocks(times, len(e))])
    avg = float(time_average(times, vals))
    if T > 0:
        diff = e[:, None] - e[None, :]
        exact = float(np.sum(np.outer(w, w) * np.sinc(diff * T / np.pi)))
    else:
        exact = float(vals[0])
    pick = times[np.linspace(0, len(times) - 1, min(check_points, len(times))).astype(int)]
    cons = float(np.max(np.abs(pair_sum(e, w, pick) - fourier_modulus2(e, w, pick))))
    return WienerResult(float(T), avg, atomic, exact, cons)


@dataclass(frozen=True, eq=False)
class MomentProfile:
    p: float
    times: np.ndarray
    values: np.ndarray
    maximum: float


def transport_moment(plan: EvolutionPlan, p: float, times, interval=None) -> MomentProfile:
    """``|| |X|^p psi(t) ||`` on ``times`` with ``|X| psi(n) = |n|_inf psi(n)``.

    With ``interval`` the state is first filtered to eigenpairs in it.
    """
    if p < 0:
        raise DomainError("moment order must be nonnegative")
    if interval is not None:
        plan = plan.project(interval)
    weight = _radii_of(plan, None).astype(float) ** p
    if p == 0:
        weight = np.ones_like(weight)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    vals = np.concatenate(
        [np.sqrt(np.abs(evolve(plan, tb)) ** 2 @ weight**2) for tb in _blocks(times, len(weight))]
    )
    return MomentProfile(float(p), times, vals, float(vals.max()))


def plateau_statistic(profile: MomentProfile, window) -> float:
    """``max / median`` of the profile over times in ``window``; near 1 on a plateau."""
    lo, hi = window
    sel = (profile.times >= lo) & (profile.times <= hi)
    if not np.any(sel):
        raise DomainError("no grid times inside the window")
    v = profile.values[sel]
    med = float(np.median(v))
    return float(v.max() / med) if med > 0 else math.inf


@dataclass(frozen=True)
class RageReport:
    radius: int
    T: float
    inside_avg: float
    outside_avg: float
    inside_limit: float
    norm2: float


def rage_limit(plan: EvolutionPlan, radius: int, center=None) -> float:
    """Long-time average of the mass inside ``Lambda_r``:
    ``sum_E || chi_r P_E psi0 ||^2`` over distinct eigenvalues."""
    mask = _radii_of(plan, center) <= radius
    e = plan.values
    starts = np.concatenate([[True], np.diff(e) > GROUP_TOL])
    labels = np.cumsum(starts) - 1
    total = 0.0
    for g in range(labels[-1] + 1):
        sel = labels == g
        proj = plan.vectors[:, sel] @ plan.coeffs[sel]
        total += float(np.sum(np.abs(proj[mask]) ** 2))
    return total


def rage_estimators(plan: EvolutionPlan, radius: int, T: float, center=None) -> RageReport:
    """Time-averaged inside and escaped masses for one radius.

    In finite volume every state is a bound state, so at the full cube radius
    the inside average equals ``||psi||^2`` and the escaped one is 0.
    """
    prof = survival_profile(plan, [radius], T, center)
    return RageReport(
        int(radius), float(T), float(prof.inside_avg[0]), float(prof.outside_avg[0]),
        rage_limit(plan, radius, center), plan.norm2,
    )

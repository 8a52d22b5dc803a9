"""Finite-volume eigenproblems: spectra, counting functions, and the
inequalities that follow from min-max (rank-one interlacing, Temple).

Counting has two routes. Dense matrices are counted from a full symmetric
eigensolve; large sparse ones from the inertia of an LDL^T factorization of
``H - E`` (Sylvester's law of inertia), which needs no eigenvalues.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import CapabilityError, DomainError, PreconditionError
from .operators import HamMatrix

TIE_TOL = 1e-12


def _as_dense(h) -> np.ndarray:
    if isinstance(h, HamMatrix):
        if not h.is_dense:
            raise CapabilityError(f"{h.n} sites exceed the dense cap of {h.dense_cap}")
        return h.dense()
    if sp.issparse(h):
        return h.toarray()
    a = np.asarray(h, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DomainError("expected a square matrix")
    return a


@dataclass(frozen=True, eq=False)
class Spectrum:
    values: np.ndarray
    vectors: np.ndarray | None = None

    def max_residual(self, h) -> float:
        if self.vectors is None:
            raise DomainError("spectrum carries no eigenvectors")
        a = _as_dense(h)
        return float(np.max(np.linalg.norm(a @ self.vectors - self.vectors * self.values, axis=0)))

    def orthonormality_error(self) -> float:
        if self.vectors is None:
            raise DomainError("spectrum carries no eigenvectors")
        v = self.vectors
        return float(np.max(np.abs(v.T @ v - np.eye(v.shape[1]))))


def eigen(h, want_vectors: bool = False) -> Spectrum:
    """Full ascending spectrum with multiplicity."""
    if isinstance(h, HamMatrix) and not h.is_dense:
        if want_vectors:
            raise CapabilityError(f"eigenvectors for {h.n} sites exceed the dense cap of {h.dense_cap}")
        raise CapabilityError(f"full spectrum for {h.n} sites exceeds the dense cap; use counting()")
    a = _as_dense(h)
    if want_vectors:
        w, v = np.linalg.eigh(a)
        return Spectrum(w, v)
    return Spectrum(np.linalg.eigvalsh(a))


class Count(NamedTuple):
    count: int
    boundary: bool
    method: str


def count_below(values: np.ndarray, E: float) -> Count:
    """Strict count of ``values < E`` with a tie flag."""
    values = np.asarray(values)
    tie = bool(np.any(np.abs(values - E) <= TIE_TOL))
    return Count(int(np.count_nonzero(values < E)), tie, "eigenvalues")


def dense_inertia_count(a: np.ndarray, E: float) -> tuple[int, bool]:
    """Negative inertia of ``a - E`` from a Bunch-Kaufman LDL^T factorization."""
    m = np.asarray(a, dtype=float) - E * np.eye(len(a))
    _, d, _ = sla.ldl(m, lower=True)
    # D is block diagonal with 1x1 and 2x2 blocks, hence tridiagonal
    ev = sla.eigvalsh_tridiagonal(np.diag(d).copy(), np.diag(d, 1).copy())
    scale = max(1.0, float(np.max(np.abs(m))))
    return int(np.count_nonzero(ev < 0)), bool(np.any(np.abs(ev) <= TIE_TOL * scale))


def banded_inertia_count(a: sp.spmatrix, E: float) -> tuple[int, bool]:
    """Negative inertia of ``a - E`` by unpivoted banded LDL^T.

    Lexicographic cube ordering gives bandwidth ``(2L+1)^(d-1)``; the
    elimination keeps only a sliding ``(b+1) x (b+1)`` window. For ``b = 1``
    this is the classical Sturm sequence count.
    """
    a = sp.csr_matrix(a)
    n = a.shape[0]
    coo = a.tocoo()
    b = int(np.max(np.abs(coo.row - coo.col))) if coo.nnz else 0
    band = np.zeros((b + 1, n))
    for o in range(b + 1):
        band[o, o:] = a.diagonal(-o)
    band[0] -= E
    scale = max(1.0, float(np.max(np.abs(band))))
    tiny = TIE_TOL * scale
    w = b + 1
    win = np.zeros((w, w))
    m0 = min(w, n)
    for r in range(m0):
        for o in range(min(r, b) + 1):
            win[r, r - o] = win[r - o, r] = band[o, r]
    negative, tie = 0, False
    for k in range(n):
        m = min(w, n - k)
        piv = win[0, 0]
        if abs(piv) <= tiny:
            tie = True
            piv = tiny
        if piv < 0:
            negative += 1
        col = win[1:m, 0].copy()
        win[1:m, 1:m] -= np.outer(col, col) / piv
        nxt = np.zeros((w, w))
        nxt[: m - 1, : m - 1] = win[1:m, 1:m]
        r = k + w
        if r < n:
            # entries A[r, r-b .. r]; unaffected by earlier elimination steps
            row = band[::-1, r]
            nxt[w - 1, :] = row
            nxt[:, w - 1] = row
        win = nxt
    return negative, tie


def counting(h, E: float, method: str = "auto") -> Count:
    """Number of eigenvalues strictly below ``E``.

    ``method`` is ``"eigen"``, ``"ldl"`` (dense Bunch-Kaufman), ``"banded"``
    or ``"auto"`` (eigensolve in the dense regime, banded inertia beyond).
    """
    if method == "auto":
        dense = not (isinstance(h, HamMatrix) and not h.is_dense) and not sp.issparse(h)
        method = "eigen" if dense else "banded"
    if method == "eigen":
        return count_below(eigen(h).values, E)._replace(method="eigen")
    if method == "ldl":
        c, tie = dense_inertia_count(_as_dense(h), E)
        return Count(c, tie, "ldl")
    if method == "banded":
        m = h.sparse() if isinstance(h, HamMatrix) else sp.csr_matrix(h)
        c, tie = banded_inertia_count(m, E)
        return Count(c, tie, "banded")
    raise DomainError(f"unknown counting method {method!r}")


@dataclass(frozen=True, eq=False)
class InterlaceReport:
    values: np.ndarray
    perturbed: np.ndarray
    lower_violation: float
    upper_violation: float
    holds: bool


def interlace_rank_one(h, vector, c: float, tol: float = 1e-10) -> InterlaceReport:
    """Compare spectra of ``A`` and ``A + c |v><v|`` for ``c >= 0``."""
    if c < 0:
        raise DomainError(f"rank-one coupling must be nonnegative, got {c}")
    a = _as_dense(h)
    v = np.asarray(vector, dtype=float)
    if abs(np.linalg.norm(v) - 1.0) > 1e-12:
        raise DomainError("rank-one direction must be a unit vector")
    e = np.linalg.eigvalsh(a)
    et = np.linalg.eigvalsh(a + c * np.outer(v, v))
    low = float(np.max(e - et))
    up = float(np.max(et[:-1] - e[1:])) if len(e) > 1 else -np.inf
    return InterlaceReport(e, et, low, up, bool(low <= tol and up <= tol))


@dataclass(frozen=True)
class TempleResult:
    bound: float
    mean: float
    variance: float
    ground: float | None


def temple_bound(h, psi, E1: float, check: bool = True) -> TempleResult:
    """Lower bound ``<A> - (<A^2> - <A>^2) / (E1 - <A>)`` on the ground state.

    ``E1`` must not exceed the true second eigenvalue. With ``check`` the
    bound is compared against a dense eigensolve.
    """
    a = _as_dense(h)
    psi = np.asarray(psi, dtype=float)
    if abs(np.linalg.norm(psi) - 1.0) > 1e-10:
        raise DomainError("Temple's bound needs a unit vector")
    ap = a @ psi
    mean = float(psi @ ap)
    var = max(float(ap @ ap) - mean * mean, 0.0)
    if not mean < E1:
        raise PreconditionError(f"<psi, A psi> = {mean} is not below E1 = {E1}")
    bound = mean - var / (E1 - mean)
    ground = None
    if check:
        ev = np.linalg.eigvalsh(a)
        ground = float(ev[0])
        if len(ev) > 1 and E1 <= ev[1] + 1e-12 and bound > ground + 1e-10 * max(1.0, abs(ground)):
            raise AssertionError(f"Temple bound {bound} exceeds ground state {ground}")
    return TempleResult(bound, mean, var, ground)


def resolvent_norm_check(h, z: complex) -> tuple[float, float]:
    """Operator norm of ``(A - z)^-1`` and ``1/dist(z, spectrum)``.

    The norm comes from singular values of ``A - z``; the distance from a
    separate eigenvalue solve.
    """
    a = _as_dense(h)
    ev = np.linalg.eigvalsh(a)
    dist = float(np.min(np.abs(ev - z)))
    if dist <= TIE_TOL:
        raise PreconditionError(f"z is within {dist:.3g} of the spectrum")
    s = np.linalg.svd(a - z * np.eye(len(a)), compute_uv=False)
    return float(1.0 / s[-1]), 1.0 / dist

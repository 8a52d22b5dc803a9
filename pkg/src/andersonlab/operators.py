"""Restricted Hamiltonians on finite site sets and the boundary couplings.

Three boundary conventions are supported. All share the hopping ``-1`` on
lattice edges inside the set and differ on the diagonal:

* simple:    ``2d + V``
* Neumann:   ``n(i) + V`` where ``n(i)`` counts neighbours inside the set
* Dirichlet: ``4d - n(i) + V``

The diagonal is built from integers plus the potential only, so identities
such as the decoupling split hold with zero floating-point residual.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import DomainError
from .lattice import Cube, SiteIndex, cube_sites, lattice_edges, neighbor_counts

DENSE_CAP = 4096


class BoundaryKind(str, enum.Enum):
    SIMPLE = "simple"
    NEUMANN = "neumann"
    DIRICHLET = "dirichlet"

    @classmethod
    def parse(cls, value) -> "BoundaryKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise DomainError(f"unknown boundary condition {value!r}") from None


def _site_array(region) -> np.ndarray:
    if isinstance(region, Cube):
        return cube_sites(region)
    arr = np.asarray(region, dtype=np.int64)
    if arr.ndim != 2 or len(arr) == 0:
        raise DomainError("a region must be a Cube or a nonempty (N, d) site array")
    return arr


def _potential_values(potential, sites: np.ndarray) -> tuple[np.ndarray, str]:
    if potential is None:
        return np.zeros(len(sites)), "zero"
    if hasattr(potential, "values_at"):
        return potential.values_at(sites), potential.provenance
    values = np.asarray(potential, dtype=float)
    if values.shape != (len(sites),):
        raise DomainError(f"potential has {values.size} values for {len(sites)} sites")
    return values.copy(), "array"


def free_diagonal(sites: np.ndarray, bc: BoundaryKind) -> np.ndarray:
    """Integer diagonal of the free operator on a site set."""
    d = sites.shape[1]
    if bc is BoundaryKind.SIMPLE:
        return np.full(len(sites), 2 * d, dtype=np.int64)
    n = neighbor_counts(sites)
    if bc is BoundaryKind.NEUMANN:
        return n
    return 4 * d - n


@dataclass(frozen=True, eq=False)
class HamMatrix:
    """Real symmetric restricted Hamiltonian on an ordered site set.

    ``cube`` is set when the site set is a full cube in lexicographic order.
    The matrix itself is materialised lazily, dense up to ``dense_cap`` sites.
    """

    sites: np.ndarray
    bc: BoundaryKind
    diagonal: np.ndarray
    edge_rows: np.ndarray
    edge_cols: np.ndarray
    potential_ref: str = "zero"
    cube: Cube | None = None
    dense_cap: int = DENSE_CAP

    @property
    def n(self) -> int:
        return len(self.sites)

    @property
    def dim(self) -> int:
        return self.sites.shape[1]

    @property
    def is_dense(self) -> bool:
        return self.n <= self.dense_cap

    @cached_property
    def index(self) -> SiteIndex:
        return SiteIndex(self.sites)

    def index_of(self, site) -> int:
        i = int(self.index.lookup(np.asarray([site], dtype=np.int64))[0])
        if i < 0:
            raise DomainError(f"site {tuple(site)} is not in the operator's domain")
        return i

    def dense(self) -> np.ndarray:
        m = np.diag(self.diagonal.astype(float))
        m[self.edge_rows, self.edge_cols] = -1.0
        m[self.edge_cols, self.edge_rows] = -1.0
        return m

    def sparse(self) -> sp.csr_matrix:
        n = self.n
        rows = np.concatenate([np.arange(n), self.edge_rows, self.edge_cols])
        cols = np.concatenate([np.arange(n), self.edge_cols, self.edge_rows])
        vals = np.concatenate([self.diagonal.astype(float), -np.ones(2 * len(self.edge_rows))])
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))

    @cached_property
    def matrix(self):
        return self.dense() if self.is_dense else self.sparse()

    def norm_bound(self) -> float:
        """Cheap upper bound on the operator norm (max absolute row sum)."""
        degree = np.bincount(self.edge_rows, minlength=self.n) + np.bincount(self.edge_cols, minlength=self.n)
        return float(np.max(np.abs(self.diagonal) + degree))


def build_h(region, bc=BoundaryKind.SIMPLE, potential=None, dense_cap: int = DENSE_CAP) -> HamMatrix:
    """Assemble the restricted Hamiltonian on a cube or an arbitrary site set.

    ``potential`` may be ``None`` (V = 0), a ``Potential`` (looked up by site),
    or an array aligned with the site order.
    """
    bc = BoundaryKind.parse(bc)
    sites = _site_array(region)
    values, ref = _potential_values(potential, sites)
    diag = free_diagonal(sites, bc) + values
    rows, cols = lattice_edges(sites)
    return HamMatrix(
        sites=sites,
        bc=bc,
        diagonal=diag,
        edge_rows=rows,
        edge_cols=cols,
        potential_ref=ref,
        cube=region if isinstance(region, Cube) else None,
        dense_cap=dense_cap,
    )


def complement_sites(inner, ambient: Cube) -> np.ndarray:
    """Sites of ``ambient`` outside ``inner``, in ambient order."""
    amb = cube_sites(ambient)
    inn = _site_array(inner)
    if not np.all(ambient.contains_array(inn)):
        raise DomainError("inner region is not contained in the ambient cube")
    hit = SiteIndex(inn).lookup(amb) >= 0
    return amb[~hit]


def gamma(inner, ambient: Cube, bc=BoundaryKind.SIMPLE) -> np.ndarray:
    """Coupling matrix between ``inner`` and its complement in ``ambient``.

    Rows and columns follow the ambient cube's site order. Off-diagonal
    entries are ``-1`` on the relative boundary edges; the diagonal corrects
    the neighbour counts for Neumann and Dirichlet conditions.
    """
    bc = BoundaryKind.parse(bc)
    amb = cube_sites(ambient)
    inn = _site_array(inner)
    if not np.all(ambient.contains_array(inn)):
        raise DomainError("inner region is not contained in the ambient cube")
    inside = SiteIndex(inn).lookup(amb) >= 0
    n = len(amb)
    g = np.zeros((n, n))
    rows, cols = lattice_edges(amb)
    cross = inside[rows] != inside[cols]
    g[rows[cross], cols[cross]] = -1.0
    g[cols[cross], rows[cross]] = -1.0
    if bc is BoundaryKind.SIMPLE:
        return g
    # number of neighbours lost when cutting along the relative boundary
    lost = np.bincount(rows[cross], minlength=n) + np.bincount(cols[cross], minlength=n)
    sign = 1.0 if bc is BoundaryKind.NEUMANN else -1.0
    g[np.arange(n), np.arange(n)] = sign * lost
    return g


def decoupled_matrix(inner, ambient: Cube, bc=BoundaryKind.SIMPLE, potential=None) -> np.ndarray:
    """``H_inner (+) H_rest`` embedded in the ambient site order."""
    bc = BoundaryKind.parse(bc)
    amb = cube_sites(ambient)
    inn = _site_array(inner)
    rest = complement_sites(inner, ambient)
    vals, _ = _potential_values(potential, amb)
    index = SiteIndex(amb)
    out = np.zeros((len(amb), len(amb)))
    for part in (inn, rest):
        if len(part) == 0:
            continue
        idx = index.lookup(part)
        h = build_h(part, bc, vals[idx]).dense()
        out[np.ix_(idx, idx)] = h
    return out


def verify_splitting(inner, ambient: Cube, bc=BoundaryKind.SIMPLE, potential=None) -> float:
    """Max-abs entry of ``H_ambient - (H_inner (+) H_rest + Gamma)``."""
    bc = BoundaryKind.parse(bc)
    amb = cube_sites(ambient)
    vals, _ = _potential_values(potential, amb)
    full = build_h(ambient, bc, vals).dense()
    # V sits on the diagonal of every block, so it is added once after the
    # integer parts; this keeps float addition order identical on both sides
    free = decoupled_matrix(inner, ambient, bc, None) + gamma(inner, ambient, bc)
    split = free + np.diag(vals)
    return float(np.max(np.abs(full - split)))


def shift_covariance_check(radius: int, offset, potential) -> float:
    """Spectral mismatch between a shifted cube and the origin cube with shifted V.

    ``potential`` is either a ``Potential`` covering the shifted cube or an
    array aligned with its sites.
    """
    offset = tuple(int(x) for x in offset)
    shifted = Cube(offset, radius)
    origin = Cube((0,) * len(offset), radius)
    vals, _ = _potential_values(potential, cube_sites(shifted))
    # lexicographic order is translation invariant, so the same array applies
    a = np.linalg.eigvalsh(build_h(shifted, BoundaryKind.SIMPLE, vals).dense())
    b = np.linalg.eigvalsh(build_h(origin, BoundaryKind.SIMPLE, vals).dense())
    return float(np.max(np.abs(a - b)))


def dump_coo(h: HamMatrix, path) -> Path:
    """Write the nonzero entries as ``row col value`` lines, 17 significant digits."""
    path = Path(path)
    m = h.sparse().tocoo()
    order = np.lexsort((m.col, m.row))
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for k in order:
            fh.write(f"{int(m.row[k])} {int(m.col[k])} {m.data[k]:.17g}\n")
    return path

"""Integer geometry on Z^d: cubes, boundaries, sub-cube families, annuli.

Everything here works with exact integers. Sites are tuples of ints; bulk
site lists are ``(N, d)`` integer arrays in lexicographic order (first
coordinate slowest), which fixes every index-dependent output downstream.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError

Site = tuple[int, ...]


def linf(a: Sequence[int], b: Sequence[int] | None = None) -> int:
    """Max-norm of ``a`` or of ``a - b``."""
    if b is None:
        return max(abs(int(x)) for x in a)
    return max(abs(int(x) - int(y)) for x, y in zip(a, b))


def l1(a: Sequence[int], b: Sequence[int] | None = None) -> int:
    """One-norm of ``a`` or of ``a - b``."""
    if b is None:
        return sum(abs(int(x)) for x in a)
    return sum(abs(int(x) - int(y)) for x, y in zip(a, b))


@dataclass(frozen=True)
class Cube:
    """The cube of radius ``radius`` around ``center`` in the max-norm."""

    center: Site
    radius: int

    def __post_init__(self):
        center = tuple(int(c) for c in self.center)
        if len(center) < 1:
            raise DomainError("cube dimension must be at least 1")
        if int(self.radius) < 0:
            raise DomainError(f"cube radius must be nonnegative, got {self.radius}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "radius", int(self.radius))

    @classmethod
    def at_origin(cls, radius: int, dim: int) -> "Cube":
        return cls((0,) * dim, radius)

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def side(self) -> int:
        return 2 * self.radius + 1

    @property
    def size(self) -> int:
        return self.side**self.dim

    def sites(self) -> np.ndarray:
        return cube_sites(self)

    def contains(self, site: Sequence[int]) -> bool:
        return linf(site, self.center) <= self.radius

    def contains_array(self, sites: np.ndarray) -> np.ndarray:
        sites = np.asarray(sites, dtype=np.int64)
        return np.max(np.abs(sites - np.asarray(self.center)), axis=1) <= self.radius

    def index_of(self, site: Sequence[int]) -> int:
        """Position of ``site`` in the lexicographic enumeration."""
        if not self.contains(site):
            raise DomainError(f"site {tuple(site)} is not in {self}")
        idx = 0
        for x, c in zip(site, self.center):
            idx = idx * self.side + (int(x) - c + self.radius)
        return idx

    def indices_of(self, sites: np.ndarray) -> np.ndarray:
        sites = np.asarray(sites, dtype=np.int64)
        if not np.all(self.contains_array(sites)):
            raise DomainError(f"some sites are not in {self}")
        local = sites - np.asarray(self.center) + self.radius
        idx = np.zeros(len(sites), dtype=np.int64)
        for k in range(self.dim):
            idx = idx * self.side + local[:, k]
        return idx

    def is_within(self, other: "Cube") -> bool:
        """True when this cube is a subset of ``other``."""
        return linf(self.center, other.center) + self.radius <= other.radius

    def is_well_inside(self, other: "Cube") -> bool:
        """Subset of ``other`` and disjoint from its inner boundary."""
        return linf(self.center, other.center) + self.radius <= other.radius - 1

    def touches(self, other: "Cube") -> bool:
        """Some pair of sites is at max-distance at most one (overlap included)."""
        return linf(self.center, other.center) <= self.radius + other.radius + 1

    def __str__(self) -> str:
        return f"Cube(center={self.center}, L={self.radius})"


def cube_sites(cube: Cube) -> np.ndarray:
    """Sites of ``cube`` as an ``(N, d)`` array, lexicographically ordered."""
    axis = np.arange(-cube.radius, cube.radius + 1, dtype=np.int64)
    grids = np.meshgrid(*([axis] * cube.dim), indexing="ij")
    rel = np.stack([g.ravel() for g in grids], axis=1)
    return rel + np.asarray(cube.center, dtype=np.int64)


def unit_steps(dim: int) -> np.ndarray:
    """The ``2d`` nearest-neighbour displacement vectors."""
    eye = np.eye(dim, dtype=np.int64)
    return np.concatenate([eye, -eye], axis=0)


class SiteIndex:
    """Vectorised lookup from site coordinates to row indices.

    Works for arbitrary finite site sets by sorting a mixed-radix key.
    """

    def __init__(self, sites: np.ndarray):
        sites = np.asarray(sites, dtype=np.int64)
        if sites.ndim != 2 or len(sites) == 0:
            raise DomainError("site set must be a nonempty (N, d) array")
        self.sites = sites
        self._lo = sites.min(axis=0) - 1
        self._span = sites.max(axis=0) - self._lo + 2
        keys = self._keys(sites)
        self._order = np.argsort(keys, kind="stable")
        self._sorted = keys[self._order]
        if np.any(np.diff(self._sorted) == 0):
            raise DomainError("site set contains duplicates")

    def _keys(self, pts: np.ndarray) -> np.ndarray:
        rel = pts - self._lo
        inside = np.all((rel >= 0) & (rel < self._span), axis=-1)
        rel = np.where(inside[..., None], rel, 0)
        key = np.zeros(pts.shape[:-1], dtype=np.int64)
        for k in range(pts.shape[-1]):
            key = key * self._span[k] + rel[..., k]
        return np.where(inside, key, -1)

    def lookup(self, pts: np.ndarray) -> np.ndarray:
        """Row index of each point, or -1 when absent."""
        pts = np.asarray(pts, dtype=np.int64)
        keys = self._keys(pts)
        pos = np.searchsorted(self._sorted, keys)
        pos = np.clip(pos, 0, len(self._sorted) - 1)
        hit = (self._sorted[pos] == keys) & (keys >= 0)
        return np.where(hit, self._order[pos], -1)


def neighbor_counts(sites: np.ndarray, within: np.ndarray | None = None) -> np.ndarray:
    """Number of lattice neighbours of each site that lie in ``within``.

    ``within`` defaults to the site set itself, giving n_Lambda.
    """
    sites = np.asarray(sites, dtype=np.int64)
    index = SiteIndex(sites if within is None else within)
    counts = np.zeros(len(sites), dtype=np.int64)
    for step in unit_steps(sites.shape[1]):
        counts += index.lookup(sites + step) >= 0
    return counts


def lattice_edges(sites: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Index pairs ``(i, j)`` with ``i < j`` of nearest-neighbour pairs in a site set."""
    sites = np.asarray(sites, dtype=np.int64)
    index = SiteIndex(sites)
    rows, cols = [], []
    for k in range(sites.shape[1]):
        step = np.zeros(sites.shape[1], dtype=np.int64)
        step[k] = 1
        j = index.lookup(sites + step)
        i = np.nonzero(j >= 0)[0]
        j = j[i]
        rows.append(np.minimum(i, j))
        cols.append(np.maximum(i, j))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    order = np.lexsort((cols, rows))
    return rows[order], cols[order]


@dataclass(frozen=True)
class BoundarySet:
    """Boundary edges of a site set, stored once as (inner, outer) pairs."""

    edges: tuple[tuple[Site, Site], ...]
    inner_sites: frozenset = field(default_factory=frozenset)
    outer_sites: frozenset = field(default_factory=frozenset)

    @property
    def n_edges(self) -> int:
        return len(self.edges)


def _as_site_array(inner_set) -> np.ndarray:
    if isinstance(inner_set, Cube):
        return cube_sites(inner_set)
    arr = np.asarray(list(inner_set) if not isinstance(inner_set, np.ndarray) else inner_set, dtype=np.int64)
    if arr.size == 0:
        raise DomainError("boundary of an empty set is undefined")
    if arr.ndim == 1:
        arr = arr[:, None]
    return arr


def boundary(inner_set, ambient: Cube | None = None) -> BoundarySet:
    """Edges leaving ``inner_set``; clipped to ``ambient`` when one is given."""
    sites = _as_site_array(inner_set)
    if len(sites) == 0:
        raise DomainError("boundary of an empty set is undefined")
    if ambient is not None and not np.all(ambient.contains_array(sites)):
        raise DomainError("inner set is not contained in the ambient cube")
    index = SiteIndex(sites)
    edges = []
    for step in unit_steps(sites.shape[1]):
        out = sites + step
        missing = index.lookup(out) < 0
        if ambient is not None:
            missing &= ambient.contains_array(out)
        for a, b in zip(sites[missing], out[missing]):
            edges.append((tuple(int(x) for x in a), tuple(int(x) for x in b)))
    edges.sort()
    return BoundarySet(
        edges=tuple(edges),
        inner_sites=frozenset(e[0] for e in edges),
        outer_sites=frozenset(e[1] for e in edges),
    )


def inner_boundary_sites(cube: Cube) -> np.ndarray:
    """Sites of the cube at max-distance exactly ``L`` from its center, lexicographic."""
    sites = cube_sites(cube)
    keep = np.max(np.abs(sites - np.asarray(cube.center)), axis=1) == cube.radius
    return sites[keep]


def subcubes(big: Cube, l: int) -> list[Cube]:
    """All cubes of radius ``l`` well inside ``big``."""
    if l < 0 or l >= big.radius:
        raise DomainError(f"need 0 <= l < L, got l={l}, L={big.radius}")
    reach = big.radius - l - 1
    centers = cube_sites(Cube(big.center, reach))
    return [Cube(tuple(int(x) for x in c), l) for c in centers]


@dataclass(frozen=True)
class Annulus:
    """A_k (or the enlarged A_k^+) built from two consecutive scales."""

    k: int
    inner_radius: int
    outer_radius: int
    enlarged: bool = False

    @classmethod
    def from_scales(cls, k: int, scales: Sequence[int], enlarged: bool = False) -> "Annulus":
        if k < 0 or k + 1 >= len(scales):
            raise DomainError(f"scale index {k} needs scales k and k+1")
        lk, lk1 = int(scales[k]), int(scales[k + 1])
        if enlarged:
            return cls(k, 2 * lk, 8 * lk1, True)
        return cls(k, 3 * lk, 6 * lk1, False)

    def contains(self, site: Sequence[int]) -> bool:
        r = linf(site)
        return self.inner_radius < r <= self.outer_radius


@dataclass(frozen=True)
class AnnulusDistance:
    dist: int
    bound: int
    norm: int
    flagged: bool


def _scales_of(schedule) -> list[int]:
    scales = getattr(schedule, "scales", schedule)
    return [int(s) for s in scales]


def annulus_distance_check(n: Sequence[int], k: int, schedule) -> AnnulusDistance:
    """Distance from ``n`` in A_k to the boundary shells of A_k^+.

    ``schedule`` is an object with a ``scales`` attribute or a plain sequence
    of scales. ``flagged`` marks integer cases below the real bound norm/3
    but still at or above ``ceil(norm/3) - 1``.
    """
    scales = _scales_of(schedule)
    core = Annulus.from_scales(k, scales)
    if not core.contains(n):
        raise DomainError(f"site {tuple(n)} is not in A_{k}")
    outer = Annulus.from_scales(k, scales, enlarged=True)
    r = linf(n)
    dist = min(outer.outer_radius - r, r - outer.inner_radius)
    bound = -(-r // 3) - 1
    if dist < bound:
        raise AssertionError(f"annulus distance {dist} below bound {bound} at {tuple(n)}")
    return AnnulusDistance(dist=dist, bound=bound, norm=r, flagged=3 * dist < r)


def merge_bad_regions(centers: Iterable[Sequence[int]], l: int) -> list[Cube]:
    """Merge the cubes of radius ``2l`` around up to three bad centers.

    Touching 2l-cubes are absorbed into a cube of radius ``6l+1`` around the
    first of the pair; if that still touches the remaining cube everything
    goes into radius ``10l+2``. The result is pairwise non-touching.
    """
    cs = [tuple(int(x) for x in c) for c in centers]
    if len(cs) > 3:
        raise DomainError(f"at most 3 centers can be merged, got {len(cs)}")
    if len(set(cs)) != len(cs):
        raise DomainError("centers must be distinct")
    cubes = [Cube(c, 2 * l) for c in cs]
    pair = None
    for a, b in itertools.combinations(range(len(cubes)), 2):
        if cubes[a].touches(cubes[b]):
            pair = (a, b)
            break
    if pair is None:
        return cubes
    merged = Cube(cs[pair[0]], 6 * l + 1)
    rest = [cubes[i] for i in range(len(cubes)) if i not in pair]
    if not rest:
        return [merged]
    if merged.touches(rest[0]):
        return [Cube(cs[pair[0]], 10 * l + 2)]
    return [merged, rest[0]]

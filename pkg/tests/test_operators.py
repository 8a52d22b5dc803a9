import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from andersonlab.disorder import Distribution, Potential, sample_potential
from andersonlab.errors import DomainError
from andersonlab.lattice import Cube, cube_sites
from andersonlab.operators import (
    BoundaryKind,
    build_h,
    complement_sites,
    decoupled_matrix,
    dump_coo,
    gamma,
    shift_covariance_check,
    verify_splitting,
)

S, N, D = BoundaryKind.SIMPLE, BoundaryKind.NEUMANN, BoundaryKind.DIRICHLET


def _tri(diag):
    m = np.diag(np.asarray(diag, dtype=float))
    for i in range(len(diag) - 1):
        m[i, i + 1] = m[i + 1, i] = -1.0
    return m


def test_three_site_examples():
    c = Cube.at_origin(1, 1)
    assert np.array_equal(build_h(c, S).dense(), _tri([2, 2, 2]))
    hn = build_h(c, N).dense()
    assert np.array_equal(hn, _tri([1, 2, 1]))
    assert np.allclose(hn.sum(axis=1), 0)
    assert np.allclose(hn @ np.ones(3), 0)
    hd = build_h(c, D).dense()
    assert np.array_equal(hd, _tri([3, 2, 3]))
    assert np.linalg.eigvalsh(hd)[0] > np.linalg.eigvalsh(build_h(c, S).dense())[0]


def test_parse_and_errors():
    assert BoundaryKind.parse("Neumann") is N
    with pytest.raises(DomainError):
        BoundaryKind.parse("periodic")
    with pytest.raises(DomainError):
        build_h(Cube.at_origin(1, 1), S, np.zeros(2))
    pot = Potential.constant(Cube.at_origin(1, 1), 0.0)
    with pytest.raises(DomainError):
        build_h(Cube.at_origin(2, 1), S, pot)


@given(st.integers(1, 3), st.integers(0, 2), st.sampled_from(list(BoundaryKind)))
@settings(max_examples=30, deadline=None)
def test_matrix_structure(d, L, bc):
    cube = Cube.at_origin(L, d)
    rng = np.random.default_rng(L + 10 * d)
    v = rng.uniform(0, 1, cube.size)
    h = build_h(cube, bc, v)
    a = h.dense()
    assert np.array_equal(a, a.T)
    sites = cube_sites(cube)
    dist = np.abs(sites[:, None, :] - sites[None, :, :]).sum(axis=2)
    off = a - np.diag(np.diag(a))
    assert np.array_equal(off, np.where(dist == 1, -1.0, 0.0))
    n = (dist == 1).sum(axis=1)
    expect = {S: 2 * d + v, N: n + v, D: 4 * d - n + v}[bc]
    assert np.array_equal(np.diag(a), expect)
    assert np.allclose(h.sparse().toarray(), a)
    assert h.norm_bound() >= np.max(np.abs(np.linalg.eigvalsh(a))) - 1e-12


def test_gamma_examples():
    inner, amb = Cube.at_origin(1, 1), Cube.at_origin(2, 1)
    g = gamma(inner, amb, S)
    assert np.count_nonzero(g) == 4 and np.all(np.diag(g) == 0)
    assert g[0, 1] == g[1, 0] == g[3, 4] == g[4, 3] == -1
    gn = gamma(inner, amb, N)
    assert np.linalg.eigvalsh(gn)[0] >= -1e-12
    gd = gamma(inner, amb, D)
    assert np.array_equal(np.diag(gd), -np.diag(gn))
    assert np.linalg.eigvalsh(gd)[-1] <= 1e-12
    with pytest.raises(DomainError):
        gamma(Cube.at_origin(3, 1), amb, S)


def test_gamma_neumann_diagonal_marks_both_sides():
    # sites -2,-1,0,1,2: each of -2,-1,1,2 loses one neighbour across the cut
    gn = gamma(Cube.at_origin(1, 1), Cube.at_origin(2, 1), N)
    assert np.diag(gn).tolist() == [1, 1, 0, 1, 1]


@pytest.mark.parametrize(
    "d,bc",
    [(1, S), (2, N), (2, D), (1, N), (1, D), (2, S), (3, S), (3, N), (3, D)],
)
def test_splitting_is_exact(d, bc):
    amb = Cube.at_origin(3 if d < 3 else 2, d)
    for r in range(5):
        pot = sample_potential(amb, Distribution.uniform(-3, 7), 11, r)
        assert verify_splitting(Cube.at_origin(1, d), amb, bc, pot) == 0.0


def test_splitting_with_offcenter_set():
    amb = Cube.at_origin(3, 2)
    inner = cube_sites(Cube((1, -1), 1))[::2]
    pot = sample_potential(amb, Distribution.uniform(0, 1), 2, 0)
    for bc in BoundaryKind:
        assert verify_splitting(inner, amb, bc, pot) == 0.0
    assert len(complement_sites(inner, amb)) == amb.size - len(inner)


def test_shift_covariance():
    assert shift_covariance_check(2, (0,), np.random.default_rng(0).uniform(size=5)) == 0.0
    assert shift_covariance_check(2, (5,), np.random.default_rng(1).uniform(size=5)) <= 1e-12
    pot = sample_potential(Cube((3, -4), 1), Distribution.uniform(), 3, 0)
    assert shift_covariance_check(1, (3, -4), pot) <= 1e-12


@given(st.integers(1, 2), st.integers(1, 3), st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_boundary_condition_bracketing(d, L, seed):
    cube = Cube.at_origin(L, d)
    pot = sample_potential(cube, Distribution.uniform(0, 5), seed, 0)
    en, es, ed = (np.linalg.eigvalsh(build_h(cube, bc, pot).dense()) for bc in (N, S, D))
    assert np.all(en <= es + 1e-10) and np.all(es <= ed + 1e-10)


@given(st.integers(1, 2), st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_decoupling_bracketing(d, seed):
    amb = Cube.at_origin(2, d)
    inner = Cube.at_origin(1, d)
    pot = sample_potential(amb, Distribution.uniform(0, 3), seed, 0)
    for bc, sign in ((N, 1), (D, -1)):
        split = np.linalg.eigvalsh(decoupled_matrix(inner, amb, bc, pot))
        full = np.linalg.eigvalsh(build_h(amb, bc, pot).dense())
        assert np.all(sign * (full - split) >= -1e-10)


@given(st.integers(1, 3), st.integers(1, 3), st.floats(-5, 5), st.floats(0.1, 10))
@settings(max_examples=30, deadline=None)
def test_simple_spectrum_containment(d, L, lo, width):
    cube = Cube.at_origin(min(L, 2 if d == 3 else L), d)
    pot = sample_potential(cube, Distribution.uniform(lo, lo + width), 5, 0)
    ev = np.linalg.eigvalsh(build_h(cube, S, pot).dense())
    assert ev[0] >= pot.values.min() - 1e-10
    assert ev[-1] <= pot.values.max() + 4 * d + 1e-10


def test_neumann_quadratic_form():
    rng = np.random.default_rng(4)
    cube = Cube.at_origin(2, 2)
    h = build_h(cube, N)
    for _ in range(10):
        u = rng.normal(size=cube.size)
        form = sum((u[i] - u[j]) ** 2 for i, j in zip(h.edge_rows, h.edge_cols))
        assert np.isclose(u @ h.dense() @ u, form, rtol=1e-12)


def test_sparse_regime_and_dump(tmp_path):
    cube = Cube.at_origin(3, 2)
    h = build_h(cube, S, dense_cap=10)
    assert not h.is_dense and h.matrix.shape == (49, 49)
    path = dump_coo(build_h(Cube.at_origin(1, 1), N, np.array([0.1, 0.2, 0.3])), tmp_path / "h.txt")
    lines = path.read_text().splitlines()
    assert lines[0] == "0 0 1.1000000000000001"
    assert "0 1 -1" in lines and len(lines) == 7

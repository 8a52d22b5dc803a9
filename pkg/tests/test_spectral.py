import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from andersonlab.disorder import Distribution, sample_potential
from andersonlab.errors import CapabilityError, DomainError, PreconditionError
from andersonlab.lattice import Cube
from andersonlab.operators import build_h
from andersonlab.spectral import (
    banded_inertia_count,
    counting,
    dense_inertia_count,
    eigen,
    interlace_rank_one,
    resolvent_norm_check,
    temple_bound,
)


def test_eigen_examples():
    assert np.allclose(eigen(build_h(Cube.at_origin(1, 1), "simple")).values, [2 - 2**0.5, 2, 2 + 2**0.5])
    two = np.array([[2.0, -1.0], [-1.0, 2.0]])
    assert np.allclose(eigen(two).values, [1, 3])
    s = eigen(build_h(Cube.at_origin(1, 1), "neumann"), want_vectors=True)
    assert abs(s.values[0]) < 1e-12
    v = s.vectors[:, 0]
    assert np.allclose(v, v[0])
    assert np.array_equal(eigen(np.diag([3.0, -1.0, 2.0])).values, [-1, 2, 3])


def test_eigen_residual_and_round_trip():
    cube = Cube.at_origin(3, 2)
    h = build_h(cube, "simple", sample_potential(cube, Distribution.uniform(0, 4), 1, 0))
    s = eigen(h, want_vectors=True)
    assert s.max_residual(h) <= 1e-8 * h.norm_bound()
    assert s.orthonormality_error() <= 1e-10
    assert np.max(np.abs((s.vectors * s.values) @ s.vectors.T - h.dense())) <= 1e-10
    assert np.all(np.diff(s.values) >= 0)


def test_eigen_refuses_beyond_cap():
    h = build_h(Cube.at_origin(3, 2), "simple", dense_cap=10)
    with pytest.raises(CapabilityError):
        eigen(h, want_vectors=True)
    with pytest.raises(CapabilityError):
        eigen(h)


def test_counting_examples():
    a = np.diag([1.0, 3.0])
    assert counting(a, 2).count == 1
    assert counting(a, 0.5).count == 0
    tie = counting(a, 1.0)
    assert tie.count == 0 and tie.boundary
    for method in ("ldl", "banded"):
        c = counting(a, 1.0, method)
        assert c.boundary
    with pytest.raises(DomainError):
        counting(a, 1.0, "magic")


@pytest.mark.parametrize("d,L", [(1, 6), (2, 3), (3, 2)])
def test_inertia_counts_agree_with_eigensolve(d, L):
    cube = Cube.at_origin(L, d)
    for r in range(5):
        h = build_h(cube, "dirichlet", sample_potential(cube, Distribution.uniform(-2, 2), 8, r))
        ev = np.linalg.eigvalsh(h.dense())
        for E in np.linspace(ev[0] - 1, ev[-1] + 1, 17):
            E = float(E) + 1e-7
            expect = int(np.count_nonzero(ev < E))
            assert dense_inertia_count(h.dense(), E)[0] == expect
            assert banded_inertia_count(h.sparse(), E)[0] == expect
            assert counting(h, E).count == expect


def test_sparse_counting_auto_route():
    cube = Cube.at_origin(4, 2)
    h = build_h(cube, "simple", sample_potential(cube, Distribution.uniform(), 2, 0), dense_cap=20)
    c = counting(h, 4.0)
    assert c.method == "banded"
    assert c.count == int(np.count_nonzero(np.linalg.eigvalsh(h.dense()) < 4.0))
    assert counting(sp.csr_matrix(h.dense()), 4.0).method == "banded"


def test_counting_jump_is_multiplicity():
    a = np.diag([0.0, 1.0, 1.0, 1.0, 2.0])
    assert counting(a, 1 + 1e-6).count - counting(a, 1 - 1e-6).count == 3


def test_interlacing_examples():
    r = interlace_rank_one(np.diag([0.0, 1.0]), [1.0, 0.0], 1.0)
    assert np.allclose(r.perturbed, [1, 1]) and r.holds
    zero = interlace_rank_one(np.diag([0.0, 1.0]), [0.6, 0.8], 0.0)
    assert np.array_equal(zero.values, zero.perturbed)
    rng = np.random.default_rng(0)
    m = rng.normal(size=(20, 20))
    v = rng.normal(size=20)
    assert interlace_rank_one(m + m.T, v / np.linalg.norm(v), 5.0).holds
    with pytest.raises(DomainError):
        interlace_rank_one(np.eye(2), [1.0, 0.0], -1)


def test_temple_examples():
    a = np.diag([0.0, 2.0])
    t = temple_bound(a, [1.0, 0.0], 2.0)
    assert t.bound == 0 and t.ground == 0
    t2 = temple_bound(a, [0.9**0.5, 0.1**0.5], 2.0)
    assert np.isclose(t2.mean, 0.2) and np.isclose(t2.variance, 0.36) and abs(t2.bound) < 1e-12
    with pytest.raises(PreconditionError):
        temple_bound(a, [0.0, 1.0], 2.0)


def test_temple_random_gapped():
    rng = np.random.default_rng(3)
    for _ in range(20):
        q, _ = np.linalg.qr(rng.normal(size=(10, 10)))
        vals = np.concatenate([[0.0], rng.uniform(2, 5, 9)])
        a = (q * vals) @ q.T
        psi = q[:, 0] + 0.05 * rng.normal(size=10)
        psi /= np.linalg.norm(psi)
        t = temple_bound(a, psi, float(np.sort(vals)[1]))
        assert t.bound <= t.ground + 1e-12 <= t.mean + 1e-12


def test_resolvent_norm():
    n, inv = resolvent_norm_check(np.diag([1.0, 3.0]), 2.0)
    assert np.isclose(n, 1) and np.isclose(inv, 1)
    rng = np.random.default_rng(1)
    m = rng.normal(size=(30, 30))
    n, inv = resolvent_norm_check(m + m.T, complex(0.3, 0.2))
    assert abs(n - inv) <= 1e-8 * inv
    with pytest.raises(PreconditionError):
        resolvent_norm_check(np.diag([1.0, 3.0]), 1.0)


@given(st.integers(0, 10_000), st.floats(0, 5))
@settings(max_examples=30, deadline=None)
def test_nonnegative_potential_raises_levels(seed, scale):
    cube = Cube.at_origin(3, 1)
    base = sample_potential(cube, Distribution.uniform(-1, 1), seed, 0).values
    extra = sample_potential(cube, Distribution.uniform(0, 1), seed, 1).values * scale
    e0 = eigen(build_h(cube, "simple", base)).values
    e1 = eigen(build_h(cube, "simple", base + extra)).values
    assert np.all(e1 >= e0 - 1e-10)

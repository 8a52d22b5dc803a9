import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from andersonlab.disorder import Distribution, Potential, sample_potential
from andersonlab.errors import DomainError, PreconditionError
from andersonlab.green import (
    certify_decay,
    classify_batch,
    classify_cube,
    combes_thomas_check,
    eigenfunction_decay_check,
    geometric_resolvent_check,
    green_column,
    green_matrix,
    resolvent_lipschitz_margin,
    subcube_verdicts,
)
from andersonlab.lattice import Cube, cube_sites
from andersonlab.operators import build_h


def test_green_column_examples():
    h = build_h(Cube.at_origin(0, 1), "simple", [0.5])
    assert np.isclose(green_column(h, 1.0, (0,)).values[0], 1 / 1.5)
    assert np.allclose(green_matrix(np.diag([1.0, 3.0]), 0.0), np.diag([1, 1 / 3]))
    cube = Cube.at_origin(2, 1)
    h = build_h(cube, "simple", sample_potential(cube, Distribution.uniform(), 0, 0))
    col = green_column(h, -0.7, (1,))
    inv = np.linalg.inv(h.dense() + 0.7 * np.eye(5))
    assert np.max(np.abs(col.values - inv[:, 3])) <= 1e-10
    resid = (h.dense() + 0.7 * np.eye(5)) @ col.values - np.eye(5)[3]
    assert np.max(np.abs(resid)) <= 1e-8


def test_green_column_near_spectrum():
    h = build_h(Cube.at_origin(0, 1), "simple", [0.0])
    with pytest.raises(PreconditionError):
        green_column(h, 2.0, (0,))


@given(st.integers(0, 10_000), st.floats(-3, 12))
@settings(max_examples=30, deadline=None)
def test_green_symmetry(seed, E):
    cube = Cube.at_origin(2, 2)
    h = build_h(cube, "simple", sample_potential(cube, Distribution.uniform(0, 5), seed, 0))
    ev = np.linalg.eigvalsh(h.dense())
    if np.min(np.abs(ev - E)) < 1e-6:
        return
    g = green_matrix(h, E)
    assert np.max(np.abs(g - g.T)) <= 1e-10 * max(1.0, np.max(np.abs(g)))


def test_lipschitz_margin_bounds_energy_shift():
    cube = Cube.at_origin(3, 1)
    h = build_h(cube, "simple", sample_potential(cube, Distribution.uniform(0, 4), 3, 0)).dense()
    ev = np.linalg.eigvalsh(h)
    E = float((ev[2] + ev[3]) / 2)
    dist = float(np.min(np.abs(ev - E)))
    for step in (0.01, 0.1, dist / 2):
        diff = np.max(np.abs(green_matrix(h, E + step) - green_matrix(h, E)))
        assert diff <= resolvent_lipschitz_margin(step, dist) * (1 + 1e-9)
    assert resolvent_lipschitz_margin(dist, dist) == math.inf


@pytest.mark.parametrize("d", [1, 2])
def test_geometric_resolvent_identity(d):
    inner, amb = Cube.at_origin(1, d), Cube.at_origin(3, d)
    pot = sample_potential(amb, Distribution.uniform(), 4, 0)
    n = (0,) * d
    m = (3,) + (0,) * (d - 1)
    r = geometric_resolvent_check(inner, amb, -1.0, n, m, pot)
    assert r.residual <= 1e-10 and r.passed
    with pytest.raises(PreconditionError):
        geometric_resolvent_check(inner, amb, -1.0, n, n, pot)


def test_classify_examples():
    cube = Cube.at_origin(1, 1)
    v = classify_cube(cube, np.full(3, 100.0), 0.0, math.log(98))
    assert v.good and not v.resonant
    assert v.max_green <= 1 / 98
    h = build_h(cube, "simple", np.full(3, 1.0))
    E = float(np.linalg.eigvalsh(h.dense())[1])
    exact = classify_cube(cube, np.full(3, 1.0), E, 0.1)
    assert not exact.good and exact.resonant
    free = classify_cube(Cube.at_origin(10, 1), None, 2.0, 1.0)
    assert not free.good


def test_classify_resonance_rule():
    cube = Cube.at_origin(4, 1)
    rng = np.random.default_rng(0)
    vals = rng.uniform(0, 10, (200, cube.size))
    good, rate, res, dist = classify_batch(cube, vals, 3.0, 0.3)
    assert np.array_equal(res, dist < math.exp(-2.0))
    for g, r, v in zip(good[:20], rate[:20], vals[:20]):
        one = classify_cube(cube, v, 3.0, 0.3)
        assert one.good == g and np.isclose(one.rate_measured, r)
    with pytest.raises(DomainError):
        classify_batch(Cube.at_origin(0, 1), vals[:1, :1], 0.0, 1.0)


def test_classify_without_spectrum_matches():
    cube = Cube.at_origin(3, 2)
    vals = np.random.default_rng(1).uniform(0, 20, (50, cube.size))
    a = classify_batch(cube, vals, 5.0, 0.5)
    b = classify_batch(cube, vals, 5.0, 0.5, with_spectrum=False)
    assert np.array_equal(a[0], b[0])
    assert np.all(np.isnan(b[3]))


def test_combes_thomas_examples():
    h = build_h(Cube.at_origin(10, 1), "simple")
    # E = -1 sits at distance 1 + 2 - 2cos(pi/22), just outside delta <= 1
    near = combes_thomas_check(h, -1.0)
    assert near.delta > 1 and near.passed is None and near.worst_ratio <= 1
    e0 = float(np.linalg.eigvalsh(h.dense())[0])
    r = combes_thomas_check(h, e0 - 1.0)
    assert np.isclose(r.delta, 1.0) and r.hypothesis_ok
    assert r.worst_ratio <= 1 and r.passed
    assert r.commutator_norm <= r.commutator_bound


def test_combes_thomas_random_sweep():
    rng = np.random.default_rng(5)
    cube = Cube.at_origin(3, 2)
    checked = 0
    for i in range(40):
        h = build_h(cube, "simple", sample_potential(cube, Distribution.uniform(0, 4), 9, i))
        ev = np.linalg.eigvalsh(h.dense())
        j = int(rng.integers(0, len(ev)))
        E = float(ev[j] + rng.uniform(0.05, 1.0) * rng.choice([-1, 1]))
        r = combes_thomas_check(h, E, centers=[(0, 0)])
        if not r.hypothesis_ok:
            assert r.passed is None
            continue
        checked += 1
        assert r.passed
        diag = np.abs(np.diag(green_matrix(h, E)))
        assert np.all(diag <= 1 / r.delta + 1e-9)
    assert checked > 20


def test_combes_thomas_out_of_range_is_a_notice():
    h = build_h(Cube.at_origin(2, 1), "simple")
    r = combes_thomas_check(h, -5.0)
    assert not r.hypothesis_ok and r.passed is None


def _defect_potential(L, centers, width, high=100.0, low=2.0):
    big = Cube.at_origin(L, 1)
    s = cube_sites(big)[:, 0]
    v = np.full(big.size, high)
    for c in centers:
        v[np.abs(s - c) <= width // 2] = low
    return big, Potential(big, v)


def test_certificate_all_good():
    big, pot = _defect_potential(80, [], 1)
    c = certify_decay(big, pot, 4.3, 8, 2.0)
    assert c.issued and not c.bad_centers and c.sound
    assert c.gamma_out > 0 and classify_cube(big, pot, 4.3, c.gamma_out).good
    js = c.to_json()
    assert set(js) >= {"cube", "E", "gamma_in", "gamma_out", "steps", "detours", "factors", "pass"}
    assert js["detours"] == 0 and len(js["factors"]) == c.steps + 1


def test_certificate_one_bad_region_weak_path():
    big, pot = _defect_potential(80, [20], 5)
    c = certify_decay(big, pot, 4.3, 8, 2.0, "weak")
    assert c.bad_centers and len(c.regions) == 1
    assert c.issued and c.sound and c.detours == 1
    assert any(f["kind"] == "detour_pair" for f in c.factors)
    assert c.floor == pytest.approx(2 / math.sqrt(8))


def test_certificate_gates():
    big, pot = _defect_potential(80, [-40, 40], 5)
    c = certify_decay(big, pot, 4.3, 8, 2.0, "weak")
    assert not c.issued and c.reason.startswith("too many bad cubes")
    low = certify_decay(*_defect_potential(80, [20], 7), 4.3, 8, 0.6, "weak")
    assert not low.issued and "rate too small" in low.reason
    strong = certify_decay(big, pot, 4.3, 8, 2.0, "strong")
    assert not strong.issued and "rate too small" in strong.reason
    with pytest.raises(DomainError):
        certify_decay(big, pot, 4.3, 8, 2.0, "medium")


def test_subcube_verdicts_cover_all_well_inside_cubes():
    big = Cube.at_origin(6, 2)
    pot = sample_potential(big, Distribution.scaled_uniform(30), 0, 0)
    vs = subcube_verdicts(big, pot, 10.0, 2, 1.0)
    assert len(vs) == 7 * 7
    for v in vs[::9]:
        assert v.good == classify_cube(v.cube, pot, 10.0, 1.0).good


def test_certifier_soundness_sample():
    dist = Distribution.scaled_uniform(30)
    issued = 0
    for r in range(40):
        for d, l, L in ((1, 8, 23), (2, 6, 15)):
            big = Cube.at_origin(L, d)
            pot = sample_potential(big, dist, 21, r)
            E = float(np.random.default_rng(r).uniform(-2, 38))
            c = certify_decay(big, pot, E, l, 1.3)
            if c.issued:
                issued += 1
                assert c.sound
    assert issued > 0


def test_eigenfunction_decay():
    # a single low site on the outer layer carries the lowest eigenvector,
    # so every interior sub-cube is good at its eigenvalue
    big, pot = _defect_potential(40, [40], 1, high=60.0)
    hits = 0
    for index in range(1):
        rep = eigenfunction_decay_check(big, pot, 4, 2.0, index)
        if rep is not None:
            hits += 1
            assert rep.violations == 0 and rep.worst_ratio <= 1 + 1e-9
    assert hits > 0

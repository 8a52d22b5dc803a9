import math

import numpy as np
import pytest

from andersonlab.disorder import Distribution
from andersonlab.dos import (
    C_PRIME,
    cube_spectra,
    free_neumann_gap,
    ids_convergence_probe,
    ids_curve,
    ids_estimate,
    ids_samples,
    lifshitz_probes,
    neumann_ground_tail,
    tent_quotient,
    two_cube_resonance_experiment,
    wegner_experiment,
)
from andersonlab.errors import DomainError, HypothesisError
from andersonlab.lattice import Cube
from andersonlab.montecarlo import mean_estimate, proportion_estimate, run_realizations

U = Distribution.uniform()


def test_montecarlo_intervals():
    p = proportion_estimate(0, 100, 1)
    assert p.estimate == 0 and p.ci_lo == 0 and 0 < p.ci_hi < 0.05
    q = proportion_estimate(30, 100, 1)
    assert q.ci_lo <= q.estimate <= q.ci_hi
    m = mean_estimate(np.arange(10.0), 2)
    assert m.ci_lo <= m.estimate == 4.5 <= m.ci_hi and m.seed == 2
    with pytest.raises(DomainError):
        proportion_estimate(0, 0, 1)


def _square(a, b):
    return np.arange(a, b, dtype=float) ** 2


def test_run_realizations_is_worker_independent():
    one = run_realizations(_square, 50, 1, chunk=7)
    three = run_realizations(_square, 50, 3, chunk=7)
    assert np.array_equal(one, three) and np.array_equal(one, np.arange(50.0) ** 2)


def test_ids_examples():
    assert ids_estimate(0.0, 5, "neumann", U, 50, 0).estimate == 0
    assert ids_estimate(5.0 + 1e-9, 5, "simple", U, 50, 0).estimate == 1
    L = 20
    ests = {bc: ids_estimate(2.5, L, bc, U, 400, 3) for bc in ("simple", "neumann", "dirichlet")}
    spread = max(e.estimate for e in ests.values()) - min(e.estimate for e in ests.values())
    mc = max(e.ci_hi - e.ci_lo for e in ests.values())
    assert spread <= 3 / (2 * L + 1) + mc


def test_ids_curve_monotone_bounded_and_rows():
    curve = ids_curve(np.linspace(-1, 6, 15), 4, "simple", U, 200, 1)
    assert np.all(np.diff(curve.values) >= 0)
    assert np.all((curve.values >= 0) & (curve.values <= 1))
    assert np.all(curve.ci_lo <= curve.values) and np.all(curve.values <= curve.ci_hi)
    rows = curve.rows()
    assert list(rows[0]) == ["E", "value", "ci_lo", "ci_hi", "L", "bc", "trials", "seed"]
    again = ids_curve(np.linspace(-1, 6, 15), 4, "simple", U, 200, 1)
    assert np.array_equal(curve.values, again.values)


def test_boundary_ordering_per_realization():
    E = np.linspace(0, 5, 21)
    sn = ids_samples(E, 3, "neumann", U, 100, 4, d=2)
    ss = ids_samples(E, 3, "simple", U, 100, 4, d=2)
    sd = ids_samples(E, 3, "dirichlet", U, 100, 4, d=2)
    assert np.all(sd <= ss) and np.all(ss <= sn)


def test_self_averaging():
    small = ids_samples([2.5], 3, "simple", U, 400, 5)[:, 0]
    large = ids_samples([2.5], 20, "simple", U, 400, 5)[:, 0]
    assert large.var() < small.var()


def test_convergence_probe_examples():
    free = [ids_convergence_probe(2 + 1j, L).value for L in (10, 20)]
    # golden values from the first verified run
    assert free[0] == pytest.approx(0.011771298357452645, rel=1e-9)
    assert free[1] == pytest.approx(0.006029599863892642, rel=1e-9)
    means = [np.mean([ids_convergence_probe(2 + 1j, L, r, U, 3).value for r in range(16)]) for L in (10, 20, 40)]
    for a, b in zip(means, means[1:]):
        assert 1.4 <= a / b <= 2.6
    sweep = [ids_convergence_probe(complex(2, y), 10, 0, U, 3) for y in (1, 2, 4)]
    for a, b in zip(sweep, sweep[1:]):
        assert 4 / 3 <= a.value / b.value <= 12
    assert all(p.passed and p.bound == pytest.approx(C_PRIME / (p.z.imag**2 * 10)) for p in sweep)
    with pytest.raises(DomainError):
        ids_convergence_probe(2 + 0j, 10)


def test_wegner_examples():
    cube = Cube.at_origin(2, 1)
    r = wegner_experiment(2.5, 0.05, cube, U, 10_000, 7)
    assert r.bound == pytest.approx(1.0) and r.passed and r.estimate.estimate < 0.5
    half = wegner_experiment(2.5, 0.025, cube, U, 10_000, 7)
    assert 0.3 <= half.estimate.estimate / r.estimate.estimate <= 0.7
    with pytest.raises(HypothesisError):
        wegner_experiment(2.5, 0.05, cube, Distribution.bernoulli(), 10, 0)
    with pytest.raises(DomainError):
        wegner_experiment(2.5, 0.0, cube, U, 10, 0)


def test_wegner_linearity():
    cube = Cube.at_origin(2, 1)
    eps = np.array([0.1, 0.05, 0.025])
    y = np.array([wegner_experiment(2.5, e, cube, U, 10_000, 8).estimate.estimate for e in eps])
    slope = float(eps @ y / (eps @ eps))
    r2 = 1 - np.sum((y - slope * eps) ** 2) / np.sum((y - y.mean()) ** 2)
    assert r2 >= 0.9


def test_two_cube_examples():
    c1, c2 = Cube((0,), 2), Cube((10,), 2)
    r = two_cube_resonance_experiment(c1, c2, 0.01, U, 4000, 2)
    assert r.bound == pytest.approx(8 * 0.01 * 25) and r.passed
    assert two_cube_resonance_experiment(c1, c2, 0.0, U, 500, 2).estimate.estimate == 0
    a = two_cube_resonance_experiment(c1, c2, 0.02, U, 20_000, 3).estimate.estimate
    b = two_cube_resonance_experiment(c1, c2, 0.04, U, 20_000, 3).estimate.estimate
    assert 1.4 <= b / a <= 2.6
    with pytest.raises(DomainError):
        two_cube_resonance_experiment(c1, Cube((3,), 2), 0.01, U, 10, 0)
    with pytest.raises(HypothesisError):
        two_cube_resonance_experiment(c1, c2, 0.01, Distribution.bernoulli(), 10, 0)


def test_free_neumann_gap_and_tent():
    L = 10
    assert free_neumann_gap(L) == pytest.approx(2 - 2 * math.cos(math.pi / (2 * L + 1)))
    assert 2 <= L * L * free_neumann_gap(L) <= 12
    assert L * L * tent_quotient(L) <= 30
    # tent quotient bounds the Dirichlet ground state from above
    from andersonlab.operators import build_h

    e0 = np.linalg.eigvalsh(build_h(Cube.at_origin(L, 1), "dirichlet").dense())[0]
    assert e0 <= tent_quotient(L)


def test_lifshitz_report():
    rep = lifshitz_probes(1, [8, 16, 32], U, trials=20_000, seed=1, tail_Ls=[2, 3])
    assert rep.c == pytest.approx(min(rep.gap_scaled.values()))
    assert all(1 <= v <= 15 for v in rep.gap_scaled.values())
    assert max(rep.tent_scaled.values()) - min(rep.tent_scaled.values()) < 0.05
    assert rep.tails[2].estimate > 0 and rep.tails[3].ci_hi < rep.tails[2].ci_lo
    assert rep.double_log_slope is not None
    with pytest.raises(DomainError):
        lifshitz_probes(1, [1], U)


def test_neumann_tail_and_spectra_shapes():
    ev = cube_spectra(Cube.at_origin(2, 2), "neumann", U, 30, 0)
    assert ev.shape == (30, 25) and np.all(np.diff(ev, axis=1) >= 0)
    t = neumann_ground_tail(2, 10.0, U, 30, 0)
    assert t.estimate == 1.0


def test_wilson_interval_contains_estimate_everywhere():
    for n in (1, 7, 100, 10_000):
        for k in sorted({0, 1, n // 3, n - 1, n}):
            e = proportion_estimate(k, n, 0)
            assert 0 <= e.ci_lo <= e.estimate <= e.ci_hi <= 1

import math

import numpy as np
import pytest

from cavsol import dissipation as ds


def cavity(**kw):
    base = dict(g=1.0, Delta0=10.0, kappa=2.0, alpha_sq_1=4.0, alpha_sq_2=4.0,
                Delta1=50.0, Delta2=50.0)
    base.update(kw)
    return ds.CavityParams(**base)


def test_gamma_rate_examples():
    g1, g2 = ds.gamma_rates(cavity(alpha_sq_1=0.0))
    assert g1 == 0.0 and g2 > 0
    g1, g2 = ds.gamma_rates(cavity())
    assert g1 == g2
    c = cavity()
    assert g1 == pytest.approx((1 / 40) ** 2 * 4 * 2 / (2500 + 1))
    a = ds.gamma_rates(cavity(Delta1=200.0))[0]
    b = ds.gamma_rates(cavity(Delta1=400.0))[0]
    assert b / a == pytest.approx(0.25, rel=0.01)
    assert c.kappa == 2.0


def test_cavity_validation():
    with pytest.raises(ValueError):
        cavity(kappa=0.0)
    with pytest.raises(ValueError):
        cavity(alpha_sq_2=-1.0)


def test_derivative_balanced_equator():
    s = ds.CollectiveBloch.from_angles(100, math.pi / 2, 0.4)
    d = ds.bloch_derivative(s, -2.0, 0.01, 0.01)
    assert d.S_Z == pytest.approx(0.0, abs=1e-15)
    assert d.S_X == pytest.approx(-0.01 * s.S_X)
    assert d.S_Y == pytest.approx(-0.01 * s.S_Y)


def test_derivative_unbalanced_drift():
    n = 200
    s = ds.CollectiveBloch.from_angles(n, math.pi / 2)
    d = ds.bloch_derivative(s, 0.0, 0.0, 1e-3)
    assert d.S_Z == pytest.approx(-1e-3 * (n / 2) ** 2)


def test_negative_rate_rejected():
    s = ds.CollectiveBloch.from_angles(10, 1.0)
    with pytest.raises(ValueError):
        ds.bloch_derivative(s, 0.0, -1.0, 0.0)
    with pytest.raises(ValueError):
        ds.evolve_bloch(s, 0.0, 0.0, -1.0, 1.0, 0.1)


def test_unitary_conserves_length():
    s0 = ds.CollectiveBloch.from_angles(1000, 1.0, 0.2)
    tr = ds.evolve_bloch(s0, -2.0, 0.0, 0.0, 200.0, 0.01)
    assert np.max(np.abs(tr.length - s0.length)) < 1e-9 * s0.length
    assert np.allclose(tr.S_Z, s0.S_Z)


def test_polar_state_decays_at_twice_gamma():
    s0 = ds.CollectiveBloch(0.0, 0.0, 50.0, 100)
    g = 0.02
    tr = ds.evolve_bloch(s0, -2.0, g, g, 50.0, 0.01)
    assert np.allclose(tr.S_Z, 50.0 * np.exp(-2 * g * tr.times), rtol=1e-9)


@pytest.mark.parametrize("theta", [math.pi / 2, math.pi / 3])
@pytest.mark.parametrize("chiN", [-2.0, 0.0, 3.0])
def test_fitted_rates(theta, chiN):
    g = 0.01
    s0 = ds.CollectiveBloch.from_angles(500, theta, 0.3)
    tr = ds.evolve_bloch(s0, chiN, g, g, 3 / g, 0.05, sample_every=20)
    assert ds.fit_decay_rate(tr.times, tr.transverse) == pytest.approx(g, rel=0.01)
    if theta != math.pi / 2:
        assert ds.fit_decay_rate(tr.times, tr.S_Z) == pytest.approx(2 * g, rel=0.01)
    assert all(ds.CollectiveBloch(*row, 500).is_contracted() for row in tr.spins)


def test_balanced_transverse_superposition():
    g, chiN, n = 0.01, -2.0, 400
    a = ds.CollectiveBloch(100.0, 20.0, 60.0, n)
    b = ds.CollectiveBloch(-30.0, 90.0, 60.0, n)
    c = ds.CollectiveBloch(70.0, 110.0, 60.0, n)
    ta, tb, tc = (ds.evolve_bloch(s, chiN, g, g, 50.0, 0.01) for s in (a, b, c))
    assert np.allclose(ta.spins[:, :2] + tb.spins[:, :2], tc.spins[:, :2], atol=1e-9)


def test_unbalanced_contracts():
    s0 = ds.CollectiveBloch.from_angles(100, 1.2)
    tr = ds.evolve_bloch(s0, -2.0, 0.0, 1e-3, 20.0, 1e-3)
    assert np.all(tr.length <= 50.0 + 1e-9)
    assert tr.S_Z[-1] < s0.S_Z


def test_drift_scaling_with_n():
    ns = np.array([100, 1000, 10000])
    raw = np.array([ds.superradiant_drift(int(n), 0.0, 1e-3) for n in ns])
    normalized = raw / (ns / 2)
    assert np.allclose(normalized / ns, normalized[0] / ns[0])
    balanced = [ds.superradiant_drift(int(n), 1e-3, 1e-3) for n in ns]
    assert np.allclose(balanced, 0.0, atol=1e-12)


def test_fit_decay_rate_exact():
    t = np.linspace(0, 10, 50)
    assert ds.fit_decay_rate(t, 3 * np.exp(-0.7 * t)) == pytest.approx(0.7)
    with pytest.raises(ValueError):
        ds.fit_decay_rate([0.0, 1.0], [0.0, -1.0])

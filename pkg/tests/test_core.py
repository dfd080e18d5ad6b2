import math
import warnings

import numpy as np
import pytest

from cavsol.core import (E_R, TAU, UNITS, LockedRegimeWarning, SimulationParams,
                         build_ensemble, check_step, chi_opt, doppler_scale,
                         locked_regime_ok, single_point_ensemble)


def test_natural_units():
    assert UNITS.recoil_energy == 0.5
    assert UNITS.recoil_velocity == 1.0
    assert TAU == pytest.approx(math.pi)
    assert E_R == 0.5


def test_chi_opt_values():
    assert chi_opt() == pytest.approx(-2.0)
    assert chi_opt(math.pi / 4) == pytest.approx(-1.0)
    assert chi_opt(math.pi / 4) == pytest.approx(chi_opt(3 * math.pi / 4))
    assert chi_opt(math.pi / 2, n_atoms=100) == pytest.approx(-0.02)
    with pytest.raises(ValueError):
        chi_opt(n_atoms=0)


def test_defaults_and_natural_conversions():
    p = SimulationParams()
    assert p.sigma_p == 0.05 and p.n_momentum == 201 and p.p_span == 5.0
    assert p.dt_natural == pytest.approx(1e-3 * math.pi)
    assert p.t_final_natural == pytest.approx(30 * math.pi)
    assert p.p_max == pytest.approx(0.25)


@pytest.mark.parametrize("changes, field", [
    ({"n_momentum": 100}, "n_momentum"),
    ({"sigma_p": 0.0}, "sigma_p"),
    ({"dt": -1.0}, "dt"),
    ({"dimension": 4}, "dimension"),
    ({"mode": "sobol"}, "mode"),
    ({"theta": 4.0}, "theta"),
    ({"seed": -1}, "seed"),
])
def test_params_validation(changes, field):
    with pytest.raises(ValueError, match=field):
        SimulationParams(**changes)


def test_even_points_allowed_for_montecarlo():
    p = SimulationParams(n_momentum=100, mode="montecarlo")
    assert build_ensemble(p).size == 100


def test_grid_ensemble_properties():
    ens = build_ensemble(SimulationParams())
    assert ens.size == 201 and ens.shape == (201,)
    assert ens.weights.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.any(ens.points[:, 0] == 0.0)
    assert np.allclose(ens.axis(0), ens.points[:, 0])
    var = np.sum(ens.weights * ens.points[:, 0] ** 2)
    assert var == pytest.approx(0.05**2, rel=1e-4)


def test_grid_ensemble_2d_ordering():
    ens = build_ensemble(SimulationParams(n_momentum=5, dimension=2))
    assert ens.points.shape == (25, 2)
    assert ens.shape == (5, 5)
    grid = ens.points.reshape(5, 5, 2)
    assert np.allclose(grid[:, 0, 0], ens.axis(0))
    assert np.allclose(grid[0, :, 1], ens.axis(1))


def test_montecarlo_is_seeded():
    p = SimulationParams(mode="montecarlo", n_momentum=500, seed=7)
    a, b = build_ensemble(p), build_ensemble(p)
    c = build_ensemble(p.replace(seed=8))
    assert np.array_equal(a.points, b.points)
    assert not np.array_equal(a.points, c.points)
    assert a.weights.sum() == pytest.approx(1.0)


def test_locked_regime_guard():
    assert doppler_scale(0.05) == pytest.approx(0.1)
    assert locked_regime_ok(-2.0, 0.05)
    assert not locked_regime_ok(-0.5, 0.05)
    p = SimulationParams(sigma_p=0.5)
    with pytest.warns(LockedRegimeWarning):
        assert not p.check_locked_regime()
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert SimulationParams().check_locked_regime()


def test_step_guard():
    check_step(0.01, 1.0)
    with pytest.raises(ValueError, match="time step too large"):
        check_step(0.1, 1.0)


def test_single_point_ensemble():
    ens = single_point_ensemble(0.3)
    assert ens.size == 1 and ens.weights[0] == 1.0 and ens.points[0, 0] == 0.3

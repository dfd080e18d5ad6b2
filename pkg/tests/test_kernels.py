import numpy as np
import pytest

from cavsol import dynamics1d as d1
from cavsol import kernels


def _setup(ens, chiN=-2.0):
    return d1.initial_state(ens, 1.1, 0.3).as_array(), d1._hamiltonian(ens, chiN, None)


def test_backend_selected():
    assert kernels.BACKEND in ("compiled", "python")


@pytest.mark.skipif(kernels.BACKEND != "compiled", reason="extension not built")
def test_compiled_matches_python(small_ensemble):
    psi0, ham = _setup(small_ensemble)
    kw = dict(chiN=-2.0, omega=0.4, dt=0.01, n_steps=300, sample_every=50)
    a = kernels.propagate(psi0, *ham, small_ensemble.weights, backend="compiled", **kw)
    b = kernels.propagate(psi0, *ham, small_ensemble.weights, backend="python", **kw)
    assert a.shape == (7, small_ensemble.size, 2)
    assert np.max(np.abs(a - b)) < 1e-13


def test_derivative_matches_finite_difference(small_ensemble):
    psi0, ham = _setup(small_ensemble)
    w = small_ensemble.weights
    d = kernels.derivative(psi0, *ham, w, chiN=-2.0)
    h = 1e-4
    fwd = kernels.propagate(psi0, *ham, w, chiN=-2.0, dt=h, n_steps=1)[-1]
    bwd = kernels.propagate(psi0, *ham, w, chiN=-2.0, dt=-h, n_steps=1)[-1]
    assert np.max(np.abs((fwd - bwd) / (2 * h) - d)) < 1e-8


def test_integrate_segments_equal_single_run(small_ensemble):
    psi0, ham = _setup(small_ensemble)
    w = small_ensemble.weights
    full = kernels.propagate(psi0, *ham, w, chiN=-2.0, dt=0.01, n_steps=95, sample_every=95)
    steps, samples = kernels.integrate(psi0, ham, w, chiN=-2.0, dt=0.01, n_steps=95,
                                       sample_every=10)
    assert list(steps) == list(range(0, 100, 10)) + [95]
    assert np.max(np.abs(samples[-1] - full[-1])) < 1e-13


def test_integrate_applies_pulse(small_ensemble):
    psi0, ham = _setup(small_ensemble, 0.0)
    w = small_ensemble.weights
    flip = lambda psi: psi[:, ::-1].copy()
    steps, samples = kernels.integrate(psi0, ham, w, dt=0.01, n_steps=40, sample_every=20,
                                       pulses={20: flip})
    a = kernels.propagate(psi0, *ham, w, dt=0.01, n_steps=20)[-1]
    assert np.allclose(samples[list(steps).index(20)], flip(a), atol=1e-14)
    b = kernels.propagate(flip(a), *ham, w, dt=0.01, n_steps=20)[-1]
    assert np.allclose(samples[-1], b, atol=1e-13)


@pytest.mark.parametrize("backend", ["python"] + (["compiled"] if kernels.BACKEND == "compiled" else []))
def test_non_finite_aborts(small_ensemble, backend):
    psi0, ham = _setup(small_ensemble)
    psi0[0, 0] = np.nan
    with pytest.raises(kernels.NumericalAbort):
        kernels.propagate(psi0, *ham, small_ensemble.weights, dt=0.01, n_steps=3,
                          backend=backend)


def test_bad_shapes_rejected(small_ensemble):
    psi0, (hv, r, c) = _setup(small_ensemble)
    with pytest.raises(ValueError):
        kernels.propagate(psi0, hv[:-1], r, c, small_ensemble.weights, dt=0.1, n_steps=1)
    with pytest.raises(ValueError):
        kernels.propagate(psi0, hv, r, c, small_ensemble.weights, dt=0.1, n_steps=1,
                          backend="gpu")
